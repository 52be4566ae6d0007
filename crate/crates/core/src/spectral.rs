//! Periodogram analysis of ordered measurement series, for quantifying
//! long-period variation in system state.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::Scalar;

/// Minimum series length the periodogram accepts.
pub const MIN_SERIES_LEN: usize = 4;

/// Optional tapering applied before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Raw periodogram; keeps the Parseval identity exact.
    #[default]
    None,
    /// Hann taper, for drifty series that leak badly.
    Hann,
}

/// One-sided power spectrum of a uniformly spaced series.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<S> {
    /// Cycles per sample, strictly increasing in (0, 0.5].
    pub frequencies: Vec<S>,
    /// Power per bin: squared magnitude of the 1/n-scaled coefficient.
    pub power: Vec<S>,
    /// Original series length.
    pub n: usize,
    /// Seconds per sample, when known. Real campaigns space samples
    /// unevenly (runs take 20-60 s), so periods in seconds are approximate.
    pub sample_spacing: Option<S>,
}

/// A spectral peak reported by [`dominant_periods`].
#[derive(Debug, Clone, PartialEq)]
pub struct DominantPeriod<S> {
    pub frequency: S,
    pub period_samples: S,
    pub period_seconds: Option<S>,
    /// This bin's share of the total one-sided power.
    pub power_share: S,
}

/// Raw periodogram of the mean-removed series.
///
/// Power at frequency k/n is the squared magnitude of the k-th Fourier
/// coefficient scaled by 1/n, for k = 1..=n/2; the zero bin vanishes with
/// the mean. Summing the reported bins plus their symmetric mirrors
/// recovers the variance of the mean-removed series.
pub fn periodogram<S: Scalar>(series: &[S], sample_spacing: Option<S>) -> Result<Spectrum<S>> {
    periodogram_windowed(series, sample_spacing, Window::None)
}

/// [`periodogram`] with an explicit window choice.
pub fn periodogram_windowed<S: Scalar>(
    series: &[S],
    sample_spacing: Option<S>,
    window: Window,
) -> Result<Spectrum<S>> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort {
            len: n,
            min: MIN_SERIES_LEN,
        });
    }
    let mut values = Vec::with_capacity(n);
    for (i, v) in series.iter().enumerate() {
        let v = v.to_f64().ok_or(Error::NonFinite(i))?;
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        values.push(v);
    }

    let mean = values.iter().sum::<f64>() / n as f64;
    for v in &mut values {
        *v -= mean;
    }
    if let Window::Hann = window {
        for (t, v) in values.iter_mut().enumerate() {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t as f64 / (n - 1) as f64).cos());
            *v *= w;
        }
    }

    let bins = n / 2;
    let mut frequencies = Vec::with_capacity(bins);
    let mut power = Vec::with_capacity(bins);
    let nf = n as f64;
    for k in 1..=bins {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / nf;
        let mut re = 0.0f64;
        let mut im = 0.0f64;
        for (t, &x) in values.iter().enumerate() {
            let angle = omega * t as f64;
            re += x * angle.cos();
            im -= x * angle.sin();
        }
        frequencies.push(S::from_f64(k as f64 / nf).unwrap());
        power.push(S::from_f64((re * re + im * im) / (nf * nf)).unwrap());
    }

    Ok(Spectrum {
        frequencies,
        power,
        n,
        sample_spacing,
    })
}

impl<S: Scalar> Spectrum<S> {
    /// Total power including the mirrored half: each bin counts twice
    /// except the Nyquist bin of an even-length series.
    pub fn total_power_two_sided(&self) -> S {
        let two = S::from_f64(2.0).unwrap();
        let mut total = S::zero();
        for (k, &p) in self.power.iter().enumerate() {
            let is_nyquist = self.n.is_multiple_of(2) && k + 1 == self.n / 2;
            total = total + if is_nyquist { p } else { two * p };
        }
        total
    }

    /// Plot-ready CSV with columns frequency, period_samples,
    /// period_seconds, power. The period_seconds field is empty when the
    /// sample spacing is unknown.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency,period_samples,period_seconds,power\n");
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            let f = f.to_f64().unwrap();
            let period = 1.0 / f;
            let seconds = self
                .sample_spacing
                .map(|s| s.to_f64().unwrap() / f)
                .map(|s| s.to_string())
                .unwrap_or_default();
            writeln!(out, "{f},{period},{seconds},{}", p.to_f64().unwrap()).unwrap();
        }
        out
    }
}

/// Top-k bins by power, heaviest first; ties break toward lower frequency.
pub fn dominant_periods<S: Scalar>(spectrum: &Spectrum<S>, k: usize) -> Vec<DominantPeriod<S>> {
    let total: f64 = spectrum.power.iter().map(|p| p.to_f64().unwrap()).sum();
    let mut order: Vec<usize> = (0..spectrum.power.len()).collect();
    order.sort_by(|&i, &j| {
        spectrum.power[j]
            .partial_cmp(&spectrum.power[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    order
        .into_iter()
        .take(k)
        .map(|i| {
            let f = spectrum.frequencies[i];
            let share = if total > 0.0 {
                spectrum.power[i].to_f64().unwrap() / total
            } else {
                0.0
            };
            DominantPeriod {
                frequency: f,
                period_samples: S::one() / f,
                period_seconds: spectrum.sample_spacing.map(|s| s / f),
                power_share: S::from_f64(share).unwrap(),
            }
        })
        .collect()
}
