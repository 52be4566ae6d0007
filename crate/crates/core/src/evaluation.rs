//! Protocol quality measurements: specificity (false-positive matrices over
//! single-variant data) and sensitivity (effect sizes and significant
//! comparisons against a baseline variant).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Approach, Campaign, VariantId};
use crate::runner::Corpus;
use crate::scheduling::{generate_schedule, ScheduleConfig};
use crate::stats::{a12, wilcoxon_rank_sum, Alternative, Method};

/// Energies of pseudo-variants grouped according to one approach, with the
/// corpus coordinates each reading came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingResult {
    pub approach: Approach,
    /// Group labels in schedule order.
    pub labels: Vec<String>,
    pub groups: BTreeMap<String, Vec<f64>>,
    /// (reboot, position) pairs per label.
    pub provenance: BTreeMap<String, Vec<(usize, usize)>>,
}

impl GroupingResult {
    /// Groups an executed campaign's energies by variant.
    pub fn from_campaign(campaign: &Campaign) -> Result<Self> {
        let mut labels = Vec::new();
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut provenance: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for v in campaign.schedule.variants() {
            labels.push(v.as_str().to_owned());
        }
        let mut position_in_reboot: BTreeMap<usize, usize> = BTreeMap::new();
        for sample in &campaign.samples {
            let position = position_in_reboot.entry(sample.reboot_index).or_insert(0);
            let label = sample.variant.as_str().to_owned();
            groups
                .entry(label.clone())
                .or_default()
                .push(sample.energy_j);
            provenance
                .entry(label)
                .or_default()
                .push((sample.reboot_index, *position));
            *position += 1;
        }
        Ok(GroupingResult {
            approach: campaign.schedule.approach(),
            labels,
            groups,
            provenance,
        })
    }
}

/// Groups a single-variant corpus into `n_variants` pseudo-variants the way
/// `approach` would have sampled them.
///
/// Setup actions map to reboot-block boundaries and runs to successive
/// readings. A1 and A4 have a single setup, so they consume readings
/// linearly across block boundaries: those protocols are blind to reboots
/// by construction.
pub fn group_corpus(
    corpus: &Corpus,
    approach: Approach,
    n_variants: usize,
    samples_per_variant: usize,
) -> Result<GroupingResult> {
    let labels: Vec<VariantId> = (1..=n_variants)
        .map(|i| VariantId::new(format!("v{i}")))
        .collect::<Result<_>>()?;
    let pi = if approach == Approach::R3 {
        if n_variants == 0 || !samples_per_variant.is_multiple_of(n_variants) {
            return Err(Error::StructureMismatch {
                expected: format!("samples per variant divisible by {n_variants} for r3"),
                actual: format!("{samples_per_variant}"),
            });
        }
        samples_per_variant / n_variants
    } else {
        1
    };
    let config = ScheduleConfig::new(labels, samples_per_variant, pi)?;
    let schedule = generate_schedule(&config, approach)?;

    let total_runs = schedule.run_count();
    if corpus.total_readings() != total_runs {
        return Err(Error::StructureMismatch {
            expected: format!("{total_runs} readings"),
            actual: format!("{} readings", corpus.total_readings()),
        });
    }

    // Coordinates of every reading, in corpus order.
    let coordinates: Vec<(usize, usize)> = corpus
        .reboots
        .iter()
        .enumerate()
        .flat_map(|(r, block)| (0..block.len()).map(move |p| (r, p)))
        .collect();

    let reboot_aligned = schedule.setup_count() > 1;
    if reboot_aligned && schedule.setup_count() != corpus.reboots.len() {
        return Err(Error::StructureMismatch {
            expected: format!("{} reboot blocks", schedule.setup_count()),
            actual: format!("{} reboot blocks", corpus.reboots.len()),
        });
    }

    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut provenance: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (cursor, slot) in schedule.run_slots().into_iter().enumerate() {
        if reboot_aligned {
            let block = slot.reboot_index;
            let block_start: usize = corpus.reboots[..block].iter().map(Vec::len).sum();
            let block_end = block_start + corpus.reboots[block].len();
            if cursor < block_start {
                // A setup may not skip unconsumed readings.
                return Err(Error::StructureMismatch {
                    expected: format!(
                        "block {} fully consumed before the next setup",
                        block.saturating_sub(1)
                    ),
                    actual: format!("{} readings left over", block_start - cursor),
                });
            }
            if cursor >= block_end {
                return Err(Error::StructureMismatch {
                    expected: format!(
                        "at least {} readings in block {block}",
                        cursor - block_start + 1
                    ),
                    actual: format!("{}", corpus.reboots[block].len()),
                });
            }
        }
        let (reboot, position) = coordinates[cursor];
        let energy = corpus.reboots[reboot][position];
        let label = slot.variant.as_str().to_owned();
        groups.entry(label.clone()).or_default().push(energy);
        provenance
            .entry(label)
            .or_default()
            .push((reboot, position));
    }

    Ok(GroupingResult {
        approach,
        labels: (1..=n_variants).map(|i| format!("v{i}")).collect(),
        groups,
        provenance,
    })
}

/// Pairwise two-tailed test results over a grouping, with the pairs flagged
/// at `alpha`. All data comes from one true variant, so every flagged pair
/// is a false positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecificityMatrix {
    pub labels: Vec<String>,
    /// Upper triangle, row-major: pair (i, j) with i < j.
    pub p_values: Vec<f64>,
    pub fp_mask: Vec<bool>,
    pub alpha: f64,
}

fn triangle_index(labels: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < labels);
    i * labels - i * (i + 1) / 2 + (j - i - 1)
}

impl SpecificityMatrix {
    pub fn pair_count(&self) -> usize {
        self.p_values.len()
    }

    /// P-value of the pair (i, j); `None` on the diagonal. The matrix is
    /// symmetric, so the order of `i` and `j` does not matter.
    pub fn p_value(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return None;
        }
        let (i, j) = (i.min(j), i.max(j));
        Some(self.p_values[triangle_index(self.labels.len(), i, j)])
    }

    pub fn false_positive_count(&self) -> usize {
        self.fp_mask.iter().filter(|&&fp| fp).count()
    }
}

/// Runs the pairwise two-tailed Wilcoxon tests over all group pairs.
pub fn specificity_matrix(grouping: &GroupingResult, alpha: f64) -> Result<SpecificityMatrix> {
    if grouping.labels.len() < 2 {
        return Err(Error::InvalidConfig(
            "specificity needs at least two groups".into(),
        ));
    }
    let labels = grouping.labels.clone();
    let mut p_values = Vec::with_capacity(labels.len() * (labels.len() - 1) / 2);
    let mut fp_mask = Vec::with_capacity(p_values.capacity());
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            let a = &grouping.groups[&labels[i]];
            let b = &grouping.groups[&labels[j]];
            let result = wilcoxon_rank_sum(a, b, Alternative::TwoSided, Method::Auto)?;
            p_values.push(result.p_value);
            fp_mask.push(result.p_value <= alpha);
        }
    }
    Ok(SpecificityMatrix {
        labels,
        p_values,
        fp_mask,
        alpha,
    })
}

/// Elementwise sum of false-positive flags across corpora or platforms.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub labels: Vec<String>,
    /// Upper triangle, row-major, like [`SpecificityMatrix::p_values`].
    pub counts: Vec<u32>,
    /// Number of matrices aggregated.
    pub sources: usize,
}

impl CountMatrix {
    pub fn count(&self, i: usize, j: usize) -> Option<u32> {
        if i == j {
            return None;
        }
        let (i, j) = (i.min(j), i.max(j));
        Some(self.counts[triangle_index(self.labels.len(), i, j)])
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Square CSV with an empty diagonal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            write!(out, ",{l}").unwrap();
        }
        out.push('\n');
        for i in 0..self.labels.len() {
            write!(out, "{}", self.labels[i]).unwrap();
            for j in 0..self.labels.len() {
                match self.count(i, j) {
                    Some(c) => write!(out, ",{c}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn aggregate_specificity(matrices: &[SpecificityMatrix]) -> Result<CountMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidConfig("no matrices to aggregate".into()))?;
    let mut counts = vec![0u32; first.p_values.len()];
    for matrix in matrices {
        if matrix.labels != first.labels {
            return Err(Error::LabelMismatch(format!(
                "{:?} vs {:?}",
                matrix.labels, first.labels
            )));
        }
        for (count, &fp) in counts.iter_mut().zip(&matrix.fp_mask) {
            *count += u32::from(fp);
        }
    }
    Ok(CountMatrix {
        labels: first.labels.clone(),
        counts,
        sources: matrices.len(),
    })
}

/// Sensitivity metrics of one approach: the per-variant comparisons against
/// the baseline and their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub approach: Approach,
    /// Median A12 across the non-baseline variants.
    pub median_es: f64,
    /// Comparisons with A12 of at least 0.64.
    pub count_es_ge_064: usize,
    /// Comparisons significant at the configured alpha.
    pub count_p_le_alpha: usize,
    /// (variant, a12, p) per non-baseline variant, in schedule order.
    pub per_variant: Vec<(VariantId, f64, f64)>,
}

/// Threshold for "at least a medium effect" in the sensitivity counts,
/// applied directly to A12 independent of the band names.
pub const MEDIUM_EFFECT_THRESHOLD: f64 = 0.64;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Compares every non-baseline variant against the baseline in each
/// campaign: A12 oriented so that higher means the variant consumes less,
/// and a right-tailed test that the baseline's energies are greater.
pub fn sensitivity_table(
    campaigns: &BTreeMap<Approach, Campaign>,
    baseline: &VariantId,
    alpha: f64,
) -> Result<Vec<SensitivityRow>> {
    let mut rows = Vec::with_capacity(campaigns.len());
    for (&approach, campaign) in campaigns {
        if !campaign.schedule.variants().contains(baseline) {
            return Err(Error::MissingBaseline(baseline.as_str().to_owned()));
        }
        let baseline_energies = campaign.energies_of(baseline)?;
        let mut per_variant = Vec::new();
        for variant in campaign.schedule.variants() {
            if &variant == baseline {
                continue;
            }
            let energies = campaign.energies_of(&variant)?;
            let effect = a12(&energies, &baseline_energies)?;
            let test = wilcoxon_rank_sum(
                &baseline_energies,
                &energies,
                Alternative::Greater,
                Method::Auto,
            )?;
            per_variant.push((variant, effect, test.p_value));
        }
        if per_variant.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "campaign for {approach} has no variant besides the baseline"
            )));
        }
        let mut effects: Vec<f64> = per_variant.iter().map(|(_, es, _)| *es).collect();
        rows.push(SensitivityRow {
            approach,
            median_es: median(&mut effects),
            count_es_ge_064: per_variant
                .iter()
                .filter(|(_, es, _)| *es >= MEDIUM_EFFECT_THRESHOLD)
                .count(),
            count_p_le_alpha: per_variant.iter().filter(|(_, _, p)| *p <= alpha).count(),
            per_variant,
        });
    }
    Ok(rows)
}

/// `sensitivity.csv` with one row per approach.
pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("approach,median_es,count_es_ge_064,count_p_le_005\n");
    for row in rows {
        writeln!(
            out,
            "{},{:.4},{},{}",
            row.approach, row.median_es, row.count_es_ge_064, row.count_p_le_alpha
        )
        .unwrap();
    }
    out
}
