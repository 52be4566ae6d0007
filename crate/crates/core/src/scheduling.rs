//! Deterministic generation of measurement schedules for the five
//! validation protocols.
//!
//! The layouts, for variants `A,B,C,D` and `n = 4`:
//!
//! * A1: `setup, AAAA, BBBB, CCCC, DDDD` - one setup, one variant at a time.
//! * A2: `setup, AAAA, setup, BBBB, ...` - a fresh setup per variant.
//! * A3: `setup, ABCD, setup, ABCD, ...` - one interleaved round per setup.
//! * A4: `setup, ABCD, ABCD, ...` - all interleaved rounds on one charge.
//! * R3: rounds are interleaved, `pi` of them per discharge cycle, and the
//!   variant order rotates left by one position after every setup.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Approach, Schedule, ScheduleAction, VariantId};

/// Parameters shared by all five generators.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    /// Initial variant order (the starting permutation for R3).
    pub variants: Vec<VariantId>,
    /// Samples required per variant.
    pub n_samples: usize,
    /// Rounds per discharge cycle. Used by R3; carried for the runner's
    /// battery guard otherwise.
    pub pi: usize,
    /// Charge percentage below which runs must not proceed.
    pub battery_floor: f64,
}

impl ScheduleConfig {
    pub fn new(variants: Vec<VariantId>, n_samples: usize, pi: usize) -> Result<Self> {
        let config = ScheduleConfig {
            variants,
            n_samples,
            pi,
            battery_floor: 20.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("variant list is empty".into()));
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return Err(Error::InvalidConfig("duplicate variants".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
        }
        if self.pi < 1 {
            return Err(Error::InvalidConfig("pi must be at least 1".into()));
        }
        if !(0.0..=100.0).contains(&self.battery_floor) {
            return Err(Error::InvalidConfig(format!(
                "battery floor {} outside [0, 100]",
                self.battery_floor
            )));
        }
        Ok(())
    }
}

/// Left rotation: element `i` of the result is element `(i + k) mod len`
/// of the input. Rotating an empty sequence yields an empty sequence.
pub fn rotate_left<T: Clone>(sequence: &[T], k: usize) -> Vec<T> {
    if sequence.is_empty() {
        return Vec::new();
    }
    let len = sequence.len();
    (0..len).map(|i| sequence[(i + k) % len].clone()).collect()
}

/// Generates the schedule for `approach` from `config`.
///
/// R3 runs exactly one rotation per reboot, so it requires
/// `n_samples == pi * |variants|`; inconsistent requests are rejected
/// rather than silently padded.
pub fn generate_schedule(config: &ScheduleConfig, approach: Approach) -> Result<Schedule> {
    config.validate()?;
    let variants = &config.variants;
    let n = config.n_samples;
    let mut actions = Vec::new();
    let mut pi = None;

    match approach {
        Approach::A1 => {
            actions.push(ScheduleAction::Setup);
            for v in variants {
                actions.extend(std::iter::repeat_n(ScheduleAction::Run(v.clone()), n));
            }
        }
        Approach::A2 => {
            for v in variants {
                actions.push(ScheduleAction::Setup);
                actions.extend(std::iter::repeat_n(ScheduleAction::Run(v.clone()), n));
            }
        }
        Approach::A3 => {
            for _ in 0..n {
                actions.push(ScheduleAction::Setup);
                actions.extend(variants.iter().cloned().map(ScheduleAction::Run));
            }
        }
        Approach::A4 => {
            actions.push(ScheduleAction::Setup);
            for _ in 0..n {
                actions.extend(variants.iter().cloned().map(ScheduleAction::Run));
            }
        }
        Approach::R3 => {
            if !n.is_multiple_of(config.pi) || n / config.pi != variants.len() {
                return Err(Error::InvalidConfig(format!(
                    "r3 requires n_samples = pi * variant count ({} != {} * {})",
                    n,
                    config.pi,
                    variants.len()
                )));
            }
            for rotation in 0..variants.len() {
                actions.push(ScheduleAction::Setup);
                let order = rotate_left(variants, rotation);
                for _ in 0..config.pi {
                    actions.extend(order.iter().cloned().map(ScheduleAction::Run));
                }
            }
            pi = Some(config.pi);
        }
    }

    Schedule::new(actions, approach, n, pi)
}

/// Exact action counts of a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleSummary {
    pub setup_count: usize,
    pub runs_per_variant: BTreeMap<VariantId, usize>,
    /// Largest number of rounds (groups of `|variants|` runs) in any
    /// discharge cycle.
    pub rounds_per_setup: usize,
}

pub fn schedule_summary(schedule: &Schedule) -> ScheduleSummary {
    let width = schedule.variants().len().max(1);
    let mut runs_per_variant: BTreeMap<VariantId, usize> = BTreeMap::new();
    let mut setup_count = 0usize;
    let mut block = 0usize;
    let mut max_block = 0usize;
    for action in schedule.actions() {
        match action {
            ScheduleAction::Setup => {
                setup_count += 1;
                block = 0;
            }
            ScheduleAction::Run(v) => {
                *runs_per_variant.entry(v.clone()).or_default() += 1;
                block += 1;
                max_block = max_block.max(block);
            }
        }
    }
    ScheduleSummary {
        setup_count,
        runs_per_variant,
        rounds_per_setup: max_block.div_ceil(width),
    }
}

/// Renders the line-oriented schedule format: a comment header with the
/// generating parameters, then one `SETUP` or `RUN <variant>` per line.
pub fn schedule_to_text(schedule: &Schedule) -> String {
    let mut out = String::new();
    writeln!(out, "# approach: {}", schedule.approach()).unwrap();
    writeln!(out, "# n_samples: {}", schedule.n_samples()).unwrap();
    if let Some(pi) = schedule.pi() {
        writeln!(out, "# pi: {pi}").unwrap();
    }
    for action in schedule.actions() {
        match action {
            ScheduleAction::Setup => out.push_str("SETUP\n"),
            ScheduleAction::Run(v) => {
                writeln!(out, "RUN {v}").unwrap();
            }
        }
    }
    out
}

/// Parses the format written by [`schedule_to_text`]. `name` is used in
/// error messages only.
pub fn schedule_from_text(text: &str, name: &str) -> Result<Schedule> {
    let mut approach = None;
    let mut n_samples = None;
    let mut pi = None;
    let mut actions = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let value = value.trim();
                match key.trim() {
                    "approach" => approach = Some(Approach::parse(value)?),
                    "n_samples" => {
                        n_samples = Some(value.parse::<usize>().map_err(|e| {
                            Error::parse(name, lineno, format!("bad n_samples: {e}"))
                        })?)
                    }
                    "pi" => {
                        pi = Some(
                            value
                                .parse::<usize>()
                                .map_err(|e| Error::parse(name, lineno, format!("bad pi: {e}")))?,
                        )
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line == "SETUP" {
            actions.push(ScheduleAction::Setup);
        } else if let Some(variant) = line.strip_prefix("RUN ") {
            actions.push(ScheduleAction::Run(VariantId::new(variant.trim())?));
        } else {
            return Err(Error::parse(
                name,
                lineno,
                format!("expected SETUP or RUN <variant>, got {line:?}"),
            ));
        }
    }

    let approach = approach
        .ok_or_else(|| Error::parse(name, 1, "missing '# approach:' header".to_string()))?;
    let n_samples = match n_samples {
        Some(n) => n,
        // Headers written by this crate always carry n_samples; tolerate
        // hand-written files by counting.
        None => {
            let mut counts: BTreeMap<&VariantId, usize> = BTreeMap::new();
            for action in &actions {
                if let ScheduleAction::Run(v) = action {
                    *counts.entry(v).or_default() += 1;
                }
            }
            counts.values().copied().max().unwrap_or(0)
        }
    };
    Schedule::new(actions, approach, n_samples, pi)
}
