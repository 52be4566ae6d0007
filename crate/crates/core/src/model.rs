//! Shared domain types: variants, schedules, samples, and campaigns.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Opaque label of a software variant under test.
///
/// Names are restricted to characters that survive the line-oriented and
/// CSV wire formats: no whitespace, commas, or `#`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariantId(String);

impl VariantId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidVariantName {
                name,
                reason: "empty name",
            });
        }
        if name
            .chars()
            .any(|c| c.is_whitespace() || c == ',' || c == '#')
        {
            return Err(Error::InvalidVariantName {
                name,
                reason: "whitespace, ',' and '#' are not allowed",
            });
        }
        Ok(VariantId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One step of a measurement schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleAction {
    /// Reboot, recharge, and initialise the device.
    Setup,
    /// Execute one measured run of the named variant.
    Run(VariantId),
}

/// The five validation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    A1,
    A2,
    A3,
    A4,
    R3,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::A1,
        Approach::A2,
        Approach::A3,
        Approach::A4,
        Approach::R3,
    ];

    /// Lower-case token used in files and on the command line.
    pub fn token(self) -> &'static str {
        match self {
            Approach::A1 => "a1",
            Approach::A2 => "a2",
            Approach::A3 => "a3",
            Approach::A4 => "a4",
            Approach::R3 => "r3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a1" | "approach1" => Ok(Approach::A1),
            "a2" | "approach2" => Ok(Approach::A2),
            "a3" | "approach3" => Ok(Approach::A3),
            "a4" | "approach4" => Ok(Approach::A4),
            "r3" | "r3-validation" => Ok(Approach::R3),
            other => Err(Error::InvalidConfig(format!(
                "unknown approach {other:?} (expected a1, a2, a3, a4 or r3)"
            ))),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Position metadata of one Run action within a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSlot {
    pub variant: VariantId,
    /// Setup actions preceding this run.
    pub reboot_index: usize,
    /// Group of `|variants|` consecutive runs within the reboot block.
    pub round_index: usize,
    /// Global position among Run actions.
    pub slot_index: usize,
}

/// A full execution plan: ordered actions plus the generating parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    actions: Vec<ScheduleAction>,
    approach: Approach,
    n_samples: usize,
    /// Rounds per discharge cycle; set for R3 schedules only.
    pi: Option<usize>,
}

impl Schedule {
    /// Validates the schedule invariants: the first action is a Setup and
    /// every variant occurs exactly `n_samples` times.
    pub fn new(
        actions: Vec<ScheduleAction>,
        approach: Approach,
        n_samples: usize,
        pi: Option<usize>,
    ) -> Result<Self> {
        match actions.first() {
            Some(ScheduleAction::Setup) => {}
            _ => {
                return Err(Error::InvalidSchedule(
                    "first action must be a setup".into(),
                ))
            }
        }
        let mut counts: BTreeMap<&VariantId, usize> = BTreeMap::new();
        for action in &actions {
            if let ScheduleAction::Run(v) = action {
                *counts.entry(v).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::InvalidSchedule("no run actions".into()));
        }
        for (v, count) in &counts {
            if *count != n_samples {
                return Err(Error::InvalidSchedule(format!(
                    "variant {v} has {count} runs, expected {n_samples}"
                )));
            }
        }
        Ok(Schedule {
            actions,
            approach,
            n_samples,
            pi,
        })
    }

    pub fn actions(&self) -> &[ScheduleAction] {
        &self.actions
    }

    pub fn approach(&self) -> Approach {
        self.approach
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn pi(&self) -> Option<usize> {
        self.pi
    }

    /// Distinct variants in order of first appearance.
    pub fn variants(&self) -> Vec<VariantId> {
        let mut seen = Vec::new();
        for action in &self.actions {
            if let ScheduleAction::Run(v) = action {
                if !seen.contains(v) {
                    seen.push(v.clone());
                }
            }
        }
        seen
    }

    pub fn setup_count(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, ScheduleAction::Setup))
            .count()
    }

    pub fn run_count(&self) -> usize {
        self.actions.len() - self.setup_count()
    }

    /// Run actions annotated with reboot, round, and slot indices.
    ///
    /// The round index groups every `|variants|` consecutive runs after a
    /// setup into one round, which makes A3, A4, and R3 rounds coincide with
    /// one pass over all variants.
    pub fn run_slots(&self) -> Vec<RunSlot> {
        let width = self.variants().len().max(1);
        let mut slots = Vec::with_capacity(self.run_count());
        let mut reboot_index = 0usize;
        let mut runs_since_setup = 0usize;
        let mut slot_index = 0usize;
        let mut seen_setup = false;
        for action in &self.actions {
            match action {
                ScheduleAction::Setup => {
                    if seen_setup {
                        reboot_index += 1;
                    }
                    seen_setup = true;
                    runs_since_setup = 0;
                }
                ScheduleAction::Run(v) => {
                    slots.push(RunSlot {
                        variant: v.clone(),
                        reboot_index,
                        round_index: runs_since_setup / width,
                        slot_index,
                    });
                    runs_since_setup += 1;
                    slot_index += 1;
                }
            }
        }
        slots
    }
}

/// One timed energy observation plus system-state metadata.
///
/// Metadata fields are optional because not every backend can report them;
/// they serialize as empty CSV fields when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSample {
    pub variant: VariantId,
    /// Joules consumed by the run.
    pub energy_j: f64,
    /// Wall-clock duration of the run in seconds.
    pub runtime_s: f64,
    pub reboot_index: usize,
    pub round_index: usize,
    pub slot_index: usize,
    /// Battery charge in percent, if the backend reports it.
    pub battery_pct: Option<f64>,
    /// Supply voltage in millivolts.
    pub voltage_mv: Option<f64>,
    pub active_processes: Option<u32>,
    /// System memory use in percent.
    pub memory_pct: Option<f64>,
    /// CPU utilisation in percent.
    pub cpu_pct: Option<f64>,
    /// Seconds since the campaign started.
    pub timestamp_s: f64,
}

/// A schedule plus the ordered samples it produced and provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub schedule: Schedule,
    pub samples: Vec<MeasurementSample>,
    pub backend_descriptor: String,
    pub seed: Option<u64>,
    /// Wall-clock creation time as Unix seconds.
    pub created_at_unix: u64,
}

impl Campaign {
    /// Validates that `samples` matches a prefix of the schedule's run slots
    /// (a complete campaign covers all of them).
    pub fn new(
        schedule: Schedule,
        samples: Vec<MeasurementSample>,
        backend_descriptor: String,
        seed: Option<u64>,
        created_at_unix: u64,
    ) -> Result<Self> {
        let slots = schedule.run_slots();
        if samples.len() > slots.len() {
            return Err(Error::InvalidSchedule(format!(
                "{} samples for {} run actions",
                samples.len(),
                slots.len()
            )));
        }
        for (sample, slot) in samples.iter().zip(&slots) {
            if sample.variant != slot.variant
                || sample.reboot_index != slot.reboot_index
                || sample.round_index != slot.round_index
                || sample.slot_index != slot.slot_index
            {
                return Err(Error::InvalidSchedule(format!(
                    "sample at slot {} does not match the schedule",
                    slot.slot_index
                )));
            }
            if !sample.energy_j.is_finite() || sample.energy_j < 0.0 {
                return Err(Error::InvalidSchedule(format!(
                    "sample at slot {} has invalid energy {}",
                    slot.slot_index, sample.energy_j
                )));
            }
            if let Some(b) = sample.battery_pct {
                if !(0.0..=100.0).contains(&b) {
                    return Err(Error::InvalidSchedule(format!(
                        "sample at slot {} has battery {b}% outside [0, 100]",
                        slot.slot_index
                    )));
                }
            }
        }
        Ok(Campaign {
            schedule,
            samples,
            backend_descriptor,
            seed,
            created_at_unix,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.samples.len() == self.schedule.run_count()
    }

    /// All samples of one variant, in execution order.
    pub fn samples_of(&self, variant: &VariantId) -> Result<Vec<&MeasurementSample>> {
        if !self.schedule.variants().contains(variant) {
            return Err(Error::UnknownVariant(variant.as_str().to_owned()));
        }
        Ok(self
            .samples
            .iter()
            .filter(|s| &s.variant == variant)
            .collect())
    }

    /// Energy readings of one variant, in execution order.
    pub fn energies_of(&self, variant: &VariantId) -> Result<Vec<f64>> {
        Ok(self
            .samples_of(variant)?
            .into_iter()
            .map(|s| s.energy_j)
            .collect())
    }
}

/// Shorthand for building a variant list from string labels.
pub fn variants(names: &[&str]) -> Result<Vec<VariantId>> {
    names.iter().map(|name| VariantId::new(*name)).collect()
}
