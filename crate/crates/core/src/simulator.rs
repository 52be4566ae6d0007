//! Seeded model of a battery-powered device whose system state drifts
//! between and within discharge cycles.
//!
//! The energy of one run is composed of the variant's base cost, a
//! sinusoidal drift over the global run index, a random walk, a per-reboot
//! level shift, a startup transient that decays after each setup, occasional
//! background bursts, and observation noise that inflates below the
//! low-battery threshold. Process counts, memory, CPU load, and voltage are
//! recorded metadata and do not feed back into energy.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::VariantId;
use crate::runner::{MeasurementBackend, Reading};

/// Elevated consumption right after a setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartupTransient {
    /// Joules added to the first run after a setup.
    pub extra_joules: f64,
    /// Runs over which the extra decays linearly to zero.
    pub decay_runs: u32,
}

/// Supply-voltage behaviour over a discharge cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageModel {
    /// Millivolts at the start of a cycle.
    pub start_mv: f64,
    /// Total drop in millivolts over one full discharge.
    pub drop_mv_per_cycle: f64,
    /// Probability per run of a small upward move.
    pub nonmonotone_prob: f64,
    /// Standard deviation of the per-setup start level, in millivolts.
    pub start_jitter_mv: f64,
}

/// Full parameter set of the simulated device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    /// True mean cost per run, in joules.
    pub base_energy: BTreeMap<VariantId, f64>,
    /// Run duration per variant, in seconds.
    pub run_time: BTreeMap<VariantId, f64>,
    /// Energy for variants without an explicit entry.
    pub fallback_energy: Option<f64>,
    /// Run time for variants without an explicit entry.
    pub fallback_run_time: Option<f64>,
    pub drift_amplitude: f64,
    /// Period of the sinusoidal drift, in samples.
    pub drift_period: f64,
    /// Standard deviation of the random-walk increment per run, in joules.
    pub walk_step: f64,
    /// Standard deviation of the per-setup level shift, in joules.
    pub reboot_offset_sd: f64,
    pub startup_transient: StartupTransient,
    /// Probability per run of a background sync storm.
    pub burst_rate: f64,
    /// Joules added during a burst.
    pub burst_energy: f64,
    /// Extra active processes during a burst.
    pub burst_process_jump: u32,
    /// Inclusive range of the baseline active-process count.
    pub base_processes: (u32, u32),
    /// Memory use in percent right after a setup.
    pub base_memory: f64,
    /// Memory growth in percent per run.
    pub memory_growth: f64,
    /// Joules available on a full charge.
    pub battery_capacity: f64,
    pub voltage: VoltageModel,
    /// Noise multiplier below the low-battery threshold; at least 1.
    pub low_battery_noise_multiplier: f64,
    /// Battery percentage below which noise inflates.
    pub low_battery_threshold: f64,
    /// Standard deviation of the observation noise, in joules.
    pub measurement_noise_sd: f64,
    /// Standard deviation of the run-time jitter, in seconds.
    pub run_time_jitter_sd: f64,
}

/// Logical duration of a setup (reboot, recharge, initialise).
pub const SETUP_DURATION_S: f64 = 60.0;
/// Size of a non-monotone voltage move, in millivolts.
const VOLTAGE_BUMP_MV: f64 = 2.0;
/// Memory released when a burst triggers reclamation, in percent.
const BURST_MEMORY_DROP_PCT: f64 = 5.0;
/// Sd of the per-setup memory start level, in percent.
const MEMORY_START_JITTER_PCT: f64 = 1.0;
/// Foreground CPU utilisation range, in percent.
const CPU_BASE_RANGE: (f64, f64) = (48.0, 54.0);
/// Extra background CPU load during a burst, in percent.
const CPU_BURST_RANGE: (f64, f64) = (25.0, 40.0);

impl DeviceParams {
    /// Parameters shipped with the crate: the eleven case-study variants on
    /// a device with drift, reboot offsets, transients, and rare bursts.
    pub fn shipped_defaults() -> Self {
        parse_params(
            include_str!("../assets/default-device.conf"),
            "default-device.conf",
        )
        .expect("bundled parameter file is valid")
    }

    /// Degenerate model: every variant costs exactly `energy_j`, every run
    /// takes `run_time_s`, and all variation is switched off.
    pub fn constant(energy_j: f64, run_time_s: f64) -> Self {
        DeviceParams {
            base_energy: BTreeMap::new(),
            run_time: BTreeMap::new(),
            fallback_energy: Some(energy_j),
            fallback_run_time: Some(run_time_s),
            drift_amplitude: 0.0,
            drift_period: 60.0,
            walk_step: 0.0,
            reboot_offset_sd: 0.0,
            startup_transient: StartupTransient {
                extra_joules: 0.0,
                decay_runs: 0,
            },
            burst_rate: 0.0,
            burst_energy: 0.0,
            burst_process_jump: 0,
            base_processes: (140, 250),
            base_memory: 50.0,
            memory_growth: 0.0,
            battery_capacity: 19000.0,
            voltage: VoltageModel {
                start_mv: 4200.0,
                drop_mv_per_cycle: 0.0,
                nonmonotone_prob: 0.0,
                start_jitter_mv: 0.0,
            },
            low_battery_noise_multiplier: 1.0,
            low_battery_threshold: 20.0,
            measurement_noise_sd: 0.0,
            run_time_jitter_sd: 0.0,
        }
    }

    /// Sets the base energy (and run time) of one variant.
    pub fn with_variant(mut self, variant: VariantId, energy_j: f64, run_time_s: f64) -> Self {
        self.base_energy.insert(variant.clone(), energy_j);
        self.run_time.insert(variant, run_time_s);
        self
    }

    fn violations(&self) -> Vec<String> {
        fn require(problems: &mut Vec<String>, ok: bool, message: &str) {
            if !ok {
                problems.push(message.to_string());
            }
        }
        let mut problems = Vec::new();

        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        for (v, &e) in &self.base_energy {
            if !non_negative(e) {
                problems.push(format!("energy of {v} must be finite and non-negative"));
            }
        }
        for (v, &t) in &self.run_time {
            if !non_negative(t) {
                problems.push(format!("run time of {v} must be finite and non-negative"));
            }
        }
        if self.fallback_run_time.is_none() {
            for v in self.base_energy.keys() {
                if !self.run_time.contains_key(v) {
                    problems.push(format!("variant {v} has no run time and no default"));
                }
            }
        }
        require(
            &mut problems,
            self.fallback_energy.is_none_or(non_negative),
            "default energy must be finite and non-negative",
        );
        require(
            &mut problems,
            self.fallback_run_time.is_none_or(non_negative),
            "default run time must be finite and non-negative",
        );
        require(
            &mut problems,
            non_negative(self.drift_amplitude),
            "drift amplitude must be finite and non-negative",
        );
        require(
            &mut problems,
            self.drift_period.is_finite() && self.drift_period >= 1.0,
            "drift period must be at least one sample",
        );
        require(
            &mut problems,
            non_negative(self.walk_step),
            "walk step must be non-negative",
        );
        require(
            &mut problems,
            non_negative(self.reboot_offset_sd),
            "reboot offset sd must be non-negative",
        );
        require(
            &mut problems,
            non_negative(self.startup_transient.extra_joules),
            "startup extra must be non-negative",
        );
        require(
            &mut problems,
            self.startup_transient.extra_joules == 0.0 || self.startup_transient.decay_runs >= 1,
            "startup decay must cover at least one run",
        );
        require(
            &mut problems,
            (0.0..=1.0).contains(&self.burst_rate),
            "burst rate must lie in [0, 1]",
        );
        require(
            &mut problems,
            non_negative(self.burst_energy),
            "burst energy must be non-negative",
        );
        require(
            &mut problems,
            self.base_processes.0 <= self.base_processes.1,
            "process range low must not exceed high",
        );
        require(
            &mut problems,
            (0.0..=100.0).contains(&self.base_memory),
            "base memory must lie in [0, 100]",
        );
        require(
            &mut problems,
            non_negative(self.memory_growth),
            "memory growth must be non-negative",
        );
        let max_cost = self
            .base_energy
            .values()
            .copied()
            .chain(self.fallback_energy)
            .fold(0.0f64, f64::max);
        require(
            &mut problems,
            self.battery_capacity.is_finite() && self.battery_capacity > max_cost,
            "battery capacity must exceed the largest run cost",
        );
        require(
            &mut problems,
            self.voltage.start_mv.is_finite() && self.voltage.start_mv > 0.0,
            "start voltage must be positive",
        );
        require(
            &mut problems,
            non_negative(self.voltage.drop_mv_per_cycle),
            "voltage drop must be non-negative",
        );
        require(
            &mut problems,
            (0.0..=1.0).contains(&self.voltage.nonmonotone_prob),
            "voltage nonmonotone probability must lie in [0, 1]",
        );
        require(
            &mut problems,
            non_negative(self.voltage.start_jitter_mv),
            "voltage start jitter must be non-negative",
        );
        require(
            &mut problems,
            self.low_battery_noise_multiplier.is_finite()
                && self.low_battery_noise_multiplier >= 1.0,
            "low-battery noise multiplier must be at least 1",
        );
        require(
            &mut problems,
            (0.0..=100.0).contains(&self.low_battery_threshold),
            "low-battery threshold must lie in [0, 100]",
        );
        require(
            &mut problems,
            non_negative(self.measurement_noise_sd),
            "measurement noise sd must be non-negative",
        );
        require(
            &mut problems,
            non_negative(self.run_time_jitter_sd),
            "run-time jitter sd must be non-negative",
        );
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems))
        }
    }

    fn energy_of(&self, variant: &VariantId) -> Result<f64> {
        self.base_energy
            .get(variant)
            .copied()
            .or(self.fallback_energy)
            .ok_or_else(|| Error::UnknownVariant(variant.as_str().to_owned()))
    }

    fn run_time_of(&self, variant: &VariantId) -> Result<f64> {
        self.run_time
            .get(variant)
            .copied()
            .or(self.fallback_run_time)
            .ok_or_else(|| Error::UnknownVariant(variant.as_str().to_owned()))
    }
}

/// Evolving state of a simulated device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub battery_pct: f64,
    pub voltage_mv: f64,
    pub walk_position: f64,
    pub runs_since_setup: usize,
    pub reboot_count: usize,
    pub current_offset: f64,
    pub active_processes: u32,
    pub memory_pct: f64,
    /// Runs executed since the device was created; drives the drift phase.
    pub global_run_index: usize,
    /// Logical seconds since the device was created.
    pub elapsed_s: f64,
}

/// A deterministic simulated device. Identical parameters and seed produce
/// identical sample streams for identical interaction transcripts.
///
/// One device is a mutable state machine; share-nothing across threads.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    params: DeviceParams,
    seed: u64,
    rng: ChaCha8Rng,
    state: DeviceState,
}

impl SimulatedDevice {
    pub fn new(params: DeviceParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let state = DeviceState {
            battery_pct: 100.0,
            voltage_mv: params.voltage.start_mv,
            walk_position: 0.0,
            runs_since_setup: 0,
            reboot_count: 0,
            current_offset: 0.0,
            active_processes: params.base_processes.0,
            memory_pct: params.base_memory,
            global_run_index: 0,
            elapsed_s: 0.0,
        };
        Ok(SimulatedDevice {
            params,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state,
        })
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Reboot, recharge, and initialise: battery back to 100%, the startup
    /// transient re-armed, and the per-reboot level shift redrawn.
    pub fn setup_device(&mut self) {
        let offset_z = self.normal();
        let voltage_z = self.normal();
        let memory_z = self.normal();
        let processes = self
            .rng
            .random_range(self.params.base_processes.0..=self.params.base_processes.1);

        let s = &mut self.state;
        s.battery_pct = 100.0;
        s.runs_since_setup = 0;
        s.reboot_count += 1;
        s.current_offset = self.params.reboot_offset_sd * offset_z;
        s.voltage_mv =
            self.params.voltage.start_mv + self.params.voltage.start_jitter_mv * voltage_z;
        s.memory_pct =
            (self.params.base_memory + MEMORY_START_JITTER_PCT * memory_z).clamp(0.0, 100.0);
        s.active_processes = processes;
        s.elapsed_s += SETUP_DURATION_S;
    }

    /// Executes one measured run of `variant`.
    pub fn run_variant(&mut self, variant: &VariantId) -> Result<Reading> {
        if self.state.reboot_count == 0 {
            return Err(Error::RunBeforeSetup);
        }
        if self.state.battery_pct <= 0.0 {
            return Err(Error::Discharged {
                runs: self.state.global_run_index,
            });
        }
        let base_energy = self.params.energy_of(variant)?;
        let base_run_time = self.params.run_time_of(variant)?;

        // Fixed draw order keeps streams reproducible across parameter
        // tweaks that zero out individual terms.
        let walk_z = self.normal();
        let burst_u: f64 = self.rng.random();
        let noise_z = self.normal();
        let processes_base = self
            .rng
            .random_range(self.params.base_processes.0..=self.params.base_processes.1);
        let runtime_z = self.normal();
        let voltage_u: f64 = self.rng.random();
        let cpu_base = self.rng.random_range(CPU_BASE_RANGE.0..CPU_BASE_RANGE.1);
        let cpu_burst = self.rng.random_range(CPU_BURST_RANGE.0..CPU_BURST_RANGE.1);

        let p = &self.params;
        let s = &mut self.state;

        s.walk_position += p.walk_step * walk_z;
        let burst = burst_u < p.burst_rate;

        let drift = p.drift_amplitude
            * (2.0 * std::f64::consts::PI * s.global_run_index as f64 / p.drift_period).sin();
        let transient = if p.startup_transient.extra_joules > 0.0 {
            let decay = p.startup_transient.decay_runs as f64;
            p.startup_transient.extra_joules * (1.0 - s.runs_since_setup as f64 / decay).max(0.0)
        } else {
            0.0
        };
        let noise_multiplier = if s.battery_pct < p.low_battery_threshold {
            p.low_battery_noise_multiplier
        } else {
            1.0
        };
        let energy = (base_energy
            + drift
            + s.walk_position
            + s.current_offset
            + transient
            + if burst { p.burst_energy } else { 0.0 }
            + p.measurement_noise_sd * noise_multiplier * noise_z)
            .max(0.0);

        let discharge = energy / p.battery_capacity;
        s.battery_pct = (s.battery_pct - discharge * 100.0).max(0.0);

        s.voltage_mv -= p.voltage.drop_mv_per_cycle * discharge;
        if voltage_u < p.voltage.nonmonotone_prob {
            s.voltage_mv += VOLTAGE_BUMP_MV;
        }

        s.active_processes = processes_base + if burst { p.burst_process_jump } else { 0 };
        s.memory_pct = (s.memory_pct + p.memory_growth).min(100.0);
        if burst {
            // Reclamation kicks in under burst pressure.
            s.memory_pct = (s.memory_pct - BURST_MEMORY_DROP_PCT).max(0.0);
        }
        let cpu = (cpu_base + if burst { cpu_burst } else { 0.0 }).min(100.0);

        let runtime = (base_run_time + p.run_time_jitter_sd * runtime_z).max(0.0);
        s.elapsed_s += runtime;
        s.global_run_index += 1;
        s.runs_since_setup += 1;

        Ok(Reading {
            energy_j: energy,
            runtime_s: runtime,
            battery_pct: Some(s.battery_pct),
            voltage_mv: Some(s.voltage_mv),
            active_processes: Some(s.active_processes),
            memory_pct: Some(s.memory_pct),
            cpu_pct: Some(cpu),
            timestamp_s: s.elapsed_s,
        })
    }
}

impl MeasurementBackend for SimulatedDevice {
    fn setup(&mut self) -> Result<()> {
        self.setup_device();
        Ok(())
    }

    fn run(&mut self, variant: &VariantId) -> Result<Reading> {
        self.run_variant(variant)
    }

    fn battery_pct(&self) -> Option<f64> {
        Some(self.state.battery_pct)
    }

    fn descriptor(&self) -> String {
        format!("sim(seed={})", self.seed)
    }
}

/// Parses the flat `key = value` parameter format; `name` appears in error
/// messages. Keys `energy.<variant>` and `run_time.<variant>` populate the
/// per-variant tables.
pub fn parse_params(text: &str, name: &str) -> Result<DeviceParams> {
    let mut params = DeviceParams::constant(0.0, 0.0);
    params.fallback_energy = None;
    params.fallback_run_time = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, lineno, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let float = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|e| Error::parse(name, lineno, format!("bad number {value:?}: {e}")))
        };
        let integer = || -> Result<u32> {
            value
                .parse::<u32>()
                .map_err(|e| Error::parse(name, lineno, format!("bad integer {value:?}: {e}")))
        };

        if let Some(variant) = key.strip_prefix("energy.") {
            params
                .base_energy
                .insert(VariantId::new(variant)?, float()?);
            continue;
        }
        if let Some(variant) = key.strip_prefix("run_time.") {
            params.run_time.insert(VariantId::new(variant)?, float()?);
            continue;
        }
        match key {
            "drift_amplitude" => params.drift_amplitude = float()?,
            "drift_period" => params.drift_period = float()?,
            "walk_step" => params.walk_step = float()?,
            "reboot_offset_sd" => params.reboot_offset_sd = float()?,
            "startup_extra" => params.startup_transient.extra_joules = float()?,
            "startup_decay_runs" => params.startup_transient.decay_runs = integer()?,
            "burst_rate" => params.burst_rate = float()?,
            "burst_energy" => params.burst_energy = float()?,
            "burst_process_jump" => params.burst_process_jump = integer()?,
            "base_processes_low" => params.base_processes.0 = integer()?,
            "base_processes_high" => params.base_processes.1 = integer()?,
            "base_memory" => params.base_memory = float()?,
            "memory_growth" => params.memory_growth = float()?,
            "battery_capacity" => params.battery_capacity = float()?,
            "voltage_start" => params.voltage.start_mv = float()?,
            "voltage_drop_per_cycle" => params.voltage.drop_mv_per_cycle = float()?,
            "voltage_nonmonotone_prob" => params.voltage.nonmonotone_prob = float()?,
            "voltage_start_jitter" => params.voltage.start_jitter_mv = float()?,
            "low_battery_noise_multiplier" => params.low_battery_noise_multiplier = float()?,
            "low_battery_threshold" => params.low_battery_threshold = float()?,
            "measurement_noise_sd" => params.measurement_noise_sd = float()?,
            "run_time_jitter_sd" => params.run_time_jitter_sd = float()?,
            "default_energy" => params.fallback_energy = Some(float()?),
            "default_run_time" => params.fallback_run_time = Some(float()?),
            other => {
                return Err(Error::parse(
                    name,
                    lineno,
                    format!("unknown parameter {other:?}"),
                ))
            }
        }
    }

    params.validate()?;
    Ok(params)
}

/// Loads device parameters from a file.
pub fn load_params(path: &std::path::Path) -> Result<DeviceParams> {
    let text = std::fs::read_to_string(path)?;
    parse_params(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variant(name: &str) -> VariantId {
        VariantId::new(name).unwrap()
    }

    #[test]
    fn shipped_defaults_parse_and_validate() {
        let params = DeviceParams::shipped_defaults();
        assert_eq!(params.base_energy.len(), 11);
        assert_eq!(params.base_energy[&variant("original")], 47.0);
        assert_eq!(params.low_battery_threshold, 20.0);
        assert!(params.validate().is_ok());
    }

    #[test]
    fn invalid_params_list_every_violation() {
        let mut params = DeviceParams::constant(47.0, 17.0);
        params.burst_rate = 1.5;
        params.low_battery_noise_multiplier = 0.5;
        params.base_processes = (300, 200);
        let err = SimulatedDevice::new(params, 1).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("burst rate"));
        assert!(message.contains("multiplier"));
        assert!(message.contains("process range"));
    }

    #[test]
    fn same_seed_gives_identical_streams() {
        let params = DeviceParams::shipped_defaults();
        let run_block = |seed: u64| {
            let mut device = SimulatedDevice::new(DeviceParams::shipped_defaults(), seed).unwrap();
            device.setup_device();
            (0..20)
                .map(|_| device.run_variant(&variant("original")).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run_block(7), run_block(7));
        let other = run_block(8);
        assert!(
            run_block(7)
                .iter()
                .zip(&other)
                .any(|(a, b)| a.energy_j != b.energy_j),
            "different seeds must differ"
        );
        drop(params);
    }

    #[test]
    fn zero_noise_yields_exact_base_energy() {
        let mut device = SimulatedDevice::new(DeviceParams::constant(47.0, 17.0), 3).unwrap();
        device.setup_device();
        let reading = device.run_variant(&variant("x")).unwrap();
        assert_eq!(reading.energy_j, 47.0);
        assert_eq!(reading.runtime_s, 17.0);
        let expected_pct = 100.0 - 47.0 / 19000.0 * 100.0;
        assert!((device.state().battery_pct - expected_pct).abs() < 1e-12);
    }

    #[test]
    fn burst_reproduces_the_outlier_magnitude() {
        let mut params = DeviceParams::constant(47.0, 17.0);
        params.burst_rate = 1.0;
        params.burst_energy = 50.0;
        params.burst_process_jump = 250;
        let mut device = SimulatedDevice::new(params, 1).unwrap();
        device.setup_device();
        let reading = device.run_variant(&variant("raw3")).unwrap();
        assert_eq!(reading.energy_j, 97.0);
        assert!(reading.active_processes.unwrap() >= 390);
    }

    #[test]
    fn startup_transient_decays_linearly() {
        let mut params = DeviceParams::constant(10.0, 17.0);
        params.startup_transient = StartupTransient {
            extra_joules: 2.0,
            decay_runs: 5,
        };
        let mut device = SimulatedDevice::new(params, 1).unwrap();
        device.setup_device();
        let energies: Vec<f64> = (0..6)
            .map(|_| device.run_variant(&variant("x")).unwrap().energy_j)
            .collect();
        assert!((energies[0] - energies[5] - 2.0).abs() < 1e-12);
        assert_eq!(energies[5], 10.0);
    }

    #[test]
    fn setup_restores_battery_and_rearms_the_transient() {
        let mut params = DeviceParams::constant(100.0, 17.0);
        params.battery_capacity = 1000.0;
        params.startup_transient = StartupTransient {
            extra_joules: 1.0,
            decay_runs: 1,
        };
        let mut device = SimulatedDevice::new(params, 1).unwrap();
        device.setup_device();
        let first = device.run_variant(&variant("x")).unwrap();
        assert_eq!(first.energy_j, 101.0);
        let second = device.run_variant(&variant("x")).unwrap();
        assert_eq!(second.energy_j, 100.0);
        device.setup_device();
        assert_eq!(device.state().battery_pct, 100.0);
        let rearmed = device.run_variant(&variant("x")).unwrap();
        assert_eq!(rearmed.energy_j, 101.0);
    }

    #[test]
    fn reboot_offsets_vary_across_setups() {
        let mut params = DeviceParams::constant(47.0, 17.0);
        params.reboot_offset_sd = 2.0;
        let mut device = SimulatedDevice::new(params, 11).unwrap();
        let mut offsets = Vec::new();
        for _ in 0..11 {
            device.setup_device();
            offsets.push(device.state().current_offset);
        }
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        offsets.dedup();
        assert!(offsets.len() > 1, "offsets must not all be equal");

        let mut quiet = SimulatedDevice::new(DeviceParams::constant(47.0, 17.0), 11).unwrap();
        quiet.setup_device();
        let first = quiet.state().current_offset;
        quiet.setup_device();
        assert_eq!(quiet.state().current_offset, first);
        assert_eq!(first, 0.0);
    }

    #[test]
    fn discharged_battery_is_an_error() {
        let mut params = DeviceParams::constant(600.0, 1.0);
        params.battery_capacity = 1000.0;
        let mut device = SimulatedDevice::new(params, 1).unwrap();
        device.setup_device();
        device.run_variant(&variant("x")).unwrap();
        device.run_variant(&variant("x")).unwrap();
        assert_eq!(device.state().battery_pct, 0.0);
        assert!(matches!(
            device.run_variant(&variant("x")),
            Err(Error::Discharged { .. })
        ));
    }

    #[test]
    fn unknown_variant_without_fallback_is_an_error() {
        let mut params = DeviceParams::constant(47.0, 17.0);
        params.fallback_energy = None;
        params.fallback_run_time = None;
        params = params.with_variant(variant("known"), 10.0, 5.0);
        let mut device = SimulatedDevice::new(params, 1).unwrap();
        device.setup_device();
        assert!(device.run_variant(&variant("known")).is_ok());
        assert!(matches!(
            device.run_variant(&variant("mystery")),
            Err(Error::UnknownVariant(name)) if name == "mystery"
        ));
    }

    #[test]
    fn run_before_setup_is_an_error() {
        let mut device = SimulatedDevice::new(DeviceParams::constant(1.0, 1.0), 1).unwrap();
        assert!(matches!(
            device.run_variant(&variant("x")),
            Err(Error::RunBeforeSetup)
        ));
    }

    #[test]
    fn battery_never_increases_between_setups() {
        let mut device = SimulatedDevice::new(DeviceParams::shipped_defaults(), 5).unwrap();
        device.setup_device();
        let mut last = device.state().battery_pct;
        for _ in 0..50 {
            device.run_variant(&variant("original")).unwrap();
            let now = device.state().battery_pct;
            assert!(now <= last);
            last = now;
        }
    }

    #[test]
    fn parse_rejects_unknown_keys_with_line_numbers() {
        let err = parse_params("drift_amplitude = 1.0\nwobble = 3\n", "p.conf").unwrap_err();
        assert!(err.to_string().starts_with("p.conf:2:"));
    }
}
