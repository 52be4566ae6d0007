//! Schedule execution against measurement backends, and campaign/corpus
//! persistence.
//!
//! Execution is strictly sequential: the protocols under study are about
//! temporal ordering, so samples are never collected in parallel.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{Campaign, MeasurementSample, Schedule, ScheduleAction, VariantId};
use crate::scheduling::{schedule_from_text, schedule_to_text};

/// What a backend reports for one run: energy, duration, and whatever
/// system-state metadata it can observe.
#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub energy_j: f64,
    pub runtime_s: f64,
    pub battery_pct: Option<f64>,
    pub voltage_mv: Option<f64>,
    pub active_processes: Option<u32>,
    pub memory_pct: Option<f64>,
    pub cpu_pct: Option<f64>,
    /// Seconds since the backend started; a logical clock for simulated
    /// and replayed backends.
    pub timestamp_s: f64,
}

/// A measurement device the runner can drive. `run` may only be called
/// after at least one `setup`.
pub trait MeasurementBackend {
    fn setup(&mut self) -> Result<()>;
    fn run(&mut self, variant: &VariantId) -> Result<Reading>;
    /// Current charge, if the backend can report it; consulted for the
    /// battery-floor guard before every run.
    fn battery_pct(&self) -> Option<f64> {
        None
    }
    fn descriptor(&self) -> String;
}

/// A failed campaign: whatever samples were collected before the failure,
/// plus the cause.
#[derive(Debug)]
pub struct ExecutionError {
    pub partial: Campaign,
    pub cause: Error,
}

impl std::fmt::Display for ExecutionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "campaign aborted after {} samples: {}",
            self.partial.samples.len(),
            self.cause
        )
    }
}

impl std::error::Error for ExecutionError {}

impl From<Box<ExecutionError>> for Error {
    fn from(err: Box<ExecutionError>) -> Self {
        err.cause
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Executes `schedule` action by action against `backend`.
///
/// Setup actions invoke `backend.setup()`; every run is first guarded by
/// the battery floor (a breach aborts rather than silently recharging,
/// because altering the schedule would corrupt the protocol comparison) and
/// then recorded with its reboot, round, and slot indices. On failure the
/// partial campaign is preserved inside the error.
pub fn execute_campaign(
    schedule: &Schedule,
    backend: &mut dyn MeasurementBackend,
    battery_floor: f64,
    seed: Option<u64>,
) -> std::result::Result<Campaign, Box<ExecutionError>> {
    let slots = schedule.run_slots();
    let mut samples: Vec<MeasurementSample> = Vec::with_capacity(slots.len());
    let descriptor = backend.descriptor();

    let abort = |samples: Vec<MeasurementSample>, cause: Error| {
        let partial = Campaign::new(
            schedule.clone(),
            samples,
            descriptor.clone(),
            seed,
            unix_now(),
        )
        .expect("partial samples match the schedule prefix");
        Box::new(ExecutionError { partial, cause })
    };

    let mut slot_iter = slots.into_iter();
    for action in schedule.actions() {
        match action {
            ScheduleAction::Setup => {
                if let Err(cause) = backend.setup() {
                    return Err(abort(samples, cause));
                }
            }
            ScheduleAction::Run(variant) => {
                let slot = slot_iter.next().expect("one slot per run action");
                if let Some(level) = backend.battery_pct() {
                    if level < battery_floor {
                        return Err(abort(
                            samples,
                            Error::BatteryFloor {
                                slot: slot.slot_index,
                                level,
                                floor: battery_floor,
                            },
                        ));
                    }
                }
                match backend.run(variant) {
                    Ok(reading) => samples.push(MeasurementSample {
                        variant: slot.variant,
                        energy_j: reading.energy_j,
                        runtime_s: reading.runtime_s,
                        reboot_index: slot.reboot_index,
                        round_index: slot.round_index,
                        slot_index: slot.slot_index,
                        battery_pct: reading.battery_pct,
                        voltage_mv: reading.voltage_mv,
                        active_processes: reading.active_processes,
                        memory_pct: reading.memory_pct,
                        cpu_pct: reading.cpu_pct,
                        timestamp_s: reading.timestamp_s,
                    }),
                    Err(cause) => return Err(abort(samples, cause)),
                }
            }
        }
    }

    Ok(
        Campaign::new(schedule.clone(), samples, descriptor, seed, unix_now())
            .expect("complete samples match the schedule"),
    )
}

/// Repeated energy measurements of a single true variant, grouped by the
/// reboot they were taken under.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub platform_label: String,
    pub reboots: Vec<Vec<f64>>,
}

impl Corpus {
    pub fn new(platform_label: impl Into<String>, reboots: Vec<Vec<f64>>) -> Result<Self> {
        if reboots.is_empty() {
            return Err(Error::InvalidConfig("corpus has no reboot blocks".into()));
        }
        if reboots.iter().any(|block| block.is_empty()) {
            return Err(Error::InvalidConfig(
                "corpus has an empty reboot block".into(),
            ));
        }
        Ok(Corpus {
            platform_label: platform_label.into(),
            reboots,
        })
    }

    pub fn total_readings(&self) -> usize {
        self.reboots.iter().map(|b| b.len()).sum()
    }
}

/// Replays a corpus: each setup advances to the next reboot block, each run
/// returns the block's next reading regardless of the requested variant.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    corpus: Corpus,
    /// Index of the current block; `None` before the first setup.
    block: Option<usize>,
    position: usize,
    clock_s: f64,
}

/// Logical seconds a replayed setup advances the clock by.
const REPLAY_SETUP_S: f64 = 60.0;
/// Logical seconds between replayed readings.
const REPLAY_RUN_S: f64 = 30.0;

impl ReplayBackend {
    pub fn new(corpus: Corpus) -> Self {
        ReplayBackend {
            corpus,
            block: None,
            position: 0,
            clock_s: 0.0,
        }
    }
}

impl MeasurementBackend for ReplayBackend {
    fn setup(&mut self) -> Result<()> {
        let next = self.block.map_or(0, |b| b + 1);
        if next >= self.corpus.reboots.len() {
            return Err(Error::CorpusExhausted(format!(
                "setup {} requested but the corpus has {} reboot blocks",
                next + 1,
                self.corpus.reboots.len()
            )));
        }
        self.block = Some(next);
        self.position = 0;
        self.clock_s += REPLAY_SETUP_S;
        Ok(())
    }

    fn run(&mut self, _variant: &VariantId) -> Result<Reading> {
        let block = self.block.ok_or(Error::RunBeforeSetup)?;
        let readings = &self.corpus.reboots[block];
        if self.position >= readings.len() {
            return Err(Error::CorpusExhausted(format!(
                "block {} holds {} readings, all consumed",
                block,
                readings.len()
            )));
        }
        let energy = readings[self.position];
        self.position += 1;
        self.clock_s += REPLAY_RUN_S;
        Ok(Reading {
            energy_j: energy,
            runtime_s: 0.0,
            battery_pct: None,
            voltage_mv: None,
            active_processes: None,
            memory_pct: None,
            cpu_pct: None,
            timestamp_s: self.clock_s,
        })
    }

    fn descriptor(&self) -> String {
        format!("replay(platform={})", self.corpus.platform_label)
    }
}

/// Bridges to a real meter through shell commands: one for setup, one per
/// run with `{variant}` substituted, and a regex whose first capture group
/// extracts the energy in joules from the run's output.
pub struct ExternalCommandBackend {
    setup_cmd: String,
    run_cmd_template: String,
    pattern: Regex,
    timeout: Duration,
    started: Instant,
    has_setup: bool,
}

impl ExternalCommandBackend {
    pub fn new(
        setup_cmd: impl Into<String>,
        run_cmd_template: impl Into<String>,
        parse_pattern: &str,
        timeout: Duration,
    ) -> Result<Self> {
        let setup_cmd = setup_cmd.into();
        let run_cmd_template = run_cmd_template.into();
        if setup_cmd.is_empty() || run_cmd_template.is_empty() {
            return Err(Error::InvalidConfig(
                "setup and run commands must be non-empty".into(),
            ));
        }
        let pattern = Regex::new(parse_pattern)
            .map_err(|e| Error::InvalidConfig(format!("bad parse pattern: {e}")))?;
        if pattern.captures_len() < 2 {
            return Err(Error::InvalidConfig(
                "parse pattern needs one capture group for the joules value".into(),
            ));
        }
        Ok(ExternalCommandBackend {
            setup_cmd,
            run_cmd_template,
            pattern,
            timeout,
            started: Instant::now(),
            has_setup: false,
        })
    }

    fn execute(&self, command: &str) -> Result<String> {
        let mut child = std::process::Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::piped())
            .spawn()
            .map_err(|source| Error::CommandSpawn {
                command: command.to_string(),
                source,
            })?;

        let deadline = Instant::now() + self.timeout;
        loop {
            match child.try_wait()? {
                Some(_) => break,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::CommandTimeout {
                        command: command.to_string(),
                        timeout_s: self.timeout.as_secs_f64(),
                    });
                }
                None => std::thread::sleep(Duration::from_millis(10)),
            }
        }
        let output = child.wait_with_output()?;
        let mut text = String::from_utf8_lossy(&output.stdout).into_owned();
        text.push_str(&String::from_utf8_lossy(&output.stderr));
        if !output.status.success() {
            return Err(Error::CommandFailed {
                command: command.to_string(),
                status: output.status.to_string(),
                output: text,
            });
        }
        Ok(text)
    }
}

impl MeasurementBackend for ExternalCommandBackend {
    fn setup(&mut self) -> Result<()> {
        self.execute(&self.setup_cmd.clone())?;
        self.has_setup = true;
        Ok(())
    }

    fn run(&mut self, variant: &VariantId) -> Result<Reading> {
        if !self.has_setup {
            return Err(Error::RunBeforeSetup);
        }
        let command = self.run_cmd_template.replace("{variant}", variant.as_str());
        let begun = Instant::now();
        let output = self.execute(&command)?;
        let runtime_s = begun.elapsed().as_secs_f64();

        let captures = self
            .pattern
            .captures(&output)
            .ok_or_else(|| Error::ParseEnergy {
                pattern: self.pattern.as_str().to_string(),
                output: output.clone(),
            })?;
        let energy_j = captures
            .get(1)
            .and_then(|m| m.as_str().parse::<f64>().ok())
            .ok_or_else(|| Error::ParseEnergy {
                pattern: self.pattern.as_str().to_string(),
                output: output.clone(),
            })?;

        Ok(Reading {
            energy_j,
            runtime_s,
            battery_pct: None,
            voltage_mv: None,
            active_processes: None,
            memory_pct: None,
            cpu_pct: None,
            timestamp_s: self.started.elapsed().as_secs_f64(),
        })
    }

    fn descriptor(&self) -> String {
        format!("exec(run={})", self.run_cmd_template)
    }
}

/// Column order of the samples CSV; fixed for downstream tooling.
pub const SAMPLE_COLUMNS: &str = "variant,reboot_index,round_index,slot_index,energy_j,\
runtime_s,battery_pct,voltage_mv,active_processes,memory_pct,cpu_pct,timestamp_s";

fn opt_to_field<T: std::fmt::Display>(value: &Option<T>) -> String {
    value.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(field: &str, path: &str, line: usize) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<T>()
        .map(Some)
        .map_err(|e| Error::parse(path, line, format!("bad field {field:?}: {e}")))
}

fn parse_field<T: std::str::FromStr>(field: &str, path: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse::<T>()
        .map_err(|e| Error::parse(path, line, format!("bad field {field:?}: {e}")))
}

/// Serializes the samples table. Floats use the shortest representation
/// that parses back to the same value, so round-trips are lossless.
pub fn campaign_samples_csv(campaign: &Campaign) -> String {
    let mut out = String::from(SAMPLE_COLUMNS);
    out.push('\n');
    for s in &campaign.samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.variant,
            s.reboot_index,
            s.round_index,
            s.slot_index,
            s.energy_j,
            s.runtime_s,
            opt_to_field(&s.battery_pct),
            opt_to_field(&s.voltage_mv),
            opt_to_field(&s.active_processes),
            opt_to_field(&s.memory_pct),
            opt_to_field(&s.cpu_pct),
            s.timestamp_s,
        )
        .unwrap();
    }
    out
}

/// Serializes the manifest: campaign provenance, then the schedule in its
/// line format under a `[schedule]` marker.
pub fn campaign_manifest(campaign: &Campaign) -> String {
    let mut out = String::new();
    writeln!(out, "backend = {}", campaign.backend_descriptor).unwrap();
    if let Some(seed) = campaign.seed {
        writeln!(out, "seed = {seed}").unwrap();
    }
    writeln!(out, "created_at_unix = {}", campaign.created_at_unix).unwrap();
    writeln!(out, "samples = {}", campaign.samples.len()).unwrap();
    out.push_str("[schedule]\n");
    out.push_str(&schedule_to_text(&campaign.schedule));
    out
}

/// Writes `<stem>.manifest` and `<stem>.csv`.
pub fn write_campaign(campaign: &Campaign, stem: &Path) -> Result<()> {
    std::fs::write(stem.with_extension("manifest"), campaign_manifest(campaign))?;
    std::fs::write(stem.with_extension("csv"), campaign_samples_csv(campaign))?;
    Ok(())
}

/// Reads a campaign written by [`write_campaign`].
pub fn read_campaign(stem: &Path) -> Result<Campaign> {
    let manifest_path = stem.with_extension("manifest");
    let csv_path = stem.with_extension("csv");
    let manifest_name = manifest_path.display().to_string();
    let csv_name = csv_path.display().to_string();
    let manifest = std::fs::read_to_string(&manifest_path)?;
    let csv = std::fs::read_to_string(&csv_path)?;

    let mut backend = None;
    let mut seed = None;
    let mut created = None;
    let mut declared_samples = None;
    let mut schedule_text = String::new();
    let mut in_schedule = false;
    for (idx, line) in manifest.lines().enumerate() {
        let lineno = idx + 1;
        if in_schedule {
            schedule_text.push_str(line);
            schedule_text.push('\n');
            continue;
        }
        let trimmed = line.trim();
        if trimmed == "[schedule]" {
            in_schedule = true;
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::parse(&manifest_name, lineno, "expected `key = value`"))?;
        match key.trim() {
            "backend" => backend = Some(value.trim().to_string()),
            "seed" => seed = Some(parse_field::<u64>(value.trim(), &manifest_name, lineno)?),
            "created_at_unix" => {
                created = Some(parse_field::<u64>(value.trim(), &manifest_name, lineno)?)
            }
            "samples" => {
                declared_samples = Some(parse_field::<usize>(value.trim(), &manifest_name, lineno)?)
            }
            other => {
                return Err(Error::parse(
                    &manifest_name,
                    lineno,
                    format!("unknown manifest key {other:?}"),
                ))
            }
        }
    }
    if !in_schedule {
        return Err(Error::parse(
            &manifest_name,
            manifest.lines().count().max(1),
            "missing [schedule] section",
        ));
    }
    let schedule = schedule_from_text(&schedule_text, &manifest_name)?;

    let mut lines = csv.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(&csv_name, 1, "empty samples file"))?;
    let expected: Vec<&str> = SAMPLE_COLUMNS.split(',').collect();
    let got: Vec<&str> = header.split(',').collect();
    for column in &expected {
        if !got.contains(column) {
            return Err(Error::MissingColumn((*column).to_string()));
        }
    }
    if got != expected {
        return Err(Error::parse(
            &csv_name,
            1,
            format!("columns must appear in the order {SAMPLE_COLUMNS:?}"),
        ));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(Error::parse(
                &csv_name,
                lineno,
                format!("{} fields, expected {}", fields.len(), expected.len()),
            ));
        }
        samples.push(MeasurementSample {
            variant: VariantId::new(fields[0])?,
            reboot_index: parse_field(fields[1], &csv_name, lineno)?,
            round_index: parse_field(fields[2], &csv_name, lineno)?,
            slot_index: parse_field(fields[3], &csv_name, lineno)?,
            energy_j: parse_field(fields[4], &csv_name, lineno)?,
            runtime_s: parse_field(fields[5], &csv_name, lineno)?,
            battery_pct: parse_opt(fields[6], &csv_name, lineno)?,
            voltage_mv: parse_opt(fields[7], &csv_name, lineno)?,
            active_processes: parse_opt(fields[8], &csv_name, lineno)?,
            memory_pct: parse_opt(fields[9], &csv_name, lineno)?,
            cpu_pct: parse_opt(fields[10], &csv_name, lineno)?,
            timestamp_s: parse_field(fields[11], &csv_name, lineno)?,
        });
    }
    if let Some(declared) = declared_samples {
        if declared != samples.len() {
            return Err(Error::parse(
                &csv_name,
                samples.len() + 1,
                format!(
                    "manifest declares {declared} samples, file has {}",
                    samples.len()
                ),
            ));
        }
    }

    Campaign::new(
        schedule,
        samples,
        backend.unwrap_or_default(),
        seed,
        created.unwrap_or(0),
    )
}

/// Corpus CSV columns.
pub const CORPUS_COLUMNS: &str = "platform,reboot_index,position,energy_j";

/// Serializes one or more corpora (one platform each) into a single table.
pub fn corpora_to_csv(corpora: &[Corpus]) -> String {
    let mut out = String::from(CORPUS_COLUMNS);
    out.push('\n');
    for corpus in corpora {
        for (reboot, block) in corpus.reboots.iter().enumerate() {
            for (position, energy) in block.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    corpus.platform_label, reboot, position, energy
                )
                .unwrap();
            }
        }
    }
    out
}

/// Parses a corpus table; platforms keep their order of first appearance.
pub fn corpora_from_csv(text: &str, name: &str) -> Result<Vec<Corpus>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(name, 1, "empty corpus file"))?;
    if header != CORPUS_COLUMNS {
        let got: Vec<&str> = header.split(',').collect();
        for column in CORPUS_COLUMNS.split(',') {
            if !got.contains(&column) {
                return Err(Error::MissingColumn(column.to_string()));
            }
        }
        return Err(Error::parse(
            name,
            1,
            format!("columns must appear in the order {CORPUS_COLUMNS:?}"),
        ));
    }

    let mut order: Vec<String> = Vec::new();
    let mut blocks: std::collections::BTreeMap<String, Vec<Vec<f64>>> = Default::default();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                name,
                lineno,
                format!("{} fields, expected 4", fields.len()),
            ));
        }
        let platform = fields[0].to_string();
        let reboot: usize = parse_field(fields[1], name, lineno)?;
        let position: usize = parse_field(fields[2], name, lineno)?;
        let energy: f64 = parse_field(fields[3], name, lineno)?;
        if !order.contains(&platform) {
            order.push(platform.clone());
        }
        let platform_blocks = blocks.entry(platform).or_default();
        if reboot == platform_blocks.len() {
            platform_blocks.push(Vec::new());
        } else if reboot + 1 != platform_blocks.len() {
            return Err(Error::parse(
                name,
                lineno,
                format!("reboot index {reboot} out of order"),
            ));
        }
        let block = platform_blocks.last_mut().unwrap();
        if position != block.len() {
            return Err(Error::parse(
                name,
                lineno,
                format!(
                    "position {position} out of order (expected {})",
                    block.len()
                ),
            ));
        }
        block.push(energy);
    }

    order
        .into_iter()
        .map(|platform| {
            let reboots = blocks.remove(&platform).unwrap();
            Corpus::new(platform, reboots)
        })
        .collect()
}

pub fn write_corpora(corpora: &[Corpus], path: &Path) -> Result<()> {
    std::fs::write(path, corpora_to_csv(corpora))?;
    Ok(())
}

pub fn read_corpora(path: &Path) -> Result<Vec<Corpus>> {
    let text = std::fs::read_to_string(path)?;
    corpora_from_csv(&text, &path.display().to_string())
}
