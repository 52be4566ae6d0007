//! Command-line front end for the measurement-validation harness.
//!
//! Subcommands cover the full pipeline: schedule generation, campaign
//! execution against a backend, spectral analysis, specificity and
//! sensitivity evaluation, and the end-to-end seeded replication study.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use r3val::evaluation::{
    aggregate_specificity, group_corpus, sensitivity_table, specificity_matrix, CountMatrix,
    SpecificityMatrix,
};
use r3val::model::{Approach, Campaign, VariantId};
use r3val::pipeline::{render_report, replicate, ReportInputs};
use r3val::runner::{
    execute_campaign, read_campaign, read_corpora, write_campaign, ExecutionError,
    ExternalCommandBackend, MeasurementBackend, ReplayBackend,
};
use r3val::scheduling::{
    generate_schedule, schedule_from_text, schedule_summary, schedule_to_text, ScheduleConfig,
};
use r3val::simulator::{load_params, DeviceParams, SimulatedDevice};
use r3val::spectral::{dominant_periods, periodogram_windowed, Window};

/// Environment variable that globally overrides every `--seed` flag; handy
/// for re-running a whole CI pipeline under a different seed.
const SEED_ENV: &str = "R3VAL_SEED";

#[derive(Parser)]
#[command(
    name = "r3val",
    about = "Validation harness for noisy software measurements",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a measurement schedule for one validation approach.
    Schedule(ScheduleArgs),
    /// Execute a schedule against a measurement backend.
    Run(RunArgs),
    /// Periodogram of one variant's energy series from a campaign.
    Spectrum(SpectrumArgs),
    /// False-positive matrices from grouping a single-variant corpus.
    Specificity(SpecificityArgs),
    /// Effect sizes and significant comparisons against a baseline.
    Sensitivity(SensitivityArgs),
    /// Full seeded replication study on the simulator.
    Replicate(ReplicateArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    /// a1, a2, a3, a4 or r3.
    #[arg(long)]
    approach: String,
    /// Comma-separated variant labels, e.g. A,B,C,D.
    #[arg(long)]
    variants: String,
    /// Samples required per variant.
    #[arg(long)]
    samples: usize,
    /// Rounds per discharge cycle (r3).
    #[arg(long, default_value_t = 1)]
    pi: usize,
    /// Schedule file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Simulated device.
    Sim,
    /// Replay a recorded corpus.
    Replay,
    /// Drive external commands.
    Exec,
}

#[derive(Args)]
struct RunArgs {
    /// Schedule file produced by `schedule`.
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// Simulator seed (sim backend).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Device parameter file (sim backend); bundled defaults otherwise.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Corpus CSV (replay backend).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Platform label to replay when the corpus holds several.
    #[arg(long)]
    platform: Option<String>,
    /// Setup command (exec backend).
    #[arg(long)]
    setup_cmd: Option<String>,
    /// Run command with a `{variant}` placeholder (exec backend).
    #[arg(long)]
    run_cmd: Option<String>,
    /// Regex whose first capture group is the energy in joules (exec).
    #[arg(long)]
    parse_regex: Option<String>,
    /// Per-command timeout in seconds (exec backend).
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,
    /// Abort if the backend reports charge below this percentage.
    #[arg(long, default_value_t = 20.0)]
    battery_floor: f64,
    /// Output stem; writes `<stem>.manifest` and `<stem>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Campaign stem (as passed to `run --out`).
    #[arg(long)]
    campaign: PathBuf,
    /// Variant whose energy series to analyse.
    #[arg(long)]
    variant: String,
    /// Spectrum CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Apply a Hann window before the transform.
    #[arg(long)]
    hann: bool,
}

#[derive(Args)]
struct SpecificityArgs {
    /// Corpus CSV; may hold several platforms.
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated approaches; all five by default.
    #[arg(long, default_value = "a1,a2,a3,a4,r3")]
    approaches: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Pseudo-variant count; defaults to the corpus reboot-block count.
    #[arg(long)]
    pseudo_variants: Option<usize>,
    /// Directory for `report.md` and `specificity_<approach>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Campaign per approach, as `<approach>=<stem>`; repeatable.
    #[arg(long = "campaigns", visible_alias = "campaign", required = true)]
    campaigns: Vec<String>,
    /// Baseline variant compared against.
    #[arg(long)]
    baseline: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Directory for `report.md` and `sensitivity.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory the report bundle is written into.
    #[arg(long)]
    out_dir: PathBuf,
}

fn resolve_seed(flag: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(value) => value
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got {value:?}")),
        Err(_) => Ok(flag),
    }
}

fn parse_variants(list: &str) -> anyhow::Result<Vec<VariantId>> {
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| VariantId::new(s.trim()).map_err(Into::into))
        .collect()
}

fn cmd_schedule(args: ScheduleArgs) -> anyhow::Result<()> {
    let approach = Approach::parse(&args.approach)?;
    let config = ScheduleConfig::new(parse_variants(&args.variants)?, args.samples, args.pi)?;
    let schedule = generate_schedule(&config, approach)?;
    std::fs::write(&args.out, schedule_to_text(&schedule))?;
    let summary = schedule_summary(&schedule);
    println!(
        "{}: {} actions, {} setups, {} samples per variant, {} round(s) per setup -> {}",
        approach,
        schedule.actions().len(),
        summary.setup_count,
        schedule.n_samples(),
        summary.rounds_per_setup,
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.schedule)?;
    let schedule = schedule_from_text(&text, &args.schedule.display().to_string())?;

    let mut seed_used = None;
    let mut backend: Box<dyn MeasurementBackend> = match args.backend {
        BackendKind::Sim => {
            let params = match &args.params {
                Some(path) => load_params(path)?,
                None => DeviceParams::shipped_defaults(),
            };
            let seed = resolve_seed(args.seed)?;
            seed_used = Some(seed);
            Box::new(SimulatedDevice::new(params, seed)?)
        }
        BackendKind::Replay => {
            let path = args
                .corpus
                .as_ref()
                .context("--corpus is required for the replay backend")?;
            let corpora = read_corpora(path)?;
            let corpus = match &args.platform {
                Some(label) => corpora
                    .into_iter()
                    .find(|c| &c.platform_label == label)
                    .with_context(|| format!("no platform {label:?} in the corpus"))?,
                None if corpora.len() == 1 => corpora.into_iter().next().unwrap(),
                None => bail!("corpus holds several platforms; pick one with --platform"),
            };
            Box::new(ReplayBackend::new(corpus))
        }
        BackendKind::Exec => {
            let setup = args
                .setup_cmd
                .as_ref()
                .context("--setup-cmd is required for the exec backend")?;
            let run = args
                .run_cmd
                .as_ref()
                .context("--run-cmd is required for the exec backend")?;
            let pattern = args
                .parse_regex
                .as_ref()
                .context("--parse-regex is required for the exec backend")?;
            Box::new(ExternalCommandBackend::new(
                setup.clone(),
                run.clone(),
                pattern,
                Duration::from_secs_f64(args.timeout_s),
            )?)
        }
    };

    match execute_campaign(&schedule, backend.as_mut(), args.battery_floor, seed_used) {
        Ok(campaign) => {
            write_campaign(&campaign, &args.out)?;
            println!(
                "{} samples -> {}.csv",
                campaign.samples.len(),
                args.out.display()
            );
            Ok(())
        }
        Err(aborted) => {
            let ExecutionError { partial, cause } = *aborted;
            write_campaign(&partial, &args.out)?;
            eprintln!(
                "campaign aborted after {} samples (saved to {}.csv)",
                partial.samples.len(),
                args.out.display()
            );
            Err(cause.into())
        }
    }
}

fn cmd_spectrum(args: SpectrumArgs) -> anyhow::Result<()> {
    let campaign = read_campaign(&args.campaign)?;
    let variant = VariantId::new(args.variant.as_str())?;
    let samples = campaign.samples_of(&variant)?;
    let energies: Vec<f64> = samples.iter().map(|s| s.energy_j).collect();
    // Samples of one variant are spaced unevenly under interleaved
    // schedules; the mean spacing gives approximate periods in seconds.
    let spacing = match samples.as_slice() {
        [first, .., last] if last.timestamp_s > first.timestamp_s => {
            Some((last.timestamp_s - first.timestamp_s) / (samples.len() - 1) as f64)
        }
        _ => None,
    };
    let window = if args.hann {
        Window::Hann
    } else {
        Window::None
    };
    let spectrum = periodogram_windowed(&energies, spacing, window)?;
    std::fs::write(&args.out, spectrum.to_csv())?;
    if let Some(top) = dominant_periods(&spectrum, 1).first() {
        match top.period_seconds {
            Some(seconds) => println!(
                "dominant period: {:.1} samples (~{:.0} s), share {:.3}",
                top.period_samples, seconds, top.power_share
            ),
            None => println!(
                "dominant period: {:.1} samples, share {:.3}",
                top.period_samples, top.power_share
            ),
        }
    }
    println!("{} bins -> {}", spectrum.power.len(), args.out.display());
    Ok(())
}

fn cmd_specificity(args: SpecificityArgs) -> anyhow::Result<()> {
    let corpora = read_corpora(&args.corpus)?;
    anyhow::ensure!(!corpora.is_empty(), "corpus file holds no data");
    let approaches: Vec<Approach> = args
        .approaches
        .split(',')
        .filter(|s| !s.is_empty())
        .map(Approach::parse)
        .collect::<Result<_, _>>()?;

    let n_variants = args
        .pseudo_variants
        .unwrap_or_else(|| corpora[0].reboots.len());
    let mut aggregated: BTreeMap<Approach, CountMatrix> = BTreeMap::new();
    for &approach in &approaches {
        let mut matrices: Vec<SpecificityMatrix> = Vec::new();
        for corpus in &corpora {
            let total = corpus.total_readings();
            anyhow::ensure!(
                n_variants > 0 && total % n_variants == 0,
                "{} readings cannot be split into {n_variants} equal groups",
                total
            );
            let grouping = group_corpus(corpus, approach, n_variants, total / n_variants)?;
            matrices.push(specificity_matrix(&grouping, args.alpha)?);
        }
        aggregated.insert(approach, aggregate_specificity(&matrices)?);
    }

    for (approach, counts) in &aggregated {
        println!(
            "{approach}: {} false positives over {} corpus(es)",
            counts.total(),
            counts.sources
        );
    }
    let bundle = render_report(&ReportInputs {
        seed: None,
        alpha: args.alpha,
        specificity: aggregated,
        sensitivity: Vec::new(),
        spectrum: None,
    });
    bundle.write_to(&args.out)?;
    println!("report -> {}", args.out.join("report.md").display());
    Ok(())
}

fn cmd_sensitivity(args: SensitivityArgs) -> anyhow::Result<()> {
    let mut campaigns: BTreeMap<Approach, Campaign> = BTreeMap::new();
    for entry in &args.campaigns {
        let (approach, stem) = entry
            .split_once('=')
            .with_context(|| format!("expected <approach>=<stem>, got {entry:?}"))?;
        let approach = Approach::parse(approach)?;
        campaigns.insert(approach, read_campaign(Path::new(stem))?);
    }
    let baseline = VariantId::new(args.baseline.as_str())?;
    let rows = sensitivity_table(&campaigns, &baseline, args.alpha)?;
    for row in &rows {
        println!(
            "{}: median es {:.4}, es>=0.64 {}, p<={} {}",
            row.approach, row.median_es, row.count_es_ge_064, args.alpha, row.count_p_le_alpha
        );
    }
    let bundle = render_report(&ReportInputs {
        seed: None,
        alpha: args.alpha,
        specificity: BTreeMap::new(),
        sensitivity: rows,
        spectrum: None,
    });
    bundle.write_to(&args.out)?;
    println!("report -> {}", args.out.join("report.md").display());
    Ok(())
}

fn cmd_replicate(args: ReplicateArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed)?;
    let bundle = replicate(seed)?;
    bundle.write_to(&args.out_dir)?;
    println!(
        "seed {seed}: {} files -> {}",
        bundle.files.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Schedule(args) => cmd_schedule(args),
        Command::Run(args) => cmd_run(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Specificity(args) => cmd_specificity(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::Replicate(args) => cmd_replicate(args),
    };
    if let Err(error) = result {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}
