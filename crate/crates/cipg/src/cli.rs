//! Command-line front end.

use std::path::{Path, PathBuf};

use cipg_core::cascade::DivergencePolicy;
use cipg_core::metrics;
use cipg_core::sim::{self, NoiseSpec, ScenarioSpec, TrajectoryKind};
use cipg_core::EstimatorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adapter::{self, AdapterSpec};
use crate::config::{AlignChoice, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, DatasetPaths};
use crate::pipeline::{self, Metadata};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "cipg", version, about = "Cascade IPG observer toolkit for DVL/IMU/AHRS navigation")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Simulator seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Re-run a recorded estimate and verify it reproduces bit for bit.
    #[arg(long, global = true, value_name = "FILE")]
    pub from_metadata: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (imu, dvl, ahrs, gt, gps CSVs).
    Simulate(ScenarioArgs),
    /// Run one estimator and write trajectory.csv and metadata.toml.
    Estimate(EstimateArgs),
    /// Score a trajectory against ground truth or GPS.
    Evaluate(EvaluateArgs),
    /// Run several estimators on the same input and tabulate the metrics.
    Compare(CompareArgs),
    /// Convert third-party logs into canonical CSVs.
    Adapt(AdaptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    Stationary,
    Line,
    Circle,
    Lawnmower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseProfile {
    None,
    Bluerov2,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ScenarioArgs {
    /// Built-in trajectory; replaces any configured input.
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioKind>,
    /// Sensor noise profile.
    #[arg(long, value_enum)]
    pub noise: Option<NoiseProfile>,
    /// Seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// m/s.
    #[arg(long)]
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct InputArgs {
    /// Directory with canonical CSVs (imu.csv, dvl.csv, ahrs.csv, optional gt.csv or gps.csv).
    #[arg(long, value_name = "DIR", conflicts_with = "scenario")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Args, Default)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// cipg, ekf or inekf.
    #[arg(long, value_parser = parse_kind)]
    pub estimator: Option<EstimatorKind>,
    /// Dead-reckon through observer divergence instead of aborting.
    #[arg(long)]
    pub fallback_deadreckon: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Trajectory CSV written by `estimate`.
    #[arg(long, value_name = "FILE")]
    pub trajectory: PathBuf,
    /// Ground-truth or GPS CSV, detected by header.
    #[arg(long, value_name = "FILE")]
    pub reference: PathBuf,
    /// Yaw and translation alignment before scoring.
    #[arg(long, value_enum)]
    pub align: Option<AlignFlag>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated estimator list.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Comma-separated evaluation horizons in seconds.
    #[arg(long, value_delimiter = ',')]
    pub periods: Option<Vec<f64>>,
    /// Yaw and translation alignment before scoring.
    #[arg(long, value_enum)]
    pub align: Option<AlignFlag>,
    /// Dead-reckon through observer divergence instead of aborting.
    #[arg(long)]
    pub fallback_deadreckon: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptArgs {
    /// Adapter spec TOML.
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Directory holding the source files; defaults to the spec's directory.
    #[arg(long, value_name = "DIR")]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignFlag {
    Auto,
    On,
    Off,
}

impl From<AlignFlag> for AlignChoice {
    fn from(a: AlignFlag) -> Self {
        match a {
            AlignFlag::Auto => AlignChoice::Auto,
            AlignFlag::On => AlignChoice::On,
            AlignFlag::Off => AlignChoice::Off,
        }
    }
}

fn parse_kind(s: &str) -> std::result::Result<EstimatorKind, String> {
    EstimatorKind::parse(s).ok_or_else(|| format!("unknown estimator {s:?} (expected ekf, inekf or cipg)"))
}

fn scenario_for(kind: ScenarioKind, base: &ScenarioSpec) -> ScenarioSpec {
    let trajectory = match kind {
        ScenarioKind::Stationary => TrajectoryKind::Stationary,
        ScenarioKind::Line => TrajectoryKind::Line,
        ScenarioKind::Circle => ScenarioSpec::circle(10.0, base.speed, base.duration).trajectory,
        ScenarioKind::Lawnmower => ScenarioSpec::default().trajectory,
    };
    ScenarioSpec {
        trajectory,
        ..base.clone()
    }
}

impl Cli {
    fn base_config(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    fn finish(&self, mut c: RunConfig) -> RunConfig {
        if let Some(seed) = self.seed {
            c.set_seed(seed);
        }
        if let Some(out) = &self.out {
            c.out = out.clone();
        }
        c
    }
}

fn apply_scenario(c: &mut RunConfig, args: &ScenarioArgs, force: bool) {
    let touched = args.scenario.is_some() || args.noise.is_some() || args.duration.is_some() || args.speed.is_some();
    if !(touched || force && c.input.scenario.is_none()) {
        return;
    }
    if args.scenario.is_some() || c.input.scenario.is_none() {
        c.input.dataset = None;
    }
    let mut spec = c.input.scenario.clone().unwrap_or_default();
    if let Some(d) = args.duration {
        spec.duration = d;
    }
    if let Some(v) = args.speed {
        spec.speed = v;
    }
    if let Some(kind) = args.scenario {
        spec = scenario_for(kind, &spec);
    }
    match args.noise {
        Some(NoiseProfile::None) => spec.noise = NoiseSpec::none(),
        Some(NoiseProfile::Bluerov2) => spec.noise = NoiseSpec::bluerov2(),
        None => {}
    }
    c.input.scenario = Some(spec);
}

fn apply_input(c: &mut RunConfig, args: &InputArgs) {
    if let Some(dir) = &args.data {
        c.input.dataset = Some(DatasetPaths::from_dir(dir));
        c.input.scenario = None;
    }
    apply_scenario(c, &args.scenario, false);
}

fn print_config(c: &RunConfig) -> Result<()> {
    print!("{}", c.to_toml()?);
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(meta) = &cli.from_metadata {
        if !matches!(cli.command, None | Some(Command::Estimate(_))) {
            return Err(Error::Usage("--from-metadata replays an estimate; use it alone or with `estimate`".into()));
        }
        return replay(cli, meta);
    }
    let Some(command) = &cli.command else {
        return Err(Error::Usage("no command given; see `cipg --help`".into()));
    };
    match command {
        Command::Simulate(args) => simulate(cli, args),
        Command::Estimate(args) => estimate(cli, args),
        Command::Evaluate(args) => evaluate(cli, args),
        Command::Compare(args) => compare(cli, args),
        Command::Adapt(args) => adapt(cli, args),
    }
}

fn simulate(cli: &Cli, args: &ScenarioArgs) -> Result<()> {
    let mut c = cli.base_config()?;
    apply_scenario(&mut c, args, true);
    let c = cli.finish(c);
    if cli.print_config {
        return print_config(&c);
    }
    let spec = c
        .input
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a scenario, not a dataset".into()))?;
    spec.validate()?;
    let run = sim::generate(spec)?;
    let out = &c.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let s = &run.noisy;
    io::write_imu(&out.join(io::IMU_FILE), &s.imu)?;
    io::write_dvl(&out.join(io::DVL_FILE), &s.dvl)?;
    io::write_ahrs(&out.join(io::AHRS_FILE), &s.ahrs)?;
    io::write_ground_truth(&out.join(io::GT_FILE), &run.ground_truth())?;
    io::write_gps(&out.join(io::GPS_FILE), &s.gps)?;
    let scenario_path = out.join("scenario.toml");
    let text = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&scenario_path, text).map_err(|e| Error::io(&scenario_path, e))?;
    println!("{}", spec.summary());
    println!("wrote {} IMU, {} DVL, {} AHRS, {} GPS samples to {}", s.imu.len(), s.dvl.len(), s.ahrs.len(), s.gps.len(), out.display());
    Ok(())
}

fn estimate(cli: &Cli, args: &EstimateArgs) -> Result<()> {
    let mut c = cli.base_config()?;
    apply_input(&mut c, &args.input);
    if let Some(kind) = args.estimator {
        c.estimator = kind;
    }
    if args.fallback_deadreckon {
        c.cascade.on_divergence = DivergencePolicy::DeadReckon;
    }
    let c = cli.finish(c);
    if cli.print_config {
        return print_config(&c);
    }
    let kind = c.estimator;
    let result = pipeline::estimate(&c, kind)?;
    let m = &result.metadata;
    println!(
        "{kind}: {} epochs ({} ok, {} warmup, {} fallback) in {:.3} s -> {}",
        m.n_epochs,
        m.flags.ok,
        m.flags.warmup,
        m.flags.fallback,
        m.runtime_s,
        c.out.join(pipeline::TRAJECTORY_FILE).display()
    );
    if let Some(r) = &result.report {
        println!("total_error = {:.6}, ate_rmse = {:.6} m", r.total_error, r.ate_rmse);
    }
    Ok(())
}

fn replay(cli: &Cli, meta_path: &Path) -> Result<()> {
    let metadata = Metadata::load(meta_path)?;
    let out = cli.out.clone().unwrap_or_else(|| {
        meta_path.parent().unwrap_or(Path::new(".")).join("replay")
    });
    if cli.print_config {
        return print_config(&metadata.config);
    }
    let result = pipeline::replay(&metadata, &out)?;
    println!(
        "replayed {} epochs; epoch and trajectory hashes match ({})",
        result.metadata.n_epochs, result.metadata.trajectory_sha256
    );
    Ok(())
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let mut c = cli.finish(cli.base_config()?);
    if let Some(a) = args.align {
        c.eval.align = a.into();
    }
    if cli.print_config {
        return print_config(&c);
    }
    let rows = io::load_trajectory(&args.trajectory)?;
    let reference = io::load_reference(&args.reference)?;
    // a trajectory file carries no provenance, so auto means aligned
    let opts = c.eval.options(false);
    let report = pipeline::evaluate(&metrics::poses(&rows), &reference, &opts, None)?;
    let out = &c.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let text = report::render_report(&report);
    let report_path = out.join("report.txt");
    std::fs::write(&report_path, &text).map_err(|e| Error::io(&report_path, e))?;
    io::write_errors(&out.join("errors.csv"), &report.rows)?;
    print!("{text}");
    Ok(())
}

fn compare(cli: &Cli, args: &CompareArgs) -> Result<()> {
    let mut c = cli.base_config()?;
    apply_input(&mut c, &args.input);
    if let Some(e) = &args.estimators {
        c.estimators = e.clone();
    }
    if let Some(p) = &args.periods {
        c.periods = p.clone();
    }
    if let Some(a) = args.align {
        c.eval.align = a.into();
    }
    if args.fallback_deadreckon {
        c.cascade.on_divergence = DivergencePolicy::DeadReckon;
    }
    let c = cli.finish(c);
    if cli.print_config {
        return print_config(&c);
    }
    let cmp = pipeline::compare(&c)?;
    let out = &c.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (kind, outcome) in &cmp.outcomes {
        if let Ok(o) = outcome {
            io::write_trajectory(&out.join(format!("trajectory_{}.csv", kind.name())), &o.rows)?;
        }
    }
    let table = report::render_comparison(&cmp);
    let table_path = out.join("compare.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    report::write_comparison_csv(&out.join("compare.csv"), &cmp)?;
    print!("{table}");
    let failures = cmp.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::PartialFailure(format!("{} estimator(s) failed: {}", failures.len(), failures.join("; "))))
    }
}

fn adapt(cli: &Cli, args: &AdaptArgs) -> Result<()> {
    let spec = AdapterSpec::load(&args.spec)?;
    let source = args
        .source
        .clone()
        .unwrap_or_else(|| args.spec.parent().map(Path::to_path_buf).unwrap_or_default());
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    if cli.print_config {
        print!("{}", toml::to_string(&spec).map_err(|e| Error::Config(e.to_string()))?);
        return Ok(());
    }
    let log = adapter::adapt(&spec, &source, &out)?;
    for s in &log.streams {
        println!("{}: {} rows written ({} dropped)", s.stream, s.rows_written, s.rows_dropped);
    }
    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
