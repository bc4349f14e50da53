use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use csef::bench::io::{export_grid, export_trajectory, load_trajectory, write_records, ReportFormat};
use csef::bench::scenario::{run_scenario, Scenario};
use csef::bench::{
    run_bimanual_study, run_guidance_study, run_table1_suite, BimanualStudyConfig, GuidanceConfig, MetricsRecord,
    SuiteConfig,
};
use csef::execution::{simulate_impedance, ForceInput, ImpedanceParams};
use csef::grid::GridBounds;
use csef::trajectory::Space;
use csef::tsef::sample_tsef_grid;

#[derive(Parser)]
#[command(name = "csefplan", version, about = "Ergonomic field planning and benchmarks")]
struct Cli {
    /// Seed for every random draw; scenario files carry their own.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::JsonLines => ReportFormat::JsonLines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and report metrics per repetition.
    Plan {
        scenario: PathBuf,
        /// Write the first repetition's planned trajectory here.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Paired field-planner vs grid-baseline suite on the 2-DoF arm.
    BenchTable1 {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// Timed repeats per plan; 0 skips timing.
        #[arg(long, default_value_t = 5)]
        timing_repeats: usize,
    },
    /// Guided posture correction on the 4-DoF arm against a minimum-jerk baseline.
    StudyGuidance {
        #[arg(long, default_value_t = 3)]
        postures: usize,
    },
    /// Coupled two-arm carrying against independent minimum-jerk hand paths.
    StudyBimanual,
    /// Sample the task-space field of a scenario's arm to a grid file.
    Grid {
        scenario: PathBuf,
        /// Cells per axis; defaults to the scenario's setting.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Track a task-space trajectory file with the impedance model.
    Simulate {
        reference: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        mass: f64,
        #[arg(long, default_value_t = 300.0)]
        stiffness: f64,
        /// Damping per axis; critical when omitted.
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
}

/// Planning finished but did not succeed.
#[derive(Debug)]
struct PlanFailed;

impl std::fmt::Display for PlanFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("plan did not succeed")
    }
}

impl std::error::Error for PlanFailed {}

fn report_sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: Serialize>(cli: &Cli, records: &[T]) -> Result<()> {
    let mut sink = report_sink(cli.out.as_deref())?;
    write_records(records, cli.format.into(), &mut sink)?;
    sink.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PlanRow {
    scenario: String,
    repeat: usize,
    status: &'static str,
    failure: Option<&'static str>,
    samples: usize,
    #[serde(flatten)]
    metrics: MetricsRecord,
}

fn plan(cli: &Cli, path: &Path, trajectory: Option<&Path>) -> Result<()> {
    let scenario = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    let runs = run_scenario(&scenario)?;
    if let (Some(p), Some(first)) = (trajectory, runs.first()) {
        export_trajectory(&first.plan.trajectory, Some(scenario.chain.model()), p)?;
    }
    let rows: Vec<PlanRow> = runs
        .iter()
        .map(|r| PlanRow {
            scenario: scenario.name.clone(),
            repeat: r.repeat,
            status: r.plan.status.name(),
            failure: r.plan.failure.map(|f| f.name()),
            samples: r.plan.trajectory.len(),
            metrics: r.metrics.clone(),
        })
        .collect();
    emit(cli, &rows)?;
    if runs.iter().any(|r| !r.plan.succeeded()) {
        return Err(PlanFailed.into());
    }
    Ok(())
}

fn bench_table1(cli: &Cli, cases: usize, resolution: usize, timing_repeats: usize) -> Result<()> {
    let config = SuiteConfig { grid_resolution: resolution, timing_repeats, ..SuiteConfig::new(cli.seed, cases) };
    let (report, timing) = run_table1_suite(&config)?;
    emit(cli, &report.records)?;
    let s = &report.summary;
    eprintln!(
        "success: csef {}/{} tsef {}/{}; mean avg field: csef {:.4} tsef {:.4}",
        s.csef_successes, s.n_cases, s.tsef_successes, s.n_cases, s.csef_mean_avg_csef, s.tsef_mean_avg_csef
    );
    if let Some(t) = timing {
        eprintln!(
            "median plan time: csef {:.3e} s, tsef {:.3e} s (grid {:.3e} s + search {:.3e} s), ratio {:.1}",
            t.csef_median, t.tsef_median, t.grid_build, t.tsef_search_median, t.ratio
        );
    }
    Ok(())
}

fn study_guidance(cli: &Cli, postures: usize) -> Result<()> {
    let report = run_guidance_study(&GuidanceConfig::upper_limb(cli.seed, postures))?;
    emit(cli, &report.postures)?;
    eprintln!(
        "mean avg field: csef {:.4} ptp {:.4} ({:.2}% lower)",
        report.mean_csef_avg, report.mean_ptp_avg, report.pooled_csef_vs_ptp_pct
    );
    Ok(())
}

fn study_bimanual(cli: &Cli) -> Result<()> {
    let config = BimanualStudyConfig::mirrored_planar(cli.seed);
    let report = run_bimanual_study(&config)?;
    emit(cli, &report.runs)?;
    if report.runs.iter().any(|r| !r.success) {
        return Err(PlanFailed.into());
    }
    Ok(())
}

fn grid(cli: &Cli, path: &Path, resolution: Option<usize>) -> Result<()> {
    let Some(out) = cli.out.as_deref() else { bail!("grid needs --out") };
    let scenario = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    let chain = &scenario.chain;
    let n = resolution.unwrap_or(scenario.grid_resolution);
    let bounds = GridBounds::around(chain.base().as_slice(), chain.reach())?;
    let grid = sample_tsef_grid(&scenario.spec, chain, bounds, &vec![n; chain.task_dim()])?;
    export_grid(&grid, out)?;
    Ok(())
}

fn simulate(cli: &Cli, reference: &Path, mass: f64, stiffness: f64, damping: Option<f64>, dt: f64) -> Result<()> {
    let Some(out) = cli.out.as_deref() else { bail!("simulate needs --out") };
    let (traj, chain) = load_trajectory(reference).with_context(|| format!("loading {}", reference.display()))?;
    if traj.space() != Space::Task {
        bail!("{}: the reference must be a task-space trajectory", reference.display());
    }
    let n = traj.dim();
    let d = damping.unwrap_or(2.0 * (stiffness * mass).sqrt());
    let params = ImpedanceParams { mass: vec![mass; n], stiffness: vec![stiffness; n], damping: vec![d; n], dt };
    let run = simulate_impedance(&params, traj.first(), &traj, &ForceInput::Zero, None)?;
    export_trajectory(&run.trajectory, chain, out)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Plan { scenario, trajectory } => plan(cli, scenario, trajectory.as_deref()),
        Command::BenchTable1 { cases, resolution, timing_repeats } => {
            bench_table1(cli, *cases, *resolution, *timing_repeats)
        }
        Command::StudyGuidance { postures } => study_guidance(cli, *postures),
        Command::StudyBimanual => study_bimanual(cli),
        Command::Grid { scenario, resolution } => grid(cli, scenario, *resolution),
        Command::Simulate { reference, mass, stiffness, damping, dt } => {
            simulate(cli, reference, *mass, *stiffness, *damping, *dt)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<PlanFailed>() => {
            eprintln!("csefplan: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("csefplan: {e:#}");
            ExitCode::from(2)
        }
    }
}
