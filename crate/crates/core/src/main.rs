use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use perflab::conductor::config::{BenchType, ExperimentConfig, LauncherKind, Profile};
use perflab::conductor::launch::{run_instance_job, LISTENING_PREFIX};
use perflab::conductor::{self, render, ExperimentResult};
use perflab::faults::{IssueConfig, IssueKind};
use perflab::service::dataset::DatasetConfig;
use perflab::service::http_server::serve;
use perflab::service::BookingService;
use perflab::stats::matrix::DetectionMatrix;

#[derive(Parser)]
#[command(name = "perflab", version, about = "Performance-regression detection laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the booking service with an optional injected issue.
    Serve(ServeArgs),
    /// Run one microbenchmark experiment (RMIT).
    Micro(ExperimentArgs),
    /// Run one application-benchmark experiment (duet).
    App(ExperimentArgs),
    /// Run experiments over a range of severities and print detection tables.
    Sweep(SweepArgs),
    /// Re-run the analysis on persisted raw data.
    Analyze {
        /// Experiment directory containing manifest.json.
        dir: PathBuf,
    },
    /// Render detection tables and RCIW summaries from a results tree.
    Report {
        /// Root directory searched recursively for experiment results.
        dir: PathBuf,
    },
    #[command(hide = true)]
    MicroInstance {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, default_value_t = 100)]
    airports: usize,
    #[arg(long, default_value_t = 1000)]
    flights: usize,
    #[arg(long, default_value_t = 180)]
    seats: usize,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, env = "DATASET_SEED", default_value_t = 1)]
    dataset_seed: u64,
}

impl DatasetArgs {
    fn config(&self) -> DatasetConfig {
        DatasetConfig {
            airport_count: self.airports,
            flight_count: self.flights,
            seats_per_flight: self.seats,
            user_count: self.users,
            rng_seed: self.dataset_seed,
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    /// 0 picks a free port.
    #[arg(long, env = "PERFLAB_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "ISSUE_KIND", default_value = "none")]
    issue: IssueKind,
    #[arg(long, env = "ISSUE_SEVERITY", default_value_t = 0)]
    severity: u32,
    #[command(flatten)]
    dataset: DatasetArgs,
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long, env = "ISSUE_KIND")]
    issue: IssueKind,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[arg(long, value_enum)]
    launcher: Option<LauncherKind>,
    #[arg(long, default_value = "results")]
    output_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instance_runs: Option<u32>,
    #[arg(long)]
    suite_runs: Option<u32>,
    #[arg(long)]
    iterations: Option<u32>,
    /// Seconds per timed microbenchmark iteration.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    s1_vus: Option<u32>,
    #[arg(long)]
    s1_iterations: Option<u32>,
    #[arg(long)]
    s2_vus: Option<u32>,
    #[arg(long)]
    s2_iterations: Option<u32>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    cooldown: Option<f64>,
    #[arg(long)]
    bootstrap_iterations: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
}

impl CommonArgs {
    fn config(&self, severity: u32, bench_type: BenchType) -> ExperimentConfig {
        let mut c = ExperimentConfig::profile(self.profile, self.issue, severity, bench_type);
        c.output_dir = self.output_dir.clone();
        if let Some(l) = self.launcher {
            c.launcher = l;
        }
        if let Some(s) = self.seed {
            c.rng_seed = s;
            c.workload.rng_seed = s;
        }
        let set = |dst: &mut u32, v: Option<u32>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.rmit.instance_runs, self.instance_runs);
        set(&mut c.rmit.suite_runs, self.suite_runs);
        set(&mut c.rmit.iterations, self.iterations);
        set(&mut c.workload.s1_vus, self.s1_vus);
        set(&mut c.workload.s1_iterations_per_vu, self.s1_iterations);
        set(&mut c.workload.s2_vus, self.s2_vus);
        set(&mut c.workload.s2_iterations_per_vu, self.s2_iterations);
        if let Some(b) = self.budget {
            c.rmit.budget_seconds = b;
        }
        if let Some(w) = self.warmup {
            c.trim.warmup_s = w;
        }
        if let Some(w) = self.cooldown {
            c.trim.cooldown_s = w;
        }
        if let Some(b) = self.bootstrap_iterations {
            c.stats.bootstrap_iterations = b;
        }
        if let Some(l) = self.confidence {
            c.stats.level = l;
        }
        c
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, env = "ISSUE_SEVERITY")]
    severity: u32,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Micro,
    App,
    Both,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = SweepKind::Both)]
    bench_type: SweepKind,
    /// Comma-separated severities; defaults to 0 and powers of two up to 2048.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Independent repetitions of the whole sweep, each in its own directory.
    #[arg(long, default_value_t = 1)]
    repeat: u32,
}

fn print_result(result: &ExperimentResult) {
    println!("# {} ({})", result.config.name(), if result.partial { "partial" } else { "complete" });
    for r in &result.reports {
        println!("{}", serde_json::to_string(r).expect("report serializes"));
    }
    for t in &result.missing_targets {
        println!("{}", serde_json::json!({ "target": t, "class": "absent" }));
    }
    if let Some(f) = &result.failures.fatal {
        eprintln!("error: {f}");
    }
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let issue = IssueConfig::new(args.issue, args.severity);
    let service = Arc::new(BookingService::from_dataset(&args.dataset.config(), issue)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", args.port)).await?;
        let addr = listener.local_addr()?;
        tracing::info!(%addr, %issue, "serving");
        {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{LISTENING_PREFIX}{addr}")?;
            out.flush()?;
        }
        serve(service, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn run_single(args: ExperimentArgs, bench_type: BenchType) -> Result<bool> {
    let cfg = args.common.config(args.severity, bench_type);
    let result = conductor::run_experiment(&cfg)?;
    print_result(&result);
    Ok(result.is_complete())
}

fn run_sweep(args: SweepArgs) -> Result<bool> {
    let levels = args.levels.clone().unwrap_or_else(conductor::default_levels);
    let kinds: &[BenchType] = match args.bench_type {
        SweepKind::Micro => &[BenchType::Micro],
        SweepKind::App => &[BenchType::App],
        SweepKind::Both => &[BenchType::Micro, BenchType::App],
    };
    let mut ok = true;
    for rep in 1..=args.repeat.max(1) {
        let mut common = args.common.clone();
        if args.repeat > 1 {
            common.output_dir = common.output_dir.join(format!("rep-{rep}"));
            common.seed = Some(common.seed.unwrap_or(1) + u64::from(rep) - 1);
        }
        let mut matrix = DetectionMatrix::new();
        for &bt in kinds {
            let base = common.config(levels[0], bt);
            let out = conductor::run_severity_sweep(&base, &levels)?;
            ok &= out.complete();
            matrix.merge(out.matrix)?;
        }
        std::fs::create_dir_all(&common.output_dir)?;
        let path = common.output_dir.join(format!("matrix-{}.json", common.issue));
        std::fs::write(&path, serde_json::to_vec_pretty(&matrix)?)?;
        print!("{}", render::render_detection_table(&matrix, common.issue));
    }
    Ok(ok)
}

fn run_analyze(dir: &Path) -> Result<bool> {
    let loaded = conductor::load_results_checked(dir)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let Some(result) = conductor::reanalyze(&loaded.result) else {
        bail!("{} holds no raw data", dir.display());
    };
    conductor::persist_results(&result, dir)?;
    print_result(&result);
    Ok(result.is_complete())
}

fn find_results(dir: &Path, out: &mut Vec<ExperimentResult>) -> Result<()> {
    if dir.join("manifest.json").is_file() {
        let loaded = conductor::load_results_checked(dir).with_context(|| dir.display().to_string())?;
        for w in loaded.warnings {
            eprintln!("warning: {w}");
        }
        out.push(loaded.result);
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        find_results(&e, out)?;
    }
    Ok(())
}

fn run_report(dir: &Path) -> Result<bool> {
    let mut results = Vec::new();
    find_results(dir, &mut results)?;
    if results.is_empty() {
        bail!("no experiment results under {}", dir.display());
    }
    let mut matrix = DetectionMatrix::new();
    for r in &results {
        for rep in &r.reports {
            if let Err(e) = matrix.insert_report(r.config.issue, r.config.severity, rep) {
                eprintln!("warning: {e} (repeated experiments are reported once)");
            }
        }
        for t in &r.missing_targets {
            let _ = matrix.mark_absent(r.config.issue, r.config.severity, t);
        }
    }
    for issue in matrix.issues() {
        print!("{}", render::render_detection_table(&matrix, issue));
        println!();
    }
    println!("RCIW per target");
    let summary = render::summarize_rciw(results.iter().flat_map(|r| r.rciw.iter()));
    print!("{}", render::render_rciw_summary(&summary));
    std::fs::write(dir.join("rciw_summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(results.iter().all(ExperimentResult::is_complete))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Serve(a) => run_serve(a).map(|_| true),
        Command::Micro(a) => run_single(a, BenchType::Micro),
        Command::App(a) => run_single(a, BenchType::App),
        Command::Sweep(a) => run_sweep(a),
        Command::Analyze { dir } => run_analyze(&dir),
        Command::Report { dir } => run_report(&dir),
        Command::MicroInstance { job, out } => run_instance_job(&job, &out).map(|_| true).map_err(Into::into),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
