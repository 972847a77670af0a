use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use onsink_core::algorithms::online::SnapshotMeta;
use onsink_core::harness::config::Algorithm;
use onsink_core::harness::run::{
    compare, execute, oracle_check, out_dir, warmup_study, write_outputs, write_potentials, OutputFormat, RunStatus,
};
use onsink_core::{Error, ExperimentConfig, Snapshot};

const EXIT_CONFIG: u8 = 2;
const EXIT_TARGET_MISSED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "onsink", version, about = "Online Sinkhorn convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write per-seed traces, an aggregate and a summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also save each seed's final potentials as snapshots.
        #[arg(long)]
        save_potentials: bool,
    },
    /// Run several configs on the same problem and report speedups at a target error.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: f64,
    },
    /// Cold versus warmed batch Sinkhorn on the config's finite problem.
    Warmup {
        #[command(flatten)]
        common: Common,
        /// Override the config's warmup target.
        #[arg(long)]
        target: Option<f64>,
    },
    /// Closed-form Gaussian potentials against a Sinkhorn solve.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the contents of a snapshot file or an online-state directory.
    InspectSnapshot { path: PathBuf },
}

#[derive(Args, Debug)]
struct Common {
    /// Config file; repeat for `compare`.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget_mults: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    metric_every: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Svg => OutputFormat::Svg,
        }
    }
}

/// Marks failures that exit with the config-error status.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn load(path: &Path, common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut config =
        ExperimentConfig::load(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(b) = common.budget_mults {
        config.budget.max_core_mults = Some(b);
    }
    if let Some(dir) = &common.out {
        config.out_dir = dir.clone();
        config.base_dir = PathBuf::new();
    }
    if let Some(k) = common.metric_every {
        config.metrics.every = k;
        config.warmup.metric_every = k;
    }
    config
        .validate()
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn single(common: &Common) -> anyhow::Result<ExperimentConfig> {
    match common.config.as_slice() {
        [path] => load(path, common),
        _ => Err(ConfigError("expected exactly one --config".into()).into()),
    }
}

fn cmd_run(common: &Common, save_potentials: bool) -> anyhow::Result<ExitCode> {
    let config = single(common)?;
    let output = execute(&config)?;
    let dir = out_dir(&config);
    let mut written = write_outputs(&output, &dir, common.format.into())?;
    if save_potentials {
        written.extend(write_potentials(&output, &dir)?);
    }
    for s in output.summary().seeds {
        println!(
            "seed {:>3}  rows {:>5}  core {:>12}  metric {:>12}  error {}  w_hat {}",
            s.seed,
            s.rows,
            s.core_mults,
            s.metric_mults,
            s.final_error.map_or("-".into(), |e| format!("{e:.4e}")),
            s.w_hat.map_or("-".into(), |w| format!("{w:.6}")),
        );
    }
    println!("status {:?}; wrote {} files to {}", output.status, written.len(), dir.display());
    if output.status == RunStatus::TargetNotReached {
        log::warn!("some seeds missed the warmup target");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(common: &Common, target: f64) -> anyhow::Result<ExitCode> {
    let configs = common
        .config
        .iter()
        .map(|p| load(p, common))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (report, outputs) = compare(&configs, target)?;
    if let Some(dir) = &common.out {
        for (config, output) in configs.iter().zip(&outputs) {
            write_outputs(output, &dir.join(&config.name), common.format.into())?;
        }
        let path = dir.join("comparison.csv");
        std::fs::write(&path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.to_table());
    Ok(if report.all_reached() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TARGET_MISSED)
    })
}

fn cmd_warmup(common: &Common, target: Option<f64>) -> anyhow::Result<ExitCode> {
    let mut config = single(common)?;
    if config.algorithm != Algorithm::Warmup {
        log::info!("config algorithm is {:?}; running the warmup study anyway", config.algorithm);
    }
    if let Some(t) = target {
        config.warmup.target = t;
        config.validate().map_err(|e| ConfigError(e.to_string()))?;
    }
    let study = warmup_study(&config)?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("warmup.json");
        std::fs::write(&path, serde_json::to_string_pretty(&study)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", study.to_table());
    Ok(if study.all_reached() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TARGET_MISSED)
    })
}

fn cmd_oracle_check(path: &Path) -> anyhow::Result<ExitCode> {
    let config = ExperimentConfig::load(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let check = oracle_check(&config)?;
    println!("{}", serde_json::to_string_pretty(&check)?);
    Ok(ExitCode::SUCCESS)
}

fn describe(snap: &Snapshot) -> String {
    let range = if snap.values.is_empty() {
        String::new()
    } else {
        let lo = snap.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = snap.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!(", values in [{lo:.6}, {hi:.6}]")
    };
    format!(
        "{:?}: {} points in {}D, cost {} at epsilon {}{range}",
        snap.payload,
        snap.points.len(),
        snap.points.dim(),
        snap.cost.kind().name(),
        snap.cost.epsilon()
    )
}

fn cmd_inspect(path: &Path) -> anyhow::Result<ExitCode> {
    if path.is_dir() {
        let meta_path = path.join("state.json");
        let text =
            std::fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?;
        let meta: SnapshotMeta = serde_json::from_str(&text)?;
        println!("state: t = {}, n_t = {}, seed = {}", meta.t, meta.n_seen, meta.seed);
        println!("counters: core {}, metric {}", meta.core_mults, meta.metric_mults);
        if let Some(s) = meta.schedule {
            println!("schedule: a = {}, b = {}, B = {}, r = {}, {:?}", s.a, s.b, s.base_batch, s.r, s.variant);
        }
        for name in ["f", "g", "seen_x", "seen_y"] {
            let file = path.join(format!("{name}.snap"));
            println!("{name}: {}", describe(&Snapshot::load(&file)?));
        }
    } else {
        println!("{}", describe(&Snapshot::load(path)?));
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.downcast_ref::<ConfigError>().is_some()
        || matches!(err.downcast_ref::<Error>(), Some(Error::Config(_)));
    if config {
        EXIT_CONFIG
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, save_potentials } => cmd_run(common, *save_potentials),
        Command::Compare { common, target } => cmd_compare(common, *target),
        Command::Warmup { common, target } => cmd_warmup(common, *target),
        Command::OracleCheck { config } => cmd_oracle_check(config),
        Command::InspectSnapshot { path } => cmd_inspect(path),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
