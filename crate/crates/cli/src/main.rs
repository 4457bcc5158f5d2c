mod config;
mod experiments;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::Config;
use experiments::{Cell, Outcome, EXPERIMENTS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] phonon_nm::Error),
    #[error("output error: {0}")]
    Output(String),
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_numerical() || matches!(e, phonon_nm::Error::Resolution(_)) => 3,
            CliError::ChecksFailed(_) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Lib(e) if e.is_numerical() || matches!(e, phonon_nm::Error::Resolution(_)) => "numerical",
            CliError::Lib(_) => "validation",
            CliError::Output(_) => "output",
            CliError::ChecksFailed(_) => "checks_failed",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "phonon-nm", version, about = "Non-Markovian dynamics of SiV- centers coupled to phonons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment named in [experiment] name
    Run(RunArgs),
    /// Trace distance to the steady state over time
    TraceDistance(RunArgs),
    /// N_D over a longitudinal field scan for several couplings
    NdBz(RunArgs),
    /// BLP measure over the (B_x, B_z) plane
    BlpMap(RunArgs),
    /// Structured-bath BLP measure against temperature
    BlpTemp(RunArgs),
    /// Mean-field N_D against coherent amplitude
    MeanfieldScaling(RunArgs),
    /// omega_ph / (E_n - E_m) over the (B_x, B_z) plane
    SpectrumMap(RunArgs),
    /// Time-dependent structured-bath rates
    RatesDump(RunArgs),
    /// Fast invariant suite
    Validate(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// section.key=value, applied after the file is read
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Command {
    fn split(&self) -> (Option<&'static str>, &RunArgs) {
        match self {
            Command::Run(a) => (None, a),
            Command::TraceDistance(a) => (Some("trace-distance"), a),
            Command::NdBz(a) => (Some("nd-bz"), a),
            Command::BlpMap(a) => (Some("blp-map"), a),
            Command::BlpTemp(a) => (Some("blp-temp"), a),
            Command::MeanfieldScaling(a) => (Some("meanfield-scaling"), a),
            Command::SpectrumMap(a) => (Some("spectrum-map"), a),
            Command::RatesDump(a) => (Some("rates-dump"), a),
            Command::Validate(a) => (Some("validate"), a),
        }
    }
}

/// Shortest round-trip representation; exponent form for very small or
/// large magnitudes.
fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_csv(path: &Path, out: &Outcome) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(err)?;
    w.write_record(&out.columns).map_err(err)?;
    for row in &out.rows {
        w.write_record(row.iter().map(|c| match c {
            Cell::Num(v) => format_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }))
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn run(command: &Command) -> Result<(), CliError> {
    let (fixed, args) = command.split();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut cfg = Config::load(&args.config)?;
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    let named: Option<String> = cfg.optional("experiment", "name")?;
    let experiment = match (fixed, named.as_deref()) {
        (Some(f), Some(n)) if f != n => {
            return Err(CliError::Config(format!("config declares experiment '{n}' but subcommand '{f}' was invoked")))
        }
        (Some(f), _) => f.to_string(),
        (None, Some(n)) => n.to_string(),
        (None, None) => return Err(CliError::Config(format!("missing experiment.name (one of {})", EXPERIMENTS.join(", ")))),
    };
    let plan = experiments::plan(&mut cfg, &experiment, args.seed)?;
    cfg.finish()?;
    if args.seed.is_some() && !plan.uses_seed() {
        log::warn!("--seed has no effect on '{experiment}'");
    }
    cfg.record("experiment", "name", &experiment);
    let resolved = cfg.resolved_ini();
    let hash = phonon_nm::sweep::config_hash(&resolved)?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Output(format!("{}: {e}", args.out.display())))?;
    let stem = args.config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
    let checkpoint = plan.checkpointed().then(|| experiments::checkpoint_path(&args.out, &stem, &hash));

    let start = Instant::now();
    let outcome = experiments::execute(&plan, checkpoint.as_deref())?;
    let wall = start.elapsed().as_secs_f64();

    let csv_path = args.out.join(format!("{stem}.csv"));
    write_csv(&csv_path, &outcome)?;
    let meta = json!({
        "experiment": experiment,
        "config_path": args.config.display().to_string(),
        "resolved_config": resolved,
        "config_hash": hash,
        "seed": if plan.uses_seed() { json!(args.seed.or_else(|| seed_of(&resolved))) } else { json!(null) },
        "threads": rayon::current_num_threads(),
        "versions": {"phonon-nm": env!("CARGO_PKG_VERSION")},
        "wall_time_s": wall,
        "csv": csv_path.file_name().map(|s| s.to_string_lossy().to_string()),
        "columns": outcome.columns,
        "rows": outcome.rows.len(),
        "checkpoint": checkpoint.as_ref().map(|p| p.display().to_string()),
        "convergence_flags": outcome.flags,
        "results": outcome.summary,
    });
    let json_path = args.out.join(format!("{stem}.json"));
    let mut f = File::create(&json_path).map_err(|e| CliError::Output(format!("{}: {e}", json_path.display())))?;
    serde_json::to_writer_pretty(&mut f, &meta).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(f).map_err(|e| CliError::Output(e.to_string()))?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    match outcome.failure {
        Some(msg) => Err(CliError::ChecksFailed(msg)),
        None => Ok(()),
    }
}

fn seed_of(resolved: &str) -> Option<u64> {
    let mut c = Config::parse(resolved).ok()?;
    c.optional("optimizer", "seed").ok().flatten()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let body = json!({"error": {"kind": "usage", "message": e.to_string().trim(), "exit_code": 2}});
            eprintln!("{body}");
            return ExitCode::from(2);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({"error": {"kind": e.kind(), "message": e.to_string(), "exit_code": code}}));
            ExitCode::from(code)
        }
    }
}
