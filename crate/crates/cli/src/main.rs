use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

mod commands;
mod config;
mod output;

use output::{Failure, Output};

/// Experiments on self-intersection local times of random walks.
#[derive(Debug, Parser)]
#[command(name = "siltlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON parameter file for the subcommand (a run manifest also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "SILTLAB_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// G(0,0) on growing tori with killing rate a/alpha^2.
    GreenScaling,
    /// On-diagonal heat kernel decay.
    NashCheck,
    /// Discrete constrained energy rho_1.
    Rho1,
    /// Dual quadratic-form supremum rho_2.
    Rho2,
    /// Continuum energy rho(a).
    RhoContinuum,
    /// The rate constant chi.
    Chi,
    /// Gagliardo-Nirenberg constant by two routes.
    GnConstant,
    /// Interpolation identity and truncation bound on random lattice functions.
    InterpCheck,
    /// Scaled rho_1 along a refinement schedule.
    ConvergenceStudy,
    /// Minimises a - rho(a) and compares with -chi.
    OptimizeA,
    /// Monte Carlo check of the isomorphism identity.
    EisenbaumCheck,
    /// Gaussian tail probabilities against the analytic bounds.
    TailBounds,
    /// Direct Monte Carlo for the SILT tail.
    McTail,
    /// Fits the decay rate of an mc-tail record.
    RateExtract,
    /// Folding and exponential-stopping comparison.
    FoldCheck,
    /// The walk conditioned to stay in a ball.
    Confine,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GreenScaling => "green-scaling",
            Command::NashCheck => "nash-check",
            Command::Rho1 => "rho1",
            Command::Rho2 => "rho2",
            Command::RhoContinuum => "rho-continuum",
            Command::Chi => "chi",
            Command::GnConstant => "gn-constant",
            Command::InterpCheck => "interp-check",
            Command::ConvergenceStudy => "convergence-study",
            Command::OptimizeA => "optimize-a",
            Command::EisenbaumCheck => "eisenbaum-check",
            Command::TailBounds => "tail-bounds",
            Command::McTail => "mc-tail",
            Command::RateExtract => "rate-extract",
            Command::FoldCheck => "fold-check",
            Command::Confine => "confine",
        }
    }
}

/// Reads the config object and splits off the seed. A manifest is
/// recognised by its `config` and `subcommand` keys.
fn load_config(cli: &Cli) -> Result<(Map<String, Value>, u64), Failure> {
    let mut obj = match &cli.config {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Failure::Config("config must be a JSON object".into())),
                Err(e) => return Err(Failure::Config(format!("config is not valid JSON: {e}"))),
            }
        }
    };
    if obj.contains_key("subcommand") && obj.contains_key("config") {
        let name = obj["subcommand"].as_str().unwrap_or_default().to_string();
        if name != cli.command.name() {
            return Err(Failure::Config(format!(
                "manifest is for {name}, not {}",
                cli.command.name()
            )));
        }
        let seed = obj.get("seed").cloned();
        obj = match obj.remove("config") {
            Some(Value::Object(m)) => m,
            _ => return Err(Failure::Config("manifest config must be an object".into())),
        };
        if let Some(s) = seed {
            obj.insert("seed".into(), s);
        }
    }
    let seed = match obj.remove("seed") {
        None => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Failure::Config("seed must be an unsigned 64-bit integer".into()))?,
    };
    Ok((obj, cli.seed.unwrap_or(seed)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Failure::Config("jobs must be >= 1".into()).report();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return Failure::Io(format!("thread pool: {e}")).report();
        }
    }
    let (raw, seed) = match load_config(&cli) {
        Ok(c) => c,
        Err(f) => return f.report(),
    };
    let mut out = match Output::new(&cli.out, seed) {
        Ok(o) => o,
        Err(f) => return f.report(),
    };
    let result = commands::run(cli.command.name(), Value::Object(raw), &mut out);
    let code = match &result {
        Ok(()) => 0,
        Err(f) => f.code(),
    };
    if let Some(config) = out.config.clone() {
        let manifest = json!({
            "subcommand": cli.command.name(),
            "config": config,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "jobs": rayon::current_num_threads(),
            "wall_time_s": start.elapsed().as_secs_f64(),
            "files": out.files,
            "exit_code": code,
        });
        if let Err(f) = out.write_raw("manifest.json", &serde_json::to_string_pretty(&manifest).unwrap()) {
            return f.report();
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
