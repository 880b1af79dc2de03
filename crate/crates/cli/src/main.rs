use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use disorder_chain_cli::config::MethodName;
use disorder_chain_cli::{exit, model, run, CliError, RunConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  could not write results
  2  config error (parse failure or failed validation)
  3  numeric failure (leakage over threshold, depth cap, Krylov breakdown)
  4  method=compare: a comparison tolerance was exceeded";

/// Disorder-averaged quantum dynamics from a run configuration.
#[derive(Debug, Parser)]
#[command(name = "disorder-chain", version, after_help = EXIT_CODES)]
struct Args {
    /// Run configuration (TOML), or a manifest.json from an earlier run.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Only check the configuration and list every problem found.
    #[arg(long)]
    validate: bool,
    /// Override method.name.
    #[arg(long, value_enum, value_name = "METHOD")]
    method: Option<MethodName>,
    /// Override output.directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override numeric.seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for the oracles (results do not depend on it).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let code = match run_cli(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run_cli(args: &Args) -> Result<i32, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(m) = args.method {
        cfg.method.name = m;
    }
    if let Some(out) = &args.out {
        cfg.output.directory = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.numeric.seed = seed;
    }

    if args.validate {
        let issues = model::validate(&cfg);
        if issues.is_empty() {
            println!("config ok");
            return Ok(exit::OK);
        }
        for i in &issues {
            println!("{i}");
        }
        return Ok(exit::CONFIG);
    }

    let problems = model::build(&cfg).map_err(CliError::Invalid)?;
    let outcome = run::execute(&cfg, &problems)?;
    for r in &outcome.manifest.runs {
        let label = r.name.as_deref().unwrap_or("run");
        for m in &r.methods {
            let depth = m.depths.as_ref().map(|d| format!(" depths {d:?}")).unwrap_or_default();
            println!("{label}: {}{depth} in {:.2} s", m.method, m.wall_clock_s);
        }
        if let Some(c) = &r.comparison {
            for p in &c.pairs {
                let ratio = p.max_sem_ratio.map(|z| format!(", {z:.2} SEM")).unwrap_or_default();
                let verdict = if p.passed { "ok" } else { "FAILED" };
                println!("{label}: {} vs {}: max error {:.3e}{ratio} {verdict}", p.a, p.b, p.max_error);
            }
        }
    }
    println!("wrote {}", outcome.manifest.config.output.directory.join("manifest.json").display());
    for f in &outcome.leakage_failures {
        eprintln!("error: {f}");
    }
    if !outcome.leakage_failures.is_empty() {
        return Ok(exit::NUMERIC);
    }
    if !outcome.comparison_passed() {
        return Ok(exit::COMPARISON);
    }
    Ok(exit::OK)
}
