//! Command-line driver for the field sampling and estimator experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oscfield::experiments::{cmd_estimate, cmd_rates, cmd_sample_field, cmd_smoothing_error, ExperimentConfig, RunOptions};
use oscfield::Error;

#[derive(Parser)]
#[command(name = "oscfield", version, about = "Random-field sampling and MC/MLMC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one field sample and its smoothed counterpart.
    SampleField(Common),
    /// Per-level means, variances and costs, with fitted rates.
    Rates(Common),
    /// Run the configured estimator for every tolerance in `eps_list`.
    Estimate(Common),
    /// Paired full versus truncated QoI per grid and truncation.
    SmoothingError(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Leave out wall-clock columns so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn run(cli: Cli) -> Result<(), Error> {
    let (Command::SampleField(c) | Command::Rates(c) | Command::Estimate(c) | Command::SmoothingError(c)) = &cli.command;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = ExperimentConfig::from_path(&c.config)?;
    let opts = RunOptions {
        out_dir: c.out.clone(),
        timing: !c.no_timing,
    };
    match cli.command {
        Command::SampleField(_) => {
            let path = cmd_sample_field(&cfg, &opts)?;
            println!("{}", path.display());
        }
        Command::Rates(_) => {
            let res = cmd_rates(&cfg, &opts)?;
            for (label, fit) in [("plain", res.fit_plain), ("smoothed", res.fit_smoothed)] {
                match fit {
                    Some(f) => println!("{label}: alpha {:.3} beta {:.3} gamma {:.3}", f.alpha, f.beta, f.gamma),
                    None => println!("{label}: rate fit unavailable"),
                }
            }
            for p in res.paths {
                println!("{}", p.display());
            }
        }
        Command::Estimate(_) => {
            let (runs, path) = cmd_estimate(&cfg, &opts)?;
            for r in &runs {
                match &r.report {
                    Ok(rep) => println!(
                        "eps {:e}: estimate {:.8} levels {} work {:e} converged {}",
                        r.eps,
                        rep.estimate,
                        rep.levels.len(),
                        rep.total_work,
                        rep.converged
                    ),
                    Err(e) => println!("eps {:e}: failed: {e}", r.eps),
                }
            }
            println!("{}", path.display());
            if let Some(Err(e)) = runs.into_iter().map(|r| r.report).find(|r| r.is_err()) {
                return Err(e);
            }
        }
        Command::SmoothingError(_) => {
            let (_, path) = cmd_smoothing_error(&cfg, &opts)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
