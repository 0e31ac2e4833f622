use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcstt::error::{Error, Result};
use fcstt::pipeline::{cmd_reconstruct, cmd_simulate, cmd_ttnorms, exit_code, ExperimentConfig};
use fcstt::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "fcstt", version, about = "Counting statistics from transfer tensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact short-time maps, tomography dataset and exact generating function.
    Simulate(Common),
    /// Transfer-tensor reconstruction for every configured cutoff.
    Reconstruct(WithDataset),
    /// Same as `reconstruct`.
    Sweep(WithDataset),
    /// Transfer-tensor norms of a dataset.
    Ttnorms(WithDataset),
    /// Run the invariant suite.
    Selftest {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WithDataset {
    #[command(flatten)]
    common: Common,
    /// Dataset file; defaults to `dataset.txt` in the output directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(&c.config)?.with_overrides(c.out.clone(), c.seed);
    let out = cfg.output_dir()?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let s = cmd_simulate(&cfg, &out)?;
            println!("wrote {} records to {}", s.records, out.display());
        }
        Command::Reconstruct(w) | Command::Sweep(w) => {
            let (cfg, out) = load(&w.common)?;
            let dataset = w.dataset.unwrap_or_else(|| out.join("dataset.txt"));
            let s = cmd_reconstruct(&cfg, &dataset, &out)?;
            for row in s.sweep.iter().flatten() {
                println!("t_m {:>8.4}  I_ss {:>12.6e}  se {:>10.3e}", row.t_m, row.current, row.se);
            }
            println!("wrote {} files to {}", s.files.len(), out.display());
        }
        Command::Ttnorms(w) => {
            let (cfg, out) = load(&w.common)?;
            let dataset = w.dataset.unwrap_or_else(|| out.join("dataset.txt"));
            let path = cmd_ttnorms(&cfg, &dataset, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(seed)?;
            let mut failed = 0;
            for c in &checks {
                let tag = if c.passed() { "PASS" } else { "FAIL" };
                println!("{tag} {:<42} {:>10.3e} (tol {:.0e})", c.name, c.value, c.tol);
                failed += usize::from(!c.passed());
            }
            if failed > 0 {
                return Err(Error::Contract(format!("{failed} invariant(s) violated")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
