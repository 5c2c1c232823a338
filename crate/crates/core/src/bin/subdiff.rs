use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use subdiff::experiment::{
    emit_forward, emit_outputs, emit_preset, load_config, run_forward, run_inversion, run_preset,
    write_summary, Overrides, PresetReport, Summary, PRESETS,
};

#[derive(Parser)]
#[command(
    name = "subdiff",
    version,
    about = "Time-fractional subdiffusion: forward solves and point-source reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem described by a JSON config on its fine grid.
    Forward {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate synthetic data and reconstruct the sources.
    Invert {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one or more built-in experiments (`all` runs every preset).
    Reproduce {
        #[arg(long, required = true, value_delimiter = ',')]
        preset: Vec<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eps_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Halve the mesh resolution of the 2D presets.
        #[arg(long)]
        half_res: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Presets to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn report_line(name: &str, report: &PresetReport) -> String {
    match report {
        PresetReport::Inversion(r) => format!(
            "{name}: locations {:?}, location error {:.3e}, intensity error {:.3e}, {} iterations ({})",
            r.recovered.locations,
            r.location_error,
            r.intensity_rel_l2_error,
            r.iterations,
            r.stop_reason.as_str()
        ),
        PresetReport::Counterexample(r) => format!(
            "{name}: λ1 = {:.6}, max observation difference {:.3e}, max step increment {:.3e}",
            r.lambda1, r.max_observation_difference, r.max_step_increment
        ),
        PresetReport::Convergence(r) => format!(
            "{name}: error(τ) = {:.4e}, error(τ/2) = {:.4e}, ratio {:.3}",
            r.error_tau, r.error_half_tau, r.ratio
        ),
    }
}

fn run_one(name: &str, overrides: &Overrides, out: &Path) -> bool {
    let dir = out.join(name);
    match run_preset(name, overrides).and_then(|r| emit_preset(&dir, &r).map(|_| r)) {
        Ok(r) => {
            println!("{}", report_line(name, &r));
            true
        }
        Err(e) => {
            eprintln!("{name}: {e}");
            let _ = write_summary(
                &dir,
                &Summary::failure(name, overrides.alpha.unwrap_or(0.5), &e),
            );
            false
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Forward { config, out } => match load_config(&config)
            .and_then(|spec| run_forward(&spec))
            .and_then(|r| emit_forward(&out, &r).map(|_| r))
        {
            Ok(r) => {
                println!(
                    "{}: {} nodes, {} steps, max|u| = {:.6e}",
                    r.spec.name, r.n_nodes, r.n_steps, r.max_abs
                );
                true
            }
            Err(e) => {
                eprintln!("error: {e}");
                false
            }
        },
        Command::Invert { config, out } => match load_config(&config) {
            Err(e) => {
                eprintln!("error: {e}");
                false
            }
            Ok(spec) => {
                match run_inversion(&spec).and_then(|r| emit_outputs(&out, &r).map(|_| r)) {
                    Ok(r) => {
                        println!(
                            "{}",
                            report_line(&spec.name, &PresetReport::Inversion(Box::new(r)))
                        );
                        true
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        let _ = write_summary(&out, &Summary::failure(&spec.name, spec.alpha, &e));
                        false
                    }
                }
            }
        },
        Command::Reproduce {
            preset,
            alpha,
            delta,
            eps_fraction,
            seed,
            half_res,
            out,
            jobs,
        } => {
            let names: Vec<String> = if preset.iter().any(|p| p == "all") {
                PRESETS.iter().map(|s| s.to_string()).collect()
            } else {
                preset
            };
            let overrides = Overrides {
                alpha,
                delta,
                eps_fraction,
                seed,
                half_res,
            };
            let pool = match rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
            {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let results: Vec<bool> = pool.install(|| {
                names
                    .par_iter()
                    .map(|n| run_one(n, &overrides, &out))
                    .collect()
            });
            results.into_iter().all(|b| b)
        }
    };
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
