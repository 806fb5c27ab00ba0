//! Command-line front end: `microshape <command> --config <file.toml>`.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 invalid shape or
//! meshing failure, 4 solver or evaluation failure, 5 gradient check above
//! tolerance, 6 optimizer stopped without converging, 7 I/O failure.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microshape::experiment::{run, Command, ExperimentConfig, RunOptions};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "microshape", version, about = "Shape optimization of periodic two-phase microstructures")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the cell problems and write the effective tensor with its bounds.
    Tensor(Common),
    /// Compare the analytic objective gradient with central differences.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Finite-difference step (overrides the config).
        #[arg(long)]
        fd_step: Option<f64>,
        /// Comma-separated coefficient indices to check.
        #[arg(long, value_delimiter = ',')]
        coeffs: Option<Vec<usize>>,
        /// Negate the analytic gradient (harness self-test).
        #[arg(long, hide = true)]
        flip_gradient_sign: bool,
    },
    /// Run steepest descent towards the target tensor.
    Optimize(Common),
    /// Second-order shape Taylor study (perforated cells).
    Uq(Common),
    /// Write the refined cell mesh and the boundary curve.
    MeshExport(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file; repeat to run several configs as a sweep.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Refinement level override.
    #[arg(long)]
    level: Option<u32>,
    /// Seed override for perturbed starts.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, options, grad_overrides) = match cli.command {
        Cmd::Tensor(c) => (Command::Tensor, c, RunOptions::default(), None),
        Cmd::Optimize(c) => (Command::Optimize, c, RunOptions::default(), None),
        Cmd::Uq(c) => (Command::Uq, c, RunOptions::default(), None),
        Cmd::MeshExport(c) => (Command::MeshExport, c, RunOptions::default(), None),
        Cmd::GradCheck {
            common,
            fd_step,
            coeffs,
            flip_gradient_sign,
        } => (
            Command::GradCheck,
            common,
            RunOptions { flip_gradient_sign },
            Some((fd_step, coeffs)),
        ),
    };

    let level = if common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(jobs) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let mut configs = Vec::new();
    for (path, out) in output_dirs(&common) {
        let loaded = ExperimentConfig::load(&path).and_then(|mut c| {
            if let Some((fd_step, coeffs)) = &grad_overrides {
                if let Some(step) = fd_step {
                    c.grad_check.fd_step = *step;
                }
                if coeffs.is_some() {
                    c.grad_check.coeffs = coeffs.clone();
                }
            }
            c.with_overrides(common.level, common.seed, out)
        });
        match loaded {
            Ok(c) => configs.push((path, c)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        }
    }

    let codes: Vec<i32> = configs
        .par_iter()
        .map(|(path, config)| match run(command, config, options) {
            Ok(outcome) => {
                println!("{}: {}", path.display(), outcome.summary);
                outcome.exit_code
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                e.exit_code()
            }
        })
        .collect();
    let code = codes.into_iter().find(|&c| c != 0).unwrap_or(0);
    ExitCode::from(code as u8)
}

/// Output directory per config. A single config honors `--out` (or its own
/// setting); a sweep places each run in its own subdirectory.
fn output_dirs(common: &Common) -> Vec<(PathBuf, Option<PathBuf>)> {
    if common.configs.len() == 1 {
        return vec![(common.configs[0].clone(), common.out.clone())];
    }
    let base = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut seen: HashMap<String, usize> = HashMap::new();
    common
        .configs
        .iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let count = seen.entry(stem.clone()).or_insert(0);
            *count += 1;
            let name = if *count == 1 { stem } else { format!("{stem}-{count}") };
            (path.clone(), Some(base.join(name)))
        })
        .collect()
}
