//! Runs a TOML experiment file the same way the command-line tool does.
//!
//! `cargo run --release --example run_config -- configs/diagonal_target.toml [optimize|tensor|grad-check|uq|mesh-export]`

use std::path::PathBuf;

use microshape::experiment::{run, Command, ExperimentConfig, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "configs/diagonal_target.toml".into()));
    let command = match args.next().as_deref().unwrap_or("tensor") {
        "tensor" => Command::Tensor,
        "grad-check" => Command::GradCheck,
        "optimize" => Command::Optimize,
        "uq" => Command::Uq,
        "mesh-export" => Command::MeshExport,
        other => panic!("unknown command {other}"),
    };
    let outcome = ExperimentConfig::load(&path).and_then(|c| run(command, &c, RunOptions::default()));
    match outcome {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("  wrote {}", f.display());
            }
            std::process::exit(o.exit_code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
