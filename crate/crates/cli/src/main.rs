use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use worstcase::eval::DEFAULT_RESAMPLES;
use worstcase::experiment::{cmd_compare, cmd_eval, cmd_train, write_demo, RunConfig};
use worstcase::Error;

#[derive(Parser)]
#[command(
    name = "worstcase",
    version,
    about = "Multilingual dependency parsing with worst-case-aware curricula"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a parser from a run config (or a previous run's manifest).
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set curriculum.phi=1.0`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint zero-shot on the test treebanks of a config.
    Eval {
        checkpoint: PathBuf,
        test_config: PathBuf,
        /// Directory for report.tsv and report.json; defaults to the
        /// checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two evaluation reports; the first is the baseline.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a small synthetic treebank suite and a config that uses it.
    Demo {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { config, overrides } => {
            let config = RunConfig::load(&config, &overrides)?;
            let manifest = cmd_train(&config)?;
            let m = &manifest.metrics;
            println!(
                "trained {} steps, final L1 {:.4}, Linf {:.4}",
                m.steps, m.final_l1, m.final_linf
            );
            if let (Some(las), Some(uas)) = (m.macro_las, m.macro_uas) {
                println!("held-out macro LAS {las:.2}, UAS {uas:.2}");
            }
            println!(
                "wrote {}",
                config.output_dir.join("manifest.json").display()
            );
        }
        Command::Eval {
            checkpoint,
            test_config,
            out,
        } => {
            let output = cmd_eval(&checkpoint, &test_config, out.as_deref())?;
            print!("{}", output.report.to_tsv());
            println!(
                "wrote {} and {}",
                output.tsv.display(),
                output.json.display()
            );
        }
        Command::Compare {
            report_a,
            report_b,
            resamples,
            seed,
        } => {
            print!(
                "{}",
                cmd_compare(&report_a, &report_b, resamples, seed)?.to_table()
            );
        }
        Command::Demo { dir, seed } => {
            let path = write_demo(&dir, seed)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
