use clap::{Parser, Subcommand};
use divas::config::RunConfig;
use divas::error::{CliError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "divas", version, about = "Shared and partially-shared structure across data blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on the blocks listed in a config file
    Run {
        #[arg(long)]
        config: PathBuf,
        /// overrides `seed` in the config
        #[arg(long)]
        seed: Option<u64>,
        /// overrides `output_dir` in the config
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic data set with ground truth and a run config
    Synth {
        #[arg(long, value_parser = ["paper-fig3", "desk"])]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render the plots of an existing report
    Diagnose {
        #[arg(long)]
        report: PathBuf,
    },
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let res = divas::execute_run(&cfg)?;
    print!("{}", divas::rank_table(&res.report));
    println!("report: {}", cfg.output_dir.join("report.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out_dir) = match cli.command {
        Command::Run { config, seed, out } => {
            let dir = out.clone().or_else(|| RunConfig::load(&config).ok().map(|c| c.output_dir));
            (run(&config, seed, out), dir)
        }
        Command::Synth { preset, out, seed } => {
            let r = divas::synth_io::write_synth(&preset, seed, &out).map(|(_, m)| {
                println!("wrote {} blocks to {}; run with: divas run --config {}", m.blocks.len(), out.display(), out.join(&m.run_config).display());
            });
            (r, Some(out))
        }
        Command::Diagnose { report } => {
            let r = divas::rerender(&report).map(|rep| print!("{}", divas::rank_table(&rep)));
            (r, None)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_failure(&e, out_dir.as_deref()),
    }
}

fn report_failure(e: &CliError, out_dir: Option<&Path>) -> ExitCode {
    let record = e.record_json();
    eprintln!("{record}");
    if let Some(dir) = out_dir.filter(|d| d.is_dir()) {
        let _ = std::fs::write(dir.join("error.json"), format!("{record}\n"));
    }
    ExitCode::from(e.exit_code() as u8)
}
