//! File formats, configuration and artifact writers around `divas-core`,
//! plus the entry points behind the `divas` command.

pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod plot;
pub mod synth_io;

use config::RunConfig;
use divas_core::pipeline::{run, PipelineOutput};
use error::{CliError, Result};
use output::ReportFile;
use std::path::Path;

/// Everything a finished run produced.
pub struct RunResult {
    pub output: PipelineOutput,
    pub report: ReportFile,
}

/// Ingest, run the pipeline and write all artifacts into
/// `cfg.output_dir`.
pub fn execute_run(cfg: &RunConfig) -> Result<RunResult> {
    let ingested = ingest::ingest_all(cfg)?;
    let (blocks, removed): (Vec<_>, Vec<_>) = ingested.into_iter().unzip();
    for b in &blocks {
        eprintln!("[divas] block {}: {} traits x {} objects", b.name(), b.traits(), b.objects());
    }
    let output = run(&blocks, &cfg.pipeline()).map_err(CliError::numeric)?;
    let report = output::write_run(&cfg.output_dir, cfg, &output, &removed)?;
    if cfg.emit_plots {
        plot::write_plots(&cfg.output_dir.join("plots"), &report)?;
    }
    Ok(RunResult { output, report })
}

/// Re-render the plots of an existing `report.json` next to it.
pub fn rerender(report_path: &Path) -> Result<ReportFile> {
    let report = ReportFile::load(report_path)?;
    let dir = report_path.parent().unwrap_or(Path::new(".")).join("plots");
    plot::write_plots(&dir, &report)?;
    Ok(report)
}

/// Short rank table for the terminal.
pub fn rank_table(report: &ReportFile) -> String {
    let mut s = String::from("block        traits  final  filtered  max\n");
    for b in &report.blocks {
        s.push_str(&format!("{:<12} {:>6} {:>6} {:>9} {:>4}\n", b.name, b.traits, b.final_rank, b.filtered_rank, b.max_rank));
    }
    s.push_str("collection   rank\n");
    for c in &report.collections {
        s.push_str(&format!("{:<12} {:>4}\n", c.collection, c.rank));
    }
    s
}
