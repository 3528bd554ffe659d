//! The run report and the CSV artifacts written next to it.

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::write_matrix;
use divas_core::diagnostics::{BlockSummary, CollectionSummary, DiagnosticsReport, DirectionDiagnostics, QqBlock};
use divas_core::pipeline::PipelineOutput;
use divas_core::preprocess::RemovedMeans;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingRecord {
    pub block: usize,
    pub name: String,
    pub logit_transform: bool,
    /// per trait, summed over centering sweeps
    pub trait_means: Option<Vec<f64>>,
    /// per object
    pub object_means: Option<Vec<f64>>,
}

/// `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_echo: RunConfig,
    pub schema_version: u32,
    pub preprocessing: Vec<PreprocessingRecord>,
    pub blocks: Vec<BlockSummary>,
    pub collections: Vec<CollectionSummary>,
    pub directions: Vec<DirectionDiagnostics>,
    pub qq: Vec<QqBlock>,
}

impl ReportFile {
    pub fn new(cfg: &RunConfig, report: DiagnosticsReport, removed: &[RemovedMeans]) -> Self {
        let preprocessing = cfg
            .blocks
            .iter()
            .zip(removed)
            .enumerate()
            .map(|(k, (b, m))| PreprocessingRecord {
                block: k + 1,
                name: b.name.clone(),
                logit_transform: b.logit_transform,
                trait_means: m.trait_means.as_ref().map(|v| v.iter().copied().collect()),
                object_means: m.object_means.as_ref().map(|v| v.iter().copied().collect()),
            })
            .collect();
        Self {
            config_echo: cfg.clone(),
            schema_version: report.schema_version,
            preprocessing,
            blocks: report.blocks,
            collections: report.collections,
            directions: report.directions,
            qq: report.qq,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Ingest(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::Ingest(format!("{}: {e}", path.display())))
    }
}

/// Collection label as a file-name fragment: `1+2` becomes `1_2`.
pub fn file_tag(label: &str) -> String {
    label.replace('+', "_")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::output(path.display(), e))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-iteration CCP records, one row per (iterate, block).
pub fn traces_csv(out: &PipelineOutput) -> String {
    let mut s = String::from("collection,direction,accepted,early_stop,iteration,tau,merit,max_angle_slack,certified,block,trait_angle,object_angle\n");
    for st in &out.structures {
        let label = st.collection.label();
        for (d, tr) in st.traces.iter().enumerate() {
            for it in &tr.iterates {
                for (k, ta) in it.trait_angles.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{label},{},{},{},{},{},{},{},{},{},{},{}",
                        d + 1,
                        tr.accepted,
                        tr.early_stop,
                        it.iteration,
                        it.tau,
                        it.merit,
                        it.max_angle_slack,
                        it.certified,
                        k + 1,
                        opt(*ta),
                        opt(it.object_angles[k]),
                    );
                }
            }
        }
    }
    s
}

pub fn qq_csv(report: &ReportFile) -> String {
    let mut s = String::from("block,rank,observed,theoretical,env_min,env_max\n");
    for b in &report.qq {
        for r in &b.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", b.block, r.rank, r.observed, r.theoretical, r.env_min, r.env_max);
        }
    }
    s
}

/// One row per (mode, included block): loading energy and ECT next to the
/// mode's ENC.
pub fn modes_csv(out: &PipelineOutput) -> String {
    let mut s = String::from("collection,mode,block,enc,loading_norm,ect_percent\n");
    for d in &out.report.directions {
        for o in &d.object_space {
            let norm = out
                .decompositions
                .get(o.block - 1)
                .and_then(|dec| dec.components.iter().find(|c| c.collection.label() == d.collection))
                .map(|c| c.loadings.column(d.mode - 1).norm())
                .unwrap_or(0.0);
            let _ = writeln!(s, "{},{},{},{},{},{}", d.collection, d.mode, o.block, d.enc, norm, o.ect);
        }
    }
    s
}

/// Rotated scores per collection and loadings per (collection, block).
/// Each component matrix is `loadings · scoresᵀ`.
pub fn write_components(dir: &Path, out: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir.display(), e))?;
    let mut written = std::collections::BTreeSet::new();
    for dec in &out.decompositions {
        for c in &dec.components {
            let tag = file_tag(&c.collection.label());
            if written.insert(tag.clone()) {
                write_matrix(&dir.join(format!("scores_{tag}.csv")), &c.scores)?;
            }
            write_matrix(&dir.join(format!("loadings_{tag}_block{}.csv", dec.block + 1)), &c.loadings)?;
        }
    }
    Ok(())
}

/// Write `report.json` and every CSV artifact; returns the report.
pub fn write_run(dir: &Path, cfg: &RunConfig, out: &PipelineOutput, removed: &[RemovedMeans]) -> Result<ReportFile> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir.display(), e))?;
    let report = ReportFile::new(cfg, out.report.clone(), removed);
    write_text(&dir.join("report.json"), &report.to_json())?;
    write_text(&dir.join("traces.csv"), &traces_csv(out))?;
    write_text(&dir.join("qq.csv"), &qq_csv(&report))?;
    write_text(&dir.join("modes.csv"), &modes_csv(out))?;
    write_components(&dir.join("components"), out)?;
    Ok(report)
}
