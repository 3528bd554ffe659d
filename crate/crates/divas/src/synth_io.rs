//! Writes a generated synthetic data set: one CSV per block, the ground
//! truth factors, a manifest and a ready-to-run config.

use crate::error::{CliError, Result};
use crate::ingest::write_matrix;
use crate::output::file_tag;
use divas_core::synth::{generate, SynthData, SynthSpec};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct ManifestBlock {
    pub name: String,
    pub path: String,
    pub traits: usize,
    pub objects: usize,
}

#[derive(Debug, Serialize)]
pub struct ManifestTruth {
    pub collection: String,
    pub scores: String,
    /// `(block, file)`, 1-based blocks
    pub loadings: Vec<(usize, String)>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub preset: String,
    pub spec: SynthSpec,
    pub blocks: Vec<ManifestBlock>,
    pub truth: Vec<ManifestTruth>,
    pub run_config: String,
}

fn run_toml(preset: &str, spec: &SynthSpec, blocks: &[ManifestBlock]) -> String {
    let mut s = format!(
        "# synthetic preset {preset}; the generator applies no centering\nseed = {}\ndesk_scale = {}\noutput_dir = \"results\"\n",
        spec.seed,
        preset == "desk"
    );
    for b in blocks {
        s.push_str(&format!("\n[[block]]\nname = \"{}\"\npath = \"{}\"\n", b.name, b.path));
    }
    s
}

/// Generate `preset` at `seed` into `dir`.
pub fn write_synth(preset: &str, seed: u64, dir: &Path) -> Result<(SynthData, Manifest)> {
    let spec = SynthSpec::preset(preset, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let data = generate(&spec).map_err(CliError::numeric)?;
    let truth_dir = dir.join("truth");
    std::fs::create_dir_all(&truth_dir).map_err(|e| CliError::output(truth_dir.display(), e))?;
    let mut blocks = Vec::new();
    for (k, x) in data.blocks.iter().enumerate() {
        let path = format!("block{}.csv", k + 1);
        write_matrix(&dir.join(&path), x)?;
        blocks.push(ManifestBlock { name: format!("block{}", k + 1), path, traits: x.nrows(), objects: x.ncols() });
    }
    let mut truth = Vec::new();
    for (collection, scores) in &data.truth.scores {
        let tag = file_tag(&collection.label());
        let scores_path = format!("truth/scores_{tag}.csv");
        write_matrix(&dir.join(&scores_path), scores)?;
        let mut loadings = Vec::new();
        for c in data.truth.components.iter().filter(|c| &c.collection == collection) {
            let p = format!("truth/loadings_{tag}_block{}.csv", c.block + 1);
            write_matrix(&dir.join(&p), &c.loadings)?;
            loadings.push((c.block + 1, p));
        }
        truth.push(ManifestTruth { collection: collection.label(), scores: scores_path, loadings });
    }
    let run_config = "run.toml".to_string();
    let config_text = run_toml(preset, &spec, &blocks);
    std::fs::write(dir.join(&run_config), config_text).map_err(|e| CliError::output("run.toml", e))?;
    let manifest = Manifest { preset: preset.to_string(), spec, blocks, truth, run_config };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(dir.join("manifest.json"), json).map_err(|e| CliError::output("manifest.json", e))?;
    Ok((data, manifest))
}
