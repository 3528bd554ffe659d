//! End-to-end run over a set of blocks: extraction, bootstrap, joint
//! search, reconstruction and the diagnostics report.

use crate::bootstrap::{rotational_bootstrap, BootstrapConfig, BootstrapOutcome, Centering};
use crate::diagnostics::{assemble_report, DiagnosticsReport};
use crate::error::{invalid, mismatch, Result};
use crate::noise::{fraction_inside, impute_noise, qq_envelope, qq_rows, ImputedNoise, QqRow};
use crate::reconstruct::{decompose, BlockDecomposition};
use crate::rng::{stream, stream_id, PURPOSE_IMPUTE};
use crate::search::{run_full_search, CcpConfig, JointStructure, SearchBlock};
use crate::signal::{extract_signal, DataBlock, SignalEstimate, Shrinker};
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub shrinker: Shrinker,
    pub bootstrap: BootstrapConfig,
    pub theta2_quantile: f64,
    pub ccp: CcpConfig,
    pub qq_traces: usize,
    pub stratified_imputation: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shrinker: Shrinker::Optimal,
            bootstrap: BootstrapConfig::default(),
            theta2_quantile: 0.95,
            ccp: CcpConfig::default(),
            qq_traces: 100,
            stratified_imputation: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.bootstrap.validate()?;
        self.ccp.validate()?;
        if !(self.theta2_quantile > 0.0 && self.theta2_quantile < 1.0) {
            return invalid("theta2 quantile must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Everything learned about one block before the joint search.
#[derive(Debug, Clone)]
pub struct BlockAnalysis {
    pub index: usize,
    pub name: String,
    pub estimate: SignalEstimate,
    pub noise: ImputedNoise,
    /// `None` when no signal was detected
    pub bootstrap: Option<BootstrapOutcome>,
    pub qq: Vec<QqRow>,
    /// fraction of imputed eigenvalues inside the simulated envelope
    pub qq_inside: f64,
}

impl BlockAnalysis {
    pub fn filtered_rank(&self) -> usize {
        self.bootstrap.as_ref().map(|b| b.filtered_rank()).unwrap_or(0)
    }

    pub fn signal_free(&self) -> bool {
        self.filtered_rank() == 0
    }

    /// Search inputs, `None` for signal-free blocks.
    pub fn search_block(&self) -> Option<SearchBlock> {
        let boot = self.bootstrap.as_ref()?;
        let bounds = boot.bounds?;
        let r = bounds.filtered_rank;
        let svd = &self.estimate.svd;
        let mut vs = svd.v.clone();
        for j in 0..vs.ncols() {
            vs.column_mut(j).scale_mut(svd.s[j]);
        }
        let gram = &vs * vs.transpose();
        Some(SearchBlock {
            v_check: boot.v_check.clone(),
            phi: bounds.phi_hat,
            psi: bounds.psi_hat,
            gram,
            f: vs.columns(0, r).clone_owned(),
            nu1: svd.s[0],
        })
    }
}

pub fn analyze_block(block: &DataBlock, index: usize, cfg: &PipelineConfig) -> Result<BlockAnalysis> {
    let estimate = extract_signal(block, cfg.shrinker)?;
    let mut rng = stream(cfg.seed, stream_id(PURPOSE_IMPUTE, index as u64, 0));
    let noise = impute_noise(&estimate, &mut rng, cfg.stratified_imputation)?;
    let bootstrap = if estimate.rank > 0 {
        let centering = Centering { trait_centered: block.trait_centered(), object_centered: block.object_centered() };
        Some(rotational_bootstrap(&estimate, &noise, centering, &cfg.bootstrap, cfg.seed, index as u64)?)
    } else {
        None
    };
    let (qq, qq_inside) = if estimate.sigma_hat > 0.0 && cfg.qq_traces > 0 {
        let observed = noise.eigenvalues(&estimate);
        let env = qq_envelope(estimate.beta, observed.len(), 1.0, cfg.qq_traces, cfg.seed)?;
        let s2 = estimate.sigma_hat * estimate.sigma_hat;
        let scaled: Vec<f64> = observed.iter().map(|o| o / s2).collect();
        (qq_rows(&observed, estimate.sigma_hat, &env), fraction_inside(&scaled, &env))
    } else {
        (Vec::new(), 0.0)
    };
    Ok(BlockAnalysis { index, name: block.name().into(), estimate, noise, bootstrap, qq, qq_inside })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub blocks: Vec<BlockAnalysis>,
    /// every visited collection, in search order
    pub structures: Vec<JointStructure>,
    pub decompositions: Vec<BlockDecomposition>,
    pub report: DiagnosticsReport,
}

impl PipelineOutput {
    /// Rank found for the collection with these zero-based indices.
    pub fn collection_rank(&self, indices: &[usize]) -> usize {
        self.structures
            .iter()
            .find(|s| s.collection.indices() == indices)
            .map(|s| s.rank())
            .unwrap_or(0)
    }

    /// Rotated score column `mode` of a collection, if present.
    pub fn rotated_scores(&self, indices: &[usize]) -> Option<DMatrix<f64>> {
        self.decompositions
            .iter()
            .flat_map(|d| d.components.iter())
            .find(|c| c.collection.indices() == indices)
            .map(|c| c.scores.clone())
    }

    pub fn loadings(&self, block: usize, indices: &[usize]) -> Option<DMatrix<f64>> {
        self.decompositions
            .get(block)?
            .components
            .iter()
            .find(|c| c.collection.indices() == indices)
            .map(|c| c.loadings.clone())
    }

    pub fn score_column(&self, indices: &[usize], mode: usize) -> Option<DVector<f64>> {
        self.rotated_scores(indices).filter(|s| mode < s.ncols()).map(|s| s.column(mode).clone_owned())
    }
}

pub fn run(blocks: &[DataBlock], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if blocks.is_empty() {
        return invalid("no blocks to analyze");
    }
    let n = blocks[0].objects();
    if blocks.iter().any(|b| b.objects() != n) {
        return mismatch("all blocks must share the same objects (columns)");
    }
    let analyses = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| analyze_block(b, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    let search_blocks: Vec<Option<SearchBlock>> = analyses.iter().map(|a| a.search_block()).collect();
    let structures = run_full_search(&search_blocks, &cfg.ccp)?;
    let values: Vec<&DMatrix<f64>> = blocks.iter().map(|b| b.values()).collect();
    let decompositions = decompose(&values, &structures)?;
    let report = assemble_report(&analyses, &structures, &decompositions, cfg.theta2_quantile)?;
    Ok(PipelineOutput { blocks: analyses, structures, decompositions, report })
}
