//! Run configuration: a flat TOML file with one `[[block]]` table per
//! input matrix. Every omitted key takes its default, and the resolved
//! values are echoed into the report.
//!
//! ```toml
//! seed = 7
//! bootstrap_M = 400
//! shrinker = "optimal"
//!
//! [[block]]
//! name = "expression"
//! path = "expression.csv"
//! trait_centered = true
//! object_centered = true
//! ```

use crate::error::{CliError, Result};
use divas_core::bootstrap::BootstrapConfig;
use divas_core::pipeline::PipelineConfig;
use divas_core::search::CcpConfig;
use divas_core::signal::Shrinker;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    path: PathBuf,
    name: Option<String>,
    trait_centered: Option<bool>,
    object_centered: Option<bool>,
    logit_transform: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    block: Vec<RawBlock>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    xi: Option<f64>,
    #[serde(rename = "bootstrap_M")]
    bootstrap_m: Option<usize>,
    bound_quantile: Option<f64>,
    theta0_quantile: Option<f64>,
    theta2_quantile: Option<f64>,
    reimpute: Option<bool>,
    ccp_tau0: Option<f64>,
    ccp_mu: Option<f64>,
    ccp_tau_max: Option<f64>,
    ccp_max_iter: Option<usize>,
    ccp_eps_slack: Option<f64>,
    ccp_eps_angle: Option<f64>,
    ccp_solver_tol: Option<f64>,
    shrinker: Option<String>,
    shrinker_threshold: Option<f64>,
    qq_traces: Option<usize>,
    stratified_imputation: Option<bool>,
    emit_plots: Option<bool>,
    desk_scale: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// as written in the config file
    pub path: String,
    pub name: String,
    pub trait_centered: bool,
    pub object_centered: bool,
    pub logit_transform: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcpSettings {
    pub tau0: f64,
    pub mu: f64,
    pub tau_max: f64,
    pub max_iter: usize,
    pub eps_slack: f64,
    pub eps_angle: f64,
    pub solver_tol: f64,
}

/// Fully resolved settings. Serializes as the report's config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub blocks: Vec<BlockSpec>,
    pub seed: u64,
    pub xi: f64,
    #[serde(rename = "bootstrap_M")]
    pub bootstrap_m: usize,
    pub bound_quantile: f64,
    pub theta0_quantile: f64,
    pub theta2_quantile: f64,
    pub reimpute: bool,
    pub ccp: CcpSettings,
    pub shrinker: String,
    /// `None` picks the aspect-ratio default for soft/hard
    pub shrinker_threshold: Option<f64>,
    pub qq_traces: usize,
    pub stratified_imputation: bool,
    pub emit_plots: bool,
    pub desk_scale: bool,
    /// not echoed so reruns into different directories compare equal
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// directory that relative block paths resolve against
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        let boot = BootstrapConfig::default();
        let ccp = CcpConfig::default();
        let mut names = std::collections::BTreeSet::new();
        let mut blocks = Vec::with_capacity(raw.block.len());
        for (i, b) in raw.block.into_iter().enumerate() {
            let name = b.name.unwrap_or_else(|| format!("block{}", i + 1));
            if !names.insert(name.clone()) {
                return Err(cfg_err(format!("duplicate block name {name:?}")));
            }
            blocks.push(BlockSpec {
                path: b.path.to_string_lossy().into_owned(),
                name,
                trait_centered: b.trait_centered.unwrap_or(false),
                object_centered: b.object_centered.unwrap_or(false),
                logit_transform: b.logit_transform.unwrap_or(false),
            });
        }
        let cfg = RunConfig {
            blocks,
            seed: raw.seed.unwrap_or(0),
            xi: raw.xi.unwrap_or(boot.xi),
            bootstrap_m: raw.bootstrap_m.unwrap_or(boot.replications),
            bound_quantile: raw.bound_quantile.unwrap_or(boot.bound_quantile),
            theta0_quantile: raw.theta0_quantile.unwrap_or(boot.theta0_quantile),
            theta2_quantile: raw.theta2_quantile.unwrap_or(0.95),
            reimpute: raw.reimpute.unwrap_or(boot.reimpute),
            ccp: CcpSettings {
                tau0: raw.ccp_tau0.unwrap_or(ccp.tau0),
                mu: raw.ccp_mu.unwrap_or(ccp.mu),
                tau_max: raw.ccp_tau_max.unwrap_or(ccp.tau_max),
                max_iter: raw.ccp_max_iter.unwrap_or(ccp.max_iter),
                eps_slack: raw.ccp_eps_slack.unwrap_or(ccp.eps_slack),
                eps_angle: raw.ccp_eps_angle.unwrap_or(ccp.eps_angle),
                solver_tol: raw.ccp_solver_tol.unwrap_or(ccp.solver_tol),
            },
            shrinker: raw.shrinker.unwrap_or_else(|| "optimal".into()),
            shrinker_threshold: raw.shrinker_threshold,
            qq_traces: raw.qq_traces.unwrap_or(100),
            stratified_imputation: raw.stratified_imputation.unwrap_or(false),
            emit_plots: raw.emit_plots.unwrap_or(true),
            desk_scale: raw.desk_scale.unwrap_or(false),
            output_dir: raw.output_dir.map(|p| base_dir.join(p)).unwrap_or_else(|| base_dir.join("divas-out")),
            base_dir: base_dir.to_path_buf(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(cfg_err("at least one [[block]] is required"));
        }
        for (key, q) in [
            ("bound_quantile", self.bound_quantile),
            ("theta0_quantile", self.theta0_quantile),
            ("theta2_quantile", self.theta2_quantile),
        ] {
            if !(q > 0.0 && q < 1.0) {
                return Err(cfg_err(format!("{key} must lie in (0, 1), got {q}")));
            }
        }
        if !(self.xi > 0.0 && self.xi <= 0.5) {
            return Err(cfg_err(format!("xi must lie in (0, 0.5], got {}", self.xi)));
        }
        if self.bootstrap_m < 50 {
            return Err(cfg_err(format!("bootstrap_M must be at least 50, got {}", self.bootstrap_m)));
        }
        if self.qq_traces == 0 {
            return Err(cfg_err("qq_traces must be positive"));
        }
        self.shrinker()?;
        if let Some(c) = self.shrinker_threshold {
            if !(c > 0.0) {
                return Err(cfg_err("shrinker_threshold must be positive"));
            }
        }
        self.pipeline().validate().map_err(|e| cfg_err(e.to_string()))
    }

    pub fn shrinker(&self) -> Result<Shrinker> {
        match self.shrinker.as_str() {
            "optimal" if self.shrinker_threshold.is_none() => Ok(Shrinker::Optimal),
            "optimal" => Err(cfg_err("shrinker_threshold only applies to soft or hard")),
            "soft" => Ok(Shrinker::Soft(self.shrinker_threshold)),
            "hard" => Ok(Shrinker::Hard(self.shrinker_threshold)),
            other => Err(cfg_err(format!("unknown shrinker {other:?} (optimal, soft or hard)"))),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            shrinker: self.shrinker().unwrap_or(Shrinker::Optimal),
            bootstrap: BootstrapConfig {
                replications: self.bootstrap_m,
                xi: self.xi,
                bound_quantile: self.bound_quantile,
                theta0_quantile: self.theta0_quantile,
                reimpute: self.reimpute,
            },
            theta2_quantile: self.theta2_quantile,
            ccp: CcpConfig {
                tau0: self.ccp.tau0,
                mu: self.ccp.mu,
                tau_max: self.ccp.tau_max,
                max_iter: self.ccp.max_iter,
                eps_slack: self.ccp.eps_slack,
                eps_angle: self.ccp.eps_angle,
                solver_tol: self.ccp.solver_tol,
            },
            qq_traces: self.qq_traces,
            stratified_imputation: self.stratified_imputation,
            seed: self.seed,
        }
    }

    pub fn block_path(&self, b: &BlockSpec) -> PathBuf {
        self.base_dir.join(&b.path)
    }
}
