//! Per-direction angle diagnostics, ENC/ECT and the run report.

use crate::angles::{theta2_star_percentile, vector_subspace_angle};
use crate::bootstrap::BootstrapOutcome;
use crate::error::{invalid, Result};
use crate::noise::QqRow;
use crate::pipeline::BlockAnalysis;
use crate::reconstruct::BlockDecomposition;
use crate::search::{JointStructure, Rejection};
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

pub const SCHEMA_VERSION: u32 = 1;

/// Effective number of cases `1 / Σ v⁴` of a unit vector.
pub fn enc(v: &DVector<f64>) -> Result<f64> {
    if (v.norm() - 1.0).abs() > 1e-8 {
        return invalid("ENC needs a unit vector");
    }
    Ok(1.0 / v.iter().map(|x| x.powi(4)).sum::<f64>())
}

/// Effective contribution of traits `(Σ l²)² / (d Σ l⁴)`, in (0, 1].
pub fn ect(l: &DVector<f64>, d: usize) -> Result<f64> {
    let m = l.amax();
    if !(m > 0.0 && m.is_finite()) || d == 0 {
        return invalid("ECT needs a nonzero vector");
    }
    // scale out first so the squares and fourth powers stay in range
    let s2: f64 = l.iter().map(|x| (x / m).powi(2)).sum();
    let s4: f64 = l.iter().map(|x| (x / m).powi(4)).sum();
    Ok(s2 * s2 / (d as f64 * s4))
}

#[cfg(feature = "serde")]
fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[cfg(feature = "serde")]
mod ser {
    pub fn round4<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::round4(*x))
    }
    pub fn round4_opt<S: serde::Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&super::round4(*v)),
            None => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraitDiagnostic {
    /// 1-based
    pub block: usize,
    pub included: bool,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub angle: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub theta2_star: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub upper_bound: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub phi_hat: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub theta0: f64,
    /// direction has no component in the block's signal subspace
    pub degenerate: bool,
    /// excluded block whose upper bound falls below the random-direction bound
    pub correlated: bool,
    /// included block: not both within the bound and indistinguishable
    /// from a random direction
    pub informative: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectDiagnostic {
    pub block: usize,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub angle: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub theta2_star: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub upper_bound: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub psi_hat: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4"))]
    pub theta0: f64,
    /// percent
    pub ect: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectionDiagnostics {
    pub collection: String,
    /// 1-based
    pub mode: usize,
    pub enc: f64,
    pub trait_space: Vec<TraitDiagnostic>,
    pub object_space: Vec<ObjectDiagnostic>,
}

/// Trait-space record of a unit score direction against one block.
pub fn trait_diagnostic(v: &DVector<f64>, block: usize, included: bool, boot: &BootstrapOutcome, q: f64) -> Result<Option<TraitDiagnostic>> {
    let Some(bounds) = boot.bounds else { return Ok(None) };
    let angle = vector_subspace_angle(v, &boot.v_check)?;
    let t2 = theta2_star_percentile(v, &boot.v_check, &boot.cache.trait_aligns, q)?;
    let upper = angle + t2.degrees;
    let theta0 = bounds.theta0_trait;
    Ok(Some(TraitDiagnostic {
        block: block + 1,
        included,
        angle,
        theta2_star: t2.degrees,
        upper_bound: upper,
        phi_hat: bounds.phi_hat,
        theta0,
        degenerate: t2.degenerate,
        correlated: !included && upper < theta0,
        informative: !(angle <= bounds.phi_hat && upper >= theta0),
    }))
}

/// Object-space record of a loadings vector against one included block.
pub fn object_diagnostic(l: &DVector<f64>, block: usize, boot: &BootstrapOutcome, q: f64) -> Result<Option<ObjectDiagnostic>> {
    let Some(bounds) = boot.bounds else { return Ok(None) };
    if !(l.norm() > 0.0) {
        return Ok(None);
    }
    let angle = vector_subspace_angle(l, &boot.u_check)?;
    let t2 = theta2_star_percentile(l, &boot.u_check, &boot.cache.object_aligns, q)?;
    Ok(Some(ObjectDiagnostic {
        block: block + 1,
        angle,
        theta2_star: t2.degrees,
        upper_bound: angle + t2.degrees,
        psi_hat: bounds.psi_hat,
        theta0: bounds.theta0_object,
        ect: 100.0 * ect(l, l.len())?,
    }))
}

/// Diagnostics for one rotated mode: trait angles to every block with
/// signal, object angles of its loadings for included blocks.
pub fn direction_diagnostics(
    v: &DVector<f64>,
    structure: &JointStructure,
    mode: usize,
    blocks: &[BlockAnalysis],
    decompositions: &[BlockDecomposition],
    q: f64,
) -> Result<DirectionDiagnostics> {
    let mut trait_space = Vec::new();
    let mut object_space = Vec::new();
    for (k, a) in blocks.iter().enumerate() {
        let Some(boot) = a.bootstrap.as_ref() else { continue };
        let included = structure.collection.contains(k);
        if let Some(t) = trait_diagnostic(v, k, included, boot, q)? {
            trait_space.push(t);
        }
        if included {
            let comp = decompositions[k].components.iter().find(|c| c.collection == structure.collection);
            if let Some(c) = comp {
                let l = c.loadings.column(mode).clone_owned();
                if let Some(o) = object_diagnostic(&l, k, boot, q)? {
                    object_space.push(o);
                }
            }
        }
    }
    Ok(DirectionDiagnostics { collection: structure.collection.label(), mode: mode + 1, enc: enc(v)?, trait_space, object_space })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockSummary {
    pub index: usize,
    pub name: String,
    pub traits: usize,
    pub objects: usize,
    pub max_rank: usize,
    pub estimated_rank: usize,
    pub filtered_rank: usize,
    pub final_rank: usize,
    pub sigma_hat: f64,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4_opt"))]
    pub phi_hat: Option<f64>,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4_opt"))]
    pub psi_hat: Option<f64>,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4_opt"))]
    pub theta0_trait: Option<f64>,
    #[cfg_attr(feature = "serde", serde(serialize_with = "ser::round4_opt"))]
    pub theta0_object: Option<f64>,
    pub signal_free: bool,
    pub loadings_deficient: bool,
    pub qq_inside_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollectionSummary {
    pub collection: String,
    /// 1-based
    pub blocks: Vec<usize>,
    pub rank: usize,
    /// CCP iterations spent on each attempted direction
    pub iterations: Vec<usize>,
    /// why the last attempted direction was turned down, blocks 1-based
    pub stop_reasons: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QqBlock {
    pub block: usize,
    pub rows: Vec<QqRow>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub blocks: Vec<BlockSummary>,
    pub collections: Vec<CollectionSummary>,
    pub directions: Vec<DirectionDiagnostics>,
    pub qq: Vec<QqBlock>,
}

/// The report numbers blocks from 1.
fn one_based(r: &Rejection) -> Rejection {
    match r.clone() {
        Rejection::IncludedTrait { block, angle, bound } => Rejection::IncludedTrait { block: block + 1, angle, bound },
        Rejection::ExcludedTrait { block, angle, bound } => Rejection::ExcludedTrait { block: block + 1, angle, bound },
        Rejection::Object { block, angle, bound } => Rejection::Object { block: block + 1, angle, bound },
        Rejection::Unreachable { block, min_angle, bound } => Rejection::Unreachable { block: block + 1, min_angle, bound },
        other => other,
    }
}

pub fn assemble_report(
    blocks: &[BlockAnalysis],
    structures: &[JointStructure],
    decompositions: &[BlockDecomposition],
    q: f64,
) -> Result<DiagnosticsReport> {
    let mut summaries = Vec::with_capacity(blocks.len());
    for (k, a) in blocks.iter().enumerate() {
        let bounds = a.bootstrap.as_ref().and_then(|b| b.bounds);
        let dec = decompositions.get(k);
        summaries.push(BlockSummary {
            index: k + 1,
            name: a.name.clone(),
            traits: a.estimate.traits,
            objects: a.estimate.objects,
            max_rank: a.estimate.traits.min(a.estimate.objects),
            estimated_rank: a.estimate.rank,
            filtered_rank: a.filtered_rank(),
            final_rank: dec.map(|d| d.final_rank).unwrap_or(0),
            sigma_hat: a.estimate.sigma_hat,
            phi_hat: bounds.map(|b| b.phi_hat),
            psi_hat: bounds.map(|b| b.psi_hat),
            theta0_trait: bounds.map(|b| b.theta0_trait),
            theta0_object: bounds.map(|b| b.theta0_object),
            signal_free: a.signal_free(),
            loadings_deficient: dec.map(|d| d.deficient).unwrap_or(false),
            qq_inside_fraction: a.qq_inside,
        });
    }
    let mut collections = Vec::with_capacity(structures.len());
    let mut directions = Vec::new();
    for st in structures {
        let stop_reasons = st
            .traces
            .last()
            .filter(|t| !t.accepted)
            .map(|t| t.rejections.iter().map(one_based).collect())
            .unwrap_or_default();
        collections.push(CollectionSummary {
            collection: st.collection.label(),
            blocks: st.collection.indices().iter().map(|k| k + 1).collect(),
            rank: st.rank(),
            iterations: st.traces.iter().map(|t| t.iterates.len()).collect(),
            stop_reasons,
        });
        if st.rank() == 0 {
            continue;
        }
        let rotated = decompositions
            .iter()
            .flat_map(|d| d.components.iter())
            .find(|c| c.collection == st.collection)
            .map(|c| c.scores.clone())
            .unwrap_or_else(|| st.basis.clone());
        for mode in 0..rotated.ncols() {
            let v = rotated.column(mode).clone_owned();
            directions.push(direction_diagnostics(&v, st, mode, blocks, decompositions, q)?);
        }
    }
    let qq = blocks.iter().map(|a| QqBlock { block: a.index + 1, rows: a.qq.clone() }).collect();
    Ok(DiagnosticsReport { schema_version: SCHEMA_VERSION, blocks: summaries, collections, directions, qq })
}
