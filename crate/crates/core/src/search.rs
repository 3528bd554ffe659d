//! Sequential search for shared trait-space directions, one block
//! collection at a time, from the full collection down to singletons.

use crate::angles::{angle_from_parts, vector_subspace_angle};
use crate::ccp::{dc_merit, solve_subproblem, BlockTerms, IpmOptions, ObjectTerms, SubproblemSpec};
use crate::error::{invalid, Result};
use crate::linalg::{fix_sign, hcat, project_out, project_out_columns, span_basis, thin_svd};
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockCollection {
    indices: Vec<usize>,
}

impl BlockCollection {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return invalid("a block collection needs at least one block");
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn is_strict_subset_of(&self, other: &BlockCollection) -> bool {
        self.len() < other.len() && self.indices.iter().all(|&k| other.contains(k))
    }

    /// 1-based label such as `1+3`.
    pub fn label(&self) -> alloc::string::String {
        let parts: Vec<alloc::string::String> = self.indices.iter().map(|k| alloc::format!("{}", k + 1)).collect();
        parts.join("+")
    }
}

/// All nonempty subsets of `0..k`, larger first, ties lexicographic.
pub fn collections_in_order(k: usize) -> Vec<BlockCollection> {
    let mut all: Vec<Vec<usize>> = (1u64..(1u64 << k))
        .map(|mask| (0..k).filter(|&i| mask >> i & 1 == 1).collect())
        .collect();
    all.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    all.into_iter().map(|indices| BlockCollection { indices }).collect()
}

/// What the search needs to know about one block with nonempty signal.
#[derive(Debug, Clone)]
pub struct SearchBlock {
    /// leading `ř` trait directions, `n × ř`
    pub v_check: DMatrix<f64>,
    /// trait bound, degrees
    pub phi: f64,
    /// object bound, degrees
    pub psi: f64,
    /// `XᵀX`, `n × n`
    pub gram: DMatrix<f64>,
    /// `XᵀǓ = V̄_{1:ř} diag(ν̄_{1:ř})`, `n × ř`
    pub f: DMatrix<f64>,
    pub nu1: f64,
}

impl SearchBlock {
    /// Object-space angle between `X v` and the span of `Ǔ`, degrees.
    pub fn object_angle(&self, v: &DVector<f64>) -> f64 {
        let norm2 = v.dot(&(&self.gram * v));
        angle_from_parts(norm2, &self.f.tr_mul(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CcpConfig {
    pub tau0: f64,
    pub mu: f64,
    pub tau_max: f64,
    pub max_iter: usize,
    pub eps_slack: f64,
    /// additive tolerance on every angle comparison, degrees
    pub eps_angle: f64,
    pub solver_tol: f64,
}

impl Default for CcpConfig {
    fn default() -> Self {
        Self { tau0: 100.0, mu: 1.05, tau_max: 1e5, max_iter: 40, eps_slack: 1e-8, eps_angle: 0.05, solver_tol: 1e-6 }
    }
}

impl CcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.mu >= 1.0 && self.tau_max >= self.tau0) {
            return invalid("penalty schedule needs tau0 > 0, mu >= 1, tau_max >= tau0");
        }
        if self.max_iter == 0 || !(self.eps_slack >= 0.0) || !(self.eps_angle >= 0.0) || !(self.solver_tol > 0.0) {
            return invalid("CCP iteration cap and tolerances must be positive");
        }
        Ok(())
    }
}

/// One CCP iterate as seen from the normalized current point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CcpIterate {
    pub iteration: usize,
    pub tau: f64,
    /// unlinearized penalty at the iterate
    pub merit: f64,
    /// trait angle to every block (`None` for signal-free blocks)
    pub trait_angles: Vec<Option<f64>>,
    /// object angle for included blocks (`None` elsewhere)
    pub object_angles: Vec<Option<f64>>,
    pub max_angle_slack: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Rejection {
    IncludedTrait { block: usize, angle: f64, bound: f64 },
    ExcludedTrait { block: usize, angle: f64, bound: f64 },
    Object { block: usize, angle: f64, bound: f64 },
    Orthogonality { residual: f64 },
    /// no admissible starting direction remained
    Initialization,
    /// some included block has no direction close enough to the allowed space
    Unreachable { block: usize, min_angle: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectionTrace {
    pub iterates: Vec<CcpIterate>,
    pub early_stop: bool,
    pub accepted: bool,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone)]
pub struct JointStructure {
    pub collection: BlockCollection,
    /// `n × r` orthonormal score basis
    pub basis: DMatrix<f64>,
    pub traces: Vec<DirectionTrace>,
}

impl JointStructure {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

/// `index`-th (1-based) leading eigenvector of the summed projectors of
/// `bases`, projected off `ortho`; falls through to later eigenvectors
/// when the projection vanishes.
pub fn flag_mean_init(bases: &[&DMatrix<f64>], index: usize, ortho: &DMatrix<f64>) -> Result<Option<DVector<f64>>> {
    if bases.is_empty() || index == 0 {
        return invalid("flag mean needs bases and a 1-based index");
    }
    let n = bases[0].nrows();
    let stacked = hcat(bases, n);
    if stacked.ncols() == 0 {
        return Ok(None);
    }
    let svd = thin_svd(&stacked)?;
    for i in (index - 1)..svd.u.ncols() {
        if svd.s[i] <= 1e-12 {
            break;
        }
        let cand = svd.u.column(i).clone_owned();
        let p = project_out(ortho, &cand);
        let np = p.norm();
        if np >= 1e-8 {
            let mut v = p / np;
            fix_sign(&mut v);
            return Ok(Some(v));
        }
    }
    Ok(None)
}

fn cos2(deg: f64) -> f64 {
    let c = deg.to_radians().cos();
    c * c
}

fn shrink(basis: &DMatrix<f64>, ortho: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = project_out_columns(ortho, basis);
    span_basis(&p, 1e-6)
}

/// Orthonormal basis of the span of all given score bases.
pub fn combined_ortho(parts: &[&DMatrix<f64>], n: usize) -> Result<DMatrix<f64>> {
    let all = hcat(parts, n);
    if all.ncols() == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    span_basis(&all, 1e-8)
}

/// Post-hoc acceptance test of a unit direction against raw bases.
pub fn acceptance_test(
    v: &DVector<f64>,
    collection: &BlockCollection,
    blocks: &[Option<SearchBlock>],
    ortho: &DMatrix<f64>,
    eps_angle: f64,
) -> Result<Vec<Rejection>> {
    let mut out = Vec::new();
    for (k, blk) in blocks.iter().enumerate() {
        let Some(b) = blk else { continue };
        let angle = vector_subspace_angle(v, &b.v_check)?;
        if collection.contains(k) {
            if angle > b.phi + eps_angle {
                out.push(Rejection::IncludedTrait { block: k, angle, bound: b.phi });
            }
            let oa = b.object_angle(v);
            if oa > b.psi + eps_angle {
                out.push(Rejection::Object { block: k, angle: oa, bound: b.psi });
            }
        } else if angle <= b.phi - eps_angle {
            out.push(Rejection::ExcludedTrait { block: k, angle, bound: b.phi });
        }
    }
    if ortho.ncols() > 0 {
        let residual = ortho.tr_mul(v).norm();
        if residual > 1e-7 {
            out.push(Rejection::Orthogonality { residual });
        }
    }
    Ok(out)
}

fn iterate_record(
    v: &DVector<f64>,
    iteration: usize,
    tau: f64,
    merit: f64,
    collection: &BlockCollection,
    blocks: &[Option<SearchBlock>],
    max_angle_slack: f64,
    certified: bool,
) -> Result<CcpIterate> {
    let nv = v.norm();
    let u = if nv > 0.0 { v / nv } else { v.clone() };
    let mut trait_angles = Vec::with_capacity(blocks.len());
    let mut object_angles = Vec::with_capacity(blocks.len());
    for (k, blk) in blocks.iter().enumerate() {
        match blk {
            Some(b) if nv > 0.0 => {
                trait_angles.push(Some(vector_subspace_angle(&u, &b.v_check)?));
                object_angles.push(if collection.contains(k) { Some(b.object_angle(&u)) } else { None });
            }
            _ => {
                trait_angles.push(None);
                object_angles.push(None);
            }
        }
    }
    Ok(CcpIterate { iteration, tau, merit, trait_angles, object_angles, max_angle_slack, certified })
}

/// Run the penalty CCP from `v0` and return the final iterate and trace.
pub fn run_ccp(
    collection: &BlockCollection,
    terms: &[Option<&BlockTerms>],
    blocks: &[Option<SearchBlock>],
    ortho: &DMatrix<f64>,
    v0: DVector<f64>,
    cfg: &CcpConfig,
) -> Result<(DVector<f64>, Vec<CcpIterate>, bool)> {
    let included = collection.indices();
    let mut v0 = v0;
    let mut tau = cfg.tau0;
    let mut iterates = Vec::new();
    let opts = IpmOptions { tol: cfg.solver_tol, ..Default::default() };
    let mut v = v0.clone();
    let mut early = false;
    for it in 0..cfg.max_iter {
        let spec = SubproblemSpec::build(terms, included, &v0, tau, ortho)?;
        let sol = solve_subproblem(&spec, opts)?;
        v = sol.v;
        let max_slack = sol
            .slacks
            .iter()
            .zip(&sol.kinds)
            .filter(|(_, k)| k.is_angle())
            .map(|(s, _)| *s)
            .fold(0.0, f64::max);
        let merit = dc_merit(terms, included, &v, tau);
        iterates.push(iterate_record(&v, it + 1, tau, merit, collection, blocks, max_slack, sol.certified)?);
        if max_slack <= cfg.eps_slack {
            early = true;
            break;
        }
        v0 = v.clone();
        let nv = v0.norm();
        if nv > 1.0 {
            v0 /= nv;
        }
        tau = (tau * cfg.mu).min(cfg.tau_max);
    }
    Ok((v, iterates, early))
}

fn block_terms(
    collection: &BlockCollection,
    blocks: &[Option<SearchBlock>],
    shrunk: &[Option<DMatrix<f64>>],
) -> Vec<Option<BlockTerms>> {
    blocks
        .iter()
        .enumerate()
        .map(|(k, blk)| {
            let b = blk.as_ref()?;
            if collection.contains(k) {
                Some(BlockTerms {
                    v_check: shrunk[k].clone().unwrap_or_else(|| b.v_check.clone()),
                    cos2_phi: cos2(b.phi),
                    object: Some(ObjectTerms { gram: b.gram.clone(), f: b.f.clone(), cos2_psi: cos2(b.psi), nu1: b.nu1 }),
                })
            } else {
                Some(BlockTerms { v_check: b.v_check.clone(), cos2_phi: cos2(b.phi), object: None })
            }
        })
        .collect()
}

/// Extract directions for one collection until a candidate fails.
pub fn find_joint_directions(
    collection: &BlockCollection,
    blocks: &[Option<SearchBlock>],
    found: &[&DMatrix<f64>],
    cfg: &CcpConfig,
) -> Result<JointStructure> {
    cfg.validate()?;
    let Some(n) = blocks.iter().flatten().map(|b| b.v_check.nrows()).next() else {
        return invalid("search needs at least one block with signal");
    };
    for &k in collection.indices() {
        if k >= blocks.len() || blocks[k].is_none() {
            return invalid("included blocks must carry signal");
        }
    }
    let mut basis = DMatrix::<f64>::zeros(n, 0);
    let mut traces = Vec::new();
    loop {
        let mut parts: Vec<&DMatrix<f64>> = found.to_vec();
        parts.push(&basis);
        let ortho = combined_ortho(&parts, n)?;
        let mut shrunk: Vec<Option<DMatrix<f64>>> = alloc::vec![None; blocks.len()];
        let mut unreachable = None;
        for &k in collection.indices() {
            let b = blocks[k].as_ref().expect("checked above");
            let s = shrink(&b.v_check, &ortho)?;
            // closest any admissible direction can get to this block
            let reach = if ortho.ncols() > 0 {
                let p = project_out_columns(&ortho, &b.v_check);
                if p.ncols() == 0 { 0.0 } else { p.singular_values().max() }
            } else {
                1.0
            };
            let min_angle = crate::angles::acos_deg(reach);
            if s.ncols() == 0 || min_angle > b.phi + cfg.eps_angle {
                unreachable = Some(Rejection::Unreachable { block: k, min_angle, bound: b.phi });
                break;
            }
            shrunk[k] = Some(s);
        }
        if let Some(r) = unreachable {
            traces.push(DirectionTrace { iterates: Vec::new(), early_stop: false, accepted: false, rejections: alloc::vec![r] });
            break;
        }
        let init_bases: Vec<&DMatrix<f64>> = collection.indices().iter().filter_map(|&k| shrunk[k].as_ref()).collect();
        let Some(v0) = flag_mean_init(&init_bases, 1, &ortho)? else {
            traces.push(DirectionTrace {
                iterates: Vec::new(),
                early_stop: false,
                accepted: false,
                rejections: alloc::vec![Rejection::Initialization],
            });
            break;
        };
        let owned = block_terms(collection, blocks, &shrunk);
        let terms: Vec<Option<&BlockTerms>> = owned.iter().map(|t| t.as_ref()).collect();
        let (v, iterates, early) = run_ccp(collection, &terms, blocks, &ortho, v0, cfg)?;
        let mut u = project_out(&ortho, &v);
        let nu = u.norm();
        if !(nu > 1e-8) {
            traces.push(DirectionTrace {
                iterates,
                early_stop: early,
                accepted: false,
                rejections: alloc::vec![Rejection::Orthogonality { residual: 1.0 }],
            });
            break;
        }
        u /= nu;
        fix_sign(&mut u);
        let rejections = acceptance_test(&u, collection, blocks, &ortho, cfg.eps_angle)?;
        let accepted = rejections.is_empty();
        traces.push(DirectionTrace { iterates, early_stop: early, accepted, rejections });
        if !accepted {
            break;
        }
        let w = project_out(&basis, &u);
        let nw = w.norm();
        let mut grown = DMatrix::zeros(n, basis.ncols() + 1);
        grown.columns_mut(0, basis.ncols()).copy_from(&basis);
        grown.set_column(basis.ncols(), &(w / nw));
        basis = grown;
    }
    Ok(JointStructure { collection: collection.clone(), basis, traces })
}

/// Every visited collection in search order, with its (possibly empty)
/// structure.
pub fn run_full_search(blocks: &[Option<SearchBlock>], cfg: &CcpConfig) -> Result<Vec<JointStructure>> {
    let mut out: Vec<JointStructure> = Vec::new();
    if blocks.iter().all(|b| b.is_none()) {
        return Ok(out);
    }
    for collection in collections_in_order(blocks.len()) {
        if collection.indices().iter().any(|&k| blocks[k].is_none()) {
            continue;
        }
        let found: Vec<&DMatrix<f64>> = out
            .iter()
            .filter(|s| collection.is_strict_subset_of(&s.collection) && s.rank() > 0)
            .map(|s| &s.basis)
            .collect();
        let st = find_joint_directions(&collection, blocks, &found, cfg)?;
        out.push(st);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormalize;
    use crate::rng::{gaussian_matrix, stream};

    #[test]
    fn enumeration_order() {
        let c = collections_in_order(3);
        let labels: Vec<_> = c.iter().map(|x| x.label()).collect();
        assert_eq!(labels, ["1+2+3", "1+2", "1+3", "2+3", "1", "2", "3"]);
    }

    #[test]
    fn flag_mean_cases() {
        let mut rng = stream(51, 0);
        let b = orthonormalize(&gaussian_matrix(&mut rng, 8, 2)).unwrap();
        let empty = DMatrix::zeros(8, 0);
        let v = flag_mean_init(&[&b], 1, &empty).unwrap().unwrap();
        let p = b.tr_mul(&v).norm();
        assert!((p - 1.0).abs() < 1e-10);
        // doubling a basis keeps the eigenvectors
        let v2 = flag_mean_init(&[&b, &b], 1, &empty).unwrap().unwrap();
        assert!((v.dot(&v2).abs() - 1.0).abs() < 1e-10);
        // everything projected away
        let none = flag_mean_init(&[&b], 1, &b).unwrap();
        assert!(none.is_none());
    }

    fn toy_block(rng: &mut crate::rng::Rng, shared: &DMatrix<f64>, n: usize, extra: usize, phi: f64) -> SearchBlock {
        let own = gaussian_matrix(rng, n, extra);
        let v = orthonormalize(&hcat(&[shared, &own], n)).unwrap();
        let r = v.ncols();
        let nus: Vec<f64> = (0..r).map(|i| 10.0 - i as f64).collect();
        let d = DMatrix::from_diagonal(&DVector::from_vec(nus.clone()));
        let f = &v * &d;
        let gram = &v * &d * &d * v.transpose();
        SearchBlock { v_check: v, phi, psi: 5.0, gram, f, nu1: nus[0] }
    }

    #[test]
    fn shared_direction_is_found_and_individual_is_empty() {
        let mut rng = stream(52, 0);
        let n = 12;
        let shared = orthonormalize(&gaussian_matrix(&mut rng, n, 1)).unwrap();
        let b0 = toy_block(&mut rng, &shared, n, 0, 5.0);
        let b1 = toy_block(&mut rng, &shared, n, 0, 5.0);
        let blocks = alloc::vec![Some(b0), Some(b1)];
        let res = run_full_search(&blocks, &CcpConfig::default()).unwrap();
        assert_eq!(res[0].collection.label(), "1+2");
        assert_eq!(res[0].rank(), 1);
        assert!((res[0].basis.column(0).dot(&shared.column(0)).abs() - 1.0).abs() < 1e-6);
        assert_eq!(res[1].rank(), 0);
        assert_eq!(res[2].rank(), 0);
    }

    #[test]
    fn lone_block_spans_its_own_signal() {
        let mut rng = stream(53, 0);
        let n = 10;
        let shared = DMatrix::zeros(n, 0);
        let b = toy_block(&mut rng, &shared, n, 2, 3.0);
        let vc = b.v_check.clone();
        let res = run_full_search(&[Some(b)], &CcpConfig::default()).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].rank(), 2);
        let ang = crate::angles::max_principal_angle(&vc, &res[0].basis).unwrap();
        assert!(ang <= 3.0 + 0.05, "{ang}");
    }
}
