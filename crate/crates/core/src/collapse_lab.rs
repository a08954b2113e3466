//! Numerical checks of Gromov–Hausdorff collapse along the projected flow.
//!
//! Collapse is verified extrinsically: flow lines are realized as curves of
//! adjoint orbits in 𝔤² through τ, and the Hausdorff distance to the limit
//! orbit is measured on finite samples drawn with a shared seed.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{map_indexed, max_indexed, Execution};
use crate::flag_model::{Family, FlagSpec};
use crate::flow_engine::{classify_limit, find_equilibria, integrate_with_stops, FlowError, FlowTolerances, LimitClass};
use crate::orbit_lab::{sample_orbit_with, torus_pair_from_frame, LieModel, OrbitCloud, OrbitError};
use crate::realization::{compress_columns, in_disk, tau, DiskStatus, RealizationError, DISK_TOL};
use crate::ricci_field::MetricCoords;

/// Default threshold below which a metric coefficient counts as collapsed.
pub const KERNEL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollapseError {
    #[error("clouds live in different ambient spaces ({0} vs {1} coordinates)")]
    AmbientMismatch(usize, usize),
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("flag {spec} does not match the orbit model with blocks {blocks:?}")]
    ModelMismatch { spec: String, blocks: [usize; 3] },
    #[error("start point {0:?} lies outside the realizability disk")]
    OutsideDisk([f64; 3]),
    #[error("sample times must be non-empty, finite, nonnegative and sorted")]
    BadTimes,
    #[error("trajectory did not settle on an equilibrium by t = {0}")]
    Undecided(f64),
    #[error("limit {0:?} is an interior metric; nothing collapses")]
    NoCollapse([f64; 3]),
    #[error(
        "limit {point:?} is not realizable: [{}, {}] has a component of norm {:.3e} in m{}, so k + ker g is not a subalgebra",
        witness.left, witness.right, witness.residual, witness.summand + 1
    )]
    NonRealizable { point: [f64; 3], witness: BracketWitness },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Realization(#[from] RealizationError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

fn check_ambient(a: &OrbitCloud, b: &OrbitCloud) -> Result<(), CollapseError> {
    if a.n != b.n {
        return Err(CollapseError::AmbientMismatch(a.dim(), b.dim()));
    }
    if a.points.is_empty() || b.points.is_empty() {
        return Err(CollapseError::EmptyCloud);
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sup_{a∈A} min_{b∈B} ‖a − b‖²` in flattened coordinates.
fn directed_sq(a: &[Vec<f64>], b: &[Vec<f64>], exec: Execution) -> f64 {
    max_indexed(exec, a.len(), |i| b.iter().map(|q| sq_dist(&a[i], q)).fold(f64::INFINITY, f64::min))
}

/// Hausdorff distance under the ambient ⟨,⟩-norm.
pub fn hausdorff(a: &OrbitCloud, b: &OrbitCloud) -> Result<f64, CollapseError> {
    hausdorff_with(a, b, Execution::default())
}

pub fn hausdorff_with(a: &OrbitCloud, b: &OrbitCloud, exec: Execution) -> Result<f64, CollapseError> {
    check_ambient(a, b)?;
    let d = directed_sq(&a.points, &b.points, exec).max(directed_sq(&b.points, &a.points, exec));
    Ok((2.0 * a.n as f64 * d).sqrt())
}

/// Median nearest-neighbour ⟨,⟩-distance within a cloud.
pub fn sampling_resolution(cloud: &OrbitCloud, exec: Execution) -> f64 {
    let pts = &cloud.points;
    if pts.len() < 2 {
        return 0.0;
    }
    let mut nn = map_indexed(exec, pts.len(), |i| {
        pts.iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| sq_dist(&pts[i], q))
            .fold(f64::INFINITY, f64::min)
    });
    nn.sort_by(f64::total_cmp);
    let mid = nn.len() / 2;
    let med = if nn.len() % 2 == 0 { 0.5 * (nn[mid - 1] + nn[mid]) } else { nn[mid] };
    (2.0 * cloud.n as f64 * med).sqrt()
}

/// Dimension of the affine span of a cloud: singular values of the centered
/// point matrix above `rel_tol · σ_max`.
pub fn cloud_rank(cloud: &OrbitCloud, rel_tol: f64) -> usize {
    let (rows, cols) = (cloud.points.len(), cloud.dim());
    if rows == 0 {
        return 0;
    }
    let mut mean = vec![0.0; cols];
    for p in &cloud.points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / rows as f64;
        }
    }
    let centered = DMatrix::from_fn(rows, cols, |i, j| cloud.points[i][j] - mean[j]);
    let sv = centered.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * top).count()
}

/// Summands (0-based) whose coefficient is at most `tol`.
pub fn kernel_summands(x: &MetricCoords, tol: f64) -> Vec<usize> {
    (0..3).filter(|&i| x[i] <= tol).collect()
}

/// A bracket of two basis elements of `𝔨 ⊕ ⨁ mᵢ` leaving the span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketWitness {
    pub left: String,
    pub right: String,
    /// Summand receiving the offending component (0-based, serialized 1-based).
    #[serde(serialize_with = "one_based")]
    pub summand: usize,
    /// ⟨,⟩-norm of that component, relative to `‖left‖·‖right‖`.
    pub residual: f64,
}

/// Bracket closure of `𝔨 ⊕ ⨁_{i∈subset} mᵢ`; the first violation is returned.
pub fn is_subalgebra(model: &LieModel, subset: &[usize], tol: f64) -> (bool, Option<BracketWitness>) {
    let mut span = model.isotropy_basis().to_vec();
    for &i in subset {
        span.extend_from_slice(model.summand_basis(i));
    }
    let outside: Vec<usize> = (0..3).filter(|i| !subset.contains(i)).collect();
    for (ia, a) in span.iter().enumerate() {
        for b in &span[ia + 1..] {
            let br = model.bracket(&a.matrix, &b.matrix);
            let scale = model.norm(&a.matrix) * model.norm(&b.matrix);
            for &k in &outside {
                let residual = model.norm(&model.project_onto_summand(&br, k)) / scale;
                if residual > tol {
                    let w = BracketWitness { left: a.label.clone(), right: b.label.clone(), summand: k, residual };
                    return (false, Some(w));
                }
            }
        }
    }
    (true, None)
}

fn one_based<S: serde::Serializer>(i: &usize, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(*i as u64 + 1)
}

fn one_based_list<S: serde::Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|i| i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoCollapse,
    Realizable,
    NonRealizable,
}

/// Limit-orbit data for a realizable collapse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationWitness {
    /// τ at the limit, absent if the limit lies outside the disk.
    pub tau: Option<Vec<Vec<f64>>>,
    /// ω-coordinates of `(H₁, H₂)`, the columns of τ.
    pub h1: Option<[f64; 2]>,
    pub h2: Option<[f64; 2]>,
    /// Single-column frame when τ has rank ≤ 1 (the limit lies on 𝒞).
    pub compressed: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    None,
    Realization(RealizationWitness),
    Bracket(BracketWitness),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseVerdict {
    pub point: MetricCoords,
    /// Summands with `xᵢ ≤ tol` (0-based, serialized 1-based).
    #[serde(serialize_with = "one_based_list")]
    pub kernel_indices: Vec<usize>,
    pub verdict: Verdict,
    pub witness: Witness,
}

fn realization_witness(x: &MetricCoords) -> RealizationWitness {
    let Ok(frame) = tau(x.as_array()) else {
        return RealizationWitness { tau: None, h1: None, h2: None, compressed: None };
    };
    let col = |j: usize| {
        let c = frame.column(j);
        [c[0], c[1]]
    };
    let compressed = compress_columns(&frame, 1).ok().map(|(f, _)| {
        let c = f.column(0);
        [c[0], c[1]]
    });
    RealizationWitness { tau: Some(frame.to_rows()), h1: Some(col(0)), h2: Some(col(1)), compressed }
}

/// Classify the collapse at a boundary point of the simplex.
pub fn collapse_verdict(model: &LieModel, x: &MetricCoords, tol: f64) -> CollapseVerdict {
    let kernel = kernel_summands(x, tol);
    let (verdict, witness) = if kernel.is_empty() {
        (Verdict::NoCollapse, Witness::None)
    } else {
        match is_subalgebra(model, &kernel, tol) {
            (true, _) => (Verdict::Realizable, Witness::Realization(realization_witness(x))),
            (false, Some(w)) => (Verdict::NonRealizable, Witness::Bracket(w)),
            (false, None) => unreachable!("a failed closure test always carries a witness"),
        }
    };
    CollapseVerdict { point: *x, kernel_indices: kernel, verdict, witness }
}

/// Parameters of a [`collapse_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseConfig {
    pub times: Vec<f64>,
    pub count: usize,
    pub seed: u64,
    /// Horizon used to identify the limit equilibrium.
    pub t_limit: f64,
    pub tol: FlowTolerances,
    pub equilibrium_grid: usize,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            count: 2000,
            seed: 0,
            t_limit: 200.0,
            tol: FlowTolerances::default(),
            equilibrium_grid: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseRow {
    pub t: f64,
    pub x: MetricCoords,
    pub hausdorff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseProfile {
    pub rows: Vec<CollapseRow>,
    pub limit: MetricCoords,
    pub resolution: f64,
    pub verdict: CollapseVerdict,
}

/// Outcome of the profile shape check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileCheck {
    /// Largest rise between consecutive samples.
    pub max_increase: f64,
    pub allowance: f64,
    pub non_increasing: bool,
    pub final_distance: f64,
    pub final_bound: f64,
    pub converged: bool,
}

impl ProfileCheck {
    pub fn passed(&self) -> bool {
        self.non_increasing && self.converged
    }
}

impl CollapseProfile {
    /// Non-increasing up to `noise_frac` of the first distance, ending within
    /// `resolution_factor` sampling resolutions of the limit orbit.
    pub fn check(&self, noise_frac: f64, resolution_factor: f64) -> ProfileCheck {
        let d: Vec<f64> = self.rows.iter().map(|r| r.hausdorff).collect();
        let max_increase = d.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        let allowance = noise_frac * d.first().copied().unwrap_or(0.0);
        let final_distance = d.last().copied().unwrap_or(0.0);
        let final_bound = resolution_factor * self.resolution;
        ProfileCheck {
            max_increase,
            allowance,
            non_increasing: max_increase <= allowance,
            final_distance,
            final_bound,
            converged: final_distance <= final_bound,
        }
    }
}

fn check_model(spec: &FlagSpec, model: &LieModel) -> Result<(), CollapseError> {
    let ok = match spec.field_family() {
        Family::A { m, n, p } => [m, n, p].map(|v| v as usize) == model.blocks(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(CollapseError::ModelMismatch { spec: spec.to_string(), blocks: model.blocks() })
    }
}

fn realize_cloud(model: &LieModel, x: &MetricCoords, cfg: &CollapseConfig, exec: Execution) -> Result<OrbitCloud, CollapseError> {
    let frame = tau(x.as_array())?;
    let (h1, h2) = torus_pair_from_frame(model, &frame);
    Ok(sample_orbit_with(model, &h1, &h2, cfg.count, cfg.seed, exec)?)
}

/// Follow the flow from `x0`, realize each sampled metric as an orbit in 𝔤²
/// and measure its Hausdorff distance to the orbit of the limit metric.
pub fn collapse_run(
    spec: &FlagSpec,
    model: &LieModel,
    x0: &MetricCoords,
    cfg: &CollapseConfig,
    exec: Execution,
) -> Result<CollapseProfile, CollapseError> {
    check_model(spec, model)?;
    let times = &cfg.times;
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(CollapseError::BadTimes);
    }
    if in_disk(x0, DISK_TOL) == DiskStatus::Outside {
        return Err(CollapseError::OutsideDisk(x0.as_array()));
    }
    let t_max = cfg.t_limit.max(*times.last().unwrap()).max(f64::MIN_POSITIVE);
    let run = integrate_with_stops(spec, x0, t_max, cfg.tol, times)?;

    let equilibria = find_equilibria(spec, cfg.equilibrium_grid, 1e-12)?;
    let limit = match classify_limit(&run.trajectory, &equilibria) {
        LimitClass::Equilibrium { equilibrium, .. } => equilibrium.point,
        LimitClass::Undecided => return Err(CollapseError::Undecided(run.trajectory.final_time())),
    };
    let verdict = collapse_verdict(model, &limit, KERNEL_TOL);
    match &verdict.witness {
        Witness::None => return Err(CollapseError::NoCollapse(limit.as_array())),
        Witness::Bracket(w) => {
            return Err(CollapseError::NonRealizable { point: limit.as_array(), witness: w.clone() });
        }
        Witness::Realization(_) => {}
    }

    let limit_cloud = realize_cloud(model, &limit, cfg, exec)?;
    let resolution = sampling_resolution(&limit_cloud, exec);
    let mut rows = Vec::with_capacity(times.len());
    for (&t, x) in times.iter().zip(&run.at_stops) {
        let cloud = realize_cloud(model, x, cfg, exec)?;
        rows.push(CollapseRow { t, x: *x, hausdorff: hausdorff_with(&cloud, &limit_cloud, exec)? });
    }
    Ok(CollapseProfile { rows, limit, resolution, verdict })
}
