//! Integration of the projected Ricci flow and its equilibria.
//!
//! Trajectories live on the closed simplex `x₁ + x₂ + x₃ = 1`. After each
//! accepted step tiny coordinates are clamped to zero and the state is
//! renormalized, which keeps faces invariant to the last bit (the field is
//! already face-tangent; this only removes roundoff drift).
//!
//! Equilibria are the zeros of the reduced field `Y(u, v)` on the projected
//! simplex, found by Newton iteration from a seed grid. At an equilibrium the
//! Einstein condition `R(x) = λx` holds and λ is reported with the point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, map_slice, Execution};
use crate::flag_model::FlagSpec;
use crate::ode::{StepOutcome, Stepper, Tolerances};
use crate::ricci_field::{cone_f, dot3, norm3, CubicField, FieldError, MetricCoords};

/// Coordinates below this magnitude are set to zero after each step.
pub const CLAMP_EPS: f64 = 1e-14;
/// A state with `‖X‖` below this is treated as an equilibrium.
pub const EQUILIBRIUM_SPEED: f64 = 1e-12;
/// Eigenvalues with modulus below this are considered zero.
pub const ZERO_EIGENVALUE: f64 = 1e-7;
/// Radius for merging Newton roots.
pub const DEDUP_RADIUS: f64 = 1e-6;
/// Maximal distance between a trajectory end and its limit equilibrium.
pub const LIMIT_RADIUS: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("t_max must be positive and finite, got {0}")]
    InvalidTMax(f64),
    #[error("tolerances must be positive, got rtol={rtol}, atol={atol}")]
    InvalidTolerance { rtol: f64, atol: f64 },
    #[error("stop times must be nonnegative and nondecreasing")]
    InvalidStops,
    #[error("step size underflow at t={t} (h={h}); last valid state {state:?}")]
    StepUnderflow { t: f64, h: f64, state: [f64; 3] },
    #[error("non-finite state encountered after t={t}; last valid state {state:?}")]
    NonFinite { t: f64, state: [f64; 3] },
    #[error("seed grid must have at least 10 points per side, got {0}")]
    GridTooSmall(usize),
}

/// Per-state diagnostics of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Cone function at the state.
    pub f: f64,
    /// `|Σxᵢ − 1|` of the raw step result, before renormalization.
    pub sum_residual: f64,
    /// Step size that produced the state (0 for the initial state).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTMax,
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MetricCoords>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> MetricCoords {
        *self.states.last().expect("trajectory has an initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial state")
    }

    pub fn max_f(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.f).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_sum_residual(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.sum_residual).fold(0.0, f64::max)
    }
}

/// Integration tolerances for the projected flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowTolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for FlowTolerances {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12 }
    }
}

impl FlowTolerances {
    fn validate(&self) -> Result<(), FlowError> {
        if self.rtol > 0.0 && self.atol > 0.0 && self.rtol.is_finite() && self.atol.is_finite() {
            Ok(())
        } else {
            Err(FlowError::InvalidTolerance { rtol: self.rtol, atol: self.atol })
        }
    }
}

fn clamp_and_renormalize(y: [f64; 3]) -> ([f64; 3], f64) {
    let residual = (y[0] + y[1] + y[2] - 1.0).abs();
    let mut c = y;
    for v in &mut c {
        if *v < CLAMP_EPS {
            *v = 0.0;
        }
    }
    let s = c[0] + c[1] + c[2];
    (c.map(|v| v / s), residual)
}

/// Output of [`integrate_with_stops`]: the full trajectory plus the states
/// at the requested stop times.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedRun {
    pub trajectory: Trajectory,
    pub at_stops: Vec<MetricCoords>,
}

/// Integrate the projected flow from `x0` to `t_max`.
pub fn integrate(spec: &FlagSpec, x0: &MetricCoords, t_max: f64, rtol: f64, atol: f64) -> Result<Trajectory, FlowError> {
    integrate_with_stops(spec, x0, t_max, FlowTolerances { rtol, atol }, &[]).map(|r| r.trajectory)
}

/// Integrate to `t_max`, landing exactly on every time in `stops`.
///
/// If the run settles on an equilibrium before a stop time, the state at that
/// stop is the equilibrium state.
pub fn integrate_with_stops(
    spec: &FlagSpec,
    x0: &MetricCoords,
    t_max: f64,
    tol: FlowTolerances,
    stops: &[f64],
) -> Result<StoppedRun, FlowError> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(FlowError::InvalidTMax(t_max));
    }
    tol.validate()?;
    if stops.iter().any(|t| t.is_nan() || *t < 0.0 || *t > t_max) || stops.windows(2).any(|w| w[1] < w[0]) {
        return Err(FlowError::InvalidStops);
    }
    let x0 = MetricCoords::on_simplex(x0.as_array()).map_err(FlowError::from)?;

    let field = CubicField::new(spec);
    let rhs = |y: &[f64; 3]| field.projected(*y);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0],
        diagnostics: vec![StepDiagnostics { f: cone_f(x0.as_array()), sum_residual: 0.0, step: 0.0 }],
        termination: Termination::ReachedTMax,
    };
    let mut at_stops = Vec::with_capacity(stops.len());
    let mut next_stop = 0;
    let mut t = 0.0;
    let mut y = x0.as_array();
    while next_stop < stops.len() && stops[next_stop] <= t {
        at_stops.push(x0);
        next_stop += 1;
    }
    if norm3(rhs(&y)) < EQUILIBRIUM_SPEED {
        traj.termination = Termination::Equilibrium;
        at_stops.resize(stops.len(), x0);
        return Ok(StoppedRun { trajectory: traj, at_stops });
    }

    let mut stepper = Stepper::new(&rhs, &y, t_max, Tolerances { rtol: tol.rtol, atol: tol.atol });
    loop {
        let target = stops.get(next_stop).copied().unwrap_or(t_max).min(t_max);
        match stepper.step(&rhs, t, &y, target) {
            StepOutcome::Accepted { y: raw, h_used } => {
                let (state, residual) = clamp_and_renormalize(raw);
                // Snap onto the target when the remaining gap is roundoff.
                t = if target - (t + h_used) <= 1e-12 * target.max(1.0) { target } else { t + h_used };
                y = state;
                let coords = MetricCoords::new(state).map_err(FlowError::from)?;
                traj.times.push(t);
                traj.states.push(coords);
                traj.diagnostics.push(StepDiagnostics { f: cone_f(state), sum_residual: residual, step: h_used });
                while next_stop < stops.len() && stops[next_stop] <= t {
                    at_stops.push(coords);
                    next_stop += 1;
                }
                if t >= t_max {
                    break;
                }
                if norm3(rhs(&y)) < EQUILIBRIUM_SPEED {
                    traj.termination = Termination::Equilibrium;
                    break;
                }
            }
            StepOutcome::Underflow { h } => {
                return Err(FlowError::StepUnderflow { t, h, state: y });
            }
            StepOutcome::NonFinite => {
                return Err(FlowError::NonFinite { t, state: y });
            }
        }
    }
    let last = traj.last_state();
    at_stops.resize(stops.len(), last);
    Ok(StoppedRun { trajectory: traj, at_stops })
}

/// Integrate many independent starts.
pub fn integrate_batch(
    spec: &FlagSpec,
    starts: &[MetricCoords],
    t_max: f64,
    tol: FlowTolerances,
    exec: Execution,
) -> Vec<Result<Trajectory, FlowError>> {
    map_slice(exec, starts, |x0| integrate(spec, x0, t_max, tol.rtol, tol.atol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Sink,
    Source,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Interior,
    Face,
    Vertex,
}

/// An Einstein metric on the simplex, `R(x) = λx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub point: MetricCoords,
    pub lambda: f64,
    pub stability: Stability,
    pub location: Location,
}

/// Finite-difference Jacobian of a planar field.
///
/// Central differences when both stencil points stay in the closed projected
/// simplex; otherwise a second-order one-sided stencil pointing into it. If
/// neither fits (a direction tangent to the hypotenuse at a corner), the
/// central stencil is used on the polynomial extension.
pub fn jacobian<F>(field: F, p: [f64; 2], h: f64) -> [[f64; 2]; 2]
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let inside = |q: [f64; 2]| q[0] >= 0.0 && q[1] >= 0.0 && q[0] + q[1] <= 1.0;
    let mut jac = [[0.0; 2]; 2];
    for k in 0..2 {
        let step = h * p[k].abs().max(1.0);
        let at = |s: f64| {
            let mut q = p;
            q[k] += s;
            q
        };
        let col = if inside(at(step)) && inside(at(-step)) || !inside(p) {
            let (a, b) = (field(at(step)), field(at(-step)));
            [(a[0] - b[0]) / (2.0 * step), (a[1] - b[1]) / (2.0 * step)]
        } else if inside(at(2.0 * step)) {
            let (f0, f1, f2) = (field(p), field(at(step)), field(at(2.0 * step)));
            [
                (-3.0 * f0[0] + 4.0 * f1[0] - f2[0]) / (2.0 * step),
                (-3.0 * f0[1] + 4.0 * f1[1] - f2[1]) / (2.0 * step),
            ]
        } else if inside(at(-2.0 * step)) {
            let (f0, f1, f2) = (field(p), field(at(-step)), field(at(-2.0 * step)));
            [
                (3.0 * f0[0] - 4.0 * f1[0] + f2[0]) / (2.0 * step),
                (3.0 * f0[1] - 4.0 * f1[1] + f2[1]) / (2.0 * step),
            ]
        } else {
            let (a, b) = (field(at(step)), field(at(-step)));
            [(a[0] - b[0]) / (2.0 * step), (a[1] - b[1]) / (2.0 * step)]
        };
        jac[0][k] = col[0];
        jac[1][k] = col[1];
    }
    jac
}

/// Eigenvalues of a real 2×2 matrix as `(re, im)` pairs.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(half + s, 0.0), (half - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(half, s), (half, -s)]
    }
}

pub fn classify_stability(jac: [[f64; 2]; 2]) -> Stability {
    let ev = eigenvalues_2x2(jac);
    if ev.iter().any(|(re, _)| re.abs() < ZERO_EIGENVALUE) {
        return Stability::Degenerate;
    }
    match (ev[0].0 > 0.0, ev[1].0 > 0.0) {
        (true, true) => Stability::Source,
        (false, false) => Stability::Sink,
        _ => Stability::Saddle,
    }
}

fn locate(x: [f64; 3]) -> Location {
    match x.iter().filter(|v| **v == 0.0).count() {
        0 => Location::Interior,
        1 => Location::Face,
        _ => Location::Vertex,
    }
}

fn newton_root(field: &CubicField, seed: [f64; 2], newton_tol: f64) -> Option<[f64; 2]> {
    let y = |q: [f64; 2]| field.reduced(q);
    let mut p = seed;
    let mut converged_iters = 0;
    for _ in 0..80 {
        let r = y(p);
        let rn = r[0].hypot(r[1]);
        if !rn.is_finite() || p[0].abs() > 10.0 || p[1].abs() > 10.0 {
            return None;
        }
        if rn <= newton_tol {
            // A couple of extra iterations polish the root below the tolerance.
            converged_iters += 1;
            if converged_iters > 2 || rn == 0.0 {
                return Some(p);
            }
        }
        let j = central_jacobian(&y, p, 1e-7);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return if rn <= newton_tol { Some(p) } else { None };
        }
        let du = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dv = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        p = [p[0] - du, p[1] - dv];
    }
    let r = y(p);
    (r[0].hypot(r[1]) <= newton_tol).then_some(p)
}

fn central_jacobian<F: Fn([f64; 2]) -> [f64; 2]>(f: &F, p: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let mut j = [[0.0; 2]; 2];
    for k in 0..2 {
        let mut a = p;
        let mut b = p;
        a[k] += h;
        b[k] -= h;
        let (fa, fb) = (f(a), f(b));
        j[0][k] = (fa[0] - fb[0]) / (2.0 * h);
        j[1][k] = (fa[1] - fb[1]) / (2.0 * h);
    }
    j
}

/// Snap a root onto the closed simplex, or reject it.
fn snap_to_simplex(p: [f64; 2]) -> Option<[f64; 3]> {
    const SLACK: f64 = 1e-9;
    let mut x = [p[0], p[1], 1.0 - p[0] - p[1]];
    if x.iter().any(|v| *v < -SLACK) {
        return None;
    }
    for v in &mut x {
        if *v < 1e-12 {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    Some(x.map(|v| v / s))
}

/// Locate the equilibria of the projected flow from a `grid_n × grid_n`
/// barycentric seed grid.
pub fn find_equilibria(spec: &FlagSpec, grid_n: usize, newton_tol: f64) -> Result<Vec<Equilibrium>, FlowError> {
    find_equilibria_with(spec, grid_n, newton_tol, Execution::default())
}

pub fn find_equilibria_with(
    spec: &FlagSpec,
    grid_n: usize,
    newton_tol: f64,
    exec: Execution,
) -> Result<Vec<Equilibrium>, FlowError> {
    if grid_n < 10 {
        return Err(FlowError::GridTooSmall(grid_n));
    }
    let field = CubicField::new(spec);
    let step = 1.0 / (grid_n - 1) as f64;
    let seeds: Vec<[f64; 2]> = (0..grid_n)
        .flat_map(|i| (0..grid_n - i).map(move |j| [i as f64 * step, j as f64 * step]))
        .collect();
    let roots = map_slice(exec, &seeds, |s| newton_root(&field, *s, newton_tol).and_then(snap_to_simplex));

    let mut unique: Vec<[f64; 3]> = Vec::new();
    for x in roots.into_iter().flatten() {
        let dup = unique.iter().any(|u| {
            let d = [u[0] - x[0], u[1] - x[1], u[2] - x[2]];
            norm3(d) < DEDUP_RADIUS
        });
        if !dup {
            unique.push(x);
        }
    }
    let candidates = map_indexed(exec, unique.len(), |i| to_equilibrium(&field, unique[i]));
    let mut out: Vec<Equilibrium> = candidates.into_iter().flatten().collect();
    out.sort_by(|a, b| {
        let (pa, pb) = (a.point.as_array(), b.point.as_array());
        pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1]))
    });
    if out.is_empty() {
        log::warn!("no equilibria found for {spec} with grid {grid_n}");
    }
    Ok(out)
}

fn to_equilibrium(field: &CubicField, x: [f64; 3]) -> Option<Equilibrium> {
    let r = field.eval(x);
    let lambda = dot3(r, x) / dot3(x, x);
    let resid = norm3([r[0] - lambda * x[0], r[1] - lambda * x[1], r[2] - lambda * x[2]]);
    if resid > 1e-8 * norm3(r) + 1e-12 {
        log::debug!("dropping Newton root {x:?}: Einstein residual {resid:e}");
        return None;
    }
    let jac = jacobian(|q| field.reduced(q), [x[0], x[1]], 1e-6);
    Some(Equilibrium {
        point: MetricCoords::new(x).ok()?,
        lambda,
        stability: classify_stability(jac),
        location: locate(x),
    })
}

/// Where a trajectory ended up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitClass {
    Equilibrium { index: usize, equilibrium: Equilibrium, distance: f64 },
    Undecided,
}

impl LimitClass {
    pub fn equilibrium(&self) -> Option<&Equilibrium> {
        match self {
            LimitClass::Equilibrium { equilibrium, .. } => Some(equilibrium),
            LimitClass::Undecided => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            LimitClass::Equilibrium { equilibrium, .. } => {
                let [a, b, c] = equilibrium.point.as_array();
                format!("({a:.6} {b:.6} {c:.6})")
            }
            LimitClass::Undecided => "undecided".into(),
        }
    }
}

/// Nearest equilibrium to the final state within [`LIMIT_RADIUS`].
pub fn classify_limit(traj: &Trajectory, equilibria: &[Equilibrium]) -> LimitClass {
    let last = traj.last_state().as_array();
    equilibria
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = e.point.as_array();
            (i, norm3([p[0] - last[0], p[1] - last[1], p[2] - last[2]]))
        })
        .filter(|(_, d)| *d <= LIMIT_RADIUS)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(LimitClass::Undecided, |(index, distance)| LimitClass::Equilibrium {
            index,
            equilibrium: equilibria[index],
            distance,
        })
}
