//! Invariant suite shared by the `verify` command and the acceptance tests.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collapse_lab::{collapse_run, collapse_verdict, CollapseConfig, Verdict, Witness, KERNEL_TOL};
use crate::exec::{map_indexed, Execution};
use crate::flag_model::{t_root_table, FlagSpec};
use crate::flow_engine::{classify_limit, find_equilibria, integrate_batch, FlowTolerances, LimitClass};
use crate::orbit_lab::{build_model, induced_metric, torus_pair_from_frame};
use crate::realization::{mu_k, mu_linear, rank1_decompose, tau, FrameMatrix, PsdMatrix};
use crate::ricci_field::{cone_f, dot3, grad_f, norm3, CubicField, MetricCoords};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (passed, detail) = f();
    Check { name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random point of the cone boundary `F = 0` in the open orthant, scaled by
/// a random factor in `[0.1, 10)`.
pub fn cone_point<R: Rng + ?Sized>(r: &mut R) -> [f64; 3] {
    let (a, b): (f64, f64) = (r.random_range(0.05..1.0), r.random_range(0.05..1.0));
    let s = if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let scale = r.random_range(0.1..10.0);
    let mut x = [a * a, b * b, (a + s * b).powi(2)];
    // Permute so every coordinate plays the role of the sum.
    x.rotate_left(r.random_range(0..3));
    x.map(|v| v * scale)
}

/// Uniform point of the disk `F ≤ 0` in the simplex, or of its boundary circle.
pub fn disk_point<R: Rng + ?Sized>(r: &mut R, on_circle: bool) -> MetricCoords {
    let radius = (1.0f64 / 6.0).sqrt();
    let rho = if on_circle { radius } else { radius * r.random::<f64>().sqrt() };
    let phi = r.random_range(0.0..std::f64::consts::TAU);
    let (e1, e2) = ([1.0, -1.0, 0.0].map(|v: f64| v / 2f64.sqrt()), [1.0, 1.0, -2.0].map(|v: f64| v / 6f64.sqrt()));
    let x: [f64; 3] = std::array::from_fn(|i| 1.0 / 3.0 + rho * (phi.cos() * e1[i] + phi.sin() * e2[i]));
    MetricCoords::normalized(x.map(|v| v.max(0.0))).expect("disk points are nonnegative")
}

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

/// `R·∇F = −8xyz(px + ny + mz)` on the cone for Type A.
pub fn check_flux_a(samples: usize, seed: u64) -> Check {
    timed("flux identity, type A", || {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        for (m, n, p) in [(1, 1, 1), (2, 1, 1), (3, 2, 1)] {
            let field = CubicField::new(&FlagSpec::a(m, n, p).unwrap());
            let (m, n, p) = (m as f64, n as f64, p as f64);
            for _ in 0..samples {
                let x = cone_point(&mut r);
                let (rv, g) = (field.eval(x), grad_f(x));
                let expected = -8.0 * x[0] * x[1] * x[2] * (p * x[0] + n * x[1] + m * x[2]);
                worst = worst.max(rel_err(dot3(rv, g), expected, norm3(rv) * norm3(g)));
            }
        }
        (worst <= 1e-9, format!("max relative error {worst:.3e} over {} cone points", 3 * samples))
    })
}

/// Sign of `R·∇F` on the cone for Type D, and the candidate closed form
/// `−8xyz((ℓ−2)(x+y)+2z)`.
pub fn check_flux_d(samples: usize, seed: u64) -> Check {
    timed("flux sign and closed form, type D", || {
        let mut r = rng(seed);
        let (mut max_flux, mut worst_rel) = (f64::NEG_INFINITY, 0.0f64);
        for ell in [4, 5, 8] {
            let field = CubicField::new(&FlagSpec::d(ell).unwrap());
            for _ in 0..samples {
                let x = cone_point(&mut r);
                let (rv, g) = (field.eval(x), grad_f(x));
                let flux = dot3(rv, g);
                let scale = norm3(rv) * norm3(g);
                max_flux = max_flux.max(flux / scale.max(1.0));
                worst_rel = worst_rel.max(rel_err(flux, field.flux_closed_form(x), scale));
            }
        }
        let closed_ok = worst_rel <= 1e-9;
        let detail = format!(
            "max flux {max_flux:.3e}; closed form -8xyz((l-2)(x+y)+2z) {} (max relative discrepancy {worst_rel:.3e})",
            if closed_ok { "holds" } else { "DOES NOT hold" }
        );
        (max_flux <= 1e-10 && closed_ok, detail)
    })
}

/// The Einstein metrics of A(1,1,1) are found with `R = λx`.
pub fn check_einstein_a111() -> Check {
    timed("Einstein set of A(1,1,1)", || {
        let spec = FlagSpec::a(1, 1, 1).unwrap();
        let Ok(eqs) = find_equilibria(&spec, 25, 1e-13) else {
            return (false, "equilibrium search failed".into());
        };
        let third = 1.0 / 3.0;
        let targets = [[third, third, third], [0.25, 0.25, 0.5], [0.25, 0.5, 0.25], [0.5, 0.25, 0.25]];
        let mut worst = (0.0f64, 0.0f64);
        for t in targets {
            let best = eqs.iter().min_by(|a, b| dist(a.point.as_array(), t).total_cmp(&dist(b.point.as_array(), t)));
            let Some(e) = best else { return (false, "no equilibria".into()) };
            let x = e.point.as_array();
            let rv = CubicField::new(&spec).eval(x);
            let resid = norm3(std::array::from_fn(|i| rv[i] - e.lambda * x[i]));
            worst = (worst.0.max(dist(x, t)), worst.1.max(resid));
        }
        (worst.0 <= 1e-8 && worst.1 <= 1e-8, format!("{} equilibria; max point error {:.3e}, max |R - lx| {:.3e}", eqs.len(), worst.0, worst.1))
    })
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// Trajectories started in the disk keep `F ≤ 1e-8`.
pub fn check_disk_invariance(trajectories: usize, on_circle: usize, t_end: f64, seed: u64, exec: Execution) -> Check {
    timed("disk forward invariance", || {
        let mut r = rng(seed);
        let starts: Vec<MetricCoords> = (0..trajectories).map(|i| disk_point(&mut r, i < on_circle)).collect();
        let spec = FlagSpec::a(1, 1, 1).unwrap();
        let runs = integrate_batch(&spec, &starts, t_end, FlowTolerances::default(), exec);
        let mut max_f = f64::NEG_INFINITY;
        for run in runs {
            match run {
                Ok(traj) => max_f = max_f.max(traj.max_f()),
                Err(e) => return (false, format!("integration failed: {e}")),
            }
        }
        (max_f <= 1e-8, format!("{trajectories} trajectories ({on_circle} on the circle) to t = {t_end}; max F {max_f:.3e}"))
    })
}

/// τ on the worked examples, and `μ⁽²⁾ ∘ τ = id` on the cone.
pub fn check_tau(samples: usize, seed: u64) -> Check {
    timed("tau realization", || {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cases = [([0.5, 0.5, 0.0], [[0.5, -0.5], [-0.5, 0.5]]), ([0.5, 0.0, 0.5], [[h, 0.0], [0.0, 0.0]])];
        let mut example_err = 0.0f64;
        for (x, want) in cases {
            let Ok(f) = tau(x) else { return (false, format!("tau failed at {x:?}")) };
            for i in 0..2 {
                for j in 0..2 {
                    example_err = example_err.max((f.matrix()[(i, j)] - want[i][j]).abs());
                }
            }
        }
        let table = t_root_table(&FlagSpec::a(1, 1, 1).unwrap());
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        for k in 0..samples {
            let x = if k % 2 == 0 {
                cone_point(&mut r)
            } else {
                let s = r.random_range(0.1..10.0);
                disk_point(&mut r, false).as_array().map(|v| v * s)
            };
            let back = tau(x).and_then(|f| mu_k(&table, &f)).map(|m| m.as_array());
            let Ok(back) = back else { return (false, format!("tau failed at {x:?}")) };
            let scale = x.iter().fold(0.0f64, |m, v| m.max(*v));
            worst = worst.max((0..3).map(|i| rel_err(back[i], x[i], scale)).fold(0.0, f64::max));
        }
        (
            example_err <= 1e-12 && worst <= 1e-9,
            format!("worked examples error {example_err:.3e}; mu o tau identity error {worst:.3e} over {samples} points"),
        )
    })
}

/// The induced metric of an orbit in 𝔤² agrees with `μ⁽²⁾` of its frame.
pub fn check_oracle(pairs: usize, seed: u64, exec: Execution) -> Check {
    timed("induced metric equals mu_k", || {
        let mut worst = (0.0f64, 0.0f64);
        for (bi, blocks) in [(1, 1, 1), (2, 1, 1)].into_iter().enumerate() {
            let model = build_model(blocks.0, blocks.1, blocks.2).unwrap();
            let spec = FlagSpec::a(blocks.0 as i64, blocks.1 as i64, blocks.2 as i64).unwrap();
            let table = t_root_table(&spec);
            let results = map_indexed(exec, pairs, |k| {
                let mut r = rng(seed ^ ((bi as u64) << 32) ^ k as u64);
                let cols: Vec<[f64; 2]> = (0..2).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
                let frame = FrameMatrix::from_columns(&cols);
                let (h1, h2) = torus_pair_from_frame(&model, &frame);
                let g = induced_metric(&model, &h1, &h2).map_err(|e| e.to_string())?;
                let mu = mu_k(&table, &frame).map_err(|e| e.to_string())?.as_array();
                let scale = mu.iter().fold(0.0f64, |m, v| m.max(*v));
                let rel = (0..3).map(|i| rel_err(g.coords[i], mu[i], scale)).fold(0.0, f64::max);
                Ok::<_, String>((rel, g.residual))
            });
            for res in results {
                match res {
                    Ok((rel, resid)) => worst = (worst.0.max(rel), worst.1.max(resid)),
                    Err(e) => return (false, e),
                }
            }
        }
        (
            worst.0 <= 1e-8 && worst.1 <= 1e-8,
            format!("{pairs} pairs per model; max relative error {:.3e}, max isotypic residual {:.3e}", worst.0, worst.1),
        )
    })
}

/// PSD 2×2 matrices split into rank-one pieces whose μ-images lie on the
/// cone boundary and sum to μ of the whole.
pub fn check_convex_hull(samples: usize, seed: u64) -> Check {
    timed("convex hull of rank-one images", || {
        let mut r = rng(seed);
        let (mut recon, mut lin, mut on_cone) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..samples {
            let g = DMatrix::from_fn(2, 2, |_, _| r.random_range(-1.0..1.0));
            let g = if k % 5 == 0 { DMatrix::from_fn(2, 2, |i, j| g[(i, 0)] * if j == 0 { 1.0 } else { 0.0 }) } else { g };
            let Ok(y) = PsdMatrix::new(&g * g.transpose()) else { return (false, "random Gram not PSD".into()) };
            let parts = rank1_decompose(&y);
            let mut sum = DMatrix::zeros(2, 2);
            let mut mu_sum = [0.0; 3];
            for (w, p) in &parts {
                sum += p.matrix() * *w;
                let mp = mu_linear(p).as_array();
                on_cone = on_cone.max(cone_f(mp).abs() / dot3(mp, mp).max(1e-300));
                for i in 0..3 {
                    mu_sum[i] += w * mp[i];
                }
            }
            let scale = y.matrix().amax().max(1e-300);
            recon = recon.max((sum - y.matrix()).amax() / scale);
            let whole = mu_linear(&y).as_array();
            lin = lin.max((0..3).map(|i| (whole[i] - mu_sum[i]).abs() / scale).fold(0.0, f64::max));
        }
        (
            recon <= 1e-10 && lin <= 1e-10 && on_cone <= 1e-10,
            format!("reconstruction {recon:.3e}; mu linearity {lin:.3e}; rank-one images off the cone boundary by {on_cone:.3e}"),
        )
    })
}

/// Midpoints realizable, vertices not, in the su(3) model.
pub fn check_verdicts() -> Check {
    timed("collapse verdicts on su(3)", || {
        let model = build_model(1, 1, 1).unwrap();
        let mut notes = Vec::new();
        let mut ok = true;
        for x in [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]] {
            let v = collapse_verdict(&model, &MetricCoords::on_simplex(x).unwrap(), KERNEL_TOL);
            ok &= v.verdict == Verdict::Realizable;
            notes.push(format!("{x:?} {:?}", v.verdict));
        }
        for i in 0..3 {
            let v = collapse_verdict(&model, &MetricCoords::vertex(i), KERNEL_TOL);
            match &v.witness {
                Witness::Bracket(w) if v.verdict == Verdict::NonRealizable && w.residual > 10.0 * KERNEL_TOL => {
                    notes.push(format!("vertex {} non-realizable via [{}, {}]", i + 1, w.left, w.right));
                }
                _ => {
                    ok = false;
                    notes.push(format!("vertex {} {:?}", i + 1, v.verdict));
                }
            }
        }
        (ok, notes.join("; "))
    })
}

/// Start of the reference collapse run: inside the disk, flowing to a midpoint.
pub const COLLAPSE_START: [f64; 3] = [0.45, 0.4, 0.15];

/// Hausdorff distances to the limit orbit shrink along a flow line.
pub fn check_collapse_run(count: usize, seed: u64, exec: Execution) -> Check {
    timed("Hausdorff collapse run", || {
        let spec = FlagSpec::a(1, 1, 1).unwrap();
        let model = build_model(1, 1, 1).unwrap();
        let cfg = CollapseConfig { count, seed, ..Default::default() };
        let x0 = MetricCoords::on_simplex(COLLAPSE_START).unwrap();
        match collapse_run(&spec, &model, &x0, &cfg, exec) {
            Ok(prof) => {
                let c = prof.check(0.1, 2.0);
                let profile: Vec<String> = prof.rows.iter().map(|r| format!("{:.3e}", r.hausdorff)).collect();
                (
                    c.passed(),
                    format!(
                        "limit {:?}; profile [{}]; max rise {:.3e} (allowance {:.3e}); final {:.3e} vs 2x resolution {:.3e}",
                        prof.limit.as_array(),
                        profile.join(", "),
                        c.max_increase,
                        c.allowance,
                        c.final_distance,
                        c.final_bound
                    ),
                )
            }
            Err(e) => (false, e.to_string()),
        }
    })
}

/// Every interior start settles on an equilibrium.
pub fn check_no_recurrence(starts: usize, t_end: f64, seed: u64, exec: Execution) -> Check {
    timed("no recurrence", || {
        let spec = FlagSpec::a(1, 1, 1).unwrap();
        let Ok(eqs) = find_equilibria(&spec, 25, 1e-13) else {
            return (false, "equilibrium search failed".into());
        };
        let mut r = rng(seed);
        let xs: Vec<MetricCoords> = (0..starts).map(|_| disk_point(&mut r, false)).collect();
        let runs = integrate_batch(&spec, &xs, t_end, FlowTolerances::default(), exec);
        let mut undecided = 0;
        for run in runs {
            match run {
                Ok(traj) => undecided += usize::from(classify_limit(&traj, &eqs) == LimitClass::Undecided),
                Err(e) => return (false, format!("integration failed: {e}")),
            }
        }
        (undecided == 0, format!("{starts} starts to t = {t_end}; {undecided} undecided"))
    })
}

/// Sample sizes for [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub cone_samples: usize,
    pub trajectories: usize,
    pub on_circle: usize,
    pub torus_pairs: usize,
    pub psd_samples: usize,
    pub cloud_points: usize,
    pub recurrence_starts: usize,
    pub seed: u64,
}

impl SuiteOptions {
    pub fn full() -> Self {
        Self {
            cone_samples: 1000,
            trajectories: 200,
            on_circle: 50,
            torus_pairs: 100,
            psd_samples: 500,
            cloud_points: 2000,
            recurrence_starts: 100,
            seed: 0,
        }
    }

    pub fn quick() -> Self {
        Self {
            cone_samples: 200,
            trajectories: 40,
            on_circle: 10,
            torus_pairs: 20,
            psd_samples: 100,
            cloud_points: 400,
            recurrence_starts: 20,
            seed: 0,
        }
    }
}

/// Run every check; the order matches the acceptance numbering.
pub fn run_suite(opts: &SuiteOptions, exec: Execution) -> Vec<Check> {
    let s = opts.seed;
    vec![
        check_flux_a(opts.cone_samples, s),
        check_flux_d(opts.cone_samples, s.wrapping_add(1)),
        check_einstein_a111(),
        check_disk_invariance(opts.trajectories, opts.on_circle, 50.0, s.wrapping_add(2), exec),
        check_tau(opts.cone_samples.min(500), s.wrapping_add(3)),
        check_oracle(opts.torus_pairs, s.wrapping_add(4), exec),
        check_convex_hull(opts.psd_samples, s.wrapping_add(5)),
        check_verdicts(),
        check_collapse_run(opts.cloud_points, s.wrapping_add(6), exec),
        check_no_recurrence(opts.recurrence_starts, 200.0, s.wrapping_add(7), exec),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_points_are_where_they_claim() {
        let mut r = rng(1);
        for _ in 0..200 {
            let x = cone_point(&mut r);
            assert!(cone_f(x).abs() <= 1e-12 * dot3(x, x));
            let d = disk_point(&mut r, false);
            assert!(cone_f(d.as_array()) <= 1e-15);
            let c = disk_point(&mut r, true);
            assert!(cone_f(c.as_array()).abs() <= 1e-14);
        }
    }

    #[test]
    fn quick_suite_passes() {
        let checks = run_suite(&SuiteOptions::quick(), Execution::default());
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(checks.len(), 10);
    }
}
