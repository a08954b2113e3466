use flagflow::flow_engine::{integrate, integrate_batch, FlowTolerances};
use flagflow::{Execution, FlagSpec, MetricCoords};

fn endpoint(spec: &FlagSpec, x0: &MetricCoords, rtol: f64) -> ([f64; 3], usize) {
    let t = integrate(spec, x0, 3.0, rtol, rtol * 1e-2).unwrap();
    (t.last_state().as_array(), t.len())
}

#[test]
fn tolerance_scaling_matches_fifth_order() {
    let spec = FlagSpec::a(2, 1, 1).unwrap();
    let x0 = MetricCoords::on_simplex([0.6, 0.15, 0.25]).unwrap();
    let (reference, _) = endpoint(&spec, &x0, 1e-14);
    let tols = [1e-6, 1e-7, 1e-8, 1e-9, 1e-10];
    let runs: Vec<(f64, f64)> = tols
        .iter()
        .map(|&tol| {
            let (y, steps) = endpoint(&spec, &x0, tol);
            let err = (0..3).map(|i| (y[i] - reference[i]).abs()).fold(0.0, f64::max);
            (err, steps as f64)
        })
        .collect();
    for w in runs.windows(2) {
        assert!(w[1].0 < w[0].0, "error must shrink with the tolerance: {runs:?}");
    }
    // Steps grow like tol^(-1/5) for a fifth-order method: 10^(1/5) ≈ 1.58 per decade.
    let decades = (tols.len() - 1) as f64;
    let growth = (runs.last().unwrap().1 / runs[0].1).powf(1.0 / decades);
    assert!((1.3..2.0).contains(&growth), "step growth per decade {growth}");
    let gain = (runs[0].0 / runs.last().unwrap().0).powf(1.0 / decades);
    assert!(gain > 3.0, "error gain per decade {gain}");
}

#[test]
fn batch_matches_individual_runs() {
    let spec = FlagSpec::d(5).unwrap();
    let starts: Vec<MetricCoords> = [[0.2, 0.3, 0.5], [0.7, 0.2, 0.1], [0.34, 0.33, 0.33]]
        .into_iter()
        .map(|x| MetricCoords::on_simplex(x).unwrap())
        .collect();
    let tol = FlowTolerances::default();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let batch = integrate_batch(&spec, &starts, 10.0, tol, exec);
        for (x0, run) in starts.iter().zip(batch) {
            assert_eq!(run.unwrap(), integrate(&spec, x0, 10.0, tol.rtol, tol.atol).unwrap());
        }
    }
}
