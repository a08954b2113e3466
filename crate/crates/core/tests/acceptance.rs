//! Acceptance criteria 1 to 10 at full sample sizes.
//!
//! Each criterion prints one `PASS`/`FAIL` line and must also finish within
//! its runtime limit (the test profile is optimized).

use flagflow::verify::{self, Check, SuiteOptions};
use flagflow::Execution;
use std::io::Write;

fn report(number: usize, check: &Check, limit_secs: f64) -> bool {
    let ok = check.passed && check.seconds <= limit_secs;
    // Raw handle: bypasses libtest output capture.
    let _ = writeln!(
        std::io::stdout().lock(),
        "criterion {number:>2} {}: {} ({:.2}s, limit {limit_secs}s) {}",
        if ok { "PASS" } else { "FAIL" },
        check.name,
        check.seconds,
        check.detail
    );
    ok
}

#[test]
fn acceptance_criteria() {
    let opts = SuiteOptions::full();
    let exec = Execution::default();
    let s = opts.seed;
    let criteria: Vec<(Check, f64)> = vec![
        (verify::check_flux_a(1000, s), 1.0),
        (verify::check_flux_d(1000, s + 1), 1.0),
        (verify::check_einstein_a111(), 5.0),
        (verify::check_disk_invariance(200, 50, 50.0, s + 2, exec), 30.0),
        (verify::check_tau(500, s + 3), 5.0),
        (verify::check_oracle(100, s + 4, exec), 20.0),
        (verify::check_convex_hull(500, s + 5), 5.0),
        (verify::check_verdicts(), 5.0),
        (verify::check_collapse_run(2000, s + 6, exec), 180.0),
        (verify::check_no_recurrence(100, 200.0, s + 7, exec), 60.0),
    ];
    let failed: Vec<usize> = criteria
        .iter()
        .enumerate()
        .filter(|(i, (c, limit))| !report(i + 1, c, *limit))
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
