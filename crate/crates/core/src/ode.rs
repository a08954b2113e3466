//! Dormand–Prince 5(4) with PI step-size control.
//!
//! Small fixed-dimension states only; the right-hand side is an autonomous
//! field `f(y)`. The stepper is exposed one step at a time so callers can
//! post-process each accepted state (clamping, renormalization).

// Autonomous right-hand side: no stage nodes c_i.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// 5th-order weights (also the last row of A: the method is FSAL).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Difference between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step from `y` with stage `k1 = f(y)`.
/// Returns the 5th-order solution, its derivative (FSAL) and the error vector.
pub fn dp5_step<const D: usize, F>(f: &F, y: &[f64; D], k1: &[f64; D], h: f64) -> ([f64; D], [f64; D], [f64; D])
where
    F: Fn(&[f64; D]) -> [f64; D],
{
    let k2 = f(&axpy(y, h, &[(A21, k1)]));
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(&y_new);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, k7, err)
}

/// Fixed-step integration, used to check the order of the tableau.
pub fn dp5_fixed<const D: usize, F>(f: F, y0: [f64; D], t_end: f64, steps: usize) -> [f64; D]
where
    F: Fn(&[f64; D]) -> [f64; D],
{
    let h = t_end / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        let k1 = f(&y);
        y = dp5_step(&f, &y, &k1, h).0;
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    fn error_norm<const D: usize>(&self, y: &[f64; D], y_new: &[f64; D], err: &[f64; D]) -> f64 {
        let mut acc = 0.0;
        for i in 0..D {
            let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / D as f64).sqrt()
    }
}

/// Outcome of an attempted adaptive step.
#[derive(Debug, Clone, Copy)]
pub enum StepOutcome<const D: usize> {
    Accepted { y: [f64; D], h_used: f64 },
    Underflow { h: f64 },
    NonFinite,
}

/// Adaptive stepper carrying the PI controller state.
#[derive(Debug, Clone)]
pub struct Stepper<const D: usize> {
    tol: Tolerances,
    h: f64,
    err_prev: f64,
    h_min_rel: f64,
}

impl<const D: usize> Stepper<D> {
    pub fn new<F>(f: &F, y0: &[f64; D], span: f64, tol: Tolerances) -> Self
    where
        F: Fn(&[f64; D]) -> [f64; D],
    {
        Self {
            h: initial_step(f, y0, span, tol),
            tol,
            err_prev: 1e-4,
            h_min_rel: 1e-14,
        }
    }

    pub fn proposed_step(&self) -> f64 {
        self.h
    }

    /// Take one accepted step from `(t, y)` without passing `t_stop`.
    pub fn step<F>(&mut self, f: &F, t: f64, y: &[f64; D], t_stop: f64) -> StepOutcome<D>
    where
        F: Fn(&[f64; D]) -> [f64; D],
    {
        let k1 = f(y);
        let mut rejected = false;
        loop {
            let remaining = t_stop - t;
            let h = self.h.min(remaining);
            if h <= self.h_min_rel * t.abs().max(1.0) {
                return StepOutcome::Underflow { h };
            }
            let (y_new, _, err) = dp5_step(f, y, &k1, h);
            if y_new.iter().any(|v| !v.is_finite()) || err.iter().any(|v| !v.is_finite()) {
                if rejected && h < 1e-10 {
                    return StepOutcome::NonFinite;
                }
                self.h = h * FAC_MIN;
                rejected = true;
                continue;
            }
            let e = self.tol.error_norm(y, &y_new, &err);
            if e <= 1.0 {
                let fac = if e == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * e.powf(-ALPHA) * self.err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
                };
                let fac = if rejected { fac.min(1.0) } else { fac };
                self.err_prev = e.max(1e-4);
                // Do not let a step clipped at a stop point shrink the controller.
                self.h = self.h.max(h) * fac;
                return StepOutcome::Accepted { y: y_new, h_used: h };
            }
            self.h = h * (SAFETY * e.powf(-ALPHA)).max(FAC_MIN);
            rejected = true;
        }
    }
}

fn initial_step<const D: usize, F>(f: &F, y0: &[f64; D], span: f64, tol: Tolerances) -> f64
where
    F: Fn(&[f64; D]) -> [f64; D],
{
    let f0 = f(y0);
    let sc: Vec<f64> = y0.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let rms = |v: &[f64; D]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / D as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(&f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y0, h0, &[(1.0, &f0)]);
    let f1 = f(&y1);
    let mut diff = [0.0; D];
    for i in 0..D {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span.abs()).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(y: &[f64; 2]) -> [f64; 2] {
        [-y[1], y[0]]
    }

    #[test]
    fn fixed_step_order_is_five() {
        let exact = [1.0f64.cos(), 1.0f64.sin()];
        let err = |n| {
            let y = dp5_fixed(rotation, [1.0, 0.0], 1.0, n);
            ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt()
        };
        let (e1, e2) = (err(8), err(16));
        let ratio = e1 / e2;
        assert!((24.0..40.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn adaptive_stepper_tracks_exponential() {
        let f = |y: &[f64; 1]| [-y[0]];
        let tol = Tolerances { rtol: 1e-10, atol: 1e-12 };
        let mut st = Stepper::new(&f, &[1.0], 5.0, tol);
        let (mut t, mut y) = (0.0, [1.0]);
        while t < 5.0 {
            match st.step(&f, t, &y, 5.0) {
                StepOutcome::Accepted { y: yn, h_used } => {
                    t += h_used;
                    y = yn;
                }
                other => panic!("{other:?}"),
            }
        }
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = |y: &[f64; 1]| [y[0] * y[0]];
        let tol = Tolerances { rtol: 1e-8, atol: 1e-10 };
        let mut st = Stepper::new(&f, &[1.0], 2.0, tol);
        let (mut t, mut y) = (0.0, [1.0]);
        let mut failed = false;
        for _ in 0..100_000 {
            match st.step(&f, t, &y, 2.0) {
                StepOutcome::Accepted { y: yn, h_used } => {
                    t += h_used;
                    y = yn;
                    if t >= 2.0 {
                        break;
                    }
                }
                _ => {
                    failed = true;
                    break;
                }
            }
        }
        assert!(failed && t < 1.0 + 1e-6, "t = {t}");
    }
}
