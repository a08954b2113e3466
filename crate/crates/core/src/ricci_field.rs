//! Cubic Ricci vector fields, the projected field on the simplex and the
//! realizability cone `F(x) = x² + y² + z² − 2(xy + xz + yz)`.
//!
//! Coordinates `(x, y, z) = (x₁, x₂, x₃)` are the coefficients of the metric
//! relative to the negative Killing form on each isotropy summand. The Ricci
//! fields below are the homogeneous cubic polynomial fields `fR`; every
//! component carries its own coordinate as a factor, so coordinate planes are
//! invariant exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flag_model::{Family, FlagSpec};

/// Default tolerance for `|F(x)|` when a point is required to lie on the cone.
pub const CONE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("metric coordinates must be finite and nonnegative, got {0:?}")]
    InvalidCoords([f64; 3]),
    #[error("point {point:?} is not on the simplex (sum {sum})")]
    OffSimplex { point: [f64; 3], sum: f64 },
    #[error("point {point:?} is off the cone: |F| = {f} > {tol}")]
    OffCone { point: [f64; 3], f: f64, tol: f64 },
    #[error("point {0:?} is outside the projected simplex")]
    OutsideProjectedSimplex([f64; 2]),
}

/// Nonnegative metric coefficients `(x₁, x₂, x₃)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricCoords([f64; 3]);

impl MetricCoords {
    pub fn new(x: [f64; 3]) -> Result<Self, FieldError> {
        if x.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(Self(x))
        } else {
            Err(FieldError::InvalidCoords(x))
        }
    }

    /// A point of the closed simplex `x₁ + x₂ + x₃ = 1`, checked to 1e-12.
    pub fn on_simplex(x: [f64; 3]) -> Result<Self, FieldError> {
        let c = Self::new(x)?;
        let sum = c.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(FieldError::OffSimplex { point: x, sum });
        }
        Ok(c)
    }

    /// Rescale a nonzero point of the orthant onto the simplex.
    pub fn normalized(x: [f64; 3]) -> Result<Self, FieldError> {
        let c = Self::new(x)?;
        let s = c.sum();
        if s <= 0.0 {
            return Err(FieldError::OffSimplex { point: x, sum: s });
        }
        Ok(Self([x[0] / s, x[1] / s, x[2] / s]))
    }

    pub fn vertex(i: usize) -> Self {
        let mut x = [0.0; 3];
        x[i] = 1.0;
        Self(x)
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_on_simplex(&self, tol: f64) -> bool {
        (self.sum() - 1.0).abs() <= tol
    }

    pub fn project(&self) -> SimplexPoint2 {
        SimplexPoint2 {
            u: self.0[0],
            v: self.0[1],
        }
    }
}

impl std::ops::Index<usize> for MetricCoords {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Image of a simplex point under `P(x₁, x₂, x₃) = (x₁, x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint2 {
    pub u: f64,
    pub v: f64,
}

impl SimplexPoint2 {
    pub fn new(u: f64, v: f64) -> Result<Self, FieldError> {
        let p = Self { u, v };
        if p.in_closed(0.0) {
            Ok(p)
        } else {
            Err(FieldError::OutsideProjectedSimplex([u, v]))
        }
    }

    pub fn in_closed(&self, tol: f64) -> bool {
        self.u >= -tol && self.v >= -tol && self.u + self.v <= 1.0 + tol
    }

    /// `P⁻¹(u, v) = (u, v, 1 − u − v)`.
    pub fn lift(&self) -> [f64; 3] {
        [self.u, self.v, 1.0 - self.u - self.v]
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

/// Coefficients of the cubic field of one flag, resolved once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CubicField {
    /// SU(m+n+p)/S(U(m)×U(n)×U(p)); also used for E with m = n = p = 1.
    A { m: f64, n: f64, p: f64 },
    /// SO(2ℓ)/U(1)×U(ℓ−1).
    D { ell: f64 },
}

impl CubicField {
    pub fn new(spec: &FlagSpec) -> Self {
        match spec.field_family() {
            Family::A { m, n, p } => CubicField::A {
                m: m as f64,
                n: n as f64,
                p: p as f64,
            },
            Family::D { ell } => CubicField::D { ell: ell as f64 },
            Family::E => unreachable!("E resolves to A(1,1,1)"),
        }
    }

    /// The homogeneous cubic Ricci field `fR(x)`, valid on all of ℝ³.
    pub fn eval(&self, v: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = v;
        match *self {
            CubicField::A { m, n, p } => [
                -x * (p * (x * x - (y - z) * (y - z)) + 2.0 * (m + n) * y * z),
                -y * (n * (y * y - (z - x) * (z - x)) + 2.0 * (m + p) * x * z),
                -z * (m * (z * z - (x - y) * (x - y)) + 2.0 * (n + p) * x * y),
            ],
            CubicField::D { ell } => {
                let k = ell - 2.0;
                [
                    -x * (k * (x * x - (y - z) * (y - z)) + 2.0 * ell * y * z),
                    -y * (k * (y * y - (z - x) * (z - x)) + 2.0 * ell * x * z),
                    -z * (2.0 * (z * z - (x - y) * (x - y)) + 4.0 * k * x * y),
                ]
            }
        }
    }

    /// `X(x) = fR(x) − (Σ fR(x)) x`.
    pub fn projected(&self, x: [f64; 3]) -> [f64; 3] {
        let r = self.eval(x);
        let s = r[0] + r[1] + r[2];
        [r[0] - s * x[0], r[1] - s * x[1], r[2] - s * x[2]]
    }

    /// `Y(u, v)`: the first two components of `X(u, v, 1 − u − v)`.
    pub fn reduced(&self, p: [f64; 2]) -> [f64; 2] {
        let x = self.projected([p[0], p[1], 1.0 - p[0] - p[1]]);
        [x[0], x[1]]
    }

    /// Closed form of `R·∇F` valid on the cone `F = 0`.
    pub fn flux_closed_form(&self, v: [f64; 3]) -> f64 {
        let [x, y, z] = v;
        match *self {
            CubicField::A { m, n, p } => -8.0 * x * y * z * (p * x + n * y + m * z),
            CubicField::D { ell } => -8.0 * x * y * z * ((ell - 2.0) * (x + y) + 2.0 * z),
        }
    }
}

/// The cone function `F(x) = x² + y² + z² − 2(xy + xz + yz)`.
pub fn cone_f(v: [f64; 3]) -> f64 {
    let [x, y, z] = v;
    x * x + y * y + z * z - 2.0 * (x * y + x * z + y * z)
}

/// `∇F = −2(−x + y + z, x − y + z, x + y − z)`.
pub fn grad_f(v: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = v;
    [
        -2.0 * (-x + y + z),
        -2.0 * (x - y + z),
        -2.0 * (x + y - z),
    ]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn ricci_field(spec: &FlagSpec, x: &MetricCoords) -> [f64; 3] {
    CubicField::new(spec).eval(x.as_array())
}

pub fn projected_field(spec: &FlagSpec, x: &MetricCoords) -> [f64; 3] {
    CubicField::new(spec).projected(x.as_array())
}

pub fn reduced_field(spec: &FlagSpec, p: &SimplexPoint2) -> [f64; 2] {
    CubicField::new(spec).reduced(p.as_array())
}

/// `R(x)·∇F(x)` at a point of the cone. Fails when `|F(x)| > tol`.
pub fn cone_flux(spec: &FlagSpec, x: &MetricCoords, tol: f64) -> Result<f64, FieldError> {
    let v = x.as_array();
    let f = cone_f(v);
    if f.abs() > tol {
        return Err(FieldError::OffCone { point: v, f, tol });
    }
    Ok(dot3(CubicField::new(spec).eval(v), grad_f(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn a111() -> FlagSpec {
        FlagSpec::a(1, 1, 1).unwrap()
    }

    fn specs() -> Vec<FlagSpec> {
        vec![
            a111(),
            FlagSpec::a(2, 1, 1).unwrap(),
            FlagSpec::a(3, 2, 1).unwrap(),
            FlagSpec::d(4).unwrap(),
            FlagSpec::d(7).unwrap(),
            FlagSpec::e(),
        ]
    }

    #[test]
    fn kahler_einstein_and_normal_points() {
        let r = ricci_field(&a111(), &MetricCoords::new([1.0, 1.0, 2.0]).unwrap());
        assert_eq!(r, [-8.0, -8.0, -16.0]);
        let r = ricci_field(&a111(), &MetricCoords::new([1.0, 1.0, 1.0]).unwrap());
        assert_eq!(r, [-5.0, -5.0, -5.0]);
    }

    #[test]
    fn midpoint_is_a_zero_for_every_family() {
        for spec in specs() {
            for mid in [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]] {
                let x = MetricCoords::new(mid).unwrap();
                assert_eq!(ricci_field(&spec, &x), [0.0; 3], "{spec} {mid:?}");
            }
        }
    }

    #[test]
    fn d4_is_twice_a111() {
        let a = CubicField::new(&a111());
        let d = CubicField::new(&FlagSpec::d(4).unwrap());
        for v in [[0.2, 0.3, 0.5], [1.0, 2.0, 3.0], [0.7, 0.1, 0.05]] {
            let (ra, rd) = (a.eval(v), d.eval(v));
            for i in 0..3 {
                assert_abs_diff_eq!(rd[i], 2.0 * ra[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cone_function_values() {
        assert_abs_diff_eq!(cone_f([1.0 / 3.0; 3]), -1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(cone_f([0.5, 0.5, 0.0]), 0.0);
        assert_eq!(cone_f([1.0, 0.0, 0.0]), 1.0);
        assert_eq!(grad_f([1.0, 0.0, 0.0]), [2.0, -2.0, -2.0]);
    }

    #[test]
    fn projected_field_zeros() {
        for spec in specs() {
            for i in 0..3 {
                assert_eq!(projected_field(&spec, &MetricCoords::vertex(i)), [0.0; 3]);
            }
        }
        let x = projected_field(&a111(), &MetricCoords::on_simplex([0.25, 0.25, 0.5]).unwrap());
        assert_eq!(x, [0.0; 3]);
        let y = reduced_field(&a111(), &SimplexPoint2::new(1.0 / 3.0, 1.0 / 3.0).unwrap());
        assert!(y[0].abs() < 1e-15 && y[1].abs() < 1e-15);
        assert_eq!(reduced_field(&a111(), &SimplexPoint2::new(0.25, 0.25).unwrap()), [0.0, 0.0]);
        assert_eq!(reduced_field(&a111(), &SimplexPoint2::new(0.0, 0.0).unwrap()), [0.0, 0.0]);
    }

    #[test]
    fn cone_flux_requires_cone_point() {
        let err = cone_flux(&a111(), &MetricCoords::new([1.0, 0.0, 0.0]).unwrap(), CONE_TOL);
        assert!(matches!(err, Err(FieldError::OffCone { .. })));
        let v = cone_flux(&a111(), &MetricCoords::new([0.5, 0.5, 0.0]).unwrap(), CONE_TOL).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn coords_validation() {
        assert!(MetricCoords::new([-0.1, 0.5, 0.6]).is_err());
        assert!(MetricCoords::new([f64::NAN, 0.5, 0.6]).is_err());
        assert!(MetricCoords::on_simplex([0.5, 0.5, 0.1]).is_err());
        assert!(SimplexPoint2::new(0.7, 0.4).is_err());
        let n = MetricCoords::normalized([1.0, 1.0, 2.0]).unwrap();
        assert_eq!(n.as_array(), [0.25, 0.25, 0.5]);
    }

    fn orthant() -> impl Strategy<Value = [f64; 3]> {
        [0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0]
    }

    proptest! {
        #[test]
        fn cubic_homogeneity(v in orthant(), lam in 0.1f64..5.0, which in 0usize..6) {
            let f = CubicField::new(&specs()[which]);
            let r = f.eval(v);
            let rl = f.eval([lam * v[0], lam * v[1], lam * v[2]]);
            let scale = norm3(r) * lam.powi(3) + 1e-300;
            for i in 0..3 {
                prop_assert!((rl[i] - lam.powi(3) * r[i]).abs() <= 1e-10 * scale + 1e-14);
            }
        }

        #[test]
        fn face_tangency(v in orthant(), i in 0usize..3, which in 0usize..6) {
            let mut w = v;
            w[i] = 0.0;
            let f = CubicField::new(&specs()[which]);
            prop_assert_eq!(f.eval(w)[i], 0.0);
            prop_assert_eq!(f.projected(w)[i], 0.0);
        }

        #[test]
        fn projected_field_sums_to_zero_on_simplex(a in 0.0f64..1.0, b in 0.0f64..1.0, which in 0usize..6) {
            let (u, v) = if a + b <= 1.0 { (a, b) } else { (1.0 - a, 1.0 - b) };
            let x = [u, v, 1.0 - u - v];
            let px = CubicField::new(&specs()[which]).projected(x);
            prop_assert!((px[0] + px[1] + px[2]).abs() <= 1e-12);
        }

        #[test]
        fn a_family_permutation_equivariance(v in orthant(), m in 1u32..5, n in 1u32..5, p in 1u32..5) {
            let f = CubicField::new(&FlagSpec::a(m as i64, n as i64, p as i64).unwrap());
            // (x,y,z) -> (x,z,y) exchanges summands 2,3: the block swap m <-> n.
            let g = CubicField::new(&FlagSpec::a(n as i64, m as i64, p as i64).unwrap());
            let r = f.eval(v);
            let s = g.eval([v[0], v[2], v[1]]);
            let scale = norm3(r) + 1.0;
            prop_assert!((s[0] - r[0]).abs() <= 1e-12 * scale);
            prop_assert!((s[1] - r[2]).abs() <= 1e-12 * scale);
            prop_assert!((s[2] - r[1]).abs() <= 1e-12 * scale);
        }
    }
}
