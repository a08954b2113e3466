//! Metrics induced by products of adjoint orbits, at the level of torus data.
//!
//! A tuple `(H₁, …, H_k)` of torus elements is stored as an `r × k` frame
//! matrix whose column `j` holds the ω-basis coordinates of `Hⱼ`, so that the
//! entry `(i, j)` is `αᵢ(Hⱼ)`. The induced metric map factors as
//!
//! ```text
//! μ⁽ᵏ⁾ = μ ∘ γ,    γ(X) = X Xᵀ,    μ([[x, z], [z, y]]) = (x, y, x + y + 2z)
//! ```
//!
//! and `τ = σ ∘ μ⁻¹` (σ the symmetric square root) is a section of μ⁽²⁾ on
//! the cone `F ≤ 0`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flag_model::TRootTable;
use crate::ricci_field::{cone_f, MetricCoords};

/// Relative tolerance for calling a symmetric matrix positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Default tolerance on `|F|` for disk membership.
pub const DISK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealizationError {
    #[error("frame must have {expected} rows, got {got}")]
    FrameShape { expected: usize, got: usize },
    #[error("matrix is not square and symmetric")]
    NotSymmetric,
    #[error("matrix has eigenvalue {min_eig} below -{tol} * {scale}")]
    NotPsd { min_eig: f64, tol: f64, scale: f64 },
    #[error("point {point:?} lies outside the realizable cone (min eigenvalue {min_eig})")]
    OutsideCone { point: [f64; 3], min_eig: f64 },
    #[error("numerical rank {rank} exceeds the requested {k} columns")]
    RankTooLarge { rank: usize, k: usize },
    #[error("requested {k} columns for a {r}x{r} frame")]
    BadColumnCount { k: usize, r: usize },
}

/// `r × k` matrix of ω-coordinates of a torus tuple, one column per element.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix(DMatrix<f64>);

impl FrameMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn from_columns(cols: &[[f64; 2]]) -> Self {
        Self(DMatrix::from_fn(2, cols.len(), |i, j| cols[j][i]))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(r: usize) -> Self {
        Self(DMatrix::identity(r, r))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Column `j` as ω-coordinates of `Hⱼ`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }
}

/// Symmetric positive-semidefinite matrix. The upper triangle is authoritative.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(DMatrix<f64>);

/// Spectral data of a symmetric matrix: eigenvalues in decreasing order and
/// the matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn symmetrize_upper(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] })
}

/// Eigen-decomposition of a symmetric matrix. 2×2 uses the closed form,
/// larger sizes fall back to nalgebra's symmetric QR iteration.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    if m.nrows() == 2 {
        let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        let mean = 0.5 * (a + c);
        let half_diff = 0.5 * (a - c);
        let d = half_diff.hypot(b);
        let (cs, sn) = if d == 0.0 {
            (1.0, 0.0)
        } else {
            let theta = 0.5 * b.atan2(half_diff);
            (theta.cos(), theta.sin())
        };
        let hi = mean + d;
        // det / hi avoids cancellation in mean - d when hi dominates.
        let lo = if hi.abs() > d.abs() && hi != 0.0 { (a * c - b * b) / hi } else { mean - d };
        return SymEigen {
            values: vec![hi, lo],
            vectors: DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]),
        };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    SymEigen {
        values: idx.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, idx[c])]),
    }
}

impl PsdMatrix {
    /// Accepts a square matrix whose symmetrized upper triangle is PSD within
    /// [`PSD_TOL`] relative to its largest eigenvalue (floored at 1).
    pub fn new(m: DMatrix<f64>) -> Result<Self, RealizationError> {
        if m.nrows() != m.ncols() || m.iter().any(|v| !v.is_finite()) {
            return Err(RealizationError::NotSymmetric);
        }
        let m = symmetrize_upper(&m);
        let eig = sym_eigen(&m);
        let scale = eig.values.first().copied().unwrap_or(0.0).max(1.0);
        let min_eig = eig.values.last().copied().unwrap_or(0.0);
        if min_eig < -PSD_TOL * scale {
            return Err(RealizationError::NotPsd { min_eig, tol: PSD_TOL, scale });
        }
        Ok(Self(m))
    }

    pub fn from_sym2(m: Matrix2<f64>) -> Result<Self, RealizationError> {
        Self::new(DMatrix::from_column_slice(2, 2, m.as_slice()))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn eigen(&self) -> SymEigen {
        sym_eigen(&self.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }
}

/// `μ⁽ᵏ⁾`: `xᵢ = Σⱼ αᵢ(Hⱼ)²` with `α₃` given by the T-root relation.
pub fn mu_k(table: &TRootTable, frame: &FrameMatrix) -> Result<MetricCoords, RealizationError> {
    if frame.rows() != 2 {
        return Err(RealizationError::FrameShape { expected: 2, got: frame.rows() });
    }
    let mut x = [0.0; 3];
    for j in 0..frame.cols() {
        let a = table.evaluate(frame.0[(0, j)], frame.0[(1, j)]);
        for i in 0..3 {
            x[i] += a[i] * a[i];
        }
    }
    Ok(MetricCoords::new(x).expect("sums of squares are nonnegative"))
}

/// Gram map `γ(X) = X Xᵀ`.
pub fn gram(x: &FrameMatrix) -> PsdMatrix {
    let g = &x.0 * x.0.transpose();
    PsdMatrix(symmetrize_upper(&g))
}

/// The PSD square root, with negative eigenvalues inside the tolerance
/// clipped to zero.
pub fn sym_sqrt(y: &PsdMatrix) -> PsdMatrix {
    let eig = y.eigen();
    let n = y.size();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let v = eig.vectors.column(k);
        out += v * v.transpose() * lam.sqrt();
    }
    PsdMatrix(symmetrize_upper(&out))
}

/// `μ(Y) = (Y₁₁, Y₂₂, Y₁₁ + Y₂₂ + 2Y₁₂)` for 2×2 symmetric `Y`.
pub fn mu_linear_raw(y: &Matrix2<f64>) -> [f64; 3] {
    [y[(0, 0)], y[(1, 1)], y[(0, 0)] + y[(1, 1)] + 2.0 * y[(0, 1)]]
}

/// `μ` restricted to PSD input, where it lands in the closed orthant.
pub fn mu_linear(y: &PsdMatrix) -> MetricCoords {
    let m = y.matrix();
    let raw = mu_linear_raw(&Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]));
    // x₃ ≥ 0 for PSD input up to roundoff.
    MetricCoords::new(raw.map(|v| v.max(0.0))).expect("finite PSD entries")
}

/// `μ⁻¹(x, y, z) = [[x, (z−x−y)/2], [(z−x−y)/2, y]]`.
pub fn mu_inverse(x: [f64; 3]) -> Matrix2<f64> {
    let off = 0.5 * (x[2] - x[0] - x[1]);
    Matrix2::new(x[0], off, off, x[1])
}

/// Matrix of the linear map μ on `(Y₁₁, Y₂₂, Y₁₂)`.
pub const MU_MATRIX: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 2.0]];

/// The section `τ = σ ∘ μ⁻¹`, defined on the whole cone `F ≤ 0` of the
/// first orthant. The returned frame is the symmetric 2×2 square root.
pub fn tau(x: [f64; 3]) -> Result<FrameMatrix, RealizationError> {
    let y = mu_inverse(x);
    let psd = PsdMatrix::from_sym2(y).map_err(|e| match e {
        RealizationError::NotPsd { min_eig, .. } => RealizationError::OutsideCone { point: x, min_eig },
        other => other,
    })?;
    Ok(FrameMatrix(sym_sqrt(&psd).0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskStatus {
    Interior,
    Boundary,
    Outside,
}

/// Position of a simplex point relative to the inscribed disk `F ≤ 0`.
pub fn in_disk(x: &MetricCoords, tol: f64) -> DiskStatus {
    let f = cone_f(x.as_array());
    if f < -tol {
        DiskStatus::Interior
    } else if f.abs() <= tol {
        DiskStatus::Boundary
    } else {
        DiskStatus::Outside
    }
}

/// `Y = Σ wᵢ vᵢvᵢᵀ` with `wᵢ > 0` and unit-trace rank-one projectors.
pub fn rank1_decompose(y: &PsdMatrix) -> Vec<(f64, PsdMatrix)> {
    let eig = y.eigen();
    let scale = eig.values.first().copied().unwrap_or(0.0).abs().max(1.0);
    eig.values
        .iter()
        .enumerate()
        .filter(|(_, lam)| **lam > PSD_TOL * scale)
        .map(|(k, &lam)| {
            let v = eig.vectors.column(k);
            (lam, PsdMatrix(symmetrize_upper(&(v * v.transpose()))))
        })
        .collect()
}

/// Right-multiply a square frame by an orthogonal `u` so that only the first
/// `k` columns of `X u` are nonzero. Requires numerical rank `≤ k`.
///
/// `u` comes from Gram–Schmidt on the rows of `X`, completed with the
/// standard basis; its first columns span the row space.
pub fn compress_columns(x: &FrameMatrix, k: usize) -> Result<(FrameMatrix, DMatrix<f64>), RealizationError> {
    let r = x.rows();
    if x.cols() != r || k == 0 || k > r {
        return Err(RealizationError::BadColumnCount { k, r });
    }
    let scale = x.0.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let trailing = x.0.columns(k, r - k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if k == r || trailing <= tol {
        return Ok((x.clone(), DMatrix::identity(r, r)));
    }

    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(r);
    let add = |cand: nalgebra::DVector<f64>, basis: &mut Vec<nalgebra::DVector<f64>>, thresh: f64| -> bool {
        let mut w = cand;
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for b in basis.iter() {
                let c = b.dot(&w);
                w -= c * b;
            }
        }
        let n = w.norm();
        if n > thresh {
            basis.push(w / n);
            true
        } else {
            false
        }
    };
    for i in 0..r {
        let row = x.0.row(i).transpose();
        add(row, &mut basis, tol);
    }
    let rank = basis.len();
    if rank > k {
        return Err(RealizationError::RankTooLarge { rank, k });
    }
    for i in 0..r {
        if basis.len() == r {
            break;
        }
        let mut e = nalgebra::DVector::zeros(r);
        e[i] = 1.0;
        add(e, &mut basis, 1e-8);
    }
    let u = DMatrix::from_fn(r, r, |i, j| basis[j][i]);
    let mut y = &x.0 * &u;
    for j in k..r {
        for i in 0..r {
            if y[(i, j)].abs() <= tol {
                y[(i, j)] = 0.0;
            }
        }
    }
    Ok((FrameMatrix(y), u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flag_model::{t_root_table, FlagSpec};
    use approx::assert_abs_diff_eq;

    fn table() -> TRootTable {
        t_root_table(&FlagSpec::a(1, 1, 1).unwrap())
    }

    fn assert_mat_eq(a: &DMatrix<f64>, b: &[f64], tol: f64) {
        let b = DMatrix::from_row_slice(a.nrows(), a.ncols(), b);
        assert!((a - &b).amax() <= tol, "{a} vs {b}");
    }

    #[test]
    fn mu_k_examples() {
        let t = table();
        assert_eq!(mu_k(&t, &FrameMatrix::from_columns(&[[1.0, 0.0]])).unwrap().as_array(), [1.0, 0.0, 1.0]);
        assert_eq!(mu_k(&t, &FrameMatrix::zeros(2, 2)).unwrap().as_array(), [0.0; 3]);
        assert_eq!(mu_k(&t, &FrameMatrix::identity(2)).unwrap().as_array(), [1.0, 1.0, 2.0]);
        assert!(mu_k(&t, &FrameMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn gram_examples() {
        assert_mat_eq(gram(&FrameMatrix::identity(2)).matrix(), &[1.0, 0.0, 0.0, 1.0], 0.0);
        let g = gram(&FrameMatrix::from_columns(&[[2.0, -3.0]]));
        assert_mat_eq(g.matrix(), &[4.0, -6.0, -6.0, 9.0], 0.0);
    }

    #[test]
    fn sqrt_examples() {
        let d = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0])).unwrap();
        assert_mat_eq(sym_sqrt(&d).matrix(), &[2.0, 0.0, 0.0, 3.0], 1e-15);
        let p = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5])).unwrap();
        assert_mat_eq(sym_sqrt(&p).matrix(), &[0.5, -0.5, -0.5, 0.5], 1e-15);
        let bad = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(bad, Err(RealizationError::NotPsd { .. })));
    }

    #[test]
    fn general_size_path() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0]);
        let y = PsdMatrix::new(&a * a.transpose()).unwrap();
        let s = sym_sqrt(&y);
        assert!((s.matrix() * s.matrix() - y.matrix()).amax() < 1e-9 * y.matrix().amax());
        let terms = rank1_decompose(&y);
        let rec = terms.iter().fold(DMatrix::zeros(3, 3), |acc, (w, p)| acc + *w * p.matrix());
        assert!((rec - y.matrix()).amax() < 1e-10 * y.matrix().amax());
    }

    #[test]
    fn mu_linear_and_inverse() {
        assert_eq!(mu_inverse([0.5, 0.5, 0.0]), Matrix2::new(0.5, -0.5, -0.5, 0.5));
        assert_eq!(mu_inverse([1.0, 1.0, 2.0]), Matrix2::identity());
        let id = PsdMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(mu_linear(&id).as_array(), [1.0, 1.0, 2.0]);
        for x in [[0.3, 0.2, 0.9], [1.0, -2.0, 5.0], [0.0, 0.0, 0.0]] {
            let back = mu_linear_raw(&mu_inverse(x));
            for i in 0..3 {
                assert!((back[i] - x[i]).abs() <= 1e-15 * x[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn mu_matrix_has_determinant_two() {
        let m = nalgebra::Matrix3::from_fn(|i, j| MU_MATRIX[i][j]);
        assert_abs_diff_eq!(m.determinant(), 2.0, epsilon = 1e-15);
        // Column (x, y, z) of symmetric entries maps like mu_linear_raw.
        let v = m * nalgebra::Vector3::new(0.3, 0.7, -0.1);
        assert_eq!([v[0], v[1], v[2]], mu_linear_raw(&Matrix2::new(0.3, -0.1, -0.1, 0.7)));
    }

    #[test]
    fn tau_examples() {
        let l = tau([0.5, 0.5, 0.0]).unwrap();
        assert_mat_eq(l.matrix(), &[0.5, -0.5, -0.5, 0.5], 1e-12);
        let m = tau([0.5, 0.0, 0.5]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_mat_eq(m.matrix(), &[h, 0.0, 0.0, 0.0], 1e-12);
        let ke = tau([0.25, 0.25, 0.5]).unwrap();
        assert_mat_eq(ke.matrix(), &[0.5, 0.0, 0.0, 0.5], 1e-15);
        assert!(matches!(tau([1.0, 0.0, 0.0]), Err(RealizationError::OutsideCone { .. })));
    }

    #[test]
    fn disk_membership() {
        let tol = DISK_TOL;
        assert_eq!(in_disk(&MetricCoords::new([1.0 / 3.0; 3]).unwrap(), tol), DiskStatus::Interior);
        assert_eq!(in_disk(&MetricCoords::new([0.5, 0.5, 0.0]).unwrap(), tol), DiskStatus::Boundary);
        assert_eq!(in_disk(&MetricCoords::vertex(0), tol), DiskStatus::Outside);
    }

    #[test]
    fn rank1_examples() {
        let r1 = gram(&FrameMatrix::from_columns(&[[0.6, 0.8]]));
        let terms = rank1_decompose(&r1);
        assert_eq!(terms.len(), 1);
        assert_abs_diff_eq!(terms[0].0, 1.0, epsilon = 1e-15);
        assert!((terms[0].1.matrix() - r1.matrix()).amax() < 1e-15);
        let id = rank1_decompose(&PsdMatrix::new(DMatrix::identity(2, 2)).unwrap());
        assert_eq!(id.len(), 2);
        assert_eq!((id[0].0, id[1].0), (1.0, 1.0));
        let prod = id[0].1.matrix() * id[1].1.matrix();
        assert!(prod.amax() < 1e-15);
    }

    #[test]
    fn compress_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // tau(L) times the 45 degree rotation.
        let (y, u) = compress_columns(&tau([0.5, 0.5, 0.0]).unwrap(), 1).unwrap();
        assert_mat_eq(y.matrix(), &[s, 0.0, -s, 0.0], 1e-12);
        assert_mat_eq(&u, &[s, s, -s, s], 1e-12);
        assert_abs_diff_eq!(u.determinant(), 1.0, epsilon = 1e-12);

        let x = FrameMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.0, -0.5, 0.0]));
        let (y, u) = compress_columns(&x, 1).unwrap();
        assert_eq!(y, x);
        assert_eq!(u, DMatrix::identity(2, 2));

        let rank1 = FrameMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, -1.0]));
        let (y, u) = compress_columns(&rank1, 1).unwrap();
        assert!(y.matrix().column(1).amax() <= 1e-10 * 2.0);
        assert!((gram(&y).matrix() - gram(&rank1).matrix()).amax() < 1e-10);
        assert!((u.transpose() * &u - DMatrix::identity(2, 2)).amax() < 1e-12);

        assert!(matches!(
            compress_columns(&FrameMatrix::identity(2), 1),
            Err(RealizationError::RankTooLarge { rank: 2, k: 1 })
        ));
    }
}
