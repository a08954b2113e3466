//! Concrete su(N) model of the A-family flags and their adjoint orbits.
//!
//! The flag `SU(m+n+p)/S(U(m)×U(n)×U(p))` is modelled with diagonal blocks
//! laid out as `(n, m, p)` along the diagonal. With that layout
//!
//! * `m₁` couples the `m` and `n` blocks (positions 1,2), dimension `2mn`,
//! * `m₂` couples the `m` and `p` blocks (positions 2,3), dimension `2mp`,
//! * `m₃` couples the `n` and `p` blocks (positions 1,3), dimension `2np`,
//!
//! and the T-roots `αᵢ(H) = φᵢ − φᵢ₊₁` (φ the phase on a diagonal block) of
//! the first two summands add up to the root of the third. The summand
//! dimensions and the coefficients of the cubic Ricci field both match the
//! `A(m,n,p)` conventions of [`crate::flag_model`].
//!
//! The ambient inner product is the negative Killing form
//! `⟨X, Y⟩ = −2N Re tr(XY)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::realization::FrameMatrix;
use crate::ricci_field::MetricCoords;

pub type CMat = DMatrix<Complex64>;

/// Label of the ambient inner product, written into exported metadata.
pub const INNER_PRODUCT_LABEL: &str = "-2N Re tr(XY)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("block sizes must be positive, got {0:?}")]
    BadBlocks([usize; 3]),
    #[error("torus element must be traceless and constant on blocks (residual {0:e})")]
    NotInTorus(f64),
    #[error("matrix is not special unitary (unitarity residual {unitarity:e}, |det-1| = {det:e})")]
    NotSpecialUnitary { unitarity: f64, det: f64 },
    #[error("induced metric is not isotypic-diagonal (residual {0:e})")]
    NotIsotypic(f64),
    #[error("sample count must be at least 1")]
    EmptySample,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// One real basis vector of a root space or of the isotropy algebra.
#[derive(Debug, Clone)]
pub struct BasisElement {
    pub label: String,
    pub matrix: CMat,
}

/// su(N) with a three-block flag structure.
#[derive(Debug, Clone)]
pub struct LieModel {
    n: usize,
    blocks: [usize; 3],
    /// Diagonal layout, as block sizes in order along the diagonal.
    layout: [usize; 3],
    offsets: [usize; 3],
    summands: [Vec<BasisElement>; 3],
    isotropy: Vec<BasisElement>,
}

/// `H = i·diag(θ)` in the torus `t_Θ` (θ constant on blocks, traceless).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusElement {
    pub phases: Vec<f64>,
    pub omega: [f64; 2],
}

impl TorusElement {
    pub fn matrix(&self) -> CMat {
        let n = self.phases.len();
        CMat::from_fn(n, n, |i, j| if i == j { c(0.0, self.phases[i]) } else { c(0.0, 0.0) })
    }
}

impl LieModel {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Block sizes `(m, n, p)` as given to [`build_model`].
    pub fn blocks(&self) -> [usize; 3] {
        self.blocks
    }

    pub fn summand_basis(&self, i: usize) -> &[BasisElement] {
        &self.summands[i]
    }

    pub fn isotropy_basis(&self) -> &[BasisElement] {
        &self.isotropy
    }

    pub fn summand_dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.summands[i].len())
    }

    /// `⟨X, Y⟩ = −2N Re tr(XY)`.
    pub fn inner(&self, x: &CMat, y: &CMat) -> f64 {
        let mut tr = 0.0;
        for i in 0..self.n {
            for k in 0..self.n {
                tr += (x[(i, k)] * y[(k, i)]).re;
            }
        }
        -2.0 * self.n as f64 * tr
    }

    pub fn norm(&self, x: &CMat) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn bracket(&self, x: &CMat, y: &CMat) -> CMat {
        x * y - y * x
    }

    /// ⟨,⟩-orthogonal projection onto summand `mᵢ`.
    pub fn project_onto_summand(&self, x: &CMat, i: usize) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for b in &self.summands[i] {
            let coef = self.inner(x, &b.matrix) / self.inner(&b.matrix, &b.matrix);
            out += b.matrix.map(|z| z * coef);
        }
        out
    }

    fn block_of_position(&self, pos: usize) -> usize {
        (0..3).rev().find(|&b| pos >= self.offsets[b]).unwrap()
    }

    /// Torus element with the given ω-coordinates `(h₁, h₂)`.
    pub fn torus(&self, omega: [f64; 2]) -> TorusElement {
        // Cumulative from the last block: αᵢ(H) is exactly 0 whenever the
        // ω-coordinates make it 0.
        let [b1, b2, _] = self.layout.map(|v| v as f64);
        let (s2, s1) = (omega[1], omega[0] + omega[1]);
        let base = -(b1 * s1 + b2 * s2) / self.n as f64;
        let block_phase = [base + s1, base + s2, base];
        let phases = (0..self.n).map(|k| block_phase[self.block_of_position(k)]).collect();
        TorusElement { phases, omega }
    }

    /// Validate a diagonal phase vector and compute its ω-coordinates.
    pub fn torus_from_phases(&self, phases: &[f64]) -> Result<TorusElement, OrbitError> {
        if phases.len() != self.n {
            return Err(OrbitError::NotInTorus(f64::INFINITY));
        }
        let mut resid = phases.iter().sum::<f64>().abs();
        let mut block_phase = [0.0; 3];
        for b in 0..3 {
            let slice = &phases[self.offsets[b]..self.offsets[b] + self.layout[b]];
            block_phase[b] = slice[0];
            for v in slice {
                resid = resid.max((v - slice[0]).abs());
            }
        }
        if resid > 1e-14 * phases.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
            return Err(OrbitError::NotInTorus(resid));
        }
        Ok(TorusElement {
            phases: phases.to_vec(),
            omega: [block_phase[0] - block_phase[1], block_phase[1] - block_phase[2]],
        })
    }

    /// The T-roots `(α₁(H), α₂(H), α₃(H))` from the block phases.
    pub fn alpha(&self, h: &TorusElement) -> [f64; 3] {
        let phase = |b: usize| h.phases[self.offsets[b]];
        let a1 = phase(0) - phase(1);
        let a2 = phase(1) - phase(2);
        [a1, a2, phase(0) - phase(2)]
    }

    /// Summand labels of `[α₁], [α₂], [α₃]` in terms of the input blocks.
    pub fn summand_pairs(&self) -> [(&'static str, &'static str); 3] {
        [("m", "n"), ("m", "p"), ("n", "p")]
    }
}

/// Build the su(m+n+p) model of the A(m,n,p) flag.
pub fn build_model(m: usize, n: usize, p: usize) -> Result<LieModel, OrbitError> {
    if m == 0 || n == 0 || p == 0 {
        return Err(OrbitError::BadBlocks([m, n, p]));
    }
    let layout = [n, m, p];
    let offsets = [0, n, n + m];
    let size = m + n + p;
    let unit = |i: usize, j: usize, z: Complex64| {
        let mut e = CMat::zeros(size, size);
        e[(i, j)] = z;
        e
    };
    // Real and imaginary off-diagonal generators for the pair (i, j).
    let pair = |i: usize, j: usize| -> [BasisElement; 2] {
        [
            BasisElement {
                label: format!("X{i}{j}"),
                matrix: unit(i, j, c(1.0, 0.0)) - unit(j, i, c(1.0, 0.0)),
            },
            BasisElement {
                label: format!("Y{i}{j}"),
                matrix: unit(i, j, c(0.0, 1.0)) + unit(j, i, c(0.0, 1.0)),
            },
        ]
    };
    let range = |b: usize| offsets[b]..offsets[b] + layout[b];

    let block_pairs = [(0, 1), (1, 2), (0, 2)];
    let summands = block_pairs.map(|(ba, bb)| {
        let mut basis = Vec::new();
        for i in range(ba) {
            for j in range(bb) {
                basis.extend(pair(i, j));
            }
        }
        basis
    });

    let mut isotropy = Vec::new();
    for b in 0..3 {
        let r = range(b);
        for i in r.clone() {
            for j in r.clone().filter(|&j| j > i) {
                isotropy.extend(pair(i, j));
            }
        }
    }
    for k in 0..size - 1 {
        isotropy.push(BasisElement {
            label: format!("D{k}"),
            matrix: unit(k, k, c(0.0, 1.0)) - unit(k + 1, k + 1, c(0.0, 1.0)),
        });
    }

    Ok(LieModel {
        n: size,
        blocks: [m, n, p],
        layout,
        offsets,
        summands,
        isotropy,
    })
}

/// The dual basis `(ω₁, ω₂)` with `αᵢ(ωⱼ) = δᵢⱼ`.
pub fn omega_basis(model: &LieModel) -> (TorusElement, TorusElement) {
    (model.torus([1.0, 0.0]), model.torus([0.0, 1.0]))
}

/// `g(X_a, X_b) = Σⱼ ⟨[X_a, Aⱼ], [X_b, Aⱼ]⟩` over a tangent basis.
pub fn induced_gram(model: &LieModel, basis: &[&CMat], elems: &[CMat]) -> DMatrix<f64> {
    let brackets: Vec<Vec<CMat>> = basis
        .iter()
        .map(|x| elems.iter().map(|a| model.bracket(x, a)).collect())
        .collect();
    DMatrix::from_fn(basis.len(), basis.len(), |a, b| {
        (0..elems.len()).map(|j| model.inner(&brackets[a][j], &brackets[b][j])).sum()
    })
}

/// Induced metric coefficients with the isotypic residual of the Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedMetric {
    pub coords: MetricCoords,
    pub residual: f64,
}

/// Largest relative deviation of `g` from `⊕ xᵢ·⟨,⟩|mᵢ`, and the `xᵢ`.
fn isotypic_fit(model: &LieModel, basis: &[&CMat], g: &DMatrix<f64>) -> ([f64; 3], f64) {
    let dims = model.summand_dims();
    let ambient = DMatrix::from_fn(basis.len(), basis.len(), |a, b| model.inner(basis[a], basis[b]));
    let mut owner = Vec::with_capacity(basis.len());
    for (i, d) in dims.iter().enumerate() {
        owner.extend(std::iter::repeat_n(i, *d));
    }
    let mut x = [0.0; 3];
    for i in 0..3 {
        let (mut num, mut den) = (0.0, 0.0);
        for a in (0..basis.len()).filter(|&a| owner[a] == i) {
            num += g[(a, a)];
            den += ambient[(a, a)];
        }
        x[i] = num / den;
    }
    let scale = g.amax();
    if scale == 0.0 {
        return (x, 0.0);
    }
    let mut worst = 0.0f64;
    for a in 0..basis.len() {
        for b in 0..basis.len() {
            let expected = if owner[a] == owner[b] { x[owner[a]] * ambient[(a, b)] } else { 0.0 };
            worst = worst.max((g[(a, b)] - expected).abs());
        }
    }
    (x, worst / scale)
}

/// Metric on `m` induced by the orbit of `(H₁, H₂)` in 𝔤², relative to ⟨,⟩.
pub fn induced_metric(model: &LieModel, h1: &TorusElement, h2: &TorusElement) -> Result<InducedMetric, OrbitError> {
    let basis: Vec<&CMat> = (0..3).flat_map(|i| model.summands[i].iter().map(|b| &b.matrix)).collect();
    let g = induced_gram(model, &basis, &[h1.matrix(), h2.matrix()]);
    let (x, residual) = isotypic_fit(model, &basis, &g);
    if residual > 1e-8 {
        return Err(OrbitError::NotIsotypic(residual));
    }
    let coords = MetricCoords::new(x.map(|v| v.max(0.0))).map_err(|_| OrbitError::NotIsotypic(f64::NAN))?;
    Ok(InducedMetric { coords, residual })
}

/// Torus pair whose ω-coordinates are the columns of a 2×2 frame.
pub fn torus_pair_from_frame(model: &LieModel, frame: &FrameMatrix) -> (TorusElement, TorusElement) {
    let col = |j: usize| {
        let v = frame.column(j);
        [v[0], v[1]]
    };
    let h2 = if frame.cols() > 1 { col(1) } else { [0.0, 0.0] };
    (model.torus(col(0)), model.torus(h2))
}

/// Haar-distributed element of SU(N) from a QR factorization of a complex
/// Gaussian matrix with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_special_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMat::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re * scale, im * scale)
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    let det = q.determinant();
    let fix = c(0.0, -det.arg() / n as f64).exp();
    q.map(|v| v * fix)
}

fn special_unitary_residuals(u: &CMat) -> (f64, f64) {
    let n = u.nrows();
    let uu = u * u.adjoint() - CMat::identity(n, n);
    let unitarity = uu.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let det = (u.determinant() - c(1.0, 0.0)).norm();
    (unitarity, det)
}

/// `(Ad(u)H₁, Ad(u)H₂) = (uH₁u⁻¹, uH₂u⁻¹)`.
pub fn embed_point(h1: &TorusElement, h2: &TorusElement, u: &CMat) -> Result<(CMat, CMat), OrbitError> {
    let (unitarity, det) = special_unitary_residuals(u);
    if unitarity > 1e-10 || det > 1e-10 || u.nrows() != h1.phases.len() {
        return Err(OrbitError::NotSpecialUnitary { unitarity, det });
    }
    let ui = u.adjoint();
    Ok((u * h1.matrix() * &ui, u * h2.matrix() * &ui))
}

fn flatten(mats: &[&CMat]) -> Vec<f64> {
    let mut out = Vec::new();
    for m in mats {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.push(m[(i, j)].re);
                out.push(m[(i, j)].im);
            }
        }
    }
    out
}

/// Undo [`flatten`] for one matrix of the pair (0 or 1).
pub fn unflatten(point: &[f64], n: usize, which: usize) -> CMat {
    let off = which * 2 * n * n;
    CMat::from_fn(n, n, |i, j| {
        let k = off + 2 * (i * n + j);
        c(point[k], point[k + 1])
    })
}

/// Finite sample of an adjoint orbit in 𝔤², flattened row-major with
/// interleaved real and imaginary parts, `A₁` then `A₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitCloud {
    #[serde(rename = "N")]
    pub n: usize,
    pub blocks: [usize; 3],
    #[serde(rename = "H1")]
    pub h1: TorusElement,
    #[serde(rename = "H2")]
    pub h2: TorusElement,
    pub seed: u64,
    pub count: usize,
    pub inner_product: String,
    pub points: Vec<Vec<f64>>,
}

impl OrbitCloud {
    pub fn dim(&self) -> usize {
        4 * self.n * self.n
    }

    /// Ambient ⟨,⟩-distance between two flattened points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        ambient_distance(self.n, a, b)
    }
}

pub fn ambient_distance(n: usize, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (2.0 * n as f64 * sq).sqrt()
}

/// Draw the unitary for sample `index`: a ChaCha stream per index keyed by
/// `seed`, so any subset of the counter space can be drawn independently.
pub fn sample_unitary(n: usize, seed: u64, index: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    haar_special_unitary(n, &mut rng)
}

pub fn sample_orbit(
    model: &LieModel,
    h1: &TorusElement,
    h2: &TorusElement,
    count: usize,
    seed: u64,
) -> Result<OrbitCloud, OrbitError> {
    sample_orbit_with(model, h1, h2, count, seed, Execution::default())
}

pub fn sample_orbit_with(
    model: &LieModel,
    h1: &TorusElement,
    h2: &TorusElement,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<OrbitCloud, OrbitError> {
    if count == 0 {
        return Err(OrbitError::EmptySample);
    }
    let (m1, m2) = (h1.matrix(), h2.matrix());
    let n = model.n();
    let points = map_indexed(exec, count, |i| {
        let u = sample_unitary(n, seed, i as u64);
        let ui = u.adjoint();
        flatten(&[&(&u * &m1 * &ui), &(&u * &m2 * &ui)])
    });
    Ok(OrbitCloud {
        n,
        blocks: model.blocks(),
        h1: h1.clone(),
        h2: h2.clone(),
        seed,
        count,
        inner_product: INNER_PRODUCT_LABEL.to_string(),
        points,
    })
}
