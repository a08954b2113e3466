//! Three-summand flag manifolds of Type II.
//!
//! Every supported flag has rank two and three isotropy summands whose
//! T-roots satisfy `[α₁] + [α₂] = [α₃]`. The families are
//!
//! | family   | manifold                              | d₁        | d₂        | d₃           |
//! |----------|---------------------------------------|-----------|-----------|--------------|
//! | A(m,n,p) | SU(m+n+p)/S(U(m)×U(n)×U(p))           | 2mn       | 2mp       | 2np          |
//! | D(ℓ)     | SO(2ℓ)/U(1)×U(ℓ−1), ℓ ≥ 4             | 2(ℓ−1)    | 2(ℓ−1)    | (ℓ−1)(ℓ−2)   |
//! | E        | E₆/SO(8)×U(1)×U(1)                    | 16        | 16        | 16           |
//!
//! The Dynkin marks of the painted diagrams are kept only as documentation:
//! nothing downstream consumes them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlagError {
    #[error("A-family block sizes must be positive, got ({m},{n},{p})")]
    NonPositiveBlocks { m: i64, n: i64, p: i64 },
    #[error("D-family requires ell >= 4, got {0}")]
    RankTooSmall(i64),
    #[error("cannot parse flag family `{0}` (expected `A:m,n,p`, `D:ell` or `E`)")]
    Parse(String),
}

/// Which Type II family a flag manifold belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A { m: u32, n: u32, p: u32 },
    D { ell: u32 },
    E,
}

/// A Type II flag manifold with its summand dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlagSpec {
    family: Family,
    dims: [u32; 3],
}

impl FlagSpec {
    pub fn a(m: i64, n: i64, p: i64) -> Result<Self, FlagError> {
        if m < 1 || n < 1 || p < 1 || m > u32::MAX as i64 || n > u32::MAX as i64 || p > u32::MAX as i64 {
            return Err(FlagError::NonPositiveBlocks { m, n, p });
        }
        let (m, n, p) = (m as u32, n as u32, p as u32);
        Ok(Self {
            family: Family::A { m, n, p },
            dims: [2 * m * n, 2 * m * p, 2 * n * p],
        })
    }

    pub fn d(ell: i64) -> Result<Self, FlagError> {
        if !(4..=u32::MAX as i64).contains(&ell) {
            return Err(FlagError::RankTooSmall(ell));
        }
        let ell = ell as u32;
        Ok(Self {
            family: Family::D { ell },
            dims: [2 * (ell - 1), 2 * (ell - 1), (ell - 1) * (ell - 2)],
        })
    }

    pub fn e() -> Self {
        Self {
            family: Family::E,
            dims: [16, 16, 16],
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Real dimensions `(d₁, d₂, d₃)` of the isotropy summands.
    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn rank(&self) -> usize {
        2
    }

    pub fn summand_count(&self) -> usize {
        3
    }

    pub fn dimension(&self) -> u32 {
        self.dims.iter().sum()
    }

    /// The family whose Ricci field is actually evaluated. E shares the
    /// field of A(1,1,1).
    pub fn field_family(&self) -> Family {
        match self.family {
            Family::E => Family::A { m: 1, n: 1, p: 1 },
            f => f,
        }
    }

    /// Block sizes `(m, n, p)` for the A family.
    pub fn blocks(&self) -> Option<(u32, u32, u32)> {
        match self.family {
            Family::A { m, n, p } => Some((m, n, p)),
            _ => None,
        }
    }
}

/// Build a [`FlagSpec`] from a family tag and its integer parameters.
///
/// `tag` is `'A'` (three parameters), `'D'` (one) or `'E'` (none).
pub fn make_flag(tag: char, params: &[i64]) -> Result<FlagSpec, FlagError> {
    match (tag.to_ascii_uppercase(), params) {
        ('A', [m, n, p]) => FlagSpec::a(*m, *n, *p),
        ('D', [ell]) => FlagSpec::d(*ell),
        ('E', []) => Ok(FlagSpec::e()),
        _ => Err(FlagError::Parse(format!("{tag}:{params:?}"))),
    }
}

impl FromStr for FlagSpec {
    type Err = FlagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || FlagError::Parse(s.to_string());
        if s == "E" {
            return Ok(FlagSpec::e());
        }
        let (tag, rest) = s.split_once(':').ok_or_else(err)?;
        let params = rest
            .split(',')
            .map(|t| t.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        match tag {
            "A" if params.len() == 3 => FlagSpec::a(params[0], params[1], params[2]),
            "D" if params.len() == 1 => FlagSpec::d(params[0]),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for FlagSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::A { m, n, p } => write!(f, "A:{m},{n},{p}"),
            Family::D { ell } => write!(f, "D:{ell}"),
            Family::E => write!(f, "E"),
        }
    }
}

/// Relation between the T-root representatives: `[α₃] = a₁[α₁] + a₂[α₂]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TRootTable {
    pub representatives: [&'static str; 3],
    pub relation_coeffs: [u32; 2],
}

impl TRootTable {
    /// Evaluate all three T-roots given the values of the first two.
    pub fn evaluate(&self, a1: f64, a2: f64) -> [f64; 3] {
        let [c1, c2] = self.relation_coeffs;
        [a1, a2, c1 as f64 * a1 + c2 as f64 * a2]
    }
}

pub fn t_root_table(_spec: &FlagSpec) -> TRootTable {
    // All Type II flags share [α₁] + [α₂] = [α₃].
    TRootTable {
        representatives: ["[a1]", "[a2]", "[a3]"],
        relation_coeffs: [1, 1],
    }
}
