//! Synthetic precision structures and Gaussian data.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{GgmError, Result};
use crate::linalg::{cholesky, SymMatrix};
use crate::model::DataMatrix;
use crate::sampler::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Identity,
    Banded,
    Block,
    Sparse,
    Dense,
}

impl StructureKind {
    pub const ALL: [StructureKind; 5] = [
        StructureKind::Identity,
        StructureKind::Banded,
        StructureKind::Block,
        StructureKind::Sparse,
        StructureKind::Dense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Identity => "identity",
            StructureKind::Banded => "banded",
            StructureKind::Block => "block",
            StructureKind::Sparse => "sparse",
            StructureKind::Dense => "dense",
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = GgmError;

    fn from_str(s: &str) -> Result<Self> {
        StructureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GgmError::InvalidArgument(format!("unknown structure kind `{s}`")))
    }
}

fn default_pi() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub kind: StructureKind,
    pub p: usize,
    /// Edge probability of the sparse kind.
    #[serde(default = "default_pi")]
    pub pi: f64,
    #[serde(default)]
    pub seed: u64,
}

impl StructureSpec {
    pub fn new(kind: StructureKind, p: usize, seed: u64) -> Self {
        StructureSpec {
            kind,
            p,
            pi: default_pi(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(GgmError::InvalidArgument(format!(
                "structure dimension must be at least 2, got {}",
                self.p
            )));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(GgmError::InvalidArgument(format!(
                "sparse edge probability must lie in (0, 1), got {}",
                self.pi
            )));
        }
        Ok(())
    }
}

/// Rescales a PD matrix `M = Q Ω Q` with `Q = diag(√M_ii)` to unit diagonal.
fn normalize(m: &DMatrix<f64>) -> SymMatrix {
    let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].sqrt()).collect();
    SymMatrix::from_upper_fn(m.nrows(), |i, j| {
        if i == j {
            1.0
        } else {
            m[(i, j)] / (d[i] * d[j])
        }
    })
}

/// `L Lᵀ` for unit-lower-triangular `L` with standard-normal entries, scaled
/// to unit diagonal.
pub fn random_pd_correlation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> SymMatrix {
    let mut l = DMatrix::<f64>::identity(p, p);
    for i in 0..p {
        for j in 0..i {
            l[(i, j)] = dist::std_normal(rng);
        }
    }
    normalize(&(&l * l.transpose()))
}

/// Tridiagonal with 0.5 on the first off-diagonals.
pub fn banded(p: usize) -> SymMatrix {
    SymMatrix::from_upper_fn(p, |i, j| match j - i {
        0 => 1.0,
        1 => 0.5,
        _ => 0.0,
    })
}

fn block<R: Rng + ?Sized>(p: usize, rng: &mut R) -> SymMatrix {
    let k = rng.random_range(1..p);
    let first = random_pd_correlation(p - k, rng);
    let second = random_pd_correlation(k, rng);
    first.block_diag(&second)
}

fn sparse<R: Rng + ?Sized>(p: usize, pi: f64, rng: &mut R) -> SymMatrix {
    let mut v = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random::<f64>() < pi {
                let magnitude = rng.random_range(0.5..=1.0);
                let x = if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                };
                v[(i, j)] = x;
                v[(j, i)] = x;
            }
        }
    }
    let lambda_min = SymmetricEigen::new(v.clone()).eigenvalues.min();
    let delta = (-lambda_min).max(0.0) + 0.1;
    normalize(&(v + DMatrix::identity(p, p) * delta))
}

/// True precision matrix (unit diagonal) of the requested structure.
pub fn generate(spec: &StructureSpec) -> Result<SymMatrix> {
    spec.validate()?;
    let mut rng = chain_rng(spec.seed, 0);
    let p = spec.p;
    Ok(match spec.kind {
        StructureKind::Identity => SymMatrix::identity(p),
        StructureKind::Banded => banded(p),
        StructureKind::Block => block(p, &mut rng),
        StructureKind::Sparse => sparse(p, spec.pi, &mut rng),
        StructureKind::Dense => random_pd_correlation(p, &mut rng),
    })
}

/// `n` independent draws from `N(mean, Ω⁻¹)`.
pub fn simulate_data<R: Rng + ?Sized>(
    omega: &SymMatrix,
    n: usize,
    mean: &DVector<f64>,
    rng: &mut R,
) -> Result<DataMatrix> {
    let p = omega.dim();
    if mean.len() != p {
        return Err(GgmError::DimensionMismatch {
            expected: p,
            found: mean.len(),
        });
    }
    let l = cholesky(omega, 0.0)?;
    let lt = l.transpose();
    let mut y = DMatrix::<f64>::zeros(p, n);
    for s in 0..n {
        let z = dist::std_normal_vec(p, rng);
        // Lᵀ x = z gives Cov(x) = Ω⁻¹.
        let x = lt
            .solve_upper_triangular(&z)
            .ok_or(GgmError::NotPositiveDefinite { index: 0, pivot: 0.0 })?;
        y.set_column(s, &(x + mean));
    }
    DataMatrix::new(y)
}
