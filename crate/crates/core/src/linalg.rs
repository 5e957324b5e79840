//! Dense symmetric linear algebra and the positive-definiteness interval that
//! gates every edge update.
//!
//! For a correlation matrix `C`, the determinant of `C` with the symmetric pair
//! `(i, j)` replaced by `x` is a quadratic in `x`. The set of `x` keeping `C`
//! positive definite is the connected component of `{x : det > 0}` that
//! contains a positive-definite value, intersected with `[-1, 1]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GgmError, Result};

/// Relative asymmetry tolerated by [`SymMatrix::new`] before rejecting the input.
const SYMMETRY_TOL: f64 = 1e-9;

/// Below this magnitude the leading determinant coefficient is treated as zero.
pub const DEGENERATE_QUADRATIC: f64 = 1e-12;

/// Slack removed from each side of a [`PdInterval`] before values are sampled in it.
pub const PD_EPSILON: f64 = 1e-8;

/// A dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m`, checking symmetry and then symmetrizing exactly.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(GgmError::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(GgmError::InvalidArgument("empty matrix".into()));
        }
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                let scale = 1.0f64.max(m[(i, j)].abs()).max(m[(j, i)].abs());
                if gap > SYMMETRY_TOL * scale || gap.is_nan() {
                    return Err(GgmError::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds `(m + mᵀ)/2` without checking.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Builds from a closure evaluated on the upper triangle (including the diagonal).
    pub fn from_upper_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        for r in rows {
            if r.len() != p {
                return Err(GgmError::DimensionMismatch {
                    expected: p,
                    found: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// Block-diagonal concatenation `diag(self, other)`.
    pub fn block_diag(&self, other: &SymMatrix) -> SymMatrix {
        let (a, b) = (self.dim(), other.dim());
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.0);
        m.view_mut((a, a), (b, b)).copy_from(&other.0);
        SymMatrix(m)
    }

    /// Rescales to unit diagonal: `D^{-1/2} M D^{-1/2}`.
    pub fn to_correlation(&self) -> SymMatrix {
        let d: Vec<f64> = (0..self.dim()).map(|i| self.get(i, i).sqrt()).collect();
        SymMatrix::from_upper_fn(self.dim(), |i, j| {
            if i == j {
                1.0
            } else {
                self.get(i, j) / (d[i] * d[j])
            }
        })
    }
}

/// Lower Cholesky factor `L` with `m = L Lᵀ`. Fails when a pivot is `<= margin`.
pub fn cholesky(m: &SymMatrix, margin: f64) -> Result<DMatrix<f64>> {
    let p = m.dim();
    let a = m.as_matrix();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > margin) {
            return Err(GgmError::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

pub fn log_det_pd(m: &SymMatrix) -> Result<f64> {
    let l = cholesky(m, 0.0)?;
    Ok(2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub fn is_pd(m: &SymMatrix, margin: f64) -> bool {
    cholesky(m, margin).is_ok()
}

/// Inverse of a positive-definite matrix via its Cholesky factor.
pub fn inverse_pd(m: &SymMatrix) -> Result<SymMatrix> {
    let l = cholesky(m, 0.0)?;
    let chol = nalgebra::Cholesky::pack_dirty(l);
    Ok(SymMatrix::symmetrize(chol.inverse()))
}

/// Determinant of an arbitrary square matrix by LU with partial pivoting.
pub fn det_lu(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// Interval `[lo, hi] ⊆ [-1, 1]` of admissible values for one off-diagonal entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PdInterval {
    pub fn full() -> Self {
        PdInterval { lo: -1.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Removes `eps` from both ends; a too-narrow interval collapses to its midpoint.
    pub fn shrunk(&self, eps: f64) -> Self {
        if self.width() > 2.0 * eps {
            PdInterval {
                lo: self.lo + eps,
                hi: self.hi - eps,
            }
        } else {
            let mid = 0.5 * (self.lo + self.hi);
            PdInterval { lo: mid, hi: mid }
        }
    }
}

/// `det(C(x)) = d x² + e x + g` for one symmetric entry pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetQuadratic {
    pub d: f64,
    pub e: f64,
    pub g: f64,
}

impl DetQuadratic {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.d * x + self.e) * x + self.g
    }

    /// Real roots in ascending order (one root in the linear case).
    fn roots(&self) -> Vec<f64> {
        let DetQuadratic { d, e, g } = *self;
        if d.abs() < DEGENERATE_QUADRATIC {
            if e == 0.0 {
                return Vec::new();
            }
            return vec![-g / e];
        }
        let disc = e * e - 4.0 * d * g;
        if disc < 0.0 {
            return Vec::new();
        }
        let sq = disc.sqrt();
        let qv = -0.5 * (e + e.signum() * sq);
        let (r1, r2) = if qv == 0.0 {
            (0.0, 0.0)
        } else {
            (qv / d, g / qv)
        };
        if r1 <= r2 {
            vec![r1, r2]
        } else {
            vec![r2, r1]
        }
    }
}

/// Interpolates the determinant of `c` as a quadratic in entry `(i, j)` from
/// the three probes `x ∈ {-1/2, 0, 1/2}`.
pub fn det_quadratic(c: &SymMatrix, i: usize, j: usize) -> DetQuadratic {
    let mut m = c.as_matrix().clone();
    let mut probe = |x: f64| {
        m[(i, j)] = x;
        m[(j, i)] = x;
        det_lu(&m)
    };
    let f_neg = probe(-0.5);
    let f_zero = probe(0.0);
    let f_pos = probe(0.5);
    DetQuadratic {
        d: 2.0 * (f_pos + f_neg - 2.0 * f_zero),
        e: f_pos - f_neg,
        g: f_zero,
    }
}

/// Admissible interval for entry `(i, j)` of correlation matrix `c`.
pub fn pd_interval(c: &SymMatrix, i: usize, j: usize) -> Result<PdInterval> {
    if i == j || i >= c.dim() || j >= c.dim() {
        return Err(GgmError::InvalidArgument(format!(
            "pd_interval needs distinct in-range indices, got ({i}, {j})"
        )));
    }
    let quad = det_quadratic(c, i, j);
    interval_from_quadratic(&quad, Some(c.get(i, j)), i, j)
}

/// Selects the component of `{x ∈ [-1, 1] : f(x) > 0}` containing `current`
/// when `f(current) > 0`, otherwise the widest component.
pub fn interval_from_quadratic(
    quad: &DetQuadratic,
    current: Option<f64>,
    i: usize,
    j: usize,
) -> Result<PdInterval> {
    let mut cuts = vec![-1.0];
    cuts.extend(quad.roots().into_iter().filter(|r| *r > -1.0 && *r < 1.0));
    cuts.push(1.0);

    let components: Vec<PdInterval> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .filter(|w| quad.eval(0.5 * (w[0] + w[1])) > 0.0)
        .map(|w| PdInterval { lo: w[0], hi: w[1] })
        .collect();

    if let Some(x) = current {
        if quad.eval(x) > 0.0 {
            if let Some(hit) = components.iter().find(|iv| iv.lo < x && x < iv.hi) {
                return Ok(*hit);
            }
        }
    }
    components
        .into_iter()
        .max_by(|a, b| a.width().total_cmp(&b.width()))
        .ok_or(GgmError::NoValidInterval { i, j })
}
