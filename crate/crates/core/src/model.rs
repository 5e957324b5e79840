//! Single-group lasso-selection graphical model: parameter types and every
//! log-density the samplers need.
//!
//! The precision matrix is `Ω = S (A ⊙ R) S` where `S` is diagonal, `A` is a
//! binary selection matrix and `R` holds Laplace-shrunk pre-correlations. The
//! data likelihood is matrix normal with row covariance `Ω⁻¹` and sample
//! variance `σ²`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{Adjacency, UpperTri};
use crate::dist;
use crate::error::{GgmError, Result};
use crate::linalg::{
    det_quadratic, interval_from_quadratic, is_pd, log_det_pd, PdInterval, SymMatrix, PD_EPSILON,
};

/// Observations stored variables × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    y: DMatrix<f64>,
}

impl DataMatrix {
    /// `y` is `p × n`. Requires finite entries and at least one sample.
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(GgmError::InvalidArgument("data has no variables".into()));
        }
        if y.ncols() == 0 {
            return Err(GgmError::InvalidArgument("data has no samples".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GgmError::InvalidArgument("data has non-finite entries".into()));
        }
        Ok(DataMatrix { y })
    }

    /// Builds from sample rows (`n` rows of length `p`).
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(GgmError::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(p, rows.len(), |v, s| rows[s][v]))
    }

    pub fn to_samples(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|s| self.y.column(s).iter().copied().collect())
            .collect()
    }

    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.y.column(i).into_owned()
    }

    pub fn variable_means(&self) -> DVector<f64> {
        self.y.column_mean()
    }

    /// Subtracts each variable's sample mean; returns the centered data and the means.
    pub fn centered(&self) -> (DataMatrix, DVector<f64>) {
        let means = self.variable_means();
        (self.shifted(&means), means)
    }

    /// Subtracts `center` from every sample.
    pub fn shifted(&self, center: &DVector<f64>) -> DataMatrix {
        let mut y = self.y.clone();
        for mut col in y.column_iter_mut() {
            col -= center;
        }
        DataMatrix { y }
    }

    /// `Y Yᵀ`.
    pub fn scatter(&self) -> SymMatrix {
        SymMatrix::symmetrize(&self.y * self.y.transpose())
    }

    pub fn select(&self, samples: &[usize]) -> Result<DataMatrix> {
        DataMatrix::new(DMatrix::from_fn(self.p(), samples.len(), |v, s| {
            self.y[(v, samples[s])]
        }))
    }
}

/// Everything the likelihood needs from the data: sample count and `Σ yᵢ yᵢᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n: usize,
    pub scatter: SymMatrix,
}

impl SufficientStats {
    pub fn from_data(y: &DataMatrix) -> Self {
        SufficientStats {
            n: y.n(),
            scatter: y.scatter(),
        }
    }

    /// No observations: the sampler then draws from the prior.
    pub fn prior_only(p: usize) -> Self {
        SufficientStats {
            n: 0,
            scatter: SymMatrix::symmetrize(DMatrix::zeros(p, p)),
        }
    }

    /// Stats of the selected samples after subtracting `center`.
    pub fn about(y: &DataMatrix, samples: &[usize], center: &DVector<f64>) -> Self {
        let p = y.p();
        let mut m = DMatrix::<f64>::zeros(p, p);
        for &s in samples {
            let d = y.y().column(s) - center;
            m.ger(1.0, &d, &d, 1.0);
        }
        SufficientStats {
            n: samples.len(),
            scatter: SymMatrix::symmetrize(m),
        }
    }

    pub fn p(&self) -> usize {
        self.scatter.dim()
    }
}

/// The `(S, A, R)` triple with the derived correlation matrix `C = A ⊙ R`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionDecomposition {
    s: Vec<f64>,
    a: Adjacency,
    r: SymMatrix,
    c: SymMatrix,
}

impl PrecisionDecomposition {
    pub fn new(s: Vec<f64>, a: Adjacency, r: SymMatrix) -> Result<Self> {
        let p = s.len();
        if a.dim() != p || r.dim() != p {
            return Err(GgmError::DimensionMismatch {
                expected: p,
                found: if a.dim() != p { a.dim() } else { r.dim() },
            });
        }
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(GgmError::InvalidArgument("scales must be positive".into()));
        }
        for i in 0..p {
            if r.get(i, i) != 1.0 {
                return Err(GgmError::InvalidArgument("R must have unit diagonal".into()));
            }
            for j in (i + 1)..p {
                if !(-1.0..=1.0).contains(&r.get(i, j)) {
                    return Err(GgmError::InvalidArgument(format!(
                        "R[{i}][{j}] = {} outside [-1, 1]",
                        r.get(i, j)
                    )));
                }
            }
        }
        let c = SymMatrix::from_upper_fn(p, |i, j| {
            if i == j {
                1.0
            } else if *a.get(i, j) {
                r.get(i, j)
            } else {
                0.0
            }
        });
        if !is_pd(&c, 0.0) {
            return Err(GgmError::NotPositiveDefinite {
                index: 0,
                pivot: 0.0,
            });
        }
        Ok(PrecisionDecomposition { s, a, r, c })
    }

    /// `S = I`, `A = 0`, `R = I`.
    pub fn identity(p: usize) -> Self {
        PrecisionDecomposition {
            s: vec![1.0; p],
            a: Adjacency::empty(p),
            r: SymMatrix::identity(p),
            c: SymMatrix::identity(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn a(&self) -> &Adjacency {
        &self.a
    }

    pub fn r(&self) -> &SymMatrix {
        &self.r
    }

    pub fn c(&self) -> &SymMatrix {
        &self.c
    }

    /// `Ω = S C S`.
    pub fn omega(&self) -> SymMatrix {
        let s = &self.s;
        SymMatrix::from_upper_fn(self.dim(), |i, j| s[i] * self.c.get(i, j) * s[j])
    }

    /// Sets `(A_ij, R_ij)` without a PD check; callers keep `C` inside its interval.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool, r: f64) {
        self.a.set(i, j, present);
        self.r.set(i, j, r);
        self.c.set(i, j, if present { r } else { 0.0 });
    }

    pub fn set_scale(&mut self, i: usize, s: f64) {
        self.s[i] = s;
    }

    /// `tr(Ω M)` for a symmetric `M`.
    pub fn trace_with(&self, m: &SymMatrix) -> f64 {
        let p = self.dim();
        let mut t = 0.0;
        for i in 0..p {
            let mut row = 0.0;
            for j in 0..p {
                row += self.c.get(i, j) * self.s[j] * m.get(i, j);
            }
            t += self.s[i] * row;
        }
        t
    }

    /// `ln |Ω| = ln |C| + 2 Σ ln Sᵢ`.
    pub fn log_det_omega(&self) -> Result<f64> {
        Ok(log_det_pd(&self.c)? + 2.0 * self.s.iter().map(|v| v.ln()).sum::<f64>())
    }
}

/// Complete parameter state of one iteration of the single-group sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct GgmChainState {
    pub decomp: PrecisionDecomposition,
    pub tau: UpperTri<f64>,
    pub q: UpperTri<f64>,
    pub sigma2: f64,
}

impl GgmChainState {
    pub fn dim(&self) -> usize {
        self.decomp.dim()
    }
}

/// Prior constants of the single-group hierarchy.
///
/// `τᵢⱼ ~ IG(e, f)`, `qᵢⱼ ~ Beta(a, b)`, `Sᵢ ~ IG(g, h)`, `σ² ~ IG(k, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GgmPrior {
    pub e: f64,
    pub f: f64,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub h: f64,
    pub k: f64,
    pub l: f64,
}

impl Default for GgmPrior {
    fn default() -> Self {
        GgmPrior {
            e: 2.0,
            f: 0.5,
            a: 1.0,
            b: 1.0,
            g: 2.0,
            h: 1.0,
            k: 2.0,
            l: 1.0,
        }
    }
}

impl GgmPrior {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e, self.f, self.a, self.b, self.g, self.h, self.k, self.l];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(GgmError::InvalidArgument(
                "prior shape and scale parameters must be positive".into(),
            ))
        }
    }
}

/// Finite-mixture block: Dirichlet weights, inverse-Wishart prior on `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixturePrior {
    /// Dirichlet parameters; a single value is repeated for every component.
    pub alpha: Vec<f64>,
    /// Degrees of freedom `ν₀`; defaults to `p + 2`.
    pub nu0: Option<f64>,
    /// Scale `B₀` as rows; defaults to the identity.
    pub b0: Option<Vec<Vec<f64>>>,
}

impl Default for MixturePrior {
    fn default() -> Self {
        MixturePrior {
            alpha: vec![1.0],
            nu0: None,
            b0: None,
        }
    }
}

impl MixturePrior {
    pub fn alpha_for(&self, k: usize) -> Result<Vec<f64>> {
        let alpha = match self.alpha.len() {
            1 => vec![self.alpha[0]; k],
            len if len == k => self.alpha.clone(),
            len => {
                return Err(GgmError::DimensionMismatch {
                    expected: k,
                    found: len,
                })
            }
        };
        if alpha.iter().all(|a| *a > 0.0) {
            Ok(alpha)
        } else {
            Err(GgmError::InvalidArgument("dirichlet parameters must be positive".into()))
        }
    }

    pub fn nu0_for(&self, p: usize) -> Result<f64> {
        let nu0 = self.nu0.unwrap_or(p as f64 + 2.0);
        if nu0 > p as f64 - 1.0 {
            Ok(nu0)
        } else {
            Err(GgmError::InvalidArgument(format!(
                "nu0 = {nu0} must exceed p - 1 = {}",
                p - 1
            )))
        }
    }

    pub fn b0_for(&self, p: usize) -> Result<SymMatrix> {
        match &self.b0 {
            None => Ok(SymMatrix::identity(p)),
            Some(rows) => {
                let b0 = SymMatrix::from_rows(rows)?;
                if b0.dim() != p {
                    return Err(GgmError::DimensionMismatch {
                        expected: p,
                        found: b0.dim(),
                    });
                }
                Ok(b0)
            }
        }
    }
}

/// Dirichlet-process block: precision `α` and base-prior constants.
///
/// Base prior: `τ ~ IG(ν_e, ν_f)`, `q ~ Beta(ν_c, ν_d)`, `S ~ IG(ν_α, ν_β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpPrior {
    pub alpha: f64,
    pub nu_e: f64,
    pub nu_f: f64,
    pub nu_c: f64,
    pub nu_d: f64,
    pub nu_alpha: f64,
    pub nu_beta: f64,
}

impl Default for DpPrior {
    fn default() -> Self {
        DpPrior {
            alpha: 1.0,
            nu_e: 2.0,
            nu_f: 0.5,
            nu_c: 1.0,
            nu_d: 1.0,
            nu_alpha: 3.0,
            nu_beta: 2.0,
        }
    }
}

impl DpPrior {
    /// The cluster-level GGM prior implied by the base measure.
    pub fn ggm_prior(&self) -> GgmPrior {
        GgmPrior {
            e: self.nu_e,
            f: self.nu_f,
            a: self.nu_c,
            b: self.nu_d,
            g: self.nu_alpha,
            h: self.nu_beta,
            ..GgmPrior::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.nu_e,
            self.nu_f,
            self.nu_c,
            self.nu_d,
            self.nu_alpha,
            self.nu_beta,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(GgmError::InvalidArgument("DP constants must be positive".into()))
        }
    }
}

/// All fixed prior constants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub ggm: GgmPrior,
    pub mixture: MixturePrior,
    pub dp: DpPrior,
}

/// Matrix-normal log-likelihood of `n` samples with precision `Ω` and variance `σ²`.
pub fn log_likelihood(stats: &SufficientStats, state: &GgmChainState) -> Result<f64> {
    let n = stats.n as f64;
    let p = stats.p() as f64;
    let log_det = state.decomp.log_det_omega()?;
    let trace = state.decomp.trace_with(&stats.scatter);
    Ok(-0.5 * n * p * (2.0 * PI * state.sigma2).ln() + 0.5 * n * log_det
        - trace / (2.0 * state.sigma2))
}

/// `ln Laplace(r; 0, τ)`.
#[inline]
pub fn log_laplace_prior(r: f64, tau: f64) -> f64 {
    -(2.0 * tau).ln() - r.abs() / tau
}

/// `sgn(v)(1 - e^{-|v|/τ}) - sgn(u)(1 - e^{-|u|/τ})`: twice the Laplace mass on `[u, v]`.
pub fn laplace_window(tau: f64, u: f64, v: f64) -> f64 {
    let part = |x: f64| {
        let sgn = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        sgn * (-(-x.abs() / tau).exp_m1())
    };
    part(v) - part(u)
}

/// `K⁻¹(τ, q) = (1-q)/2 · (v-u)/τ · 1[0 ∈ [u,v]] + q/2 · W(u, v)`.
pub fn inverse_truncation_constant(tau: f64, q: f64, interval: &PdInterval) -> f64 {
    let (u, v) = (interval.lo, interval.hi);
    let absent = if interval.contains(0.0) {
        0.5 * (1.0 - q) * (v - u) / tau
    } else {
        0.0
    };
    absent + 0.5 * q * laplace_window(tau, u, v)
}

/// The normalizing constant `K(τ, q)` of the truncated joint prior of `(A_ij, R_ij)`.
pub fn truncation_constant(tau: f64, q: f64, interval: &PdInterval) -> Result<f64> {
    let inv = inverse_truncation_constant(tau, q, interval);
    if inv > 0.0 && inv.is_finite() {
        Ok(1.0 / inv)
    } else {
        Err(GgmError::ZeroMass)
    }
}

/// Resolution of the griddy-Gibbs table for present edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 100 }
    }
}

/// Unnormalized joint conditional of `(A_ij, R_ij)`.
///
/// The absent row is a single atom carrying the full Laplace mass on `[-1, 1]`
/// (the likelihood does not depend on `R_ij` when `A_ij = 0`); the present row
/// holds one cell per midpoint of an equispaced grid over the shrunk admissible
/// interval, weighted by density times cell width.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    /// Admissible interval for `C_ij` before shrinking.
    pub interval: PdInterval,
    pub grid: Vec<f64>,
    pub log_absent: f64,
    pub log_present: Vec<f64>,
}

impl EdgeTable {
    /// Normalized `(P(A=0), P(A=1, R=grid[k]))`.
    pub fn probabilities(&self) -> Option<(f64, Vec<f64>)> {
        let max = self
            .log_present
            .iter()
            .copied()
            .chain(std::iter::once(self.log_absent))
            .filter(|w| w.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        let w = |lw: f64| if lw.is_finite() { (lw - max).exp() } else { 0.0 };
        let absent = w(self.log_absent);
        let present: Vec<f64> = self.log_present.iter().map(|lw| w(*lw)).collect();
        let total = absent + present.iter().sum::<f64>();
        Some((absent / total, present.iter().map(|x| x / total).collect()))
    }

    /// Draws `(A_ij, R_ij)`; an absent draw takes `R_ij` from the Laplace prior on `[-1, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, tau: f64, rng: &mut R) -> Option<(bool, f64)> {
        let mut log_w = Vec::with_capacity(self.grid.len() + 1);
        log_w.push(self.log_absent);
        log_w.extend_from_slice(&self.log_present);
        match dist::categorical_log(&log_w, rng)? {
            0 => Some((false, dist::truncated_laplace(tau, -1.0, 1.0, rng))),
            k => Some((true, self.grid[k - 1])),
        }
    }
}

/// Midpoints of `points` equal cells covering `interval`.
pub fn midpoint_grid(interval: &PdInterval, points: usize) -> (Vec<f64>, f64) {
    let width = interval.width() / points as f64;
    let grid = (0..points)
        .map(|k| interval.lo + (k as f64 + 0.5) * width)
        .collect();
    (grid, width)
}

/// Options that change which rows of the edge table are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeOptions {
    /// Holds `A_ij = 1`, leaving only the present row.
    pub force_present: bool,
}

/// Joint conditional table of `(A_ij, R_ij)` given everything else.
pub fn edge_table(
    stats: &SufficientStats,
    state: &GgmChainState,
    i: usize,
    j: usize,
    grid: GridSpec,
) -> Result<EdgeTable> {
    edge_table_with(stats, state, i, j, grid, EdgeOptions::default())
}

pub fn edge_table_with(
    stats: &SufficientStats,
    state: &GgmChainState,
    i: usize,
    j: usize,
    grid: GridSpec,
    options: EdgeOptions,
) -> Result<EdgeTable> {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    let decomp = &state.decomp;
    let quad = det_quadratic(decomp.c(), i, j);
    let interval = interval_from_quadratic(&quad, Some(decomp.c().get(i, j)), i, j)?;
    let tau = *state.tau.get(i, j);
    let q = *state.q.get(i, j);
    let n_half = 0.5 * stats.n as f64;
    let s = decomp.s();
    // tr(Ω M) is affine in x = C_ij with slope 2 SᵢSⱼMᵢⱼ.
    let slope = s[i] * s[j] * stats.scatter.get(i, j) / state.sigma2;

    let log_det_term = |x: f64| {
        let f = quad.eval(x);
        if f > 0.0 {
            if n_half == 0.0 {
                0.0
            } else {
                n_half * f.ln()
            }
        } else {
            f64::NEG_INFINITY
        }
    };

    let shrunk = interval.shrunk(PD_EPSILON);
    let (grid_pts, width) = midpoint_grid(&shrunk, grid.points);
    let log_q = q.ln();
    let log_width = width.ln();
    let log_present = grid_pts
        .iter()
        .map(|&x| {
            log_det_term(x) - slope * x + log_q + log_laplace_prior(x, tau) + log_width
        })
        .collect();

    let log_absent = if !options.force_present && shrunk.contains(0.0) {
        // Laplace mass on [-1, 1] is 1 - e^{-1/τ}.
        log_det_term(0.0) + (1.0 - q).ln() + (-(-1.0 / tau).exp_m1()).ln()
    } else {
        f64::NEG_INFINITY
    };

    Ok(EdgeTable {
        interval,
        grid: grid_pts,
        log_absent,
        log_present,
    })
}
