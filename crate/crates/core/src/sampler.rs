//! MCMC for the single-group lasso-selection model.
//!
//! One iteration is a systematic sweep: for every pair `i < j` in row-major
//! order the admissible interval of `C_ij` is computed, `(A_ij, R_ij)` is drawn
//! from its griddy joint conditional and `τ_ij`, `q_ij` take one
//! Metropolis-Hastings step each; then every `S_i` takes an MH step and `σ²`
//! is drawn from its inverse-gamma conditional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{pairs, Adjacency, UpperTri};
use crate::dist;
use crate::error::{GgmError, Result};
use crate::linalg::{inverse_pd, is_pd, PdInterval, SymMatrix};
use crate::model::{
    edge_table_with, inverse_truncation_constant, EdgeOptions, GgmChainState, GgmPrior, GridSpec,
    PrecisionDecomposition, SufficientStats,
};

/// Run length, thinning, seed and proposal scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub step_tau: f64,
    pub step_q: f64,
    pub step_s: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 20_000,
            burn_in: 4_000,
            thin: 4,
            seed: 0,
            grid_points: 100,
            step_tau: 0.25,
            step_q: 0.5,
            step_s: 0.1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GgmError::InvalidArgument(msg));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return bad("thin must be positive".into());
        }
        if self.grid_points < 10 {
            return bad(format!("grid_points must be at least 10, got {}", self.grid_points));
        }
        for (name, v) in [
            ("step_tau", self.step_tau),
            ("step_q", self.step_q),
            ("step_s", self.step_s),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a nonnegative finite number"));
            }
        }
        Ok(())
    }

    /// Number of states kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            points: self.grid_points,
        }
    }

    pub fn steps(&self) -> ProposalSteps {
        ProposalSteps {
            tau: self.step_tau,
            q: self.step_q,
            s: self.step_s,
        }
    }
}

/// Random-walk scales: log-normal for `τ` and `S`, logit-normal for `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalSteps {
    pub tau: f64,
    pub q: f64,
    pub s: f64,
}

/// Which blocks a sweep updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepFlags {
    pub tau: bool,
    pub q: bool,
    pub s: bool,
    pub sigma2: bool,
    /// Keeps every `A_ij = 1`.
    pub force_edges: bool,
}

impl Default for SweepFlags {
    fn default() -> Self {
        SweepFlags {
            tau: true,
            q: true,
            s: true,
            sigma2: true,
            force_edges: false,
        }
    }
}

impl SweepFlags {
    /// Mixture components carry no `σ²`.
    pub fn without_sigma2() -> Self {
        SweepFlags {
            sigma2: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn merge(&mut self, other: &Counter) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }
}

/// Acceptance bookkeeping per parameter family. For edges, "accepted" means
/// the griddy table was usable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub edge: Counter,
    pub tau: Counter,
    pub q: Counter,
    pub s: Counter,
}

impl Acceptance {
    pub fn merge(&mut self, other: &Acceptance) {
        self.edge.merge(&other.edge);
        self.tau.merge(&other.tau);
        self.q.merge(&other.q);
        self.s.merge(&other.s);
    }

    pub fn rates(&self) -> AcceptanceRates {
        AcceptanceRates {
            edge: self.edge.rate(),
            tau: self.tau.rate(),
            q: self.q.rate(),
            s: self.s.rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub edge: f64,
    pub tau: f64,
    pub q: f64,
    pub s: f64,
}

/// Retained draws of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub states: Vec<GgmChainState>,
    pub adjacency: Vec<Adjacency>,
    pub acceptance: Acceptance,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Generator for chain `stream` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `min(1, exp(log_ratio))`.
#[inline]
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.exp()
    }
}

#[inline]
fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// Draws `(A_ij, R_ij)` from the griddy joint conditional. Returns the
/// admissible interval of `C_ij`, or `EmptyTable` with the state unchanged.
pub fn update_edge<R: Rng + ?Sized>(
    state: &mut GgmChainState,
    stats: &SufficientStats,
    i: usize,
    j: usize,
    grid: GridSpec,
    force_edges: bool,
    rng: &mut R,
) -> Result<PdInterval> {
    let table = edge_table_with(
        stats,
        state,
        i,
        j,
        grid,
        EdgeOptions {
            force_present: force_edges,
        },
    )?;
    let tau = *state.tau.get(i, j);
    let (present, r) = table
        .sample(tau, rng)
        .ok_or(GgmError::EmptyTable { i, j })?;
    let old_a = *state.decomp.a().get(i, j);
    let old_r = state.decomp.r().get(i, j);
    state.decomp.set_edge(i, j, present, r);
    if present && !is_pd(state.decomp.c(), 0.0) {
        state.decomp.set_edge(i, j, old_a, old_r);
        return Err(GgmError::EmptyTable { i, j });
    }
    Ok(table.interval)
}

/// Log of the `τ_ij` full conditional up to a constant.
pub fn log_target_tau(
    tau: f64,
    q: f64,
    abs_c: f64,
    interval: &PdInterval,
    prior: &GgmPrior,
) -> f64 {
    if !(tau > 0.0) || !tau.is_finite() {
        return f64::NEG_INFINITY;
    }
    let inv_k = inverse_truncation_constant(tau, q, interval);
    if !(inv_k > 0.0) {
        return f64::NEG_INFINITY;
    }
    -inv_k.ln() - tau.ln() - abs_c / tau - (prior.e + 1.0) * tau.ln() - prior.f / tau
}

/// Log of the `q_ij` full conditional up to a constant.
pub fn log_target_q(q: f64, tau: f64, present: bool, interval: &PdInterval, prior: &GgmPrior) -> f64 {
    if !(q > 0.0 && q < 1.0) {
        return f64::NEG_INFINITY;
    }
    let inv_k = inverse_truncation_constant(tau, q, interval);
    if !(inv_k > 0.0) {
        return f64::NEG_INFINITY;
    }
    let bern = if present { q.ln() } else { (1.0 - q).ln() };
    -inv_k.ln() + bern + (prior.a - 1.0) * q.ln() + (prior.b - 1.0) * (1.0 - q).ln()
}

/// One log-normal random-walk MH step for `τ_ij`.
pub fn update_tau<R: Rng + ?Sized>(
    state: &mut GgmChainState,
    i: usize,
    j: usize,
    interval: &PdInterval,
    prior: &GgmPrior,
    step: f64,
    rng: &mut R,
) -> bool {
    let tau = *state.tau.get(i, j);
    let q = *state.q.get(i, j);
    let abs_c = state.decomp.c().get(i, j).abs();
    let proposal = tau * (step * dist::std_normal(rng)).exp();
    let log_ratio = log_target_tau(proposal, q, abs_c, interval, prior)
        - log_target_tau(tau, q, abs_c, interval, prior)
        + (proposal / tau).ln();
    let accept = mh_accept(log_ratio, rng);
    if accept {
        state.tau.set(i, j, proposal);
    }
    accept
}

#[inline]
fn logit(q: f64) -> f64 {
    (q / (1.0 - q)).ln()
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One logit random-walk MH step for `q_ij`.
pub fn update_q<R: Rng + ?Sized>(
    state: &mut GgmChainState,
    i: usize,
    j: usize,
    interval: &PdInterval,
    prior: &GgmPrior,
    step: f64,
    rng: &mut R,
) -> bool {
    let q = *state.q.get(i, j);
    let tau = *state.tau.get(i, j);
    let present = *state.decomp.a().get(i, j);
    let proposal = logistic(logit(q) + step * dist::std_normal(rng));
    // Jacobian of the logit map: q(1 - q).
    let log_ratio = log_target_q(proposal, tau, present, interval, prior)
        - log_target_q(q, tau, present, interval, prior)
        + (proposal * (1.0 - proposal)).ln()
        - (q * (1.0 - q)).ln();
    let accept = mh_accept(log_ratio, rng);
    if accept {
        state.q.set(i, j, proposal);
    }
    accept
}

/// Shape and scale of the `σ²` full conditional.
pub fn sigma2_posterior(state: &GgmChainState, stats: &SufficientStats, prior: &GgmPrior) -> (f64, f64) {
    let shape = prior.k + 0.5 * (stats.n * stats.p()) as f64;
    let scale = prior.l + 0.5 * state.decomp.trace_with(&stats.scatter);
    (shape, scale)
}

/// Exact inverse-gamma draw of `σ²`.
pub fn update_sigma2<R: Rng + ?Sized>(
    state: &mut GgmChainState,
    stats: &SufficientStats,
    prior: &GgmPrior,
    rng: &mut R,
) {
    let (shape, scale) = sigma2_posterior(state, stats, prior);
    state.sigma2 = dist::inv_gamma(shape, scale, rng);
}

/// Log of the `S_i` full conditional, as a function of `s`, up to a constant.
fn log_target_s(
    s: f64,
    n: f64,
    quad: f64,
    lin: f64,
    sigma2: f64,
    prior: &GgmPrior,
) -> f64 {
    if !(s > 0.0) || !s.is_finite() {
        return f64::NEG_INFINITY;
    }
    (n - prior.g - 1.0) * s.ln() - (quad * s * s + lin * s) / (2.0 * sigma2) - prior.h / s
}

/// One log-normal random-walk MH step for `S_i`.
pub fn update_s<R: Rng + ?Sized>(
    state: &mut GgmChainState,
    stats: &SufficientStats,
    i: usize,
    prior: &GgmPrior,
    step: f64,
    rng: &mut R,
) -> bool {
    let p = state.dim();
    let s = state.decomp.s();
    let c = state.decomp.c();
    let m = &stats.scatter;
    // tr(S C S M) = m_ii sᵢ² + 2 sᵢ Σ_{k≠i} C_ik s_k M_ik + const.
    let quad = m.get(i, i);
    let lin = 2.0
        * (0..p)
            .filter(|&k| k != i)
            .map(|k| c.get(i, k) * s[k] * m.get(i, k))
            .sum::<f64>();
    let n = stats.n as f64;
    let current = s[i];
    let proposal = current * (step * dist::std_normal(rng)).exp();
    let log_ratio = log_target_s(proposal, n, quad, lin, state.sigma2, prior)
        - log_target_s(current, n, quad, lin, state.sigma2, prior)
        + (proposal / current).ln();
    let accept = mh_accept(log_ratio, rng);
    if accept {
        state.decomp.set_scale(i, proposal);
    }
    accept
}

/// One full systematic sweep.
#[allow(clippy::too_many_arguments)]
pub fn sweep<R: Rng + ?Sized>(
    state: &mut GgmChainState,
    stats: &SufficientStats,
    prior: &GgmPrior,
    grid: GridSpec,
    steps: ProposalSteps,
    flags: SweepFlags,
    acceptance: &mut Acceptance,
    rng: &mut R,
) -> Result<()> {
    let p = state.dim();
    for (i, j) in pairs(p) {
        let interval = match update_edge(state, stats, i, j, grid, flags.force_edges, rng) {
            Ok(iv) => {
                acceptance.edge.record(true);
                iv
            }
            Err(GgmError::EmptyTable { .. }) => {
                acceptance.edge.record(false);
                crate::linalg::pd_interval(state.decomp.c(), i, j)?
            }
            Err(e) => return Err(e),
        };
        if flags.tau {
            let ok = update_tau(state, i, j, &interval, prior, steps.tau, rng);
            acceptance.tau.record(ok);
        }
        if flags.q {
            let ok = update_q(state, i, j, &interval, prior, steps.q, rng);
            acceptance.q.record(ok);
        }
    }
    if flags.s {
        for i in 0..p {
            let ok = update_s(state, stats, i, prior, steps.s, rng);
            acceptance.s.record(ok);
        }
    }
    if flags.sigma2 {
        update_sigma2(state, stats, prior, rng);
    }
    Ok(())
}

/// Data-informed starting point.
///
/// `C` starts halfway between the identity and the standardized inverse
/// sample covariance (identity when that is unavailable), edges are those with
/// `|C_ij| > 1e-3`, `S_i = 1/sd_i`, `τ` at its prior mode, `q` at its prior mean
/// and `σ² = 1`.
pub fn initial_state(stats: &SufficientStats, prior: &GgmPrior) -> GgmChainState {
    let p = stats.p();
    let n = stats.n as f64;
    let mut c0 = SymMatrix::identity(p);
    let mut s = vec![1.0; p];
    if stats.n > 0 {
        let cov = SymMatrix::symmetrize(stats.scatter.as_matrix() / n);
        s = (0..p)
            .map(|i| 1.0 / cov.get(i, i).clamp(1e-3, 1e3).sqrt())
            .collect();
        if stats.n > p {
            if let Ok(prec) = inverse_pd(&cov) {
                let corr = prec.to_correlation();
                c0 = SymMatrix::from_upper_fn(p, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        0.5 * corr.get(i, j)
                    }
                });
            }
        }
    }
    let a = Adjacency::from_fn(p, |i, j| c0.get(i, j).abs() > 1e-3);
    let decomp = PrecisionDecomposition::new(s.clone(), a, c0.clone())
        .unwrap_or_else(|_| {
            PrecisionDecomposition::new(s, Adjacency::empty(p), SymMatrix::identity(p))
                .expect("identity correlation is positive definite")
        });
    GgmChainState {
        decomp,
        tau: UpperTri::filled(p, prior.f / (prior.e + 1.0)),
        q: UpperTri::filled(p, prior.a / (prior.a + prior.b)),
        sigma2: 1.0,
    }
}

/// Runs the sampler on zero-mean data `y`.
pub fn run_chain(
    y: &crate::model::DataMatrix,
    prior: &GgmPrior,
    cfg: &McmcConfig,
) -> Result<ChainOutput> {
    let stats = SufficientStats::from_data(y);
    let init = initial_state(&stats, prior);
    run_chain_from(&stats, prior, cfg, SweepFlags::default(), init)
}

/// Runs the sampler from an explicit starting state.
pub fn run_chain_from(
    stats: &SufficientStats,
    prior: &GgmPrior,
    cfg: &McmcConfig,
    flags: SweepFlags,
    init: GgmChainState,
) -> Result<ChainOutput> {
    cfg.validate()?;
    prior.validate()?;
    if init.dim() != stats.p() {
        return Err(GgmError::DimensionMismatch {
            expected: stats.p(),
            found: init.dim(),
        });
    }
    let mut rng = chain_rng(cfg.seed, 0);
    let mut state = init;
    let mut acceptance = Acceptance::default();
    let mut states = Vec::with_capacity(cfg.retained());
    let mut adjacency = Vec::with_capacity(cfg.retained());
    for it in 0..cfg.iterations {
        sweep(
            &mut state,
            stats,
            prior,
            cfg.grid(),
            cfg.steps(),
            flags,
            &mut acceptance,
            &mut rng,
        )
        .map_err(|e| GgmError::ChainAbort {
            iteration: it,
            parameter: "edge sweep".into(),
            source: Box::new(e),
        })?;
        if it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0 {
            adjacency.push(state.decomp.a().clone());
            states.push(state.clone());
        }
    }
    Ok(ChainOutput {
        states,
        adjacency,
        acceptance,
    })
}

/// Prior-only run with every `A_ij` held at one and every `τ_ij = tau`, so
/// that `C = R` and the retained `R` follow their joint Laplace prior
/// restricted to positive-definite matrices.
pub fn prior_marginal_chain(p: usize, tau: f64, cfg: &McmcConfig) -> Result<ChainOutput> {
    if !(tau > 0.0) {
        return Err(GgmError::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let prior = GgmPrior::default();
    let stats = SufficientStats::prior_only(p);
    let decomp = PrecisionDecomposition::new(vec![1.0; p], Adjacency::complete(p), SymMatrix::identity(p))?;
    let init = GgmChainState {
        decomp,
        tau: UpperTri::filled(p, tau),
        q: UpperTri::filled(p, 0.5),
        sigma2: 1.0,
    };
    let flags = SweepFlags {
        tau: false,
        q: false,
        s: false,
        sigma2: false,
        force_edges: true,
    };
    run_chain_from(&stats, &prior, cfg, flags, init)
}

/// Draws of `C_01` under the uniform distribution on `p × p` correlation
/// matrices: accept-reject on independent uniforms for `p ≤ 4`, otherwise a
/// coordinate sampler drawing each entry uniformly on its admissible interval.
pub fn uniform_reference_draws(p: usize, draws: usize, seed: u64) -> Result<Vec<f64>> {
    if p < 2 {
        return Err(GgmError::InvalidArgument("need at least two variables".into()));
    }
    let mut rng = chain_rng(seed, 0);
    let mut out = Vec::with_capacity(draws);
    if p <= 4 {
        while out.len() < draws {
            let c = SymMatrix::from_upper_fn(p, |i, j| {
                if i == j {
                    1.0
                } else {
                    rng.random_range(-1.0..1.0)
                }
            });
            if is_pd(&c, 0.0) {
                out.push(c.get(0, 1));
            }
        }
        return Ok(out);
    }
    let mut c = SymMatrix::identity(p);
    let burn_in = 200;
    for sweep_index in 0..burn_in + draws {
        for (i, j) in pairs(p) {
            let iv = crate::linalg::pd_interval(&c, i, j)?.shrunk(crate::linalg::PD_EPSILON);
            let x = iv.lo + rng.random::<f64>() * iv.width();
            c.set(i, j, x);
        }
        if sweep_index >= burn_in {
            out.push(c.get(0, 1));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{edge_table, DataMatrix};

    fn prior() -> GgmPrior {
        GgmPrior::default()
    }

    fn mean_sd(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    /// Batch-means standard error for an autocorrelated series.
    fn batch_se(x: &[f64]) -> f64 {
        let b = 50;
        let len = x.len() / b;
        let means: Vec<f64> = (0..b)
            .map(|k| x[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64)
            .collect();
        mean_sd(&means).1 / (b as f64).sqrt()
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        let bad = McmcConfig {
            burn_in: 100,
            iterations: 100,
            ..McmcConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = McmcConfig {
            grid_points: 5,
            ..McmcConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg = McmcConfig {
            iterations: 103,
            burn_in: 10,
            thin: 4,
            ..McmcConfig::default()
        };
        assert_eq!(cfg.retained(), 23);
    }

    #[test]
    fn retained_length_matches_schedule() {
        let stats = SufficientStats::prior_only(3);
        let cfg = McmcConfig {
            iterations: 103,
            burn_in: 10,
            thin: 4,
            ..McmcConfig::default()
        };
        let out = run_chain_from(
            &stats,
            &prior(),
            &cfg,
            SweepFlags::default(),
            initial_state(&stats, &prior()),
        )
        .unwrap();
        assert_eq!(out.len(), cfg.retained());
        assert_eq!(out.adjacency.len(), cfg.retained());
    }

    #[test]
    fn edge_update_forced_when_zero_inadmissible() {
        let r = SymMatrix::from_rows(&[
            vec![1.0, 0.64, 0.8],
            vec![0.64, 1.0, 0.8],
            vec![0.8, 0.8, 1.0],
        ])
        .unwrap();
        let decomp = PrecisionDecomposition::new(vec![1.0; 3], Adjacency::complete(3), r).unwrap();
        let mut state = GgmChainState {
            decomp,
            tau: UpperTri::filled(3, 0.1),
            q: UpperTri::filled(3, 0.01),
            sigma2: 1.0,
        };
        let stats = SufficientStats::prior_only(3);
        let mut rng = chain_rng(1, 0);
        for _ in 0..500 {
            update_edge(&mut state, &stats, 0, 1, GridSpec::default(), false, &mut rng).unwrap();
            assert!(*state.decomp.a().get(0, 1));
            assert!(is_pd(state.decomp.c(), 0.0));
        }
    }

    #[test]
    fn zero_step_proposals_always_accept() {
        let stats = SufficientStats::prior_only(3);
        let mut state = initial_state(&stats, &prior());
        let before = state.clone();
        let mut rng = chain_rng(2, 0);
        let iv = PdInterval::full();
        for _ in 0..100 {
            assert!(update_tau(&mut state, 0, 1, &iv, &prior(), 0.0, &mut rng));
            assert!(update_q(&mut state, 0, 1, &iv, &prior(), 0.0, &mut rng));
            assert!(update_s(&mut state, &stats, 1, &prior(), 0.0, &mut rng));
        }
        assert_eq!(state, before);
    }

    #[test]
    fn q_detailed_balance_on_three_points() {
        // Discretized q-chain: propose one of the other two points uniformly,
        // accept with the same MH probability the sampler uses.
        let pr = GgmPrior {
            a: 2.0,
            b: 3.0,
            ..GgmPrior::default()
        };
        let iv = PdInterval { lo: -0.4, hi: 0.7 };
        for present in [false, true] {
            let points = [0.2, 0.5, 0.8];
            let target: Vec<f64> = points
                .iter()
                .map(|q| log_target_q(*q, 0.3, present, &iv, &pr).exp())
                .collect();
            let z: f64 = target.iter().sum();
            let pi: Vec<f64> = target.iter().map(|t| t / z).collect();
            let mut kernel = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        let lr = log_target_q(points[b], 0.3, present, &iv, &pr)
                            - log_target_q(points[a], 0.3, present, &iv, &pr);
                        kernel[a][b] = 0.5 * acceptance_probability(lr);
                    }
                }
                kernel[a][a] = 1.0 - kernel[a].iter().sum::<f64>();
            }
            for a in 0..3 {
                for b in 0..3 {
                    assert!((pi[a] * kernel[a][b] - pi[b] * kernel[b][a]).abs() < 1e-15);
                }
                let stationary: f64 = (0..3).map(|c| pi[c] * kernel[c][a]).sum();
                assert!((stationary - pi[a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn q_stays_in_open_unit_interval() {
        let stats = SufficientStats::prior_only(4);
        let cfg = McmcConfig {
            iterations: 400,
            burn_in: 0,
            thin: 1,
            step_q: 3.0,
            ..McmcConfig::default()
        };
        let out = run_chain_from(
            &stats,
            &prior(),
            &cfg,
            SweepFlags::default(),
            initial_state(&stats, &prior()),
        )
        .unwrap();
        for st in &out.states {
            assert!(st.q.values().iter().all(|q| *q > 0.0 && *q < 1.0));
        }
    }

    #[test]
    fn tau_reduces_to_prior_when_edges_absent() {
        // q = 0 and A = 0 on (-1, 1): K(τ) = τ cancels the 1/τ factor.
        let pr = GgmPrior {
            e: 5.0,
            f: 2.0,
            ..GgmPrior::default()
        };
        let stats = SufficientStats::prior_only(2);
        let mut state = initial_state(&stats, &pr);
        state.q.set(0, 1, 0.0);
        let iv = PdInterval::full();
        let mut rng = chain_rng(7, 0);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                update_tau(&mut state, 0, 1, &iv, &pr, 0.8, &mut rng);
                *state.tau.get(0, 1)
            })
            .collect();
        let (m, _) = mean_sd(&draws);
        let exact = pr.f / (pr.e - 1.0);
        assert!((m - exact).abs() < 3.0 * batch_se(&draws), "{m} vs {exact}");
    }

    #[test]
    fn sigma2_conditional_parameters() {
        let y = DataMatrix::from_samples(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]])
            .unwrap();
        let stats = SufficientStats::from_data(&y);
        let state = initial_state(&SufficientStats::prior_only(2), &prior());
        let (shape, scale) = sigma2_posterior(&state, &stats, &prior());
        assert_eq!(shape, prior().k + 3.0);
        let tr = state.decomp.omega().trace_product(&stats.scatter);
        assert!((scale - (prior().l + 0.5 * tr)).abs() < 1e-12);

        let zero = SufficientStats {
            n: 3,
            scatter: SymMatrix::symmetrize(nalgebra::DMatrix::zeros(2, 2)),
        };
        assert_eq!(sigma2_posterior(&state, &zero, &prior()), (prior().k + 3.0, prior().l));
    }

    #[test]
    fn sigma2_draw_mean() {
        let stats = SufficientStats {
            n: 10,
            scatter: SymMatrix::from_rows(&[vec![12.0, 3.0], vec![3.0, 8.0]]).unwrap(),
        };
        let mut state = initial_state(&SufficientStats::prior_only(2), &prior());
        let (shape, scale) = sigma2_posterior(&state, &stats, &prior());
        let mut rng = chain_rng(3, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                update_sigma2(&mut state, &stats, &prior(), &mut rng);
                state.sigma2
            })
            .collect();
        let (m, sd) = mean_sd(&draws);
        let exact = scale / (shape - 1.0);
        assert!((m - exact).abs() < 3.0 * sd / (draws.len() as f64).sqrt());
    }

    #[test]
    fn s_prior_only_matches_inverse_gamma() {
        let pr = GgmPrior {
            g: 4.0,
            h: 3.0,
            ..GgmPrior::default()
        };
        let stats = SufficientStats::prior_only(2);
        let mut state = initial_state(&stats, &pr);
        let mut rng = chain_rng(4, 0);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                update_s(&mut state, &stats, 0, &pr, 0.6, &mut rng);
                state.decomp.s()[0]
            })
            .collect();
        let (m, _) = mean_sd(&draws);
        let exact = pr.h / (pr.g - 1.0);
        assert!((m - exact).abs() < 3.0 * batch_se(&draws), "{m} vs {exact}");
    }

    #[test]
    fn s_p1_matches_quadrature() {
        // π(s) ∝ s^{n-g-1} exp(-s² Σy² / (2σ²) - h/s).
        let pr = prior();
        let n = 12;
        let sum_sq = 9.0;
        let sigma2 = 1.3;
        let stats = SufficientStats {
            n,
            scatter: SymMatrix::from_rows(&[vec![sum_sq]]).unwrap(),
        };
        let log_dens = |s: f64| {
            (n as f64 - pr.g - 1.0) * s.ln() - s * s * sum_sq / (2.0 * sigma2) - pr.h / s
        };
        let (lo, hi, m) = (1e-6, 10.0, 1_000_000);
        let h = (hi - lo) / m as f64;
        let (mut z, mut m1) = (0.0, 0.0);
        for k in 0..m {
            let s = lo + (k as f64 + 0.5) * h;
            let w = log_dens(s).exp();
            z += w;
            m1 += s * w;
        }
        let exact = m1 / z;

        let mut state = initial_state(&SufficientStats::prior_only(1), &pr);
        state.sigma2 = sigma2;
        let mut rng = chain_rng(5, 0);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                update_s(&mut state, &stats, 0, &pr, 0.3, &mut rng);
                state.decomp.s()[0]
            })
            .collect();
        let (mean, _) = mean_sd(&draws[1000..]);
        assert!(
            (mean - exact).abs() < 3.0 * batch_se(&draws[1000..]),
            "{mean} vs {exact}"
        );
    }

    #[test]
    fn edge_kernel_leaves_target_invariant_p2() {
        // State space: absent, or present at one of five grid cells. The
        // griddy draw's row from every starting state must be the same table.
        let y = DataMatrix::from_samples(&[
            vec![0.5, 0.9],
            vec![-1.1, -0.7],
            vec![0.2, 0.4],
            vec![1.4, 0.8],
        ])
        .unwrap();
        let stats = SufficientStats::from_data(&y);
        let grid = GridSpec { points: 5 };
        let mut state = initial_state(&stats, &prior());
        let base = edge_table(&stats, &state, 0, 1, grid).unwrap();
        let (a0, p0) = base.probabilities().unwrap();
        let target: Vec<f64> = std::iter::once(a0).chain(p0.iter().copied()).collect();

        let mut kernel = Vec::new();
        for from in 0..target.len() {
            if from == 0 {
                state.decomp.set_edge(0, 1, false, 0.3);
            } else {
                state.decomp.set_edge(0, 1, true, base.grid[from - 1]);
            }
            let t = edge_table(&stats, &state, 0, 1, grid).unwrap();
            let (a, pr) = t.probabilities().unwrap();
            kernel.push(std::iter::once(a).chain(pr).collect::<Vec<f64>>());
        }
        for to in 0..target.len() {
            let mass: f64 = (0..target.len()).map(|from| target[from] * kernel[from][to]).sum();
            assert!((mass - target[to]).abs() < 1e-12, "{mass} vs {}", target[to]);
        }
    }

    #[test]
    fn determinism() {
        let stats = SufficientStats::prior_only(4);
        let cfg = McmcConfig {
            iterations: 200,
            burn_in: 50,
            thin: 3,
            seed: 99,
            ..McmcConfig::default()
        };
        let run = || {
            run_chain_from(
                &stats,
                &prior(),
                &cfg,
                SweepFlags::default(),
                initial_state(&stats, &prior()),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.adjacency, b.adjacency);
        assert_eq!(a.states, b.states);
    }

    fn sd(x: &[f64]) -> f64 {
        mean_sd(x).1
    }

    #[test]
    fn uniform_reference_matches_beta_marginal() {
        // The marginal of one entry is Beta(p/2, p/2) on [-1, 1], variance 1/(p+1).
        for p in [3, 6] {
            let draws = uniform_reference_draws(p, 40_000, 21).unwrap();
            let exact = 1.0 / ((p + 1) as f64).sqrt();
            assert!((sd(&draws) - exact).abs() < 0.02, "p={p}: {} vs {exact}", sd(&draws));
        }
    }

    #[test]
    fn prior_marginal_concentrates_with_smaller_tau() {
        let cfg = McmcConfig {
            iterations: 3_000,
            burn_in: 200,
            thin: 1,
            ..McmcConfig::default()
        };
        let r12 = |tau: f64| {
            let out = prior_marginal_chain(3, tau, &cfg).unwrap();
            assert!(out.states.iter().all(|s| s.decomp.a().edge_count() == 3));
            out.states.iter().map(|s| s.decomp.c().get(0, 1)).collect::<Vec<_>>()
        };
        let (a, b, c) = (sd(&r12(0.1)), sd(&r12(0.5)), sd(&r12(1.0)));
        assert!(a < b && b < c, "{a} {b} {c}");
        assert!(c < 0.5);
    }
}
