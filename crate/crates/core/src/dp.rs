//! Dirichlet-process mixture of lasso-selection graphical models, sampled
//! through the Pólya urn with Metropolis-Hastings moves for the
//! non-conjugate base prior.

use std::collections::BTreeMap;

use nalgebra::{DVector, DVectorView};
use rand::Rng;

use crate::adjacency::{pairs, Adjacency, UpperTri};
use crate::dist;
use crate::error::{GgmError, Result};
use crate::linalg::{is_pd, SymMatrix};
use crate::metrics::median_probability_graph;
use crate::mixture::ComponentDensity;
use crate::model::{
    edge_table, DataMatrix, DpPrior, GgmChainState, GgmPrior, GridSpec, PrecisionDecomposition,
    SufficientStats,
};
use crate::partition::{align_to, canonical_labels, co_clustering, point_partition};
use crate::sampler::{chain_rng, initial_state, sweep, Acceptance, McmcConfig, ProposalSteps, SweepFlags};

/// Bounded retries of a base-prior draw before giving up.
const BASE_DRAW_ATTEMPTS: usize = 10;

/// Cluster parameters `φ = (θ, S, A, R, τ, q)` with their density cached.
#[derive(Debug, Clone, PartialEq)]
pub struct DpCluster {
    pub theta: DVector<f64>,
    pub ggm: GgmChainState,
    density: ComponentDensity,
}

impl DpCluster {
    pub fn new(theta: DVector<f64>, ggm: GgmChainState) -> Result<Self> {
        let density = ComponentDensity::of_state(&theta, &ggm)?;
        Ok(DpCluster {
            theta,
            ggm,
            density,
        })
    }

    pub fn density(&self) -> &ComponentDensity {
        &self.density
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpState {
    pub assignments: Vec<usize>,
    pub clusters: BTreeMap<usize, DpCluster>,
    next_id: usize,
}

impl DpState {
    pub fn new(assignments: Vec<usize>, clusters: BTreeMap<usize, DpCluster>) -> Result<Self> {
        let next_id = clusters.keys().next_back().map_or(0, |k| k + 1);
        let state = DpState {
            assignments,
            clusters,
            next_id,
        };
        state.check()?;
        Ok(state)
    }

    /// Number of active clusters.
    pub fn d_n(&self) -> usize {
        self.clusters.len()
    }

    pub fn size(&self, id: usize) -> usize {
        self.assignments.iter().filter(|c| **c == id).count()
    }

    pub fn members(&self, id: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == id)
            .collect()
    }

    /// Every assignment names an active cluster and every cluster is used.
    pub fn check(&self) -> Result<()> {
        for c in &self.assignments {
            if !self.clusters.contains_key(c) {
                return Err(GgmError::InvalidArgument(format!("orphan assignment to cluster {c}")));
            }
        }
        for id in self.clusters.keys() {
            if self.size(*id) == 0 {
                return Err(GgmError::InvalidArgument(format!("cluster {id} is empty")));
            }
        }
        Ok(())
    }

    fn insert(&mut self, cluster: DpCluster) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.clusters.insert(id, cluster);
        id
    }

    fn drop_if_empty(&mut self, id: usize) {
        if !self.assignments.contains(&id) {
            self.clusters.remove(&id);
        }
    }

    /// Labels `0..d_n` by decreasing cluster size, and the clusters in that order.
    pub fn canonical(&self) -> (Vec<usize>, Vec<DpCluster>) {
        let labels = canonical_labels(&self.assignments);
        let mut clusters = vec![None; self.d_n()];
        for (i, l) in labels.iter().enumerate() {
            if clusters[*l].is_none() {
                clusters[*l] = Some(self.clusters[&self.assignments[i]].clone());
            }
        }
        (labels, clusters.into_iter().map(|c| c.expect("every label is used")).collect())
    }
}

/// Switches for the assignment moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpOptions {
    /// When false every likelihood ratio is one, so assignments follow the
    /// prior partition alone.
    pub likelihood: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions { likelihood: true }
    }
}

/// Cluster parameters from the base prior: `q`, `τ`, `S` from their priors,
/// `(A, R)` by one prior-only griddy pass over the edges starting from
/// `C = I`, then `θ ~ N(0, Ω⁻¹)`.
pub fn draw_from_base<R: Rng + ?Sized>(
    p: usize,
    dp: &DpPrior,
    grid: GridSpec,
    rng: &mut R,
) -> Result<DpCluster> {
    let mut last = None;
    for _ in 0..BASE_DRAW_ATTEMPTS {
        match try_base_draw(p, dp, grid, rng) {
            Ok(c) => return Ok(c),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn try_base_draw<R: Rng + ?Sized>(
    p: usize,
    dp: &DpPrior,
    grid: GridSpec,
    rng: &mut R,
) -> Result<DpCluster> {
    let q = UpperTri::from_fn(p, |_, _| dist::beta(dp.nu_c, dp.nu_d, rng));
    let tau = UpperTri::from_fn(p, |_, _| dist::inv_gamma(dp.nu_e, dp.nu_f, rng));
    let s: Vec<f64> = (0..p).map(|_| dist::inv_gamma(dp.nu_alpha, dp.nu_beta, rng)).collect();
    let decomp = PrecisionDecomposition::new(s, Adjacency::empty(p), SymMatrix::identity(p))?;
    let mut ggm = GgmChainState {
        decomp,
        tau,
        q,
        sigma2: 1.0,
    };
    let stats = SufficientStats::prior_only(p);
    for (i, j) in pairs(p) {
        let table = edge_table(&stats, &ggm, i, j, grid)?;
        let (present, r) = table
            .sample(*ggm.tau.get(i, j), rng)
            .ok_or(GgmError::EmptyTable { i, j })?;
        ggm.decomp.set_edge(i, j, present, r);
    }
    if !is_pd(ggm.decomp.c(), crate::linalg::PD_EPSILON) {
        return Err(GgmError::NotPositiveDefinite {
            index: 0,
            pivot: 0.0,
        });
    }
    let omega = ggm.decomp.omega();
    let theta = dist::mvn_from_precision(&DVector::zeros(p), &omega, rng)?;
    DpCluster::new(theta, ggm)
}

fn log_f(cluster: &DpCluster, y: DVectorView<f64>, options: DpOptions) -> f64 {
    if !options.likelihood {
        return 0.0;
    }
    cluster.density.log_pdf(y)
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// The Metropolis-Hastings move for sample `i`: a non-singleton proposes a
/// fresh cluster from the base prior; a singleton proposes joining an
/// existing cluster chosen with probability `n_c / (n − 1)`. Returns whether
/// the move was accepted.
pub fn propose_move<R: Rng + ?Sized>(
    state: &mut DpState,
    y: &DataMatrix,
    i: usize,
    dp: &DpPrior,
    grid: GridSpec,
    options: DpOptions,
    rng: &mut R,
) -> Result<bool> {
    let n = y.n();
    if n < 2 {
        return Ok(false);
    }
    let yi = y.y().column(i);
    let current = state.assignments[i];
    let current_f = log_f(&state.clusters[&current], yi, options);
    let scale = (dp.alpha / (n - 1) as f64).ln();
    if state.size(current) > 1 {
        let fresh = draw_from_base(y.p(), dp, grid, rng)?;
        let log_ratio = scale + log_f(&fresh, yi, options) - current_f;
        if accept(log_ratio, rng) {
            let id = state.insert(fresh);
            state.assignments[i] = id;
            return Ok(true);
        }
        Ok(false)
    } else {
        // Uniform over the other samples picks cluster c with probability n_c/(n−1).
        let mut other = rng.random_range(0..n - 1);
        if other >= i {
            other += 1;
        }
        let target = state.assignments[other];
        let log_ratio = -scale + log_f(&state.clusters[&target], yi, options) - current_f;
        if accept(log_ratio, rng) {
            state.assignments[i] = target;
            state.drop_if_empty(current);
            return Ok(true);
        }
        Ok(false)
    }
}

/// Gibbs draw of a non-singleton's cluster among the existing ones with
/// `P(c) ∝ n_{−i,c} F(Y_i; φ_c)`. Singletons are left alone.
pub fn resample_existing<R: Rng + ?Sized>(
    state: &mut DpState,
    y: &DataMatrix,
    i: usize,
    options: DpOptions,
    rng: &mut R,
) {
    let current = state.assignments[i];
    if state.size(current) <= 1 {
        return;
    }
    let yi = y.y().column(i);
    let ids: Vec<usize> = state.clusters.keys().copied().collect();
    let scores: Vec<f64> = ids
        .iter()
        .map(|id| {
            let n_minus = state.size(*id) - usize::from(*id == current);
            if n_minus == 0 {
                f64::NEG_INFINITY
            } else {
                (n_minus as f64).ln() + log_f(&state.clusters[id], yi, options)
            }
        })
        .collect();
    if let Some(k) = dist::categorical_log(&scores, rng) {
        state.assignments[i] = ids[k];
    }
}

/// One graphical-model sweep and a `θ` draw for every active cluster.
///
/// With `θ | Ω ~ N(0, Ω⁻¹)` the prior mean counts as one more centered
/// observation in the `Ω` conditional, and `θ | rest ~ N(ΣY/(n_c+1), Ω⁻¹/(n_c+1))`.
#[allow(clippy::too_many_arguments)]
pub fn update_cluster_params<R: Rng + ?Sized>(
    state: &mut DpState,
    y: &DataMatrix,
    prior: &GgmPrior,
    grid: GridSpec,
    steps: ProposalSteps,
    acceptance: &mut Acceptance,
    options: DpOptions,
    rng: &mut R,
) -> Result<()> {
    let p = y.p();
    let ids: Vec<usize> = state.clusters.keys().copied().collect();
    for id in ids {
        let members = state.members(id);
        let cluster = state.clusters.get_mut(&id).expect("active cluster");
        let stats = if options.likelihood {
            let mut stats = SufficientStats::about(y, &members, &cluster.theta);
            let mut m = stats.scatter.into_inner();
            m.ger(1.0, &cluster.theta, &cluster.theta, 1.0);
            stats.scatter = SymMatrix::symmetrize(m);
            stats.n += 1;
            stats
        } else {
            SufficientStats::prior_only(p)
        };
        sweep(
            &mut cluster.ggm,
            &stats,
            prior,
            grid,
            steps,
            SweepFlags::without_sigma2(),
            acceptance,
            rng,
        )?;
        let omega = cluster.ggm.decomp.omega();
        let (theta_mean, precision) = if options.likelihood {
            let m = (members.len() + 1) as f64;
            let mut sum = DVector::zeros(p);
            for &i in &members {
                sum += y.y().column(i);
            }
            (sum / m, SymMatrix::symmetrize(omega.into_inner() * m))
        } else {
            (DVector::zeros(p), omega)
        };
        cluster.theta = dist::mvn_from_precision(&theta_mean, &precision, rng)?;
        cluster.density = ComponentDensity::of_state(&cluster.theta, &cluster.ggm)?;
    }
    Ok(())
}

/// One retained draw, in canonical cluster order.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSample {
    pub labels: Vec<usize>,
    pub clusters: Vec<DpCluster>,
}

impl DpSample {
    pub fn d_n(&self) -> usize {
        self.clusters.len()
    }
}

#[derive(Debug, Clone)]
pub struct DpOutput {
    pub samples: Vec<DpSample>,
    pub acceptance: Acceptance,
    /// Accepted / proposed MH assignment moves.
    pub moves: (u64, u64),
}

/// Starts with every sample in one cluster whose parameters are fit to the
/// pooled, centered data.
pub fn initial_dp_state(y: &DataMatrix, prior: &GgmPrior) -> Result<DpState> {
    let (centered, mean) = y.centered();
    let stats = SufficientStats::from_data(&centered);
    let cluster = DpCluster::new(mean, initial_state(&stats, prior))?;
    DpState::new(vec![0; y.n()], BTreeMap::from([(0, cluster)]))
}

/// Per iteration: MH moves for every sample, then the existing-cluster
/// resampling for every sample, then a parameter sweep of every cluster.
pub fn run_dp_chain(
    y: &DataMatrix,
    dp: &DpPrior,
    cfg: &McmcConfig,
    options: DpOptions,
    stream: u64,
) -> Result<DpOutput> {
    cfg.validate()?;
    dp.validate()?;
    let prior = dp.ggm_prior();
    let mut rng = chain_rng(cfg.seed, stream);
    let mut state = initial_dp_state(y, &prior)?;
    let mut acceptance = Acceptance::default();
    let mut moves = (0u64, 0u64);
    let mut samples = Vec::with_capacity(cfg.retained());
    for it in 0..cfg.iterations {
        let abort = |parameter: &str| {
            let parameter = parameter.to_string();
            move |e: GgmError| GgmError::ChainAbort {
                iteration: it,
                parameter,
                source: Box::new(e),
            }
        };
        for i in 0..y.n() {
            let ok = propose_move(&mut state, y, i, dp, cfg.grid(), options, &mut rng)
                .map_err(abort("new cluster"))?;
            moves.0 += u64::from(ok);
            moves.1 += 1;
        }
        for i in 0..y.n() {
            resample_existing(&mut state, y, i, options, &mut rng);
        }
        update_cluster_params(
            &mut state,
            y,
            &prior,
            cfg.grid(),
            cfg.steps(),
            &mut acceptance,
            options,
            &mut rng,
        )
        .map_err(abort("cluster parameters"))?;
        debug_assert!(state.check().is_ok());
        if it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0 {
            let (labels, clusters) = state.canonical();
            samples.push(DpSample { labels, clusters });
        }
    }
    Ok(DpOutput {
        samples,
        acceptance,
        moves,
    })
}

/// Posterior summary of one cluster of the point partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DpClusterEstimate {
    pub size: usize,
    pub mean: DVector<f64>,
    pub precision: SymMatrix,
    pub edge_marginals: UpperTri<f64>,
    pub graph: Adjacency,
    /// Retained draws that had a cluster aligned to this one.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSummary {
    /// `(d_n, frequency)` pairs in increasing `d_n`.
    pub d_n_posterior: Vec<(usize, f64)>,
    pub d_n_mode: usize,
    pub partition: Vec<usize>,
    pub co_clustering: Vec<Vec<f64>>,
    pub clusters: Vec<DpClusterEstimate>,
}

pub fn summarize(out: &DpOutput) -> Result<DpSummary> {
    let first = out
        .samples
        .first()
        .ok_or_else(|| GgmError::InvalidArgument("no retained draws".into()))?;
    let p = first.clusters[0].theta.len();
    let mut counts = BTreeMap::<usize, u64>::new();
    for s in &out.samples {
        *counts.entry(s.d_n()).or_insert(0) += 1;
    }
    let total = out.samples.len() as f64;
    let d_n_posterior: Vec<(usize, f64)> =
        counts.iter().map(|(d, c)| (*d, *c as f64 / total)).collect();
    // Largest count; ties to the smaller d_n.
    let d_n_mode = counts
        .iter()
        .fold((0usize, 0u64), |best, (d, c)| if *c > best.1 { (*d, *c) } else { best })
        .0;

    let label_samples: Vec<Vec<usize>> = out.samples.iter().map(|s| s.labels.clone()).collect();
    let co = co_clustering(&label_samples)?;
    let partition = point_partition(&label_samples)?;
    let kr = partition.iter().max().map_or(0, |m| m + 1);

    let mut support = vec![0usize; kr];
    let mut mean = vec![DVector::<f64>::zeros(p); kr];
    let mut precision = vec![nalgebra::DMatrix::<f64>::zeros(p, p); kr];
    let mut edges = vec![UpperTri::filled(p, 0.0); kr];
    for s in &out.samples {
        let k = kr.max(s.d_n());
        let perm = align_to(&s.labels, &partition, k);
        for (j, &slot) in perm.iter().enumerate().take(s.d_n()) {
            if slot >= kr {
                continue;
            }
            let c = &s.clusters[j];
            support[slot] += 1;
            mean[slot] += &c.theta;
            precision[slot] += c.ggm.decomp.omega().as_matrix();
            for ((a, b), present) in c.ggm.decomp.a().iter() {
                if *present {
                    let v = *edges[slot].get(a, b);
                    edges[slot].set(a, b, v + 1.0);
                }
            }
        }
    }
    let mut sizes = vec![0usize; kr];
    for l in &partition {
        sizes[*l] += 1;
    }
    let clusters = (0..kr)
        .map(|j| {
            let m = support[j].max(1) as f64;
            let marg = UpperTri::from_fn(p, |a, b| *edges[j].get(a, b) / m);
            DpClusterEstimate {
                size: sizes[j],
                mean: &mean[j] / m,
                precision: SymMatrix::symmetrize(&precision[j] / m),
                graph: median_probability_graph(&marg),
                edge_marginals: marg,
                support: support[j],
            }
        })
        .collect();
    Ok(DpSummary {
        d_n_posterior,
        d_n_mode,
        partition,
        co_clustering: co,
        clusters,
    })
}

/// `E[d_n] = Σ_{m=1}^{n} α / (α + m − 1)` under the Chinese restaurant process.
pub fn crp_expected_clusters(alpha: f64, n: usize) -> f64 {
    (1..=n).map(|m| alpha / (alpha + m as f64 - 1.0)).sum()
}
