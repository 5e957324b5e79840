//! Finite mixture of lasso-selection graphical models with BIC choice of `K`.
//!
//! Components carry their own `(S, A, R, τ, q)` and a mean `θ_j ~ N(0, B)`
//! with a shared inverse-Wishart `B`. There is no `σ²`: component scales
//! live in `S_j`, so every component state keeps `σ² = 1`.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjacency::{Adjacency, UpperTri};
use crate::dist;
use crate::error::{GgmError, Result};
use crate::linalg::{inverse_pd, log_det_pd, SymMatrix};
use crate::metrics::median_probability_graph;
use crate::model::{DataMatrix, GgmChainState, GgmPrior, GridSpec, Hyperparameters, SufficientStats};
use crate::partition::{align_to, co_clustering, point_partition};
use crate::sampler::{chain_rng, initial_state, sweep, Acceptance, McmcConfig, ProposalSteps, SweepFlags};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian log-density with a fixed mean and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDensity {
    theta: DVector<f64>,
    omega: SymMatrix,
    log_norm: f64,
}

impl ComponentDensity {
    pub fn new(theta: &DVector<f64>, omega: SymMatrix) -> Result<Self> {
        let p = omega.dim();
        let log_norm = -0.5 * p as f64 * LN_2PI + 0.5 * log_det_pd(&omega)?;
        Ok(ComponentDensity {
            theta: theta.clone(),
            omega,
            log_norm,
        })
    }

    /// Density of `N(θ, Ω⁻¹)` for a component state (its `σ²` is ignored).
    pub fn of_state(theta: &DVector<f64>, state: &GgmChainState) -> Result<Self> {
        Self::new(theta, state.decomp.omega())
    }

    pub fn log_pdf(&self, y: DVectorView<f64>) -> f64 {
        let d = y - &self.theta;
        let q = (self.omega.as_matrix() * &d).dot(&d);
        self.log_norm - 0.5 * q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub b: SymMatrix,
    pub components: Vec<GgmChainState>,
}

impl MixtureState {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for l in &self.labels {
            c[*l] += 1;
        }
        c
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == j).collect()
    }
}

/// `w ~ Dirichlet(n_1 + α_1, …, n_K + α_K)`.
pub fn update_weights<R: Rng + ?Sized>(state: &mut MixtureState, alpha: &[f64], rng: &mut R) {
    let counts = state.counts();
    let post: Vec<f64> = counts
        .iter()
        .zip(alpha)
        .map(|(n, a)| *n as f64 + a)
        .collect();
    state.weights = dist::dirichlet(&post, rng);
}

/// Draws every label from `P(L_i = j) ∝ w_j φ(Y_i; θ_j, Ω_j⁻¹)`. Returns the
/// number of samples whose densities all vanished and that were assigned to
/// the nearest mean instead.
pub fn update_labels<R: Rng + ?Sized>(
    state: &mut MixtureState,
    y: &DataMatrix,
    rng: &mut R,
) -> Result<usize> {
    let densities = state
        .means
        .iter()
        .zip(&state.components)
        .map(|(m, c)| ComponentDensity::of_state(m, c))
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
    let mut rescued = 0;
    let mut scores = vec![0.0; state.k()];
    for i in 0..y.n() {
        let yi = y.y().column(i);
        for (j, d) in densities.iter().enumerate() {
            scores[j] = log_w[j] + d.log_pdf(yi);
        }
        state.labels[i] = match dist::categorical_log(&scores, rng) {
            Some(j) => j,
            None => {
                rescued += 1;
                log::warn!("sample {i} has zero density under every component; using nearest mean");
                nearest(&state.means, yi)
            }
        };
    }
    Ok(rescued)
}

fn nearest(means: &[DVector<f64>], y: DVectorView<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, m) in means.iter().enumerate() {
        let d = (y - m).norm_squared();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Sum of the rows in `members`.
fn member_sum(y: &DataMatrix, members: &[usize]) -> DVector<f64> {
    let mut s = DVector::zeros(y.p());
    for &i in members {
        s += y.y().column(i);
    }
    s
}

/// `θ_j ~ N(P⁻¹ Ω_j ΣY_i, P⁻¹)` with `P = n_j Ω_j + B⁻¹`.
pub fn update_means<R: Rng + ?Sized>(
    state: &mut MixtureState,
    y: &DataMatrix,
    rng: &mut R,
) -> Result<()> {
    let b_inv = inverse_pd(&state.b)?;
    for j in 0..state.k() {
        let members = state.members(j);
        let omega = state.components[j].decomp.omega();
        let precision = SymMatrix::symmetrize(
            omega.as_matrix() * members.len() as f64 + b_inv.as_matrix(),
        );
        let rhs = omega.as_matrix() * member_sum(y, &members);
        let mean = inverse_pd(&precision)?.as_matrix() * rhs;
        state.means[j] = dist::mvn_from_precision(&mean, &precision, rng)?;
    }
    Ok(())
}

/// `B ~ IW(ν₀ + K, B₀ + Σ θ_j θ_jᵀ)`.
pub fn update_b<R: Rng + ?Sized>(
    state: &mut MixtureState,
    nu0: f64,
    b0: &SymMatrix,
    rng: &mut R,
) -> Result<()> {
    let mut scale = b0.as_matrix().clone();
    for m in &state.means {
        scale.ger(1.0, m, m, 1.0);
    }
    state.b = dist::inv_wishart(nu0 + state.k() as f64, &SymMatrix::symmetrize(scale), rng)?;
    Ok(())
}

/// One graphical-model sweep per component on its members centered at `θ_j`.
#[allow(clippy::too_many_arguments)]
pub fn update_components<R: Rng + ?Sized>(
    state: &mut MixtureState,
    y: &DataMatrix,
    prior: &GgmPrior,
    grid: GridSpec,
    steps: ProposalSteps,
    acceptance: &mut Acceptance,
    rng: &mut R,
) -> Result<()> {
    for j in 0..state.k() {
        let members = state.members(j);
        let stats = SufficientStats::about(y, &members, &state.means[j]);
        sweep(
            &mut state.components[j],
            &stats,
            prior,
            grid,
            steps,
            SweepFlags::without_sigma2(),
            acceptance,
            rng,
        )?;
    }
    Ok(())
}

/// Labels from a few rounds of k-means seeded by k-means++.
fn kmeans_labels<R: Rng + ?Sized>(y: &DataMatrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = y.n();
    let col = |i: usize| y.y().column(i).into_owned();
    let mut centers = vec![col(rng.random_range(0..n))];
    while centers.len() < k {
        let d2: Vec<f64> = (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| (y.y().column(i) - c).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let next = dist::categorical(&d2, rng).unwrap_or_else(|| rng.random_range(0..n));
        centers.push(col(next));
    }
    let mut labels = vec![0; n];
    for _ in 0..20 {
        for (i, l) in labels.iter_mut().enumerate() {
            *l = nearest(&centers, y.y().column(i));
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == j).collect();
            if !members.is_empty() {
                *c = member_sum(y, &members) / members.len() as f64;
            }
        }
    }
    labels
}

/// Starting state: k-means labels, cluster means, data-informed components.
pub fn initial_mixture_state<R: Rng + ?Sized>(
    y: &DataMatrix,
    k: usize,
    prior: &GgmPrior,
    alpha: &[f64],
    b0: &SymMatrix,
    rng: &mut R,
) -> MixtureState {
    let p = y.p();
    let labels = kmeans_labels(y, k, rng);
    let mut means = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    let mut counts = vec![0usize; k];
    for j in 0..k {
        let members: Vec<usize> = (0..y.n()).filter(|&i| labels[i] == j).collect();
        counts[j] = members.len();
        let mean = if members.is_empty() {
            DVector::zeros(p)
        } else {
            member_sum(y, &members) / members.len() as f64
        };
        let stats = if members.len() > 1 {
            SufficientStats::about(y, &members, &mean)
        } else {
            SufficientStats::prior_only(p)
        };
        components.push(initial_state(&stats, prior));
        means.push(mean);
    }
    let total: f64 = counts.iter().zip(alpha).map(|(c, a)| *c as f64 + a).sum();
    let weights = counts
        .iter()
        .zip(alpha)
        .map(|(c, a)| (*c as f64 + a) / total)
        .collect();
    MixtureState {
        labels,
        weights,
        means,
        b: b0.clone(),
        components,
    }
}

/// Retained draws of a fixed-`K` chain.
#[derive(Debug, Clone)]
pub struct MixtureOutput {
    pub k: usize,
    pub states: Vec<MixtureState>,
    pub acceptance: Acceptance,
    pub rescued: u64,
}

/// Runs the fixed-`K` sampler on RNG substream `stream` of `cfg.seed`.
pub fn run_mixture(
    y: &DataMatrix,
    k: usize,
    hp: &Hyperparameters,
    cfg: &McmcConfig,
    stream: u64,
) -> Result<MixtureOutput> {
    cfg.validate()?;
    hp.ggm.validate()?;
    if k == 0 {
        return Err(GgmError::InvalidArgument("number of components must be positive".into()));
    }
    let p = y.p();
    let alpha = hp.mixture.alpha_for(k)?;
    let nu0 = hp.mixture.nu0_for(p)?;
    let b0 = hp.mixture.b0_for(p)?;
    let mut rng = chain_rng(cfg.seed, stream);
    let mut state = initial_mixture_state(y, k, &hp.ggm, &alpha, &b0, &mut rng);
    let mut acceptance = Acceptance::default();
    let mut rescued = 0u64;
    let mut states = Vec::with_capacity(cfg.retained());
    let abort = |it: usize, parameter: &str| {
        let parameter = parameter.to_string();
        move |e: GgmError| GgmError::ChainAbort {
            iteration: it,
            parameter,
            source: Box::new(e),
        }
    };
    for it in 0..cfg.iterations {
        update_weights(&mut state, &alpha, &mut rng);
        rescued += update_labels(&mut state, y, &mut rng).map_err(abort(it, "labels"))? as u64;
        update_means(&mut state, y, &mut rng).map_err(abort(it, "means"))?;
        update_b(&mut state, nu0, &b0, &mut rng).map_err(abort(it, "B"))?;
        update_components(
            &mut state,
            y,
            &hp.ggm,
            cfg.grid(),
            cfg.steps(),
            &mut acceptance,
            &mut rng,
        )
        .map_err(abort(it, "components"))?;
        if it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0 {
            states.push(state.clone());
        }
    }
    Ok(MixtureOutput {
        k,
        states,
        acceptance,
        rescued,
    })
}

/// Posterior summary of one component slot after relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEstimate {
    /// Members in the point partition.
    pub size: usize,
    pub weight: f64,
    pub mean: DVector<f64>,
    pub precision: SymMatrix,
    pub edge_marginals: UpperTri<f64>,
    pub graph: Adjacency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEstimate {
    pub k: usize,
    pub partition: Vec<usize>,
    pub co_clustering: Vec<Vec<f64>>,
    pub clusters: Vec<ClusterEstimate>,
    pub log_likelihood: f64,
    pub parameters: usize,
    pub bic: f64,
}

/// `Σ_i ln Σ_j w_j φ(Y_i; θ_j, Ω_j⁻¹)`.
pub fn mixture_log_likelihood(
    y: &DataMatrix,
    weights: &[f64],
    densities: &[ComponentDensity],
) -> f64 {
    let mut total = 0.0;
    let mut terms = vec![0.0; weights.len()];
    for i in 0..y.n() {
        let yi = y.y().column(i);
        for (j, d) in densities.iter().enumerate() {
            terms[j] = weights[j].ln() + d.log_pdf(yi);
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    }
    total
}

/// Free parameters: per component, its edges plus `p` scales and `p` means;
/// plus `K − 1` weights.
pub fn parameter_count(p: usize, graphs: &[Adjacency]) -> usize {
    graphs.iter().map(|g| g.edge_count() + 2 * p).sum::<usize>() + graphs.len() - 1
}

/// `−2 L + m ln n`.
pub fn bic(log_likelihood: f64, parameters: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + parameters as f64 * (n as f64).ln()
}

/// Point partition by Binder loss, component slots aligned to it, posterior
/// means per slot and the BIC of the plugged-in mixture.
pub fn summarize(y: &DataMatrix, out: &MixtureOutput) -> Result<MixtureEstimate> {
    let k = out.k;
    let p = y.p();
    let label_samples: Vec<Vec<usize>> = out.states.iter().map(|s| s.labels.clone()).collect();
    let co = co_clustering(&label_samples)?;
    let partition = point_partition(&label_samples)?;
    let total = out.states.len() as f64;

    let mut weight = vec![0.0; k];
    let mut mean = vec![DVector::<f64>::zeros(p); k];
    let mut precision = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut edges = vec![UpperTri::filled(p, 0.0); k];
    for s in &out.states {
        let perm = align_to(&s.labels, &partition, k);
        for (j, &slot) in perm.iter().enumerate() {
            weight[slot] += s.weights[j] / total;
            mean[slot] += &s.means[j] / total;
            precision[slot] += s.components[j].decomp.omega().as_matrix() / total;
            for ((a, b), present) in s.components[j].decomp.a().iter() {
                if *present {
                    let v = *edges[slot].get(a, b);
                    edges[slot].set(a, b, v + 1.0 / total);
                }
            }
        }
    }
    let mut sizes = vec![0usize; k];
    for l in &partition {
        sizes[*l] += 1;
    }
    let clusters: Vec<ClusterEstimate> = (0..k)
        .map(|j| ClusterEstimate {
            size: sizes[j],
            weight: weight[j],
            mean: mean[j].clone(),
            precision: SymMatrix::symmetrize(precision[j].clone()),
            graph: median_probability_graph(&edges[j]),
            edge_marginals: edges[j].clone(),
        })
        .collect();
    let densities = clusters
        .iter()
        .map(|c| ComponentDensity::new(&c.mean, c.precision.clone()))
        .collect::<Result<Vec<_>>>()?;
    let weight_sum: f64 = clusters.iter().map(|c| c.weight).sum();
    let weights: Vec<f64> = clusters.iter().map(|c| c.weight / weight_sum).collect();
    let log_likelihood = mixture_log_likelihood(y, &weights, &densities);
    let graphs: Vec<Adjacency> = clusters.iter().map(|c| c.graph.clone()).collect();
    let parameters = parameter_count(p, &graphs);
    Ok(MixtureEstimate {
        k,
        partition,
        co_clustering: co,
        clusters,
        log_likelihood,
        parameters,
        bic: bic(log_likelihood, parameters, y.n()),
    })
}

/// One row of the BIC table; failed chains carry their error instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub k: usize,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub best_k: usize,
    pub table: Vec<BicRow>,
    /// Summaries for every `K` whose chain finished, in `ks` order.
    pub estimates: Vec<(MixtureEstimate, Acceptance)>,
}

/// Runs one chain per `K` (in parallel, substream `K`) and picks the smallest
/// BIC, ties going to the smaller `K`.
pub fn select_k(
    y: &DataMatrix,
    hp: &Hyperparameters,
    cfg: &McmcConfig,
    ks: &[usize],
) -> Result<Selection> {
    if ks.is_empty() {
        return Err(GgmError::InvalidArgument("empty range of K".into()));
    }
    let results: Vec<(usize, Result<(MixtureEstimate, Acceptance)>)> = ks
        .par_iter()
        .map(|&k| {
            let res = run_mixture(y, k, hp, cfg, k as u64)
                .and_then(|out| Ok((summarize(y, &out)?, out.acceptance)));
            (k, res)
        })
        .collect();
    let mut table = Vec::with_capacity(ks.len());
    let mut estimates = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for (k, res) in results {
        match res {
            Ok((est, acc)) => {
                let b = est.bic;
                table.push(BicRow {
                    k,
                    bic: Some(b),
                    error: None,
                });
                if best.is_none_or(|(bb, bk)| b < bb || (b == bb && k < bk)) {
                    best = Some((b, k));
                }
                estimates.push((est, acc));
            }
            Err(e) => {
                log::warn!("mixture chain with K = {k} failed: {e}");
                table.push(BicRow {
                    k,
                    bic: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (_, best_k) = best.ok_or_else(|| {
        GgmError::InvalidArgument("every mixture chain failed".into())
    })?;
    Ok(Selection {
        best_k,
        table,
        estimates,
    })
}
