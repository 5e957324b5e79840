//! The six commands. Each reads its inputs, runs, and writes into `out_dir`.

use std::path::Path;

use lassoggm::adjacency::{Adjacency, UpperTri};
use lassoggm::dp::{run_dp_chain, DpOptions};
use lassoggm::error::GgmError;
use lassoggm::graph::{
    export_dot, graph_precision, partial_correlations, posterior_mean_precision, predict_held_out, tally,
    GraphSummary,
};
use lassoggm::linalg::SymMatrix;
use lassoggm::metrics::{median_probability_graph, score, support, threshold_edges, Scores};
use lassoggm::mixture::select_k;
use lassoggm::model::{DataMatrix, DpPrior, GgmPrior};
use lassoggm::sampler::{chain_rng, run_chain, AcceptanceRates, McmcConfig};
use lassoggm::simgen::{generate, simulate_data, StructureSpec};
use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EvaluationEntry, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    ensure_dir, read_data, read_matrix, write_data, write_json, write_matrix, write_rows, write_text,
};

fn edge_list(a: &Adjacency) -> Vec<[usize; 2]> {
    a.edges().map(|(i, j)| [i, j]).collect()
}

fn full_marginals(m: &UpperTri<f64>) -> Vec<Vec<f64>> {
    let p = m.dim();
    (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { *m.get(i, j) }).collect())
        .collect()
}

fn names_for(p: usize) -> Vec<String> {
    lassoggm::graph::default_labels(p)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub structure: StructureSpec,
    pub n: usize,
    pub replicate: usize,
    pub data_seed: u64,
    pub omega: String,
    pub data: String,
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let n = cfg
        .n
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config("simulate needs a positive sample size \"n\"".into()))?;
    ensure_dir(&cfg.out_dir)?;
    let results: Vec<CliResult<()>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let dir = if cfg.replicates == 1 {
                cfg.out_dir.clone()
            } else {
                cfg.out_dir.join(format!("replicate-{r:03}"))
            };
            simulate_one(cfg, r, n, &dir)
        })
        .collect();
    results.into_iter().collect()
}

fn simulate_one(cfg: &RunConfig, replicate: usize, n: usize, dir: &Path) -> CliResult<()> {
    let spec = cfg.structure_spec(replicate)?;
    let omega = generate(&spec)?;
    let mut rng = chain_rng(spec.seed, 1);
    let y = simulate_data(&omega, n, &DVector::zeros(spec.p), &mut rng)?;
    ensure_dir(dir)?;
    let names = names_for(spec.p);
    write_matrix(&dir.join("omega.csv"), &names, omega.as_matrix())?;
    write_data(&dir.join("data.csv"), &names, &y)?;
    let manifest = Manifest {
        structure: spec,
        n,
        replicate,
        data_seed: spec.seed,
        omega: "omega.csv".into(),
        data: "data.csv".into(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    info!("replicate {replicate}: wrote {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Serialize)]
struct ChainFailure {
    error: String,
    iteration: Option<usize>,
    parameter: Option<String>,
}

impl ChainFailure {
    fn new(err: &GgmError) -> Self {
        match err {
            GgmError::ChainAbort {
                iteration, parameter, ..
            } => ChainFailure {
                error: err.to_string(),
                iteration: Some(*iteration),
                parameter: Some(parameter.clone()),
            },
            other => ChainFailure {
                error: other.to_string(),
                iteration: None,
                parameter: None,
            },
        }
    }
}

/// Writes the abort diagnostics before handing the error back.
fn record_failure(out_dir: &Path, err: GgmError) -> CliError {
    let path = out_dir.join("error.json");
    if let Err(io) = write_json(&path, &ChainFailure::new(&err)) {
        log::error!("could not write {}: {io}", path.display());
    }
    CliError::from_core(err)
}

#[derive(Debug, Serialize)]
struct FitSummary {
    p: usize,
    n: usize,
    variables: Vec<String>,
    center: Vec<f64>,
    mcmc: McmcConfig,
    prior: GgmPrior,
    acceptance: AcceptanceRates,
    retained: usize,
    sigma2_mean: f64,
    graphs: GraphSummary,
    median_graph_edges: Vec<[usize; 2]>,
    threshold: Option<f64>,
    threshold_edges: Option<Vec<[usize; 2]>>,
    posterior_mean_precision: Vec<Vec<f64>>,
    partial_correlations: Vec<Vec<f64>>,
    dot_files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SampleLine<'a> {
    index: usize,
    sigma2: f64,
    s: &'a [f64],
    graph: String,
    c: Vec<f64>,
}

pub fn fit(cfg: &RunConfig) -> CliResult<()> {
    let (names, y) = read_data(cfg.data_path()?)?;
    let (yc, center) = y.centered();
    let mc = cfg.mcmc_config();
    let prior = cfg.hyperparameters.ggm;
    ensure_dir(&cfg.out_dir)?;
    info!("fit: p = {}, n = {}, {} iterations", y.p(), y.n(), mc.iterations);
    let out = run_chain(&yc, &prior, &mc).map_err(|e| record_failure(&cfg.out_dir, e))?;

    let posterior = tally(&out.adjacency)?;
    let summary = GraphSummary::new(&posterior, cfg.top_k);
    let precision = posterior_mean_precision(&out.states)?;
    let pc = partial_correlations(&precision);
    let median = posterior.median_graph();

    let mut dot_files = Vec::new();
    for (rank, g) in posterior.top_k(cfg.top_k).iter().enumerate() {
        let signs = partial_correlations(&graph_precision(&out.states, &out.adjacency, &g.pattern)?);
        let file = format!("graph-{:02}.dot", rank + 1);
        write_text(&cfg.out_dir.join(&file), &export_dot(&g.pattern, &names, Some(&signs)))?;
        dot_files.push(file);
    }
    write_text(&cfg.out_dir.join("median_graph.dot"), &export_dot(&median, &names, Some(&pc)))?;
    dot_files.push("median_graph.dot".into());

    write_matrix(&cfg.out_dir.join("precision.csv"), &names, precision.as_matrix())?;
    write_matrix(&cfg.out_dir.join("partial_correlations.csv"), &names, pc.as_matrix())?;
    let marginals = full_marginals(posterior.edge_marginals());
    write_rows(&cfg.out_dir.join("edge_marginals.csv"), &names, &marginals)?;

    if cfg.save_samples {
        let mut lines = String::new();
        for (index, (s, a)) in out.states.iter().zip(&out.adjacency).enumerate() {
            let c = s.decomp.c();
            let line = SampleLine {
                index,
                sigma2: s.sigma2,
                s: s.decomp.s(),
                graph: a.key(),
                c: lassoggm::adjacency::pairs(c.dim()).map(|(i, j)| c.get(i, j)).collect(),
            };
            lines.push_str(&serde_json::to_string(&line).expect("sample lines serialize"));
            lines.push('\n');
        }
        write_text(&cfg.out_dir.join("samples.jsonl"), &lines)?;
    }

    let sigma2_mean = out.states.iter().map(|s| s.sigma2).sum::<f64>() / out.states.len() as f64;
    let report = FitSummary {
        p: y.p(),
        n: y.n(),
        variables: names,
        center: center.iter().copied().collect(),
        mcmc: mc,
        prior,
        acceptance: out.acceptance.rates(),
        retained: out.states.len(),
        sigma2_mean,
        graphs: summary,
        median_graph_edges: edge_list(&median),
        threshold: cfg.threshold,
        threshold_edges: cfg.threshold.map(|t| edge_list(&threshold_edges(&precision, t))),
        posterior_mean_precision: precision.to_rows(),
        partial_correlations: pc.to_rows(),
        dot_files,
    };
    write_json(&cfg.out_dir.join("summary.json"), &report)
}

// ---------------------------------------------------------------- fit-mixture

#[derive(Debug, Serialize)]
struct ClusterReport {
    size: usize,
    weight: Option<f64>,
    mean: Vec<f64>,
    precision: Vec<Vec<f64>>,
    partial_correlations: Vec<Vec<f64>>,
    edge_marginals: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    dot_file: String,
}

#[derive(Debug, Serialize)]
struct ModelReport {
    k: usize,
    log_likelihood: f64,
    parameters: usize,
    bic: f64,
    acceptance: AcceptanceRates,
    partition: Vec<usize>,
    co_clustering: Vec<Vec<f64>>,
    clusters: Vec<ClusterReport>,
}

#[derive(Debug, Serialize)]
struct MixtureReport {
    p: usize,
    n: usize,
    variables: Vec<String>,
    mcmc: McmcConfig,
    best_k: usize,
    bic_table: Vec<lassoggm::mixture::BicRow>,
    models: Vec<ModelReport>,
}

#[allow(clippy::too_many_arguments)]
fn cluster_report(
    dir: &Path,
    file: String,
    names: &[String],
    size: usize,
    weight: Option<f64>,
    mean: &DVector<f64>,
    precision: &SymMatrix,
    marginals: &UpperTri<f64>,
    graph: &Adjacency,
) -> CliResult<ClusterReport> {
    let pc = partial_correlations(precision);
    write_text(&dir.join(&file), &export_dot(graph, names, Some(&pc)))?;
    Ok(ClusterReport {
        size,
        weight,
        mean: mean.iter().copied().collect(),
        precision: precision.to_rows(),
        partial_correlations: pc.to_rows(),
        edge_marginals: full_marginals(marginals),
        edges: edge_list(graph),
        dot_file: file,
    })
}

pub fn fit_mixture(cfg: &RunConfig) -> CliResult<()> {
    let (names, y) = read_data(cfg.data_path()?)?;
    let mc = cfg.mcmc_config();
    ensure_dir(&cfg.out_dir)?;
    info!("fit-mixture: K in {:?}", cfg.k_range);
    let selection = select_k(&y, &cfg.hyperparameters, &mc, &cfg.k_range).map_err(|e| record_failure(&cfg.out_dir, e))?;
    let mut models = Vec::new();
    for (est, acc) in &selection.estimates {
        let clusters = est
            .clusters
            .iter()
            .enumerate()
            .map(|(j, c)| {
                cluster_report(
                    &cfg.out_dir,
                    format!("k{}-cluster-{:02}.dot", est.k, j + 1),
                    &names,
                    c.size,
                    Some(c.weight),
                    &c.mean,
                    &c.precision,
                    &c.edge_marginals,
                    &c.graph,
                )
            })
            .collect::<CliResult<Vec<_>>>()?;
        models.push(ModelReport {
            k: est.k,
            log_likelihood: est.log_likelihood,
            parameters: est.parameters,
            bic: est.bic,
            acceptance: acc.rates(),
            partition: est.partition.clone(),
            co_clustering: est.co_clustering.clone(),
            clusters,
        });
    }
    let report = MixtureReport {
        p: y.p(),
        n: y.n(),
        variables: names,
        mcmc: mc,
        best_k: selection.best_k,
        bic_table: selection.table,
        models,
    };
    write_json(&cfg.out_dir.join("mixture.json"), &report)
}

// ---------------------------------------------------------------- fit-dp

#[derive(Debug, Serialize)]
struct ClusterCountProbability {
    clusters: usize,
    probability: f64,
}

#[derive(Debug, Serialize)]
struct DpReport {
    p: usize,
    n: usize,
    variables: Vec<String>,
    mcmc: McmcConfig,
    prior: DpPrior,
    acceptance: AcceptanceRates,
    move_acceptance: f64,
    d_n_posterior: Vec<ClusterCountProbability>,
    d_n_mode: usize,
    partition: Vec<usize>,
    co_clustering: Vec<Vec<f64>>,
    clusters: Vec<ClusterReport>,
}

pub fn fit_dp(cfg: &RunConfig) -> CliResult<()> {
    let (names, y) = read_data(cfg.data_path()?)?;
    let mc = cfg.mcmc_config();
    let prior = cfg.hyperparameters.dp;
    ensure_dir(&cfg.out_dir)?;
    info!("fit-dp: alpha = {}, {} iterations", prior.alpha, mc.iterations);
    let out = run_dp_chain(&y, &prior, &mc, DpOptions::default(), 0).map_err(|e| record_failure(&cfg.out_dir, e))?;
    let summary = lassoggm::dp::summarize(&out)?;
    let clusters = summary
        .clusters
        .iter()
        .enumerate()
        .map(|(j, c)| {
            cluster_report(
                &cfg.out_dir,
                format!("cluster-{:02}.dot", j + 1),
                &names,
                c.size,
                None,
                &c.mean,
                &c.precision,
                &c.edge_marginals,
                &c.graph,
            )
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (accepted, proposed) = out.moves;
    let report = DpReport {
        p: y.p(),
        n: y.n(),
        variables: names,
        mcmc: mc,
        prior,
        acceptance: out.acceptance.rates(),
        move_acceptance: if proposed == 0 { 0.0 } else { accepted as f64 / proposed as f64 },
        d_n_posterior: summary
            .d_n_posterior
            .iter()
            .map(|&(clusters, probability)| ClusterCountProbability { clusters, probability })
            .collect(),
        d_n_mode: summary.d_n_mode,
        partition: summary.partition,
        co_clustering: summary.co_clustering,
        clusters,
    };
    write_json(&cfg.out_dir.join("dp.json"), &report)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Serialize)]
struct ScoreRow {
    structure: Option<String>,
    p: usize,
    n: Option<usize>,
    replicate: Option<usize>,
    method: String,
    rule: String,
    #[serde(flatten)]
    scores: Scores,
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    rows: Vec<ScoreRow>,
}

fn evaluate_entry(entry: &EvaluationEntry, threshold: Option<f64>) -> CliResult<ScoreRow> {
    let (_, truth) = read_matrix(&entry.truth)?;
    let (_, est) = read_matrix(&entry.estimate)?;
    if truth.dim() != est.dim() {
        return Err(CliError::Config(format!(
            "shape mismatch: {} is {p}×{p} but {} is {q}×{q}",
            entry.truth.display(),
            entry.estimate.display(),
            p = truth.dim(),
            q = est.dim()
        )));
    }
    let p = truth.dim();
    let (edges, rule) = if let Some(path) = &entry.marginals {
        let (_, m) = read_matrix(path)?;
        if m.dim() != p {
            return Err(CliError::Config(format!(
                "shape mismatch: {} is {}×{} but the truth is {p}×{p}",
                path.display(),
                m.dim(),
                m.dim()
            )));
        }
        let upper = UpperTri::from_fn(p, |i, j| m.get(i, j));
        (median_probability_graph(&upper), "median-graph".to_string())
    } else if let Some(t) = threshold {
        (threshold_edges(&est, t), format!("threshold-{t}"))
    } else {
        (support(&est), "support".to_string())
    };
    let scores = score(&truth, &est, &edges)?;
    Ok(ScoreRow {
        structure: entry.structure.clone(),
        p,
        n: entry.n,
        replicate: entry.replicate,
        method: entry.method.clone().unwrap_or_else(|| "estimate".into()),
        rule,
        scores,
    })
}

pub fn evaluate(cfg: &RunConfig) -> CliResult<()> {
    if cfg.evaluations.is_empty() {
        return Err(CliError::Config(
            "nothing to evaluate: list \"evaluations\" or pass --truth and --estimate".into(),
        ));
    }
    ensure_dir(&cfg.out_dir)?;
    let rows = cfg
        .evaluations
        .iter()
        .map(|e| evaluate_entry(e, cfg.threshold))
        .collect::<CliResult<Vec<_>>>()?;
    let header: Vec<String> = [
        "structure",
        "p",
        "n",
        "replicate",
        "method",
        "rule",
        "kl",
        "mcc",
        "sensitivity",
        "specificity",
        "false_positive_rate",
        "false_negative_rate",
        "tp",
        "tn",
        "fp",
        "fn",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = header.join(",");
    csv.push('\n');
    for r in &rows {
        let s = &r.scores;
        let fields = [
            r.structure.clone().unwrap_or_default(),
            r.p.to_string(),
            opt(r.n),
            opt(r.replicate),
            r.method.clone(),
            r.rule.clone(),
            crate::io::fmt_num(s.kl),
            crate::io::fmt_num(s.mcc),
            crate::io::fmt_num(s.sensitivity),
            crate::io::fmt_num(s.specificity),
            crate::io::fmt_num(s.false_positive_rate),
            crate::io::fmt_num(s.false_negative_rate),
            s.counts.tp.to_string(),
            s.counts.tn.to_string(),
            s.counts.fp.to_string(),
            s.counts.fn_.to_string(),
        ];
        let quoted: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
        csv.push_str(&quoted.join(","));
        csv.push('\n');
    }
    write_text(&cfg.out_dir.join("scores.csv"), &csv)?;
    write_json(&cfg.out_dir.join("scores.json"), &ScoreReport { rows })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Serialize)]
struct PredictedGraph {
    key: String,
    count: u64,
    probability: f64,
    edges: Vec<[usize; 2]>,
    pse: f64,
}

#[derive(Debug, Serialize)]
struct PredictionReport {
    p: usize,
    train_size: usize,
    test_size: usize,
    top_k: usize,
    mcmc: McmcConfig,
    acceptance: AcceptanceRates,
    pse: f64,
    graphs: Vec<PredictedGraph>,
}

fn split(cfg: &RunConfig, y: &DataMatrix) -> CliResult<(DataMatrix, DataMatrix)> {
    if let Some(test_path) = &cfg.test {
        if cfg.train_size.is_some() {
            return Err(CliError::Config("set either \"test\" or \"train_size\", not both".into()));
        }
        let (_, test) = read_data(test_path)?;
        if test.p() != y.p() {
            return Err(CliError::Config(format!(
                "test data has {} variables, training data {}",
                test.p(),
                y.p()
            )));
        }
        return Ok((y.clone(), test));
    }
    let m = cfg
        .train_size
        .ok_or_else(|| CliError::Config("predict needs \"train_size\" or a \"test\" file".into()))?;
    if m < 2 || m >= y.n() {
        return Err(CliError::Config(format!(
            "train_size must lie in [2, {}) for {} samples, got {m}",
            y.n(),
            y.n()
        )));
    }
    let train = y.select(&(0..m).collect::<Vec<_>>())?;
    let test = y.select(&(m..y.n()).collect::<Vec<_>>())?;
    Ok((train, test))
}

pub fn predict(cfg: &RunConfig) -> CliResult<()> {
    let (names, y) = read_data(cfg.data_path()?)?;
    let (train, test) = split(cfg, &y)?;
    let mc = cfg.mcmc_config();
    ensure_dir(&cfg.out_dir)?;
    let (train_c, _) = train.centered();
    info!("predict: {} training and {} test samples", train.n(), test.n());
    let out = run_chain(&train_c, &cfg.hyperparameters.ggm, &mc).map_err(|e| record_failure(&cfg.out_dir, e))?;
    let pred = predict_held_out(&train, &test, &out.states, &out.adjacency, cfg.top_k)?;
    let rows: Vec<Vec<f64>> = transpose_rows(&pred.predictions);
    write_rows(&cfg.out_dir.join("predictions.csv"), &names, &rows)?;
    let report = PredictionReport {
        p: y.p(),
        train_size: train.n(),
        test_size: test.n(),
        top_k: cfg.top_k,
        mcmc: mc,
        acceptance: out.acceptance.rates(),
        pse: pred.pse,
        graphs: pred
            .graphs
            .iter()
            .zip(&pred.per_graph_pse)
            .map(|(g, pse)| PredictedGraph {
                key: g.pattern.key(),
                count: g.count,
                probability: g.probability,
                edges: edge_list(&g.pattern),
                pse: *pse,
            })
            .collect(),
    };
    write_json(&cfg.out_dir.join("prediction.json"), &report)
}

/// `p × n` predictions as one row per sample.
fn transpose_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}
