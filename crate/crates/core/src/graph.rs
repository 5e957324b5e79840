//! Posterior summaries over graphs and prediction by model mixing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjacency::{Adjacency, UpperTri};
use crate::error::{GgmError, Result};
use crate::linalg::SymMatrix;
use crate::metrics::{median_probability_graph, predictive_squared_error};
use crate::model::{DataMatrix, GgmChainState};

/// Visit frequencies of adjacency patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPosterior {
    p: usize,
    visit_counts: BTreeMap<Adjacency, u64>,
    edge_marginals: UpperTri<f64>,
    total: u64,
}

/// One entry of a ranked list of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGraph {
    pub pattern: Adjacency,
    pub count: u64,
    pub probability: f64,
}

pub fn tally(log: &[Adjacency]) -> Result<GraphPosterior> {
    let first = log
        .first()
        .ok_or_else(|| GgmError::InvalidArgument("empty adjacency log".into()))?;
    let p = first.dim();
    let mut visit_counts = BTreeMap::new();
    let mut edge_totals = UpperTri::filled(p, 0u64);
    for a in log {
        if a.dim() != p {
            return Err(GgmError::DimensionMismatch {
                expected: p,
                found: a.dim(),
            });
        }
        *visit_counts.entry(a.clone()).or_insert(0) += 1;
        for (i, j) in a.edges() {
            let c = *edge_totals.get(i, j);
            edge_totals.set(i, j, c + 1);
        }
    }
    let total = log.len() as u64;
    let edge_marginals = UpperTri::from_fn(p, |i, j| *edge_totals.get(i, j) as f64 / total as f64);
    Ok(GraphPosterior {
        p,
        visit_counts,
        edge_marginals,
        total,
    })
}

impl GraphPosterior {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.visit_counts.len()
    }

    pub fn edge_marginals(&self) -> &UpperTri<f64> {
        &self.edge_marginals
    }

    pub fn count(&self, pattern: &Adjacency) -> u64 {
        self.visit_counts.get(pattern).copied().unwrap_or(0)
    }

    pub fn probability(&self, pattern: &Adjacency) -> f64 {
        self.count(pattern) as f64 / self.total as f64
    }

    pub fn counts(&self) -> impl Iterator<Item = (&Adjacency, u64)> {
        self.visit_counts.iter().map(|(a, c)| (a, *c))
    }

    /// The `k` most visited patterns; ties go to the smaller key. Returns
    /// fewer entries when fewer patterns were visited.
    pub fn top_k(&self, k: usize) -> Vec<RankedGraph> {
        // The map iterates in ascending key order and the sort is stable.
        let mut ranked: Vec<(&Adjacency, u64)> = self.counts().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked
            .into_iter()
            .take(k)
            .map(|(pattern, count)| RankedGraph {
                pattern: pattern.clone(),
                count,
                probability: count as f64 / self.total as f64,
            })
            .collect()
    }

    pub fn median_graph(&self) -> Adjacency {
        median_probability_graph(&self.edge_marginals)
    }
}

/// Precision of the data under one state: `Ω / σ²`.
pub fn state_precision(state: &GgmChainState) -> SymMatrix {
    let omega = state.decomp.omega();
    SymMatrix::symmetrize(omega.into_inner() / state.sigma2)
}

fn mean_of(mats: impl Iterator<Item = SymMatrix>) -> Result<SymMatrix> {
    let mut acc: Option<DMatrix<f64>> = None;
    let mut n = 0usize;
    for m in mats {
        n += 1;
        acc = Some(match acc {
            None => m.into_inner(),
            Some(a) => a + m.as_matrix(),
        });
    }
    let acc = acc.ok_or_else(|| GgmError::InvalidArgument("no states to average".into()))?;
    Ok(SymMatrix::symmetrize(acc / n as f64))
}

/// Posterior mean of the data precision `Ω / σ²`.
pub fn posterior_mean_precision(states: &[GgmChainState]) -> Result<SymMatrix> {
    mean_of(states.iter().map(state_precision))
}

/// Posterior mean of `Ω = S C S`.
pub fn posterior_mean_omega(states: &[GgmChainState]) -> Result<SymMatrix> {
    mean_of(states.iter().map(|s| s.decomp.omega()))
}

/// Posterior mean of the correlation-scale matrix `C`.
pub fn posterior_mean_c(states: &[GgmChainState]) -> Result<SymMatrix> {
    mean_of(states.iter().map(|s| s.decomp.c().clone()))
}

/// Partial correlations `−Ω_ij / √(Ω_ii Ω_jj)` with unit diagonal.
pub fn partial_correlations(precision: &SymMatrix) -> SymMatrix {
    SymMatrix::from_upper_fn(precision.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            -precision.get(i, j) / (precision.get(i, i) * precision.get(j, j)).sqrt()
        }
    })
}

/// Posterior-mean precision over the states that visited `pattern`.
pub fn graph_precision(
    states: &[GgmChainState],
    log: &[Adjacency],
    pattern: &Adjacency,
) -> Result<SymMatrix> {
    mean_of(
        states
            .iter()
            .zip(log)
            .filter(|(_, a)| *a == pattern)
            .map(|(s, _)| state_precision(s)),
    )
}

/// Conditional-normal mean of every cell given the other variables of its
/// sample. `test` is `p × n`.
pub fn conditional_predictions(
    precision: &SymMatrix,
    center: &DVector<f64>,
    test: &DataMatrix,
) -> Result<DMatrix<f64>> {
    let p = precision.dim();
    if test.p() != p || center.len() != p {
        return Err(GgmError::DimensionMismatch {
            expected: p,
            found: test.p(),
        });
    }
    let y = test.y();
    let mut pred = DMatrix::zeros(p, test.n());
    for s in 0..test.n() {
        for j in 0..p {
            let mut acc = 0.0;
            for m in (0..p).filter(|&m| m != j) {
                acc += precision.get(j, m) * (y[(m, s)] - center[m]);
            }
            pred[(j, s)] = center[j] - acc / precision.get(j, j);
        }
    }
    Ok(pred)
}

/// Output of held-out prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutPrediction {
    /// Equal-weight average over the top graphs, `p × n_test`.
    pub predictions: DMatrix<f64>,
    pub pse: f64,
    /// Predictive squared error of each top graph alone, in rank order.
    pub per_graph_pse: Vec<f64>,
    pub graphs: Vec<RankedGraph>,
}

/// Model-mixed prediction of every test cell from the `k` most visited graphs.
pub fn predict_held_out(
    train: &DataMatrix,
    test: &DataMatrix,
    states: &[GgmChainState],
    log: &[Adjacency],
    k: usize,
) -> Result<HeldOutPrediction> {
    if k == 0 {
        return Err(GgmError::InvalidArgument("top-k must be at least 1".into()));
    }
    if train.p() != test.p() {
        return Err(GgmError::DimensionMismatch {
            expected: train.p(),
            found: test.p(),
        });
    }
    let posterior = tally(log)?;
    if k > posterior.distinct() {
        return Err(GgmError::GraphUnvisited {
            requested: k,
            visited: posterior.distinct(),
        });
    }
    let center = train.variable_means();
    let graphs = posterior.top_k(k);
    let mut mixed = DMatrix::zeros(test.p(), test.n());
    let mut per_graph_pse = Vec::with_capacity(k);
    for g in &graphs {
        let prec = graph_precision(states, log, &g.pattern)?;
        let pred = conditional_predictions(&prec, &center, test)?;
        per_graph_pse.push(predictive_squared_error(&pred, test.y())?);
        mixed += pred;
    }
    mixed /= k as f64;
    let pse = predictive_squared_error(&mixed, test.y())?;
    Ok(HeldOutPrediction {
        predictions: mixed,
        pse,
        per_graph_pse,
        graphs,
    })
}

fn dot_id(label: &str) -> String {
    format!("\"{}\"", label.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Undirected DOT graph. Edge colors follow the sign of the partial
/// correlation in `signs` when given: red for negative, green for positive.
pub fn export_dot(pattern: &Adjacency, labels: &[String], signs: Option<&SymMatrix>) -> String {
    let mut out = String::from("graph G {\n");
    for label in labels {
        let _ = writeln!(out, "  {};", dot_id(label));
    }
    for (i, j) in pattern.edges() {
        let _ = write!(out, "  {} -- {}", dot_id(&labels[i]), dot_id(&labels[j]));
        if let Some(pc) = signs {
            let rho = pc.get(i, j);
            let color = if rho < 0.0 { "red" } else { "green" };
            let _ = write!(out, " [color={color}, weight={rho:.6}]");
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
    out
}

pub fn default_labels(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("V{i}")).collect()
}

/// JSON-ready summary of a graph posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub p: usize,
    pub total: u64,
    pub distinct_graphs: usize,
    pub edge_marginals: Vec<Vec<f64>>,
    pub median_graph: String,
    pub top_graphs: Vec<TopGraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopGraph {
    pub key: String,
    pub count: u64,
    pub probability: f64,
    pub edges: Vec<[usize; 2]>,
}

impl GraphSummary {
    pub fn new(posterior: &GraphPosterior, k: usize) -> Self {
        let p = posterior.dim();
        let m = posterior.edge_marginals();
        let edge_marginals = (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| if i == j { 1.0 } else { *m.get(i, j) })
                    .collect()
            })
            .collect();
        GraphSummary {
            p,
            total: posterior.total(),
            distinct_graphs: posterior.distinct(),
            edge_marginals,
            median_graph: posterior.median_graph().key(),
            top_graphs: posterior
                .top_k(k)
                .into_iter()
                .map(|g| TopGraph {
                    key: g.pattern.key(),
                    count: g.count,
                    probability: g.probability,
                    edges: g.pattern.edges().map(|(i, j)| [i, j]).collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PrecisionDecomposition;

    fn key(s: &str) -> Adjacency {
        Adjacency::from_key(3, s).unwrap()
    }

    #[test]
    fn counting() {
        let post = tally(&[key("100"), key("100"), key("010"), key("001")]).unwrap();
        assert_eq!(post.probability(&key("100")), 0.5);
        assert_eq!(post.probability(&key("010")), 0.25);
        assert_eq!(post.probability(&key("001")), 0.25);
        let total: f64 = post.counts().map(|(a, _)| post.probability(a)).sum();
        assert_eq!(total, 1.0);
        assert_eq!(post.edge_marginals().values(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn single_pattern() {
        let post = tally(&vec![key("110"); 7]).unwrap();
        assert_eq!(post.probability(&key("110")), 1.0);
        assert_eq!(post.top_k(1)[0].pattern, key("110"));
    }

    #[test]
    fn top_k_ties_and_overflow() {
        let post = tally(&[key("100"), key("010"), key("011"), key("011")]).unwrap();
        let top = post.top_k(10);
        let keys: Vec<String> = top.iter().map(|g| g.pattern.key()).collect();
        assert_eq!(keys, vec!["011", "010", "100"]);
        assert_eq!(post.top_k(2).len(), 2);
    }

    #[test]
    fn marginals_reconstruct_from_patterns() {
        let log = vec![key("110"), key("011"), key("011"), key("000"), key("111")];
        let post = tally(&log).unwrap();
        for (idx, (i, j)) in crate::adjacency::pairs(3).enumerate() {
            let weighted: f64 = post
                .counts()
                .map(|(a, _)| post.probability(a) * f64::from(u8::from(a.values()[idx])))
                .sum();
            assert!((weighted - post.edge_marginals().get(i, j)).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_precision_predicts_training_mean() {
        let prec = SymMatrix::from_diagonal(&[2.0, 3.0, 0.5]);
        let center = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let test = DataMatrix::from_samples(&[vec![4.0, 5.0, 6.0], vec![0.0, 0.1, 0.2]]).unwrap();
        let pred = conditional_predictions(&prec, &center, &test).unwrap();
        for s in 0..2 {
            for j in 0..3 {
                assert_eq!(pred[(j, s)], center[j]);
            }
        }
    }

    #[test]
    fn bivariate_regression_oracle() {
        // Σ = Ω⁻¹; E[y1 | y2] = μ1 + Σ12/Σ22 (y2 − μ2).
        let omega = SymMatrix::from_rows(&[vec![2.0, -0.7], vec![-0.7, 1.5]]).unwrap();
        let det = 2.0 * 1.5 - 0.49;
        let (s12, s22) = (0.7 / det, 2.0 / det);
        let center = DVector::from_vec(vec![0.3, -1.0]);
        let test = DataMatrix::from_samples(&[vec![9.0, 0.4], vec![9.0, -2.5]]).unwrap();
        let pred = conditional_predictions(&omega, &center, &test).unwrap();
        for s in 0..2 {
            let y2 = test.y()[(1, s)];
            let oracle = 0.3 + s12 / s22 * (y2 + 1.0);
            assert!((pred[(0, s)] - oracle).abs() < 1e-12);
        }
    }

    fn state(p: usize, a: &Adjacency, c: f64) -> GgmChainState {
        let r = SymMatrix::from_upper_fn(p, |i, j| if i == j { 1.0 } else { c });
        GgmChainState {
            decomp: PrecisionDecomposition::new(vec![1.0; p], a.clone(), r).unwrap(),
            tau: UpperTri::filled(p, 1.0),
            q: UpperTri::filled(p, 0.5),
            sigma2: 1.0,
        }
    }

    #[test]
    fn prediction_k1_equals_unmixed() {
        let a = key("100");
        let states = vec![state(3, &a, 0.3), state(3, &a, 0.5)];
        let log = vec![a.clone(), a.clone()];
        let train = DataMatrix::from_samples(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let test = DataMatrix::from_samples(&[vec![0.5, 0.5, 0.5]]).unwrap();
        let out = predict_held_out(&train, &test, &states, &log, 1).unwrap();
        let prec = posterior_mean_precision(&states).unwrap();
        let direct = conditional_predictions(&prec, &train.variable_means(), &test).unwrap();
        assert_eq!(out.predictions, direct);
        assert_eq!(out.pse, out.per_graph_pse[0]);
        assert!(matches!(
            predict_held_out(&train, &test, &states, &log, 2),
            Err(GgmError::GraphUnvisited { requested: 2, visited: 1 })
        ));
    }

    /// Minimal structural check of the DOT grammar subset we emit.
    fn parse_dot(text: &str) -> Option<(usize, usize)> {
        let body = text.strip_prefix("graph G {\n")?.strip_suffix("}\n")?;
        let (mut nodes, mut edges) = (0, 0);
        for line in body.lines() {
            let stmt = line.trim().strip_suffix(';')?;
            let quoted = |s: &str| s.starts_with('"') && s.ends_with('"') && s.len() >= 2;
            if let Some((lhs, rhs)) = stmt.split_once(" -- ") {
                let rhs = rhs.split(" [").next()?;
                if !quoted(lhs) || !quoted(rhs) {
                    return None;
                }
                edges += 1;
            } else if quoted(stmt) {
                nodes += 1;
            } else {
                return None;
            }
        }
        Some((nodes, edges))
    }

    #[test]
    fn dot_export() {
        let labels = default_labels(3);
        let empty = export_dot(&Adjacency::empty(3), &labels, None);
        assert_eq!(parse_dot(&empty), Some((3, 0)));
        let pc = SymMatrix::from_rows(&[
            vec![1.0, -0.2, 0.3],
            vec![-0.2, 1.0, 0.1],
            vec![0.3, 0.1, 1.0],
        ])
        .unwrap();
        let full = export_dot(&Adjacency::complete(3), &labels, Some(&pc));
        assert_eq!(parse_dot(&full), Some((3, 3)));
        assert!(full.contains("\"V1\" -- \"V2\" [color=red"));
        assert!(full.contains("\"V1\" -- \"V3\" [color=green"));
    }
}
