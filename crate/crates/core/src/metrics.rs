//! Scores for estimated precision matrices, graphs and partitions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adjacency::{Adjacency, UpperTri};
use crate::error::{GgmError, Result};
use crate::linalg::{inverse_pd, log_det_pd, SymMatrix};

/// `tr(Ω Ω̂⁻¹) − ln|Ω Ω̂⁻¹| − p`.
pub fn kl_loss(truth: &SymMatrix, est: &SymMatrix) -> Result<f64> {
    let p = truth.dim();
    if est.dim() != p {
        return Err(GgmError::DimensionMismatch {
            expected: p,
            found: est.dim(),
        });
    }
    let est_inv = inverse_pd(est)?;
    let tr = truth.trace_product(&est_inv);
    let log_det = log_det_pd(truth)? - log_det_pd(est)?;
    Ok(tr - log_det - p as f64)
}

/// Edge-decision counts over the `p(p-1)/2` unordered pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// NaN when any margin is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denom = (tn + fp) * (tp + fn_) * (tp + fp) * (tn + fn_);
        if denom == 0.0 {
            return f64::NAN;
        }
        (tn * tp - fp * fn_) / denom.sqrt()
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn false_negative_rate(&self) -> f64 {
        ratio(self.fn_, self.fn_ + self.tp)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(truth: &Adjacency, est: &Adjacency) -> Result<ConfusionCounts> {
    if truth.dim() != est.dim() {
        return Err(GgmError::DimensionMismatch {
            expected: truth.dim(),
            found: est.dim(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (t, e) in truth.values().iter().zip(est.values()) {
        match (*t, *e) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Edges whose partial correlation `|Ω_ij| / √(Ω_ii Ω_jj)` exceeds `t`.
pub fn threshold_edges(precision: &SymMatrix, t: f64) -> Adjacency {
    Adjacency::from_fn(precision.dim(), |i, j| {
        let scale = (precision.get(i, i) * precision.get(j, j)).sqrt();
        precision.get(i, j).abs() / scale > t
    })
}

/// Nonzero pattern of a precision matrix.
pub fn support(precision: &SymMatrix) -> Adjacency {
    Adjacency::from_fn(precision.dim(), |i, j| precision.get(i, j) != 0.0)
}

/// Edges with posterior inclusion probability at least one half.
pub fn median_probability_graph(marginals: &UpperTri<f64>) -> Adjacency {
    Adjacency::from_fn(marginals.dim(), |i, j| *marginals.get(i, j) >= 0.5)
}

/// Mean squared difference over all cells.
pub fn predictive_squared_error(pred: &DMatrix<f64>, actual: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != actual.shape() {
        return Err(GgmError::InvalidArgument(format!(
            "prediction shape {:?} differs from data shape {:?}",
            pred.shape(),
            actual.shape()
        )));
    }
    if pred.is_empty() {
        return Err(GgmError::InvalidArgument("no cells to score".into()));
    }
    Ok((pred - actual).map(|d| d * d).sum() / pred.len() as f64)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GgmError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (x, y) in a.iter().zip(b) {
        table[*x][*y] += 1;
    }
    let choose2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|m| choose2(*m)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|c| choose2(table.iter().map(|r| r[c]).sum()))
        .sum();
    let total = choose2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both labelings trivial (all singletons or one block).
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Scores of one estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub kl: f64,
    pub mcc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub counts: ConfusionCounts,
}

pub fn score(truth: &SymMatrix, est: &SymMatrix, est_edges: &Adjacency) -> Result<Scores> {
    let counts = confusion(&support(truth), est_edges)?;
    Ok(Scores {
        kl: kl_loss(truth, est)?,
        mcc: counts.mcc(),
        sensitivity: counts.sensitivity(),
        specificity: counts.specificity(),
        false_positive_rate: counts.false_positive_rate(),
        false_negative_rate: counts.false_negative_rate(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain_rng;
    use crate::simgen::{banded, random_pd_correlation};
    use nalgebra::SymmetricEigen;

    #[test]
    fn kl_closed_forms() {
        let i2 = SymMatrix::identity(2);
        assert!(kl_loss(&i2, &i2).unwrap().abs() < 1e-15);
        let two = SymMatrix::from_diagonal(&[2.0, 2.0]);
        let expected = 2.0 * 2f64.ln() - 1.0;
        assert!((kl_loss(&i2, &two).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_eigen_oracle() {
        let mut rng = chain_rng(11, 0);
        for _ in 0..50 {
            let a = random_pd_correlation(4, &mut rng);
            let b = random_pd_correlation(4, &mut rng);
            // Eigenvalues of Ω Ω̂⁻¹ via the symmetric form L⁻¹ Ω L⁻ᵀ with Ω̂ = L Lᵀ.
            let l = b.as_matrix().clone().cholesky().unwrap().l();
            let li = l.try_inverse().unwrap();
            let m = &li * a.as_matrix() * li.transpose();
            let ev = SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues;
            let oracle: f64 = ev.iter().map(|l| l - l.ln() - 1.0).sum();
            let got = kl_loss(&a, &b).unwrap();
            assert!((got - oracle).abs() < 1e-10);
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn confusion_hand_case() {
        let truth = support(&banded(10));
        let mut est = truth.clone();
        est.set(0, 1, false);
        est.set(0, 9, true);
        let c = confusion(&truth, &est).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 8,
                tn: 35,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(c.total(), 45);
        // (35·8 − 1) / √(36·9·9·36)
        assert!((c.mcc() - 279.0 / 324.0).abs() < 1e-15);
        assert!((c.mcc() - 0.8611).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_empty() {
        let truth = support(&banded(6));
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!((c.mcc(), c.sensitivity(), c.specificity()), (1.0, 1.0, 1.0));
        let c = confusion(&truth, &Adjacency::empty(6)).unwrap();
        assert_eq!(c.sensitivity(), 0.0);
        assert!(c.mcc().is_nan());
    }

    #[test]
    fn mcc_swap_negates() {
        let c = ConfusionCounts {
            tp: 5,
            tn: 20,
            fp: 3,
            fn_: 2,
        };
        let swapped = ConfusionCounts {
            tp: c.fn_,
            tn: c.fp,
            fp: c.tn,
            fn_: c.tp,
        };
        assert!((c.mcc() + swapped.mcc()).abs() < 1e-15);
    }

    #[test]
    fn thresholds() {
        let m = banded(4);
        assert_eq!(threshold_edges(&m, 0.0), support(&m));
        assert_eq!(threshold_edges(&m, 1.0).edge_count(), 0);
        let scaled = SymMatrix::from_rows(&[vec![4.0, 0.5], vec![0.5, 1.0]]).unwrap();
        // Partial-correlation scale: 0.5 / 2 = 0.25.
        assert_eq!(threshold_edges(&scaled, 0.2).edge_count(), 1);
        assert_eq!(threshold_edges(&scaled, 0.3).edge_count(), 0);
    }

    #[test]
    fn pse_cases() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(predictive_squared_error(&a, &a).unwrap(), 0.0);
        assert!((predictive_squared_error(&a.add_scalar(0.5), &a).unwrap() - 0.25).abs() < 1e-15);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 3.0, 4.0, 5.0, 9.0, 7.0, 8.0, 8.0]);
        // (2² + 3² + 1²) / 9
        assert!((predictive_squared_error(&b, &a).unwrap() - 14.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn ari_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // Contingency [[2,0],[1,1]]: index 1, rows 2, cols 3, expected 2·3/6 = 1.
        let got = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert!(got.abs() < 1e-15);
        // [[2,1],[0,3]]: index 1 + 3 = 4, rows 3 + 3, cols 1 + 6, total 15.
        let got = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 1]).unwrap();
        let expected = (4.0 - 42.0 / 15.0) / (6.5 - 42.0 / 15.0);
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn median_graph() {
        let m = UpperTri::from_values(3, vec![0.5, 0.49, 0.9]).unwrap();
        assert_eq!(median_probability_graph(&m).key(), "101");
    }
}
