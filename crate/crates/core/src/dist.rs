//! Random draws used by the samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{GgmError, Result};
use crate::linalg::{cholesky, inverse_pd, SymMatrix};

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn std_normal_vec<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(p, |_, _| std_normal(rng))
}

/// Inverse-gamma draw with the given shape and scale.
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("inverse gamma parameters must be positive");
    1.0 / g.sample(rng)
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b)
        .expect("beta parameters must be positive")
        .sample(rng)
}

/// Dirichlet draw by normalizing independent gamma variates.
pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("dirichlet parameters must be positive")
                .sample(rng)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter().map(|g| g / total).collect()
    } else {
        // All gammas underflowed; fall back to the prior mean.
        let sa: f64 = alpha.iter().sum();
        alpha.iter().map(|a| a / sa).collect()
    }
}

/// Draw from `N(mean, P⁻¹)` given the precision `P`.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision: &SymMatrix,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let l = cholesky(precision, 0.0)?;
    let z = std_normal_vec(mean.len(), rng);
    // Lᵀ x = z gives Cov(x) = (L Lᵀ)⁻¹.
    let x = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(GgmError::NotPositiveDefinite {
            index: 0,
            pivot: 0.0,
        })?;
    Ok(mean + x)
}

/// Draw from `N(mean, Σ)` given the covariance `Σ`.
pub fn mvn_from_covariance<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &SymMatrix,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let l = cholesky(cov, 0.0)?;
    Ok(mean + l * std_normal_vec(mean.len(), rng))
}

/// Wishart draw `W(df, scale)` via the Bartlett decomposition.
pub fn wishart<R: Rng + ?Sized>(df: f64, scale: &SymMatrix, rng: &mut R) -> Result<SymMatrix> {
    let p = scale.dim();
    if df <= (p as f64) - 1.0 {
        return Err(GgmError::InvalidArgument(format!(
            "wishart degrees of freedom {df} must exceed p - 1 = {}",
            p - 1
        )));
    }
    let l = cholesky(scale, 0.0)?;
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64)
            .expect("chi-squared degrees of freedom are positive")
            .sample(rng);
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    let la = l * a;
    Ok(SymMatrix::symmetrize(&la * la.transpose()))
}

/// Inverse-Wishart draw `IW(df, scale)`, with mean `scale / (df - p - 1)`.
pub fn inv_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &SymMatrix,
    rng: &mut R,
) -> Result<SymMatrix> {
    let w = wishart(df, &inverse_pd(scale)?, rng)?;
    inverse_pd(&w)
}

/// Laplace(0, τ) truncated to `[lo, hi]`, drawn by inverting its CDF.
pub fn truncated_laplace<R: Rng + ?Sized>(tau: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * (x / tau).exp()
        } else {
            1.0 - 0.5 * (-x / tau).exp()
        }
    };
    let (flo, fhi) = (cdf(lo), cdf(hi));
    let u = flo + rng.random::<f64>() * (fhi - flo);
    let x = if u < 0.5 {
        tau * (2.0 * u).ln()
    } else {
        -tau * (2.0 * (1.0 - u)).ln()
    };
    x.clamp(lo, hi)
}

/// Index drawn with probability proportional to `exp(log_weights)`.
/// Returns `None` when no weight is positive and finite.
pub fn categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| w.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|w| if w.is_finite() { (w - max).exp() } else { 0.0 })
        .collect();
    categorical(&weights, rng)
}

/// Index drawn with probability proportional to nonnegative `weights`.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = Some(k);
            if u < acc {
                return Some(k);
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truncated_laplace_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = truncated_laplace(0.3, -0.2, 0.7, &mut rng);
            assert!((-0.2..=0.7).contains(&x));
        }
    }

    #[test]
    fn truncated_laplace_mean_matches_quadrature() {
        let (tau, lo, hi) = (0.5, 0.1, 0.9);
        let n = 100_000;
        let grid = 200_000;
        let h = (hi - lo) / grid as f64;
        let (mut z, mut m1) = (0.0, 0.0);
        for k in 0..grid {
            let x = lo + (k as f64 + 0.5) * h;
            let w = (-x / tau).exp();
            z += w;
            m1 += x * w;
        }
        let exact = m1 / z;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws: Vec<f64> = (0..n)
            .map(|_| truncated_laplace(tau, lo, hi, &mut rng))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let k = categorical_log(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], &mut rng);
            assert_eq!(k, Some(1));
        }
        assert_eq!(categorical_log(&[f64::NEG_INFINITY; 2], &mut rng), None);
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = dirichlet(&[0.5, 2.0, 3.0], &mut rng);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scale = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let df = 6.0;
        let n = 40_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            acc += wishart(df, &scale, &mut rng).unwrap().as_matrix();
        }
        let mean = acc / n as f64;
        let expected = scale.as_matrix() * df;
        assert!((&mean - expected).amax() < 0.05, "{mean}");
    }
}
