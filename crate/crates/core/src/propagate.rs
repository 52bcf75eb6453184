//! First-order propagation of input uncertainty onto the output variable.
//!
//! For `y = f(x_1, ..., x_N)` the output standard deviation is
//! `sqrt(Σ (∂f/∂x_i)² σ_i² + Σ_{i≠j} (∂f/∂x_i)(∂f/∂x_j) σ_ij)`. Both dataset
//! families use independent noise, so the cross terms vanish and the formula
//! collapses to `|m| σ_x` for the line and `sqrt(N) σ_x` for a pixel sum.
//! [`mc_propagate`] checks those closed forms by brute-force sampling.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, MONTE_CARLO};

/// Smallest sample count accepted by [`mc_propagate`].
pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationProblem {
    partials: Vec<f64>,
    sigmas: Vec<f64>,
    covariances: Option<Array2<f64>>,
}

impl PropagationProblem {
    /// Independent inputs (no cross terms).
    pub fn new(partials: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if partials.len() != sigmas.len() {
            return Err(Error::Shape(format!(
                "{} partials vs {} sigmas",
                partials.len(),
                sigmas.len()
            )));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::invalid(format!("sigma must be finite and >= 0, got {s}")));
        }
        if partials.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("partial derivatives must be finite"));
        }
        Ok(Self {
            partials,
            sigmas,
            covariances: None,
        })
    }

    /// Adds the symmetric matrix of cross terms σ_ij. Its diagonal is ignored;
    /// the variances come from the sigmas.
    pub fn with_covariances(mut self, cov: Array2<f64>) -> Result<Self> {
        let n = self.partials.len();
        if cov.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "covariance is {:?}, expected ({n}, {n})",
                cov.dim()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if cov[[i, j]] != cov[[j, i]] {
                    return Err(Error::invalid(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        self.covariances = Some(cov);
        Ok(self)
    }

    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

pub fn propagate_general(p: &PropagationProblem) -> Result<f64> {
    let mut var: f64 = p
        .partials
        .iter()
        .zip(&p.sigmas)
        .map(|(d, s)| (d * s) * (d * s))
        .sum();
    if let Some(cov) = &p.covariances {
        let n = p.partials.len();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    var += p.partials[i] * p.partials[j] * cov[[i, j]];
                }
            }
        }
    }
    if var < 0.0 || var.is_nan() {
        return Err(Error::NonPhysicalCovariance(var));
    }
    Ok(var.sqrt())
}

/// `σ_y = |m| σ_x` for `y = m x`.
pub fn propagate_linear(m: f64, sigma_x: f64) -> f64 {
    // Same arithmetic as the one-term general case so the two agree bit for bit.
    let t = m * sigma_x;
    (t * t).sqrt()
}

/// `σ_y = sqrt(N) σ_x` for `y = Σ_i x_i` with identical independent pixel noise.
pub fn propagate_image_sum(sigma_x: f64, n_pixels: usize) -> f64 {
    (n_pixels as f64).sqrt() * sigma_x
}

/// Noise scale for [`mc_propagate`]: one sigma for every coordinate or one each.
#[derive(Debug, Clone, PartialEq)]
pub enum InputNoise {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl InputNoise {
    fn sigma(&self, i: usize) -> f64 {
        match self {
            InputNoise::Uniform(s) => *s,
            InputNoise::PerCoordinate(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Unbiased (n − 1) sample standard deviation.
    pub std: f64,
}

/// Sample mean and standard deviation of `f(x0 + ε)`, `ε ~ N(0, diag(σ²))`.
pub fn mc_propagate<F>(
    f: F,
    x0: &[f64],
    noise: &InputNoise,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {n_samples}"
        )));
    }
    if let InputNoise::PerCoordinate(v) = noise {
        if v.len() != x0.len() {
            return Err(Error::Shape(format!(
                "{} sigmas for a {}-dimensional input",
                v.len(),
                x0.len()
            )));
        }
    }
    let sigmas: Vec<f64> = (0..x0.len()).map(|i| noise.sigma(i)).collect();
    if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("input sigmas must be finite and >= 0"));
    }

    let mut rng = stream_rng(seed, MONTE_CARLO);
    let mut x = x0.to_vec();
    // Welford accumulation
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n_samples {
        for ((xi, &base), &s) in x.iter_mut().zip(x0).zip(&sigmas) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *xi = base + s * z;
        }
        let y = f(&x);
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("f returned {y} at sample {k}")));
        }
        let delta = y - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (y - mean);
    }
    Ok(McEstimate {
        mean,
        std: (m2 / (n_samples - 1) as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn quadrature_sum() {
        let p = PropagationProblem::new(vec![1.0, 1.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(propagate_general(&p).unwrap(), 5.0);
    }

    #[test]
    fn single_variable() {
        let p = PropagationProblem::new(vec![-2.5], vec![0.4]).unwrap();
        assert!((propagate_general(&p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fully_correlated_pair() {
        let p = PropagationProblem::new(vec![1.0, 1.0], vec![1.0, 1.0])
            .unwrap()
            .with_covariances(array![[1.0, 1.0], [1.0, 1.0]])
            .unwrap();
        assert_eq!(propagate_general(&p).unwrap(), 2.0);
    }

    #[test]
    fn adversarial_covariance_is_rejected() {
        let p = PropagationProblem::new(vec![1.0, 1.0], vec![1.0, 1.0])
            .unwrap()
            .with_covariances(array![[0.0, -5.0], [-5.0, 0.0]])
            .unwrap();
        assert!(matches!(
            propagate_general(&p),
            Err(Error::NonPhysicalCovariance(_))
        ));
    }

    #[test]
    fn malformed_problems() {
        assert!(PropagationProblem::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PropagationProblem::new(vec![1.0], vec![-1.0]).is_err());
        let p = PropagationProblem::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(p.clone().with_covariances(array![[0.0]]).is_err());
        assert!(p.with_covariances(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
    }

    #[test]
    fn linear_cases() {
        assert!((propagate_linear(-2.0, 0.05) - 0.1).abs() < 1e-15);
        assert_eq!(propagate_linear(1.0, 0.1), 0.1);
        assert_eq!(propagate_linear(0.0, 1.0), 0.0);
    }

    #[test]
    fn image_sum_cases() {
        assert!((propagate_image_sum(0.003125, 1024) - 0.1).abs() < 1e-15);
        assert_eq!(propagate_image_sum(0.0, 1024), 0.0);
        assert_eq!(propagate_image_sum(1.0, 4), 2.0);
    }

    #[test]
    fn mc_zero_noise_is_exact() {
        let est = mc_propagate(|x| 3.0 * x[0], &[1.0], &InputNoise::Uniform(0.0), 10_000, 1).unwrap();
        assert_eq!(est.std, 0.0);
        assert_eq!(est.mean, 3.0);
    }

    #[test]
    fn mc_rejects_small_n_and_non_finite() {
        assert!(mc_propagate(|x| x[0], &[0.0], &InputNoise::Uniform(1.0), 100, 1).is_err());
        let r = mc_propagate(|x| 1.0 / (x[0] - x[0]), &[0.0], &InputNoise::Uniform(1.0), 10_000, 1);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let run = |seed| mc_propagate(|x| x[0] * x[1], &[1.0, 2.0], &InputNoise::Uniform(0.3), 10_000, seed).unwrap();
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    proptest! {
        #[test]
        fn linear_matches_general(m in -100.0f64..100.0, s in 0.0f64..10.0) {
            let p = PropagationProblem::new(vec![m], vec![s]).unwrap();
            prop_assert_eq!(propagate_linear(m, s), propagate_general(&p).unwrap());
        }

        #[test]
        fn scale_equivariance(
            parts in prop::collection::vec(-10.0f64..10.0, 1..8),
            c in 0.01f64..100.0,
            seed_sigmas in prop::collection::vec(0.0f64..5.0, 8),
        ) {
            let sigmas: Vec<f64> = seed_sigmas[..parts.len()].to_vec();
            let base = propagate_general(&PropagationProblem::new(parts.clone(), sigmas.clone()).unwrap()).unwrap();
            let scaled_sigmas = sigmas.iter().map(|s| s * c).collect();
            let scaled = propagate_general(&PropagationProblem::new(parts, scaled_sigmas).unwrap()).unwrap();
            prop_assert!((scaled - c * base).abs() <= 1e-12 * (c * base).max(1e-300));
        }
    }
}
