use crate::data::IMAGE_PIXELS;
use crate::error::Result;
use crate::propagate::{mc_propagate, propagate_image_sum, propagate_linear, InputNoise};

/// Agreement between an analytic σ_y and its Monte-Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationCheck {
    pub name: String,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub rel_error: f64,
    pub pass: bool,
}

impl PropagationCheck {
    fn new(name: &str, analytic: f64, monte_carlo: f64, tolerance: f64) -> Self {
        let rel_error = if analytic == 0.0 {
            monte_carlo.abs()
        } else {
            (monte_carlo - analytic).abs() / analytic
        };
        Self {
            name: name.to_string(),
            analytic,
            monte_carlo,
            rel_error,
            pass: if analytic == 0.0 { monte_carlo == 0.0 } else { rel_error <= tolerance },
        }
    }
}

/// Checks the line (`σ_y = |m| σ_x`, m = 2, σ_x = 0.05), image-sum
/// (`σ_y = 32 σ_x` over 1024 pixels, σ_x = 0.003125) and zero-noise cases
/// against Monte-Carlo propagation with `n_samples` draws, at 1%.
pub fn verify_propagation(n_samples: usize, seed: u64) -> Result<Vec<PropagationCheck>> {
    const TOLERANCE: f64 = 0.01;
    let line = |x: &[f64]| 2.0 * x[0];
    let sum = |x: &[f64]| x.iter().sum::<f64>();

    let mc_line = mc_propagate(line, &[3.0], &InputNoise::Uniform(0.05), n_samples, seed)?;
    let image = vec![0.0; IMAGE_PIXELS];
    let mc_image = mc_propagate(sum, &image, &InputNoise::Uniform(0.003_125), n_samples, seed)?;
    let mc_zero = mc_propagate(line, &[3.0], &InputNoise::Uniform(0.0), n_samples, seed)?;

    Ok(vec![
        PropagationCheck::new("line m=2 sigma_x=0.05", propagate_linear(2.0, 0.05), mc_line.std, TOLERANCE),
        PropagationCheck::new(
            "image-sum n=1024 sigma_x=0.003125",
            propagate_image_sum(0.003_125, IMAGE_PIXELS),
            mc_image.std,
            TOLERANCE,
        ),
        PropagationCheck::new("zero noise", propagate_linear(2.0, 0.0), mc_zero.std, TOLERANCE),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_pass_with_modest_sample_counts() {
        let checks = verify_propagation(40_000, 3).unwrap();
        assert_eq!(checks.len(), 3);
        assert!((checks[0].analytic - 0.1).abs() < 1e-15);
        assert!((checks[1].analytic - 0.1).abs() < 1e-15);
        assert_eq!(checks[2].analytic, 0.0);
        assert_eq!(checks[2].monte_carlo, 0.0);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }
}
