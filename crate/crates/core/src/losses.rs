//! Probabilistic training objectives and closed-form uncertainty expressions.
//!
//! Mean-variance networks are trained with the β-weighted Gaussian NLL,
//!
//! ```text
//! L = 1/N Σ σ_i^{2β} [ ½ log σ_i² + (y_i − μ_i)² / (2σ_i²) + C ]
//! ```
//!
//! where the `σ^{2β}` weight is held constant when differentiating.
//! Evidential models predict normal-inverse-gamma hyperparameters
//! `(γ, ν, α, β)`; their marginal likelihood is a Student-t with `2α`
//! degrees of freedom, location `γ` and squared scale `β(1+ν)/(να)`, whose
//! scale is also the aleatoric width `w_St`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianHead {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        let h = Self { mu, sigma2 };
        h.check()?;
        Ok(h)
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// Normal-inverse-gamma hyperparameters; `nig_beta` is the inverse-gamma
/// scale, not the β-NLL exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigHead {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub nig_beta: f64,
}

impl NigHead {
    pub fn new(gamma: f64, nu: f64, alpha: f64, nig_beta: f64) -> Result<Self> {
        let h = Self {
            gamma,
            nu,
            alpha,
            nig_beta,
        };
        h.check()?;
        Ok(h)
    }

    fn check(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.alpha > 1.0 && self.nig_beta > 0.0) {
            return Err(Error::invalid(format!(
                "NIG head needs nu > 0, alpha > 1, beta > 0; got nu={}, alpha={}, beta={}",
                self.nu, self.alpha, self.nig_beta
            )));
        }
        Ok(())
    }

    /// Squared scale of the Student-t marginal, `β(1+ν)/(να)`.
    pub fn scale2(&self) -> f64 {
        self.nig_beta * (1.0 + self.nu) / (self.nu * self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Exponent β of the β-NLL weight, in `[0, 1]`.
    pub beta_weight: f64,
    /// Weight λ of the evidential regulariser.
    pub lambda_reg: f64,
    /// Additive constant C of the Gaussian NLL.
    pub nll_const: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta_weight: 0.5,
            lambda_reg: 0.01,
            nll_const: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta_weight(self.beta_weight)?;
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda_reg)));
        }
        if !self.nll_const.is_finite() {
            return Err(Error::invalid("the NLL constant must be finite"));
        }
        Ok(())
    }
}

/// How the β-NLL exponent evolves over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaSchedule {
    Constant(f64),
    /// Linear from 1 at the first epoch to 0 at the last.
    LinearDecay,
    /// 1 for the first half of training, then 0.5.
    StepToHalf,
    /// 1 for the first half of training, then 0.
    StepToZero,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Constant(0.5)
    }
}

impl BetaSchedule {
    pub fn value(&self, epoch: usize, epochs: usize) -> f64 {
        let second_half = epoch >= epochs / 2;
        match *self {
            BetaSchedule::Constant(b) => b,
            BetaSchedule::LinearDecay if epochs <= 1 => 1.0,
            BetaSchedule::LinearDecay => 1.0 - epoch as f64 / (epochs - 1) as f64,
            BetaSchedule::StepToHalf => if second_half { 0.5 } else { 1.0 },
            BetaSchedule::StepToZero => if second_half { 0.0 } else { 1.0 },
        }
    }
}

fn check_beta_weight(b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::invalid(format!("beta weight must lie in [0, 1], got {b}")));
    }
    Ok(())
}

fn check_lengths(heads: usize, targets: usize) -> Result<()> {
    if heads != targets {
        return Err(Error::Shape(format!("{heads} predictions for {targets} targets")));
    }
    if heads == 0 {
        return Err(Error::invalid("loss over an empty batch"));
    }
    Ok(())
}

fn gaussian_term(h: &GaussianHead, y: f64, c: f64) -> f64 {
    let r = y - h.mu;
    0.5 * h.sigma2.ln() + r * r / (2.0 * h.sigma2) + c
}

pub fn nll_gaussian(heads: &[GaussianHead], targets: &[f64], c: f64) -> Result<f64> {
    beta_nll(heads, targets, 0.0, c)
}

pub fn beta_nll(heads: &[GaussianHead], targets: &[f64], beta_weight: f64, c: f64) -> Result<f64> {
    Ok(beta_nll_with_grad(heads, targets, beta_weight, c)?.0)
}

/// β-NLL and its gradient per example with respect to `(μ, σ²)`.
pub fn beta_nll_with_grad(
    heads: &[GaussianHead],
    targets: &[f64],
    beta_weight: f64,
    c: f64,
) -> Result<(f64, Vec<[f64; 2]>)> {
    check_lengths(heads.len(), targets.len())?;
    check_beta_weight(beta_weight)?;
    let inv_n = 1.0 / heads.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(heads.len());
    for (h, &y) in heads.iter().zip(targets) {
        h.check()?;
        let s = h.sigma2;
        let weight = if beta_weight == 0.0 { 1.0 } else { s.powf(beta_weight) };
        let r = y - h.mu;
        loss += weight * gaussian_term(h, y, c);
        let d_mu = weight * (h.mu - y) / s;
        let d_var = weight * (0.5 / s - r * r / (2.0 * s * s));
        grads.push([d_mu * inv_n, d_var * inv_n]);
    }
    Ok((loss * inv_n, grads))
}

/// Log density of a Student-t with `dof` degrees of freedom, location `loc`
/// and squared scale `scale2`.
pub fn student_t_log_pdf(y: f64, loc: f64, scale2: f64, dof: f64) -> f64 {
    let r = y - loc;
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI * scale2).ln()
        - 0.5 * (dof + 1.0) * (r * r / (dof * scale2)).ln_1p()
}

/// Log marginal likelihood of `y` under a NIG head: `St_{2α}(y | γ, β(1+ν)/(να))`.
pub fn st_log_pdf(y: f64, h: &NigHead) -> f64 {
    student_t_log_pdf(y, h.gamma, h.scale2(), 2.0 * h.alpha)
}

/// Width of the Student-t marginal, `sqrt(β(1+ν)/(αν))`; the evidential
/// aleatoric uncertainty.
pub fn st_width(h: &NigHead) -> f64 {
    h.scale2().sqrt()
}

/// `Φ = 2ν + α`.
pub fn total_evidence(h: &NigHead) -> f64 {
    2.0 * h.nu + h.alpha
}

pub fn nig_loss(heads: &[NigHead], targets: &[f64], lambda_reg: f64) -> Result<f64> {
    Ok(nig_loss_with_grad(heads, targets, lambda_reg)?.0)
}

/// Evidential loss `1/N Σ [−log St(y_i) + λ |y_i − γ_i| / w_St · Φ]` and its
/// gradient per example with respect to `(γ, ν, α, β)`.
pub fn nig_loss_with_grad(
    heads: &[NigHead],
    targets: &[f64],
    lambda_reg: f64,
) -> Result<(f64, Vec<[f64; 4]>)> {
    check_lengths(heads.len(), targets.len())?;
    if !(lambda_reg >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda_reg}")));
    }
    let inv_n = 1.0 / heads.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(heads.len());
    for (h, &y) in heads.iter().zip(targets) {
        h.check()?;
        let NigHead {
            gamma,
            nu,
            alpha,
            nig_beta: beta,
        } = *h;
        let r = y - gamma;
        // −log St written with Ω = 2β(1+ν), Q = νr² + Ω
        let omega = 2.0 * beta * (1.0 + nu);
        let q = nu * r * r + omega;
        let nll = -st_log_pdf(y, h);
        let a_half = alpha + 0.5;
        let d_gamma = -a_half * 2.0 * nu * r / q;
        let d_nu = -0.5 / nu - alpha * 2.0 * beta / omega + a_half * (r * r + 2.0 * beta) / q;
        let d_alpha = (q / omega).ln() + digamma(alpha) - digamma(a_half);
        let d_beta = -alpha / beta + a_half * 2.0 * (1.0 + nu) / q;

        let inv_width = 1.0 / st_width(h);
        let phi = total_evidence(h);
        let reg = lambda_reg * r.abs() * inv_width * phi;
        // ∂(1/w)/∂θ = (1/w)·½ ∂ln(αν/(β(1+ν)))/∂θ
        let reg_gamma = -lambda_reg * r.signum() * inv_width * phi;
        let reg_nu = lambda_reg * r.abs() * inv_width * (2.0 + phi * 0.5 * (1.0 / nu - 1.0 / (1.0 + nu)));
        let reg_alpha = lambda_reg * r.abs() * inv_width * (1.0 + phi * 0.5 / alpha);
        let reg_beta = -lambda_reg * r.abs() * inv_width * phi * 0.5 / beta;

        loss += nll + reg;
        grads.push([
            (d_gamma + reg_gamma) * inv_n,
            (d_nu + reg_nu) * inv_n,
            (d_alpha + reg_alpha) * inv_n,
            (d_beta + reg_beta) * inv_n,
        ]);
    }
    Ok((loss * inv_n, grads))
}

/// Ensemble aleatoric uncertainty `sqrt(mean σ_k²)` from member variances.
pub fn de_aleatoric(member_variances: &[f64]) -> Result<f64> {
    if member_variances.is_empty() {
        return Err(Error::invalid("no ensemble members"));
    }
    if let Some(v) = member_variances.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::invalid(format!("member variance must be > 0, got {v}")));
    }
    Ok((member_variances.iter().sum::<f64>() / member_variances.len() as f64).sqrt())
}
