//! Priors on ν and the kernel hyperparameters, evaluated in log-parameter space.
//!
//! * ν ~ Gumbel-II(1, λ) (Fréchet): CDF `exp(−λ/ν)`, so `P(ν < 2) = exp(−λ/2)`
//!   and `λ = −2 log P(ν < 2)`.
//! * σj² ~ half-Student-t(0, s, 4), one per latent process.
//! * every ℓ ~ inverse half-Student-t(0, 1, 4): `1/ℓ` is half-Student-t.
//!
//! Densities in log space include the Jacobian `+ log x` of `x = exp(φ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::special::ln_gamma;

/// Default prior mass below ν = 2.
pub const DEFAULT_P_BELOW_2: f64 = 0.1;
/// Degrees of freedom of the half-Student-t hyperpriors.
pub const HYPERPRIOR_DOF: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Rate λ of the Gumbel-II prior on ν.
    pub nu_rate: f64,
    /// Scale of the half-Student-t prior on each signal variance.
    pub variance_scale: f64,
    /// Scale of the half-Student-t prior on each inverse length-scale.
    pub lengthscale_scale: f64,
    pub dof: f64,
}

impl PriorSpec {
    pub fn new(p_below_2: f64, variance_scale: f64) -> Result<Self> {
        if !(variance_scale > 0.0) || !variance_scale.is_finite() {
            return Err(Error::invalid(format!("variance prior scale must be positive, got {variance_scale}")));
        }
        Ok(PriorSpec {
            nu_rate: gumbel2_lambda(p_below_2)?,
            variance_scale,
            lengthscale_scale: 1.0,
            dof: HYPERPRIOR_DOF,
        })
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::new(DEFAULT_P_BELOW_2, 10.0).expect("default prior is valid")
    }
}

/// Rate λ such that a Gumbel-II(1, λ) variable has `P(ν < 2) = p`.
pub fn gumbel2_lambda(p_below_2: f64) -> Result<f64> {
    if !(p_below_2 > 0.0 && p_below_2 < 1.0) {
        return Err(Error::invalid(format!("P(nu < 2) must lie in (0, 1), got {p_below_2}")));
    }
    Ok(-2.0 * p_below_2.ln())
}

pub fn gumbel2_cdf(nu: f64, rate: f64) -> f64 {
    if nu <= 0.0 {
        0.0
    } else {
        (-rate / nu).exp()
    }
}

/// Natural-scale Gumbel-II(1, λ) density `λ ν⁻² exp(−λ/ν)`.
pub fn gumbel2_pdf(nu: f64, rate: f64) -> f64 {
    if nu <= 0.0 {
        0.0
    } else {
        rate / (nu * nu) * (-rate / nu).exp()
    }
}

fn half_t_log_norm(scale: f64, dof: f64) -> f64 {
    std::f64::consts::LN_2 + ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof)
        - scale.ln()
        - 0.5 * (std::f64::consts::PI * dof).ln()
}

/// Natural-scale half-Student-t(0, scale, dof) log density on x > 0.
pub fn half_t_logpdf(x: f64, scale: f64, dof: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let r = x / scale;
    half_t_log_norm(scale, dof) - 0.5 * (dof + 1.0) * (r * r / dof).ln_1p()
}

/// Natural-scale density of ℓ when `1/ℓ` is half-Student-t(0, scale, dof).
pub fn inv_half_t_logpdf(ell: f64, scale: f64, dof: f64) -> f64 {
    if ell <= 0.0 {
        return f64::NEG_INFINITY;
    }
    half_t_logpdf(1.0 / ell, scale, dof) - 2.0 * ell.ln()
}

/// `log p(φ)` and `d/dφ` for ν = exp(φ).
fn log_nu_term(phi: f64, rate: f64) -> (f64, f64) {
    let e = rate * (-phi).exp();
    (rate.ln() - phi - e, e - 1.0)
}

/// `log p(φ)` and `d/dφ` for σ² = exp(φ) under the half-Student-t.
fn log_variance_term(phi: f64, scale: f64, dof: f64) -> (f64, f64) {
    let x = phi.exp();
    let x2 = x * x;
    let ds2 = dof * scale * scale;
    let value = half_t_logpdf(x, scale, dof) + phi;
    (value, 1.0 - (dof + 1.0) * x2 / (ds2 + x2))
}

/// `log p(φ)` and `d/dφ` for ℓ = exp(φ) under the inverse half-Student-t.
fn log_lengthscale_term(phi: f64, scale: f64, dof: f64) -> (f64, f64) {
    let v = (-phi).exp();
    let v2 = v * v;
    let ds2 = dof * scale * scale;
    let value = half_t_logpdf(v, scale, dof) - phi;
    (value, (dof + 1.0) * v2 / (ds2 + v2) - 1.0)
}

/// Joint log prior of θ in log-parameter space and its gradient, in the
/// flat order of [`HyperParams::to_vec`].
pub fn log_prior(theta: &HyperParams, spec: &PriorSpec) -> Result<(f64, Vec<f64>)> {
    let v = theta.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite hyperparameter"));
    }
    let p = theta.input_dim();
    let mut total = 0.0;
    let mut grad = vec![0.0; v.len()];

    let (val, g) = log_nu_term(v[0], spec.nu_rate);
    total += val;
    grad[0] = g;

    for process in [1usize, 2] {
        let base = theta.signal_index(process);
        let (val, g) = log_variance_term(v[base], spec.variance_scale, spec.dof);
        total += val;
        grad[base] = g;
        for d in 0..p {
            let (val, g) = log_lengthscale_term(v[base + 1 + d], spec.lengthscale_scale, spec.dof);
            total += val;
            grad[base + 1 + d] = g;
        }
    }
    Ok((total, grad))
}
