//! Heteroscedastic Student-t observation model.
//!
//! Each response is `y_i ~ S(f1_i, exp(f2_i), ν)`: the first latent process
//! is the location, the second the log-scale. All derivatives below are with
//! respect to the latent values at natural-scale ν and are written in terms
//! of the standardized residual `z = (y − f1) / exp(f2)` and `u = 1 + z²/ν`.
//!
//! `W` is the Hessian of the *negative* log-likelihood. It couples only
//! `f1_i` with `f2_i`, so it is stored as three bands of length n.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma_half_diff, ln_gamma_half_ratio};

/// Latent values at the training inputs: location `f1` and log-scale `f2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub f1: DVector<f64>,
    pub f2: DVector<f64>,
}

impl LatentState {
    pub fn new(f1: DVector<f64>, f2: DVector<f64>) -> Result<Self> {
        if f1.len() != f2.len() {
            return Err(Error::dim(format!("f1 has length {}, f2 has length {}", f1.len(), f2.len())));
        }
        if f1.iter().chain(f2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent values must be finite"));
        }
        Ok(LatentState { f1, f2 })
    }

    pub fn constant(n: usize, f1: f64, f2: f64) -> Self {
        LatentState {
            f1: DVector::from_element(n, f1),
            f2: DVector::from_element(n, f2),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0, 0.0)
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    /// Stacked `[f1; f2]`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.f1[i] } else { self.f2[i - n] })
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        LatentState {
            f1: v.rows(0, n).into_owned(),
            f2: v.rows(n, n).into_owned(),
        }
    }

    pub fn dot(&self, other: &LatentState) -> f64 {
        self.f1.dot(&other.f1) + self.f2.dot(&other.f2)
    }

    pub fn max_abs(&self) -> f64 {
        self.f1.amax().max(self.f2.amax())
    }

    /// `self + t · (other − self)`.
    pub fn lerp(&self, other: &LatentState, t: f64) -> LatentState {
        LatentState {
            f1: &self.f1 + (&other.f1 - &self.f1) * t,
            f2: &self.f2 + (&other.f2 - &self.f2) * t,
        }
    }

    pub fn sub(&self, other: &LatentState) -> LatentState {
        LatentState {
            f1: &self.f1 - &other.f1,
            f2: &self.f2 - &other.f2,
        }
    }
}

/// A symmetric 2n×2n matrix whose only non-zeros are the two diagonals of
/// the f1f1 and f2f2 blocks and the diagonal of the f1f2 block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Banded {
    pub d11: DVector<f64>,
    pub d22: DVector<f64>,
    pub d12: DVector<f64>,
}

impl Banded {
    pub fn zeros(n: usize) -> Self {
        Banded {
            d11: DVector::zeros(n),
            d22: DVector::zeros(n),
            d12: DVector::zeros(n),
        }
    }

    pub fn diagonal(d11: DVector<f64>, d22: DVector<f64>) -> Self {
        let n = d11.len();
        Banded {
            d11,
            d22,
            d12: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.d11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d11.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.d12.iter().all(|v| *v == 0.0)
    }

    /// Matrix-vector product on a stacked latent vector.
    pub fn apply(&self, v: &LatentState) -> LatentState {
        LatentState {
            f1: self.d11.component_mul(&v.f1) + self.d12.component_mul(&v.f2),
            f2: self.d12.component_mul(&v.f1) + self.d22.component_mul(&v.f2),
        }
    }
}

/// Diagonal of the Fisher information `E[W]` and its non-zero derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    /// `(ν+1)/(ν+3) · exp(−2 f2_i)`.
    pub d1: DVector<f64>,
    /// `2ν/(ν+3)`, the same for every point.
    pub d2: DVector<f64>,
    /// `∂ d1_i / ∂ f2_i = −2 d1_i` (nothing else depends on f).
    pub d1_df2: DVector<f64>,
    pub d1_dnu: DVector<f64>,
    pub d2_dnu: DVector<f64>,
}

impl FisherInfo {
    pub fn as_banded(&self) -> Banded {
        Banded::diagonal(self.d1.clone(), self.d2.clone())
    }
}

/// Everything the Laplace machinery needs from the likelihood at one `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodDerivatives {
    pub loglik: f64,
    /// `∇_f log L`.
    pub grad: LatentState,
    /// `−∇∇_f log L`.
    pub w: Banded,
    pub fisher: FisherInfo,
    /// `∂W/∂f1_i` (each band entry i is differentiated w.r.t. its own f1_i).
    pub dw_df1: Banded,
    /// `∂W/∂f2_i`.
    pub dw_df2: Banded,
    pub dw_dnu: Banded,
    /// `∂(∇_f log L)/∂ν`.
    pub dgrad_dnu: LatentState,
    pub dloglik_dnu: f64,
}

fn check_inputs(y: &DVector<f64>, f: &LatentState, nu: f64) -> Result<()> {
    if !(nu > 0.0) || nu.is_nan() {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {nu}")));
    }
    if y.len() != f.len() {
        return Err(Error::dim(format!("y has length {}, latent state has length {}", y.len(), f.len())));
    }
    if y.iter().chain(f.f1.iter()).chain(f.f2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite response or latent value"));
    }
    Ok(())
}

/// Normalizing constant `ln Γ((ν+1)/2) − ln Γ(ν/2) − ½ ln(πν)`.
pub fn log_normalizer(nu: f64) -> f64 {
    ln_gamma_half_ratio(0.5 * nu) - 0.5 * (PI * nu).ln()
}

/// `log S(y | μ, σ, ν)`.
pub fn student_t_logpdf(y: f64, location: f64, scale: f64, nu: f64) -> f64 {
    let z = (y - location) / scale;
    log_normalizer(nu) - scale.ln() - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// Log density of one observation given its latent pair.
pub fn point_log_density(y: f64, f1: f64, f2: f64, nu: f64) -> f64 {
    let z = (y - f1) * (-f2).exp();
    log_normalizer(nu) - f2 - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// `log L(y | f, ν) = Σ_i log S(y_i | f1_i, exp(f2_i), ν)`.
pub fn log_likelihood(y: &DVector<f64>, f: &LatentState, nu: f64) -> Result<f64> {
    check_inputs(y, f, nu)?;
    Ok(log_likelihood_unchecked(y, f, nu))
}

pub(crate) fn log_likelihood_unchecked(y: &DVector<f64>, f: &LatentState, nu: f64) -> f64 {
    let c = log_normalizer(nu);
    let mut total = 0.0;
    for i in 0..y.len() {
        let z = (y[i] - f.f1[i]) * (-f.f2[i]).exp();
        total += c - f.f2[i] - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p();
    }
    total
}

/// Fisher information diagonal at `(f2, ν)`.
pub fn fisher_information(f2: &DVector<f64>, nu: f64) -> FisherInfo {
    let n = f2.len();
    let r1 = (nu + 1.0) / (nu + 3.0);
    let d1 = f2.map(|v| r1 * (-2.0 * v).exp());
    let d1_df2 = &d1 * -2.0;
    let inv3 = 1.0 / ((nu + 3.0) * (nu + 3.0));
    let d1_dnu = f2.map(|v| 2.0 * inv3 * (-2.0 * v).exp());
    FisherInfo {
        d1,
        d2: DVector::from_element(n, 2.0 * nu / (nu + 3.0)),
        d1_df2,
        d1_dnu,
        d2_dnu: DVector::from_element(n, 6.0 * inv3),
    }
}

/// Gradient, `W`, Fisher information and the third-order terms.
pub fn derivatives(y: &DVector<f64>, f: &LatentState, nu: f64) -> Result<LikelihoodDerivatives> {
    check_inputs(y, f, nu)?;
    let n = y.len();
    let mut grad = LatentState::zeros(n);
    let mut w = Banded::zeros(n);
    let mut dw_df1 = Banded::zeros(n);
    let mut dw_df2 = Banded::zeros(n);
    let mut dw_dnu = Banded::zeros(n);
    let mut dgrad_dnu = LatentState::zeros(n);

    let a = (nu + 1.0) / nu;
    let nu2 = nu * nu;
    let c = log_normalizer(nu);
    let mut loglik = 0.0;
    // per-point part of ∂ log π / ∂ν that does not depend on z
    let dconst_dnu = 0.5 * digamma_half_diff(0.5 * nu) - 0.5 / nu;
    let mut dloglik_dnu = 0.0;

    for i in 0..n {
        let inv_s = (-f.f2[i]).exp();
        let z = (y[i] - f.f1[i]) * inv_s;
        let z2 = z * z;
        let u = 1.0 + z2 / nu;
        let log_u = (z2 / nu).ln_1p();
        let iu = 1.0 / u;
        let iu2 = iu * iu;
        let iu3 = iu2 * iu;

        loglik += c - f.f2[i] - 0.5 * (nu + 1.0) * log_u;
        dloglik_dnu += dconst_dnu - 0.5 * log_u + 0.5 * (nu + 1.0) * z2 / (nu2 * u);

        grad.f1[i] = a * z * inv_s * iu;
        grad.f2[i] = (z2 - 1.0) * iu;

        // phi(u) = 2/u² − 1/u and its u-derivative
        let phi = 2.0 * iu2 - iu;
        let dphi = -4.0 * iu3 + iu2;
        w.d11[i] = a * inv_s * inv_s * phi;
        w.d12[i] = 2.0 * a * z * inv_s * iu2;
        w.d22[i] = 2.0 * a * z2 * iu2;

        // derivatives of z/u² and z²/u² with respect to z
        let dz_over_u2 = iu2 - 4.0 * z2 / nu * iu3;
        let dz2_over_u2 = 2.0 * z * iu2 * (1.0 - 2.0 * z2 / (nu * u));

        dw_df1.d11[i] = a * inv_s.powi(3) * dphi * (2.0 * z / nu) * -1.0;
        dw_df1.d12[i] = -2.0 * a * inv_s * inv_s * dz_over_u2;
        dw_df1.d22[i] = -2.0 * a * inv_s * dz2_over_u2;

        dw_df2.d11[i] = a * inv_s * inv_s * (-2.0 * phi - dphi * 2.0 * z2 / nu);
        dw_df2.d12[i] = -2.0 * a * inv_s * (z * iu2 + z * dz_over_u2);
        dw_df2.d22[i] = -2.0 * a * z * dz2_over_u2;

        let du_dnu = -z2 / nu2;
        let da_dnu = -1.0 / nu2;
        dw_dnu.d11[i] = inv_s * inv_s * (da_dnu * phi + a * dphi * du_dnu);
        dw_dnu.d12[i] = 2.0 * z * inv_s * (da_dnu * iu2 - 2.0 * a * iu3 * du_dnu);
        dw_dnu.d22[i] = 2.0 * z2 * (da_dnu * iu2 - 2.0 * a * iu3 * du_dnu);

        dgrad_dnu.f1[i] = z * (z2 - 1.0) * inv_s / (nu2 * u * u);
        dgrad_dnu.f2[i] = (z2 * z2 - z2) / (nu2 * u * u);
    }

    Ok(LikelihoodDerivatives {
        loglik,
        grad,
        w,
        fisher: fisher_information(&f.f2, nu),
        dw_df1,
        dw_df2,
        dw_dnu,
        dgrad_dnu,
        dloglik_dnu,
    })
}

/// Moments of `Y | f1, f2, ν`; `None` where the moment does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseMoments {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

pub fn response_moments(f1: f64, f2: f64, nu: f64) -> ResponseMoments {
    ResponseMoments {
        mean: (nu > 1.0).then_some(f1),
        variance: (nu > 2.0).then(|| (2.0 * f2).exp() * nu / (nu - 2.0)),
    }
}
