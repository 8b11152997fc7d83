//! Laplace and Laplace-Fisher approximations of the latent posterior
//! `π(f | y, θ)`, their mode finders and approximate marginal likelihoods.

mod gradient;
mod site;

pub use gradient::log_marginal_gradient;
pub use site::{BandedSite, DiagonalSite, LatentPrior, Site};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{derivatives, log_likelihood_unchecked, LatentState, LikelihoodDerivatives};
use crate::params::HyperParams;

/// Iteration used to locate the posterior mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeMethod {
    NaturalGradient,
    Newton,
    StabilizedNewton,
}

/// Curvature used for the Gaussian approximation at the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    /// The observed negative Hessian `W`.
    HessianW,
    /// Its expectation `E[W]` (Fisher information).
    FisherEW,
}

/// Which approximate log marginal likelihood to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Q1,
    Q2,
}

impl Objective {
    pub fn curvature(self) -> Curvature {
        match self {
            Objective::Q1 => Curvature::HessianW,
            Objective::Q2 => Curvature::FisherEW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeFinderConfig {
    pub method: ModeMethod,
    pub max_iter: usize,
    /// Tolerance on `‖∇log L − K⁻¹f‖∞`.
    pub grad_tol: f64,
    pub step_halvings_max: usize,
    pub f1_init: f64,
    pub f2_init: f64,
    /// Scale each proposal by the step length that maximizes the quadratic
    /// model with the observed Hessian before backtracking; `false` starts
    /// every line search at the full step.
    pub curvature_step_length: bool,
}

impl Default for ModeFinderConfig {
    fn default() -> Self {
        ModeFinderConfig {
            method: ModeMethod::NaturalGradient,
            max_iter: 200,
            grad_tol: 1e-6,
            step_halvings_max: 30,
            f1_init: 0.0,
            f2_init: 3.0,
            curvature_step_length: true,
        }
    }
}

impl ModeFinderConfig {
    pub fn with_method(method: ModeMethod) -> Self {
        ModeFinderConfig {
            method,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("mode finder needs grad_tol > 0 and max_iter >= 1"));
        }
        if !self.f1_init.is_finite() || !self.f2_init.is_finite() {
            return Err(Error::invalid("non-finite initial latent value"));
        }
        Ok(())
    }
}

/// A full proposal from one iteration: the new latent values and
/// `alpha = K⁻¹ f_new`, obtained without a K-solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub f: LatentState,
    pub alpha: LatentState,
}

/// `(K⁻¹ + E[W])⁻¹ (E[W] f + ∇log L)`.
pub fn natural_gradient_step(f: &LatentState, derivs: &LikelihoodDerivatives, prior: &LatentPrior) -> Result<Step> {
    let c = &derivs.fisher;
    let site = DiagonalSite::new(prior, c.d1.clone(), c.d2.clone())?;
    diagonal_step(f, derivs, prior, &site)
}

/// Newton step `(K⁻¹ + W)⁻¹ (W f + ∇log L)`. The stabilized variant clamps the
/// diagonal of `W` at zero and drops its cross band.
pub fn newton_step(
    f: &LatentState,
    derivs: &LikelihoodDerivatives,
    prior: &LatentPrior,
    stabilized: bool,
) -> Result<Step> {
    if stabilized {
        let w = &derivs.w;
        let site = DiagonalSite::new(prior, w.d11.map(|v| v.max(0.0)), w.d22.map(|v| v.max(0.0)))?;
        return diagonal_step(f, derivs, prior, &site);
    }
    let site = BandedSite::new(prior, derivs.w.clone())?;
    let b = rhs(f, derivs, &site.w.apply(f));
    let f_new = site.solve_posterior(&b)?;
    let alpha = b.sub(&site.w.apply(&f_new));
    Ok(Step { f: f_new, alpha })
}

fn rhs(f: &LatentState, derivs: &LikelihoodDerivatives, cf: &LatentState) -> LatentState {
    debug_assert_eq!(f.len(), cf.len());
    LatentState {
        f1: &cf.f1 + &derivs.grad.f1,
        f2: &cf.f2 + &derivs.grad.f2,
    }
}

fn diagonal_step(
    f: &LatentState,
    derivs: &LikelihoodDerivatives,
    prior: &LatentPrior,
    site: &DiagonalSite,
) -> Result<Step> {
    let c = site.as_banded();
    let b = rhs(f, derivs, &c.apply(f));
    let f_new = site.solve_posterior(prior, &b);
    let alpha = b.sub(&c.apply(&f_new));
    if f_new.f1.iter().chain(f_new.f2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite latent update".into()));
    }
    Ok(Step { f: f_new, alpha })
}

/// Length along `step − f` that maximizes the local quadratic model
/// built from the observed curvature `W`, in `[MIN_STEP, MAX_STEP]`; a full
/// step when the model is not concave along the direction.
fn curvature_step_length(f: &LatentState, alpha: &LatentState, step: &Step, derivs: &LikelihoodDerivatives) -> f64 {
    const MIN_STEP: f64 = 0.05;
    const MAX_STEP: f64 = 4.0;
    let d = step.f.sub(f);
    let da = step.alpha.sub(alpha);
    let slope = d.dot(&derivs.grad.sub(alpha));
    // −φ''(0) = dᵀ W d + dᵀ K⁻¹ d
    let curv = d.dot(&derivs.w.apply(&d)) + d.dot(&da);
    if slope > 0.0 && curv > 0.0 && (slope / curv).is_finite() {
        (slope / curv).clamp(MIN_STEP, MAX_STEP)
    } else {
        1.0
    }
}

/// Converged posterior mode with its diagnostics.
#[derive(Debug, Clone)]
pub struct ModeFit {
    pub theta: HyperParams,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub prior: LatentPrior,
    pub mode: LatentState,
    /// `K⁻¹ f̂`.
    pub alpha: LatentState,
    pub derivs: LikelihoodDerivatives,
    pub method: ModeMethod,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// `log L − ½ fᵀK⁻¹f` after each accepted iterate (initial value first).
    pub objective_trace: Vec<f64>,
}

impl ModeFit {
    /// `Ψ(f̂) = log L(y | f̂) − ½ f̂ᵀ K⁻¹ f̂`.
    pub fn penalized_objective(&self) -> f64 {
        self.derivs.loglik - 0.5 * self.alpha.dot(&self.mode)
    }
}

fn penalized(y: &DVector<f64>, f: &LatentState, alpha: &LatentState, nu: f64) -> f64 {
    let v = log_likelihood_unchecked(y, f, nu) - 0.5 * alpha.dot(f);
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}

/// Locates `f̂ = argmax π(f | y, θ)` by the configured iteration with
/// backtracking step halving.
pub fn find_mode(y: &DVector<f64>, x: &DMatrix<f64>, theta: &HyperParams, cfg: &ModeFinderConfig) -> Result<ModeFit> {
    let init = LatentState::constant(y.len(), cfg.f1_init, cfg.f2_init);
    find_mode_from(y, x, theta, cfg, init)
}

/// [`find_mode`] started from `init` instead of the configured constants.
pub fn find_mode_from(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    theta: &HyperParams,
    cfg: &ModeFinderConfig,
    init: LatentState,
) -> Result<ModeFit> {
    cfg.validate()?;
    let n = y.len();
    if init.len() != n {
        return Err(Error::dim("initial latent state does not match the data"));
    }
    if n == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    if x.nrows() != n {
        return Err(Error::dim(format!("X has {} rows, y has {}", x.nrows(), n)));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite response"));
    }
    let prior = LatentPrior::new(x, theta)?;
    let nu = theta.nu();

    let mut f = init;
    let mut alpha = prior.solve(&f);
    let mut derivs = derivatives(y, &f, nu)?;
    let mut psi = penalized(y, &f, &alpha, nu);
    let mut trace = vec![psi];

    let mut iterations = 0;
    loop {
        let grad_norm = derivs.grad.sub(&alpha).max_abs();
        if grad_norm <= cfg.grad_tol {
            return Ok(ModeFit {
                theta: theta.clone(),
                x: x.clone(),
                y: y.clone(),
                prior,
                mode: f,
                alpha,
                derivs,
                method: cfg.method,
                iterations,
                final_grad_norm: grad_norm,
                objective_trace: trace,
            });
        }
        let fail = |reason: &str| Error::NoConvergence {
            iterations,
            grad_norm,
            objective: psi,
            reason: reason.into(),
        };
        if iterations >= cfg.max_iter {
            return Err(fail("iteration limit reached"));
        }

        let step = match cfg.method {
            ModeMethod::NaturalGradient => natural_gradient_step(&f, &derivs, &prior)?,
            ModeMethod::Newton => newton_step(&f, &derivs, &prior, false)?,
            ModeMethod::StabilizedNewton => newton_step(&f, &derivs, &prior, true)?,
        };

        // accept if not worse than the current value up to rounding
        let slack = 1e-12 * (1.0 + psi.abs());
        let mut t = if cfg.curvature_step_length {
            curvature_step_length(&f, &alpha, &step, &derivs)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=cfg.step_halvings_max {
            let ft = f.lerp(&step.f, t);
            let at = alpha.lerp(&step.alpha, t);
            let value = penalized(y, &ft, &at, nu);
            if value >= psi - slack {
                accepted = Some((ft, at, value));
                break;
            }
            t *= 0.5;
        }
        let Some((ft, at, value)) = accepted else {
            return Err(fail("step halving could not improve the objective"));
        };
        f = ft;
        alpha = at;
        psi = value;
        trace.push(value);
        derivs = derivatives(y, &f, nu)?;
        iterations += 1;
    }
}

/// A Gaussian approximation at the mode together with its approximate log
/// marginal likelihood (q1 for the Hessian, q2 for the Fisher variant).
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub mode_fit: ModeFit,
    pub curvature: Curvature,
    pub site: Site,
    pub log_marginal: f64,
}

impl LaplaceFit {
    pub fn from_mode(mode_fit: ModeFit, curvature: Curvature) -> Result<Self> {
        let psi = mode_fit.penalized_objective();
        let (site, log_marginal) = match curvature {
            Curvature::FisherEW => {
                let c = &mode_fit.derivs.fisher;
                let site = DiagonalSite::new(&mode_fit.prior, c.d1.clone(), c.d2.clone())?;
                let q = psi - 0.5 * site.logdet();
                (Site::Diagonal(site), q)
            }
            Curvature::HessianW => {
                let site = BandedSite::new(&mode_fit.prior, mode_fit.derivs.w.clone())?;
                let (sign, log_abs_det) = site.signed_logdet();
                if !(sign > 0.0) || !log_abs_det.is_finite() {
                    return Err(Error::IndefiniteDeterminant { sign, log_abs_det });
                }
                (Site::Banded(site), psi - 0.5 * log_abs_det)
            }
        };
        if !log_marginal.is_finite() {
            return Err(Error::Numerical("non-finite approximate log marginal likelihood".into()));
        }
        Ok(LaplaceFit {
            mode_fit,
            curvature,
            site,
            log_marginal,
        })
    }

    pub fn theta(&self) -> &HyperParams {
        &self.mode_fit.theta
    }

    pub fn mode(&self) -> &LatentState {
        &self.mode_fit.mode
    }

    pub fn prior(&self) -> &LatentPrior {
        &self.mode_fit.prior
    }

    pub fn grad_loglik_at_mode(&self) -> &LatentState {
        &self.mode_fit.derivs.grad
    }

    pub fn iterations(&self) -> usize {
        self.mode_fit.iterations
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.mode_fit.final_grad_norm
    }

    /// Matrix-free product with the approximate posterior covariance
    /// `(K⁻¹ + C)⁻¹`.
    pub fn covariance_apply(&self, v: &LatentState) -> Result<LatentState> {
        match &self.site {
            Site::Diagonal(s) => Ok(s.solve_posterior(self.prior(), v)),
            Site::Banded(s) => {
                if !s.is_positive_definite() {
                    return Err(Error::IndefinitePosterior);
                }
                s.solve_posterior(v)
            }
        }
    }
}

/// Mode search followed by the Gaussian approximation with `curvature`.
pub fn fit_laplace(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    theta: &HyperParams,
    cfg: &ModeFinderConfig,
    curvature: Curvature,
) -> Result<LaplaceFit> {
    LaplaceFit::from_mode(find_mode(y, x, theta, cfg)?, curvature)
}

/// Mean and marginal moments of the approximate posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacePosterior {
    pub mean: LatentState,
    pub variances: LatentState,
    /// `Cov(f1_i, f2_i)`, identically zero for the Fisher variant.
    pub cross_covariances: DVector<f64>,
}

/// Marginal moments of `N(f̂, (K⁻¹ + C)⁻¹)`. Fails for the Hessian variant
/// when `K⁻¹ + W` is not positive definite.
pub fn laplace_posterior(fit: &LaplaceFit) -> Result<LaplacePosterior> {
    let n = fit.mode().len();
    match &fit.site {
        Site::Diagonal(s) => Ok(LaplacePosterior {
            mean: fit.mode().clone(),
            variances: s.marginal_variances(fit.prior()),
            cross_covariances: DVector::zeros(n),
        }),
        Site::Banded(s) => {
            let cov = s.covariance()?;
            let variances = LatentState {
                f1: DVector::from_fn(n, |i, _| cov[(i, i)]),
                f2: DVector::from_fn(n, |i, _| cov[(n + i, n + i)]),
            };
            if variances.f1.iter().chain(variances.f2.iter()).any(|v| !(*v >= 0.0)) {
                return Err(Error::IndefinitePosterior);
            }
            Ok(LaplacePosterior {
                mean: fit.mode().clone(),
                variances,
                cross_covariances: DVector::from_fn(n, |i, _| cov[(i, n + i)]),
            })
        }
    }
}

/// q1 of a Hessian-curvature fit.
pub fn log_marginal_q1(fit: &LaplaceFit) -> Result<f64> {
    match fit.curvature {
        Curvature::HessianW => Ok(fit.log_marginal),
        Curvature::FisherEW => Err(Error::invalid("q1 requires a fit with Hessian curvature")),
    }
}

/// q2 of a Fisher-curvature fit.
pub fn log_marginal_q2(fit: &LaplaceFit) -> Result<f64> {
    match fit.curvature {
        Curvature::FisherEW => Ok(fit.log_marginal),
        Curvature::HessianW => Err(Error::invalid("q2 requires a fit with Fisher curvature")),
    }
}

/// Approximate log marginal likelihood at θ, re-running the mode search.
pub fn log_marginal(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    theta: &HyperParams,
    cfg: &ModeFinderConfig,
    objective: Objective,
) -> Result<f64> {
    Ok(fit_laplace(y, x, theta, cfg, objective.curvature())?.log_marginal)
}
