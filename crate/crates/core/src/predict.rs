//! Posterior predictive distribution at new inputs, the predictive density
//! of a test response and the R1 / R2 / P evaluation statistics.

use gauss_quad::hermite::GaussHermite;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::covariance_matrix;
use crate::laplace::{LaplaceFit, Site};
use crate::likelihood::{log_normalizer, point_log_density, response_moments};

/// Default Gauss–Hermite nodes per latent dimension.
pub const DEFAULT_GH_NODES: usize = 31;

/// Predictive summary at one test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mu1: f64,
    pub mu2: f64,
    pub var1: f64,
    pub var2: f64,
    pub cov12: f64,
    /// `E[Y*]`, absent for ν ≤ 1.
    pub resp_mean: Option<f64>,
    /// `V[Y*]`, absent for ν ≤ 2.
    pub resp_var: Option<f64>,
    pub log_pred_density: Option<f64>,
}

/// Unconditional mean and variance of `Y*` given the latent predictive
/// moments: `μ1` for ν > 1 and `σ1² + ν/(ν−2)·exp(2μ2 + 2σ2²)` for ν > 2.
pub fn predict_response(summary: &PredictiveSummary, nu: f64) -> (Option<f64>, Option<f64>) {
    let m = response_moments(summary.mu1, summary.mu2, nu);
    let var = m
        .variance
        .map(|_| summary.var1 + nu / (nu - 2.0) * (2.0 * summary.mu2 + 2.0 * summary.var2).exp());
    (m.mean, var)
}

/// Latent predictive moments (and the implied response moments) at each
/// row of `x_star`.
pub fn predict_latent(fit: &LaplaceFit, x_star: &DMatrix<f64>) -> Result<Vec<PredictiveSummary>> {
    let prior = fit.prior();
    let x = &fit.mode_fit.x;
    if x_star.ncols() != x.ncols() {
        return Err(Error::dim(format!(
            "test inputs have {} columns, training inputs have {}",
            x_star.ncols(),
            x.ncols()
        )));
    }
    let nu = fit.theta().nu();
    let grad = fit.grad_loglik_at_mode();
    // n × m cross-covariances
    let k1s = covariance_matrix(&prior.spec1, x, Some(x_star))?;
    let k2s = covariance_matrix(&prior.spec2, x, Some(x_star))?;
    let k1ss = prior.spec1.signal_variance;
    let k2ss = prior.spec2.signal_variance;

    let mut out = Vec::with_capacity(x_star.nrows());
    for j in 0..x_star.nrows() {
        let k1 = k1s.column(j).into_owned();
        let k2 = k2s.column(j).into_owned();
        let mu1 = k1.dot(&grad.f1);
        let mu2 = k2.dot(&grad.f2);
        let (var1, var2, cov12) = match &fit.site {
            Site::Diagonal(s) => (
                s.predictive_variance(1, &k1, k1ss).max(0.0),
                s.predictive_variance(2, &k2, k2ss).max(0.0),
                0.0,
            ),
            Site::Banded(s) => {
                let (v1, v2, c) = s.predictive_covariance(&k1, &k2, k1ss, k2ss)?;
                if v1 < -1e-10 * k1ss || v2 < -1e-10 * k2ss {
                    return Err(Error::IndefinitePosterior);
                }
                let (v1, v2) = (v1.max(0.0), v2.max(0.0));
                (v1, v2, c.clamp(-(v1 * v2).sqrt(), (v1 * v2).sqrt()))
            }
        };
        let mut s = PredictiveSummary {
            mu1,
            mu2,
            var1,
            var2,
            cov12,
            resp_mean: None,
            resp_var: None,
            log_pred_density: None,
        };
        (s.resp_mean, s.resp_var) = predict_response(&s, nu);
        out.push(s);
    }
    Ok(out)
}

/// Quadrature settings for the predictive density.
///
/// The density is computed as an outer Gauss–Hermite rule over `f2`,
/// centred at the mode of the `f2` integrand and scaled by its curvature,
/// of an inner double-exponential integral over `f1 | f2`. The inner
/// interval is split at `y*`, where the Student-t kernel peaks; a plain
/// tensor Gauss–Hermite grid cannot resolve that peak once `exp(f2)` is
/// small against the predictive spread of `f1`.
#[derive(Debug, Clone)]
pub struct PredictiveQuadrature {
    /// Hermite abscissae with `log w + x²`, ready for a shifted rule.
    nodes: Vec<(f64, f64)>,
    /// Relative accuracy target of the inner integral.
    pub inner_tol: f64,
}

impl PredictiveQuadrature {
    pub fn new(nodes_per_dim: usize) -> Result<Self> {
        let gh = GaussHermite::new(nodes_per_dim)
            .map_err(|e| Error::invalid(format!("Gauss-Hermite rule: {e}")))?;
        let nodes = gh
            .into_node_weight_pairs()
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(x, w)| (x, w.ln() + x * x))
            .collect();
        Ok(PredictiveQuadrature { nodes, inner_tol: 1e-11 })
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes.len()
    }

    /// `log ∫ exp(h(t)) dt` by the rule centred at `center` with scale `tau`.
    fn shifted(&self, center: f64, tau: f64, h: impl Fn(f64) -> f64) -> f64 {
        let c = (std::f64::consts::SQRT_2 * tau).ln();
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .map(|&(x, lw)| lw + c + h(center + std::f64::consts::SQRT_2 * tau * x))
            .collect();
        log_sum_exp(&terms)
    }
}

impl Default for PredictiveQuadrature {
    fn default() -> Self {
        PredictiveQuadrature::new(DEFAULT_GH_NODES).expect("default rule is valid")
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + (2.0 * std::f64::consts::PI * var).ln())
}

/// Joint integrand `S(y | f1, exp(f2), ν) N(f | μ, Σ)` factored as
/// `N(f2) × N(f1 | f2) × S`.
struct Integrand<'a> {
    y: f64,
    nu: f64,
    log_c: f64,
    s: &'a PredictiveSummary,
    slope: f64,
    cond_var: f64,
    quad: &'a PredictiveQuadrature,
}

impl Integrand<'_> {
    fn log_t(&self, f1: f64, f2: f64) -> f64 {
        let z = (self.y - f1) * (-f2).exp();
        self.log_c - f2 - 0.5 * (self.nu + 1.0) * (z * z / self.nu).ln_1p()
    }

    /// `log ∫ S(y | f1, exp(f2)) N(f1 | m(f2), v_c) df1`.
    fn log_inner(&self, f2: f64) -> f64 {
        let m = self.s.mu1 + self.slope * (f2 - self.s.mu2);
        let scale = f2.exp();
        if self.cond_var <= 1e-14 * scale * scale {
            return self.log_t(m, f2);
        }
        let sd = self.cond_var.sqrt();
        let g = |f1: f64| self.log_t(f1, f2) + log_normal(f1, m, self.cond_var);
        let (lo, hi) = (m - 12.0 * sd, m + 12.0 * sd);
        let mut cuts = vec![lo, hi];
        if (self.y - m).abs() < 40.0 * sd {
            cuts.push(self.y);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let reference = g(m).max(g(self.y.clamp(cuts[0], cuts[cuts.len() - 1])));
        let target = self.quad.inner_tol * sd.min(scale) * 1e-2;
        let total: f64 = cuts
            .windows(2)
            .map(|w| quadrature::integrate(|f1| (g(f1) - reference).exp(), w[0], w[1], target).integral)
            .sum();
        reference + total.ln()
    }

    fn log_outer(&self, f2: f64) -> f64 {
        self.log_inner(f2) + log_normal(f2, self.s.mu2, self.s.var2)
    }
}

/// `log ∫∫ S(y* | f1, exp(f2), ν) N(f | μ*, Σ*) df`.
pub fn log_predictive_density(
    summary: &PredictiveSummary,
    nu: f64,
    y_star: f64,
    quad: &PredictiveQuadrature,
) -> Result<f64> {
    let s = summary;
    if !(nu > 0.0) || !y_star.is_finite() {
        return Err(Error::invalid("log predictive density needs ν > 0 and a finite response"));
    }
    if s.var1 == 0.0 && s.var2 == 0.0 {
        return Ok(point_log_density(y_star, s.mu1, s.mu2, nu));
    }
    let slope = if s.var2 > 0.0 { s.cov12 / s.var2 } else { 0.0 };
    let it = Integrand {
        y: y_star,
        nu,
        log_c: log_normalizer(nu),
        s,
        slope,
        cond_var: (s.var1 - slope * s.cov12).max(0.0),
        quad,
    };
    let value = if s.var2 <= 0.0 {
        it.log_inner(s.mu2)
    } else {
        let sd2 = s.var2.sqrt();
        // coarse scan, then golden-section refinement of the f2 mode
        let (mut best, mut best_h) = (s.mu2, f64::NEG_INFINITY);
        for k in -16..=16 {
            let t = s.mu2 + 0.5 * k as f64 * sd2;
            let h = it.log_outer(t);
            if h > best_h {
                best = t;
                best_h = h;
            }
        }
        let (mut a, mut b) = (best - 0.5 * sd2, best + 0.5 * sd2);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
        let (mut hc, mut hd) = (it.log_outer(c), it.log_outer(d));
        for _ in 0..40 {
            if hc > hd {
                b = d;
                d = c;
                hd = hc;
                c = b - r * (b - a);
                hc = it.log_outer(c);
            } else {
                a = c;
                c = d;
                hc = hd;
                d = a + r * (b - a);
                hd = it.log_outer(d);
            }
        }
        let mode = 0.5 * (a + b);
        let delta = 1e-3 * sd2;
        let curv = (it.log_outer(mode + delta) - 2.0 * it.log_outer(mode) + it.log_outer(mode - delta)) / (delta * delta);
        let tau = if curv < 0.0 && curv.is_finite() { (-curv).sqrt().recip() } else { sd2 };
        quad.shifted(mode, tau, |f2| it.log_outer(f2))
    };
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "predictive density quadrature is not finite (μ = ({}, {}), var = ({}, {}), y* = {y_star})",
            s.mu1, s.mu2, s.var1, s.var2
        )));
    }
    Ok(value)
}

/// Test-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean absolute error of the predictive mean.
    pub r1: f64,
    /// Root mean squared error of the predictive mean.
    pub r2: f64,
    /// Summed log predictive density.
    pub p_stat: f64,
    pub per_point: Vec<PredictiveSummary>,
}

/// `(R1, R2)` of `means` against `y`.
pub fn error_metrics(y: &[f64], means: &[f64]) -> Result<(f64, f64)> {
    if y.len() != means.len() || y.is_empty() {
        return Err(Error::dim("metrics need equally long, non-empty arrays"));
    }
    let n = y.len() as f64;
    let r1 = y.iter().zip(means).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let r2 = (y.iter().zip(means).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
    Ok((r1, r2))
}

pub fn evaluate(
    fit: &LaplaceFit,
    x_test: &DMatrix<f64>,
    y_test: &DVector<f64>,
    quad: &PredictiveQuadrature,
) -> Result<EvalReport> {
    if x_test.nrows() != y_test.len() {
        return Err(Error::dim(format!("X_test has {} rows, y_test has {}", x_test.nrows(), y_test.len())));
    }
    let nu = fit.theta().nu();
    if nu <= 1.0 {
        return Err(Error::invalid(format!("predictive mean undefined for ν = {nu} ≤ 1")));
    }
    let mut summaries = predict_latent(fit, x_test)?;
    let mut p_stat = 0.0;
    for (s, y) in summaries.iter_mut().zip(y_test.iter()) {
        let lp = log_predictive_density(s, nu, *y, quad)?;
        s.log_pred_density = Some(lp);
        p_stat += lp;
    }
    let means: Vec<f64> = summaries.iter().map(|s| s.resp_mean.expect("ν > 1")).collect();
    let (r1, r2) = error_metrics(y_test.as_slice(), &means)?;
    Ok(EvalReport {
        r1,
        r2,
        p_stat,
        per_point: summaries,
    })
}
