//! Weibull model in its common shape/rate parametrization and in the
//! orthogonal one, where the Fisher information is diagonal.
//!
//! Common: `π(y | α1, α2) = α1 α2 (α2 y)^(α1−1) exp(−(α2 y)^α1)`.
//! Orthogonal: `η1 = log α1`, `η2 = log α2 / c − 1/α1` with `c = 1 + ψ(1)`.

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::digamma;

/// `c = 1 + ψ(1) = 1 − γ`.
pub fn orthogonal_constant() -> f64 {
    1.0 + digamma(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// `(α1, α2)`, shape and rate.
    Common,
    /// `(η1, η2)`.
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl WeibullParams {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha2 > 0.0 && alpha1.is_finite() && alpha2.is_finite()) {
            return Err(Error::invalid(format!("Weibull parameters must be positive, got ({alpha1}, {alpha2})")));
        }
        Ok(Self { alpha1, alpha2 })
    }

    pub fn from_orthogonal(eta1: f64, eta2: f64) -> Result<Self> {
        let (a1, a2) = from_orthogonal(eta1, eta2);
        Self::new(a1, a2)
    }

    pub fn orthogonal(&self) -> (f64, f64) {
        let c = orthogonal_constant();
        (self.alpha1.ln(), self.alpha2.ln() / c - 1.0 / self.alpha1)
    }

    /// Coordinates of these parameters in `coords`.
    pub fn coords(&self, coords: Parametrization) -> [f64; 2] {
        match coords {
            Parametrization::Common => [self.alpha1, self.alpha2],
            Parametrization::Orthogonal => {
                let (e1, e2) = self.orthogonal();
                [e1, e2]
            }
        }
    }

    pub fn from_coords(v: [f64; 2], coords: Parametrization) -> Result<Self> {
        match coords {
            Parametrization::Common => Self::new(v[0], v[1]),
            Parametrization::Orthogonal => Self::from_orthogonal(v[0], v[1]),
        }
    }

    /// `n` draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rand_distr::Weibull::new(1.0 / self.alpha2, self.alpha1).expect("validated parameters");
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }
}

pub fn to_orthogonal(alpha1: f64, alpha2: f64) -> Result<(f64, f64)> {
    Ok(WeibullParams::new(alpha1, alpha2)?.orthogonal())
}

/// `α1 = exp(η1)`, `α2 = exp(c e^(−η1) + c η2)`.
pub fn from_orthogonal(eta1: f64, eta2: f64) -> (f64, f64) {
    let c = orthogonal_constant();
    (eta1.exp(), (c * (-eta1).exp() + c * eta2).exp())
}

pub fn logpdf_common(y: f64, alpha1: f64, alpha2: f64) -> Result<f64> {
    WeibullParams::new(alpha1, alpha2)?;
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::invalid(format!("Weibull support is (0, ∞), got y = {y}")));
    }
    let l = (alpha2 * y).ln();
    Ok(alpha1.ln() + alpha2.ln() + (alpha1 - 1.0) * l - (alpha1 * l).exp())
}

pub fn logpdf_orthogonal(y: f64, eta1: f64, eta2: f64) -> Result<f64> {
    let (a1, a2) = from_orthogonal(eta1, eta2);
    logpdf_common(y, a1, a2)
}

/// Log-likelihood of `data`, `−∞` outside the parameter domain.
pub fn log_likelihood(data: &[f64], coords: Parametrization, v: [f64; 2]) -> f64 {
    let Ok(p) = WeibullParams::from_coords(v, coords) else {
        return f64::NEG_INFINITY;
    };
    data.iter()
        .map(|&y| logpdf_common(y, p.alpha1, p.alpha2).unwrap_or(f64::NEG_INFINITY))
        .sum()
}

/// `−∇² log π(y | ·)` at `v`, as `[h11, h12, h22]`.
pub fn neg_hessian(y: f64, coords: Parametrization, v: [f64; 2]) -> [f64; 3] {
    match coords {
        Parametrization::Common => {
            let (k, lam) = (v[0], v[1]);
            let l = (lam * y).ln();
            let t = (k * l).exp();
            [1.0 / (k * k) + l * l * t, -(1.0 - t - k * l * t) / lam, k * (1.0 - t + k * t) / (lam * lam)]
        }
        Parametrization::Orthogonal => {
            // log π = η1 + u − e^u − log y with u = c + k(c η2 + log y)
            let c = orthogonal_constant();
            let k = v[0].exp();
            let u1 = k * (c * v[1] + y.ln());
            let t = (c + u1).exp();
            [-u1 * (1.0 - t) + u1 * u1 * t, -k * c * (1.0 - t) + u1 * k * c * t, k * k * c * c * t]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherCheck {
    /// `Î12 / √(Î11 Î22)`.
    pub normalized: f64,
    pub std_error: f64,
    /// Monte Carlo Fisher information `[I11, I12, I22]`.
    pub info: [f64; 3],
    pub samples: usize,
}

/// Monte Carlo normalized off-diagonal of `E[−∇² log π]` from per-draw
/// negative Hessians `[h11, h12, h22]`.
pub fn monte_carlo_offdiagonal(n_samples: usize, mut neg_hessian_draw: impl FnMut() -> [f64; 3]) -> Result<FisherCheck> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least two Monte Carlo samples"));
    }
    let (mut s, mut s2) = ([0.0f64; 3], 0.0f64);
    for _ in 0..n_samples {
        let h = neg_hessian_draw();
        s.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        s2 += h[1] * h[1];
    }
    let n = n_samples as f64;
    let info = s.map(|v| v / n);
    if !(info[0] > 0.0 && info[2] > 0.0) {
        return Err(Error::Numerical(format!("Monte Carlo information is not positive: {info:?}")));
    }
    let scale = (info[0] * info[2]).sqrt();
    let var12 = (s2 / n - info[1] * info[1]) * n / (n - 1.0);
    Ok(FisherCheck {
        normalized: info[1] / scale,
        std_error: (var12 / n).sqrt() / scale,
        info,
        samples: n_samples,
    })
}

/// Orthogonality check at `params`, measured in `coords`.
pub fn fisher_offdiagonal_check(params: &WeibullParams, coords: Parametrization, n_samples: usize, seed: u64) -> Result<FisherCheck> {
    if n_samples < 100_000 {
        return Err(Error::invalid(format!("need at least 1e5 samples, got {n_samples}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rand_distr::Weibull::new(1.0 / params.alpha2, params.alpha1).expect("validated parameters");
    let v = params.coords(coords);
    monte_carlo_offdiagonal(n_samples, || neg_hessian(d.sample(&mut rng), coords, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Newton2dConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Relative step of the central-difference gradient.
    pub grad_step: f64,
    /// Relative step of the finite-difference Hessian.
    pub hess_step: f64,
}

impl Default for Newton2dConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-7,
            grad_step: 1e-5,
            hess_step: 1e-4,
        }
    }
}

/// Gaussian approximation at the maximizer of a 2-D log density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Laplace2d {
    pub mode: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub log_density: f64,
    pub iterations: usize,
}

impl Laplace2d {
    pub fn correlation(&self) -> f64 {
        self.cov[0][1] / (self.cov[0][0] * self.cov[1][1]).sqrt()
    }

    fn precision(&self) -> Matrix2<f64> {
        let c = self.cov;
        Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]).try_inverse().expect("positive definite")
    }
}

fn fd_gradient(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], rel: f64) -> Vector2<f64> {
    Vector2::from_fn(|i, _| {
        let h = rel * x[i].abs().max(1.0);
        let (mut a, mut b) = (x, x);
        a[i] += h;
        b[i] -= h;
        (f(a) - f(b)) / (2.0 * h)
    })
}

fn fd_hessian(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], rel: f64) -> Matrix2<f64> {
    let h = [rel * x[0].abs().max(1.0), rel * x[1].abs().max(1.0)];
    let at = |d0: f64, d1: f64| f([x[0] + d0 * h[0], x[1] + d1 * h[1]]);
    let f0 = f(x);
    let h00 = (at(1.0, 0.0) - 2.0 * f0 + at(-1.0, 0.0)) / (h[0] * h[0]);
    let h11 = (at(0.0, 1.0) - 2.0 * f0 + at(0.0, -1.0)) / (h[1] * h[1]);
    let h01 = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[0] * h[1]);
    Matrix2::new(h00, h01, h01, h11)
}

/// Damped Newton with finite-difference derivatives; the covariance is the
/// inverse negative Hessian at the returned mode. Points where `log_density`
/// is not finite are rejected by the line search.
pub fn laplace_fit_2d(log_density: impl Fn([f64; 2]) -> f64, init: [f64; 2], cfg: &Newton2dConfig) -> Result<Laplace2d> {
    let mut x = init;
    let mut fx = log_density(x);
    if !fx.is_finite() {
        return Err(Error::invalid(format!("log density is not finite at the start {init:?}")));
    }
    let mut iterations = 0;
    loop {
        let g = fd_gradient(&log_density, x, cfg.grad_step);
        let gnorm = g.amax();
        if gnorm <= cfg.grad_tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: gnorm,
                objective: fx,
                reason: "iteration limit reached".into(),
            });
        }
        // shift the Hessian until it is negative definite
        let h = fd_hessian(&log_density, x, cfg.hess_step);
        let top = h.symmetric_eigenvalues().max();
        let shift = if top < 0.0 { 0.0 } else { top + 1e-3 * (1.0 + h.amax()) };
        let neg = -(h - Matrix2::identity() * shift);
        let d = neg.cholesky().ok_or_else(|| Error::Numerical("damped Hessian is singular".into()))?.solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let xn = [x[0] + t * d[0], x[1] + t * d[1]];
            let fnew = log_density(xn);
            if fnew.is_finite() && fnew >= fx - 1e-12 * (1.0 + fx.abs()) {
                accepted = true;
                let moved = (xn[0] - x[0]).abs().max((xn[1] - x[1]).abs());
                x = xn;
                fx = fnew;
                if moved <= 1e-14 * (1.0 + x[0].abs().max(x[1].abs())) {
                    iterations += 1;
                    return finish(&log_density, x, fx, iterations, cfg);
                }
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: gnorm,
                objective: fx,
                reason: "step halving could not improve the objective".into(),
            });
        }
    }
    finish(&log_density, x, fx, iterations, cfg)
}

fn finish(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], fx: f64, iterations: usize, cfg: &Newton2dConfig) -> Result<Laplace2d> {
    let neg = -fd_hessian(f, x, cfg.hess_step);
    let cov = neg
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("Hessian is not negative definite at {x:?}")))?
        .inverse();
    Ok(Laplace2d {
        mode: x,
        cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        log_density: fx,
        iterations,
    })
}

/// Log density on a regular grid spanning `mode ± half_width` marginal sds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
    /// `values[i][j]` at `(axis0[i], axis1[j])`, relative to the mode.
    pub values: Vec<Vec<f64>>,
    /// The Laplace log density on the same grid, relative to the mode.
    pub laplace: Vec<Vec<f64>>,
}

pub fn surface(f: impl Fn([f64; 2]) -> f64, fit: &Laplace2d, half_width: f64, points: usize) -> Surface {
    let axis = |i: usize| -> Vec<f64> {
        let sd = fit.cov[i][i].sqrt();
        (0..points)
            .map(|k| fit.mode[i] + half_width * sd * (2.0 * k as f64 / (points - 1).max(1) as f64 - 1.0))
            .collect()
    };
    let (axis0, axis1) = (axis(0), axis(1));
    let prec = fit.precision();
    let quad = |a: f64, b: f64| {
        let d = Vector2::new(a - fit.mode[0], b - fit.mode[1]);
        -0.5 * (d.transpose() * prec * d)[(0, 0)]
    };
    let values = axis0.iter().map(|&a| axis1.iter().map(|&b| f([a, b]) - fit.log_density).collect()).collect();
    let laplace = axis0.iter().map(|&a| axis1.iter().map(|&b| quad(a, b)).collect()).collect();
    Surface {
        axis0,
        axis1,
        values,
        laplace,
    }
}

impl Surface {
    /// Largest `|log p − log q|` over grid points whose Laplace log density
    /// is at least `−radius²/2`, i.e. inside the `radius`-sd ellipse.
    pub fn max_gap(&self, radius: f64) -> f64 {
        let cut = -0.5 * radius * radius;
        self.values
            .iter()
            .flatten()
            .zip(self.laplace.iter().flatten())
            .filter(|(_, q)| **q >= cut)
            .map(|(p, q)| if p.is_finite() { (p - q).abs() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoFit {
    pub parametrization: Parametrization,
    pub fit: Laplace2d,
    pub correlation: f64,
    /// [`Surface::max_gap`] within two sds; infinite (`null` in JSON) when
    /// that ellipse leaves the parameter domain.
    pub gaussian_gap: f64,
    pub surface: Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoCase {
    pub n: usize,
    pub data: Vec<f64>,
    pub fits: Vec<DemoFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub truth: WeibullParams,
    pub seed: u64,
    pub cases: Vec<DemoCase>,
}

/// Flat-prior Laplace fits of Weibull samples in both parametrizations.
pub fn demo(truth: &WeibullParams, sizes: &[usize], seed: u64, grid_points: usize) -> Result<DemoReport> {
    let mut cases = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        if n < 2 {
            return Err(Error::invalid(format!("sample size must be at least 2, got {n}")));
        }
        let data = truth.sample(n, seed.wrapping_add(i as u64));
        let mut fits = Vec::with_capacity(2);
        for coords in [Parametrization::Common, Parametrization::Orthogonal] {
            let f = |v: [f64; 2]| log_likelihood(&data, coords, v);
            let fit = laplace_fit_2d(f, truth.coords(coords), &Newton2dConfig::default())?;
            let surface = surface(f, &fit, 3.0, grid_points);
            fits.push(DemoFit {
                parametrization: coords,
                correlation: fit.correlation(),
                gaussian_gap: surface.max_gap(2.0),
                fit,
                surface,
            });
        }
        cases.push(DemoCase { n, data, fits });
    }
    Ok(DemoReport {
        truth: *truth,
        seed,
        cases,
    })
}
