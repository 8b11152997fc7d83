//! Independent oracles shared by the integration tests: dense linear algebra
//! on the stacked 2n×2n system, finite differences and brute-force
//! quadrature.

#![allow(dead_code)]

use hetgp::kernel::covariance_matrix;
use hetgp::likelihood::{derivatives, fisher_information, log_likelihood, point_log_density, Banded, LatentState, LikelihoodDerivatives};
use hetgp::laplace::{find_mode, find_mode_from, Curvature, LaplaceFit, ModeFinderConfig, ModeMethod};
use hetgp::HyperParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a − b| / max(1, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn dense_banded(b: &Banded) -> DMatrix<f64> {
    let n = b.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = b.d11[i];
        m[(n + i, n + i)] = b.d22[i];
        m[(i, n + i)] = b.d12[i];
        m[(n + i, i)] = b.d12[i];
    }
    m
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (n, n)).copy_from(b);
    m
}

/// Dense `K = diag(K1, K2)` with the same jitter the library uses.
pub fn dense_prior(x: &DMatrix<f64>, theta: &HyperParams) -> DMatrix<f64> {
    let k1 = covariance_matrix(&theta.kernel1().unwrap(), x, None).unwrap();
    let k2 = covariance_matrix(&theta.kernel2().unwrap(), x, None).unwrap();
    block_diag(&k1, &k2)
}

pub fn lu_logdet(m: &DMatrix<f64>) -> (f64, f64) {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign = lu.p().determinant::<f64>();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        sign *= u[(i, i)].signum();
        acc += u[(i, i)].abs().ln();
    }
    (sign, acc)
}

pub fn stacked(v: &LatentState) -> DVector<f64> {
    v.stacked()
}

pub fn grid_1d(n_x: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_x, 1, |i, _| -2.0 + 4.0 * i as f64 / (n_x.max(2) - 1) as f64)
}

/// Random univariate instance with a few gross outliers.
pub fn random_instance(seed: u64, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| r.random_range(-2.0..2.0));
    let y = DVector::from_fn(n, |i, _| {
        let base = (1.3 * x[(i, 0)]).sin() + 0.3 * r.random_range(-1.0..1.0);
        if r.random_bool(0.1) {
            base + r.random_range(-6.0..6.0)
        } else {
            base
        }
    });
    (y, x)
}

pub fn random_theta(r: &mut ChaCha8Rng, p: usize) -> HyperParams {
    let ell1: Vec<f64> = (0..p).map(|_| r.random_range(0.5..1.5)).collect();
    let ell2: Vec<f64> = (0..p).map(|_| r.random_range(0.5..1.5)).collect();
    HyperParams::from_natural(
        r.random_range(2.0..10.0),
        r.random_range(0.5..2.0),
        &ell1,
        r.random_range(0.1..0.6),
        &ell2,
    )
    .unwrap()
}

/// Log joint `log L(y|f) + log N(f | 0, K)` for the stacked latent vector.
pub fn log_joint(y: &DVector<f64>, f: &DVector<f64>, kinv: &DMatrix<f64>, logdet_k: f64, nu: f64) -> f64 {
    let n = y.len();
    let state = LatentState::from_stacked(f);
    log_likelihood(y, &state, nu).unwrap()
        - 0.5 * f.dot(&(kinv * f))
        - 0.5 * logdet_k
        - n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Log density of one observation, for scalar oracles.
pub fn point(y: f64, f1: f64, f2: f64, nu: f64) -> f64 {
    point_log_density(y, f1, f2, nu)
}

pub fn derivs_at(y: &DVector<f64>, f: &LatentState, nu: f64) -> LikelihoodDerivatives {
    derivatives(y, f, nu).unwrap()
}

/// Composite Simpson weights on `m` (odd) equally spaced points over `[a, b]`.
pub fn simpson(a: f64, b: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m % 2 == 1 && m >= 3);
    let h = (b - a) / (m - 1) as f64;
    let nodes = (0..m).map(|i| a + h * i as f64).collect();
    let weights = (0..m)
        .map(|i| {
            let c = if i == 0 || i == m - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact posterior mean and covariance of the stacked latent vector for
/// n = 2 by a 41⁴-point Simpson rule on the box `center ± half`.
pub fn exact_moments_n2(y: &DVector<f64>, x: &DMatrix<f64>, th: &HyperParams, center: &DVector<f64>, half: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = dense_prior(x, th);
    let kinv = k.clone().try_inverse().unwrap();
    let (_, ld) = lu_logdet(&k);
    let m = 41;
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..4).map(|d| simpson(center[d] - half[d], center[d] + half[d], m)).collect();
    let mut logs = Vec::with_capacity(m.pow(4));
    let mut pts = Vec::with_capacity(m.pow(4));
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let f = DVector::from_vec(vec![axes[0].0[a], axes[1].0[b], axes[2].0[c], axes[3].0[d]]);
                    let lw = (axes[0].1[a] * axes[1].1[b] * axes[2].1[c] * axes[3].1[d]).ln();
                    logs.push(log_joint(y, &f, &kinv, ld, th.nu()) + lw);
                    pts.push(f);
                }
            }
        }
    }
    let lz = log_sum_exp(&logs);
    let mut mean = DVector::zeros(4);
    for (f, l) in pts.iter().zip(logs.iter()) {
        mean += f * (l - lz).exp();
    }
    let mut cov = DMatrix::zeros(4, 4);
    for (f, l) in pts.iter().zip(logs.iter()) {
        let d = f - &mean;
        cov += &d * d.transpose() * (l - lz).exp();
    }
    (mean, cov)
}

/// q at θ with the mode polished by Newton to 1e-11.
pub fn tight_q(y: &DVector<f64>, x: &DMatrix<f64>, th: &HyperParams, curv: Curvature) -> hetgp::Result<LaplaceFit> {
    let coarse = find_mode(y, x, th, &ModeFinderConfig::default())?;
    let cfg = ModeFinderConfig {
        grad_tol: 1e-11,
        max_iter: 50,
        ..ModeFinderConfig::with_method(ModeMethod::Newton)
    };
    let m = find_mode_from(y, x, th, &cfg, coarse.mode)?;
    LaplaceFit::from_mode(m, curv)
}

pub fn theta(nu: f64, s1: f64, l1: f64, s2: f64, l2: f64) -> HyperParams {
    HyperParams::from_natural(nu, s1, &[l1], s2, &[l2]).unwrap()
}

pub fn single(y: f64, f1: f64, f2: f64) -> (DVector<f64>, LatentState) {
    (
        DVector::from_element(1, y),
        LatentState::new(DVector::from_element(1, f1), DVector::from_element(1, f2)).unwrap(),
    )
}

/// Largest finite-difference discrepancy of all analytic fields at one point.
pub fn worst_error(y: f64, f1: f64, f2: f64, nu: f64) -> f64 {
    let h = 1e-5;
    let hn = 1e-5 * nu;
    let (yv, _) = single(y, f1, f2);
    let d = |a: f64, b: f64, n: f64| {
        let (_, s) = single(y, a, b);
        derivatives(&yv, &s, n).unwrap()
    };
    let ll = |a: f64, b: f64, n: f64| {
        let (_, s) = single(y, a, b);
        log_likelihood(&yv, &s, n).unwrap()
    };
    let at = d(f1, f2, nu);
    let mut errs = vec![
        rel_err(at.grad.f1[0], central_diff(|t| ll(t, f2, nu), f1, h)),
        rel_err(at.grad.f2[0], central_diff(|t| ll(f1, t, nu), f2, h)),
        rel_err(at.dloglik_dnu, central_diff(|t| ll(f1, f2, t), nu, hn)),
        // W = −∇∇ log L
        rel_err(at.w.d11[0], -central_diff(|t| d(t, f2, nu).grad.f1[0], f1, h)),
        rel_err(at.w.d22[0], -central_diff(|t| d(f1, t, nu).grad.f2[0], f2, h)),
        rel_err(at.w.d12[0], -central_diff(|t| d(f1, t, nu).grad.f1[0], f2, h)),
        rel_err(at.w.d12[0], -central_diff(|t| d(t, f2, nu).grad.f2[0], f1, h)),
        rel_err(at.dgrad_dnu.f1[0], central_diff(|t| d(f1, f2, t).grad.f1[0], nu, hn)),
        rel_err(at.dgrad_dnu.f2[0], central_diff(|t| d(f1, f2, t).grad.f2[0], nu, hn)),
    ];
    for (band, (a_df1, a_df2, a_dnu)) in [
        (0usize, (at.dw_df1.d11[0], at.dw_df2.d11[0], at.dw_dnu.d11[0])),
        (1, (at.dw_df1.d22[0], at.dw_df2.d22[0], at.dw_dnu.d22[0])),
        (2, (at.dw_df1.d12[0], at.dw_df2.d12[0], at.dw_dnu.d12[0])),
    ] {
        let pick = move |v: hetgp::LikelihoodDerivatives| match band {
            0 => v.w.d11[0],
            1 => v.w.d22[0],
            _ => v.w.d12[0],
        };
        errs.push(rel_err(a_df1, central_diff(|t| pick(d(t, f2, nu)), f1, h)));
        errs.push(rel_err(a_df2, central_diff(|t| pick(d(f1, t, nu)), f2, h)));
        errs.push(rel_err(a_dnu, central_diff(|t| pick(d(f1, f2, t)), nu, hn)));
    }
    let fi = &at.fisher;
    errs.push(rel_err(fi.d1_df2[0], central_diff(|t| fisher_information(&DVector::from_element(1, t), nu).d1[0], f2, h)));
    errs.push(rel_err(fi.d1_dnu[0], central_diff(|t| fisher_information(&DVector::from_element(1, f2), t).d1[0], nu, hn)));
    errs.push(rel_err(fi.d2_dnu[0], central_diff(|t| fisher_information(&DVector::from_element(1, f2), t).d2[0], nu, hn)));
    errs.into_iter().fold(0.0, f64::max)
}

/// Successively refined grid search of the exact log posterior for n = 2.
pub fn grid_argmax(y: &DVector<f64>, th: &HyperParams, x: &DMatrix<f64>) -> DVector<f64> {
    let k = dense_prior(x, th);
    let kinv = k.clone().try_inverse().unwrap();
    let (_, ld) = lu_logdet(&k);
    let obj = |f: &DVector<f64>| log_joint(y, f, &kinv, ld, th.nu());
    let mut center = DVector::zeros(4);
    let mut half = 3.0;
    let m = 25usize;
    while half > 1e-6 {
        let mut best = (f64::NEG_INFINITY, center.clone());
        let h = 2.0 * half / (m - 1) as f64;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let f = DVector::from_vec(vec![
                            center[0] - half + h * a as f64,
                            center[1] - half + h * b as f64,
                            center[2] - half + h * c as f64,
                            center[3] - half + h * d as f64,
                        ]);
                        let v = obj(&f);
                        if v > best.0 {
                            best = (v, f);
                        }
                    }
                }
            }
        }
        center = best.1;
        half = 2.0 * h;
    }
    center
}

pub fn toy2() -> (DVector<f64>, DMatrix<f64>, HyperParams) {
    (
        DVector::from_vec(vec![0.8, -0.4]),
        DMatrix::from_column_slice(2, 1, &[-0.4, 0.4]),
        theta(10.0, 1.0, 1.0, 0.05, 1.0),
    )
}

/// `log ∫∫ π(y|f1, f2) N(f1|0, k1) N(f2|0, k2) df` for one observation.
pub fn evidence_n1(y: f64, th: &HyperParams) -> f64 {
    let k1 = th.sigma1_sq() * (1.0 + 1e-8);
    let k2 = th.sigma2_sq() * (1.0 + 1e-8);
    let (n1, w1) = simpson(-12.0 * k1.sqrt() + y.min(0.0), 12.0 * k1.sqrt() + y.max(0.0), 1201);
    let (n2, w2) = simpson(-12.0 * k2.sqrt(), 12.0 * k2.sqrt(), 1201);
    let mut logs = Vec::with_capacity(n1.len() * n2.len());
    for (a, wa) in n1.iter().zip(w1.iter()) {
        for (b, wb) in n2.iter().zip(w2.iter()) {
            let lp = point(y, *a, *b, th.nu()) - 0.5 * a * a / k1 - 0.5 * b * b / k2
                - 0.5 * (k1 * k2).ln()
                - (2.0 * std::f64::consts::PI).ln();
            logs.push(lp + (wa * wb).ln());
        }
    }
    log_sum_exp(&logs)
}

pub fn gaussian_evidence(y: &DVector<f64>, x: &DMatrix<f64>, th: &HyperParams) -> (f64, DMatrix<f64>) {
    let n = y.len();
    let k1 = dense_prior(x, th).view((0, 0), (n, n)).into_owned();
    let a = &k1 + DMatrix::identity(n, n);
    let (_, ld) = lu_logdet(&a);
    let sol = a.clone().lu().solve(y).unwrap();
    (-0.5 * y.dot(&sol) - 0.5 * ld - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln(), a)
}
