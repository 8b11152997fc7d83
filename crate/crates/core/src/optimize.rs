//! Type-II MAP estimation of θ: projected L-BFGS ascent on the approximate
//! log marginal likelihood plus the log hyperprior, over log-θ.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperprior::{log_prior, PriorSpec};
use crate::laplace::{find_mode, find_mode_from, log_marginal_gradient, LaplaceFit, ModeFinderConfig, Objective};
use crate::likelihood::LatentState;
use crate::params::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Stop once the projected gradient ∞-norm falls below this.
    pub grad_tol: f64,
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    /// Every free log-parameter is kept in `[-bound, bound]`.
    pub bound: f64,
    /// L-BFGS memory.
    pub memory: usize,
    /// Largest change of any log-parameter in one step.
    pub max_step: f64,
    /// Central finite differences instead of the analytic gradient.
    pub fd_gradient: bool,
    pub mode: ModeFinderConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grad_tol: 1e-4,
            max_evals: 100,
            bound: 10.0,
            memory: 7,
            max_step: 2.0,
            fd_gradient: false,
            // q is only as smooth in θ as the mode is accurate; 1e-6 leaves
            // ~1e-7 noise, enough to stall the line search near the optimum
            mode: ModeFinderConfig {
                grad_tol: 1e-9,
                max_iter: 1000,
                ..ModeFinderConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub objective: f64,
    pub grad_norm: f64,
}

/// What happened to one multi-start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: HyperParams,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub theta_hat: HyperParams,
    /// `q(y | θ̂) + log π(θ̂)`.
    pub objective: f64,
    pub log_marginal: f64,
    pub fit: LaplaceFit,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub evaluations: usize,
    pub starts: Vec<StartOutcome>,
}

/// Evaluated objective at one θ.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub log_marginal: f64,
    /// Gradient of `value` in the flat log-θ order.
    pub grad: Vec<f64>,
    pub fit: LaplaceFit,
}

/// `q(y | θ) + log π(θ)` and its log-θ gradient, starting the mode search
/// from `warm` when given.
pub fn map_objective(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    theta: &HyperParams,
    prior: &PriorSpec,
    which: Objective,
    mode_cfg: &ModeFinderConfig,
    warm: Option<&LatentState>,
) -> Result<Evaluation> {
    let mode = match warm {
        Some(f0) => find_mode_from(y, x, theta, mode_cfg, f0.clone()).or_else(|_| find_mode(y, x, theta, mode_cfg))?,
        None => find_mode(y, x, theta, mode_cfg)?,
    };
    let fit = LaplaceFit::from_mode(mode, which.curvature())?;
    let (lp, lp_grad) = log_prior(theta, prior)?;
    let q_grad = log_marginal_gradient(&fit)?;
    let value = fit.log_marginal + lp;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective is not finite at θ = {:?}", theta.to_vec())));
    }
    Ok(Evaluation {
        value,
        log_marginal: fit.log_marginal,
        grad: q_grad.iter().zip(&lp_grad).map(|(a, b)| a + b).collect(),
        fit,
    })
}

/// The three default starts: (ν=5, unit variances, ℓ = covariate sd),
/// (ν=20, same), (ν=2.5, variances 0.5, ℓ = sd/2).
pub fn default_starts(x: &DMatrix<f64>) -> Result<Vec<HyperParams>> {
    let n = x.nrows() as f64;
    let sd: Vec<f64> = x
        .column_iter()
        .map(|c| {
            let m = c.mean();
            let v = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let half: Vec<f64> = sd.iter().map(|s| 0.5 * s).collect();
    Ok(vec![
        HyperParams::from_natural(5.0, 1.0, &sd, 1.0, &sd)?,
        HyperParams::from_natural(20.0, 1.0, &sd, 1.0, &sd)?,
        HyperParams::from_natural(2.5, 0.5, &half, 0.5, &half)?,
    ])
}

struct Problem<'a> {
    y: &'a DVector<f64>,
    x: &'a DMatrix<f64>,
    prior: &'a PriorSpec,
    which: Objective,
    cfg: &'a OptimizerConfig,
    /// Coordinates the optimizer may move.
    free: Vec<bool>,
}

struct Point {
    v: Vec<f64>,
    eval: Evaluation,
}

impl Problem<'_> {
    fn evaluate(&self, v: &[f64], warm: Option<&LatentState>) -> Result<Evaluation> {
        let p = self.x.ncols();
        let theta = HyperParams::from_vec(v, p)?;
        let mut e = map_objective(self.y, self.x, &theta, self.prior, self.which, &self.cfg.mode, warm)?;
        if self.cfg.fd_gradient {
            let h = 1e-5;
            for c in 0..v.len() {
                if !self.free[c] {
                    continue;
                }
                let at = |t: f64| -> Result<f64> {
                    let mut w = v.to_vec();
                    w[c] = t;
                    let th = HyperParams::from_vec(&w, p)?;
                    Ok(map_objective(self.y, self.x, &th, self.prior, self.which, &self.cfg.mode, Some(e.fit.mode()))?
                        .value)
                };
                e.grad[c] = (at(v[c] + h)? - at(v[c] - h)?) / (2.0 * h);
            }
        }
        Ok(e)
    }

    /// Ascent direction with coordinates at an active bound zeroed.
    fn projected(&self, v: &[f64], g: &[f64]) -> Vec<f64> {
        let b = self.cfg.bound;
        v.iter()
            .zip(g)
            .zip(&self.free)
            .map(|((x, gi), free)| {
                if !free || (*x >= b && *gi > 0.0) || (*x <= -b && *gi < 0.0) {
                    0.0
                } else {
                    *gi
                }
            })
            .collect()
    }

    fn clamp_coord(&self, i: usize, v: f64) -> f64 {
        if self.free[i] {
            v.clamp(-self.cfg.bound, self.cfg.bound)
        } else {
            v
        }
    }

    fn run(&self, start: &HyperParams) -> Result<(Point, Vec<TracePoint>, bool, usize)> {
        let v0: Vec<f64> = start.to_vec().iter().enumerate().map(|(i, x)| self.clamp_coord(i, *x)).collect();
        let mut cur = Point {
            eval: self.evaluate(&v0, None)?,
            v: v0,
        };
        let mut evals = 1;
        let mut trace = Vec::new();
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
        let mut last_t = f64::INFINITY;
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        loop {
            let pg = self.projected(&cur.v, &cur.eval.grad);
            let gnorm = pg.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            trace.push(TracePoint {
                objective: cur.eval.value,
                grad_norm: gnorm,
            });
            if gnorm <= self.cfg.grad_tol {
                return Ok((cur, trace, true, evals));
            }
            if evals >= self.cfg.max_evals {
                return Ok((cur, trace, false, evals));
            }
            // two-loop recursion for the ascent direction (we maximize)
            let mut d = pg.clone();
            let mut alphas = Vec::with_capacity(memory.len());
            for (s, yv) in memory.iter().rev() {
                let rho = 1.0 / dot(yv, s);
                let a = rho * dot(s, &d);
                d.iter_mut().zip(yv).for_each(|(di, yi)| *di -= a * yi);
                alphas.push((a, rho));
            }
            if let Some((s, yv)) = memory.back() {
                let gamma = dot(s, yv) / dot(yv, yv);
                d.iter_mut().for_each(|di| *di *= gamma);
            }
            for ((s, yv), (a, rho)) in memory.iter().zip(alphas.iter().rev()) {
                let beta = rho * dot(yv, &d);
                d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - beta) * si);
            }
            let d_free = self.projected(&cur.v, &d);
            d = if dot(&d_free, &pg) > 0.0 {
                d_free
            } else {
                memory.clear();
                pg.clone()
            };
            let dmax = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut t = if memory.is_empty() { (1.0 / dmax).min(1.0) } else { 1.0 };
            // after a backtrack, start near the last accepted length: failed
            // trials are the expensive ones
            t = t.min(self.cfg.max_step / dmax).min(4.0 * last_t);

            let mut accepted = None;
            for _ in 0..30 {
                if evals >= self.cfg.max_evals {
                    break;
                }
                let v_new: Vec<f64> = cur.v.iter().zip(&d).enumerate().map(|(i, (x, di))| self.clamp_coord(i, x + t * di)).collect();
                let step: Vec<f64> = v_new.iter().zip(&cur.v).map(|(a, c)| a - c).collect();
                evals += 1;
                // a failed fit counts as an infinitely bad objective
                if let Ok(e) = self.evaluate(&v_new, Some(cur.eval.fit.mode())) {
                    if e.value >= cur.eval.value + 1e-4 * dot(&cur.eval.grad, &step) {
                        last_t = t;
                        accepted = Some(Point { v: v_new, eval: e });
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some(next) = accepted else {
                return Ok((cur, trace, false, evals));
            };
            let s: Vec<f64> = next.v.iter().zip(&cur.v).map(|(a, c)| a - c).collect();
            // ascent: the curvature pair uses the negated gradient change
            let yv: Vec<f64> = cur.eval.grad.iter().zip(&next.eval.grad).map(|(a, c)| a - c).collect();
            if dot(&s, &yv) > 1e-10 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
                memory.push_back((s, yv));
                if memory.len() > self.cfg.memory {
                    memory.pop_front();
                }
            }
            cur = next;
        }
    }
}

fn optimize(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    prior: &PriorSpec,
    which: Objective,
    cfg: &OptimizerConfig,
    starts: Vec<HyperParams>,
    free: Vec<bool>,
) -> Result<MapResult> {
    if y.len() != x.nrows() {
        return Err(Error::dim(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if y.len() < 3 {
        return Err(Error::invalid("MAP estimation needs at least 3 observations"));
    }
    let problem = Problem {
        y,
        x,
        prior,
        which,
        cfg,
        free,
    };
    let mut best: Option<(Point, Vec<TracePoint>, bool, usize)> = None;
    let mut outcomes = Vec::with_capacity(starts.len());
    for start in starts {
        match problem.run(&start) {
            Ok(run) => {
                outcomes.push(StartOutcome {
                    start,
                    objective: Some(run.0.eval.value),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| run.0.eval.value > b.0.eval.value) {
                    best = Some(run);
                }
            }
            Err(e) => outcomes.push(StartOutcome {
                start,
                objective: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let Some((point, trace, converged, evaluations)) = best else {
        let details = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| format!("start {i}: {}", o.error.as_deref().unwrap_or("?")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AllStartsFailed {
            starts: outcomes.len(),
            details,
        });
    };
    Ok(MapResult {
        theta_hat: HyperParams::from_vec(&point.v, x.ncols())?,
        objective: point.eval.value,
        log_marginal: point.eval.log_marginal,
        fit: point.eval.fit,
        trace,
        converged,
        evaluations,
        starts: outcomes,
    })
}

/// MAP estimate of all of θ from the default starts.
pub fn map_estimate(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    prior: &PriorSpec,
    which: Objective,
    cfg: &OptimizerConfig,
) -> Result<MapResult> {
    map_estimate_from(y, x, prior, which, cfg, default_starts(x)?)
}

pub fn map_estimate_from(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    prior: &PriorSpec,
    which: Objective,
    cfg: &OptimizerConfig,
    starts: Vec<HyperParams>,
) -> Result<MapResult> {
    let free = vec![true; 3 + 2 * x.ncols()];
    optimize(y, x, prior, which, cfg, starts, free)
}

/// MAP estimate over the coordinates flagged in `free` (flat log-θ order);
/// the others keep their values from each start.
pub fn map_estimate_masked(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    prior: &PriorSpec,
    which: Objective,
    cfg: &OptimizerConfig,
    starts: Vec<HyperParams>,
    free: Vec<bool>,
) -> Result<MapResult> {
    if free.len() != 3 + 2 * x.ncols() {
        return Err(Error::dim(format!("mask has {} entries, θ has {}", free.len(), 3 + 2 * x.ncols())));
    }
    optimize(y, x, prior, which, cfg, starts, free)
}

/// MAP estimate of θ with ν held at `nu`.
pub fn fixed_nu_profile(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    nu: f64,
    prior: &PriorSpec,
    which: Objective,
    cfg: &OptimizerConfig,
) -> Result<MapResult> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!("fixed ν must be positive and finite, got {nu}")));
    }
    let mut starts: Vec<HyperParams> = Vec::new();
    for s in default_starts(x)? {
        let s = s.with_nu(nu);
        if !starts.contains(&s) {
            starts.push(s);
        }
    }
    let mut free = vec![true; 3 + 2 * x.ncols()];
    free[0] = false;
    optimize(y, x, prior, which, cfg, starts, free)
}
