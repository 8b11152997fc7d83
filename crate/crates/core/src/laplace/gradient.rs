//! Gradient of q1 / q2 with respect to log θ: explicit terms at fixed f̂
//! plus the implicit dependence of f̂ on θ.

use nalgebra::{DMatrix, DVector};

use super::{LaplaceFit, Site};
use crate::error::{Error, Result};
use crate::kernel::covariance_log_gradients;
use crate::likelihood::Banded;

/// Position of each Σ band quantity needed by the trace terms.
struct SigmaBands {
    s11: DVector<f64>,
    s22: DVector<f64>,
    s12: DVector<f64>,
}

impl SigmaBands {
    /// `tr(Σ · D)` for a banded `D`.
    fn trace(&self, d: &Banded) -> f64 {
        (0..self.s11.len())
            .map(|i| self.s11[i] * d.d11[i] + 2.0 * self.s12[i] * d.d12[i] + self.s22[i] * d.d22[i])
            .sum()
    }
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `W Σ W` for banded `W` and dense `Σ` (2n×2n).
fn sandwich(w: &Banded, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for c in 0..2 * n {
            m[(i, c)] = w.d11[i] * sigma[(i, c)] + w.d12[i] * sigma[(n + i, c)];
            m[(n + i, c)] = w.d12[i] * sigma[(i, c)] + w.d22[i] * sigma[(n + i, c)];
        }
    }
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for r in 0..2 * n {
            out[(r, j)] = w.d11[j] * m[(r, j)] + w.d12[j] * m[(r, n + j)];
            out[(r, n + j)] = w.d12[j] * m[(r, j)] + w.d22[j] * m[(r, n + j)];
        }
    }
    out
}

/// `∂q/∂ log θ` in the flat order of [`HyperParams::to_vec`](crate::params::HyperParams::to_vec).
pub fn log_marginal_gradient(fit: &LaplaceFit) -> Result<Vec<f64>> {
    let mf = &fit.mode_fit;
    let theta = &mf.theta;
    let prior = &mf.prior;
    let d = &mf.derivs;
    let n = mf.mode.len();
    let p = theta.input_dim();
    let nu = theta.nu();

    // Σ bands, R_jj = [(K + C⁻¹)⁻¹]_jj, s = −½ ∂ log|B| / ∂f̂ and ∂C/∂ν
    let (bands, r1, r2, s, dc_dnu) = match &fit.site {
        Site::Diagonal(site) => {
            let var = site.marginal_variances(prior);
            let s2 = DVector::from_fn(n, |i, _| -0.5 * var.f1[i] * d.fisher.d1_df2[i]);
            let bands = SigmaBands {
                s11: var.f1,
                s22: var.f2,
                s12: DVector::zeros(n),
            };
            let dc = Banded::diagonal(d.fisher.d1_dnu.clone(), d.fisher.d2_dnu.clone());
            (bands, site.r_block(1), site.r_block(2), (DVector::zeros(n), s2), dc)
        }
        Site::Banded(site) => {
            let sigma = site.covariance_unchecked()?;
            let bands = SigmaBands {
                s11: DVector::from_fn(n, |i, _| sigma[(i, i)]),
                s22: DVector::from_fn(n, |i, _| sigma[(n + i, n + i)]),
                s12: DVector::from_fn(n, |i, _| sigma[(i, n + i)]),
            };
            let wsw = sandwich(&d.w, &sigma);
            let r1 = DMatrix::from_fn(n, n, |i, j| if i == j { d.w.d11[i] } else { 0.0 } - wsw[(i, j)]);
            let r2 = DMatrix::from_fn(n, n, |i, j| if i == j { d.w.d22[i] } else { 0.0 } - wsw[(n + i, n + j)]);
            let s1 = DVector::from_fn(n, |i, _| {
                -0.5 * (bands.s11[i] * d.dw_df1.d11[i]
                    + 2.0 * bands.s12[i] * d.dw_df1.d12[i]
                    + bands.s22[i] * d.dw_df1.d22[i])
            });
            let s2 = DVector::from_fn(n, |i, _| {
                -0.5 * (bands.s11[i] * d.dw_df2.d11[i]
                    + 2.0 * bands.s12[i] * d.dw_df2.d12[i]
                    + bands.s22[i] * d.dw_df2.d22[i])
            });
            (bands, r1, r2, (s1, s2), d.dw_dnu.clone())
        }
    };

    // ∂f̂/∂θ = (I + K W)⁻¹ v with the observed W: the mode itself does not
    // depend on which curvature approximates the posterior.
    let k1 = prior.k1.matrix();
    let k2 = prior.k2.matrix();
    let w = &d.w;
    let mut a = DMatrix::identity(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += k1[(i, j)] * w.d11[j];
            a[(i, n + j)] += k1[(i, j)] * w.d12[j];
            a[(n + i, j)] += k2[(i, j)] * w.d12[j];
            a[(n + i, n + j)] += k2[(i, j)] * w.d22[j];
        }
    }

    let dim = theta.len();
    let mut explicit = vec![0.0; dim];
    let mut rhs = DMatrix::zeros(2 * n, dim);

    explicit[0] = d.dloglik_dnu - 0.5 * bands.trace(&dc_dnu);
    rhs.view_mut((0, 0), (n, 1)).copy_from(&(k1 * &d.dgrad_dnu.f1));
    rhs.view_mut((n, 0), (n, 1)).copy_from(&(k2 * &d.dgrad_dnu.f2));

    for process in [1usize, 2] {
        let (k, r, a_j, g_j, offset) = if process == 1 {
            (k1, &r1, &mf.alpha.f1, &d.grad.f1, 0)
        } else {
            (k2, &r2, &mf.alpha.f2, &d.grad.f2, n)
        };
        let base = theta.signal_index(process);
        let dks = covariance_log_gradients(prior.spec(process), &mf.x, k);
        debug_assert_eq!(dks.len(), 1 + p);
        for (m, dk) in dks.iter().enumerate() {
            let idx = base + m;
            explicit[idx] = 0.5 * (a_j.dot(&(dk * a_j))) - 0.5 * frobenius(r, dk);
            rhs.view_mut((offset, idx), (n, 1)).copy_from(&(dk * g_j));
        }
    }

    let df = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("I + K W is singular at the mode".into()))?;
    let mut s_full = DVector::zeros(2 * n);
    s_full.rows_mut(0, n).copy_from(&s.0);
    s_full.rows_mut(n, n).copy_from(&s.1);

    let mut grad: Vec<f64> = (0..dim).map(|c| explicit[c] + s_full.dot(&df.column(c))).collect();
    grad[0] *= nu;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite marginal likelihood gradient".into()));
    }
    Ok(grad)
}
