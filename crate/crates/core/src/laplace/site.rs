//! Linear algebra for `(K⁻¹ + C)⁻¹` with `K = diag(K1, K2)` and a site
//! matrix `C` that is either diagonal (Fisher information, clamped Hessian)
//! or banded (the full Hessian `W`).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, PosDefMatrix};
use crate::likelihood::{Banded, LatentState};
use crate::params::HyperParams;

/// The two prior covariance blocks over the training inputs.
#[derive(Debug, Clone)]
pub struct LatentPrior {
    pub spec1: KernelSpec,
    pub spec2: KernelSpec,
    pub k1: PosDefMatrix,
    pub k2: PosDefMatrix,
}

impl LatentPrior {
    pub fn new(x: &DMatrix<f64>, theta: &HyperParams) -> Result<Self> {
        if x.ncols() != theta.input_dim() {
            return Err(Error::dim(format!(
                "covariates have {} columns, parameters have {} length-scales",
                x.ncols(),
                theta.input_dim()
            )));
        }
        let spec1 = theta.kernel1()?;
        let spec2 = theta.kernel2()?;
        let k1 = PosDefMatrix::from_kernel(&spec1, x)?;
        let k2 = PosDefMatrix::from_kernel(&spec2, x)?;
        Ok(LatentPrior { spec1, spec2, k1, k2 })
    }

    pub fn n(&self) -> usize {
        self.k1.dim()
    }

    pub fn block(&self, process: usize) -> &PosDefMatrix {
        if process == 1 {
            &self.k1
        } else {
            &self.k2
        }
    }

    pub fn spec(&self, process: usize) -> &KernelSpec {
        if process == 1 {
            &self.spec1
        } else {
            &self.spec2
        }
    }

    /// `K v`.
    pub fn apply(&self, v: &LatentState) -> LatentState {
        LatentState {
            f1: self.k1.matrix() * &v.f1,
            f2: self.k2.matrix() * &v.f2,
        }
    }

    /// `K⁻¹ v`.
    pub fn solve(&self, v: &LatentState) -> LatentState {
        LatentState {
            f1: self.k1.solve_vec(&v.f1),
            f2: self.k2.solve_vec(&v.f2),
        }
    }

    /// `log |K|`.
    pub fn logdet(&self) -> f64 {
        self.k1.logdet() + self.k2.logdet()
    }

    /// Prior variances (diagonal of K, jitter included).
    pub fn variances(&self) -> LatentState {
        LatentState {
            f1: self.k1.matrix().diagonal(),
            f2: self.k2.matrix().diagonal(),
        }
    }
}

/// Factorization of `(K⁻¹ + C)` for a non-negative diagonal `C = S²`,
/// held per block as `B_j = I + S_j K_j S_j`.
#[derive(Debug, Clone)]
pub struct DiagonalSite {
    pub c1: DVector<f64>,
    pub c2: DVector<f64>,
    s1: DVector<f64>,
    s2: DVector<f64>,
    b1: Cholesky<f64, Dyn>,
    b2: Cholesky<f64, Dyn>,
}

fn scaled_identity_plus(k: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let v = s[i] * k[(i, j)] * s[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    })
}

impl DiagonalSite {
    pub fn new(prior: &LatentPrior, c1: DVector<f64>, c2: DVector<f64>) -> Result<Self> {
        let n = prior.n();
        if c1.len() != n || c2.len() != n {
            return Err(Error::dim("site diagonal does not match the number of points"));
        }
        if c1.iter().chain(c2.iter()).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("diagonal site entries must be finite and non-negative"));
        }
        let s1 = c1.map(f64::sqrt);
        let s2 = c2.map(f64::sqrt);
        let b1 = Cholesky::new(scaled_identity_plus(prior.k1.matrix(), &s1))
            .ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
        let b2 = Cholesky::new(scaled_identity_plus(prior.k2.matrix(), &s2))
            .ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
        Ok(DiagonalSite { c1, c2, s1, s2, b1, b2 })
    }

    fn parts(&self, process: usize) -> (&DVector<f64>, &Cholesky<f64, Dyn>) {
        if process == 1 {
            (&self.s1, &self.b1)
        } else {
            (&self.s2, &self.b2)
        }
    }

    pub fn as_banded(&self) -> Banded {
        Banded::diagonal(self.c1.clone(), self.c2.clone())
    }

    /// `(K_j⁻¹ + C_j)⁻¹ b = K_j b − K_j S_j B_j⁻¹ S_j K_j b`.
    fn solve_block(&self, k: &DMatrix<f64>, process: usize, b: &DVector<f64>) -> DVector<f64> {
        let (s, chol) = self.parts(process);
        let kb = k * b;
        let t = chol.solve(&s.component_mul(&kb));
        kb - k * s.component_mul(&t)
    }

    /// `(K⁻¹ + C)⁻¹ b`.
    pub fn solve_posterior(&self, prior: &LatentPrior, b: &LatentState) -> LatentState {
        LatentState {
            f1: self.solve_block(prior.k1.matrix(), 1, &b.f1),
            f2: self.solve_block(prior.k2.matrix(), 2, &b.f2),
        }
    }

    /// `log |I + C^{1/2} K C^{1/2}|`.
    pub fn logdet(&self) -> f64 {
        [&self.b1, &self.b2]
            .iter()
            .map(|c| {
                let l = c.l_dirty();
                2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
            })
            .sum()
    }

    /// `V_j = L_B⁻¹ S_j K_j`, whose column norms give the variance reduction.
    fn reduction(&self, k: &DMatrix<f64>, process: usize) -> DMatrix<f64> {
        let (s, chol) = self.parts(process);
        let mut sk = k.clone();
        for (i, mut row) in sk.row_iter_mut().enumerate() {
            row *= s[i];
        }
        chol.l_dirty()
            .solve_lower_triangular(&sk)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Diagonal of `(K⁻¹ + C)⁻¹`.
    pub fn marginal_variances(&self, prior: &LatentPrior) -> LatentState {
        let var = |process: usize| {
            let k = prior.block(process).matrix();
            let v = self.reduction(k, process);
            DVector::from_fn(k.nrows(), |i, _| k[(i, i)] - v.column(i).norm_squared())
        };
        LatentState {
            f1: var(1),
            f2: var(2),
        }
    }

    /// Full block `Σ_j = (K_j⁻¹ + C_j)⁻¹`.
    pub fn covariance_block(&self, prior: &LatentPrior, process: usize) -> DMatrix<f64> {
        let k = prior.block(process).matrix();
        let v = self.reduction(k, process);
        k - v.transpose() * v
    }

    /// `R_j = (K_j + C_j⁻¹)⁻¹ = S_j B_j⁻¹ S_j`.
    pub fn r_block(&self, process: usize) -> DMatrix<f64> {
        let (s, chol) = self.parts(process);
        let n = s.len();
        let inv = chol.inverse();
        DMatrix::from_fn(n, n, |i, j| s[i] * inv[(i, j)] * s[j])
    }

    /// Predictive variance `k** − k*ᵀ (K_j + C_j⁻¹)⁻¹ k*` for one test point.
    pub fn predictive_variance(&self, process: usize, k_star: &DVector<f64>, k_self: f64) -> f64 {
        let (s, chol) = self.parts(process);
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&s.component_mul(k_star))
            .expect("Cholesky factor has a positive diagonal");
        k_self - v.norm_squared()
    }
}

/// Factorization of `(K⁻¹ + W)` for the banded Hessian through
/// `B = I + Lᵀ W L` (`L` the block Cholesky factor of `K`). `B` may be
/// indefinite; it is LU-factorized always and Cholesky-factorized when
/// positive definite.
#[derive(Debug, Clone)]
pub struct BandedSite {
    pub w: Banded,
    l1: DMatrix<f64>,
    l2: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    chol: Option<Cholesky<f64, Dyn>>,
}

/// `Aᵀ diag(d) C`.
fn at_diag_c(a: &DMatrix<f64>, d: &DVector<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut dc = c.clone();
    for (i, mut row) in dc.row_iter_mut().enumerate() {
        row *= d[i];
    }
    a.tr_mul(&dc)
}

impl BandedSite {
    pub fn new(prior: &LatentPrior, w: Banded) -> Result<Self> {
        let n = prior.n();
        if w.len() != n {
            return Err(Error::dim("banded site does not match the number of points"));
        }
        let l1 = prior.k1.factor();
        let l2 = prior.k2.factor();
        let b11 = at_diag_c(&l1, &w.d11, &l1) + DMatrix::identity(n, n);
        let b12 = at_diag_c(&l1, &w.d12, &l2);
        let b22 = at_diag_c(&l2, &w.d22, &l2) + DMatrix::identity(n, n);
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        b.view_mut((0, 0), (n, n)).copy_from(&b11);
        b.view_mut((0, n), (n, n)).copy_from(&b12);
        b.view_mut((n, 0), (n, n)).copy_from(&b12.transpose());
        b.view_mut((n, n), (n, n)).copy_from(&b22);
        let chol = Cholesky::new(b.clone());
        let lu = b.lu();
        Ok(BandedSite { w, l1, l2, lu, chol })
    }

    pub fn n(&self) -> usize {
        self.l1.nrows()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.chol.is_some()
    }

    /// `(sign, log|det|)` of `I + Lᵀ W L`, equal to `|I + W K|`.
    pub fn signed_logdet(&self) -> (f64, f64) {
        let u = self.lu.u();
        let mut sign: f64 = self.lu.p().determinant();
        let mut log_abs = 0.0;
        for i in 0..u.nrows() {
            let d = u[(i, i)];
            if d == 0.0 {
                return (0.0, f64::NEG_INFINITY);
            }
            sign *= d.signum();
            log_abs += d.abs().ln();
        }
        (sign, log_abs)
    }

    fn lower(&self, v: &LatentState) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&(&self.l1 * &v.f1));
        out.rows_mut(n, n).copy_from(&(&self.l2 * &v.f2));
        out
    }

    fn lower_t(&self, v: &LatentState) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&self.l1.tr_mul(&v.f1));
        out.rows_mut(n, n).copy_from(&self.l2.tr_mul(&v.f2));
        out
    }

    fn solve_b(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(c) = &self.chol {
            return Ok(c.solve(rhs));
        }
        let sol = self
            .lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("I + L^T W L is singular".into()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("I + L^T W L is numerically singular".into()));
        }
        Ok(sol)
    }

    /// `(K⁻¹ + W)⁻¹ b = L B⁻¹ Lᵀ b`.
    pub fn solve_posterior(&self, b: &LatentState) -> Result<LatentState> {
        let t = self.solve_b(&self.lower_t(b))?;
        Ok(LatentState::from_stacked(&self.lower(&LatentState::from_stacked(&t))))
    }

    fn block_lower(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(2 * n, 2 * n);
        l.view_mut((0, 0), (n, n)).copy_from(&self.l1);
        l.view_mut((n, n), (n, n)).copy_from(&self.l2);
        l
    }

    /// Dense `(K⁻¹ + W)⁻¹` without requiring positive definiteness.
    pub fn covariance_unchecked(&self) -> Result<DMatrix<f64>> {
        let l = self.block_lower();
        let m = match &self.chol {
            Some(c) => c.solve(&l.transpose()),
            None => self
                .lu
                .solve(&l.transpose())
                .ok_or_else(|| Error::Singular("I + L^T W L is singular".into()))?,
        };
        Ok(&l * m)
    }

    /// Dense posterior covariance; errors when `K⁻¹ + W` is indefinite.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if !self.is_positive_definite() {
            return Err(Error::IndefinitePosterior);
        }
        self.covariance_unchecked()
    }

    /// Predictive 2×2 covariance `diag(k**) − k*ᵀ (K + W⁻¹)⁻¹ k*`, returned
    /// as `(var1, var2, cov12)`.
    pub fn predictive_covariance(
        &self,
        k1_star: &DVector<f64>,
        k2_star: &DVector<f64>,
        k1_self: f64,
        k2_self: f64,
    ) -> Result<(f64, f64, f64)> {
        let chol = self.chol.as_ref().ok_or(Error::IndefinitePosterior)?;
        let n = self.n();
        let w1 = self
            .l1
            .clone()
            .solve_lower_triangular(k1_star)
            .ok_or_else(|| Error::Numerical("singular prior factor".into()))?;
        let w2 = self
            .l2
            .clone()
            .solve_lower_triangular(k2_star)
            .ok_or_else(|| Error::Numerical("singular prior factor".into()))?;
        let mut om = DMatrix::zeros(2 * n, 2);
        om.view_mut((0, 0), (n, 1)).copy_from(&w1);
        om.view_mut((n, 1), (n, 1)).copy_from(&w2);
        let binv_om = chol.solve(&om);
        let q = om.tr_mul(&binv_om);
        Ok((
            k1_self - w1.norm_squared() + q[(0, 0)],
            k2_self - w2.norm_squared() + q[(1, 1)],
            q[(0, 1)],
        ))
    }
}

/// The site matrix used by a Laplace approximation.
#[derive(Debug, Clone)]
pub enum Site {
    Diagonal(DiagonalSite),
    Banded(BandedSite),
}
