//! Squared-exponential (ARD) covariance and the positive-definite algebra
//! shared by the latent-process code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Starting jitter, relative to the signal variance.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter tried before giving up on a factorization.
pub const JITTER_MAX: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub jitter: f64,
}

impl KernelSpec {
    /// Kernel with the default jitter `1e-8 · σ²`.
    pub fn new(signal_variance: f64, length_scales: Vec<f64>) -> Result<Self> {
        Self::with_jitter(signal_variance, length_scales, JITTER_START * signal_variance)
    }

    pub fn with_jitter(signal_variance: f64, length_scales: Vec<f64>, jitter: f64) -> Result<Self> {
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(Error::invalid(format!(
                "signal variance must be positive and finite, got {signal_variance}"
            )));
        }
        if length_scales.is_empty() {
            return Err(Error::invalid("at least one length-scale is required"));
        }
        if let Some(l) = length_scales.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid(format!("length-scales must be positive and finite, got {l}")));
        }
        if !(jitter >= 0.0) || !jitter.is_finite() {
            return Err(Error::invalid(format!("jitter must be non-negative, got {jitter}")));
        }
        Ok(KernelSpec {
            signal_variance,
            length_scales,
            jitter,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Scaled squared distance `Σ_d (a_d − b_d)² / ℓ_d²`.
    fn scaled_sq_dist(&self, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
        a.zip(b)
            .zip(&self.length_scales)
            .map(|((ai, bi), l)| {
                let d = (ai - bi) / l;
                d * d
            })
            .sum()
    }

    /// Covariance between two points (no jitter).
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance
            * (-0.5 * self.scaled_sq_dist(a.iter().copied(), b.iter().copied())).exp()
    }
}

fn check_covariates(spec: &KernelSpec, x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.ncols() != spec.input_dim() {
        return Err(Error::dim(format!(
            "{what} has {} columns but the kernel has {} length-scales",
            x.ncols(),
            spec.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains a non-finite covariate")));
    }
    Ok(())
}

/// Covariance matrix between the rows of `x` and the rows of `x2`.
///
/// Without `x2` the result is the symmetric training covariance with
/// `spec.jitter` added to the diagonal.
pub fn covariance_matrix(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    x2: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    check_covariates(spec, x, "X")?;
    match x2 {
        Some(x2) => {
            check_covariates(spec, x2, "X2")?;
            Ok(DMatrix::from_fn(x.nrows(), x2.nrows(), |i, j| {
                spec.signal_variance
                    * (-0.5 * spec.scaled_sq_dist(x.row(i).iter().copied(), x2.row(j).iter().copied()))
                        .exp()
            }))
        }
        None => {
            let n = x.nrows();
            let mut k = DMatrix::zeros(n, n);
            for i in 0..n {
                k[(i, i)] = spec.signal_variance + spec.jitter;
                for j in 0..i {
                    let v = spec.signal_variance
                        * (-0.5
                            * spec.scaled_sq_dist(x.row(i).iter().copied(), x.row(j).iter().copied()))
                        .exp();
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            Ok(k)
        }
    }
}

/// Derivatives of the (jittered) training covariance with respect to
/// `log σ²` followed by each `log ℓ_d`.
///
/// The jitter is proportional to σ², so `∂K/∂log σ² = K` exactly.
pub fn covariance_log_gradients(spec: &KernelSpec, x: &DMatrix<f64>, k: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(1 + spec.input_dim());
    out.push(k.clone());
    for (d, l) in spec.length_scales.iter().enumerate() {
        out.push(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                let diff = (x[(i, d)] - x[(j, d)]) / l;
                k[(i, j)] * diff * diff
            }
        }));
    }
    out
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct PosDefMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    added_jitter: f64,
}

impl PosDefMatrix {
    /// Factorizes `matrix` as given, without adding jitter.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&matrix)?;
        match Cholesky::new(matrix.clone()) {
            Some(chol) => Ok(PosDefMatrix {
                matrix,
                chol,
                added_jitter: 0.0,
            }),
            None => Err(Error::NotPositiveDefinite { jitter: 0.0 }),
        }
    }

    /// Factorizes `matrix`, adding `start`, `10·start`, … up to `max` on
    /// the diagonal until the factorization succeeds. The first attempt
    /// uses the matrix unchanged.
    pub fn with_jitter_escalation(matrix: DMatrix<f64>, start: f64, max: f64) -> Result<Self> {
        check_symmetric(&matrix)?;
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(PosDefMatrix {
                matrix,
                chol,
                added_jitter: 0.0,
            });
        }
        let mut jitter = start.max(f64::MIN_POSITIVE);
        while jitter <= max * (1.0 + 1e-12) {
            let mut m = matrix.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(m.clone()) {
                return Ok(PosDefMatrix {
                    matrix: m,
                    chol,
                    added_jitter: jitter,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::NotPositiveDefinite { jitter: jitter / 10.0 })
    }

    /// Training covariance of `spec` over `x`, escalating the jitter ×10 from
    /// `spec.jitter` up to `1e-2 · σ²` if the factorization fails.
    pub fn from_kernel(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<Self> {
        let base = covariance_matrix(spec, x, None)?;
        if let Some(chol) = Cholesky::new(base.clone()) {
            return Ok(PosDefMatrix {
                matrix: base,
                chol,
                added_jitter: 0.0,
            });
        }
        let sigma2 = spec.signal_variance;
        let mut jitter = (spec.jitter * 10.0).max(JITTER_START * sigma2);
        while jitter <= JITTER_MAX * sigma2 * (1.0 + 1e-12) {
            let mut m = base.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter - spec.jitter;
            }
            if let Some(chol) = Cholesky::new(m.clone()) {
                return Ok(PosDefMatrix {
                    matrix: m,
                    chol,
                    added_jitter: jitter - spec.jitter,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::NotPositiveDefinite { jitter: jitter / 10.0 })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The factorized matrix, including any escalated jitter.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Jitter added on top of the matrix that was passed in.
    pub fn added_jitter(&self) -> f64 {
        self.added_jitter
    }

    /// Lower-triangular Cholesky factor.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b` for the lower factor `L`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn logdet(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

/// Solves `A X = B`.
pub fn chol_solve(a: &PosDefMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != a.dim() {
        return Err(Error::dim(format!(
            "right-hand side has {} rows, matrix is {}x{}",
            b.nrows(),
            a.dim(),
            a.dim()
        )));
    }
    Ok(a.solve(b))
}

/// `log |A|`.
pub fn logdet(a: &PosDefMatrix) -> f64 {
    a.logdet()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64) * 0.1
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        let spec = KernelSpec::with_jitter(1.0, vec![1.0], 0.0).unwrap();
        let x = DMatrix::from_row_slice(1, 1, &[0.3]);
        let k = covariance_matrix(&spec, &x, Some(&x)).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn unit_distance_value() {
        let spec = KernelSpec::with_jitter(2.0, vec![1.0], 0.0).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let k = covariance_matrix(&spec, &a, Some(&b)).unwrap();
        assert!((k[(0, 0)] - 1.213_061_319_425_267).abs() < 1e-12);
    }

    #[test]
    fn ard_scaling() {
        let spec = KernelSpec::with_jitter(1.0, vec![1.0, 2.0], 0.0).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let k = covariance_matrix(&spec, &a, Some(&b)).unwrap();
        assert!((k[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn training_matrix_has_jitter_on_diagonal() {
        let spec = KernelSpec::with_jitter(1.5, vec![0.7], 1e-3).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 2.0]);
        let k = covariance_matrix(&spec, &x, None).unwrap();
        for i in 0..3 {
            assert!((k[(i, i)] - 1.501).abs() < 1e-15);
        }
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let spec = KernelSpec::new(1.0, vec![1.0, 1.0]).unwrap();
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(covariance_matrix(&spec, &x, None), Err(Error::Dimension(_))));
        let bad = DMatrix::from_row_slice(1, 2, &[f64::NAN, 1.0]);
        assert!(matches!(covariance_matrix(&spec, &bad, None), Err(Error::InvalidInput(_))));
        assert!(KernelSpec::new(0.0, vec![1.0]).is_err());
        assert!(KernelSpec::new(1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn identity_and_scalar_solves() {
        let id = PosDefMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let b = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 3.0]);
        assert_eq!(chol_solve(&id, &b).unwrap(), b);
        let two = PosDefMatrix::new(DMatrix::identity(3, 3) * 2.0).unwrap();
        let x = chol_solve(&two, &DMatrix::from_element(3, 1, 1.0)).unwrap();
        for v in x.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn random_spd_solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(10, &mut rng);
        let b = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
        let pd = PosDefMatrix::new(a.clone()).unwrap();
        let x = chol_solve(&pd, &b).unwrap();
        assert!((&a * x - &b).norm() / b.norm() <= 1e-10);
    }

    #[test]
    fn logdet_values() {
        assert_eq!(logdet(&PosDefMatrix::new(DMatrix::identity(4, 4)).unwrap()), 0.0);
        let d = PosDefMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).unwrap();
        assert!((logdet(&d) - 6.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logdet_matches_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(8, &mut rng);
        let lu_det = a.clone().lu().determinant();
        let pd = PosDefMatrix::new(a).unwrap();
        assert!((logdet(&pd) - lu_det.ln()).abs() < 1e-10);
    }

    #[test]
    fn jitter_escalation_rescues_duplicate_rows() {
        let spec = KernelSpec::with_jitter(1.0, vec![1.0], 0.0).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.0]);
        let pd = PosDefMatrix::from_kernel(&spec, &x).unwrap();
        assert!(pd.added_jitter() > 0.0);
        assert!(pd.added_jitter() <= JITTER_MAX);
    }

    #[test]
    fn escalation_gives_up_on_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            PosDefMatrix::with_jitter_escalation(m, 1e-8, 1e-2),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn log_gradients_match_finite_differences() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.1, 0.5, -0.3, 1.2, 0.8, -0.7, 0.2]);
        let spec = KernelSpec::new(1.3, vec![0.8, 1.9]).unwrap();
        let k = covariance_matrix(&spec, &x, None).unwrap();
        let grads = covariance_log_gradients(&spec, &x, &k);
        let h = 1e-6;
        let build = |ls2: f64, l: &[f64]| {
            let s = KernelSpec::new(ls2.exp(), l.iter().map(|v: &f64| v.exp()).collect()).unwrap();
            covariance_matrix(&s, &x, None).unwrap()
        };
        let base_l: Vec<f64> = spec.length_scales.iter().map(|l| l.ln()).collect();
        let s0 = spec.signal_variance.ln();
        let fd = (build(s0 + h, &base_l) - build(s0 - h, &base_l)) / (2.0 * h);
        assert!((&fd - &grads[0]).amax() < 1e-8);
        for d in 0..2 {
            let mut lp = base_l.clone();
            let mut lm = base_l.clone();
            lp[d] += h;
            lm[d] -= h;
            let fd = (build(s0, &lp) - build(s0, &lm)) / (2.0 * h);
            assert!((&fd - &grads[d + 1]).amax() < 1e-8);
        }
    }
}
