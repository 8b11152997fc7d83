use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Model parameters `θ = [ν, σ1², ℓ1, σ2², ℓ2]`, all stored as logarithms.
///
/// The flat-vector order used by the optimizer and by every gradient in the
/// crate is `[log ν, log σ1², log ℓ1(1..p), log σ2², log ℓ2(1..p)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub log_nu: f64,
    pub log_sigma1_sq: f64,
    pub log_ell1: Vec<f64>,
    pub log_sigma2_sq: f64,
    pub log_ell2: Vec<f64>,
}

impl HyperParams {
    pub fn from_natural(nu: f64, sigma1_sq: f64, ell1: &[f64], sigma2_sq: f64, ell2: &[f64]) -> Result<Self> {
        if ell1.len() != ell2.len() {
            return Err(Error::dim(format!(
                "ell1 has {} entries, ell2 has {}",
                ell1.len(),
                ell2.len()
            )));
        }
        let all = [nu, sigma1_sq, sigma2_sq]
            .into_iter()
            .chain(ell1.iter().copied())
            .chain(ell2.iter().copied());
        for v in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("parameters must be positive and finite, got {v}")));
            }
        }
        Ok(HyperParams {
            log_nu: nu.ln(),
            log_sigma1_sq: sigma1_sq.ln(),
            log_ell1: ell1.iter().map(|v| v.ln()).collect(),
            log_sigma2_sq: sigma2_sq.ln(),
            log_ell2: ell2.iter().map(|v| v.ln()).collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.log_ell1.len()
    }

    /// Length of the flat parameter vector, `3 + 2p`.
    pub fn len(&self) -> usize {
        3 + 2 * self.input_dim()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nu(&self) -> f64 {
        self.log_nu.exp()
    }

    pub fn sigma1_sq(&self) -> f64 {
        self.log_sigma1_sq.exp()
    }

    pub fn sigma2_sq(&self) -> f64 {
        self.log_sigma2_sq.exp()
    }

    pub fn ell1(&self) -> Vec<f64> {
        self.log_ell1.iter().map(|v| v.exp()).collect()
    }

    pub fn ell2(&self) -> Vec<f64> {
        self.log_ell2.iter().map(|v| v.exp()).collect()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.log_nu);
        v.push(self.log_sigma1_sq);
        v.extend_from_slice(&self.log_ell1);
        v.push(self.log_sigma2_sq);
        v.extend_from_slice(&self.log_ell2);
        v
    }

    pub fn from_vec(v: &[f64], input_dim: usize) -> Result<Self> {
        if v.len() != 3 + 2 * input_dim {
            return Err(Error::dim(format!(
                "parameter vector has length {}, expected {}",
                v.len(),
                3 + 2 * input_dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite log-parameter"));
        }
        let p = input_dim;
        Ok(HyperParams {
            log_nu: v[0],
            log_sigma1_sq: v[1],
            log_ell1: v[2..2 + p].to_vec(),
            log_sigma2_sq: v[2 + p],
            log_ell2: v[3 + p..3 + 2 * p].to_vec(),
        })
    }

    /// Index of `log σ_j²` in the flat vector (`j` is 1 or 2).
    pub fn signal_index(&self, process: usize) -> usize {
        match process {
            1 => 1,
            _ => 2 + self.input_dim(),
        }
    }

    pub fn kernel1(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.sigma1_sq(), self.ell1())
    }

    pub fn kernel2(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.sigma2_sq(), self.ell2())
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        HyperParams {
            log_nu: nu.ln(),
            ..self.clone()
        }
    }
}
