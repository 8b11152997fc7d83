//! Datasets, CSV ingestion, covariate standardization and the synthetic
//! heteroscedastic benchmark.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates (n×p) and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub covariate_names: Vec<String>,
    pub response_name: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::dim(format!("X has {} rows, y has {}", x.nrows(), y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        let covariate_names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Ok(Dataset {
            x,
            y,
            covariate_names,
            response_name: "y".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            covariate_names: self.covariate_names.clone(),
            response_name: self.response_name.clone(),
        }
    }

    /// Parses a headed CSV whose last column is the response.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::invalid(format!("cannot read CSV header: {e}")))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::invalid("CSV needs at least one covariate column and a response column"));
        }
        let p = headers.len() - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            // header is line 1
            let line = row + 2;
            let rec = rec.map_err(|e| Error::invalid(format!("line {line}: {e}")))?;
            if rec.len() != p + 1 {
                return Err(Error::invalid(format!("line {line}: expected {} fields, found {}", p + 1, rec.len())));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("line {line}, column {}: cannot parse {field:?}", j + 1)))?;
                if !v.is_finite() {
                    return Err(Error::invalid(format!("line {line}, column {}: non-finite value", j + 1)));
                }
                if j < p {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        if ys.is_empty() {
            return Err(Error::invalid("CSV has no data rows"));
        }
        let n = ys.len();
        Ok(Dataset {
            x: DMatrix::from_row_slice(n, p, &xs),
            y: DVector::from_vec(ys),
            covariate_names: headers.iter().take(p).map(str::to_owned).collect(),
            response_name: headers[p].to_owned(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// CSV text with 17 significant digits, so parsing returns the same values.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push(&self.response_name);
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut fields: Vec<String> = (0..self.input_dim()).map(|j| format!("{:.16e}", self.x[(i, j)])).collect();
            fields.push(format!("{:.16e}", self.y[i]));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Per-column affine map applied to covariates before kernel evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Standardization {
            mean: vec![0.0; p],
            sd: vec![1.0; p],
        }
    }

    /// Column means and sample standard deviations; constant columns keep sd 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = if x.nrows() > 1 {
                col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.push(m);
            sd.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardization { mean, sd }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::dim(format!(
                "covariates have {} columns, standardization has {}",
                x.ncols(),
                self.mean.len()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.sd[j]))
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * self.sd[j] + self.mean[j])
    }
}

/// Location function of the synthetic benchmark.
pub fn true_f1(x: f64) -> f64 {
    0.3 + 0.4 * x + 0.5 * (2.7 * x).cos() + 1.1 / (1.0 + x * x)
}

/// Log-scale function of the synthetic benchmark.
pub fn true_f2(x: f64) -> f64 {
    0.5 * (0.5 * PI * x).cos() + 0.52 * (PI * x).cos() - 1.2
}

/// Default degrees of freedom of the synthetic benchmark.
pub const SIMULATION_NU: f64 = 2.5;

/// Synthetic draw with the latent truth kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: Dataset,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

/// `n` equally spaced inputs strictly inside (−4.5, 4.5) with
/// `y = f1(x) + exp(f2(x)) t_ν`.
pub fn simulate(n: usize, seed: u64, nu: f64) -> Result<Simulated> {
    if n < 2 {
        return Err(Error::invalid("simulation needs n >= 2"));
    }
    let t = StudentT::new(nu).map_err(|e| Error::invalid(format!("invalid degrees of freedom {nu}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|i| -4.5 + 9.0 * (i + 1) as f64 / (n + 1) as f64).collect();
    let f1: Vec<f64> = xs.iter().map(|&x| true_f1(x)).collect();
    let f2: Vec<f64> = xs.iter().map(|&x| true_f2(x)).collect();
    let y: Vec<f64> = (0..n).map(|i| f1[i] + f2[i].exp() * t.sample(&mut rng)).collect();
    let data = Dataset::new(DMatrix::from_column_slice(n, 1, &xs), DVector::from_vec(y))?;
    Ok(Simulated { data, f1, f2 })
}
