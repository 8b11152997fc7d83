//! Fit a user CSV (header row, response last) with each model variant.
//! Without an argument a simulated dataset is written to a temp file first.
//!
//!     cargo run --release --example csv_fit -- data.csv

use hetgp::cli::{fit_dataset, ModelVariant, RunConfig};
use hetgp::data::{simulate, Dataset, SIMULATION_NU};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("hetgp_example.csv");
            std::fs::write(&p, simulate(80, 3, SIMULATION_NU)?.data.to_csv_string())?;
            p
        }
    };
    let data = Dataset::read_csv(&path)?;
    println!("{}: {} rows, covariates {:?}", path.display(), data.len(), data.covariate_names);
    for model in [ModelVariant::HtG, ModelVariant::HtSt1, ModelVariant::HtSt2] {
        let cfg = RunConfig {
            model,
            ..Default::default()
        }
        .resolve()?;
        let art = fit_dataset(&data, &cfg)?;
        let nat = &art.natural;
        println!(
            "{model:?} ({:?}): ν = {:.3}  σ1² = {:.3}  ℓ1 = {:?}  σ2² = {:.3}  objective = {:.3}",
            art.objective, nat.nu, nat.sigma1_sq, nat.ell1, nat.sigma2_sq, art.objective_value
        );
    }
    Ok(())
}
