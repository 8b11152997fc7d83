//! Draw the synthetic benchmark and estimate the model parameters with both
//! approximate marginal likelihoods.
//!
//!     cargo run --release --example simulate_and_fit -- [n] [seed]

use hetgp::data::{simulate, SIMULATION_NU};
use hetgp::hyperprior::PriorSpec;
use hetgp::{map_estimate, Objective, OptimizerConfig};

fn main() -> hetgp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(150);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);

    let sim = simulate(n, seed, SIMULATION_NU)?;
    println!("simulated n = {n}, seed = {seed}, true ν = {SIMULATION_NU}");
    for which in [Objective::Q1, Objective::Q2] {
        let r = map_estimate(&sim.data.y, &sim.data.x, &PriorSpec::default(), which, &OptimizerConfig::default())?;
        let th = &r.theta_hat;
        println!(
            "{which:?}: ν̂ = {:.3}  σ1² = {:.3}  ℓ1 = {:.3}  σ2² = {:.3}  ℓ2 = {:.3}  objective = {:.3}  converged = {}",
            th.nu(),
            th.sigma1_sq(),
            th.ell1()[0],
            th.sigma2_sq(),
            th.ell2()[0],
            r.objective,
            r.converged
        );
    }
    Ok(())
}
