//! Fit on a training split, then report predictive summaries, R1, R2 and
//! the summed log predictive density P on held-out points.

use hetgp::cli::{evaluate_dataset, RunConfig};
use hetgp::data::{simulate, SIMULATION_NU};
use hetgp::predict::{log_predictive_density, predict_response, PredictiveQuadrature, PredictiveSummary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = simulate(200, 5, SIMULATION_NU)?;
    let cfg = RunConfig::default().resolve()?;
    let art = evaluate_dataset(&sim.data, &cfg)?;
    let r = &art.report;
    println!("train {} / test {}: R1 = {:.4}  R2 = {:.4}  P = {:.3}", art.split.train.len(), art.split.test.len(), r.r1, r.r2, r.p_stat);
    println!("{:>7} {:>8} {:>8} {:>9} {:>9}", "x", "y", "mean", "sd(Y*)", "log p");
    for (k, s) in r.per_point.iter().enumerate().step_by(10) {
        let i = art.split.test[k];
        println!(
            "{:7.2} {:8.3} {:8.3} {:9.3} {:9.3}",
            sim.data.x[(i, 0)],
            sim.data.y[i],
            s.resp_mean.unwrap(),
            s.resp_var.unwrap().sqrt(),
            s.log_pred_density.unwrap()
        );
    }

    // with no latent uncertainty Var[Y*] = σ1² + ν/(ν−2) exp(2 μ2)
    let point = PredictiveSummary {
        mu1: 0.0,
        mu2: 0.0,
        var1: 1.5,
        var2: 0.0,
        cov12: 0.0,
        resp_mean: None,
        resp_var: None,
        log_pred_density: None,
    };
    let (_, v) = predict_response(&point, 3.0);
    println!("Var[Y*] at ν = 3, μ2 = 0, σ2² = 0, var f1 = 1.5: {:.6}", v.unwrap());
    let lp = log_predictive_density(&point, 3.0, 0.4, &PredictiveQuadrature::default())?;
    println!("log p(0.4) for that point: {lp:.6}");
    Ok(())
}
