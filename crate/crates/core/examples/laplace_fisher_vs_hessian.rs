//! The two Gaussian approximations at the same mode: observed Hessian `W`
//! (q1) against its expectation `E[W]` (q2).

use hetgp::data::{simulate, SIMULATION_NU};
use hetgp::{find_mode, laplace_posterior, Curvature, HyperParams, LaplaceFit, ModeFinderConfig};

fn main() -> hetgp::Result<()> {
    let sim = simulate(60, 4, SIMULATION_NU)?;
    let (y, x) = (&sim.data.y, &sim.data.x);
    let theta = HyperParams::from_natural(SIMULATION_NU, 2.0, &[1.0], 1.0, &[1.5])?;
    let mode = find_mode(y, x, &theta, &ModeFinderConfig::default())?;
    println!("mode found in {} natural-gradient iterations", mode.iterations);

    let w = LaplaceFit::from_mode(mode.clone(), Curvature::HessianW)?;
    let ew = LaplaceFit::from_mode(mode, Curvature::FisherEW)?;
    println!("q1 = {:.4}   q2 = {:.4}", w.log_marginal, ew.log_marginal);

    let (pw, pe) = (laplace_posterior(&w)?, laplace_posterior(&ew)?);
    println!("{:>7} {:>8} {:>10} {:>10} {:>10} {:>10}", "x", "y", "var f1 W", "var f1 EW", "var f2 W", "var f2 EW");
    for i in (0..y.len()).step_by(6) {
        println!(
            "{:7.2} {:8.3} {:10.4} {:10.4} {:10.4} {:10.4}",
            x[(i, 0)],
            y[i],
            pw.variances.f1[i],
            pe.variances.f1[i],
            pw.variances.f2[i],
            pe.variances.f2[i]
        );
    }
    let worst = pe.cross_covariances.amax();
    println!("largest |Cov(f1, f2)| under E[W]: {worst:e}");
    Ok(())
}
