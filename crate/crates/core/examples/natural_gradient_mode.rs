//! Mode finding for the latent location and log-scale processes: natural
//! gradient against plain Newton, with the monotone objective trace.

use hetgp::data::{simulate, SIMULATION_NU};
use hetgp::{find_mode, HyperParams, ModeFinderConfig, ModeMethod};

fn main() -> hetgp::Result<()> {
    let sim = simulate(150, 2, SIMULATION_NU)?;
    let theta = HyperParams::from_natural(SIMULATION_NU, 2.2, &[1.0], 0.5, &[1.0])?;
    for method in [ModeMethod::NaturalGradient, ModeMethod::StabilizedNewton] {
        let cfg = ModeFinderConfig::with_method(method);
        match find_mode(&sim.data.y, &sim.data.x, &theta, &cfg) {
            Ok(m) => {
                let t = &m.objective_trace;
                println!(
                    "{method:?}: {} iterations, ‖∇Ψ‖∞ = {:.2e}, Ψ {:.3} -> {:.3}",
                    m.iterations,
                    m.final_grad_norm,
                    t[0],
                    t[t.len() - 1]
                );
                let monotone = t.windows(2).all(|w| w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
                println!("  monotone ascent: {monotone}");
            }
            Err(e) => println!("{method:?}: {e}"),
        }
    }
    Ok(())
}
