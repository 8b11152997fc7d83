//! Special functions needed by the Student-t likelihood and the Weibull
//! reparametrization.

pub use statrs::function::gamma::ln_gamma;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Above this argument the half-integer gamma ratios switch to their
/// asymptotic expansions (the direct differences lose digits to cancellation).
const RATIO_ASYMPTOTIC_FROM: f64 = 1.0e4;

/// Digamma ψ(x) for x > 0.
///
/// Upward recurrence `ψ(x) = ψ(x + 1) − 1/x` until x ≥ 10, then the
/// asymptotic Bernoulli series through x^-12. Returns NaN for x ≤ 0.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return if x == f64::INFINITY { f64::INFINITY } else { f64::NAN };
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k) coefficients, Horner in 1/x^2
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// `ln Γ(x + 1/2) − ln Γ(x)`, accurate for large x.
pub fn ln_gamma_half_ratio(x: f64) -> f64 {
    if x >= RATIO_ASYMPTOTIC_FROM {
        let inv = 1.0 / x;
        0.5 * x.ln() - 0.125 * inv + inv * inv * inv / 192.0
    } else {
        ln_gamma(x + 0.5) - ln_gamma(x)
    }
}

/// `ψ(x + 1/2) − ψ(x)`, the derivative of [`ln_gamma_half_ratio`].
pub fn digamma_half_diff(x: f64) -> f64 {
    if x >= RATIO_ASYMPTOTIC_FROM {
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        0.5 * inv + 0.125 * inv2 - inv2 * inv2 / 64.0
    } else {
        digamma(x + 0.5) - digamma(x)
    }
}
