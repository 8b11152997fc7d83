mod common;

use common::*;
use hetgp::weibull::*;
use hetgp::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn density_mass(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    quadrature::integrate(|y| if y > 0.0 { f(y).exp() } else { 0.0 }, 0.0, hi, 1e-12).integral
}

#[test]
fn densities_are_normalized() {
    let m = density_mass(|y| logpdf_common(y, 7.0, 1.5).unwrap(), 3.0);
    assert!((m - 1.0).abs() <= 1e-8, "{m}");
    let m = density_mass(|y| logpdf_orthogonal(y, 1.0, 0.0).unwrap(), 6.0);
    assert!((m - 1.0).abs() <= 1e-8, "{m}");
}

#[test]
fn mode_matches_closed_form() {
    for (a1, a2) in [(7.0f64, 1.5), (1.5, 0.3), (3.0, 2.0)] {
        let y0 = ((a1 - 1.0) / a1).powf(1.0 / a1) / a2;
        let slope = central_diff(|y| logpdf_common(y, a1, a2).unwrap(), y0, 1e-6 * y0);
        assert!(slope.abs() <= 1e-6, "({a1}, {a2}): slope {slope}");
        let f0 = logpdf_common(y0, a1, a2).unwrap();
        assert!(logpdf_common(0.99 * y0, a1, a2).unwrap() < f0 && logpdf_common(1.01 * y0, a1, a2).unwrap() < f0);
    }
}

#[test]
fn round_trips_are_exact_to_rounding() {
    let mut r = rng(41);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a1, a2) = (r.random_range(0.2..10.0), r.random_range(0.2..10.0));
        let (e1, e2) = to_orthogonal(a1, a2).unwrap();
        let (b1, b2) = from_orthogonal(e1, e2);
        worst = worst.max((a1 - b1).abs()).max((a2 - b2).abs());
        let y = r.random_range(0.01..5.0);
        let direct = logpdf_common(y, a1, a2).unwrap();
        worst = worst.max((logpdf_orthogonal(y, e1, e2).unwrap() - direct).abs() / direct.abs().max(1.0));
    }
    assert!(worst <= 1e-12, "{worst}");
}

proptest! {
    #[test]
    fn orthogonal_coordinates_round_trip(e1 in -2.0f64..2.5, e2 in -3.0f64..3.0) {
        let p = WeibullParams::from_orthogonal(e1, e2).unwrap();
        let (f1, f2) = p.orthogonal();
        prop_assert!((f1 - e1).abs() <= 1e-12 && (f2 - e2).abs() <= 1e-12);
    }
}

#[test]
fn analytic_hessians_match_nested_differences() {
    let mut r = rng(42);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = WeibullParams::new(r.random_range(0.5..8.0), r.random_range(0.3..3.0)).unwrap();
        let y = p.sample(1, r.random())[0];
        for coords in [Parametrization::Common, Parametrization::Orthogonal] {
            let v = p.coords(coords);
            let h = neg_hessian(y, coords, v);
            let f = |w: [f64; 2]| log_likelihood(&[y], coords, w);
            let eps = 1e-4;
            let d2 = |i: usize, j: usize| {
                let g = |s: f64, t: f64| {
                    let mut w = v;
                    w[i] += s * eps;
                    w[j] += t * eps;
                    f(w)
                };
                (g(1.0, 1.0) - g(1.0, -1.0) - g(-1.0, 1.0) + g(-1.0, -1.0)) / (4.0 * eps * eps)
            };
            for (k, (i, j)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                worst = worst.max(rel_err(h[k], -d2(i, j)));
            }
        }
    }
    assert!(worst <= 1e-5, "{worst}");
}

#[test]
fn orthogonal_coordinates_have_diagonal_information() {
    let p = WeibullParams::new(7.0, 1.5).unwrap();
    let eta = fisher_offdiagonal_check(&p, Parametrization::Orthogonal, 1_000_000, 1).unwrap();
    assert!(eta.normalized.abs() <= 0.02 && eta.normalized.abs() <= 3.0 * eta.std_error, "{eta:?}");

    // closed form in the common coordinates: c / √(π²/6 + c²)
    let c = orthogonal_constant();
    let exact = c / (std::f64::consts::PI.powi(2) / 6.0 + c * c).sqrt();
    let alpha = fisher_offdiagonal_check(&p, Parametrization::Common, 1_000_000, 1).unwrap();
    assert!(alpha.normalized.abs() >= 10.0 * alpha.std_error, "{alpha:?}");
    assert!((alpha.normalized - exact).abs() <= 3.0 * alpha.std_error, "{} vs {exact}", alpha.normalized);
}

#[test]
fn orthogonality_holds_across_the_parameter_space() {
    let mut r = rng(43);
    for i in 0..10 {
        let p = WeibullParams::new(r.random_range(0.5..10.0), r.random_range(0.2..5.0)).unwrap();
        let chk = fisher_offdiagonal_check(&p, Parametrization::Orthogonal, 1_000_000, 100 + i).unwrap();
        assert!(chk.normalized.abs() <= 0.02, "{p:?}: {chk:?}");
    }
}

#[test]
fn gaussian_location_scale_is_orthogonal() {
    let mut r = rng(44);
    let log_s = 0.4f64;
    let s = log_s.exp();
    let chk = monte_carlo_offdiagonal(200_000, || {
        let z: f64 = StandardNormal.sample(&mut r);
        let e = s * z;
        [1.0 / (s * s), 2.0 * e / (s * s), 2.0 * e * e / (s * s)]
    })
    .unwrap();
    assert!(chk.normalized.abs() <= 3.0 * chk.std_error, "{chk:?}");
    assert!(fisher_offdiagonal_check(&WeibullParams::new(1.0, 1.0).unwrap(), Parametrization::Common, 10, 0).is_err());
}

#[test]
fn quadratic_objective_is_solved_in_one_step() {
    let f = |v: [f64; 2]| -(2.0 * (v[0] - 1.0).powi(2) + (v[0] - 1.0) * (v[1] + 2.0) + 0.5 * (v[1] + 2.0).powi(2));
    let fit = laplace_fit_2d(f, [5.0, 5.0], &Newton2dConfig::default()).unwrap();
    assert_eq!(fit.iterations, 1);
    // exact up to the rounding of the finite-difference Hessian
    assert!((fit.mode[0] - 1.0).abs() <= 1e-6 && (fit.mode[1] + 2.0).abs() <= 1e-6, "{:?}", fit.mode);
    // negative Hessian [[4, 1], [1, 1]] has inverse [[1, −1], [−1, 4]] / 3
    let want = [[1.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 4.0 / 3.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((fit.cov[i][j] - want[i][j]).abs() <= 1e-6, "{:?}", fit.cov);
        }
    }
}

#[test]
fn fit_failures_are_reported() {
    let saddle = laplace_fit_2d(|v| v[0] * v[0] - v[1] * v[1], [0.0, 0.0], &Newton2dConfig::default());
    assert!(matches!(saddle, Err(Error::Numerical(_))), "{saddle:?}");
    let cfg = Newton2dConfig {
        max_iter: 5,
        ..Default::default()
    };
    let unbounded = laplace_fit_2d(|v| v[0] - v[1] * v[1], [0.0, 0.0], &cfg);
    assert!(matches!(unbounded, Err(Error::NoConvergence { .. })), "{unbounded:?}");
    assert!(laplace_fit_2d(|_| f64::NAN, [0.0, 0.0], &cfg).is_err());
}

#[test]
fn mle_is_equivariant_under_reparametrization() {
    let truth = WeibullParams::new(7.0, 1.5).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let data = truth.sample(15, 500 + seed);
        let cfg = Newton2dConfig::default();
        let a = laplace_fit_2d(|v| log_likelihood(&data, Parametrization::Common, v), [1.0, 1.0], &cfg).unwrap();
        let start = truth.coords(Parametrization::Orthogonal);
        let e = laplace_fit_2d(|v| log_likelihood(&data, Parametrization::Orthogonal, v), start, &cfg).unwrap();
        let (b1, b2) = from_orthogonal(e.mode[0], e.mode[1]);
        worst = worst.max((a.mode[0] - b1).abs()).max((a.mode[1] - b2).abs());
        assert!((a.log_density - e.log_density).abs() <= 1e-9);
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn orthogonal_posterior_is_closer_to_independent() {
    let rep = demo(&WeibullParams::new(7.0, 1.5).unwrap(), &[3, 15], 7, 21).unwrap();
    assert_eq!(rep.cases.iter().map(|c| c.n).collect::<Vec<_>>(), vec![3, 15]);
    for case in &rep.cases {
        let (common, orth) = (&case.fits[0], &case.fits[1]);
        assert_eq!(common.parametrization, Parametrization::Common);
        assert_eq!(case.data.len(), case.n);
        assert!(orth.correlation.abs() < common.correlation.abs(), "n={}: {} vs {}", case.n, orth.correlation, common.correlation);
        assert_eq!(orth.surface.values.len(), 21);
        assert!(orth.gaussian_gap.is_finite());
    }
    let json = serde_json::to_value(&rep).unwrap();
    for key in ["truth", "seed", "cases"] {
        assert!(json.get(key).is_some());
    }
    let fit = &json["cases"][1]["fits"][1];
    for key in ["parametrization", "fit", "correlation", "gaussian_gap", "surface"] {
        assert!(fit.get(key).is_some(), "{key}");
    }
}
