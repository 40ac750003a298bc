//! Torus solver against closed-form one-dimensional references.

use driftlab_core::environment::{Environment, PeriodicCoefficients, TrigProfile};
use driftlab_core::functional::{make_functional, FunctionalDesc, FunctionalSpec};
use driftlab_core::homogenize::{
    corrector, effective_drift, effective_sigma, fdt_identities, functional_density, h_minus1, steady_state, TorusGrid,
    TorusSolution,
};
use std::f64::consts::PI;

fn two_plus_sin() -> Environment {
    Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(2.0, 1.0, &[1]))).unwrap()
}

fn a_two_plus_sin(x: f64) -> f64 {
    2.0 + (2.0 * PI * x).sin()
}

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(1, n).unwrap()
}

/// Five-point Gauss–Legendre on `panels` equal panels of `[lo, hi]`.
fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    const X: [f64; 5] =
        [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let w = (hi - lo) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * w;
        for k in 0..5 {
            s += W[k] * f(mid + 0.5 * w * X[k]);
        }
    }
    0.5 * w * s
}

/// Invariant density from the integrating factor: `a(f′ − 2λf) = −1` with
/// periodicity, then unit mass.
fn steady_oracle(lambda: f64, xs: &[f64]) -> Vec<f64> {
    let inner = |x: f64| integrate(|s| (-2.0 * lambda * s).exp() / a_two_plus_sin(s), 0.0, x, 32);
    let e = (2.0 * lambda).exp();
    let f0 = e * inner(1.0) / (e - 1.0);
    let f = |x: f64| (2.0 * lambda * x).exp() * (f0 - inner(x));
    let mass = integrate(f, 0.0, 1.0, 64);
    xs.iter().map(|x| f(*x) / mass).collect()
}

#[test]
fn effective_sigma_is_harmonic_mean() {
    let (s1, s2) = effective_sigma(&two_plus_sin(), grid(4096)).unwrap();
    assert!((s1 - 3f64.sqrt()).abs() < 1e-5 * 3f64.sqrt());
    assert!((s1 - s2).abs() <= 1e-8 * s1.abs().max(1.0));

    let recip =
        Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(1.0, 0.5, &[1]).reciprocal_of()))
            .unwrap();
    let (r1, r2) = effective_sigma(&recip, grid(4096)).unwrap();
    assert!((r1 - 1.0).abs() < 1e-5);
    assert!((r1 - r2).abs() <= 1e-8);
}

#[test]
fn corrector_slope_matches_closed_form() {
    let env = two_plus_sin();
    let s = 3f64.sqrt();
    for n in [256, 512] {
        let g = grid(n);
        let chi = corrector(&env, g).unwrap();
        assert!(chi.integral().abs() < 1e-13);
        let h = g.h();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let slope = (chi.values[(i + 1) % n] - chi.values[i]) / h;
            let face = (i + 1) as f64 * h;
            worst = worst.max((slope - (s / a_two_plus_sin(face) - 1.0)).abs());
        }
        assert!(worst < 1e-9, "n = {n}: {worst}");
    }
}

#[test]
fn steady_state_without_forcing_is_uniform() {
    let f = steady_state(&two_plus_sin(), 0.0, grid(256)).unwrap();
    assert!(f.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn steady_state_converges_at_second_order() {
    let env = two_plus_sin();
    let err = |n: usize| {
        let g = grid(n);
        let f = steady_state(&env, 0.1, g).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-12);
        assert!(f.min() > 0.0);
        let xs: Vec<f64> = (0..n).map(|c| g.cell_center(c)[0]).collect();
        let oracle = steady_oracle(0.1, &xs);
        f.values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(64), err(128));
    let order = (e1 / e2).log2();
    assert!(order >= 1.9, "errors {e1:.3e} {e2:.3e}, order {order}");
}

#[test]
fn drift_functional_identities() {
    let env = two_plus_sin();
    let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
    let g = grid(4096);
    let rep = fdt_identities(&env, &f, 1e-2, g).unwrap();
    let exact = 3f64.sqrt() - 2.0;
    assert!((rep.sigma_gap.unwrap() - exact).abs() < 1e-6);
    assert!((rep.gamma_bar - rep.minus_two_f_chi).abs() < 1e-6);
    assert!((rep.gamma_bar - exact).abs() < 1e-6);

    let e = |l: f64| {
        let r = fdt_identities(&env, &f, l, g).unwrap();
        (r.dnu_dlambda - r.gamma_bar).abs()
    };
    let (e1, e2, e3) = (e(0.04), e(0.02), e(0.01));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((ratio - 4.0).abs() < 1.2, "ratio {ratio}");
    }

    let h = h_minus1(&env, &f, &f, g).unwrap();
    assert!((h.sigma_ff - (2.0 - 3f64.sqrt())).abs() < 1e-6);
    assert!((h.norm_f.powi(2) - h.sigma_ff / 2.0).abs() < 1e-15);

    // ∫ b χ₁ = −½ Γ̄.
    let chi = corrector(&env, g).unwrap();
    let fd = functional_density(&env, &f, g).unwrap();
    assert!((fd.dot(&chi) - (2.0 - 3f64.sqrt()) / 2.0).abs() < 1e-6);
    assert!(fd.integral().abs() < 1e-12);
}

#[test]
fn einstein_relation_from_drift() {
    let env = two_plus_sin();
    let g = grid(4096);
    let lam = 1e-2;
    let slope = (effective_drift(&env, lam, g).unwrap()[0] - effective_drift(&env, -lam, g).unwrap()[0]) / (2.0 * lam);
    assert!((slope - 3f64.sqrt()).abs() < 1e-3);
    assert_eq!(effective_drift(&env, 0.0, g).unwrap()[0].abs() < 1e-14, true);
}

#[test]
fn constant_environment_gives_trivial_values() {
    let env = Environment::make_constant(1, 1.3).unwrap();
    let g = grid(64);
    let ell = effective_drift(&env, 0.25, g).unwrap();
    assert!((ell[0] - 0.25 * 1.69).abs() < 1e-12);
    let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
    let rep = fdt_identities(&env, &f, 1e-2, g).unwrap();
    for v in [rep.dnu_dlambda, rep.gamma_bar, rep.minus_two_f_chi, rep.sigma_gap.unwrap()] {
        assert!(v.abs() < 1e-12);
    }
    let zero = FunctionalSpec::zero(1);
    assert_eq!(h_minus1(&env, &zero, &zero, g).unwrap().sigma_ff, 0.0);
}

#[test]
fn covariance_form_is_symmetric() {
    let env = two_plus_sin();
    let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
    let g = make_functional(
        &env,
        &FunctionalDesc::Custom { flux: vec![TrigProfile::sine(0.0, 0.4, &[2])], locality_radius: 0.0, sup_norm: None },
    )
    .unwrap();
    let grid = grid(512);
    let fg = h_minus1(&env, &f, &g, grid).unwrap();
    let gf = h_minus1(&env, &g, &f, grid).unwrap();
    assert!((fg.sigma_fg - gf.sigma_fg).abs() < 1e-13);
    assert!(fg.sigma_ff >= 0.0 && fg.sigma_gg >= 0.0);
}

#[test]
fn solution_bundle_exports() {
    let env = two_plus_sin();
    let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
    let sol = TorusSolution::solve(&env, grid(64), 0.1, &[("b", &f)]).unwrap();
    assert!((sol.sigma1 - sol.sigma1_alt).abs() < 1e-12);
    // The potential of the discrete drift is the corrector itself.
    let u = &sol.u_f[0].1;
    assert!(u.values.iter().zip(&sol.chi1.values).all(|(a, b)| (a - b).abs() < 1e-12));
    let mut buf = Vec::new();
    sol.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x,f_lambda,chi1,u_b"));
    assert_eq!(text.lines().count(), 65);
}
