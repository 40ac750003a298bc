//! Path-level laws of the integrator against Gaussian and change-of-measure
//! references.

use driftlab_core::environment::{Environment, PeriodicCoefficients, TrigProfile};
use driftlab_core::functional::{make_functional, FunctionalDesc, FunctionalSpec};
use driftlab_core::sde::{bbar_decomposition_check, integrate_from, weight, IntegratorConfig};
use driftlab_core::stats::{mean, plain_mean, variance};

fn two_plus_sin() -> Environment {
    Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(2.0, 1.0, &[1]))).unwrap()
}

#[test]
fn constant_environment_is_brownian_with_drift() {
    let env = Environment::make_constant(2, 0.8).unwrap();
    let zero = FunctionalSpec::zero(2);
    let cfg = IntegratorConfig::new(0.05, 11, 0.5);
    let t = 4.0;
    let (mut x1, mut x2) = (Vec::new(), Vec::new());
    for i in 0..2000 {
        let p = integrate_from(&env, &zero, &cfg, t, [0.0; 2], i).unwrap();
        let x = p.x(p.last_index());
        x1.push(x[0]);
        x2.push(x[1]);
    }
    let a = 0.64;
    let m1 = plain_mean(&x1);
    assert!(m1.covers(0.5 * a * t), "{m1:?}");
    assert!(plain_mean(&x2).covers(0.0));
    let v = variance(&x1);
    // Sample variance of 2000 Gaussians: relative error about 3%.
    assert!((v / (a * t) - 1.0).abs() < 0.1, "{v}");
}

#[test]
fn bracket_stays_within_ellipticity_band() {
    let env = two_plus_sin();
    let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
    let cfg = IntegratorConfig::new(0.01, 3, 0.2);
    let p = integrate_from(&env, &f, &cfg, 50.0, [0.3, 0.0], 0).unwrap();
    let k = env.bounds().kappa;
    for i in 1..=p.last_index() {
        let t = p.time(i);
        let br = p.bracket(i);
        assert!(k * t <= br * (1.0 + 1e-12) && br <= t / k * (1.0 + 1e-12), "t = {t}: {br}");
    }
}

#[test]
fn decomposition_residual_is_first_order_in_the_step() {
    let env = two_plus_sin();
    let zero = FunctionalSpec::zero(1);
    let res = |h: f64| {
        let worst: Vec<f64> = (0..20)
            .map(|i| {
                let cfg = IntegratorConfig::new(h, 5, 0.0);
                let p = integrate_from(&env, &zero, &cfg, 2.0, [0.1, 0.0], i).unwrap();
                bbar_decomposition_check(&p, &env)
            })
            .collect();
        mean(&worst)
    };
    let (r1, r2) = (res(0.01), res(0.005));
    assert!(r1 < 0.1);
    let ratio = r1 / r2;
    assert!(ratio > 1.4 && ratio < 2.8, "{r1} {r2}");
}

#[test]
fn girsanov_weight_reproduces_forced_mean() {
    // E_0[w_λ(t) X(t)] = E_λ[X(t)] for the same environment.
    let env = two_plus_sin();
    let zero = FunctionalSpec::zero(1);
    let (lambda, t, n) = (0.3, 2.0, 4000);
    let free = IntegratorConfig::new(0.01, 21, 0.0);
    let forced = IntegratorConfig::new(0.01, 22, lambda);
    let mut weighted = Vec::with_capacity(n);
    let mut direct = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let p = integrate_from(&env, &zero, &free, t, [0.0; 2], i).unwrap();
        let w = weight(&p, lambda, p.time(p.last_index())).unwrap().value();
        weighted.push(w * p.lead(p.last_index()));
        let q = integrate_from(&env, &zero, &forced, t, [0.0; 2], i).unwrap();
        direct.push(q.lead(q.last_index()));
    }
    let a = plain_mean(&weighted);
    let b = plain_mean(&direct);
    assert!(a.agrees_with(&b), "{a:?} vs {b:?}");
    assert!(b.value > 0.0);
}
