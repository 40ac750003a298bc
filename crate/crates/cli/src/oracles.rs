//! Quadrature references for one-dimensional periodic environments.

use driftlab_core::environment::Environment;

const GL_X: [f64; 5] =
    [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss–Legendre on `panels` equal panels of `[lo, hi]`.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let w = (hi - lo) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * w;
        for k in 0..5 {
            s += GL_W[k] * f(mid + 0.5 * w * GL_X[k]);
        }
    }
    0.5 * w * s
}

fn a11(env: &Environment, x: f64) -> f64 {
    env.a(&[x, 0.0]).xx
}

/// `1/∫(1/a)`, the effective diffusivity in one dimension.
pub fn harmonic_mean(env: &Environment) -> f64 {
    1.0 / integrate(|x| 1.0 / a11(env, x), 0.0, 1.0, 256)
}

/// `∫a`.
pub fn arithmetic_mean(env: &Environment) -> f64 {
    integrate(|x| a11(env, x), 0.0, 1.0, 256)
}

/// Invariant density at the points `xs` from the integrating factor:
/// `a(f′ − 2λf) = −1` with periodicity, then unit mass.
pub fn steady_density(env: &Environment, lambda: f64, xs: &[f64]) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![1.0; xs.len()];
    }
    let inner = |x: f64| integrate(|s| (-2.0 * lambda * s).exp() / a11(env, s), 0.0, x, 32);
    let e = (2.0 * lambda).exp();
    let f0 = e * inner(1.0) / (e - 1.0);
    let f = |x: f64| (2.0 * lambda * x).exp() * (f0 - inner(x));
    let mass = integrate(f, 0.0, 1.0, 64);
    xs.iter().map(|x| f(*x) / mass).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use driftlab_core::environment::{PeriodicCoefficients, TrigProfile};

    #[test]
    fn two_plus_sine_means() {
        let env =
            Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(2.0, 1.0, &[1]))).unwrap();
        assert!((harmonic_mean(&env) - 3f64.sqrt()).abs() < 1e-12);
        assert!((arithmetic_mean(&env) - 2.0).abs() < 1e-12);
        let f = steady_density(&env, 0.3, &[0.0, 0.5]);
        assert!(f.iter().all(|v| *v > 0.0));
    }
}
