//! Point estimates with standard errors, ratio estimators and small fits.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BatchMeans,
    DeltaRatio,
    PlainMean,
    Regression,
    Extrapolation,
    Deterministic,
}

/// Estimate with a standard error; intervals are always `value ± 3·se`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub method: Method,
}

pub const CI_SIGMAS: f64 = 3.0;

impl EstimateWithCI {
    pub fn exact(value: f64) -> Self {
        EstimateWithCI { value, se: 0.0, n: 1, method: Method::Deterministic }
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.value - CI_SIGMAS * self.se, self.value + CI_SIGMAS * self.se)
    }

    /// Whether `target` lies inside the 3σ interval.
    pub fn covers(&self, target: f64) -> bool {
        (self.value - target).abs() <= CI_SIGMAS * self.se
    }

    /// `√(se₁² + se₂²)`.
    pub fn combined_se(&self, other: &EstimateWithCI) -> f64 {
        self.se.hypot(other.se)
    }

    /// Whether the two estimates agree within 3 combined standard errors.
    pub fn agrees_with(&self, other: &EstimateWithCI) -> bool {
        (self.value - other.value).abs() <= CI_SIGMAS * self.combined_se(other)
    }

    pub fn scale(&self, s: f64) -> EstimateWithCI {
        EstimateWithCI { value: s * self.value, se: s.abs() * self.se, ..*self }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn variance(xs: &[f64]) -> f64 {
    covariance(xs, xs)
}

/// Mean of independent samples with `se = s/√n`.
pub fn plain_mean(xs: &[f64]) -> EstimateWithCI {
    let n = xs.len();
    let se = if n > 1 { (variance(xs) / n as f64).sqrt() } else { f64::INFINITY };
    EstimateWithCI { value: mean(xs), se, n, method: Method::PlainMean }
}

/// Mean of a (possibly correlated) series by non-overlapping batch means.
/// `n_batches = None` uses `⌈√n⌉` batches.
pub fn batch_means(xs: &[f64], n_batches: Option<usize>) -> EstimateWithCI {
    let n = xs.len();
    let b = n_batches.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize).clamp(1, n.max(1));
    let size = n / b;
    if size == 0 || b < 2 {
        return EstimateWithCI { method: Method::BatchMeans, ..plain_mean(xs) };
    }
    let batches: Vec<f64> = (0..b).map(|k| mean(&xs[k * size..(k + 1) * size])).collect();
    let se = (variance(&batches) / b as f64).sqrt();
    EstimateWithCI { value: mean(xs), se, n, method: Method::BatchMeans }
}

/// `Σy/Σt` for i.i.d. pairs with a delta-method standard error.
pub fn ratio_of_means(ys: &[f64], ts: &[f64]) -> EstimateWithCI {
    let n = ys.len();
    let (my, mt) = (mean(ys), mean(ts));
    let r = my / mt;
    let resid: f64 = ys.iter().zip(ts).map(|(y, t)| (y - r * t).powi(2)).sum();
    let se = if n > 1 { (resid / (n as f64 * (n as f64 - 1.0))).sqrt() / mt.abs() } else { f64::INFINITY };
    EstimateWithCI { value: r, se, n, method: Method::DeltaRatio }
}

/// Ratio estimator with the pairs grouped into `n_batches` consecutive batches.
pub fn batched_ratio(ys: &[f64], ts: &[f64], n_batches: usize) -> EstimateWithCI {
    let n = ys.len();
    let size = n / n_batches.max(1);
    if size == 0 || n_batches < 2 {
        return ratio_of_means(ys, ts);
    }
    let sum = |v: &[f64], k: usize| v[k * size..(k + 1) * size].iter().sum::<f64>();
    let by: Vec<f64> = (0..n_batches).map(|k| sum(ys, k)).collect();
    let bt: Vec<f64> = (0..n_batches).map(|k| sum(ts, k)).collect();
    let mut est = ratio_of_means(&by, &bt);
    est.value = mean(ys) / mean(ts);
    est.n = n;
    est
}

/// Lag-one sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
}

/// Weighted least squares `y ≈ intercept + slope·x` with weights `1/se²`.
///
/// With `se` all zero the fit is unweighted and the standard errors come
/// from the residual scatter.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], se: &[f64]) -> LinearFit {
    let unweighted = se.iter().all(|s| *s <= 0.0);
    let w: Vec<f64> = se.iter().map(|s| if unweighted { 1.0 } else { 1.0 / (s * s).max(1e-300) }).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let (mut var_slope, mut var_int) = (sw / det, sxx / det);
    if unweighted {
        let dof = (x.len() as f64 - 2.0).max(1.0);
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        var_slope *= rss / dof;
        var_int *= rss / dof;
    }
    LinearFit { slope, slope_se: var_slope.sqrt(), intercept, intercept_se: var_int.sqrt() }
}

/// Richardson extrapolation to `λ → 0` from values at `λ` and `λ/ratio`
/// assuming an error of order `λ^order`.
pub fn richardson(coarse: &EstimateWithCI, fine: &EstimateWithCI, ratio: f64, order: f64) -> EstimateWithCI {
    let q = ratio.powf(order);
    let value = (q * fine.value - coarse.value) / (q - 1.0);
    let se = ((q * fine.se).powi(2) + coarse.se.powi(2)).sqrt() / (q - 1.0);
    EstimateWithCI { value, se, n: coarse.n + fine.n, method: Method::Extrapolation }
}

/// Estimates along a decreasing `λ` grid with a log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub lambdas: Vec<f64>,
    pub values: Vec<EstimateWithCI>,
    pub slope: f64,
    pub slope_se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolated: Option<EstimateWithCI>,
}

impl ScalingFit {
    /// Fits `log value` against `log λ`, weighting by the relative errors.
    pub fn fit(lambdas: Vec<f64>, values: Vec<EstimateWithCI>) -> ScalingFit {
        let lx: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.value.abs().ln()).collect();
        let lse: Vec<f64> = values.iter().map(|v| v.se / v.value.abs()).collect();
        let (slope, slope_se) = if values.iter().all(|v| v.value != 0.0) && values.len() >= 2 {
            let fit = weighted_linear_fit(&lx, &ly, &lse);
            (fit.slope, fit.slope_se)
        } else {
            (f64::NAN, f64::NAN)
        };
        ScalingFit { lambdas, values, slope, slope_se, extrapolated: None }
    }

    /// Attaches an order-`order` Richardson extrapolant from the two smallest
    /// grid values.
    pub fn with_extrapolation(mut self, order: f64) -> ScalingFit {
        let n = self.values.len();
        if n >= 2 {
            let ratio = self.lambdas[n - 2] / self.lambdas[n - 1];
            self.extrapolated = Some(richardson(&self.values[n - 2], &self.values[n - 1], ratio, order));
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_of_constant_pairs_has_zero_error() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = t.iter().map(|t| 0.5 * t).collect();
        let r = ratio_of_means(&y, &t);
        assert!((r.value - 0.5).abs() < 1e-15);
        assert!(r.se < 1e-15);
    }

    #[test]
    fn ratio_se_matches_mean_se_for_unit_denominators() {
        let y = [1.0, 3.0, 2.0, 6.0, 4.0];
        let t = [1.0; 5];
        let a = ratio_of_means(&y, &t);
        let b = plain_mean(&y);
        assert!((a.value - b.value).abs() < 1e-15);
        assert!((a.se - b.se).abs() < 1e-14);
    }

    #[test]
    fn batch_means_of_iid_match_plain_roughly() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let b = batch_means(&xs, None);
        assert_eq!(b.n, 10_000);
        assert!((b.value - mean(&xs)).abs() < 1e-15);
    }

    #[test]
    fn exact_line_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = weighted_linear_fit(&x, &y, &[0.0; 4]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn richardson_removes_quadratic_error() {
        let v = |l: f64| EstimateWithCI { value: 3.0 + 5.0 * l * l, se: 0.0, n: 1, method: Method::PlainMean };
        let r = richardson(&v(0.2), &v(0.1), 2.0, 2.0);
        assert!((r.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_slope() {
        let lambdas = vec![0.4, 0.2, 0.1];
        let values = lambdas
            .iter()
            .map(|l: &f64| EstimateWithCI { value: 2.0 / l, se: 0.01, n: 10, method: Method::PlainMean })
            .collect();
        let fit = ScalingFit::fit(lambdas, values);
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_of_alternating_series() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((lag1_autocorrelation(&xs) + 0.99).abs() < 1e-12);
    }

    #[test]
    fn agreement_uses_combined_error() {
        let a = EstimateWithCI { value: 1.0, se: 0.3, n: 10, method: Method::PlainMean };
        let b = EstimateWithCI { value: 2.2, se: 0.4, n: 10, method: Method::PlainMean };
        assert!((a.combined_se(&b) - 0.5).abs() < 1e-15);
        assert!(a.agrees_with(&b));
        assert!(!a.covers(2.2));
    }
}
