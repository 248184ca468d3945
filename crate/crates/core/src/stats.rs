//! Small statistical toolbox: moments, least squares, jackknife, tail fits.

use serde::{Deserialize, Serialize};

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Result of a straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

/// Ordinary least squares.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let w = vec![1.0; x.len()];
    weighted_linear_fit(x, y, &w)
}

/// Weighted least squares with weights proportional to inverse variances.
/// The slope standard error uses the residual scatter, so the absolute
/// normalisation of the weights does not matter.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.len());
    let n = x.len();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = (0..n)
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_stderr = if n > 2 {
        (ss_res / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
        points: n,
    }
}

/// Jackknife standard error from leave-one-out estimates.
pub fn jackknife_stderr(leave_one_out: &[f64]) -> f64 {
    let n = leave_one_out.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let m = mean(leave_one_out);
    ((n - 1.0) / n * leave_one_out.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Empirical CDF `P(X <= t)` on a grid, with binomial standard errors.
pub fn empirical_cdf(samples: &[f64], grid: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    grid.iter()
        .map(|&t| {
            let count = s.partition_point(|&v| v <= t);
            let p = count as f64 / n;
            (p, (p * (1.0 - p) / n).sqrt(), count)
        })
        .collect()
}

/// Log-log slope of an empirical CDF on a threshold grid. Points with zero
/// count are skipped; the rest are weighted by their counts (the Poisson
/// variance of `ln p` is `1/count`).
pub fn cdf_loglog_slope(grid: &[f64], counts: &[usize], total: usize) -> Option<LinearFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for (&g, &c) in grid.iter().zip(counts) {
        if c > 0 {
            x.push(g.ln());
            y.push((c as f64 / total as f64).ln());
            w.push(c as f64);
        }
    }
    if x.len() < 2 {
        return None;
    }
    Some(weighted_linear_fit(&x, &y, &w))
}

/// Hill estimator of the tail index from the `k` largest samples.
/// Returns `(alpha, stderr)` with `P(X > M) ~ M^{-alpha}`.
pub fn hill_estimator(samples: &[f64], k: usize) -> Option<(f64, f64)> {
    let mut s: Vec<f64> = samples.iter().copied().filter(|v| *v > 0.0).collect();
    if s.len() <= k || k < 2 {
        return None;
    }
    s.sort_by(|a, b| b.total_cmp(a));
    let threshold = s[k].ln();
    let mean_log: f64 = s[..k].iter().map(|v| v.ln() - threshold).sum::<f64>() / k as f64;
    let alpha = 1.0 / mean_log;
    Some((alpha, alpha / (k as f64).sqrt()))
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 5).
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(series);
    let c0: f64 = series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = (0..n - lag)
            .map(|i| (series[i] - m) * (series[i + lag] - m))
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if (lag as f64) >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_stderr.abs() < 1e-9);
    }

    #[test]
    fn slope_stderr_matches_textbook_ols() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.2, 2.8, 4.1];
        let f = linear_fit(&x, &y);
        let n = 5.0;
        let mx = 2.0;
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        let res: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - f.intercept - f.slope * a).powi(2))
            .sum();
        let se = (res / (n - 2.0) / sxx).sqrt();
        assert!((f.slope_stderr - se).abs() < 1e-12, "{} vs {}", f.slope_stderr, se);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn hill_on_pareto_quantiles() {
        // deterministic Pareto(alpha = 2) quantiles
        let n = 10_000;
        let s: Vec<f64> = (1..=n)
            .map(|i| (1.0 - (i as f64 - 0.5) / n as f64).powf(-0.5))
            .collect();
        let (a, _) = hill_estimator(&s, 500).unwrap();
        assert!((a - 2.0).abs() < 0.1, "alpha = {a}");
    }

    #[test]
    fn cdf_is_monotone() {
        let s = [0.3, 0.1, 0.2, 0.5];
        let c = empirical_cdf(&s, &[0.0, 0.15, 0.25, 1.0]);
        let p: Vec<f64> = c.iter().map(|t| t.0).collect();
        assert_eq!(p, vec![0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn iat_of_white_noise_is_near_one() {
        let s: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1013) as f64).collect();
        let t = integrated_autocorrelation_time(&s);
        assert!(t < 2.0, "{t}");
    }
}
