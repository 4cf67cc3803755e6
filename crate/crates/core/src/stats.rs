//! Monte Carlo estimates and Kolmogorov–Smirnov goodness-of-fit tests.

use serde::Serialize;

use crate::error::{CslError, Result};

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed_fingerprint: u64,
}

impl MonteCarloEstimate {
    /// Fraction `hits / n` with binomial standard error.
    pub fn proportion(hits: u64, n: u64, seed_fingerprint: u64) -> Self {
        if n == 0 {
            return MonteCarloEstimate {
                value: f64::NAN,
                std_error: f64::NAN,
                n,
                seed_fingerprint,
            };
        }
        let p = hits as f64 / n as f64;
        MonteCarloEstimate {
            value: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n,
            seed_fingerprint,
        }
    }

    /// Sample mean with standard error `sd / sqrt(n)`, from running sums.
    pub fn from_sums(sum: f64, sum_sq: f64, n: u64, seed_fingerprint: u64) -> Self {
        if n == 0 {
            return MonteCarloEstimate {
                value: f64::NAN,
                std_error: f64::NAN,
                n,
                seed_fingerprint,
            };
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        MonteCarloEstimate {
            value: mean,
            std_error: (var / nf).sqrt(),
            n,
            seed_fingerprint,
        }
    }

    pub fn mean_of(xs: &[f64], seed_fingerprint: u64) -> Self {
        let sum: f64 = xs.iter().sum();
        let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
        Self::from_sums(sum, sum_sq, xs.len() as u64, seed_fingerprint)
    }

    /// `z = (self - other) / sqrt(se1² + se2²)`; zero when both are exact and equal.
    pub fn z_against(&self, other: &MonteCarloEstimate) -> f64 {
        z_score(self.value, self.std_error, other.value, other.std_error)
    }
}

pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let se = (se_a * se_a + se_b * se_b).sqrt();
    let d = a - b;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsOutcome {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// Survival function of the limiting Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Small-argument series for the CDF.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let w = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let cdf: f64 = (1..=7)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (m * m * y).exp()
            })
            .sum::<f64>()
            * w;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn corrected_p(d: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsOutcome> {
    if sample.is_empty() {
        return Err(CslError::domain("KS test on an empty sample"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((c - lo).abs()).max((hi - c).abs());
    }
    Ok(KsOutcome {
        statistic: d,
        p_value: corrected_p(d, n),
        n: xs.len(),
    })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(CslError::domain("KS test on an empty sample"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsOutcome {
        statistic: d,
        p_value: corrected_p(d, n * m / (n + m)),
        n: xs.len() + ys.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_quantiles() {
        // Classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 2e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 2e-4);
        // Both series agree at the switch point.
        let a = kolmogorov_survival(1.1799999);
        let b = kolmogorov_survival(1.18);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn uniform_grid_fits_uniform_cdf() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
        let shifted: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(ks_one_sample(&shifted, |x| x).unwrap().p_value < 1e-6);
    }

    #[test]
    fn two_sample_identical_and_disjoint() {
        let a: Vec<f64> = (0..500).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let b: Vec<f64> = (1000..1500).map(f64::from).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn proportion_standard_error() {
        let e = MonteCarloEstimate::proportion(25, 100, 0);
        assert_eq!(e.value, 0.25);
        assert!((e.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_estimate() {
        let e = MonteCarloEstimate::mean_of(&[1.0, 2.0, 3.0, 4.0], 0);
        assert_eq!(e.value, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.std_error - sd / 2.0).abs() < 1e-12);
    }
}
