//! Law of the positive stable variable with `E[e^{-λX}] = e^{-λ^α}`.
//!
//! Both functions use Kanter's representation `X = (A(U)/W)^{(1-α)/α}` with
//! `U ~ Uniform(0, π)`, `W ~ Exp(1)` and
//! `A(u) = sin(αu)^{α/(1-α)} sin((1-α)u) / sin(u)^{1/(1-α)}`, which gives
//! `P(X <= z) = (1/π) ∫_0^π exp(-A(u) z^{-α/(1-α)}) du`.

use std::f64::consts::PI;

use crate::quad::{self, Tolerance};

fn kanter_a(alpha: f64, u: f64) -> f64 {
    let r = 1.0 / (1.0 - alpha);
    (alpha * u).sin().powf(alpha * r) * ((1.0 - alpha) * u).sin() / u.sin().powf(r)
}

pub fn stable_cdf(alpha: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if !z.is_finite() {
        return 1.0;
    }
    let k = z.powf(-alpha / (1.0 - alpha));
    let integrand = |u: f64| {
        // Gauss-Kronrod nodes are interior, so the endpoints are never hit.
        if u <= 0.0 || u >= PI {
            return 0.0;
        }
        (-kanter_a(alpha, u) * k).exp()
    };
    quad::integrate(integrand, 0.0, PI, Tolerance::rel(1e-11))
        .map(|r| (r.value / PI).clamp(0.0, 1.0))
        .unwrap_or(f64::NAN)
}

pub fn stable_density(alpha: f64, z: f64) -> f64 {
    if z <= 0.0 || !z.is_finite() {
        return 0.0;
    }
    let e = alpha / (1.0 - alpha);
    let k = z.powf(-e);
    let integrand = |u: f64| {
        if u <= 0.0 || u >= PI {
            return 0.0;
        }
        let a = kanter_a(alpha, u);
        a * (-a * k).exp()
    };
    quad::integrate(integrand, 0.0, PI, Tolerance::rel(1e-11))
        .map(|r| r.value / PI * e * k / z)
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_stable_is_levy_distribution() {
        // Index 1/2: P(X <= z) = erfc(1 / (2 sqrt z)).
        for &z in &[0.05f64, 0.3, 1.0, 2.5, 40.0] {
            let exact = libm::erfc(0.5 / z.sqrt());
            assert!((stable_cdf(0.5, z) - exact).abs() < 1e-9, "z={z}");
            let dens = (-0.25 / z).exp() / (2.0 * PI.sqrt() * z.powf(1.5));
            assert!((stable_density(0.5, z) / dens - 1.0).abs() < 1e-8, "z={z}");
        }
        assert!((stable_cdf(0.5, 1.0) - 0.4795001221869535).abs() < 1e-9);
    }

    #[test]
    fn density_integrates_to_cdf_increment() {
        for &alpha in &[0.3, 0.7] {
            let (a, b) = (0.5, 3.0);
            let mass = quad::integrate(|z| stable_density(alpha, z), a, b, Tolerance::rel(1e-9))
                .unwrap()
                .value;
            let diff = stable_cdf(alpha, b) - stable_cdf(alpha, a);
            assert!((mass - diff).abs() < 1e-7, "α={alpha}: {mass} vs {diff}");
        }
    }

    #[test]
    fn right_tail_matches_levy_measure() {
        // P(X > z) ~ z^{-α} / Γ(1-α) as z → ∞.
        let alpha = 0.6;
        let z = 1e6;
        let tail = 1.0 - stable_cdf(alpha, z);
        let asym = z.powf(-alpha) / libm::tgamma(1.0 - alpha);
        assert!((tail / asym - 1.0).abs() < 1e-2);
    }
}
