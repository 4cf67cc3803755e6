//! Subordinator paths: exact stable marginals and the compound-Poisson
//! approximation with small jumps replaced by their mean drift.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

use crate::error::{CslError, Result};
use crate::levy::{LevyTail, SubordinatorModel};
use crate::report::fmt_num;
use crate::rng::SimRng;

/// Jump rate used to pick the default cutoff: `Π̄(ε) = DEFAULT_JUMP_RATE`.
pub const DEFAULT_JUMP_RATE: f64 = 1000.0;

/// The `ε` with `Π̄(ε) = rate`.
pub fn cutoff_for_rate(model: &SubordinatorModel, rate: f64) -> Result<f64> {
    model.tail_inverse(rate)
}

/// Draws jump times and sizes of the approximating compound-Poisson process.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    model: SubordinatorModel,
    cutoff: f64,
    truncation: Option<f64>,
    tail_cut: f64,
    tail_trunc: f64,
    rate: f64,
    drift_slope: f64,
}

impl JumpSampler {
    pub fn new(model: &SubordinatorModel, cutoff: f64, truncation: Option<f64>) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(CslError::domain(format!("cutoff must be positive, got {cutoff}")));
        }
        if let Some(a) = truncation {
            if !(a > cutoff) {
                return Err(CslError::domain(format!("truncation {a} must exceed the cutoff {cutoff}")));
            }
        }
        let tail_cut = model.tail(cutoff);
        if !tail_cut.is_finite() {
            return Err(CslError::numeric(format!("tail at the cutoff {cutoff} is not finite")));
        }
        let tail_trunc = truncation.map_or(0.0, |a| model.tail(a));
        let small = model.small_jump_mean(cutoff)?;
        if !small.is_finite() {
            return Err(CslError::numeric("small-jump mean is not finite"));
        }
        Ok(JumpSampler {
            model: model.clone(),
            cutoff,
            truncation,
            tail_cut,
            tail_trunc,
            rate: tail_cut - tail_trunc,
            drift_slope: model.drift() + small,
        })
    }

    /// Sampler whose cutoff gives `rate` jumps per unit time before truncation.
    pub fn with_rate(model: &SubordinatorModel, rate: f64, truncation: Option<f64>) -> Result<Self> {
        Self::new(model, cutoff_for_rate(model, rate)?, truncation)
    }

    pub fn model(&self) -> &SubordinatorModel {
        &self.model
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// Poisson rate `Π̄(ε) - Π̄(a)` of simulated jumps.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `Π̄(ε)`.
    pub fn tail_at_cutoff(&self) -> f64 {
        self.tail_cut
    }

    /// `d + ∫_0^ε x Π(dx)`.
    pub fn drift_slope(&self) -> f64 {
        self.drift_slope
    }

    #[inline]
    pub fn interarrival(&self, rng: &mut SimRng) -> f64 {
        if self.rate <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = Exp1.sample(rng);
        e / self.rate
    }

    /// Jump size by inversion of `v ↦ (Π̄(v) - Π̄(a)) / (Π̄(ε) - Π̄(a))`.
    #[inline]
    pub fn jump_size(&self, rng: &mut SimRng) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        let level = self.tail_trunc + u * self.rate;
        let x = match self.model.levy_tail() {
            LevyTail::Stable(p) => (p.tail_constant() / level).powf(1.0 / p.alpha),
            _ => self.model.tail_inverse(level).unwrap_or(self.cutoff),
        };
        let x = x.max(self.cutoff);
        match self.truncation {
            Some(a) => x.min(a),
            None => x,
        }
    }
}

/// A sampled path `X_t = drift_slope · t + Σ_{τ_i <= t} S_i` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    horizon: f64,
    times: Vec<f64>,
    sizes: Vec<f64>,
    /// `cum[i] = S_0 + ... + S_i`.
    cum: Vec<f64>,
    drift_slope: f64,
    cutoff: f64,
    truncation: Option<f64>,
}

impl SamplePath {
    /// Builds a path from explicit jumps; times must be strictly increasing in `(0, horizon]`.
    pub fn from_jumps(horizon: f64, drift_slope: f64, jumps: &[(f64, f64)]) -> Result<Self> {
        if !(horizon > 0.0) || !(drift_slope >= 0.0) {
            return Err(CslError::domain("path needs horizon > 0 and drift slope >= 0"));
        }
        let mut prev = 0.0;
        for &(t, s) in jumps {
            if !(t > prev) || t > horizon || !(s > 0.0) {
                return Err(CslError::domain(format!("invalid jump ({t}, {s})")));
            }
            prev = t;
        }
        let min_size = jumps.iter().map(|j| j.1).fold(f64::INFINITY, f64::min);
        let mut path = SamplePath {
            horizon,
            times: Vec::with_capacity(jumps.len()),
            sizes: Vec::with_capacity(jumps.len()),
            cum: Vec::with_capacity(jumps.len()),
            drift_slope,
            cutoff: if min_size.is_finite() { min_size * 0.5 } else { 1.0 },
            truncation: None,
        };
        for &(t, s) in jumps {
            path.push(t, s);
        }
        Ok(path)
    }

    fn push(&mut self, t: f64, s: f64) {
        let c = self.cum.last().copied().unwrap_or(0.0) + s;
        self.times.push(t);
        self.sizes.push(s);
        self.cum.push(c);
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn drift_slope(&self) -> f64 {
        self.drift_slope
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.sizes.iter().copied())
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    /// Sum of jumps up to and including index `i`.
    pub fn cumulative(&self, i: usize) -> f64 {
        self.cum[i]
    }

    /// `X_t`, right-continuous.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(CslError::domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        let k = self.times.partition_point(|&s| s <= t);
        let jumps = if k == 0 { 0.0 } else { self.cum[k - 1] };
        Ok(self.drift_slope * t + jumps)
    }

    /// `X_{t-}`.
    pub fn left_limit(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(CslError::domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        let k = self.times.partition_point(|&s| s < t);
        let jumps = if k == 0 { 0.0 } else { self.cum[k - 1] };
        Ok(self.drift_slope * t + jumps)
    }

    /// Time and size of the first jump larger than `x`.
    pub fn first_big_jump(&self, x: f64) -> Result<Option<(f64, f64)>> {
        if !(x > self.cutoff) {
            return Err(CslError::domain(format!(
                "jumps below the cutoff {} are not simulated (asked for x = {x})",
                self.cutoff
            )));
        }
        Ok(self.jumps().find(|&(_, s)| s > x))
    }

    pub fn largest_jump(&self) -> f64 {
        self.sizes.iter().copied().fold(0.0, f64::max)
    }

    /// CSV dump `t,jump_size,cum_value`, one row per jump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,jump_size,cum_value")?;
        for (i, (t, s)) in self.jumps().enumerate() {
            let v = self.drift_slope * t + self.cum[i];
            writeln!(w, "{},{},{}", fmt_num(t), fmt_num(s), fmt_num(v))?;
        }
        Ok(())
    }
}

/// Samples the approximating path on `[0, horizon]`.
///
/// Random numbers are consumed as (interarrival, size) pairs in time order,
/// so any walk that stops early sees exactly a prefix of this path.
pub fn sample_path(sampler: &JumpSampler, horizon: f64, rng: &mut SimRng) -> Result<SamplePath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CslError::domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut path = SamplePath {
        horizon,
        times: Vec::new(),
        sizes: Vec::new(),
        cum: Vec::new(),
        drift_slope: sampler.drift_slope,
        cutoff: sampler.cutoff,
        truncation: sampler.truncation,
    };
    let mut t = 0.0;
    loop {
        t += sampler.interarrival(rng);
        if t > horizon {
            break;
        }
        let s = sampler.jump_size(rng);
        path.push(t, s);
    }
    Ok(path)
}

/// Convenience wrapper building the sampler on the fly.
pub fn sample_model_path(
    model: &SubordinatorModel,
    horizon: f64,
    cutoff: f64,
    truncation: Option<f64>,
    rng: &mut SimRng,
) -> Result<SamplePath> {
    let sampler = JumpSampler::new(model, cutoff, truncation)?;
    sample_path(&sampler, horizon, rng)
}

/// Standard positive stable variate with `E[e^{-λX}] = e^{-λ^α}` (Kanter).
pub fn sample_standard_stable(alpha: f64, rng: &mut SimRng) -> f64 {
    let o: f64 = Open01.sample(rng);
    let u = PI * o;
    let w: f64 = Exp1.sample(rng);
    let r = 1.0 / (1.0 - alpha);
    let a = (alpha * u).sin().powf(alpha * r) * ((1.0 - alpha) * u).sin() / u.sin().powf(r);
    (a / w).powf((1.0 - alpha) / alpha)
}

/// Exact draw of `X_t` for the stable subordinator with Laplace exponent `c λ^α`.
pub fn sample_stable_value(alpha: f64, scale: f64, t: f64, rng: &mut SimRng) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(scale > 0.0) || !(t > 0.0) {
        return Err(CslError::domain(format!(
            "stable sampler needs α ∈ (0,1), c > 0, t > 0 (got {alpha}, {scale}, {t})"
        )));
    }
    Ok((scale * t).powf(1.0 / alpha) * sample_standard_stable(alpha, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::stats::{ks_one_sample, ks_two_sample};
    use proptest::prelude::*;

    fn half() -> SubordinatorModel {
        SubordinatorModel::stable(0.5, 1.0).unwrap()
    }

    #[test]
    fn value_at_examples() {
        let p = SamplePath::from_jumps(10.0, 0.0, &[(1.0, 5.0)]).unwrap();
        assert_eq!(p.value_at(0.0).unwrap(), 0.0);
        assert_eq!(p.value_at(1.0).unwrap(), 5.0);
        assert_eq!(p.value_at(0.999).unwrap(), 0.0);
        assert_eq!(p.left_limit(1.0).unwrap(), 0.0);
        let lin = SamplePath::from_jumps(10.0, 2.0, &[]).unwrap();
        assert_eq!(lin.value_at(3.0).unwrap(), 6.0);
        assert!(lin.value_at(11.0).is_err());
        assert!(lin.value_at(-0.1).is_err());
    }

    #[test]
    fn first_big_jump_examples() {
        let p = SamplePath::from_jumps(10.0, 0.0, &[(1.0, 2.0), (2.0, 7.0), (3.0, 9.0)]).unwrap();
        assert_eq!(p.first_big_jump(5.0).unwrap(), Some((2.0, 7.0)));
        assert_eq!(p.first_big_jump(20.0).unwrap(), None);
        assert!(p.first_big_jump(0.5).is_err());
    }

    #[test]
    fn identical_streams_give_identical_paths() {
        let s = JumpSampler::new(&half(), 1e-4, None).unwrap();
        let a = sample_path(&s, 1.0, &mut RngStream::new(7, 3).rng()).unwrap();
        let b = sample_path(&s, 1.0, &mut RngStream::new(7, 3).rng()).unwrap();
        assert_eq!(a, b);
        let c = sample_path(&s, 1.0, &mut RngStream::new(7, 4).rng()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mean_jump_count_matches_tail_at_cutoff() {
        let s = JumpSampler::new(&half(), 1e-4, None).unwrap();
        let expected = 100.0 / PI.sqrt();
        assert!((s.rate() - expected).abs() < 1e-9);
        let n = 4000;
        let total: usize = (0..n)
            .map(|i| sample_path(&s, 1.0, &mut RngStream::new(11, i).rng()).unwrap().jump_count())
            .sum();
        let mean = total as f64 / n as f64;
        let se = (expected / n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn truncated_jumps_stay_in_range() {
        let s = JumpSampler::new(&half(), 0.01, Some(2.0)).unwrap();
        for i in 0..200 {
            let p = sample_path(&s, 5.0, &mut RngStream::new(5, i).rng()).unwrap();
            assert!(p.jumps().all(|(_, x)| x > 0.01 && x <= 2.0));
            let cap = p.drift_slope() * 5.0 + p.jump_count() as f64 * 2.0;
            assert!(p.value_at(5.0).unwrap() <= cap);
        }
        assert!(JumpSampler::new(&half(), 0.01, Some(0.005)).is_err());
    }

    #[test]
    fn stable_variate_half_index_spot_value() {
        let n = 100_000;
        let mut rng = RngStream::new(99, 0).rng();
        let below = (0..n)
            .filter(|_| sample_stable_value(0.5, 1.0, 1.0, &mut rng).unwrap() <= 1.0)
            .count();
        let p = below as f64 / n as f64;
        let exact = libm::erfc(0.5);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 3.0 * se, "{p} vs {exact}");
    }

    #[test]
    fn stable_variate_matches_cdf_and_scaling() {
        let mut rng = RngStream::new(12, 0).rng();
        let xs: Vec<f64> = (0..20_000).map(|_| sample_standard_stable(0.7, &mut rng)).collect();
        let ks = ks_one_sample(&xs, |z| crate::levy::stable_cdf(0.7, z)).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
        let scaled: Vec<f64> = (0..20_000)
            .map(|_| sample_stable_value(0.7, 1.0, 4.0, &mut rng).unwrap() / 4f64.powf(1.0 / 0.7))
            .collect();
        assert!(ks_two_sample(&xs, &scaled).unwrap().p_value > 0.01);
        let mut small: Vec<f64> = (0..1001).map(|_| sample_stable_value(0.7, 1.0, 1e-6, &mut rng).unwrap()).collect();
        small.sort_by(f64::total_cmp);
        assert!(small[500] < 1e-6);
    }

    #[test]
    fn compound_poisson_approaches_exact_law() {
        // The KS distance to the exact marginal shrinks as the cutoff drops.
        let m = half();
        let mut rng = RngStream::new(3, 0).rng();
        let exact: Vec<f64> = (0..4000).map(|_| sample_stable_value(0.5, 1.0, 1.0, &mut rng).unwrap()).collect();
        let dist = |rate: f64| {
            let s = JumpSampler::with_rate(&m, rate, None).unwrap();
            let xs: Vec<f64> = (0..4000)
                .map(|i| sample_path(&s, 1.0, &mut RngStream::new(77, i).rng()).unwrap().value_at(1.0).unwrap())
                .collect();
            ks_two_sample(&xs, &exact).unwrap().statistic
        };
        let coarse = dist(0.5);
        let fine = dist(200.0);
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn first_big_jump_time_is_exponential() {
        let m = half();
        let s = JumpSampler::new(&m, 0.05, None).unwrap();
        let rate = m.tail(1.0);
        let times: Vec<f64> = (0..3000)
            .filter_map(|i| {
                let p = sample_path(&s, 60.0, &mut RngStream::new(4, i).rng()).unwrap();
                p.first_big_jump(1.0).unwrap().map(|j| j.0)
            })
            .collect();
        // Censoring at 60 is negligible: exp(-60/√π) ≈ 2e-15.
        let ks = ks_one_sample(&times, |t| 1.0 - (-rate * t).exp()).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn csv_dump_format() {
        let p = SamplePath::from_jumps(5.0, 0.5, &[(1.0, 2.0), (3.0, 0.25)]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,jump_size,cum_value\n1,2,2.5\n3,0.25,3.75\n");
    }

    proptest! {
        #[test]
        fn paths_are_nondecreasing(seed in any::<u64>(), rate in 1.0f64..200.0, alpha in 0.2f64..0.9) {
            let m = SubordinatorModel::stable(alpha, 1.0).unwrap();
            let s = JumpSampler::with_rate(&m, rate, None).unwrap();
            let p = sample_path(&s, 2.0, &mut RngStream::new(seed, 0).rng()).unwrap();
            let mut prev = 0.0;
            for k in 0..=200 {
                let v = p.value_at(k as f64 / 100.0).unwrap();
                prop_assert!(v >= prev);
                prev = v;
            }
            prop_assert!(p.jump_times().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
