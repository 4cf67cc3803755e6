//! First violation times `σ = inf{s : X_s < g(s)}` and the crossing
//! probabilities `P(O_u) = P(σ > u)`, `Φ(t) = E[σ ∧ t]`.
//!
//! Between jumps the path is linear, `X(s) = x_0 + μ (s - τ)`. Starting from a
//! time `s` known to be safe, `s' = sup{r : level(r) <= X(s)}` is safe as
//! well, because the level stays below `X(s) <= X(r)` on `[s, s']`. Iterating
//! converges monotonically to the first crossing, or passes the next jump.

use serde::Serialize;

use crate::error::{CslError, Result};
use crate::levy::{Barrier, BoundaryPair, ShiftedBoundary, SubordinatorModel};
use crate::path::{JumpSampler, SamplePath, DEFAULT_JUMP_RATE};
use crate::report::CsvTable;
use crate::rng::{McEngine, SimRng};
use crate::stats::MonteCarloEstimate;

/// Convergence tolerance for the violation time.
pub const TIME_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100_000;

/// First violation on the linear piece through `(tau, x0)`, searched on
/// `[start, end)`, where `start >= tau` is known to be safe.
#[inline]
fn segment_violation<B: Barrier + ?Sized>(b: &B, tau: f64, x0: f64, slope: f64, start: f64, end: f64) -> Option<f64> {
    let mut s = start;
    for _ in 0..MAX_ITER {
        let next = b.exit_time(x0 + slope * (s - tau));
        if next >= end {
            return None;
        }
        if next - s <= TIME_TOL {
            let at = next.max(s);
            // A fixed point is a crossing only if the level overtakes the path.
            let probe = at + TIME_TOL.max(at * 1e-14);
            if probe >= end {
                return None;
            }
            if b.level(probe) > x0 + slope * (probe - tau) {
                return Some(at);
            }
            s = probe;
            continue;
        }
        s = next;
    }
    Some(s)
}

/// Exact first violation time of a sampled path, or `None` up to its horizon.
pub fn violation_time<B: Barrier + ?Sized>(path: &SamplePath, barrier: &B) -> Option<f64> {
    let slope = path.drift_slope();
    let horizon = path.horizon();
    let times = path.jump_times();
    let mut tau = 0.0;
    let mut cum = 0.0;
    for i in 0..=times.len() {
        let end = if i < times.len() { times[i] } else { f64::INFINITY };
        let x0 = slope * tau + cum;
        let hit = segment_violation(barrier, tau, x0, slope, tau, end.min(horizon));
        if hit.is_some() {
            return hit;
        }
        if i < times.len() {
            tau = times[i];
            cum = path.cumulative(i);
        }
    }
    None
}

/// Violation times for barriers ordered so that their levels are pointwise
/// nonincreasing; the result is then nondecreasing.
pub fn violation_times_ordered<B: Barrier>(path: &SamplePath, barriers: &[B]) -> Vec<Option<f64>> {
    barriers.iter().map(|b| violation_time(path, b)).collect()
}

/// Result of a streaming walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    /// First violation time, `+∞` if none up to the horizon.
    pub sigma: f64,
    /// `X_t` at the requested times, `NaN` at or after `sigma`.
    pub observed: Vec<f64>,
    /// First jump above the requested threshold, before `sigma`.
    pub big_jump: Option<(f64, f64)>,
}

impl Walk {
    pub fn survived(&self, u: f64) -> bool {
        self.sigma > u
    }
}

/// Walks the approximating path jump by jump and stops at the first violation.
///
/// Random numbers are consumed exactly as in [`crate::path::sample_path`], so
/// the outcome equals the one computed on the full path from the same stream.
pub fn walk<B: Barrier + ?Sized>(
    sampler: &JumpSampler,
    horizon: f64,
    barrier: &B,
    observe: &[f64],
    big_jump: Option<f64>,
    rng: &mut SimRng,
) -> Walk {
    let slope = sampler.drift_slope();
    let mut observed = vec![f64::NAN; observe.len()];
    let mut oi = 0;
    let mut big = None;
    let mut tau = 0.0;
    let mut cum = 0.0;
    loop {
        let next_t = tau + sampler.interarrival(rng);
        let last = next_t > horizon;
        let x0 = slope * tau + cum;
        let seg_end = if last { horizon } else { next_t };
        let hit = segment_violation(barrier, tau, x0, slope, tau, seg_end);
        while oi < observe.len() && (observe[oi] < seg_end || (last && observe[oi] <= horizon)) {
            let t = observe[oi];
            if hit.is_some_and(|s| t >= s) {
                break;
            }
            observed[oi] = slope * t + cum;
            oi += 1;
        }
        if let Some(s) = hit {
            return Walk {
                sigma: s,
                observed,
                big_jump: big,
            };
        }
        if last {
            return Walk {
                sigma: f64::INFINITY,
                observed,
                big_jump: big,
            };
        }
        let size = sampler.jump_size(rng);
        cum += size;
        tau = next_t;
        if big.is_none() && big_jump.is_some_and(|x| size > x) {
            big = Some((tau, size));
        }
    }
}

/// Streaming violation times for several barriers with pointwise
/// nonincreasing levels, all driven by one path.
pub fn walk_ordered<B: Barrier>(sampler: &JumpSampler, horizon: f64, barriers: &[B], rng: &mut SimRng) -> Vec<f64> {
    let slope = sampler.drift_slope();
    let mut sigmas = vec![f64::INFINITY; barriers.len()];
    let mut k = 0;
    let mut tau = 0.0;
    let mut cum = 0.0;
    while k < barriers.len() {
        let next_t = tau + sampler.interarrival(rng);
        let last = next_t > horizon;
        let x0 = slope * tau + cum;
        let mut start = tau;
        while k < barriers.len() {
            let hit = segment_violation(&barriers[k], tau, x0, slope, start, next_t.min(horizon));
            match hit {
                Some(s) => {
                    sigmas[k] = s;
                    start = s;
                    k += 1;
                }
                None => break,
            }
        }
        if last {
            break;
        }
        cum += sampler.jump_size(rng);
        tau = next_t;
    }
    sigmas
}

/// Model, boundary, optional shift `(y, h)` selecting `g_y^h`, and the path approximation.
#[derive(Debug, Clone)]
pub struct CrossingScenario {
    pub model: SubordinatorModel,
    pub boundary: BoundaryPair,
    pub shift: Option<(f64, f64)>,
    pub sampler: JumpSampler,
}

impl CrossingScenario {
    /// `cutoff = None` picks `Π̄(ε) = 1000`.
    pub fn new(
        model: SubordinatorModel,
        boundary: BoundaryPair,
        cutoff: Option<f64>,
        truncation: Option<f64>,
    ) -> Result<Self> {
        let sampler = match cutoff {
            Some(eps) => JumpSampler::new(&model, eps, truncation)?,
            None => JumpSampler::with_rate(&model, DEFAULT_JUMP_RATE, truncation)?,
        };
        Ok(CrossingScenario {
            model,
            boundary,
            shift: None,
            sampler,
        })
    }

    /// Same scenario with the cutoff chosen so that `Π̄(ε) = rate`.
    pub fn with_jump_rate(mut self, rate: f64) -> Result<Self> {
        self.sampler = JumpSampler::with_rate(&self.model, rate, self.sampler.truncation())?;
        Ok(self)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Result<Self> {
        self.sampler = JumpSampler::new(&self.model, cutoff, self.sampler.truncation())?;
        Ok(self)
    }

    /// Selects the shifted boundary `g(t + h) - y`; needs `y >= g(h)`.
    pub fn with_shift(mut self, y: f64, h: f64) -> Result<Self> {
        if !(h >= 0.0) {
            return Err(CslError::domain(format!("shift needs h >= 0, got {h}")));
        }
        if !(y >= self.boundary.g(h)) {
            return Err(CslError::domain(format!(
                "shift needs y >= g(h) = {} (got y = {y})",
                self.boundary.g(h)
            )));
        }
        self.shift = Some((y, h));
        Ok(self)
    }

    pub fn unshifted(&self) -> Self {
        CrossingScenario {
            shift: None,
            ..self.clone()
        }
    }

    pub fn barrier(&self) -> ShiftedBoundary<'_> {
        let (y, h) = self.shift.unwrap_or((0.0, 0.0));
        self.boundary.shifted(y, h)
    }

    /// `g(t)` or `g_y^h(t)`.
    pub fn level(&self, t: f64) -> f64 {
        self.barrier().level(t)
    }

    /// Largest time with a zero (or negative) boundary, where `P(O_u) = 1`.
    pub fn free_time(&self) -> f64 {
        self.barrier().exit_time(0.0).max(0.0)
    }
}

/// Sorted violation times of `n` independent paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSample {
    pub horizon: f64,
    /// Ascending; `+∞` for paths without violation.
    pub sigmas: Vec<f64>,
    pub seed_fingerprint: u64,
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
}

impl SigmaSample {
    pub fn new(mut sigmas: Vec<f64>, horizon: f64, seed_fingerprint: u64) -> Self {
        sigmas.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(sigmas.len() + 1);
        let mut prefix_sq = Vec::with_capacity(sigmas.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        prefix.push(0.0);
        prefix_sq.push(0.0);
        for &s in &sigmas {
            if s.is_finite() {
                a += s;
                b += s * s;
            }
            prefix.push(a);
            prefix_sq.push(b);
        }
        SigmaSample {
            horizon,
            sigmas,
            seed_fingerprint,
            prefix,
            prefix_sq,
        }
    }

    pub fn n(&self) -> usize {
        self.sigmas.len()
    }

    /// Number of paths with `σ <= u`.
    fn violated_by(&self, u: f64) -> usize {
        self.sigmas.partition_point(|&s| s <= u)
    }

    /// `P̂(O_u) = #{σ > u} / n`.
    pub fn survival(&self, u: f64) -> MonteCarloEstimate {
        let n = self.n();
        MonteCarloEstimate::proportion((n - self.violated_by(u)) as u64, n as u64, self.seed_fingerprint)
    }

    /// `Φ̂(t)` as the sample mean of `σ ∧ t`.
    pub fn phi(&self, t: f64) -> MonteCarloEstimate {
        let n = self.n();
        let k = self.violated_by(t);
        let rest = (n - k) as f64;
        MonteCarloEstimate::from_sums(
            self.prefix[k] + rest * t,
            self.prefix_sq[k] + rest * t * t,
            n as u64,
            self.seed_fingerprint,
        )
    }

    /// `∫_a^b P̂(O_s)/Φ̂(s) ds` by the trapezoid rule on `m` log-spaced points.
    pub fn log_phi_increment(&self, a: f64, b: f64, m: usize) -> f64 {
        let (la, lb) = (a.ln(), b.ln());
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for j in 0..=m {
            let s = (la + (lb - la) * j as f64 / m as f64).exp();
            let v = self.survival(s).value / self.phi(s).value;
            if let Some((ps, pv)) = prev {
                acc += 0.5 * (s - ps) * (v + pv);
            }
            prev = Some((s, v));
        }
        acc
    }
}

/// Violation times of `n` streamed paths (label selects the stream family).
pub fn sample_sigmas(
    scenario: &CrossingScenario,
    horizon: f64,
    n: u64,
    engine: &McEngine,
    label: &str,
) -> Result<SigmaSample> {
    if n == 0 {
        return Err(CslError::domain("need n > 0 replicates"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CslError::domain(format!("horizon must be positive, got {horizon}")));
    }
    let barrier = scenario.barrier();
    let sigmas = engine.run(label, n, |_, rng| {
        walk(&scenario.sampler, horizon, &barrier, &[], None, rng).sigma
    });
    Ok(SigmaSample::new(sigmas, horizon, engine.family_seed(label)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingPoint {
    pub u: f64,
    pub survival: MonteCarloEstimate,
    pub phi: MonteCarloEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEstimate {
    pub points: Vec<CrossingPoint>,
    #[serde(skip)]
    pub sample: SigmaSample,
}

fn check_grid(grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(CslError::domain("empty time grid"));
    }
    if grid.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
        return Err(CslError::domain("time grid values must be finite and nonnegative"));
    }
    Ok(grid.iter().copied().fold(0.0, f64::max))
}

/// `P̂(O_u)` and `Φ̂(u)` for every `u` in the grid from one set of violation times.
pub fn estimate_crossing(
    scenario: &CrossingScenario,
    u_grid: &[f64],
    n: u64,
    engine: &McEngine,
) -> Result<CrossingEstimate> {
    let horizon = check_grid(u_grid)?.max(f64::MIN_POSITIVE);
    let sample = sample_sigmas(scenario, horizon, n, engine, "crossing")?;
    let points = u_grid
        .iter()
        .map(|&u| CrossingPoint {
            u,
            survival: sample.survival(u),
            phi: sample.phi(u),
        })
        .collect();
    Ok(CrossingEstimate { points, sample })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub p_o: f64,
    pub p_o_se: f64,
    pub phi: f64,
    pub phi_se: f64,
    pub tail_g: f64,
    pub rho: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub phi_recon: f64,
    /// Fewer than 10 survivors at `t`.
    pub small_count: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticRow>,
    pub n: u64,
    pub jump_rate: f64,
    pub seed_fingerprint: u64,
}

impl Diagnostics {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "p_o", "p_o_se", "phi", "phi_se", "tail_g", "rho", "ratio", "phi_recon"]);
        for r in &self.rows {
            t.push_nums(&[r.t, r.p_o, r.p_o_se, r.phi, r.phi_se, r.tail_g, r.rho, r.ratio, r.phi_recon]);
        }
        t
    }
}

/// `ρ̂`, the ratio `P̂(O_t)/(Π̄(g(t)) Φ̂(t))` and the reconstruction
/// `Φ̂(1) exp(∫_1^t P̂(O_s)/Φ̂(s) ds)` on a time grid.
pub fn asymptotic_diagnostics(
    scenario: &CrossingScenario,
    t_grid: &[f64],
    n: u64,
    engine: &McEngine,
) -> Result<Diagnostics> {
    let horizon = check_grid(t_grid)?;
    let free = scenario.free_time();
    if t_grid.iter().any(|&t| t <= free || t < 1.0) {
        return Err(CslError::domain(format!(
            "diagnostic grid must start above max(1, {free}) where the boundary is positive"
        )));
    }
    let sample = sample_sigmas(scenario, horizon, n, engine, "diagnostics")?;
    let phi1 = sample.phi(1.0).value;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let p = sample.survival(t);
        let phi = sample.phi(t);
        let tail_g = scenario.model.tail(scenario.level(t));
        let survivors = (p.value * n as f64).round() as u64;
        let small_count = survivors < 10;
        let (ratio, ratio_se) = if p.value == 0.0 {
            (0.0, f64::NAN)
        } else {
            let r = p.value / (tail_g * phi.value);
            let rel = ((p.std_error / p.value).powi(2) + (phi.std_error / phi.value).powi(2)).sqrt();
            (r, r * rel)
        };
        let steps = ((t.ln() / 0.002).ceil() as usize).clamp(16, 20_000);
        rows.push(DiagnosticRow {
            t,
            p_o: p.value,
            p_o_se: p.std_error,
            phi: phi.value,
            phi_se: phi.std_error,
            tail_g,
            rho: p.value / phi.value - tail_g,
            ratio,
            ratio_se,
            phi_recon: phi1 * sample.log_phi_increment(1.0, t, steps).exp(),
            small_count,
        });
    }
    Ok(Diagnostics {
        rows,
        n,
        jump_rate: scenario.sampler.rate(),
        seed_fingerprint: sample.seed_fingerprint,
    })
}

/// `P̂(O_u)` as the cutoff is halved repeatedly, starting from the scenario's.
pub fn epsilon_halving(
    scenario: &CrossingScenario,
    u: f64,
    halvings: usize,
    n: u64,
    engine: &McEngine,
) -> Result<Vec<(f64, MonteCarloEstimate)>> {
    let mut out = Vec::with_capacity(halvings + 1);
    let mut eps = scenario.sampler.cutoff();
    for _ in 0..=halvings {
        let s = scenario.clone().with_cutoff(eps)?;
        let sample = sample_sigmas(&s, u, n, engine, "epsilon-halving")?;
        out.push((eps, sample.survival(u)));
        eps *= 0.5;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::sample_path;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn half() -> SubordinatorModel {
        SubordinatorModel::stable(0.5, 1.0).unwrap()
    }

    #[test]
    fn step_path_against_linear_boundary() {
        // g(s) = s - 0.5 above f(0) = 0.5; the flat path is violated right after 0.5.
        let b = BoundaryPair::monomial(1.0, 0.5).unwrap();
        let p = SamplePath::from_jumps(5.0, 0.0, &[(2.0, 10.0)]).unwrap();
        let s = violation_time(&p, &b).unwrap();
        assert!((s - 0.5).abs() < 1e-9, "{s}");
    }

    #[test]
    fn zero_boundary_region_is_never_violated() {
        let b = BoundaryPair::monomial(1.0, 0.5).unwrap();
        let p = SamplePath::from_jumps(0.4, 0.0, &[]).unwrap();
        assert_eq!(violation_time(&p, &b), None);
    }

    #[test]
    fn drift_against_curved_boundary() {
        // X(s) = s, g(s) = s^2: violation at s = 1.
        let b = BoundaryPair::monomial(0.5, 0.0).unwrap();
        let p = SamplePath::from_jumps(5.0, 1.0, &[]).unwrap();
        let s = violation_time(&p, &b).unwrap();
        assert!((s - 1.0).abs() < 1e-8, "{s}");
        // A jump at 0.9 of size 3 pushes the crossing to X = s + 3 = s^2.
        let p = SamplePath::from_jumps(5.0, 1.0, &[(0.9, 3.0)]).unwrap();
        let s = violation_time(&p, &b).unwrap();
        let exact = (1.0 + 13f64.sqrt()) / 2.0;
        assert!((s - exact).abs() < 1e-8, "{s} vs {exact}");
    }

    #[test]
    fn tangent_start_is_not_a_violation() {
        // X(s) = 0.1 s stays above s^4 until s = 0.1^{1/3}.
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        let p = SamplePath::from_jumps(1.0, 0.1, &[]).unwrap();
        let s = violation_time(&p, &b).unwrap();
        assert!((s - 0.1f64.powf(1.0 / 3.0)).abs() < 1e-7, "{s}");
    }

    #[test]
    fn streaming_walk_matches_full_path() {
        let m = half();
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        let s = JumpSampler::with_rate(&m, 50.0, None).unwrap();
        for i in 0..300 {
            let stream = RngStream::new(21, i);
            let w = walk(&s, 20.0, &b, &[0.5, 3.0], Some(1.0), &mut stream.rng());
            let p = sample_path(&s, 20.0, &mut stream.rng()).unwrap();
            let v = violation_time(&p, &b).unwrap_or(f64::INFINITY);
            assert_eq!(w.sigma, v);
            for (k, &t) in [0.5, 3.0].iter().enumerate() {
                if t < v {
                    assert_eq!(w.observed[k], p.value_at(t).unwrap());
                } else {
                    assert!(w.observed[k].is_nan());
                }
            }
            let bj = p.first_big_jump(1.0).unwrap().filter(|j| j.0 < v);
            assert_eq!(w.big_jump, bj);
        }
    }

    #[test]
    fn ordered_walk_matches_single_walks() {
        let m = half();
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        let s = JumpSampler::with_rate(&m, 50.0, None).unwrap();
        let ys = [b.g(1.0), 1.5, 3.0, 8.0];
        let barriers: Vec<_> = ys.iter().map(|&y| b.shifted(y, 1.0)).collect();
        for i in 0..200 {
            let stream = RngStream::new(8, i);
            let multi = walk_ordered(&s, 10.0, &barriers, &mut stream.rng());
            for (k, bar) in barriers.iter().enumerate() {
                let single = walk(&s, 10.0, bar, &[], None, &mut stream.rng()).sigma;
                assert!((multi[k] - single).abs() < 1e-9 || multi[k] == single, "{k}: {multi:?} vs {single}");
            }
            assert!(multi.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn crossing_estimates_basic_properties() {
        let sc = CrossingScenario::new(half(), BoundaryPair::monomial(0.25, 0.2).unwrap(), None, None)
            .unwrap()
            .with_jump_rate(100.0)
            .unwrap();
        let engine = McEngine::new(1, 1);
        let grid = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0];
        let est = estimate_crossing(&sc, &grid, 4000, &engine).unwrap();
        // u < f(0): boundary is zero.
        assert_eq!(est.points[1].survival.value, 1.0);
        for w in est.points.windows(2) {
            assert!(w[1].survival.value <= w[0].survival.value);
            assert!(w[1].phi.value >= w[0].phi.value);
        }
        for p in &est.points {
            assert!(p.phi.value <= p.u + 1e-12);
        }
        assert!(estimate_crossing(&sc, &grid, 0, &engine).is_err());
    }

    #[test]
    fn phi_equals_integral_of_survival_curve() {
        let sc = CrossingScenario::new(half(), BoundaryPair::monomial(0.25, 0.0).unwrap(), None, None)
            .unwrap()
            .with_jump_rate(100.0)
            .unwrap();
        let engine = McEngine::new(2, 1);
        let sample = sample_sigmas(&sc, 8.0, 3000, &engine, "t").unwrap();
        let m = 40_000;
        let trap: f64 = (0..m)
            .map(|j| {
                let (a, b) = (8.0 * j as f64 / m as f64, 8.0 * (j + 1) as f64 / m as f64);
                0.5 * (b - a) * (sample.survival(a).value + sample.survival(b).value)
            })
            .sum();
        assert!((trap - sample.phi(8.0).value).abs() < 1e-3, "{trap}");
    }

    #[test]
    fn shifted_survival_is_monotone_in_y() {
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        let base = CrossingScenario::new(half(), b, None, None).unwrap().with_jump_rate(50.0).unwrap();
        let engine = McEngine::new(3, 1);
        let h = 1.0;
        let lo = base.clone().with_shift(1.5, h).unwrap();
        let hi = base.clone().with_shift(3.0, h).unwrap();
        let a = sample_sigmas(&lo, 10.0, 3000, &engine, "s").unwrap().survival(10.0);
        let c = sample_sigmas(&hi, 10.0, 3000, &engine, "s").unwrap().survival(10.0);
        // Common random numbers make the ordering exact.
        assert!(a.value <= c.value);
        assert!(base.clone().with_shift(0.5, h).is_err());
    }

    #[test]
    fn reconstruction_is_self_consistent() {
        let sc = CrossingScenario::new(half(), BoundaryPair::monomial(0.25, 0.0).unwrap(), None, None)
            .unwrap()
            .with_jump_rate(50.0)
            .unwrap();
        let d = asymptotic_diagnostics(&sc, &[2.0, 4.0, 8.0], 4000, &McEngine::new(4, 1)).unwrap();
        for r in &d.rows {
            assert!((r.phi_recon / r.phi - 1.0).abs() < 0.02, "{r:?}");
        }
        assert!(asymptotic_diagnostics(&sc, &[0.5, 2.0], 100, &McEngine::new(4, 1)).is_err());
        let csv = d.to_csv().to_string_lossy();
        assert!(csv.starts_with("t,p_o,p_o_se,phi,phi_se,tail_g,rho,ratio,phi_recon\n"));
    }

    fn brute_force(p: &SamplePath, b: &BoundaryPair, step: f64) -> Option<f64> {
        // Grid points plus left limits at jumps.
        let mut grid = None;
        let mut k = 0usize;
        loop {
            let t = k as f64 * step;
            if t > p.horizon() {
                break;
            }
            if p.value_at(t).unwrap() < b.g(t) {
                grid = Some(t);
                break;
            }
            k += 1;
        }
        let jump = p
            .jumps()
            .filter(|&(t, _)| p.left_limit(t).unwrap() < b.g(t))
            .map(|j| j.0)
            .next();
        match (grid, jump) {
            (Some(a), Some(c)) => Some(a.min(c)),
            (a, c) => a.or(c),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn interval_search_agrees_with_dense_grid(seed in any::<u64>(), gamma in 0.2f64..0.9, offset in 0.0f64..0.9) {
            let m = half();
            let b = BoundaryPair::monomial(gamma, offset).unwrap();
            let s = JumpSampler::with_rate(&m, 20.0, None).unwrap();
            let p = sample_path(&s, 3.0, &mut RngStream::new(seed, 0).rng()).unwrap();
            let exact = violation_time(&p, &b);
            let brute = brute_force(&p, &b, 1e-3);
            match (exact, brute) {
                (Some(e), Some(g)) => prop_assert!(e <= g + 1e-9 && g <= e + 1e-3 + 1e-9, "{e} vs {g}"),
                (Some(e), None) => {
                    // Only possible when the excursion below g is shorter than one grid step.
                    let next = ((e / 1e-3).ceil() * 1e-3).min(p.horizon());
                    let short = p.value_at(next).unwrap() >= b.g(next);
                    prop_assert!(short, "missed violation at {}", e);
                }
                (None, Some(g)) => prop_assert!(false, "grid found violation at {g}"),
                (None, None) => {}
            }
        }
    }
}
