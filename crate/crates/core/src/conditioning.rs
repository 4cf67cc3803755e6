//! The conditioned law `P(· | O_T)` by rejection, the Doob transform identity
//! at finite horizon, the ratios behind `q_h(y)`, and `Φ(∞)` with the law of
//! the explosion time.

use rand::Rng;
use serde::Serialize;

use crate::crossing::{sample_sigmas, walk, walk_ordered, CrossingScenario, SigmaSample, Walk};
use crate::error::{CslError, Result};
use crate::levy::{BoundaryPair, TransienceVerdict};
use crate::path::{sample_path, SamplePath};
use crate::report::CsvTable;
use crate::rng::{McEngine, SimRng};
use crate::stats::{z_score, MonteCarloEstimate};

const BATCH: u64 = 8192;

fn require_unshifted(scenario: &CrossingScenario) -> Result<()> {
    if scenario.shift.is_some() {
        return Err(CslError::domain("conditioning needs an unshifted scenario"));
    }
    Ok(())
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(CslError::domain(format!("horizon must be positive and finite, got {t}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ConditionedSample {
    pub horizon: f64,
    pub paths: Vec<SamplePath>,
    pub attempts: u64,
    /// Survivors among all attempts, possibly more than `paths.len()`.
    pub accepted: u64,
    /// Estimate of `P(O_T)`.
    pub acceptance: MonteCarloEstimate,
    /// `max_attempts` ran out before `n_accept` paths were found.
    pub exhausted: bool,
}

/// Rejection sampling of whole paths on `[0, T]` given `O_T`.
///
/// Attempts run in fixed batches, so the accepted set does not depend on the
/// number of workers.
pub fn sample_conditioned(
    scenario: &CrossingScenario,
    horizon: f64,
    n_accept: usize,
    max_attempts: u64,
    engine: &McEngine,
) -> Result<ConditionedSample> {
    require_unshifted(scenario)?;
    check_horizon(horizon)?;
    let label = "conditioned-paths";
    let barrier = scenario.barrier();
    let mut paths = Vec::new();
    let mut attempts = 0;
    let mut accepted = 0;
    while (paths.len() < n_accept || n_accept == 0) && attempts < max_attempts {
        let batch = BATCH.min(max_attempts - attempts);
        let found: Vec<Result<SamplePath>> = engine.run_filter(label, attempts, batch, |_, rng| {
            let mut replay = rng.clone();
            let w = walk(&scenario.sampler, horizon, &barrier, &[], None, rng);
            w.survived(horizon)
                .then(|| sample_path(&scenario.sampler, horizon, &mut replay))
        });
        attempts += batch;
        accepted += found.len() as u64;
        for p in found {
            paths.push(p?);
        }
        if n_accept == 0 {
            break;
        }
    }
    let exhausted = paths.len() < n_accept;
    paths.truncate(n_accept);
    Ok(ConditionedSample {
        horizon,
        paths,
        attempts,
        accepted,
        acceptance: MonteCarloEstimate::proportion(accepted, attempts, engine.family_seed(label)),
        exhausted,
    })
}

/// Surviving walks among `attempts` unconditioned ones.
#[derive(Debug, Clone)]
pub struct ConditionedWalks {
    pub horizon: f64,
    pub attempts: u64,
    pub walks: Vec<Walk>,
    pub seed_fingerprint: u64,
}

impl ConditionedWalks {
    pub fn acceptance(&self) -> MonteCarloEstimate {
        MonteCarloEstimate::proportion(self.walks.len() as u64, self.attempts, self.seed_fingerprint)
    }

    /// Fraction of survivors satisfying `pred`.
    pub fn fraction<F: Fn(&Walk) -> bool>(&self, pred: F) -> MonteCarloEstimate {
        let hits = self.walks.iter().filter(|w| pred(w)).count() as u64;
        MonteCarloEstimate::proportion(hits, self.walks.len() as u64, self.seed_fingerprint)
    }
}

/// Streams `attempts` paths to `T`, keeping the survivors with `X` recorded
/// at `observe` and the first jump above `big_jump`.
pub fn conditioned_walks(
    scenario: &CrossingScenario,
    horizon: f64,
    observe: &[f64],
    big_jump: Option<f64>,
    attempts: u64,
    engine: &McEngine,
    label: &str,
) -> Result<ConditionedWalks> {
    check_horizon(horizon)?;
    if observe.windows(2).any(|w| w[0] > w[1]) || observe.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(CslError::domain("observation times must be sorted within [0, T]"));
    }
    let barrier = scenario.barrier();
    let walks = engine.run_filter(label, 0, attempts, |_, rng| {
        let w = walk(&scenario.sampler, horizon, &barrier, observe, big_jump, rng);
        w.survived(horizon).then_some(w)
    });
    Ok(ConditionedWalks {
        horizon,
        attempts,
        walks,
        seed_fingerprint: engine.family_seed(label),
    })
}

/// Edges for the Doob check: `count - 1` log-spaced bins on `[g(h), g(T)]`
/// and a last bin `[g(T), ∞)`, where the shifted event is certain.
pub fn default_doob_bins(boundary: &BoundaryPair, h: f64, horizon: f64, count: usize) -> Result<Vec<f64>> {
    let lo = boundary.g(h);
    let hi = boundary.g(horizon);
    if count < 2 || !(lo > 0.0 && hi > lo) {
        return Err(CslError::domain(format!(
            "need at least two bins and 0 < g(h) < g(T) (g(h)={lo}, g(T)={hi})"
        )));
    }
    let m = count - 1;
    let mut edges: Vec<f64> = (0..=m)
        .map(|j| (lo.ln() + (hi.ln() - lo.ln()) * j as f64 / m as f64).exp())
        .collect();
    edges[0] = lo;
    edges[m] = hi;
    edges.push(f64::INFINITY);
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    /// `P̂(X_h ∈ bin | O_T)` from conditioned samples.
    pub lhs: f64,
    pub lhs_se: f64,
    /// `Ê[P̂(O_{T-h}^{g_y^h})|_{y=X_h}; X_h ∈ bin, O_h] / P̂(O_T)`.
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
    pub occupied: bool,
    /// The product with `y` at the bin centre.
    pub rhs_centre: f64,
    pub rhs_centre_se: f64,
    /// `rhs` with `y` at the lower and upper edges.
    pub rhs_edge_lo: f64,
    pub rhs_edge_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobReport {
    pub h: f64,
    pub horizon: f64,
    pub n: u64,
    pub accepted: u64,
    pub p_total: MonteCarloEstimate,
    pub p_at_h: MonteCarloEstimate,
    pub bins: Vec<DoobBin>,
    pub occupied: usize,
    pub within_3se: usize,
    /// `Σ lhs`, one unless conditioned mass falls outside the bins.
    pub lhs_mass: f64,
}

impl DoobReport {
    pub fn fraction_within(&self) -> f64 {
        if self.occupied == 0 {
            f64::NAN
        } else {
            self.within_3se as f64 / self.occupied as f64
        }
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["bin_lo", "bin_hi", "lhs", "lhs_se", "rhs", "rhs_se", "z"]);
        for b in &self.bins {
            t.push_nums(&[b.bin_lo, b.bin_hi, b.lhs, b.lhs_se, b.rhs, b.rhs_se, b.z]);
        }
        t
    }
}

/// `P̂(O_{T-h}^{g_y^h})` on a sorted `y` grid from common random numbers.
struct ShiftedCurve {
    ly: Vec<f64>,
    p: Vec<f64>,
    se: Vec<f64>,
}

impl ShiftedCurve {
    fn estimate(
        scenario: &CrossingScenario,
        h: f64,
        horizon: f64,
        ys: &[f64],
        n: u64,
        engine: &McEngine,
        label: &str,
    ) -> Self {
        let barriers: Vec<_> = ys.iter().map(|&y| scenario.boundary.shifted(y, h)).collect();
        let len = ys.len();
        let counts = engine
            .run(label, n, |_, rng| {
                let s = walk_ordered(&scenario.sampler, horizon, &barriers, rng);
                s.iter().map(|&v| u64::from(v > horizon)).collect::<Vec<_>>()
            })
            .into_iter()
            .fold(vec![0u64; len], |mut acc, v| {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                acc
            });
        let est: Vec<_> = counts
            .iter()
            .map(|&c| MonteCarloEstimate::proportion(c, n, 0))
            .collect();
        ShiftedCurve {
            ly: ys.iter().map(|y| y.ln()).collect(),
            p: est.iter().map(|e| e.value).collect(),
            se: est.iter().map(|e| e.std_error).collect(),
        }
    }

    /// Linear interpolation in `ln y`, constant beyond the grid.
    fn at(&self, y: f64) -> (f64, f64) {
        if y.is_infinite() {
            return (*self.p.last().unwrap(), *self.se.last().unwrap());
        }
        let ly = y.ln();
        let k = self.ly.partition_point(|&v| v < ly);
        if k == 0 {
            return (self.p[0], self.se[0]);
        }
        if k == self.ly.len() {
            return (self.p[k - 1], self.se[k - 1]);
        }
        let w = (ly - self.ly[k - 1]) / (self.ly[k] - self.ly[k - 1]);
        (
            self.p[k - 1] + w * (self.p[k] - self.p[k - 1]),
            self.se[k - 1] + w * (self.se[k] - self.se[k - 1]),
        )
    }
}

fn bin_centre(lo: f64, hi: f64) -> f64 {
    if hi.is_infinite() {
        lo
    } else if lo > 0.0 {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

/// Replicates for each estimator of the Doob check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoobBudget {
    /// Unconditioned attempts whose survivors give the left side.
    pub conditioned: u64,
    pub shifted: u64,
    pub at_h: u64,
    pub total: u64,
}

impl DoobBudget {
    pub fn uniform(n: u64) -> Self {
        DoobBudget {
            conditioned: n,
            shifted: n,
            at_h: n,
            total: n,
        }
    }
}

/// Checks `P(X_h ∈ dy | O_T) = P(O_{T-h}^{g_y^h}) P(X_h ∈ dy; O_h) / P(O_T)` per bin.
///
/// Four disjoint stream families: conditioned samples, the shifted
/// probabilities, `X_h` on `O_h`, and `P(O_T)`. The shifted probability is
/// averaged over the sampled `X_h` within each bin (interpolated in `ln y`
/// between common-random-number estimates); the bin-centre and edge
/// versions are kept for the sensitivity report. `z` uses the variance of
/// the left side under the right side's value, which stays meaningful for
/// bins with few conditioned samples.
pub fn doob_identity_check(
    scenario: &CrossingScenario,
    h: f64,
    horizon: f64,
    bin_edges: &[f64],
    n: u64,
    engine: &McEngine,
) -> Result<DoobReport> {
    doob_identity_check_with(scenario, h, horizon, bin_edges, DoobBudget::uniform(n), engine)
}

pub fn doob_identity_check_with(
    scenario: &CrossingScenario,
    h: f64,
    horizon: f64,
    bin_edges: &[f64],
    budget: DoobBudget,
    engine: &McEngine,
) -> Result<DoobReport> {
    require_unshifted(scenario)?;
    check_horizon(horizon)?;
    if !(h > 0.0 && h < horizon) {
        return Err(CslError::domain(format!("need 0 < h < T (h={h}, T={horizon})")));
    }
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) || bin_edges[0] < 0.0 {
        return Err(CslError::domain("bin edges must be nonnegative and strictly increasing"));
    }
    let g_h = scenario.boundary.g(h);
    let rest = horizon - h;

    if [budget.conditioned, budget.shifted, budget.at_h, budget.total].contains(&0) {
        return Err(CslError::domain("every Doob estimator needs n > 0"));
    }
    let cond = conditioned_walks(scenario, horizon, &[h], None, budget.conditioned, engine, "doob-conditioned")?;
    let accepted = cond.walks.len() as u64;
    if accepted == 0 {
        return Err(CslError::numeric(format!(
            "no path out of {} survived to T = {horizon}; raise n",
            budget.conditioned
        )));
    }
    let n = budget.at_h;
    let at_h = conditioned_walks(scenario, h, &[h], None, n, engine, "doob-at-h")?;
    let total = sample_sigmas(scenario, horizon, budget.total, engine, "doob-total")?.survival(horizon);
    if total.value == 0.0 {
        return Err(CslError::numeric("P̂(O_T) = 0; raise n"));
    }

    // y grid: bin centres and edges above g(h), refined between them.
    let top = bin_edges
        .iter()
        .copied()
        .filter(|e| e.is_finite())
        .fold(scenario.boundary.g(horizon), f64::max);
    let mut ys: Vec<f64> = bin_edges
        .windows(2)
        .flat_map(|w| [w[0], bin_centre(w[0], w[1])])
        .chain(bin_edges.iter().copied())
        .filter(|y| y.is_finite())
        .map(|y| y.max(g_h))
        .chain((0..=96).map(|j| (g_h.ln() + (top.ln() - g_h.ln()) * j as f64 / 96.0).exp()))
        .collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let curve = ShiftedCurve::estimate(scenario, h, rest, &ys, budget.shifted, engine, "doob-shifted");

    let xh: Vec<f64> = at_h.walks.iter().map(|w| w.observed[0]).collect();
    let xt: Vec<f64> = cond.walks.iter().map(|w| w.observed[0]).collect();
    let nf = n as f64;
    let rel_total = total.std_error / total.value;
    let mut bins = Vec::with_capacity(bin_edges.len() - 1);
    let (mut occupied, mut within, mut lhs_mass) = (0, 0, 0.0);
    for w in bin_edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let inside = |x: &f64| *x >= lo && *x < hi;
        let lhs = MonteCarloEstimate::proportion(xt.iter().filter(|x| inside(x)).count() as u64, accepted, 0);
        let in_bin: Vec<f64> = xh.iter().copied().filter(inside).collect();
        let p_bin = MonteCarloEstimate::proportion(in_bin.len() as u64, n, 0);

        let product = |p: f64, se: f64| {
            let v = p * p_bin.value / total.value;
            let rel2 = if p > 0.0 { (se / p).powi(2) } else { 0.0 }
                + if p_bin.value > 0.0 { (p_bin.std_error / p_bin.value).powi(2) } else { 0.0 }
                + rel_total * rel_total;
            (v, v * rel2.sqrt())
        };
        let edge = |y: f64| curve.at(y.max(g_h)).0;
        let (pc, sec) = curve.at(bin_centre(lo, hi).max(g_h));
        let (rhs, rhs_se) = if hi <= g_h { (0.0, 0.0) } else { product(pc, sec) };

        // Mixture: mean of 1{X_h ∈ bin} p(X_h) over all n paths.
        let (mut s1, mut s2, mut sse) = (0.0, 0.0, 0.0);
        for &x in &in_bin {
            let (p, se) = curve.at(x);
            s1 += p;
            s2 += p * p;
            sse += se;
        }
        let m = s1 / nf;
        let var_b = ((s2 / nf - m * m).max(0.0)) / nf;
        let se_m = (var_b + (sse / nf).powi(2)).sqrt();
        let rhs_mixture = m / total.value;
        let rhs_mixture_se = if m > 0.0 {
            rhs_mixture * ((se_m / m).powi(2) + rel_total * rel_total).sqrt()
        } else {
            0.0
        };

        let occ = lhs.value > 0.0 || rhs_mixture > 0.0;
        let p0 = rhs_mixture.clamp(0.0, 1.0);
        let null_se = (p0 * (1.0 - p0) / accepted as f64).sqrt();
        let z = if occ {
            z_score(lhs.value, null_se, rhs_mixture, rhs_mixture_se)
        } else {
            0.0
        };
        if occ {
            occupied += 1;
            if z.abs() < 3.0 {
                within += 1;
            }
        }
        lhs_mass += lhs.value;
        bins.push(DoobBin {
            bin_lo: lo,
            bin_hi: hi,
            lhs: lhs.value,
            lhs_se: lhs.std_error,
            rhs: rhs_mixture,
            rhs_se: rhs_mixture_se,
            z,
            occupied: occ,
            rhs_centre: rhs,
            rhs_centre_se: rhs_se,
            rhs_edge_lo: edge(lo) * p_bin.value / total.value,
            rhs_edge_hi: if hi <= g_h { 0.0 } else { edge(hi) * p_bin.value / total.value },
        });
    }
    Ok(DoobReport {
        h,
        horizon,
        n,
        accepted,
        p_total: total,
        p_at_h: at_h.acceptance(),
        bins,
        occupied,
        within_3se: within,
        lhs_mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QhRow {
    pub t: f64,
    pub numerator: MonteCarloEstimate,
    pub denominator: MonteCarloEstimate,
    /// `+∞` when the denominator estimate is zero.
    pub ratio: f64,
    pub ratio_se: f64,
}

/// Successive ratio difference against its combined standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyStep {
    pub t_from: f64,
    pub t_to: f64,
    pub difference: f64,
    pub std_error: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QhReport {
    pub h: f64,
    pub y: f64,
    pub rows: Vec<QhRow>,
    pub trend: Vec<CauchyStep>,
}

impl QhReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["T", "y", "numerator", "denominator", "ratio", "ratio_se"]);
        for r in &self.rows {
            t.push_nums(&[r.t, self.y, r.numerator.value, r.denominator.value, r.ratio, r.ratio_se]);
        }
        t
    }
}

/// `P̂(O_{T-h}^{g_y^h}) / P̂(O_T)` along an increasing schedule of `T`.
///
/// Every `y` uses the same streams, so estimates for different `y` are
/// ordered path by path.
pub fn qh_estimate(
    scenario: &CrossingScenario,
    h: f64,
    y: f64,
    schedule: &[f64],
    n: u64,
    engine: &McEngine,
) -> Result<QhReport> {
    require_unshifted(scenario)?;
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CslError::domain("T schedule must be nonempty and increasing"));
    }
    if !(schedule[0] > h) {
        return Err(CslError::domain(format!("every T must exceed h = {h}")));
    }
    let g_h = scenario.boundary.g(h);
    if !(y > g_h) {
        return Err(CslError::domain(format!("need y > g(h) = {g_h}, got {y}")));
    }
    let t_max = *schedule.last().unwrap();
    let shifted = scenario.clone().with_shift(y, h)?;
    let num = sample_sigmas(&shifted, t_max - h, n, engine, "qh-shifted")?;
    let den = sample_sigmas(scenario, t_max, n, engine, "qh-total")?;
    let rows: Vec<QhRow> = schedule
        .iter()
        .map(|&t| {
            let a = num.survival(t - h);
            let b = den.survival(t);
            let (ratio, ratio_se) = if b.value == 0.0 {
                (f64::INFINITY, f64::NAN)
            } else {
                let r = a.value / b.value;
                let rel_a = if a.value > 0.0 { a.std_error / a.value } else { 0.0 };
                (r, r * (rel_a.powi(2) + (b.std_error / b.value).powi(2)).sqrt())
            };
            QhRow {
                t,
                numerator: a,
                denominator: b,
                ratio,
                ratio_se,
            }
        })
        .collect();
    let trend = rows
        .windows(2)
        .map(|w| {
            let d = w[1].ratio - w[0].ratio;
            let se = w[0].ratio_se.hypot(w[1].ratio_se);
            CauchyStep {
                t_from: w[0].t,
                t_to: w[1].t,
                difference: d,
                std_error: se,
                settled: d.abs() <= 3.0 * se,
            }
        })
        .collect();
    Ok(QhReport { h, y, rows, trend })
}

/// Options for tracking `Φ(t)` on a doubling grid.
#[derive(Debug, Clone, Serialize)]
pub struct ExplosionOptions {
    pub plateau_tol: f64,
    pub t_start: f64,
    pub doublings: u32,
    /// Survivors needed at the start of a doubling for it to be judged.
    pub min_survivors: u64,
    pub cdf_points: usize,
}

impl Default for ExplosionOptions {
    fn default() -> Self {
        ExplosionOptions {
            plateau_tol: 0.01,
            t_start: 1.0,
            doublings: 14,
            min_survivors: 10,
            cdf_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiPoint {
    pub t: f64,
    pub phi: MonteCarloEstimate,
    pub survivors: u64,
    /// `(Φ(2t) - Φ(t)) / Φ(t)`, `NaN` at the last point.
    pub rel_increment: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum PhiVerdict {
    Converged { phi_inf: f64, phi_inf_se: f64, plateau_at: f64 },
    Divergent { resolved_until: f64, last_increment: f64 },
    Indeterminate { reason: String },
}

impl PhiVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            PhiVerdict::Converged { .. } => "Converged",
            PhiVerdict::Divergent { .. } => "Divergent",
            PhiVerdict::Indeterminate { .. } => "Indeterminate",
        }
    }
}

/// Piecewise-linear CDF of the explosion time and its inverse-CDF sampler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosionLaw {
    pub s: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl ExplosionLaw {
    pub fn cdf_at(&self, s: f64) -> f64 {
        if s <= self.s[0] {
            return self.cdf[0];
        }
        let k = self.s.partition_point(|&v| v < s);
        if k == self.s.len() {
            return 1.0;
        }
        let w = (s - self.s[k - 1]) / (self.s[k] - self.s[k - 1]);
        self.cdf[k - 1] + w * (self.cdf[k] - self.cdf[k - 1])
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf.partition_point(|&v| v < u);
        if k == 0 {
            return self.s[0];
        }
        if k == self.cdf.len() {
            return *self.s.last().unwrap();
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.s[k - 1] + w * (self.s[k] - self.s[k - 1])
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosionReport {
    pub grid: Vec<PhiPoint>,
    pub verdict: PhiVerdict,
    pub criterion: String,
    /// Plateau verdict agrees with the criterion; `None` when either is indeterminate.
    pub consistent: Option<bool>,
    /// `(s, Φ̂(s))` on a fine grid.
    pub phi_curve: Vec<(f64, f64)>,
    pub law: Option<ExplosionLaw>,
}

impl ExplosionReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["s", "phi", "F_frakC"]);
        for &(s, phi) in &self.phi_curve {
            let f = self.law.as_ref().map_or(f64::NAN, |l| l.cdf_at(s));
            t.push_nums(&[s, phi, f]);
        }
        t
    }
}

/// Plateau rule on `Φ̂` over doublings; requires enough survivors to judge.
/// Divergence needs at least three judged doublings, the last still above the tolerance.
fn plateau_verdict(grid: &[PhiPoint], opts: &ExplosionOptions, sample: &SigmaSample) -> PhiVerdict {
    let judged: Vec<&PhiPoint> = grid.iter().filter(|p| p.resolved).collect();
    for w in judged.windows(2) {
        if w[1].t == 2.0 * w[0].t && w[0].rel_increment < opts.plateau_tol && w[1].rel_increment < opts.plateau_tol {
            let phi = sample.phi(sample.horizon);
            return PhiVerdict::Converged {
                phi_inf: phi.value,
                phi_inf_se: phi.std_error,
                plateau_at: w[1].t,
            };
        }
    }
    if judged.len() < 3 {
        return PhiVerdict::Indeterminate {
            reason: format!("only {} doublings had enough survivors", judged.len()),
        };
    }
    let last = judged.last().unwrap();
    if last.rel_increment < opts.plateau_tol {
        return PhiVerdict::Indeterminate {
            reason: format!("plateau begins at t = {} but survivors run out before it is confirmed", last.t),
        };
    }
    PhiVerdict::Divergent {
        resolved_until: 2.0 * last.t,
        last_increment: last.rel_increment,
    }
}

/// Tracks `Φ̂(t)` on `t_start · 2^k`; a plateau gives `Φ(∞)` and the law
/// `F(s) = Φ(s)/Φ(∞)` of the explosion time.
pub fn phi_infinity_and_explosion(
    scenario: &CrossingScenario,
    n: u64,
    engine: &McEngine,
    opts: &ExplosionOptions,
    criterion: &TransienceVerdict,
) -> Result<ExplosionReport> {
    require_unshifted(scenario)?;
    if !(opts.plateau_tol > 0.0 && opts.t_start > 0.0) || opts.doublings < 2 {
        return Err(CslError::domain("need plateau_tol > 0, t_start > 0 and at least two doublings"));
    }
    let horizon = opts.t_start * 2f64.powi(opts.doublings as i32);
    let sample = sample_sigmas(scenario, horizon, n, engine, "explosion")?;
    let mut grid: Vec<PhiPoint> = (0..=opts.doublings)
        .map(|k| {
            let t = opts.t_start * 2f64.powi(k as i32);
            let survivors = (sample.survival(t).value * n as f64).round() as u64;
            PhiPoint {
                t,
                phi: sample.phi(t),
                survivors,
                rel_increment: f64::NAN,
                resolved: false,
            }
        })
        .collect();
    for k in 0..grid.len() - 1 {
        let (a, b) = (grid[k].phi.value, grid[k + 1].phi.value);
        grid[k].rel_increment = (b - a) / a;
        grid[k].resolved = grid[k].survivors >= opts.min_survivors;
    }
    let verdict = plateau_verdict(&grid, opts, &sample);
    let consistent = match (&verdict, criterion) {
        (PhiVerdict::Indeterminate { .. }, _) | (_, TransienceVerdict::Indeterminate { .. }) => None,
        (PhiVerdict::Converged { .. }, c) => Some(c.is_transient()),
        (PhiVerdict::Divergent { .. }, c) => Some(c.is_recurrent()),
    };

    let s_lo = (opts.t_start * 1e-3).max(1e-6);
    let m = opts.cdf_points.max(2);
    let mut phi_curve = vec![(0.0, 0.0)];
    phi_curve.extend((0..m).map(|j| {
        let s = (s_lo.ln() + (horizon.ln() - s_lo.ln()) * j as f64 / (m - 1) as f64).exp();
        (s, sample.phi(s).value)
    }));
    let law = match &verdict {
        PhiVerdict::Converged { phi_inf, .. } => Some(ExplosionLaw {
            s: phi_curve.iter().map(|p| p.0).collect(),
            cdf: phi_curve.iter().map(|p| (p.1 / phi_inf).min(1.0)).collect(),
        }),
        _ => None,
    };
    Ok(ExplosionReport {
        grid,
        verdict,
        criterion: criterion.label().to_string(),
        consistent,
        phi_curve,
        law,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosionJumpRow {
    pub t: f64,
    pub accepted: u64,
    /// `P̂(Δ^{g(T)} > h | O_T)`.
    pub after_h: MonteCarloEstimate,
    /// `1 - F(h)`.
    pub target: f64,
    pub z: f64,
}

/// Compares the conditioned timing of the first jump above `g(T)` with `P(𝔉 > h)`.
pub fn explosion_jump_check(
    scenario: &CrossingScenario,
    law: &ExplosionLaw,
    h: f64,
    schedule: &[f64],
    n: u64,
    engine: &McEngine,
) -> Result<Vec<ExplosionJumpRow>> {
    require_unshifted(scenario)?;
    if schedule.iter().any(|&t| !(t > h)) {
        return Err(CslError::domain(format!("every T must exceed h = {h}")));
    }
    let target = 1.0 - law.cdf_at(h);
    schedule
        .iter()
        .map(|&t| {
            let thr = scenario.boundary.g(t);
            let c = conditioned_walks(scenario, t, &[], Some(thr), n, engine, "explosion-jump")?;
            let after = c.fraction(|w| w.big_jump.is_none_or(|(s, _)| s > h));
            Ok(ExplosionJumpRow {
                t,
                accepted: c.walks.len() as u64,
                after_h: after,
                target,
                z: z_score(after.value, after.std_error, target, 0.0),
            })
        })
        .collect()
}

/// Conditioned mass `P̂(X_h > K g(h) | O_T)` for each `K` and `T`.
pub fn tightness_profile(
    scenario: &CrossingScenario,
    h: f64,
    ks: &[f64],
    schedule: &[f64],
    n: u64,
    engine: &McEngine,
) -> Result<Vec<(f64, Vec<MonteCarloEstimate>)>> {
    require_unshifted(scenario)?;
    let g_h = scenario.boundary.g(h);
    schedule
        .iter()
        .map(|&t| {
            if !(t > h) {
                return Err(CslError::domain(format!("every T must exceed h = {h}")));
            }
            let c = conditioned_walks(scenario, t, &[h], None, n, engine, "tightness")?;
            let row = ks.iter().map(|&k| c.fraction(|w| w.observed[0] > k * g_h)).collect();
            Ok((t, row))
        })
        .collect()
}
