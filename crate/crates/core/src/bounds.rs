//! Exponential bound for the truncated subordinator, distributional laws of
//! the first big jump and stable scaling, and spot checks of the shifted
//! boundary inequalities.

use serde::Serialize;

use crate::crossing::{sample_sigmas, CrossingScenario};
use crate::error::{CslError, Result};
use crate::levy::{stable_cdf, t0, BoundaryPair, SubordinatorModel};
use crate::path::{sample_stable_value, JumpSampler};
use crate::quad::{integrate_log, Tolerance};
use crate::report::{csv_escape, fmt_num, CsvTable};
use crate::rng::{McEngine, SimRng};
use crate::stats::{ks_one_sample, ks_two_sample, z_score, MonteCarloEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChernoffBound {
    pub value: f64,
    pub lambda: f64,
    /// `m(A) = ∫_0^A Π̄`.
    pub m_a: f64,
    /// `m(A) / (A Π̄(A))`, the constant that turns the displayed shape into the bound.
    pub c_hat: f64,
    /// `exp(Ĉ t ln(1/H) H^{-A/B} Π̄(A) A/B) H`.
    pub shape_value: f64,
}

/// `P(X_t^{(0,A)} > B) <= exp(t λ (d + e^{λA} m(A))) H` with `λ = ln(1/H)/B`.
///
/// Markov's inequality with `e^{λx} - 1 <= λ x e^{λA}` on `(0, A)`.
pub fn chernoff_bound(model: &SubordinatorModel, t: f64, a: f64, b: f64, h: f64) -> Result<ChernoffBound> {
    if !(a > 1.0 && b > 0.0 && h > 0.0 && h < 1.0 && t > 0.0) {
        return Err(CslError::domain(format!(
            "need A > 1, B > 0, H in (0,1), t > 0 (A={a}, B={b}, H={h}, t={t})"
        )));
    }
    let m_a = model.tail_integral(a)?;
    let lambda = (1.0 / h).ln() / b;
    let exponent = t * lambda * (model.drift() + (lambda * a).exp() * m_a);
    let value = exponent.exp() * h;
    if !value.is_finite() && value != f64::INFINITY {
        return Err(CslError::numeric("bound is not a number"));
    }
    let tail_a = model.tail(a);
    let c_hat = m_a / (a * tail_a);
    let shape_value = (c_hat * t * (1.0 / h).ln() * h.powf(-a / b) * tail_a * a / b).exp() * h;
    Ok(ChernoffBound {
        value,
        lambda,
        m_a,
        c_hat,
        shape_value,
    })
}

/// `X_t` of the approximating path on `[0, t]`, drift included.
fn value_at(sampler: &JumpSampler, t: f64, rng: &mut SimRng) -> f64 {
    let mut tau = 0.0;
    let mut cum = 0.0;
    loop {
        tau += sampler.interarrival(rng);
        if tau > t {
            return cum + sampler.drift_slope() * t;
        }
        cum += sampler.jump_size(rng);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChernoffCell {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub estimate: MonteCarloEstimate,
    pub bound: ChernoffBound,
    /// Estimate exceeds the bound by more than three standard errors.
    pub violated: bool,
}

/// Empirical `P̂(X_t^{(0,A)} > B)` against the bound on every `(t, A, B)` cell.
pub fn chernoff_domination(
    model: &SubordinatorModel,
    ts: &[f64],
    as_: &[f64],
    bs: &[f64],
    h: f64,
    n: u64,
    jump_rate: f64,
    engine: &McEngine,
) -> Result<Vec<ChernoffCell>> {
    let mut cells = Vec::new();
    for &a in as_ {
        let sampler = JumpSampler::with_rate(model, jump_rate + model.tail(a), Some(a))?;
        for &t in ts {
            let label = format!("chernoff-t{t}-a{a}");
            let xs = engine.run(&label, n, |_, rng| value_at(&sampler, t, rng));
            for &b in bs {
                let hits = xs.iter().filter(|&&x| x > b).count() as u64;
                let estimate = MonteCarloEstimate::proportion(hits, n, engine.family_seed(&label));
                let bound = chernoff_bound(model, t, a, b, h)?;
                cells.push(ChernoffCell {
                    t,
                    a,
                    b,
                    violated: estimate.value - 3.0 * estimate.std_error > bound.value,
                    estimate,
                    bound,
                });
            }
        }
    }
    Ok(cells)
}

/// One row of the `check,param_json,statistic,p_value,verdict` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub param_json: String,
    pub statistic: f64,
    pub p_value: f64,
    pub verdict: String,
}

impl CheckRow {
    fn new(check: &str, params: &[(&str, f64)], statistic: f64, p_value: f64, verdict: &str) -> Self {
        let body: Vec<String> = params
            .iter()
            .map(|(k, v)| {
                let num = if v.is_finite() { fmt_num(*v) } else { "null".into() };
                format!("\"{k}\":{num}")
            })
            .collect();
        CheckRow {
            check: check.into(),
            param_json: format!("{{{}}}", body.join(",")),
            statistic,
            p_value,
            verdict: verdict.into(),
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self.verdict.as_str(), "pass" | "vacuous" | "reported")
    }
}

pub fn checks_csv(rows: &[CheckRow]) -> CsvTable {
    let mut t = CsvTable::new(&["check", "param_json", "statistic", "p_value", "verdict"]);
    for r in rows {
        t.push(vec![
            csv_escape(&r.check),
            csv_escape(&r.param_json),
            fmt_num(r.statistic),
            fmt_num(r.p_value),
            csv_escape(&r.verdict),
        ]);
    }
    t
}

fn verdict(p: f64, significance: f64) -> &'static str {
    if p > significance {
        "pass"
    } else {
        "fail"
    }
}

/// Parameters of the distributional tests.
#[derive(Debug, Clone, Serialize)]
pub struct LawParams {
    /// Threshold `x` for the first big jump.
    pub x: f64,
    /// Time `t` compared with `t = 1` after scaling.
    pub t: f64,
    /// `Π̄(ε)` of the approximation used for the first big jump.
    pub jump_rate: f64,
    pub significance: f64,
    /// Fewer observed big jumps than this skips tests (a) and (b).
    pub min_jumps: usize,
}

impl Default for LawParams {
    fn default() -> Self {
        LawParams {
            x: 1.0,
            t: 4.0,
            jump_rate: 20.0,
            significance: 0.01,
            min_jumps: 100,
        }
    }
}

/// KS tests: the time of the first jump above `x` is exponential with rate
/// `Π̄(x)`, its size over `x` is Pareto(α), and `X_t / t^{1/α}` has the law of `X_1`.
pub fn distribution_law_tests(
    model: &SubordinatorModel,
    params: &LawParams,
    n: u64,
    engine: &McEngine,
) -> Result<Vec<CheckRow>> {
    let sp = model
        .stable_params()
        .ok_or_else(|| CslError::domain("distributional tests need a stable model"))?;
    let (alpha, scale) = (sp.alpha, sp.scale);
    let x = params.x;
    if !(x > 0.0 && params.t > 0.0) {
        return Err(CslError::domain("need x > 0 and t > 0"));
    }
    let rate_x = model.tail(x);
    let sampler = JumpSampler::with_rate(model, params.jump_rate.max(10.0 * rate_x), None)?;
    if !(sampler.cutoff() < x) {
        return Err(CslError::domain("cutoff must lie below the threshold x"));
    }
    let draws = engine.run("law-big-jump", n, |_, rng| {
        let mut tau = 0.0;
        loop {
            tau += sampler.interarrival(rng);
            let s = sampler.jump_size(rng);
            if s > x {
                return (tau, s);
            }
        }
    });
    let mut rows = Vec::new();
    let pr = [("alpha", alpha), ("x", x), ("rate", rate_x)];
    if draws.len() < params.min_jumps {
        rows.push(CheckRow::new("exponential_first_jump_time", &pr, f64::NAN, f64::NAN, "skipped"));
        rows.push(CheckRow::new("pareto_first_jump_size", &pr, f64::NAN, f64::NAN, "skipped"));
    } else {
        let times: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let ks = ks_one_sample(&times, |s| 1.0 - (-rate_x * s).exp())?;
        rows.push(CheckRow::new(
            "exponential_first_jump_time",
            &pr,
            ks.statistic,
            ks.p_value,
            verdict(ks.p_value, params.significance),
        ));
        let ratios: Vec<f64> = draws.iter().map(|d| d.1 / x).collect();
        let ks = ks_one_sample(&ratios, |v| if v <= 1.0 { 0.0 } else { 1.0 - v.powf(-alpha) })?;
        rows.push(CheckRow::new(
            "pareto_first_jump_size",
            &pr,
            ks.statistic,
            ks.p_value,
            verdict(ks.p_value, params.significance),
        ));
    }

    let t = params.t;
    let scaled = engine.run("law-scaling-t", n, |_, rng| {
        sample_stable_value(alpha, scale, t, rng).map_or(f64::NAN, |v| v / t.powf(1.0 / alpha))
    });
    let unit = engine.run("law-scaling-1", n, |_, rng| {
        sample_stable_value(alpha, scale, 1.0, rng).unwrap_or(f64::NAN)
    });
    let ks = ks_two_sample(&scaled, &unit)?;
    rows.push(CheckRow::new(
        "stable_scaling",
        &[("alpha", alpha), ("t", t)],
        ks.statistic,
        ks.p_value,
        verdict(ks.p_value, params.significance),
    ));

    // X_1 with Laplace exponent c λ^α equals c^{1/α} times the standard variable.
    let exact = stable_cdf(alpha, scale.powf(-1.0 / alpha));
    let hits = unit.iter().filter(|&&v| v <= 1.0).count() as u64;
    let est = MonteCarloEstimate::proportion(hits, n, engine.family_seed("law-scaling-1"));
    let z = z_score(est.value, est.std_error, exact, 0.0);
    let p = libm::erfc(z.abs() / std::f64::consts::SQRT_2);
    rows.push(CheckRow::new(
        "unit_cdf_at_one",
        &[("alpha", alpha), ("exact", exact), ("estimate", est.value)],
        z,
        p,
        verdict(p, params.significance),
    ));
    Ok(rows)
}

/// `g_y^h(t) >= (1 - 1/A) g(t)` for `t > t_0(y)` on a log grid up to `t_0 · span`.
pub fn check_shifted_lower_bound(boundary: &BoundaryPair, a: f64, b: f64, y: f64, h: f64, span: f64) -> Result<CheckRow> {
    if !(y > boundary.g(h)) {
        return Err(CslError::domain(format!("need y > g(h) = {}", boundary.g(h))));
    }
    let start = t0(boundary, y, a, b)?;
    let k = 400;
    let mut worst = f64::INFINITY;
    for j in 1..=k {
        let t = start * span.powf(j as f64 / k as f64);
        let lhs = boundary.g(t + h) - y;
        let rhs = (1.0 - 1.0 / a) * boundary.g(t);
        worst = worst.min(lhs - rhs);
    }
    Ok(CheckRow::new(
        "shifted_lower_bound",
        &[("A", a), ("B", b), ("y", y), ("h", h), ("t0", start)],
        worst,
        f64::NAN,
        if worst >= 0.0 { "pass" } else { "fail" },
    ))
}

/// `Φ̂_y^h(t) + 3 SE >= f(y) - h` at `t = f(Ay)`.
pub fn check_shifted_phi(
    scenario: &CrossingScenario,
    a: f64,
    b: f64,
    y: f64,
    h: f64,
    n: u64,
    engine: &McEngine,
) -> Result<CheckRow> {
    let boundary = &scenario.boundary;
    if !(a > 3.0 && a > b - 1.0) {
        return Err(CslError::domain(format!("need A > 3 and A > B - 1 (A={a}, B={b})")));
    }
    if !(y >= boundary.g(h)) {
        return Err(CslError::domain(format!("need y >= g(h) = {}", boundary.g(h))));
    }
    let target = boundary.f(y) - h;
    let t = boundary.f(a * y);
    let params = [("A", a), ("B", b), ("y", y), ("h", h), ("t", t), ("target", target)];
    if target <= 0.0 {
        return Ok(CheckRow::new("shifted_phi_lower_bound", &params, target, 1.0, "vacuous"));
    }
    let shifted = scenario.clone().with_shift(y, h)?;
    let label = format!("lemma-phi-y{y}-h{h}");
    let phi = sample_sigmas(&shifted, t, n, engine, &label)?.phi(t);
    let margin = phi.value + 3.0 * phi.std_error - target;
    let z = if phi.std_error > 0.0 {
        (phi.value - target) / phi.std_error
    } else if phi.value >= target {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    // One-sided p-value for Φ < f(y) - h.
    let p = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    Ok(CheckRow::new(
        "shifted_phi_lower_bound",
        &params,
        margin,
        p,
        if margin >= 0.0 { "pass" } else { "fail" },
    ))
}

/// `∫_{t_0}^{T} (Π̄(g(s+h) - y) - Π̄(g(s))) ds / (y f'(y) Π̄(y))` for each `T`.
pub fn shifted_tail_excess_ratio(
    model: &SubordinatorModel,
    boundary: &BoundaryPair,
    a: f64,
    b: f64,
    y: f64,
    h: f64,
    t_max: &[f64],
) -> Result<Vec<CheckRow>> {
    if !(y > boundary.g(h)) {
        return Err(CslError::domain(format!("need y > g(h) = {}", boundary.g(h))));
    }
    let start = t0(boundary, y, a, b)?;
    let fp = boundary
        .fprime(y)
        .ok_or_else(|| CslError::domain("boundary has no derivative at y"))?;
    let scale = y * fp * model.tail(y);
    let integrand = |s: f64| model.tail(boundary.g(s + h) - y) - model.tail(boundary.g(s));
    let mut acc = 0.0;
    let mut lo = start;
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    for &tm in t_max {
        if tm > lo {
            acc += integrate_log(integrand, lo, tm, Tolerance::rel(1e-10))?.value;
            lo = tm;
        }
        let ratio = acc / scale;
        let stable = prev.is_some_and(|p| (ratio - p).abs() <= 0.01 * p.abs().max(1e-300));
        rows.push(CheckRow::new(
            "shifted_tail_excess_ratio",
            &[("A", a), ("B", b), ("y", y), ("h", h), ("T_max", tm), ("t0", start)],
            ratio,
            f64::NAN,
            if !ratio.is_finite() {
                "fail"
            } else if stable {
                "reported"
            } else {
                "trend"
            },
        ));
        prev = Some(ratio);
    }
    Ok(rows)
}
