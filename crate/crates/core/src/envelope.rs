//! Entropic repulsion envelope: `w` belongs to it when
//! `J(h) = ∫_h^{f(w(h) g(h))} Π̄(g(s)) ds → 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::conditioning::conditioned_walks;
use crate::crossing::CrossingScenario;
use crate::error::{CslError, Result};
use crate::levy::{
    classify_transience, validate_regularity, BoundaryPair, ClassifyOptions, RegularityCase, RegularityOptions,
    SubordinatorModel,
};
use crate::quad::{integrate_log, Tolerance};
use crate::report::CsvTable;
use crate::rng::McEngine;
use crate::stats::MonteCarloEstimate;

/// Growth function `w`, evaluated through `ln w` to keep fast growth finite.
#[derive(Clone)]
pub enum Growth {
    Constant(f64),
    /// `(ln h)^p`
    LogPower(f64),
    /// `exp((ln h)^p)`
    ExpLogPower(f64),
    /// `h^p`
    Power(f64),
    /// `ln w(h)` supplied directly.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Growth::Constant(c) => write!(f, "constant:{c}"),
            Growth::LogPower(p) => write!(f, "log-power:{p}"),
            Growth::ExpLogPower(p) => write!(f, "exp-log-power:{p}"),
            Growth::Power(p) => write!(f, "power:{p}"),
            Growth::Custom(_) => write!(f, "custom"),
        }
    }
}

impl FromStr for Growth {
    type Err = CslError;

    /// `kind:param`, e.g. `log-power:2` or `exp-log-power:2`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, param) = s
            .split_once(':')
            .ok_or_else(|| CslError::domain(format!("growth spec `{s}` is not of the form kind:param")))?;
        let p: f64 = param
            .trim()
            .parse()
            .map_err(|_| CslError::domain(format!("growth parameter `{param}` is not a number")))?;
        match kind.trim() {
            "constant" => Ok(Growth::Constant(p)),
            "log-power" => Ok(Growth::LogPower(p)),
            "exp-log-power" => Ok(Growth::ExpLogPower(p)),
            "power" => Ok(Growth::Power(p)),
            other => Err(CslError::domain(format!("unknown growth kind `{other}`"))),
        }
    }
}

impl Growth {
    pub fn ln_w(&self, h: f64) -> f64 {
        match self {
            Growth::Constant(c) => c.ln(),
            Growth::LogPower(p) => p * h.ln().ln(),
            Growth::ExpLogPower(p) => h.ln().powf(*p),
            Growth::Power(p) => p * h.ln(),
            Growth::Custom(f) => f(h),
        }
    }

    pub fn w(&self, h: f64) -> f64 {
        self.ln_w(h).exp()
    }

    /// Level `w(h) g(h)`, saturating at `f64::MAX`.
    pub fn level(&self, boundary: &BoundaryPair, h: f64) -> f64 {
        let v = (self.ln_w(h) + boundary.g(h).ln()).exp();
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvelopeVerdict {
    InEnvelope,
    NotInEnvelope,
    Indeterminate,
}

impl EnvelopeVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            EnvelopeVerdict::InEnvelope => "InEnvelope",
            EnvelopeVerdict::NotInEnvelope => "NotInEnvelope",
            EnvelopeVerdict::Indeterminate => "Indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub h: f64,
    pub j: f64,
    /// Upper limit `f(w(h) g(h))`.
    pub upper: f64,
    /// `w(h) g(h)` overflowed, so `J(h)` is a lower bound.
    pub saturated: bool,
    /// `start`, `down`, `up`, `flat` or `empty`.
    pub component: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub growth: String,
    pub rows: Vec<EnvelopeRow>,
    pub verdict: EnvelopeVerdict,
    pub tol: f64,
    pub criterion: String,
    pub regularity: String,
    /// Caveats about the scenario, e.g. not classified recurrent.
    pub flags: Vec<String>,
}

impl EnvelopeReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["h", "J", "verdict_component"]);
        for r in &self.rows {
            t.push(vec![
                crate::report::fmt_num(r.h),
                crate::report::fmt_num(r.j),
                r.component.to_string(),
            ]);
        }
        t
    }
}

/// Last grid value of `J` below which it counts as tending to zero.
pub const ENVELOPE_TOL: f64 = 0.05;

/// `J(h)` and its upper limit.
pub fn envelope_integral(model: &SubordinatorModel, boundary: &BoundaryPair, growth: &Growth, h: f64) -> Result<(f64, f64, bool)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(CslError::domain(format!("h must be positive, got {h}")));
    }
    let level = growth.level(boundary, h);
    let saturated = level == f64::MAX;
    let upper = boundary.f(level);
    if !(upper > h) {
        return Ok((0.0, upper, saturated));
    }
    let r = integrate_log(|s| model.tail(boundary.g(s)), h, upper, Tolerance::rel(1e-9))?;
    Ok((r.value.max(0.0), upper, saturated))
}

fn final_three_decreasing(js: &[f64]) -> bool {
    js.len() >= 3 && js[js.len() - 3..].windows(2).all(|w| w[1] < w[0])
}

fn final_three_nondecreasing(js: &[f64]) -> bool {
    js.len() >= 3 && js[js.len() - 3..].windows(2).all(|w| w[1] >= w[0])
}

/// Evaluates `J` on the grid and applies the verdict rule: in the envelope
/// when the last `J` is below [`ENVELOPE_TOL`] and strictly decreasing over
/// the last three points; outside when the last three are nondecreasing or
/// the last value stays above the tolerance without decreasing.
pub fn envelope_criterion(
    model: &SubordinatorModel,
    boundary: &BoundaryPair,
    growth: &Growth,
    h_grid: &[f64],
) -> Result<EnvelopeReport> {
    if h_grid.len() < 3 || h_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CslError::domain("h grid needs at least three increasing points"));
    }
    if h_grid[0] <= 1.0 {
        return Err(CslError::domain("h grid must lie above 1"));
    }
    let lw: Vec<f64> = h_grid.iter().map(|&h| growth.ln_w(h)).collect();
    if lw.iter().any(|v| v.is_nan()) {
        return Err(CslError::domain("w is undefined on the grid"));
    }
    if lw.windows(2).any(|w| w[1] < w[0]) || !(lw[lw.len() - 1] > lw[0]) {
        return Err(CslError::domain(format!(
            "w must be nondecreasing and grow without bound; {growth:?} does not increase on the grid"
        )));
    }
    let mut rows = Vec::with_capacity(h_grid.len());
    let mut prev: Option<f64> = None;
    for &h in h_grid {
        let (j, upper, saturated) = envelope_integral(model, boundary, growth, h)?;
        let component = match prev {
            _ if upper <= h => "empty",
            None => "start",
            Some(p) if j < p => "down",
            Some(p) if j > p => "up",
            Some(_) => "flat",
        };
        rows.push(EnvelopeRow {
            h,
            j,
            upper,
            saturated,
            component,
        });
        prev = Some(j);
    }
    let js: Vec<f64> = rows.iter().map(|r| r.j).collect();
    let last = *js.last().unwrap();
    let verdict = if last < ENVELOPE_TOL && final_three_decreasing(&js) {
        EnvelopeVerdict::InEnvelope
    } else if final_three_nondecreasing(&js) || (last >= ENVELOPE_TOL && !final_three_decreasing(&js)) {
        EnvelopeVerdict::NotInEnvelope
    } else {
        EnvelopeVerdict::Indeterminate
    };

    let mut flags = Vec::new();
    let criterion = classify_transience(model, boundary, &ClassifyOptions::default())
        .map(|r| r.verdict.label().to_string())
        .unwrap_or_else(|e| format!("error: {e}"));
    if criterion != "Recurrent" {
        flags.push(format!("criterion verdict is {criterion}, the envelope is defined for recurrent scenarios"));
    }
    let reg = validate_regularity(model, boundary, RegularityCase::CaseI, &RegularityOptions::default());
    let regularity = format!("{:?}", reg.verdict);
    if regularity != "Pass" {
        flags.push(format!("case (i) validation: {regularity}"));
    }
    if rows.iter().any(|r| r.saturated) {
        flags.push("w(h) g(h) overflowed on part of the grid; J there is a lower bound".into());
    }
    Ok(EnvelopeReport {
        growth: format!("{growth:?}"),
        rows,
        verdict,
        tol: ENVELOPE_TOL,
        criterion,
        regularity,
        flags,
    })
}

/// `J` for `w` and `k w` and the integral between the two upper limits;
/// the first difference equals the integral.
pub fn additivity_check(
    model: &SubordinatorModel,
    boundary: &BoundaryPair,
    growth: &Growth,
    h: f64,
    k: f64,
) -> Result<(f64, f64)> {
    if !(k >= 1.0) {
        return Err(CslError::domain("scaling factor must be at least 1"));
    }
    let scaled = {
        let g = growth.clone();
        Growth::Custom(Arc::new(move |x| g.ln_w(x) + k.ln()))
    };
    let (j1, u1, _) = envelope_integral(model, boundary, growth, h)?;
    let (j2, u2, _) = envelope_integral(model, boundary, &scaled, h)?;
    let between = if u2 > u1 && u1 > 0.0 {
        integrate_log(|s| model.tail(boundary.g(s)), u1.max(h), u2, Tolerance::rel(1e-9))?.value
    } else {
        0.0
    };
    Ok((j2 - j1, between))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeEmpiricalRow {
    pub h: f64,
    pub level: f64,
    pub q_hat: MonteCarloEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeEmpirical {
    pub horizon: f64,
    pub attempts: u64,
    pub accepted: u64,
    pub rows: Vec<EnvelopeEmpiricalRow>,
}

impl EnvelopeEmpirical {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["h", "q_hat", "se"]);
        for r in &self.rows {
            t.push_nums(&[r.h, r.q_hat.value, r.q_hat.std_error]);
        }
        t
    }

    /// Each estimate is at least the previous one minus three combined standard errors.
    pub fn nondecreasing_within_ci(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let (a, b) = (&w[0].q_hat, &w[1].q_hat);
            b.value >= a.value - 3.0 * a.std_error.hypot(b.std_error)
        })
    }

    /// Largest estimate plus three standard errors stays below one.
    pub fn last_bounded_away_from_one(&self) -> bool {
        self.rows
            .last()
            .is_some_and(|r| r.q_hat.value + 3.0 * r.q_hat.std_error < 1.0)
    }
}

/// `P̂(X_h >= w(h) g(h) | O_T)` for each `h`, from one set of conditioned walks.
pub fn envelope_empirical(
    scenario: &CrossingScenario,
    growth: &Growth,
    hs: &[f64],
    horizon: f64,
    attempts: u64,
    engine: &McEngine,
) -> Result<EnvelopeEmpirical> {
    let mut v = envelope_empirical_many(scenario, std::slice::from_ref(growth), hs, horizon, attempts, engine)?;
    Ok(v.remove(0))
}

/// [`envelope_empirical`] for several growth functions on the same conditioned walks.
pub fn envelope_empirical_many(
    scenario: &CrossingScenario,
    growths: &[Growth],
    hs: &[f64],
    horizon: f64,
    attempts: u64,
    engine: &McEngine,
) -> Result<Vec<EnvelopeEmpirical>> {
    if scenario.shift.is_some() {
        return Err(CslError::domain("envelope check needs an unshifted scenario"));
    }
    if hs.is_empty() || hs.windows(2).any(|w| !(w[0] < w[1])) || !(hs[hs.len() - 1] < horizon) {
        return Err(CslError::domain("h values must be increasing and below T"));
    }
    let c = conditioned_walks(scenario, horizon, hs, None, attempts, engine, "envelope")?;
    if c.walks.is_empty() {
        return Err(CslError::numeric(format!(
            "no path out of {attempts} survived to T = {horizon}"
        )));
    }
    Ok(growths
        .iter()
        .map(|growth| {
            let rows = hs
                .iter()
                .enumerate()
                .map(|(k, &h)| {
                    // O_h forces X_h >= g(h), so levels below it are met with certainty.
                    let level = growth.level(&scenario.boundary, h).max(scenario.boundary.g(h));
                    EnvelopeEmpiricalRow {
                        h,
                        level,
                        q_hat: c.fraction(|w| w.observed[k] >= level),
                    }
                })
                .collect();
            EnvelopeEmpirical {
                horizon,
                attempts,
                accepted: c.walks.len() as u64,
                rows,
            }
        })
        .collect())
}
