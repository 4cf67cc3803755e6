//! Grid-based evidence for the regularity cases.
//!
//! Every limit condition `Q(t) → 0` is probed on `t = t_start · 2^k` by the
//! least-squares fit `ln Q = c + a ln t + b ln ln t`. A clearly negative power
//! `a` means decay; with `a ≈ 0` the sign of the logarithmic exponent `b`
//! decides. These are trends, not proofs.

use serde::Serialize;

use super::{BoundaryPair, SubordinatorModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegularityCase {
    CaseI,
    CaseIA,
    CaseII,
}

impl std::str::FromStr for RegularityCase {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "casei" | "case_i" => Ok(RegularityCase::CaseI),
            "ia" | "caseia" | "case_ia" => Ok(RegularityCase::CaseIA),
            "ii" | "caseii" | "case_ii" => Ok(RegularityCase::CaseII),
            other => Err(format!("unknown regularity case '{other}' (expected i, ia or ii)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityOptions {
    /// `β` in `t Π̄(g(t)/log(t)^β) → 0`.
    pub beta: f64,
    /// `ε` in `t^{1+ε} Π̄(g(t)) → 0`.
    pub epsilon: f64,
    /// Shift in `g(t + shift)/g(t) → 1`.
    pub shift: f64,
    /// Density domination constant in `f_t(x) <= A t u(x)`.
    pub domination: f64,
    /// `x_0` in `x >= g(t) + x_0`.
    pub x0: f64,
    /// `B` and `N` in "`x^N L(x)` non-decreasing on `(B, ∞)`".
    pub b_const: f64,
    pub n_power: f64,
    pub t_start: f64,
    pub t_max: f64,
    /// Dead band for the power exponent `a`.
    pub power_tol: f64,
    /// Dead band for the logarithmic exponent `b`.
    pub log_tol: f64,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        RegularityOptions {
            beta: 1.8,
            epsilon: 0.1,
            shift: 1.0,
            domination: 2.0,
            x0: 1.0,
            b_const: 1.0,
            n_power: 1.0,
            t_start: 16.0,
            t_max: 1e120,
            power_tol: 0.02,
            log_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckVerdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub verdict: CheckVerdict,
    /// Fitted power exponent, or the check's scalar statistic.
    pub statistic: f64,
    /// Fitted log exponent where a trend fit was used.
    pub log_exponent: Option<f64>,
    pub note: String,
    /// `(t, Q(t))` grid evidence.
    pub evidence: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub case_id: RegularityCase,
    pub verdict: CheckVerdict,
    /// Tail index estimated from the far tail of `Π̄`.
    pub tail_index: f64,
    pub checks: Vec<ConditionCheck>,
}

impl RegularityReport {
    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn grid(start: f64, end: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut t = start;
    while t <= end {
        v.push(t);
        t *= 2.0;
    }
    v
}

/// Least squares of `y` on `(1, x1, x2)`; returns `(a, b)` for `x1`, `x2`.
fn fit2(rows: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let n = rows.len() as f64;
    let m1 = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let m2 = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.2).sum::<f64>() / n;
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x1, x2, y) in rows {
        let (d1, d2, dy) = (x1 - m1, x2 - m2, y - my);
        s11 += d1 * d1;
        s12 += d1 * d2;
        s22 += d2 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 1e-12 * s11 * s22) {
        return None;
    }
    Some(((s22 * s1y - s12 * s2y) / det, (s11 * s2y - s12 * s1y) / det))
}

/// Slope of `ln Q` against `ln ln t`.
fn log_slope(rows: &[(f64, f64, f64)]) -> f64 {
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.2).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|r| (r.1 - mx) * (r.2 - my)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.1 - mx).powi(2)).sum();
    sxy / sxx
}

/// Trend check for `Q(t) → 0` (or decreasing to 0).
fn decay_check<Q: Fn(f64) -> Option<f64>>(
    name: &str,
    ts: &[f64],
    q: Q,
    opts: &RegularityOptions,
    require_monotone: bool,
) -> ConditionCheck {
    let mut evidence = Vec::with_capacity(ts.len());
    for &t in ts {
        match q(t) {
            Some(v) if v.is_finite() => evidence.push((t, v)),
            Some(_) => {}
            None => {
                return ConditionCheck {
                    name: name.into(),
                    verdict: CheckVerdict::Indeterminate,
                    statistic: f64::NAN,
                    log_exponent: None,
                    note: "quantity not available (missing derivative or density)".into(),
                    evidence,
                }
            }
        }
    }
    let rows: Vec<(f64, f64, f64)> = evidence
        .iter()
        .filter(|p| p.1 > 0.0 && p.0 > 1.0)
        .map(|&(t, v)| (t.ln(), t.ln().ln(), v.ln()))
        .collect();
    let reached_zero = evidence.last().is_some_and(|p| p.1 == 0.0);
    if rows.len() < 6 {
        let verdict = if reached_zero {
            CheckVerdict::Pass
        } else {
            CheckVerdict::Indeterminate
        };
        return ConditionCheck {
            name: name.into(),
            verdict,
            statistic: f64::NAN,
            log_exponent: None,
            note: "too few positive grid values for a trend fit".into(),
            evidence,
        };
    }
    let Some((a, mut b)) = fit2(&rows) else {
        return ConditionCheck {
            name: name.into(),
            verdict: CheckVerdict::Indeterminate,
            statistic: f64::NAN,
            log_exponent: None,
            note: "degenerate trend fit".into(),
            evidence,
        };
    };
    if a.abs() <= opts.power_tol {
        // Slowly varying regime: corrections of relative size log log t / log t
        // bias the global fit, so the log exponent is refitted on the upper half.
        b = log_slope(&rows[rows.len() / 2..]);
    }
    let mut verdict = if a < -opts.power_tol || (a.abs() <= opts.power_tol && b < -opts.log_tol) {
        CheckVerdict::Pass
    } else if a > opts.power_tol || (a.abs() <= opts.power_tol && b > opts.log_tol) {
        CheckVerdict::Fail
    } else {
        CheckVerdict::Indeterminate
    };
    let mut note = format!("ln Q ≈ c + {a:.4} ln t + {b:.4} ln ln t");
    if require_monotone && verdict == CheckVerdict::Pass {
        let tail = &evidence[evidence.len() / 2..];
        if tail.windows(2).any(|w| w[1].1 > w[0].1 * (1.0 + 1e-9)) {
            verdict = CheckVerdict::Indeterminate;
            note.push_str("; not monotone on the upper half of the grid");
        }
    }
    ConditionCheck {
        name: name.into(),
        verdict,
        statistic: a,
        log_exponent: Some(b),
        note,
        evidence,
    }
}

fn simple_check(name: &str, pass: bool, statistic: f64, note: String, evidence: Vec<(f64, f64)>) -> ConditionCheck {
    ConditionCheck {
        name: name.into(),
        verdict: if pass { CheckVerdict::Pass } else { CheckVerdict::Fail },
        statistic,
        log_exponent: None,
        note,
        evidence,
    }
}

/// Log-log slopes of `Π̄` between consecutive points of a doubling grid.
fn tail_slopes(model: &SubordinatorModel, xs: &[f64]) -> Vec<(f64, f64)> {
    xs.windows(2)
        .map(|w| {
            let s = (model.tail(w[1]) / model.tail(w[0])).ln() / (w[1] / w[0]).ln();
            (w[0], s)
        })
        .collect()
}

pub fn validate_regularity(
    model: &SubordinatorModel,
    boundary: &BoundaryPair,
    case_id: RegularityCase,
    opts: &RegularityOptions,
) -> RegularityReport {
    let xs = grid(opts.b_const.max(1e-6), 1e200);
    let slopes = tail_slopes(model, &xs);
    let far = &slopes[slopes.len() - 10..];
    let tail_index = -far.iter().map(|s| s.1).sum::<f64>() / far.len() as f64;
    let ts = grid(opts.t_start, opts.t_max);
    let mut checks = Vec::new();

    match case_id {
        RegularityCase::CaseI | RegularityCase::CaseIA => {
            let spread = far.iter().map(|s| (s.1 + tail_index).abs()).fold(0.0, f64::max);
            checks.push(simple_check(
                "tail_regularly_varying",
                tail_index > 0.0 && tail_index < 1.0 && spread < 0.05,
                tail_index,
                format!("far-tail index {tail_index:.4}, slope spread {spread:.2e}"),
                far.to_vec(),
            ));
            // x^N L(x) = x^{N+α} Π̄(x) non-decreasing on (B, ∞).
            let n_alpha = opts.n_power + tail_index;
            let worst = slopes.iter().map(|s| s.1 + n_alpha).fold(f64::INFINITY, f64::min);
            checks.push(simple_check(
                "power_times_slowly_varying_nondecreasing",
                worst >= -1e-9,
                worst,
                format!("min slope of x^N L(x) on (B, ∞) with N = {}", opts.n_power),
                Vec::new(),
            ));
            checks.push(decay_check(
                "t_fprime_tail_decreasing",
                &ts,
                |t| boundary.fprime(t).map(|d| t * d * model.tail(t)),
                opts,
                true,
            ));
            let beta_min = (1.0 + 2.0 * tail_index) / (2.0 * tail_index + tail_index * tail_index);
            let mut c = decay_check(
                "log_shifted_tail",
                &ts,
                |t| Some(t * model.tail(boundary.g(t) / t.ln().powf(opts.beta))),
                opts,
                false,
            );
            if opts.beta <= beta_min {
                c.verdict = CheckVerdict::Fail;
                c.note = format!("β = {} not above the admissible minimum {beta_min:.4}; {}", opts.beta, c.note);
            }
            checks.push(c);
            let eps = opts.shift;
            let ts_short: Vec<f64> = ts.iter().copied().filter(|&t| t <= 1e9 * eps).collect();
            checks.push(decay_check(
                "inverse_shift_ratio",
                &ts_short,
                |t| {
                    let g = boundary.g(t);
                    if g <= 0.0 {
                        return Some(f64::INFINITY);
                    }
                    Some(boundary.g(t + eps) / g - 1.0)
                },
                opts,
                false,
            ));
            if case_id == RegularityCase::CaseIA {
                checks.push(o_regular_check("boundary_o_regular", &ts, |t| Some(boundary.f(t))));
                checks.push(o_regular_check("derivative_o_regular", &ts, |t| boundary.fprime(t)));
                checks.push(density_domination(model, boundary, opts));
            }
        }
        RegularityCase::CaseII => {
            let lower = slopes.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            checks.push(simple_check(
                "tail_lower_index_above_minus_one",
                lower > -1.0,
                lower,
                "smallest log-log slope of the tail on (B, ∞)".into(),
                Vec::new(),
            ));
            checks.push(decay_check(
                "power_tail_of_inverse",
                &ts,
                |t| Some(t.powf(1.0 + opts.epsilon) * model.tail(boundary.g(t))),
                opts,
                false,
            ));
        }
    }

    let verdict = if checks.iter().any(|c| c.verdict == CheckVerdict::Fail) {
        CheckVerdict::Fail
    } else if checks.iter().all(|c| c.verdict == CheckVerdict::Pass) {
        CheckVerdict::Pass
    } else {
        CheckVerdict::Indeterminate
    };
    RegularityReport {
        case_id,
        verdict,
        tail_index,
        checks,
    }
}

/// `F(2t)/F(t)` stays in a compact subset of `(0, ∞)` along the grid.
fn o_regular_check<F: Fn(f64) -> Option<f64>>(name: &str, ts: &[f64], f: F) -> ConditionCheck {
    let mut evidence = Vec::new();
    for &t in ts {
        match (f(t), f(2.0 * t)) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => evidence.push((t, b / a)),
            _ => {
                return ConditionCheck {
                    name: name.into(),
                    verdict: CheckVerdict::Indeterminate,
                    statistic: f64::NAN,
                    log_exponent: None,
                    note: "value not available or not positive".into(),
                    evidence,
                }
            }
        }
    }
    let lo = evidence.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = evidence.iter().map(|p| p.1).fold(0.0, f64::max);
    simple_check(
        name,
        lo > 1e-3 && hi < 1e3,
        hi,
        format!("doubling ratio within [{lo:.4}, {hi:.4}]"),
        evidence,
    )
}

/// Samples `f_t(x) / (t u(x))` for `x >= g(t) + x_0`.
fn density_domination(model: &SubordinatorModel, boundary: &BoundaryPair, opts: &RegularityOptions) -> ConditionCheck {
    let name = "density_domination";
    let mut evidence = Vec::new();
    let mut sup: f64 = 0.0;
    for kt in -12..=40 {
        let t = 2f64.powi(kt);
        let x_min = boundary.g(t) + opts.x0;
        let mut row_max: f64 = 0.0;
        for kx in 0..=24 {
            let x = x_min * 2f64.powi(kx);
            let (Some(ft), Some(u)) = (model.transition_density(t, x), model.density(x)) else {
                return ConditionCheck {
                    name: name.into(),
                    verdict: CheckVerdict::Indeterminate,
                    statistic: f64::NAN,
                    log_exponent: None,
                    note: "transition density or jump density not available".into(),
                    evidence,
                };
            };
            row_max = row_max.max(ft / (t * u));
        }
        evidence.push((t, row_max));
        sup = sup.max(row_max);
    }
    simple_check(
        name,
        sup <= opts.domination,
        sup,
        format!("sup ratio {sup:.4} against A = {}", opts.domination),
        evidence,
    )
}
