//! The transience criterion `I(f) = ∫_1^∞ f(x) Π(dx) < ∞`.
//!
//! `I(f)` is evaluated in the tail-only form `∫_0^∞ Π̄(1 ∨ g(y)) dy`: the
//! integrand is `Π̄(1)` up to `y = f(1)` and the rest is integrated piecewise
//! over `[Y, 2Y]`, doubling `Y`. Quadrature cannot certify divergence, so the
//! decision rests on the log-log slope of the integrand:
//!
//! * slope `>= -1` at every doubling over the last two decades: divergent;
//! * slope below `-1` and the tail-extrapolated total stable: convergent;
//! * slope creeping up to `-1` (slowly varying corrections): the same test is
//!   repeated on `y F(y)` against `log y`, which separates `1/(y log y)`
//!   (divergent) from `1/(y log² y)` (convergent).

use serde::Serialize;

use super::{BoundaryPair, SubordinatorModel};
use crate::error::{CslError, Result};
use crate::quad::{self, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyOptions {
    /// Relative change of the extrapolated total that counts as converged.
    pub rel_tol: f64,
    /// Upper integration limit at which the doubling stops.
    pub max_upper: f64,
    /// Distance below -1 within which the first-order slope is inconclusive.
    pub slope_band: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            rel_tol: 1e-9,
            max_upper: 1e280,
            slope_band: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TransienceVerdict {
    Transient { integral: f64 },
    Recurrent,
    Indeterminate { reason: String },
}

impl TransienceVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            TransienceVerdict::Transient { .. } => "Transient",
            TransienceVerdict::Recurrent => "Recurrent",
            TransienceVerdict::Indeterminate { .. } => "Indeterminate",
        }
    }

    pub fn is_transient(&self) -> bool {
        matches!(self, TransienceVerdict::Transient { .. })
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, TransienceVerdict::Recurrent)
    }
}

/// Verdict plus the evidence it was based on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceReport {
    pub verdict: TransienceVerdict,
    /// Integral accumulated up to `upper_limit` (without tail extrapolation).
    pub partial_integral: f64,
    pub upper_limit: f64,
    /// Log-log slope of the integrand over the last doubling.
    pub tail_slope: f64,
    /// Slope of `log(y F(y))` against `log log y`, when the second-order test ran.
    pub log_scale_slope: Option<f64>,
}

#[derive(Debug)]
struct Doubling {
    verdict: TransienceVerdict,
    partial: f64,
    upper: f64,
    slope: f64,
    log_slope: Option<f64>,
}

const SUSTAIN: usize = 7; // doublings, a little over two decades
const WARMUP: f64 = 1e3;

fn slope(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1) / (b.0 - a.0)
}

/// Integrates a nonincreasing positive `h` over `[start, ∞)` by doubling.
fn integrate_by_doubling<H: Fn(f64) -> f64>(h: H, start: f64, opts: &ClassifyOptions) -> Result<Doubling> {
    let tol = Tolerance::rel(1e-11);
    let mut y = start;
    let mut hy = h(y);
    let mut partial = 0.0;
    // (ln y, ln h(y)) at each doubling point.
    let mut samples = vec![(y.ln(), hy.ln())];
    let mut prev_total = f64::INFINITY;
    let mut stable_steps = 0;
    loop {
        if hy == 0.0 {
            return Ok(Doubling {
                verdict: TransienceVerdict::Transient { integral: partial },
                partial,
                upper: y,
                slope: f64::NEG_INFINITY,
                log_slope: None,
            });
        }
        let next = 2.0 * y;
        let piece = quad::integrate(&h, y, next, tol)?;
        partial += piece.value;
        let h_next = h(next);
        if !h_next.is_finite() || !partial.is_finite() {
            return Err(CslError::numeric(format!("criterion integrand not finite near y = {next:e}")));
        }
        let mut prev = hy;
        let mut rises = false;
        for j in 1..=8 {
            let v = h(y * 2f64.powf(j as f64 / 8.0));
            rises |= v > prev * (1.0 + 1e-9);
            prev = v;
        }
        if rises {
            return Ok(Doubling {
                verdict: TransienceVerdict::Indeterminate {
                    reason: format!("integrand increases between y = {y:e} and {next:e}"),
                },
                partial,
                upper: next,
                slope: f64::NAN,
                log_slope: None,
            });
        }
        y = next;
        hy = h_next;
        if hy == 0.0 {
            continue;
        }
        samples.push((y.ln(), hy.ln()));
        let k = samples.len() - 1;
        let s = slope(samples[k - 1], samples[k]);

        if y >= WARMUP * start && k >= SUSTAIN {
            let sustained = (k - SUSTAIN + 1..=k).all(|j| slope(samples[j - 1], samples[j]) >= -1.0 - 1e-12);
            if sustained {
                return Ok(Doubling {
                    verdict: TransienceVerdict::Recurrent,
                    partial,
                    upper: y,
                    slope: s,
                    log_slope: None,
                });
            }
            let window = slope(samples[k - SUSTAIN], samples[k]);
            if s < -1.0 - opts.slope_band && window < -1.0 - opts.slope_band {
                // Power-law tail beyond y: ∫_y^∞ ≈ y h(y) / (-s - 1).
                let total = partial + y * hy / (-s - 1.0);
                if ((total - prev_total) / total).abs() <= opts.rel_tol {
                    stable_steps += 1;
                } else {
                    stable_steps = 0;
                }
                prev_total = total;
                if stable_steps >= 3 {
                    return Ok(Doubling {
                        verdict: TransienceVerdict::Transient { integral: total },
                        partial,
                        upper: y,
                        slope: s,
                        log_slope: None,
                    });
                }
            }
        }

        if y >= opts.max_upper {
            return Ok(second_order(&samples, partial, y, s, opts));
        }
    }
}

/// Decision at the end of the doubling range when the slope hovers just below -1.
fn second_order(samples: &[(f64, f64)], partial: f64, upper: f64, s: f64, opts: &ClassifyOptions) -> Doubling {
    let k = samples.len() - 1;
    // G(y) = y h(y) against v = ln y, in log-log coordinates.
    let lg = |(ly, lh): (f64, f64)| (ly.ln(), ly + lh);
    let end = lg(samples[k]);
    let v_end = samples[k].0;
    let at = |frac: f64| {
        let target = v_end * frac;
        let j = samples.partition_point(|p| p.0 < target).min(k);
        lg(samples[j])
    };
    let s_decade = slope(at(0.1), end);
    let s_half = slope(at(0.5), end);
    let log_slope = s_half.min(s_decade);
    let verdict = if s < -1.0 - opts.slope_band {
        TransienceVerdict::Indeterminate {
            reason: format!("tail slope {s:.4} below -1 but the total did not stabilise"),
        }
    } else if log_slope >= -1.0 - opts.slope_band {
        TransienceVerdict::Recurrent
    } else if log_slope < -1.5 {
        let g = (samples[k].0 + samples[k].1).exp();
        TransienceVerdict::Transient {
            integral: partial + g * v_end / (-log_slope - 1.0),
        }
    } else {
        TransienceVerdict::Indeterminate {
            reason: format!("tail slope {s:.4} and log-scale slope {log_slope:.4} are inconclusive"),
        }
    };
    Doubling {
        verdict,
        partial,
        upper,
        slope: s,
        log_slope: Some(log_slope),
    }
}

/// Classifies the constrained process as transient (`I(f) < ∞`) or recurrent.
pub fn classify_transience(
    model: &SubordinatorModel,
    boundary: &BoundaryPair,
    opts: &ClassifyOptions,
) -> Result<TransienceReport> {
    let tail_one = model.tail_eval(1.0)?;
    // g(y) <= 1 exactly for y <= f(1).
    let y1 = boundary.f(1.0);
    let head = y1 * tail_one;
    let integrand = |y: f64| model.tail(boundary.g(y).max(1.0));
    // Beyond f(1e300) the inverse overflows and the integrand would read as zero.
    let opts = ClassifyOptions {
        max_upper: opts.max_upper.min(0.5 * boundary.f(1e300)),
        ..*opts
    };
    let d = integrate_by_doubling(integrand, y1, &opts)?;
    let verdict = match d.verdict {
        TransienceVerdict::Transient { integral } => TransienceVerdict::Transient {
            integral: head + integral,
        },
        v => v,
    };
    Ok(TransienceReport {
        verdict,
        partial_integral: head + d.partial,
        upper_limit: d.upper,
        tail_slope: d.slope,
        log_scale_slope: d.log_slope,
    })
}

/// The criterion in its original form `∫_1^∞ f(x) u(x) dx`; needs a jump density.
pub fn criterion_integral_direct(
    model: &SubordinatorModel,
    boundary: &BoundaryPair,
    opts: &ClassifyOptions,
) -> Result<TransienceReport> {
    if !model.has_density() {
        return Err(CslError::Missing("direct criterion needs a jump density".into()));
    }
    let integrand = |x: f64| boundary.f(x) * model.density(x).unwrap_or(0.0);
    let d = integrate_by_doubling(integrand, 1.0, opts)?;
    Ok(TransienceReport {
        verdict: d.verdict,
        partial_integral: d.partial,
        upper_limit: d.upper,
        tail_slope: d.slope,
        log_scale_slope: d.log_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn stable(alpha: f64) -> SubordinatorModel {
        SubordinatorModel::stable(alpha, 1.0).unwrap()
    }

    #[test]
    fn quarter_power_is_transient_with_closed_form_integral() {
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        let r = classify_transience(&stable(0.5), &b, &ClassifyOptions::default()).unwrap();
        match r.verdict {
            TransienceVerdict::Transient { integral } => {
                assert!((integral - 2.0 / PI.sqrt()).abs() < 1e-8, "{integral}")
            }
            v => panic!("expected transient, got {v:?}"),
        }
    }

    #[test]
    fn monolog_boundary_is_recurrent() {
        let b = BoundaryPair::monolog(0.5, 1.0, 0.0).unwrap();
        let r = classify_transience(&stable(0.5), &b, &ClassifyOptions::default()).unwrap();
        assert!(r.verdict.is_recurrent(), "{r:?}");
        assert!(r.log_scale_slope.is_some());
    }

    #[test]
    fn log_corrections_are_separated() {
        let opts = ClassifyOptions::default();
        let e = std::f64::consts::E;
        let d = integrate_by_doubling(|y: f64| 1.0 / (y * y.ln()), e, &opts).unwrap();
        assert!(d.verdict.is_recurrent(), "{d:?}");
        let d = integrate_by_doubling(|y: f64| 1.0 / (y * y.ln().powi(2)), e, &opts).unwrap();
        match d.verdict {
            // ∫_e^∞ dy / (y log² y) = 1.
            TransienceVerdict::Transient { integral } => assert!((integral - 1.0).abs() < 0.05, "{integral}"),
            v => panic!("expected transient, got {v:?}"),
        }
    }

    #[test]
    fn increasing_integrand_is_indeterminate() {
        let d = integrate_by_doubling(|y: f64| (1.0 + 0.9 * (20.0 * y.ln()).sin()) / (y * y), 1.0, &ClassifyOptions::default())
            .unwrap();
        assert!(matches!(d.verdict, TransienceVerdict::Indeterminate { .. }), "{d:?}");
    }

    #[test]
    fn monomials_follow_closed_form_verdict() {
        for &alpha in &[0.2, 0.45, 0.8] {
            for &gamma in &[0.3 * alpha, 0.8 * alpha, 1.1 * alpha, 1.6 * alpha] {
                let b = BoundaryPair::monomial(gamma, 0.0).unwrap();
                let r = classify_transience(&stable(alpha), &b, &ClassifyOptions::default()).unwrap();
                assert_eq!(r.verdict.is_transient(), gamma < alpha, "α={alpha} γ={gamma}: {r:?}");
                assert_eq!(r.verdict.is_recurrent(), gamma >= alpha, "α={alpha} γ={gamma}");
            }
        }
    }

    #[test]
    fn direct_form_agrees() {
        let model = stable(0.6);
        let b = BoundaryPair::monomial(0.2, 0.3).unwrap();
        let opts = ClassifyOptions::default();
        let a = classify_transience(&model, &b, &opts).unwrap();
        let d = criterion_integral_direct(&model, &b, &opts).unwrap();
        let (TransienceVerdict::Transient { integral: ia }, TransienceVerdict::Transient { integral: id }) =
            (a.verdict, d.verdict)
        else {
            panic!("both forms should converge");
        };
        assert!((ia / id - 1.0).abs() < 1e-6, "{ia} vs {id}");
    }
}
