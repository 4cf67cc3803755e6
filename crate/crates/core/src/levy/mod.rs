//! Lévy measures of subordinators, boundary pairs, the transience criterion
//! and the regularity-case validators.

mod boundary;
mod regularity;
mod stable;
mod transience;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{CslError, Result};
use crate::quad::{self, Tolerance};

pub use boundary::{t0, Barrier, BoundaryKind, BoundaryPair, BoundaryTable, ShiftedBoundary};
pub use regularity::{
    validate_regularity, CheckVerdict, ConditionCheck, RegularityCase, RegularityOptions,
    RegularityReport,
};
pub use stable::{stable_cdf, stable_density};
pub use transience::{
    classify_transience, criterion_integral_direct, ClassifyOptions, TransienceReport,
    TransienceVerdict,
};

pub type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Stable subordinator parameters, normalised so that the Laplace exponent is `scale * λ^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableParams {
    pub alpha: f64,
    pub scale: f64,
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CslError::domain(format!("stable index must lie in (0,1), got {alpha}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CslError::domain(format!("stable scale must be positive, got {scale}")));
        }
        Ok(StableParams { alpha, scale })
    }

    /// `K` in `Π̄(x) = K x^{-α}`, i.e. `c / Γ(1-α)`.
    pub fn tail_constant(&self) -> f64 {
        self.scale / libm::tgamma(1.0 - self.alpha)
    }
}

/// Tail function tabulated at increasing abscissae, interpolated log-linearly
/// in log-log coordinates and extended by the end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    log_x: Vec<f64>,
    log_tail: Vec<f64>,
}

impl TailTable {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(CslError::domain("tail table needs at least two points"));
        }
        let mut log_x = Vec::with_capacity(points.len());
        let mut log_tail = Vec::with_capacity(points.len());
        for (i, &(x, v)) in points.iter().enumerate() {
            if !(x > 0.0 && v > 0.0 && x.is_finite() && v.is_finite()) {
                return Err(CslError::domain(format!(
                    "tail table row {i}: need x > 0 and tail > 0, got ({x}, {v})"
                )));
            }
            if i > 0 {
                let (px, pv) = points[i - 1];
                if x <= px {
                    return Err(CslError::domain(format!("tail table row {i}: x not increasing")));
                }
                if v > pv {
                    return Err(CslError::domain(format!("tail table row {i}: tail increases")));
                }
            }
            log_x.push(x.ln());
            log_tail.push(v.ln());
        }
        let t = TailTable { log_x, log_tail };
        let s0 = t.slope(0);
        if s0 <= -1.0 {
            return Err(CslError::domain(format!(
                "tail table: slope {s0} at small x makes the small-jump mean infinite (need > -1)"
            )));
        }
        if t.slope(t.log_x.len() - 2) >= 0.0 {
            return Err(CslError::domain("tail table: last segment must decrease strictly"));
        }
        Ok(t)
    }

    fn slope(&self, seg: usize) -> f64 {
        (self.log_tail[seg + 1] - self.log_tail[seg]) / (self.log_x[seg + 1] - self.log_x[seg])
    }

    fn segment(&self, lx: f64) -> usize {
        let k = self.log_x.partition_point(|&v| v <= lx);
        k.saturating_sub(1).min(self.log_x.len() - 2)
    }

    pub fn tail(&self, x: f64) -> f64 {
        let lx = x.ln();
        let seg = self.segment(lx);
        (self.log_tail[seg] + self.slope(seg) * (lx - self.log_x[seg])).exp()
    }

    pub fn density(&self, x: f64) -> f64 {
        let seg = self.segment(x.ln());
        -self.slope(seg) * self.tail(x) / x
    }

    fn inverse(&self, level: f64) -> f64 {
        let ll = level.ln();
        // log_tail is nonincreasing; find the segment whose range brackets ll.
        let k = self.log_tail.partition_point(|&v| v > ll);
        let seg = k.saturating_sub(1).min(self.log_x.len() - 2);
        let s = self.slope(seg);
        if s == 0.0 {
            return self.log_x[seg + 1].exp();
        }
        (self.log_x[seg] + (ll - self.log_tail[seg]) / s).exp()
    }
}

#[derive(Clone)]
pub enum LevyTail {
    Stable(StableParams),
    Table(TailTable),
    Custom { tail: TailFn, density: Option<TailFn> },
}

impl fmt::Debug for LevyTail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevyTail::Stable(p) => f.debug_tuple("Stable").field(p).finish(),
            LevyTail::Table(t) => f.debug_tuple("Table").field(&t.log_x.len()).finish(),
            LevyTail::Custom { density, .. } => f
                .debug_struct("Custom")
                .field("has_density", &density.is_some())
                .finish(),
        }
    }
}

/// A driftless-or-drifted subordinator described by its Lévy tail `Π̄(x) = Π(x, ∞)`.
#[derive(Debug, Clone)]
pub struct SubordinatorModel {
    drift: f64,
    tail: LevyTail,
}

/// Spot checks of the model invariants on a logarithmic grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCheck {
    pub tail_nonincreasing: bool,
    pub small_jump_mean_finite: bool,
    pub stable_normalisation_ok: bool,
}

impl ModelCheck {
    pub fn ok(&self) -> bool {
        self.tail_nonincreasing && self.small_jump_mean_finite && self.stable_normalisation_ok
    }
}

impl SubordinatorModel {
    pub fn stable(alpha: f64, scale: f64) -> Result<Self> {
        Ok(SubordinatorModel {
            drift: 0.0,
            tail: LevyTail::Stable(StableParams::new(alpha, scale)?),
        })
    }

    pub fn from_table(table: TailTable) -> Self {
        SubordinatorModel {
            drift: 0.0,
            tail: LevyTail::Table(table),
        }
    }

    pub fn custom(tail: TailFn, density: Option<TailFn>) -> Self {
        SubordinatorModel {
            drift: 0.0,
            tail: LevyTail::Custom { tail, density },
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Result<Self> {
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(CslError::domain(format!("drift must be nonnegative, got {drift}")));
        }
        self.drift = drift;
        Ok(self)
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn levy_tail(&self) -> &LevyTail {
        &self.tail
    }

    pub fn stable_params(&self) -> Option<StableParams> {
        match self.tail {
            LevyTail::Stable(p) => Some(p),
            _ => None,
        }
    }

    /// `Π̄(x)` for `x > 0`.
    pub fn tail_eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(CslError::domain(format!("tail evaluated at x = {x} (need x > 0)")));
        }
        Ok(self.tail(x))
    }

    /// Unchecked `Π̄(x)`; returns `+∞` for `x <= 0`.
    #[inline]
    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::INFINITY;
        }
        match &self.tail {
            LevyTail::Stable(p) => p.tail_constant() * x.powf(-p.alpha),
            LevyTail::Table(t) => t.tail(x),
            LevyTail::Custom { tail, .. } => tail(x),
        }
    }

    /// Jump density `u(x)` with `u(x) dx = Π(dx)`, when known.
    pub fn density(&self, x: f64) -> Option<f64> {
        if x <= 0.0 {
            return None;
        }
        match &self.tail {
            LevyTail::Stable(p) => Some(p.alpha * p.tail_constant() * x.powf(-1.0 - p.alpha)),
            LevyTail::Table(t) => Some(t.density(x)),
            LevyTail::Custom { density, .. } => density.as_ref().map(|d| d(x)),
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(&self.tail, LevyTail::Custom { density: None, .. })
    }

    /// Laplace exponent `d λ + ∫ (1 - e^{-λx}) Π(dx)`; closed form `c λ^α` for stable models.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(CslError::domain(format!("Laplace exponent needs λ >= 0, got {lambda}")));
        }
        match self.tail {
            LevyTail::Stable(p) => Ok(self.drift * lambda + p.scale * lambda.powf(p.alpha)),
            _ => self.laplace_exponent_by_quadrature(lambda),
        }
    }

    /// Laplace exponent from the jump density, split at `x = 1`.
    pub fn laplace_exponent_by_quadrature(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(CslError::domain(format!("Laplace exponent needs λ >= 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        if !self.has_density() {
            return Err(CslError::Missing("Laplace exponent quadrature needs a jump density".into()));
        }
        let integrand = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            // -expm1(-λx) keeps precision for tiny λx.
            -(-lambda * x).exp_m1() * self.density(x).unwrap_or(0.0)
        };
        let tol = Tolerance::rel(1e-11);
        let near = quad::integrate(integrand, 0.0, 1.0, tol)?;
        let far = quad::integrate_to_infinity(integrand, 1.0, tol)?;
        let v = self.drift * lambda + near.value + far.value;
        if !v.is_finite() {
            return Err(CslError::numeric(format!(
                "Laplace exponent quadrature diverged (errors {:.3e}, {:.3e})",
                near.abs_error, far.abs_error
            )));
        }
        Ok(v)
    }

    /// `m(a) = ∫_0^a Π̄(x) dx`.
    pub fn tail_integral(&self, a: f64) -> Result<f64> {
        if !(a > 0.0) {
            return Err(CslError::domain(format!("tail integral needs a > 0, got {a}")));
        }
        if let LevyTail::Stable(p) = self.tail {
            return Ok(p.tail_constant() * a.powf(1.0 - p.alpha) / (1.0 - p.alpha));
        }
        let r = quad::integrate(|x| if x > 0.0 { self.tail(x) } else { 0.0 }, 0.0, a, Tolerance::rel(1e-10))?;
        if !r.value.is_finite() {
            return Err(CslError::numeric("tail integral is not finite"));
        }
        Ok(r.value)
    }

    /// Mean rate of jumps below `eps`: `∫_0^ε x Π(dx) = m(ε) - ε Π̄(ε)`.
    pub fn small_jump_mean(&self, eps: f64) -> Result<f64> {
        if let LevyTail::Stable(p) = self.tail {
            return Ok(p.alpha * p.tail_constant() * eps.powf(1.0 - p.alpha) / (1.0 - p.alpha));
        }
        let m = self.tail_integral(eps)?;
        Ok((m - eps * self.tail(eps)).max(0.0))
    }

    /// The `x` with `Π̄(x) = level`.
    pub fn tail_inverse(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(CslError::domain(format!("tail level must be positive, got {level}")));
        }
        match &self.tail {
            LevyTail::Stable(p) => Ok((p.tail_constant() / level).powf(1.0 / p.alpha)),
            LevyTail::Table(t) => Ok(t.inverse(level)),
            LevyTail::Custom { tail, .. } => invert_decreasing(|x| tail(x), level),
        }
    }

    /// Spot-checks monotonicity, integrability near zero and the stable normalisation.
    pub fn check_invariants(&self) -> ModelCheck {
        let grid: Vec<f64> = (-40..=40).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
        let tails: Vec<f64> = grid.iter().map(|&x| self.tail(x)).collect();
        let tail_nonincreasing = tails
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12) && w[1] >= 0.0);
        let small_jump_mean_finite = self
            .small_jump_mean(1.0)
            .map(|m| m.is_finite())
            .unwrap_or(false);
        let stable_normalisation_ok = match self.tail {
            LevyTail::Stable(p) => {
                let x = 2.0f64;
                let expected = p.scale * x.powf(-p.alpha) / libm::tgamma(1.0 - p.alpha);
                (self.tail(x) - expected).abs() <= 1e-12 * expected
            }
            _ => true,
        };
        ModelCheck {
            tail_nonincreasing,
            small_jump_mean_finite,
            stable_normalisation_ok,
        }
    }

    /// Transition density `f_t(x)` of `X_t`; available for driftless stable models.
    pub fn transition_density(&self, t: f64, x: f64) -> Option<f64> {
        match self.tail {
            LevyTail::Stable(p) if self.drift == 0.0 && t > 0.0 && x > 0.0 => {
                let s = (p.scale * t).powf(1.0 / p.alpha);
                Some(stable_density(p.alpha, x / s) / s)
            }
            _ => None,
        }
    }
}

/// Solves `h(x) = level` for nonincreasing `h` by bisection in `log x`.
pub(crate) fn invert_decreasing<F: Fn(f64) -> f64>(h: F, level: f64) -> Result<f64> {
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut k = 0;
    while h(lo) < level {
        lo *= 0.5;
        k += 1;
        if k > 2000 {
            return Err(CslError::numeric(format!("cannot bracket tail level {level} from below")));
        }
    }
    k = 0;
    while h(hi) > level {
        hi *= 2.0;
        k += 1;
        if k > 2000 {
            return Err(CslError::numeric(format!("cannot bracket tail level {level} from above")));
        }
    }
    for _ in 0..200 {
        let mid = lo.sqrt() * hi.sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok(lo.sqrt() * hi.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stable_tail_closed_form_values() {
        let m = SubordinatorModel::stable(0.5, 1.0).unwrap();
        assert!((m.tail_eval(1.0).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-14);
        assert!((m.tail_eval(4.0).unwrap() - 0.5 / PI.sqrt()).abs() < 1e-14);
        assert!(matches!(m.tail_eval(0.0), Err(CslError::Domain(_))));
        assert!(matches!(m.tail_eval(-1.0), Err(CslError::Domain(_))));
    }

    #[test]
    fn tail_is_nonincreasing_along_grid() {
        let m = SubordinatorModel::stable(0.3, 2.0).unwrap();
        let v: Vec<f64> = (0..50).map(|k| m.tail(1.5f64.powi(k))).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.check_invariants().ok());
    }

    #[test]
    fn laplace_exponent_examples() {
        let m = SubordinatorModel::stable(0.5, 1.0).unwrap();
        assert_eq!(m.laplace_exponent(0.0).unwrap(), 0.0);
        assert!((m.laplace_exponent(4.0).unwrap() - 2.0).abs() < 1e-14);
        let q = m.laplace_exponent_by_quadrature(1.0).unwrap();
        assert!((q - 1.0).abs() < 1e-6, "{q}");
        assert!(m.laplace_exponent(-1.0).is_err());
    }

    #[test]
    fn laplace_quadrature_matches_closed_form_over_range() {
        for &alpha in &[0.3, 0.5, 0.7] {
            let m = SubordinatorModel::stable(alpha, 1.3).unwrap();
            for k in -4..=4 {
                let lambda = 10f64.powf(k as f64 / 2.0);
                let exact = m.laplace_exponent(lambda).unwrap();
                let q = m.laplace_exponent_by_quadrature(lambda).unwrap();
                assert!((q / exact - 1.0).abs() < 1e-6, "α={alpha} λ={lambda}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn small_jump_mean_matches_quadrature() {
        let m = SubordinatorModel::stable(0.6, 1.0).unwrap();
        let eps = 0.01;
        let closed = m.small_jump_mean(eps).unwrap();
        let q = quad::integrate(|x| x * m.density(x).unwrap_or(0.0), 0.0, eps, Tolerance::rel(1e-10))
            .unwrap()
            .value;
        assert!((closed / q - 1.0).abs() < 1e-7);
    }

    #[test]
    fn tail_inverse_round_trip() {
        let m = SubordinatorModel::stable(0.5, 1.0).unwrap();
        let x = m.tail_inverse(1000.0).unwrap();
        assert!((m.tail(x) - 1000.0).abs() < 1e-9);
        let p = StableParams::new(0.5, 1.0).unwrap();
        let custom = SubordinatorModel::custom(Arc::new(move |x| p.tail_constant() * x.powf(-0.5)), None);
        let y = custom.tail_inverse(1000.0).unwrap();
        assert!((y / x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_tail_reproduces_power_law() {
        let pts: Vec<(f64, f64)> = (-6..=6)
            .map(|k| {
                let x = 10f64.powi(k);
                (x, x.powf(-0.5))
            })
            .collect();
        let t = TailTable::new(&pts).unwrap();
        let m = SubordinatorModel::from_table(t);
        for &x in &[1e-9, 3e-3, 0.7, 42.0, 1e9] {
            assert!((m.tail(x) / x.powf(-0.5) - 1.0).abs() < 1e-12);
            assert!((m.density(x).unwrap() / (0.5 * x.powf(-1.5)) - 1.0).abs() < 1e-12);
        }
        assert!((m.tail_inverse(m.tail(5.0)).unwrap() - 5.0).abs() < 1e-9);
        assert!(TailTable::new(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn drift_must_be_nonnegative() {
        assert!(SubordinatorModel::stable(0.5, 1.0).unwrap().with_drift(-0.1).is_err());
        assert!(StableParams::new(1.0, 1.0).is_err());
        assert!(StableParams::new(0.5, 0.0).is_err());
    }
}
