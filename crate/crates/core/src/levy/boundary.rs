//! Boundary pairs `(f, g)` with `g = f^{-1}` extended by zero below `f(0)`.

use serde::Serialize;

use crate::error::{CslError, Result};

const E: f64 = std::f64::consts::E;

/// A curve the subordinator must stay above.
///
/// `exit_time(v)` is the last time the curve is still at or below level
/// `v`, i.e. `sup{s : level(s) <= v}`. Violation searches only need
/// `exit_time`, which avoids inverting `f` numerically in the hot loop.
pub trait Barrier: Sync {
    fn level(&self, s: f64) -> f64;
    fn exit_time(&self, v: f64) -> f64;
}

/// Piecewise-linear `f` through `(t_i, f_i)` with `t_0 = 0`, extended past the
/// last point by the power law through the last two points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryTable {
    ts: Vec<f64>,
    fs: Vec<f64>,
    tail_power: f64,
}

impl BoundaryTable {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 3 {
            return Err(CslError::domain("boundary table needs at least three points"));
        }
        if points[0].0 != 0.0 {
            return Err(CslError::domain("boundary table must start at t = 0"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(CslError::domain(format!(
                    "boundary table must be strictly increasing in both columns near t = {}",
                    w[1].0
                )));
            }
        }
        let n = points.len();
        let (t1, f1) = points[n - 2];
        let (t2, f2) = points[n - 1];
        let tail_power = (f2 / f1).ln() / (t2 / t1).ln();
        Ok(BoundaryTable {
            ts: points.iter().map(|p| p.0).collect(),
            fs: points.iter().map(|p| p.1).collect(),
            tail_power,
        })
    }

    fn f(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t >= self.ts[n - 1] {
            return self.fs[n - 1] * (t / self.ts[n - 1]).powf(self.tail_power);
        }
        let k = self.ts.partition_point(|&v| v <= t).max(1) - 1;
        let w = (t - self.ts[k]) / (self.ts[k + 1] - self.ts[k]);
        self.fs[k] + w * (self.fs[k + 1] - self.fs[k])
    }

    fn fprime(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t >= self.ts[n - 1] {
            return self.tail_power * self.f(t) / t;
        }
        let k = self.ts.partition_point(|&v| v <= t).max(1) - 1;
        (self.fs[k + 1] - self.fs[k]) / (self.ts[k + 1] - self.ts[k])
    }

    fn g(&self, x: f64) -> f64 {
        let n = self.fs.len();
        if x < self.fs[0] {
            return 0.0;
        }
        if x >= self.fs[n - 1] {
            return self.ts[n - 1] * (x / self.fs[n - 1]).powf(1.0 / self.tail_power);
        }
        let k = self.fs.partition_point(|&v| v <= x).max(1) - 1;
        let w = (x - self.fs[k]) / (self.fs[k + 1] - self.fs[k]);
        self.ts[k] + w * (self.ts[k + 1] - self.ts[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BoundaryKind {
    /// `f(t) = offset + t^γ`.
    Monomial { gamma: f64, offset: f64 },
    /// `f(t) = offset + t^γ / log(e + t)^p`.
    MonoLog { gamma: f64, log_power: f64, offset: f64 },
    Table(BoundaryTable),
}

/// Increasing `f` with `f(0) ∈ [0, 1)` and its inverse `g`, zero on `[0, f(0))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPair {
    kind: BoundaryKind,
}

impl BoundaryPair {
    pub fn monomial(gamma: f64, offset: f64) -> Result<Self> {
        check_gamma_offset(gamma, offset)?;
        Ok(BoundaryPair {
            kind: BoundaryKind::Monomial { gamma, offset },
        })
    }

    pub fn monolog(gamma: f64, log_power: f64, offset: f64) -> Result<Self> {
        check_gamma_offset(gamma, offset)?;
        if !(log_power >= 0.0 && log_power.is_finite()) {
            return Err(CslError::domain(format!("log power must be >= 0, got {log_power}")));
        }
        let b = BoundaryPair {
            kind: BoundaryKind::MonoLog {
                gamma,
                log_power,
                offset,
            },
        };
        // t^γ / log(e+t)^p is increasing iff γ (e+t) log(e+t) > p t everywhere.
        for k in -30..=300 {
            let t = 10f64.powf(k as f64 / 10.0);
            if b.fprime(t).is_some_and(|d| d <= 0.0) {
                return Err(CslError::domain(format!(
                    "t^{gamma}/log(e+t)^{log_power} is not increasing near t = {t:e}"
                )));
            }
        }
        Ok(b)
    }

    pub fn table(points: &[(f64, f64)]) -> Result<Self> {
        let table = BoundaryTable::new(points)?;
        let f0 = table.fs[0];
        if !(0.0..1.0).contains(&f0) {
            return Err(CslError::domain(format!("f(0) must lie in [0, 1), got {f0}")));
        }
        if table.tail_power <= 0.0 {
            return Err(CslError::domain("boundary table must grow without bound"));
        }
        Ok(BoundaryPair {
            kind: BoundaryKind::Table(table),
        })
    }

    pub fn kind(&self) -> &BoundaryKind {
        &self.kind
    }

    pub fn f0(&self) -> f64 {
        self.f(0.0)
    }

    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match &self.kind {
            BoundaryKind::Monomial { gamma, offset } => offset + t.powf(*gamma),
            BoundaryKind::MonoLog {
                gamma,
                log_power,
                offset,
            } => offset + t.powf(*gamma) / (E + t).ln().powf(*log_power),
            BoundaryKind::Table(tab) => tab.f(t),
        }
    }

    pub fn fprime(&self, t: f64) -> Option<f64> {
        if t < 0.0 {
            return None;
        }
        Some(match &self.kind {
            BoundaryKind::Monomial { gamma, .. } => {
                if t == 0.0 {
                    if *gamma < 1.0 {
                        f64::INFINITY
                    } else if *gamma == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    gamma * t.powf(gamma - 1.0)
                }
            }
            BoundaryKind::MonoLog {
                gamma, log_power, ..
            } => {
                if t == 0.0 {
                    return None;
                }
                let l = (E + t).ln();
                let core = t.powf(*gamma) / l.powf(*log_power);
                core * (gamma / t - log_power / ((E + t) * l))
            }
            BoundaryKind::Table(tab) => tab.fprime(t),
        })
    }

    /// `g(x) = f^{-1}(x)` for `x >= f(0)`, zero below.
    pub fn g(&self, x: f64) -> f64 {
        match &self.kind {
            BoundaryKind::Monomial { gamma, offset } => {
                if x <= *offset {
                    0.0
                } else {
                    (x - offset).powf(1.0 / gamma)
                }
            }
            BoundaryKind::MonoLog {
                gamma,
                log_power,
                offset,
            } => {
                if x <= *offset {
                    0.0
                } else {
                    invert_monolog(*gamma, *log_power, x - offset)
                }
            }
            BoundaryKind::Table(tab) => tab.g(x),
        }
    }

    /// Largest `|g(f(x)) - x| / max(1, x)` over a logarithmic grid.
    pub fn inverse_residual(&self) -> f64 {
        (-20..=60)
            .map(|k| {
                let x = 10f64.powf(k as f64 / 5.0);
                (self.g(self.f(x)) - x).abs() / x.max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// The shifted curve `g_y^h(t) = g(t + h) - y`.
    pub fn shifted(&self, y: f64, h: f64) -> ShiftedBoundary<'_> {
        ShiftedBoundary { pair: self, y, h }
    }

    /// `shifted_boundary`: `g(t + h) - y`.
    pub fn shifted_value(&self, y: f64, h: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !(h >= 0.0) {
            return Err(CslError::domain(format!("shifted boundary needs t, h >= 0 (t={t}, h={h})")));
        }
        Ok(self.g(t + h) - y)
    }
}

fn check_gamma_offset(gamma: f64, offset: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CslError::domain(format!("boundary exponent must be positive, got {gamma}")));
    }
    if !(0.0..1.0).contains(&offset) {
        return Err(CslError::domain(format!("f(0) must lie in [0, 1), got {offset}")));
    }
    Ok(())
}

/// Solves `t^γ / log(e+t)^p = target` for `t` by safeguarded Newton in `log t`.
fn invert_monolog(gamma: f64, p: f64, target: f64) -> f64 {
    let h = |t: f64| t.powf(gamma) / (E + t).ln().powf(p);
    // Initial guess from ignoring the logarithm, then bracket.
    let mut lo = 0.0f64;
    let mut hi = target.powf(1.0 / gamma).max(1e-300);
    while h(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut t = hi;
    for _ in 0..200 {
        let v = h(t) - target;
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let l = (E + t).ln();
        let d = h(t) * (gamma / t - p / ((E + t) * l));
        let mut next = t - v / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 { lo.sqrt() * hi.sqrt() } else { 0.5 * hi };
        }
        if (next - t).abs() <= 1e-15 * t {
            return next;
        }
        t = next;
    }
    t
}

/// `g_y^h(t) = g(t + h) - y`, the boundary faced after restarting at time `h` from level `y`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedBoundary<'a> {
    pub pair: &'a BoundaryPair,
    pub y: f64,
    pub h: f64,
}

impl Barrier for BoundaryPair {
    #[inline]
    fn level(&self, s: f64) -> f64 {
        self.g(s)
    }

    #[inline]
    fn exit_time(&self, v: f64) -> f64 {
        if v < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.f(v)
        }
    }
}

impl Barrier for ShiftedBoundary<'_> {
    #[inline]
    fn level(&self, s: f64) -> f64 {
        self.pair.g(s + self.h) - self.y
    }

    #[inline]
    fn exit_time(&self, v: f64) -> f64 {
        let w = v + self.y;
        if w < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.pair.f(w) - self.h
        }
    }
}

/// `t_0(y) = f(Ay) ∨ f(1 + 2/A)`, defined for `A > 3 ∨ (B - 1)`.
pub fn t0(boundary: &BoundaryPair, y: f64, a: f64, b: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(CslError::domain(format!("t0 needs y > 0, got {y}")));
    }
    if !(a > 3.0 && a > b - 1.0) {
        return Err(CslError::domain(format!("t0 needs A > 3 and A > B - 1 (A={a}, B={b})")));
    }
    Ok(boundary.f(a * y).max(boundary.f(1.0 + 2.0 / a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_inverse_and_zero_region() {
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        assert!((b.g(2.0) - 16.0).abs() < 1e-12);
        assert!(b.inverse_residual() < 1e-12);
        let off = BoundaryPair::monomial(1.0, 0.5).unwrap();
        assert_eq!(off.g(0.3), 0.0);
        assert!((off.g(1.5) - 1.0).abs() < 1e-15);
        assert!(BoundaryPair::monomial(0.5, 1.0).is_err());
        assert!(BoundaryPair::monomial(0.0, 0.1).is_err());
    }

    #[test]
    fn monolog_inverse() {
        let b = BoundaryPair::monolog(0.5, 1.0, 0.0).unwrap();
        assert!(b.inverse_residual() < 1e-10, "{}", b.inverse_residual());
        let g = b.g(5.0);
        assert!((b.f(g) - 5.0).abs() < 1e-12);
        let xs: Vec<f64> = (0..100).map(|k| 0.37 * k as f64).collect();
        assert!(xs.windows(2).all(|w| b.g(w[1]) >= b.g(w[0])));
    }

    #[test]
    fn table_boundary() {
        let pts: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 0.2 + (k as f64).sqrt())).collect();
        let b = BoundaryPair::table(&pts).unwrap();
        assert!((b.f0() - 0.2).abs() < 1e-15);
        assert_eq!(b.g(0.1), 0.0);
        assert!(b.inverse_residual() < 1e-9);
        assert!((b.f(100.0) / (0.2 + 19f64.sqrt()) - (100.0f64 / 19.0).powf(b_tail(&b))).abs() < 1e-12);
    }

    fn b_tail(b: &BoundaryPair) -> f64 {
        match b.kind() {
            BoundaryKind::Table(t) => t.tail_power,
            _ => unreachable!(),
        }
    }

    #[test]
    fn shifted_boundary_examples() {
        let b = BoundaryPair::monomial(0.25, 0.0).unwrap();
        for &t in &[0.0, 0.5, 3.0] {
            assert_eq!(b.shifted_value(0.0, 0.0, t).unwrap(), b.g(t));
        }
        let sq = BoundaryPair::monomial(2.0, 0.0).unwrap();
        assert!((sq.shifted_value(1.0, 3.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let off = BoundaryPair::monomial(2.0, 0.5).unwrap();
        assert_eq!(off.shifted_value(1.7, 0.1, 0.2).unwrap(), -1.7);
        assert!(sq.shifted_value(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn barrier_exit_time_is_generalised_inverse() {
        let b = BoundaryPair::monomial(0.5, 0.3).unwrap();
        let s = b.shifted(2.0, 1.0);
        for &v in &[0.0, 0.5, 4.0, 30.0] {
            let t = s.exit_time(v);
            assert!(s.level(t) <= v + 1e-9);
            assert!(s.level(t + 1e-6) > v);
        }
    }

    #[test]
    fn t0_examples() {
        let sq = BoundaryPair::monomial(2.0, 0.0).unwrap();
        assert_eq!(t0(&sq, 2.0, 4.0, 1.0).unwrap(), 64.0);
        assert!(t0(&sq, 2.0, 3.0, 1.0).is_err());
        assert!(t0(&sq, 2.0, 4.0, 6.0).is_err());
        // f(Ay) dominates once y is large.
        assert_eq!(t0(&sq, 100.0, 4.0, 1.0).unwrap(), sq.f(400.0));
    }
}
