//! Closed real intervals with outward rounding.
//!
//! Every operation computes its endpoints with round-to-nearest arithmetic and
//! then pushes each inexact endpoint outward by [`WIDEN_ULPS`] units in the last
//! place. Exactness of sums and products is detected with error-free
//! transformations, so exact results (notably anything multiplied by zero)
//! stay tight and degenerate inputs map to degenerate outputs.
//!
//! `sin` and `cos` rely on the platform `libm`, which is not correctly rounded,
//! so their non-extremal endpoints are always widened.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

/// Outward widening applied to every inexact endpoint.
pub const WIDEN_ULPS: u32 = 4;

/// Slack used when deciding whether a shifted extremum of `sin`/`cos` lies in
/// an interval. Errs toward inclusion.
const EXTREMUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum IntervalError {
    #[error("inverted interval [{lo}, {hi}]")]
    Inverted { lo: f64, hi: f64 },
    #[error("interval endpoint is not finite")]
    NotFinite,
    #[error("interval arithmetic overflowed")]
    Overflow,
}

/// A closed interval `[lo, hi]` with finite endpoints and `lo <= hi`.
#[derive(Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(IntervalError::NotFinite);
        }
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// Degenerate interval `[c, c]`.
    pub fn point(c: f64) -> Result<Self, IntervalError> {
        Self::new(c, c)
    }

    fn checked(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(IntervalError::Overflow);
        }
        debug_assert!(lo <= hi);
        Ok(Interval { lo, hi })
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Smallest interval containing both operands.
    pub fn hull(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn add(self, other: Interval) -> Result<Interval, IntervalError> {
        let lo = round_sum_down(self.lo, other.lo);
        let hi = round_sum_up(self.hi, other.hi);
        Self::checked(lo, hi)
    }

    pub fn sub(self, other: Interval) -> Result<Interval, IntervalError> {
        let lo = round_sum_down(self.lo, -other.hi);
        let hi = round_sum_up(self.hi, -other.lo);
        Self::checked(lo, hi)
    }

    pub fn mul(self, other: Interval) -> Result<Interval, IntervalError> {
        let corners = [
            (self.lo, other.lo),
            (self.lo, other.hi),
            (self.hi, other.lo),
            (self.hi, other.hi),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in corners {
            let (p, exact) = product(a, b);
            let (down, up) = if exact {
                (p, p)
            } else {
                (widen_down(p), widen_up(p))
            };
            lo = lo.min(down);
            hi = hi.max(up);
        }
        Self::checked(lo, hi)
    }

    /// `a * self`, treating the scalar as the degenerate interval `[a, a]`.
    pub fn scale(self, a: f64) -> Result<Interval, IntervalError> {
        Interval::point(a)?.mul(self)
    }

    /// Tight square: never contains negative values.
    pub fn square(self) -> Result<Interval, IntervalError> {
        let (lo_sq, lo_exact) = product(self.lo, self.lo);
        let (hi_sq, hi_exact) = product(self.hi, self.hi);
        let down = |v: f64, exact: bool| if exact { v } else { widen_down(v).max(0.0) };
        let up = |v: f64, exact: bool| if exact { v } else { widen_up(v) };
        if self.lo >= 0.0 {
            Self::checked(down(lo_sq, lo_exact), up(hi_sq, hi_exact))
        } else if self.hi <= 0.0 {
            Self::checked(down(hi_sq, hi_exact), up(lo_sq, lo_exact))
        } else {
            Self::checked(0.0, up(lo_sq, lo_exact).max(up(hi_sq, hi_exact)))
        }
    }

    pub fn sin(self) -> Interval {
        if self.width() >= TAU {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let lo = if contains_shifted(self, -FRAC_PI_2) {
            -1.0
        } else {
            widen_down(a.min(b)).max(-1.0)
        };
        let hi = if contains_shifted(self, FRAC_PI_2) {
            1.0
        } else {
            widen_up(a.max(b)).min(1.0)
        };
        Interval { lo, hi }
    }

    pub fn cos(self) -> Interval {
        if self.width() >= TAU {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let lo = if contains_shifted(self, PI) {
            -1.0
        } else {
            widen_down(a.min(b)).max(-1.0)
        };
        let hi = if contains_shifted(self, 0.0) {
            1.0
        } else {
            widen_up(a.max(b)).min(1.0)
        };
        Interval { lo, hi }
    }
}

/// Whether `c + 2kπ` lies in the (slightly enlarged) interval for some integer `k`.
fn contains_shifted(x: Interval, c: f64) -> bool {
    let lo = x.lo - EXTREMUM_SLACK;
    let hi = x.hi + EXTREMUM_SLACK;
    let k = ((lo - c) / TAU).ceil();
    // The quotient may round across an integer; check the neighbour too.
    [k - 1.0, k].iter().any(|k| {
        let shifted = c + k * TAU;
        lo <= shifted && shifted <= hi
    })
}

fn widen_down(mut x: f64) -> f64 {
    for _ in 0..WIDEN_ULPS {
        x = x.next_down();
    }
    x
}

fn widen_up(mut x: f64) -> f64 {
    for _ in 0..WIDEN_ULPS {
        x = x.next_up();
    }
    x
}

/// Knuth's two-sum: the rounding error of `a + b`.
#[inline]
fn sum_error(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

#[inline]
fn round_sum_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s.is_finite() && sum_error(a, b, s) == 0.0 {
        s
    } else {
        widen_down(s)
    }
}

#[inline]
fn round_sum_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s.is_finite() && sum_error(a, b, s) == 0.0 {
        s
    } else {
        widen_up(s)
    }
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
const SPLIT_LIMIT: f64 = 1e150;

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = SPLITTER * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

/// Rounded product and whether it is exact (Dekker's two-product).
#[inline]
fn product(a: f64, b: f64) -> (f64, bool) {
    let p = a * b;
    if a == 0.0 || b == 0.0 {
        return (p, true);
    }
    if !p.is_finite() || a.abs() > SPLIT_LIMIT || b.abs() > SPLIT_LIMIT || p.abs() < 1e-290 {
        return (p, false);
    }
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let err = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, err == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn close(a: Interval, lo: f64, hi: f64) -> bool {
        let tol = |v: f64| 8.0 * f64::EPSILON * v.abs().max(1e-300);
        (a.lo - lo).abs() <= tol(lo) && (a.hi - hi).abs() <= tol(hi)
    }

    #[test]
    fn constructor_rejects_bad_endpoints() {
        assert!(matches!(
            Interval::new(2.0, 1.0),
            Err(IntervalError::Inverted { .. })
        ));
        assert_eq!(Interval::new(f64::NAN, 1.0), Err(IntervalError::NotFinite));
        assert_eq!(
            Interval::new(0.0, f64::INFINITY),
            Err(IntervalError::NotFinite)
        );
    }

    #[test]
    fn negation() {
        assert_eq!(iv(-1.0, 2.0).neg(), iv(-2.0, 1.0));
        assert_eq!(iv(0.0, 0.0).neg(), iv(0.0, 0.0));
        assert_eq!(iv(3.0, 5.0).neg(), iv(-5.0, -3.0));
    }

    #[test]
    fn add_sub_exact_cases() {
        assert_eq!(iv(1.0, 2.0).add(iv(3.0, 4.0)).unwrap(), iv(4.0, 6.0));
        assert_eq!(iv(1.0, 2.0).sub(iv(3.0, 4.0)).unwrap(), iv(-3.0, -1.0));
        assert_eq!(iv(-1.0, 1.0).add(iv(0.0, 0.0)).unwrap(), iv(-1.0, 1.0));
    }

    #[test]
    fn inexact_sum_is_widened() {
        let r = iv(0.1, 0.1).add(iv(0.2, 0.2)).unwrap();
        assert!(r.lo() < 0.1 + 0.2 && r.hi() > 0.1 + 0.2);
        assert!(r.contains(0.3));
    }

    #[test]
    fn overflow_is_an_error() {
        let big = iv(f64::MAX, f64::MAX);
        assert_eq!(big.add(big), Err(IntervalError::Overflow));
        assert_eq!(big.mul(iv(2.0, 2.0)), Err(IntervalError::Overflow));
    }

    #[test]
    fn multiplication() {
        assert_eq!(iv(-1.0, 2.0).mul(iv(3.0, 4.0)).unwrap(), iv(-4.0, 8.0));
        assert_eq!(iv(0.0, 0.0).mul(iv(-9.0, 9.0)).unwrap(), iv(0.0, 0.0));
        assert_eq!(iv(-2.0, -1.0).mul(iv(-3.0, 1.0)).unwrap(), iv(-2.0, 6.0));
    }

    #[test]
    fn scalar_multiplication() {
        assert_eq!(iv(1.0, 3.0).scale(2.0).unwrap(), iv(2.0, 6.0));
        assert_eq!(iv(1.0, 3.0).scale(-1.0).unwrap(), iv(-3.0, -1.0));
        assert_eq!(iv(-5.0, 5.0).scale(0.0).unwrap(), iv(0.0, 0.0));
    }

    #[test]
    fn square_cases() {
        assert_eq!(iv(-2.0, 3.0).square().unwrap(), iv(0.0, 9.0));
        assert_eq!(iv(1.0, 2.0).square().unwrap(), iv(1.0, 4.0));
        assert_eq!(iv(-3.0, -1.0).square().unwrap(), iv(1.0, 9.0));
    }

    #[test]
    fn trig_examples() {
        let s = iv(0.0, PI).sin();
        assert!(close(s, 0.0f64.min(PI.sin()), 1.0), "{s:?}");
        assert!(s.lo() <= 0.0 && s.lo() > -1e-15);
        let c = iv(-FRAC_PI_2, FRAC_PI_2).cos();
        assert_eq!(c.hi(), 1.0);
        assert!(c.lo() >= 0.0 && c.lo() < 1e-15, "{c:?}");
        let m = iv(PI / 6.0, PI / 3.0).sin();
        assert!((m.lo() - 0.5).abs() < 1e-15 && (m.hi() - 0.75f64.sqrt()).abs() < 1e-15);
        assert!(m.contains((PI / 6.0).sin()) && m.contains((PI / 3.0).sin()));
    }

    #[test]
    fn trig_wide_and_shifted() {
        assert_eq!(iv(-10.0, 10.0).sin(), iv(-1.0, 1.0));
        // Extremum at 5π/2 shifted by 2π.
        assert_eq!(iv(7.0, 8.0).sin().hi(), 1.0);
        // Extremum at -π for cosine.
        assert_eq!(iv(-3.5, -3.0).cos().lo(), -1.0);
    }

    #[test]
    fn degenerate_maps_to_near_degenerate() {
        let a = iv(0.7, 0.7);
        let b = iv(-1.3, -1.3);
        let ulp = |x: f64| x.abs() * f64::EPSILON;
        for r in [a.add(b).unwrap(), a.sub(b).unwrap(), a.mul(b).unwrap(), a.square().unwrap()] {
            let m = r.midpoint();
            assert!(r.width() <= 2.0 * WIDEN_ULPS as f64 * ulp(m) + 1e-300, "{r:?}");
        }
        // Exact operations stay degenerate.
        assert!(iv(0.5, 0.5).add(iv(0.25, 0.25)).unwrap().is_degenerate());
        assert!(iv(3.0, 3.0).mul(iv(4.0, 4.0)).unwrap().is_degenerate());
    }
}
