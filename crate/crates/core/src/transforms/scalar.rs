use std::ops::{Add, Mul, Neg, Sub};

use crate::interval::{Interval, IntervalError};

/// Arithmetic shared by point evaluation (`f64`) and enclosure evaluation
/// ([`Enc`]), so each closed form is written once.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn square(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn half(self) -> Self {
        self * Self::constant(0.5)
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn square(self) -> Self {
        self * self
    }
}

/// Interval value with a sticky error, so fallible interval arithmetic can be
/// written with ordinary operators. The first error wins.
#[derive(Debug, Clone, Copy)]
pub struct Enc(pub Result<Interval, IntervalError>);

impl Enc {
    pub fn of(x: Interval) -> Self {
        Enc(Ok(x))
    }

    pub fn get(self) -> Result<Interval, IntervalError> {
        self.0
    }

    fn zip(
        self,
        other: Enc,
        f: impl FnOnce(Interval, Interval) -> Result<Interval, IntervalError>,
    ) -> Enc {
        Enc(self.0.and_then(|a| other.0.and_then(|b| f(a, b))))
    }
}

impl Add for Enc {
    type Output = Enc;
    fn add(self, rhs: Enc) -> Enc {
        self.zip(rhs, Interval::add)
    }
}

impl Sub for Enc {
    type Output = Enc;
    fn sub(self, rhs: Enc) -> Enc {
        self.zip(rhs, Interval::sub)
    }
}

impl Mul for Enc {
    type Output = Enc;
    fn mul(self, rhs: Enc) -> Enc {
        self.zip(rhs, Interval::mul)
    }
}

impl Neg for Enc {
    type Output = Enc;
    fn neg(self) -> Enc {
        Enc(self.0.map(Interval::neg))
    }
}

impl Scalar for Enc {
    fn constant(c: f64) -> Self {
        Enc(Interval::point(c))
    }
    fn sin(self) -> Self {
        Enc(self.0.map(Interval::sin))
    }
    fn cos(self) -> Self {
        Enc(self.0.map(Interval::cos))
    }
    fn square(self) -> Self {
        Enc(self.0.and_then(Interval::square))
    }
}
