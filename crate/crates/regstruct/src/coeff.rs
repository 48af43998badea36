//! Coefficient rings used throughout the symbolic layer.
//!
//! Exact computations use arbitrary-precision rationals; the numeric layer
//! reuses the same linear-combination machinery over `f64`.

use num::{BigInt, BigRational, One, Signed, Zero};

/// Exact rational scalar.
pub type Q = BigRational;

/// Convenience constructor for small rationals.
pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn q_int(n: i64) -> Q {
    Q::from(BigInt::from(n))
}

/// Minimal commutative-ring interface for linear-combination coefficients.
pub trait Coeff: Clone + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    /// Embed an exact rational into the ring.
    fn from_q(v: &Q) -> Self;

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }
    fn from_int(n: i64) -> Self {
        Self::from_q(&q_int(n))
    }
}

impl Coeff for Q {
    fn zero() -> Self {
        <Q as Zero>::zero()
    }
    fn one() -> Self {
        <Q as One>::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_q(v: &Q) -> Self {
        v.clone()
    }
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_q(v: &Q) -> Self {
        q_to_f64(v)
    }
}

/// Lossy conversion for handing exact results to the numeric layer.
pub fn q_to_f64(v: &Q) -> f64 {
    // Exact for the small numerators/denominators that occur in practice;
    // falls back to a digit-string parse for large ones.
    let num = v.numer();
    let den = v.denom();
    match (num.to_string().parse::<f64>(), den.to_string().parse::<f64>()) {
        (Ok(n), Ok(d)) => n / d,
        _ => {
            let sign = if v.is_negative() { -1.0 } else { 1.0 };
            sign * f64::INFINITY
        }
    }
}
