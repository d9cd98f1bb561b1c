//! Exact scalar types.
//!
//! Everything the library proves is proved over arbitrary-precision
//! rationals: [`Rational`] is the weight type of automata, the entry type of
//! compiled network parameters, and the substrate of the bit-precision
//! measure [`precision_of`]. Floating-point evaluation is available through
//! the [`Scalar`] trait, which lets the same code run in either mode;
//! [`Mode::Exact`] is always the source of truth.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RationalError {
    #[error("denominator is zero")]
    ZeroDenominator,
    #[error("malformed rational `{0}`")]
    Malformed(String),
}

/// An arbitrary-precision fraction, kept in lowest terms with a positive
/// denominator. Zero is canonically `0/1`. Sums, products and quotients of
/// rationals are exact; nothing in this type ever rounds.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    /// Builds `numer/denom`, reducing to lowest terms. The denominator must
    /// be nonzero; its sign is moved into the numerator.
    pub fn new(numer: BigInt, denom: BigInt) -> Result<Self, RationalError> {
        if denom.is_zero() {
            return Err(RationalError::ZeroDenominator);
        }
        Ok(Rational(BigRational::new(numer, denom)))
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    /// `numer/denom` from machine integers; panics if `denom == 0`.
    pub fn ratio(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "denominator is zero");
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn pow(&self, exp: u32) -> Self {
        let mut acc = Rational::one();
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Nearest 64-bit float; the only lossy operation on this type.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl FromStr for Rational {
    type Err = RationalError;

    /// Accepts `p/q`, plain integers, and finite decimals. Decimals parse to
    /// the exact base-10 fraction: `"0.4"` is `2/5`, never a float.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let malformed = || RationalError::Malformed(s.to_string());
        if let Some((num, den)) = s.split_once('/') {
            let numer = BigInt::from_str(num.trim()).map_err(|_| malformed())?;
            let denom = BigInt::from_str(den.trim()).map_err(|_| malformed())?;
            return Rational::new(numer, denom);
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            let negative = int_part.starts_with('-');
            let int = if int_part == "-" || int_part.is_empty() {
                BigInt::zero()
            } else {
                BigInt::from_str(int_part).map_err(|_| malformed())?
            };
            let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
            let frac = BigInt::from_str(frac_part).map_err(|_| malformed())?;
            let numer = if negative { int * &scale - frac } else { int * &scale + frac };
            return Rational::new(numer, scale);
        }
        let numer = BigInt::from_str(s).map_err(|_| malformed())?;
        Ok(Rational(BigRational::from_integer(numer)))
    }
}

impl fmt::Display for Rational {
    /// Canonical form: `p/q` in lowest terms, or just `p` for integers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! rational_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                $trait::$method(&self, &rhs)
            }
        }
    };
}

rational_binop!(Add, add);
rational_binop!(Sub, sub);
rational_binop!(Mul, mul);
rational_binop!(Div, div);

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

/// Selects the arithmetic backing a computation: exact rationals or 64-bit
/// floats. Exact mode never rounds and is the reference for every check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => write!(f, "exact"),
            Mode::Float => write!(f, "float"),
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Mode::Exact),
            "float" => Ok(Mode::Float),
            other => Err(format!("unknown mode `{other}`, expected `exact` or `float`")),
        }
    }
}

/// The operations automaton and network evaluation need from a number type.
/// Implemented by [`Rational`] (exact) and `f64` (float), so both modes share
/// one code path.
pub trait Scalar: Clone + PartialOrd + fmt::Debug + fmt::Display {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn from_usize(n: usize) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn abs(&self) -> Self;

    /// max(0, x).
    fn relu(&self) -> Self {
        if *self < Self::zero() {
            Self::zero()
        } else {
            self.clone()
        }
    }
}

impl Scalar for Rational {
    fn zero() -> Self {
        Rational::zero()
    }
    fn one() -> Self {
        Rational::one()
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_usize(n: usize) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn is_zero(&self) -> bool {
        Rational::is_zero(self)
    }
    fn abs(&self) -> Self {
        Rational::abs(self)
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(r: &Rational) -> Self {
        r.to_f64()
    }
    fn from_usize(n: usize) -> Self {
        n as f64
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

/// ⌈log2 n⌉ over naturals, with ⌈log2 0⌉ taken as 0.
fn ceil_log2(n: &BigUint) -> u64 {
    if n.is_zero() || n.is_one() {
        return 0;
    }
    let bits = n.bits();
    if n.count_ones() == 1 {
        bits - 1
    } else {
        bits
    }
}

/// Bits needed to store a rational as a numerator/denominator pair in lowest
/// terms: ⌈log2 p⌉ + ⌈log2 q⌉. The measure is taken on the magnitude, so the
/// sign is free, and `ψ(0) = ψ(1) = 0`.
///
/// Submultiplicativity, `ψ(x·y) ≤ ψ(x) + ψ(y)`, is what makes per-step
/// precision growth of the compiled network additive in the step count.
pub fn precision_of(x: &Rational) -> u64 {
    let p = x.numer().magnitude();
    let q = x.denom().magnitude();
    ceil_log2(p) + ceil_log2(q)
}

/// Precision of a vector: the worst entry's [`precision_of`]. Empty vectors
/// need 0 bits.
pub fn vector_precision(v: &[Rational]) -> u64 {
    v.iter().map(precision_of).max().unwrap_or(0)
}

/// A real number extended with `−∞` and `+∞`. `−∞` compares below every
/// finite value and `exp(−∞) = 0`, which is exactly what lets a logarithmic
/// output function hand zero probabilities to a softmax.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn exp(self) -> f64 {
        match self {
            ExtendedReal::NegInf => 0.0,
            ExtendedReal::Finite(x) => x.exp(),
            ExtendedReal::PosInf => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// The finite value, or ±∞ as IEEE infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::NegInf => f64::NEG_INFINITY,
            ExtendedReal::Finite(x) => x,
            ExtendedReal::PosInf => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::NegInf => write!(f, "-inf"),
            ExtendedReal::Finite(x) => write!(f, "{x}"),
            ExtendedReal::PosInf => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn construction_reduces_and_normalizes_sign() {
        assert_eq!(Rational::ratio(2, 4).to_string(), "1/2");
        assert_eq!(Rational::ratio(1, -2).to_string(), "-1/2");
        assert_eq!(Rational::ratio(0, -7).to_string(), "0");
        assert_eq!(Rational::ratio(0, 5).denom(), &BigInt::from(1));
        assert!(Rational::new(BigInt::from(1), BigInt::from(0)).is_err());
    }

    #[test]
    fn decimal_strings_parse_to_exact_fractions() {
        assert_eq!(rat("0.4"), Rational::ratio(2, 5));
        assert_eq!(rat("1.25"), Rational::ratio(5, 4));
        assert_eq!(rat("-0.1"), Rational::ratio(-1, 10));
        assert_eq!(rat(".5"), Rational::ratio(1, 2));
        assert_eq!(rat("3"), Rational::from_integer(3));
        assert_eq!(rat("9/10"), Rational::ratio(9, 10));
    }

    #[test]
    fn malformed_rationals_are_rejected() {
        for bad in ["", "abc", "1/0", "1//2", "1.2.3", "0x10", "1.-2", "1. 2"] {
            assert!(bad.parse::<Rational>().is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn precision_examples() {
        // ψ(1) = ⌈log2 1⌉ + ⌈log2 1⌉ = 0
        assert_eq!(precision_of(&rat("1")), 0);
        // ψ(0) = 0 by the 0/1 convention
        assert_eq!(precision_of(&rat("0")), 0);
        // ψ(3/4) = ⌈log2 3⌉ + ⌈log2 4⌉ = 2 + 2
        assert_eq!(precision_of(&rat("3/4")), 4);
        // ψ(1/2) = 0 + 1
        assert_eq!(precision_of(&rat("1/2")), 1);
        // ψ(2/5) = 1 + 3, ψ(3/5) = 2 + 3, ψ(9/10) = 4 + 4
        assert_eq!(precision_of(&rat("2/5")), 4);
        assert_eq!(precision_of(&rat("3/5")), 5);
        assert_eq!(precision_of(&rat("9/10")), 8);
        // signs are free
        assert_eq!(precision_of(&rat("-1")), 0);
        assert_eq!(precision_of(&rat("-3/4")), 4);
    }

    #[test]
    fn vector_precision_is_the_max_entry() {
        assert_eq!(vector_precision(&[rat("1"), rat("0")]), 0);
        assert_eq!(vector_precision(&[rat("3/4"), rat("1/2")]), 4);
        assert_eq!(vector_precision(&[rat("2/5"), rat("3/5")]), 5);
        assert_eq!(vector_precision(&[]), 0);
    }

    #[test]
    fn ceil_log2_handles_powers_of_two() {
        for (n, want) in [(0u32, 0u64), (1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4)] {
            assert_eq!(ceil_log2(&BigUint::from(n)), want, "n = {n}");
        }
    }

    #[test]
    fn extended_reals_order_and_exponentiate() {
        use ExtendedReal::*;
        assert!(NegInf < Finite(-1e300));
        assert!(Finite(0.0) < PosInf);
        assert!(Finite(1.0) < Finite(2.0));
        assert_eq!(NegInf.exp(), 0.0);
        assert_eq!(Finite(0.0).exp(), 1.0);
    }

    fn arb_rational() -> impl Strategy<Value = Rational> {
        (any::<i32>(), 1..=u32::MAX).prop_map(|(n, d)| {
            Rational::new(BigInt::from(n), BigInt::from(d)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn precision_is_submultiplicative(x in arb_rational(), y in arb_rational()) {
            let (x, y) = (x.abs(), y.abs());
            let product = &x * &y;
            prop_assert!(precision_of(&product) <= precision_of(&x) + precision_of(&y));
        }

        #[test]
        fn parse_of_display_is_identity(x in arb_rational()) {
            let round_tripped: Rational = x.to_string().parse().unwrap();
            prop_assert_eq!(round_tripped, x);
        }

        #[test]
        fn float_mode_tracks_exact_arithmetic(x in arb_rational(), y in arb_rational()) {
            let exact = (&x * &y) + (&x - &y);
            let float = x.to_f64().mul(&y.to_f64()).add(&x.to_f64().sub(&y.to_f64()));
            let err = (exact.to_f64() - float).abs();
            let scale = 1.0_f64.max(exact.to_f64().abs());
            prop_assert!(err <= 1e-12 * scale);
        }
    }
}
