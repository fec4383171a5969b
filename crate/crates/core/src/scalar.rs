//! Scalar abstractions shared by every engine.
//!
//! Two roles exist. A [`Weight`] is a probability-like field element
//! (ensemble weights, yields, branch probabilities). An [`Amplitude`] is
//! the coefficient type of a [`PureState`](crate::PureState); each amplitude
//! type names the weight type its squared magnitudes live in.
//!
//! The exact pair is [`Rational`] / [`QSqrt2`]: every state reachable by the
//! purification protocols has amplitudes `r * 2^(-k/2)` with rational `r`, so
//! the field Q(√2) holds them exactly and branch probabilities come out as
//! plain rationals. The floating pairs are `f64`/`f64` and `f32`/`f32`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// Exact rational number used by the analytic and enumeration engines.
pub type Rational = BigRational;

/// Field of probabilities: exact rationals or IEEE floats.
pub trait Weight:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialOrd
    + Num
    + Neg<Output = Self>
    + FromPrimitive
    + Send
    + Sync
    + 'static
{
    /// Amplitude type whose squared magnitudes are weights of this type.
    type Amp: Amplitude<Weight = Self>;

    /// True when arithmetic is exact and equality checks need no tolerance.
    const EXACT: bool;

    fn to_f64(&self) -> f64;

    /// Equality, exact for rationals and within a type-specific tolerance
    /// for floats.
    fn approx_eq(&self, other: &Self) -> bool;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("integer weight") / Self::from_i64(den).expect("integer weight")
    }

    fn powi(&self, exp: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Weight for Rational {
    type Amp = QSqrt2;
    const EXACT: bool = true;

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }
}

impl Weight for f64 {
    type Amp = f64;
    const EXACT: bool = false;

    fn to_f64(&self) -> f64 {
        *self
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12
    }
}

impl Weight for f32 {
    type Amp = f32;
    const EXACT: bool = false;

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-5
    }
}

/// Real amplitude of one basis term.
pub trait Amplitude:
    Clone
    + fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
    + Send
    + Sync
    + 'static
{
    type Weight: Weight<Amp = Self>;

    fn frac_1_sqrt_2() -> Self;

    /// Converts to a weight when the value lies in the weight field.
    /// Returns `None` for irrational elements of Q(√2).
    fn to_weight(&self) -> Option<Self::Weight>;

    fn from_weight(w: &Self::Weight) -> Self;

    /// Square root of a nonnegative weight, if it is representable.
    fn sqrt_weight(w: &Self::Weight) -> Option<Self>;

    /// Terms whose amplitude satisfies this are dropped from states.
    fn negligible(&self) -> bool {
        self.is_zero()
    }

    fn close_to(&self, other: &Self) -> bool;

    fn to_f64(&self) -> f64;
}

/// Element `a + b√2` of the field Q(√2) with rational coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QSqrt2 {
    a: Rational,
    b: Rational,
}

impl QSqrt2 {
    pub fn new(a: Rational, b: Rational) -> Self {
        QSqrt2 { a, b }
    }

    pub fn rational(a: Rational) -> Self {
        QSqrt2 {
            a,
            b: Rational::zero(),
        }
    }

    /// Rational coordinate.
    pub fn a(&self) -> &Rational {
        &self.a
    }

    /// Coefficient of √2.
    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn abs(&self) -> QSqrt2 {
        if self.to_f64() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Add for QSqrt2 {
    type Output = QSqrt2;
    fn add(self, rhs: QSqrt2) -> QSqrt2 {
        QSqrt2 {
            a: self.a + rhs.a,
            b: self.b + rhs.b,
        }
    }
}

impl Sub for QSqrt2 {
    type Output = QSqrt2;
    fn sub(self, rhs: QSqrt2) -> QSqrt2 {
        QSqrt2 {
            a: self.a - rhs.a,
            b: self.b - rhs.b,
        }
    }
}

impl Mul for QSqrt2 {
    type Output = QSqrt2;
    fn mul(self, rhs: QSqrt2) -> QSqrt2 {
        let two = Rational::from_integer(BigInt::from(2));
        QSqrt2 {
            a: &self.a * &rhs.a + two * &self.b * &rhs.b,
            b: &self.a * &rhs.b + &self.b * &rhs.a,
        }
    }
}

impl Neg for QSqrt2 {
    type Output = QSqrt2;
    fn neg(self) -> QSqrt2 {
        QSqrt2 {
            a: -self.a,
            b: -self.b,
        }
    }
}

impl Zero for QSqrt2 {
    fn zero() -> Self {
        QSqrt2::rational(Rational::zero())
    }
    fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }
}

impl One for QSqrt2 {
    fn one() -> Self {
        QSqrt2::rational(Rational::one())
    }
}

fn exact_sqrt(x: &BigInt) -> Option<BigInt> {
    if x.is_negative() {
        return None;
    }
    let r = x.sqrt();
    (&r * &r == *x).then_some(r)
}

fn rational_sqrt(q: &Rational) -> Option<Rational> {
    let n = exact_sqrt(q.numer())?;
    let d = exact_sqrt(q.denom())?;
    Some(Rational::new(n, d))
}

impl Amplitude for QSqrt2 {
    type Weight = Rational;

    fn frac_1_sqrt_2() -> Self {
        QSqrt2 {
            a: Rational::zero(),
            b: Rational::new(BigInt::from(1), BigInt::from(2)),
        }
    }

    fn to_weight(&self) -> Option<Rational> {
        self.b.is_zero().then(|| self.a.clone())
    }

    fn from_weight(w: &Rational) -> Self {
        QSqrt2::rational(w.clone())
    }

    fn sqrt_weight(w: &Rational) -> Option<Self> {
        if w.is_negative() {
            return None;
        }
        if let Some(r) = rational_sqrt(w) {
            return Some(QSqrt2::rational(r));
        }
        // sqrt(w) = sqrt(2w) / √2 = (sqrt(2w) / 2) √2
        let two = Rational::from_integer(BigInt::from(2));
        let r = rational_sqrt(&(w * &two))?;
        Some(QSqrt2 {
            a: Rational::zero(),
            b: r / two,
        })
    }

    fn close_to(&self, other: &Self) -> bool {
        self == other
    }

    fn to_f64(&self) -> f64 {
        Weight::to_f64(&self.a) + Weight::to_f64(&self.b) * std::f64::consts::SQRT_2
    }
}

fn fmt_magnitude(f: &mut fmt::Formatter<'_>, r: &Rational, root2: bool) -> fmt::Result {
    let n = r.numer();
    let d = r.denom();
    if !root2 {
        return if d.is_one() {
            write!(f, "{n}")
        } else {
            write!(f, "{n}/{d}")
        };
    }
    // r√2 written as n/(k√2) when the denominator is even, else as (n/d)√2.
    if (d % BigInt::from(2)).is_zero() {
        let k: BigInt = d / BigInt::from(2);
        if k.is_one() {
            write!(f, "{n}/√2")
        } else {
            write!(f, "{n}/({k}√2)")
        }
    } else if d.is_one() {
        write!(f, "{n}√2")
    } else {
        write!(f, "({n}/{d})√2")
    }
}

impl fmt::Display for QSqrt2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => fmt_magnitude(f, &self.a, false),
            (true, false) => fmt_magnitude(f, &self.b, true),
            (false, false) => {
                fmt_magnitude(f, &self.a, false)?;
                if self.b.is_negative() {
                    write!(f, " - ")?;
                    fmt_magnitude(f, &-self.b.clone(), true)
                } else {
                    write!(f, " + ")?;
                    fmt_magnitude(f, &self.b, true)
                }
            }
        }
    }
}

macro_rules! float_amplitude {
    ($t:ty, $tol:expr, $neg:expr) => {
        impl Amplitude for $t {
            type Weight = $t;

            fn frac_1_sqrt_2() -> Self {
                1.0 / (2.0 as $t).sqrt()
            }

            fn to_weight(&self) -> Option<$t> {
                Some(*self)
            }

            fn from_weight(w: &$t) -> Self {
                *w
            }

            fn sqrt_weight(w: &$t) -> Option<Self> {
                (*w >= 0.0).then(|| w.sqrt())
            }

            fn negligible(&self) -> bool {
                self.abs() < $neg
            }

            fn close_to(&self, other: &Self) -> bool {
                (self - other).abs() <= $tol
            }

            fn to_f64(&self) -> f64 {
                f64::from(*self)
            }
        }
    };
}

float_amplitude!(f64, 1e-12, 1e-14);
float_amplitude!(f32, 1e-5, 1e-7);

/// Shorthand for an exact rational `num/den`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `p/q`, an integer, or a finite decimal such as `0.875` into an
/// exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", if int.is_empty() { "0" } else { int }, frac);
    let n: BigInt = digits.parse().ok()?;
    let d = num_traits::pow(BigInt::from(10), frac.len());
    let r = Rational::new(n, d);
    Some(if neg { -r } else { r })
}

/// Renders a rational with `digits` significant digits, rounding half to
/// even. Output is locale independent, e.g. `0.656250000000` for 21/32 at
/// 12 digits.
pub fn format_significant(value: &Rational, digits: usize) -> String {
    assert!(digits > 0);
    if value.is_zero() {
        return format!("0.{}", "0".repeat(digits - 1));
    }
    let neg = value.is_negative();
    let v = value.abs();
    let ten = BigInt::from(10);

    // Decimal exponent e with 10^e <= v < 10^(e+1).
    let mut e: i64 = (v.numer().to_string().len() as i64) - (v.denom().to_string().len() as i64);
    let pow10 = |k: i64| -> Rational {
        if k >= 0 {
            Rational::from_integer(num_traits::pow(ten.clone(), k as usize))
        } else {
            Rational::new(BigInt::one(), num_traits::pow(ten.clone(), (-k) as usize))
        }
    };
    while pow10(e) > v {
        e -= 1;
    }
    while pow10(e + 1) <= v {
        e += 1;
    }

    let shift = digits as i64 - 1 - e;
    let mut scaled = &v * pow10(shift);
    let mut int = scaled.floor().to_integer();
    let rem = &scaled - Rational::from_integer(int.clone());
    let half = Rational::new(BigInt::one(), BigInt::from(2));
    if rem > half || (rem == half && (&int % BigInt::from(2)).is_one()) {
        int += 1;
    }
    // Rounding may carry into a new leading digit (9.99.. -> 10.0..).
    let mut shift = shift;
    if int.to_string().len() > digits {
        shift -= 1;
        scaled = &v * pow10(shift);
        int = scaled.round().to_integer();
    }

    let s = int.to_string();
    let body = if shift <= 0 {
        format!("{}{}", s, "0".repeat((-shift) as usize))
    } else if (shift as usize) >= s.len() {
        format!("0.{}{}", "0".repeat(shift as usize - s.len()), s)
    } else {
        let split = s.len() - shift as usize;
        format!("{}.{}", &s[..split], &s[split..])
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qsqrt2_field_ops() {
        let h = QSqrt2::frac_1_sqrt_2();
        assert_eq!(h.clone() * h.clone(), QSqrt2::rational(ratio(1, 2)));
        assert_eq!((h.clone() * h.clone()).to_weight(), Some(ratio(1, 2)));
        assert_eq!(h.to_weight(), None);
        assert!((h.clone() - h).is_zero());
    }

    #[test]
    fn sqrt_of_dyadic_weights() {
        assert_eq!(
            QSqrt2::sqrt_weight(&ratio(1, 4)),
            Some(QSqrt2::rational(ratio(1, 2)))
        );
        assert_eq!(
            QSqrt2::sqrt_weight(&ratio(1, 2)),
            Some(QSqrt2::frac_1_sqrt_2())
        );
        let s = QSqrt2::sqrt_weight(&ratio(1, 8)).unwrap();
        assert_eq!((s.clone() * s).to_weight(), Some(ratio(1, 8)));
        assert_eq!(QSqrt2::sqrt_weight(&ratio(1, 3)), None);
    }

    #[test]
    fn display_forms() {
        assert_eq!(QSqrt2::frac_1_sqrt_2().to_string(), "1/√2");
        assert_eq!(QSqrt2::rational(ratio(1, 2)).to_string(), "1/2");
        let q = QSqrt2::sqrt_weight(&ratio(1, 8)).unwrap();
        assert_eq!(q.to_string(), "1/(2√2)");
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("7/10"), Some(ratio(7, 10)));
        assert_eq!(parse_rational("0.875"), Some(ratio(7, 8)));
        assert_eq!(parse_rational("1"), Some(ratio(1, 1)));
        assert_eq!(parse_rational(".5"), Some(ratio(1, 2)));
        assert_eq!(parse_rational("-0.25"), Some(ratio(-1, 4)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational(""), None);
    }

    #[test]
    fn significant_digits_half_even() {
        assert_eq!(format_significant(&ratio(1, 3), 12), "0.333333333333");
        assert_eq!(format_significant(&ratio(2, 3), 12), "0.666666666667");
        assert_eq!(format_significant(&ratio(21, 32), 12), "0.656250000000");
        assert_eq!(format_significant(&ratio(1, 1), 12), "1.00000000000");
        assert_eq!(format_significant(&ratio(1, 2), 12), "0.500000000000");
        assert_eq!(format_significant(&ratio(0, 1), 3), "0.00");
        // ties go to the even neighbour
        assert_eq!(format_significant(&ratio(125, 1000), 2), "0.12");
        assert_eq!(format_significant(&ratio(135, 1000), 2), "0.14");
        assert_eq!(format_significant(&ratio(9995, 1000), 3), "10.0");
        assert_eq!(format_significant(&ratio(1234, 1), 2), "1200");
        assert_eq!(format_significant(&ratio(-1, 8), 3), "-0.125");
    }
}
