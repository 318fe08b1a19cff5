//! Exact numbers `a + b·φ` in the golden field Q(φ), `φ² = φ + 1`, with
//! rational coefficients. Used as coordinates on line fibers so that
//! betweenness in blown-up trees is decided exactly.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const PHI_F64: f64 = 1.618_033_988_749_895;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Quad {
    pub a: BigRational,
    pub b: BigRational,
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Quad {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        Quad { a, b }
    }

    pub fn zero() -> Self {
        Quad {
            a: BigRational::zero(),
            b: BigRational::zero(),
        }
    }

    pub fn one() -> Self {
        Self::int(1)
    }

    pub fn int(n: i64) -> Self {
        Quad {
            a: int(n),
            b: BigRational::zero(),
        }
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Quad {
            a: BigRational::new(BigInt::from(n), BigInt::from(d)),
            b: BigRational::zero(),
        }
    }

    pub fn phi() -> Self {
        Quad {
            a: BigRational::zero(),
            b: int(1),
        }
    }

    /// `a + b·φ` from integer coefficients.
    pub fn from_ints(a: i64, b: i64) -> Self {
        Quad {
            a: int(a),
            b: int(b),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Sign of `a + bφ`, decided through `2(a + bφ) = (2a + b) + b√5`.
    pub fn signum(&self) -> i32 {
        let u = &self.a * int(2) + &self.b;
        let v = &self.b;
        let su = sign(&u);
        let sv = sign(v);
        if su >= 0 && sv >= 0 {
            return (su + sv).signum();
        }
        if su <= 0 && sv <= 0 {
            return -1;
        }
        let u2 = &u * &u;
        let v2 = v * v * int(5);
        match u2.cmp(&v2) {
            Ordering::Greater => su,
            Ordering::Less => sv,
            Ordering::Equal => 0,
        }
    }

    pub fn abs(&self) -> Quad {
        if self.signum() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Field norm `a² + ab − b²`; zero only for zero.
    pub fn norm(&self) -> BigRational {
        &self.a * &self.a + &self.a * &self.b - &self.b * &self.b
    }

    pub fn recip(&self) -> Option<Quad> {
        let n = self.norm();
        if n.is_zero() {
            return None;
        }
        Some(Quad {
            a: (&self.a + &self.b) / &n,
            b: -&self.b / &n,
        })
    }

    /// Nearest float; when `a + bφ` cancels, it is evaluated as
    /// `N/(a + bφ̄)` with the exact norm `N`.
    pub fn to_f64(&self) -> f64 {
        let (a, b) = (
            self.a.to_f64().unwrap_or(f64::NAN),
            self.b.to_f64().unwrap_or(f64::NAN),
        );
        let x = a + b * PHI_F64;
        let y = a + b * (1.0 - PHI_F64);
        if x.abs() < y.abs() {
            self.norm().to_f64().unwrap_or(f64::NAN) / y
        } else {
            x
        }
    }

    pub fn min(self, other: Quad) -> Quad {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Quad) -> Quad {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Nearest rational with denominator `2^bits`, as a rational `Quad`.
    pub fn quantize(x: f64, bits: u32) -> Option<Quad> {
        if !x.is_finite() {
            return None;
        }
        let scale = (1u64 << bits) as f64;
        let n = (x * scale).round();
        if n.abs() > 9.0e18 {
            return None;
        }
        Some(Quad {
            a: BigRational::new(BigInt::from(n as i64), BigInt::from(1u64 << bits)),
            b: BigRational::zero(),
        })
    }

    /// Largest coefficient size in bits, a guard against runaway growth.
    pub fn bits(&self) -> u64 {
        [
            self.a.numer(),
            self.a.denom(),
            self.b.numer(),
            self.b.denom(),
        ]
        .iter()
        .map(|n| n.bits())
        .max()
        .unwrap_or(0)
    }
}

fn sign(x: &BigRational) -> i32 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}

impl PartialOrd for Quad {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Quad {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum().cmp(&0)
    }
}

impl Add for &Quad {
    type Output = Quad;
    fn add(self, o: &Quad) -> Quad {
        Quad {
            a: &self.a + &o.a,
            b: &self.b + &o.b,
        }
    }
}

impl Sub for &Quad {
    type Output = Quad;
    fn sub(self, o: &Quad) -> Quad {
        Quad {
            a: &self.a - &o.a,
            b: &self.b - &o.b,
        }
    }
}

impl Mul for &Quad {
    type Output = Quad;
    fn mul(self, o: &Quad) -> Quad {
        // (a + bφ)(c + dφ) = ac + bd + (ad + bc + bd)φ
        let bd = &self.b * &o.b;
        Quad {
            a: &self.a * &o.a + &bd,
            b: &self.a * &o.b + &self.b * &o.a + bd,
        }
    }
}

impl Div for &Quad {
    type Output = Quad;
    fn div(self, o: &Quad) -> Quad {
        self * &o.recip().expect("division by zero")
    }
}

impl Neg for Quad {
    type Output = Quad;
    fn neg(self) -> Quad {
        Quad {
            a: -self.a,
            b: -self.b,
        }
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for Quad {
            type Output = Quad;
            fn $m(self, o: Quad) -> Quad {
                (&self).$m(&o)
            }
        }
        impl $tr<&Quad> for Quad {
            type Output = Quad;
            fn $m(self, o: &Quad) -> Quad {
                (&self).$m(o)
            }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul, Div div);

impl Zero for Quad {
    fn zero() -> Self {
        Quad::zero()
    }
    fn is_zero(&self) -> bool {
        Quad::is_zero(self)
    }
}

impl One for Quad {
    fn one() -> Self {
        Quad::one()
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => write!(f, "{}", self.a),
            (true, false) => write_phi(f, &self.b, false),
            (false, false) => {
                write!(f, "{}", self.a)?;
                write_phi(f, &self.b, true)
            }
        }
    }
}

fn write_phi(f: &mut fmt::Formatter<'_>, b: &BigRational, joined: bool) -> fmt::Result {
    let neg = b.is_negative();
    let m = b.abs();
    if joined {
        write!(f, " {} ", if neg { '-' } else { '+' })?;
    } else if neg {
        write!(f, "-")?;
    }
    if m.is_one() {
        write!(f, "phi")
    } else {
        write!(f, "{m}phi")
    }
}

const MAX_PARSE_BITS: u64 = 2048;

/// Parses sums of terms such as `3/2`, `phi`, `-2phi`, `1 - 3/4 phi`.
impl FromStr for Quad {
    type Err = Error;

    fn from_str(s: &str) -> Result<Quad> {
        let bad = || Error::Invalid(format!("bad number {s:?}"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() || compact.len() > 4096 {
            return Err(bad());
        }
        let mut out = Quad::zero();
        let mut term = String::new();
        let mut terms = Vec::new();
        for (i, c) in compact.char_indices() {
            if (c == '+' || c == '-') && i > 0 && !compact[..i].ends_with(['e', 'E', '/']) {
                terms.push(std::mem::take(&mut term));
            }
            term.push(c);
        }
        terms.push(term);
        for t in terms {
            let (neg, body) = match t.strip_prefix('-') {
                Some(r) => (true, r),
                None => (false, t.strip_prefix('+').unwrap_or(&t)),
            };
            let (coef, is_phi) = match body.strip_suffix("phi") {
                Some(c) => (c.strip_suffix('*').unwrap_or(c), true),
                None => (body, false),
            };
            let r = if coef.is_empty() {
                if !is_phi {
                    return Err(bad());
                }
                int(1)
            } else {
                parse_big_rational(coef).ok_or_else(bad)?
            };
            let r = if neg { -r } else { r };
            if is_phi {
                out.b += r;
            } else {
                out.a += r;
            }
        }
        // bounded by size rather than text length, so printed values reparse
        if out.bits() > MAX_PARSE_BITS {
            return Err(bad());
        }
        Ok(out)
    }
}

fn parse_big_rational(s: &str) -> Option<BigRational> {
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.parse().ok()?;
        let d: BigInt = d.parse().ok()?;
        return (!d.is_zero()).then(|| BigRational::new(n, d));
    }
    if let Some((i, f)) = s.split_once('.') {
        if f.is_empty()
            || !f.chars().all(|c| c.is_ascii_digit())
            || !i.chars().all(|c| c.is_ascii_digit())
        {
            return None;
        }
        let den = BigInt::from(10u32).pow(f.len() as u32);
        let whole: BigInt = format!("{}{}", if i.is_empty() { "0" } else { i }, f)
            .parse()
            .ok()?;
        return Some(BigRational::new(whole, den));
    }
    s.parse::<BigInt>().ok().map(BigRational::from_integer)
}

impl Serialize for Quad {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Quad {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Quad, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Quad::int(n)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: i64, b: i64) -> Quad {
        Quad::from_ints(a, b)
    }

    #[test]
    fn field_identities() {
        let phi = Quad::phi();
        assert_eq!(&phi * &phi, &phi + &Quad::one());
        assert_eq!(phi.recip().unwrap(), &phi - &Quad::one());
        assert_eq!(Quad::zero().recip(), None);
        assert_eq!(q(3, -2).norm(), int(9 - 6 - 4));
    }

    #[test]
    fn signs_near_zero() {
        // F(n+1) - F(n)·φ alternates in sign and tends to zero
        let fib = [1i64, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144];
        for n in 1..fib.len() - 1 {
            let x = q(fib[n + 1], -fib[n]);
            let want = if n % 2 == 1 { 1 } else { -1 };
            assert_eq!(x.signum(), want, "n = {n}");
            assert!((x.to_f64() - (fib[n + 1] as f64 - fib[n] as f64 * PHI_F64)).abs() < 1e-9);
        }
        // |F(n+1) − F(n)φ| = φ^-n stays accurate to relative precision
        let (mut f0, mut f1) = (0i64, 1i64);
        for n in 1..80 {
            (f0, f1) = (f1, f0 + f1);
            let want = PHI_F64.powi(-n);
            assert!(
                (q(f1, -f0).to_f64().abs() - want).abs() < 1e-12 * want,
                "n = {n}"
            );
        }
        assert_eq!(q(0, 0).signum(), 0);
        assert!(q(2, 0) > Quad::phi());
        assert!(q(1, 0) < Quad::phi());
    }

    #[test]
    fn text_round_trip() {
        for s in [
            "0",
            "3/2",
            "phi",
            "-phi",
            "1 + phi",
            "-1/2 - 3/4phi",
            "2phi",
        ] {
            let x: Quad = s.parse().unwrap();
            assert_eq!(x.to_string().parse::<Quad>().unwrap(), x, "{s}");
        }
        assert_eq!("1.25".parse::<Quad>().unwrap(), Quad::ratio(5, 4));
        assert_eq!("2*phi - 1".parse::<Quad>().unwrap(), q(-1, 2));
        assert!("".parse::<Quad>().is_err());
        assert!("1/0".parse::<Quad>().is_err());
        assert!("x".parse::<Quad>().is_err());
        assert!("phiphi".parse::<Quad>().is_err());
        let json = serde_json::to_string(&q(1, -1)).unwrap();
        assert_eq!(serde_json::from_str::<Quad>(&json).unwrap(), q(1, -1));
        assert_eq!(serde_json::from_str::<Quad>("3").unwrap(), q(3, 0));
    }

    proptest! {
        #[test]
        fn order_matches_floats(a in -1000i64..1000, b in -1000i64..1000, c in -1000i64..1000, d in -1000i64..1000) {
            let (x, y) = (q(a, b), q(c, d));
            let (fx, fy) = (x.to_f64(), y.to_f64());
            if (fx - fy).abs() > 1e-6 {
                prop_assert_eq!(x < y, fx < fy);
            }
            prop_assert_eq!(x == y, a == c && b == d);
            if !y.is_zero() {
                prop_assert_eq!(&(&x / &y) * &y, x.clone());
            }
            prop_assert!(((&x * &y).to_f64() - fx * fy).abs() < 1e-6 * (1.0 + (fx * fy).abs()));
        }
    }

    #[test]
    fn long_decimals_reprint() {
        let x: Quad = format!(".{}", "3".repeat(117)).parse().unwrap();
        assert_eq!(x.to_string().parse::<Quad>().unwrap(), x);
        assert!(format!("0.{}", "3".repeat(1000)).parse::<Quad>().is_err());
    }
}
