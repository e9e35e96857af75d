//! Exact arithmetic: extended naturals, rationals and localized subgroups of Q.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

/// An element of N ∪ {∞}. `Fin` sorts before `Inf`, so the derived order is
/// the natural one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtNat {
    Fin(BigUint),
    Inf,
}

impl ExtNat {
    pub fn zero() -> Self {
        ExtNat::Fin(BigUint::zero())
    }

    pub fn fin(n: u64) -> Self {
        ExtNat::Fin(BigUint::from(n))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtNat::Fin(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ExtNat::Fin(n) if n.is_zero())
    }

    pub fn as_finite(&self) -> Option<&BigUint> {
        match self {
            ExtNat::Fin(n) => Some(n),
            ExtNat::Inf => None,
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.as_finite().and_then(|n| n.to_u64())
    }

    /// Scalar multiple with the convention 0·∞ = 0.
    pub fn scale(&self, k: &BigUint) -> Self {
        match self {
            ExtNat::Fin(n) => ExtNat::Fin(n * k),
            ExtNat::Inf if k.is_zero() => ExtNat::zero(),
            ExtNat::Inf => ExtNat::Inf,
        }
    }

    /// True when the value is ∞ or a multiple of `q`.
    pub fn divisible_by(&self, q: &BigUint) -> bool {
        match self {
            ExtNat::Fin(n) if q.is_zero() => n.is_zero(),
            ExtNat::Fin(n) => (n % q).is_zero(),
            ExtNat::Inf => true,
        }
    }
}

pub fn ext_add(a: &ExtNat, b: &ExtNat) -> ExtNat {
    match (a, b) {
        (ExtNat::Fin(x), ExtNat::Fin(y)) => ExtNat::Fin(x + y),
        _ => ExtNat::Inf,
    }
}

impl Add for &ExtNat {
    type Output = ExtNat;
    fn add(self, rhs: &ExtNat) -> ExtNat {
        ext_add(self, rhs)
    }
}

impl Add for ExtNat {
    type Output = ExtNat;
    fn add(self, rhs: ExtNat) -> ExtNat {
        ext_add(&self, &rhs)
    }
}

impl From<u64> for ExtNat {
    fn from(n: u64) -> Self {
        ExtNat::fin(n)
    }
}

impl fmt::Display for ExtNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtNat::Fin(n) => write!(f, "{n}"),
            ExtNat::Inf => f.write_str("inf"),
        }
    }
}

impl FromStr for ExtNat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "inf" || t == "∞" {
            return Ok(ExtNat::Inf);
        }
        BigUint::from_str(t)
            .map(ExtNat::Fin)
            .map_err(|_| Error::Parse(format!("not an extended natural: {s:?}")))
    }
}

impl Serialize for ExtNat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExtNat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    Rational::from_str(s.trim()).map_err(|_| Error::Parse(format!("not a rational: {s:?}")))
}

pub fn format_rational(r: &Rational) -> String {
    r.to_string()
}

/// 1/2^n as an exact rational.
pub fn dyadic_unit(n: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << n as usize)
}

pub fn in_unit_interval(r: &Rational) -> bool {
    *r >= Rational::zero() && *r <= Rational::one()
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Prime support of a positive integer by trial division. Intended for the
/// products of small primes that occur as connecting multiplicities.
pub fn prime_support(n: &BigUint) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    if n.is_zero() {
        return out;
    }
    let mut rest = n.clone();
    let mut d = 2u64;
    loop {
        let dd = BigUint::from(d);
        if &dd * &dd > rest {
            break;
        }
        if (&rest % &dd).is_zero() {
            out.insert(d);
            while (&rest % &dd).is_zero() {
                rest /= &dd;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if !rest.is_one() {
        // the cofactor is prime; it fits in u64 for every multiplier we build
        out.insert(rest.to_u64().expect("prime factor exceeds u64"));
    }
    out
}

/// The subgroup Z[1/Πp] of Q, determined up to isomorphism by its prime
/// support. The empty support is Z.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalizedClass {
    pub support: BTreeSet<u64>,
}

impl LocalizedClass {
    pub fn integers() -> Self {
        LocalizedClass { support: BTreeSet::new() }
    }

    pub fn inverting(n: &BigUint) -> Self {
        LocalizedClass { support: prime_support(n) }
    }

    pub fn from_primes<I: IntoIterator<Item = u64>>(ps: I) -> Self {
        LocalizedClass { support: ps.into_iter().collect() }
    }

    pub fn is_integers(&self) -> bool {
        self.support.is_empty()
    }
}

impl fmt::Display for LocalizedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.support.is_empty() {
            return f.write_str("Z");
        }
        let prod: BigUint = self.support.iter().map(|&p| BigUint::from(p)).product();
        write!(f, "Z[1/{prod}]")
    }
}

pub fn localized_iso(a: &LocalizedClass, b: &LocalizedClass) -> bool {
    a.support == b.support
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ext_add_examples() {
        assert_eq!(ext_add(&2.into(), &3.into()), ExtNat::fin(5));
        assert_eq!(ext_add(&ExtNat::Inf, &3.into()), ExtNat::Inf);
        assert_eq!(ext_add(&ExtNat::zero(), &ExtNat::Inf), ExtNat::Inf);
    }

    #[test]
    fn order_puts_infinity_last() {
        assert!(ExtNat::fin(1_000_000) < ExtNat::Inf);
        assert!(ExtNat::zero() < ExtNat::fin(1));
    }

    #[test]
    fn scale_zero_times_infinity() {
        assert_eq!(ExtNat::Inf.scale(&BigUint::zero()), ExtNat::zero());
        assert_eq!(ExtNat::fin(3).scale(&BigUint::from(4u8)), ExtNat::fin(12));
    }

    #[test]
    fn localized_examples() {
        let z2 = LocalizedClass::inverting(&BigUint::from(2u8));
        let z6 = LocalizedClass::inverting(&BigUint::from(6u8));
        let z15 = LocalizedClass::inverting(&BigUint::from(15u8));
        assert!(localized_iso(&z2, &z2.clone()));
        assert!(!localized_iso(&z6, &z15));
        assert!(!localized_iso(&z2, &z6));
        // scaling by a power does not change the class
        let z8 = LocalizedClass::inverting(&BigUint::from(8u8));
        assert!(localized_iso(&z2, &z8));
        assert_eq!(z6.to_string(), "Z[1/6]");
        assert_eq!(LocalizedClass::integers().to_string(), "Z");
    }

    #[test]
    fn support_of_large_power() {
        let n = BigUint::from(35u8).pow(40);
        assert_eq!(prime_support(&n).into_iter().collect::<Vec<_>>(), vec![5, 7]);
        assert!(prime_support(&BigUint::one()).is_empty());
    }

    #[test]
    fn parse_roundtrip() {
        assert_eq!("inf".parse::<ExtNat>().unwrap(), ExtNat::Inf);
        assert_eq!("17".parse::<ExtNat>().unwrap(), ExtNat::fin(17));
        assert!("x".parse::<ExtNat>().is_err());
        assert_eq!(parse_rational("2/4").unwrap(), rat(1, 2));
        assert_eq!(format_rational(&rat(3, 1)), "3");
    }

    #[test]
    fn primes() {
        let ps: Vec<u64> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(ps, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }
}
