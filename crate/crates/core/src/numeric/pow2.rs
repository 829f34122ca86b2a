use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use super::value::{pv_cmp_scaled, PosValue, Verdict3};

/// A constant of the form `2^j`, `j >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pow2(pub u32);

impl Pow2 {
    pub const ONE: Pow2 = Pow2(0);

    pub fn exponent(self) -> u32 {
        self.0
    }

    pub fn value(self) -> BigRational {
        BigRational::from_integer(BigInt::one() << self.0)
    }

    pub fn as_pos(self) -> PosValue {
        PosValue::Exact(self.value())
    }

    /// Smallest `2^j >= r` (and `j >= 0`).
    pub fn ceil_of(r: &BigRational) -> Pow2 {
        let mut j = 0u32;
        let mut v = BigRational::one();
        while &v < r {
            v *= BigRational::from_integer(BigInt::from(2));
            j += 1;
        }
        Pow2(j)
    }

    pub fn max(self, other: Pow2) -> Pow2 {
        Pow2(self.0.max(other.0))
    }

    pub fn saturating_mul(self, other: Pow2) -> Pow2 {
        Pow2(self.0.saturating_add(other.0))
    }
}

impl fmt::Display for Pow2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2^{}", self.0)
    }
}

impl FromStr for Pow2 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("2^")
            .and_then(|e| e.parse().ok())
            .map(Pow2)
            .ok_or_else(|| format!("expected `2^<j>`, found `{s}`"))
    }
}

impl serde::Serialize for Pow2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Pow2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of searching the smallest `j <= cap` with `a <= 2^j b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSearch {
    Found(u32),
    /// Certified false at `2^cap`.
    Exceeded,
    /// Not certified at `2^cap`, not refuted either.
    Undecided,
}

fn holds(a: &PosValue, j: u32, b: &PosValue) -> Verdict3 {
    pv_cmp_scaled(a, &Pow2(j).value(), b)
}

/// Smallest `j` in `0..=cap` with `a <= 2^j * b` certified.
pub fn smallest_pow2_bound(a: &PosValue, b: &PosValue, cap: u32) -> BoundSearch {
    if holds(a, 0, b).is_true() {
        return BoundSearch::Found(0);
    }
    let t = a.log2_approx() - b.log2_approx();
    if t.is_finite() && t > 0.0 && t < cap as f64 {
        let j0 = (t.ceil() as u32).clamp(1, cap);
        if holds(a, j0, b).is_true() && !holds(a, j0 - 1, b).is_true() {
            return BoundSearch::Found(j0);
        }
    }
    match holds(a, cap, b) {
        Verdict3::CertTrue => {}
        Verdict3::CertFalse => return BoundSearch::Exceeded,
        Verdict3::Unknown { .. } => return BoundSearch::Undecided,
    }
    // invariant: fails at lo, holds at hi
    let (mut lo, mut hi) = (0u32, cap);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(a, mid, b).is_true() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    BoundSearch::Found(hi)
}

/// Smallest `j` with `a <= 2^j b` and `b <= 2^j a`.
pub fn smallest_two_sided(a: &PosValue, b: &PosValue, cap: u32) -> BoundSearch {
    match (smallest_pow2_bound(a, b, cap), smallest_pow2_bound(b, a, cap)) {
        (BoundSearch::Found(x), BoundSearch::Found(y)) => BoundSearch::Found(x.max(y)),
        (BoundSearch::Exceeded, _) | (_, BoundSearch::Exceeded) => BoundSearch::Exceeded,
        _ => BoundSearch::Undecided,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_of_rationals() {
        assert_eq!(Pow2::ceil_of(&BigRational::new(3.into(), 1.into())), Pow2(2));
        assert_eq!(Pow2::ceil_of(&BigRational::new(4.into(), 1.into())), Pow2(2));
        assert_eq!(Pow2::ceil_of(&BigRational::new(1.into(), 2.into())), Pow2(0));
    }

    #[test]
    fn searches() {
        let three = PosValue::ratio(3, 1);
        let one = PosValue::one();
        assert_eq!(smallest_pow2_bound(&three, &one, 64), BoundSearch::Found(2));
        assert_eq!(smallest_pow2_bound(&one, &three, 64), BoundSearch::Found(0));
        assert_eq!(smallest_two_sided(&three, &one, 64), BoundSearch::Found(2));
        let big = PosValue::pow2(BigInt::from(100));
        assert_eq!(smallest_pow2_bound(&big, &one, 64), BoundSearch::Exceeded);
        assert_eq!(smallest_pow2_bound(&big, &one, 100), BoundSearch::Found(100));
        assert_eq!(Pow2(3).to_string(), "2^3");
        assert_eq!("2^7".parse::<Pow2>().unwrap(), Pow2(7));
    }
}
