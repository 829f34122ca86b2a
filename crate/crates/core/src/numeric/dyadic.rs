use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Largest alignment shift (in bits) an exact addition is allowed to perform.
const MAX_EXACT_SHIFT: u64 = 1 << 26;

/// Rounding direction for directed operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Round {
    Down,
    Up,
}

impl Round {
    pub fn flip(self) -> Round {
        match self {
            Round::Down => Round::Up,
            Round::Up => Round::Down,
        }
    }
}

/// `mantissa * 2^exponent` with both parts arbitrary precision.
///
/// Canonical form: the mantissa is odd, or the value is zero with exponent zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BigDyadic {
    mantissa: BigInt,
    exponent: BigInt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed dyadic literal `{0}` (expected `m*2^e` or an integer)")]
pub struct ParseDyadicError(pub String);

fn shr_round(value: &BigInt, shift: u64, dir: Round) -> BigInt {
    if shift == 0 {
        return value.clone();
    }
    match dir {
        // BigInt >> rounds toward negative infinity.
        Round::Down => value >> shift,
        Round::Up => -((-value) >> shift),
    }
}

impl BigDyadic {
    pub fn new(mantissa: BigInt, exponent: BigInt) -> Self {
        if mantissa.is_zero() {
            return Self::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        if tz == 0 {
            BigDyadic { mantissa, exponent }
        } else {
            BigDyadic {
                mantissa: mantissa >> tz,
                exponent: exponent + BigInt::from(tz),
            }
        }
    }

    pub fn zero() -> Self {
        BigDyadic {
            mantissa: BigInt::zero(),
            exponent: BigInt::zero(),
        }
    }

    pub fn one() -> Self {
        Self::from_int(BigInt::one())
    }

    pub fn from_int(value: BigInt) -> Self {
        Self::new(value, BigInt::zero())
    }

    pub fn from_i64(value: i64) -> Self {
        Self::from_int(BigInt::from(value))
    }

    /// `2^exponent`.
    pub fn pow2(exponent: BigInt) -> Self {
        BigDyadic {
            mantissa: BigInt::one(),
            exponent,
        }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> &BigInt {
        &self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.mantissa.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.is_zero() || !self.exponent.is_negative()
    }

    /// Position just above the leading bit: `|x|` lies in `[2^(top-1), 2^top)`.
    fn top(&self) -> BigInt {
        &self.exponent + BigInt::from(self.mantissa.bits())
    }

    pub fn neg(&self) -> Self {
        BigDyadic {
            mantissa: -&self.mantissa,
            exponent: self.exponent.clone(),
        }
    }

    pub fn abs(&self) -> Self {
        BigDyadic {
            mantissa: self.mantissa.abs(),
            exponent: self.exponent.clone(),
        }
    }

    fn try_add_exact(&self, other: &Self) -> Option<Self> {
        if self.is_zero() {
            return Some(other.clone());
        }
        if other.is_zero() {
            return Some(self.clone());
        }
        let (lo, hi) = if self.exponent <= other.exponent {
            (self, other)
        } else {
            (other, self)
        };
        let gap = (&hi.exponent - &lo.exponent).to_u64()?;
        if gap > MAX_EXACT_SHIFT {
            return None;
        }
        let mantissa = &lo.mantissa + (&hi.mantissa << gap);
        Some(Self::new(mantissa, lo.exponent.clone()))
    }

    /// Exact sum. Panics when the operands are so far apart that the aligned
    /// mantissa would exceed 2^26 bits; use [`BigDyadic::add_round`] there.
    pub fn add(&self, other: &Self) -> Self {
        self.try_add_exact(other)
            .expect("exact dyadic addition across an astronomically large exponent gap")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(
            &self.mantissa * &other.mantissa,
            &self.exponent + &other.exponent,
        )
    }

    pub fn mul_int(&self, k: &BigInt) -> Self {
        Self::new(&self.mantissa * k, self.exponent.clone())
    }

    /// Multiply by `2^k`.
    pub fn shl(&self, k: &BigInt) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        BigDyadic {
            mantissa: self.mantissa.clone(),
            exponent: &self.exponent + k,
        }
    }

    /// Round to at most `prec` significant bits in the given direction.
    pub fn round(&self, prec: u64, dir: Round) -> Self {
        let bits = self.mantissa.bits();
        if bits <= prec {
            return self.clone();
        }
        let shift = bits - prec;
        let m = shr_round(&self.mantissa, shift, dir);
        Self::new(m, &self.exponent + BigInt::from(shift))
    }

    /// One unit in the last place at `prec` significant bits.
    fn ulp(&self, prec: u64) -> Self {
        let top = self.top();
        Self::pow2(top - BigInt::from(prec))
    }

    /// Sum rounded to `prec` significant bits in direction `dir`. Safe for
    /// operands of wildly different magnitude.
    pub fn add_round(&self, other: &Self, prec: u64, dir: Round) -> Self {
        if self.is_zero() {
            return other.round(prec, dir);
        }
        if other.is_zero() {
            return self.round(prec, dir);
        }
        let t1 = self.top();
        let t2 = other.top();
        let margin = BigInt::from(prec + 4);
        let (big, small, far) = if t1 >= t2 {
            (self, other, &t1 - &t2 > margin)
        } else {
            (other, self, &t2 - &t1 > margin)
        };
        if far {
            // |small| < ulp(big)/16, so the sum lies strictly between big and its
            // neighbour in the direction of small's sign.
            let base = big.round(prec, dir);
            let toward_up = small.is_positive();
            return match (dir, toward_up) {
                (Round::Down, true) | (Round::Up, false) => base,
                (Round::Down, false) => base.sub(&big.ulp(prec)),
                (Round::Up, true) => base.add(&big.ulp(prec)),
            };
        }
        match self.try_add_exact(other) {
            Some(sum) => sum.round(prec, dir),
            None => unreachable!("close operands always align"),
        }
    }

    pub fn sub_round(&self, other: &Self, prec: u64, dir: Round) -> Self {
        self.add_round(&other.neg(), prec, dir)
    }

    pub fn mul_round(&self, other: &Self, prec: u64, dir: Round) -> Self {
        self.mul(other).round(prec, dir)
    }

    /// `self / t` for a positive integer `t`, rounded to about `prec` bits.
    pub fn div_int_round(&self, t: &BigInt, prec: u64, dir: Round) -> Self {
        assert!(t.is_positive(), "divisor must be positive");
        if self.is_zero() {
            return Self::zero();
        }
        let extra = prec + t.bits() + 2;
        let num = &self.mantissa << extra;
        let (q, r) = num.div_mod_floor(t);
        let q = if dir == Round::Up && !r.is_zero() {
            q + 1
        } else {
            q
        };
        Self::new(q, &self.exponent - BigInt::from(extra))
    }

    /// `self * q` rounded in direction `dir`.
    pub fn mul_rational_round(&self, q: &BigRational, prec: u64, dir: Round) -> Self {
        let scaled = self.mul_int(q.numer());
        let den = q.denom();
        if den.is_one() {
            return scaled;
        }
        if den.is_positive() {
            scaled.div_int_round(den, prec, dir)
        } else {
            scaled.neg().div_int_round(&-den, prec, dir)
        }
    }

    /// Largest integer not above the value. `None` when the result would need
    /// more than 2^26 bits.
    pub fn floor(&self) -> Option<BigInt> {
        self.int_round(Round::Down)
    }

    pub fn ceil(&self) -> Option<BigInt> {
        self.int_round(Round::Up)
    }

    fn int_round(&self, dir: Round) -> Option<BigInt> {
        if self.exponent.is_negative() {
            let s = (-&self.exponent).to_u64()?;
            if s > self.mantissa.bits() + 1 {
                // |value| < 1/2
                return Some(match (dir, self.mantissa.sign()) {
                    (_, Sign::NoSign) => BigInt::zero(),
                    (Round::Down, Sign::Minus) => -BigInt::one(),
                    (Round::Up, Sign::Plus) => BigInt::one(),
                    _ => BigInt::zero(),
                });
            }
            Some(shr_round(&self.mantissa, s, dir))
        } else {
            let s = self.exponent.to_u64()?;
            if s > MAX_EXACT_SHIFT {
                return None;
            }
            Some(&self.mantissa << s)
        }
    }

    pub fn to_rational(&self) -> Option<BigRational> {
        let e = self.exponent.to_i64()?;
        if e.unsigned_abs() > MAX_EXACT_SHIFT {
            return None;
        }
        if e >= 0 {
            Some(BigRational::from_integer(&self.mantissa << e as u64))
        } else {
            Some(BigRational::new(
                self.mantissa.clone(),
                BigInt::one() << (-e) as u64,
            ))
        }
    }

    /// Directed dyadic approximation of a rational with at least `prec` bits.
    pub fn from_rational_round(r: &BigRational, prec: u64, dir: Round) -> Self {
        if r.is_zero() {
            return Self::zero();
        }
        let p = r.numer();
        let q = r.denom();
        if q.is_one() {
            return Self::from_int(p.clone());
        }
        if q.bits() > 0 && (q & (q - BigInt::one())).is_zero() {
            // power-of-two denominator
            let k = q.bits() - 1;
            return Self::new(p.clone(), -BigInt::from(k));
        }
        let s = prec as i64 + 2 - (p.bits() as i64 - q.bits() as i64);
        let (num, den) = if s >= 0 {
            (p << s as u64, q.clone())
        } else {
            (p.clone(), q << (-s) as u64)
        };
        let (quot, rem) = num.div_mod_floor(&den);
        let m = if dir == Round::Up && !rem.is_zero() {
            quot + 1
        } else {
            quot
        };
        Self::new(m, BigInt::from(-s))
    }

    /// Lossy conversion for display and plotting. Saturates to +-inf.
    pub fn to_f64_lossy(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mantissa.bits();
        let (m, extra) = if bits > 60 {
            (&self.mantissa >> (bits - 60), bits - 60)
        } else {
            (self.mantissa.clone(), 0)
        };
        let mf = m.to_f64().unwrap_or(0.0);
        let e = &self.exponent + BigInt::from(extra);
        match e.to_i32() {
            Some(e) if (-2000..=2000).contains(&e) => mf * 2f64.powi(e),
            _ => {
                if e.is_positive() {
                    mf.signum() * f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Human-readable decimal approximation that never overflows.
    pub fn approx_decimal(&self) -> String {
        let f = self.to_f64_lossy();
        if f.is_finite() && (f == 0.0) == self.is_zero() {
            return format!("{f}");
        }
        // value = m * 2^e; log10|value| = log10|m| + e*log10(2)
        let bits = self.mantissa.bits();
        let shift = bits.saturating_sub(60);
        let m = (&self.mantissa >> shift).to_f64().unwrap_or(1.0);
        let e = (&self.exponent + BigInt::from(shift)).to_f64().unwrap_or(f64::MAX);
        let log10 = m.abs().log10() + e * std::f64::consts::LOG10_2;
        let exp10 = log10.floor();
        let lead = 10f64.powf(log10 - exp10);
        let sign = if self.is_negative() { "-" } else { "" };
        format!("{sign}{lead:.6}e{exp10:.0}")
    }
}

impl PartialOrd for BigDyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BigDyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let s1 = self.mantissa.sign();
        let s2 = other.mantissa.sign();
        let rank = |s: Sign| match s {
            Sign::Minus => 0,
            Sign::NoSign => 1,
            Sign::Plus => 2,
        };
        if s1 != s2 {
            return rank(s1).cmp(&rank(s2));
        }
        if s1 == Sign::NoSign {
            return Ordering::Equal;
        }
        let mag = match self.top().cmp(&other.top()) {
            Ordering::Equal => {
                // same leading position: exponent gap bounded by mantissa widths
                let diff = self.sub(other);
                let d = diff.mantissa.sign();
                // compare magnitudes: sign of |a|-|b| equals sign(a-b) * sign(a)
                let ord = match d {
                    Sign::Minus => Ordering::Less,
                    Sign::NoSign => Ordering::Equal,
                    Sign::Plus => Ordering::Greater,
                };
                return ord;
            }
            o => o,
        };
        if s1 == Sign::Plus {
            mag
        } else {
            mag.reverse()
        }
    }
}

impl fmt::Display for BigDyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^{}", self.mantissa, self.exponent)
    }
}

impl FromStr for BigDyadic {
    type Err = ParseDyadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDyadicError(s.to_string());
        let t = s.trim();
        match t.split_once("*2^") {
            Some((m, e)) => {
                let m = BigInt::from_str(m.trim()).map_err(|_| err())?;
                let e = BigInt::from_str(e.trim()).map_err(|_| err())?;
                Ok(Self::new(m, e))
            }
            None => {
                let m = BigInt::from_str(t).map_err(|_| err())?;
                Ok(Self::from_int(m))
            }
        }
    }
}

impl serde::Serialize for BigDyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for BigDyadic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
