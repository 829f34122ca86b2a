use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::dyadic::{BigDyadic, Round};
use super::fixed;
use super::{prec_cap, working_prec, NumericError, CMP_START_PREC, EXACT_BITS_LIMIT};

/// Extra relative bits kept on log endpoints beyond the working precision.
const LOG_GUARD: u64 = 32;

/// A strictly positive real: an exact rational or an interval on its log2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PosValue {
    Exact(BigRational),
    LogIv { lo: BigDyadic, hi: BigDyadic },
}

/// Outcome of a certified comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict3 {
    CertTrue,
    CertFalse,
    Unknown { precision_exhausted: bool },
}

impl Verdict3 {
    pub fn is_true(self) -> bool {
        self == Verdict3::CertTrue
    }

    pub fn is_false(self) -> bool {
        self == Verdict3::CertFalse
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, Verdict3::Unknown { .. })
    }

    pub fn not(self) -> Verdict3 {
        match self {
            Verdict3::CertTrue => Verdict3::CertFalse,
            Verdict3::CertFalse => Verdict3::CertTrue,
            u => u,
        }
    }
}

fn rat_bits(r: &BigRational) -> u64 {
    r.numer().bits() + r.denom().bits()
}

fn is_pow2(z: &BigInt) -> bool {
    z.is_positive() && z.trailing_zeros() == Some(z.bits() - 1)
}

/// `Some(k)` when `r == 2^k`.
fn rat_pow2_exponent(r: &BigRational) -> Option<BigInt> {
    let (p, q) = (r.numer(), r.denom());
    if p.is_one() && is_pow2(q) {
        Some(-BigInt::from(q.bits() - 1))
    } else if q.is_one() && is_pow2(p) {
        Some(BigInt::from(p.bits() - 1))
    } else {
        None
    }
}

fn rat_pow2(k: &BigInt) -> BigRational {
    let mag = k.magnitude().to_u64().expect("small exponent");
    let v = BigInt::one() << mag;
    if k.is_negative() {
        BigRational::new(BigInt::one(), v)
    } else {
        BigRational::from_integer(v)
    }
}

/// Rough `log2` of a positive rational, within one unit.
fn rat_log2_estimate(r: &BigRational) -> i64 {
    r.numer().bits() as i64 - r.denom().bits() as i64
}

fn dir_round(d: BigDyadic, prec: u64, dir: Round) -> BigDyadic {
    d.round(prec + LOG_GUARD, dir)
}

/// Directed dyadic bound on a rational exponent.
fn rat_to_dyadic(q: &BigRational, prec: u64, dir: Round) -> BigDyadic {
    BigDyadic::from_rational_round(q, prec + LOG_GUARD, dir)
}

impl PosValue {
    pub fn exact(r: BigRational) -> Result<Self, NumericError> {
        if r.is_positive() {
            Ok(PosValue::Exact(r))
        } else {
            Err(NumericError::NonPositive)
        }
    }

    /// `p/q`; panics unless positive.
    pub fn ratio(p: i64, q: i64) -> Self {
        Self::exact(BigRational::new(BigInt::from(p), BigInt::from(q))).expect("positive ratio")
    }

    pub fn from_int(n: BigInt) -> Result<Self, NumericError> {
        Self::exact(BigRational::from_integer(n))
    }

    pub fn one() -> Self {
        PosValue::Exact(BigRational::one())
    }

    /// `2^k`, exact while the rational stays small.
    pub fn pow2(k: BigInt) -> Self {
        if k.magnitude().bits() <= 64 && k.magnitude() <= &num_bigint::BigUint::from(EXACT_BITS_LIMIT) {
            PosValue::Exact(rat_pow2(&k))
        } else {
            Self::log_point(BigDyadic::from_int(k))
        }
    }

    /// The value `2^d`, carried in the log domain.
    pub fn log_point(d: BigDyadic) -> Self {
        PosValue::LogIv { lo: d.clone(), hi: d }
    }

    pub fn from_log_bounds(lo: BigDyadic, hi: BigDyadic) -> Result<Self, NumericError> {
        if lo > hi {
            return Err(NumericError::InvertedInterval);
        }
        Ok(PosValue::LogIv { lo, hi })
    }

    /// Exact value demoted to a log interval when it grows too large.
    fn from_rational_sized(r: BigRational, prec: u64) -> Self {
        if rat_bits(&r) <= EXACT_BITS_LIMIT {
            PosValue::Exact(r)
        } else {
            let (lo, hi) = PosValue::Exact(r).log2_bounds(prec);
            PosValue::LogIv { lo, hi }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, PosValue::Exact(_))
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            PosValue::Exact(r) => Some(r),
            PosValue::LogIv { .. } => None,
        }
    }

    /// The exact value when known: an `Exact`, or a zero-width log interval at
    /// a modest integer.
    pub fn exact_value(&self) -> Option<BigRational> {
        match self {
            PosValue::Exact(r) => Some(r.clone()),
            PosValue::LogIv { lo, hi } => {
                if lo == hi && lo.is_integer() {
                    let k = lo.floor()?;
                    if k.magnitude().to_u64()? <= EXACT_BITS_LIMIT {
                        return Some(rat_pow2(&k));
                    }
                }
                None
            }
        }
    }

    /// Width of the log2 enclosure; zero for exact values.
    pub fn log_width(&self) -> BigDyadic {
        match self {
            PosValue::Exact(_) => BigDyadic::zero(),
            PosValue::LogIv { lo, hi } => hi.sub_round(lo, working_prec() + LOG_GUARD, Round::Up),
        }
    }

    pub fn is_zero_width(&self) -> bool {
        match self {
            PosValue::Exact(_) => true,
            PosValue::LogIv { lo, hi } => lo == hi,
        }
    }

    /// Directed bounds on `log2` of the value.
    pub fn log2_bounds(&self, prec: u64) -> (BigDyadic, BigDyadic) {
        match self {
            PosValue::LogIv { lo, hi } => (lo.clone(), hi.clone()),
            PosValue::Exact(r) => {
                if let Some(k) = rat_pow2_exponent(r) {
                    let d = BigDyadic::from_int(k);
                    return (d.clone(), d);
                }
                let n = prec + 8;
                let (p, q) = (r.numer(), r.denom());
                let lp = fixed::log2_fixed(p, 0, n, Round::Down);
                let hp = fixed::log2_fixed(p, 0, n, Round::Up);
                let lq = fixed::log2_fixed(q, 0, n, Round::Down);
                let hq = fixed::log2_fixed(q, 0, n, Round::Up);
                (
                    lp.sub_round(&hq, n + LOG_GUARD, Round::Down),
                    hp.sub_round(&lq, n + LOG_GUARD, Round::Up),
                )
            }
        }
    }

    /// Convert to a log interval enclosing the value.
    pub fn to_log_iv(&self, prec: u64) -> PosValue {
        let (lo, hi) = self.log2_bounds(prec);
        PosValue::LogIv { lo, hi }
    }

    /// Directed dyadic bounds on the value itself. `None` for magnitudes
    /// beyond about 2^(2^62).
    pub fn value_bounds(&self, prec: u64) -> Option<(BigDyadic, BigDyadic)> {
        match self {
            PosValue::Exact(r) => Some((
                BigDyadic::from_rational_round(r, prec, Round::Down),
                BigDyadic::from_rational_round(r, prec, Round::Up),
            )),
            PosValue::LogIv { lo, hi } => {
                lo.floor()?.to_i64()?;
                hi.ceil()?.to_i64()?;
                Some((
                    fixed::exp2_dyadic(lo, prec, Round::Down),
                    fixed::exp2_dyadic(hi, prec, Round::Up),
                ))
            }
        }
    }

    pub fn recip(&self) -> PosValue {
        match self {
            PosValue::Exact(r) => PosValue::Exact(r.recip()),
            PosValue::LogIv { lo, hi } => PosValue::LogIv {
                lo: hi.neg(),
                hi: lo.neg(),
            },
        }
    }

    /// Product. `Exact` times `Exact` stays exact.
    pub fn mul(&self, other: &PosValue) -> PosValue {
        self.mul_prec(other, working_prec())
    }

    pub fn mul_prec(&self, other: &PosValue, prec: u64) -> PosValue {
        if let (PosValue::Exact(a), PosValue::Exact(b)) = (self, other) {
            return Self::from_rational_sized(a * b, prec);
        }
        let (la, ha) = self.log2_bounds(prec);
        let (lb, hb) = other.log2_bounds(prec);
        PosValue::LogIv {
            lo: la.add_round(&lb, prec + LOG_GUARD, Round::Down),
            hi: ha.add_round(&hb, prec + LOG_GUARD, Round::Up),
        }
    }

    pub fn div(&self, other: &PosValue) -> PosValue {
        self.mul(&other.recip())
    }

    pub fn div_prec(&self, other: &PosValue, prec: u64) -> PosValue {
        self.mul_prec(&other.recip(), prec)
    }

    /// Multiply by `2^k` without leaving the current representation.
    pub fn mul_pow2(&self, k: &BigInt) -> PosValue {
        match self {
            PosValue::Exact(r) if k.magnitude().to_u64().is_some_and(|m| m <= EXACT_BITS_LIMIT) => {
                PosValue::Exact(r * rat_pow2(k))
            }
            _ => {
                let d = BigDyadic::from_int(k.clone());
                let (lo, hi) = self.log2_bounds(working_prec());
                PosValue::LogIv {
                    lo: lo.add_round(&d, working_prec() + LOG_GUARD, Round::Down),
                    hi: hi.add_round(&d, working_prec() + LOG_GUARD, Round::Up),
                }
            }
        }
    }

    /// Sum enclosure. Operands more than `prec` binades apart fall back to the
    /// dominant term widened by `2^-(prec+1)` in the log.
    pub fn add(&self, other: &PosValue, prec: u64) -> PosValue {
        if let (Some(a), Some(b)) = (self.exact_value(), other.exact_value()) {
            let gap = (rat_log2_estimate(&a) - rat_log2_estimate(&b)).unsigned_abs();
            if gap <= prec + 2 {
                return Self::from_rational_sized(a + b, prec);
            }
        }
        let (la, ha) = self.log2_bounds(prec);
        let (lb, hb) = other.log2_bounds(prec);
        PosValue::LogIv {
            lo: log_add(&la, &lb, prec, Round::Down),
            hi: log_add(&ha, &hb, prec, Round::Up),
        }
    }

    /// Difference `self - other`. Inexact operands must be certifiably ordered.
    pub fn sub(&self, other: &PosValue, prec: u64) -> Result<NonNeg, NumericError> {
        if let (Some(a), Some(b)) = (self.exact_value(), other.exact_value()) {
            let gap = (rat_log2_estimate(&a) - rat_log2_estimate(&b)).unsigned_abs();
            if gap <= prec + 2 {
                let d = a - b;
                return match d.cmp(&BigRational::zero()) {
                    Ordering::Less => Err(NumericError::NegativeDifference),
                    Ordering::Equal => Ok(NonNeg::Zero),
                    Ordering::Greater => Ok(NonNeg::Pos(Self::from_rational_sized(d, prec))),
                };
            }
        }
        let (la, ha) = self.log2_bounds(prec);
        let (lb, hb) = other.log2_bounds(prec);
        if ha < lb {
            return Err(NumericError::NegativeDifference);
        }
        if la <= hb {
            return Err(NumericError::NotSeparated);
        }
        let lo = log_sub(&la, &hb, prec, Round::Down).ok_or(NumericError::NotSeparated)?;
        let hi = log_sub(&ha, &lb, prec, Round::Up).ok_or(NumericError::NotSeparated)?;
        Ok(NonNeg::Pos(PosValue::LogIv { lo, hi }))
    }

    /// `self^q` for rational `q`.
    pub fn pow_rat(&self, q: &BigRational, prec: u64) -> PosValue {
        if q.is_zero() {
            return PosValue::one();
        }
        if let PosValue::Exact(r) = self {
            if let Some(k) = rat_pow2_exponent(r) {
                let e = BigRational::from_integer(k) * q;
                return pow2_rational(&e, prec);
            }
            if let Some(v) = exact_rational_power(r, q) {
                return Self::from_rational_sized(v, prec);
            }
        }
        let (lo, hi) = self.log2_bounds(prec + 8);
        let p = prec + LOG_GUARD;
        let (a, b) = if q.is_positive() { (lo, hi) } else { (hi, lo) };
        PosValue::LogIv {
            lo: a.mul_rational_round(q, p, Round::Down),
            hi: b.mul_rational_round(q, p, Round::Up),
        }
    }

    /// `self^c` for a positive real exponent `c`.
    pub fn pow_pos(&self, c: &PosValue, prec: u64) -> Result<PosValue, NumericError> {
        if let PosValue::Exact(q) = c {
            return Ok(self.pow_rat(q, prec));
        }
        let (c1, c2) = c.value_bounds(prec + LOG_GUARD).ok_or(NumericError::OutOfRange)?;
        let (l1, l2) = self.log2_bounds(prec + 8);
        let p = prec + LOG_GUARD;
        let mut lo: Option<BigDyadic> = None;
        let mut hi: Option<BigDyadic> = None;
        for l in [&l1, &l2] {
            for cc in [&c1, &c2] {
                let d = l.mul_round(cc, p, Round::Down);
                let u = l.mul_round(cc, p, Round::Up);
                lo = Some(match lo {
                    Some(x) if x <= d => x,
                    _ => d,
                });
                hi = Some(match hi {
                    Some(x) if x >= u => x,
                    _ => u,
                });
            }
        }
        Ok(PosValue::LogIv {
            lo: lo.expect("nonempty"),
            hi: hi.expect("nonempty"),
        })
    }

    /// `log2` of the value as a positive real; the value must exceed 1.
    pub fn log2_value(&self, prec: u64) -> Result<PosValue, NumericError> {
        if let PosValue::Exact(r) = self {
            if let Some(k) = rat_pow2_exponent(r) {
                return PosValue::from_int(k);
            }
        }
        let (lo, hi) = self.log2_bounds(prec);
        if !lo.is_positive() {
            return Err(NumericError::NonPositive);
        }
        if lo == hi {
            if let Some(r) = lo.to_rational() {
                return PosValue::exact(r);
            }
        }
        let n = prec + 8;
        Ok(PosValue::LogIv {
            lo: fixed::log2_dyadic(&lo, n, Round::Down),
            hi: fixed::log2_dyadic(&hi, n, Round::Up),
        })
    }

    /// A `PosValue` whose log2 is the (positive or negative) real `d`.
    pub fn exp2_of(d: &BigDyadic) -> PosValue {
        if d.is_integer() {
            if let Some(k) = d.floor() {
                return PosValue::pow2(k);
            }
        }
        PosValue::log_point(d.clone())
    }

    /// Whether the two enclosures can describe the same real.
    pub fn overlaps(&self, other: &PosValue, prec: u64) -> bool {
        if let (PosValue::Exact(a), PosValue::Exact(b)) = (self, other) {
            return a == b;
        }
        let (la, ha) = self.log2_bounds(prec);
        let (lb, hb) = other.log2_bounds(prec);
        la <= hb && lb <= ha
    }

    /// Approximate log2 for reporting.
    pub fn log2_approx(&self) -> f64 {
        match self {
            PosValue::Exact(r) => {
                let f = |z: &BigInt| {
                    let b = z.bits();
                    let s = b.saturating_sub(60);
                    (z >> s).to_f64().unwrap_or(1.0).log2() + s as f64
                };
                f(r.numer()) - f(r.denom())
            }
            PosValue::LogIv { lo, hi } => (lo.to_f64_lossy() + hi.to_f64_lossy()) / 2.0,
        }
    }
}

fn exact_rational_power(r: &BigRational, q: &BigRational) -> Option<BigRational> {
    let s = q.numer().to_i64()?;
    let t = q.denom().to_u32()?;
    let budget = rat_bits(r).checked_mul(s.unsigned_abs())?;
    if budget > EXACT_BITS_LIMIT || t > 64 {
        return None;
    }
    let base = if s < 0 { r.recip() } else { r.clone() };
    let powered = num_traits::pow(base, s.unsigned_abs() as usize);
    if t == 1 {
        return Some(powered);
    }
    let root = |z: &BigInt| -> Option<BigInt> {
        let c = z.nth_root(t);
        if num_traits::pow(c.clone(), t as usize) == *z {
            Some(c)
        } else {
            None
        }
    };
    Some(BigRational::new(root(powered.numer())?, root(powered.denom())?))
}

fn pow2_rational(e: &BigRational, prec: u64) -> PosValue {
    if e.is_integer() {
        return PosValue::pow2(e.to_integer());
    }
    let lo = rat_to_dyadic(e, prec, Round::Down);
    let hi = rat_to_dyadic(e, prec, Round::Up);
    PosValue::LogIv { lo, hi }
}

/// One-sided bound on `log2(2^x + 2^y)`.
fn log_add(x: &BigDyadic, y: &BigDyadic, prec: u64, dir: Round) -> BigDyadic {
    let (t, s) = if x >= y { (x, y) } else { (y, x) };
    // smaller d means larger correction, so bound d the other way
    let d = t.sub_round(s, prec + LOG_GUARD, dir.flip());
    let corr = fixed::log2_one_plus(&d, prec, dir);
    dir_round(t.add_round(&corr, prec + LOG_GUARD, dir), prec, dir)
}

/// One-sided bound on `log2(2^x - 2^y)` for `x > y`.
fn log_sub(x: &BigDyadic, y: &BigDyadic, prec: u64, dir: Round) -> Option<BigDyadic> {
    let d = x.sub_round(y, prec + LOG_GUARD, dir);
    if !d.is_positive() {
        return None;
    }
    let corr = fixed::log2_one_minus(&d, prec, dir)?;
    Some(dir_round(x.add_round(&corr, prec + LOG_GUARD, dir), prec, dir))
}

/// Sum of a sequence of positive values at the given precision.
pub fn pv_sum<'a, I: IntoIterator<Item = &'a PosValue>>(items: I, prec: u64) -> Option<PosValue> {
    let mut acc: Option<PosValue> = None;
    for v in items {
        acc = Some(match acc {
            None => v.clone(),
            Some(a) => a.add(v, prec),
        });
    }
    acc
}

/// `a^q`.
pub fn pv_pow_rat(a: &PosValue, q: &BigRational) -> PosValue {
    a.pow_rat(q, working_prec())
}

/// Decide `a <= C * b`, escalating precision up to the configured cap.
pub fn pv_cmp_scaled(a: &PosValue, c: &BigRational, b: &PosValue) -> Verdict3 {
    assert!(c >= &BigRational::one(), "scale constant must be at least 1");
    if let (Some(x), Some(y)) = (a.exact_value(), b.exact_value()) {
        let gap = (rat_log2_estimate(&x) - rat_log2_estimate(&y)).unsigned_abs();
        if gap <= EXACT_BITS_LIMIT {
            return if x <= c * y {
                Verdict3::CertTrue
            } else {
                Verdict3::CertFalse
            };
        }
    }
    let fixed_inputs = !a.is_exact() && !b.is_exact() && rat_pow2_exponent(c).is_some();
    let cap = prec_cap();
    let mut prec = CMP_START_PREC;
    loop {
        let (la, ha) = a.log2_bounds(prec);
        let (lb, hb) = b.log2_bounds(prec);
        let (lc, hc) = PosValue::Exact(c.clone()).log2_bounds(prec);
        let p = prec + LOG_GUARD;
        let rhs_lo = lc.add_round(&lb, p, Round::Down);
        if ha <= rhs_lo {
            return Verdict3::CertTrue;
        }
        let rhs_hi = hc.add_round(&hb, p, Round::Up);
        if la > rhs_hi {
            return Verdict3::CertFalse;
        }
        if fixed_inputs || prec >= cap || never_separates(a, b, (&la, &ha), (&lc, &hc), (&lb, &hb), p) {
            return Verdict3::Unknown {
                precision_exhausted: true,
            };
        }
        prec = (prec * 2).min(cap);
    }
}

/// True when an inexact operand pins the comparison for every precision: the
/// limit enclosures of `log2 a` and `log2 c + log2 b` overlap in a way no
/// refinement of the exact side can undo.
fn never_separates(
    a: &PosValue,
    b: &PosValue,
    (la, ha): (&BigDyadic, &BigDyadic),
    (lc, hc): (&BigDyadic, &BigDyadic),
    (lb, hb): (&BigDyadic, &BigDyadic),
    p: u64,
) -> bool {
    let fixed = |v: &PosValue| match v {
        PosValue::LogIv { lo, hi } => Some((lo.clone(), hi.clone())),
        PosValue::Exact(_) => None,
    };
    if a.is_exact() && b.is_exact() {
        return false;
    }
    // lower bound on the top of a's limit, upper bound on its bottom
    let (a_top, a_bot) = match fixed(a) {
        Some((lo, hi)) => (hi, lo),
        None => (la.clone(), ha.clone()),
    };
    // upper bound on the bottom of the right side's limit, lower bound on its top
    let (r_bot, r_top) = match fixed(b) {
        Some((lo, hi)) => (
            lo.add_round(hc, p, Round::Up),
            hi.add_round(lc, p, Round::Down),
        ),
        None => (hc.add_round(hb, p, Round::Up), lc.add_round(lb, p, Round::Down)),
    };
    a_top > r_bot && a_bot <= r_top
}

/// Decide `a < b`.
pub fn pv_cmp_lt(a: &PosValue, b: &PosValue) -> Verdict3 {
    if let (Some(x), Some(y)) = (a.exact_value(), b.exact_value()) {
        return if x < y {
            Verdict3::CertTrue
        } else {
            Verdict3::CertFalse
        };
    }
    pv_cmp_scaled(b, &BigRational::one(), a).not()
}

/// Enclosure of `max(a, b)`.
pub fn pv_max(a: &PosValue, b: &PosValue, prec: u64) -> PosValue {
    extremum(a, b, prec, true)
}

/// Enclosure of `min(a, b)`.
pub fn pv_min(a: &PosValue, b: &PosValue, prec: u64) -> PosValue {
    extremum(a, b, prec, false)
}

fn extremum(a: &PosValue, b: &PosValue, prec: u64, want_max: bool) -> PosValue {
    if let (Some(x), Some(y)) = (a.exact_value(), b.exact_value()) {
        let pick_a = if want_max { x >= y } else { x <= y };
        return if pick_a { a.clone() } else { b.clone() };
    }
    let (la, ha) = a.log2_bounds(prec);
    let (lb, hb) = b.log2_bounds(prec);
    if want_max {
        if la >= hb {
            return a.clone();
        }
        if lb >= ha {
            return b.clone();
        }
        PosValue::LogIv {
            lo: la.max(lb),
            hi: ha.max(hb),
        }
    } else {
        if ha <= lb {
            return a.clone();
        }
        if hb <= la {
            return b.clone();
        }
        PosValue::LogIv {
            lo: la.min(lb),
            hi: ha.min(hb),
        }
    }
}

impl fmt::Display for PosValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PosValue::Exact(r) => write!(f, "{r}"),
            PosValue::LogIv { lo, hi } if lo == hi => write!(f, "2^({})", lo.approx_decimal()),
            PosValue::LogIv { lo, hi } => {
                write!(f, "2^[{}, {}]", lo.approx_decimal(), hi.approx_decimal())
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ValueRepr {
    Exact(String),
    Log2 { lo: String, hi: String },
}

impl Serialize for PosValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            PosValue::Exact(r) => ValueRepr::Exact(r.to_string()),
            PosValue::LogIv { lo, hi } => ValueRepr::Log2 {
                lo: lo.to_string(),
                hi: hi.to_string(),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PosValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match NonNeg::deserialize(d)? {
            NonNeg::Pos(v) => Ok(v),
            NonNeg::Zero => Err(D::Error::custom("expected a positive value, found 0")),
        }
    }
}

impl FromStr for PosValue {
    type Err = NumericError;

    /// Parses `p/q`, an integer, or `2^<dyadic>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(e) = t.strip_prefix("2^") {
            let e = e.trim_start_matches('(').trim_end_matches(')');
            if let Ok(r) = BigRational::from_str(e) {
                return Ok(pow2_rational(&r, working_prec()));
            }
            let d: BigDyadic = e.parse().map_err(|_| NumericError::Parse(s.to_string()))?;
            return Ok(PosValue::exp2_of(&d));
        }
        let r = BigRational::from_str(t).map_err(|_| NumericError::Parse(s.to_string()))?;
        PosValue::exact(r)
    }
}

/// A non-negative value: zero or a [`PosValue`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NonNeg {
    Zero,
    Pos(PosValue),
}

impl NonNeg {
    pub fn is_zero(&self) -> bool {
        matches!(self, NonNeg::Zero)
    }

    pub fn pos(&self) -> Option<&PosValue> {
        match self {
            NonNeg::Zero => None,
            NonNeg::Pos(v) => Some(v),
        }
    }

    pub fn add(&self, other: &NonNeg, prec: u64) -> NonNeg {
        match (self, other) {
            (NonNeg::Zero, x) | (x, NonNeg::Zero) => x.clone(),
            (NonNeg::Pos(a), NonNeg::Pos(b)) => NonNeg::Pos(a.add(b, prec)),
        }
    }

    pub fn mul(&self, other: &PosValue) -> NonNeg {
        match self {
            NonNeg::Zero => NonNeg::Zero,
            NonNeg::Pos(a) => NonNeg::Pos(a.mul(other)),
        }
    }

    pub fn pow_rat(&self, q: &BigRational, prec: u64) -> NonNeg {
        match self {
            NonNeg::Zero => NonNeg::Zero,
            NonNeg::Pos(a) => NonNeg::Pos(a.pow_rat(q, prec)),
        }
    }

    pub fn log2_approx(&self) -> f64 {
        match self {
            NonNeg::Zero => f64::NEG_INFINITY,
            NonNeg::Pos(v) => v.log2_approx(),
        }
    }
}

impl From<PosValue> for NonNeg {
    fn from(v: PosValue) -> Self {
        NonNeg::Pos(v)
    }
}

impl fmt::Display for NonNeg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonNeg::Zero => write!(f, "0"),
            NonNeg::Pos(v) => v.fmt(f),
        }
    }
}

impl Serialize for NonNeg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NonNeg::Zero => ValueRepr::Exact("0".into()).serialize(s),
            NonNeg::Pos(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for NonNeg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match ValueRepr::deserialize(d)? {
            ValueRepr::Exact(s) => {
                let r = BigRational::from_str(&s).map_err(D::Error::custom)?;
                match r.cmp(&BigRational::zero()) {
                    Ordering::Equal => Ok(NonNeg::Zero),
                    Ordering::Greater => Ok(NonNeg::Pos(PosValue::Exact(r))),
                    Ordering::Less => Err(D::Error::custom("negative value")),
                }
            }
            ValueRepr::Log2 { lo, hi } => {
                let lo: BigDyadic = lo.parse().map_err(D::Error::custom)?;
                let hi: BigDyadic = hi.parse().map_err(D::Error::custom)?;
                PosValue::from_log_bounds(lo, hi)
                    .map(NonNeg::Pos)
                    .map_err(D::Error::custom)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn dy(m: i64, e: i64) -> BigDyadic {
        BigDyadic::new(BigInt::from(m), BigInt::from(e))
    }

    #[test]
    fn exact_inverse_pair() {
        let v = PosValue::ratio(3, 4).mul(&PosValue::ratio(4, 3));
        assert_eq!(v, PosValue::one());
    }

    #[test]
    fn log_points_multiply_in_log_domain() {
        let a = PosValue::log_point(BigDyadic::from_i64(-2));
        let b = PosValue::log_point(BigDyadic::from_i64(-3));
        assert_eq!(a.mul(&b), PosValue::log_point(BigDyadic::from_i64(-5)));
    }

    #[test]
    fn repeated_halving_stays_exact() {
        let half = PosValue::ratio(1, 2);
        let mut acc = PosValue::one();
        for _ in 0..65536 {
            acc = acc.mul(&half);
        }
        let (lo, hi) = acc.log2_bounds(64);
        assert_eq!(lo, BigDyadic::from_i64(-65536));
        assert_eq!(lo, hi);
        let iv = acc.to_log_iv(64);
        assert!(iv.is_zero_width());
    }

    #[test]
    fn exact_addition() {
        let v = PosValue::ratio(1, 3).add(&PosValue::ratio(1, 6), 64);
        assert_eq!(v, PosValue::ratio(1, 2));
    }

    #[test]
    fn dominated_addition() {
        let tiny = PosValue::pow2(BigInt::from(-1_000_000));
        let v = PosValue::one().add(&tiny, 64);
        match v {
            PosValue::LogIv { lo, hi } => {
                assert_eq!(lo, BigDyadic::zero());
                assert!(hi.is_positive() && hi <= BigDyadic::pow2(BigInt::from(-64)));
            }
            other => panic!("expected LogIv, got {other}"),
        }
    }

    #[test]
    fn kappa_reconstruction_sum() {
        // kappa(1)^2 = 1, kappa(1/2^i)^2 = 2^-(i+1): sum_i kappa_i^2 4^(i-n) = 2^-n
        let n = 10i64;
        let mut acc = PosValue::pow2(BigInt::from(-2 * n));
        for i in 1..=n {
            let t = PosValue::pow2(BigInt::from(-(i + 1)))
                .mul(&PosValue::pow2(BigInt::from(2 * (i - n))));
            acc = acc.add(&t, 64);
        }
        assert_eq!(acc, PosValue::Exact(rat(1, 1 << 10)));
    }

    #[test]
    fn sqrt_powers() {
        assert_eq!(PosValue::ratio(1, 4).pow_rat(&rat(1, 2), 64), PosValue::ratio(1, 2));
        assert_eq!(
            PosValue::ratio(2, 1).pow_rat(&rat(1, 2), 64),
            PosValue::log_point(dy(1, -1))
        );
        let v = PosValue::ratio(3, 1).pow_rat(&rat(1, 2), 64);
        let w = v.log_width();
        assert!(w <= BigDyadic::pow2(BigInt::from(-62)), "width {w}");
        let (lo, hi) = v.log2_bounds(64);
        let t = 3f64.log2() / 2.0;
        assert!(lo.to_f64_lossy() <= t + 1e-15 && hi.to_f64_lossy() >= t - 1e-15);
    }

    #[test]
    fn scaled_comparisons() {
        assert_eq!(
            pv_cmp_scaled(&PosValue::one(), &rat(2, 1), &PosValue::one()),
            Verdict3::CertTrue
        );
        assert_eq!(
            pv_cmp_scaled(&PosValue::ratio(3, 1), &rat(2, 1), &PosValue::one()),
            Verdict3::CertFalse
        );
        let a = PosValue::from_log_bounds(dy(-1, -3), dy(1, -3)).unwrap();
        let b = PosValue::from_log_bounds(dy(-1, -4), dy(1, -4)).unwrap();
        assert!(pv_cmp_scaled(&a, &rat(1, 1), &b).is_unknown());
    }

    #[test]
    fn subtraction() {
        let d = PosValue::ratio(1, 2).sub(&PosValue::ratio(1, 3), 64).unwrap();
        assert_eq!(d, NonNeg::Pos(PosValue::ratio(1, 6)));
        assert_eq!(PosValue::one().sub(&PosValue::one(), 64).unwrap(), NonNeg::Zero);
        assert_eq!(
            PosValue::ratio(1, 3).sub(&PosValue::ratio(1, 2), 64),
            Err(NumericError::NegativeDifference)
        );
        let a = PosValue::ratio(3, 1).pow_rat(&rat(1, 2), 64);
        let d = a.sub(&PosValue::one(), 64).unwrap();
        let t = (3f64.sqrt() - 1.0).log2();
        assert!((d.pos().unwrap().log2_approx() - t).abs() < 1e-12);
    }

    #[test]
    fn log2_value_of_tower() {
        let v = PosValue::pow2(BigInt::from(65536));
        assert_eq!(v.log2_value(64).unwrap(), PosValue::ratio(65536, 1));
        let w = PosValue::log_point(BigDyadic::pow2(BigInt::from(65536)));
        assert_eq!(
            w.log2_value(64).unwrap(),
            PosValue::Exact(BigRational::from_integer(BigInt::one() << 65536u32))
        );
    }

    #[test]
    fn serde_round_trip() {
        let vals = [
            PosValue::ratio(7, 3),
            PosValue::from_log_bounds(dy(-5, -3), dy(3, 1)).unwrap(),
        ];
        for v in vals {
            let s = serde_json::to_string(&v).unwrap();
            let back: PosValue = serde_json::from_str(&s).unwrap();
            assert_eq!(back, v);
        }
        assert_eq!(serde_json::to_string(&PosValue::ratio(1, 2)).unwrap(), r#"{"exact":"1/2"}"#);
        let z: NonNeg = serde_json::from_str(r#"{"exact":"0"}"#).unwrap();
        assert!(z.is_zero());
        assert!(serde_json::from_str::<PosValue>(r#"{"exact":"0"}"#).is_err());
        assert!(serde_json::from_str::<PosValue>(r#"{"log2":{"lo":"1","hi":"0"}}"#).is_err());
    }

    #[test]
    fn pow_with_real_exponent() {
        // 4^(log2 3) = 9
        let c = PosValue::ratio(3, 1).log2_value(128).unwrap();
        let v = PosValue::ratio(4, 1).pow_pos(&c, 128).unwrap();
        assert!(v.overlaps(&PosValue::ratio(9, 1), 128));
        assert!(pv_cmp_scaled(&v, &rat(1, 1), &PosValue::ratio(10, 1)).is_true());
    }
}
