//! Exact and log-domain arithmetic on positive reals.

mod dyadic;
pub mod fixed;
mod pow2;
mod value;

use std::sync::atomic::{AtomicU64, Ordering};

pub use dyadic::{BigDyadic, ParseDyadicError, Round};
pub use pow2::{smallest_pow2_bound, smallest_two_sided, BoundSearch, Pow2};
pub use value::{
    pv_cmp_lt, pv_cmp_scaled, pv_max, pv_min, pv_pow_rat, pv_sum, NonNeg, PosValue, Verdict3,
};

/// Exact rationals whose numerator plus denominator exceed this many bits are
/// demoted to log intervals.
pub const EXACT_BITS_LIMIT: u64 = 1 << 20;

/// First precision tried by escalating comparisons.
pub const CMP_START_PREC: u64 = 64;

static WORKING_PREC: AtomicU64 = AtomicU64::new(256);
static PREC_CAP: AtomicU64 = AtomicU64::new(1 << 14);

/// Precision in bits used by operations that do not take one explicitly.
pub fn working_prec() -> u64 {
    WORKING_PREC.load(Ordering::Relaxed)
}

pub fn set_working_prec(bits: u64) {
    WORKING_PREC.store(bits.max(8), Ordering::Relaxed);
}

/// Upper limit for precision escalation in comparisons.
pub fn prec_cap() -> u64 {
    PREC_CAP.load(Ordering::Relaxed)
}

pub fn set_prec_cap(bits: u64) {
    PREC_CAP.store(bits.max(CMP_START_PREC), Ordering::Relaxed);
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumericError {
    #[error("value must be strictly positive")]
    NonPositive,
    #[error("log interval has lo > hi")]
    InvertedInterval,
    #[error("difference is negative")]
    NegativeDifference,
    #[error("operands could not be separated at the available precision")]
    NotSeparated,
    #[error("magnitude outside the supported range")]
    OutOfRange,
    #[error("parse error: {0}")]
    Parse(String),
}

/// `p/q` strings for rational fields.
pub mod rat_str {
    use std::str::FromStr;

    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        BigRational::from_str(&s).map_err(|_| serde::de::Error::custom(format!("bad rational `{s}`")))
    }
}
