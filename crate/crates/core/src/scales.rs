//! Block partitions, scale systems and the weight sequences `u_U`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::numeric::{pv_cmp_scaled, PosValue, Verdict3};
use crate::subsets::{SubsetError, SubsetSpec};

/// Largest bit length allowed for a scale index `k_m` held in memory.
const MAX_K_BITS: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScaleError {
    #[error("k_0 must be at least 2")]
    SmallK0,
    #[error("k must at least double: k_{0} violates k_(m+1) >= 2 k_m")]
    NotDoubling(usize),
    #[error("delta_{m} = {value} lies outside [delta_inf, delta_sup]")]
    DeltaOutOfBounds { m: usize, value: String },
    #[error("need 0 < delta_inf <= delta_sup < 1")]
    BadDeltaBounds,
    #[error("scale system defines only {0} entries; more are needed below the depth")]
    Exhausted(usize),
    #[error("k_{0} is too large to materialise")]
    TooLarge(usize),
    #[error(transparent)]
    Subset(#[from] SubsetError),
    #[error("cannot parse scale description: {0}")]
    Parse(String),
}

/// The indices `k_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KSpec {
    /// `k_m = 2^(m + shift)`, `shift >= 1`.
    Pow2Shift(u32),
    /// `k_m = k_{j0}(m)` with `k_0(m) = 2^(m+1)` and `k_(i+1)(m) = 2^(k_i(m))`.
    Tower(u32),
    Explicit(Vec<BigUint>),
}

/// The factors `delta_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeltaSpec {
    Const(BigRational),
    List(Vec<BigRational>),
    /// Certified but possibly irrational factors.
    Values(Vec<PosValue>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleSystem {
    pub k: KSpec,
    pub delta: DeltaSpec,
    pub delta_inf: BigRational,
    pub delta_sup: BigRational,
}

fn rat(p: u64, q: u64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// `k_i(m)` when it fits below `2^64`.
fn tower_small(i: u32, m: u64) -> Option<u64> {
    let mut v = m.checked_add(1)?;
    if v >= 64 {
        return None;
    }
    v = 1u64 << v;
    for _ in 0..i {
        if v >= 64 {
            return None;
        }
        v = 1u64 << v;
    }
    Some(v)
}

/// `log2 k_i(m)` as an exact integer, when it fits in memory.
pub fn tower_log2(i: u32, m: u64) -> Option<BigUint> {
    if i == 0 {
        return Some(BigUint::from(m + 1));
    }
    tower_value(i - 1, m)
}

/// `k_i(m)` as an exact integer, when it fits in memory.
pub fn tower_value(i: u32, m: u64) -> Option<BigUint> {
    let mut v = BigUint::one() << (m + 1);
    for _ in 0..i {
        let e = v.to_u64().filter(|&e| e <= MAX_K_BITS)?;
        v = BigUint::one() << e;
    }
    Some(v)
}

impl ScaleSystem {
    /// `k_m = 2^(m+1)`, constant `delta`.
    pub fn dyadic_const(delta: BigRational) -> Self {
        ScaleSystem {
            k: KSpec::Pow2Shift(1),
            delta: DeltaSpec::Const(delta.clone()),
            delta_inf: delta.clone(),
            delta_sup: delta,
        }
    }

    /// The running example: `k_m = 2^(m+1)`, `delta = 1/2`.
    pub fn standard() -> Self {
        Self::dyadic_const(rat(1, 2))
    }

    /// Check the invariants for the first `m_max + 1` entries.
    pub fn validate(&self, m_max: usize) -> Result<(), ScaleError> {
        let zero = BigRational::zero();
        let one = BigRational::one();
        if !(self.delta_inf > zero && self.delta_inf <= self.delta_sup && self.delta_sup < one) {
            return Err(ScaleError::BadDeltaBounds);
        }
        match &self.k {
            KSpec::Pow2Shift(s) if *s == 0 => return Err(ScaleError::SmallK0),
            KSpec::Explicit(ks) => {
                if ks.first().is_some_and(|k| k < &BigUint::from(2u32)) {
                    return Err(ScaleError::SmallK0);
                }
                for m in 1..ks.len().min(m_max + 1) {
                    if ks[m] < &ks[m - 1] * 2u32 {
                        return Err(ScaleError::NotDoubling(m));
                    }
                }
            }
            _ => {}
        }
        let inf = PosValue::Exact(self.delta_inf.clone());
        let sup = PosValue::Exact(self.delta_sup.clone());
        for m in 0..=m_max {
            let d = match self.delta(m) {
                Ok(d) => d,
                Err(ScaleError::Exhausted(_)) => break,
                Err(e) => return Err(e),
            };
            let lo_ok = pv_cmp_scaled(&inf, &BigRational::one(), &d);
            let hi_ok = pv_cmp_scaled(&d, &BigRational::one(), &sup);
            if lo_ok != Verdict3::CertTrue || hi_ok != Verdict3::CertTrue {
                return Err(ScaleError::DeltaOutOfBounds {
                    m,
                    value: d.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn delta(&self, m: usize) -> Result<PosValue, ScaleError> {
        match &self.delta {
            DeltaSpec::Const(r) => Ok(PosValue::Exact(r.clone())),
            DeltaSpec::List(v) => v
                .get(m)
                .map(|r| PosValue::Exact(r.clone()))
                .ok_or(ScaleError::Exhausted(v.len())),
            DeltaSpec::Values(v) => v.get(m).cloned().ok_or(ScaleError::Exhausted(v.len())),
        }
    }

    /// `delta_m` when it is rational.
    pub fn delta_rational(&self, m: usize) -> Option<BigRational> {
        match self.delta(m).ok()? {
            PosValue::Exact(r) => Some(r),
            _ => None,
        }
    }

    /// Constant `delta` if every factor is the same rational.
    pub fn constant_delta(&self) -> Option<&BigRational> {
        match &self.delta {
            DeltaSpec::Const(r) => Some(r),
            _ => None,
        }
    }

    /// `k_m` if it is below `2^64`.
    pub fn k_small(&self, m: usize) -> Result<Option<u64>, ScaleError> {
        Ok(match &self.k {
            KSpec::Pow2Shift(s) => {
                let e = m as u64 + *s as u64;
                (e < 64).then(|| 1u64 << e)
            }
            KSpec::Tower(j) => tower_small(*j, m as u64),
            KSpec::Explicit(ks) => ks.get(m).ok_or(ScaleError::Exhausted(ks.len()))?.to_u64(),
        })
    }

    /// `k_m` as an exact integer.
    pub fn k(&self, m: usize) -> Result<BigUint, ScaleError> {
        match &self.k {
            KSpec::Pow2Shift(s) => Ok(BigUint::one() << (m as u64 + *s as u64)),
            KSpec::Tower(j) => tower_value(*j, m as u64).ok_or(ScaleError::TooLarge(m)),
            KSpec::Explicit(ks) => ks.get(m).cloned().ok_or(ScaleError::Exhausted(ks.len())),
        }
    }

    /// All `(m, k_m)` with `k_m <= depth`.
    pub fn ks_upto(&self, depth: u64) -> Result<Vec<(usize, u64)>, ScaleError> {
        let mut out = Vec::new();
        for m in 0.. {
            match self.k_small(m) {
                Ok(Some(k)) if k <= depth => out.push((m, k)),
                Ok(_) => break,
                Err(ScaleError::Exhausted(n)) => return Err(ScaleError::Exhausted(n)),
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Pow2Shift(s) => write!(f, "pow2shift:{s}"),
            KSpec::Tower(j) => write!(f, "tower:{j}"),
            KSpec::Explicit(ks) => {
                let parts: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for KSpec {
    type Err = ScaleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScaleError::Parse(s.to_string());
        if s == "pow2" {
            return Ok(KSpec::Pow2Shift(1));
        }
        if let Some(v) = s.strip_prefix("pow2shift:") {
            return v.parse().map(KSpec::Pow2Shift).map_err(|_| bad());
        }
        if let Some(v) = s.strip_prefix("tower:") {
            return v.parse().map(KSpec::Tower).map_err(|_| bad());
        }
        s.split(',')
            .map(|t| BigUint::from_str(t.trim()).map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()
            .map(KSpec::Explicit)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KRepr {
    Named(String),
    List(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DeltaRepr {
    Named(String),
    List(Vec<String>),
    Values(Vec<PosValue>),
}

#[derive(Serialize, Deserialize)]
struct ScaleRepr {
    k: KRepr,
    delta: DeltaRepr,
    delta_inf: String,
    delta_sup: String,
}

impl Serialize for ScaleSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let k = match &self.k {
            KSpec::Explicit(ks) => KRepr::List(ks.iter().map(|k| k.to_string()).collect()),
            other => KRepr::Named(other.to_string()),
        };
        let delta = match &self.delta {
            DeltaSpec::Const(r) => DeltaRepr::Named(format!("const:{r}")),
            DeltaSpec::List(v) => DeltaRepr::List(v.iter().map(|r| r.to_string()).collect()),
            DeltaSpec::Values(v) => DeltaRepr::Values(v.clone()),
        };
        ScaleRepr {
            k,
            delta,
            delta_inf: self.delta_inf.to_string(),
            delta_sup: self.delta_sup.to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScaleSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = ScaleRepr::deserialize(d)?;
        let parse_rat =
            |s: &str| BigRational::from_str(s).map_err(|_| D::Error::custom(format!("bad rational `{s}`")));
        let k = match r.k {
            KRepr::Named(s) => s.parse().map_err(D::Error::custom)?,
            KRepr::List(v) => KSpec::Explicit(
                v.iter()
                    .map(|t| BigUint::from_str(t).map_err(|_| D::Error::custom(format!("bad k `{t}`"))))
                    .collect::<Result<_, _>>()?,
            ),
        };
        let delta = match r.delta {
            DeltaRepr::Named(s) => {
                let v = s
                    .strip_prefix("const:")
                    .ok_or_else(|| D::Error::custom("delta must be `const:<p/q>` or a list"))?;
                DeltaSpec::Const(parse_rat(v)?)
            }
            DeltaRepr::List(v) => DeltaSpec::List(v.iter().map(|t| parse_rat(t)).collect::<Result<_, _>>()?),
            DeltaRepr::Values(v) => DeltaSpec::Values(v),
        };
        Ok(ScaleSystem {
            k,
            delta,
            delta_inf: parse_rat(&r.delta_inf)?,
            delta_sup: parse_rat(&r.delta_sup)?,
        })
    }
}

/// `a_l` for `l = 0..=l_max` and the blocks `I_l = [a_l, a_(l+1))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    a: Vec<BigUint>,
}

/// `a_0..=a_(l_max)` from `a_l = a_(l-1) + 1 + (l-1) a_(l-1)`.
pub fn block_partition(l_max: usize) -> BlockPartition {
    let mut a = vec![BigUint::zero()];
    for l in 1..=l_max {
        let prev = &a[l - 1];
        let next = prev + 1u32 + prev * BigUint::from(l - 1);
        a.push(next);
    }
    BlockPartition { a }
}

impl BlockPartition {
    pub fn l_max(&self) -> usize {
        self.a.len() - 1
    }

    pub fn a(&self, l: usize) -> &BigUint {
        &self.a[l]
    }

    pub fn values(&self) -> &[BigUint] {
        &self.a
    }

    /// `I_l` as a half-open range; needs `l < l_max`.
    pub fn interval(&self, l: usize) -> (BigUint, BigUint) {
        (self.a[l].clone(), self.a[l + 1].clone())
    }

    /// Block index `l` with `m` in `I_l`, extending the table when needed.
    pub fn block_of(&mut self, m: u64) -> usize {
        let m = BigUint::from(m);
        while self.a.last().expect("nonempty") <= &m {
            let l = self.a.len();
            let prev = &self.a[l - 1];
            let next = prev + 1u32 + prev * BigUint::from(l - 1);
            self.a.push(next);
        }
        self.a.partition_point(|x| x <= &m) - 1
    }
}

/// One step of a weight sequence: from `n` on, the value is `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fire {
    pub n: u64,
    pub m: usize,
    pub block: usize,
    pub value: PosValue,
}

/// The sequence `u_U(n)` for `n <= depth`, stored at its change points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightSeq {
    depth: u64,
    fires: Vec<Fire>,
}

impl WeightSeq {
    /// The constant sequence 1.
    pub fn trivial(depth: u64) -> Self {
        WeightSeq {
            depth,
            fires: Vec::new(),
        }
    }

    pub fn depth(&self) -> u64 {
        self.depth
    }

    pub fn fires(&self) -> &[Fire] {
        &self.fires
    }

    pub fn fired_indices(&self) -> Vec<u64> {
        self.fires.iter().map(|f| f.n).collect()
    }

    /// `u(n)` by binary search over the fire points.
    pub fn at(&self, n: u64) -> PosValue {
        assert!(n <= self.depth, "index {n} beyond depth {}", self.depth);
        let idx = self.fires.partition_point(|f| f.n <= n);
        if idx == 0 {
            PosValue::one()
        } else {
            self.fires[idx - 1].value.clone()
        }
    }

    /// Dense values `u(0..=depth)`.
    pub fn values(&self) -> Vec<PosValue> {
        let mut out = Vec::with_capacity(self.depth as usize + 1);
        let mut cur = PosValue::one();
        let mut it = self.fires.iter().peekable();
        for n in 0..=self.depth {
            while let Some(f) = it.peek() {
                if f.n == n {
                    cur = f.value.clone();
                    it.next();
                } else {
                    break;
                }
            }
            out.push(cur.clone());
        }
        out
    }

    /// Rebuild keeping only the fires whose position is in `keep`.
    pub fn rebuild_subsequence(&self, s: &ScaleSystem, keep: &[bool]) -> Result<Self, ScaleError> {
        let mut cur = PosValue::one();
        let mut fires = Vec::new();
        for (f, &k) in self.fires.iter().zip(keep) {
            if k {
                cur = cur.mul(&s.delta(f.m)?);
                fires.push(Fire {
                    value: cur.clone(),
                    ..f.clone()
                });
            }
        }
        Ok(WeightSeq {
            depth: self.depth,
            fires,
        })
    }
}

/// `u_U(n)` for `n <= depth`: multiply by `delta_m` at `n = k_m` whenever `m`
/// lies in a block `I_l` with `l` in `U`.
pub fn weight_seq(
    u: &SubsetSpec,
    s: &ScaleSystem,
    p: &mut BlockPartition,
    depth: u64,
) -> Result<WeightSeq, ScaleError> {
    let mut cur = PosValue::one();
    let mut fires = Vec::new();
    for (m, k) in s.ks_upto(depth)? {
        let l = p.block_of(m as u64);
        if u.member(l as u128)? {
            cur = cur.mul(&s.delta(m)?);
            fires.push(Fire {
                n: k,
                m,
                block: l,
                value: cur.clone(),
            });
        }
    }
    Ok(WeightSeq { depth, fires })
}

/// First failing property of [`check_weight_props`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum WeightFailure {
    /// `u(k_m)` differs from the product of fired factors.
    Product { m: usize },
    /// `u(n) > u(n-1)` or `u(n)` outside `(0, 1]`.
    Monotone { n: u64 },
    /// `u(2n) < delta_inf * u(n)`.
    Doubling { n: u64 },
    /// Comparison could not be certified.
    Undecided { n: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightReport {
    pub pass: bool,
    pub failure: Option<WeightFailure>,
    pub fires: usize,
}

/// Monotonicity and decay properties of a weight sequence against `s.delta_inf`.
pub fn check_weight_props(w: &WeightSeq, s: &ScaleSystem) -> Result<WeightReport, ScaleError> {
    check_weight_props_with(w, s, &s.delta_inf)
}

pub fn check_weight_props_with(
    w: &WeightSeq,
    s: &ScaleSystem,
    delta_inf: &BigRational,
) -> Result<WeightReport, ScaleError> {
    let fail = |f: WeightFailure| {
        Ok(WeightReport {
            pass: false,
            failure: Some(f),
            fires: w.fires.len(),
        })
    };
    // (i) u(k_m) equals the product of the fired factors up to m
    let fired: std::collections::HashSet<usize> = w.fires.iter().map(|f| f.m).collect();
    let mut prod = PosValue::one();
    for (m, k) in s.ks_upto(w.depth)? {
        if fired.contains(&m) {
            prod = prod.mul(&s.delta(m)?);
        }
        let got = w.at(k);
        let same = match (got.exact_value(), prod.exact_value()) {
            (Some(a), Some(b)) => a == b,
            _ => got.overlaps(&prod, crate::numeric::working_prec()),
        };
        if !same {
            return fail(WeightFailure::Product { m });
        }
    }
    // (ii) nonincreasing, inside (0, 1]
    let one = BigRational::one();
    let mut prev = PosValue::one();
    for f in &w.fires {
        if pv_cmp_scaled(&f.value, &one, &prev) != Verdict3::CertTrue {
            return fail(WeightFailure::Monotone { n: f.n });
        }
        prev = f.value.clone();
    }
    // (iii) u(2n) >= delta_inf u(n)
    let inf = PosValue::Exact(delta_inf.clone());
    let values = w.values();
    for n in 0..=w.depth / 2 {
        let lhs = inf.mul(&values[n as usize]);
        match pv_cmp_scaled(&lhs, &one, &values[2 * n as usize]) {
            Verdict3::CertTrue => {}
            Verdict3::CertFalse => return fail(WeightFailure::Doubling { n }),
            Verdict3::Unknown { .. } => return fail(WeightFailure::Undecided { n }),
        }
    }
    Ok(WeightReport {
        pass: true,
        failure: None,
        fires: w.fires.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_values() {
        let p = block_partition(4);
        let a: Vec<u64> = p.values().iter().map(|x| x.to_u64().unwrap()).collect();
        assert_eq!(a, vec![0, 1, 3, 10, 41]);
        assert_eq!(p.interval(2), (BigUint::from(3u32), BigUint::from(10u32)));
    }

    #[test]
    fn block_lookup_extends() {
        let mut p = block_partition(1);
        assert_eq!(p.block_of(0), 0);
        assert_eq!(p.block_of(2), 1);
        assert_eq!(p.block_of(3), 2);
        assert_eq!(p.block_of(40), 3);
        assert_eq!(p.block_of(41), 4);
    }

    #[test]
    fn omega_weights() {
        let s = ScaleSystem::standard();
        let mut p = block_partition(4);
        let w = weight_seq(&SubsetSpec::omega(), &s, &mut p, 16).unwrap();
        assert_eq!(w.at(1), PosValue::one());
        for (n, q) in [(2, 2), (4, 4), (8, 8), (16, 16), (3, 2), (15, 8)] {
            assert_eq!(w.at(n), PosValue::ratio(1, q), "u({n})");
        }
        assert!(check_weight_props(&w, &s).unwrap().pass);
        let r = check_weight_props_with(&w, &s, &rat(9, 10)).unwrap();
        assert_eq!(r.failure, Some(WeightFailure::Doubling { n: 1 }));
    }

    #[test]
    fn empty_and_singleton() {
        let s = ScaleSystem::standard();
        let mut p = block_partition(4);
        let w = weight_seq(&SubsetSpec::empty(), &s, &mut p, 64).unwrap();
        assert!(w.values().iter().all(|v| *v == PosValue::one()));
        assert!(check_weight_props(&w, &s).unwrap().pass);
        let single: SubsetSpec = "periodic:1/0".parse().unwrap();
        let w = weight_seq(&single, &s, &mut p, 64).unwrap();
        assert_eq!(w.at(1), PosValue::one());
        for n in 2..=64 {
            assert_eq!(w.at(n), PosValue::ratio(1, 2));
        }
    }

    #[test]
    fn scale_json_round_trip() {
        let s = ScaleSystem::standard();
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["k"], "pow2shift:1");
        assert_eq!(j["delta"], "const:1/2");
        let back: ScaleSystem = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
        let txt = r#"{"k":["2","5","10"],"delta":["1/2","1/3","2/3"],"delta_inf":"1/3","delta_sup":"2/3"}"#;
        let s: ScaleSystem = serde_json::from_str(txt).unwrap();
        s.validate(2).unwrap();
        assert_eq!(s.k(1).unwrap(), BigUint::from(5u32));
    }

    #[test]
    fn validation_rejects_bad_systems() {
        let mut s = ScaleSystem::standard();
        s.k = KSpec::Explicit(vec![2u32.into(), 3u32.into()]);
        assert_eq!(s.validate(4), Err(ScaleError::NotDoubling(1)));
        s.k = KSpec::Explicit(vec![1u32.into()]);
        assert_eq!(s.validate(4), Err(ScaleError::SmallK0));
        let s = ScaleSystem::dyadic_const(rat(1, 1));
        assert_eq!(s.validate(1), Err(ScaleError::BadDeltaBounds));
    }

    #[test]
    fn towers() {
        assert_eq!(tower_value(1, 2).unwrap(), BigUint::from(256u32));
        assert_eq!(tower_small(1, 1), Some(16));
        assert_eq!(tower_small(2, 1), Some(65536));
        assert_eq!(tower_small(2, 2), None);
        assert_eq!(tower_log2(2, 1).unwrap(), BigUint::from(16u32));
    }
}
