//! Functions on `[0, 1]` sampled at the dyadic grid `x = 1/2^n`.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::numeric::{
    pv_cmp_scaled, pv_max, pv_min, smallest_pow2_bound, smallest_two_sided, working_prec,
    BoundSearch, NonNeg, PosValue, Pow2, Verdict3,
};
use crate::scales::WeightSeq;

/// Smallest grid depth a [`DyadicFunction`] may have.
pub const MIN_DEPTH: u64 = 8;

/// Default exponent cap in smallest-constant searches.
pub const DEFAULT_CAP: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    Affine,
    MonotoneJoin,
}

/// Hypotheses named in failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    EssentiallyIncreasing,
    StepRatio,
    KSandwich,
    SquareScale,
    PositiveAtHalf,
    StartsAtOne,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("plain enum");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DyadicError {
    #[error("grid depth {0} is below the minimum {MIN_DEPTH}")]
    TooShallow(u64),
    #[error("sample at n = {0} is zero but a later sample is positive")]
    ZeroValue(u64),
    #[error("exactly one function vanishes at n = {0}")]
    MixedZero(u64),
    #[error("no constant up to 2^{cap} works: f(1/2^{n}) > 2^{cap} f(1/2^{m})")]
    Unbounded { n: u64, m: u64, cap: u32 },
    #[error("ratio leaves every constant up to 2^{cap}; escape indices {escape:?}")]
    Diverges { escape: Vec<u64>, cap: u32 },
    #[error("comparison at n = {0} could not be certified")]
    Undecided(u64),
    #[error("hypothesis {which} fails at n = {at}")]
    HypothesisFailed { which: Hypothesis, at: u64 },
    #[error("range [{0}, {1}] is not inside the grid")]
    BadRange(u64, u64),
    #[error("unknown function `{0}`")]
    UnknownBuiltin(String),
}

/// Samples `f(1/2^n)` for `n = 0..=depth`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicFunction {
    depth: u64,
    samples: Vec<NonNeg>,
    interp: Interp,
}

/// Two-sided equivalence constant on a grid range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivCert {
    #[serde(rename = "C")]
    pub c: Pow2,
    pub range: (u64, u64),
    pub direction: String,
}

impl EquivCert {
    pub fn two_sided(c: Pow2, range: (u64, u64)) -> Self {
        EquivCert {
            c,
            range,
            direction: "two_sided".into(),
        }
    }
}

/// Output of [`ess_incr_witness`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssIncr {
    #[serde(rename = "C")]
    pub c: Pow2,
    /// Grid values of `g(x) = sup{f(y) : y <= x}`.
    pub majorant: Vec<NonNeg>,
}

impl DyadicFunction {
    pub fn new(samples: Vec<NonNeg>, interp: Interp) -> Result<Self, DyadicError> {
        let depth = samples.len().saturating_sub(1) as u64;
        if samples.is_empty() || depth < MIN_DEPTH {
            return Err(DyadicError::TooShallow(depth));
        }
        Ok(DyadicFunction {
            depth,
            samples,
            interp,
        })
    }

    pub fn from_fn(
        depth: u64,
        interp: Interp,
        f: impl Fn(u64) -> NonNeg,
    ) -> Result<Self, DyadicError> {
        Self::new((0..=depth).map(f).collect(), interp)
    }

    pub fn from_positive(values: Vec<PosValue>, interp: Interp) -> Result<Self, DyadicError> {
        Self::new(values.into_iter().map(NonNeg::Pos).collect(), interp)
    }

    /// `u_U(1/2^n) = u(n)`.
    pub fn from_weight(w: &WeightSeq) -> Result<Self, DyadicError> {
        Self::from_positive(w.values(), Interp::MonotoneJoin)
    }

    pub fn constant(depth: u64, v: PosValue) -> Result<Self, DyadicError> {
        Self::from_fn(depth, Interp::Affine, |_| NonNeg::Pos(v.clone()))
    }

    /// `x^alpha` on the grid: `2^(-n alpha)`.
    pub fn id_pow(depth: u64, alpha: &BigRational) -> Result<Self, DyadicError> {
        let half = PosValue::ratio(1, 2);
        Self::from_fn(depth, Interp::Affine, |n| {
            NonNeg::Pos(half.pow_rat(&(alpha * BigInt::from(n)), working_prec()))
        })
    }

    /// `1/t_0(x) = 1/(1 - log2 x)`, i.e. `1/(1+n)` on the grid.
    pub fn inv_t0(depth: u64) -> Result<Self, DyadicError> {
        Self::from_fn(depth, Interp::Affine, |n| {
            NonNeg::Pos(PosValue::Exact(BigRational::new(
                BigInt::one(),
                BigInt::from(n + 1),
            )))
        })
    }

    /// Built-ins: `const:<q>`, `idpow:<alpha>`, `inv_t:0`.
    pub fn builtin(name: &str, depth: u64) -> Result<Self, DyadicError> {
        let unknown = || DyadicError::UnknownBuiltin(name.to_string());
        let (kind, arg) = name.split_once(':').ok_or_else(unknown)?;
        let q = BigRational::from_str(arg).map_err(|_| unknown())?;
        match kind {
            "const" if q.is_positive() => Self::constant(depth, PosValue::Exact(q)),
            "idpow" if q.is_positive() => Self::id_pow(depth, &q),
            "inv_t" if q.is_zero() => Self::inv_t0(depth),
            _ => Err(unknown()),
        }
    }

    pub fn depth(&self) -> u64 {
        self.depth
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn samples(&self) -> &[NonNeg] {
        &self.samples
    }

    pub fn at(&self, n: u64) -> &NonNeg {
        &self.samples[n as usize]
    }

    /// Positive sample; panics on zero.
    pub fn pos(&self, n: u64) -> &PosValue {
        self.samples[n as usize]
            .pos()
            .unwrap_or_else(|| panic!("sample at n = {n} is zero"))
    }

    pub fn truncate(&self, depth: u64) -> Result<Self, DyadicError> {
        Self::new(self.samples[..=depth as usize].to_vec(), self.interp)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &DyadicFunction) -> Result<Self, DyadicError> {
        let depth = self.depth.min(other.depth);
        Self::from_fn(depth, self.interp, |n| match other.at(n) {
            NonNeg::Zero => NonNeg::Zero,
            NonNeg::Pos(b) => self.at(n).mul(b),
        })
    }

    /// Pointwise map over positive samples.
    pub fn map(&self, f: impl Fn(u64, &PosValue) -> PosValue) -> Result<Self, DyadicError> {
        Self::from_fn(self.depth, self.interp, |n| match self.at(n) {
            NonNeg::Zero => NonNeg::Zero,
            NonNeg::Pos(v) => NonNeg::Pos(f(n, v)),
        })
    }
}

/// Smallest `2^j` with `v(1/2^n) <= 2^j v(1/2^m)` for all `m <= n <= depth`,
/// plus the increasing majorant.
pub fn ess_incr_witness(v: &DyadicFunction, cap: u32) -> Result<EssIncr, DyadicError> {
    let prec = working_prec();
    let mut j = 0u32;
    let mut prefix_min: Option<(PosValue, u64)> = None;
    let mut zero_at: Option<u64> = None;
    for n in 0..=v.depth {
        let cur = match v.at(n) {
            NonNeg::Zero => {
                zero_at.get_or_insert(n);
                continue;
            }
            NonNeg::Pos(p) => p,
        };
        if let Some(z) = zero_at {
            return Err(DyadicError::ZeroValue(z));
        }
        let (pm, arg) = match &prefix_min {
            None => (cur.clone(), n),
            Some((pm, arg)) => {
                if pv_cmp_scaled(cur, &BigRational::one(), pm).is_true() {
                    (cur.clone(), n)
                } else {
                    (pv_min(pm, cur, prec), *arg)
                }
            }
        };
        if pv_cmp_scaled(cur, &Pow2(j).value(), &pm).is_true() {
            prefix_min = Some((pm, arg));
            continue;
        }
        match smallest_pow2_bound(cur, &pm, cap) {
            BoundSearch::Found(jn) => j = j.max(jn),
            BoundSearch::Exceeded => return Err(DyadicError::Unbounded { n, m: arg, cap }),
            BoundSearch::Undecided => return Err(DyadicError::Undecided(n)),
        }
        prefix_min = Some((pm, arg));
    }
    // g(1/2^n) = max over k >= n of f(1/2^k)
    let mut majorant = vec![NonNeg::Zero; v.samples.len()];
    let mut run = NonNeg::Zero;
    for n in (0..=v.depth as usize).rev() {
        run = match (&run, &v.samples[n]) {
            (NonNeg::Zero, x) | (x, NonNeg::Zero) => x.clone(),
            (NonNeg::Pos(a), NonNeg::Pos(b)) => NonNeg::Pos(pv_max(a, b, prec)),
        };
        majorant[n] = run.clone();
    }
    Ok(EssIncr {
        c: Pow2(j),
        majorant,
    })
}

/// Smallest two-sided constant between `f` and `g` on `range`.
pub fn equiv_witness(
    f: &DyadicFunction,
    g: &DyadicFunction,
    range: (u64, u64),
    cap: u32,
) -> Result<EquivCert, DyadicError> {
    let (lo, hi) = range;
    if lo > hi || hi > f.depth || hi > g.depth {
        return Err(DyadicError::BadRange(lo, hi));
    }
    let mut j = 0u32;
    for n in lo..=hi {
        let (a, b) = match (f.at(n), g.at(n)) {
            (NonNeg::Zero, NonNeg::Zero) => continue,
            (NonNeg::Pos(a), NonNeg::Pos(b)) => (a, b),
            _ => return Err(DyadicError::MixedZero(n)),
        };
        let c = Pow2(j).value();
        if pv_cmp_scaled(a, &c, b).is_true() && pv_cmp_scaled(b, &c, a).is_true() {
            continue;
        }
        match smallest_two_sided(a, b, cap) {
            BoundSearch::Found(jn) => j = j.max(jn),
            BoundSearch::Exceeded => {
                return Err(DyadicError::Diverges {
                    escape: escape_indices(f, g, range, cap),
                    cap,
                })
            }
            BoundSearch::Undecided => return Err(DyadicError::Undecided(n)),
        }
    }
    Ok(EquivCert::two_sided(Pow2(j), range))
}

/// First index at which the two-sided ratio exceeds `2^0, 2^1, ...` in turn.
fn escape_indices(f: &DyadicFunction, g: &DyadicFunction, range: (u64, u64), cap: u32) -> Vec<u64> {
    let mut out = Vec::new();
    let mut j = 0u32;
    for n in range.0..=range.1 {
        let (Some(a), Some(b)) = (f.at(n).pos(), g.at(n).pos()) else {
            continue;
        };
        while j <= cap {
            let c = Pow2(j).value();
            let ok = pv_cmp_scaled(a, &c, b).is_true() && pv_cmp_scaled(b, &c, a).is_true();
            if ok {
                break;
            }
            out.push(n);
            j += 1;
        }
        if j > cap {
            break;
        }
    }
    out
}

/// Full-grid equivalence assembled from a step sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeCert {
    /// Constant read directly off the grid.
    pub direct: EquivCert,
    /// `C_1^2 C_2 / delta` from the step-to-function argument.
    pub assembled: BigRational,
    pub assembled_pow2: Pow2,
    pub c1: Pow2,
    pub c2: BigRational,
}

/// Certify `f ≈ g` on the grid from agreement along `xseq` (grid indices,
/// increasing, starting at 0), the step ratio `delta` and the sandwich `K`.
pub fn step_bridge_check(
    f: &DyadicFunction,
    g: &DyadicFunction,
    xseq: &[u64],
    delta: &BigRational,
    k: &BigRational,
    cap: u32,
) -> Result<BridgeCert, DyadicError> {
    if xseq.first() != Some(&0) {
        return Err(DyadicError::HypothesisFailed {
            which: Hypothesis::StartsAtOne,
            at: xseq.first().copied().unwrap_or(0),
        });
    }
    let last = *xseq.last().expect("nonempty");
    if last > f.depth || last > g.depth || xseq.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DyadicError::BadRange(0, last));
    }
    let ess = ess_incr_witness(&f.truncate(last.max(MIN_DEPTH).min(f.depth))?, cap)?;
    let sub = |h: &DyadicFunction| {
        let mut s: Vec<NonNeg> = xseq.iter().map(|&n| h.at(n).clone()).collect();
        while s.len() <= MIN_DEPTH as usize {
            s.push(s.last().expect("nonempty").clone());
        }
        DyadicFunction::new(s, Interp::MonotoneJoin)
    };
    let seq_eq = equiv_witness(&sub(f)?, &sub(g)?, (0, xseq.len() as u64 - 1), cap)?;
    let c1 = ess.c.max(seq_eq.c);

    let dval = PosValue::Exact(delta.clone());
    for w in xseq.windows(2) {
        let (Some(a), Some(b)) = (f.at(w[0]).pos(), f.at(w[1]).pos()) else {
            return Err(DyadicError::ZeroValue(w[1]));
        };
        if pv_cmp_scaled(&dval.mul(a), &BigRational::one(), b) != Verdict3::CertTrue {
            return Err(DyadicError::HypothesisFailed {
                which: Hypothesis::StepRatio,
                at: w[1],
            });
        }
    }
    for w in xseq.windows(2) {
        let (Some(a), Some(b)) = (g.at(w[0]).pos(), g.at(w[1]).pos()) else {
            return Err(DyadicError::ZeroValue(w[1]));
        };
        let lo = pv_min(a, b, working_prec());
        let hi = pv_max(a, b, working_prec());
        for n in w[0]..=w[1] {
            let Some(x) = g.at(n).pos() else {
                return Err(DyadicError::ZeroValue(n));
            };
            let below = pv_cmp_scaled(&lo, k, x).is_true();
            let above = pv_cmp_scaled(x, k, &hi).is_true();
            if !(below && above) {
                return Err(DyadicError::HypothesisFailed {
                    which: Hypothesis::KSandwich,
                    at: n,
                });
            }
        }
    }
    let c1r = c1.value();
    let k2 = k * k;
    let c2 = std::cmp::max(&k2 * &c1r * &c1r * &c1r, &k2 * &c1r * &c1r / delta);
    let assembled = &c1r * &c1r * &c2 / delta;
    let direct = equiv_witness(f, g, (0, last), cap)?;
    Ok(BridgeCert {
        direct,
        assembled_pow2: Pow2::ceil_of(&assembled),
        assembled,
        c1,
        c2,
    })
}

/// Check `phi(1/2^(2n)) >= lambda phi(1/2^n)` for `2n <= depth` and certify
/// `phi(x^2) ≈ phi(x)` on the grid.
pub fn square_invariance_check(
    phi: &DyadicFunction,
    lambda: &BigRational,
    cap: u32,
) -> Result<EquivCert, DyadicError> {
    ess_incr_witness(phi, cap)?;
    if phi.at(1).is_zero() {
        return Err(DyadicError::HypothesisFailed {
            which: Hypothesis::PositiveAtHalf,
            at: 1,
        });
    }
    let lam = PosValue::Exact(lambda.clone());
    let half = phi.depth / 2;
    for n in 0..=half {
        let ok = match (phi.at(n), phi.at(2 * n)) {
            (NonNeg::Zero, _) => true,
            (NonNeg::Pos(_), NonNeg::Zero) => false,
            (NonNeg::Pos(a), NonNeg::Pos(b)) => {
                pv_cmp_scaled(&lam.mul(a), &BigRational::one(), b).is_true()
            }
        };
        if !ok {
            return Err(DyadicError::HypothesisFailed {
                which: Hypothesis::SquareScale,
                at: n,
            });
        }
    }
    let squared = DyadicFunction::from_fn(half.max(MIN_DEPTH), phi.interp, |n| {
        phi.at((2 * n).min(phi.depth)).clone()
    })?;
    let base = phi.truncate(half.max(MIN_DEPTH))?;
    equiv_witness(&squared, &base, (0, half), cap)
}
