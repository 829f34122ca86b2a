//! Conditions on `f(x) = x^alpha psi(x)`: the quasi-triangle constant (R2),
//! the separation condition (A1) and liminf witnesses (A2').

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_fn::{
    ess_incr_witness, square_invariance_check, DyadicError, DyadicFunction, Interp,
};
use crate::numeric::{
    pv_cmp_lt, pv_cmp_scaled, pv_min, smallest_pow2_bound, working_prec, BoundSearch, NonNeg,
    PosValue, Pow2, Verdict3,
};
use crate::scales::WeightSeq;

/// Threshold `M` in (A1).
pub const A1_THRESHOLD: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RelationError {
    #[error("alpha must be at least 1")]
    AlphaBelowOne,
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error("(R2) needs a constant above 2^{cap} at x = 1/2^{a}, y = 1/2^{b}")]
    R2Unbounded { a: u64, b: u64, cap: u32 },
    #[error("(R2) comparison at x = 1/2^{a}, y = 1/2^{b} could not be certified")]
    R2Undecided { a: u64, b: u64 },
    #[error("(A1) implication fails at x = 1/2^{a}, y = 1/2^{b}, n = {n}")]
    ImplicationFailed { a: u64, b: u64, n: u64 },
    #[error("(A1) comparison at y = 1/2^{b}, n = {n} could not be certified")]
    A1Undecided { b: u64, n: u64 },
    #[error("ratio exceeds the bound at level {0}")]
    BoundViolated(usize),
    #[error("bound is not strictly decreasing below 1 at level {0}")]
    BadBound(usize),
    #[error("ratio does not drop below 1 along the index sequence")]
    NoWitness,
    #[error("index sequence must be increasing and inside the grid")]
    BadIndexSequence,
}

/// `f(1/2^n) = 2^(-n alpha) phi(1/2^n) u(n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    #[serde(with = "crate::numeric::rat_str")]
    pub alpha: BigRational,
    pub envelope: DyadicFunction,
    pub weight: WeightSeq,
    /// Essential-increasing constant of `envelope * weight`.
    pub ess_c: Pow2,
}

impl RelationSpec {
    pub fn new(
        alpha: BigRational,
        envelope: DyadicFunction,
        weight: WeightSeq,
        cap: u32,
    ) -> Result<Self, RelationError> {
        if alpha < BigRational::one() {
            return Err(RelationError::AlphaBelowOne);
        }
        let mut spec = RelationSpec {
            alpha,
            envelope,
            weight,
            ess_c: Pow2::ONE,
        };
        spec.ess_c = ess_incr_witness(&spec.psi()?, cap)?.c;
        Ok(spec)
    }

    /// `x^alpha` with `phi = 1` and trivial weight.
    pub fn power(alpha: BigRational, depth: u64) -> Result<Self, RelationError> {
        let env = DyadicFunction::constant(depth, PosValue::one())?;
        Self::new(alpha, env, WeightSeq::trivial(depth), 64)
    }

    pub fn depth(&self) -> u64 {
        self.envelope.depth().min(self.weight.depth())
    }

    /// `psi = phi * u` on the grid.
    pub fn psi(&self) -> Result<DyadicFunction, DyadicError> {
        let u = self.weight.values();
        DyadicFunction::from_fn(self.depth(), self.envelope.interp(), |n| {
            self.envelope.at(n).mul(&u[n as usize])
        })
    }

    /// `x^alpha` at `x = 1/2^n`.
    pub fn power_at(&self, n: u64) -> PosValue {
        PosValue::ratio(1, 2).pow_rat(&(&self.alpha * BigInt::from(n)), working_prec())
    }

    /// Samples `f(1/2^n)` for `n <= depth`.
    pub fn f_values(&self) -> Result<Vec<PosValue>, DyadicError> {
        let psi = self.psi()?;
        (0..=self.depth())
            .map(|n| match psi.at(n) {
                NonNeg::Pos(p) => Ok(self.power_at(n).mul(p)),
                NonNeg::Zero => Err(DyadicError::ZeroValue(n)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct R2Report {
    pub check: String,
    #[serde(rename = "C")]
    pub c: Pow2,
    pub depth: u64,
    pub status: String,
    /// `f(0) = 0`: bounded `psi` and `alpha > 0`.
    pub r1: bool,
    /// Pair `(a, b)` that forced the constant.
    pub tight_at: Option<(u64, u64)>,
}

fn needed(lhs: &PosValue, rhs: &PosValue, j: u32, cap: u32) -> Result<Option<u32>, bool> {
    if pv_cmp_scaled(lhs, &Pow2(j).value(), rhs).is_true() {
        return Ok(None);
    }
    match smallest_pow2_bound(lhs, rhs, cap) {
        BoundSearch::Found(jn) => Ok(Some(jn)),
        BoundSearch::Exceeded => Err(true),
        BoundSearch::Undecided => Err(false),
    }
}

/// Smallest `2^j` for both (R2) inequalities over grid pairs
/// `x = 1/2^a`, `y = 1/2^b` with `x + y <= 1`. Off-grid `psi(x + y)` is
/// bracketed by the neighbouring grid values and the essential-increasing
/// constant.
pub fn check_r1_r2(r: &RelationSpec, depth: u64, cap: u32) -> Result<R2Report, RelationError> {
    let depth = depth.min(r.depth());
    let psi = r.psi()?.truncate(depth.max(crate::dyadic_fn::MIN_DEPTH).min(r.depth()))?;
    let k = ess_incr_witness(&psi, cap)?.c.value();
    let kv = PosValue::Exact(k.clone());
    let f = r.f_values()?;
    let prec = working_prec();
    let psi_at = |n: u64| psi.pos(n).clone();

    // per a: (max j, tight pair) or first error
    let rows: Vec<Result<(u32, Option<(u64, u64)>), RelationError>> = (0..=depth)
        .into_par_iter()
        .map(|a| {
            let mut j = 0u32;
            let mut tight = None;
            for b in 0..=depth {
                // x + y <= 1 needs both positive exponents unless one is larger
                let (hi_e, lo_e) = (a.min(b), a.max(b));
                if hi_e == 0 {
                    continue;
                }
                let z = BigRational::new(BigInt::one(), BigInt::one() << hi_e)
                    + BigRational::new(BigInt::one(), BigInt::one() << lo_e);
                let zpow = PosValue::Exact(z).pow_rat(&r.alpha, prec);
                let (f_up, f_lo) = if a == b {
                    let v = zpow.mul(&psi_at(a - 1));
                    (v.clone(), v)
                } else {
                    (
                        zpow.mul(&kv).mul(&psi_at(hi_e - 1)),
                        zpow.mul(&psi_at(hi_e)).div(&kv),
                    )
                };
                let (fx, fy) = (&f[a as usize], &f[b as usize]);
                let sum1 = fx.add(fy, prec);
                let sum2 = f_lo.add(fy, prec);
                for (lhs, rhs) in [(&f_up, &sum1), (fx, &sum2)] {
                    match needed(lhs, rhs, j, cap) {
                        Ok(None) => {}
                        Ok(Some(jn)) => {
                            if jn > j {
                                j = jn;
                                tight = Some((a, b));
                            }
                        }
                        Err(true) => return Err(RelationError::R2Unbounded { a, b, cap }),
                        Err(false) => return Err(RelationError::R2Undecided { a, b }),
                    }
                }
            }
            Ok((j, tight))
        })
        .collect();
    let mut best = (0u32, None);
    for row in rows {
        let (j, t) = row?;
        if j > best.0 {
            best = (j, t);
        }
    }
    Ok(R2Report {
        check: "R2".into(),
        c: Pow2(best.0),
        depth,
        status: "pass".into(),
        r1: r.alpha.is_positive(),
        tight_at: best.1,
    })
}

/// `K^2 max{g(1)/g(1/8), 4^alpha K^2/delta}` where `g` is `x^alpha` times the
/// increasing majorant and `K` its distance from `psi`.
pub fn r2_proof_bound(
    r: &RelationSpec,
    delta: &BigRational,
    cap: u32,
) -> Result<PosValue, RelationError> {
    let psi = r.psi()?;
    let ess = ess_incr_witness(&psi, cap)?;
    let prec = working_prec();
    let k = ess.c.as_pos();
    let maj = |n: usize| ess.majorant[n].pos().cloned().ok_or(DyadicError::ZeroValue(n as u64));
    let g1 = maj(0)?;
    let g8 = r.power_at(3).mul(&maj(3)?);
    let first = g1.div(&g8);
    let four_a = PosValue::ratio(4, 1).pow_rat(&r.alpha, prec);
    let second = four_a.mul(&k).mul(&k).div(&PosValue::Exact(delta.clone()));
    let m = crate::numeric::pv_max(&first, &second, prec);
    Ok(m.mul(&k).mul(&k))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct A1Cert {
    /// Constant for the increasing majorant.
    #[serde(with = "crate::numeric::rat_str")]
    pub epsilon: BigRational,
    /// `epsilon / K^3`, the constant that applies to the samples.
    #[serde(with = "crate::numeric::rat_str")]
    pub epsilon_prime: BigRational,
    #[serde(rename = "K")]
    #[serde(with = "crate::numeric::rat_str")]
    pub k: BigRational,
    #[serde(with = "crate::numeric::rat_str")]
    pub delta: BigRational,
    pub checked_range: (u64, u64),
}

/// Largest `2^-j` strictly below `bound`.
fn pow2_below(bound: &BigRational) -> BigRational {
    let mut e = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    while &e >= bound {
        e /= &two;
    }
    e
}

/// Verify (A1) for `psi = phi * u` with `M = 2`, given the square-scale
/// factor `delta`.
pub fn check_a1(
    r: &RelationSpec,
    delta: &BigRational,
    depth: u64,
    cap: u32,
) -> Result<A1Cert, RelationError> {
    let depth = depth.min(r.depth());
    let psi = r.psi()?.truncate(depth.max(crate::dyadic_fn::MIN_DEPTH).min(r.depth()))?;
    square_invariance_check(&psi, delta, cap)?;
    let ess = ess_incr_witness(&psi, cap)?;
    let k = ess.c.value();
    let psi1 = ess.majorant[0]
        .pos()
        .and_then(|p| p.value_bounds(working_prec()))
        .map(|(_, hi)| hi.to_rational().expect("finite"))
        .ok_or(DyadicError::ZeroValue(0))?;
    let two = BigRational::from_integer(BigInt::from(2));
    let k4 = &k * &k * &k * &k;
    let b1 = (&two * &psi1).recip();
    let b2 = delta * delta / (&two * &k4 * &psi1);
    let epsilon = pow2_below(&b1.min(b2));
    let epsilon_prime = &epsilon / (&k * &k * &k);
    let eps = PosValue::Exact(epsilon_prime.clone());

    // prefix minima of psi over a <= n
    let prec = working_prec();
    let mut pmin: Vec<PosValue> = Vec::with_capacity(psi.samples().len());
    for n in 0..=psi.depth() {
        let v = psi.pos(n).clone();
        let next = match pmin.last() {
            None => v,
            Some(p) => pv_min(p, &v, prec),
        };
        pmin.push(next);
    }
    // conclusion fails exactly when a <= b + n, so psi there must beat the product
    let fails: Vec<Result<(), RelationError>> = (0..=depth)
        .into_par_iter()
        .map(|b| {
            for n in A1_THRESHOLD..=depth {
                let amax = (b + n).min(depth);
                let rhs = eps.mul(psi.pos(b)).mul(psi.pos(n));
                match pv_cmp_lt(&rhs, &pmin[amax as usize]) {
                    Verdict3::CertTrue => {}
                    Verdict3::CertFalse => {
                        let a = (0..=amax)
                            .find(|&a| !pv_cmp_lt(&rhs, psi.pos(a)).is_true())
                            .unwrap_or(amax);
                        return Err(RelationError::ImplicationFailed { a, b, n });
                    }
                    Verdict3::Unknown { .. } => return Err(RelationError::A1Undecided { b, n }),
                }
            }
            Ok(())
        })
        .collect();
    fails.into_iter().collect::<Result<Vec<()>, _>>()?;
    Ok(A1Cert {
        epsilon,
        epsilon_prime,
        k,
        delta: delta.clone(),
        checked_range: (A1_THRESHOLD, depth),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct A2Witness {
    pub indices: Vec<u64>,
    pub ratios: Vec<PosValue>,
    pub bounds: Vec<PosValue>,
}

/// Certify `num(idx_l)/den(idx_l) <= bound_l` along `idxseq`.
pub fn a2_liminf_witness(
    num: &DyadicFunction,
    den: &DyadicFunction,
    idxseq: &[u64],
    bound: &[PosValue],
) -> Result<A2Witness, RelationError> {
    let depth = num.depth().min(den.depth());
    if idxseq.is_empty()
        || bound.len() < idxseq.len()
        || idxseq.windows(2).any(|w| w[0] >= w[1])
        || *idxseq.last().expect("nonempty") > depth
    {
        return Err(RelationError::BadIndexSequence);
    }
    let one = PosValue::one();
    for l in 1..idxseq.len() {
        if !pv_cmp_lt(&bound[l], &bound[l - 1]).is_true() || !pv_cmp_lt(&bound[l], &one).is_true()
        {
            return Err(RelationError::BadBound(l));
        }
    }
    let mut ratios = Vec::with_capacity(idxseq.len());
    for &n in idxseq {
        let d = den.at(n).pos().ok_or(DyadicError::ZeroValue(n))?;
        ratios.push(match num.at(n) {
            NonNeg::Pos(a) => a.div(d),
            NonNeg::Zero => return Err(DyadicError::ZeroValue(n).into()),
        });
    }
    if !pv_cmp_lt(ratios.last().expect("nonempty"), &one).is_true() {
        return Err(RelationError::NoWitness);
    }
    for (l, q) in ratios.iter().enumerate() {
        if !pv_cmp_scaled(q, &BigRational::one(), &bound[l]).is_true() {
            return Err(RelationError::BoundViolated(l));
        }
    }
    Ok(A2Witness {
        indices: idxseq.to_vec(),
        ratios,
        bounds: bound[..idxseq.len()].to_vec(),
    })
}

/// `psi = phi * u` as a [`DyadicFunction`] from a weight alone.
pub fn weight_envelope(w: &WeightSeq) -> Result<DyadicFunction, DyadicError> {
    DyadicFunction::from_positive(w.values(), Interp::MonotoneJoin)
}
