//! Reduction certificates: the `kappa` recursion and the `mu`/`nu` machinery.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_fn::{ess_incr_witness, DyadicError, DyadicFunction};
use crate::numeric::{
    pv_cmp_lt, pv_cmp_scaled, pv_max, smallest_pow2_bound, smallest_two_sided, working_prec,
    BoundSearch, NonNeg, NumericError, PosValue, Pow2, Verdict3,
};
use crate::relation::RelationSpec;
use crate::scales::{ScaleError, ScaleSystem, WeightSeq};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReductionError {
    #[error("radicand at n = {0} is not positive; the envelope drops too fast")]
    NegativeRadicand(u64),
    #[error("no n0 within depth keeps the consecutive ratio inside [1 - eps, 1 + eps]")]
    NoN0Found,
    #[error("need alpha < beta")]
    BetaNotAboveAlpha,
    #[error("ratio u_U/u_V decreases at n = {0}; U is not inside V")]
    NegativeDifference(u64),
    #[error("band hypothesis fails at i = {i}, n = {n}")]
    BandHypothesisFailed { i: u64, n: u64 },
    #[error("need 0 <= eps < 1")]
    BadEpsilon,
    #[error("g is not strictly monotone on the grid at n = {0}")]
    NotMonotone(u64),
    #[error("comparison at n = {0} could not be certified")]
    Undecided(u64),
    #[error("constant exceeds 2^{cap} at n = {n}")]
    Unbounded { n: u64, cap: u32 },
    #[error("weight sequences and envelope disagree on depth")]
    DepthMismatch,
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("builder produced a rejected certificate: {0}")]
    Rejected(CertFailure),
}

/// First failing inequality reported by a checker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum CertFailure {
    #[error("reconstruction fails at n = {n}")]
    ReconstructFailed { n: u64 },
    #[error("tail bound fails at n = {n}")]
    TailBoundFailed { n: u64 },
    #[error("max bound fails at n = {n}")]
    MaxBoundFailed { n: u64 },
    #[error("kappa leaves [0, 1] at n = {n}")]
    KappaRange { n: u64 },
    #[error("tail parameters do not hold: {what}")]
    TailParams { what: String },
    #[error("mu differs from the ratio difference at n = {n}")]
    MuMismatch { n: u64 },
    #[error("nu differs from its patch of mu at n = {n}")]
    NuMismatch { n: u64 },
    #[error("nu leaves [0, 2^n] at n = {n}")]
    NuOutOfRange { n: u64 },
    #[error("mu range bound fails at n = {n}")]
    MuRangeFailed { n: u64 },
    #[error("band constant fails at i = {i}, n = {n}")]
    BandFailed { i: u64, n: u64 },
    #[error("psi_U ≈ psi_V sum nu^alpha fails at n = {n}")]
    EquivSumFailed { n: u64 },
    #[error("tail sum inequality fails at n = {n}")]
    TailSumFailed { n: u64 },
    #[error("growth bound fails at n = {n}")]
    GrowthFailed { n: u64 },
    #[error("{check} at n = {n} could not be certified")]
    Undecided { check: String, n: u64 },
    #[error("malformed certificate: {0}")]
    Malformed(String),
}

impl CertFailure {
    pub fn is_unknown(&self) -> bool {
        matches!(self, CertFailure::Undecided { .. })
    }

    /// Name of the failing inequality.
    pub fn name(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.get("failure").and_then(|f| f.as_str().map(str::to_string)))
            .unwrap_or_default()
    }
}

fn one() -> BigRational {
    BigRational::one()
}

/// `a <= c b` for non-negative values.
fn nn_le(a: &NonNeg, c: &BigRational, b: &NonNeg) -> Verdict3 {
    match (a, b) {
        (NonNeg::Zero, _) => Verdict3::CertTrue,
        (NonNeg::Pos(_), NonNeg::Zero) => Verdict3::CertFalse,
        (NonNeg::Pos(x), NonNeg::Pos(y)) => pv_cmp_scaled(x, c, y),
    }
}

fn check(v: Verdict3, check: &str, n: u64, fail: CertFailure) -> Result<(), CertFailure> {
    match v {
        Verdict3::CertTrue => Ok(()),
        Verdict3::CertFalse => Err(fail),
        Verdict3::Unknown { .. } => Err(CertFailure::Undecided {
            check: check.into(),
            n,
        }),
    }
}

fn same_value(a: &PosValue, b: &PosValue) -> bool {
    match (a.exact_value(), b.exact_value()) {
        (Some(x), Some(y)) => x == y,
        _ => a.overlaps(b, working_prec()),
    }
}

fn same_nn(a: &NonNeg, b: &NonNeg) -> bool {
    match (a, b) {
        (NonNeg::Zero, NonNeg::Zero) => true,
        (NonNeg::Pos(x), NonNeg::Pos(y)) => same_value(x, y),
        _ => false,
    }
}

fn search(a: &PosValue, b: &PosValue, cap: u32, n: u64) -> Result<u32, ReductionError> {
    match smallest_pow2_bound(a, b, cap) {
        BoundSearch::Found(j) => Ok(j),
        BoundSearch::Exceeded => Err(ReductionError::Unbounded { n, cap }),
        BoundSearch::Undecided => Err(ReductionError::Undecided(n)),
    }
}

fn two_pow_neg(e: &BigRational) -> PosValue {
    PosValue::ratio(1, 2).pow_rat(e, working_prec())
}

// ---------------------------------------------------------------- kappa

/// Tail data for `sum_{i > depth}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailParams {
    /// Essential-increasing constant of the flattened envelope.
    pub c_ess: Pow2,
    /// `log2` of the geometric ratio, `-alpha`.
    #[serde(with = "crate::numeric::rat_str")]
    pub ratio_log2: BigRational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KappaCert {
    #[serde(with = "crate::numeric::rat_str")]
    pub alpha: BigRational,
    #[serde(with = "crate::numeric::rat_str")]
    pub beta: BigRational,
    pub depth: u64,
    pub n0: u64,
    #[serde(with = "crate::numeric::rat_str")]
    pub epsilon: BigRational,
    /// `kappa(1/2^n)`.
    pub kappa: Vec<PosValue>,
    #[serde(rename = "L")]
    pub l: Pow2,
    pub tail_params: TailParams,
}

/// `psi` held flat at `psi(1/2^n0)` above `1/2^n0` and divided by its maximum.
fn flatten(psi: &DyadicFunction, n0: u64, depth: u64) -> Result<Vec<PosValue>, ReductionError> {
    let prec = working_prec();
    let mut m: Option<PosValue> = None;
    for n in 0..=depth {
        let v = psi.at(n).pos().ok_or(DyadicError::ZeroValue(n))?;
        m = Some(match m {
            None => v.clone(),
            Some(x) => pv_max(&x, v, prec),
        });
    }
    let m = m.expect("nonempty");
    Ok((0..=depth)
        .map(|n| psi.pos(n.max(n0)).div(&m))
        .collect())
}

/// Largest `2^-j` with `lambda (1 + 2^-j) < 1` and `2^-j < 1`.
fn pick_epsilon(lambda: &PosValue) -> Result<BigRational, ReductionError> {
    let one = PosValue::one();
    for j in 1..=64u32 {
        let e = BigRational::new(BigInt::one(), BigInt::one() << j);
        let lhs = lambda.mul(&PosValue::Exact(one_plus(&e)));
        if pv_cmp_lt(&lhs, &one).is_true() {
            return Ok(e);
        }
    }
    Err(ReductionError::BetaNotAboveAlpha)
}

fn one_plus(e: &BigRational) -> BigRational {
    one() + e
}

/// Closed-form `kappa` for `f = x^alpha psi` against `g = x^beta`.
pub fn solve_kappa_closed(
    r: &RelationSpec,
    beta: &BigRational,
    depth: u64,
    cap: u32,
) -> Result<KappaCert, ReductionError> {
    let alpha = r.alpha.clone();
    if beta <= &alpha {
        return Err(ReductionError::BetaNotAboveAlpha);
    }
    let depth = depth.min(r.depth());
    let psi = r.psi()?;
    let prec = working_prec();
    let lambda = PosValue::ratio(2, 1).pow_rat(&(&alpha - beta), prec);
    let eps = pick_epsilon(&lambda)?;
    let lo = PosValue::Exact(one() - &eps);
    let hi = one_plus(&eps);

    // last n whose ratio psi(n)/psi(n+1) leaves [1-eps, 1+eps]
    let mut n0 = 0u64;
    for n in (0..depth).rev() {
        let a = psi.at(n).pos().ok_or(DyadicError::ZeroValue(n))?;
        let b = psi.at(n + 1).pos().ok_or(DyadicError::ZeroValue(n + 1))?;
        let inside = pv_cmp_scaled(&lo.mul(b), &one(), a).is_true()
            && pv_cmp_scaled(a, &hi, b).is_true();
        if !inside {
            n0 = n + 1;
            break;
        }
    }
    if n0 + 1 >= depth {
        for n in 1..=depth {
            let rad = psi.pos(n).sub(&lambda.mul(psi.pos(n - 1)), prec);
            if !matches!(rad, Ok(NonNeg::Pos(_))) {
                return Err(ReductionError::NegativeRadicand(n));
            }
        }
        return Err(ReductionError::NoN0Found);
    }

    let flat = flatten(&psi, n0, depth)?;
    let inv_beta = beta.recip();
    let mut kb = Vec::with_capacity(depth as usize + 1);
    kb.push(flat[0].clone());
    for n in 1..=depth {
        let rad = flat[n as usize].sub(&lambda.mul(&flat[n as usize - 1]), prec);
        let rad = match rad {
            Ok(NonNeg::Pos(v)) => v,
            Ok(NonNeg::Zero) | Err(NumericError::NegativeDifference) => {
                return Err(ReductionError::NegativeRadicand(n))
            }
            Err(_) => return Err(ReductionError::Undecided(n)),
        };
        kb.push(rad.mul(&r.power_at(n)));
    }
    let kappa: Vec<PosValue> = kb.iter().map(|v| v.pow_rat(&inv_beta, prec)).collect();

    let flat_fn = DyadicFunction::from_positive(flat.clone(), psi.interp())?;
    let c_ess = ess_incr_witness(&flat_fn, cap)?.c;
    let tail = TailParams {
        c_ess,
        ratio_log2: -alpha.clone(),
    };
    let mut cert = KappaCert {
        alpha,
        beta: beta.clone(),
        depth,
        n0,
        epsilon: eps,
        kappa,
        l: Pow2::ONE,
        tail_params: tail,
    };

    // L from the proof's tail constant, then whatever the grid needs
    let geo = geometric_factor(&cert.alpha);
    let mut j = search(&c_ess.as_pos().mul(&geo), &PosValue::one(), cap, 0)?;
    let g = g_values(&flat, &cert.alpha);
    let tail_sum = tail_bound(&cert, &flat);
    let mut suffix = NonNeg::Pos(tail_sum);
    for n in (0..=depth).rev() {
        suffix = suffix.add(&NonNeg::Pos(kb[n as usize].clone()), prec);
        let s = suffix.pos().expect("positive");
        j = j.max(search(s, &g[n as usize], cap, n)?);
    }
    let mut best: Option<PosValue> = None;
    for n in 1..=depth {
        let prev = cert.kappa[n as usize - 1].clone();
        best = Some(match best {
            None => prev,
            Some(b) => pv_max(&b, &prev, prec),
        }
        .mul(&PosValue::ratio(1, 2)));
        let b = best.as_ref().expect("set");
        j = j.max(search(&cert.kappa[n as usize], b, cap, n)?);
    }
    cert.l = Pow2(j);
    verify_kappa_cert(&cert, r).map_err(ReductionError::Rejected)?;
    Ok(cert)
}

/// `1/(1 - 2^-alpha)`.
fn geometric_factor(alpha: &BigRational) -> PosValue {
    let q = two_pow_neg(alpha);
    match PosValue::one().sub(&q, working_prec()) {
        Ok(NonNeg::Pos(d)) => d.recip(),
        _ => unreachable!("alpha >= 1"),
    }
}

fn g_values(flat: &[PosValue], alpha: &BigRational) -> Vec<PosValue> {
    flat.iter()
        .enumerate()
        .map(|(n, v)| v.mul(&two_pow_neg(&(alpha * BigInt::from(n)))))
        .collect()
}

/// `C psi'(1/2^D) 2^(-(D+1) alpha) / (1 - 2^-alpha)` bounds `sum_{i > D} kappa^beta`.
fn tail_bound(cert: &KappaCert, flat: &[PosValue]) -> PosValue {
    let d = cert.depth;
    cert.tail_params
        .c_ess
        .as_pos()
        .mul(&flat[d as usize])
        .mul(&two_pow_neg(&(&cert.alpha * BigInt::from(d + 1))))
        .mul(&geometric_factor(&cert.alpha))
}

/// Recheck a [`KappaCert`] against the relation it claims to reduce.
pub fn verify_kappa_cert(cert: &KappaCert, r: &RelationSpec) -> Result<(), CertFailure> {
    let depth = cert.depth;
    if cert.kappa.len() as u64 != depth + 1 || depth > r.depth() || r.alpha != cert.alpha {
        return Err(CertFailure::Malformed("depth or alpha mismatch".into()));
    }
    if cert.beta <= cert.alpha {
        return Err(CertFailure::Malformed("beta must exceed alpha".into()));
    }
    let prec = working_prec();
    let psi = r.psi().map_err(|e| CertFailure::Malformed(e.to_string()))?;
    let flat = flatten(&psi, cert.n0, depth).map_err(|e| CertFailure::Malformed(e.to_string()))?;
    let g = g_values(&flat, &cert.alpha);
    let beta = &cert.beta;
    let kb: Vec<PosValue> = cert.kappa.iter().map(|k| k.pow_rat(beta, prec)).collect();
    let onev = PosValue::one();
    for (n, k) in cert.kappa.iter().enumerate() {
        check(
            pv_cmp_scaled(k, &one(), &onev),
            "kappa range",
            n as u64,
            CertFailure::KappaRange { n: n as u64 },
        )?;
    }

    // reconstruction: S(n) = S(n-1) 2^-beta + kappa(n)^beta
    let shrink = two_pow_neg(beta);
    let mut s: Option<PosValue> = None;
    for n in 0..=depth as usize {
        let next = match s {
            None => kb[0].clone(),
            Some(prev) => prev.mul(&shrink).add(&kb[n], prec),
        };
        if !same_value(&next, &g[n]) {
            return Err(CertFailure::ReconstructFailed { n: n as u64 });
        }
        s = Some(next);
    }

    // tail justification
    let flat_fn = DyadicFunction::from_positive(flat.clone(), psi.interp())
        .map_err(|e| CertFailure::Malformed(e.to_string()))?;
    let c = ess_incr_witness(&flat_fn, 64).map_err(|e| CertFailure::TailParams {
        what: e.to_string(),
    })?;
    if c.c > cert.tail_params.c_ess || cert.tail_params.ratio_log2 != -cert.alpha.clone() {
        return Err(CertFailure::TailParams {
            what: format!("essential-increasing constant is {}", c.c),
        });
    }
    for n in 0..=depth as usize {
        check(
            pv_cmp_scaled(&kb[n], &one(), &g[n]),
            "pointwise tail",
            n as u64,
            CertFailure::TailParams {
                what: format!("kappa^beta exceeds g at n = {n}"),
            },
        )?;
    }

    // tail bound
    let l = cert.l.value();
    let mut suffix = tail_bound(cert, &flat);
    let mut sums = vec![PosValue::one(); depth as usize + 1];
    for n in (0..=depth as usize).rev() {
        suffix = suffix.add(&kb[n], prec);
        sums[n] = suffix.clone();
    }
    for n in 0..=depth as usize {
        check(
            pv_cmp_scaled(&sums[n], &l, &g[n]),
            "tail bound",
            n as u64,
            CertFailure::TailBoundFailed { n: n as u64 },
        )?;
    }

    // max bound
    let mut best: Option<PosValue> = None;
    for n in 1..=depth as usize {
        let prev = &cert.kappa[n - 1];
        best = Some(match best {
            None => prev.clone(),
            Some(b) => pv_max(&b, prev, prec),
        }
        .mul(&PosValue::ratio(1, 2)));
        check(
            pv_cmp_scaled(&cert.kappa[n], &l, best.as_ref().expect("set")),
            "max bound",
            n as u64,
            CertFailure::MaxBoundFailed { n: n as u64 },
        )?;
    }
    Ok(())
}

/// `kappa(1/2^i) = 2^-j_i` on the grid, solving `g(kappa) <= residual` by
/// bisection over a strictly monotone `g`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridKappa {
    /// Grid exponent of `kappa(1/2^i)`; `None` when `kappa` is 0.
    pub exponents: Vec<Option<u64>>,
    /// Two-sided constant between `f` and the reconstruction.
    #[serde(rename = "C")]
    pub c: Pow2,
}

pub fn solve_kappa_bisect(
    f: &[PosValue],
    g: &DyadicFunction,
    cap: u32,
) -> Result<GridKappa, ReductionError> {
    let gd = g.depth();
    for n in 1..=gd {
        let (a, b) = (g.pos(n - 1), g.pos(n));
        if !pv_cmp_lt(b, a).is_true() {
            return Err(ReductionError::NotMonotone(n));
        }
    }
    let prec = working_prec();
    let mut exps: Vec<Option<u64>> = Vec::with_capacity(f.len());
    let mut j = 0u32;
    for (n, fv) in f.iter().enumerate() {
        let n = n as u64;
        let mut acc = NonNeg::Zero;
        for (i, e) in exps.iter().enumerate() {
            if let Some(e) = e {
                let idx = e + n - i as u64;
                if idx <= gd {
                    acc = acc.add(&NonNeg::Pos(g.pos(idx).clone()), prec);
                }
            }
        }
        let residual = match &acc {
            NonNeg::Zero => Ok(NonNeg::Pos(fv.clone())),
            NonNeg::Pos(a) => fv.sub(a, prec),
        };
        let pick = match residual {
            Ok(NonNeg::Pos(res)) => {
                // smallest index with g(idx) <= residual
                let (mut lo, mut hi) = (0u64, gd + 1);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if pv_cmp_scaled(g.pos(mid), &one(), &res).is_true() {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                (lo <= gd).then_some(lo)
            }
            _ => None,
        };
        exps.push(pick);
        if let Some(e) = pick {
            acc = acc.add(&NonNeg::Pos(g.pos(e).clone()), prec);
        }
        match &acc {
            NonNeg::Pos(a) => {
                let c = match smallest_two_sided_search(fv, a, cap) {
                    Some(c) => c,
                    None => return Err(ReductionError::Unbounded { n, cap }),
                };
                j = j.max(c);
            }
            NonNeg::Zero => return Err(ReductionError::Unbounded { n, cap }),
        }
    }
    Ok(GridKappa {
        exponents: exps,
        c: Pow2(j),
    })
}

fn smallest_two_sided_search(a: &PosValue, b: &PosValue, cap: u32) -> Option<u32> {
    match smallest_two_sided(a, b, cap) {
        BoundSearch::Found(j) => Some(j),
        _ => None,
    }
}

// ---------------------------------------------------------------- mu / nu

/// Raw `mu` from two weight sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MuRaw {
    pub mu: Vec<NonNeg>,
    pub mu_alpha: Vec<NonNeg>,
    /// First index from which nonzero `mu^alpha` lies in `[1/Delta - 1, 2^(n/2)]`.
    pub n0: u64,
}

/// `mu(n)^alpha = u_U(n)/u_V(n) - u_U(n-1)/u_V(n-1)`, `mu(0) = 1`.
pub fn build_mu(
    wu: &WeightSeq,
    wv: &WeightSeq,
    s: &ScaleSystem,
    alpha: &BigRational,
) -> Result<MuRaw, ReductionError> {
    if wu.depth() != wv.depth() {
        return Err(ReductionError::DepthMismatch);
    }
    let mu_alpha = mu_alpha_values(wu, wv).map_err(|e| match e {
        MuErr::Negative(n) => ReductionError::NegativeDifference(n),
        MuErr::Undecided(n) => ReductionError::Undecided(n),
    })?;
    let prec = working_prec();
    let inv = alpha.recip();
    let mu: Vec<NonNeg> = mu_alpha.iter().map(|v| v.pow_rat(&inv, prec)).collect();
    let lower = mu_lower(s);
    let mut n0 = 0u64;
    for n in (0..mu_alpha.len() as u64).rev() {
        let NonNeg::Pos(v) = &mu_alpha[n as usize] else {
            continue;
        };
        let ok_lo = lower
            .as_ref()
            .map_or(true, |lo| pv_cmp_scaled(lo, &one(), v).is_true());
        let cap = PosValue::ratio(2, 1).pow_rat(&BigRational::new(n.into(), 2.into()), prec);
        let ok_hi = pv_cmp_scaled(v, &one(), &cap).is_true();
        if !(ok_lo && ok_hi) {
            n0 = n + 1;
            break;
        }
    }
    Ok(MuRaw { mu, mu_alpha, n0 })
}

enum MuErr {
    Negative(u64),
    Undecided(u64),
}

fn mu_alpha_values(wu: &WeightSeq, wv: &WeightSeq) -> Result<Vec<NonNeg>, MuErr> {
    let prec = working_prec();
    let (u, v) = (wu.values(), wv.values());
    let mut out = vec![NonNeg::Pos(PosValue::one())];
    let mut prev = u[0].div(&v[0]);
    for n in 1..u.len() {
        let cur = u[n].div(&v[n]);
        let d = if same_value(&cur, &prev) && cur.is_exact() && prev.is_exact() {
            NonNeg::Zero
        } else {
            match cur.sub(&prev, prec) {
                Ok(d) => d,
                Err(NumericError::NegativeDifference) => return Err(MuErr::Negative(n as u64)),
                Err(_) => {
                    if u[n] == u[n - 1] && v[n] == v[n - 1] {
                        NonNeg::Zero
                    } else {
                        return Err(MuErr::Undecided(n as u64));
                    }
                }
            }
        };
        out.push(d);
        prev = cur;
    }
    Ok(out)
}

/// `1/Delta - 1` when positive.
fn mu_lower(s: &ScaleSystem) -> Option<PosValue> {
    let v = s.delta_sup.recip() - one();
    v.is_positive().then(|| PosValue::Exact(v))
}

/// `n^(log2(1/delta)) (1 - delta)`.
pub fn mu_upper(n: u64, delta: &BigRational) -> PosValue {
    let prec = working_prec();
    let inv = PosValue::Exact(delta.recip());
    let one_minus = PosValue::Exact(one() - delta);
    let base = if n <= 1 {
        PosValue::one()
    } else if n.is_power_of_two() {
        inv.pow_rat(&BigRational::from_integer(n.trailing_zeros().into()), prec)
    } else {
        let ln = PosValue::from_int(n.into())
            .expect("positive")
            .log2_value(prec)
            .expect("n > 1");
        inv.pow_pos(&ln, prec).expect("finite")
    };
    base.mul(&one_minus)
}

/// Exact range bounds on `mu` at every index where `mu` is nonzero.
pub fn check_mu_range(
    mu_alpha: &[NonNeg],
    s: &ScaleSystem,
    from: u64,
) -> Result<(), CertFailure> {
    let lower = mu_lower(s);
    for n in from.max(1)..mu_alpha.len() as u64 {
        let NonNeg::Pos(v) = &mu_alpha[n as usize] else {
            continue;
        };
        if let Some(lo) = &lower {
            check(
                pv_cmp_scaled(lo, &one(), v),
                "mu range",
                n,
                CertFailure::MuRangeFailed { n },
            )?;
        }
        let up = mu_upper(n, &s.delta_inf);
        check(
            pv_cmp_scaled(v, &one(), &up),
            "mu range",
            n,
            CertFailure::MuRangeFailed { n },
        )?;
    }
    Ok(())
}

/// Output of [`band_check`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCert {
    /// Constant certified at the bracketed grid points.
    #[serde(rename = "K")]
    pub k: Pow2,
    /// `C / delta^(m+1)` from the bracket chain.
    #[serde(with = "crate::numeric::rat_str")]
    pub k_proof: BigRational,
    pub m: u32,
    pub n1: u64,
    #[serde(with = "crate::numeric::rat_str")]
    pub epsilon: BigRational,
}

/// Grid brackets of `x = v/2^n`: `(hi_x_index, lo_x_index)` with
/// `1/2^lo_x <= x <= 1/2^hi_x`, or a single index when `x` is on the grid.
fn bracket(v: &PosValue, n: u64) -> (i64, i64) {
    let (lo, hi) = v.log2_bounds(working_prec());
    let tf = lo.floor().and_then(|x| x.to_i64()).unwrap_or(i64::MIN / 4);
    let tc = hi.ceil().and_then(|x| x.to_i64()).unwrap_or(i64::MAX / 4);
    let n = n as i64;
    ((n - tc).max(0), n - tf)
}

/// Largest needed ratio at `(i, n)` as a pair `(upper, lower)` test; returns
/// whether both hold with `k`.
fn band_pair(psi: &[PosValue], c: &PosValue, v: &PosValue, n: u64, k: &BigRational) -> Option<Verdict3> {
    let depth = psi.len() as i64 - 1;
    let (up_i, lo_i) = bracket(v, n);
    if lo_i > depth {
        return None;
    }
    let base = &psi[n as usize];
    let (up, down) = if up_i == lo_i {
        (psi[up_i as usize].clone(), psi[lo_i as usize].clone())
    } else {
        (c.mul(&psi[up_i as usize]), psi[lo_i as usize].div(c))
    };
    let a = pv_cmp_scaled(&up, k, base);
    if !a.is_true() {
        return Some(a);
    }
    Some(pv_cmp_scaled(base, k, &down))
}

fn band_need(psi: &[PosValue], c: &PosValue, v: &PosValue, n: u64, cap: u32) -> Option<Result<u32, ReductionError>> {
    let depth = psi.len() as i64 - 1;
    let (up_i, lo_i) = bracket(v, n);
    if lo_i > depth {
        return None;
    }
    let base = &psi[n as usize];
    let (up, down) = if up_i == lo_i {
        (psi[up_i as usize].clone(), psi[lo_i as usize].clone())
    } else {
        (c.mul(&psi[up_i as usize]), psi[lo_i as usize].div(c))
    };
    Some(search(&up, base, cap, n).and_then(|a| Ok(a.max(search(base, &down, cap, n)?))))
}

fn log2_floor_ceil(m: &BigRational) -> u32 {
    // smallest m' with 1 - eps >= 1/2^(m'+1)
    let mut j = 0u32;
    let one_minus = one() - m;
    while one_minus < BigRational::new(BigInt::one(), BigInt::one() << (j + 1)) {
        j += 1;
    }
    j
}

/// Verify `2^(-eps n) <= mu(i) <= 2^(eps n)` (or `1/M <= mu(i)`) for
/// `n0 <= i <= n <= depth`, then certify
/// `psi(1/2^n)/K <= psi(mu(i)/2^n) <= K psi(1/2^n)` at bracketed points.
#[allow(clippy::too_many_arguments)]
pub fn band_check(
    psi: &DyadicFunction,
    mu: &[NonNeg],
    eps: &BigRational,
    n0: u64,
    lower_m: Option<&BigRational>,
    lambda: &BigRational,
    depth: u64,
    cap: u32,
) -> Result<BandCert, ReductionError> {
    if eps.is_negative() || eps >= &one() {
        return Err(ReductionError::BadEpsilon);
    }
    let depth = depth.min(psi.depth()).min(mu.len() as u64 - 1);
    let prec = working_prec();
    // Corollary form: 1/M <= mu(i) gives the lower band once eps n >= log2 M
    let n1 = match lower_m {
        None => n0,
        Some(m) => {
            let lm = PosValue::Exact(m.clone()).log2_approx().max(0.0);
            let e = eps.to_f64().unwrap_or(1.0);
            let need = if e > 0.0 { (lm / e).ceil() as u64 } else { u64::MAX };
            n0.max(need)
        }
    };
    // the binding case of the band is n = i
    for i in n1..=depth {
        let NonNeg::Pos(v) = &mu[i as usize] else {
            continue;
        };
        let en = eps * BigInt::from(i);
        let hi = PosValue::ratio(2, 1).pow_rat(&en, prec);
        let lo = match lower_m {
            Some(m) => PosValue::Exact(m.recip()),
            None => PosValue::ratio(1, 2).pow_rat(&en, prec),
        };
        if !(pv_cmp_scaled(v, &one(), &hi).is_true() && pv_cmp_scaled(&lo, &one(), v).is_true()) {
            return Err(ReductionError::BandHypothesisFailed { i, n: i });
        }
    }
    let psi_t = psi.truncate(depth.max(crate::dyadic_fn::MIN_DEPTH).min(psi.depth()))?;
    let c = ess_incr_witness(&psi_t, cap)?.c;
    let cv = c.as_pos();
    let vals: Vec<PosValue> = (0..=depth).map(|n| psi.pos(n).clone()).collect();
    let rows: Vec<Result<u32, ReductionError>> = (n1..=depth)
        .into_par_iter()
        .map(|i| {
            let NonNeg::Pos(v) = &mu[i as usize] else {
                return Ok(0);
            };
            let mut j = 0u32;
            for n in i..=depth {
                match band_pair(&vals, &cv, v, n, &Pow2(j).value()) {
                    None | Some(Verdict3::CertTrue) => continue,
                    _ => {}
                }
                if let Some(r) = band_need(&vals, &cv, v, n, cap) {
                    j = j.max(r?);
                }
            }
            Ok(j)
        })
        .collect();
    let mut j = 0u32;
    for r in rows {
        j = j.max(r?);
    }
    let m = log2_floor_ceil(eps);
    let cr = c.value();
    let delta = lambda.clone().min(cr.recip());
    let k_proof = &cr / num_traits::pow(delta, m as usize + 1);
    Ok(BandCert {
        k: Pow2(j),
        k_proof,
        m,
        n1,
        epsilon: eps.clone(),
    })
}

/// `nu(n) = 1` below `n1`, `mu(n)` from there on.
pub fn patch_nu(mu: &[NonNeg], n1: u64) -> Vec<NonNeg> {
    mu.iter()
        .enumerate()
        .map(|(n, v)| {
            if (n as u64) < n1 {
                NonNeg::Pos(PosValue::one())
            } else {
                v.clone()
            }
        })
        .collect()
}

/// Prefix constant `K3` over `[0, n1]` and the summed equivalence constant of
/// `sum nu^alpha` against `sum mu^alpha` on the whole grid.
pub fn patch_constants(
    mu_alpha: &[NonNeg],
    nu_alpha: &[NonNeg],
    n1: u64,
    cap: u32,
) -> Result<(Pow2, Pow2), ReductionError> {
    let prec = working_prec();
    let mut sm = NonNeg::Zero;
    let mut sn = NonNeg::Zero;
    let mut k3 = None;
    let mut j = 0u32;
    for n in 0..mu_alpha.len() {
        sm = sm.add(&mu_alpha[n], prec);
        sn = sn.add(&nu_alpha[n], prec);
        let (Some(a), Some(b)) = (sm.pos(), sn.pos()) else {
            return Err(ReductionError::Undecided(n as u64));
        };
        let c = match smallest_two_sided(a, b, cap) {
            BoundSearch::Found(c) => c,
            BoundSearch::Exceeded => return Err(ReductionError::Unbounded { n: n as u64, cap }),
            BoundSearch::Undecided => return Err(ReductionError::Undecided(n as u64)),
        };
        j = j.max(c);
        if n as u64 == n1 {
            k3 = Some(c);
        }
    }
    Ok((Pow2(k3.unwrap_or(j)), Pow2(j)))
}

/// `mu`/`nu` certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MuCert {
    #[serde(with = "crate::numeric::rat_str")]
    pub alpha: BigRational,
    pub depth: u64,
    pub mu: Vec<NonNeg>,
    pub nu: Vec<NonNeg>,
    pub n0: u64,
    pub n1: u64,
    /// Band constant for `psi_V` at `nu(i)/2^n`.
    #[serde(rename = "K")]
    pub k: Pow2,
    /// Constant of `psi_U ≈ psi_V sum nu^alpha`.
    #[serde(rename = "C_equiv")]
    pub c_equiv: Pow2,
    #[serde(rename = "L")]
    pub l: Pow2,
    /// Essential-increasing constant of `psi_V`, used by the tail.
    pub c_ess: Pow2,
}

fn psi_values(phi: &DyadicFunction, w: &WeightSeq, depth: u64) -> Result<Vec<PosValue>, ReductionError> {
    let u = w.values();
    (0..=depth)
        .map(|n| match phi.at(n) {
            NonNeg::Pos(p) => Ok(p.mul(&u[n as usize])),
            NonNeg::Zero => Err(DyadicError::ZeroValue(n).into()),
        })
        .collect()
}

/// Upper bound on `sum_{j > depth} j^c 2^(-j alpha)`, `c = log2(1/delta)`.
fn mu_tail(depth: u64, delta: &BigRational, alpha: &BigRational) -> Option<PosValue> {
    let prec = working_prec();
    let d1 = depth + 1;
    let first = mu_upper(d1, delta)
        .div(&PosValue::Exact(one() - delta))
        .mul(&two_pow_neg(&(alpha * BigInt::from(d1))));
    // ratio ((D+2)/(D+1))^c 2^-alpha
    let growth = PosValue::Exact(BigRational::new((d1 + 1).into(), d1.into()));
    let c = PosValue::Exact(delta.recip()).log2_value(prec).ok()?;
    let rho = growth.pow_pos(&c, prec).ok()?.mul(&two_pow_neg(alpha));
    match PosValue::one().sub(&rho, prec) {
        Ok(NonNeg::Pos(gap)) => Some(first.div(&gap)),
        _ => None,
    }
}

struct TailSumSides {
    lhs: Vec<PosValue>,
    rhs: Vec<PosValue>,
}

fn tail_sum_sides(
    nu_alpha: &[NonNeg],
    psi_v: &[PosValue],
    k: Pow2,
    c_ess: Pow2,
    delta: &BigRational,
    alpha: &BigRational,
) -> Result<TailSumSides, CertFailure> {
    let prec = working_prec();
    let depth = psi_v.len() as u64 - 1;
    let tail = mu_tail(depth, delta, alpha).ok_or(CertFailure::TailParams {
        what: "geometric ratio of the `mu` tail is not below 1".into(),
    })?;
    let tail = tail.mul(&PosValue::Exact(one() - delta)).mul(&c_ess.as_pos());
    let kv = k.as_pos();
    // T(n) = sum_{j >= n} nu^alpha(j) 2^(-j alpha) psi_V(j)
    let mut t = vec![NonNeg::Zero; depth as usize + 1];
    let mut acc = NonNeg::Zero;
    for j in (0..=depth as usize).rev() {
        if let NonNeg::Pos(v) = &nu_alpha[j] {
            let term = v.mul(&two_pow_neg(&(alpha * BigInt::from(j)))).mul(&psi_v[j]);
            acc = acc.add(&NonNeg::Pos(term), prec);
        }
        t[j] = acc.clone();
    }
    let mut lhs = Vec::with_capacity(t.len());
    let mut rhs = Vec::with_capacity(t.len());
    let mut prefix = NonNeg::Zero;
    for n in 0..=depth as usize {
        let up = two_pow_neg(&(-alpha * BigInt::from(n)));
        let tail_n = psi_v[n].mul(&tail);
        let body = match &t[n] {
            NonNeg::Zero => tail_n,
            NonNeg::Pos(tv) => tv.add(&tail_n, prec),
        };
        lhs.push(kv.mul(&up).mul(&body));
        prefix = prefix.add(&nu_alpha[n], prec);
        let p = prefix.pos().ok_or(CertFailure::Malformed("nu(0) must be positive".into()))?;
        rhs.push(psi_v[n].mul(p).div(&kv));
    }
    Ok(TailSumSides { lhs, rhs })
}

/// Build and self-check the `mu`/`nu` certificate for `U ⊆ V`.
pub fn certify_mu(
    wu: &WeightSeq,
    wv: &WeightSeq,
    phi: &DyadicFunction,
    s: &ScaleSystem,
    alpha: &BigRational,
    lambda: &BigRational,
    cap: u32,
) -> Result<MuCert, ReductionError> {
    let depth = wu.depth().min(wv.depth()).min(phi.depth());
    let raw = build_mu(wu, wv, s, alpha)?;
    let psi_v = psi_values(phi, wv, depth)?;
    let psi_u = psi_values(phi, wu, depth)?;
    let psi_v_fn = DyadicFunction::from_positive(psi_v.clone(), phi.interp())?;
    // mu^alpha <= 2^(n/2) gives the band with eps = 1/(2 alpha)
    let eps = (BigRational::from_integer(2.into()) * alpha).recip();
    let lower = mu_lower(s).map(|lo| match lo {
        PosValue::Exact(r) => r.recip(),
        _ => unreachable!("rational"),
    });
    let lower_m = lower.map(|m| {
        // (1/Delta - 1)^(1/alpha) >= 1/M with M rounded up to a power of two
        let root = PosValue::Exact(m).pow_rat(&alpha.recip(), working_prec());
        let j = (root.log2_approx().ceil().max(0.0)) as u32 + 1;
        Pow2(j).value()
    });
    let sq_lambda = lambda * &s.delta_inf;
    let band = band_check(
        &psi_v_fn,
        &raw.mu,
        &eps,
        raw.n0,
        lower_m.as_ref(),
        &sq_lambda,
        depth,
        cap,
    )?;
    let nu = patch_nu(&raw.mu, band.n1);
    let nu_alpha = patch_nu(&raw.mu_alpha, band.n1);
    let c_ess = ess_incr_witness(&psi_v_fn, cap)?.c;

    let prec = working_prec();
    let mut j_eq = 0u32;
    let mut prefix = NonNeg::Zero;
    for n in 0..=depth {
        prefix = prefix.add(&nu_alpha[n as usize], prec);
        let p = prefix.pos().expect("nu(0) = 1");
        let b = psi_v[n as usize].mul(p);
        let a = &psi_u[n as usize];
        match smallest_two_sided(a, &b, cap) {
            BoundSearch::Found(c) => j_eq = j_eq.max(c),
            BoundSearch::Exceeded => return Err(ReductionError::Unbounded { n, cap }),
            BoundSearch::Undecided => return Err(ReductionError::Undecided(n)),
        }
    }

    let sides = tail_sum_sides(&nu_alpha, &psi_v, band.k, c_ess, &s.delta_inf, alpha)
        .map_err(ReductionError::Rejected)?;
    let mut j = 0u32;
    for n in 0..=depth as usize {
        if !pv_cmp_scaled(&sides.lhs[n], &Pow2(j).value(), &sides.rhs[n]).is_true() {
            j = j.max(search(&sides.lhs[n], &sides.rhs[n], cap, n as u64)?);
        }
    }
    let mut best = NonNeg::Zero;
    for n in 1..=depth as usize {
        if let NonNeg::Pos(p) = &nu[n - 1] {
            best = match &best {
                NonNeg::Zero => NonNeg::Pos(p.clone()),
                NonNeg::Pos(b) => NonNeg::Pos(pv_max(b, p, prec)),
            };
        }
        if let (NonNeg::Pos(a), NonNeg::Pos(b)) = (&nu[n], &best) {
            if !pv_cmp_scaled(a, &Pow2(j).value(), b).is_true() {
                j = j.max(search(a, b, cap, n as u64)?);
            }
        }
    }
    let cert = MuCert {
        alpha: alpha.clone(),
        depth,
        mu: raw.mu,
        nu,
        n0: raw.n0,
        n1: band.n1,
        k: band.k,
        c_equiv: Pow2(j_eq),
        l: Pow2(j),
        c_ess,
    };
    verify_mu_cert(&cert, wu, wv, phi, s).map_err(ReductionError::Rejected)?;
    Ok(cert)
}

/// Recheck a [`MuCert`] from the regenerated weights and envelope.
pub fn verify_mu_cert(
    cert: &MuCert,
    wu: &WeightSeq,
    wv: &WeightSeq,
    phi: &DyadicFunction,
    s: &ScaleSystem,
) -> Result<(), CertFailure> {
    let depth = cert.depth;
    let len = depth as usize + 1;
    if cert.mu.len() != len
        || cert.nu.len() != len
        || wu.depth() < depth
        || wv.depth() < depth
        || phi.depth() < depth
        || wu.depth() != wv.depth()
    {
        return Err(CertFailure::Malformed("array lengths disagree with depth".into()));
    }
    let prec = working_prec();
    let alpha = &cert.alpha;
    let mu_alpha = mu_alpha_values(wu, wv).map_err(|e| match e {
        MuErr::Negative(n) => CertFailure::MuMismatch { n },
        MuErr::Undecided(n) => CertFailure::Undecided {
            check: "mu".into(),
            n,
        },
    })?;
    for n in 0..len {
        let expect = mu_alpha[n].clone();
        let got = cert.mu[n].pow_rat(alpha, prec);
        if !same_nn(&got, &expect) {
            return Err(CertFailure::MuMismatch { n: n as u64 });
        }
    }
    for n in 0..len {
        let want = if (n as u64) < cert.n1 {
            NonNeg::Pos(PosValue::one())
        } else {
            cert.mu[n].clone()
        };
        if cert.nu[n] != want {
            return Err(CertFailure::NuMismatch { n: n as u64 });
        }
        let cap = PosValue::pow2(BigInt::from(n));
        check(
            nn_le(&cert.nu[n], &one(), &NonNeg::Pos(cap)),
            "nu range",
            n as u64,
            CertFailure::NuOutOfRange { n: n as u64 },
        )?;
    }
    check_mu_range(&mu_alpha[..len], s, cert.n0)?;

    let psi_v = psi_values(phi, wv, depth).map_err(|e| CertFailure::Malformed(e.to_string()))?;
    let psi_u = psi_values(phi, wu, depth).map_err(|e| CertFailure::Malformed(e.to_string()))?;
    let psi_fn = DyadicFunction::from_positive(psi_v.clone(), phi.interp())
        .map_err(|e| CertFailure::Malformed(e.to_string()))?;
    let c = ess_incr_witness(&psi_fn, 64).map_err(|e| CertFailure::TailParams {
        what: e.to_string(),
    })?;
    if c.c > cert.c_ess {
        return Err(CertFailure::TailParams {
            what: format!("essential-increasing constant is {}", c.c),
        });
    }
    let cv = cert.c_ess.as_pos();

    // band: psi_V(nu(i)/2^n) within K of psi_V(1/2^n)
    let kq = cert.k.value();
    let bad: Vec<Result<(), CertFailure>> = (0..=depth)
        .into_par_iter()
        .map(|i| {
            let NonNeg::Pos(v) = &cert.nu[i as usize] else {
                return Ok(());
            };
            for n in i..=depth {
                if let Some(verdict) = band_pair(&psi_v, &cv, v, n, &kq) {
                    check(verdict, "band", n, CertFailure::BandFailed { i, n })?;
                }
            }
            Ok(())
        })
        .collect();
    for b in bad {
        b?;
    }

    // equivalence through psi_U ≈ psi_V sum nu^alpha
    let ce = cert.c_equiv.value();
    let nu_alpha: Vec<NonNeg> = cert.nu.iter().map(|v| v.pow_rat(alpha, prec)).collect();
    let mut prefix = NonNeg::Zero;
    for n in 0..len {
        prefix = prefix.add(&nu_alpha[n], prec);
        let Some(p) = prefix.pos() else {
            return Err(CertFailure::EquivSumFailed { n: n as u64 });
        };
        let b = psi_v[n].mul(p);
        let a = &psi_u[n];
        check(
            pv_cmp_scaled(a, &ce, &b),
            "equiv sum",
            n as u64,
            CertFailure::EquivSumFailed { n: n as u64 },
        )?;
        check(
            pv_cmp_scaled(&b, &ce, a),
            "equiv sum",
            n as u64,
            CertFailure::EquivSumFailed { n: n as u64 },
        )?;
    }

    // tail sum
    let l = cert.l.value();
    let sides = tail_sum_sides(&nu_alpha, &psi_v, cert.k, cert.c_ess, &s.delta_inf, alpha)?;
    for n in 0..len {
        check(
            pv_cmp_scaled(&sides.lhs[n], &l, &sides.rhs[n]),
            "tail sum",
            n as u64,
            CertFailure::TailSumFailed { n: n as u64 },
        )?;
    }

    // growth bound
    let mut best = NonNeg::Zero;
    for n in 1..len {
        if let NonNeg::Pos(p) = &cert.nu[n - 1] {
            best = match &best {
                NonNeg::Zero => NonNeg::Pos(p.clone()),
                NonNeg::Pos(b) => NonNeg::Pos(pv_max(b, p, prec)),
            };
        }
        check(
            nn_le(&cert.nu[n], &l, &best),
            "growth",
            n as u64,
            CertFailure::GrowthFailed { n: n as u64 },
        )?;
    }
    Ok(())
}

/// Zero test used by callers that hold raw `mu` values.
pub fn is_flat(mu: &[NonNeg]) -> bool {
    mu.iter().skip(1).all(NonNeg::is_zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scales::{block_partition, weight_seq};
    use crate::subsets::SubsetSpec;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    fn power_spec(depth: u64, psi: DyadicFunction) -> RelationSpec {
        RelationSpec::new(rat(1, 1), psi, WeightSeq::trivial(depth), 64).unwrap()
    }

    #[test]
    fn kappa_constant_envelope() {
        let r = RelationSpec::power(rat(1, 1), 64).unwrap();
        let cert = solve_kappa_closed(&r, &rat(2, 1), 64, 64).unwrap();
        assert_eq!(cert.kappa[0], PosValue::one());
        for n in 1..=64u64 {
            let k2 = cert.kappa[n as usize].pow_rat(&rat(2, 1), 256);
            assert_eq!(k2.exact_value(), Some(rat(1, 1) / BigRational::from_integer(BigInt::one() << (n + 1))));
            assert!(cert.kappa[n as usize].is_zero_width());
        }
        assert_eq!(cert.l, Pow2(1));
        let mut bad = cert.clone();
        bad.kappa[5] = bad.kappa[5].mul(&PosValue::ratio(2, 1));
        assert_eq!(
            verify_kappa_cert(&bad, &r),
            Err(CertFailure::ReconstructFailed { n: 5 })
        );
        let mut weak = cert.clone();
        weak.l = Pow2(0);
        assert_eq!(
            verify_kappa_cert(&weak, &r),
            Err(CertFailure::TailBoundFailed { n: 0 })
        );
    }

    #[test]
    fn kappa_slow_and_fast_envelopes() {
        let r = power_spec(256, DyadicFunction::inv_t0(256).unwrap());
        let cert = solve_kappa_closed(&r, &rat(2, 1), 256, 64).unwrap();
        assert!(cert.n0 <= 2);
        let fast = power_spec(64, DyadicFunction::id_pow(64, &rat(1, 1)).unwrap());
        assert_eq!(
            solve_kappa_closed(&fast, &rat(2, 1), 64, 64),
            Err(ReductionError::NegativeRadicand(1))
        );
    }

    fn weights(u: &SubsetSpec, depth: u64) -> WeightSeq {
        weight_seq(u, &ScaleSystem::standard(), &mut block_partition(4), depth).unwrap()
    }

    #[test]
    fn mu_for_empty_against_omega() {
        let s = ScaleSystem::standard();
        let wu = weights(&SubsetSpec::empty(), 64);
        let wv = weights(&SubsetSpec::omega(), 64);
        let raw = build_mu(&wu, &wv, &s, &rat(1, 1)).unwrap();
        assert_eq!(raw.mu[0], NonNeg::Pos(PosValue::one()));
        for n in 1..=64u64 {
            let want = if n.is_power_of_two() && n >= 2 {
                NonNeg::Pos(PosValue::ratio((n / 2) as i64, 1))
            } else {
                NonNeg::Zero
            };
            assert_eq!(raw.mu[n as usize], want, "n = {n}");
        }
        check_mu_range(&raw.mu_alpha, &s, 0).unwrap();
        assert_eq!(
            build_mu(&wv, &wu, &s, &rat(1, 1)),
            Err(ReductionError::NegativeDifference(2))
        );
        let same = build_mu(&wv, &wv, &s, &rat(1, 1)).unwrap();
        assert!(is_flat(&same.mu));
    }

    #[test]
    fn patch_prefix_constant() {
        let s = ScaleSystem::standard();
        let wu = weights(&SubsetSpec::empty(), 256);
        let wv = weights(&SubsetSpec::omega(), 256);
        let raw = build_mu(&wu, &wv, &s, &rat(1, 1)).unwrap();
        let nu = patch_nu(&raw.mu, 3);
        assert!(nu[..3].iter().all(|v| *v == NonNeg::Pos(PosValue::one())));
        assert_eq!(nu[4], raw.mu[4]);
        let (k3, total) = patch_constants(&raw.mu_alpha, &nu, 3, 64).unwrap();
        assert!(k3 <= Pow2(2) && total <= Pow2(2));
    }

    #[test]
    fn band_examples() {
        let one = DyadicFunction::constant(64, PosValue::one()).unwrap();
        let mu: Vec<NonNeg> = (0..=64).map(|i| NonNeg::Pos(PosValue::ratio(1 + i % 3, 1))).collect();
        let b = band_check(&one, &mu, &rat(1, 2), 4, None, &rat(1, 1), 64, 64).unwrap();
        assert_eq!(b.k, Pow2(0));
        let s = ScaleSystem::standard();
        let raw = build_mu(
            &weights(&SubsetSpec::empty(), 256),
            &weights(&SubsetSpec::omega(), 256),
            &s,
            &rat(1, 1),
        )
        .unwrap();
        let inv = DyadicFunction::inv_t0(256).unwrap();
        let b = band_check(&inv, &raw.mu, &rat(1, 2), 2, None, &rat(1, 2), 256, 64).unwrap();
        assert!(b.k <= Pow2(3));
        let grow: Vec<NonNeg> = (0..=64).map(|i| NonNeg::Pos(PosValue::pow2(BigInt::from(i)))).collect();
        assert!(matches!(
            band_check(&one, &grow, &rat(1, 2), 0, None, &rat(1, 1), 64, 64),
            Err(ReductionError::BandHypothesisFailed { .. })
        ));
    }

    #[test]
    fn case2_evens_into_omega() {
        let s = ScaleSystem::standard();
        let depth = 256;
        let wu = weights(&SubsetSpec::evens(), depth);
        let wv = weights(&SubsetSpec::omega(), depth);
        let phi = DyadicFunction::constant(depth, PosValue::one()).unwrap();
        let cert = certify_mu(&wu, &wv, &phi, &s, &rat(1, 1), &rat(1, 1), 64).unwrap();
        assert!(cert.l <= Pow2(16));
        let mut forced = cert.clone();
        forced.l = Pow2(0);
        assert!(matches!(
            verify_mu_cert(&forced, &wu, &wv, &phi, &s),
            Err(CertFailure::TailSumFailed { .. })
        ));
        let same = certify_mu(&wv, &wv, &phi, &s, &rat(1, 1), &rat(1, 1), 64).unwrap();
        assert!(is_flat(&same.mu));
    }

    #[test]
    fn bisection_matches_closed_form() {
        let g = DyadicFunction::id_pow(40, &rat(2, 1)).unwrap();
        let f: Vec<PosValue> = (0..=12).map(|n| PosValue::pow2(BigInt::from(-(n as i64)))).collect();
        let sol = solve_kappa_bisect(&f, &g, 64).unwrap();
        assert_eq!(sol.exponents[0], Some(0));
        assert!(sol.c <= Pow2(2));
        let flat = DyadicFunction::constant(16, PosValue::one()).unwrap();
        assert_eq!(
            solve_kappa_bisect(&f, &flat, 64),
            Err(ReductionError::NotMonotone(1))
        );
    }
}
