//! Pair classification, incomparability witnesses, antichains and the
//! iterated-logarithm family.

use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_fn::{
    equiv_witness, square_invariance_check, step_bridge_check, BridgeCert, DyadicError,
    DyadicFunction, EquivCert, Interp,
};
use crate::numeric::{
    pv_cmp_lt, pv_cmp_scaled, working_prec, NonNeg, NumericError, PosValue, Verdict3,
};
use crate::reduction::{certify_mu, MuCert, ReductionError};
use crate::relation::{
    a2_liminf_witness, check_a1, check_r1_r2, A1Cert, A2Witness, R2Report, RelationError,
    RelationSpec,
};
use crate::scales::{
    block_partition, tower_log2, weight_seq, BlockPartition, DeltaSpec, KSpec, ScaleError,
    ScaleSystem, WeightSeq,
};
use crate::subsets::{almost_subset, intersection, SubsetError, SubsetSpec};

/// Labels beyond this use the inequality chain instead of exact fire counts.
pub const EXACT_LABEL_GUARD: u128 = 2048;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot interleave U \\ V and V \\ U for {levels} levels (stopped at level {at})")]
    InterleavingExhausted { levels: usize, at: usize },
    #[error("antichain needs at least 2 branches")]
    TooFewBranches,
    #[error("eta is identically zero")]
    DegenerateEta,
    #[error("eta is not lexicographically below eta'")]
    NotLexLess,
    #[error("bad eta: {0}")]
    BadEta(String),
    #[error("no p <= {0} with Delta^p <= delta")]
    NoP(u32),
    #[error("tower value too large to represent")]
    TowerTooLarge,
    #[error("level {level}: ratio bound fails")]
    WitnessFailed { level: usize },
    #[error("comparison could not be certified: {0}")]
    Undecided(String),
    #[error("no delta = 1 - 2^-j below j = {0} clears the margin")]
    NoDelta(u32),
    #[error(transparent)]
    Subset(#[from] SubsetError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

fn one() -> BigRational {
    BigRational::one()
}

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// Largest `2^-j` with `psi(1/2^(2n)) >= 2^-j psi(1/2^n)` on the grid.
pub fn square_factor(psi: &DyadicFunction, cap: u32) -> Result<BigRational, DyadicError> {
    let mut last = None;
    for j in 0..=cap {
        let lam = BigRational::new(BigInt::one(), BigInt::one() << j);
        match square_invariance_check(psi, &lam, cap) {
            Ok(_) => return Ok(lam),
            Err(e @ DyadicError::HypothesisFailed { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("cap >= 0"))
}

// ---------------------------------------------------------------- witnesses

/// How a level's ratio bound was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessMode {
    /// Fire counts over whole blocks, exact.
    ExactCounts,
    /// `Delta^(u_l - p)` from `a_(u_l) >= 1`; labels too large to count.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBound {
    pub l: usize,
    /// Certified upper bound on `u_U(k_m)/u_V(k_m)`.
    pub ratio: PosValue,
    /// `Delta^(2l)`.
    pub bound: PosValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompWitness {
    pub p: u32,
    #[serde(with = "labels")]
    pub u: Vec<u128>,
    #[serde(with = "labels")]
    pub v: Vec<u128>,
    /// `m_l = a_(u_l + 1) - 1`, when small enough to write down.
    pub m: Vec<Option<BigUint>>,
    pub n: Vec<Option<BigUint>>,
    pub levels: usize,
    pub mode: WitnessMode,
    /// `u_U(k_(m_l)) / u_V(k_(m_l))`.
    pub chain_u: Vec<LevelBound>,
    /// `u_V(k_(n_l)) / u_U(k_(n_l))`.
    pub chain_v: Vec<LevelBound>,
}

/// Labels as decimal strings; node codes exceed 64 bits.
mod labels {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u128], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u128>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| t.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

fn next_in_diff(u: &SubsetSpec, v: &SubsetSpec, from: u128) -> Result<Option<u128>, SubsetError> {
    let mut i = from;
    loop {
        let Some(x) = u.next_member(i) else {
            return Ok(None);
        };
        match v.member(x) {
            Ok(false) => return Ok(Some(x)),
            Ok(true) => i = x + 1,
            Err(SubsetError::OutOfWindow { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
}

fn minimal_p(s: &ScaleSystem) -> Result<u32, EmbedError> {
    let mut pow = s.delta_sup.clone();
    for p in 1..=4096u32 {
        if pow <= s.delta_inf {
            return Ok(p);
        }
        pow *= &s.delta_sup;
    }
    Err(EmbedError::NoP(4096))
}

/// Fires of blocks `l <= last` lying in `U \ V`, i.e. `sum (a_(l+1) - a_l)`.
fn diff_fires(
    u: &SubsetSpec,
    v: &SubsetSpec,
    last: u128,
    p: &BlockPartition,
) -> Result<BigUint, SubsetError> {
    let mut total = BigUint::zero();
    for l in 0..=last {
        if u.member(l)? && !v.member(l)? {
            let (a, b) = p.interval(l as usize);
            total += b - a;
        }
    }
    Ok(total)
}

fn pow_big(base: &BigRational, e: &BigInt) -> PosValue {
    PosValue::Exact(base.clone()).pow_rat(&BigRational::from_integer(e.clone()), working_prec())
}

/// Certified upper bound on `prod_{U\V} delta_m / prod_{V\U} delta_m` given
/// the two fire counts.
fn ratio_from_counts(s: &ScaleSystem, plus: &BigUint, minus: &BigUint) -> PosValue {
    let (p, m) = (BigInt::from(plus.clone()), BigInt::from(minus.clone()));
    match s.constant_delta() {
        Some(d) => pow_big(d, &(p - m)),
        None => pow_big(&s.delta_sup, &p).div(&pow_big(&s.delta_inf, &m)),
    }
}

/// Incomparability witness: interleave `u_l in U \ V`, `v_l in V \ U` with
/// `u_l < v_l < u_(l+1)` and `u_0 >= p + 1`, then certify both ratio chains.
pub fn incomparability_witness(
    u: &SubsetSpec,
    v: &SubsetSpec,
    s: &ScaleSystem,
    levels: usize,
) -> Result<IncompWitness, EmbedError> {
    if u.is_periodic() && v.is_periodic() {
        if almost_subset(u, v)?.holds() || almost_subset(v, u)?.holds() {
            return Err(EmbedError::InterleavingExhausted { levels, at: 0 });
        }
    }
    let p = minimal_p(s)?;
    let mut us = Vec::with_capacity(levels);
    let mut vs = Vec::with_capacity(levels);
    let mut from = p as u128 + 1;
    for l in 0..levels {
        let a = next_in_diff(u, v, from)?.ok_or(EmbedError::InterleavingExhausted { levels, at: l })?;
        let b = next_in_diff(v, u, a + 1)?.ok_or(EmbedError::InterleavingExhausted { levels, at: l })?;
        us.push(a);
        vs.push(b);
        from = b + 1;
    }
    let w = witness_from_labels(u, v, s, p, us, vs)?;
    verify_incomparability(&w)?;
    Ok(w)
}

/// Ratio chains for given labels; no interleaving or membership checks.
pub fn witness_from_labels(
    u: &SubsetSpec,
    v: &SubsetSpec,
    s: &ScaleSystem,
    p: u32,
    us: Vec<u128>,
    vs: Vec<u128>,
) -> Result<IncompWitness, EmbedError> {
    let levels = us.len();
    if vs.len() != levels || us.iter().chain(&vs).any(|&x| x <= p as u128) {
        return Err(EmbedError::WitnessFailed { level: 0 });
    }
    let top = us.iter().chain(&vs).copied().max().unwrap_or(0);
    let delta_sup = PosValue::Exact(s.delta_sup.clone());
    let bound = |l: usize| delta_sup.pow_rat(&BigRational::from_integer((2 * l).into()), working_prec());

    let (mode, chain_u, chain_v, ms, ns) = if top <= EXACT_LABEL_GUARD {
        let part = block_partition(top as usize + 2);
        let end = |x: u128| part.a(x as usize + 1) - 1u32;
        let mut cu = Vec::new();
        let mut cv = Vec::new();
        for l in 0..levels {
            let (a, b) = (us[l], vs[l]);
            let r_u = ratio_from_counts(s, &diff_fires(u, v, a, &part)?, &diff_fires(v, u, a, &part)?);
            let r_v = ratio_from_counts(s, &diff_fires(v, u, b, &part)?, &diff_fires(u, v, b, &part)?);
            cu.push(LevelBound { l, ratio: r_u, bound: bound(l) });
            cv.push(LevelBound { l, ratio: r_v, bound: bound(l) });
        }
        (
            WitnessMode::ExactCounts,
            cu,
            cv,
            us.iter().map(|&x| Some(end(x))).collect(),
            vs.iter().map(|&x| Some(end(x))).collect(),
        )
    } else {
        let chain = |xs: &[u128]| -> Vec<LevelBound> {
            xs.iter()
                .enumerate()
                .map(|(l, &x)| LevelBound {
                    l,
                    ratio: delta_sup.pow_rat(&BigRational::from_integer((x - p as u128).into()), working_prec()),
                    bound: bound(l),
                })
                .collect()
        };
        // the V-chain shifts by one level: v_l >= p + 2 + 2l
        (
            WitnessMode::Chain,
            chain(&us),
            chain(&vs),
            vec![None; levels],
            vec![None; levels],
        )
    };
    Ok(IncompWitness {
        p,
        u: us,
        v: vs,
        m: ms,
        n: ns,
        levels,
        mode,
        chain_u,
        chain_v,
    })
}

/// Every level meets `Delta^(2l)` and each chain strictly decreases.
pub fn verify_incomparability(w: &IncompWitness) -> Result<(), EmbedError> {
    let p = w.p as u128;
    for l in 0..w.levels {
        let ok_order = w.u[l] < w.v[l] && (l + 1 == w.levels || w.v[l] < w.u[l + 1]);
        if !ok_order || w.u[0] < p + 1 {
            return Err(EmbedError::WitnessFailed { level: l });
        }
    }
    for chain in [&w.chain_u, &w.chain_v] {
        for (l, lb) in chain.iter().enumerate() {
            match pv_cmp_scaled(&lb.ratio, &one(), &lb.bound) {
                Verdict3::CertTrue => {}
                Verdict3::CertFalse => return Err(EmbedError::WitnessFailed { level: l }),
                Verdict3::Unknown { .. } => {
                    return Err(EmbedError::Undecided(format!("witness level {l}")))
                }
            }
            if l > 0 && !pv_cmp_lt(&lb.ratio, &chain[l - 1].ratio).is_true() {
                return Err(EmbedError::WitnessFailed { level: l });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- classify

/// Reduction of `U` into `V` for `U ⊆* V`: `U ≈ U ∩ V`, a `mu`/`nu`
/// certificate for `U ∩ V` into `V`, and evidence against the converse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionBundle {
    /// `psi_U ≈ psi_(U ∩ V)`.
    pub to_intersection: EquivCert,
    pub mu: MuCert,
    /// `psi_V/psi_U` along the ends of the `V \ U` blocks below the depth.
    pub converse: Option<A2Witness>,
    pub a1_lower: A1Cert,
    pub a1_upper: A1Cert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PairVerdict {
    AlmostEqual { cert: EquivCert },
    /// `V ⊆* U`: `V` reduces to `U`.
    LeftReduces { bundle: Box<ReductionBundle> },
    /// `U ⊆* V`: `U` reduces to `V`.
    RightReduces { bundle: Box<ReductionBundle> },
    Incomparable {
        forward: Box<IncompWitness>,
        backward: Box<IncompWitness>,
        within_window: bool,
    },
}

impl PairVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            PairVerdict::AlmostEqual { .. } => "almost_equal",
            PairVerdict::LeftReduces { .. } => "left_reduces",
            PairVerdict::RightReduces { .. } => "right_reduces",
            PairVerdict::Incomparable { .. } => "incomparable",
        }
    }
}

/// `phi * u_U` on the grid.
pub fn envelope_of(
    u: &SubsetSpec,
    s: &ScaleSystem,
    phi: &DyadicFunction,
    depth: u64,
) -> Result<(WeightSeq, DyadicFunction), EmbedError> {
    let w = weight_seq(u, s, &mut block_partition(4), depth)?;
    let vals = w.values();
    let psi = DyadicFunction::from_fn(depth, phi.interp(), |n| phi.at(n).mul(&vals[n as usize]))?;
    Ok((w, psi))
}

/// Reduce `U` into `V` when `U ⊆* V`.
pub fn reduction_bundle(
    u: &SubsetSpec,
    v: &SubsetSpec,
    s: &ScaleSystem,
    alpha: &BigRational,
    phi: &DyadicFunction,
    depth: u64,
    cap: u32,
) -> Result<ReductionBundle, EmbedError> {
    let depth = depth.min(phi.depth());
    let uv = intersection(u, v)?;
    let (_, psi_u) = envelope_of(u, s, phi, depth)?;
    let (w_uv, psi_uv) = envelope_of(&uv, s, phi, depth)?;
    let (w_v, psi_v) = envelope_of(v, s, phi, depth)?;
    let to_intersection = equiv_witness(&psi_u, &psi_uv, (0, depth), cap)?;
    let lambda = square_factor(phi, cap)?;
    let mu = certify_mu(&w_uv, &w_v, phi, s, alpha, &lambda, cap)?;

    // ends of V \ U blocks within the depth
    let mut idx = Vec::new();
    let mut fires_v = w_v.fires().iter().peekable();
    let uv_fired: std::collections::HashSet<u64> = w_uv.fired_indices().into_iter().collect();
    let mut current: Option<(usize, u64)> = None;
    while let Some(f) = fires_v.next() {
        if uv_fired.contains(&f.n) {
            continue;
        }
        current = match current {
            Some((b, n)) if b != f.block => {
                idx.push(n);
                Some((f.block, f.n))
            }
            _ => Some((f.block, f.n)),
        };
        if fires_v.peek().is_none() {
            if let Some((_, n)) = current {
                idx.push(n);
            }
        }
    }
    idx.dedup();
    let converse = if idx.is_empty() {
        None
    } else {
        let dsup = PosValue::Exact(s.delta_sup.clone());
        let bounds: Vec<PosValue> = (0..idx.len())
            .map(|l| dsup.pow_rat(&BigRational::from_integer((l + 1).into()), working_prec()))
            .collect();
        Some(a2_liminf_witness(&psi_v, &psi_u, &idx, &bounds)?)
    };
    let a1 = |psi: &DyadicFunction| -> Result<A1Cert, EmbedError> {
        let lam = square_factor(psi, cap)?;
        let r = RelationSpec::new(
            alpha.clone(),
            psi.clone(),
            WeightSeq::trivial(depth),
            cap,
        )?;
        Ok(check_a1(&r, &lam, depth, cap)?)
    };
    Ok(ReductionBundle {
        to_intersection,
        mu,
        converse,
        a1_lower: a1(&psi_u)?,
        a1_upper: a1(&psi_v)?,
    })
}

/// Dispatch on almost-inclusion both ways.
pub fn classify_pair(
    u: &SubsetSpec,
    v: &SubsetSpec,
    s: &ScaleSystem,
    alpha: &BigRational,
    phi: &DyadicFunction,
    depth: u64,
    levels: usize,
    cap: u32,
) -> Result<PairVerdict, EmbedError> {
    let uv = almost_subset(u, v)?.holds();
    let vu = almost_subset(v, u)?.holds();
    let depth = depth.min(phi.depth());
    Ok(match (uv, vu) {
        (true, true) => {
            let (_, a) = envelope_of(u, s, phi, depth)?;
            let (_, b) = envelope_of(v, s, phi, depth)?;
            PairVerdict::AlmostEqual {
                cert: equiv_witness(&a, &b, (0, depth), cap)?,
            }
        }
        (true, false) => PairVerdict::RightReduces {
            bundle: Box::new(reduction_bundle(u, v, s, alpha, phi, depth, cap)?),
        },
        (false, true) => PairVerdict::LeftReduces {
            bundle: Box::new(reduction_bundle(v, u, s, alpha, phi, depth, cap)?),
        },
        (false, false) => PairVerdict::Incomparable {
            forward: Box::new(incomparability_witness(u, v, s, levels)?),
            backward: Box::new(incomparability_witness(v, u, s, levels)?),
            within_window: false,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntichainEntry {
    pub i: usize,
    pub j: usize,
    pub verdict: PairVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntichainReport {
    pub branches: usize,
    pub tree_depth: usize,
    pub levels: usize,
    pub pairs: Vec<AntichainEntry>,
}

/// Pairwise Incomparable verdicts for the branch sets of `codes`, within the
/// window of the tree.
pub fn antichain(
    codes: &[Vec<bool>],
    s: &ScaleSystem,
    tree_depth: usize,
    levels: usize,
) -> Result<AntichainReport, EmbedError> {
    if codes.len() < 2 {
        return Err(EmbedError::TooFewBranches);
    }
    let sets = crate::subsets::branch_family(codes, tree_depth)?;
    let jobs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|i| (i + 1..sets.len()).map(move |j| (i, j)))
        .collect();
    let pairs: Result<Vec<AntichainEntry>, EmbedError> = jobs
        .par_iter()
        .map(|&(i, j)| {
            Ok(AntichainEntry {
                i,
                j,
                verdict: PairVerdict::Incomparable {
                    forward: Box::new(incomparability_witness(&sets[i], &sets[j], s, levels)?),
                    backward: Box::new(incomparability_witness(&sets[j], &sets[i], s, levels)?),
                    within_window: true,
                },
            })
        })
        .collect();
    Ok(AntichainReport {
        branches: codes.len(),
        tree_depth,
        levels,
        pairs: pairs?,
    })
}

// ---------------------------------------------------------------- towers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TowerKind {
    T,
    S,
    P,
    K,
}

impl FromStr for TowerKind {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t" => Ok(TowerKind::T),
            "s" => Ok(TowerKind::S),
            "p" => Ok(TowerKind::P),
            "k" => Ok(TowerKind::K),
            other => Err(EmbedError::BadEta(format!("unknown tower `{other}`"))),
        }
    }
}

/// `p_n` as an exact integer while it fits.
pub fn p_value(n: u32) -> Option<BigUint> {
    let mut v = BigUint::from(2u32);
    for _ in 0..n {
        let e = v.to_u64().filter(|&e| e <= 1 << 24)?;
        v = BigUint::one() << e;
    }
    Some(v)
}

fn log2_pos(v: &PosValue) -> Result<PosValue, EmbedError> {
    v.log2_value(working_prec())
        .map_err(|e| EmbedError::Undecided(e.to_string()))
}

/// `s_n(1/2^big_n)`, flat at 1 once `s_(i)` drops below 2.
pub fn s_at(n: u32, big_n: &BigUint) -> Result<PosValue, EmbedError> {
    if big_n.is_zero() {
        return Ok(PosValue::one());
    }
    let mut s = PosValue::from_int(BigInt::from(big_n.clone())).expect("positive");
    for _ in 0..n {
        s = s_step(&s)?;
    }
    Ok(s)
}

fn s_step(s: &PosValue) -> Result<PosValue, EmbedError> {
    let two = PosValue::ratio(2, 1);
    match pv_cmp_scaled(&two, &one(), s) {
        Verdict3::CertTrue => log2_pos(s),
        Verdict3::CertFalse => Ok(PosValue::one()),
        Verdict3::Unknown { .. } => Err(EmbedError::Undecided("s_n near 2".into())),
    }
}

/// `t_n(1/2^big_n)`.
pub fn t_at(n: u32, big_n: &BigUint) -> Result<PosValue, EmbedError> {
    let prec = working_prec();
    let mut t = PosValue::from_int(BigInt::from(big_n.clone()) + 1).expect("positive");
    for _ in 0..n {
        t = if t == PosValue::one() {
            t
        } else {
            PosValue::one().add(&log2_pos(&t)?, prec)
        };
    }
    Ok(t)
}

/// `t_n(x)`, `s_n(x)` at `x = 1/2^arg`, `p_n`, or `k_n(arg)`.
pub fn tower_eval(kind: TowerKind, index: u32, arg: &BigUint) -> Result<PosValue, EmbedError> {
    match kind {
        TowerKind::T => t_at(index, arg),
        TowerKind::S => s_at(index, arg),
        TowerKind::P => {
            if index == 0 {
                return Ok(PosValue::ratio(2, 1));
            }
            let e = p_value(index - 1).ok_or(EmbedError::TowerTooLarge)?;
            Ok(PosValue::pow2(BigInt::from(e)))
        }
        TowerKind::K => {
            let m = arg.to_u64().ok_or(EmbedError::TowerTooLarge)?;
            let e = tower_log2(index, m).ok_or(EmbedError::TowerTooLarge)?;
            Ok(PosValue::pow2(BigInt::from(e)))
        }
    }
}

// ---------------------------------------------------------------- eta

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaSpec {
    pub eta: Vec<BigRational>,
    pub j0: Option<usize>,
}

impl EtaSpec {
    pub fn new(eta: Vec<BigRational>) -> Result<Self, EmbedError> {
        if let Some(x) = eta.iter().find(|x| x.is_negative() || **x >= one()) {
            return Err(EmbedError::BadEta(format!("entry {x} outside [0, 1)")));
        }
        let j0 = eta.iter().position(|x| !x.is_zero());
        Ok(EtaSpec { eta, j0 })
    }

    pub fn get(&self, j: usize) -> BigRational {
        self.eta.get(j).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Lexicographic order after padding with zeros.
    pub fn lex_less(&self, other: &EtaSpec) -> bool {
        let len = self.eta.len().max(other.eta.len());
        for j in 0..len {
            let (a, b) = (self.get(j), other.get(j));
            if a != b {
                return a < b;
            }
        }
        false
    }
}

impl FromStr for EtaSpec {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let eta = s
            .split(',')
            .map(|t| {
                BigRational::from_str(t.trim()).map_err(|_| EmbedError::BadEta(format!("`{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        EtaSpec::new(eta)
    }
}

/// `l'_eta(1/2^(k_(j0)(m)))`, with `s_(j0)` at that point equal to `2^(m+1)`.
fn l_prime_at_scale(eta: &EtaSpec, j0: usize, m: u64) -> Result<PosValue, EmbedError> {
    let prec = working_prec();
    let mut s = PosValue::pow2(BigInt::from(m + 1));
    let mut acc = PosValue::one();
    for j in j0..eta.eta.len() {
        if j > j0 {
            s = s_step(&s)?;
        }
        let e = eta.get(j);
        if !e.is_zero() {
            acc = acc.mul(&s.pow_rat(&e, prec));
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaReport {
    pub j0: usize,
    pub deltas: Vec<PosValue>,
    #[serde(with = "crate::numeric::rat_str")]
    pub delta_inf: BigRational,
    #[serde(with = "crate::numeric::rat_str")]
    pub delta_sup: BigRational,
    /// `(1/2)^(eta_(j0))`.
    pub limit: PosValue,
    /// `|log2 delta_m - log2 limit|`, approximate.
    pub distance: Vec<f64>,
    pub converging: bool,
}

/// `k_m = k_(j0)(m)` and `delta_m = l'(1/2^(k_(m-1)))/l'(1/2^(k_m))`.
pub fn eta_scales(eta: &EtaSpec, m_max: usize) -> Result<(ScaleSystem, EtaReport), EmbedError> {
    let j0 = eta.j0.ok_or(EmbedError::DegenerateEta)?;
    let prec = working_prec();
    let mut ls = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max as u64 {
        ls.push(l_prime_at_scale(eta, j0, m)?);
    }
    let mut deltas = vec![ls[0].recip()];
    for m in 1..=m_max {
        deltas.push(ls[m - 1].div(&ls[m]));
    }
    let lo_hi = |v: &PosValue| -> Result<(BigRational, BigRational), EmbedError> {
        let (a, b) = v
            .value_bounds(prec)
            .ok_or_else(|| EmbedError::Undecided("delta bounds".into()))?;
        Ok((
            a.to_rational().expect("finite"),
            b.to_rational().expect("finite"),
        ))
    };
    let mut inf: Option<BigRational> = None;
    let mut sup: Option<BigRational> = None;
    for d in &deltas {
        let (a, b) = lo_hi(d)?;
        inf = Some(inf.map_or(a.clone(), |x| x.min(a)));
        sup = Some(sup.map_or(b.clone(), |x| x.max(b)));
    }
    let (inf, sup) = (inf.expect("nonempty"), sup.expect("nonempty"));
    if !(inf.is_positive() && inf <= sup && sup < one()) {
        return Err(ScaleError::BadDeltaBounds.into());
    }
    let limit = PosValue::ratio(1, 2).pow_rat(&eta.get(j0), prec);
    let ll = limit.log2_approx();
    let distance: Vec<f64> = deltas.iter().map(|d| (d.log2_approx() - ll).abs()).collect();
    let converging = distance.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let s = ScaleSystem {
        k: KSpec::Tower(j0 as u32),
        delta: DeltaSpec::Values(deltas.clone()),
        delta_inf: inf.clone(),
        delta_sup: sup.clone(),
    };
    Ok((
        s,
        EtaReport {
            j0,
            deltas,
            delta_inf: inf,
            delta_sup: sup,
            limit,
            distance,
            converging,
        },
    ))
}

/// `1/l_eta(1/2^n)` with `t_i` factors.
pub fn inv_l_eta(eta: &EtaSpec, depth: u64) -> Result<DyadicFunction, EmbedError> {
    let prec = working_prec();
    let mut vals = Vec::with_capacity(depth as usize + 1);
    for n in 0..=depth {
        let big = BigUint::from(n);
        let mut t = PosValue::from_int(BigInt::from(n + 1)).expect("positive");
        let mut acc = PosValue::one();
        for j in 0..eta.eta.len() {
            if j > 0 {
                t = if t == PosValue::one() {
                    t
                } else {
                    PosValue::one().add(&log2_pos(&t)?, prec)
                };
            }
            let e = eta.get(j);
            if !e.is_zero() {
                acc = acc.mul(&t.pow_rat(&e, prec));
            }
        }
        let _ = big;
        vals.push(acc.recip());
    }
    Ok(DyadicFunction::from_positive(vals, Interp::Affine)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub j0: usize,
    #[serde(with = "crate::numeric::rat_str")]
    pub delta: BigRational,
    /// `eta'(j0) - eta(j0) - log2(1/delta)`, approximate.
    pub margin: f64,
    pub relation: RelationSpec,
    pub r2: R2Report,
    pub a1: A1Cert,
    /// Fire points where `u_omega(k_n) = delta^(n+1) = 1/s_(j0)^(log2 1/delta)` was checked.
    pub identity_checked: Vec<u64>,
}

/// First `delta = 1 - 2^-j` with `delta > 2^(eta(j0) - eta'(j0)) + 2^-10`.
pub fn pick_sandwich_delta(gap: &BigRational) -> Result<BigRational, EmbedError> {
    let prec = working_prec();
    let target = PosValue::ratio(1, 2).pow_rat(gap, prec);
    let margin = PosValue::Exact(rat(1, 1024));
    let need = target.add(&margin, prec);
    for j in 1..=64u32 {
        let d = one() - BigRational::new(BigInt::one(), BigInt::one() << j);
        match pv_cmp_lt(&need, &PosValue::Exact(d.clone())) {
            Verdict3::CertTrue => return Ok(d),
            _ => continue,
        }
    }
    Err(EmbedError::NoDelta(64))
}

/// `f_U = x^alpha phi_U / l_eta` between `eta` and `eta'`, with (R1)/(R2) and
/// (A1) checked.
pub fn sandwich_build(
    eta: &EtaSpec,
    eta2: &EtaSpec,
    u: &SubsetSpec,
    alpha: &BigRational,
    depth: u64,
    cap: u32,
) -> Result<SandwichReport, EmbedError> {
    if !eta.lex_less(eta2) {
        return Err(EmbedError::NotLexLess);
    }
    let len = eta.eta.len().max(eta2.eta.len());
    let j0 = (0..len).find(|&j| eta.get(j) != eta2.get(j)).expect("lex less");
    let gap = eta2.get(j0) - eta.get(j0);
    let delta = pick_sandwich_delta(&gap)?;
    let s = ScaleSystem {
        k: KSpec::Tower(j0 as u32),
        delta: DeltaSpec::Const(delta.clone()),
        delta_inf: delta.clone(),
        delta_sup: delta.clone(),
    };
    let w = weight_seq(u, &s, &mut block_partition(4), depth)?;
    let env = inv_l_eta(eta, depth)?;
    let r = RelationSpec::new(alpha.clone(), env, w, cap)?;
    let r2 = check_r1_r2(&r, depth, cap)?;
    let lam = square_factor(&r.psi()?, cap)?;
    let a1 = check_a1(&r, &lam, depth, cap)?;

    // u_omega(k_n) = delta^(n+1) = 1/s_(j0)(x_n)^(log2 1/delta)
    let prec = working_prec();
    let wo = weight_seq(&SubsetSpec::omega(), &s, &mut block_partition(4), depth)?;
    let c = PosValue::Exact(delta.recip())
        .log2_value(prec)
        .map_err(|e: NumericError| EmbedError::Undecided(e.to_string()))?;
    let mut checked = Vec::new();
    for (n, k) in s.ks_upto(depth)? {
        let lhs = wo.at(k);
        let want = PosValue::Exact(delta.clone()).pow_rat(&BigRational::from_integer((n + 1).into()), prec);
        let sj = s_at(j0 as u32, &BigUint::from(k))?;
        let rhs = sj
            .pow_pos(&c, prec)
            .map_err(|e| EmbedError::Undecided(e.to_string()))?
            .recip();
        if lhs != want || !rhs.overlaps(&want, prec) {
            return Err(EmbedError::WitnessFailed { level: n });
        }
        checked.push(k);
    }
    let margin = gap.to_f64().unwrap_or(0.0) - c.log2_approx().exp2();
    Ok(SandwichReport {
        j0,
        delta,
        margin,
        relation: r,
        r2,
        a1,
        identity_checked: checked,
    })
}

// ---------------------------------------------------------------- psi_omega

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRatio {
    pub m: usize,
    pub start: u64,
    /// `(1/delta_(m+1) - 1)/k_m`.
    pub bound: PosValue,
    /// Largest observed `(psi(n) - psi(n+1))/psi(n+1)` on the segment.
    pub observed: Option<PosValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothOmega {
    pub psi: DyadicFunction,
    pub segments: Vec<SegmentRatio>,
    pub bridge: Option<BridgeCert>,
    pub direct: EquivCert,
}

/// Piecewise-affine-in-`n` interpolant of `u_omega` through its fire points.
pub fn smooth_omega_envelope(
    s: &ScaleSystem,
    depth: u64,
    cap: u32,
) -> Result<SmoothOmega, EmbedError> {
    let prec = working_prec();
    let w = weight_seq(&SubsetSpec::omega(), s, &mut block_partition(4), depth)?;
    let ks = s.ks_upto(depth)?;
    // knots (n, F(n)): (0, 1), (k_0, u(k_0)), ..., plus the first knot past depth
    let mut knots: Vec<(BigUint, PosValue)> = vec![(BigUint::zero(), PosValue::one())];
    let mut cur = PosValue::one();
    let m_next = ks.len();
    for m in 0..=m_next {
        cur = cur.mul(&s.delta(m)?);
        knots.push((s.k(m)?, cur.clone()));
    }
    let mut vals = Vec::with_capacity(depth as usize + 1);
    let mut seg = 0usize;
    for n in 0..=depth {
        let nb = BigUint::from(n);
        while knots[seg + 1].0 <= nb && seg + 2 < knots.len() {
            seg += 1;
        }
        let (a, fa) = &knots[seg];
        let (b, fb) = &knots[seg + 1];
        if &nb == a {
            vals.push(fa.clone());
            continue;
        }
        let t = BigRational::new(BigInt::from(&nb - a), BigInt::from(b - a));
        let left = fa.mul(&PosValue::Exact(one() - &t));
        let right = fb.mul(&PosValue::Exact(t));
        vals.push(left.add(&right, prec));
    }
    let psi = DyadicFunction::from_positive(vals.clone(), Interp::Affine)?;

    let mut segments = Vec::new();
    for (i, &(m, k)) in ks.iter().enumerate() {
        let end = ks.get(i + 1).map_or(depth, |x| x.1.min(depth + 1) - 1).min(depth.saturating_sub(1));
        let d_next = s.delta(m + 1)?;
        let bound = match d_next.recip().sub(&PosValue::one(), prec) {
            Ok(NonNeg::Pos(x)) => x.div(&PosValue::from_int(BigInt::from(k)).expect("positive")),
            _ => return Err(EmbedError::Undecided("1/delta - 1".into())),
        };
        let mut observed: Option<PosValue> = None;
        for n in k..=end {
            if n + 1 > depth {
                break;
            }
            let r = match vals[n as usize].sub(&vals[n as usize + 1], prec) {
                Ok(NonNeg::Pos(d)) => d.div(&vals[n as usize + 1]),
                Ok(NonNeg::Zero) => continue,
                Err(e) => return Err(EmbedError::Undecided(e.to_string())),
            };
            if !pv_cmp_scaled(&r, &one(), &bound).is_true() {
                return Err(EmbedError::WitnessFailed { level: m });
            }
            observed = Some(match observed {
                None => r,
                Some(o) => crate::numeric::pv_max(&o, &r, prec),
            });
        }
        segments.push(SegmentRatio {
            m,
            start: k,
            bound,
            observed,
        });
    }
    let phi = DyadicFunction::from_weight(&w)?;
    let direct = equiv_witness(&phi, &psi, (0, depth), cap)?;
    let mut xseq = vec![0u64];
    xseq.extend(ks.iter().map(|&(_, k)| k));
    let bridge = if xseq.len() >= 2 {
        Some(step_bridge_check(&phi, &psi, &xseq, &s.delta_inf, &one(), cap)?)
    } else {
        None
    };
    Ok(SmoothOmega {
        psi,
        segments,
        bridge,
        direct,
    })
}
