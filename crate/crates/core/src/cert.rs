//! Certificate files: builders, the independent checker and report rows.
//!
//! A file holds the inputs it was built from and a body. Both are hashed
//! (SHA-256 of their compact JSON). The checker rebuilds every derived
//! quantity from the inputs and re-verifies the body; it never calls the
//! builders. Declared power-of-two constants must be minimal: halving any one
//! of them has to break verification.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dyadic_fn::{equiv_witness, DyadicError, DyadicFunction, EquivCert};
use crate::embedding::{
    envelope_of, incomparability_witness, square_factor, verify_incomparability,
    witness_from_labels, EmbedError, IncompWitness,
};
use crate::numeric::{pv_cmp_lt, pv_cmp_scaled, rat_str, working_prec, Pow2, PosValue, Verdict3};
use crate::reduction::{
    certify_mu, solve_kappa_closed, verify_kappa_cert, verify_mu_cert, CertFailure, KappaCert,
    MuCert, ReductionError,
};
use crate::relation::{RelationError, RelationSpec};
use crate::scales::{block_partition, weight_seq, DeltaSpec, KSpec, ScaleError, ScaleSystem, WeightSeq};
use crate::subsets::{almost_subset, intersection, SubsetError, SubsetSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// File could not be read as a certificate at all.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("schema error: not a certificate file: {0}")]
    Json(String),
    #[error("schema error: version {found}, expected {SCHEMA_VERSION}")]
    Version { found: u32 },
    #[error("schema error: inputs do not match certificate kind `{0}`")]
    KindMismatch(String),
}

/// Why a build or check did not pass.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("{0}")]
    Fail(String),
    #[error("undecided: {0}")]
    Unknown(String),
    #[error("bad input: {0}")]
    Input(String),
}

impl Rejection {
    fn fail(s: impl Into<String>) -> Self {
        Rejection::Fail(s.into())
    }
}

impl From<CertFailure> for Rejection {
    fn from(c: CertFailure) -> Self {
        if c.is_unknown() {
            Rejection::Unknown(c.name())
        } else {
            Rejection::Fail(c.name())
        }
    }
}

impl From<ReductionError> for Rejection {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Rejected(c) => c.into(),
            ReductionError::Undecided(_) => Rejection::Unknown(format!("{e:?}")),
            ReductionError::Dyadic(DyadicError::Undecided(_)) => Rejection::Unknown(e.to_string()),
            other => Rejection::Fail(format!("{other:?}")),
        }
    }
}

impl From<EmbedError> for Rejection {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Undecided(_) => Rejection::Unknown(e.to_string()),
            EmbedError::Reduction(r) => r.into(),
            EmbedError::Subset(_) | EmbedError::Scale(_) | EmbedError::BadEta(_) => {
                Rejection::Input(e.to_string())
            }
            other => Rejection::Fail(format!("{other:?}")),
        }
    }
}

macro_rules! input_err {
    ($($t:ty),*) => {$(
        impl From<$t> for Rejection {
            fn from(e: $t) -> Self {
                Rejection::Input(e.to_string())
            }
        }
    )*};
}
input_err!(SubsetError, ScaleError);

impl From<DyadicError> for Rejection {
    fn from(e: DyadicError) -> Self {
        match e {
            DyadicError::Undecided(_) => Rejection::Unknown(e.to_string()),
            DyadicError::UnknownBuiltin(_) | DyadicError::TooShallow(_) => {
                Rejection::Input(e.to_string())
            }
            other => Rejection::Fail(format!("{other:?}")),
        }
    }
}

impl From<RelationError> for Rejection {
    fn from(e: RelationError) -> Self {
        match e {
            RelationError::Dyadic(d) => d.into(),
            RelationError::R2Undecided { .. } | RelationError::A1Undecided { .. } => {
                Rejection::Unknown(e.to_string())
            }
            RelationError::AlphaBelowOne => Rejection::Input(e.to_string()),
            other => Rejection::Fail(format!("{other:?}")),
        }
    }
}

// ---------------------------------------------------------------- inputs

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KappaInputs {
    #[serde(with = "rat_str")]
    pub alpha: BigRational,
    #[serde(with = "rat_str")]
    pub beta: BigRational,
    /// Built-in envelope name, e.g. `const:1`.
    pub phi: String,
    pub depth: u64,
    pub cap: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInputs {
    pub u: String,
    pub v: String,
    pub scale: ScaleSystem,
    #[serde(with = "rat_str")]
    pub alpha: BigRational,
    pub phi: String,
    pub depth: u64,
    pub cap: u32,
    pub levels: usize,
}

impl PairInputs {
    /// `k_m = 2^(m+1)`, `delta = 1/2`, `alpha = 1`, `phi = 1`.
    pub fn standard(u: &str, v: &str, depth: u64) -> Self {
        PairInputs {
            u: u.into(),
            v: v.into(),
            scale: ScaleSystem::standard(),
            alpha: BigRational::one(),
            phi: "const:1".into(),
            depth,
            cap: 64,
            levels: 8,
        }
    }

    fn sets(&self) -> Result<(SubsetSpec, SubsetSpec), Rejection> {
        Ok((SubsetSpec::from_str(&self.u)?, SubsetSpec::from_str(&self.v)?))
    }

    fn phi(&self) -> Result<DyadicFunction, Rejection> {
        Ok(DyadicFunction::builtin(&self.phi, self.depth)?)
    }

    fn weights(&self, set: &SubsetSpec) -> Result<WeightSeq, Rejection> {
        Ok(weight_seq(set, &self.scale, &mut block_partition(4), self.depth)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inputs {
    Kappa(KappaInputs),
    Pair(PairInputs),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    Kappa {
        cert: KappaCert,
    },
    /// `U ⊆* V`: `psi_U ≈ psi_(U ∩ V)` and a `mu`/`nu` certificate for
    /// `U ∩ V` into `V`.
    Reduce {
        u_used: String,
        to_intersection: EquivCert,
        mu: MuCert,
    },
    Equal {
        cert: EquivCert,
    },
    Incomparable {
        forward: IncompWitness,
        backward: IncompWitness,
    },
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Kappa { .. } => "kappa",
            Body::Reduce { .. } => "reduce",
            Body::Equal { .. } => "equal",
            Body::Incomparable { .. } => "incomparable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertFile {
    pub schema_version: u32,
    pub inputs: Inputs,
    pub input_sha256: String,
    pub body: Body,
    pub body_sha256: String,
}

pub fn sha256_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

impl CertFile {
    pub fn new(inputs: Inputs, body: Body) -> Self {
        CertFile {
            schema_version: SCHEMA_VERSION,
            input_sha256: sha256_json(&inputs),
            body_sha256: sha256_json(&body),
            inputs,
            body,
        }
    }

    /// Recompute both hashes after an edit.
    pub fn rehash(&mut self) {
        self.input_sha256 = sha256_json(&self.inputs);
        self.body_sha256 = sha256_json(&self.body);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        version(text)?;
        let f: CertFile = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        match (&f.inputs, &f.body) {
            (Inputs::Kappa(_), Body::Kappa { .. }) => Ok(f),
            (Inputs::Pair(_), Body::Reduce { .. } | Body::Equal { .. } | Body::Incomparable { .. }) => Ok(f),
            (_, b) => Err(SchemaError::KindMismatch(b.kind().into())),
        }
    }
}

fn version(text: &str) -> Result<(), SchemaError> {
    #[derive(Deserialize)]
    struct Header {
        schema_version: Option<u64>,
    }
    let h: Header = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
    let found = h
        .schema_version
        .ok_or_else(|| SchemaError::Json("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(SchemaError::Version { found: found as u32 });
    }
    Ok(())
}

/// Hashes of the file as written, before any value is interpreted.
pub fn check_integrity(text: &str) -> Result<Result<(), Rejection>, SchemaError> {
    #[derive(Deserialize)]
    struct Raw {
        inputs: serde_json::Value,
        input_sha256: String,
        body: serde_json::Value,
        body_sha256: String,
    }
    version(text)?;
    let raw: Raw = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
    Ok(if sha256_json(&raw.inputs) != raw.input_sha256 {
        Err(Rejection::fail("InputHashMismatch"))
    } else if sha256_json(&raw.body) != raw.body_sha256 {
        Err(Rejection::fail("BodyHashMismatch"))
    } else {
        Ok(())
    })
}

// ---------------------------------------------------------------- builders

/// Halve each constant in turn while `verify` still passes.
fn tighten<T: Clone>(
    cert: &mut T,
    fields: &[fn(&mut T) -> &mut Pow2],
    verify: impl Fn(&T) -> Result<(), CertFailure>,
) {
    loop {
        let mut changed = false;
        for field in fields {
            let e = field(cert).0;
            if e == 0 {
                continue;
            }
            // binary search the smallest passing exponent for this field
            let (mut lo, mut hi) = (0u32, e);
            while lo < hi {
                let mid = (lo + hi) / 2;
                let mut trial = cert.clone();
                field(&mut trial).0 = mid;
                if verify(&trial).is_ok() {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            if hi < e {
                field(cert).0 = hi;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

/// Each constant is minimal: halving it makes `verify` fail.
fn check_minimal<T: Clone>(
    cert: &T,
    fields: &[(&str, fn(&mut T) -> &mut Pow2)],
    verify: impl Fn(&T) -> Result<(), CertFailure>,
) -> Result<(), Rejection> {
    for (name, field) in fields {
        let mut trial = cert.clone();
        let c = field(&mut trial);
        if c.0 == 0 {
            continue;
        }
        c.0 -= 1;
        if verify(&trial).is_ok() {
            return Err(Rejection::fail(format!("ConstantNotMinimal({name})")));
        }
    }
    Ok(())
}

fn kappa_fields() -> Vec<(&'static str, fn(&mut KappaCert) -> &mut Pow2)> {
    vec![("L", |c| &mut c.l), ("c_ess", |c| &mut c.tail_params.c_ess)]
}

fn mu_fields() -> Vec<(&'static str, fn(&mut MuCert) -> &mut Pow2)> {
    vec![
        ("K", |c| &mut c.k),
        ("C_equiv", |c| &mut c.c_equiv),
        ("L", |c| &mut c.l),
        ("c_ess", |c| &mut c.c_ess),
    ]
}

fn kappa_relation(inp: &KappaInputs) -> Result<RelationSpec, Rejection> {
    let env = DyadicFunction::builtin(&inp.phi, inp.depth)?;
    Ok(RelationSpec::new(
        inp.alpha.clone(),
        env,
        WeightSeq::trivial(inp.depth),
        inp.cap,
    )?)
}

pub fn certify_kappa(inp: &KappaInputs) -> Result<CertFile, Rejection> {
    let r = kappa_relation(inp)?;
    let mut cert = solve_kappa_closed(&r, &inp.beta, inp.depth, inp.cap)?;
    let fields: Vec<_> = kappa_fields().into_iter().map(|f| f.1).collect();
    tighten(&mut cert, &fields, |c| verify_kappa_cert(c, &r));
    verify_kappa_cert(&cert, &r)?;
    Ok(CertFile::new(Inputs::Kappa(inp.clone()), Body::Kappa { cert }))
}

/// Reduction of `U` into `V`. When `U` is not almost contained in `V` the
/// `mu`/`nu` construction runs on `U` itself and reports where it breaks.
pub fn certify_reduce(inp: &PairInputs) -> Result<CertFile, Rejection> {
    let (u, v) = inp.sets()?;
    inp.scale.validate(64)?;
    let phi = inp.phi()?;
    let used = if almost_subset(&u, &v)?.holds() {
        intersection(&u, &v)?
    } else {
        u.clone()
    };
    let wu = inp.weights(&used)?;
    let wv = inp.weights(&v)?;
    let lambda = square_factor(&phi, inp.cap)?;
    let mut mu = certify_mu(&wu, &wv, &phi, &inp.scale, &inp.alpha, &lambda, inp.cap)?;
    if used == u && !almost_subset(&u, &v)?.holds() {
        return Err(Rejection::fail("NotAlmostIncluded"));
    }
    let fields: Vec<_> = mu_fields().into_iter().map(|f| f.1).collect();
    tighten(&mut mu, &fields, |c| verify_mu_cert(c, &wu, &wv, &phi, &inp.scale));
    verify_mu_cert(&mu, &wu, &wv, &phi, &inp.scale)?;
    let (_, psi_u) = envelope_of(&u, &inp.scale, &phi, inp.depth)?;
    let (_, psi_used) = envelope_of(&used, &inp.scale, &phi, inp.depth)?;
    let to_intersection = equiv_witness(&psi_u, &psi_used, (0, inp.depth), inp.cap)?;
    Ok(CertFile::new(
        Inputs::Pair(inp.clone()),
        Body::Reduce {
            u_used: used.to_string(),
            to_intersection,
            mu,
        },
    ))
}

pub fn certify_equal(inp: &PairInputs) -> Result<CertFile, Rejection> {
    let (u, v) = inp.sets()?;
    if !(almost_subset(&u, &v)?.holds() && almost_subset(&v, &u)?.holds()) {
        return Err(Rejection::fail("NotAlmostEqual"));
    }
    let phi = inp.phi()?;
    let (_, a) = envelope_of(&u, &inp.scale, &phi, inp.depth)?;
    let (_, b) = envelope_of(&v, &inp.scale, &phi, inp.depth)?;
    let cert = equiv_witness(&a, &b, (0, inp.depth), inp.cap)?;
    Ok(CertFile::new(Inputs::Pair(inp.clone()), Body::Equal { cert }))
}

pub fn certify_incomparable(inp: &PairInputs) -> Result<CertFile, Rejection> {
    let (u, v) = inp.sets()?;
    if u.is_periodic() && v.is_periodic() {
        if almost_subset(&u, &v)?.holds() {
            return Err(Rejection::fail("Comparable(U ⊆* V)"));
        }
        if almost_subset(&v, &u)?.holds() {
            return Err(Rejection::fail("Comparable(V ⊆* U)"));
        }
    }
    let forward = incomparability_witness(&u, &v, &inp.scale, inp.levels)?;
    let backward = incomparability_witness(&v, &u, &inp.scale, inp.levels)?;
    Ok(CertFile::new(
        Inputs::Pair(inp.clone()),
        Body::Incomparable { forward, backward },
    ))
}

// ---------------------------------------------------------------- checker

/// Re-verify a parsed file from its inputs.
pub fn check(file: &CertFile) -> Result<(), Rejection> {
    if sha256_json(&file.inputs) != file.input_sha256 {
        return Err(Rejection::fail("InputHashMismatch"));
    }
    if sha256_json(&file.body) != file.body_sha256 {
        return Err(Rejection::fail("BodyHashMismatch"));
    }
    match (&file.inputs, &file.body) {
        (Inputs::Kappa(inp), Body::Kappa { cert }) => check_kappa(inp, cert),
        (Inputs::Pair(inp), Body::Reduce { u_used, to_intersection, mu }) => {
            check_reduce(inp, u_used, to_intersection, mu)
        }
        (Inputs::Pair(inp), Body::Equal { cert }) => check_equal(inp, cert),
        (Inputs::Pair(inp), Body::Incomparable { forward, backward }) => {
            check_incomparable(inp, forward, backward)
        }
        (_, b) => Err(Rejection::Input(format!("inputs do not fit kind {}", b.kind()))),
    }
}

/// Parse and check; schema problems are separate from verification failures.
pub fn check_text(text: &str) -> Result<Result<(), Rejection>, SchemaError> {
    if let Err(r) = check_integrity(text)? {
        return Ok(Err(r));
    }
    Ok(check(&CertFile::parse(text)?))
}

fn check_kappa(inp: &KappaInputs, cert: &KappaCert) -> Result<(), Rejection> {
    if cert.beta != inp.beta || cert.alpha != inp.alpha || cert.depth != inp.depth {
        return Err(Rejection::fail("ParameterMismatch"));
    }
    // largest 2^-j with 2^(alpha - beta)(1 + 2^-j) < 1
    let lambda = PosValue::ratio(1, 2).pow_rat(&(&inp.beta - &inp.alpha), working_prec());
    let mut want = None;
    for j in 1..=64u32 {
        let e = BigRational::new(BigInt::one(), BigInt::one() << j);
        let lhs = lambda.mul(&PosValue::Exact(BigRational::one() + &e));
        if pv_cmp_lt(&lhs, &PosValue::one()).is_true() {
            want = Some(e);
            break;
        }
    }
    if want.as_ref() != Some(&cert.epsilon) {
        return Err(Rejection::fail("EpsilonMismatch"));
    }
    let r = kappa_relation(inp)?;
    verify_kappa_cert(cert, &r)?;
    check_minimal(cert, &kappa_fields(), |c| verify_kappa_cert(c, &r))
}

fn equiv_holds(
    a: &DyadicFunction,
    b: &DyadicFunction,
    c: &BigRational,
    range: (u64, u64),
) -> Verdict3 {
    let mut out = Verdict3::CertTrue;
    for n in range.0..=range.1 {
        let (x, y) = (a.pos(n), b.pos(n));
        for v in [pv_cmp_scaled(x, c, y), pv_cmp_scaled(y, c, x)] {
            match v {
                Verdict3::CertTrue => {}
                Verdict3::CertFalse => return Verdict3::CertFalse,
                u @ Verdict3::Unknown { .. } => out = u,
            }
        }
    }
    out
}

fn check_equiv(
    a: &DyadicFunction,
    b: &DyadicFunction,
    cert: &EquivCert,
    depth: u64,
    what: &str,
) -> Result<(), Rejection> {
    if cert.range != (0, depth) || cert.direction != "two_sided" {
        return Err(Rejection::fail(format!("{what}: RangeMismatch")));
    }
    match equiv_holds(a, b, &cert.c.value(), cert.range) {
        Verdict3::CertTrue => {}
        Verdict3::CertFalse => return Err(Rejection::fail(format!("{what}: EquivFailed"))),
        Verdict3::Unknown { .. } => return Err(Rejection::Unknown(what.into())),
    }
    if cert.c.0 > 0 {
        let half = Pow2(cert.c.0 - 1).value();
        if equiv_holds(a, b, &half, cert.range).is_true() {
            return Err(Rejection::fail(format!("{what}: ConstantNotMinimal(C)")));
        }
    }
    Ok(())
}

fn check_reduce(
    inp: &PairInputs,
    u_used: &str,
    to_int: &EquivCert,
    mu: &MuCert,
) -> Result<(), Rejection> {
    let (u, v) = inp.sets()?;
    inp.scale.validate(64)?;
    if !almost_subset(&u, &v)?.holds() {
        return Err(Rejection::fail("NotAlmostIncluded"));
    }
    let used = intersection(&u, &v)?;
    if used.to_string() != u_used {
        return Err(Rejection::fail("IntersectionMismatch"));
    }
    if mu.depth != inp.depth || mu.alpha != inp.alpha {
        return Err(Rejection::fail("ParameterMismatch"));
    }
    let phi = inp.phi()?;
    let wu = inp.weights(&used)?;
    let wv = inp.weights(&v)?;
    verify_mu_cert(mu, &wu, &wv, &phi, &inp.scale)?;
    check_minimal(mu, &mu_fields(), |c| verify_mu_cert(c, &wu, &wv, &phi, &inp.scale))?;
    let (_, a) = envelope_of(&u, &inp.scale, &phi, inp.depth)?;
    let (_, b) = envelope_of(&used, &inp.scale, &phi, inp.depth)?;
    check_equiv(&a, &b, to_int, inp.depth, "to_intersection")
}

fn check_equal(inp: &PairInputs, cert: &EquivCert) -> Result<(), Rejection> {
    let (u, v) = inp.sets()?;
    if !(almost_subset(&u, &v)?.holds() && almost_subset(&v, &u)?.holds()) {
        return Err(Rejection::fail("NotAlmostEqual"));
    }
    let phi = inp.phi()?;
    let (_, a) = envelope_of(&u, &inp.scale, &phi, inp.depth)?;
    let (_, b) = envelope_of(&v, &inp.scale, &phi, inp.depth)?;
    check_equiv(&a, &b, cert, inp.depth, "equal")
}

fn check_witness(
    u: &SubsetSpec,
    v: &SubsetSpec,
    s: &ScaleSystem,
    levels: usize,
    w: &IncompWitness,
    what: &str,
) -> Result<(), Rejection> {
    let bad = |r: &str| Rejection::fail(format!("{what}: {r}"));
    if w.levels != levels || w.u.len() != levels || w.v.len() != levels {
        return Err(bad("LevelCount"));
    }
    // p minimal with Delta^p <= delta
    let pw = |p: u32| num_traits::pow::pow(s.delta_sup.clone(), p as usize);
    if w.p == 0 || pw(w.p) > s.delta_inf || (w.p > 1 && pw(w.p - 1) <= s.delta_inf) {
        return Err(bad("PNotMinimal"));
    }
    for l in 0..levels {
        let in_diff = |x: u128, a: &SubsetSpec, b: &SubsetSpec| -> Result<bool, SubsetError> {
            Ok(a.member(x)? && !b.member(x)?)
        };
        if !in_diff(w.u[l], u, v)? || !in_diff(w.v[l], v, u)? {
            return Err(bad(&format!("LabelNotInDifference(l={l})")));
        }
    }
    verify_incomparability(w).map_err(|e| match e {
        EmbedError::Undecided(x) => Rejection::Unknown(x),
        other => bad(&format!("{other:?}")),
    })?;
    let rebuilt = witness_from_labels(u, v, s, w.p, w.u.clone(), w.v.clone())?;
    if &rebuilt != w {
        return Err(bad("RatioMismatch"));
    }
    Ok(())
}

fn check_incomparable(
    inp: &PairInputs,
    forward: &IncompWitness,
    backward: &IncompWitness,
) -> Result<(), Rejection> {
    let (u, v) = inp.sets()?;
    inp.scale.validate(64)?;
    check_witness(&u, &v, &inp.scale, inp.levels, forward, "forward")?;
    check_witness(&v, &u, &inp.scale, inp.levels, backward, "backward")
}

// ---------------------------------------------------------------- reports

/// Header and rows for CSV output, ordered by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn fmt_log(v: &PosValue) -> String {
    format!("{:.9}", v.log2_approx())
}

/// `(n, log2 f_U, log2 f_V, log2 ratio)` from two sample vectors.
fn pair_rows(fu: &[PosValue], fv: &[PosValue]) -> Vec<Vec<String>> {
    fu.iter()
        .zip(fv)
        .enumerate()
        .map(|(n, (a, b))| {
            vec![n.to_string(), fmt_log(a), fmt_log(b), fmt_log(&a.div(b))]
        })
        .collect()
}

const PAIR_HEADER: [&str; 4] = ["n", "log2_f_u", "log2_f_v", "log2_ratio"];

fn f_of(alpha: &BigRational, psi: &DyadicFunction) -> Vec<PosValue> {
    let half = PosValue::ratio(1, 2);
    (0..=psi.depth())
        .map(|n| half.pow_rat(&(alpha * BigInt::from(n)), working_prec()).mul(psi.pos(n)))
        .collect()
}

pub fn report_cert(file: &CertFile) -> Result<Table, Rejection> {
    match (&file.inputs, &file.body) {
        (Inputs::Pair(_), Body::Incomparable { forward, .. }) => {
            let mut rows = Vec::new();
            for (name, chain) in [("u", &forward.chain_u), ("v", &forward.chain_v)] {
                for lb in chain {
                    rows.push(vec![
                        name.to_string(),
                        lb.l.to_string(),
                        fmt_log(&lb.ratio),
                        fmt_log(&lb.bound),
                    ]);
                }
            }
            Ok(Table {
                header: vec!["chain", "l", "log2_ratio", "log2_bound"],
                rows,
            })
        }
        (Inputs::Pair(inp), _) => {
            let (u, v) = inp.sets()?;
            let phi = inp.phi()?;
            let (_, a) = envelope_of(&u, &inp.scale, &phi, inp.depth)?;
            let (_, b) = envelope_of(&v, &inp.scale, &phi, inp.depth)?;
            Ok(Table {
                header: PAIR_HEADER.to_vec(),
                rows: pair_rows(&f_of(&inp.alpha, &a), &f_of(&inp.alpha, &b)),
            })
        }
        (Inputs::Kappa(inp), _) => {
            let r = kappa_relation(inp)?;
            let f = r.f_values()?;
            let half = PosValue::ratio(1, 2);
            let g: Vec<PosValue> = (0..f.len() as u64)
                .map(|n| half.pow_rat(&(&inp.beta * BigInt::from(n)), working_prec()))
                .collect();
            Ok(Table {
                header: PAIR_HEADER.to_vec(),
                rows: pair_rows(&f, &g),
            })
        }
    }
}

// ---------------------------------------------------------------- spec files

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecFile {
    pub schema_version: u32,
    pub set: String,
    pub scale: ScaleSystem,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<String>,
    pub relation: RelationSpec,
    pub content_sha256: String,
}

#[derive(Serialize)]
struct SpecContent<'a> {
    set: &'a str,
    scale: &'a ScaleSystem,
    eta: &'a Option<String>,
    relation: &'a RelationSpec,
}

impl SpecFile {
    pub fn new(
        set: &SubsetSpec,
        scale: ScaleSystem,
        eta: Option<String>,
        relation: RelationSpec,
    ) -> Self {
        let set = set.to_string();
        let content_sha256 = sha256_json(&SpecContent {
            set: &set,
            scale: &scale,
            eta: &eta,
            relation: &relation,
        });
        SpecFile {
            schema_version: SCHEMA_VERSION,
            set,
            scale,
            eta,
            relation,
            content_sha256,
        }
    }

    pub fn hash_ok(&self) -> bool {
        sha256_json(&SpecContent {
            set: &self.set,
            scale: &self.scale,
            eta: &self.eta,
            relation: &self.relation,
        }) == self.content_sha256
    }

    pub fn report(&self) -> Result<Table, Rejection> {
        let psi = self.relation.psi()?;
        let f = f_of(&self.relation.alpha, &psi);
        let half = PosValue::ratio(1, 2);
        let g: Vec<PosValue> = (0..f.len() as u64)
            .map(|n| half.pow_rat(&(&self.relation.alpha * BigInt::from(n)), working_prec()))
            .collect();
        Ok(Table {
            header: PAIR_HEADER.to_vec(),
            rows: pair_rows(&f, &g),
        })
    }
}

/// Scale from a `k` description and `delta` as one rational or a list.
pub fn parse_scale(k: &str, delta: &str) -> Result<ScaleSystem, Rejection> {
    let k = KSpec::from_str(k)?;
    let ds = delta
        .split(',')
        .map(|t| {
            BigRational::from_str(t.trim())
                .map_err(|_| Rejection::Input(format!("bad delta `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ds.iter().any(|d| !d.is_positive()) {
        return Err(Rejection::Input("delta must be positive".into()));
    }
    let inf = ds.iter().min().expect("split is nonempty").clone();
    let sup = ds.iter().max().expect("split is nonempty").clone();
    let s = ScaleSystem {
        k,
        delta: if ds.len() == 1 {
            DeltaSpec::Const(inf.clone())
        } else {
            DeltaSpec::List(ds)
        },
        delta_inf: inf,
        delta_sup: sup,
    };
    s.validate(0)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(u: &str, v: &str) -> PairInputs {
        PairInputs::standard(u, v, 256)
    }

    #[test]
    fn kappa_round_trip() {
        let inp = KappaInputs {
            alpha: BigRational::one(),
            beta: BigRational::from_integer(2.into()),
            phi: "const:1".into(),
            depth: 64,
            cap: 64,
        };
        let f = certify_kappa(&inp).unwrap();
        let text = f.to_json();
        assert_eq!(check_text(&text).unwrap(), Ok(()));
        assert_eq!(certify_kappa(&inp).unwrap().to_json(), text);

        let mut bad = f.clone();
        if let Body::Kappa { cert } = &mut bad.body {
            cert.kappa[5] = cert.kappa[5].mul(&PosValue::ratio(2, 1));
        }
        assert_eq!(check(&bad), Err(Rejection::fail("BodyHashMismatch")));
        bad.rehash();
        assert!(matches!(check(&bad), Err(Rejection::Fail(_))));

        assert!(matches!(
            check_text(&text[..text.len() / 2]),
            Err(SchemaError::Json(_))
        ));
    }

    #[test]
    fn loosened_constant_is_rejected() {
        let mut f = certify_kappa(&KappaInputs {
            alpha: BigRational::one(),
            beta: BigRational::from_integer(2.into()),
            phi: "inv_t:0".into(),
            depth: 32,
            cap: 64,
        })
        .unwrap();
        if let Body::Kappa { cert } = &mut f.body {
            cert.l = Pow2(cert.l.0 + 1);
        }
        f.rehash();
        assert_eq!(check(&f), Err(Rejection::fail("ConstantNotMinimal(L)")));
    }

    #[test]
    fn reduce_and_direction() {
        let f = certify_reduce(&pair("periodic:/10", "periodic:/1")).unwrap();
        assert_eq!(check(&f), Ok(()));
        match certify_reduce(&pair("periodic:/1", "periodic:/10")) {
            Err(Rejection::Fail(r)) => assert!(r.starts_with("NegativeDifference"), "{r}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incomparable_and_equal() {
        let f = certify_incomparable(&pair("periodic:/10", "periodic:/01")).unwrap();
        assert_eq!(check(&f), Ok(()));
        let t = report_cert(&f).unwrap();
        assert_eq!(t.rows.len(), 16);
        let mut bad = f.clone();
        if let Body::Incomparable { forward, .. } = &mut bad.body {
            forward.u[3] += 2;
        }
        bad.rehash();
        assert!(check(&bad).is_err());

        let e = certify_equal(&pair("periodic:/10", "periodic:111111/10")).unwrap();
        assert_eq!(check(&e), Ok(()));
        assert!(certify_equal(&pair("periodic:/10", "periodic:/01")).is_err());
    }

    #[test]
    fn scale_parsing() {
        let s = parse_scale("pow2", "1/2").unwrap();
        assert_eq!(s, ScaleSystem::standard());
        let l = parse_scale("pow2", "1/2,1/3").unwrap();
        assert_eq!(l.delta_inf, BigRational::new(1.into(), 3.into()));
        assert!(parse_scale("pow2", "3/2").is_err());
    }
}
