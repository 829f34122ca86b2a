//! Runs the eight acceptance criteria and prints one line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use pofin_core::cert::{
    certify_incomparable, certify_kappa, certify_reduce, check, Body, CertFile, KappaInputs,
    PairInputs,
};
use pofin_core::embedding::{
    antichain, eta_scales, sandwich_build, s_at, tower_eval, verify_incomparability, LevelBound,
    PairVerdict, TowerKind,
};
use pofin_core::numeric::{
    pv_cmp_scaled, working_prec, BigDyadic, NonNeg, PosValue, Pow2, Verdict3,
};
use pofin_core::relation::{check_r1_r2, RelationSpec};
use pofin_core::scales::{block_partition, check_weight_props, weight_seq, ScaleSystem};
use pofin_core::subsets::SubsetSpec;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pow2_rat(k: i64) -> BigRational {
    if k >= 0 {
        BigRational::from_integer(BigInt::one() << k as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-k) as usize)
    }
}

fn exact(v: &NonNeg) -> Result<BigRational, String> {
    match v {
        NonNeg::Zero => Ok(BigRational::zero()),
        NonNeg::Pos(PosValue::Exact(q)) => Ok(q.clone()),
        other => Err(format!("inexact entry {other:?}")),
    }
}

fn square(v: &PosValue) -> Result<BigRational, String> {
    match v {
        PosValue::Exact(q) => Ok(q * q),
        PosValue::LogIv { lo, hi } => {
            ensure(lo == hi, || format!("width {}", hi.sub(lo)))?;
            let twice = lo.to_rational().ok_or("bad log")? * rat(2, 1);
            ensure(twice.is_integer(), || "square is not a power of two".into())?;
            Ok(pow2_rat(twice.to_integer().to_i64().ok_or("huge")?))
        }
    }
}

fn c1_kappa() -> Outcome {
    let inp = KappaInputs {
        alpha: rat(1, 1),
        beta: rat(2, 1),
        phi: "const:1".into(),
        depth: 64,
        cap: 64,
    };
    let f = certify_kappa(&inp).map_err(|e| format!("{e:?}"))?;
    let Body::Kappa { cert } = &f.body else { unreachable!() };
    let sq = cert.kappa.iter().map(square).collect::<Result<Vec<_>, _>>()?;
    for n in 0..=64usize {
        let s: BigRational = (0..=n).map(|i| &sq[i] / pow2_rat(2 * (n - i) as i64)).sum();
        ensure(s == pow2_rat(-(n as i64)), || format!("reconstruction off at n = {n}"))?;
    }
    Ok("sum (kappa_i/2^(n-i))^2 = 2^-n exactly, n <= 64".into())
}

fn c2_weights() -> Outcome {
    let depth = 1 << 12;
    let mut r = rng(0);
    for case in 0..100 {
        let s = rand_scale(&mut r, depth);
        let u = rand_periodic(&mut r);
        let w = weight_seq(&u, &s, &mut block_partition(4), depth).map_err(|e| e.to_string())?;
        let rep = check_weight_props(&w, &s).map_err(|e| e.to_string())?;
        ensure(rep.pass, || format!("case {case} ({u}): {:?}", rep.failure))?;
        ensure(w.values().iter().all(|v| v.is_exact()), || format!("case {case} inexact"))?;
    }
    Ok("100 systems, depth 4096, (i)-(iii) hold".into())
}

fn c3_reduction() -> Outcome {
    let f = certify_reduce(&PairInputs::standard("periodic:/10", "periodic:/1", 1 << 10))
        .map_err(|e| format!("{e:?}"))?;
    check(&f).map_err(|e| format!("checker: {e:?}"))?;
    let Body::Reduce { mu, .. } = &f.body else { unreachable!() };
    ensure(mu.l <= Pow2(16), || format!("L = {:?}", mu.l))?;
    // delta = 1/2: 1 <= mu(n) <= n/2 wherever mu fires
    let mut fired = 0;
    for (n, v) in mu.mu.iter().enumerate().skip(1) {
        let q = exact(v)?;
        if q.is_zero() {
            continue;
        }
        fired += 1;
        ensure(q >= BigRational::one() && q <= rat(n as i64, 2), || {
            format!("mu range at n = {n}: mu = {q}")
        })?;
    }
    ensure(fired > 0, || "nothing fired".into())?;
    Ok(format!("L = 2^{}, mu range exact at {fired} fired indices", mu.l.0))
}

fn chain_ok(chain: &[LevelBound], levels: usize) -> Result<(), String> {
    ensure(chain.len() == levels, || format!("{} levels", chain.len()))?;
    for b in chain {
        ensure(b.ratio.is_zero_width() && b.bound.is_zero_width(), || {
            format!("level {} not exact", b.l)
        })?;
        let (hi, lo) = (b.ratio.log2_bounds(64).1, b.bound.log2_bounds(64).0);
        ensure(hi <= lo, || format!("level {}: ratio above bound", b.l))?;
    }
    Ok(())
}

fn c4_witnesses() -> Outcome {
    let f = certify_incomparable(&PairInputs::standard("periodic:/10", "periodic:/01", 256))
        .map_err(|e| format!("{e:?}"))?;
    check(&f).map_err(|e| format!("checker: {e:?}"))?;
    let Body::Incomparable { forward, backward } = &f.body else { unreachable!() };
    for w in [forward, backward] {
        chain_ok(&w.chain_u, 8)?;
        chain_ok(&w.chain_v, 8)?;
    }
    Ok("4 chains x 8 levels under Delta^(2l)".into())
}

fn c5_antichain() -> Outcome {
    let mut r = rng(0);
    let codes: Vec<Vec<bool>> = {
        let mut seen = std::collections::BTreeSet::new();
        while seen.len() < 8 {
            seen.insert((0..64).map(|_| r.gen()).collect::<Vec<bool>>());
        }
        seen.into_iter().collect()
    };
    let rep = antichain(&codes, &ScaleSystem::standard(), 64, 8).map_err(|e| e.to_string())?;
    let mut good = 0;
    for e in &rep.pairs {
        if let PairVerdict::Incomparable { forward, backward, .. } = &e.verdict {
            verify_incomparability(forward).map_err(|x| x.to_string())?;
            verify_incomparability(backward).map_err(|x| x.to_string())?;
            good += 1;
        }
    }
    ensure(good == 28 && rep.pairs.len() == 28, || format!("{good}/28"))?;
    Ok("28/28 incomparable".into())
}

fn c6_r2() -> Outcome {
    let mut got = Vec::new();
    for (a, j) in [(1, 0), (2, 1), (3, 2)] {
        let r = RelationSpec::power(rat(a, 1), 16).map_err(|e| e.to_string())?;
        let rep = check_r1_r2(&r, 16, 64).map_err(|e| e.to_string())?;
        ensure(rep.c == Pow2(j), || format!("Id^{a}: C = 2^{}", rep.c.0))?;
        got.push(format!("2^{}", rep.c.0));
    }
    Ok(format!("C = {}", got.join(", ")))
}

fn c7_towers() -> Outcome {
    for n in 0..=3u32 {
        let p = tower_eval(TowerKind::P, n, &BigUint::zero()).map_err(|e| e.to_string())?;
        let (lo, hi) = p.log2_bounds(working_prec());
        ensure(lo == hi && lo.is_integer(), || format!("p_{n} not a power of two"))?;
        let e = BigUint::try_from(lo.floor().ok_or("log")?).map_err(|e| e.to_string())?;
        let s = s_at(n, &e).map_err(|e| e.to_string())?;
        ensure(s == PosValue::one(), || format!("s_{n}(1/p_{n}) = {s:?}"))?;
    }
    let (_, rep) = eta_scales(&"1/2".parse().unwrap(), 20).map_err(|e| e.to_string())?;
    let half = PosValue::log_point(BigDyadic::from_i64(-1).shl(&BigInt::from(-1)));
    for m in 1..=20 {
        ensure(rep.deltas[m] == half, || format!("delta_{m} = {:?}", rep.deltas[m]))?;
    }
    let sw = sandwich_build(
        &"0".parse().unwrap(),
        &"1/2".parse().unwrap(),
        &SubsetSpec::omega(),
        &rat(1, 1),
        1 << 8,
        64,
    )
    .map_err(|e| e.to_string())?;
    ensure(sw.delta == rat(3, 4), || format!("delta = {}", sw.delta))?;
    Ok(format!(
        "s_n(1/p_n) = 1 for n <= 3, delta_m = 2^-1/2, sandwich delta = 3/4 (R2 C = 2^{})",
        sw.r2.c.0
    ))
}

/// Random value of `q` in either representation.
fn encode(q: &BigRational, r: &mut ChaCha8Rng) -> PosValue {
    if r.gen_bool(0.5) {
        PosValue::Exact(q.clone())
    } else {
        PosValue::Exact(q.clone()).to_log_iv(r.gen_range(64..256))
    }
}

fn c8_soundness() -> Outcome {
    let mut r = rng(0);
    let mut decided = 0;
    for i in 0..10_000 {
        let (da, db, dc) = (r.gen_range(1..10_000), r.gen_range(1..10_000), r.gen_range(1..64));
        let a = rand_rat(&mut r, 0.001, 1000.0, da);
        let c = rand_rat(&mut r, 1.0, 8.0, dc);
        // every tenth case sits exactly on the boundary
        let b = if i % 10 == 0 { &a / &c } else { rand_rat(&mut r, 0.001, 1000.0, db) };
        let (pa, pb) = (encode(&a, &mut r), encode(&b, &mut r));
        let truth = a <= &c * &b;
        match pv_cmp_scaled(&pa, &c, &pb) {
            Verdict3::CertTrue => ensure(truth, || format!("wrong CertTrue at {i}"))?,
            Verdict3::CertFalse => ensure(!truth, || format!("wrong CertFalse at {i}"))?,
            Verdict3::Unknown { .. } => continue,
        }
        decided += 1;
    }

    let files: Vec<CertFile> = vec![
        certify_kappa(&KappaInputs {
            alpha: rat(1, 1),
            beta: rat(2, 1),
            phi: "const:1".into(),
            depth: 64,
            cap: 64,
        })
        .map_err(|e| format!("{e:?}"))?,
        certify_reduce(&PairInputs::standard("periodic:/10", "periodic:/1", 128))
            .map_err(|e| format!("{e:?}"))?,
        certify_incomparable(&PairInputs::standard("periodic:/10", "periodic:/01", 64))
            .map_err(|e| format!("{e:?}"))?,
    ];
    let mut targets = Vec::new();
    for (i, f) in files.iter().enumerate() {
        check(f).map_err(|e| format!("builder output {i}: {e:?}"))?;
        let body = serde_json::to_value(&f.body).unwrap();
        let mut paths = Vec::new();
        numbers(&body, &mut Vec::new(), &mut paths);
        targets.extend(paths.into_iter().map(|p| (i, p)));
    }
    let picks: Vec<_> = targets.choose_multiple(&mut r, 100).cloned().collect();
    ensure(picks.len() == 100, || format!("{} targets", picks.len()))?;
    for (i, path) in &picks {
        let mut body = serde_json::to_value(&files[*i].body).unwrap();
        double(&mut body, path);
        let mut f = files[*i].clone();
        f.body = serde_json::from_value(body).map_err(|e| e.to_string())?;
        f.rehash();
        ensure(check(&f).is_err(), || format!("perturbation at {} accepted", path.join(".")))?;
    }
    Ok(format!("0 wrong of 10000 ({decided} decided), 100/100 perturbations rejected"))
}

/// Paths to nonzero numeric entries and `2^j` constants.
fn numbers(v: &Value, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(m) if m.contains_key("exact") => {
            if m["exact"] != "0" {
                out.push(path.clone());
            }
        }
        Value::Object(m) if m.contains_key("log2") => out.push(path.clone()),
        Value::Object(m) => {
            for (k, x) in m {
                path.push(k.clone());
                numbers(x, path, out);
                path.pop();
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                path.push(i.to_string());
                numbers(x, path, out);
                path.pop();
            }
        }
        Value::String(s) if s.starts_with("2^") => out.push(path.clone()),
        _ => {}
    }
}

fn double(root: &mut Value, path: &[String]) {
    let v = path.iter().fold(root, |v, k| match v {
        Value::Array(a) => &mut a[k.parse::<usize>().unwrap()],
        _ => &mut v[k.as_str()],
    });
    match v {
        Value::String(s) => *s = format!("2^{}", s[2..].parse::<i64>().unwrap() + 1),
        Value::Object(m) if m.contains_key("exact") => {
            let q: BigRational = m["exact"].as_str().unwrap().parse().unwrap();
            m["exact"] = Value::String((q * rat(2, 1)).to_string());
        }
        Value::Object(m) => {
            for side in ["lo", "hi"] {
                let d: BigDyadic = m["log2"][side].as_str().unwrap().parse().unwrap();
                m["log2"][side] = Value::String(d.add(&BigDyadic::one()).to_string());
            }
        }
        _ => unreachable!(),
    }
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("kappa exactness", 1, c1_kappa),
        ("weight sequence suite", 30, c2_weights),
        ("reduction pipeline", 10, c3_reduction),
        ("witness chains", 5, c4_witnesses),
        ("antichain", 60, c5_antichain),
        ("(R2) constants", 1, c6_r2),
        ("towers and sandwich", 30, c7_towers),
        ("soundness fuzz", 60, c8_soundness),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(format!("panic: {:?}", p.downcast_ref::<String>())));
        let took = t.elapsed();
        let out = match out {
            Ok(_) if took > Duration::from_secs(*limit) => Err(format!("over {limit} s")),
            o => o,
        };
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!(
            "[{tag}] {}. {name:<22} {:>8.3} s (limit {limit} s)  {detail}",
            i + 1,
            took.as_secs_f64()
        );
        failed += out.is_err() as usize;
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
