mod common;

use common::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use pofin_core::cert::{
    certify_equal, certify_incomparable, certify_kappa, certify_reduce, check, Body, CertFile,
    KappaInputs, PairInputs,
};
use pofin_core::numeric::{BigDyadic, NonNeg, PosValue};
use rand::seq::SliceRandom;
use serde_json::Value;

fn kappa_inputs(alpha: i64, beta: i64, depth: u64) -> KappaInputs {
    KappaInputs {
        alpha: rat(alpha, 1),
        beta: rat(beta, 1),
        phi: "const:1".into(),
        depth,
        cap: 64,
    }
}

fn pow2_rat(k: i64) -> BigRational {
    if k >= 0 {
        BigRational::from_integer(BigInt::one() << k as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-k) as usize)
    }
}

/// `v^2` computed straight from the stored representation.
fn square(v: &PosValue) -> BigRational {
    match v {
        PosValue::Exact(q) => q * q,
        PosValue::LogIv { lo, hi } => {
            assert_eq!(lo, hi, "nonzero width");
            let twice = lo.to_rational().unwrap() * rat(2, 1);
            assert!(twice.is_integer(), "square is not a power of two");
            pow2_rat(twice.to_integer().to_i64().unwrap())
        }
    }
}

fn exact(v: &NonNeg) -> BigRational {
    match v {
        NonNeg::Zero => BigRational::zero(),
        NonNeg::Pos(PosValue::Exact(q)) => q.clone(),
        other => panic!("left the exact channel: {other:?}"),
    }
}

#[test]
fn kappa_reconstruction_is_exact() {
    let f = certify_kappa(&kappa_inputs(1, 2, 64)).unwrap();
    let Body::Kappa { cert } = &f.body else { unreachable!() };
    let sq: Vec<BigRational> = cert.kappa.iter().map(square).collect();
    for n in 0..=64usize {
        let mut s = BigRational::zero();
        for (i, q) in sq.iter().enumerate().take(n + 1) {
            s += q / pow2_rat(2 * (n - i) as i64);
        }
        assert_eq!(s, pow2_rat(-(n as i64)), "n = {n}");
        let k = &cert.kappa[n];
        assert!(k.is_zero_width());
        let kk = square(k);
        assert!(kk >= BigRational::zero() && kk <= BigRational::one());
    }
}

#[test]
fn exact_channel_and_growth_bound() {
    let f = certify_reduce(&PairInputs::standard("periodic:/10", "periodic:/1", 256)).unwrap();
    check(&f).unwrap();
    let Body::Reduce { mu, .. } = &f.body else { unreachable!() };
    let mus: Vec<BigRational> = mu.mu.iter().map(exact).collect();
    let nus: Vec<BigRational> = mu.nu.iter().map(exact).collect();
    let l = mu.l.value();
    let mut run = BigRational::zero();
    for n in 0..nus.len() {
        let cap = pow2_rat(n.min(60) as i64);
        assert!(!nus[n].is_negative() && (n >= 60 || nus[n] <= cap));
        if n < mu.n1 as usize {
            assert!(nus[n].is_one());
        } else {
            assert_eq!(nus[n], mus[n]);
        }
        if n > 0 {
            assert!(nus[n] <= &l * &run, "growth bound at n = {n}");
        }
        run = run.max(nus[n].clone());
    }
}

// ------------------------------------------------------------ perturbations

/// JSON paths of entries that can be scaled by 2.
fn scalable(v: &Value, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(m) => {
            if let Some(Value::String(s)) = m.get("exact") {
                if s != "0" {
                    out.push(path.clone());
                }
                return;
            }
            if m.contains_key("log2") {
                out.push(path.clone());
                return;
            }
            for (k, x) in m {
                path.push(k.clone());
                scalable(x, path, out);
                path.pop();
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                path.push(i.to_string());
                scalable(x, path, out);
                path.pop();
            }
        }
        Value::String(s) if s.starts_with("2^") => out.push(path.clone()),
        _ => {}
    }
}

fn at<'a>(v: &'a mut Value, path: &[String]) -> &'a mut Value {
    path.iter().fold(v, |v, k| match v {
        Value::Array(a) => &mut a[k.parse::<usize>().unwrap()],
        Value::Object(m) => m.get_mut(k).unwrap(),
        _ => panic!("bad path"),
    })
}

fn scale_entry(v: &mut Value, up: bool) {
    let step: i64 = if up { 1 } else { -1 };
    match v {
        Value::String(s) => {
            let j: i64 = s[2..].parse().unwrap();
            *s = format!("2^{}", j + step);
        }
        Value::Object(m) => {
            if let Some(Value::String(s)) = m.get_mut("exact") {
                let q: BigRational = s.parse().unwrap();
                let q = if up { q * rat(2, 1) } else { q / rat(2, 1) };
                *s = q.to_string();
            } else {
                let iv = &mut m["log2"];
                for side in ["lo", "hi"] {
                    let d: BigDyadic = iv[side].as_str().unwrap().parse().unwrap();
                    iv[side] = Value::String(d.add(&BigDyadic::from_i64(step)).to_string());
                }
            }
        }
        _ => unreachable!(),
    }
}

#[test]
fn builders_pass_and_perturbations_fail() {
    let files: Vec<CertFile> = vec![
        certify_kappa(&kappa_inputs(1, 2, 64)).unwrap(),
        certify_kappa(&kappa_inputs(2, 3, 48)).unwrap(),
        certify_reduce(&PairInputs::standard("periodic:/10", "periodic:/1", 128)).unwrap(),
        certify_reduce(&PairInputs::standard("periodic:/1000", "periodic:/10", 128)).unwrap(),
        certify_equal(&PairInputs::standard("periodic:11/10", "periodic:/10", 64)).unwrap(),
        certify_incomparable(&PairInputs::standard("periodic:/10", "periodic:/01", 64)).unwrap(),
    ];
    let mut targets = Vec::new();
    for (i, f) in files.iter().enumerate() {
        check(f).unwrap_or_else(|e| panic!("builder output {i} rejected: {e:?}"));
        let body = serde_json::to_value(&f.body).unwrap();
        let mut paths = Vec::new();
        scalable(&body, &mut Vec::new(), &mut paths);
        for p in paths {
            let mut b = body.clone();
            // constants are `2^j` with `j >= 0`
            if at(&mut b, &p) != "2^0" {
                targets.push((i, p.clone(), false));
            }
            targets.push((i, p, true));
        }
    }
    let mut r = rng(0);
    let picks: Vec<_> = targets.choose_multiple(&mut r, 100).cloned().collect();
    assert_eq!(picks.len(), 100);
    for (i, path, up) in picks {
        let mut body = serde_json::to_value(&files[i].body).unwrap();
        scale_entry(at(&mut body, &path), up);
        let mut f = files[i].clone();
        f.body = serde_json::from_value(body).unwrap();
        f.rehash();
        assert!(
            check(&f).is_err(),
            "file {i}: {} at {} accepted",
            if up { "doubling" } else { "halving" },
            path.join(".")
        );
    }
}
