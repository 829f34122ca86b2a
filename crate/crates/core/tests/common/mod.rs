#![allow(dead_code)]

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use pofin_core::scales::{DeltaSpec, KSpec, ScaleSystem};
use pofin_core::subsets::SubsetSpec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Uniform `p/q` with `lo <= p/q <= hi` and `q = den`.
pub fn rand_rat(r: &mut ChaCha8Rng, lo: f64, hi: f64, den: i64) -> BigRational {
    let a = (lo * den as f64).ceil() as i64;
    let b = (hi * den as f64).floor() as i64;
    rat(r.gen_range(a..=b), den)
}

pub fn rand_bits(r: &mut ChaCha8Rng, max_len: usize, min_len: usize) -> Vec<bool> {
    let n = r.gen_range(min_len..=max_len);
    (0..n).map(|_| r.gen()).collect()
}

pub fn rand_periodic(r: &mut ChaCha8Rng) -> SubsetSpec {
    let prefix = rand_bits(r, 6, 0);
    let period = rand_bits(r, 5, 1);
    SubsetSpec::periodic(prefix, period).unwrap()
}

pub fn parts(s: &SubsetSpec) -> (Vec<bool>, Vec<bool>) {
    match s {
        SubsetSpec::Periodic { prefix, period } => (prefix.clone(), period.clone()),
        _ => panic!("periodic only"),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Brute-force membership straight from the bit description.
pub fn bit(s: &SubsetSpec, i: usize) -> bool {
    let (pre, per) = parts(s);
    if i < pre.len() {
        pre[i]
    } else {
        per[(i - pre.len()) % per.len()]
    }
}

/// `U \ V` has no members in `[P, P + 4 lcm)`, `P` the longer prefix.
pub fn oracle_almost_subset(u: &SubsetSpec, v: &SubsetSpec) -> bool {
    let (pu, qu) = parts(u);
    let (pv, qv) = parts(v);
    let p = pu.len().max(pv.len());
    let l = qu.len() / gcd(qu.len(), qv.len()) * qv.len();
    (p..p + 4 * l).all(|i| !bit(u, i) || bit(v, i))
}

/// `delta_m` uniform in `[0.3, 0.7]`, `k_(m+1)` in `[2 k_m, 3 k_m]`, until
/// `k_m` passes `depth`.
pub fn rand_scale(r: &mut ChaCha8Rng, depth: u64) -> ScaleSystem {
    let mut ks = vec![BigUint::from(r.gen_range(2u64..=4))];
    while ks.last().unwrap() <= &BigUint::from(depth) {
        let k: u64 = (ks.last().unwrap()).try_into().unwrap();
        ks.push(BigUint::from(r.gen_range(2 * k..=3 * k)));
    }
    let ds: Vec<BigRational> = ks.iter().map(|_| rand_rat(r, 0.3, 0.7, 1000)).collect();
    let inf = ds.iter().min().unwrap().clone();
    let sup = ds.iter().max().unwrap().clone();
    ScaleSystem {
        k: KSpec::Explicit(ks),
        delta: DeltaSpec::List(ds),
        delta_inf: inf,
        delta_sup: sup,
    }
}
