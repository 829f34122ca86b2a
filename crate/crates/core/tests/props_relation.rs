mod common;

use common::*;
use pofin_core::dyadic_fn::{square_invariance_check, DyadicFunction, Interp};
use pofin_core::numeric::{PosValue, Pow2};
use pofin_core::relation::{a2_liminf_witness, check_a1, check_r1_r2, RelationError, RelationSpec};
use pofin_core::scales::{block_partition, weight_seq};
use rand::Rng;

#[test]
fn power_constants() {
    for (a, j) in [(1, 0), (2, 1), (3, 2)] {
        let r = RelationSpec::power(rat(a, 1), 16).unwrap();
        let rep = check_r1_r2(&r, 16, 64).unwrap();
        // smallest power of two >= 2^(alpha - 1)
        assert_eq!(rep.c, Pow2(j), "alpha = {a}");
    }
}

#[test]
fn a1_never_contradicts_its_proof() {
    let depth = 64;
    let mut r = rng(23);
    let mut ran = 0;
    for case in 0..40 {
        let s = rand_scale(&mut r, depth);
        let u = rand_periodic(&mut r);
        let w = weight_seq(&u, &s, &mut block_partition(4), depth).unwrap();
        let alpha = [rat(1, 1), rat(3, 2), rat(2, 1)][r.gen_range(0..3)].clone();
        let env = DyadicFunction::constant(depth, PosValue::one()).unwrap();
        let spec = RelationSpec::new(alpha, env, w, 64).unwrap();
        let psi = spec.psi().unwrap();
        let Some(j) = (0..24).find(|&j| square_invariance_check(&psi, &Pow2(j).value().recip(), 64).is_ok())
        else {
            continue;
        };
        ran += 1;
        match check_a1(&spec, &Pow2(j).value().recip(), depth, 64) {
            Err(e @ RelationError::ImplicationFailed { .. }) => panic!("case {case}: {e}"),
            Err(e) => panic!("case {case}: unexpected {e}"),
            Ok(c) => assert!(c.epsilon_prime <= c.epsilon),
        }
    }
    assert!(ran >= 30, "only {ran} cases met the hypotheses");
}

#[test]
fn liminf_antisymmetry() {
    let depth = 48;
    let mut r = rng(5);
    let mut verified = 0;
    for _ in 0..300 {
        let den: Vec<_> = (0..=depth).map(|_| rand_rat(&mut r, 0.01, 100.0, 100)).collect();
        let mut idx: Vec<u64> = (0..6).map(|_| r.gen_range(0..=depth)).collect();
        idx.sort();
        idx.dedup();
        let bound: Vec<PosValue> =
            (0..idx.len()).map(|l| PosValue::ratio(1, 1 << (l + 1))).collect();
        let mut num = den.clone();
        for (l, &n) in idx.iter().enumerate() {
            // mostly under the bound, sometimes over
            let q = rand_rat(&mut r, 0.3, 1.2, 1000) / rat(1 << (l + 1), 1);
            num[n as usize] = &den[n as usize] * q;
        }
        let f = |v: &[_]| {
            DyadicFunction::from_positive(
                v.iter().cloned().map(PosValue::Exact).collect(),
                Interp::Affine,
            )
            .unwrap()
        };
        let (fnum, fden) = (f(&num), f(&den));
        if a2_liminf_witness(&fnum, &fden, &idx, &bound).is_ok() {
            verified += 1;
            let other: Vec<PosValue> = (0..idx.len())
                .map(|l| PosValue::ratio(999 - l as i64, 1000))
                .collect();
            assert_eq!(
                a2_liminf_witness(&fden, &fnum, &idx, &other),
                Err(RelationError::NoWitness)
            );
        }
    }
    assert!(verified > 20);
}
