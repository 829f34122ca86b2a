mod common;

use common::*;
use num_rational::BigRational;
use num_traits::Zero;
use pofin_core::dyadic_fn::{
    equiv_witness, ess_incr_witness, step_bridge_check, DyadicFunction, Interp,
};
use pofin_core::numeric::{NonNeg, PosValue, Pow2};
use proptest::prelude::*;

const DEPTH: usize = 24;

fn func(vals: &[BigRational]) -> DyadicFunction {
    DyadicFunction::from_positive(vals.iter().cloned().map(PosValue::Exact).collect(), Interp::Affine)
        .unwrap()
}

fn exact(v: &NonNeg) -> BigRational {
    match v {
        NonNeg::Pos(PosValue::Exact(q)) => q.clone(),
        NonNeg::Zero => BigRational::zero(),
        other => panic!("inexact sample {other:?}"),
    }
}

/// Smallest power of two at or above `q`.
fn pow2_ceil(q: &BigRational) -> Pow2 {
    let mut j = 0;
    while Pow2(j).value() < *q {
        j += 1;
    }
    Pow2(j)
}

fn values() -> impl Strategy<Value = Vec<BigRational>> {
    proptest::collection::vec((1i64..=64, 1i64..=64), DEPTH + 1)
        .prop_map(|v| v.into_iter().map(|(p, q)| rat(p, q)).collect())
}

fn oracle_equiv(f: &[BigRational], g: &[BigRational]) -> Pow2 {
    let worst = f
        .iter()
        .zip(g)
        .map(|(a, b)| if a > b { a / b } else { b / a })
        .max()
        .unwrap();
    pow2_ceil(&worst)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equiv_symmetric_and_transitive(f in values(), g in values(), h in values()) {
        let r = (0, DEPTH as u64);
        let (ff, gg, hh) = (func(&f), func(&g), func(&h));
        let fg = equiv_witness(&ff, &gg, r, 64).unwrap().c;
        prop_assert_eq!(fg, equiv_witness(&gg, &ff, r, 64).unwrap().c);
        prop_assert_eq!(fg, oracle_equiv(&f, &g));
        let gh = equiv_witness(&gg, &hh, r, 64).unwrap().c;
        let fh = equiv_witness(&ff, &hh, r, 64).unwrap().c;
        prop_assert!(fg.0 + gh.0 >= fh.0);
    }

    #[test]
    fn majorant_sandwich(f in values()) {
        let e = ess_incr_witness(&func(&f), 64).unwrap();
        let worst = (0..=DEPTH)
            .flat_map(|n| (0..=n).map(move |m| (m, n)))
            .map(|(m, n)| &f[n] / &f[m])
            .max()
            .unwrap();
        prop_assert_eq!(e.c, pow2_ceil(&worst));
        let g: Vec<BigRational> = e.majorant.iter().map(exact).collect();
        let c = e.c.value();
        for n in 0..=DEPTH {
            // increasing in x, so nonincreasing in n
            if n > 0 {
                prop_assert!(g[n] <= g[n - 1]);
            }
            prop_assert!(f[n] <= g[n]);
            prop_assert!(g[n] <= &c * &f[n]);
        }
    }

    #[test]
    fn bridge_never_beats_direct(f in values(), g in values(), step in 2u64..6) {
        let xs: Vec<u64> = (0..=DEPTH as u64).step_by(step as usize).collect();
        let (ff, gg) = (func(&f), func(&g));
        let direct = equiv_witness(&ff, &gg, (0, *xs.last().unwrap()), 64).unwrap();
        // sample ratios stay within 64^2, so both hypotheses hold
        let b = step_bridge_check(&ff, &gg, &xs, &rat(1, 4096), &rat(4096, 1), 64).unwrap();
        prop_assert_eq!(&b.direct, &direct);
        prop_assert!(b.assembled >= direct.c.value());
        prop_assert!(b.assembled_pow2.0 >= direct.c.0);
    }
}
