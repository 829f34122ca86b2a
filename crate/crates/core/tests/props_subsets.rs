mod common;

use common::*;
use pofin_core::subsets::{almost_subset, branch_family, diff_infinite, Inclusion, SubsetSpec};
use proptest::prelude::*;
use rand::Rng;

fn periodic() -> impl Strategy<Value = SubsetSpec> {
    (
        proptest::collection::vec(any::<bool>(), 0..7),
        proptest::collection::vec(any::<bool>(), 1..6),
    )
        .prop_map(|(p, q)| SubsetSpec::periodic(p, q).unwrap())
}

#[test]
fn reflexive_and_transitive_on_200() {
    let mut r = rng(7);
    let sets: Vec<SubsetSpec> = (0..200).map(|_| rand_periodic(&mut r)).collect();
    for s in &sets {
        assert!(almost_subset(s, s).unwrap().holds());
    }
    for _ in 0..4000 {
        let (a, b, c) = (
            &sets[r.gen_range(0..200)],
            &sets[r.gen_range(0..200)],
            &sets[r.gen_range(0..200)],
        );
        let ab = almost_subset(a, b).unwrap().holds();
        let bc = almost_subset(b, c).unwrap().holds();
        if ab && bc {
            assert!(almost_subset(a, c).unwrap().holds(), "{a} {b} {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn matches_brute_force(u in periodic(), v in periodic()) {
        let got = almost_subset(&u, &v).unwrap();
        prop_assert_eq!(got.holds(), oracle_almost_subset(&u, &v));
        prop_assert_eq!(diff_infinite(&u, &v).unwrap(), !got.holds());
        if let Inclusion::No { witness, .. } = got {
            let w = witness as usize;
            prop_assert!(bit(&u, w) && !bit(&v, w));
        }
    }

    #[test]
    fn branch_intersections(
        a in proptest::collection::vec(any::<bool>(), 1..20),
        b in proptest::collection::vec(any::<bool>(), 1..20),
    ) {
        let depth = 24;
        let mut ea = a.clone();
        ea.resize(depth, false);
        let mut eb = b.clone();
        eb.resize(depth, false);
        prop_assume!(ea != eb);
        let fam = branch_family(&[a, b], depth).unwrap();
        let common = ea.iter().zip(&eb).take_while(|(x, y)| x == y).count();
        let ma = fam[0].members_below(fam[0].horizon().unwrap());
        let both = ma.iter().filter(|&&x| fam[1].member(x).unwrap()).count();
        prop_assert_eq!(both, common + 1);
    }
}
