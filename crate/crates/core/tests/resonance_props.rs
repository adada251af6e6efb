use std::collections::BTreeSet;

use inflate_core::lattice::Frequency;
use inflate_core::resonance::*;
use proptest::prelude::*;

fn f(x: i64) -> Frequency {
    Frequency::new(&[x])
}

fn shifted(t: &ResonantTuple, by: i64) -> ResonantTuple {
    ResonantTuple::from_slots(t.freqs.iter().map(|k| f(k.0[0] + by)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn translation_covariance(k in -3i64..=3) {
        let at_k = enumerate_resonant(1, 2, f(k), 3).unwrap();
        let at_0 = enumerate_resonant(1, 2, f(0), 6).unwrap();
        for t in &at_k {
            let back = shifted(t, -k);
            prop_assert!(back.is_resonant() && back.output == f(0));
            prop_assert!(at_0.contains(&back));
        }
        for t in at_0.iter().filter(|t| t.freqs.iter().all(|x| (x.0[0] + k).abs() <= 3)) {
            prop_assert!(at_k.contains(&shifted(t, k)));
        }
    }

    #[test]
    fn parametrized_tuples_are_exact(a in -20i64..=20, b in -20i64..=20, p in -20i64..=20, q in -20i64..=20) {
        for t in parametrize_quintic(QuinticParam { a, b, p, q }) {
            prop_assert!(t.is_resonant());
            prop_assert_eq!(t.output, f(0));
            prop_assert!(t.check());
            let k: Vec<i64> = t.freqs.iter().map(|x| x.0[0]).collect();
            prop_assert_eq!(k[0] + k[2] + k[4], k[1] + k[3]);
            prop_assert_eq!(k[0] * k[0] + k[2] * k[2] + k[4] * k[4], k[1] * k[1] + k[3] * k[3]);
        }
    }
}

#[test]
fn quintic_resonances_have_an_even_odd_slot() {
    for t in enumerate_resonant(1, 2, f(0), 5).unwrap() {
        let k: Vec<i64> = t.freqs.iter().map(|x| x.0[0]).collect();
        assert!([k[0], k[2], k[4]].iter().any(|x| x % 2 == 0), "{k:?}");
    }
}

#[test]
fn characterization_matches_brute_force() {
    for range in [2, 4] {
        let r = verify_characterization(range).unwrap();
        assert!(r.equal, "{r:?}");
        assert_eq!(r.brute_count, r.param_count);
    }
}

#[test]
fn worked_examples() {
    let first = parametrize_quintic(QuinticParam { a: 1, b: 1, p: 1, q: 1 });
    assert!(first.contains(&ResonantTuple::from_slots([1, 3, 1, 3, 4].map(f).to_vec())));
    let second = parametrize_quintic(QuinticParam { a: -1, b: 2, p: -2, q: 1 });
    assert!(second.contains(&ResonantTuple::from_slots([2, 3, 2, 0, -1].map(f).to_vec())));
}

#[test]
fn constraint_counts() {
    let n = 32;
    let sigma: BTreeSet<Frequency> = [-n, 2 * n, 3 * n].into_iter().map(f).collect();
    assert_eq!(
        constraint_tuple_count(&sigma, 4, 1, f(0)).unwrap(),
        TupleCount { total: 3, resonant: 3 }
    );
    assert_eq!(
        constraint_tuple_count(&sigma, 4, 2, f(0)).unwrap(),
        TupleCount { total: 15, resonant: 15 }
    );
    let single: BTreeSet<Frequency> = [f(n)].into_iter().collect();
    assert_eq!(
        constraint_tuple_count(&single, 2, 1, f(0)).unwrap(),
        TupleCount { total: 1, resonant: 1 }
    );
    assert!(constraint_tuple_count(&sigma, 2, 3, f(0)).is_err());
}
