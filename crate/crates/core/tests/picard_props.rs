use inflate_core::lattice::*;
use inflate_core::norms::modulation_norm;
use inflate_core::picard::*;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn datum() -> impl Strategy<Value = SpectralField> {
    prop::collection::btree_map(-8i64..=8, (-1.0..1.0f64, -1.0..1.0f64), 1..4).prop_map(|m| {
        SpectralField::from_constants(
            DomainSpec::torus(1),
            1.0,
            m.into_iter().map(|(k, (re, im))| (Frequency::new(&[k]), Complex64::new(re, im))),
        )
    })
}

fn with_cell(f: &SpectralField, a: f64) -> SpectralField {
    SpectralField::from_constants(
        f.domain().clone(),
        a,
        f.iter().map(|(k, e)| (*k, e.eval(0.0))),
    )
}

fn rat(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn only_reachable_orders_populate(phi in datum(), q in 0usize..=3) {
        let nl = NonlinearitySpec::single(3, q, c(1.0)).unwrap();
        let mut table = IterateTable::new(phi, nl.clone(), 0.3);
        table.populate(7).unwrap();
        for k in 1..=7 {
            let nonzero = table.order(k).is_some_and(|f| !f.is_empty());
            if nonzero {
                prop_assert!(nl.reachable_orders(7).contains(&k), "order {}", k);
            }
            if k % 2 == 0 {
                prop_assert!(!nonzero);
            }
        }
    }

    #[test]
    fn free_flow_keeps_mass(phi in datum(), t in 0.0..10.0f64) {
        let nl = NonlinearitySpec::single(3, 2, c(1.0)).unwrap();
        let table = IterateTable::new(phi.clone(), nl, t);
        let now = table.at(1, t).l2_norm();
        let then = phi.at(0.0, false).l2_norm();
        prop_assert!((now - then).abs() <= 1e-13 * then);
    }

    #[test]
    fn iterate_norms_obey_recursive_bound(
        phi in datum(), a_exp in 0u32..3, p in 2usize..=3, q_raw in 0usize..=3, t in 0.05..0.5f64
    ) {
        // ‖U_k(t)‖_{M_A} <= a_k t^{(k−1)/(p−1)} (√3 A^{1/2})^{k−1} M^k, with √3 the
        // one-dimensional product constant: an (A, A) box sum meets at most three boxes
        let a = 2f64.powi(a_exp as i32);
        let phi = with_cell(&phi, a);
        let q = q_raw.min(p);
        let nl = NonlinearitySpec::single(p, q, c(1.0)).unwrap();
        let kmax = 5;
        let mut table = IterateTable::new(phi.clone(), nl, t);
        table.populate(kmax).unwrap();
        let seq = sequence_a(p, kmax).unwrap();
        let m = modulation_norm(&phi.at(0.0, false), a);
        let ca = 3f64.sqrt() * a.sqrt();
        for k in table.populated_orders() {
            let lhs = modulation_norm(&table.at(k, t), a);
            let e = (k - 1) as f64;
            let rhs = rat(&seq[k - 1]) * t.powf(e / (p - 1) as f64) * ca.powf(e) * m.powi(k as i32);
            prop_assert!(lhs <= rhs * (1.0 + 1e-9), "k = {}: {} > {}", k, lhs, rhs);
        }
    }

    #[test]
    fn gauge_rotation_acts_by_phase(phi in datum(), theta in 0.0..6.3f64, q in 0usize..=3) {
        let nl = NonlinearitySpec::single(3, q, c(1.0)).unwrap();
        let table = IterateTable::new(phi, nl, 0.4);
        let dev = gauge_phase_action(&table, Complex64::from_polar(1.0, theta), 0.4).unwrap();
        prop_assert!(dev < 1e-12);
    }
}

#[test]
fn small_data_decays_geometrically() {
    let phi = SpectralField::from_constants(
        DomainSpec::torus(1),
        1.0,
        [3i64, -3, 6].map(|k| (Frequency::new(&[k]), c(0.05))),
    );
    let nl = NonlinearitySpec::single(3, 2, c(1.0)).unwrap();
    let mut table = IterateTable::new(phi, nl, 0.5);
    table.populate(9).unwrap();
    let sum = series_sum(&table, 0.5, 9).unwrap();
    assert!(sum.tail_ratio <= 0.2, "{}", sum.tail_ratio);
    assert!(sum.trusted());
}

#[test]
fn threads_do_not_change_bits() {
    let phi = SpectralField::from_constants(
        DomainSpec::torus(1),
        1.0,
        [5i64, -5, 10, 2].map(|k| (Frequency::new(&[k]), Complex64::new(0.2, 0.1 * k as f64))),
    );
    let nl = NonlinearitySpec::new(vec![
        NlTerm { p: 3, q: 2, nu: c(1.0) },
        NlTerm { p: 2, q: 1, nu: Complex64::new(0.0, 0.5) },
    ])
    .unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut table = IterateTable::new(phi.clone(), nl.clone(), 0.3);
            table.populate(6).unwrap();
            (2..=6).fold(table.at(1, 0.3), |acc, k| acc.add(&table.at(k, 0.3)))
        })
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.values.len(), four.values.len());
    for ((k1, v1), (k2, v2)) in one.values.iter().zip(&four.values) {
        assert_eq!(k1, k2);
        assert_eq!(v1.re.to_bits(), v2.re.to_bits());
        assert_eq!(v1.im.to_bits(), v2.im.to_bits());
    }
}

#[test]
fn quadratic_has_no_low_part() {
    let phi = SpectralField::from_constants(
        DomainSpec::torus(1),
        1.0,
        [4i64, -4, 8].map(|k| (Frequency::new(&[k]), c(0.1))),
    );
    let nl = NonlinearitySpec::single(2, 1, c(1.0)).unwrap();
    let mut table = IterateTable::new(phi, nl, 0.5);
    table.populate(4).unwrap();
    let dec = series_decompose(&table, 0.5, 4).unwrap();
    assert!(dec.low.max_abs() < 1e-15);
    assert!(dec.main.max_abs() > 0.0);
}

#[test]
fn mixed_degree_splits_into_pieces() {
    // u² + u³: the quadratic iterate and the cross terms land in the low part
    let phi = SpectralField::from_constants(
        DomainSpec::torus(1),
        1.0,
        [4i64, -4, 8].map(|k| (Frequency::new(&[k]), c(0.1))),
    );
    let nl = NonlinearitySpec::new(vec![
        NlTerm { p: 2, q: 2, nu: c(1.0) },
        NlTerm { p: 3, q: 3, nu: c(1.0) },
    ])
    .unwrap();
    let t = 0.5;
    let mut table = IterateTable::new(phi.clone(), nl, t);
    table.populate(6).unwrap();
    let dec = series_decompose(&table, t, 6).unwrap();
    let cubic = first_iterate(&phi, 3, 3, t).unwrap().at(t, true);
    assert!(dec.main.sub(&cubic).max_abs() < 1e-15);
    let u2 = table.at(2, t);
    let cross = table.at(3, t).sub(&cubic);
    assert!(dec.low.sub(&u2.add(&cross)).max_abs() < 1e-14);
    assert!(cross.max_abs() > 0.0);
    let total = series_sum(&table, t, 6).unwrap().field;
    assert!(dec.recompose().sub(&total).max_abs() < 1e-12);
}

#[test]
fn sequence_examples() {
    let a = sequence_a(3, 7).unwrap();
    let f: Vec<f64> = a.iter().map(rat).collect();
    assert_eq!(f[0], 1.0);
    assert_eq!(f[2], 1.0);
    assert_eq!(f[4], 1.5);
    assert_eq!(f[6], 2.5);
    assert!(f[1] == 0.0 && f[3] == 0.0);
    let two = sequence_a(2, 4).unwrap();
    // a_k = 1 for p = 2
    assert!(two.iter().all(|x| rat(x) == 1.0));
}
