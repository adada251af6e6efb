use inflate_core::error::InflateError;
use inflate_core::lattice::*;
use inflate_core::picard::NonlinearitySpec;
use inflate_core::scenarios::{schedule_case, Overrides};
use inflate_core::solver::*;
use num_complex::Complex64;

fn datum(amp: f64, modes: &[(i64, f64)]) -> SpectralField {
    SpectralField::from_constants(
        DomainSpec::torus(1),
        1.0,
        modes
            .iter()
            .map(|&(k, ph)| (Frequency::new(&[k]), Complex64::from_polar(amp, ph))),
    )
}

fn cubic() -> NonlinearitySpec {
    NonlinearitySpec::single(3, 2, Complex64::new(1.0, 0.0)).unwrap()
}

fn rel(a: &FieldSnapshot, b: &FieldSnapshot) -> f64 {
    a.sub(b).l2_norm() / b.l2_norm()
}

#[test]
fn gauge_invariant_flow_keeps_mass() {
    let phi = datum(0.8, &[(1, 0.0), (-2, 1.0), (3, 2.0)]);
    let cfg = SolverConfig::for_horizon(32, 0.5, 500);
    let u = evolve(&phi, &cubic(), &cfg).unwrap();
    let m0 = phi.at(0.0, false).l2_norm();
    assert!((u.l2_norm() - m0).abs() <= 1e-6 * m0, "{} vs {m0}", u.l2_norm());
}

#[test]
fn doubling_cutoff_changes_nothing() {
    // small data: orders past the cutoff carry less than 1e-25
    let phi = datum(0.01, &[(1, 0.0), (-1, 0.5), (2, 1.0)]);
    let small = evolve(&phi, &cubic(), &SolverConfig::for_horizon(32, 0.5, 100)).unwrap();
    let big = evolve(&phi, &cubic(), &SolverConfig::for_horizon(64, 0.5, 100)).unwrap();
    assert!(rel(&small, &big) <= 1e-10, "{}", rel(&small, &big));
}

#[test]
fn reruns_are_bit_identical() {
    let phi = datum(0.5, &[(2, 0.0), (-3, 1.0)]);
    let nl = NonlinearitySpec::single(2, 1, Complex64::new(0.0, 1.0)).unwrap();
    let cfg = SolverConfig::for_horizon(16, 0.2, 50);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| evolve(&phi, &nl, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn tiny_data_flows_freely() {
    let phi = datum(1e-9, &[(3, 0.0), (-5, 2.0)]);
    let t = 0.7;
    let u = evolve(&phi, &cubic(), &SolverConfig::for_horizon(8, t, 20)).unwrap();
    for (k, c) in &u.values {
        let xi2 = (k.0[0] * k.0[0]) as f64;
        let free = phi.get(k).map_or(Complex64::new(0.0, 0.0), |e| e.eval(0.0)) * Complex64::from_polar(1.0, -xi2 * t);
        assert!((c - free).norm() <= 1e-15, "{k:?}");
    }
}

#[test]
fn quadratic_second_order_discrepancy_scales_with_square() {
    // truncating at K = 2 leaves an O(r²) relative error
    let errs: Vec<f64> = [0.02, 0.01]
        .iter()
        .map(|&r| {
            let ov = Overrides { r: Some(r), t: Some(0.05), ..Default::default() };
            let sc = schedule_case("case2", 4, None, &ov).unwrap();
            let cfg = SolverConfig::for_horizon(32, sc.t, 100);
            compare_series(&sc, 2, &cfg).unwrap().l2_rel_err
        })
        .collect();
    let ratio = errs[0] / errs[1];
    assert!((ratio - 4.0).abs() < 0.2, "{errs:?}");
}

#[test]
fn untrusted_series_is_a_divergence() {
    let ov = Overrides { r: Some(0.5), rho: Some(0.95), ..Default::default() };
    let sc = schedule_case("case6", 4, None, &ov).unwrap();
    let cfg = SolverConfig::for_horizon(64, sc.t, 10);
    match compare_series(&sc, 7, &cfg) {
        Err(e @ InflateError::Divergence { .. }) => assert_eq!(e.exit_code(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn horizon_mismatch_is_rejected() {
    let sc = schedule_case("case6", 4, None, &Overrides { r: Some(0.1), t: Some(0.05), ..Default::default() }).unwrap();
    let cfg = SolverConfig::for_horizon(64, 0.04, 10);
    assert!(matches!(compare_series(&sc, 4, &cfg), Err(InflateError::Config(_))));
}
