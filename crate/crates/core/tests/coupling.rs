use martdev_core::coupling::{couple, coupling_tail_report, BinomialLattice, QuantileFunction};
use martdev_core::montecarlo::Engine;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn exact_quantiles() {
    let one = QuantileFunction::exact_rademacher(1).unwrap();
    assert_eq!(one.evaluate(0.25).unwrap(), -1.0);
    assert_eq!(one.evaluate(0.75).unwrap(), 1.0);
    assert!(one.evaluate(0.0).is_err() && one.evaluate(1.0).is_err());
    let four = QuantileFunction::exact_rademacher(4).unwrap();
    // F(0) = 11/16 ≥ 1/2 > F(−1) = 5/16
    assert_eq!(four.evaluate(0.5).unwrap(), 0.0);
}

#[test]
fn composition_agrees_with_the_quantile_of_phi() {
    let qf = QuantileFunction::exact_rademacher(9).unwrap();
    for i in 1..400 {
        let z = -4.0 + f64::from(i) * 0.02 + 0.001;
        let s = martdev_core::bounds::gaussian_cdf(z);
        assert_eq!(qf.compose_normal(z), qf.evaluate(s).unwrap(), "z = {z}");
    }
    let one = QuantileFunction::exact_rademacher(1).unwrap();
    assert_eq!(one.compose_normal(-0.3), -1.0);
    assert_eq!(one.compose_normal(0.3), 1.0);
}

#[test]
fn empirical_quantiles() {
    let q = QuantileFunction::empirical(vec![3.0, 1.0, 2.0], 3).unwrap();
    assert_eq!(q.evaluate(0.5).unwrap(), 2.0);
    let single = QuantileFunction::empirical(vec![5.0], 1).unwrap();
    for s in [0.01, 0.5, 0.99] {
        assert_eq!(single.evaluate(s).unwrap(), 5.0);
    }
    assert!(QuantileFunction::empirical(Vec::new(), 1).is_err());

    let engine = Engine::new(0).unwrap();
    let draws = engine.collect(1_000_000, 8, |rng, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let normal = QuantileFunction::empirical(draws, 1).unwrap();
    assert!(normal.evaluate(0.5).unwrap().abs() < 0.005);
}

#[test]
fn atom_reproduction() {
    for n in [1, 6, 25, 200] {
        let qf = QuantileFunction::exact_rademacher(n).unwrap();
        let atoms = qf.atom_probabilities().unwrap();
        let lattice = BinomialLattice::new(n).unwrap();
        for (a, p) in atoms.iter().zip(&lattice.pmf) {
            assert!((a - p).abs() <= 1e-12, "n={n}: {a} vs {p}");
        }
    }
    let expected = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0].map(|c| c / 64.0);
    let atoms = QuantileFunction::exact_rademacher(6)
        .unwrap()
        .atom_probabilities()
        .unwrap();
    for (a, e) in atoms.iter().zip(expected) {
        assert!((a - e).abs() <= 1e-12);
    }
}

#[test]
fn identity_coupling_has_no_deviation() {
    let qf = QuantileFunction::standard_normal(50);
    for z in [-2.0, 0.0, 0.7] {
        let s = couple(&qf, z);
        assert_eq!(s.w, z);
        assert_eq!(s.deviation, 0.0);
    }
}

#[test]
fn tail_report_shape() {
    let engine = Engine::new(0).unwrap();
    let rep = coupling_tail_report(100, 50_000, 4, 0.125, &engine).unwrap();
    assert!(rep.tail_slope < 0.0);
    assert!(rep.d_hat > 0.0 && rep.d_hat.is_finite());
    assert!(rep.frac_event > 0.5);
    assert!(rep.warnings.is_empty());
    let small = coupling_tail_report(100, 500, 4, 0.125, &engine).unwrap();
    assert!(!small.warnings.is_empty());
    assert!(coupling_tail_report(1, 500, 4, 0.125, &engine).is_err());
}
