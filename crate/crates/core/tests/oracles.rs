mod common;

use common::{box_oracle, ellipsoid_oracle, random_instance, random_milp, rng};
use flex_core::{check_certificate, flexibility_index, verify_solution, FlexConfig};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn ellipsoid_index_matches_touch_point_oracle() {
    let mut r = rng(11);
    for case in 0..40 {
        let inst = random_instance(&mut r, 2 + case % 2);
        let sol = flexibility_index(&inst.system, &inst.ellipsoid(), &FlexConfig::default()).unwrap();
        let oracle = ellipsoid_oracle(&inst.system, &inst.mean, &inst.covariance);
        assert!(rel(sol.f, oracle) < 1e-6, "case {case}: {} vs {oracle}", sol.f);
        assert!(check_certificate(&inst.system, &sol).unwrap().passes());
    }
}

#[test]
fn box_index_matches_worst_corner_oracle() {
    let mut r = rng(12);
    for case in 0..40 {
        let inst = random_instance(&mut r, 2 + case % 2);
        let sol = flexibility_index(&inst.system, &inst.hyperbox(), &FlexConfig::default()).unwrap();
        let oracle = box_oracle(&inst.system, &inst.mean, &inst.dev);
        assert!(rel(sol.f, oracle) < 1e-6, "case {case}: {} vs {oracle}", sol.f);
    }
}

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut r = rng(13);
    for case in 0..30 {
        let milp = random_milp(&mut r, 6);
        match (milp.branch_and_bound(), milp.enumerate()) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "case {case}: {a} vs {b}"),
            (a, b) => assert_eq!(a.is_some(), b.is_some(), "case {case}"),
        }
    }
}

#[test]
fn boundary_samples_stay_feasible() {
    let mut r = rng(14);
    for case in 0..10 {
        let inst = random_instance(&mut r, 2 + case % 2);
        for set in [inst.ellipsoid(), inst.hyperbox()] {
            let sol = flexibility_index(&inst.system, &set, &FlexConfig::default()).unwrap();
            let rep = verify_solution(&inst.system, &sol, 500, case as u64).unwrap();
            assert!(rep.passed(), "case {case}: {rep:?}");
        }
    }
}
