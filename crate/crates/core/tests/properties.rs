mod common;

use common::{random_instance, rng};
use flex_core::{
    confidence_level, cvar_norm, feasible_center, flexibility_index, psi, rank_constraints, FlexConfig, PNorm,
    UncertaintySetSpec,
};
use proptest::prelude::*;
use rand::Rng;

fn sets_around(mean: &[f64], seed: u64) -> Vec<UncertaintySetSpec> {
    let mut r = rng(seed);
    let n = mean.len();
    let dev: Vec<f64> = (0..n).map(|_| r.random_range(0.2..2.0)).collect();
    let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| if i == k { dev[i] } else { 0.1 }).collect()).collect();
    let m = mean.to_vec();
    vec![
        UncertaintySetSpec::Ellipsoid {
            mean: m.clone(),
            covariance: cov,
        },
        UncertaintySetSpec::Hyperbox {
            mean: m.clone(),
            dev_minus: dev.clone(),
            dev_plus: dev.iter().map(|d| 1.5 * d).collect(),
        },
        UncertaintySetSpec::PNorm {
            mean: m.clone(),
            p: PNorm::L1,
        },
        UncertaintySetSpec::PNorm {
            mean: m.clone(),
            p: PNorm::L2,
        },
        UncertaintySetSpec::PNorm {
            mean: m.clone(),
            p: PNorm::LInf,
        },
        UncertaintySetSpec::CVaRNorm {
            mean: m,
            alpha: r.random_range(0.0..0.6),
        },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sets_are_nested(
        theta in prop::collection::vec(-4.0..4.0f64, 3),
        d1 in 0.0..5.0f64,
        extra in 0.0..5.0f64,
        seed in any::<u64>(),
    ) {
        for set in sets_around(&[0.5, -0.5, 1.0], seed) {
            if set.membership(&theta, d1).unwrap() {
                prop_assert!(set.membership(&theta, d1 + extra).unwrap(), "{set:?}");
            }
        }
    }

    #[test]
    fn cvar_norm_spans_l1_to_linf(x in prop::collection::vec(-10.0..10.0f64, 1..7)) {
        let n = x.len() as f64;
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((cvar_norm(&x, 0.0) - l1).abs() <= 1e-12 * (1.0 + l1));
        prop_assert!((cvar_norm(&x, 1.0 - 1.0 / n) - linf).abs() <= 1e-12 * (1.0 + l1));
        let mid = cvar_norm(&x, 0.5 * (1.0 - 1.0 / n));
        prop_assert!(mid <= l1 + 1e-12 && mid >= linf - 1e-12);
    }

    #[test]
    fn confidence_level_is_monotone(a in 0.0..40.0f64, b in 0.0..40.0f64, n in 1usize..8) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(confidence_level(lo, n) <= confidence_level(hi, n) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&confidence_level(hi, n)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn intersection_never_lowers_the_index(seed in any::<u64>(), cut in 0.3..4.0f64) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 2);
        let a: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
        let b = a.iter().zip(&inst.mean).map(|(x, y)| x * y).sum::<f64>() + cut;
        let cfg = FlexConfig::default();
        for base in [inst.ellipsoid(), inst.hyperbox()] {
            let plain = flexibility_index(&inst.system, &base, &cfg).unwrap().f;
            let cut_set = UncertaintySetSpec::Intersection {
                members: vec![base, UncertaintySetSpec::Halfspaces { a: vec![a.clone()], b: vec![b] }],
            };
            match flexibility_index(&inst.system, &cut_set, &cfg) {
                Ok(sol) => prop_assert!(sol.f >= plain * (1.0 - 1e-7) - 1e-9, "{} < {plain}", sol.f),
                Err(flex_core::FlexError::Unbounded(_)) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn ellipsoid_scale_law(seed in any::<u64>(), k in 0.2..6.0f64) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 2 + (seed % 2) as usize);
        let cfg = FlexConfig::default();
        let f = flexibility_index(&inst.system, &inst.ellipsoid(), &cfg).unwrap().f;
        let scaled = UncertaintySetSpec::Ellipsoid {
            mean: inst.mean.clone(),
            covariance: inst.covariance.iter().map(|row| row.iter().map(|v| k * v).collect()).collect(),
        };
        let fk = flexibility_index(&inst.system, &scaled, &cfg).unwrap().f;
        prop_assert!((fk - f / k).abs() <= 1e-9 * (f / k), "{fk} vs {}", f / k);
    }

    #[test]
    fn ranking_levels_never_decrease(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 2 + (seed % 2) as usize);
        let n = inst.system.inequalities.len();
        for set in [inst.ellipsoid(), inst.hyperbox()] {
            let rank = rank_constraints(&inst.system, &set, n, &FlexConfig::default()).unwrap();
            prop_assert!(!rank.levels.is_empty());
            for w in rank.levels.windows(2) {
                prop_assert!(w[1].f_value >= w[0].f_value * (1.0 - 1e-9));
                prop_assert!(w[1].increase_pct.unwrap() >= -1e-7);
            }
            let labels: usize = rank.levels.iter().map(|l| l.constraint_labels.len()).sum();
            prop_assert!(labels <= n);
        }
    }
}

#[test]
fn feasible_center_minimizes_psi() {
    let mut r = rng(2024);
    for _ in 0..3 {
        let inst = random_instance(&mut r, 2);
        let fc = feasible_center(&inst.system).unwrap();
        let at_center = psi(&inst.system, &fc.theta_bar).unwrap();
        for _ in 0..10_000 {
            let theta: Vec<f64> = inst.mean.iter().map(|m| m + r.random_range(-8.0..8.0)).collect();
            assert!(psi(&inst.system, &theta).unwrap() >= at_center - 1e-9);
        }
    }
}
