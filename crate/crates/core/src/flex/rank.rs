//! Ordered levels of flexibility-limiting constraints.

use serde::{Deserialize, Serialize};

use super::{flexibility_index, FlexConfig, EQUAL_INDEX_TOL};
use crate::error::{FlexError, Result};
use crate::model::{ConstraintFilter, LinearSystem};
use crate::sets::UncertaintySetSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankLevel {
    pub level: usize,
    pub constraint_labels: Vec<String>,
    #[serde(rename = "F")]
    pub f_value: f64,
    /// `100 (F - F_1) / F_1`; absent for the first level.
    pub increase_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxLevels,
    /// The reduced system never becomes binding inside the set, including
    /// the case where no non-vacuous inequality is left.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub levels: Vec<RankLevel>,
    pub termination: Termination,
    /// Some solve stopped at the node limit; its level may be inexact.
    pub node_limit_hit: bool,
}

fn same_index(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUAL_INDEX_TOL * a.abs().max(b.abs()) + 1e-12
}

/// Solve, exclude the limiting constraints, repeat.
pub fn rank_constraints(
    system: &LinearSystem,
    set: &UncertaintySetSpec,
    max_levels: usize,
    cfg: &FlexConfig,
) -> Result<RankResult> {
    system.check()?;
    if max_levels == 0 {
        return Err(FlexError::InvalidArgument("at least one level is required".into()));
    }
    let mut levels: Vec<RankLevel> = Vec::new();
    let mut current = system.clone();
    let mut node_limit_hit = false;
    let termination = loop {
        if (0..current.inequalities.len()).all(|j| current.is_vacuous(j)) {
            break Termination::Unbounded;
        }
        let sol = match flexibility_index(&current, set, cfg) {
            Ok(sol) => sol,
            Err(FlexError::Unbounded(_)) => break Termination::Unbounded,
            Err(e) => return Err(e),
        };
        node_limit_hit |= sol.stats.node_limit_hit;
        let mut labels = sol.limiting();
        if labels.is_empty() {
            labels = sol.weakly_active.clone();
        }
        match levels.last_mut() {
            Some(last) if same_index(last.f_value, sol.f) => last.constraint_labels.extend(labels.iter().cloned()),
            _ => {
                if levels.len() == max_levels {
                    break Termination::MaxLevels;
                }
                levels.push(RankLevel {
                    level: levels.len() + 1,
                    constraint_labels: labels.clone(),
                    f_value: sol.f,
                    increase_pct: None,
                });
            }
        }
        current = current.apply_filter(&ConstraintFilter::new(labels))?;
    };
    if let Some(f1) = levels.first().map(|l| l.f_value) {
        for l in levels.iter_mut().skip(1) {
            l.increase_pct = (f1 > 0.0).then(|| 100.0 * (l.f_value - f1) / f1);
        }
    }
    Ok(RankResult {
        levels,
        termination,
        node_limit_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineConstraint;

    #[test]
    fn single_constraint_then_unbounded() {
        let sys = LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![AffineConstraint::theta_only("g", vec![1.0], 2.0)],
            equalities: vec![],
        };
        let set = UncertaintySetSpec::Hyperbox {
            mean: vec![0.0],
            dev_minus: vec![1.0],
            dev_plus: vec![1.0],
        };
        let r = rank_constraints(&sys, &set, 5, &FlexConfig::default()).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert_eq!(r.termination, Termination::Unbounded);
        assert!((r.levels[0].f_value - 2.0).abs() < 1e-12);
        assert_eq!(r.levels[0].increase_pct, None);
    }

    #[test]
    fn symmetric_pair_shares_a_level() {
        // |t| <= 3 as two rows: both limit at the same index
        let sys = LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![
                AffineConstraint::theta_only("up", vec![1.0], 3.0),
                AffineConstraint::theta_only("lo", vec![-1.0], 3.0),
                AffineConstraint::theta_only("far", vec![1.0], 5.0),
            ],
            equalities: vec![],
        };
        let set = UncertaintySetSpec::Ellipsoid {
            mean: vec![0.0],
            covariance: vec![vec![1.0]],
        };
        for sweep in [true, false] {
            let cfg = FlexConfig {
                sweep_alternates: sweep,
                ..FlexConfig::default()
            };
            let r = rank_constraints(&sys, &set, 2, &cfg).unwrap();
            assert_eq!(r.levels.len(), 2);
            let mut first = r.levels[0].constraint_labels.clone();
            first.sort();
            assert_eq!(first, vec!["lo", "up"]);
            assert!((r.levels[0].f_value - 9.0).abs() < 1e-9);
            assert!((r.levels[1].f_value - 25.0).abs() < 1e-9);
            assert!((r.levels[1].increase_pct.unwrap() - 100.0 * 16.0 / 9.0).abs() < 1e-6);
        }
    }
}
