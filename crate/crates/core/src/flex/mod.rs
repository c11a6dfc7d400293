//! Flexibility index, solution certificates, verification, ranking and
//! design comparison.

mod compare;
mod mip;
mod rank;
mod verify;

pub use compare::{compare_designs, CompareRow, IndexEntry, MonteCarlo};
pub use rank::{rank_constraints, RankLevel, RankResult, Termination};
pub use verify::{verify_solution, VerificationReport};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::feasibility::Psi;
use crate::model::LinearSystem;
use crate::sets::UncertaintySetSpec;
use crate::solver::{BnbConfig, BnbStatus};
use mip::KktModel;

/// Multiplier threshold for reporting a binding constraint as limiting.
pub const ACTIVE_MULTIPLIER_TOL: f64 = 1e-7;
/// Relative agreement for co-limiting constraints and merged rank levels.
pub const EQUAL_INDEX_TOL: f64 = 1e-6;
const MAX_BIG_M_DOUBLINGS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FlexConfig {
    pub bnb: BnbConfig,
    /// Slack bound `U`; derived from the right-hand sides when `None`.
    pub big_m: Option<f64>,
    /// Feasibility tolerance used by certificates and verification.
    pub tol_feas: f64,
    /// Re-solve with the limiting binaries forced off to find constraints
    /// that limit at the same index.
    pub sweep_alternates: bool,
}

impl Default for FlexConfig {
    fn default() -> Self {
        Self {
            bnb: BnbConfig::default(),
            big_m: None,
            tol_feas: 1e-8,
            sweep_alternates: true,
        }
    }
}

impl FlexConfig {
    /// `10^4 (1 + max |rhs|)` unless overridden.
    pub fn big_m_for(&self, system: &LinearSystem) -> f64 {
        self.big_m.unwrap_or_else(|| {
            let max_rhs = system.constraints().map(|c| c.rhs.abs()).fold(0.0, f64::max);
            1e4 * (1.0 + max_rhs)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub gap: f64,
    pub node_limit_hit: bool,
    pub big_m: f64,
    pub big_m_doublings: usize,
    /// False when the slack audit still failed after the last doubling.
    pub big_m_audit_passed: bool,
    /// Incumbent objectives in discovery order.
    pub incumbents: Vec<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexSolution {
    #[serde(rename = "F")]
    pub f: f64,
    pub set: UncertaintySetSpec,
    /// Inequality labels, indexing `lambda`, `slacks` and `y`.
    pub labels: Vec<String>,
    pub active: Vec<String>,
    pub weakly_active: Vec<String>,
    /// Constraints that limit at the same index once `active` is forced off.
    pub co_limiting: Vec<String>,
    pub theta_star: Vec<f64>,
    pub z_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub slacks: Vec<f64>,
    pub y: Vec<bool>,
    pub stats: SolveStats,
}

impl FlexSolution {
    /// `active` followed by `co_limiting`.
    pub fn limiting(&self) -> Vec<String> {
        self.active.iter().chain(&self.co_limiting).cloned().collect()
    }
}

fn solve_once(
    system: &LinearSystem,
    compiled: &crate::sets::CompiledSet,
    cfg: &FlexConfig,
    pinned: &[usize],
) -> Result<Option<(mip::MipSolution, KktLayoutInfo)>> {
    let mut big_m = cfg.big_m_for(system);
    let mut doublings = 0;
    loop {
        let model = KktModel::new(system, compiled, big_m, pinned);
        let Some(sol) = model.solve(&cfg.bnb)? else {
            return Ok(None);
        };
        let l = model.layout;
        let worst = (0..l.nj)
            .filter(|&j| !sol.y[j])
            .map(|j| sol.primal[l.s + j])
            .fold(0.0, f64::max);
        let passed = worst <= 0.5 * big_m;
        if passed || doublings == MAX_BIG_M_DOUBLINGS {
            return Ok(Some((
                sol,
                KktLayoutInfo {
                    layout: l,
                    big_m,
                    doublings,
                    passed,
                },
            )));
        }
        big_m *= 2.0;
        doublings += 1;
    }
}

struct KktLayoutInfo {
    layout: mip::Layout,
    big_m: f64,
    doublings: usize,
    passed: bool,
}

/// Largest `delta` such that every `theta` in `T(delta)` admits a feasible
/// recourse, with the active-set certificate that proves it.
pub fn flexibility_index(system: &LinearSystem, set: &UncertaintySetSpec, cfg: &FlexConfig) -> Result<FlexSolution> {
    let start = Instant::now();
    system.check()?;
    let set = set.resolved()?;
    let compiled = set.compile()?;
    if compiled.n_theta != system.n_theta() {
        return Err(FlexError::DimensionMismatch(format!(
            "set has dimension {}, system has {} parameters",
            compiled.n_theta,
            system.n_theta()
        )));
    }
    let mean = set.mean().expect("validated").to_vec();
    if !set.membership(&mean, 0.0)? {
        return Err(FlexError::InvalidSet(
            "the nominal point violates a half-space of the set".into(),
        ));
    }
    let psi_nominal = Psi::new(system).eval(&mean)?;
    if psi_nominal > cfg.tol_feas {
        return Err(FlexError::InfeasibleNominal { psi: psi_nominal });
    }
    let Some((sol, info)) = solve_once(system, &compiled, cfg, &[])? else {
        return Err(FlexError::Unbounded(
            "no constraint can become binding inside the uncertainty set".into(),
        ));
    };
    let l = info.layout;
    let labels: Vec<String> = system.inequalities.iter().map(|c| c.label.clone()).collect();
    let f = sol.f;
    let v = &sol.primal;
    let lambda: Vec<f64> = v[l.lam..l.lam + l.nj].to_vec();
    let mut active = Vec::new();
    let mut weakly_active = Vec::new();
    for j in 0..l.nj {
        if sol.y[j] {
            if lambda[j] > ACTIVE_MULTIPLIER_TOL {
                active.push(labels[j].clone());
            } else {
                weakly_active.push(labels[j].clone());
            }
        }
    }

    let mut co_limiting = Vec::new();
    if cfg.sweep_alternates {
        let mut off: Vec<usize> = (0..l.nj).filter(|&j| sol.y[j] && lambda[j] > ACTIVE_MULTIPLIER_TOL).collect();
        while off.len() < l.nj {
            let Some((alt, _)) = solve_once(system, &compiled, cfg, &off)? else {
                break;
            };
            if alt.f > f * (1.0 + EQUAL_INDEX_TOL) + 1e-12 {
                break;
            }
            let alt_lambda = &alt.primal[l.lam..l.lam + l.nj];
            let fresh: Vec<usize> = (0..l.nj)
                .filter(|&j| alt.y[j] && alt_lambda[j] > ACTIVE_MULTIPLIER_TOL && !off.contains(&j))
                .collect();
            if fresh.is_empty() {
                break;
            }
            co_limiting.extend(fresh.iter().map(|&j| labels[j].clone()));
            off.extend(fresh);
        }
    }

    Ok(FlexSolution {
        f,
        set,
        active,
        weakly_active,
        co_limiting,
        theta_star: v[..l.nt].to_vec(),
        z_star: v[l.nt..l.nt + l.nz].to_vec(),
        x_star: v[l.nt + l.nz..l.delta].to_vec(),
        lambda,
        mu: v[l.mu..l.mu + l.ni].to_vec(),
        slacks: v[l.s..l.s + l.nj].to_vec(),
        y: sol.y.clone(),
        labels,
        stats: SolveStats {
            nodes: sol.nodes,
            gap: sol.gap,
            node_limit_hit: sol.status == BnbStatus::NodeLimit,
            big_m: info.big_m,
            big_m_doublings: info.doublings,
            big_m_audit_passed: info.passed,
            incumbents: sol.history,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Residuals of the optimality certificate carried by a [`FlexSolution`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    /// `|sum lambda - 1|`
    pub lambda_sum_error: f64,
    /// Infinity norm of the recourse/state stationarity residual.
    pub stationarity_error: f64,
    /// Largest violation of `lambda_j <= y_j`, `s_j <= U (1 - y_j)` and
    /// nonnegativity.
    pub complementarity_error: f64,
    /// Largest violation of the system rows at `(theta*, z*, x*)` given `s`.
    pub primal_error: f64,
    pub member_at_f: bool,
    /// Outside `T(F (1 - 1e-6))`; vacuous when `F = 0`.
    pub outside_below_f: bool,
    pub psi_at_theta_star: f64,
}

impl CertificateReport {
    pub fn passes(&self) -> bool {
        self.lambda_sum_error <= 1e-8
            && self.stationarity_error <= 1e-7
            && self.complementarity_error <= 1e-8
            && self.primal_error <= 1e-7
            && self.member_at_f
            && self.outside_below_f
            && self.psi_at_theta_star.abs() <= 1e-7
    }
}

pub fn check_certificate(system: &LinearSystem, sol: &FlexSolution) -> Result<CertificateReport> {
    let nz = system.n_z();
    let lambda_sum_error = (sol.lambda.iter().sum::<f64>() - 1.0).abs();
    let mut stationarity_error: f64 = 0.0;
    for k in 0..nz + system.n_x() {
        let coef = |c: &crate::model::AffineConstraint| if k < nz { c.a_z[k] } else { c.a_x[k - nz] };
        let r: f64 = system.inequalities.iter().zip(&sol.lambda).map(|(c, l)| l * coef(c)).sum::<f64>()
            + system.equalities.iter().zip(&sol.mu).map(|(c, m)| m * coef(c)).sum::<f64>();
        stationarity_error = stationarity_error.max(r.abs());
    }
    let u = sol.stats.big_m;
    let mut complementarity_error: f64 = 0.0;
    let mut primal_error: f64 = 0.0;
    for (j, c) in system.inequalities.iter().enumerate() {
        let y = if sol.y[j] { 1.0 } else { 0.0 };
        let (l, s) = (sol.lambda[j], sol.slacks[j]);
        complementarity_error = complementarity_error
            .max(l - y)
            .max(s - u * (1.0 - y))
            .max(-l)
            .max(-s);
        let r = c.residual(&sol.theta_star, &sol.z_star, &sol.x_star) + s;
        primal_error = primal_error.max(r.abs() / (1.0 + c.rhs.abs()));
    }
    for c in &system.equalities {
        let r = c.residual(&sol.theta_star, &sol.z_star, &sol.x_star);
        primal_error = primal_error.max(r.abs() / (1.0 + c.rhs.abs()));
    }
    let f = sol.f;
    let member_at_f = sol.set.membership(&sol.theta_star, f * (1.0 + 1e-9) + 1e-12)?;
    let outside_below_f = f == 0.0 || !sol.set.membership(&sol.theta_star, f * (1.0 - 1e-6))?;
    let psi_at_theta_star = Psi::new(system).eval(&sol.theta_star)?;
    Ok(CertificateReport {
        lambda_sum_error,
        stationarity_error,
        complementarity_error,
        primal_error,
        member_at_f,
        outside_below_f,
        psi_at_theta_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineConstraint;

    fn design(a1: f64) -> LinearSystem {
        LinearSystem {
            theta_names: vec!["t1".into(), "t2".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![
                AffineConstraint::theta_only("f1", vec![a1, 1.0], 14.0),
                AffineConstraint::theta_only("f2", vec![a1, -2.0], 2.0),
                AffineConstraint::theta_only("f3", vec![-1.0, 0.0], 0.0),
                AffineConstraint::theta_only("f4", vec![0.0, -1.0], 0.0),
            ],
            equalities: vec![],
        }
    }

    fn ellipsoid() -> UncertaintySetSpec {
        UncertaintySetSpec::Ellipsoid {
            mean: vec![4.0, 5.0],
            covariance: vec![vec![2.0, 1.0], vec![1.0, 3.0]],
        }
    }

    fn hyperbox() -> UncertaintySetSpec {
        UncertaintySetSpec::Hyperbox {
            mean: vec![4.0, 5.0],
            dev_minus: vec![4.243, 5.196],
            dev_plus: vec![4.243, 5.196],
        }
    }

    #[test]
    fn design_a_ellipsoid() {
        let sys = design(1.0);
        let sol = flexibility_index(&sys, &ellipsoid(), &FlexConfig::default()).unwrap();
        assert!((sol.f - 25.0 / 7.0).abs() < 1e-9, "{sol:?}");
        assert_eq!(sol.active, vec!["f1"]);
        assert!(sol.co_limiting.is_empty());
        let cert = check_certificate(&sys, &sol).unwrap();
        assert!(cert.passes(), "{cert:?}");
    }

    #[test]
    fn design_b_labels() {
        let sys = design(0.75);
        let b = flexibility_index(&sys, &hyperbox(), &FlexConfig::default()).unwrap();
        assert_eq!(b.active, vec!["f2"]);
        assert!((b.f - 0.66).abs() < 0.01);
        let e = flexibility_index(&sys, &ellipsoid(), &FlexConfig::default()).unwrap();
        assert_eq!(e.active, vec!["f1"]);
        assert!((e.f - 6.4).abs() < 1e-9);
        assert!(check_certificate(&sys, &b).unwrap().passes());
    }

    #[test]
    fn single_constraint_linf() {
        let sys = LinearSystem {
            theta_names: vec!["t".into(), "u".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![AffineConstraint::theta_only("g", vec![1.0, 0.0], 3.5)],
            equalities: vec![],
        };
        let set = UncertaintySetSpec::PNorm {
            mean: vec![1.0, 0.0],
            p: crate::sets::PNorm::LInf,
        };
        let sol = flexibility_index(&sys, &set, &FlexConfig::default()).unwrap();
        assert!((sol.f - 2.5).abs() < 1e-9, "{sol:?}");
    }

    #[test]
    fn infeasible_nominal_and_boundary_nominal() {
        let sys = design(1.0);
        let off = UncertaintySetSpec::PNorm {
            mean: vec![20.0, 5.0],
            p: crate::sets::PNorm::L1,
        };
        assert!(matches!(
            flexibility_index(&sys, &off, &FlexConfig::default()),
            Err(FlexError::InfeasibleNominal { .. })
        ));
        let edge = UncertaintySetSpec::PNorm {
            mean: vec![0.0, 5.0],
            p: crate::sets::PNorm::L1,
        };
        let sol = flexibility_index(&sys, &edge, &FlexConfig::default()).unwrap();
        assert_eq!(sol.f, 0.0);
    }

    #[test]
    fn truncation_that_hides_every_constraint_is_unbounded() {
        let sys = LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![AffineConstraint::theta_only("g", vec![1.0], 10.0)],
            equalities: vec![],
        };
        let set = UncertaintySetSpec::Intersection {
            members: vec![
                UncertaintySetSpec::PNorm {
                    mean: vec![0.0],
                    p: crate::sets::PNorm::L1,
                },
                UncertaintySetSpec::Halfspaces {
                    a: vec![vec![1.0]],
                    b: vec![5.0],
                },
            ],
        };
        assert!(matches!(
            flexibility_index(&sys, &set, &FlexConfig::default()),
            Err(FlexError::Unbounded(_))
        ));
    }
}
