//! Boundary-sampling check of a computed index.

use serde::{Deserialize, Serialize};

use super::FlexSolution;
use crate::error::Result;
use crate::feasibility::Psi;
use crate::model::LinearSystem;
use crate::sets::boundary_sample;

/// Samples with `psi` above this count as violations.
pub const VIOLATION_TOL: f64 = 1e-7;
/// Relative inflation of `F` for the advisory probe.
pub const ADVISORY_INFLATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub seed: u64,
    pub violations_at_f: usize,
    pub max_psi_at_f: f64,
    pub advisory_delta: f64,
    /// Violations at `F (1 + 1e-3)`; expected to be positive but only
    /// reported, since random rays can miss the touch point.
    pub advisory_violations: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations_at_f == 0
    }
}

fn scan(psi: &Psi<'_>, points: &[Vec<f64>]) -> Result<(usize, f64)> {
    let mut count = 0;
    let mut worst = f64::NEG_INFINITY;
    for p in points {
        let v = psi.eval(p)?;
        worst = worst.max(v);
        if v > VIOLATION_TOL {
            count += 1;
        }
    }
    Ok((count, worst))
}

/// Evaluate `psi` on `samples` boundary points of `T(F)` and of
/// `T(F (1 + 1e-3))`.
pub fn verify_solution(system: &LinearSystem, sol: &FlexSolution, samples: usize, seed: u64) -> Result<VerificationReport> {
    let psi = Psi::new(system);
    let at_f = boundary_sample(&sol.set, sol.f, samples, seed)?;
    let (violations_at_f, max_psi_at_f) = scan(&psi, &at_f)?;
    let advisory_delta = sol.f * (1.0 + ADVISORY_INFLATION);
    let beyond = boundary_sample(&sol.set, advisory_delta, samples, seed)?;
    let (advisory_violations, _) = scan(&psi, &beyond)?;
    Ok(VerificationReport {
        samples,
        seed,
        violations_at_f,
        max_psi_at_f,
        advisory_delta,
        advisory_violations,
    })
}
