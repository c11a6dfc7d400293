//! Side-by-side flexibility metrics for several designs.

use serde::{Deserialize, Serialize};

use super::{flexibility_index, FlexConfig};
use crate::error::{FlexError, Result};
use crate::feasibility::{stochastic_flexibility, GaussianSpec, SfEstimate};
use crate::gamma::confidence_level;
use crate::model::LinearSystem;
use crate::sets::UncertaintySetSpec;

#[derive(Debug, Clone, Copy)]
pub struct MonteCarlo<'a> {
    pub dist: &'a GaussianSpec,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Set kind, e.g. `hyperbox` or `ellipsoid`.
    pub set: String,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub design: String,
    pub indices: Vec<IndexEntry>,
    /// Confidence level from the first plain ellipsoid index.
    pub alpha_star: Option<f64>,
    pub sf: Option<SfEstimate>,
    pub sf_error: Option<String>,
}

impl CompareRow {
    /// First successful index computed with a set of the given kind.
    pub fn index_for(&self, kind: &str) -> Option<f64> {
        self.indices.iter().find(|e| e.set == kind).and_then(|e| e.f)
    }

    pub fn has_errors(&self) -> bool {
        self.sf_error.is_some() || self.indices.iter().any(|e| e.error.is_some())
    }
}

/// One row per design, in the given order. Failures are recorded per cell.
pub fn compare_designs(
    systems: &[(String, LinearSystem)],
    sets: &[UncertaintySetSpec],
    mc: Option<MonteCarlo<'_>>,
    cfg: &FlexConfig,
) -> Result<Vec<CompareRow>> {
    if let Some((_, first)) = systems.first() {
        if let Some((name, _)) = systems.iter().find(|(_, s)| s.n_theta() != first.n_theta()) {
            return Err(FlexError::DimensionMismatch(format!(
                "design `{name}` has a different number of parameters"
            )));
        }
    }
    let cfg = FlexConfig {
        sweep_alternates: false,
        ..cfg.clone()
    };
    let mut rows = Vec::with_capacity(systems.len());
    for (name, system) in systems {
        let mut indices = Vec::new();
        let mut alpha_star = None;
        for set in sets {
            let entry = match flexibility_index(system, set, &cfg) {
                Ok(sol) => {
                    if alpha_star.is_none() && set.is_ellipsoid() {
                        alpha_star = Some(confidence_level(sol.f, system.n_theta()));
                    }
                    IndexEntry {
                        set: set.kind_name(),
                        f: Some(sol.f),
                        error: None,
                    }
                }
                Err(e) => IndexEntry {
                    set: set.kind_name(),
                    f: None,
                    error: Some(e.to_string()),
                },
            };
            indices.push(entry);
        }
        let (sf, sf_error) = match mc {
            None => (None, None),
            Some(mc) => match stochastic_flexibility(system, mc.dist, mc.samples, mc.seed) {
                Ok(est) => (Some(est), None),
                Err(e) => (None, Some(e.to_string())),
            },
        };
        rows.push(CompareRow {
            design: name.clone(),
            indices,
            alpha_star,
            sf,
            sf_error,
        });
    }
    Ok(rows)
}
