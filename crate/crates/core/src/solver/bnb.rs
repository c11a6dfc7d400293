//! Depth-first branch and bound over binary variables.
//!
//! The caller supplies the relaxation: given the current fixings it returns
//! a lower bound, the relaxed values of the binaries and an arbitrary
//! payload (usually the full relaxed solution). Nodes are explored depth
//! first with the `1` branch before the `0` branch.

use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchRule {
    /// Branch on the binary farthest from integrality, lowest index on ties.
    #[default]
    MostFractional,
    /// Branch on the lowest-index fractional binary.
    FirstFractional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbConfig {
    pub rel_gap: f64,
    pub abs_tol: f64,
    pub integrality_tol: f64,
    pub node_limit: usize,
    pub branching: BranchRule,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            rel_gap: 1e-9,
            abs_tol: 1e-9,
            integrality_tol: 1e-9,
            node_limit: 1_000_000,
            branching: BranchRule::MostFractional,
        }
    }
}

/// Result of one node relaxation.
#[derive(Debug, Clone)]
pub enum Relaxation<T> {
    Infeasible,
    Solved {
        bound: f64,
        /// Relaxed values of the binaries, in `[0, 1]`.
        binaries: Vec<f64>,
        payload: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct Incumbent<T> {
    pub objective: f64,
    pub binaries: Vec<bool>,
    pub payload: T,
}

#[derive(Debug, Clone)]
pub struct BnbOutcome<T> {
    pub status: BnbStatus,
    pub incumbent: Option<Incumbent<T>>,
    /// Smallest bound over nodes left unexplored (the incumbent value when
    /// the search finished).
    pub best_bound: f64,
    pub nodes: usize,
    /// Absolute gap `incumbent - best_bound`.
    pub gap: f64,
    /// Objective of every incumbent in the order they were found.
    pub history: Vec<f64>,
}

struct Node {
    fixings: Vec<Option<bool>>,
    parent_bound: f64,
}

fn pick_branch(binaries: &[f64], fixings: &[Option<bool>], cfg: &BnbConfig) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in binaries.iter().enumerate() {
        if fixings[j].is_some() {
            continue;
        }
        let frac = (v - v.round()).abs();
        if frac <= cfg.integrality_tol {
            continue;
        }
        match cfg.branching {
            BranchRule::FirstFractional => return Some(j),
            BranchRule::MostFractional => {
                if best.is_none_or(|(_, f)| frac > f) {
                    best = Some((j, frac));
                }
            }
        }
    }
    best.map(|(j, _)| j)
}

/// Minimize over `n_binary` binaries using the supplied relaxation oracle.
pub fn branch_and_bound<T, F>(
    n_binary: usize,
    config: &BnbConfig,
    mut relax: F,
) -> Result<BnbOutcome<T>, SolverError>
where
    F: FnMut(&[Option<bool>]) -> Result<Relaxation<T>, SolverError>,
{
    let mut stack = vec![Node {
        fixings: vec![None; n_binary],
        parent_bound: f64::NEG_INFINITY,
    }];
    let mut incumbent: Option<Incumbent<T>> = None;
    let mut history = Vec::new();
    let mut nodes = 0;
    let cutoff = |inc: &Option<Incumbent<T>>| match inc {
        Some(i) => i.objective - config.abs_tol.max(config.rel_gap * i.objective.abs()),
        None => f64::INFINITY,
    };

    while let Some(node) = stack.pop() {
        if node.parent_bound >= cutoff(&incumbent) {
            continue;
        }
        if nodes >= config.node_limit {
            stack.push(node);
            break;
        }
        nodes += 1;
        let (bound, binaries, payload) = match relax(&node.fixings)? {
            Relaxation::Infeasible => continue,
            Relaxation::Solved {
                bound,
                binaries,
                payload,
            } => (bound, binaries, payload),
        };
        if binaries.len() != n_binary {
            return Err(SolverError::DimensionMismatch(format!(
                "relaxation returned {} binaries, expected {n_binary}",
                binaries.len()
            )));
        }
        if bound >= cutoff(&incumbent) {
            continue;
        }
        match pick_branch(&binaries, &node.fixings, config) {
            None => {
                let rounded = binaries
                    .iter()
                    .zip(&node.fixings)
                    .map(|(&v, f)| f.unwrap_or(v >= 0.5))
                    .collect();
                history.push(bound);
                incumbent = Some(Incumbent {
                    objective: bound,
                    binaries: rounded,
                    payload,
                });
            }
            Some(j) => {
                for value in [false, true] {
                    let mut fixings = node.fixings.clone();
                    fixings[j] = Some(value);
                    stack.push(Node {
                        fixings,
                        parent_bound: bound,
                    });
                }
            }
        }
    }

    let limit_hit = !stack.is_empty();
    let open_bound = stack
        .iter()
        .map(|n| n.parent_bound)
        .fold(f64::INFINITY, f64::min);
    let (status, best_bound) = match (&incumbent, limit_hit) {
        (_, true) => (
            BnbStatus::NodeLimit,
            incumbent
                .as_ref()
                .map_or(open_bound, |i| open_bound.min(i.objective)),
        ),
        (Some(i), false) => (BnbStatus::Optimal, i.objective),
        (None, false) => (BnbStatus::Infeasible, f64::INFINITY),
    };
    let gap = incumbent
        .as_ref()
        .map_or(f64::INFINITY, |i| (i.objective - best_bound).max(0.0));
    Ok(BnbOutcome {
        status,
        incumbent,
        best_bound,
        nodes,
        gap,
        history,
    })
}
