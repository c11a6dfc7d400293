//! Flexibility analysis of linear systems under uncertainty: the
//! flexibility index over several uncertainty-set shapes, limiting-constraint
//! ranking, Monte Carlo stochastic flexibility, nominal-point centers and
//! distribution-network models.

pub mod centers;
pub mod error;
pub mod feasibility;
pub mod flex;
pub mod gamma;
pub mod model;
pub mod network;
pub mod report;
pub mod sets;
pub mod solver;

pub use centers::{analytic_center, arithmetic_center, center, feasible_center, CenterMethod, CenterResult};
pub use error::{FlexError, Result};
pub use feasibility::{psi, stochastic_flexibility, GaussianSpec, Psi, SfEstimate};
pub use flex::{
    check_certificate, compare_designs, flexibility_index, rank_constraints, verify_solution, CertificateReport,
    CompareRow, FlexConfig, FlexSolution, IndexEntry, MonteCarlo, RankLevel, RankResult, SolveStats, Termination,
    VerificationReport,
};
pub use gamma::confidence_level;
pub use model::{AffineConstraint, ConstraintFilter, Diagnostic, DiagnosticKind, LinearSystem};
pub use network::{build_system, component_rank_map, emit_dot, ComponentKind, ComponentRank, ComponentRankMap, NetworkModel};
pub use sets::{boundary_sample, cvar_norm, PNorm, UncertaintySetSpec};
