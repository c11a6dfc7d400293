//! Linear systems `a_theta . theta + a_z . z + a_x . x {<=, =} rhs` with
//! uncertain parameters `theta`, recourse `z` and states `x`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::solver::dense::{column_rank_deficiency, lu_solve_multi};

const ELIMINATION_PIVOT_TOL: f64 = 1e-10;

/// One affine row. Inequalities read `lhs <= rhs`, equalities `lhs = rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub label: String,
    #[serde(rename = "theta", default)]
    pub a_theta: Vec<f64>,
    #[serde(rename = "recourse", default)]
    pub a_z: Vec<f64>,
    #[serde(rename = "state", default)]
    pub a_x: Vec<f64>,
    pub rhs: f64,
}

impl AffineConstraint {
    pub fn new(label: impl Into<String>, a_theta: Vec<f64>, a_z: Vec<f64>, a_x: Vec<f64>, rhs: f64) -> Self {
        Self {
            label: label.into(),
            a_theta,
            a_z,
            a_x,
            rhs,
        }
    }

    /// A constraint on `theta` alone.
    pub fn theta_only(label: impl Into<String>, a_theta: Vec<f64>, rhs: f64) -> Self {
        Self::new(label, a_theta, Vec::new(), Vec::new(), rhs)
    }

    /// Coefficients over the stacked vector `(theta, z, x)`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.a_theta.len() + self.a_z.len() + self.a_x.len());
        v.extend_from_slice(&self.a_theta);
        v.extend_from_slice(&self.a_z);
        v.extend_from_slice(&self.a_x);
        v
    }

    /// `lhs - rhs` at the given point.
    pub fn residual(&self, theta: &[f64], z: &[f64], x: &[f64]) -> f64 {
        dot(&self.a_theta, theta) + dot(&self.a_z, z) + dot(&self.a_x, x) - self.rhs
    }

    fn all_zero(&self) -> bool {
        self.a_theta.iter().chain(&self.a_z).chain(&self.a_x).all(|&c| c == 0.0)
    }

    fn scaled(&self, k: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|c| c * k).collect();
        Self {
            label: self.label.clone(),
            a_theta: s(&self.a_theta),
            a_z: s(&self.a_z),
            a_x: s(&self.a_x),
            rhs: self.rhs * k,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    #[serde(rename = "theta")]
    pub theta_names: Vec<String>,
    #[serde(rename = "recourse", default)]
    pub recourse_names: Vec<String>,
    #[serde(rename = "state", default)]
    pub state_names: Vec<String>,
    pub inequalities: Vec<AffineConstraint>,
    #[serde(default)]
    pub equalities: Vec<AffineConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Dimension,
    NonFinite,
    DuplicateLabel,
    EmptyLabel,
    NoTheta,
    NoInequalities,
    /// All-zero inequality with `rhs >= 0`; kept but skipped by ranking.
    Vacuous,
    /// All-zero inequality with `rhs < 0`.
    InfeasibleByConstruction,
}

impl DiagnosticKind {
    /// Flags describe a well-formed system; everything else is a defect.
    pub fn is_flag(self) -> bool {
        matches!(self, DiagnosticKind::Vacuous | DiagnosticKind::InfeasibleByConstruction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Offending constraint label or field name.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Inequality labels to drop from a system.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintFilter {
    pub excluded_labels: BTreeSet<String>,
}

impl ConstraintFilter {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            excluded_labels: labels.into_iter().map(Into::into).collect(),
        }
    }
}

impl LinearSystem {
    pub fn n_theta(&self) -> usize {
        self.theta_names.len()
    }

    pub fn n_z(&self) -> usize {
        self.recourse_names.len()
    }

    pub fn n_x(&self) -> usize {
        self.state_names.len()
    }

    /// Length of the stacked `(theta, z, x)` vector.
    pub fn n_vars(&self) -> usize {
        self.n_theta() + self.n_z() + self.n_x()
    }

    pub fn has_recourse(&self) -> bool {
        self.n_z() + self.n_x() > 0
    }

    pub fn constraints(&self) -> impl Iterator<Item = &AffineConstraint> {
        self.inequalities.iter().chain(&self.equalities)
    }

    pub fn inequality_index(&self, label: &str) -> Option<usize> {
        self.inequalities.iter().position(|c| c.label == label)
    }

    /// Parse a system file. Omitted coefficient arrays become zeros.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut sys: LinearSystem = serde_json::from_str(text)?;
        sys.fill_missing();
        sys.check()?;
        Ok(sys)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn fill_missing(&mut self) {
        let (nt, nz, nx) = (self.n_theta(), self.n_z(), self.n_x());
        for c in self.inequalities.iter_mut().chain(self.equalities.iter_mut()) {
            for (v, n) in [(&mut c.a_theta, nt), (&mut c.a_z, nz), (&mut c.a_x, nx)] {
                if v.is_empty() {
                    v.resize(n, 0.0);
                }
            }
        }
    }

    /// All invariant violations and flags, in constraint order.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |kind, subject: &str, message: String| {
            out.push(Diagnostic {
                kind,
                subject: subject.to_string(),
                message,
            })
        };
        if self.n_theta() == 0 {
            push(DiagnosticKind::NoTheta, "theta", "at least one uncertain parameter is required".into());
        }
        if self.inequalities.is_empty() {
            push(DiagnosticKind::NoInequalities, "inequalities", "at least one inequality is required".into());
        }
        let mut seen = HashSet::new();
        let dims = [
            ("theta", self.n_theta()),
            ("recourse", self.n_z()),
            ("state", self.n_x()),
        ];
        for (is_eq, c) in self
            .inequalities
            .iter()
            .map(|c| (false, c))
            .chain(self.equalities.iter().map(|c| (true, c)))
        {
            if c.label.is_empty() {
                push(DiagnosticKind::EmptyLabel, "label", "constraint label is empty".into());
            } else if !seen.insert(c.label.as_str()) {
                push(DiagnosticKind::DuplicateLabel, &c.label, format!("duplicate label `{}`", c.label));
            }
            for ((field, n), v) in dims.iter().zip([&c.a_theta, &c.a_z, &c.a_x]) {
                if v.len() != *n {
                    push(
                        DiagnosticKind::Dimension,
                        &c.label,
                        format!("`{field}` has {} coefficients, expected {n}", v.len()),
                    );
                }
            }
            if !c.rhs.is_finite() || c.stacked().iter().any(|v| !v.is_finite()) {
                push(DiagnosticKind::NonFinite, &c.label, "non-finite coefficient or rhs".into());
            }
            if !is_eq && c.all_zero() {
                if c.rhs >= 0.0 {
                    push(DiagnosticKind::Vacuous, &c.label, "all coefficients are zero".into());
                } else {
                    push(
                        DiagnosticKind::InfeasibleByConstruction,
                        &c.label,
                        format!("all coefficients are zero and rhs {} < 0", c.rhs),
                    );
                }
            }
        }
        out
    }

    /// Fail on any diagnostic that is not a mere flag.
    pub fn check(&self) -> Result<()> {
        let defects: Vec<String> = self
            .validate()
            .into_iter()
            .filter(|d| !d.kind.is_flag())
            .map(|d| d.to_string())
            .collect();
        if defects.is_empty() {
            Ok(())
        } else {
            Err(FlexError::InvalidSystem(defects.join("; ")))
        }
    }

    pub fn is_vacuous(&self, j: usize) -> bool {
        let c = &self.inequalities[j];
        c.all_zero() && c.rhs >= 0.0
    }

    /// Drop the listed inequalities; everything else is copied unchanged.
    pub fn apply_filter(&self, filter: &ConstraintFilter) -> Result<LinearSystem> {
        for label in &filter.excluded_labels {
            if self.equalities.iter().any(|c| &c.label == label) {
                return Err(FlexError::EqualityExclusion(label.clone()));
            }
            if self.inequality_index(label).is_none() {
                return Err(FlexError::UnknownLabel(label.clone()));
            }
        }
        let mut out = self.clone();
        out.inequalities
            .retain(|c| !filter.excluded_labels.contains(&c.label));
        Ok(out)
    }

    /// Reclassify the named recourse variables as states (appended after
    /// existing states, in the given order).
    pub fn recourse_to_states(&self, names: &[&str]) -> Result<LinearSystem> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let i = self
                .recourse_names
                .iter()
                .position(|r| r == name)
                .ok_or_else(|| FlexError::UnknownLabel((*name).to_string()))?;
            idx.push(i);
        }
        let keep: Vec<usize> = (0..self.n_z()).filter(|i| !idx.contains(i)).collect();
        let move_row = |c: &AffineConstraint| {
            let mut c = c.clone();
            let moved: Vec<f64> = idx.iter().map(|&i| c.a_z[i]).collect();
            c.a_z = keep.iter().map(|&i| c.a_z[i]).collect();
            c.a_x.extend(moved);
            c
        };
        let mut out = self.clone();
        out.recourse_names = keep.iter().map(|&i| self.recourse_names[i].clone()).collect();
        out.state_names
            .extend(idx.iter().map(|&i| self.recourse_names[i].clone()));
        out.inequalities = self.inequalities.iter().map(move_row).collect();
        out.equalities = self.equalities.iter().map(move_row).collect();
        Ok(out)
    }

    /// Substitute `x = E_x^{-1}(e - E_theta theta - E_z z)` into the
    /// inequalities, consuming every equality.
    pub fn eliminate_states(&self) -> Result<LinearSystem> {
        let nx = self.n_x();
        if nx == 0 {
            return Ok(self.clone());
        }
        self.check()?;
        let (nt, nz) = (self.n_theta(), self.n_z());
        let m = self.equalities.len();
        let ex = DMatrix::from_fn(m, nx, |i, k| self.equalities[i].a_x[k]);
        if m < nx {
            let pivot = column_rank_deficiency(&ex, ELIMINATION_PIVOT_TOL).unwrap_or(0.0);
            return Err(FlexError::SingularElimination { pivot });
        }
        if let Some(pivot) = column_rank_deficiency(&ex, ELIMINATION_PIVOT_TOL) {
            return Err(FlexError::SingularElimination { pivot });
        }
        if m != nx {
            return Err(FlexError::DimensionMismatch(format!(
                "{m} equalities for {nx} states"
            )));
        }
        // Columns: [e | E_theta | E_z]
        let rhs = DMatrix::from_fn(m, 1 + nt + nz, |i, k| {
            let c = &self.equalities[i];
            match k {
                0 => c.rhs,
                k if k <= nt => c.a_theta[k - 1],
                k => c.a_z[k - 1 - nt],
            }
        });
        let sol = lu_solve_multi(&ex, &rhs, ELIMINATION_PIVOT_TOL)
            .map_err(|pivot| FlexError::SingularElimination { pivot })?;
        let inequalities = self
            .inequalities
            .iter()
            .map(|c| {
                let ax = |k: usize| (0..nx).map(|r| c.a_x[r] * sol[(r, k)]).sum::<f64>();
                AffineConstraint {
                    label: c.label.clone(),
                    a_theta: (0..nt).map(|i| c.a_theta[i] - ax(1 + i)).collect(),
                    a_z: (0..nz).map(|i| c.a_z[i] - ax(1 + nt + i)).collect(),
                    a_x: Vec::new(),
                    rhs: c.rhs - ax(0),
                }
            })
            .collect();
        Ok(LinearSystem {
            theta_names: self.theta_names.clone(),
            recourse_names: self.recourse_names.clone(),
            state_names: Vec::new(),
            inequalities,
            equalities: Vec::new(),
        })
    }

    /// Rescale every inequality to a unit-norm coefficient vector.
    pub fn normalized_rows(&self) -> LinearSystem {
        let mut out = self.clone();
        for c in &mut out.inequalities {
            let norm = c.stacked().iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                *c = c.scaled(1.0 / norm);
            }
        }
        out
    }

    /// Split a stacked `(theta, z, x)` vector.
    pub fn split<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (t, rest) = v.split_at(self.n_theta());
        let (z, x) = rest.split_at(self.n_z());
        (t, z, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn design_a() -> LinearSystem {
        LinearSystem {
            theta_names: vec!["theta1".into(), "theta2".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![
                AffineConstraint::theta_only("f1", vec![1.0, 1.0], 14.0),
                AffineConstraint::theta_only("f2", vec![1.0, -2.0], 2.0),
                AffineConstraint::theta_only("f3", vec![-1.0, 0.0], 0.0),
                AffineConstraint::theta_only("f4", vec![0.0, -1.0], 0.0),
            ],
            equalities: vec![],
        }
    }

    #[test]
    fn design_a_is_clean() {
        assert!(design_a().validate().is_empty());
    }

    #[test]
    fn duplicate_label_named_once() {
        let mut sys = design_a();
        sys.inequalities[1].label = "f1".into();
        let d = sys.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::DuplicateLabel);
        assert_eq!(d[0].subject, "f1");
    }

    #[test]
    fn zero_rows_are_flagged() {
        let mut sys = design_a();
        sys.inequalities.push(AffineConstraint::theta_only("bad", vec![0.0, 0.0], -1.0));
        sys.inequalities.push(AffineConstraint::theta_only("noop", vec![0.0, 0.0], 1.0));
        let kinds: Vec<_> = sys.validate().into_iter().map(|d| (d.kind, d.subject)).collect();
        assert_eq!(
            kinds,
            vec![
                (DiagnosticKind::InfeasibleByConstruction, "bad".to_string()),
                (DiagnosticKind::Vacuous, "noop".to_string())
            ]
        );
        assert!(sys.check().is_ok());
        assert!(sys.is_vacuous(5));
    }

    #[test]
    fn json_defaults_missing_coefficients() {
        let text = r#"{"theta":["a","b"],"recourse":["z"],
            "inequalities":[{"label":"g","theta":[1,0],"rhs":2},
                            {"label":"h","recourse":[1],"rhs":1}]}"#;
        let sys = LinearSystem::from_json_str(text).unwrap();
        assert_eq!(sys.inequalities[0].a_z, vec![0.0]);
        assert_eq!(sys.inequalities[1].a_theta, vec![0.0, 0.0]);
        let back = LinearSystem::from_json_str(&sys.to_json().unwrap()).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn filter_rules() {
        let sys = design_a();
        let out = sys.apply_filter(&ConstraintFilter::new(["f1"])).unwrap();
        assert_eq!(out.inequalities.len(), 3);
        assert_eq!(out.inequalities[0], sys.inequalities[1]);
        assert_eq!(sys.apply_filter(&ConstraintFilter::default()).unwrap(), sys);
        assert!(matches!(
            sys.apply_filter(&ConstraintFilter::new(["nope"])),
            Err(FlexError::UnknownLabel(_))
        ));
        let mut with_eq = sys.clone();
        with_eq.equalities.push(AffineConstraint::theta_only("h1", vec![1.0, 0.0], 4.0));
        assert!(matches!(
            with_eq.apply_filter(&ConstraintFilter::new(["h1"])),
            Err(FlexError::EqualityExclusion(_))
        ));
    }

    #[test]
    fn elimination_errors() {
        let sys = LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec![],
            state_names: vec!["x1".into(), "x2".into(), "x3".into()],
            inequalities: vec![AffineConstraint::new("g", vec![1.0], vec![], vec![1.0, 0.0, 0.0], 1.0)],
            equalities: vec![
                AffineConstraint::new("h1", vec![0.0], vec![], vec![1.0, -1.0, 0.0], 0.0),
                AffineConstraint::new("h2", vec![0.0], vec![], vec![1.0, 1.0, 0.0], 0.0),
            ],
        };
        assert!(matches!(
            sys.eliminate_states(),
            Err(FlexError::SingularElimination { .. })
        ));
        let mut over = sys.clone();
        over.state_names.pop();
        for c in over.inequalities.iter_mut().chain(over.equalities.iter_mut()) {
            c.a_x.pop();
        }
        over.equalities
            .push(AffineConstraint::new("h3", vec![1.0], vec![], vec![0.0, 0.0], 0.0));
        assert!(matches!(
            over.eliminate_states(),
            Err(FlexError::DimensionMismatch(_))
        ));
        assert_eq!(design_a().eliminate_states().unwrap(), design_a());
    }

    #[test]
    fn elimination_substitutes() {
        // x = theta + z ; x <= 3  =>  theta + z <= 3
        let sys = LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec!["z".into()],
            state_names: vec!["x".into()],
            inequalities: vec![AffineConstraint::new("g", vec![0.0], vec![0.0], vec![1.0], 3.0)],
            equalities: vec![AffineConstraint::new("h", vec![-1.0], vec![-1.0], vec![2.0], 0.0)],
        };
        let out = sys.eliminate_states().unwrap();
        assert!(out.equalities.is_empty() && out.state_names.is_empty());
        let g = &out.inequalities[0];
        assert_eq!(g.label, "g");
        assert!((g.a_theta[0] - 0.5).abs() < 1e-15 && (g.a_z[0] - 0.5).abs() < 1e-15);
        assert!((g.rhs - 3.0).abs() < 1e-15);
    }

    #[test]
    fn recourse_moves_to_states() {
        let sys = LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec!["a".into(), "b".into()],
            state_names: vec![],
            inequalities: vec![AffineConstraint::new("g", vec![1.0], vec![2.0, 3.0], vec![], 1.0)],
            equalities: vec![],
        };
        let out = sys.recourse_to_states(&["a"]).unwrap();
        assert_eq!(out.recourse_names, vec!["b".to_string()]);
        assert_eq!(out.state_names, vec!["a".to_string()]);
        assert_eq!(out.inequalities[0].a_z, vec![3.0]);
        assert_eq!(out.inequalities[0].a_x, vec![2.0]);
    }
}
