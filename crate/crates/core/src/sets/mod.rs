//! Uncertainty sets `T(delta)` centered at a nominal point.
//!
//! Norm-type members scale with `delta`; half-spaces are fixed truncations.
//! The ellipsoid reads `delta` as the squared Mahalanobis level, every other
//! member reads it as a radius.

mod compile;
mod sample;

pub use compile::{CompiledSet, QuadraticKind, QuadraticRow, SetRow};
pub use sample::boundary_sample;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};

const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PNorm {
    L1,
    L2,
    LInf,
}

impl Serialize for PNorm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PNorm::L1 => s.serialize_u8(1),
            PNorm::L2 => s.serialize_u8(2),
            PNorm::LInf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(n) if n.as_f64() == Some(1.0) => Ok(PNorm::L1),
            serde_json::Value::Number(n) if n.as_f64() == Some(2.0) => Ok(PNorm::L2),
            serde_json::Value::String(s) if matches!(s.as_str(), "inf" | "infinity" | "Inf") => {
                Ok(PNorm::LInf)
            }
            _ => Err(D::Error::custom(format!("p must be 1, 2 or \"inf\", got {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum UncertaintySetSpec {
    /// `(theta - mean)' V^{-1} (theta - mean) <= delta`.
    Ellipsoid {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// `mean - delta dev_minus <= theta <= mean + delta dev_plus`.
    Hyperbox {
        mean: Vec<f64>,
        dev_minus: Vec<f64>,
        dev_plus: Vec<f64>,
    },
    #[serde(rename = "pnorm")]
    PNorm { mean: Vec<f64>, p: PNorm },
    #[serde(rename = "cvar")]
    CVaRNorm { mean: Vec<f64>, alpha: f64 },
    /// `A theta <= b`, independent of delta.
    Halfspaces {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Intersection { members: Vec<UncertaintySetSpec> },
    /// `theta >= 0`; the dimension is taken from sibling members when omitted.
    Nonnegative {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
}

/// The CVaR norm `min_t t (1 - alpha) n + sum_i max(|x_i| - t, 0)`.
///
/// The objective is convex piecewise linear in `t`, so the minimum sits at
/// `t = 0` or at one of the `|x_i|`.
pub fn cvar_norm(x: &[f64], alpha: f64) -> f64 {
    let n = x.len() as f64;
    let eval = |t: f64| t * (1.0 - alpha) * n + x.iter().map(|v| (v.abs() - t).max(0.0)).sum::<f64>();
    x.iter()
        .map(|v| eval(v.abs()))
        .fold(eval(0.0), f64::min)
}

pub(crate) fn cholesky(cov: &[Vec<f64>]) -> Result<Cholesky<f64, Dyn>> {
    let n = cov.len();
    if cov.iter().any(|r| r.len() != n) {
        return Err(FlexError::InvalidSet("covariance is not square".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let asym = (&m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(FlexError::InvalidSet(format!(
            "covariance is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    Cholesky::new(m).ok_or_else(|| FlexError::InvalidSet("covariance is not positive definite".into()))
}

fn dim_check(what: &str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(FlexError::DimensionMismatch(format!("{what} has length {got}, expected {n}")));
    }
    Ok(())
}

impl UncertaintySetSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        let spec = spec.resolved()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The set `T_ellip+` style truncation of `self` to `theta >= 0`.
    pub fn truncated_nonnegative(self) -> Self {
        UncertaintySetSpec::Intersection {
            members: vec![self, UncertaintySetSpec::Nonnegative { dim: None }],
        }
        .resolved()
        .expect("a norm member fixes the dimension")
    }

    fn own_dim(&self) -> Option<usize> {
        match self {
            UncertaintySetSpec::Ellipsoid { mean, .. }
            | UncertaintySetSpec::Hyperbox { mean, .. }
            | UncertaintySetSpec::PNorm { mean, .. }
            | UncertaintySetSpec::CVaRNorm { mean, .. } => Some(mean.len()),
            UncertaintySetSpec::Halfspaces { a, .. } => a.first().map(Vec::len),
            UncertaintySetSpec::Nonnegative { dim } => *dim,
            UncertaintySetSpec::Intersection { members } => members.iter().find_map(|m| m.own_dim()),
        }
    }

    /// Parameter dimension, if any member fixes it.
    pub fn dim(&self) -> Option<usize> {
        self.own_dim()
    }

    /// Replace dimensionless `nonnegative` members by explicit half-spaces.
    pub fn resolved(&self) -> Result<Self> {
        self.resolve_with(self.own_dim())
    }

    fn resolve_with(&self, n: Option<usize>) -> Result<Self> {
        Ok(match self {
            UncertaintySetSpec::Nonnegative { dim } => {
                let n = dim.or(n).ok_or_else(|| {
                    FlexError::InvalidSet("cannot infer the dimension of `nonnegative`".into())
                })?;
                UncertaintySetSpec::Halfspaces {
                    a: (0..n)
                        .map(|i| (0..n).map(|k| if i == k { -1.0 } else { 0.0 }).collect())
                        .collect(),
                    b: vec![0.0; n],
                }
            }
            UncertaintySetSpec::Intersection { members } => UncertaintySetSpec::Intersection {
                members: members
                    .iter()
                    .map(|m| m.resolve_with(n))
                    .collect::<Result<_>>()?,
            },
            other => other.clone(),
        })
    }

    fn leaves(&self) -> Vec<&UncertaintySetSpec> {
        match self {
            UncertaintySetSpec::Intersection { members } => members.iter().flat_map(|m| m.leaves()).collect(),
            other => vec![other],
        }
    }

    /// Nominal point shared by the norm-type members.
    pub fn mean(&self) -> Option<&[f64]> {
        self.leaves().into_iter().find_map(|m| match m {
            UncertaintySetSpec::Ellipsoid { mean, .. }
            | UncertaintySetSpec::Hyperbox { mean, .. }
            | UncertaintySetSpec::PNorm { mean, .. }
            | UncertaintySetSpec::CVaRNorm { mean, .. } => Some(mean.as_slice()),
            _ => None,
        })
    }

    /// Short name used in reports.
    pub fn kind_name(&self) -> String {
        match self {
            UncertaintySetSpec::Ellipsoid { .. } => "ellipsoid".into(),
            UncertaintySetSpec::Hyperbox { .. } => "hyperbox".into(),
            UncertaintySetSpec::PNorm { p, .. } => match p {
                PNorm::L1 => "l1".into(),
                PNorm::L2 => "l2".into(),
                PNorm::LInf => "linf".into(),
            },
            UncertaintySetSpec::CVaRNorm { .. } => "cvar".into(),
            UncertaintySetSpec::Halfspaces { .. } => "halfspaces".into(),
            UncertaintySetSpec::Nonnegative { .. } => "nonnegative".into(),
            UncertaintySetSpec::Intersection { members } => {
                let names: Vec<String> = members.iter().map(|m| m.kind_name()).collect();
                names.join("+")
            }
        }
    }

    pub fn is_ellipsoid(&self) -> bool {
        matches!(self, UncertaintySetSpec::Ellipsoid { .. })
    }

    /// Check every invariant: dimensions, data ranges, a single shared
    /// nominal point and at least one norm-type member.
    pub fn validate(&self) -> Result<()> {
        let spec = self.resolved()?;
        let leaves = spec.leaves();
        let n = spec
            .dim()
            .ok_or_else(|| FlexError::InvalidSet("set has no dimension".into()))?;
        if n == 0 {
            return Err(FlexError::InvalidSet("set has dimension zero".into()));
        }
        let mut norm_members = 0;
        let mut quadratic = 0;
        let mean = spec.mean().map(<[f64]>::to_vec);
        for leaf in &leaves {
            match leaf {
                UncertaintySetSpec::Ellipsoid { mean: m, covariance } => {
                    dim_check("mean", m.len(), n)?;
                    dim_check("covariance", covariance.len(), n)?;
                    cholesky(covariance)?;
                    quadratic += 1;
                }
                UncertaintySetSpec::Hyperbox { mean: m, dev_minus, dev_plus } => {
                    dim_check("mean", m.len(), n)?;
                    dim_check("dev_minus", dev_minus.len(), n)?;
                    dim_check("dev_plus", dev_plus.len(), n)?;
                    for i in 0..n {
                        let (lo, hi) = (dev_minus[i], dev_plus[i]);
                        if !(lo >= 0.0 && hi >= 0.0 && lo.is_finite() && hi.is_finite()) {
                            return Err(FlexError::InvalidSet(format!(
                                "deviations must be finite and nonnegative (coordinate {i})"
                            )));
                        }
                        if lo == 0.0 && hi == 0.0 {
                            return Err(FlexError::InvalidSet(format!(
                                "both deviations are zero in coordinate {i}"
                            )));
                        }
                    }
                }
                UncertaintySetSpec::PNorm { mean: m, p } => {
                    dim_check("mean", m.len(), n)?;
                    if *p == PNorm::L2 {
                        quadratic += 1;
                    }
                }
                UncertaintySetSpec::CVaRNorm { mean: m, alpha } => {
                    dim_check("mean", m.len(), n)?;
                    if !(0.0..1.0).contains(alpha) {
                        return Err(FlexError::InvalidSet(format!("alpha {alpha} is outside [0, 1)")));
                    }
                }
                UncertaintySetSpec::Halfspaces { a, b } => {
                    dim_check("b", b.len(), a.len())?;
                    for row in a {
                        dim_check("halfspace row", row.len(), n)?;
                    }
                    if a.iter().flatten().chain(b).any(|v| !v.is_finite()) {
                        return Err(FlexError::InvalidSet("non-finite halfspace data".into()));
                    }
                    continue;
                }
                UncertaintySetSpec::Nonnegative { .. } | UncertaintySetSpec::Intersection { .. } => {
                    unreachable!("resolved above")
                }
            }
            norm_members += 1;
            if let (Some(m0), Some(mi)) = (&mean, leaf.mean()) {
                if m0.iter().zip(mi).any(|(a, b)| a != b) {
                    return Err(FlexError::InvalidSet(
                        "intersection members disagree on the nominal point".into(),
                    ));
                }
            }
            if leaf.mean().is_some_and(|m| m.iter().any(|v| !v.is_finite())) {
                return Err(FlexError::InvalidSet("non-finite mean".into()));
            }
        }
        if norm_members == 0 {
            return Err(FlexError::NonCompactComposite(
                "half-spaces alone do not bound the set".into(),
            ));
        }
        if quadratic > 1 {
            return Err(FlexError::InvalidSet(
                "at most one ellipsoid or l2 member is supported in an intersection".into(),
            ));
        }
        Ok(())
    }

    /// Smallest `delta` at which `theta` belongs to this norm-type member;
    /// `None` for half-spaces and intersections.
    pub(crate) fn gauge(&self, theta: &[f64]) -> Option<f64> {
        let w = |mean: &[f64]| -> Vec<f64> { theta.iter().zip(mean).map(|(t, m)| t - m).collect() };
        match self {
            UncertaintySetSpec::Ellipsoid { mean, covariance } => {
                let chol = cholesky(covariance).ok()?;
                let w = DVector::from_vec(w(mean));
                Some(w.dot(&chol.solve(&w)))
            }
            UncertaintySetSpec::Hyperbox { mean, dev_minus, dev_plus } => Some(
                w(mean)
                    .iter()
                    .enumerate()
                    .map(|(i, &wi)| {
                        let (dev, mag) = if wi >= 0.0 { (dev_plus[i], wi) } else { (dev_minus[i], -wi) };
                        match (mag, dev) {
                            (m, _) if m == 0.0 => 0.0,
                            (_, d) if d == 0.0 => f64::INFINITY,
                            (m, d) => m / d,
                        }
                    })
                    .fold(0.0, f64::max),
            ),
            UncertaintySetSpec::PNorm { mean, p } => {
                let w = w(mean);
                Some(match p {
                    PNorm::L1 => w.iter().map(|v| v.abs()).sum(),
                    PNorm::L2 => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    PNorm::LInf => w.iter().fold(0.0, |m, v| m.max(v.abs())),
                })
            }
            UncertaintySetSpec::CVaRNorm { mean, alpha } => Some(cvar_norm(&w(mean), *alpha)),
            _ => None,
        }
    }

    /// Whether `theta` lies in `T(delta)`.
    pub fn membership(&self, theta: &[f64], delta: f64) -> Result<bool> {
        let spec = self.resolved()?;
        let n = spec
            .dim()
            .ok_or_else(|| FlexError::InvalidSet("set has no dimension".into()))?;
        dim_check("theta", theta.len(), n)?;
        Ok(spec.leaves().into_iter().all(|leaf| match leaf {
            UncertaintySetSpec::Halfspaces { a, b } => a.iter().zip(b).all(|(row, bi)| {
                let lhs: f64 = row.iter().zip(theta).map(|(x, y)| x * y).sum();
                lhs <= bi + MEMBERSHIP_TOL * (1.0 + bi.abs())
            }),
            norm => {
                let g = norm.gauge(theta).unwrap_or(f64::INFINITY);
                g <= delta + MEMBERSHIP_TOL * (1.0 + delta.abs())
            }
        }))
    }
}
