//! Distribution networks: node balances, arc and supplier bounds, and the
//! mapping from ranked constraints back to network components.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::flex::RankLevel;
use crate::model::{AffineConstraint, LinearSystem};
use crate::report::fmt_sig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supplier {
    pub id: String,
    pub node: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: String,
    pub node: String,
    pub uncertain: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub arcs: Vec<Arc>,
    #[serde(default)]
    pub suppliers: Vec<Supplier>,
    pub demands: Vec<Demand>,
}

pub const ARC_LOWER: &str = "lambda_L";
pub const ARC_UPPER: &str = "lambda_U";
pub const SUPPLY_LOWER: &str = "gamma_L";
pub const SUPPLY_UPPER: &str = "gamma_U";

fn invalid(msg: String) -> FlexError {
    FlexError::InvalidNetwork(msg)
}

fn unique<'a>(what: &str, ids: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(invalid(format!("empty {what} identifier")));
        }
        if !seen.insert(id) {
            return Err(invalid(format!("duplicate {what} `{id}`")));
        }
    }
    Ok(())
}

impl NetworkModel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        unique("node", self.nodes.iter())?;
        unique("arc", self.arcs.iter().map(|a| &a.id))?;
        unique("supplier", self.suppliers.iter().map(|s| &s.id))?;
        unique("demand", self.demands.iter().map(|d| &d.id))?;
        let known = |n: &String, who: &str| -> Result<()> {
            if self.nodes.contains(n) {
                Ok(())
            } else {
                Err(invalid(format!("{who} references unknown node `{n}`")))
            }
        };
        for a in &self.arcs {
            known(&a.from, &format!("arc `{}`", a.id))?;
            known(&a.to, &format!("arc `{}`", a.id))?;
            if a.from == a.to {
                return Err(invalid(format!("arc `{}` is a self-loop", a.id)));
            }
            if !(a.capacity.is_finite() && a.capacity > 0.0) {
                return Err(invalid(format!("arc `{}` needs a finite positive capacity", a.id)));
            }
        }
        for s in &self.suppliers {
            known(&s.node, &format!("supplier `{}`", s.id))?;
            if !(s.capacity.is_finite() && s.capacity > 0.0) {
                return Err(invalid(format!("supplier `{}` needs a finite positive capacity", s.id)));
            }
        }
        for d in &self.demands {
            known(&d.node, &format!("demand `{}`", d.id))?;
            match (d.uncertain, d.fixed_value) {
                (false, None) => return Err(invalid(format!("fixed demand `{}` has no fixed_value", d.id))),
                (false, Some(v)) if !v.is_finite() => {
                    return Err(invalid(format!("fixed demand `{}` is not finite", d.id)))
                }
                _ => {}
            }
        }
        if !self.demands.iter().any(|d| d.uncertain) {
            return Err(invalid("no uncertain demand".into()));
        }
        Ok(())
    }

    fn uncertain(&self) -> impl Iterator<Item = &Demand> {
        self.demands.iter().filter(|d| d.uncertain)
    }
}

/// Node balances as equalities, capacity bounds as labelled inequalities.
/// Parameters are the uncertain demands; recourse is arc flows then supplies.
pub fn build_system(net: &NetworkModel) -> Result<LinearSystem> {
    net.validate()?;
    let theta_names: Vec<String> = net.uncertain().map(|d| d.id.clone()).collect();
    let recourse_names: Vec<String> = net
        .arcs
        .iter()
        .map(|a| format!("arc:{}", a.id))
        .chain(net.suppliers.iter().map(|s| format!("supply:{}", s.id)))
        .collect();
    let (nt, nz, na) = (theta_names.len(), recourse_names.len(), net.arcs.len());

    let mut equalities = Vec::with_capacity(net.nodes.len());
    for node in &net.nodes {
        let mut a_theta = vec![0.0; nt];
        let mut a_z = vec![0.0; nz];
        let mut rhs = 0.0;
        for (k, arc) in net.arcs.iter().enumerate() {
            if &arc.to == node {
                a_z[k] += 1.0;
            }
            if &arc.from == node {
                a_z[k] -= 1.0;
            }
        }
        for (b, s) in net.suppliers.iter().enumerate() {
            if &s.node == node {
                a_z[na + b] += 1.0;
            }
        }
        for (i, d) in net.uncertain().enumerate() {
            if &d.node == node {
                a_theta[i] -= 1.0;
            }
        }
        for d in net.demands.iter().filter(|d| !d.uncertain && &d.node == node) {
            rhs += d.fixed_value.expect("validated");
        }
        equalities.push(AffineConstraint {
            label: format!("balance:{node}"),
            a_theta,
            a_z,
            a_x: vec![],
            rhs,
        });
    }

    let bound = |prefix: &str, id: &str, col: usize, sign: f64, rhs: f64| {
        let mut a_z = vec![0.0; nz];
        a_z[col] = sign;
        AffineConstraint {
            label: format!("{prefix}:{id}"),
            a_theta: vec![0.0; nt],
            a_z,
            a_x: vec![],
            rhs,
        }
    };
    let mut inequalities = Vec::with_capacity(2 * nz);
    for (k, arc) in net.arcs.iter().enumerate() {
        inequalities.push(bound(ARC_LOWER, &arc.id, k, -1.0, arc.capacity));
        inequalities.push(bound(ARC_UPPER, &arc.id, k, 1.0, arc.capacity));
    }
    for (b, s) in net.suppliers.iter().enumerate() {
        inequalities.push(bound(SUPPLY_LOWER, &s.id, na + b, -1.0, 0.0));
        inequalities.push(bound(SUPPLY_UPPER, &s.id, na + b, 1.0, s.capacity));
    }

    let system = LinearSystem {
        theta_names,
        recourse_names,
        state_names: vec![],
        inequalities,
        equalities,
    };
    system.check()?;
    Ok(system)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Arc,
    Supplier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRank {
    pub kind: ComponentKind,
    pub id: String,
    /// Best (lowest) level among the component's labels; `None` if unranked.
    pub level: Option<usize>,
    #[serde(rename = "F")]
    pub f_value: Option<f64>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRankMap {
    /// Arcs in network order, then suppliers.
    pub components: Vec<ComponentRank>,
}

impl ComponentRankMap {
    pub fn get(&self, kind: ComponentKind, id: &str) -> Option<&ComponentRank> {
        self.components.iter().find(|c| c.kind == kind && c.id == id)
    }

    /// Components grouped by level, in level order.
    pub fn by_level(&self) -> BTreeMap<usize, Vec<&ComponentRank>> {
        let mut out: BTreeMap<usize, Vec<&ComponentRank>> = BTreeMap::new();
        for c in &self.components {
            if let Some(l) = c.level {
                out.entry(l).or_default().push(c);
            }
        }
        out
    }
}

fn parse_label(label: &str) -> Option<(ComponentKind, &str)> {
    let (prefix, id) = label.split_once(':')?;
    let kind = match prefix {
        ARC_LOWER | ARC_UPPER => ComponentKind::Arc,
        SUPPLY_LOWER | SUPPLY_UPPER => ComponentKind::Supplier,
        _ => return None,
    };
    Some((kind, id))
}

pub fn component_rank_map(net: &NetworkModel, ranks: &[RankLevel]) -> Result<ComponentRankMap> {
    let mut components: Vec<ComponentRank> = net
        .arcs
        .iter()
        .map(|a| (ComponentKind::Arc, &a.id))
        .chain(net.suppliers.iter().map(|s| (ComponentKind::Supplier, &s.id)))
        .map(|(kind, id)| ComponentRank {
            kind,
            id: id.clone(),
            level: None,
            f_value: None,
            labels: vec![],
        })
        .collect();
    for level in ranks {
        for label in &level.constraint_labels {
            let (kind, id) = parse_label(label).ok_or_else(|| FlexError::UnknownLabel(label.clone()))?;
            let comp = components
                .iter_mut()
                .find(|c| c.kind == kind && c.id == id)
                .ok_or_else(|| FlexError::UnknownLabel(label.clone()))?;
            if !comp.labels.contains(label) {
                comp.labels.push(label.clone());
            }
            if comp.level.is_none_or(|l| level.level < l) {
                comp.level = Some(level.level);
                comp.f_value = Some(level.f_value);
            }
        }
    }
    Ok(ComponentRankMap { components })
}

const UNRANKED: &str = "#bfbfbf";
// Most limiting end of the gradient, then least limiting.
const LOW: (f64, f64, f64) = (215.0, 25.0, 28.0);
const HIGH: (f64, f64, f64) = (26.0, 150.0, 65.0);

fn gradient(f: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo { ((f - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(LOW.0, HIGH.0), mix(LOW.1, HIGH.1), mix(LOW.2, HIGH.2))
}

fn quote(s: &str) -> String {
    let escaped = s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n");
    format!("\"{escaped}\"")
}

/// Graphviz digraph with ranked components colored by their index.
pub fn emit_dot(net: &NetworkModel, map: &ComponentRankMap) -> String {
    let ranked: Vec<f64> = map.components.iter().filter_map(|c| c.f_value).collect();
    let lo = ranked.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ranked.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let style = |kind: ComponentKind, id: &str| -> (String, String) {
        match map.get(kind, id).and_then(|c| c.level.zip(c.f_value)) {
            Some((level, f)) => (gradient(f, lo, hi), format!("rank {level}, F={}", fmt_sig(f))),
            None => (UNRANKED.to_string(), "unranked".to_string()),
        }
    };

    let mut out = String::new();
    let _ = writeln!(out, "digraph network {{");
    let _ = writeln!(out, "  rankdir=LR;");
    let _ = writeln!(out, "  node [shape=circle, style=filled, fillcolor=white];");
    for node in &net.nodes {
        let _ = writeln!(out, "  {};", quote(node));
    }
    for s in &net.suppliers {
        let (color, note) = style(ComponentKind::Supplier, &s.id);
        let name = format!("supplier:{}", s.id);
        let _ = writeln!(
            out,
            "  {} [shape=box, fillcolor={}, label={}];",
            quote(&name),
            quote(&color),
            quote(&format!("{} (cap {})\n{note}", s.id, fmt_sig(s.capacity)))
        );
        let _ = writeln!(out, "  {} -> {} [style=dashed, color={}];", quote(&name), quote(&s.node), quote(UNRANKED));
    }
    for a in &net.arcs {
        let (color, note) = style(ComponentKind::Arc, &a.id);
        let _ = writeln!(
            out,
            "  {} -> {} [color={}, penwidth=2, label={}];",
            quote(&a.from),
            quote(&a.to),
            quote(&color),
            quote(&format!("{} (cap {})\n{note}", a.id, fmt_sig(a.capacity)))
        );
    }
    let _ = writeln!(out, "}}");
    out
}
