//! The feasibility function `psi(theta)` and Monte Carlo estimates of the
//! stochastic flexibility `P(psi(theta) <= 0)`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::model::LinearSystem;
use crate::sets::cholesky;
use crate::solver::{solve_lp, LinearRow, LpProblem, Status};

/// Draws with `psi <= FEASIBILITY_TOL` count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const SHARD_SIZE: usize = 4096;
const PILOT_DRAWS: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 1e-3;
const EQUALITY_TOL: f64 = 1e-9;

/// Evaluates `psi` repeatedly for one system.
///
/// `psi(theta) = min u` over `(z, x, u)` with `f_j <= u` and `h_i = 0`. For
/// systems without recourse or states this is `max_j f_j`.
pub struct Psi<'a> {
    system: &'a LinearSystem,
    template: Option<LpProblem>,
}

impl<'a> Psi<'a> {
    pub fn new(system: &'a LinearSystem) -> Self {
        let template = system.has_recourse().then(|| {
            let nr = system.n_z() + system.n_x();
            let mut lp = LpProblem::new(nr + 1);
            lp.objective[nr] = 1.0;
            for c in &system.inequalities {
                let mut coeffs = c.a_z.clone();
                coeffs.extend_from_slice(&c.a_x);
                coeffs.push(-1.0);
                lp.add_row(LinearRow::le(coeffs, c.rhs));
            }
            for c in &system.equalities {
                let mut coeffs = c.a_z.clone();
                coeffs.extend_from_slice(&c.a_x);
                coeffs.push(0.0);
                lp.add_row(LinearRow::eq(coeffs, c.rhs));
            }
            lp
        });
        Self { system, template }
    }

    /// `+inf` when the equalities cannot hold at `theta`, `-inf` when the
    /// recourse can make every constraint arbitrarily slack.
    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        let sys = self.system;
        if theta.len() != sys.n_theta() {
            return Err(FlexError::DimensionMismatch(format!(
                "theta has length {}, expected {}",
                theta.len(),
                sys.n_theta()
            )));
        }
        let at = |a: &[f64]| a.iter().zip(theta).map(|(x, y)| x * y).sum::<f64>();
        match &self.template {
            None => {
                for h in &sys.equalities {
                    let r = at(&h.a_theta) - h.rhs;
                    if r.abs() > EQUALITY_TOL * (1.0 + h.rhs.abs()) {
                        return Ok(f64::INFINITY);
                    }
                }
                Ok(sys
                    .inequalities
                    .iter()
                    .map(|c| at(&c.a_theta) - c.rhs)
                    .fold(f64::NEG_INFINITY, f64::max))
            }
            Some(template) => {
                let mut lp = template.clone();
                for (row, c) in lp.rows.iter_mut().zip(sys.constraints()) {
                    row.rhs = c.rhs - at(&c.a_theta);
                }
                let out = solve_lp(&lp)?;
                Ok(match out.status {
                    Status::Optimal => out.objective,
                    Status::Infeasible => f64::INFINITY,
                    Status::Unbounded => f64::NEG_INFINITY,
                    Status::IterationLimit => {
                        return Err(FlexError::Solver(crate::solver::SolverError::NumericalBreakdown(
                            "psi LP hit the iteration limit".into(),
                        )))
                    }
                })
            }
        }
    }

    /// Optimal `(z, x)` together with `psi`, when the LP is solved.
    pub fn eval_with_recourse(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        match &self.template {
            None => Ok((self.eval(theta)?, Vec::new())),
            Some(template) => {
                let at = |a: &[f64]| a.iter().zip(theta).map(|(x, y)| x * y).sum::<f64>();
                let mut lp = template.clone();
                for (row, c) in lp.rows.iter_mut().zip(self.system.constraints()) {
                    row.rhs = c.rhs - at(&c.a_theta);
                }
                let out = solve_lp(&lp)?;
                let nr = lp.num_vars() - 1;
                Ok(match out.status {
                    Status::Optimal => (out.objective, out.primal[..nr].to_vec()),
                    Status::Unbounded => (f64::NEG_INFINITY, Vec::new()),
                    _ => (f64::INFINITY, Vec::new()),
                })
            }
        }
    }
}

/// Convenience wrapper around [`Psi`].
pub fn psi(system: &LinearSystem, theta: &[f64]) -> Result<f64> {
    Psi::new(system).eval(theta)
}

/// `N(mean, covariance)`, optionally conditioned on `theta >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default, alias = "truncation")]
    pub truncated: bool,
}

impl GaussianSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.factor()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn factor(&self) -> Result<DMatrix<f64>> {
        if self.covariance.len() != self.mean.len() {
            return Err(FlexError::DimensionMismatch(format!(
                "covariance has {} rows for a mean of length {}",
                self.covariance.len(),
                self.mean.len()
            )));
        }
        Ok(cholesky(&self.covariance)?.l())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub samples: usize,
    pub seed: u64,
    /// Wall-clock time; not serialized so output stays reproducible.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

/// 95% normal-approximation half-width.
pub fn half_width(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

struct Sampler {
    mean: DVector<f64>,
    l: DMatrix<f64>,
    truncated: bool,
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let u = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
            let v = &self.mean + &self.l * u;
            if !self.truncated || v.iter().all(|&t| t >= 0.0) {
                return v.as_slice().to_vec();
            }
        }
    }
}

fn sampler(dist: &GaussianSpec, seed: u64) -> Result<Sampler> {
    let l = dist.factor()?;
    let s = Sampler {
        mean: DVector::from_column_slice(&dist.mean),
        l,
        truncated: dist.truncated,
    };
    if s.truncated {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let raw = Sampler {
            mean: s.mean.clone(),
            l: s.l.clone(),
            truncated: false,
        };
        let accepted = (0..PILOT_DRAWS)
            .filter(|_| raw.draw(&mut rng).iter().all(|&t| t >= 0.0))
            .count();
        let acceptance = accepted as f64 / PILOT_DRAWS as f64;
        if acceptance <= MIN_ACCEPTANCE {
            return Err(FlexError::ImpracticalTruncation { acceptance });
        }
    }
    Ok(s)
}

/// The `samples` parameter draws used by [`stochastic_flexibility`], in
/// order. Shard `k` covers indices `k * 4096 ..` and is seeded with
/// `seed + k`.
pub fn gaussian_draws(dist: &GaussianSpec, samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let s = sampler(dist, seed)?;
    let shards = samples.div_ceil(SHARD_SIZE);
    Ok((0..shards)
        .into_par_iter()
        .map(|k| shard_draws(&s, k, samples, seed))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

fn shard_draws(s: &Sampler, k: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let len = SHARD_SIZE.min(samples - k * SHARD_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    (0..len).map(|_| s.draw(&mut rng)).collect()
}

/// Fraction of Gaussian draws at which the system is feasible.
pub fn stochastic_flexibility(
    system: &LinearSystem,
    dist: &GaussianSpec,
    samples: usize,
    seed: u64,
) -> Result<SfEstimate> {
    let start = Instant::now();
    if samples < 100 {
        return Err(FlexError::InvalidArgument(format!(
            "at least 100 samples are required, got {samples}"
        )));
    }
    if dist.mean.len() != system.n_theta() {
        return Err(FlexError::DimensionMismatch(format!(
            "distribution has dimension {}, system has {} parameters",
            dist.mean.len(),
            system.n_theta()
        )));
    }
    system.check()?;
    let s = sampler(dist, seed)?;
    let psi = Psi::new(system);
    let shards = samples.div_ceil(SHARD_SIZE);
    let counts: Vec<usize> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut feasible = 0;
            for theta in shard_draws(&s, k, samples, seed) {
                if psi.eval(&theta)? <= FEASIBILITY_TOL {
                    feasible += 1;
                }
            }
            Ok(feasible)
        })
        .collect::<Result<_>>()?;
    let feasible: usize = counts.iter().sum();
    let p = feasible as f64 / samples as f64;
    Ok(SfEstimate {
        estimate: p,
        half_width: half_width(p, samples),
        samples,
        seed,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
