//! Random instances and closed-form oracles shared by the integration tests.
#![allow(dead_code)]

use flex_core::solver::{solve_lp, LinearRow, LpProblem, Status};
use flex_core::{AffineConstraint, LinearSystem, UncertaintySetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Recourse-free system `a_j . theta <= b_j` with `mean` strictly inside.
pub struct Instance {
    pub system: LinearSystem,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub dev: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let m = rng.random_range(n + 1..=n + 4);
    let inequalities = (0..m)
        .map(|j| {
            let a: Vec<f64> = loop {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                if a.iter().map(|v| v * v).sum::<f64>() > 0.1 {
                    break a;
                }
            };
            let slack = rng.random_range(0.5..6.0);
            let rhs = a.iter().zip(&mean).map(|(x, y)| x * y).sum::<f64>() + slack;
            AffineConstraint::theta_only(&format!("c{j}"), a, rhs)
        })
        .collect();
    let l: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let covariance = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| (0..n).map(|t| l[i][t] * l[k][t]).sum::<f64>() + if i == k { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    let dev = (0..n).map(|_| rng.random_range(0.3..2.0)).collect();
    Instance {
        system: LinearSystem {
            theta_names: (0..n).map(|i| format!("t{i}")).collect(),
            recourse_names: vec![],
            state_names: vec![],
            inequalities,
            equalities: vec![],
        },
        mean,
        covariance,
        dev,
    }
}

impl Instance {
    pub fn ellipsoid(&self) -> UncertaintySetSpec {
        UncertaintySetSpec::Ellipsoid {
            mean: self.mean.clone(),
            covariance: self.covariance.clone(),
        }
    }

    pub fn hyperbox(&self) -> UncertaintySetSpec {
        UncertaintySetSpec::Hyperbox {
            mean: self.mean.clone(),
            dev_minus: self.dev.clone(),
            dev_plus: self.dev.clone(),
        }
    }
}

fn slack(c: &AffineConstraint, mean: &[f64]) -> f64 {
    c.rhs - c.a_theta.iter().zip(mean).map(|(a, t)| a * t).sum::<f64>()
}

/// Touch-point oracle: `min_j (b_j - a_j . mean)^2 / (a_j' V a_j)`.
pub fn ellipsoid_oracle(sys: &LinearSystem, mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    sys.inequalities
        .iter()
        .map(|c| {
            let a = &c.a_theta;
            let q: f64 = (0..a.len()).map(|i| (0..a.len()).map(|k| a[i] * cov[i][k] * a[k]).sum::<f64>()).sum();
            slack(c, mean).powi(2) / q
        })
        .fold(f64::INFINITY, f64::min)
}

/// Worst-corner oracle: `min_j (b_j - a_j . mean) / sum_i |a_ji| dev_i`.
pub fn box_oracle(sys: &LinearSystem, mean: &[f64], dev: &[f64]) -> f64 {
    sys.inequalities
        .iter()
        .map(|c| slack(c, mean) / c.a_theta.iter().zip(dev).map(|(a, d)| a.abs() * d).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// `min c.x + d.y` over `A [x; y] <= b`, `0 <= x <= 10`, `y` binary.
pub struct Milp {
    pub n_cont: usize,
    pub n_bin: usize,
    pub cost: Vec<f64>,
    pub rows: Vec<(Vec<f64>, f64)>,
}

pub fn random_milp(rng: &mut ChaCha8Rng, n_bin: usize) -> Milp {
    let n_cont = 3;
    let n = n_cont + n_bin;
    let cost = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let rows = (0..5)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..4.0)).collect();
            (a, rng.random_range(2.0..12.0))
        })
        .collect();
    Milp {
        n_cont,
        n_bin,
        cost,
        rows,
    }
}

impl Milp {
    pub fn lp(&self, fix: &[Option<bool>]) -> LpProblem {
        let n = self.n_cont + self.n_bin;
        let mut lp = LpProblem::new(n);
        lp.objective = self.cost.clone();
        for (a, b) in &self.rows {
            lp.add_row(LinearRow::le(a.clone(), *b));
        }
        for j in 0..self.n_cont {
            lp.set_bounds(j, 0.0, 10.0);
        }
        for (k, f) in fix.iter().enumerate() {
            let (lo, hi) = match f {
                Some(true) => (1.0, 1.0),
                Some(false) => (0.0, 0.0),
                None => (0.0, 1.0),
            };
            lp.set_bounds(self.n_cont + k, lo, hi);
        }
        lp
    }

    /// Best objective over all `2^n_bin` assignments, `None` if none is feasible.
    pub fn enumerate(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for mask in 0..1u32 << self.n_bin {
            let fix: Vec<Option<bool>> = (0..self.n_bin).map(|k| Some(mask >> k & 1 == 1)).collect();
            let out = solve_lp(&self.lp(&fix)).expect("lp");
            if out.status == Status::Optimal {
                best = Some(best.map_or(out.objective, |b: f64| b.min(out.objective)));
            }
        }
        best
    }
}

impl Milp {
    /// Branch and bound over LP relaxations.
    pub fn branch_and_bound(&self) -> Option<f64> {
        use flex_core::solver::{branch_and_bound, BnbConfig, Relaxation};
        let out = branch_and_bound(self.n_bin, &BnbConfig::default(), |fix| {
            let sol = solve_lp(&self.lp(fix))?;
            Ok(match sol.status {
                Status::Optimal => Relaxation::Solved {
                    bound: sol.objective,
                    binaries: sol.primal[self.n_cont..].to_vec(),
                    payload: (),
                },
                _ => Relaxation::Infeasible,
            })
        })
        .expect("branch and bound");
        out.incumbent.map(|i| i.objective)
    }
}
