//! Points on the boundary of `T(delta)` along random rays from the mean.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{cholesky, UncertaintySetSpec};
use crate::error::{FlexError, Result};

/// Largest step `t >= 0` with `mean + t d` inside the leaf at `delta`.
fn exit_step(leaf: &UncertaintySetSpec, mean: &[f64], d: &[f64], delta: f64) -> f64 {
    match leaf {
        UncertaintySetSpec::Halfspaces { a, b } => {
            let mut step = f64::INFINITY;
            for (row, &bi) in a.iter().zip(b) {
                let ad: f64 = row.iter().zip(d).map(|(x, y)| x * y).sum();
                if ad > 0.0 {
                    let slack = bi - row.iter().zip(mean).map(|(x, y)| x * y).sum::<f64>();
                    step = step.min(slack.max(0.0) / ad);
                }
            }
            step
        }
        UncertaintySetSpec::Ellipsoid { .. } => {
            // gauge is quadratic in the step
            let probe: Vec<f64> = mean.iter().zip(d).map(|(m, v)| m + v).collect();
            let g = leaf.gauge(&probe).unwrap_or(0.0);
            if g > 0.0 {
                (delta / g).sqrt()
            } else {
                f64::INFINITY
            }
        }
        norm => {
            let probe: Vec<f64> = mean.iter().zip(d).map(|(m, v)| m + v).collect();
            let g = norm.gauge(&probe).unwrap_or(0.0);
            if g > 0.0 {
                delta / g
            } else {
                f64::INFINITY
            }
        }
    }
}

/// `count` boundary points of `T(delta)`, deterministic in `seed`.
///
/// Directions are Gaussian, pushed through the covariance factor when the
/// set has an ellipsoid member. Each point is the exact ray exit from the
/// nominal point, so for a single norm set it sits on the level surface and
/// for an intersection it sits on whichever member binds first. Rays that
/// leave a half-space immediately (nominal point on a facet) are redrawn.
pub fn boundary_sample(
    spec: &UncertaintySetSpec,
    delta: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let spec = spec.resolved()?;
    let mean = spec.mean().expect("validated sets have a mean").to_vec();
    let n = mean.len();
    if delta <= 0.0 {
        return Ok(vec![mean; count]);
    }
    let leaves = spec.leaves();
    let factor = leaves.iter().find_map(|l| match l {
        UncertaintySetSpec::Ellipsoid { covariance, .. } => cholesky(covariance).ok().map(|c| c.l()),
        _ => None,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let max_draws = 1000 * count.max(1) + 1000;
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        if draws > max_draws {
            return Err(FlexError::InvalidSet(
                "almost every ray leaves the set immediately; is the nominal point on its boundary?".into(),
            ));
        }
        let u: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let d = match &factor {
            Some(l) => l * u,
            None => u,
        };
        let d = d.as_slice();
        let step = leaves
            .iter()
            .map(|l| exit_step(l, &mean, d, delta))
            .fold(f64::INFINITY, f64::min);
        if step.is_infinite() {
            return Err(FlexError::NonCompactComposite(
                "a sampled ray never leaves the set".into(),
            ));
        }
        if step <= 0.0 {
            continue;
        }
        out.push(mean.iter().zip(d).map(|(m, v)| m + step * v).collect());
    }
    Ok(out)
}
