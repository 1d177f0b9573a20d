use serde::{Deserialize, Serialize};

use super::{PfSolution, QosTargets, Regime, WeightVector};
use crate::error::{invalid, Error, Result};
use crate::model::{delay_from_aggregation, inverse_aggregation_map, AggregationVector, RateVector, WlanModelConfig};

/// Convergence threshold on `‖Δz‖∞` and `|Δν|` between iterations.
pub const OFFLINE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineStep {
    pub z: AggregationVector,
    pub nu: f64,
    pub x: RateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRun {
    pub trajectory: Vec<OfflineStep>,
    pub solution: PfSolution,
}

/// Coupled gradient iteration on `(z, ν)`:
///
/// ```text
/// z(k+1) = z(k) + k1·(min{ν(k)·W, n_bar} − z(k))
/// ν(k+1) = max{ν(k) − k2·(ν(k) − min{t_bar·x_1(k), n_bar}), 1}
/// x(k)   = F⁻¹(z(k))
/// ```
#[allow(clippy::too_many_arguments)]
pub fn solve_offline_iteration(
    cfg: &WlanModelConfig,
    q: &QosTargets,
    k1: f64,
    k2: f64,
    z0: &[f64],
    nu0: f64,
    max_slots: usize,
) -> Result<OfflineRun> {
    cfg.validate()?;
    q.validate(cfg)?;
    cfg.check_len(z0.len())?;
    if !(k1 > 0.0) {
        return Err(invalid(format!("k1 must be positive, got {k1}")));
    }
    if !(k2 > 0.0 && k2 < 1.0) {
        return Err(invalid(format!("k2 must lie in (0, 1), got {k2}")));
    }
    if z0.iter().any(|z| !(1.0..=cfg.n_max).contains(z)) {
        return Err(invalid("z0 must lie in [1, n_max]"));
    }
    if !(nu0 >= 1.0 && nu0 <= q.n_bar) {
        return Err(invalid(format!("nu0 must lie in [1, n_bar], got {nu0}")));
    }

    let weights = WeightVector::from_w(&cfg.w);
    let slowest = weights.slowest();
    let mut z = AggregationVector(z0.to_vec());
    let mut nu = nu0;
    let mut x = inverse_aggregation_map(&z, cfg);
    let mut trajectory = vec![OfflineStep { z: z.clone(), nu, x: x.clone() }];

    for _ in 0..max_slots {
        let target = weights.target(nu, q.n_bar);
        let z_next: AggregationVector = z.iter().zip(target.iter()).map(|(zi, ti)| zi + k1 * (ti - zi)).collect();
        let nu_next = (nu - k2 * (nu - (q.t_bar * x[slowest]).min(q.n_bar))).max(1.0);

        let dz = z.iter().zip(z_next.iter()).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
        let dnu = (nu - nu_next).abs() / nu.max(1.0);

        z = z_next;
        nu = nu_next;
        x = inverse_aggregation_map(&z, cfg);
        trajectory.push(OfflineStep { z: z.clone(), nu, x: x.clone() });

        if dz < OFFLINE_TOLERANCE && dnu < OFFLINE_TOLERANCE {
            let regime = classify(nu, &z, cfg, q);
            let solution = PfSolution { x_star: x, n_star: z, nu_star: nu, regime, weights };
            return Ok(OfflineRun { trajectory, solution });
        }
    }

    let regime = classify(nu, &z, cfg, q);
    let solution = PfSolution { x_star: x, n_star: z, nu_star: nu, regime, weights };
    Err(Error::NonConvergence { slots: max_slots, run: Box::new(OfflineRun { trajectory, solution }) })
}

fn classify(nu: f64, z: &[f64], cfg: &WlanModelConfig, q: &QosTargets) -> Regime {
    let delay = delay_from_aggregation(z, cfg);
    if nu <= 1.0 + 1e-9 && delay > q.t_bar * (1.0 + 1e-9) {
        Regime::DelayInfeasible
    } else if (nu - q.n_bar).abs() <= 1e-9 * q.n_bar {
        Regime::CapBound
    } else {
        Regime::Interior
    }
}
