use serde::{Deserialize, Serialize};

use super::{PfSolution, QosTargets};
use crate::error::{Error, Result};
use crate::model::WlanModelConfig;

/// A certificate is accepted when every residual is below this.
pub const KKT_TOLERANCE: f64 = 1e-6;

/// Relative slack allowed on primal constraints before reporting a violation.
const PRIMAL_SLACK: f64 = 1e-9;

/// Stations whose aggregation is within this relative distance of the cap
/// are treated as capped.
const CAP_MEMBERSHIP: f64 = 1e-7;

/// Dimensionless residuals of the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max_i |−1/x_i + λ_i·c + D·w_i| · x_i`.
    pub stationarity: f64,
    /// Multiplier times constraint slack, normalised per constraint.
    pub complementary_slackness: f64,
    /// Largest normalised negative multiplier.
    pub dual_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementary_slackness).max(self.dual_feasibility)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    /// Multiplier of the delay constraint.
    pub theta: f64,
    /// Multipliers of the per-station aggregation caps.
    pub lambda: Vec<f64>,
    /// `D = n_bar·Σλ_j + θ`.
    pub d_value: f64,
    /// Stations strictly below the aggregation cap.
    pub active_set_complement: Vec<usize>,
    pub residuals: KktResiduals,
    pub accepted: bool,
}

pub fn verify_kkt(sol: &PfSolution, cfg: &WlanModelConfig, q: &QosTargets) -> Result<KktCertificate> {
    verify_kkt_point(&sol.x_star, cfg, q)
}

/// Recovers multipliers for the rate vector `x` from stationarity and
/// reports how well the optimality conditions hold.
pub fn verify_kkt_point(x: &[f64], cfg: &WlanModelConfig, q: &QosTargets) -> Result<KktCertificate> {
    cfg.check_len(x.len())?;
    let c = cfg.c;
    let capped_problem = q.n_bar.is_finite();

    if let Some(i) = x.iter().position(|xi| !(*xi > 0.0)) {
        return Err(Error::FeasibilityViolation {
            constraint: format!("positive rate for station {i}"),
            excess: -x[i],
        });
    }
    let airtime = cfg.airtime(x);
    let delay_budget = 1.0 - c / q.t_bar;
    let delay_slack = delay_budget - airtime;
    if delay_slack < -PRIMAL_SLACK {
        return Err(Error::FeasibilityViolation {
            constraint: "delay target wᵀx ≤ 1 − c/t_bar".into(),
            excess: -delay_slack,
        });
    }
    let cap_slack: Vec<f64> = if capped_problem {
        x.iter().map(|xi| q.n_bar - c * xi - q.n_bar * airtime).collect()
    } else {
        vec![f64::INFINITY; x.len()]
    };
    if let Some(i) = cap_slack.iter().position(|s| *s < -PRIMAL_SLACK * q.n_bar) {
        return Err(Error::FeasibilityViolation {
            constraint: format!("aggregation cap c·x_{i} + n_bar·wᵀx ≤ n_bar"),
            excess: -cap_slack[i] / q.n_bar,
        });
    }

    let scale = c / (1.0 - airtime);
    let below_cap: Vec<usize> =
        (0..x.len()).filter(|&i| !capped_problem || scale * x[i] < q.n_bar * (1.0 - CAP_MEMBERSHIP)).collect();

    let d = if below_cap.is_empty() {
        // θ = 0 branch: every station capped, D = n_bar·Σλ
        let inv_sum: f64 = x.iter().map(|xi| 1.0 / xi).sum();
        let w_sum: f64 = cfg.w.iter().sum();
        q.n_bar * inv_sum / (c + q.n_bar * w_sum)
    } else {
        below_cap.iter().map(|&i| 1.0 / (x[i] * cfg.w[i])).sum::<f64>() / below_cap.len() as f64
    };

    let mut lambda = vec![0.0; x.len()];
    for i in 0..x.len() {
        if !below_cap.contains(&i) {
            lambda[i] = (1.0 / x[i] - d * cfg.w[i]) / c;
        }
    }
    let lambda_sum: f64 = lambda.iter().sum();
    let theta = if capped_problem { d - q.n_bar * lambda_sum } else { d };

    let stationarity =
        (0..x.len()).map(|i| ((-1.0 / x[i] + lambda[i] * c + d * cfg.w[i]) * x[i]).abs()).fold(0.0, f64::max);
    let mut complementary = (theta / d * delay_slack.max(0.0)).abs();
    let mut dual = (-theta / d).max(0.0);
    for i in 0..x.len() {
        let weight = lambda[i] * c * x[i];
        dual = dual.max(-weight);
        if capped_problem {
            complementary = complementary.max((weight * cap_slack[i].max(0.0) / q.n_bar).abs());
        }
    }

    let residuals = KktResiduals { stationarity, complementary_slackness: complementary, dual_feasibility: dual };
    Ok(KktCertificate {
        theta,
        lambda,
        d_value: d,
        active_set_complement: below_cap,
        accepted: residuals.max() < KKT_TOLERANCE,
        residuals,
    })
}
