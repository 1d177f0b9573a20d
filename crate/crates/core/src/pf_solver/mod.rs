//! Proportional-fair low-delay rate allocation.
//!
//! Maximises `Σ log x_i` subject to the delay target `c/(1 − wᵀx) ≤ t_bar`
//! and the aggregation cap `N_i(x) ≤ n_bar`, both of which are linear in `x`:
//!
//! ```text
//! wᵀx ≤ 1 − c/t_bar
//! c·x_i + n_bar·wᵀx ≤ n_bar
//! ```
//!
//! When the delay target binds, the optimal aggregation levels are
//! `N = min{ν·W, n_bar}` with `W_i = w_max / w_i`, so the problem reduces to
//! the scalar `ν`, the aggregation level of the slowest station.

mod fixed_point;
mod kkt;
mod offline;
mod oracle;

pub use fixed_point::{controller_equilibrium, solve_fixed_point, BISECTION_TOLERANCE};
pub use kkt::{verify_kkt, verify_kkt_point, KktCertificate, KktResiduals, KKT_TOLERANCE};
pub use offline::{solve_offline_iteration, OfflineRun, OfflineStep, OFFLINE_TOLERANCE};
pub use oracle::{brute_force_oracle, ORACLE_MAX_STATIONS};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{AggregationVector, RateVector, WlanModelConfig};

/// Delay target and aggregation cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosTargets {
    /// Delay target, seconds.
    pub t_bar: f64,
    /// Aggregation cap, packets/frame. `f64::INFINITY` removes the cap.
    pub n_bar: f64,
}

impl QosTargets {
    pub fn new(t_bar: f64, n_bar: f64) -> Self {
        Self { t_bar, n_bar }
    }

    /// Targets with the aggregation cap removed; used for the equal-airtime
    /// limit.
    pub fn uncapped(t_bar: f64) -> Self {
        Self { t_bar, n_bar: f64::INFINITY }
    }

    pub fn validate(&self, cfg: &WlanModelConfig) -> Result<()> {
        if !(self.t_bar > 0.0) {
            return Err(invalid(format!("t_bar must be positive, got {}", self.t_bar)));
        }
        if !(self.n_bar >= 1.0) {
            return Err(invalid(format!("n_bar must be >= 1, got {}", self.n_bar)));
        }
        if self.n_bar.is_finite() && self.n_bar >= cfg.n_max {
            return Err(invalid(format!("n_bar ({}) must be below n_max ({})", self.n_bar, cfg.n_max)));
        }
        if self.t_bar <= cfg.c {
            return Err(invalid(format!("t_bar ({}) must exceed the overhead c ({})", self.t_bar, cfg.c)));
        }
        Ok(())
    }
}

/// Which constraint binds at the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Delay target met with equality.
    Interior,
    /// Every station sits at the aggregation cap with delay to spare.
    CapBound,
    /// The target cannot be met even at one packet per frame.
    DelayInfeasible,
    /// Some stations sit at the cap and the delay target is slack; uncapped
    /// stations share the channel at equal airtime.
    MixedCap,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Interior => "interior",
            Regime::CapBound => "cap_bound",
            Regime::DelayInfeasible => "delay_infeasible",
            Regime::MixedCap => "mixed_cap",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Aggregation weights `W_i = w_max / w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// Stations sorted by decreasing `w` (slowest first), ties by index.
    pub order: Vec<usize>,
}

impl WeightVector {
    pub fn from_w(w: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..w.len()).collect();
        // stable sort keeps the lowest index first among equal w
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
        let w_max = w[order[0]];
        Self { weights: w.iter().map(|wi| w_max / wi).collect(), order }
    }

    /// Index of the slowest station ("station 1").
    pub fn slowest(&self) -> usize {
        self.order[0]
    }

    /// Target aggregation levels `min{ν·W, n_bar}`.
    pub fn target(&self, nu: f64, n_bar: f64) -> AggregationVector {
        self.weights.iter().map(|wi| (nu * wi).min(n_bar)).collect()
    }
}

/// Output of the allocation solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub x_star: RateVector,
    pub n_star: AggregationVector,
    pub nu_star: f64,
    pub regime: Regime,
    pub weights: WeightVector,
}

impl PfSolution {
    pub(crate) fn from_nu(
        cfg: &WlanModelConfig,
        q: &QosTargets,
        weights: WeightVector,
        nu: f64,
        regime: Regime,
    ) -> Self {
        let n_star = weights.target(nu, q.n_bar);
        let x_star = crate::model::inverse_aggregation_map(&n_star, cfg);
        Self { x_star, n_star, nu_star: nu, regime, weights }
    }

    pub fn objective(&self) -> f64 {
        objective(&self.x_star)
    }

    /// Round duration `c + wᵀN*` at the solution.
    pub fn delay(&self, cfg: &WlanModelConfig) -> f64 {
        crate::model::delay_from_aggregation(&self.n_star, cfg)
    }
}

/// Proportional-fair utility `Σ log x_i`.
pub fn objective(x: &[f64]) -> f64 {
    x.iter().map(|xi| xi.ln()).sum()
}

/// Equal-airtime allocation at full channel use, `x_i = 1 / (n·w_i)`.
///
/// This is the supremum approached by the allocation as both the delay target
/// and the aggregation cap are relaxed; it sits on the boundary `wᵀx = 1` and
/// so is not itself strictly feasible.
pub fn equal_airtime_solution(cfg: &WlanModelConfig) -> RateVector {
    let n = cfg.n() as f64;
    cfg.w.iter().map(|wi| 1.0 / (n * wi)).collect()
}

/// `max_i(w_i x_i) / min_i(w_i x_i) − 1`.
pub fn airtime_spread(x: &[f64], cfg: &WlanModelConfig) -> f64 {
    let shares = cfg.w.iter().zip(x).map(|(w, x)| w * x);
    let (lo, hi) = shares.fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s), hi.max(s)));
    hi / lo - 1.0
}
