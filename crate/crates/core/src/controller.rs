//! Online inner/outer feedback controller.
//!
//! The inner loop is an integral controller on the per-station aggregation
//! setpoint `z`, driven by measured aggregation levels. The outer loop adapts
//! `ν`, the target aggregation of the slowest station, so that the round
//! duration meets the delay target. Send rates are `x = F⁻¹(z)` evaluated with
//! the running overhead estimate `ĉ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{inverse_aggregation_map, project, AggregationVector, RateVector, WlanModelConfig};
use crate::pf_solver::{QosTargets, WeightVector};

/// 802.11ac minimum contention window.
pub const CW_MIN: f64 = 16.0;
/// PHY slot length, seconds.
pub const PHY_SLOT: f64 = 9e-6;

/// Initial overhead estimate `n·(CW/2)·slot`.
pub fn cold_start_overhead(n: usize) -> f64 {
    n as f64 * (CW_MIN / 2.0) * PHY_SLOT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k1: f64,
    pub k2: f64,
    pub beta: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { k1: 0.5, k2: 0.2, beta: 0.05 }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(invalid(format!("k1 must be positive, got {}", self.k1)));
        }
        if !(self.k2 > 0.0 && self.k2.is_finite()) {
            return Err(invalid(format!("k2 must be positive, got {}", self.k2)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    /// Whether `k2` lies in `(0, 1)`, the range covered by the convergence
    /// analysis of the outer loop.
    pub fn outer_gain_in_stable_range(&self) -> bool {
        self.k2 > 0.0 && self.k2 < 1.0
    }
}

/// Per-slot report from the client stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    /// Empirical mean packets per frame.
    pub n_meas: AggregationVector,
    /// Observed PHY rate per station, bits/s.
    pub mcs_report: Vec<f64>,
    pub slot_index: u64,
}

/// Loop-gain diagnostics against plant truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopDiagnostics {
    /// `γ_i = Π(c̃·z_i/ĉ) / z_i`.
    pub gamma: Vec<f64>,
    /// Ratio by which the aggregation cap shrinks the outer-loop setpoint.
    pub gamma0: f64,
}

/// Logged view of the controller after a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSnapshot {
    pub slot: u64,
    pub z: AggregationVector,
    pub nu: f64,
    pub c_hat: f64,
    pub x: RateVector,
    #[serde(rename = "N_target")]
    pub n_target: AggregationVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub slot: u64,
    pub z: AggregationVector,
    pub nu: f64,
    pub c_hat: f64,
    pub weights: WeightVector,
    /// Model with `c` kept equal to `c_hat` and `w` from the latest reports.
    pub model: WlanModelConfig,
    pub targets: QosTargets,
    pub gains: ControllerGains,
    /// When set, every station's target is this value and `ν` is frozen.
    pub fixed_target: Option<f64>,
}

impl ControllerState {
    /// Cold start: `z = 1`, `ν = 1`, `ĉ` from standard MAC constants.
    pub fn new(model: &WlanModelConfig, targets: QosTargets, gains: ControllerGains) -> Result<Self> {
        model.validate()?;
        targets.validate(model)?;
        gains.validate()?;
        if !targets.n_bar.is_finite() {
            return Err(invalid("the online controller needs a finite aggregation cap"));
        }
        let c_hat = cold_start_overhead(model.n());
        Ok(Self {
            slot: 0,
            z: AggregationVector(vec![1.0; model.n()]),
            nu: 1.0,
            c_hat,
            weights: WeightVector::from_w(&model.w),
            model: model.with_overhead(c_hat),
            targets,
            gains,
            fixed_target: None,
        })
    }

    pub fn with_c_hat(mut self, c_hat: f64) -> Result<Self> {
        if !(c_hat > 0.0 && c_hat.is_finite()) {
            return Err(invalid(format!("c_hat must be positive, got {c_hat}")));
        }
        self.c_hat = c_hat;
        self.model.c = c_hat;
        Ok(self)
    }

    /// Inner-loop-only operation with a constant aggregation target.
    pub fn with_fixed_target(mut self, target: f64) -> Result<Self> {
        if !(1.0..=self.model.n_max).contains(&target) {
            return Err(invalid(format!("fixed target must lie in [1, n_max], got {target}")));
        }
        self.fixed_target = Some(target);
        Ok(self)
    }

    pub fn with_initial(mut self, z: AggregationVector, nu: f64) -> Result<Self> {
        self.model.check_len(z.len())?;
        self.z = z.iter().map(|v| project(*v, self.model.n_max)).collect();
        self.nu = nu.clamp(1.0, self.targets.n_bar);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// `N_target = min{ν·W, n_bar}`, or the fixed target in inner-only mode.
    pub fn n_target(&self) -> AggregationVector {
        match self.fixed_target {
            Some(t) => AggregationVector(vec![t; self.n()]),
            None => self.weights.target(self.nu, self.targets.n_bar),
        }
    }

    /// `z(k+1) = clamp(z(k) + k1·(N_target − N̂), 1, n_max)`.
    pub fn inner_update(&self, report: &FeedbackReport) -> Result<AggregationVector> {
        self.model.check_len(report.n_meas.len())?;
        let target = self.n_target();
        Ok(self
            .z
            .iter()
            .zip(target.iter().zip(report.n_meas.iter()))
            .map(|(z, (t, m))| project(z + self.gains.k1 * (t - m), self.model.n_max))
            .collect())
    }

    /// `ν(k+1) = clamp(ν(k) + k2·(min{t_bar·x_1(k), n_bar} − ν(k)), 1, n_bar)`.
    pub fn outer_update(&self) -> f64 {
        if self.fixed_target.is_some() {
            return self.nu;
        }
        let x = self.compute_rates();
        let setpoint = (self.targets.t_bar * x[self.weights.slowest()]).min(self.targets.n_bar);
        (self.nu + self.gains.k2 * (setpoint - self.nu)).clamp(1.0, self.targets.n_bar)
    }

    /// `x = z / (ĉ + wᵀz)`.
    pub fn compute_rates(&self) -> RateVector {
        inverse_aggregation_map(&self.z, &self.model)
    }

    /// Smoothed overhead estimate from the slowest station's report:
    /// `č = (N̂_1/x_1)·(1 − wᵀx)`, `ĉ ← (1 − β)·ĉ + β·č`.
    ///
    /// The estimate is held when `x_1 = 0` or the applied rates overloaded the
    /// channel (`č ≤ 0`).
    pub fn estimate_c(&self, report: &FeedbackReport, x_applied: &[f64]) -> Result<f64> {
        self.model.check_len(x_applied.len())?;
        self.model.check_len(report.n_meas.len())?;
        let s = self.weights.slowest();
        let x1 = x_applied[s];
        if !(x1 > 0.0) {
            return Ok(self.c_hat);
        }
        let c_check = report.n_meas[s] / x1 * (1.0 - self.model.airtime(x_applied));
        if !(c_check > 0.0 && c_check.is_finite()) {
            return Ok(self.c_hat);
        }
        let beta = self.gains.beta;
        Ok((1.0 - beta) * self.c_hat + beta * c_check)
    }

    /// Replaces per-packet times with those implied by reported PHY rates.
    pub fn apply_mcs_report(&mut self, rates: &[f64]) -> Result<()> {
        self.model.check_len(rates.len())?;
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(invalid(format!("reported PHY rate must be positive, got {r}")));
        }
        let bits = self.model.packet_bits;
        self.model.w.iter_mut().zip(rates).for_each(|(w, r)| *w = bits / r);
        Ok(())
    }

    /// One control slot. `x_applied` is the rate vector the report was
    /// measured under; returns the rates for the next slot.
    ///
    /// Order: refresh `w`, estimate `ĉ`, re-sort stations, then inner and
    /// outer updates (both from the pre-update `z`, `ν`).
    pub fn step(&mut self, report: &FeedbackReport, x_applied: &[f64]) -> Result<RateVector> {
        self.model.check_len(report.n_meas.len())?;
        if report.mcs_report.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: report.mcs_report.len() });
        }
        self.apply_mcs_report(&report.mcs_report)?;
        let c_hat = self.estimate_c(report, x_applied)?;
        self.c_hat = c_hat;
        self.model.c = c_hat;
        self.weights = WeightVector::from_w(&self.model.w);

        let z = self.inner_update(report)?;
        let nu = self.outer_update();
        self.z = z;
        self.nu = nu;
        self.slot = report.slot_index;
        Ok(self.compute_rates())
    }

    pub fn snapshot(&self) -> ControllerSnapshot {
        ControllerSnapshot {
            slot: self.slot,
            z: self.z.clone(),
            nu: self.nu,
            c_hat: self.c_hat,
            x: self.compute_rates(),
            n_target: self.n_target(),
        }
    }

    /// Loop gains seen by the controller when the true overhead is `c_true`.
    pub fn loop_diagnostics(&self, c_true: f64) -> LoopDiagnostics {
        let ratio = c_true / self.c_hat;
        let gamma = self.z.iter().map(|z| project(ratio * z, self.model.n_max) / z).collect();
        let n = self.n() as f64;
        let w1 = self.model.w[self.weights.slowest()];
        let setpoint = self.targets.t_bar * self.nu / (self.c_hat + self.nu * n * w1);
        let gamma0 = if setpoint <= self.targets.n_bar { 1.0 } else { self.targets.n_bar / setpoint };
        LoopDiagnostics { gamma, gamma0 }
    }
}

/// Outer-loop dynamics under time-scale separation, where the inner loop is
/// assumed settled at `z = min{ν·W, n_bar}`.
pub mod separated {
    use super::*;

    /// One outer-loop update with `z ≡ min{ν·W, n_bar}`.
    pub fn outer_step(nu: f64, cfg: &WlanModelConfig, q: &QosTargets, weights: &WeightVector, k2: f64) -> f64 {
        let z = weights.target(nu, q.n_bar);
        let x1 = z[weights.slowest()] / (cfg.c + cfg.airtime(&z));
        (nu + k2 * ((q.t_bar * x1).min(q.n_bar) - nu)).clamp(1.0, q.n_bar)
    }

    /// Interior equilibrium `ν* = (t_bar − c) / (n·w_1)`.
    pub fn interior_equilibrium(cfg: &WlanModelConfig, q: &QosTargets) -> f64 {
        let w1 = cfg.w.iter().copied().fold(0.0, f64::max);
        (q.t_bar - cfg.c) / (cfg.n() as f64 * w1)
    }

    /// Lyapunov candidate `V = (ν − ν*)²`.
    pub fn lyapunov(nu: f64, nu_star: f64) -> f64 {
        (nu - nu_star).powi(2)
    }

    /// Iterates [`outer_step`] from `nu0`, returning the whole trajectory.
    pub fn trajectory(nu0: f64, cfg: &WlanModelConfig, q: &QosTargets, k2: f64, slots: usize) -> Vec<f64> {
        let weights = WeightVector::from_w(&cfg.w);
        let mut out = Vec::with_capacity(slots + 1);
        let mut nu = nu0;
        out.push(nu);
        for _ in 0..slots {
            nu = outer_step(nu, cfg, q, &weights, k2);
            out.push(nu);
        }
        out
    }
}
