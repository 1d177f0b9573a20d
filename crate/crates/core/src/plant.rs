//! Slotted simulator of the actual WLAN seen by the controller.
//!
//! The plant follows the same aggregation law as the model but with its own
//! (time-varying) overhead `c̃` and per-packet times `w̃`, per-frame sampling
//! noise on the observed aggregation levels, and a fluid queue that absorbs
//! offered load beyond channel capacity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{project, AggregationVector, FEASIBILITY_MARGIN};

/// Default control slot, seconds.
pub const DEFAULT_SLOT_DURATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Initial true overhead `c̃`, seconds.
    pub c_true: f64,
    /// Initial true per-packet times `w̃`, seconds/packet.
    pub w_true: Vec<f64>,
    /// Standard deviation of a single frame's packet count around the mean.
    pub noise_sigma: f64,
    /// Slot length `Δ`, seconds.
    pub slot_duration: f64,
    pub n_max: f64,
    pub packet_bits: f64,
    pub rng_seed: u64,
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_true > 0.0 && self.c_true.is_finite()) {
            return Err(invalid(format!("plant overhead must be positive, got {}", self.c_true)));
        }
        if self.w_true.is_empty() || self.w_true.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("plant per-packet times must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.slot_duration > 0.0 && self.slot_duration.is_finite()) {
            return Err(invalid(format!("slot duration must be positive, got {}", self.slot_duration)));
        }
        if !(self.n_max >= 1.0) {
            return Err(invalid(format!("n_max must be >= 1, got {}", self.n_max)));
        }
        if !(self.packet_bits > 0.0) {
            return Err(invalid("packet_bits must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// New true overhead, e.g. stations joining the channel.
    OverheadStep { c_true: f64 },
    /// Station switches to a new PHY rate (bits/s).
    McsChange { station: usize, rate_bps: f64 },
    /// Per-frame noise raised to `sigma` for `duration` slots.
    NoiseBurst { sigma: f64, duration: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub at_slot: u64,
    #[serde(flatten)]
    pub kind: DisturbanceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMeasurement {
    pub n_meas: AggregationVector,
    pub frames_per_station: Vec<u64>,
    /// Round duration plus queue drain time, seconds.
    pub delay: f64,
    /// PHY rate per station, bits/s.
    pub mcs_report: Vec<f64>,
    pub overloaded: bool,
}

#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    slot: u64,
    c_true: f64,
    w_true: Vec<f64>,
    sigma: f64,
    burst_until: Option<u64>,
    /// Queued work in seconds of airtime, drained at rate 1.
    backlog: f64,
    rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(config: PlantConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            slot: 0,
            c_true: config.c_true,
            w_true: config.w_true.clone(),
            sigma: config.noise_sigma,
            burst_until: None,
            backlog: 0.0,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    /// Number of slots simulated so far.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn c_true(&self) -> f64 {
        self.c_true
    }

    pub fn w_true(&self) -> &[f64] {
        &self.w_true
    }

    pub fn backlog(&self) -> f64 {
        self.backlog
    }

    pub fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    /// True mean aggregation levels `Π(c̃·x / (1 − w̃ᵀx))` for a feasible `x`.
    pub fn true_means(&self, x: &[f64]) -> Option<AggregationVector> {
        let airtime = dot(&self.w_true, x);
        if airtime >= 1.0 - FEASIBILITY_MARGIN {
            return None;
        }
        let scale = self.c_true / (1.0 - airtime);
        Some(x.iter().map(|xi| project(scale * xi, self.config.n_max)).collect())
    }

    pub fn apply_disturbance(&mut self, event: &DisturbanceEvent) -> Result<()> {
        match event.kind {
            DisturbanceKind::OverheadStep { c_true } => {
                if !(c_true > 0.0 && c_true.is_finite()) {
                    return Err(invalid(format!("overhead step must be positive, got {c_true}")));
                }
                self.c_true = c_true;
            }
            DisturbanceKind::McsChange { station, rate_bps } => {
                let n = self.w_true.len();
                if station >= n {
                    return Err(Error::UnknownStation { station, n });
                }
                if !(rate_bps > 0.0 && rate_bps.is_finite()) {
                    return Err(invalid(format!("PHY rate must be positive, got {rate_bps}")));
                }
                self.w_true[station] = self.config.packet_bits / rate_bps;
            }
            DisturbanceKind::NoiseBurst { sigma, duration } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(invalid(format!("noise sigma must be >= 0, got {sigma}")));
                }
                self.sigma = sigma;
                // covers slots at_slot .. at_slot + duration - 1
                self.burst_until = Some(event.at_slot.max(self.slot + 1) + duration);
            }
        }
        Ok(())
    }

    /// Simulates one slot with send rates `x` held constant.
    pub fn step(&mut self, x: &[f64]) -> Result<SlotMeasurement> {
        let n = self.w_true.len();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        if let Some(xi) = x.iter().find(|xi| !(**xi >= 0.0 && xi.is_finite())) {
            return Err(invalid(format!("send rates must be non-negative, got {xi}")));
        }
        self.slot += 1;
        if self.burst_until.is_some_and(|end| self.slot >= end) {
            self.sigma = self.config.noise_sigma;
            self.burst_until = None;
        }

        let n_max = self.config.n_max;
        let dt = self.config.slot_duration;
        let airtime = dot(&self.w_true, x);
        let (means, overloaded) = match self.true_means(x) {
            Some(m) => {
                self.backlog = (self.backlog - (1.0 - airtime) * dt).max(0.0);
                (m, false)
            }
            None => {
                self.backlog += (airtime - 1.0).max(0.0) * dt;
                (AggregationVector(vec![n_max; n]), true)
            }
        };

        let mut n_meas = Vec::with_capacity(n);
        let mut frames = Vec::with_capacity(n);
        for (&xi, &mean) in x.iter().zip(means.iter()) {
            if xi <= 0.0 {
                n_meas.push(1.0);
                frames.push(0);
                continue;
            }
            let count = ((xi * dt / mean).round() as u64).max(1);
            let observed = if self.sigma > 0.0 {
                let mut sum = 0.0;
                for _ in 0..count {
                    let g: f64 = StandardNormal.sample(&mut self.rng);
                    sum += (mean + self.sigma * g).clamp(1.0, n_max);
                }
                sum / count as f64
            } else {
                mean
            };
            n_meas.push(observed);
            frames.push(count);
        }

        let active_load: f64 = x
            .iter()
            .zip(&self.w_true)
            .zip(means.iter())
            .filter(|((xi, _), _)| **xi > 0.0)
            .map(|((_, w), m)| w * m)
            .sum();
        let delay = self.c_true + active_load + self.backlog;

        Ok(SlotMeasurement {
            n_meas: AggregationVector(n_meas),
            frames_per_station: frames,
            delay,
            mcs_report: self.w_true.iter().map(|w| self.config.packet_bits / w).collect(),
            overloaded,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
