//! Configuration-driven experiments: a controller wired to a simulated plant.
//!
//! Scenario files are JSON documents deserialised into [`ScenarioFile`] and
//! resolved into a validated [`Scenario`]. See `docs/scenario-format.md` for
//! the schema.

mod presets;
mod run;
mod sweep;

pub use presets::{preset, presets, Preset, SweepSpec};
pub use run::{run, run_replications, write_csv, write_json_atomic, RunMetrics, RunOutput, SlotRow};
pub use sweep::{sweep, SweepAxis, SweepRow, SweepTable};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{cold_start_overhead, ControllerGains};
use crate::error::{invalid, Error, Result};
use crate::model::{vht80_rate, WlanModelConfig, DEFAULT_N_MAX, DEFAULT_PACKET_BITS};
use crate::pf_solver::QosTargets;
use crate::plant::{DisturbanceEvent, DisturbanceKind, PlantConfig, DEFAULT_SLOT_DURATION};

/// How the send rates are produced each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Inner and outer loops both active.
    #[default]
    ClosedLoop,
    /// Inner loop only, tracking `fixed_target` at every station.
    InnerOnly,
    /// The optimal allocation for the configured model, applied open loop.
    OpenLoopSolve,
}

/// A station's PHY rate, either from the VHT table or given directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StationSpec {
    Mcs {
        mcs: u8,
        #[serde(default = "one")]
        nss: u8,
    },
    Rate {
        phy_rate_bps: f64,
    },
}

fn one() -> u8 {
    1
}

impl StationSpec {
    pub fn rate_bps(&self) -> Result<f64> {
        match *self {
            StationSpec::Mcs { mcs, nss } => vht80_rate(mcs, nss),
            StationSpec::Rate { phy_rate_bps } => Ok(phy_rate_bps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsSpec {
    /// Delay target, seconds.
    pub t_bar_s: f64,
    /// Aggregation cap; `null` or absent removes it.
    #[serde(default)]
    pub n_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// True overhead; defaults to the model overhead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead_s: Option<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_slot")]
    pub slot_duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_slot() -> f64 {
    DEFAULT_SLOT_DURATION
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self { overhead_s: None, noise_sigma: 0.0, slot_duration_s: DEFAULT_SLOT_DURATION, seed: 0 }
    }
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub stations: Vec<StationSpec>,
    #[serde(default = "default_packet_bits")]
    pub packet_bits: f64,
    #[serde(default = "default_n_max")]
    pub n_max: f64,
    /// Model overhead `c`, seconds. Used by `solve` and `open_loop_solve`.
    pub overhead_s: f64,
    pub targets: TargetsSpec,
    #[serde(default)]
    pub gains: ControllerGains,
    /// Controller's starting `ĉ`; defaults to the cold-start value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_c_hat_s: Option<f64>,
    #[serde(default)]
    pub plant: PlantSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<DisturbanceEvent>,
    pub duration_slots: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_target: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: u32,
}

fn default_packet_bits() -> f64 {
    DEFAULT_PACKET_BITS
}

fn default_n_max() -> f64 {
    DEFAULT_N_MAX
}

fn default_replications() -> u32 {
    1
}

/// Validated, fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: WlanModelConfig,
    pub targets: QosTargets,
    pub gains: ControllerGains,
    pub initial_c_hat: f64,
    pub plant: PlantConfig,
    pub disturbances: Vec<DisturbanceEvent>,
    pub duration_slots: u64,
    pub mode: Mode,
    pub fixed_target: Option<f64>,
    pub replications: u32,
}

impl ScenarioFile {
    pub fn from_json_str(text: &str, source_name: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|err| {
            let field = err.path().to_string();
            let inner = err.into_inner();
            Error::Parse {
                source_name: source_name.to_path_buf(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, path)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolve(&self) -> Result<Scenario> {
        Scenario::from_file(self)
    }
}

impl Scenario {
    pub fn from_file(f: &ScenarioFile) -> Result<Self> {
        if f.stations.is_empty() {
            return Err(invalid("stations: at least one station is required"));
        }
        if f.duration_slots < 1 {
            return Err(invalid("duration_slots must be >= 1"));
        }
        if f.replications < 1 {
            return Err(invalid("replications must be >= 1"));
        }
        let rates = f.stations.iter().map(StationSpec::rate_bps).collect::<Result<Vec<_>>>()?;
        let model = WlanModelConfig::from_phy_rates(f.overhead_s, &rates, f.n_max, f.packet_bits)?;
        let targets = QosTargets { t_bar: f.targets.t_bar_s, n_bar: f.targets.n_bar.unwrap_or(f64::INFINITY) };
        targets.validate(&model)?;
        f.gains.validate()?;

        let initial_c_hat = f.initial_c_hat_s.unwrap_or_else(|| cold_start_overhead(model.n()));
        if !(initial_c_hat > 0.0 && initial_c_hat.is_finite()) {
            return Err(invalid(format!("initial_c_hat_s must be positive, got {initial_c_hat}")));
        }

        let plant = PlantConfig {
            c_true: f.plant.overhead_s.unwrap_or(f.overhead_s),
            w_true: model.w.clone(),
            noise_sigma: f.plant.noise_sigma,
            slot_duration: f.plant.slot_duration_s,
            n_max: f.n_max,
            packet_bits: f.packet_bits,
            rng_seed: f.plant.seed,
        };
        plant.validate()?;

        for (i, ev) in f.disturbances.iter().enumerate() {
            if ev.at_slot < 1 {
                return Err(invalid(format!("disturbances[{i}].at_slot must be >= 1")));
            }
            if let DisturbanceKind::McsChange { station, .. } = ev.kind {
                if station >= model.n() {
                    return Err(Error::UnknownStation { station, n: model.n() });
                }
            }
        }

        match (f.mode, f.fixed_target) {
            (Mode::InnerOnly, None) => return Err(invalid("mode inner_only requires fixed_target")),
            (Mode::InnerOnly, Some(t)) if !(1.0..=f.n_max).contains(&t) => {
                return Err(invalid(format!("fixed_target must lie in [1, n_max], got {t}")))
            }
            _ => {}
        }
        if f.mode != Mode::OpenLoopSolve && !targets.n_bar.is_finite() {
            return Err(invalid("the feedback controller requires a finite targets.n_bar"));
        }

        Ok(Self {
            name: f.name.clone(),
            model,
            targets,
            gains: f.gains,
            initial_c_hat,
            plant,
            disturbances: f.disturbances.clone(),
            duration_slots: f.duration_slots,
            mode: f.mode,
            fixed_target: f.fixed_target.filter(|_| f.mode == Mode::InnerOnly),
            replications: f.replications,
        })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.plant.rng_seed = seed;
        s
    }

    /// Seed used by replication `r`.
    pub fn replication_seed(&self, r: u32) -> u64 {
        self.plant.rng_seed.wrapping_add(r as u64)
    }
}
