//! Proportional-fair, low-delay rate control for aggregation-based 802.11ac
//! downlinks.
//!
//! * [`model`]: paced-WLAN aggregation and delay model and its inverse.
//! * [`pf_solver`]: the proportional-fair allocation (closed form, offline
//!   iteration, reference oracle) and KKT certificates.
//! * [`controller`]: the online inner/outer feedback controller.
//! * [`plant`]: slotted WLAN simulator with model mismatch and noise.
//! * [`scenario`]: scenario files, runner, metrics, sweeps and presets.

// `!(v > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod model;
pub mod pf_solver;
pub mod plant;
pub mod scenario;

pub use controller::{ControllerGains, ControllerSnapshot, ControllerState, FeedbackReport, LoopDiagnostics};
pub use error::{Error, Result};
pub use model::{AggregationVector, RateVector, WlanModelConfig};
pub use pf_solver::{KktCertificate, PfSolution, QosTargets, Regime, WeightVector};
pub use plant::{DisturbanceEvent, DisturbanceKind, Plant, PlantConfig, SlotMeasurement};
pub use scenario::{Mode, RunMetrics, Scenario, ScenarioFile};
