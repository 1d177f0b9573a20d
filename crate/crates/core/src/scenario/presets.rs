//! Built-in experiments.

use serde::{Deserialize, Serialize};

use super::{Mode, PlantSpec, ScenarioFile, StationSpec, SweepAxis, TargetsSpec};
use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::model::{DEFAULT_N_MAX, DEFAULT_PACKET_BITS};
use crate::plant::{DisturbanceEvent, DisturbanceKind, DEFAULT_SLOT_DURATION};

/// Per-station overhead used throughout the presets, seconds.
const OVERHEAD_PER_STATION: f64 = 200e-6;
const REPLICATIONS: u32 = 10;
const SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub scenarios: Vec<ScenarioFile>,
    /// Applied to each scenario by `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn mcs9(n: usize) -> Vec<StationSpec> {
    vec![StationSpec::Mcs { mcs: 9, nss: 1 }; n]
}

fn scenario(name: String, stations: Vec<StationSpec>, sigma: f64, duration_slots: u64) -> ScenarioFile {
    let n = stations.len() as f64;
    ScenarioFile {
        name,
        stations,
        packet_bits: DEFAULT_PACKET_BITS,
        n_max: DEFAULT_N_MAX,
        overhead_s: n * OVERHEAD_PER_STATION,
        targets: TargetsSpec { t_bar_s: 2.5e-3, n_bar: Some(48.0) },
        gains: ControllerGains::default(),
        initial_c_hat_s: None,
        plant: PlantSpec { overhead_s: None, noise_sigma: sigma, slot_duration_s: DEFAULT_SLOT_DURATION, seed: SEED },
        disturbances: Vec::new(),
        duration_slots,
        mode: Mode::ClosedLoop,
        fixed_target: None,
        replications: REPLICATIONS,
    }
}

fn step_k1() -> Preset {
    let mut scenarios = Vec::new();
    for n in [1, 10] {
        for k1 in [0.1, 0.3, 0.5, 0.8] {
            let mut s = scenario(format!("step_k1_n{n}_k{k1}"), mcs9(n), 1.0, 100);
            s.mode = Mode::InnerOnly;
            s.fixed_target = Some(32.0);
            s.gains.k1 = k1;
            scenarios.push(s);
        }
    }
    Preset {
        name: "step_k1".into(),
        description:
            "inner-loop step response to N_target = 32 at MCS 9 for n in {1, 10} and K1 in {0.1, 0.3, 0.5, 0.8}".into(),
        scenarios,
        sweep: None,
    }
}

fn delay_reg() -> Preset {
    let scenarios = [2u8, 4, 9]
        .into_iter()
        .map(|mcs| scenario(format!("delay_reg_mcs{mcs}"), vec![StationSpec::Mcs { mcs, nss: 1 }], 1.0, 300))
        .collect();
    Preset {
        name: "delay_reg".into(),
        description: "one station, t_bar = 2.5 ms, n_bar = 48, MCS in {2, 4, 9}".into(),
        scenarios,
        sweep: None,
    }
}

fn c_track() -> Preset {
    let mut s = scenario("c_track".into(), mcs9(1), 2.0, 400);
    s.mode = Mode::InnerOnly;
    s.fixed_target = Some(32.0);
    s.disturbances.push(DisturbanceEvent { at_slot: 150, kind: DisturbanceKind::OverheadStep { c_true: 2.2e-3 } });
    Preset {
        name: "c_track".into(),
        description: "overhead steps from 200 us to 2200 us at slot 150 while tracking N_target = 32".into(),
        scenarios: vec![s],
        sweep: None,
    }
}

fn t_bar_sweep() -> Preset {
    let scenarios = [1, 10, 25]
        .into_iter()
        .map(|n| {
            let mut s = scenario(format!("t_bar_sweep_n{n}"), mcs9(n), 1.0, 600);
            s.targets.t_bar_s = 10e-3;
            s
        })
        .collect();
    Preset {
        name: "t_bar_sweep".into(),
        description: "closed loop at MCS 9, n in {1, 10, 25}, swept over t_bar in {5, 10, 20} ms".into(),
        scenarios,
        sweep: Some(SweepSpec { axis: SweepAxis::TBar, values: vec![5e-3, 10e-3, 20e-3] }),
    }
}

pub fn presets() -> Vec<Preset> {
    vec![step_k1(), delay_reg(), c_track(), t_bar_sweep()]
}

pub fn preset(name: &str) -> Result<Preset> {
    presets().into_iter().find(|p| p.name == name).ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for p in presets() {
            for s in &p.scenarios {
                s.resolve().unwrap_or_else(|e| panic!("{}: {e}", s.name));
            }
        }
    }

    #[test]
    fn names_unique() {
        let mut names: Vec<String> =
            presets().iter().flat_map(|p| p.scenarios.iter().map(|s| s.name.clone())).collect();
        let len = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), len);
    }

    #[test]
    fn lookup() {
        assert_eq!(preset("delay_reg").unwrap().scenarios.len(), 3);
        assert_eq!(preset("step_k1").unwrap().scenarios.len(), 8);
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }
}
