//! Fixtures shared by the benchmarks.

use pfdelay_core::model::{mcs_to_w, DEFAULT_N_MAX, DEFAULT_PACKET_BITS};
use pfdelay_core::{QosTargets, WlanModelConfig};

/// Per-station overhead, seconds.
pub const OVERHEAD_PER_STATION: f64 = 200e-6;

/// `n` stations cycling through MCS 2, 5, 7 and 9, with a delay target
/// twice the minimum round so every size is delay-feasible.
pub fn mixed_instance(n: usize) -> (WlanModelConfig, QosTargets) {
    let w: Vec<f64> =
        [2u8, 5, 7, 9].iter().cycle().take(n).map(|m| mcs_to_w(*m, 1, DEFAULT_PACKET_BITS).unwrap()).collect();
    let c = n as f64 * OVERHEAD_PER_STATION;
    let w1 = w.iter().cloned().fold(0.0, f64::max);
    let cfg = WlanModelConfig::new(c, w, DEFAULT_N_MAX, DEFAULT_PACKET_BITS).unwrap();
    (cfg, QosTargets::new(2.0 * (c + n as f64 * w1), 48.0))
}

/// Station counts used by the size-scaling benchmarks.
pub const SIZES: [usize; 4] = [1, 3, 10, 25];
