//! Aggregation/delay model of a paced WLAN downlink.
//!
//! With packets paced to each station at rate `x_i`, the mean number of
//! packets carried per frame is `N_i = Π(c·x_i / (1 − wᵀx))`, where `c` is the
//! per-round overhead, `w_i` the per-packet transmit time of station `i` and
//! `Π` projects onto `[1, n_max]`. The unprojected map `F` is one-to-one on
//! the feasible set, with inverse `F⁻¹(N) = N / (c + wᵀN)`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// On-air bits per packet: 1500 B payload plus 48 B of MAC overhead.
pub const DEFAULT_PACKET_BITS: f64 = (1500.0 + 48.0) * 8.0;

/// Largest AMPDU aggregation level.
pub const DEFAULT_N_MAX: f64 = 64.0;

/// Rate vectors with `wᵀx ≥ 1 − FEASIBILITY_MARGIN` are treated as infeasible.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

macro_rules! station_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl FromIterator<f64> for $name {
            fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
                Self(iter.into_iter().collect())
            }
        }
    };
}

station_vector!(
    /// Mean send rate per station, packets/second.
    RateVector
);
station_vector!(
    /// Mean packets per frame per station.
    AggregationVector
);

/// Controller-side model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlanModelConfig {
    /// Aggregate per-round overhead, seconds.
    pub c: f64,
    /// Per-packet transmit time of each station, seconds/packet.
    pub w: Vec<f64>,
    /// Maximum packets per frame.
    pub n_max: f64,
    /// On-air bits per packet.
    pub packet_bits: f64,
}

impl WlanModelConfig {
    pub fn new(c: f64, w: Vec<f64>, n_max: f64, packet_bits: f64) -> Result<Self> {
        let cfg = Self { c, w, n_max, packet_bits };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the per-packet times from PHY rates (bits/s).
    pub fn from_phy_rates(c: f64, rates: &[f64], n_max: f64, packet_bits: f64) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(invalid(format!("PHY rate must be positive, got {r}")));
        }
        Self::new(c, rates.iter().map(|r| packet_bits / r).collect(), n_max, packet_bits)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.is_empty() {
            return Err(invalid("at least one station is required"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("overhead c must be positive, got {}", self.c)));
        }
        if let Some(w) = self.w.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(invalid(format!("per-packet time w must be positive, got {w}")));
        }
        if !(self.n_max >= 1.0 && self.n_max.is_finite()) {
            return Err(invalid(format!("n_max must be >= 1, got {}", self.n_max)));
        }
        if !(self.packet_bits > 0.0) {
            return Err(invalid(format!("packet_bits must be positive, got {}", self.packet_bits)));
        }
        Ok(())
    }

    /// Number of stations.
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Channel share used by payload transmissions, `wᵀx`.
    pub fn airtime(&self, x: &[f64]) -> f64 {
        dot(&self.w, x)
    }

    pub fn with_overhead(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got });
        }
        Ok(())
    }
}

/// Raw model output `F(x)` together with its projection onto `[1, n_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub raw: AggregationVector,
    pub projected: AggregationVector,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Projection `Π` onto `[1, n_max]`.
pub fn project(v: f64, n_max: f64) -> f64 {
    v.clamp(1.0, n_max)
}

pub fn feasible(x: &[f64], cfg: &WlanModelConfig) -> bool {
    x.len() == cfg.n() && x.iter().all(|&xi| xi >= 0.0 && xi.is_finite()) && cfg.airtime(x) < 1.0 - FEASIBILITY_MARGIN
}

fn check_feasible(x: &[f64], cfg: &WlanModelConfig) -> Result<f64> {
    cfg.check_len(x.len())?;
    let airtime = cfg.airtime(x);
    if !feasible(x, cfg) {
        return Err(Error::Infeasible { airtime });
    }
    Ok(airtime)
}

/// Evaluates the aggregation model at rate vector `x`.
pub fn aggregation_map(x: &[f64], cfg: &WlanModelConfig) -> Result<Aggregation> {
    let airtime = check_feasible(x, cfg)?;
    let scale = cfg.c / (1.0 - airtime);
    let raw: AggregationVector = x.iter().map(|xi| scale * xi).collect();
    let projected = raw.iter().map(|&v| project(v, cfg.n_max)).collect();
    Ok(Aggregation { raw, projected })
}

/// `F⁻¹(N) = N / (c + wᵀN)`. Entries of `n` must be non-negative.
pub fn inverse_aggregation_map(n: &[f64], cfg: &WlanModelConfig) -> RateVector {
    debug_assert!(n.iter().all(|v| *v >= 0.0), "aggregation levels must be non-negative");
    let denom = cfg.c + dot(&cfg.w, n);
    n.iter().map(|ni| ni / denom).collect()
}

/// Per-station mean delay bound `max{min{c/(1 − wᵀx), n_max/x_i}, 1/x_i}`.
pub fn mean_delay(x: &[f64], cfg: &WlanModelConfig) -> Result<Vec<f64>> {
    let airtime = check_feasible(x, cfg)?;
    let round = cfg.c / (1.0 - airtime);
    x.iter()
        .enumerate()
        .map(|(station, &xi)| {
            if xi <= 0.0 {
                return Err(Error::UndefinedDelay { station });
            }
            Ok(round.min(cfg.n_max / xi).max(1.0 / xi))
        })
        .collect()
}

/// Round duration `c + wᵀN`; equals `c / (1 − wᵀx)` at `x = F⁻¹(N)`.
pub fn delay_from_aggregation(n: &[f64], cfg: &WlanModelConfig) -> f64 {
    cfg.c + dot(&cfg.w, n)
}

// IEEE 802.11ac VHT, 80 MHz, 800 ns guard interval, Mbit/s. MCS 6 is not
// defined for three spatial streams at this width. MCS 2 / NSS 1 carries the
// commonly quoted 87.7 rather than the exact 87.75.
const VHT80_MBPS: [[Option<f64>; 10]; 3] = [
    [
        Some(29.3),
        Some(58.5),
        Some(87.7),
        Some(117.0),
        Some(175.5),
        Some(234.0),
        Some(263.3),
        Some(292.5),
        Some(351.0),
        Some(390.0),
    ],
    [
        Some(58.5),
        Some(117.0),
        Some(175.5),
        Some(234.0),
        Some(351.0),
        Some(468.0),
        Some(526.5),
        Some(585.0),
        Some(702.0),
        Some(780.0),
    ],
    [
        Some(87.8),
        Some(175.5),
        Some(263.3),
        Some(351.0),
        Some(526.5),
        Some(702.0),
        None,
        Some(877.5),
        Some(1053.0),
        Some(1170.0),
    ],
];

/// PHY data rate in bits/s for a VHT 80 MHz MCS / spatial-stream pair.
pub fn vht80_rate(mcs: u8, nss: u8) -> Result<f64> {
    let row = (nss as usize).checked_sub(1).and_then(|i| VHT80_MBPS.get(i));
    row.and_then(|r| r.get(mcs as usize).copied().flatten())
        .map(|mbps| mbps * 1e6)
        .ok_or(Error::UnknownRate { mcs, nss })
}

/// Per-packet transmit time (seconds) for `packet_bits` at the given MCS.
pub fn mcs_to_w(mcs: u8, nss: u8, packet_bits: f64) -> Result<f64> {
    Ok(packet_bits / vht80_rate(mcs, nss)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> WlanModelConfig {
        WlanModelConfig::new(2e-4, vec![w], DEFAULT_N_MAX, DEFAULT_PACKET_BITS).unwrap()
    }

    #[test]
    fn forward_map_single_station() {
        let cfg = single(3.1754e-5);
        let agg = aggregation_map(&[10_000.0], &cfg).unwrap();
        // 2e-4 * 1e4 / (1 - 0.31754)
        assert!((agg.raw[0] - 2.0 / 0.68246).abs() < 1e-12, "{:?}", agg.raw);
        assert!((agg.raw[0] - 2.9306).abs() < 1e-4);
        assert_eq!(agg.projected[0], agg.raw[0]);
    }

    #[test]
    fn zero_rate_projects_to_one() {
        let agg = aggregation_map(&[0.0], &single(3.1754e-5)).unwrap();
        assert_eq!(agg.raw.0, vec![0.0]);
        assert_eq!(agg.projected.0, vec![1.0]);
    }

    #[test]
    fn projection_caps_at_n_max() {
        let cfg = single(3.1754e-5);
        let x = inverse_aggregation_map(&[100.0], &cfg);
        let agg = aggregation_map(&x, &cfg).unwrap();
        assert!((agg.raw[0] - 100.0).abs() < 1e-9);
        assert_eq!(agg.projected[0], 64.0);
    }

    #[test]
    fn inverse_map_values() {
        let cfg = single(3.1754e-5);
        let x = inverse_aggregation_map(&[48.0], &cfg);
        // 48 / (2e-4 + 48 * 3.1754e-5) = 48 / 1.724192e-3
        assert!((x[0] - 27_839.1).abs() < 0.1, "{}", x[0]);
        assert_eq!(inverse_aggregation_map(&[0.0], &cfg).0, vec![0.0]);
        let agg = aggregation_map(&inverse_aggregation_map(&[16.0], &cfg), &cfg).unwrap();
        assert!((agg.projected[0] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn delay_examples() {
        let cfg = single(1.4122e-4);
        assert!((delay_from_aggregation(&[16.0], &cfg) - 2.45952e-3).abs() < 1e-12);
        let x = inverse_aggregation_map(&[16.0], &cfg);
        let d = mean_delay(&x, &cfg).unwrap();
        assert!((d[0] - 2.45952e-3).abs() < 1e-12);

        let fast = single(3.1754e-5);
        let x = inverse_aggregation_map(&[48.0], &fast);
        assert!((mean_delay(&x, &fast).unwrap()[0] - 1.724192e-3).abs() < 1e-12);

        let three = WlanModelConfig::new(2e-4, vec![1e-4; 3], 64.0, DEFAULT_PACKET_BITS).unwrap();
        assert_eq!(delay_from_aggregation(&[0.0; 3], &three), 2e-4);
    }

    #[test]
    fn low_rate_delay_is_inter_packet_time() {
        let cfg = single(3.1754e-5);
        // c/(1 - wx) ~ 2e-4 while 1/x = 0.1
        let d = mean_delay(&[10.0], &cfg).unwrap();
        assert_eq!(d[0], 0.1);
    }

    #[test]
    fn delay_errors() {
        let cfg = single(3.1754e-5);
        assert!(matches!(mean_delay(&[0.0], &cfg), Err(Error::UndefinedDelay { station: 0 })));
        let x = [1.05 / 3.1754e-5];
        assert!(matches!(mean_delay(&x, &cfg), Err(Error::Infeasible { .. })));
        assert!(matches!(aggregation_map(&x, &cfg), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn feasibility() {
        let cfg = single(3.1754e-5);
        assert!(feasible(&[0.0], &cfg));
        assert!(!feasible(&[1.05 / 3.1754e-5], &cfg));
        assert!(!feasible(&[-1.0], &cfg));
        assert!(!feasible(&[1.0 / 3.1754e-5], &cfg));
        assert!(feasible(&inverse_aggregation_map(&[64.0], &cfg), &cfg));
    }

    #[test]
    fn rate_table_anchors() {
        let w2 = mcs_to_w(2, 1, DEFAULT_PACKET_BITS).unwrap();
        let w4 = mcs_to_w(4, 1, DEFAULT_PACKET_BITS).unwrap();
        let w9 = mcs_to_w(9, 1, DEFAULT_PACKET_BITS).unwrap();
        assert!((w2 / 1.4122e-4 - 1.0).abs() < 1e-4);
        assert!((w4 / 7.0564e-5 - 1.0).abs() < 1e-4);
        assert!((w9 / 3.1754e-5 - 1.0).abs() < 1e-4);
        assert_eq!(vht80_rate(9, 3).unwrap(), 1170e6);
    }

    #[test]
    fn rate_table_rejects_unknown() {
        assert!(matches!(vht80_rate(6, 3), Err(Error::UnknownRate { mcs: 6, nss: 3 })));
        assert!(vht80_rate(10, 1).is_err());
        assert!(vht80_rate(0, 0).is_err());
        assert!(vht80_rate(0, 4).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(WlanModelConfig::new(0.0, vec![1e-4], 64.0, 1.0).is_err());
        assert!(WlanModelConfig::new(1e-4, vec![], 64.0, 1.0).is_err());
        assert!(WlanModelConfig::new(1e-4, vec![-1e-4], 64.0, 1.0).is_err());
        assert!(WlanModelConfig::new(1e-4, vec![1e-4], 0.5, 1.0).is_err());
        let cfg = WlanModelConfig::from_phy_rates(2e-4, &[390e6, 87.7e6], 64.0, DEFAULT_PACKET_BITS).unwrap();
        assert_eq!(cfg.n(), 2);
        assert!(matches!(aggregation_map(&[1.0], &cfg), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }
}
