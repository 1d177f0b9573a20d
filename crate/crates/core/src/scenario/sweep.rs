use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{csv_err, run_replications, write_atomic};
use super::{ScenarioFile, StationSpec};
use crate::error::{invalid, Error, Result};
use crate::pf_solver::{solve_fixed_point, Regime};
use crate::plant::DisturbanceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Delay target, seconds.
    TBar,
    /// Number of stations; copies of station 0, overheads scaled with `n`.
    N,
    /// MCS index applied to every station.
    Mcs,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::TBar => "t_bar",
            SweepAxis::N => "n",
            SweepAxis::Mcs => "mcs",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t_bar" => Ok(SweepAxis::TBar),
            "n" => Ok(SweepAxis::N),
            "mcs" => Ok(SweepAxis::Mcs),
            other => Err(invalid(format!("unknown sweep axis `{other}` (expected t_bar, n or mcs)"))),
        }
    }
}

/// Steady-state statistics for one axis value, pooled over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Regime of the optimal allocation for the model at this value.
    pub regime: Option<Regime>,
    /// Seconds.
    pub mean_delay: f64,
    /// Station-mean send rate, packets/s.
    pub mean_rate: f64,
    pub p75_delay: f64,
    pub p75_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub base: String,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn integer(value: f64, what: &str, lo: f64, hi: f64) -> Result<f64> {
    if value.fract() != 0.0 || !(lo..=hi).contains(&value) {
        return Err(invalid(format!("{what} must be an integer in [{lo}, {hi}], got {value}")));
    }
    Ok(value)
}

/// Scenario file for one point of the sweep.
pub(crate) fn at_value(base: &ScenarioFile, axis: SweepAxis, value: f64) -> Result<ScenarioFile> {
    let mut f = base.clone();
    f.name = format!("{}_{}{}", base.name, axis, value);
    match axis {
        SweepAxis::TBar => f.targets.t_bar_s = value,
        SweepAxis::N => {
            let n = integer(value, "station count", 1.0, 1e4)? as usize;
            let first = *base.stations.first().ok_or_else(|| invalid("stations: at least one station is required"))?;
            let scale = n as f64 / base.stations.len() as f64;
            f.stations = vec![first; n];
            f.overhead_s *= scale;
            f.plant.overhead_s = f.plant.overhead_s.map(|c| c * scale);
            f.initial_c_hat_s = f.initial_c_hat_s.map(|c| c * scale);
            for ev in &mut f.disturbances {
                if let DisturbanceKind::OverheadStep { c_true } = &mut ev.kind {
                    *c_true *= scale;
                }
            }
        }
        SweepAxis::Mcs => {
            let mcs = integer(value, "MCS index", 0.0, 9.0)? as u8;
            for st in &mut f.stations {
                let nss = match *st {
                    StationSpec::Mcs { nss, .. } => nss,
                    StationSpec::Rate { .. } => 1,
                };
                *st = StationSpec::Mcs { mcs, nss };
            }
        }
    }
    Ok(f)
}

/// 75th percentile by nearest rank.
pub(crate) fn p75(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let rank = (0.75 * samples.len() as f64).ceil() as usize;
    samples[rank.max(1) - 1]
}

fn sweep_point(base: &ScenarioFile, axis: SweepAxis, value: f64) -> Result<SweepRow> {
    let s = at_value(base, axis, value)?.resolve()?;
    let regime = solve_fixed_point(&s.model, &s.targets).ok().map(|sol| sol.regime);
    let mut delays = Vec::new();
    let mut rates = Vec::new();
    for out in run_replications(&s)? {
        let half = out.rows.len() / 2;
        for r in &out.rows[half..] {
            delays.push(r.delay);
            rates.push(r.x.iter().sum::<f64>() / r.x.len() as f64);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(SweepRow {
        value,
        regime,
        mean_delay: mean(&delays),
        mean_rate: mean(&rates),
        p75_delay: p75(&mut delays),
        p75_rate: p75(&mut rates),
    })
}

/// Runs `base` once per value along `axis` and reports steady-state delay
/// and rate over the final half of each run. Points run in parallel; rows
/// come back in the order of `values`.
pub fn sweep(base: &ScenarioFile, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    let rows = values
        .par_iter()
        .map(|&v| sweep_point(base, axis, v).map_err(|e| Error::Sweep { value: v, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { base: base.name.clone(), axis, rows })
}

impl SweepTable {
    /// Columns: `value, regime, mean_delay_ms, mean_rate_pps, p75_delay_ms,
    /// p75_rate_pps`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "regime", "mean_delay_ms", "mean_rate_pps", "p75_delay_ms", "p75_rate_pps"])
            .map_err(csv_err)?;
        for r in &self.rows {
            let regime = r.regime.map_or("unsolved", |g| g.as_str()).to_string();
            w.write_record([
                r.value.to_string(),
                regime,
                (r.mean_delay * 1e3).to_string(),
                r.mean_rate.to_string(),
                (r.p75_delay * 1e3).to_string(),
                r.p75_rate.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        write_atomic(path, |f| self.write_csv(std::io::BufWriter::new(f)))
    }
}
