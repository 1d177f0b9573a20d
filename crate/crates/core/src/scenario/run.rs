use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Mode, Scenario};
use crate::controller::{ControllerSnapshot, ControllerState, FeedbackReport};
use crate::error::Result;
use crate::model::{AggregationVector, RateVector};
use crate::pf_solver::{solve_fixed_point, PfSolution};
use crate::plant::Plant;

/// Fraction of the run, counted from the end, treated as steady state.
const STEADY_FRACTION: f64 = 0.2;

/// Relative excursions below this are rounding, not overshoot.
const OVERSHOOT_FLOOR: f64 = 1e-9;

/// Steady-state error allowed for `converged`, relative to the mean target.
const CONVERGED_RELATIVE: f64 = 0.02;

/// One slot of a run: the rates applied, what the plant reported, and the
/// controller state that produced those rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub slot: u64,
    /// End of the slot, seconds.
    pub time_s: f64,
    pub x: RateVector,
    pub n_meas: AggregationVector,
    pub n_target: AggregationVector,
    pub nu: f64,
    pub c_hat: f64,
    /// Seconds.
    pub delay: f64,
    pub overloaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Slots for the station-mean aggregation to go from 10% to 90% of its
    /// step; `None` if it never gets there.
    pub rise_time_slots: Option<u64>,
    /// Peak excursion beyond the final value, as a fraction of the step.
    pub overshoot_fraction: f64,
    /// Mean `|N_target − n_meas|` over the final 20% of slots.
    pub steady_state_error: f64,
    /// RMS of `delay − t_bar` over the final 20% of slots, seconds.
    pub delay_rms_error: f64,
    /// `steady_state_error ≤ 0.02·mean target + noise_sigma`.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<SlotRow>,
    pub metrics: RunMetrics,
    /// Controller state after the last slot; absent in open-loop runs.
    pub final_state: Option<ControllerSnapshot>,
}

enum Driver {
    Feedback(ControllerState),
    Fixed(PfSolution, f64),
}

impl Driver {
    fn new(s: &Scenario) -> Result<Self> {
        if s.mode == Mode::OpenLoopSolve {
            return Ok(Driver::Fixed(solve_fixed_point(&s.model, &s.targets)?, s.model.c));
        }
        let mut ctl = ControllerState::new(&s.model, s.targets, s.gains)?.with_c_hat(s.initial_c_hat)?;
        if let Some(t) = s.fixed_target {
            ctl = ctl.with_fixed_target(t)?;
        }
        Ok(Driver::Feedback(ctl))
    }

    fn rates(&self) -> RateVector {
        match self {
            Driver::Feedback(ctl) => ctl.compute_rates(),
            Driver::Fixed(sol, _) => sol.x_star.clone(),
        }
    }

    /// `(N_target, ν, ĉ)` currently in force.
    fn state(&self) -> (AggregationVector, f64, f64) {
        match self {
            Driver::Feedback(ctl) => (ctl.n_target(), ctl.nu, ctl.c_hat),
            Driver::Fixed(sol, c) => (sol.n_star.clone(), sol.nu_star, *c),
        }
    }
}

/// Runs the scenario once with its configured seed.
///
/// Each slot: apply disturbances scheduled for it, step the plant with the
/// current rates, log the row, then let the controller process the report.
pub fn run(s: &Scenario) -> Result<RunOutput> {
    let mut plant = Plant::new(s.plant.clone())?;
    let mut driver = Driver::new(s)?;
    let mut x = driver.rates();
    let dt = s.plant.slot_duration;
    let mut rows = Vec::with_capacity(s.duration_slots as usize);

    for k in 1..=s.duration_slots {
        for ev in s.disturbances.iter().filter(|e| e.at_slot == k) {
            plant.apply_disturbance(ev)?;
        }
        let m = plant.step(&x)?;
        let (n_target, nu, c_hat) = driver.state();
        let report = FeedbackReport { n_meas: m.n_meas.clone(), mcs_report: m.mcs_report, slot_index: k };
        rows.push(SlotRow {
            slot: k,
            time_s: k as f64 * dt,
            x: x.clone(),
            n_meas: m.n_meas,
            n_target,
            nu,
            c_hat,
            delay: m.delay,
            overloaded: m.overloaded,
        });
        if let Driver::Feedback(ctl) = &mut driver {
            x = ctl.step(&report, &x)?;
        }
    }

    let metrics = compute_metrics(&rows, s.targets.t_bar, s.plant.noise_sigma);
    let final_state = match &driver {
        Driver::Feedback(ctl) => Some(ctl.snapshot()),
        Driver::Fixed(..) => None,
    };
    Ok(RunOutput { name: s.name.clone(), seed: s.plant.rng_seed, rows, metrics, final_state })
}

/// All replications of a scenario, seeds `seed, seed+1, …`, in order.
pub fn run_replications(s: &Scenario) -> Result<Vec<RunOutput>> {
    (0..s.replications).into_par_iter().map(|r| run(&s.with_seed(s.replication_seed(r)))).collect()
}

fn station_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn steady_window(len: usize) -> usize {
    len - ((len as f64 * STEADY_FRACTION).ceil() as usize).clamp(1, len)
}

pub(crate) fn compute_metrics(rows: &[SlotRow], t_bar: f64, sigma: f64) -> RunMetrics {
    let y: Vec<f64> = rows.iter().map(|r| station_mean(&r.n_meas)).collect();
    let start = steady_window(rows.len());
    let tail = &rows[start..];
    let tail_len = tail.len() as f64;

    let y_final = y[start..].iter().sum::<f64>() / tail_len;
    let y0 = y[0];
    let step = y_final - y0;

    let (rise_time_slots, overshoot_fraction) = if step.abs() < 1e-12 {
        (Some(0), 0.0)
    } else {
        let frac = |v: f64| (v - y0) / step;
        let t10 = y.iter().position(|v| frac(*v) >= 0.1);
        let t90 = y.iter().position(|v| frac(*v) >= 0.9);
        let rise = match (t10, t90) {
            (Some(a), Some(b)) => Some(b.saturating_sub(a) as u64),
            _ => None,
        };
        let peak = y.iter().map(|v| frac(*v)).fold(f64::NEG_INFINITY, f64::max);
        let over = peak - 1.0;
        (rise, if over > OVERSHOOT_FLOOR { over } else { 0.0 })
    };

    let steady_state_error = tail
        .iter()
        .map(|r| station_mean(&r.n_target.iter().zip(r.n_meas.iter()).map(|(t, m)| (t - m).abs()).collect::<Vec<_>>()))
        .sum::<f64>()
        / tail_len;
    let delay_rms_error = (tail.iter().map(|r| (r.delay - t_bar).powi(2)).sum::<f64>() / tail_len).sqrt();
    let mean_target = tail.iter().map(|r| station_mean(&r.n_target)).sum::<f64>() / tail_len;
    let converged = steady_state_error <= CONVERGED_RELATIVE * mean_target + sigma;

    RunMetrics { rise_time_slots, overshoot_fraction, steady_state_error, delay_rms_error, converged }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

/// Writes the per-slot series as CSV.
///
/// Columns: `slot, time_s`, then `x_pps_i, n_meas_i, n_target_i` for each
/// station `i`, then `nu, c_hat_us, delay_ms, overloaded`.
pub fn write_csv<W: Write>(rows: &[SlotRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = rows.first().map_or(0, |r| r.x.len());
    let mut header = vec!["slot".to_string(), "time_s".to_string()];
    for i in 0..n {
        header.extend([format!("x_pps_{i}"), format!("n_meas_{i}"), format!("n_target_{i}")]);
    }
    header.extend(["nu", "c_hat_us", "delay_ms", "overloaded"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;

    for r in rows {
        let mut rec = vec![r.slot.to_string(), r.time_s.to_string()];
        for i in 0..n {
            rec.extend([r.x[i].to_string(), r.n_meas[i].to_string(), r.n_target[i].to_string()]);
        }
        rec.extend([
            r.nu.to_string(),
            (r.c_hat * 1e6).to_string(),
            (r.delay * 1e3).to_string(),
            u8::from(r.overloaded).to_string(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to a temporary file next to `path` and renames it into place.
pub(crate) fn write_atomic(path: &Path, fill: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl RunOutput {
    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        write_atomic(path, |f| write_csv(&self.rows, std::io::BufWriter::new(f)))
    }
}

pub fn write_json_atomic<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)?;
        f.write_all(b"\n")?;
        Ok(())
    })
}
