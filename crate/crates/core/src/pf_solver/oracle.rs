//! Independent reference optimiser for small instances.
//!
//! Works directly on the linear constraints, in airtime coordinates
//! `a_i = w_i·x_i`, without using the closed-form structure of the optimum:
//! a grid search picks a strictly feasible starting point and a log-barrier
//! Newton method then follows the central path to the optimum.

use nalgebra::{DMatrix, DVector};

use super::QosTargets;
use crate::error::{Error, Result};
use crate::model::{RateVector, WlanModelConfig};

pub const ORACLE_MAX_STATIONS: usize = 3;

/// Stop the central path once the duality gap bound `m/t` drops below this.
const GAP_TOLERANCE: f64 = 1e-13;
const BARRIER_GROWTH: f64 = 10.0;
const NEWTON_TOLERANCE: f64 = 1e-14;
const MAX_NEWTON_STEPS: usize = 200;

/// Linear constraints `A·a ≤ b` in airtime coordinates.
struct Polytope {
    rows: Vec<Vec<f64>>,
    bounds: Vec<f64>,
}

impl Polytope {
    fn new(cfg: &WlanModelConfig, q: &QosTargets) -> Self {
        let n = cfg.n();
        let mut rows = vec![vec![1.0; n]];
        let mut bounds = vec![1.0 - cfg.c / q.t_bar];
        if q.n_bar.is_finite() {
            // (c·x_i + n_bar·wᵀx ≤ n_bar) / n_bar
            for i in 0..n {
                let mut row = vec![1.0; n];
                row[i] += cfg.c / (cfg.w[i] * q.n_bar);
                rows.push(row);
                bounds.push(1.0);
            }
        }
        Self { rows, bounds }
    }

    fn slacks(&self, a: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.bounds)
            .map(|(row, b)| b - row.iter().zip(a).map(|(r, a)| r * a).sum::<f64>())
            .collect()
    }

    fn strictly_inside(&self, a: &[f64]) -> bool {
        a.iter().all(|v| *v > 0.0) && self.slacks(a).iter().all(|s| *s > 0.0)
    }
}

fn utility(a: &[f64]) -> f64 {
    a.iter().map(|v| v.ln()).sum()
}

/// Maximises `Σ log x_i` over the linear constraint set for `n ≤ 3` stations.
///
/// `grid_resolution` is the number of grid points per axis used to seed the
/// barrier method; the result is deterministic for a given resolution.
pub fn brute_force_oracle(cfg: &WlanModelConfig, q: &QosTargets, grid_resolution: usize) -> Result<RateVector> {
    cfg.validate()?;
    q.validate(cfg)?;
    let n = cfg.n();
    if n > ORACLE_MAX_STATIONS {
        return Err(Error::UnsupportedSize { n, max: ORACLE_MAX_STATIONS });
    }
    let poly = Polytope::new(cfg, q);
    let a0 = grid_start(&poly, n, grid_resolution.max(2));
    let a = central_path(&poly, a0);
    Ok(a.iter().zip(&cfg.w).map(|(a, w)| a / w).collect())
}

fn grid_start(poly: &Polytope, n: usize, res: usize) -> Vec<f64> {
    let budget = poly.bounds[0];
    let axis: Vec<f64> = (0..res).map(|j| budget * (j as f64 + 0.5) / res as f64).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; n];
    loop {
        let a: Vec<f64> = idx.iter().map(|&j| axis[j]).collect();
        if poly.strictly_inside(&a) {
            let u = utility(&a);
            if best.as_ref().is_none_or(|(bu, _)| u > *bu) {
                best = Some((u, a));
            }
        }
        // odometer increment
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < res {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    // grid points can land on a face; every row is non-negative, so pulling
    // toward the origin leaves slack of at least b/(2·res) on each
    let shrink = 1.0 - 0.5 / res as f64;
    best.map(|(_, a)| a.iter().map(|v| v * shrink).collect()).unwrap_or_else(|| {
        let mut a = vec![budget / (2.0 * n as f64); n];
        while !poly.strictly_inside(&a) {
            a.iter_mut().for_each(|v| *v *= 0.5);
        }
        a
    })
}

fn barrier(poly: &Polytope, a: &[f64], t: f64) -> Option<f64> {
    if !poly.strictly_inside(a) {
        return None;
    }
    Some(-t * utility(a) - poly.slacks(a).iter().map(|s| s.ln()).sum::<f64>())
}

fn central_path(poly: &Polytope, mut a: Vec<f64>) -> Vec<f64> {
    let n = a.len();
    let m = poly.rows.len() as f64;
    let mut t = 1.0;
    loop {
        for _ in 0..MAX_NEWTON_STEPS {
            let slacks = poly.slacks(&a);
            let mut grad = DVector::from_fn(n, |i, _| -t / a[i]);
            let mut hess = DMatrix::from_fn(n, n, |i, j| if i == j { t / (a[i] * a[i]) } else { 0.0 });
            for (row, s) in poly.rows.iter().zip(&slacks) {
                let r = DVector::from_column_slice(row);
                grad += &r / *s;
                hess += (&r * r.transpose()) / (s * s);
            }
            let Some(chol) = hess.cholesky() else { break };
            let step = -chol.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= NEWTON_TOLERANCE {
                break;
            }
            // inside the quadratic-convergence region the full step stays
            // feasible; barrier values are too large here to compare reliably
            if decrement.sqrt() < 0.25 {
                let cand: Vec<f64> = (0..n).map(|i| a[i] + step[i]).collect();
                if poly.strictly_inside(&cand) {
                    a = cand;
                    continue;
                }
            }
            let current = barrier(poly, &a, t).expect("iterate stays strictly feasible");
            let mut s = 1.0;
            let next = loop {
                let cand: Vec<f64> = (0..n).map(|i| a[i] + s * step[i]).collect();
                if let Some(v) = barrier(poly, &cand, t) {
                    if v <= current - 0.25 * s * decrement {
                        break Some(cand);
                    }
                }
                s *= 0.5;
                if s < 1e-20 {
                    break None;
                }
            };
            match next {
                Some(cand) => a = cand,
                None => break,
            }
        }
        if m / t < GAP_TOLERANCE {
            return a;
        }
        t *= BARRIER_GROWTH;
    }
}
