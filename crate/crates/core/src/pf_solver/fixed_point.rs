use super::{PfSolution, QosTargets, Regime, WeightVector};
use crate::error::Result;
use crate::model::{AggregationVector, RateVector, WlanModelConfig};

/// Bisection stops once the bracket on ν is this narrow (relative to ν for
/// ν > 1).
pub const BISECTION_TOLERANCE: f64 = 1e-10;

const MAX_BISECTIONS: usize = 400;

/// Multiplier signs within this relative margin of zero count as zero.
const SIGN_MARGIN: f64 = 1e-12;

/// Delay excess `c + wᵀ·min{νW, n_bar} − t_bar`, non-decreasing in ν.
fn delay_excess(nu: f64, cfg: &WlanModelConfig, q: &QosTargets, weights: &WeightVector) -> f64 {
    let load: f64 = cfg.w.iter().zip(&weights.weights).map(|(w, wt)| w * (nu * wt).min(q.n_bar)).sum();
    cfg.c + load - q.t_bar
}

/// The point the feedback loop settles at: `N = min{ν·W, n_bar}` with ν
/// chosen so that the round duration meets `t_bar`, clipped to `[1, n_bar]`.
///
/// Found by bisection on the monotone delay excess. This coincides with the
/// proportional-fair optimum unless the cap binds for some stations only
/// while leaving delay to spare; see [`solve_fixed_point`].
pub fn controller_equilibrium(cfg: &WlanModelConfig, q: &QosTargets) -> Result<PfSolution> {
    cfg.validate()?;
    q.validate(cfg)?;
    let weights = WeightVector::from_w(&cfg.w);

    if delay_excess(1.0, cfg, q, &weights) > 0.0 {
        return Ok(PfSolution::from_nu(cfg, q, weights, 1.0, Regime::DelayInfeasible));
    }
    let mut hi = if q.n_bar.is_finite() {
        if delay_excess(q.n_bar, cfg, q, &weights) <= 0.0 {
            return Ok(PfSolution::from_nu(cfg, q, weights, q.n_bar, Regime::CapBound));
        }
        q.n_bar
    } else {
        // uncapped: excess is linear in ν with slope n·w_max
        let slope: f64 = cfg.w.iter().zip(&weights.weights).map(|(w, wt)| w * wt).sum();
        (2.0 * (q.t_bar - cfg.c) / slope).max(2.0)
    };
    let mut lo = 1.0;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= BISECTION_TOLERANCE * lo {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if delay_excess(mid, cfg, q, &weights) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let nu = polish(0.5 * (lo + hi), lo, hi, cfg, q, &weights);
    Ok(PfSolution::from_nu(cfg, q, weights, nu, Regime::Interior))
}

/// The excess is linear between cap breakpoints; once bisection has located
/// the segment, solve it exactly.
fn polish(nu: f64, lo: f64, hi: f64, cfg: &WlanModelConfig, q: &QosTargets, weights: &WeightVector) -> f64 {
    let (mut capped, mut slope) = (0.0, 0.0);
    for (w, wt) in cfg.w.iter().zip(&weights.weights) {
        if nu * wt >= q.n_bar {
            capped += w * q.n_bar;
        } else {
            slope += w * wt;
        }
    }
    let exact = (q.t_bar - cfg.c - capped) / slope;
    let slack = BISECTION_TOLERANCE * lo;
    if slope > 0.0 && exact >= lo - slack && exact <= hi + slack {
        exact
    } else {
        nu
    }
}

/// Proportional-fair low-delay allocation.
///
/// Starts from [`controller_equilibrium`]. That point is optimal whenever the
/// delay multiplier implied by stationarity is non-negative. Otherwise some
/// fast stations sit at the cap while the delay constraint is slack; then
/// every uncapped station gets airtime `1/n` and the capped ones share the
/// common rate `n_bar·|K| / (n·(c + n_bar·Σ_K w))`, reported as
/// [`Regime::MixedCap`].
pub fn solve_fixed_point(cfg: &WlanModelConfig, q: &QosTargets) -> Result<PfSolution> {
    let sol = controller_equilibrium(cfg, q)?;
    if sol.regime == Regime::DelayInfeasible || !q.n_bar.is_finite() || delay_multiplier_nonnegative(&sol, cfg, q) {
        return Ok(sol);
    }
    Ok(slack_delay_solution(cfg, q, sol.weights.clone()).unwrap_or(sol))
}

fn is_capped(n: f64, n_bar: f64) -> bool {
    n >= n_bar * (1.0 - 1e-12)
}

/// Sign of `θ = D − n_bar·Σλ_j` at the candidate, with `D` and `λ` recovered
/// from stationarity.
fn delay_multiplier_nonnegative(sol: &PfSolution, cfg: &WlanModelConfig, q: &QosTargets) -> bool {
    let x = &sol.x_star;
    let below: Vec<usize> = (0..cfg.n()).filter(|&i| !is_capped(sol.n_star[i], q.n_bar)).collect();
    let d = match below.first() {
        Some(&i) => 1.0 / (x[i] * cfg.w[i]),
        // every station capped: θ = 0 branch has D = n
        None => cfg.n() as f64,
    };
    let mut lambda_sum = 0.0;
    for j in (0..cfg.n()).filter(|j| !below.contains(j)) {
        let lambda = (1.0 / x[j] - d * cfg.w[j]) / cfg.c;
        if lambda < -SIGN_MARGIN * d / cfg.c {
            return false;
        }
        lambda_sum += lambda;
    }
    if below.is_empty() {
        // θ = 0 by construction; optimal iff the delay target holds
        return sol.delay(cfg) <= q.t_bar * (1.0 + 1e-12);
    }
    d - q.n_bar * lambda_sum >= -SIGN_MARGIN * d
}

/// Candidate optima with the delay constraint slack (`θ = 0`, `D = n`): the
/// `k` fastest stations capped, the rest at airtime `1/n`.
fn slack_delay_solution(cfg: &WlanModelConfig, q: &QosTargets, weights: WeightVector) -> Option<PfSolution> {
    let n = cfg.n();
    let nf = n as f64;
    let fastest_first: Vec<usize> = weights.order.iter().rev().copied().collect();
    for k in 1..=n {
        let capped = &fastest_first[..k];
        let w_capped: f64 = capped.iter().map(|&j| cfg.w[j]).sum();
        let x_cap = q.n_bar * k as f64 / (nf * (cfg.c + q.n_bar * w_capped));
        let x: RateVector = (0..n).map(|i| if capped.contains(&i) { x_cap } else { 1.0 / (nf * cfg.w[i]) }).collect();
        let airtime = cfg.airtime(&x);
        if airtime >= 1.0 {
            continue;
        }
        let scale = cfg.c / (1.0 - airtime);
        let n_star: AggregationVector = x.iter().map(|xi| scale * xi).collect();
        let uncapped_ok = (0..n).filter(|i| !capped.contains(i)).all(|i| n_star[i] <= q.n_bar * (1.0 + 1e-12));
        // λ_j ≥ 0  ⇔  w_j·x_cap ≤ 1/n
        let lambda_ok = capped.iter().all(|&j| cfg.w[j] * x_cap <= (1.0 + 1e-12) / nf);
        let delay_ok = scale <= q.t_bar * (1.0 + 1e-12);
        if uncapped_ok && lambda_ok && delay_ok {
            let slowest = weights.slowest();
            let regime = if k == n { Regime::CapBound } else { Regime::MixedCap };
            return Some(PfSolution { nu_star: n_star[slowest], x_star: x, n_star, regime, weights });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{delay_from_aggregation, mcs_to_w, DEFAULT_PACKET_BITS};

    fn cfg(ws: &[f64]) -> WlanModelConfig {
        WlanModelConfig::new(2e-4, ws.to_vec(), 64.0, DEFAULT_PACKET_BITS).unwrap()
    }

    #[test]
    fn mcs2_single_station_interior() {
        let w = mcs_to_w(2, 1, DEFAULT_PACKET_BITS).unwrap();
        let c = cfg(&[w]);
        let sol = solve_fixed_point(&c, &QosTargets::new(2.5e-3, 48.0)).unwrap();
        assert_eq!(sol.regime, Regime::Interior);
        // (2.5e-3 - 2e-4) / w
        assert!((sol.nu_star - 16.287952).abs() < 1e-5, "{}", sol.nu_star);
        assert!((delay_from_aggregation(&sol.n_star, &c) - 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn mcs9_single_station_hits_cap() {
        let w = mcs_to_w(9, 1, DEFAULT_PACKET_BITS).unwrap();
        let sol = solve_fixed_point(&cfg(&[w]), &QosTargets::new(2.5e-3, 48.0)).unwrap();
        assert_eq!(sol.regime, Regime::CapBound);
        assert_eq!(sol.nu_star, 48.0);
        assert_eq!(sol.n_star.0, vec![48.0]);
    }

    #[test]
    fn tight_target_is_delay_infeasible() {
        let c = cfg(&[1e-4, 1e-4]);
        // c + 2 w = 4e-4
        let sol = solve_fixed_point(&c, &QosTargets::new(3.9e-4, 48.0)).unwrap();
        assert_eq!(sol.regime, Regime::DelayInfeasible);
        assert_eq!(sol.nu_star, 1.0);
    }

    #[test]
    fn faster_stations_get_proportionally_more() {
        let c = cfg(&[1.4122e-4, 3.1754e-5]);
        let sol = solve_fixed_point(&c, &QosTargets::new(2.5e-3, 48.0)).unwrap();
        assert_eq!(sol.regime, Regime::Interior);
        assert_eq!(sol.weights.slowest(), 0);
        assert!(sol.n_star[1] < 48.0);
        assert!((sol.n_star[1] / sol.n_star[0] - 1.4122e-4 / 3.1754e-5).abs() < 1e-9);
        assert!((delay_from_aggregation(&sol.n_star, &c) - 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn partially_capped_interior() {
        // fast station capped, delay target still binding
        let c = cfg(&[4e-4, 2e-5]);
        let q = QosTargets::new(2.3e-3, 48.0);
        let sol = solve_fixed_point(&c, &q).unwrap();
        assert_eq!(sol.regime, Regime::Interior);
        assert_eq!(sol, controller_equilibrium(&c, &q).unwrap());
        assert_eq!(sol.n_star[1], 48.0);
        assert!((sol.n_star[0] - 2.85).abs() < 1e-9);
        assert!((delay_from_aggregation(&sol.n_star, &c) - 2.3e-3).abs() < 1e-15);
    }

    #[test]
    fn mixed_cap_leaves_delay_slack() {
        // values cross-checked against a generic conic solver
        let c = cfg(&[4e-4, 2e-5]);
        let q = QosTargets::new(6e-3, 48.0);
        let sol = solve_fixed_point(&c, &q).unwrap();
        assert_eq!(sol.regime, Regime::MixedCap);
        assert!((sol.x_star[0] - 1250.0).abs() < 1e-9);
        assert!((sol.x_star[1] - 48.0 / (2.0 * (2e-4 + 48.0 * 2e-5))).abs() < 1e-9);
        assert!((sol.n_star[1] - 48.0).abs() < 1e-9);
        assert!(sol.delay(&c) < 6e-3);
        let eq = controller_equilibrium(&c, &q).unwrap();
        assert_eq!(eq.regime, Regime::Interior);
        assert!(sol.objective() > eq.objective());
    }

    #[test]
    fn all_capped_with_slow_station_over_share() {
        // slow station would take more than 1/n of the channel at the cap
        let c = cfg(&[4e-4, 2e-5]);
        let q = QosTargets::new(1.0, 48.0);
        assert_eq!(controller_equilibrium(&c, &q).unwrap().regime, Regime::CapBound);
        let sol = solve_fixed_point(&c, &q).unwrap();
        assert_eq!(sol.regime, Regime::MixedCap);
        assert!((sol.x_star[0] * 4e-4 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncapped_targets_solve_linear_case() {
        let c = cfg(&[1.4122e-4, 7.0564e-5, 3.1754e-5]);
        let sol = solve_fixed_point(&c, &QosTargets::uncapped(1e6)).unwrap();
        assert_eq!(sol.regime, Regime::Interior);
        let expected = (1e6 - 2e-4) / (3.0 * 1.4122e-4);
        assert!((sol.nu_star / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_targets() {
        let c = cfg(&[1e-4]);
        assert!(solve_fixed_point(&c, &QosTargets::new(2.5e-3, 64.0)).is_err());
    }
}

#[cfg(test)]
mod medium_rate_tests {
    use super::*;
    use crate::model::DEFAULT_PACKET_BITS;

    #[test]
    fn moderate_spread_with_loose_target_is_mixed() {
        // cross-checked: delay settles near 7.2 ms, under the 9 ms target
        let c = WlanModelConfig::new(2e-4, vec![1.4122e-4, 7.0564e-5], 64.0, DEFAULT_PACKET_BITS).unwrap();
        let sol = solve_fixed_point(&c, &QosTargets::new(9e-3, 48.0)).unwrap();
        assert_eq!(sol.regime, Regime::MixedCap);
        assert!((sol.x_star[0] - 1.0 / (2.0 * 1.4122e-4)).abs() < 1e-9);
        assert!((sol.x_star[1] - 48.0 / (2.0 * (2e-4 + 48.0 * 7.0564e-5))).abs() < 1e-9);
        let airtime = c.airtime(&sol.x_star);
        assert!((sol.delay(&c) - 2e-4 / (1.0 - airtime)).abs() < 1e-15);
        assert!((sol.delay(&c) - 7.17e-3).abs() < 2e-5);
    }
}
