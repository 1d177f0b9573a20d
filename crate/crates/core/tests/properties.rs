use proptest::prelude::*;

use pfdelay_core::model::{
    aggregation_map, delay_from_aggregation, inverse_aggregation_map, mcs_to_w, project, DEFAULT_N_MAX,
    DEFAULT_PACKET_BITS,
};
use pfdelay_core::pf_solver::{controller_equilibrium, solve_fixed_point, verify_kkt};
use pfdelay_core::plant::DEFAULT_SLOT_DURATION;
use pfdelay_core::scenario::{run, PlantSpec, StationSpec, TargetsSpec};
use pfdelay_core::{ControllerGains, Mode, Plant, PlantConfig, QosTargets, Regime, ScenarioFile, WlanModelConfig};

fn w(mcs: u8) -> f64 {
    mcs_to_w(mcs, 1, DEFAULT_PACKET_BITS).unwrap()
}

fn model_strategy(max_n: usize) -> impl Strategy<Value = WlanModelConfig> {
    (prop::collection::vec(0u8..=9, 1..=max_n), 50e-6..400e-6f64).prop_map(|(mcs, per_station)| {
        let c = per_station * mcs.len() as f64;
        WlanModelConfig::new(c, mcs.into_iter().map(w).collect(), DEFAULT_N_MAX, DEFAULT_PACKET_BITS).unwrap()
    })
}

/// A model, QoS targets that leave the delay constraint feasible, and the
/// MCS indices used to build the model.
fn instance(max_n: usize) -> impl Strategy<Value = (Vec<u8>, f64, QosTargets)> {
    (prop::collection::vec(0u8..=9, 1..=max_n), 100e-6..300e-6f64, 1.05..20.0f64, 4.0..60.0f64).prop_map(
        |(mcs, per_station, t_scale, n_bar)| {
            let c = per_station * mcs.len() as f64;
            let w1 = mcs.iter().map(|m| w(*m)).fold(0.0, f64::max);
            // T̄ above c + n·w₁ keeps ν ≥ 1 attainable
            let t_bar = (c + mcs.len() as f64 * w1) * t_scale;
            (mcs, c, QosTargets::new(t_bar, n_bar))
        },
    )
}

fn build(mcs: &[u8], c: f64) -> WlanModelConfig {
    WlanModelConfig::new(c, mcs.iter().map(|m| w(*m)).collect(), DEFAULT_N_MAX, DEFAULT_PACKET_BITS).unwrap()
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn inverse_then_forward_is_identity(
        cfg in model_strategy(25),
        levels in prop::collection::vec(1.0..=64.0f64, 25),
    ) {
        let target = &levels[..cfg.n()];
        let x = inverse_aggregation_map(target, &cfg);
        let agg = aggregation_map(&x, &cfg).unwrap();
        for (a, b) in agg.raw.iter().zip(target) {
            prop_assert!(rel(*a, *b) <= 1e-12);
        }
    }

    #[test]
    fn round_duration_identity(
        cfg in model_strategy(25),
        levels in prop::collection::vec(1.0..=64.0f64, 25),
    ) {
        let target = &levels[..cfg.n()];
        let x = inverse_aggregation_map(target, &cfg);
        let round = cfg.c / (1.0 - cfg.airtime(&x));
        prop_assert!(rel(round, delay_from_aggregation(target, &cfg)) <= 1e-12);
    }

    #[test]
    fn aggregation_is_monotone_in_each_rate(
        cfg in model_strategy(8),
        station in 0usize..8,
        scale in 0.05..0.9f64,
        bump in 1.001..1.5f64,
    ) {
        let i = station % cfg.n();
        // equal airtime at total load `scale`, then raise station i
        let mut x: Vec<f64> = cfg.w.iter().map(|wi| scale / (cfg.n() as f64 * wi)).collect();
        let before = aggregation_map(&x, &cfg).unwrap();
        x[i] *= bump;
        prop_assume!(cfg.airtime(&x) < 0.999);
        let after = aggregation_map(&x, &cfg).unwrap();
        for j in 0..cfg.n() {
            prop_assert!(after.raw[j] > before.raw[j]);
        }
    }

    #[test]
    fn projection_stays_in_range(v in -1e6..1e6f64, n_max in 1.0..128.0f64) {
        let p = project(v, n_max);
        prop_assert!((1.0..=n_max).contains(&p));
        if (1.0..=n_max).contains(&v) {
            prop_assert_eq!(p, v);
        }
    }

    #[test]
    fn solver_output_passes_kkt((mcs, c, q) in instance(10)) {
        let cfg = build(&mcs, c);
        let sol = solve_fixed_point(&cfg, &q).unwrap();
        prop_assert_ne!(sol.regime, Regime::DelayInfeasible);
        let cert = verify_kkt(&sol, &cfg, &q).unwrap();
        prop_assert!(cert.accepted, "{:?} {:?}", sol.regime, cert.residuals);
        prop_assert!(sol.delay(&cfg) <= q.t_bar * (1.0 + 1e-9));
        prop_assert!(sol.n_star.iter().all(|v| *v <= q.n_bar * (1.0 + 1e-12)));
    }

    #[test]
    fn optimum_dominates_controller_equilibrium((mcs, c, q) in instance(10)) {
        let cfg = build(&mcs, c);
        let opt = solve_fixed_point(&cfg, &q).unwrap();
        let eq = controller_equilibrium(&cfg, &q).unwrap();
        prop_assert!(opt.objective() >= eq.objective() - 1e-9);
        if opt.regime != Regime::MixedCap {
            prop_assert!((opt.objective() - eq.objective()).abs() <= 1e-9);
        }
    }
}

fn plant(mcs: &[u8], c: f64, sigma: f64, seed: u64) -> Plant {
    Plant::new(PlantConfig {
        c_true: c,
        w_true: mcs.iter().map(|m| w(*m)).collect(),
        noise_sigma: sigma,
        slot_duration: DEFAULT_SLOT_DURATION,
        n_max: DEFAULT_N_MAX,
        packet_bits: DEFAULT_PACKET_BITS,
        rng_seed: seed,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn plant_is_deterministic_per_seed(
        mcs in prop::collection::vec(0u8..=9, 1..=5),
        seed in any::<u64>(),
        sigma in 0.0..3.0f64,
    ) {
        let cfg = build(&mcs, 200e-6 * mcs.len() as f64);
        let x = inverse_aggregation_map(&vec![20.0; mcs.len()], &cfg);
        let mut a = plant(&mcs, cfg.c, sigma, seed);
        let mut b = plant(&mcs, cfg.c, sigma, seed);
        for _ in 0..20 {
            prop_assert_eq!(a.step(&x).unwrap(), b.step(&x).unwrap());
        }
    }

    #[test]
    fn plant_noise_is_unbiased(
        mcs in prop::collection::vec(0u8..=9, 1..=3),
        level in 10.0..50.0f64,
        seed in any::<u64>(),
    ) {
        let cfg = build(&mcs, 200e-6 * mcs.len() as f64);
        let x = inverse_aggregation_map(&vec![level; mcs.len()], &cfg);
        let mut p = plant(&mcs, cfg.c, 1.0, seed);
        let slots = 400;
        let mut sums = vec![0.0; mcs.len()];
        let mut frames = vec![0u64; mcs.len()];
        for _ in 0..slots {
            let m = p.step(&x).unwrap();
            for i in 0..mcs.len() {
                sums[i] += m.n_meas[i];
                frames[i] += m.frames_per_station[i];
            }
        }
        for i in 0..mcs.len() {
            let mean = sums[i] / slots as f64;
            // standard error of the mean of per-slot frame averages at sigma = 1
            let se = 1.0 / (frames[i] as f64).sqrt();
            prop_assert!((mean - level).abs() <= 6.0 * se + 1e-9, "mean {} level {} se {}", mean, level, se);
        }
    }
}

fn closed_loop_file(mcs: &[u8], c: f64, q: &QosTargets, mode: Mode, fixed_target: Option<f64>) -> ScenarioFile {
    ScenarioFile {
        name: "prop".into(),
        stations: mcs.iter().map(|m| StationSpec::Mcs { mcs: *m, nss: 1 }).collect(),
        packet_bits: DEFAULT_PACKET_BITS,
        n_max: DEFAULT_N_MAX,
        overhead_s: c,
        targets: TargetsSpec { t_bar_s: q.t_bar, n_bar: Some(q.n_bar) },
        gains: ControllerGains { k1: 0.5, k2: 0.2, beta: 0.05 },
        initial_c_hat_s: Some(c),
        plant: PlantSpec::default(),
        disturbances: vec![],
        duration_slots: 3000,
        mode,
        fixed_target,
        replications: 1,
    }
}

proptest! {
    #![proptest_config(config(24))]

    /// Noise-free, matched model: the closed loop settles on the point its
    /// update rules are stationary at. That is the optimum unless only some
    /// stations hit the cap.
    #[test]
    fn closed_loop_reaches_equilibrium((mcs, c, q) in instance(5)) {
        let cfg = build(&mcs, c);
        let eq = controller_equilibrium(&cfg, &q).unwrap();
        let opt = solve_fixed_point(&cfg, &q).unwrap();
        let s = closed_loop_file(&mcs, c, &q, Mode::ClosedLoop, None).resolve().unwrap();
        let out = run(&s).unwrap();
        let last = out.rows.last().unwrap();
        for (a, b) in last.x.iter().zip(eq.x_star.iter()) {
            prop_assert!(rel(*a, *b) <= 1e-4, "x {:?} vs {:?}", last.x, eq.x_star);
        }
        if opt.regime != Regime::MixedCap {
            for (a, b) in last.x.iter().zip(opt.x_star.iter()) {
                prop_assert!(rel(*a, *b) <= 1e-4);
            }
        }
    }

    #[test]
    fn matched_inner_loop_has_no_overshoot(
        mcs in prop::collection::vec(0u8..=9, 1..=5),
        target in 2.0..60.0f64,
        k1 in 0.05..1.0f64,
    ) {
        let c = 200e-6 * mcs.len() as f64;
        let q = QosTargets::new(1.0, 63.0);
        let mut f = closed_loop_file(&mcs, c, &q, Mode::InnerOnly, Some(target));
        f.duration_slots = 200;
        f.gains.k1 = k1;
        let out = run(&f.resolve().unwrap()).unwrap();
        for r in &out.rows {
            for v in r.n_meas.iter() {
                prop_assert!(*v <= target * (1.0 + 1e-9), "{} > {}", v, target);
            }
        }
    }
}
