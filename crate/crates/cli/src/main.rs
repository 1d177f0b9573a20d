use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pfdelay_core::pf_solver::{brute_force_oracle, objective, solve_fixed_point, verify_kkt, ORACLE_MAX_STATIONS};
use pfdelay_core::scenario::{preset, presets, run_replications, sweep, RunOutput, ScenarioFile, SweepAxis};
use pfdelay_core::Regime;

/// Oracle agreement thresholds.
const ORACLE_OBJECTIVE_TOL: f64 = 1e-6;
const ORACLE_RELATIVE_TOL: f64 = 1e-4;

const EXIT_VERIFIED: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_DELAY_INFEASIBLE: u8 = 2;
const EXIT_UNVERIFIED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "pfdelay", version, about = "Proportional-fair low-delay rate control for paced WLAN downlinks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the optimal allocation and check its optimality conditions.
    Solve {
        #[command(flatten)]
        source: Source,
        /// Cross-check against the reference optimiser (n <= 3).
        #[arg(long)]
        oracle: bool,
        /// Grid points per axis used to seed the reference optimiser.
        #[arg(long, default_value_t = 30)]
        grid: usize,
    },
    /// Simulate scenarios and write per-slot CSV plus a JSON summary.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep a scenario along one axis and tabulate steady-state delay and rate.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, requires = "values")]
        axis: Option<SweepAxis>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', requires = "axis")]
        values: Vec<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        cmd: PresetsCommand,
    },
}

#[derive(Subcommand, Debug)]
enum PresetsCommand {
    List,
    /// Print a preset's scenarios as JSON.
    Show {
        name: String,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a built-in preset.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct Output {
    /// Overrides the scenario's plant seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "PFDELAY_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

struct Loaded {
    scenarios: Vec<ScenarioFile>,
    sweep: Option<(SweepAxis, Vec<f64>)>,
}

fn load(source: &Source) -> Result<Loaded> {
    match (&source.config, &source.preset) {
        (Some(path), _) => Ok(Loaded { scenarios: vec![ScenarioFile::from_path(path)?], sweep: None }),
        (_, Some(name)) => {
            let p = preset(name)?;
            Ok(Loaded { scenarios: p.scenarios, sweep: p.sweep.map(|s| (s.axis, s.values)) })
        }
        _ => bail!("either --config or --preset is required"),
    }
}

fn solve_one(f: &ScenarioFile, oracle: bool, grid: usize) -> Result<(Value, u8)> {
    let s = f.resolve()?;
    let sol = solve_fixed_point(&s.model, &s.targets)?;
    let (kkt, kkt_error) = match verify_kkt(&sol, &s.model, &s.targets) {
        Ok(cert) => (Some(cert), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let code = if sol.regime == Regime::DelayInfeasible {
        EXIT_DELAY_INFEASIBLE
    } else if kkt.as_ref().is_some_and(|c| c.accepted) {
        EXIT_VERIFIED
    } else {
        EXIT_UNVERIFIED
    };

    let oracle_report = if !oracle {
        Value::Null
    } else if s.n() > ORACLE_MAX_STATIONS {
        json!({ "skipped": format!("oracle supports at most {ORACLE_MAX_STATIONS} stations") })
    } else {
        let x = brute_force_oracle(&s.model, &s.targets, grid)?;
        let objective_gap = objective(&x) - sol.objective();
        let max_relative_diff = x.iter().zip(sol.x_star.iter()).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
        json!({
            "x": x,
            "objective_gap": objective_gap,
            "max_relative_diff": max_relative_diff,
            "agree": objective_gap.abs() <= ORACLE_OBJECTIVE_TOL && max_relative_diff <= ORACLE_RELATIVE_TOL,
        })
    };

    let report = json!({
        "scenario": s.name,
        "regime": sol.regime,
        "nu_star": sol.nu_star,
        "delay_s": sol.delay(&s.model),
        "solution": sol,
        "kkt": kkt,
        "kkt_error": kkt_error,
        "oracle": oracle_report,
    });
    Ok((report, code))
}

fn cmd_solve(source: &Source, oracle: bool, grid: usize) -> Result<u8> {
    let loaded = load(source)?;
    let mut reports = Vec::new();
    let mut codes = Vec::new();
    for f in &loaded.scenarios {
        let (report, c) = solve_one(f, oracle, grid)?;
        reports.push(report);
        codes.push(c);
    }
    let code = if codes.contains(&EXIT_DELAY_INFEASIBLE) {
        EXIT_DELAY_INFEASIBLE
    } else {
        codes.into_iter().max().unwrap_or(EXIT_VERIFIED)
    };
    let out = if source.preset.is_some() { Value::Array(reports) } else { reports.remove(0) };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(code)
}

fn apply_seed(f: &mut ScenarioFile, seed: Option<u64>) {
    if let Some(seed) = seed {
        f.plant.seed = seed;
    }
}

fn csv_path(out: &Path, run: &RunOutput, replications: usize) -> PathBuf {
    if replications == 1 {
        out.join(format!("{}.csv", run.name))
    } else {
        out.join(format!("{}_seed{}.csv", run.name, run.seed))
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn cmd_run(source: &Source, output: &Output) -> Result<u8> {
    let loaded = load(source)?;
    for mut f in loaded.scenarios {
        apply_seed(&mut f, output.seed);
        let s = f.resolve()?;
        let runs = run_replications(&s).with_context(|| format!("running {}", s.name))?;
        for r in &runs {
            r.write_csv_file(&csv_path(&output.out, r, runs.len()))?;
        }
        let converged = runs.iter().filter(|r| r.metrics.converged).count();
        let sse = mean(runs.iter().map(|r| r.metrics.steady_state_error));
        let delay_rms = mean(runs.iter().map(|r| r.metrics.delay_rms_error));
        let summary = json!({
            "scenario": f,
            "runs": runs.iter().map(|r| json!({
                "seed": r.seed,
                "metrics": r.metrics,
                "final_state": r.final_state,
            })).collect::<Vec<_>>(),
            "mean_steady_state_error": sse,
            "mean_delay_rms_error_s": delay_rms,
            "converged_runs": converged,
        });
        pfdelay_core::scenario::write_json_atomic(&summary, &output.out.join(format!("{}.json", s.name)))?;
        println!(
            "{}: {}/{} converged, steady-state error {:.4}, delay rms error {:.4} ms",
            s.name,
            converged,
            runs.len(),
            sse,
            delay_rms * 1e3
        );
    }
    Ok(EXIT_VERIFIED)
}

fn cmd_sweep(source: &Source, axis: Option<SweepAxis>, values: &[f64], output: &Output) -> Result<u8> {
    let loaded = load(source)?;
    let (axis, values) = match (axis, loaded.sweep) {
        (Some(a), _) => (a, values.to_vec()),
        (None, Some(preset_sweep)) => preset_sweep,
        (None, None) => bail!("--axis and --values are required for this scenario"),
    };
    for mut f in loaded.scenarios {
        apply_seed(&mut f, output.seed);
        let table = sweep(&f, axis, &values)?;
        let stem = format!("{}_sweep_{}", f.name, axis);
        table.write_csv_file(&output.out.join(format!("{stem}.csv")))?;
        pfdelay_core::scenario::write_json_atomic(&table, &output.out.join(format!("{stem}.json")))?;
        println!("{} ({axis})", f.name);
        println!(
            "  {:>10} {:>16} {:>12} {:>12} {:>12} {:>12}",
            "value", "regime", "delay_ms", "rate_pps", "p75_delay", "p75_rate"
        );
        for r in &table.rows {
            let regime = r.regime.map_or("unsolved", |g| g.as_str());
            println!(
                "  {:>10} {:>16} {:>12.4} {:>12.1} {:>12.4} {:>12.1}",
                r.value,
                regime,
                r.mean_delay * 1e3,
                r.mean_rate,
                r.p75_delay * 1e3,
                r.p75_rate
            );
        }
    }
    Ok(EXIT_VERIFIED)
}

fn cmd_presets(cmd: &PresetsCommand) -> Result<u8> {
    match cmd {
        PresetsCommand::List => {
            for p in presets() {
                println!("{:<12} {}", p.name, p.description);
            }
        }
        PresetsCommand::Show { name } => println!("{}", serde_json::to_string_pretty(&preset(name)?)?),
    }
    Ok(EXIT_VERIFIED)
}

fn main() -> ExitCode {
    // clap's own usage-error code (2) would collide with the infeasible-regime code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_VERIFIED });
        }
    };
    let result = match &cli.cmd {
        Command::Solve { source, oracle, grid } => cmd_solve(source, *oracle, *grid),
        Command::Run { source, output } => cmd_run(source, output),
        Command::Sweep { source, axis, values, output } => cmd_sweep(source, *axis, values, output),
        Command::Presets { cmd } => cmd_presets(cmd),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
