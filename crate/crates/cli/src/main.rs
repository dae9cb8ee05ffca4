use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use probeq::bayes::{self, PosteriorInput};
use probeq::control::{self, BalanceInput};
use probeq::estimators::estimate_p_two_lane;
use probeq::harness::metrics::{is_evaluation_row, RowEstimator};
use probeq::harness::report::write_distribution;
use probeq::harness::scenario::{offset_phase_preset, posterior_preset, Scenario};
use probeq::harness::selftest::run_selftest;
use probeq::harness::svg::{self, Plot, Series, SeriesStyle};
use probeq::harness::{self, load_scenarios, reference_scenarios};
use probeq::sim::{self, Simulator};
use probeq::{AssignmentPolicy, Lane, RedWindow, SignalTiming, TurnRatios};

#[derive(Parser)]
#[command(
    name = "probeq",
    version,
    about = "Queue-length estimation from probe vehicles at a signalized approach"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write the trace and arrival log.
    Simulate(SimulateArgs),
    /// Score a trace CSV with the P2, P1 and l_p estimators.
    Estimate(EstimateArgs),
    /// Prior and probe-conditioned joint queue distribution for one observation.
    Posterior(PosteriorArgs),
    /// Balance laws for given movement flows.
    Control(ControlArgs),
    /// Run a scenario sweep and write the full report.
    Sweep(SweepArgs),
    /// Monte Carlo unbiasedness and posterior-oracle checks.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

/// Which outputs to write; both when `--format` is absent.
fn wants(format: Option<Format>) -> (bool, bool) {
    match format {
        None => (true, true),
        Some(Format::Csv) => (true, false),
        Some(Format::Svg) => (false, true),
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML file with [[scenario]] tables; without it the built-in S1..S5 are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name; defaults to the first one.
    #[arg(long)]
    scenario: Option<String>,
}

impl ScenarioArgs {
    fn all(&self) -> Result<Vec<Scenario>> {
        let mut list = match &self.config {
            Some(path) => load_scenarios(path)?,
            None => reference_scenarios(),
        };
        if let Some(name) = &self.scenario {
            list.retain(|s| &s.name == name);
            if list.is_empty() {
                return Err(probeq::Error::Config(format!("no scenario named {name:?}")).into());
            }
        }
        Ok(list)
    }

    fn one(&self) -> Result<Scenario> {
        Ok(self.all()?.remove(0))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the scenario's lane-assignment policy.
    #[arg(long)]
    policy: Option<AssignmentPolicy>,
    /// Overrides the scenario duration (seconds).
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trace CSV written by `simulate`.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PosteriorArgs {
    /// Expected arrivals on lane N; defaults to the worked example.
    #[arg(long)]
    mu_n: Option<f64>,
    #[arg(long)]
    mu_m: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    l_p: Option<u32>,
    #[arg(long)]
    c_p: Option<u32>,
    /// Grid size; defaults to the tail-bound rule.
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct ControlArgs {
    /// Right-turn flow (any unit, only ratios matter).
    #[arg(long)]
    n: Option<f64>,
    /// Left-turn flow.
    #[arg(long)]
    m: Option<f64>,
    /// Straight flow.
    #[arg(long)]
    nm: Option<f64>,
    /// Current assignment share, for r* and the imbalance.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Red ratio r_N / r_M for α*.
    #[arg(long, default_value_t = 1.0)]
    r_bar: f64,
    #[arg(long)]
    cycle: Option<f64>,
    /// Red window of lane N as start,end.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    red_n: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    red_m: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Replaces each scenario's p sweep.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Number of seeds, starting at --seed.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    policy: Option<AssignmentPolicy>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SelftestArgs {
    /// About a fifth of the samples.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let scenario = args.scenario.one()?;
    let mut config = scenario.sim_config(args.p, args.seed)?;
    if let Some(policy) = args.policy {
        config.policy = policy;
    }
    if let Some(d) = args.duration {
        config.duration_s = d;
    }
    let sim = if scenario.demand.is_idle() {
        Simulator::with_arrivals(config.clone(), Vec::new())?
    } else {
        Simulator::new(config.clone())?
    };
    let trace = sim::run_with(sim)?;
    create_dir(&args.out)?;
    let (csv, svg_out) = wants(args.format);
    let mut files = Vec::new();
    if csv {
        let path = args.out.join("trace.csv");
        sim::save_trace_csv(&trace.rows, &path)?;
        files.push(path);
        let path = args.out.join("arrivals.csv");
        sim::save_arrivals_csv(&trace.entries, &path)?;
        files.push(path);
    }
    if svg_out {
        for lane in Lane::BOTH {
            let pts = trace.rows.iter().map(|r| (r.t, f64::from(r.queue(lane)))).collect();
            let plot = Plot::new(format!("{} lane {lane} queue", scenario.name), "t (s)", "vehicles")
                .with_series(Series::new("queued", pts, SeriesStyle::Step));
            let path = args.out.join(format!("trace_{lane}.svg"));
            svg::save(&plot.render(), &path)?;
            files.push(path);
        }
    }
    println!(
        "{}",
        json!({
            "scenario": scenario.name,
            "p": args.p,
            "seed": args.seed,
            "policy": config.policy.to_string(),
            "rows": trace.rows.len(),
            "vehicles": trace.entries.len(),
            "overflow_events": trace.overflows.len(),
            "files": files,
        })
    );
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let scenario = args.scenario.one()?;
    if !(0.0..=1.0).contains(&args.p) {
        return Err(probeq::Error::InvalidParameter(format!("p = {} outside [0, 1]", args.p)).into());
    }
    let rows = sim::load_trace_csv(&args.trace, &scenario.timing)?;
    let (rate_n, rate_m) = scenario.demand.lane_rates();
    let mut estimator = RowEstimator::new(rate_n, rate_m, args.p);
    create_dir(&args.out)?;
    let path = args.out.join("estimates.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "t",
        "r_N",
        "r_M",
        "N",
        "M",
        "c_p",
        "l_p",
        "mu_N",
        "mu_M",
        "kappa",
        "p_hat",
        "N_P2",
        "M_P2",
        "N_P1",
        "M_P1",
        "N_lp",
        "M_lp",
        "p2_fallback",
    ])?;
    let mut count = 0;
    for row in rows.iter().filter(|r| is_evaluation_row(r)) {
        let e = estimator.estimate(row)?;
        let p_hat = match (row.l_p, e.kappa) {
            (Some(l), Some(k)) => estimate_p_two_lane(row.c_p, l, k).value(),
            _ => None,
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            row.t.to_string(),
            row.r_n.to_string(),
            row.r_m.to_string(),
            row.n.to_string(),
            row.m.to_string(),
            row.c_p.to_string(),
            row.l_p.map(|l| l.to_string()).unwrap_or_default(),
            e.mu_n.to_string(),
            e.mu_m.to_string(),
            opt(e.kappa),
            opt(p_hat),
            e.p2.0.to_string(),
            e.p2.1.to_string(),
            e.p1.0.to_string(),
            e.p1.1.to_string(),
            e.lp.0.to_string(),
            e.lp.1.to_string(),
            u8::from(e.p2_fallback).to_string(),
        ])?;
        count += 1;
    }
    w.flush()?;
    println!("{}", json!({ "rows": count, "file": path }));
    Ok(())
}

fn posterior(args: PosteriorArgs) -> Result<()> {
    let preset = posterior_preset();
    let (pre_n, pre_m) = probeq::model::mu_rates(&preset.demand, preset.r, preset.r);
    let mu_n = args.mu_n.unwrap_or(pre_n);
    let mu_m = args.mu_m.unwrap_or(pre_m);
    let p = args.p.unwrap_or(preset.demand.p());
    let l_p = args.l_p.unwrap_or(preset.l_p);
    let c_p = args.c_p.unwrap_or(preset.c_p);
    let mut input = PosteriorInput::new(mu_n, mu_m, p, l_p, c_p)?;
    if let Some(n_max) = args.n_max {
        input = input.with_n_max(n_max)?;
    }
    let prior = bayes::prior_joint(mu_n, mu_m, input.n_max)?;
    let post = bayes::posterior_joint(&input)?;
    create_dir(&args.out)?;
    let (csv, svg_out) = wants(args.format);
    let mut files = write_distribution(&prior, "Prior P(N, M)", &args.out, "prior", csv, svg_out)?;
    files.extend(write_distribution(
        &post,
        &format!("Posterior given l_p = {l_p}, c_p = {c_p}"),
        &args.out,
        "posterior",
        csv,
        svg_out,
    )?);
    let json_path = args.out.join("posterior.json");
    std::fs::write(&json_path, bayes::distribution_json(&post).to_string())
        .with_context(|| format!("writing {}", json_path.display()))?;
    files.push(json_path);
    let (en, em) = bayes::expected_queue_lengths(&post);
    println!(
        "{}",
        json!({
            "mu_N": mu_n, "mu_M": mu_m, "p": p, "l_p": l_p, "c_p": c_p, "n_max": input.n_max,
            "expected_N": en, "expected_M": em,
            "prior_expected": bayes::prior_point_estimate(mu_n, mu_m),
            "files": files,
        })
    );
    Ok(())
}

fn control(args: ControlArgs) -> Result<()> {
    let (preset_ratios, preset_timing) = offset_phase_preset();
    let ratios = match (args.n, args.m, args.nm) {
        (Some(n), Some(m), Some(nm)) => TurnRatios::from_flows(n, m, nm)?,
        (None, None, None) => preset_ratios,
        _ => bail!(probeq::Error::InvalidParameter(
            "give all of --n, --m, --nm or none".into()
        )),
    };
    let timing = match (args.cycle, &args.red_n, &args.red_m) {
        (Some(c), Some(n), Some(m)) => SignalTiming::new(c, RedWindow::new(n[0], n[1]), RedWindow::new(m[0], m[1]))?,
        (None, None, None) => preset_timing,
        _ => bail!(probeq::Error::InvalidParameter(
            "give all of --cycle, --red-n, --red-m or none".into()
        )),
    };
    let r_star = control::r_star(&ratios, args.alpha).ok();
    let alpha_star = control::alpha_star(args.r_bar, &ratios)?;
    let interval = control::interval_i(&ratios).ok();
    let imbalance = control::imbalance_f(&BalanceInput {
        ratios,
        alpha: args.alpha,
        r_bar: args.r_bar,
    })
    .ok();
    let traj = control::trajectory_alpha_r(&timing, &ratios, 0.0, args.dt)?;
    create_dir(&args.out)?;
    let (csv, svg_out) = wants(args.format);
    let mut files = Vec::new();
    if csv {
        let path = args.out.join("trajectory.csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        control::write_trajectory_csv(&traj, file)?;
        files.push(path);
    }
    if svg_out {
        let r_pts = traj
            .iter()
            .filter_map(|p| p.r_bar.filter(|r| r.is_finite()).map(|r| (p.t, r)))
            .collect();
        let a_pts = traj.iter().filter_map(|p| p.alpha_star.map(|a| (p.t, a))).collect();
        let plot = Plot::new("Red ratio and balancing assignment", "t (s)", "value")
            .with_series(Series::new("r̄(t)", r_pts, SeriesStyle::Line))
            .with_series(Series::new("α*(r̄(t))", a_pts, SeriesStyle::Line));
        let path = args.out.join("trajectory.svg");
        svg::save(&plot.render(), &path)?;
        files.push(path);
    }
    let interval_json = interval.map(|i| json!({ "lower": i.lower, "upper": finite_or_string(i.upper) }));
    println!(
        "{}",
        json!({
            "turn_ratios": { "l_n": ratios.l_n(), "l_m": ratios.l_m(), "l_nm": ratios.l_nm() },
            "alpha": args.alpha,
            "r_bar": finite_or_string(args.r_bar),
            "r_star": r_star,
            "alpha_star": alpha_star,
            "imbalance": imbalance,
            "interval": interval_json,
            "files": files,
        })
    );
    Ok(())
}

fn finite_or_string(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut scenarios = args.scenario.all()?;
    for s in &mut scenarios {
        if let Some(ps) = &args.p {
            s.p_sweep = ps.clone();
        }
        if let Some(k) = args.seeds {
            s.seeds = (args.seed..args.seed + k).collect();
        }
        if let Some(policy) = args.policy {
            s.sim.policy = policy;
        }
    }
    let report = harness::run_suite(&scenarios)?;
    let (_, figures) = wants(args.format);
    let mut files = harness::emit_report_with(&report, &args.out, figures)?;
    files.push(harness::write_alpha_table(
        &harness::reproduce_alpha_table(&scenarios),
        &args.out.join("alpha_table.csv"),
    )?);
    if figures {
        files.extend(harness::emit_reference_figures(&args.out)?);
    }
    let saturated: usize = report
        .scenarios
        .iter()
        .flat_map(|s| s.runs.iter())
        .filter(|r| r.saturated())
        .count();
    if saturated > 0 {
        log::warn!("{saturated} run(s) had a queue left over at the start of red");
    }
    println!(
        "{}",
        json!({ "scenarios": report.scenarios.len(), "saturated_runs": saturated, "files": files })
    );
    Ok(())
}

fn selftest(args: SelftestArgs) -> Result<bool> {
    let report = run_selftest(args.quick, args.seed)?;
    for c in &report.checks {
        println!("{}", json!({ "check": c.name, "passed": c.passed, "detail": c.detail }));
    }
    Ok(report.all_passed())
}

/// The error chain joined with `: `, skipping causes already quoted by
/// the message before them.
fn error_message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn exit_code(category: &str) -> u8 {
    match category {
        "parameter" => 2,
        "degenerate" => 3,
        "truncation" => 4,
        "infeasible" => 5,
        "config" => 6,
        "io" => 7,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Posterior(a) => posterior(a).map(|_| true),
        Command::Control(a) => control(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Selftest(a) => selftest(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(8),
        Err(err) => {
            let category = err
                .chain()
                .find_map(|e| e.downcast_ref::<probeq::Error>())
                .map(probeq::Error::category)
                .unwrap_or_else(|| {
                    if err.chain().any(|e| e.is::<std::io::Error>()) {
                        "io"
                    } else {
                        "internal"
                    }
                });
            eprintln!("{}", json!({ "error": category, "message": error_message(&err) }));
            ExitCode::from(exit_code(category))
        }
    }
}
