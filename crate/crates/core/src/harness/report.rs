//! CSV tables and SVG figures. Every figure has a CSV with its data.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::bayes::{expected_queue_lengths, posterior_joint, prior_joint, write_distribution_csv, PosteriorInput};
use crate::control::{interval_i, trajectory_alpha_r, write_trajectory_csv};
use crate::error::{Error, Result};
use crate::model::{mu_rates, JointQueueDistribution, Lane, TurnRatios};

use super::metrics::{MetricReport, QueueEstimator, ScenarioReport};
use super::scenario::{offset_phase_preset, posterior_preset, AlphaRow};
use super::svg::{self, HeatMap, Plot, Series, SeriesStyle};

pub const METRICS_COLUMNS: [&str; 12] = [
    "scenario",
    "p",
    "lane",
    "estimator",
    "mae",
    "mape_end_of_red_pct",
    "avg_queue",
    "max_queue",
    "saturated_runs",
    "seeds",
    "evaluated_rows",
    "p2_fallbacks",
];
pub const RUNS_COLUMNS: [&str; 8] = [
    "scenario",
    "p",
    "seed",
    "p_hat_mean",
    "p_hat_samples",
    "lambda_hat",
    "lambda_true",
    "overflow_events",
];
pub const SCENARIO_COLUMNS: [&str; 5] = [
    "scenario",
    "alpha",
    "alpha_star_equal_red",
    "interval_lower",
    "interval_upper",
];

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn lane_label(lane: Lane) -> &'static str {
    match lane {
        Lane::N => "N",
        Lane::M => "M",
    }
}

/// Writes tables and figures for a sweep into `dir` and returns the paths.
/// An empty report yields header-only CSVs and no figures.
pub fn emit_report(report: &MetricReport, dir: &Path) -> Result<Vec<PathBuf>> {
    emit_report_with(report, dir, true)
}

/// [`emit_report`], optionally without figures or their data files.
pub fn emit_report_with(report: &MetricReport, dir: &Path, figures: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write_metrics(report, &dir.join("metrics.csv"))?,
        write_runs(report, &dir.join("runs.csv"))?,
        write_scenarios(report, &dir.join("scenarios.csv"))?,
    ];
    for lane in Lane::BOTH {
        written.push(write_lane_table(
            report,
            lane,
            &dir.join(format!("table_lane_{}.csv", lane_label(lane))),
        )?);
    }
    if report.is_empty() || !figures {
        return Ok(written);
    }
    written.extend(p_hat_figure(report, dir)?);
    written.extend(lambda_figure(report, dir)?);
    for s in &report.scenarios {
        written.extend(series_figure(s, dir)?);
    }
    Ok(written)
}

fn write_metrics(report: &MetricReport, path: &Path) -> Result<PathBuf> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(METRICS_COLUMNS).map_err(e)?;
    for s in &report.scenarios {
        for m in &s.lanes {
            for est in QueueEstimator::ALL {
                let mape = if est == QueueEstimator::P2 {
                    opt(m.mape_p2)
                } else {
                    String::new()
                };
                w.write_record([
                    s.name.clone(),
                    m.p.to_string(),
                    lane_label(m.lane).to_string(),
                    est.label().to_string(),
                    m.mae(est).to_string(),
                    mape,
                    m.avg_queue.to_string(),
                    m.max_queue.to_string(),
                    m.saturated_runs.to_string(),
                    m.seeds.to_string(),
                    m.evaluated_rows.to_string(),
                    m.p2_fallbacks.to_string(),
                ])
                .map_err(e)?;
            }
        }
    }
    finish(w, path)?;
    Ok(path.to_path_buf())
}

fn write_runs(report: &MetricReport, path: &Path) -> Result<PathBuf> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(RUNS_COLUMNS).map_err(e)?;
    for s in &report.scenarios {
        for r in &s.runs {
            w.write_record([
                s.name.clone(),
                r.p.to_string(),
                r.seed.to_string(),
                opt(r.p_hat_mean),
                r.p_hat_samples.to_string(),
                opt(r.lambda_hat),
                r.lambda_true.to_string(),
                r.overflow_events.to_string(),
            ])
            .map_err(e)?;
        }
    }
    finish(w, path)?;
    Ok(path.to_path_buf())
}

fn write_scenarios(report: &MetricReport, path: &Path) -> Result<PathBuf> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(SCENARIO_COLUMNS).map_err(e)?;
    for s in &report.scenarios {
        w.write_record([
            s.name.clone(),
            s.alpha.to_string(),
            opt(s.alpha_star_equal_red),
            opt(s.interval.map(|i| i.lower)),
            opt(s.interval.map(|i| i.upper)),
        ])
        .map_err(e)?;
    }
    finish(w, path)?;
    Ok(path.to_path_buf())
}

/// One column per scenario, rows as in the published per-lane tables.
fn write_lane_table(report: &MetricReport, lane: Lane, path: &Path) -> Result<PathBuf> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    let mut header = vec!["row".to_string()];
    header.extend(report.scenarios.iter().map(|s| s.name.clone()));
    w.write_record(&header).map_err(e)?;

    let ps = report
        .scenarios
        .first()
        .map(ScenarioReport::p_values)
        .unwrap_or_default();
    let row = |label: String, f: &dyn Fn(&ScenarioReport) -> String| {
        let mut r = vec![label];
        r.extend(report.scenarios.iter().map(f));
        r
    };
    let first_p = ps.first().copied();
    let mut rows = Vec::new();
    if let Some(p0) = first_p {
        rows.push(row("Average queue".into(), &|s| {
            opt(s.cell(p0, lane).map(|m| m.avg_queue))
        }));
        rows.push(row("Max queue".into(), &|s| opt(s.cell(p0, lane).map(|m| m.max_queue))));
    }
    for &p in &ps {
        for est in QueueEstimator::ALL {
            rows.push(row(format!("p={p} MAE({})", est.label()), &|s| {
                opt(s.cell(p, lane).map(|m| m.mae(est)))
            }));
        }
        rows.push(row(format!("p={p} MAPE(P2,R)(%)"), &|s| {
            opt(s.cell(p, lane).and_then(|m| m.mape_p2))
        }));
        rows.push(row(format!("p={p} saturated runs"), &|s| {
            s.cell(p, lane)
                .map(|m| m.saturated_runs.to_string())
                .unwrap_or_default()
        }));
    }
    for r in rows {
        w.write_record(&r).map_err(e)?;
    }
    finish(w, path)?;
    Ok(path.to_path_buf())
}

fn p_hat_figure(report: &MetricReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join("p_hat_vs_p.csv");
    let mut w = writer(&csv_path)?;
    let e = |err| Error::csv(&csv_path, err);
    w.write_record(["scenario", "p", "seed", "p_hat_mean", "p_hat_samples"])
        .map_err(e)?;
    for s in &report.scenarios {
        for r in &s.runs {
            w.write_record([
                s.name.clone(),
                r.p.to_string(),
                r.seed.to_string(),
                opt(r.p_hat_mean),
                r.p_hat_samples.to_string(),
            ])
            .map_err(e)?;
        }
    }
    finish(w, &csv_path)?;
    let mut plot = Plot::new("Estimated vs true penetration ratio (two lanes)", "p", "p̂")
        .x_range(0.0, 1.0)
        .y_range(0.0, 1.0)
        .with_series(Series::new("p̂ = p", vec![(0.0, 0.0), (1.0, 1.0)], SeriesStyle::Dashed));
    for s in &report.scenarios {
        let pts = s.runs.iter().filter_map(|r| r.p_hat_mean.map(|v| (r.p, v))).collect();
        plot = plot.with_series(Series::new(s.name.clone(), pts, SeriesStyle::Points));
    }
    let path = dir.join("p_hat_vs_p.svg");
    svg::save(&plot.render(), &path)?;
    Ok(vec![csv_path, path])
}

fn lambda_figure(report: &MetricReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join("lambda_vs_p.csv");
    let mut w = writer(&csv_path)?;
    let e = |err| Error::csv(&csv_path, err);
    w.write_record(["scenario", "p", "lambda_hat_mean", "lambda_true", "runs"])
        .map_err(e)?;
    let mut plot = Plot::new("Estimated total arrival rate", "p", "λ̂ (veh/s)");
    for s in &report.scenarios {
        let mut pts = Vec::new();
        for p in s.p_values() {
            let vals: Vec<f64> = s
                .runs
                .iter()
                .filter(|r| r.p == p)
                .filter_map(|r| r.lambda_hat)
                .collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let truth = s.runs.first().map(|r| r.lambda_true).unwrap_or(0.0);
            w.write_record([
                s.name.clone(),
                p.to_string(),
                opt(mean),
                truth.to_string(),
                vals.len().to_string(),
            ])
            .map_err(e)?;
            if let Some(m) = mean {
                pts.push((p, m));
            }
        }
        plot = plot.with_series(Series::new(s.name.clone(), pts, SeriesStyle::Line));
        if let Some(truth) = s.runs.first().map(|r| r.lambda_true) {
            plot = plot.with_series(Series::new(
                format!("{} true", s.name),
                vec![(0.0, truth), (1.0, truth)],
                SeriesStyle::Dashed,
            ));
        }
    }
    finish(w, &csv_path)?;
    let svg_path = dir.join("lambda_hat_vs_p.svg");
    svg::save(&plot.x_range(0.0, 1.0).render(), &svg_path)?;
    Ok(vec![csv_path, svg_path])
}

/// `α*(1)` per scenario next to the published value.
pub fn write_alpha_table(rows: &[AlphaRow], path: &Path) -> Result<PathBuf> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record([
        "scenario",
        "lambda_nm",
        "lambda_m",
        "lambda_n",
        "alpha_star",
        "published",
    ])
    .map_err(e)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.lambda_nm.to_string(),
            r.lambda_m.to_string(),
            r.lambda_n.to_string(),
            opt(r.alpha_star),
            opt(r.published),
        ])
        .map_err(e)?;
    }
    finish(w, path)?;
    Ok(path.to_path_buf())
}

fn series_figure(s: &ScenarioReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let Some(sample) = &s.series else {
        return Ok(Vec::new());
    };
    let stem = format!("queue_series_{}", sanitize(&s.name));
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = writer(&csv_path)?;
    let e = |err| Error::csv(&csv_path, err);
    w.write_record(["t", "N", "M", "N_P2", "M_P2", "N_P1", "M_P1", "N_lp", "M_lp"])
        .map_err(e)?;
    for pt in &sample.points {
        let mut rec = vec![pt.t.to_string(), pt.truth.0.to_string(), pt.truth.1.to_string()];
        for est in QueueEstimator::ALL {
            let v = pt.estimates.map(|x| x.get(est));
            rec.push(opt(v.map(|v| v.0)));
            rec.push(opt(v.map(|v| v.1)));
        }
        w.write_record(&rec).map_err(e)?;
    }
    finish(w, &csv_path)?;

    let mut out = vec![csv_path];
    for lane in Lane::BOTH {
        let pick = |pair: (f64, f64)| if lane == Lane::N { pair.0 } else { pair.1 };
        let truth = sample
            .points
            .iter()
            .map(|pt| (pt.t, f64::from(if lane == Lane::N { pt.truth.0 } else { pt.truth.1 })))
            .collect();
        let mut plot = Plot::new(
            format!(
                "{} lane {} queue, p = {}, seed {}",
                s.name,
                lane_label(lane),
                sample.p,
                sample.seed
            ),
            "t (s)",
            "vehicles",
        )
        .with_series(Series::new("ground truth", truth, SeriesStyle::Step));
        for est in QueueEstimator::ALL {
            let pts = sample
                .points
                .iter()
                .filter_map(|pt| pt.estimates.map(|x| (pt.t, pick(x.get(est)))))
                .collect();
            plot = plot.with_series(Series::new(est.label(), pts, SeriesStyle::Points));
        }
        let path = dir.join(format!("{stem}_{}.svg", lane_label(lane)));
        svg::save(&plot.render(), &path)?;
        out.push(path);
    }
    Ok(out)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Heat map of a joint distribution with its mean marked; rows are `n`.
pub fn distribution_heat_map(dist: &JointQueueDistribution, title: &str, shown: usize) -> HeatMap {
    let side = shown.min(dist.n_max()) + 1;
    let values = (0..side).map(|n| dist.row(n)[..side].to_vec()).collect();
    let (en, em) = expected_queue_lengths(dist);
    HeatMap {
        title: title.to_string(),
        x_label: "m (lane M)".into(),
        y_label: "n (lane N)".into(),
        values,
        marker: Some((em, en)),
    }
}

/// Writes `<stem>.csv` and/or `<stem>.svg` for a distribution.
pub fn write_distribution(
    dist: &JointQueueDistribution,
    title: &str,
    dir: &Path,
    stem: &str,
    csv: bool,
    svg_out: bool,
) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if csv {
        let path = dir.join(format!("{stem}.csv"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_distribution_csv(dist, file).map_err(|e| Error::csv(&path, e))?;
        out.push(path);
    }
    if svg_out {
        let path = dir.join(format!("{stem}.svg"));
        let (en, em) = expected_queue_lengths(dist);
        let shown = ((en.max(em) * 2.0).ceil() as usize + 6).max(12);
        svg::save(&distribution_heat_map(dist, title, shown).render(), &path)?;
        out.push(path);
    }
    Ok(out)
}

/// Figures that do not depend on a sweep: prior and posterior heat maps for
/// the worked example, the offset-phase `(r̄, α*)` trajectory, and the
/// balance interval against the common flow.
pub fn emit_reference_figures(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();

    let preset = posterior_preset();
    let (mu_n, mu_m) = mu_rates(&preset.demand, preset.r, preset.r);
    let input = PosteriorInput::new(mu_n, mu_m, preset.demand.p(), preset.l_p, preset.c_p)?;
    let prior = prior_joint(mu_n, mu_m, input.n_max)?;
    out.extend(write_distribution(
        &prior,
        "Prior P(N, M)",
        dir,
        "posterior_example_prior",
        true,
        true,
    )?);
    let post = posterior_joint(&input)?;
    out.extend(write_distribution(
        &post,
        &format!("Posterior given l_p = {}, c_p = {}", preset.l_p, preset.c_p),
        dir,
        "posterior_example_conditional",
        true,
        true,
    )?);

    let (ratios, timing) = offset_phase_preset();
    let traj = trajectory_alpha_r(&timing, &ratios, 0.0, 1.0)?;
    let path = dir.join("alpha_trajectory.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_trajectory_csv(&traj, file).map_err(|e| Error::csv(&path, e))?;
    out.push(path);
    let r_pts = traj
        .iter()
        .filter_map(|p| p.r_bar.filter(|r| r.is_finite()).map(|r| (p.t, r)))
        .collect();
    let a_pts = traj.iter().filter_map(|p| p.alpha_star.map(|a| (p.t, a))).collect();
    let plot = Plot::new("Red ratio and balancing assignment", "t (s)", "value")
        .with_series(Series::new("r̄(t)", r_pts, SeriesStyle::Line))
        .with_series(Series::new("α*(r̄(t))", a_pts, SeriesStyle::Line))
        .x_range(0.0, timing.cycle_s());
    let path = dir.join("alpha_trajectory.svg");
    svg::save(&plot.render(), &path)?;
    out.push(path);

    out.extend(interval_figure(dir)?);
    Ok(out)
}

/// `I` for `λ_n = λ_m = 1/6` and `λ_nm` from 0.01 to 0.5 veh/s.
fn interval_figure(dir: &Path) -> Result<Vec<PathBuf>> {
    let side = 1.0 / 6.0;
    let csv_path = dir.join("interval_vs_lambda_nm.csv");
    let mut w = writer(&csv_path)?;
    let e = |err| Error::csv(&csv_path, err);
    w.write_record(["lambda_nm", "lower", "upper"]).map_err(e)?;
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for k in 1..=50 {
        let nm = k as f64 / 100.0;
        let i = interval_i(&TurnRatios::from_flows(side, side, nm)?)?;
        w.write_record([nm.to_string(), i.lower.to_string(), i.upper.to_string()])
            .map_err(e)?;
        lo.push((nm, i.lower));
        hi.push((nm, i.upper));
    }
    finish(w, &csv_path)?;
    let plot = Plot::new("Reachable red ratios vs common flow", "λ_nm (veh/s)", "r̄")
        .with_series(Series::new("lower", lo, SeriesStyle::Line))
        .with_series(Series::new("upper", hi, SeriesStyle::Line));
    let svg_path = dir.join("interval_vs_lambda_nm.svg");
    svg::save(&plot.render(), &svg_path)?;
    Ok(vec![csv_path, svg_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_has_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&MetricReport::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        for f in &files {
            assert_eq!(f.extension().unwrap(), "csv");
            let text = std::fs::read_to_string(f).unwrap();
            assert_eq!(text.lines().count(), 1, "{}", f.display());
        }
    }

    #[test]
    fn reference_figures_come_with_data() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_reference_figures(dir.path()).unwrap();
        for f in files.iter().filter(|f| f.extension().unwrap() == "svg") {
            assert!(f.with_extension("csv").exists(), "{} has no data file", f.display());
        }
    }

    #[test]
    fn unwritable_path_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("blocker");
        std::fs::write(&blocker, "").unwrap();
        let err = emit_report(&MetricReport::default(), &blocker.join("out")).unwrap_err();
        assert_eq!(err.category(), "io");
        assert!(err.to_string().contains("blocker"));
    }
}
