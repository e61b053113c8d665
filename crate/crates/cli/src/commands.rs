//! Subcommand bodies. Each writes its files through an [`OutputDir`] and
//! returns the config snapshot for the manifest.

use std::io::Write;

use anyhow::{Context, Result};
use lhtraffic::ews::{self, fmt_f64, EwsAnalysis, EwsConfig, EwsReport, Indicator};
use lhtraffic::exec::ExecMode;
use lhtraffic::export;
use lhtraffic::mkdv::{self, CoexistPoint};
use lhtraffic::simulate::{self, Classification, Snapshot, Trajectory};
use lhtraffic::stability::{self, KGrid, SweepPoint};
use lhtraffic::ModelParams;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{PlotValue, SimulateFile, StabilityFile};
use crate::output::OutputDir;
use crate::svg::{self, Series};

/// Rows kept in a heatmap; longer runs are subsampled evenly.
const HEATMAP_ROWS: usize = 300;

fn csv_row(out: &mut Vec<u8>, fields: &[String]) -> std::io::Result<()> {
    writeln!(out, "{}", fields.join(","))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_f64)
}

fn nan_if_none(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateSummary {
    sites: usize,
    steps: u64,
    tau: f64,
    samples: usize,
    classify_site: usize,
    classification: Option<Classification>,
    classification_note: Option<String>,
    mass_initial: f64,
    mass_final: f64,
    mass_relative_drift: f64,
    negative_steps: u64,
    first_negative_step: Option<u64>,
    onset_time: Option<f64>,
    alarm_time: Option<f64>,
}

fn field_rows(snapshots: &[Snapshot]) -> Vec<(f64, &[f64])> {
    snapshots
        .iter()
        .map(|s| (s.time, s.field.as_slice()))
        .collect()
}

fn heatmap_svg(title: &str, rows: &[(f64, &[f64])], first_site: usize) -> String {
    let stride = rows.len().div_ceil(HEATMAP_ROWS).max(1);
    let kept: Vec<&(f64, &[f64])> = rows.iter().step_by(stride).collect();
    let grid: Vec<Vec<f64>> = kept.iter().map(|r| r.1.to_vec()).collect();
    let cols = grid.first().map_or(1, Vec::len);
    let t0 = kept.first().map_or(0.0, |r| r.0);
    let t1 = kept.last().map_or(1.0, |r| r.0);
    let x = (first_site as f64 - 0.5, (first_site + cols) as f64 - 0.5);
    let y = if t1 > t0 { (t0, t1) } else { (t0, t0 + 1.0) };
    svg::heatmap(title, "site", "t (s)", x, y, &grid)
}

fn write_diagnostics(out: &mut Vec<u8>, traj: &Trajectory) -> std::io::Result<()> {
    csv_row(
        out,
        &["t_seconds,mass,mean,spatial_std,negative_sites".into()],
    )?;
    let d = &traj.diagnostics;
    for (i, &t) in traj.times.iter().enumerate() {
        csv_row(
            out,
            &[
                fmt_f64(t),
                fmt_f64(d.mass[i]),
                fmt_f64(d.mean[i]),
                fmt_f64(d.spatial_std[i]),
                d.negative_sites[i].to_string(),
            ],
        )?;
    }
    Ok(())
}

fn write_portrait(out: &mut Vec<u8>, points: &[(f64, f64)]) -> std::io::Result<()> {
    csv_row(out, &["rho_star,delta_rho_star".into()])?;
    for &(x, dx) in points {
        csv_row(out, &[fmt_f64(x), fmt_f64(dx)])?;
    }
    Ok(())
}

/// Writes the indicator report, summary and four-panel plot.
fn write_ews(dir: &mut OutputDir, analysis: &EwsAnalysis) -> Result<()> {
    dir.write_with("probe.csv", |buf| export::write_probe(buf, &analysis.probe))?;
    dir.write_with("ews_report.csv", |buf| analysis.report.write_csv(buf))?;
    let mut summary = serde_json::to_value(analysis.summary())?;
    summary["analysed_samples"] = json!(analysis.analysed);
    summary["window"] = json!(analysis.report.window);
    summary["alarm_before_onset"] = match (analysis.report.alarm_time, analysis.onset) {
        (Some(a), Some(o)) => json!(a < o.time),
        _ => Value::Null,
    };
    dir.write_json("ews_summary.json", &summary)?;
    dir.write(
        "indicators.svg",
        indicators_svg(&analysis.report).as_bytes(),
    )
}

fn indicators_svg(report: &EwsReport) -> String {
    let panels: Vec<(String, Vec<(f64, f64)>)> = Indicator::ALL
        .iter()
        .map(|&ind| {
            let pts = report
                .t_center
                .iter()
                .zip(report.series(ind))
                .map(|(&t, v)| (t, nan_if_none(v)))
                .collect();
            (ind.name().to_string(), pts)
        })
        .collect();
    let title = match report.alarm_time {
        Some(t) => format!("Rolling indicators (alarm at {t:.0} s)"),
        None => "Rolling indicators (no alarm)".to_string(),
    };
    svg::stacked_chart(&title, "window centre t (s)", &panels)
}

pub fn simulate(dir: &mut OutputDir, file: &SimulateFile, seed: Option<u64>) -> Result<Value> {
    file.validate()?;
    let scenario = file.effective_scenario(seed)?;
    let traj = simulate::run(&scenario)?;

    dir.write_with("trajectory.csv", |buf| export::write_trajectory(buf, &traj))?;
    dir.write_with("diagnostics.csv", |buf| write_diagnostics(buf, &traj))?;
    if !traj.snapshots.is_empty() {
        dir.write_with("snapshots.csv", |buf| {
            export::write_snapshots(buf, &traj.snapshots)
        })?;
        let svg = heatmap_svg("Density field rho*", &field_rows(&traj.snapshots), 1);
        dir.write("heatmap.svg", svg.as_bytes())?;
    } else if traj.sites.len() > 1 {
        let columns: Vec<Vec<f64>> = (0..traj.times.len())
            .map(|i| traj.series.iter().map(|s| s[i]).collect())
            .collect();
        let rows: Vec<(f64, &[f64])> = traj
            .times
            .iter()
            .copied()
            .zip(columns.iter().map(Vec::as_slice))
            .collect();
        let svg = heatmap_svg("Recorded sites rho*", &rows, traj.sites[0]);
        dir.write("heatmap.svg", svg.as_bytes())?;
    }

    let mut classification = None;
    let mut note = None;
    let ews_analysis = if file.ramp_plan.is_some() {
        note = Some("ramped run is not stationary; no attractor classification".to_string());
        Some(ews::analyze_trajectory(&traj, &file.ews)?)
    } else {
        match traj.site_series(file.classify_site) {
            Some(series) => {
                let lo = series.len() - series.len() / 3;
                let portrait = simulate::phase_portrait(series, lo.max(1), series.len())?;
                dir.write_with("phase_portrait.csv", |buf| write_portrait(buf, &portrait))?;
                let title = format!("Phase portrait, site {}", file.classify_site);
                let svg = svg::scatter_chart(&title, "rho*(t)", "rho*(t) - rho*(t-1)", &portrait);
                dir.write("phase_portrait.svg", svg.as_bytes())?;
                match simulate::classify_trajectory(&traj, file.classify_site, &file.classifier) {
                    Ok(c) => classification = Some(c),
                    Err(e) => note = Some(format!("classification skipped: {e}")),
                }
            }
            None => note = Some(format!("site {} was not recorded", file.classify_site)),
        }
        None
    };
    if let Some(analysis) = &ews_analysis {
        write_ews(dir, analysis)?;
    }

    let mass = &traj.diagnostics.mass;
    let (m0, m1) = (
        mass.first().copied().unwrap_or(0.0),
        mass.last().copied().unwrap_or(0.0),
    );
    let summary = SimulateSummary {
        sites: scenario.sites,
        steps: scenario.steps,
        tau: scenario.params.tau(),
        samples: traj.times.len(),
        classify_site: file.classify_site,
        classification,
        classification_note: note,
        mass_initial: m0,
        mass_final: m1,
        mass_relative_drift: if m0 != 0.0 { (m1 - m0) / m0 } else { m1 - m0 },
        negative_steps: traj.diagnostics.negative_steps,
        first_negative_step: traj.diagnostics.first_negative_step,
        onset_time: ews_analysis.as_ref().and_then(|a| a.onset.map(|o| o.time)),
        alarm_time: ews_analysis.as_ref().and_then(|a| a.report.alarm_time),
    };
    dir.write_json("summary.json", &summary)?;
    Ok(json!({ "simulate": file, "effective_scenario": scenario }))
}

// --------------------------------------------------------------- stability

#[derive(Serialize)]
struct ItemStatus {
    item: String,
    status: &'static str,
    note: Option<String>,
}

fn ok(item: String) -> ItemStatus {
    ItemStatus {
        item,
        status: "ok",
        note: None,
    }
}

fn undefined(item: String, note: String) -> ItemStatus {
    ItemStatus {
        item,
        status: "undefined",
        note: Some(note),
    }
}

fn point_report(params: &ModelParams) -> Result<(Value, String)> {
    params.validate()?;
    let verdict = stability::verdict(params, KGrid::default())?;
    let report = stability::discrepancy_report(params)?;
    let neutral = stability::neutral_a(params);
    let value = json!({
        "params": params,
        "neutral_a": neutral.as_ref().ok(),
        "neutral_a_note": neutral.as_ref().err().map(ToString::to_string),
        "w2": verdict.margin,
        "stable_long_wave": verdict.stable,
        "max_growth_factor": verdict.max_growth_factor,
        "max_log_growth": verdict.max_log_growth,
        "argmax_k": verdict.argmax_k,
        "separatrix_a_c": stability::separatrix_ac(params)?,
        "kink_side": params.a < stability::separatrix_ac(params)?,
        "kink_exists": mkdv::kink_exists(params.gamma)?,
        "critical_densities": report.closed_form,
        "critical_densities_oracle": report.oracle,
    });
    Ok((value, report.render()))
}

/// Lower branch by rising `a` then upper branch by falling `a`, so the
/// polyline runs left to right through the apex.
fn coexist_polyline(points: &[CoexistPoint]) -> Vec<(f64, f64)> {
    let mut lower: Vec<_> = points.iter().filter(|p| p.branch < 0).collect();
    let mut upper: Vec<_> = points.iter().filter(|p| p.branch > 0).collect();
    lower.sort_by(|a, b| a.a.total_cmp(&b.a));
    upper.sort_by(|a, b| b.a.total_cmp(&a.a));
    lower
        .into_iter()
        .chain(upper)
        .map(|p| (p.rho_star, p.a))
        .collect()
}

fn write_gamma_curve(
    out: &mut Vec<u8>,
    rows: &[(f64, Option<f64>, Option<f64>)],
) -> std::io::Result<()> {
    csv_row(out, &["gamma,a_neutral,a_c".into()])?;
    for &(g, a, c) in rows {
        csv_row(out, &[fmt_f64(g), opt(a), opt(c)])?;
    }
    Ok(())
}

fn sweep_grid(points: &[SweepPoint], columns: usize, plot: PlotValue) -> Vec<Vec<f64>> {
    points
        .chunks(columns)
        .map(|row| {
            row.iter()
                .map(|p| match plot {
                    PlotValue::Verdict => f64::from(u8::from(p.unstable)),
                    PlotValue::NeutralA => nan_if_none(p.neutral_a),
                })
                .collect()
        })
        .collect()
}

fn axis_name(axis: stability::SweepAxis) -> &'static str {
    match axis {
        stability::SweepAxis::RhoStar => "rho*",
        stability::SweepAxis::A => "a",
        stability::SweepAxis::B => "B",
        stability::SweepAxis::Gamma => "gamma",
    }
}

pub fn stability(dir: &mut OutputDir, file: &StabilityFile, mode: ExecMode) -> Result<Value> {
    file.validate()?;
    let mut items = Vec::new();

    if let Some(params) = &file.point {
        let (value, text) = point_report(params)?;
        dir.write_json("point.json", &value)?;
        dir.write("report.txt", text.as_bytes())?;
        items.push(ok("point".into()));
    }

    let mut lines = Vec::new();
    for c in &file.curves {
        let rho = c.rho_star.values();
        match stability::neutral_curve(&c.params, &rho) {
            Ok(curve) => {
                let name = format!("neutral_{}.csv", c.label);
                dir.write_with(&name, |buf| export::write_neutral_curve(buf, &curve))?;
                lines.push(Series::solid(format!("neutral {}", c.label), curve));
                items.push(ok(name));
            }
            Err(e) => items.push(undefined(format!("neutral_{}", c.label), e.to_string())),
        }
        if !c.coexisting {
            continue;
        }
        let result = stability::neutral_apex(&c.params)
            .map_err(mkdv::MkdvError::from)
            .and_then(|apex| {
                let n = c.coexist_points.max(1);
                let a: Vec<f64> = (1..=n).map(|i| apex * i as f64 / n as f64).collect();
                mkdv::coexisting_curve(&c.params, &a)
            });
        match result {
            Ok(points) => {
                let name = format!("coexisting_{}.csv", c.label);
                dir.write_with(&name, |buf| export::write_coexisting(buf, &points))?;
                lines.push(Series::dashed(
                    format!("coexisting {}", c.label),
                    coexist_polyline(&points),
                ));
                items.push(ok(name));
            }
            Err(e) => items.push(undefined(format!("coexisting_{}", c.label), e.to_string())),
        }
    }
    if !lines.is_empty() {
        let svg = svg::line_chart(
            "Neutral (solid) and coexisting (dashed) curves",
            "rho*",
            "a",
            &lines,
        );
        dir.write("curves.svg", svg.as_bytes())?;
    }

    let mut gamma_lines = Vec::new();
    for g in &file.gamma_curves {
        let rows: Vec<(f64, Option<f64>, Option<f64>)> = g
            .gamma
            .values()
            .into_iter()
            .map(|gamma| {
                let p = g.params.with_gamma(gamma);
                (
                    gamma,
                    stability::neutral_a(&p).ok(),
                    stability::separatrix_ac(&p).ok(),
                )
            })
            .collect();
        let name = format!("gamma_{}.csv", g.label);
        dir.write_with(&name, |buf| write_gamma_curve(buf, &rows))?;
        let missing = rows.iter().filter(|r| r.1.is_none()).count();
        items.push(match missing {
            0 => ok(name),
            m => ItemStatus {
                item: name,
                status: "partial",
                note: Some(format!(
                    "a_neutral undefined at {m} passing rates with gamma >= 1/2"
                )),
            },
        });
        gamma_lines.push(Series::solid(
            format!("neutral {}", g.label),
            rows.iter().map(|r| (r.0, nan_if_none(r.1))).collect(),
        ));
        gamma_lines.push(Series::dashed(
            format!("a_c {}", g.label),
            rows.iter().map(|r| (r.0, nan_if_none(r.2))).collect(),
        ));
    }
    if !gamma_lines.is_empty() {
        let svg = svg::line_chart(
            "Neutral sensitivity and separatrix",
            "gamma",
            "a",
            &gamma_lines,
        );
        dir.write("gamma.svg", svg.as_bytes())?;
    }

    for s in &file.sweeps {
        let spec = s.spec();
        let points = stability::sweep(&spec, mode).with_context(|| format!("sweep {}", s.label))?;
        let name = format!("sweep_{}.csv", s.label);
        dir.write_with(&name, |buf| export::write_sweep(buf, &points))?;
        let grid = sweep_grid(&points, spec.x_values.len(), s.plot);
        let title = match s.plot {
            PlotValue::Verdict => format!("Linear verdict {} (1 = unstable)", s.label),
            PlotValue::NeutralA => format!("Neutral sensitivity {}", s.label),
        };
        let svg = svg::heatmap(
            &title,
            axis_name(s.x_axis),
            axis_name(s.y_axis),
            (s.x.start, s.x.stop),
            (s.y.start, s.y.stop),
            &grid,
        );
        dir.write(&format!("sweep_{}.svg", s.label), svg.as_bytes())?;
        items.push(ok(name));
    }

    dir.write_json("summary.json", &json!({ "items": items }))?;
    Ok(serde_json::to_value(file)?)
}

// --------------------------------------------------------------------- ews

pub fn ews(dir: &mut OutputDir, input: &std::path::Path, config: &EwsConfig) -> Result<Value> {
    config.validate()?;
    let reader =
        std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let parsed =
        ews::read_input_csv(reader).with_context(|| format!("reading {}", input.display()))?;
    let analysis = ews::analyze_probe(parsed.probe, parsed.spatial_std.as_deref(), config)?;
    write_ews(dir, &analysis)?;
    Ok(json!({ "input": input.display().to_string(), "ews": config }))
}
