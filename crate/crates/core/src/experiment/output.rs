//! Files written for each run: summary, extended report, CSV tables and plots.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::presets::{ConvergenceReport, CounterexampleReport, PresetReport};
use super::run::{ForwardReport, InversionReport};
use super::svg::{LinePlot, Series};
use crate::error::Result;

/// Machine-readable summary, identical in shape for every preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub preset: String,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub eps_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub recovered_locations: Vec<Vec<f64>>,
    pub location_error: Option<f64>,
    pub intensity_rel_l2_error: Option<f64>,
    pub iterations: usize,
    pub stop_reason: String,
}

impl Summary {
    pub fn from_inversion(r: &InversionReport) -> Self {
        Self {
            preset: r.spec.name.clone(),
            alpha: r.spec.alpha,
            delta: Some(r.spec.noise.delta),
            eps_fraction: Some(r.spec.observation.eps_fraction),
            seed: Some(r.spec.noise.seed),
            recovered_locations: r.recovered.locations.clone(),
            location_error: Some(r.location_error),
            intensity_rel_l2_error: Some(r.intensity_rel_l2_error),
            iterations: r.iterations,
            stop_reason: r.stop_reason.as_str().into(),
        }
    }

    fn no_inversion(preset: &str, alpha: f64) -> Self {
        Self {
            preset: preset.into(),
            alpha,
            delta: None,
            eps_fraction: None,
            seed: None,
            recovered_locations: Vec::new(),
            location_error: None,
            intensity_rel_l2_error: None,
            iterations: 0,
            stop_reason: "not_applicable".into(),
        }
    }

    /// Summary recorded when the pipeline aborted.
    pub fn failure(preset: &str, alpha: f64, error: &dyn std::fmt::Display) -> Self {
        Self {
            stop_reason: format!("failed: {error}"),
            ..Self::no_inversion(preset, alpha)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_summary(out_dir: &Path, summary: &Summary) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("summary.json"), summary)
}

/// `t, λ_true, λ_recovered` rows for one source.
pub fn write_intensity_csv<W: Write>(
    mut out: W,
    times: &[f64],
    truth: &[f64],
    recovered: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "t,lambda_true,lambda_recovered")?;
    for ((t, a), b) in times.iter().zip(truth).zip(recovered) {
        writeln!(out, "{t},{a:e},{b:e}")?;
    }
    Ok(())
}

/// Every artifact of a reconstruction run.
pub fn emit_outputs(out_dir: &Path, report: &InversionReport) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_summary(out_dir, &Summary::from_inversion(report))?;
    write_json(&out_dir.join("report.json"), report)?;
    write_json(&out_dir.join("config.json"), &report.spec)?;

    let mut hist = BufWriter::new(File::create(out_dir.join("history.csv"))?);
    report.history.write_csv(&mut hist)?;
    hist.flush()?;

    let times = &report.time_nodes;
    for (k, (truth, rec)) in report
        .truth
        .intensities
        .iter()
        .zip(&report.recovered.intensities)
        .enumerate()
    {
        let mut w = BufWriter::new(File::create(out_dir.join(format!("intensity_{k}.csv")))?);
        write_intensity_csv(&mut w, times, truth, rec)?;
        w.flush()?;
        let pts = |v: &[f64]| {
            times
                .iter()
                .copied()
                .zip(v.iter().copied())
                .collect::<Vec<_>>()
        };
        let plot = LinePlot::new(
            format!("{}: intensity of source {k}", report.spec.name),
            "t",
            "λ",
        )
        .with(Series::new("true", pts(truth)))
        .with(Series::new("recovered", pts(rec)).dashed());
        fs::write(out_dir.join(format!("intensity_{k}.svg")), plot.render())?;
    }

    let recs = &report.history.records;
    let series = |f: &dyn Fn(&crate::inverse::IterateRecord) -> Option<f64>| {
        recs.iter()
            .filter_map(|r| Some((r.iteration as f64, f(r)?)))
            .collect::<Vec<_>>()
    };
    let plot = LinePlot::new(
        format!("{}: convergence", report.spec.name),
        "iteration",
        "error",
    )
    .log_y()
    .with(Series::new("location error", series(&|r| r.location_error)))
    .with(Series::new(
        "intensity rel. error",
        series(&|r| r.intensity_error),
    ));
    fs::write(out_dir.join("convergence.svg"), plot.render())?;

    if let (Some(t), Some(r)) = (&report.truth.u0, &report.recovered.u0) {
        let mut w = BufWriter::new(File::create(out_dir.join("u0.csv"))?);
        writeln!(w, "index,u0_true,u0_recovered")?;
        for (i, (a, b)) in t.iter().zip(r).enumerate() {
            writeln!(w, "{i},{a:e},{b:e}")?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn emit_counterexample(out_dir: &Path, report: &CounterexampleReport) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_summary(
        out_dir,
        &Summary::no_inversion("counterexample3_1", report.config.alpha),
    )?;
    write_json(&out_dir.join("report.json"), report)
}

pub fn emit_convergence(out_dir: &Path, report: &ConvergenceReport) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_summary(
        out_dir,
        &Summary::no_inversion("convergence_mittag_leffler", report.config.alpha),
    )?;
    write_json(&out_dir.join("report.json"), report)
}

pub fn emit_preset(out_dir: &Path, report: &PresetReport) -> Result<()> {
    match report {
        PresetReport::Inversion(r) => emit_outputs(out_dir, r),
        PresetReport::Counterexample(r) => emit_counterexample(out_dir, r),
        PresetReport::Convergence(r) => emit_convergence(out_dir, r),
    }
}

/// Forward run: `forward.json`, `final_state.csv` and `observation.csv`.
pub fn emit_forward(out_dir: &Path, report: &ForwardReport) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("forward.json"), report)?;
    write_json(&out_dir.join("config.json"), &report.spec)?;
    let mut w = BufWriter::new(File::create(out_dir.join("final_state.csv"))?);
    writeln!(w, "x,y,u")?;
    for (p, u) in report.nodes.iter().zip(&report.final_state) {
        writeln!(w, "{},{},{u:e}", p[0], p[1])?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(out_dir.join("observation.csv"))?);
    let header: Vec<String> = report
        .observed_nodes
        .iter()
        .map(|i| format!("node_{i}"))
        .collect();
    writeln!(w, "t,{}", header.join(","))?;
    let n = report.observed_nodes.len();
    for (t, row) in report
        .observation_times
        .iter()
        .zip(report.observation.chunks(n))
    {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{t},{}", vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}
