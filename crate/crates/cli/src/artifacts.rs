//! Files written by each verb. Everything except `timing.csv` is a
//! function of the manifest, so repeated runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use tdsr::io::{
    fmt_num, manifest_text, write_blocks_csv, write_error_csv, write_field_bin, write_history_csv,
    write_invariants_csv, write_snapshot_csv, CsvWriter,
};
use tdsr::models::{Comparison, ScenarioReport, SweepReport};

use crate::config::OutputSection;
use crate::CliError;

pub fn prepare(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn io(e: tdsr::TdsrError) -> CliError {
    CliError::Io(e.to_string())
}

/// `snapshot_<k>_t<t>.csv`, `k` in ascending time order.
pub fn snapshot_name(k: usize, t: f64) -> String {
    format!("snapshot_{k:02}_t{t:.6}.csv")
}

/// Every artifact of one run; returns the paths written.
pub fn write_run(
    dir: &Path,
    report: &ScenarioReport,
    output: &OutputSection,
    verb: &str,
    status: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = vec![];
    let mut put = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    let manifest = manifest_text(report, &[("command", verb.to_string()), ("status", status.to_string())])
        .map_err(io)?;
    let p = put("manifest.toml");
    fs::write(&p, manifest).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    if output.invariants() {
        write_invariants_csv(&put("invariants.csv"), report).map_err(io)?;
    }
    if output.error() {
        if let Some(d) = &report.delta_u {
            write_error_csv(&put("error.csv"), &report.times, d).map_err(io)?;
        }
    }
    if output.history() {
        write_history_csv(&put("history.csv"), report).map_err(io)?;
        write_blocks_csv(&put("blocks.csv"), report).map_err(io)?;
    }
    for (k, (t, field)) in report.snapshots.iter().enumerate() {
        write_snapshot_csv(&put(&snapshot_name(k, *t)), &report.grid, field).map_err(io)?;
    }
    if let Some(u) = &report.final_state {
        write_snapshot_csv(&put("final.csv"), &report.grid, u).map_err(io)?;
    }
    if let Some(full) = &report.full {
        if !full.is_empty() {
            let t0 = report.times.first().copied().unwrap_or(0.0);
            write_field_bin(&put("field.bin"), full, &report.grid, report.params.dt, t0).map_err(io)?;
        }
    }
    let mut w = CsvWriter::create(
        &put("timing.csv"),
        "timing",
        &["block", "n", "elapsed_s"].map(String::from),
    )
    .map_err(io)?;
    for (b, r) in &report.history {
        w.row(&[b.to_string(), r.n.to_string(), fmt_num(r.elapsed_s)]).map_err(io)?;
    }
    w.finish().map_err(io)?;
    Ok(written)
}

/// `sweep.csv`: one row per time step with the error, per-law drift and
/// convergence flag; the fitted order goes to `sweep_order.txt`.
pub fn write_sweep(dir: &Path, sweep: &SweepReport) -> Result<(), CliError> {
    let mut header: Vec<String> = vec!["dt".into(), "max_delta_u".into()];
    if let Some(first) = sweep.points.first() {
        header.extend(first.law_drift.iter().map(|(f, _)| format!("{f}_rel")));
    }
    header.push("converged".into());
    let mut w = CsvWriter::create(&dir.join("sweep.csv"), "sweep", &header).map_err(io)?;
    for p in &sweep.points {
        let mut row = vec![fmt_num(p.dt), fmt_num(p.max_delta_u)];
        row.extend(p.law_drift.iter().map(|(_, d)| fmt_num(*d)));
        row.push(p.converged.to_string());
        w.row(&row).map_err(io)?;
    }
    w.finish().map_err(io)?;
    let text = match &sweep.order {
        Some(o) => format!(
            "slope = {}\npoints_used = {}\npoints_trimmed = {}\n",
            fmt_num(o.slope),
            o.used.len(),
            o.trimmed
        ),
        None => "slope = nan\npoints_used = 0\npoints_trimmed = 0\n".to_string(),
    };
    fs::write(dir.join("sweep_order.txt"), text).map_err(|e| CliError::Io(e.to_string()))
}

/// `compare.txt` plus both final states.
pub fn write_compare(dir: &Path, c: &Comparison) -> Result<(), CliError> {
    let r = &c.tdsr.report;
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_else(|| "nan".into());
    let text = format!(
        "tdsr_dt = {}\nreference_dt = {}\nmax_diff = {}\ntdsr_max_delta_u = {}\nreference_delta_u = {}\n",
        fmt_num(r.params.dt),
        fmt_num(c.reference.dt),
        opt(c.max_diff),
        opt(r.max_delta_u()),
        opt(c.reference.delta_u),
    );
    fs::write(dir.join("compare.txt"), text).map_err(|e| CliError::Io(e.to_string()))?;
    write_snapshot_csv(&dir.join("final_reference.csv"), &r.grid, &c.reference.final_state).map_err(io)
}
