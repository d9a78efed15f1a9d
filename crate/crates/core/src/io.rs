//! On-disk formats: versioned CSV, flat binary fields with a text sidecar,
//! the run manifest, and the Townes profile cache.
//!
//! Every CSV starts with `# schema: <name> v<N>` and a header row. Numbers
//! are written with 17 significant digits so they round-trip exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, TdsrError};
use crate::grid::PeriodicGrid;
use crate::models::{
    townes_profile, townes_residual, FieldData, GridLayout, ScenarioReport, TownesOptions, TownesProfile,
};

pub const SCHEMA_VERSION: u32 = 1;

/// `{:.16e}`: 17 significant digits; `nan`/`inf` spelled as Rust prints them.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// A CSV file with a schema line and a fixed header.
pub struct CsvWriter {
    out: BufWriter<fs::File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, schema: &str, header: &[String]) -> Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "# schema: {schema} v{SCHEMA_VERSION}")?;
        writeln!(out, "{}", header.join(","))?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        if cells.len() != self.columns {
            return Err(TdsrError::Format(format!(
                "row has {} cells, header has {}",
                cells.len(),
                self.columns
            )));
        }
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Rows of a CSV written by [`CsvWriter`]: header and cells, schema line skipped.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| TdsrError::Format(format!("{} has no header", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok((header, rows))
}

/// `t`, then per law its value, absolute drift and relative drift.
pub fn write_invariants_csv(path: &Path, report: &ScenarioReport) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for l in &report.laws {
        let n = l.functional.to_string();
        header.extend([n.clone(), format!("{n}_abs"), format!("{n}_rel")]);
    }
    let mut w = CsvWriter::create(path, "invariants", &header)?;
    for (i, t) in report.times.iter().enumerate() {
        let mut row = vec![fmt_num(*t)];
        for l in &report.laws {
            row.extend([fmt_num(l.values[i]), fmt_num(l.abs[i]), fmt_num(l.rel[i])]);
        }
        w.row(&row)?;
    }
    w.finish()
}

/// `t, delta_u` with `delta_u = max_x |u - u_exact|`.
pub fn write_error_csv(path: &Path, times: &[f64], delta_u: &[f64]) -> Result<()> {
    let mut w = CsvWriter::create(path, "solution_error", &["t".into(), "delta_u".into()])?;
    for (t, e) in times.iter().zip(delta_u) {
        w.row(&[fmt_num(*t), fmt_num(*e)])?;
    }
    w.finish()
}

/// `block, n, metric, law_residual_max`. Wall times are kept out so the
/// file is reproducible byte for byte.
pub fn write_history_csv(path: &Path, report: &ScenarioReport) -> Result<()> {
    let header: Vec<String> = ["block", "n", "metric", "law_residual_max"].map(String::from).to_vec();
    let mut w = CsvWriter::create(path, "iteration_history", &header)?;
    for (b, r) in &report.history {
        let res = r.law_residual.iter().fold(0.0f64, |m, x| m.max(*x));
        w.row(&[b.to_string(), r.n.to_string(), fmt_num(r.metric), fmt_num(res)])?;
    }
    w.finish()
}

/// One row per block.
pub fn write_blocks_csv(path: &Path, report: &ScenarioReport) -> Result<()> {
    let header: Vec<String> = [
        "block",
        "t_start",
        "iterations",
        "converged",
        "stagnated",
        "final_metric",
        "max_law_residual",
        "dissipation_residual",
    ]
    .map(String::from)
    .to_vec();
    let mut w = CsvWriter::create(path, "blocks", &header)?;
    for (i, b) in report.blocks.iter().enumerate() {
        let diss = report.dissipation_residual.get(i).map(|x| fmt_num(*x)).unwrap_or_default();
        w.row(&[
            b.index.to_string(),
            fmt_num(b.t_start),
            b.iterations.to_string(),
            b.converged.to_string(),
            b.stagnated.to_string(),
            fmt_num(b.final_metric),
            fmt_num(b.max_law_residual),
            diss,
        ])?;
    }
    w.finish()
}

/// `x,u` or `x,y,u`; complex fields as `re,im` in place of `u`.
pub fn write_snapshot_csv(path: &Path, grid: &GridLayout, field: &FieldData) -> Result<()> {
    if field.len() != grid.coords.len() {
        return Err(TdsrError::Dimension {
            expected: grid.coords.len(),
            got: field.len(),
        });
    }
    let mut header: Vec<String> = vec!["x".into()];
    if grid.dimension() == 2 {
        header.push("y".into());
    }
    match field {
        FieldData::Real(_) => header.push("u".into()),
        FieldData::Complex(_) => header.extend(["re".into(), "im".into()]),
    }
    let mut w = CsvWriter::create(path, "snapshot", &header)?;
    for (j, p) in grid.coords.iter().enumerate() {
        let mut row = vec![fmt_num(p[0])];
        if grid.dimension() == 2 {
            row.push(fmt_num(p[1]));
        }
        match field {
            FieldData::Real(v) => row.push(fmt_num(v[j])),
            FieldData::Complex(v) => row.extend([fmt_num(v[j].re), fmt_num(v[j].im)]),
        }
        w.row(&row)?;
    }
    w.finish()
}

/// Shape and meaning of a flat binary field file.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSidecar {
    /// `real` or `complex`.
    pub dtype: String,
    pub n_times: usize,
    pub shape: Vec<usize>,
    pub grid: String,
    pub dt: f64,
    pub t0: f64,
}

impl FieldSidecar {
    fn render(&self) -> String {
        let shape = self.shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x");
        format!(
            "format = flat little-endian f64, time-major then row-major; complex interleaved re,im\n\
             dtype = {}\nn_times = {}\nshape = {}\ngrid = {}\ndt = {}\nt0 = {}\n",
            self.dtype,
            self.n_times,
            shape,
            self.grid,
            fmt_num(self.dt),
            fmt_num(self.t0)
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            text.lines()
                .find_map(|l| l.split_once(" = ").filter(|(a, _)| *a == k).map(|(_, b)| b.trim()))
                .ok_or_else(|| TdsrError::Format(format!("sidecar is missing '{k}'")))
        };
        let bad = |k: &str| TdsrError::Format(format!("sidecar has a malformed '{k}'"));
        Ok(Self {
            dtype: get("dtype")?.to_string(),
            n_times: get("n_times")?.parse().map_err(|_| bad("n_times"))?,
            shape: get("shape")?
                .split('x')
                .map(|s| s.parse().map_err(|_| bad("shape")))
                .collect::<Result<_>>()?,
            grid: get("grid")?.to_string(),
            dt: get("dt")?.parse().map_err(|_| bad("dt"))?,
            t0: get("t0")?.parse().map_err(|_| bad("t0"))?,
        })
    }

    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("txt")
}

/// Write `levels` to `path` and the sidecar next to it (`.txt`).
pub fn write_field_bin(path: &Path, levels: &[FieldData], grid: &GridLayout, dt: f64, t0: f64) -> Result<()> {
    let complex = levels.first().is_some_and(|l| l.is_complex());
    let mut out = BufWriter::new(fs::File::create(path)?);
    for l in levels {
        if l.len() != grid.coords.len() || l.is_complex() != complex {
            return Err(TdsrError::Format("levels differ in size or type".into()));
        }
        match l {
            FieldData::Real(v) => v.iter().try_for_each(|x| out.write_all(&x.to_le_bytes()))?,
            FieldData::Complex(v) => v.iter().try_for_each(|c| {
                out.write_all(&c.re.to_le_bytes())?;
                out.write_all(&c.im.to_le_bytes())
            })?,
        }
    }
    out.flush()?;
    let side = FieldSidecar {
        dtype: if complex { "complex" } else { "real" }.into(),
        n_times: levels.len(),
        shape: grid.shape.clone(),
        grid: grid.kind.into(),
        dt,
        t0,
    };
    fs::write(sidecar_path(path), side.render())?;
    Ok(())
}

pub fn read_field_bin(path: &Path) -> Result<(FieldSidecar, Vec<FieldData>)> {
    let side = FieldSidecar::parse(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let per = if side.dtype == "complex" { 2 } else { 1 };
    let n = side.points();
    if bytes.len() != 8 * per * n * side.n_times {
        return Err(TdsrError::Format(format!(
            "{} holds {} bytes, sidecar implies {}",
            path.display(),
            bytes.len(),
            8 * per * n * side.n_times
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let levels = vals
        .chunks_exact(per * n)
        .map(|c| {
            if per == 2 {
                FieldData::Complex(c.chunks_exact(2).map(|p| num_complex::Complex64::new(p[0], p[1])).collect())
            } else {
                FieldData::Real(c.to_vec())
            }
        })
        .collect();
    Ok((side, levels))
}

/// A TOML basic string.
pub fn toml_string(s: &str) -> String {
    let mut o = String::with_capacity(s.len() + 2);
    o.push('"');
    for ch in s.chars() {
        match ch {
            '"' => o.push_str("\\\""),
            '\\' => o.push_str("\\\\"),
            '\n' => o.push_str("\\n"),
            c => o.push(c),
        }
    }
    o.push('"');
    o
}

/// Manifest text: valid as a `--config` file, so a run can be replayed.
/// `extra` lands in `[provenance]`, which configs accept and ignore.
pub fn manifest_text(report: &ScenarioReport, extra: &[(&str, String)]) -> Result<String> {
    let mut s = format!("scenario = {}\n\n[params]\n", toml_string(&report.params.scenario));
    for (k, v) in report.params.resolved()? {
        s.push_str(&format!("{k} = {}\n", toml_string(&v)));
    }
    s.push_str("\n[provenance]\n");
    s.push_str(&format!("library_version = {}\n", toml_string(env!("CARGO_PKG_VERSION"))));
    s.push_str(&format!("schema_version = {SCHEMA_VERSION}\n"));
    s.push_str(&format!("seed = {}\n", toml_string(&report.params.seed.to_string())));
    s.push_str(&format!("model = {}\n", toml_string(&report.model)));
    for (k, v) in extra {
        s.push_str(&format!("{k} = {}\n", toml_string(v)));
    }
    Ok(s)
}

fn townes_key(lambda: f64, grid: &PeriodicGrid) -> String {
    let (a, b) = (grid.axis(0), grid.axis(1));
    format!("townes_l{lambda}_{}x{}_L{}x{}", a.n, b.n, a.length, b.length)
}

/// The Townes profile on `grid`, read from `dir` when a matching cache
/// entry with residual within `opts.tol` exists, otherwise computed and
/// written there. The cache is flat `f64` with a `.txt` sidecar.
pub fn townes_cached(
    lambda: f64,
    grid: &PeriodicGrid,
    opts: TownesOptions,
    dir: Option<&Path>,
) -> Result<TownesProfile> {
    let Some(dir) = dir else {
        return townes_profile(lambda, grid, opts);
    };
    let bin = dir.join(format!("{}.bin", townes_key(lambda, grid)));
    if let Ok(bytes) = fs::read(&bin) {
        if bytes.len() == 8 * grid.len() {
            let u: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let residual = townes_residual(grid, lambda, &u)?;
            if residual <= opts.tol {
                return Ok(TownesProfile {
                    lambda,
                    u,
                    residual,
                    iterations: 0,
                });
            }
        }
    }
    let p = townes_profile(lambda, grid, opts)?;
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(fs::File::create(&bin)?);
    p.u.iter().try_for_each(|x| out.write_all(&x.to_le_bytes()))?;
    out.flush()?;
    let (a, b) = (grid.axis(0), grid.axis(1));
    fs::write(
        sidecar_path(&bin),
        format!(
            "lambda = {}\nshape = {}x{}\nlength = {}x{}\nresidual = {}\niterations = {}\n",
            fmt_num(lambda),
            a.n,
            b.n,
            a.length,
            b.length,
            fmt_num(p.residual),
            p.iterations
        ),
    )?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("tdsr-io-{}-{name}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, std::f64::consts::PI] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn field_binary_round_trip() {
        let d = tmp("bin");
        let grid = GridLayout {
            kind: "periodic",
            shape: vec![2, 2],
            coords: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        };
        let lv: Vec<FieldData> = (0..3)
            .map(|t| FieldData::Complex((0..4).map(|j| Complex64::new(t as f64, j as f64 * 0.1)).collect()))
            .collect();
        let p = d.join("u.bin");
        write_field_bin(&p, &lv, &grid, 0.5, 1.0).unwrap();
        let (side, back) = read_field_bin(&p).unwrap();
        assert_eq!(side.n_times, 3);
        assert_eq!(side.shape, vec![2, 2]);
        assert_eq!(side.dt, 0.5);
        assert_eq!(back, lv);
        assert_eq!(fs::metadata(&p).unwrap().len(), 3 * 4 * 16);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let d = tmp("csv");
        let p = d.join("a.csv");
        let mut w = CsvWriter::create(&p, "demo", &["a".into(), "b".into()]).unwrap();
        assert!(w.row(&["1".into()]).is_err());
        w.row(&["1".into(), "2".into()]).unwrap();
        w.finish().unwrap();
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1", "2"]]);
        assert!(fs::read_to_string(&p).unwrap().starts_with("# schema: demo v1\n"));
    }

    #[test]
    fn toml_escaping() {
        assert_eq!(toml_string(r#"a"b\c"#), r#""a\"b\\c""#);
    }
}
