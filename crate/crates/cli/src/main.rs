//! `tdsr`: run catalog scenarios and write their diagnostics to disk.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver divergence or
//! non-convergence (partial artifacts are kept), 4 I/O failure.

mod artifacts;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdsr::driver::BlockSummary;
use tdsr::models::{catalog, compare, parse_number, run_scenario, sweep, BuildContext, ScenarioParams};
use tdsr::TdsrError;

use config::{Inputs, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Io(String),
}

impl CliError {
    /// Setup errors are configuration errors unless the file system failed.
    pub fn from_setup(e: TdsrError) -> Self {
        match e.root_cause() {
            TdsrError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "tdsr", version, about = "Renormalized Duhamel solver for evolution PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios and their default parameters.
    List {
        /// One scenario per line: name, summary, parameters (tab-separated).
        #[arg(long)]
        tsv: bool,
    },
    /// Run a scenario and write its artifacts.
    Run(Common),
    /// Refine the time step and fit the convergence order.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated time steps; default: dt halved `--halvings` times.
        #[arg(long)]
        dts: Option<String>,
        #[arg(long, default_value_t = 3)]
        halvings: usize,
    },
    /// Run TDSR and an ETDRK4 reference and compare the final states.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario name (see `tdsr list`); may come from the config instead.
    scenario: Option<String>,
    /// TOML config with `scenario`, `[params]` and `[output]`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides TDSR_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parameter override `key=value`, applied after the config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// No per-block progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(&Inputs {
            scenario: self.scenario.as_deref(),
            config: self.config.as_deref(),
            seed: self.seed,
            sets: &self.sets,
        })
    }

    fn setup(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let cfg = self.load()?;
        let dir = cfg.out_dir(self.out.as_deref());
        artifacts::prepare(&dir)?;
        Ok((cfg, dir))
    }
}

fn context(dir: &Path) -> BuildContext<'_> {
    BuildContext {
        townes_cache: Some(dir),
    }
}

fn cache_dir(out: &Path) -> PathBuf {
    out.join("cache")
}

fn progress(quiet: bool) -> impl FnMut(&BlockSummary) {
    move |b: &BlockSummary| {
        if !quiet {
            eprintln!(
                "block {:>4}  t = {:<12.6}  iterations {:>3}  metric {:.3e}  law residual {:.3e}{}",
                b.index,
                b.t_start,
                b.iterations,
                b.final_metric,
                b.max_law_residual,
                if b.converged { "" } else { "  (not converged)" }
            );
        }
    }
}

/// Print to stdout; a closed pipe (`tdsr list | head`) is not an error.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn list(tsv: bool) -> Result<(), CliError> {
    for info in catalog() {
        let p = ScenarioParams::defaults(info);
        let params = p.resolved().map_err(CliError::from_setup)?;
        if tsv {
            let kv: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            say(&format!("{}\t{}\t{}", info.name, info.summary, kv.join(";")));
        } else {
            say(info.name);
            say(&format!("    {}", info.summary));
            let shown = ["dt", "t_end", "block", "ramp", "n_s", "length", "laws"];
            let kv: Vec<String> = params
                .iter()
                .filter(|(k, _)| shown.contains(k))
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            say(&format!("    {}", kv.join("  ")));
        }
    }
    Ok(())
}

fn run(c: &Common) -> Result<(), CliError> {
    let (cfg, dir) = c.setup()?;
    let cache = cache_dir(&dir);
    let outcome = run_scenario(&cfg.params, context(&cache), &mut progress(c.quiet)).map_err(CliError::from_setup)?;
    let r = &outcome.report;
    let status = match (&outcome.error, r.converged()) {
        (Some(_), _) => "failed",
        (None, true) => "converged",
        (None, false) => "not_converged",
    };
    artifacts::write_run(&dir, r, &cfg.output, "run", status)?;
    println!("scenario {}  status {status}  runtime {:.2}s", cfg.params.scenario, r.runtime_s);
    for l in &r.laws {
        let last = l.rel.last().copied().unwrap_or(f64::NAN);
        let abs = l.abs.last().copied().unwrap_or(f64::NAN);
        println!("  {:<16} final drift rel {last:.3e}  abs {abs:.3e}", l.functional.to_string());
    }
    if let Some(e) = r.max_delta_u() {
        println!("  max |u - u_exact| {e:.3e}");
    }
    println!("  artifacts in {}", dir.display());
    match outcome.error {
        Some(e) => Err(CliError::Solver(e.to_string())),
        None if !r.converged() => Err(CliError::Solver(format!(
            "fixed-point iteration did not converge within max_iter = {}",
            cfg.params.max_iter
        ))),
        None => Ok(()),
    }
}

fn parse_dts(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_number(t).map_err(|e| CliError::Config(format!("--dts: {e}"))))
        .collect()
}

fn run_sweep(c: &Common, dts: Option<&str>, halvings: usize) -> Result<(), CliError> {
    let (cfg, dir) = c.setup()?;
    let dts = match dts {
        Some(s) => parse_dts(s)?,
        None => (0..=halvings).map(|k| cfg.params.dt / 2f64.powi(k as i32)).collect(),
    };
    for &dt in &dts {
        let mut p = cfg.params.clone();
        p.dt = dt;
        p.run_spec().map_err(CliError::from_setup)?;
    }
    let cache = cache_dir(&dir);
    let report = sweep(&cfg.params, &dts, context(&cache)).map_err(|e| match e.root_cause() {
        TdsrError::InvalidParameter(_) | TdsrError::FunctionalMismatch { .. } => CliError::Config(e.to_string()),
        TdsrError::Io(_) => CliError::Io(e.to_string()),
        _ => CliError::Solver(e.to_string()),
    })?;
    artifacts::write_sweep(&dir, &report)?;
    for p in &report.points {
        println!("dt {:.6e}  max |u - u_exact| {:.3e}  converged {}", p.dt, p.max_delta_u, p.converged);
    }
    match &report.order {
        Some(o) => println!("fitted order {:.3} from {} points", o.slope, o.used.len()),
        None => println!("fitted order unavailable"),
    }
    println!("artifacts in {}", dir.display());
    if report.points.iter().all(|p| p.converged) {
        Ok(())
    } else {
        Err(CliError::Solver("some time steps did not converge".into()))
    }
}

fn run_compare(c: &Common) -> Result<(), CliError> {
    let (cfg, dir) = c.setup()?;
    let cache = cache_dir(&dir);
    let cmp = compare(&cfg.params, context(&cache)).map_err(CliError::from_setup)?;
    let status = if cmp.tdsr.converged() { "converged" } else { "failed" };
    artifacts::write_run(&dir, &cmp.tdsr.report, &cfg.output, "compare", status)?;
    artifacts::write_compare(&dir, &cmp)?;
    match cmp.max_diff {
        Some(d) => println!(
            "max |u_tdsr - u_etdrk4| at t = {} : {d:.3e} (reference dt {:.3e})",
            cfg.params.t_end, cmp.reference.dt
        ),
        None => println!("TDSR did not finish; reference written alone"),
    }
    println!("artifacts in {}", dir.display());
    match cmp.tdsr.error {
        Some(e) => Err(CliError::Solver(e.to_string())),
        None if !cmp.tdsr.report.converged() => Err(CliError::Solver("TDSR did not converge".into())),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::List { tsv } => list(*tsv),
        Command::Run(c) => run(c),
        Command::Sweep { common, dts, halvings } => run_sweep(common, dts.as_deref(), *halvings),
        Command::Compare(c) => run_compare(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Config(_) => "configuration error",
                CliError::Solver(_) => "solver failure",
                CliError::Io(_) => "i/o error",
            };
            eprintln!("tdsr: {kind}: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
