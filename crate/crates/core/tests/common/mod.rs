//! Helpers shared by the acceptance and property suites.
#![allow(dead_code)]

use num_complex::Complex64 as C64;

use tdsr::driver::{
    compose, split_initial_condition, tdsr_solve_block, BlockSetup, DuhamelEngine, Enforcement, GuessPolicy,
    Kernel, Model, RunSpec, SolveOptions, SplitStrategy, Storage, Targets,
};
use tdsr::field::SpaceTimeField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdsr::grid::PeriodicGrid;
use tdsr::models::{kdv_soliton_exact, run_scenario, BuildContext, FieldData, Kdv, Nls, ScenarioOutcome, ScenarioParams};
use tdsr::renorm::{solve_conservative, Functional};

/// A catalog scenario with `key=value` overrides.
pub fn params(name: &str, sets: &[(&str, &str)]) -> ScenarioParams {
    let mut p = ScenarioParams::for_name(name).unwrap();
    for (k, v) in sets {
        p.set(k, v).unwrap_or_else(|e| panic!("{k}={v}: {e}"));
    }
    p
}

pub fn run(p: &ScenarioParams) -> ScenarioOutcome {
    run_scenario(p, BuildContext::default(), &mut |_| {}).unwrap()
}

/// Run and require every block to converge.
pub fn run_ok(p: &ScenarioParams) -> ScenarioOutcome {
    let out = run(p);
    assert!(
        out.converged(),
        "{} did not converge: {:?}",
        p.scenario,
        out.error.as_ref().map(|e| e.to_string())
    );
    out
}

/// One line per criterion in the test log.
pub fn verdict(id: &str, checks: &[(&str, f64, f64)]) {
    let mut ok = true;
    for (what, got, bound) in checks {
        let pass = *got <= *bound;
        ok &= pass;
        println!("{id}  {what}: {got:.3e} <= {bound:.1e}  {}", if pass { "ok" } else { "FAIL" });
    }
    println!("{id}  {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed");
}

pub fn max_rel(out: &ScenarioOutcome, name: &str) -> f64 {
    law(out, name).1
}

pub fn max_abs(out: &ScenarioOutcome, name: &str) -> f64 {
    law(out, name).0
}

/// Largest absolute and relative drift of a monitored law.
pub fn law(out: &ScenarioOutcome, name: &str) -> (f64, f64) {
    let l = out
        .report
        .laws
        .iter()
        .find(|l| l.functional.to_string() == name)
        .unwrap_or_else(|| panic!("law {name} not monitored"));
    (l.max_abs(), l.max_rel())
}

pub fn end_rel(out: &ScenarioOutcome, name: &str) -> f64 {
    let l = out.report.laws.iter().find(|l| l.functional.to_string() == name).unwrap();
    *l.rel.last().unwrap()
}

pub fn real(f: &FieldData) -> &[f64] {
    match f {
        FieldData::Real(v) => v,
        FieldData::Complex(_) => panic!("expected a real field"),
    }
}

/// Periodic local maxima above `floor`.
pub fn peaks(u: &[f64], floor: f64) -> Vec<usize> {
    let n = u.len();
    (0..n)
        .filter(|&i| u[i] > floor && u[i] > u[(i + n - 1) % n] && u[i] >= u[(i + 1) % n])
        .collect()
}

/// KdV soliton `α = 6`, `ε = 1` on a small periodic grid.
pub struct SolitonCase {
    pub model: Kdv,
    pub u0: Vec<f64>,
    pub grid: PeriodicGrid,
}

pub fn soliton_case(n: usize, length: f64, beta: f64) -> SolitonCase {
    let grid = PeriodicGrid::centered_1d(n, length).unwrap();
    let model = Kdv::new(grid.clone(), 6.0, 1.0).unwrap();
    let u0 = grid.sample(|x, _| kdv_soliton_exact(beta, x, 0.0));
    SolitonCase { model, u0, grid }
}

fn pseudo_split(case: &SolitonCase, parts: usize) -> tdsr::driver::PseudoICs<f64> {
    split_initial_condition(&case.u0, SplitStrategy::default_for(parts), parts, case.model.grid()).unwrap()
}

/// `max |Σ R_j sweep_j(v, R) - (e^{tL} u0 + Duh N(Σ R_j v_j))|` for
/// perturbed auxiliary fields and factors; the sweep telescopes exactly.
pub fn telescoping_defect(beta: f64, parts: usize, amp: f64, seed: u64) -> f64 {
    let case = soliton_case(128, 40.0, beta);
    let pics = pseudo_split(&case, parts);
    let dt = 0.05;
    let levels = 9;
    let engine = DuhamelEngine::new(case.model.grid(), case.model.linear(), dt).unwrap();
    let kernel = Kernel::new(&case.model, &engine, &pics, levels).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<SpaceTimeField<f64>> = kernel
        .linear()
        .iter()
        .map(|l| SpaceTimeField::from_fn(l.n_points(), levels, |i, k| l.level(i)[k] * (1.0 + amp * rng.random_range(-1.0..1.0))))
        .collect();
    let r: Vec<Vec<f64>> = (0..parts).map(|_| (0..levels).map(|_| 1.0 + amp * rng.random_range(-1.0..1.0)).collect()).collect();
    let swept = kernel.sweep(&v, &r).unwrap();
    let lhs = compose(&swept, &r);
    let rhs = kernel.full_rhs(&compose(&v, &r)).unwrap();
    lhs.max_abs_diff(&rhs)
}

/// Solve one block and return `max |u(0) - u0|` and `max_j |R_j(0) v_j(0) - f_j|`.
pub fn reconstruction_at_zero(beta: f64, laws: &[Functional]) -> (f64, f64) {
    let case = soliton_case(256, 60.0, beta);
    let pics = pseudo_split(&case, laws.len());
    let dt = 0.05;
    let enforcement = Enforcement::Conserved(laws.to_vec());
    let targets = Targets::from_state(&enforcement, &case.u0, case.model.grid()).unwrap();
    let engine = DuhamelEngine::new(case.model.grid(), case.model.linear(), dt).unwrap();
    let sol = tdsr_solve_block(
        &case.model,
        &engine,
        &enforcement,
        &targets,
        BlockSetup {
            t_start: 0.0,
            dt,
            n_levels: 21,
            pics: &pics,
            guess: None,
        },
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(sol.converged, "block did not converge");
    let u_err = tdsr::field::max_abs_diff(sol.u.level(0), &case.u0);
    let part_err = sol
        .v
        .iter()
        .zip(&sol.r)
        .zip(&pics.f)
        .map(|((v, r), f)| {
            let scaled: Vec<f64> = v.level(0).iter().map(|x| x * r[0]).collect();
            tdsr::field::max_abs_diff(&scaled, f)
        })
        .fold(0.0, f64::max);
    (u_err, part_err)
}

/// Factors for `v` and for `c_j v_j`; covariance means `R'_j = R_j / c_j`.
pub fn scaling_covariance(beta: f64, laws: &[Functional], c: &[f64]) -> f64 {
    let case = soliton_case(256, 60.0, beta);
    let pics = pseudo_split(&case, laws.len());
    let dt = 0.05;
    let levels = 9;
    let grid = case.model.grid();
    let engine = DuhamelEngine::new(grid, case.model.linear(), dt).unwrap();
    let kernel = Kernel::new(&case.model, &engine, &pics, levels).unwrap();
    let v = kernel.linear().to_vec();
    let targets: Vec<f64> = laws
        .iter()
        .map(|l| tdsr::renorm::evaluate_functional(l, &case.u0, grid).unwrap())
        .collect();
    let base = solve_conservative(laws, &v, &targets, &pics.f, grid, None).unwrap();
    let scaled_v: Vec<SpaceTimeField<f64>> = v
        .iter()
        .zip(c)
        .map(|(f, cj)| {
            let mut g = f.clone();
            g.scale_levels(&vec![*cj; levels]);
            g
        })
        .collect();
    let scaled = solve_conservative(laws, &scaled_v, &targets, &pics.f, grid, None).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..laws.len() {
        for i in 0..levels {
            let want = base.r[j][i] / c[j];
            worst = worst.max((scaled.r[j][i] - want).abs() / want.abs());
        }
    }
    worst
}

/// Bit patterns of everything a seeded run reports except wall time.
pub fn run_fingerprint(p: &ScenarioParams) -> Vec<u64> {
    let out = run_ok(p);
    let r = &out.report;
    let mut bits = vec![];
    bits.extend(r.times.iter().map(|x| x.to_bits()));
    for l in &r.laws {
        bits.extend(l.values.iter().map(|x| x.to_bits()));
    }
    for (b, h) in &r.history {
        bits.push(*b as u64);
        bits.push(h.n as u64);
        bits.push(h.metric.to_bits());
        bits.extend(h.law_residual.iter().map(|x| x.to_bits()));
    }
    bits.extend(real(r.final_state.as_ref().unwrap()).iter().map(|x| x.to_bits()));
    bits
}

/// Run NLS from `u0` and from `e^{iθ} u0`; returns `max |u_θ - e^{iθ} u|` at the end.
pub fn nls_gauge_defect(theta: f64, amplitude: f64) -> f64 {
    let grid = PeriodicGrid::centered_1d(128, 30.0).unwrap();
    let model = Nls::new(grid.clone());
    let u0: Vec<C64> = grid.sample(|x, _| C64::new(amplitude / (amplitude * x).cosh(), 0.0) * C64::from_polar(1.0, 0.3 * x));
    let phase = C64::from_polar(1.0, theta);
    let rotated: Vec<C64> = u0.iter().map(|u| u * phase).collect();
    let spec = RunSpec {
        dt: 0.02,
        n_steps: 40,
        block_steps: 20,
        enforcement: Enforcement::Conserved(vec![Functional::NlsPower]),
        split: SplitStrategy::Single,
        guess: GuessPolicy::Linear,
        ramp_steps: None,
        options: SolveOptions::default(),
        storage: Storage::FinalOnly,
        monitored: vec![Functional::NlsPower],
    };
    let a = tdsr::driver::multiblock_run(&model, &u0, &spec, &mut |_, _| Ok(())).unwrap();
    let b = tdsr::driver::multiblock_run(&model, &rotated, &spec, &mut |_, _| Ok(())).unwrap();
    assert!(a.converged() && b.converged());
    a.final_state
        .iter()
        .zip(&b.final_state)
        .map(|(x, y)| (x * phase - y).norm())
        .fold(0.0, f64::max)
}

/// Zabusky–Kruskal with momentum enforced; largest absolute mass drift.
pub fn zk_mass_drift(amplitude: f64, shift: f64) -> f64 {
    let grid = PeriodicGrid::centered_1d(64, 2.0).unwrap();
    let model = Kdv::new(grid.clone(), 1.0, 0.022).unwrap();
    let u0 = grid.sample(|x, _| amplitude * (std::f64::consts::PI * x).cos() + shift);
    let dt = 0.4 / (160.0 * std::f64::consts::PI);
    let spec = RunSpec {
        dt,
        n_steps: 40,
        block_steps: 20,
        enforcement: Enforcement::Conserved(vec![Functional::KdvMomentum]),
        split: SplitStrategy::Single,
        guess: GuessPolicy::Linear,
        ramp_steps: None,
        options: SolveOptions::default(),
        storage: Storage::Full,
        monitored: vec![Functional::KdvMass],
    };
    let out = tdsr::driver::multiblock_run(&model, &u0, &spec, &mut |_, _| Ok(())).unwrap();
    assert!(out.converged());
    out.monitored[0].max_abs()
}
