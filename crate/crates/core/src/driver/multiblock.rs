//! Sequential blocks over a long horizon, each restarted from the previous
//! terminal state.

use crate::error::{Result, TdsrError};
use crate::field::{Scalar, SpaceTimeField};
use crate::renorm::Functional;
use crate::validation::LawDrift;

use super::block::{tdsr_solve_block, BlockSetup, BlockSolution, Enforcement, Model, SolveOptions, Targets};
use super::engine::DuhamelEngine;
use super::split::{generate_initial_guess_stream, split_initial_condition, RandomGuess, SplitStrategy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuessPolicy {
    /// `v_j = e^{tL} f_j`.
    Linear,
    /// Mollified random Gaussians, one independent stream per block and factor.
    Random(RandomGuess),
}

/// Which levels a run keeps in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    Full,
    /// Every `k`-th global level plus the last.
    Stride(usize),
    FinalOnly,
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub dt: f64,
    pub n_steps: usize,
    /// Steps per block; the last block may be shorter.
    pub block_steps: usize,
    pub enforcement: Enforcement,
    pub split: SplitStrategy,
    pub guess: GuessPolicy,
    /// Solve each block over prefixes growing by this many steps, seeding each
    /// from the previous fixed point held constant past its last level.
    pub ramp_steps: Option<usize>,
    pub options: SolveOptions,
    pub storage: Storage,
    /// Functionals tracked at every level over the whole run.
    pub monitored: Vec<Functional>,
}

impl RunSpec {
    /// `(first global level, steps)` of each block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = vec![];
        let mut s = 0;
        while s < self.n_steps {
            let k = self.block_steps.min(self.n_steps - s);
            out.push((s, k));
            s += k;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSummary {
    pub index: usize,
    pub t_start: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
    pub final_metric: f64,
    /// Max over levels and enforced laws of the law residual.
    pub max_law_residual: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome<S> {
    /// Times of `states`.
    pub times: Vec<f64>,
    pub states: Vec<Vec<S>>,
    /// Every level, when `Storage::Full`.
    pub full: Option<SpaceTimeField<S>>,
    /// Times of every level, with block interfaces stored once.
    pub all_times: Vec<f64>,
    pub monitored: Vec<LawDrift>,
    pub blocks: Vec<BlockSummary>,
    pub final_state: Vec<S>,
    /// Max over the run of the enforced-law residual.
    pub max_law_residual: f64,
}

impl BlockSummary {
    pub fn from_solution<S: Scalar>(index: usize, sol: &BlockSolution<S>) -> Self {
        Self {
            index,
            t_start: sol.t_start,
            iterations: sol.iterations(),
            converged: sol.converged,
            stagnated: sol.stagnated,
            final_metric: sol.final_metric(),
            max_law_residual: sol.law_drift.iter().flat_map(|d| d.iter()).fold(0.0f64, |m, x| m.max(*x)),
        }
    }
}

impl<S: Scalar> RunOutcome<S> {
    pub fn converged(&self) -> bool {
        self.blocks.iter().all(|b| b.converged)
    }
}

/// Run the blocks in sequence. The observer sees each block as soon as it
/// converges; a failing block aborts the run with block context attached.
///
/// Conserved targets are fixed from the original `u0` for the whole run;
/// the dissipative target restarts from `∫u²` at each block start.
pub fn multiblock_run<M: Model>(
    model: &M,
    u0: &[M::S],
    spec: &RunSpec,
    observer: &mut dyn FnMut(usize, &BlockSolution<M::S>) -> Result<()>,
) -> Result<RunOutcome<M::S>> {
    spec.enforcement.check(model)?;
    if spec.block_steps == 0 || spec.n_steps == 0 {
        return Err(TdsrError::InvalidParameter("run needs at least one step per block".into()));
    }
    let grid = model.grid();
    let engine = DuhamelEngine::new(grid, model.linear(), spec.dt)?;
    let n_factors = spec.enforcement.n_factors();
    let conserved_targets = match spec.enforcement {
        Enforcement::Conserved(_) => Some(Targets::from_state(&spec.enforcement, u0, grid)?),
        Enforcement::Dissipative => None,
    };
    let mut monitored_values: Vec<Vec<f64>> = vec![vec![]; spec.monitored.len()];
    let record = |u: &[M::S], values: &mut Vec<Vec<f64>>| -> Result<()> {
        for (m, f) in spec.monitored.iter().enumerate() {
            values[m].push(crate::renorm::evaluate_functional(f, u, grid)?);
        }
        Ok(())
    };

    let mut state = u0.to_vec();
    let mut out = RunOutcome {
        times: vec![],
        states: vec![],
        full: None,
        all_times: vec![],
        monitored: vec![],
        blocks: vec![],
        final_state: vec![],
        max_law_residual: 0.0,
    };
    let keep = |global: usize| match spec.storage {
        Storage::Full => true,
        Storage::Stride(k) => global % k.max(1) == 0 || global == spec.n_steps,
        Storage::FinalOnly => global == spec.n_steps,
    };
    for (b, (first, steps)) in spec.blocks().into_iter().enumerate() {
        let t_start = first as f64 * spec.dt;
        let wrap = |e: TdsrError| TdsrError::AtBlock {
            block: b,
            t_start,
            source: Box::new(e),
        };
        let pics = split_initial_condition(&state, spec.split, n_factors, grid).map_err(wrap)?;
        let targets = match &conserved_targets {
            Some(t) => t.clone(),
            None => Targets::from_state(&spec.enforcement, &state, grid).map_err(wrap)?,
        };
        let guess = match spec.guess {
            GuessPolicy::Linear => None,
            GuessPolicy::Random(params) => Some(
                (0..n_factors)
                    .map(|j| {
                        let g = generate_initial_guess_stream(grid, steps + 1, &params, (b * n_factors + j) as u64)?;
                        Ok(SpaceTimeField::from_fn(g.n_points(), g.n_levels(), |i, k| {
                            M::S::from_real(g.level(i)[k])
                        }))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?,
            ),
        };
        let sol = solve_ramped(
            model,
            &engine,
            &spec.enforcement,
            &targets,
            BlockSetup {
                t_start,
                dt: spec.dt,
                n_levels: steps + 1,
                pics: &pics,
                guess,
            },
            spec.ramp_steps,
            &spec.options,
        )
        .map_err(wrap)?;
        observer(b, &sol).map_err(wrap)?;

        let summary = BlockSummary::from_solution(b, &sol);
        out.max_law_residual = out.max_law_residual.max(summary.max_law_residual);
        out.blocks.push(summary);
        for (i, level) in sol.u.levels().enumerate() {
            let global = first + i;
            if i == 0 && b > 0 {
                continue;
            }
            out.all_times.push(global as f64 * spec.dt);
            record(level, &mut monitored_values).map_err(wrap)?;
            if keep(global) {
                out.times.push(global as f64 * spec.dt);
                if spec.storage != Storage::Full {
                    out.states.push(level.to_vec());
                }
            }
        }
        if spec.storage == Storage::Full {
            match &mut out.full {
                None => out.full = Some(sol.u.clone()),
                Some(f) => f.append_after_interface(&sol.u).map_err(wrap)?,
            }
        }
        state = sol.u.last_level().to_vec();
    }
    out.final_state = state;
    out.monitored = spec
        .monitored
        .iter()
        .zip(monitored_values)
        .map(|(f, v)| LawDrift::from_values(*f, v))
        .collect();
    Ok(out)
}

/// A block solved directly, or through prefixes of `ramp` more steps each.
/// Only the last prefix is the requested block; its fixed point is that of
/// the full block, the ramp only changes where the iteration starts.
fn solve_ramped<M: Model>(
    model: &M,
    engine: &DuhamelEngine,
    enforcement: &Enforcement,
    targets: &Targets,
    setup: BlockSetup<'_, M::S>,
    ramp: Option<usize>,
    options: &SolveOptions,
) -> Result<BlockSolution<M::S>> {
    let total = setup.n_levels;
    let step = match ramp {
        Some(k) if k > 0 && k + 1 < total => k.max(engine.min_levels() - 1),
        _ => return tdsr_solve_block(model, engine, enforcement, targets, setup, options),
    };
    let resize = |v: &[SpaceTimeField<M::S>], levels: usize| -> Vec<SpaceTimeField<M::S>> {
        v.iter()
            .map(|f| {
                let last = f.n_levels() - 1;
                SpaceTimeField::from_fn(f.n_points(), levels, |i, k| f.level(i.min(last))[k])
            })
            .collect()
    };
    let mut guess = setup.guess;
    let mut levels = (step + 1).min(total);
    loop {
        let sol = tdsr_solve_block(
            model,
            engine,
            enforcement,
            targets,
            BlockSetup {
                t_start: setup.t_start,
                dt: setup.dt,
                n_levels: levels,
                pics: setup.pics,
                guess: guess.as_deref().map(|g| resize(g, levels)),
            },
            options,
        )?;
        if levels == total {
            return Ok(sol);
        }
        if !sol.converged {
            return Err(TdsrError::NonConvergence {
                iterations: sol.history.len(),
                residual: sol.history.last().map_or(f64::NAN, |h| h.metric),
            });
        }
        guess = Some(sol.v);
        levels = (levels + step).min(total);
    }
}
