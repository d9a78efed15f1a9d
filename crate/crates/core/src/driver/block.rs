//! The renormalized Duhamel fixed point on one time block.

use std::time::Instant;

use crate::error::{Result, TdsrError};
use crate::field::{max_abs, Scalar, SpaceTimeField};
use crate::grid::Grid;
use crate::renorm::{
    dissipative_renorm, evaluate_functional, solve_conservative, DissipationParams, DissipativeState, Functional,
    RenormDiagnostics,
};

use super::engine::{DuhamelEngine, LinearPart};
use super::split::PseudoICs;

/// An evolution equation `u_t = L u + N(u)` on a fixed grid.
pub trait Model {
    type S: Scalar;

    fn name(&self) -> String;
    fn grid(&self) -> &Grid;
    fn linear(&self) -> &LinearPart;
    fn nonlinear(&self, u: &[Self::S]) -> Result<Vec<Self::S>>;
    /// Whether `law` is a conserved quantity of this model.
    fn supports(&self, law: &Functional) -> bool;
    /// The `L²` dissipation law, for models that have one.
    fn dissipation(&self) -> Option<Dissipation> {
        None
    }
}

/// Coefficients of the dissipation law and the homogenizing lift, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct Dissipation {
    pub params: DissipationParams,
    pub lift: Option<Vec<f64>>,
}

/// What the renormalization factors enforce.
#[derive(Clone, Debug, PartialEq)]
pub enum Enforcement {
    /// One factor per conserved law.
    Conserved(Vec<Functional>),
    /// A single factor from the dissipation law.
    Dissipative,
}

impl Enforcement {
    pub fn n_factors(&self) -> usize {
        match self {
            Enforcement::Conserved(l) => l.len(),
            Enforcement::Dissipative => 1,
        }
    }

    /// Reject laws the model does not carry.
    pub fn check<M: Model>(&self, model: &M) -> Result<()> {
        match self {
            Enforcement::Conserved(laws) => {
                if laws.is_empty() {
                    return Err(TdsrError::InvalidParameter("no law to enforce".into()));
                }
                if laws.len() > 3 {
                    return Err(TdsrError::InvalidParameter(format!(
                        "at most three simultaneous laws, got {}",
                        laws.len()
                    )));
                }
                for law in laws {
                    if !model.supports(law) {
                        return Err(TdsrError::FunctionalMismatch {
                            kind: law.to_string(),
                            reason: format!("not a conserved quantity of {}", model.name()),
                        });
                    }
                }
                Ok(())
            }
            Enforcement::Dissipative => {
                if model.dissipation().is_none() || M::S::IS_COMPLEX {
                    return Err(TdsrError::FunctionalMismatch {
                        kind: Functional::AcL2.to_string(),
                        reason: format!("{} has no dissipation law", model.name()),
                    });
                }
                Ok(())
            }
        }
    }
}

/// Right-hand sides of the enforced laws.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Conserved(Vec<f64>),
    Dissipative { p0: f64 },
}

impl Targets {
    /// Values at `u0`.
    pub fn from_state<S: Scalar>(enforcement: &Enforcement, u0: &[S], grid: &Grid) -> Result<Self> {
        match enforcement {
            Enforcement::Conserved(laws) => Ok(Targets::Conserved(
                laws.iter()
                    .map(|l| evaluate_functional(l, u0, grid))
                    .collect::<Result<_>>()?,
            )),
            Enforcement::Dissipative => {
                let sq: Vec<f64> = u0.iter().map(|v| v.norm_sqr()).collect();
                Ok(Targets::Dissipative { p0: grid.integrate(&sq)? })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Converged when the successive max-norm difference is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Round-off floor relative to `max|u|`; below it a run that has not
    /// improved for `stagnation_window` iterations counts as converged.
    pub stagnation_rel: f64,
    pub stagnation_window: usize,
    /// Consecutive metric increases above the floor that signal divergence.
    pub divergence_window: usize,
    /// Evaluate enforced-law residuals at every iteration.
    pub record_law_residuals: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 200,
            stagnation_rel: 1e-11,
            stagnation_window: 3,
            divergence_window: 5,
            record_law_residuals: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub metric: f64,
    /// Per enforced law, max over levels of the relative residual (absolute
    /// when the target is zero); the rate-identity residual when dissipative.
    pub law_residual: Vec<f64>,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct BlockSolution<S> {
    pub t_start: f64,
    pub dt: f64,
    pub u: SpaceTimeField<S>,
    pub v: Vec<SpaceTimeField<S>>,
    /// `r[j][i]` is `R_j(t_i)`.
    pub r: Vec<Vec<f64>>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// Converged by the round-off stagnation rule rather than `tol`.
    pub stagnated: bool,
    pub diagnostics: RenormDiagnostics,
    pub dissipative: Option<DissipativeState>,
    /// `law_drift[m][i]`: residual of enforced law `m` at level `i`.
    pub law_drift: Vec<Vec<f64>>,
}

impl<S: Scalar> BlockSolution<S> {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn final_metric(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.metric)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.u.n_levels()).map(|i| self.t_start + i as f64 * self.dt).collect()
    }
}

/// `Σ_j R_j v_j` level by level.
pub fn compose<S: Scalar>(v: &[SpaceTimeField<S>], r: &[Vec<f64>]) -> SpaceTimeField<S> {
    let mut u = SpaceTimeField::zeros(v[0].n_points(), v[0].n_levels());
    for (vj, rj) in v.iter().zip(r) {
        u.add_scaled_levels(vj, rj);
    }
    u
}

/// Renormalization factors of one iterate.
pub struct Renormalized {
    pub r: Vec<Vec<f64>>,
    pub diagnostics: RenormDiagnostics,
    pub dissipative: Option<DissipativeState>,
}

/// Solve for `R_j(t_i)` given the auxiliary fields.
pub fn renormalize<M: Model>(
    model: &M,
    enforcement: &Enforcement,
    targets: &Targets,
    v: &[SpaceTimeField<M::S>],
    pics: &PseudoICs<M::S>,
    dt: f64,
    warm: Option<&[Vec<f64>]>,
) -> Result<Renormalized> {
    let out = match (enforcement, targets) {
        (Enforcement::Conserved(laws), Targets::Conserved(c)) => {
            let f = solve_conservative(laws, v, c, &pics.f, model.grid(), warm)?;
            Renormalized {
                r: f.r,
                diagnostics: f.diagnostics,
                dissipative: None,
            }
        }
        (Enforcement::Dissipative, Targets::Dissipative { p0 }) => {
            let d = model.dissipation().ok_or_else(|| TdsrError::FunctionalMismatch {
                kind: Functional::AcL2.to_string(),
                reason: "model has no dissipation law".into(),
            })?;
            let vr = SpaceTimeField::from_fn(v[0].n_points(), v[0].n_levels(), |i, j| v[0].level(i)[j].re());
            let (r, state) = dissipative_renorm(&vr, model.grid(), d.params, *p0, dt, d.lift.as_deref())?;
            Renormalized {
                r: vec![r],
                diagnostics: RenormDiagnostics::default(),
                dissipative: Some(state),
            }
        }
        _ => {
            return Err(TdsrError::InvalidParameter(
                "targets do not match the enforcement kind".into(),
            ))
        }
    };
    for (j, rj) in out.r.iter().enumerate() {
        if let Some(i) = rj.iter().position(|x| !x.is_finite() || *x == 0.0) {
            return Err(TdsrError::RootFailure {
                level: i,
                detail: format!("factor R_{} = {} is not usable", j + 1, rj[i]),
            });
        }
    }
    Ok(out)
}

/// The sub-Duhamel maps for a fixed block: propagated pseudo initial
/// conditions plus the telescoped Duhamel integrals of partial sums.
pub struct Kernel<'a, M: Model> {
    model: &'a M,
    engine: &'a DuhamelEngine,
    lin: Vec<SpaceTimeField<M::S>>,
}

impl<'a, M: Model> Kernel<'a, M> {
    pub fn new(model: &'a M, engine: &'a DuhamelEngine, pics: &PseudoICs<M::S>, n_levels: usize) -> Result<Self> {
        if n_levels < engine.min_levels() {
            return Err(TdsrError::InsufficientLevels {
                needed: engine.min_levels(),
                got: n_levels,
            });
        }
        let lin = pics
            .f
            .iter()
            .map(|f| engine.propagate(f, n_levels))
            .collect::<Result<_>>()?;
        Ok(Self { model, engine, lin })
    }

    /// `e^{tL} f_j` at every level.
    pub fn linear(&self) -> &[SpaceTimeField<M::S>] {
        &self.lin
    }

    fn nonlinear_series(&self, s: &SpaceTimeField<M::S>) -> Result<SpaceTimeField<M::S>> {
        let mut out = SpaceTimeField::zeros(s.n_points(), s.n_levels());
        for (i, level) in s.levels().enumerate() {
            out.level_mut(i).copy_from_slice(&self.model.nonlinear(level)?);
        }
        Ok(out)
    }

    /// `v_j <- (e^{tL} f_j + ∫ e^{(t-τ)L} [N(S_j) - N(S_{j-1})] dτ) / R_j`
    /// with partial sums `S_j = Σ_{l<=j} R_l v_l`.
    pub fn sweep(&self, v: &[SpaceTimeField<M::S>], r: &[Vec<f64>]) -> Result<Vec<SpaceTimeField<M::S>>> {
        let mut out = Vec::with_capacity(v.len());
        let mut partial = SpaceTimeField::zeros(v[0].n_points(), v[0].n_levels());
        let mut n_prev: Option<SpaceTimeField<M::S>> = None;
        for (j, (vj, rj)) in v.iter().zip(r).enumerate() {
            partial.add_scaled_levels(vj, rj);
            let n_cur = self.nonlinear_series(&partial)?;
            let g = match &n_prev {
                None => n_cur.clone(),
                Some(p) => &n_cur - p,
            };
            let mut next = self.engine.duhamel(&g)?;
            next.add_scaled_levels(&self.lin[j], &vec![1.0; rj.len()]);
            let inv: Vec<f64> = rj.iter().map(|x| 1.0 / x).collect();
            next.scale_levels(&inv);
            out.push(next);
            n_prev = Some(n_cur);
        }
        Ok(out)
    }

    /// `e^{tL} u0 + ∫ e^{(t-τ)L} N(u(τ)) dτ`, the untelescoped right-hand side.
    pub fn full_rhs(&self, u: &SpaceTimeField<M::S>) -> Result<SpaceTimeField<M::S>> {
        let mut out = self.engine.duhamel(&self.nonlinear_series(u)?)?;
        let ones = vec![1.0; u.n_levels()];
        for l in &self.lin {
            out.add_scaled_levels(l, &ones);
        }
        Ok(out)
    }
}

fn law_residuals<S: Scalar>(
    enforcement: &Enforcement,
    targets: &Targets,
    u: &SpaceTimeField<S>,
    grid: &Grid,
    dissipative: Option<&DissipativeState>,
) -> Result<Vec<Vec<f64>>> {
    match (enforcement, targets) {
        (Enforcement::Conserved(laws), Targets::Conserved(c)) => laws
            .iter()
            .zip(c)
            .map(|(law, cm)| {
                u.levels()
                    .map(|level| {
                        let q = evaluate_functional(law, level, grid)?;
                        Ok(if *cm != 0.0 { (q - cm).abs() / cm.abs() } else { (q - cm).abs() })
                    })
                    .collect()
            })
            .collect(),
        _ => {
            let mut res = vec![0.0];
            res.extend(dissipative.map(|d| d.rate_residual.clone()).unwrap_or_default());
            Ok(vec![res])
        }
    }
}

/// Block inputs: start time, step, level count and the initial auxiliary fields.
pub struct BlockSetup<'a, S> {
    pub t_start: f64,
    pub dt: f64,
    pub n_levels: usize,
    pub pics: &'a PseudoICs<S>,
    /// Defaults to `e^{tL} f_j`.
    pub guess: Option<Vec<SpaceTimeField<S>>>,
}

/// Iterate the sub-Duhamel maps with renormalization until the successive
/// difference reaches `tol`, stagnates at round-off, diverges, or `max_iter`
/// is reached (returned with `converged = false`).
pub fn tdsr_solve_block<M: Model>(
    model: &M,
    engine: &DuhamelEngine,
    enforcement: &Enforcement,
    targets: &Targets,
    setup: BlockSetup<'_, M::S>,
    opts: &SolveOptions,
) -> Result<BlockSolution<M::S>> {
    let n_factors = enforcement.n_factors();
    if setup.pics.len() != n_factors {
        return Err(TdsrError::Split(format!(
            "{} pseudo initial conditions for {} factors",
            setup.pics.len(),
            n_factors
        )));
    }
    if (engine.dt() - setup.dt).abs() > 1e-15 * setup.dt {
        return Err(TdsrError::InvalidParameter("engine built for a different time step".into()));
    }
    let start = Instant::now();
    let grid = model.grid();
    let kernel = Kernel::new(model, engine, setup.pics, setup.n_levels)?;
    let mut v = match setup.guess {
        Some(g) => {
            if g.len() != n_factors || g.iter().any(|f| f.n_levels() != setup.n_levels || f.n_points() != grid.len()) {
                return Err(TdsrError::InvalidParameter("initial guess has the wrong shape".into()));
            }
            g
        }
        None => kernel.linear().to_vec(),
    };
    let mut ren = renormalize(model, enforcement, targets, &v, setup.pics, setup.dt, None).map_err(|e| e.at_iteration(0))?;
    let mut u = compose(&v, &ren.r);

    let mut history = Vec::new();
    let mut converged = false;
    let mut stagnated = false;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut increases = 0usize;
    let mut prev = f64::INFINITY;
    let mut drift = Vec::new();
    for n in 1..=opts.max_iter {
        let v_new = kernel.sweep(&v, &ren.r).map_err(|e| e.at_iteration(n))?;
        let ren_new = renormalize(model, enforcement, targets, &v_new, setup.pics, setup.dt, Some(&ren.r))
            .map_err(|e| e.at_iteration(n))?;
        let u_new = compose(&v_new, &ren_new.r);
        let metric = u_new.max_abs_diff(&u);
        if !metric.is_finite() || !u_new.is_finite() {
            history.push(IterationRecord {
                n,
                metric,
                law_residual: vec![],
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            return Err(TdsrError::Divergence {
                iteration: n,
                tail: tail(&history),
            });
        }
        let last = opts.record_law_residuals || metric <= opts.tol;
        let law_residual = if last {
            drift = law_residuals(enforcement, targets, &u_new, grid, ren_new.dissipative.as_ref())?;
            drift.iter().map(|d| d.iter().fold(0.0f64, |m, x| m.max(*x))).collect()
        } else {
            vec![]
        };
        history.push(IterationRecord {
            n,
            metric,
            law_residual,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        v = v_new;
        ren = ren_new;
        u = u_new;

        let floor = opts.stagnation_rel * max_abs(u.as_slice());
        if metric < best {
            best = metric;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if metric <= opts.tol {
            converged = true;
            break;
        }
        if metric <= floor && since_best >= opts.stagnation_window {
            converged = true;
            stagnated = true;
            break;
        }
        increases = if metric > prev && metric > floor { increases + 1 } else { 0 };
        if increases >= opts.divergence_window {
            return Err(TdsrError::Divergence {
                iteration: n,
                tail: tail(&history),
            });
        }
        prev = metric;
    }
    if !opts.record_law_residuals || drift.is_empty() {
        drift = law_residuals(enforcement, targets, &u, grid, ren.dissipative.as_ref())?;
    }
    Ok(BlockSolution {
        t_start: setup.t_start,
        dt: setup.dt,
        u,
        v,
        r: ren.r,
        history,
        converged,
        stagnated,
        diagnostics: ren.diagnostics,
        dissipative: ren.dissipative,
        law_drift: drift,
    })
}

fn tail(history: &[IterationRecord]) -> Vec<f64> {
    history.iter().rev().take(6).rev().map(|h| h.metric).collect()
}
