//! Reference integrator and error metrics used to cross-check TDSR runs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::contour::{phi1_closed, phi2_closed, phi3_closed, stable_eval};
use crate::error::{Result, TdsrError};
use crate::field::{max_abs, max_abs_diff, Scalar};
use crate::grid::{Grid, PeriodicGrid};
use crate::propagator::{phi_functions, LinearMatrix, LinearSymbol};
use crate::renorm::{evaluate_functional, Functional};

/// Errors below this are treated as round-off and excluded from order fits.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    /// `(dt, error)` pairs entering the fit, coarsest first.
    pub used: Vec<(f64, f64)>,
    /// Points dropped by the floor or by a non-monotone tail.
    pub trimmed: usize,
}

/// Least-squares slope of `log(error)` against `log(dt)`.
///
/// Points under [`ERROR_FLOOR`] are dropped; after sorting coarsest first,
/// the tail is cut at the first refinement that fails to reduce the error.
pub fn convergence_order(errors: &[f64], dts: &[f64]) -> Result<OrderFit> {
    if errors.len() != dts.len() {
        return Err(TdsrError::Dimension {
            expected: dts.len(),
            got: errors.len(),
        });
    }
    let mut pts: Vec<(f64, f64)> = dts.iter().copied().zip(errors.iter().copied()).collect();
    if pts.iter().any(|(dt, e)| !(*dt > 0.0) || !e.is_finite()) {
        return Err(TdsrError::InvalidParameter(
            "order fit needs positive steps and finite errors".into(),
        ));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = pts.len();
    pts.retain(|(_, e)| *e >= ERROR_FLOOR);
    let mut keep = pts.len().min(1);
    while keep < pts.len() && pts[keep].1 < pts[keep - 1].1 {
        keep += 1;
    }
    pts.truncate(keep);
    if pts.len() < 2 {
        return Err(TdsrError::InvalidParameter(format!(
            "order fit needs two usable points above the round-off floor, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|(d, e)| (d.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(OrderFit {
        slope: sxy / sxx,
        trimmed: total - pts.len(),
        used: pts,
    })
}

/// Drift of one functional along a time series. `rel` is `NaN` when the
/// initial value is zero.
#[derive(Clone, Debug)]
pub struct LawDrift {
    pub functional: Functional,
    pub values: Vec<f64>,
    pub abs: Vec<f64>,
    pub rel: Vec<f64>,
}

impl LawDrift {
    pub fn compute<'a, S: Scalar + 'a>(
        functional: Functional,
        levels: impl IntoIterator<Item = &'a [S]>,
        grid: &Grid,
    ) -> Result<Self> {
        let values: Vec<f64> = levels
            .into_iter()
            .map(|u| evaluate_functional(&functional, u, grid))
            .collect::<Result<_>>()?;
        Ok(Self::from_values(functional, values))
    }

    pub fn from_values(functional: Functional, values: Vec<f64>) -> Self {
        let q0 = values.first().copied().unwrap_or(0.0);
        let abs: Vec<f64> = values.iter().map(|q| (q - q0).abs()).collect();
        let rel = abs
            .iter()
            .map(|a| if q0 != 0.0 { a / q0.abs() } else { f64::NAN })
            .collect();
        Self {
            functional,
            values,
            abs,
            rel,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.abs.iter().fold(0.0, |m, x| m.max(*x))
    }

    pub fn max_rel(&self) -> f64 {
        self.rel.iter().fold(0.0, |m, x| m.max(*x))
    }
}

/// Solution error and invariant drift over a run.
#[derive(Clone, Debug, Default)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    /// `max_x |u - u_ex|` per time, when an exact solution exists.
    pub delta_u: Option<Vec<f64>>,
    pub laws: Vec<LawDrift>,
    pub order: Option<OrderFit>,
    pub runtime_s: f64,
}

impl ErrorReport {
    pub fn max_delta_u(&self) -> Option<f64> {
        self.delta_u.as_ref().map(|d| d.iter().fold(0.0f64, |m, x| m.max(*x)))
    }
}

/// `max_x |u - u_ex|` at each level.
pub fn solution_error<'a, S: Scalar + 'a>(
    computed: impl IntoIterator<Item = &'a [S]>,
    exact: impl IntoIterator<Item = Vec<S>>,
) -> Vec<f64> {
    computed
        .into_iter()
        .zip(exact)
        .map(|(u, e)| max_abs_diff(u, &e))
        .collect()
}

/// Output of a reference run: recorded times and states.
#[derive(Clone, Debug)]
pub struct ReferenceRun<S> {
    pub times: Vec<f64>,
    pub states: Vec<Vec<S>>,
}

impl<S: Scalar> ReferenceRun<S> {
    pub fn last(&self) -> &[S] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }
}

/// Step count, recording stride and blow-up threshold for a reference run.
#[derive(Clone, Copy, Debug)]
pub struct StepPlan {
    pub dt: f64,
    pub n_steps: usize,
    pub record_every: usize,
    pub blowup: f64,
}

impl StepPlan {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end >= 0.0) {
            return Err(TdsrError::InvalidParameter(format!(
                "reference run needs dt > 0 and T >= 0, got dt={dt}, T={t_end}"
            )));
        }
        Ok(Self {
            dt,
            n_steps: (t_end / dt).round() as usize,
            record_every: 1,
            blowup: 1e6,
        })
    }

    pub fn recording_every(mut self, stride: usize) -> Self {
        self.record_every = stride.max(1);
        self
    }

    pub fn with_blowup(mut self, threshold: f64) -> Self {
        self.blowup = threshold;
        self
    }
}

fn check_state<S: Scalar>(u: &[S], t: f64, blowup: f64) -> Result<()> {
    let m = max_abs(u);
    if !m.is_finite() || m > blowup || u.iter().any(|x| !x.is_finite()) {
        return Err(TdsrError::Instability { t, max_abs: m });
    }
    Ok(())
}

/// Nonlinear term of a reference problem, acting on physical-space fields.
pub type Nonlinear<'a, S> = dyn Fn(&[S]) -> Result<Vec<S>> + 'a;

/// ETDRK4 for a diagonal symbol, with the scalar contour engine used for
/// the `phi` coefficients near `z = 0`.
pub fn etdrk4_symbol<S: Scalar>(
    grid: &PeriodicGrid,
    symbol: &LinearSymbol,
    nonlinear: &Nonlinear<'_, S>,
    u0: &[S],
    plan: StepPlan,
) -> Result<ReferenceRun<S>> {
    if symbol.len() != grid.len() || u0.len() != grid.len() {
        return Err(TdsrError::Dimension {
            expected: grid.len(),
            got: u0.len().min(symbol.len()),
        });
    }
    let h = plan.dt;
    let n = grid.len();
    let mut e = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    let mut f3 = Vec::with_capacity(n);
    for l in symbol.values() {
        let z = l * h;
        let p1 = stable_eval(phi1_closed, z);
        let p2 = stable_eval(phi2_closed, z);
        let p3 = stable_eval(phi3_closed, z);
        e.push(z.exp());
        e2.push((z * 0.5).exp());
        q.push(stable_eval(phi1_closed, z * 0.5) * (0.5 * h));
        f1.push((p1 - 3.0 * p2 + 4.0 * p3) * h);
        f2.push((p2 - 2.0 * p3) * h);
        f3.push((4.0 * p3 - p2) * h);
    }
    let nhat = |v: &[C64]| -> Result<Vec<C64>> {
        let u: Vec<S> = grid.inverse(v)?;
        grid.forward(&nonlinear(&u)?)
    };
    let mut v = grid.forward(u0)?;
    let mut run = ReferenceRun {
        times: vec![0.0],
        states: vec![u0.to_vec()],
    };
    for step in 1..=plan.n_steps {
        let nv = nhat(&v)?;
        let a: Vec<C64> = (0..n).map(|k| e2[k] * v[k] + q[k] * nv[k]).collect();
        let na = nhat(&a)?;
        let b: Vec<C64> = (0..n).map(|k| e2[k] * v[k] + q[k] * na[k]).collect();
        let nb = nhat(&b)?;
        let c: Vec<C64> = (0..n)
            .map(|k| e2[k] * a[k] + q[k] * (2.0 * nb[k] - nv[k]))
            .collect();
        let nc = nhat(&c)?;
        for k in 0..n {
            v[k] = e[k] * v[k] + f1[k] * nv[k] + 2.0 * f2[k] * (na[k] + nb[k]) + f3[k] * nc[k];
        }
        let t = step as f64 * h;
        if step % plan.record_every == 0 || step == plan.n_steps {
            let u: Vec<S> = grid.inverse(&v)?;
            check_state(&u, t, plan.blowup)?;
            run.times.push(t);
            run.states.push(u);
        } else if v.iter().any(|x| !x.is_finite()) {
            return Err(TdsrError::Instability { t, max_abs: f64::INFINITY });
        }
    }
    Ok(run)
}

/// ETDRK4 for a dense real operator, coefficients from the matrix phi engine.
pub fn etdrk4_matrix(
    l: &LinearMatrix,
    nonlinear: &Nonlinear<'_, f64>,
    u0: &[f64],
    plan: StepPlan,
) -> Result<ReferenceRun<f64>> {
    if u0.len() != l.dim() {
        return Err(TdsrError::Dimension {
            expected: l.dim(),
            got: u0.len(),
        });
    }
    let h = plan.dt;
    let (full, half) = phi_functions(&l.scaled(h), 3, true)?;
    let half = half.expect("half-step bundle requested");
    let e = &full.exp;
    let e2 = &half.exp;
    let q: DMatrix<f64> = &half.phi[0] * (0.5 * h);
    let (p1, p2, p3) = (&full.phi[0], &full.phi[1], &full.phi[2]);
    let f1: DMatrix<f64> = (p1 - p2 * 3.0 + p3 * 4.0) * h;
    let f2: DMatrix<f64> = (p2 - p3 * 2.0) * h;
    let f3: DMatrix<f64> = (p3 * 4.0 - p2) * h;
    let nl = |x: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(DVector::from_vec(nonlinear(x.as_slice())?))
    };
    let mut v = DVector::from_column_slice(u0);
    let mut run = ReferenceRun {
        times: vec![0.0],
        states: vec![u0.to_vec()],
    };
    for step in 1..=plan.n_steps {
        let nv = nl(&v)?;
        let a = e2 * &v + &q * &nv;
        let na = nl(&a)?;
        let b = e2 * &v + &q * &na;
        let nb = nl(&b)?;
        let c = e2 * &a + &q * (&nb * 2.0 - &nv);
        let nc = nl(&c)?;
        v = e * &v + &f1 * &nv + &f2 * ((&na + &nb) * 2.0) + &f3 * &nc;
        let t = step as f64 * h;
        if step % plan.record_every == 0 || step == plan.n_steps {
            check_state(v.as_slice(), t, plan.blowup)?;
            run.times.push(t);
            run.states.push(v.as_slice().to_vec());
        } else if v.iter().any(|x| !x.is_finite()) {
            return Err(TdsrError::Instability { t, max_abs: f64::INFINITY });
        }
    }
    Ok(run)
}
