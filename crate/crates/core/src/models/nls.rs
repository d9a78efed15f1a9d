//! Cubic Schrödinger, `u_t = i ∇²u + i |u|² u`, in one or two dimensions.

use num_complex::Complex64 as C64;

use crate::driver::{LinearPart, Model};
use crate::error::{Result, TdsrError};
use crate::grid::{Grid, PeriodicGrid};
use crate::propagator::LinearSymbol;
use crate::renorm::Functional;

#[derive(Clone, Debug)]
pub struct Nls {
    grid: Grid,
    linear: LinearPart,
}

impl Nls {
    pub fn new(grid: PeriodicGrid) -> Self {
        let linear = LinearPart::Symbol(LinearSymbol::schrodinger(&grid));
        Self {
            grid: Grid::Periodic(grid),
            linear,
        }
    }

    pub fn periodic(&self) -> &PeriodicGrid {
        match &self.grid {
            Grid::Periodic(g) => g,
            Grid::Chebyshev(_) => unreachable!("NLS is built on a periodic grid"),
        }
    }

    pub fn invariants(&self) -> Vec<Functional> {
        vec![Functional::NlsPower, Functional::NlsHamiltonian]
    }
}

impl Model for Nls {
    type S = C64;

    fn name(&self) -> String {
        format!("nls{}d", self.grid.dimension())
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn linear(&self) -> &LinearPart {
        &self.linear
    }

    fn nonlinear(&self, u: &[C64]) -> Result<Vec<C64>> {
        let n: Vec<C64> = u.iter().map(|v| C64::i() * v.norm_sqr() * v).collect();
        let g = self.periodic();
        if g.dealiasing() {
            let mut s = g.forward(&n)?;
            g.dealias(&mut s);
            return g.inverse(&s);
        }
        Ok(n)
    }

    fn supports(&self, law: &Functional) -> bool {
        matches!(law, Functional::NlsPower | Functional::NlsHamiltonian)
    }
}

/// Petviashvili iteration parameters for the Townes profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TownesOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TownesOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500 }
    }
}

#[derive(Clone, Debug)]
pub struct TownesProfile {
    pub lambda: f64,
    pub u: Vec<f64>,
    /// `max |∇²U + U³ - λ²U|`.
    pub residual: f64,
    pub iterations: usize,
}

/// `max |∇²U + U³ - λ²U|` on a periodic grid.
pub fn townes_residual(grid: &PeriodicGrid, lambda: f64, u: &[f64]) -> Result<f64> {
    let mut lap = vec![0.0; u.len()];
    for a in 0..grid.dimension() {
        for (l, d) in lap.iter_mut().zip(grid.partial(u, a, 2)?) {
            *l += d;
        }
    }
    Ok(u.iter()
        .zip(&lap)
        .map(|(v, l)| (l + v.powi(3) - lambda * lambda * v).abs())
        .fold(0.0, f64::max))
}

/// Ground state of `∇²U + U³ = λ²U` by Petviashvili iteration with
/// stabilizing exponent 3/2, from a sech seed.
pub fn townes_profile(lambda: f64, grid: &PeriodicGrid, opts: TownesOptions) -> Result<TownesProfile> {
    if !(lambda > 0.0) {
        return Err(TdsrError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if grid.dimension() != 2 {
        return Err(TdsrError::InvalidParameter("the Townes profile is two-dimensional".into()));
    }
    let op: Vec<f64> = grid.wavenumber_sq().into_iter().map(|k2| lambda * lambda + k2).collect();
    let mut u: Vec<f64> = grid.sample(|x, y| 2.0 * lambda / (lambda * (x * x + y * y).sqrt()).cosh());
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let u_hat = grid.forward(&u)?;
        let n_hat = grid.forward(&u.iter().map(|v| v.powi(3)).collect::<Vec<_>>())?;
        let num: f64 = u_hat.iter().zip(&op).map(|(a, l)| l * a.norm_sqr()).sum();
        let den: f64 = u_hat.iter().zip(&n_hat).map(|(a, b)| (b * a.conj()).re).sum();
        if !(den > 0.0) {
            return Err(TdsrError::NonConvergence {
                iterations: it,
                residual,
            });
        }
        let m = (num / den).powf(1.5);
        let next: Vec<C64> = n_hat.iter().zip(&op).map(|(b, l)| b * (m / l)).collect();
        u = grid.inverse(&next)?;
        residual = townes_residual(grid, lambda, &u)?;
        if residual <= opts.tol {
            return Ok(TownesProfile {
                lambda,
                u,
                residual,
                iterations: it,
            });
        }
    }
    Err(TdsrError::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}
