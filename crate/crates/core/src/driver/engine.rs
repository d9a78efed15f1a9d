//! Linear propagation and Duhamel integrals on the block time mesh, for
//! either kind of linear part.

use num_complex::Complex64 as C64;

use crate::error::{Result, TdsrError};
use crate::field::{Scalar, SpaceTimeField};
use crate::grid::{Grid, PeriodicGrid};
use crate::propagator::{LinearMatrix, LinearSymbol};
use crate::quadrature::{duhamel_series_symbol, filon_coefficients, FilonCoefficients, MatrixDuhamel};

/// The linear operator `L` of `u_t = L u + N(u)`.
#[derive(Clone, Debug)]
pub enum LinearPart {
    /// Diagonal in Fourier space; requires a periodic grid.
    Symbol(LinearSymbol),
    /// Dense, boundary conditions encoded in the rows.
    Matrix(LinearMatrix),
}

/// Precomputed weights for one time step: Filon–Simpson on the symbol path,
/// propagated trapezoidal weights on the matrix path.
#[derive(Clone, Debug)]
pub enum DuhamelEngine {
    Spectral {
        grid: PeriodicGrid,
        symbol: LinearSymbol,
        coeffs: FilonCoefficients,
    },
    Matrix(MatrixDuhamel),
}

impl DuhamelEngine {
    pub fn new(grid: &Grid, linear: &LinearPart, dt: f64) -> Result<Self> {
        match (grid, linear) {
            (Grid::Periodic(g), LinearPart::Symbol(s)) => {
                if s.len() != g.len() {
                    return Err(TdsrError::Dimension {
                        expected: g.len(),
                        got: s.len(),
                    });
                }
                Ok(DuhamelEngine::Spectral {
                    grid: g.clone(),
                    symbol: s.clone(),
                    coeffs: filon_coefficients(s, dt)?,
                })
            }
            (_, LinearPart::Matrix(l)) => {
                if l.dim() != grid.len() {
                    return Err(TdsrError::Dimension {
                        expected: grid.len(),
                        got: l.dim(),
                    });
                }
                Ok(DuhamelEngine::Matrix(MatrixDuhamel::new(l, dt)?))
            }
            (Grid::Chebyshev(_), LinearPart::Symbol(_)) => Err(TdsrError::InvalidParameter(
                "a Fourier symbol needs a periodic grid".into(),
            )),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            DuhamelEngine::Spectral { coeffs, .. } => coeffs.dt,
            DuhamelEngine::Matrix(m) => m.dt,
        }
    }

    /// Smallest block, in time levels, the quadrature can handle.
    pub fn min_levels(&self) -> usize {
        match self {
            DuhamelEngine::Spectral { .. } => 4,
            DuhamelEngine::Matrix(_) => 2,
        }
    }

    /// Levels `e^{t_i L} f`, `t_i = i dt`.
    pub fn propagate<S: Scalar>(&self, f: &[S], n_levels: usize) -> Result<SpaceTimeField<S>> {
        match self {
            DuhamelEngine::Spectral { grid, symbol, coeffs } => {
                let f_hat = grid.forward(f)?;
                let mut out = SpaceTimeField::zeros(f.len(), n_levels);
                for i in 0..n_levels {
                    let t = i as f64 * coeffs.dt;
                    let spec: Vec<C64> = f_hat
                        .iter()
                        .zip(symbol.values())
                        .map(|(a, l)| a * (l * t).exp())
                        .collect();
                    out.level_mut(i).copy_from_slice(&grid.inverse::<S>(&spec)?);
                }
                Ok(out)
            }
            DuhamelEngine::Matrix(m) => {
                if f.len() != m.dim() {
                    return Err(TdsrError::Dimension {
                        expected: m.dim(),
                        got: f.len(),
                    });
                }
                let (re, im) = split_parts(f);
                let pr = m.propagate(&re, n_levels);
                let pi = im.map(|im| m.propagate(&im, n_levels));
                Ok(join_parts(&pr, pi.as_ref()))
            }
        }
    }

    /// `I(t_i) = ∫_0^{t_i} e^{(t_i - τ)L} G(τ) dτ` at every level.
    pub fn duhamel<S: Scalar>(&self, g: &SpaceTimeField<S>) -> Result<SpaceTimeField<S>> {
        match self {
            DuhamelEngine::Spectral { grid, coeffs, .. } => {
                let mut g_hat = SpaceTimeField::<C64>::zeros(g.n_points(), g.n_levels());
                for (i, level) in g.levels().enumerate() {
                    g_hat.level_mut(i).copy_from_slice(&grid.forward(level)?);
                }
                let i_hat = duhamel_series_symbol(&g_hat, coeffs)?;
                let mut out = SpaceTimeField::zeros(g.n_points(), g.n_levels());
                for (i, level) in i_hat.levels().enumerate() {
                    out.level_mut(i).copy_from_slice(&grid.inverse::<S>(level)?);
                }
                Ok(out)
            }
            DuhamelEngine::Matrix(m) => {
                let re = SpaceTimeField::from_fn(g.n_points(), g.n_levels(), |i, j| g.level(i)[j].re());
                let ir = m.series(&re)?;
                let ii = if S::IS_COMPLEX {
                    let im = SpaceTimeField::from_fn(g.n_points(), g.n_levels(), |i, j| {
                        g.level(i)[j].to_complex().im
                    });
                    Some(m.series(&im)?)
                } else {
                    None
                };
                Ok(join_parts(&ir, ii.as_ref()))
            }
        }
    }
}

fn split_parts<S: Scalar>(f: &[S]) -> (Vec<f64>, Option<Vec<f64>>) {
    let re = f.iter().map(|v| v.re()).collect();
    let im = S::IS_COMPLEX.then(|| f.iter().map(|v| v.to_complex().im).collect());
    (re, im)
}

fn join_parts<S: Scalar>(re: &SpaceTimeField<f64>, im: Option<&SpaceTimeField<f64>>) -> SpaceTimeField<S> {
    SpaceTimeField::from_fn(re.n_points(), re.n_levels(), |i, j| {
        let r = re.level(i)[j];
        match im {
            Some(im) => S::from_complex(C64::new(r, im.level(i)[j])),
            None => S::from_real(r),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::max_abs_diff;
    use crate::grid::ChebyshevGrid;
    use crate::propagator::apply_semigroup_symbol;

    #[test]
    fn spectral_propagation_matches_semigroup() {
        let g = PeriodicGrid::centered_1d(64, 30.0).unwrap();
        let s = LinearSymbol::kdv(&g, 1.0);
        let e = DuhamelEngine::new(&Grid::Periodic(g.clone()), &LinearPart::Symbol(s.clone()), 0.1).unwrap();
        let f = g.sample(|x, _| (-x * x / 4.0).exp());
        let p = e.propagate(&f, 6).unwrap();
        let direct = apply_semigroup_symbol(&g, &s, 0.5, &f).unwrap();
        assert!(max_abs_diff(p.level(5), &direct) < 1e-14);
    }

    #[test]
    fn matrix_complex_split_is_linear() {
        let cg = ChebyshevGrid::new(12, -1.0, 1.0).unwrap();
        let l = LinearMatrix::neumann_diffusion(&cg, 0.2);
        let e = DuhamelEngine::new(&Grid::Chebyshev(cg.clone()), &LinearPart::Matrix(l), 0.05).unwrap();
        let re = cg.sample(|x| x.cos());
        let im = cg.sample(|x| (2.0 * x).sin());
        let z: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
        let pz = e.propagate(&z, 4).unwrap();
        let pr = e.propagate(&re, 4).unwrap();
        let pi = e.propagate(&im, 4).unwrap();
        for j in 0..re.len() {
            assert!((pz.level(3)[j] - C64::new(pr.level(3)[j], pi.level(3)[j])).norm() < 1e-15);
        }
    }

    #[test]
    fn symbol_on_chebyshev_rejected() {
        let cg = ChebyshevGrid::new(8, -1.0, 1.0).unwrap();
        let s = LinearSymbol::constant(9, C64::new(0.0, 0.0));
        assert!(DuhamelEngine::new(&Grid::Chebyshev(cg), &LinearPart::Symbol(s), 0.1).is_err());
    }
}
