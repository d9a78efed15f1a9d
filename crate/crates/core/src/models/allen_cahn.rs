//! Allen–Cahn, `u_t = D u_xx + γ(u - u³)`, on a Chebyshev grid with
//! Neumann or (homogenized) Dirichlet conditions.

use crate::driver::{Dissipation, LinearPart, Model};
use crate::error::Result;
use crate::grid::{ChebyshevGrid, Grid};
use crate::propagator::LinearMatrix;
use crate::renorm::{DissipationParams, Functional};

#[derive(Clone, Debug, PartialEq)]
pub enum AcBoundary {
    Neumann,
    /// Solved for `w = u - φ` with the affine lift `φ` of the boundary values.
    Dirichlet { left: f64, right: f64 },
}

#[derive(Clone, Debug)]
pub struct AllenCahn {
    grid: Grid,
    linear: LinearPart,
    pub d: f64,
    pub gamma: f64,
    pub boundary: AcBoundary,
    lift: Option<Vec<f64>>,
}

impl AllenCahn {
    /// `L = D·D D_0`, reaction wholly in `N`.
    pub fn neumann(grid: ChebyshevGrid, d: f64, gamma: f64) -> Self {
        let linear = LinearPart::Matrix(LinearMatrix::neumann_diffusion(&grid, d));
        Self {
            grid: Grid::Chebyshev(grid),
            linear,
            d,
            gamma,
            boundary: AcBoundary::Neumann,
            lift: None,
        }
    }

    /// `w_t = D w_xx + γ(w+φ) - γ(w+φ)³` with `w = 0` at both ends and the
    /// affine lift `φ` through `(x_l, left)` and `(x_r, right)`.
    pub fn homogenize_dirichlet(grid: ChebyshevGrid, d: f64, gamma: f64, left: f64, right: f64) -> Self {
        let x = grid.nodes().to_vec();
        let (xl, xr) = (x[0], x[x.len() - 1]);
        let lift = x.iter().map(|xi| left + (right - left) * (xi - xl) / (xr - xl)).collect();
        let linear = LinearPart::Matrix(LinearMatrix::dirichlet_diffusion(&grid, d));
        Self {
            grid: Grid::Chebyshev(grid),
            linear,
            d,
            gamma,
            boundary: AcBoundary::Dirichlet { left, right },
            lift: Some(lift),
        }
    }

    pub fn lift(&self) -> Option<&[f64]> {
        self.lift.as_deref()
    }

    /// `u` from the evolved variable.
    pub fn to_physical(&self, w: &[f64]) -> Vec<f64> {
        match &self.lift {
            Some(phi) => w.iter().zip(phi).map(|(a, b)| a + b).collect(),
            None => w.to_vec(),
        }
    }

    /// The evolved variable from `u`.
    pub fn from_physical(&self, u: &[f64]) -> Vec<f64> {
        match &self.lift {
            Some(phi) => u.iter().zip(phi).map(|(a, b)| a - b).collect(),
            None => u.to_vec(),
        }
    }

    pub fn chebyshev(&self) -> &ChebyshevGrid {
        match &self.grid {
            Grid::Chebyshev(g) => g,
            Grid::Periodic(_) => unreachable!("Allen–Cahn is built on a Chebyshev grid"),
        }
    }

    pub fn invariants(&self) -> Vec<Functional> {
        vec![Functional::AcL2]
    }
}

impl Model for AllenCahn {
    type S = f64;

    fn name(&self) -> String {
        match self.boundary {
            AcBoundary::Neumann => "allen_cahn_neumann".into(),
            AcBoundary::Dirichlet { .. } => "allen_cahn_dirichlet".into(),
        }
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn linear(&self) -> &LinearPart {
        &self.linear
    }

    /// `γ(u - u³)` at `u = w + φ`; zero on Dirichlet boundary nodes so `w`
    /// keeps its homogeneous values.
    fn nonlinear(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut n: Vec<f64> = match &self.lift {
            Some(phi) => w
                .iter()
                .zip(phi)
                .map(|(a, b)| {
                    let u = a + b;
                    self.gamma * (u - u * u * u)
                })
                .collect(),
            None => w.iter().map(|u| self.gamma * (u - u * u * u)).collect(),
        };
        if self.lift.is_some() {
            let last = n.len() - 1;
            n[0] = 0.0;
            n[last] = 0.0;
        }
        Ok(n)
    }

    fn supports(&self, _law: &Functional) -> bool {
        false
    }

    fn dissipation(&self) -> Option<Dissipation> {
        Some(Dissipation {
            params: DissipationParams {
                d: self.d,
                gamma: self.gamma,
            },
            lift: self.lift.clone(),
        })
    }
}

/// `0.5 - 0.5 tanh(ξ / (2√2 ε))`, `ξ = x - 3t/(√2 ε)`: exact for `D = 1`, `γ = 1/ε²`.
pub fn ac_travelling_exact(eps: f64, x: f64, t: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    let xi = x - 3.0 * t / (s2 * eps);
    0.5 - 0.5 * (xi / (2.0 * s2 * eps)).tanh()
}
