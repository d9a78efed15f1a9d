//! Korteweg–de Vries, `u_t = -α u u_x - ε² u_xxx`, on a periodic grid.

use crate::driver::{LinearPart, Model};
use crate::error::{Result, TdsrError};
use crate::grid::{Grid, PeriodicGrid};
use crate::propagator::LinearSymbol;
use crate::renorm::Functional;

#[derive(Clone, Debug)]
pub struct Kdv {
    grid: Grid,
    linear: LinearPart,
    pub alpha: f64,
    pub eps: f64,
}

impl Kdv {
    pub fn new(grid: PeriodicGrid, alpha: f64, eps: f64) -> Result<Self> {
        if grid.dimension() != 1 {
            return Err(TdsrError::InvalidParameter("KdV is one-dimensional".into()));
        }
        let linear = LinearPart::Symbol(LinearSymbol::kdv(&grid, eps));
        Ok(Self {
            grid: Grid::Periodic(grid),
            linear,
            alpha,
            eps,
        })
    }

    pub fn periodic(&self) -> &PeriodicGrid {
        match &self.grid {
            Grid::Periodic(g) => g,
            Grid::Chebyshev(_) => unreachable!("KdV is built on a periodic grid"),
        }
    }

    /// The invariants this model carries, for drift monitoring.
    pub fn invariants(&self) -> Vec<Functional> {
        if self.alpha == 1.0 {
            (1..=6).map(|order| Functional::Zk { order, eps: self.eps }).collect()
        } else {
            vec![
                Functional::KdvMass,
                Functional::KdvMomentum,
                Functional::KdvHamiltonian {
                    alpha: self.alpha,
                    eps: self.eps,
                },
            ]
        }
    }
}

impl Model for Kdv {
    type S = f64;

    fn name(&self) -> String {
        "kdv".into()
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn linear(&self) -> &LinearPart {
        &self.linear
    }

    /// Conservative form `-(α/2) (u²)_x`, differentiated spectrally.
    fn nonlinear(&self, u: &[f64]) -> Result<Vec<f64>> {
        let g = self.periodic();
        let u2: Vec<f64> = u.iter().map(|v| v * v).collect();
        let u2 = if g.dealiasing() {
            let mut s = g.forward(&u2)?;
            g.dealias(&mut s);
            g.inverse(&s)?
        } else {
            u2
        };
        let d = g.partial(&u2, 0, 1)?;
        Ok(d.into_iter().map(|v| -0.5 * self.alpha * v).collect())
    }

    fn supports(&self, law: &Functional) -> bool {
        match law {
            Functional::KdvMass | Functional::KdvMomentum => true,
            Functional::KdvHamiltonian { alpha, eps } => *alpha == self.alpha && *eps == self.eps,
            Functional::Zk { eps, .. } => self.alpha == 1.0 && *eps == self.eps,
            _ => false,
        }
    }
}

/// `2β² sech²(β(x - 4β²t))`, the soliton of `α = 6`, `ε = 1`.
pub fn kdv_soliton_exact(beta: f64, x: f64, t: f64) -> f64 {
    2.0 * beta * beta / (beta * (x - 4.0 * beta * beta * t)).cosh().powi(2)
}

/// Local residuals near the last stored level: `E1` of the equation and
/// `E2` of the momentum balance, time derivatives by five-level BDF4.
pub fn local_conservation_errors(
    levels: &[&[f64]],
    dt: f64,
    alpha: f64,
    eps: f64,
    grid: &PeriodicGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if levels.len() < 5 {
        return Err(TdsrError::InsufficientLevels {
            needed: 5,
            got: levels.len(),
        });
    }
    let tail = &levels[levels.len() - 5..];
    const W: [f64; 5] = [3.0, -16.0, 36.0, -48.0, 25.0];
    let bdf = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..tail[4].len())
            .map(|j| W.iter().zip(tail).map(|(w, l)| w * f(l[j])).sum::<f64>() / (12.0 * dt))
            .collect()
    };
    let u = tail[4];
    let ut = bdf(&|v| v);
    let et = bdf(&|v| 0.5 * v * v);
    let ux = grid.partial(u, 0, 1)?;
    let uxx = grid.partial(u, 0, 2)?;
    let uxxx = grid.partial(u, 0, 3)?;
    let e2 = eps * eps;
    let e1: Vec<f64> = (0..u.len())
        .map(|j| ut[j] + alpha * u[j] * ux[j] + e2 * uxxx[j])
        .collect();
    let flux: Vec<f64> = (0..u.len())
        .map(|j| alpha * u[j].powi(3) / 3.0 + e2 * (u[j] * uxx[j] - 0.5 * ux[j] * ux[j]))
        .collect();
    let fx = grid.partial(&flux, 0, 1)?;
    let e2v = (0..u.len()).map(|j| et[j] + fx[j]).collect();
    Ok((e1, e2v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::max_abs;

    #[test]
    fn soliton_values() {
        let b = 0.1f64.sqrt();
        assert!((kdv_soliton_exact(b, 0.0, 0.0) - 0.2).abs() < 1e-15);
        assert!((kdv_soliton_exact(b, 2.0, 5.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn soliton_residual_small() {
        let g = PeriodicGrid::centered_1d(2048, 100.0).unwrap();
        let m = Kdv::new(g.clone(), 6.0, 1.0).unwrap();
        let b = 0.1f64.sqrt();
        let t = 1.3;
        let u = g.sample(|x, _| kdv_soliton_exact(b, x, t));
        // u_t = -c u_x for a travelling wave with c = 4β²
        let ux = g.partial(&u, 0, 1).unwrap();
        let uxxx = g.partial(&u, 0, 3).unwrap();
        let n = m.nonlinear(&u).unwrap();
        let res: Vec<f64> = (0..u.len())
            .map(|j| -4.0 * b * b * ux[j] - (n[j] - uxxx[j]))
            .collect();
        assert!(max_abs(&res) < 1e-8);
    }

    #[test]
    fn nonlinearity_conserves_mass_and_momentum() {
        let g = PeriodicGrid::new_1d(256, 0.0, 2.0).unwrap();
        let m = Kdv::new(g.clone(), 1.0, 0.022).unwrap();
        let u = g.sample(|x, _| (std::f64::consts::PI * x).cos() + 0.3 * (3.0 * std::f64::consts::PI * x).sin());
        let n = m.nonlinear(&u).unwrap();
        assert!(g.integrate(&n).unwrap().abs() < 1e-14);
        let un: Vec<f64> = u.iter().zip(&n).map(|(a, b)| a * b).collect();
        assert!(g.integrate(&un).unwrap().abs() < 1e-12);
    }

    #[test]
    fn local_errors_vanish_for_constant_field() {
        let g = PeriodicGrid::centered_1d(64, 10.0).unwrap();
        let c = vec![0.7; 64];
        let levels: Vec<&[f64]> = vec![&c; 5];
        let (e1, e2) = local_conservation_errors(&levels, 0.1, 6.0, 1.0, &g).unwrap();
        assert!(max_abs(&e1) < 1e-13 && max_abs(&e2) < 1e-13);
        assert!(local_conservation_errors(&levels[..4], 0.1, 6.0, 1.0, &g).is_err());
    }

    #[test]
    fn local_errors_fourth_order_on_soliton() {
        // the domain must hold the tail below round-off, or the periodic
        // kink dominates the third derivative
        let g = PeriodicGrid::centered_1d(1024, 100.0).unwrap();
        let b = 0.1f64.sqrt();
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&dt| {
                let lv: Vec<Vec<f64>> = (0..5)
                    .map(|i| g.sample(|x, _| kdv_soliton_exact(b, x, 1.0 + i as f64 * dt)))
                    .collect();
                let refs: Vec<&[f64]> = lv.iter().map(|v| v.as_slice()).collect();
                max_abs(&local_conservation_errors(&refs, dt, 6.0, 1.0, &g).unwrap().0)
            })
            .collect();
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
    }
}
