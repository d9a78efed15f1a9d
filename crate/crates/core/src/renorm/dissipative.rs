//! Renormalization through the Allen–Cahn `L²` dissipation law.
//!
//! With `u = R v` and `p = r R²`, `r = ∫v²`, the rate equation for `∫u²`
//! becomes a scalar ODE for `p`, advanced by Crank–Nicolson.

use crate::error::{Result, TdsrError};
use crate::field::SpaceTimeField;
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationParams {
    pub d: f64,
    pub gamma: f64,
}

/// Coefficient and state series of one solve. Invariants: `p > 0`, `r > 0`.
#[derive(Clone, Debug, Default)]
pub struct DissipativeState {
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Per step, `|(p_{i+1} - p_i)/dt - (g_i + g_{i+1})/2|` relative to the
    /// largest of the three terms.
    pub rate_residual: Vec<f64>,
}

impl DissipativeState {
    pub fn max_rate_residual(&self) -> f64 {
        self.rate_residual.iter().fold(0.0, |m, x| m.max(*x))
    }
}

/// Moments of `v` at one level that define the rate `g(p)`.
struct LevelRate {
    r: f64,
    a: f64,
    b: f64,
    /// With a lift `φ`: `∫vφ(1-φ²)`, `∫v²(1-3φ²)`, `∫v³φ`, `∫v⁴`.
    lifted: Option<[f64; 4]>,
}

impl LevelRate {
    fn new(v: &[f64], grid: &Grid, params: DissipationParams, lift: Option<&[f64]>) -> Result<Self> {
        let vx = grid.partial(v, 0, 1)?;
        let r = grid.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>())?;
        let vx2 = grid.integrate(&vx.iter().map(|x| x * x).collect::<Vec<_>>())?;
        let v4 = grid.integrate(&v.iter().map(|x| x.powi(4)).collect::<Vec<_>>())?;
        let a = 2.0 * params.d * vx2 / r;
        let b = 2.0 * params.gamma * v4 / (r * r);
        let lifted = match lift {
            None => None,
            Some(phi) => {
                let m = |f: &dyn Fn(f64, f64) -> f64| -> Result<f64> {
                    grid.integrate(&v.iter().zip(phi).map(|(x, y)| f(*x, *y)).collect::<Vec<_>>())
                };
                Some([
                    m(&|x, y| x * y * (1.0 - y * y))?,
                    m(&|x, y| x * x * (1.0 - 3.0 * y * y))?,
                    m(&|x, y| x * x * x * y)?,
                    v4,
                ])
            }
        };
        Ok(Self { r, a, b, lifted })
    }

    /// `g(p)` and `g'(p)`.
    fn rate(&self, p: f64, gamma: f64) -> (f64, f64) {
        match self.lifted {
            None => (
                (-self.a + 2.0 * gamma) * p - self.b * p * p,
                -self.a + 2.0 * gamma - 2.0 * self.b * p,
            ),
            Some([m1, m2, m3, m4]) => {
                let rr = (p / self.r).sqrt();
                let h = rr * m1 + rr * rr * m2 - 3.0 * rr.powi(3) * m3 - rr.powi(4) * m4;
                let dh = m1 + 2.0 * rr * m2 - 9.0 * rr * rr * m3 - 4.0 * rr.powi(3) * m4;
                let dr_dp = if rr > 0.0 { 1.0 / (2.0 * rr * self.r) } else { 0.0 };
                (-self.a * p + 2.0 * gamma * h, -self.a + 2.0 * gamma * dh * dr_dp)
            }
        }
    }
}

/// `R(t_i) = sqrt(p_i / r_i)` with `p` advanced from `p0` by Crank–Nicolson.
///
/// Without a lift the implicit stage is a quadratic solved in closed form
/// (positive root); with a homogenizing lift `φ` the rate includes the lift
/// terms and the stage is solved by scalar Newton.
pub fn dissipative_renorm(
    v: &SpaceTimeField<f64>,
    grid: &Grid,
    params: DissipationParams,
    p0: f64,
    dt: f64,
    lift: Option<&[f64]>,
) -> Result<(Vec<f64>, DissipativeState)> {
    if !(p0 > 0.0) {
        return Err(TdsrError::Positivity { level: 0, p: p0 });
    }
    let gamma = params.gamma;
    let rates: Vec<LevelRate> = v
        .levels()
        .map(|vl| LevelRate::new(vl, grid, params, lift))
        .collect::<Result<_>>()?;
    for (i, lr) in rates.iter().enumerate() {
        if !(lr.r > 0.0) {
            return Err(TdsrError::Positivity { level: i, p: lr.r });
        }
    }
    let mut p = vec![p0];
    let mut residual = vec![];
    let h = 0.5 * dt;
    // the increment is the unknown, so neither the solve nor the identity
    // check cancels p_{i+1} against p_i
    for i in 0..rates.len() - 1 {
        let pi = p[i];
        let (gi, _) = rates[i].rate(pi, gamma);
        let next = &rates[i + 1];
        let delta = match next.lifted {
            None => {
                // h b (p+δ)^2 + (1 - h(2γ - a))(p+δ) - p - h g_i = 0 as a quadratic in δ
                let (g_at_p, _) = next.rate(pi, gamma);
                let qa = h * next.b;
                let qb = 2.0 * qa * pi + 1.0 - h * (2.0 * gamma - next.a);
                let q0 = -h * (g_at_p + gi);
                let disc = qb * qb - 4.0 * qa * q0;
                if !(disc >= 0.0) || !(qb > 0.0) {
                    return Err(TdsrError::Positivity { level: i + 1, p: pi + h * gi });
                }
                -2.0 * q0 / (qb + disc.sqrt())
            }
            Some(_) => {
                let mut d = dt * gi;
                for _ in 0..60 {
                    let (g, dg) = next.rate(pi + d, gamma);
                    let f = d - h * (gi + g);
                    let step = f / (1.0 - h * dg);
                    d -= step;
                    if !(pi + d > 0.0) {
                        return Err(TdsrError::Positivity { level: i + 1, p: pi + d });
                    }
                    if step.abs() <= 1e-16 * d.abs().max(f64::MIN_POSITIVE) {
                        break;
                    }
                }
                d
            }
        };
        let pn = pi + delta;
        if !(pn > 0.0) || !pn.is_finite() {
            return Err(TdsrError::Positivity { level: i + 1, p: pn });
        }
        let (gn, _) = next.rate(pn, gamma);
        let lhs = delta / dt;
        let scale = lhs.abs().max(gi.abs()).max(gn.abs()).max(f64::MIN_POSITIVE);
        residual.push((lhs - 0.5 * (gi + gn)).abs() / scale);
        p.push(pn);
    }
    let r_fac = p.iter().zip(&rates).map(|(pi, lr)| (pi / lr.r).sqrt()).collect();
    let state = DissipativeState {
        r: rates.iter().map(|l| l.r).collect(),
        a: rates.iter().map(|l| l.a).collect(),
        b: rates.iter().map(|l| l.b).collect(),
        p,
        rate_residual: residual,
    };
    Ok((r_fac, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChebyshevGrid;

    #[test]
    fn logistic_second_order() {
        // v spatially constant: a = 0, b = 2γ ∫v⁴/r² = 2γ/|Ω|
        let g = Grid::Chebyshev(ChebyshevGrid::new(8, -1.0, 1.0).unwrap());
        let (gamma, p0, t_end): (f64, f64, f64) = (1.5, 0.3, 1.0);
        let params = DissipationParams { d: 1.0, gamma };
        let b = 2.0 * gamma / 2.0;
        let exact = |t: f64| {
            let e = (2.0 * gamma * t).exp();
            2.0 * gamma * p0 * e / (2.0 * gamma + b * p0 * (e - 1.0))
        };
        let dts = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let n = (t_end / dt).round() as usize;
                let v = SpaceTimeField::from_fn(9, n + 1, |_, _| 1.0);
                let (_, st) = dissipative_renorm(&v, &g, params, p0, dt, None).unwrap();
                assert!(st.max_rate_residual() < 1e-14);
                (st.p[n] - exact(t_end)).abs()
            })
            .collect();
        let slope = crate::validation::convergence_order(&errs, &dts).unwrap().slope;
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn lift_zero_matches_closed_form() {
        let g = Grid::Chebyshev(ChebyshevGrid::new(16, -1.0, 1.0).unwrap());
        let params = DissipationParams { d: 0.1, gamma: 2.0 };
        let v = SpaceTimeField::from_fn(17, 6, |i, j| {
            let x = -(std::f64::consts::PI * j as f64 / 16.0).cos();
            (1.0 - x * x) * (1.0 + 0.1 * i as f64) + 0.2
        });
        let zero = vec![0.0; 17];
        let (r1, _) = dissipative_renorm(&v, &g, params, 0.5, 0.01, None).unwrap();
        let (r2, _) = dissipative_renorm(&v, &g, params, 0.5, 0.01, Some(&zero)).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn nonpositive_start_rejected() {
        let g = Grid::Chebyshev(ChebyshevGrid::new(8, -1.0, 1.0).unwrap());
        let v = SpaceTimeField::from_fn(9, 2, |_, _| 1.0);
        let params = DissipationParams { d: 1.0, gamma: 1.0 };
        assert!(matches!(
            dissipative_renorm(&v, &g, params, 0.0, 0.1, None),
            Err(TdsrError::Positivity { .. })
        ));
    }
}
