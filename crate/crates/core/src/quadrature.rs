//! Duhamel integrals `I(t) = ∫_0^t e^{(t-τ)L} G(τ) dτ` on a uniform time mesh.
//!
//! Diagonal symbols use a Filon–Simpson recurrence (quadratic interpolant of
//! `G` integrated exactly against the exponential, fourth order overall).
//! Dense matrices use the exponential trapezoidal rule (second order).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::contour::stable_eval;
use crate::error::{Result, TdsrError};
use crate::field::SpaceTimeField;
use crate::propagator::{contour_phi_matrix, phi_functions, LinearMatrix, LinearSymbol, RadiusPolicy};

type C64 = Complex64;

// Closed forms divided by dt; valid away from z = 0.
fn q1(z: C64) -> C64 {
    let e = (-2.0 * z).exp();
    (-z * e - 2.0 * e + 2.0 * z * z - 3.0 * z + 2.0) / (2.0 * z.powu(3))
}
fn q2(z: C64) -> C64 {
    let e = (-2.0 * z).exp();
    (2.0 * z * e + 2.0 * e + 2.0 * z - 2.0) / z.powu(3)
}
fn q3(z: C64) -> C64 {
    let e = (-2.0 * z).exp();
    (-2.0 * z * z * e - 3.0 * z * e - 2.0 * e - z + 2.0) / (2.0 * z.powu(3))
}
fn q4(z: C64) -> C64 {
    let e = (-3.0 * z).exp();
    (2.0 * z * z * e + 6.0 * z * e + 6.0 * e + 6.0 * z.powu(3) + 12.0 * z - 11.0 * z * z - 6.0)
        / (6.0 * z.powu(4))
}
fn q5(z: C64) -> C64 {
    let e = (-3.0 * z).exp();
    (-3.0 * z * z * e - 8.0 * z * e - 6.0 * e + 6.0 * z * z - 10.0 * z + 6.0) / (2.0 * z.powu(4))
}
fn q6(z: C64) -> C64 {
    let e = (-3.0 * z).exp();
    (6.0 * z * z * e + 10.0 * z * e + 6.0 * e - 3.0 * z * z + 8.0 * z - 6.0) / (2.0 * z.powu(4))
}
fn q7(z: C64) -> C64 {
    let e = (-3.0 * z).exp();
    (-6.0 * z.powu(3) * e - 11.0 * z * z * e - 12.0 * z * e - 6.0 * e + 2.0 * z * z - 6.0 * z + 6.0)
        / (6.0 * z.powu(4))
}

const Q_CLOSED: [fn(C64) -> C64; 7] = [q1, q2, q3, q4, q5, q6, q7];

/// `q_j(z) * dt` for `j = 1..=7`, stabilized near `z = 0`.
pub fn filon_scalar(j: usize, z: C64, dt: f64) -> C64 {
    stable_eval(Q_CLOSED[j - 1], z) * dt
}

/// Filon–Simpson weights for every wavenumber of a symbol.
///
/// Requires `Re z` small enough that `e^{-3z}` is finite (true for the
/// dispersive symbols, which are purely imaginary).
#[derive(Clone, Debug)]
pub struct FilonCoefficients {
    pub dt: f64,
    pub z: Vec<C64>,
    /// `q[j - 1][k]` is `q_j` at wavenumber index `k`.
    pub q: [Vec<C64>; 7],
    exp1: Vec<C64>,
    exp2: Vec<C64>,
}

pub fn filon_coefficients(symbol: &LinearSymbol, dt: f64) -> Result<FilonCoefficients> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(TdsrError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let z: Vec<C64> = symbol.values().iter().map(|l| l * dt).collect();
    let q = std::array::from_fn(|j| z.iter().map(|&zk| filon_scalar(j + 1, zk, dt)).collect());
    let exp1 = z.iter().map(|zk| zk.exp()).collect();
    let exp2 = z.iter().map(|zk| (2.0 * zk).exp()).collect();
    Ok(FilonCoefficients {
        dt,
        z,
        q,
        exp1,
        exp2,
    })
}

impl FilonCoefficients {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Duhamel series in spectral space, one recurrence per wavenumber.
///
/// Level 0 is zero, level 1 comes from the cubic startup rule (needs levels
/// 0..=3 of `g_hat`), and each parity chain then advances two levels at a
/// time, the even chain seeded by level 0 and the odd chain by level 1.
pub fn duhamel_series_symbol(
    g_hat: &SpaceTimeField<C64>,
    coeffs: &FilonCoefficients,
) -> Result<SpaceTimeField<C64>> {
    let levels = g_hat.n_levels();
    if levels < 4 {
        return Err(TdsrError::InsufficientLevels {
            needed: 4,
            got: levels,
        });
    }
    let n = g_hat.n_points();
    if n != coeffs.len() {
        return Err(TdsrError::Dimension {
            expected: coeffs.len(),
            got: n,
        });
    }
    let mut out = SpaceTimeField::<C64>::zeros(n, levels);
    let [q1, q2, q3, q4, q5, q6, q7] = &coeffs.q;
    {
        let (g0, g1, g2, g3) = (g_hat.level(0), g_hat.level(1), g_hat.level(2), g_hat.level(3));
        let l1 = out.level_mut(1);
        for k in 0..n {
            let e = coeffs.exp1[k];
            l1[k] = q4[k] * e * g0[k]
                + (q5[k] * e - q1[k]) * g1[k]
                + (q6[k] * e - q2[k]) * g2[k]
                + (q7[k] * e - q3[k]) * g3[k];
        }
    }
    filon_march(g_hat, coeffs, &mut out);
    Ok(out)
}

/// Fill levels `2..` of `out` from levels 0 and 1 by the two-step recurrence.
pub fn filon_march(g_hat: &SpaceTimeField<C64>, coeffs: &FilonCoefficients, out: &mut SpaceTimeField<C64>) {
    let n = g_hat.n_points();
    let [q1, q2, q3, ..] = &coeffs.q;
    for i in 1..g_hat.n_levels() - 1 {
        let (gm, g, gp) = (g_hat.level(i - 1), g_hat.level(i), g_hat.level(i + 1));
        let prev = out.level(i - 1).to_vec();
        let next = out.level_mut(i + 1);
        for k in 0..n {
            next[k] = coeffs.exp2[k] * (prev[k] + q1[k] * gm[k] + q2[k] * g[k] + q3[k] * gp[k]);
        }
    }
}

/// `Ã(z) = (e^{-z} + z - 1)/z^2`.
fn a_tilde(z: C64) -> C64 {
    ((-z).exp() + z - 1.0) / (z * z)
}

/// `B̃(z) = (1 - z e^{-z} - e^{-z})/z^2`.
fn b_tilde(z: C64) -> C64 {
    (1.0 - z * (-z).exp() - (-z).exp()) / (z * z)
}

/// Trapezoidal weights `A = dt Ã(L̃)`, `B = dt B̃(L̃)` applied before propagation.
#[derive(Clone, Debug)]
pub struct TrapezoidalMatrixCoefficients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// `A`, `B` by the resolvent contour. Only usable when `e^{-L̃}` is moderate;
/// stiff dissipative matrices go through [`MatrixDuhamel`] instead.
pub fn trapezoidal_matrix_coefficients(
    l_tilde: &DMatrix<f64>,
    dt: f64,
    points: usize,
) -> Result<TrapezoidalMatrixCoefficients> {
    let fa = |z: C64| stable_eval(a_tilde, z);
    let fb = |z: C64| stable_eval(b_tilde, z);
    let policy = RadiusPolicy::default();
    Ok(TrapezoidalMatrixCoefficients {
        a: contour_phi_matrix(&fa, l_tilde, points, policy)? * dt,
        b: contour_phi_matrix(&fb, l_tilde, points, policy)? * dt,
    })
}

/// Exponential trapezoidal rule for a dense operator in propagated form:
/// `I_{i+1} = E I_i + P_A G_i + P_B G_{i+1}` with `E = e^{L̃}`,
/// `P_A = e^{L̃} A = dt (φ1 - φ2)(L̃)` and `P_B = e^{L̃} B = dt φ2(L̃)`.
#[derive(Clone, Debug)]
pub struct MatrixDuhamel {
    pub dt: f64,
    pub e: DMatrix<f64>,
    pub pa: DMatrix<f64>,
    pub pb: DMatrix<f64>,
}

impl MatrixDuhamel {
    pub fn new(l: &LinearMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(TdsrError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let (bundle, _) = phi_functions(&l.scaled(dt), 2, false)?;
        let pa = (&bundle.phi[0] - &bundle.phi[1]) * dt;
        let pb = &bundle.phi[1] * dt;
        Ok(Self {
            dt,
            e: bundle.exp,
            pa,
            pb,
        })
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// Levels `e^{t_i L} f` for `i = 0..n_levels`.
    pub fn propagate(&self, f: &[f64], n_levels: usize) -> SpaceTimeField<f64> {
        let mut out = SpaceTimeField::zeros(f.len(), n_levels);
        let mut v = DVector::from_column_slice(f);
        for i in 0..n_levels {
            if i > 0 {
                v = &self.e * &v;
            }
            out.level_mut(i).copy_from_slice(v.as_slice());
        }
        out
    }

    pub fn series(&self, g: &SpaceTimeField<f64>) -> Result<SpaceTimeField<f64>> {
        if g.n_points() != self.dim() {
            return Err(TdsrError::Dimension {
                expected: self.dim(),
                got: g.n_points(),
            });
        }
        let levels = g.n_levels();
        let mut out = SpaceTimeField::zeros(g.n_points(), levels);
        let mut acc = DVector::<f64>::zeros(g.n_points());
        let mut g_prev = DVector::from_column_slice(g.level(0));
        for i in 1..levels {
            let g_next = DVector::from_column_slice(g.level(i));
            acc = &self.e * &acc + &self.pa * &g_prev + &self.pb * &g_next;
            out.level_mut(i).copy_from_slice(acc.as_slice());
            g_prev = g_next;
        }
        Ok(out)
    }
}

/// Convenience wrapper with the same contract as the spectral path.
pub fn duhamel_series_matrix(g: &SpaceTimeField<f64>, l: &LinearMatrix, dt: f64) -> Result<SpaceTimeField<f64>> {
    MatrixDuhamel::new(l, dt)?.series(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Gauss–Legendre nodes and weights on [-1, 1] by Newton on P_n.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    }

    /// ∫_0^{m dt} e^{-τ L} ℓ(τ) dτ for a Lagrange basis polynomial on nodes 0..=m.
    fn moment(l: C64, dt: f64, m: usize, j: usize) -> C64 {
        let gl = gauss_legendre(60);
        let t_end = m as f64 * dt;
        gl.iter()
            .map(|(x, w)| {
                let tau = 0.5 * t_end * (x + 1.0);
                let mut basis = 1.0;
                for k in 0..=m {
                    if k != j {
                        basis *= (tau - k as f64 * dt) / ((j as f64 - k as f64) * dt);
                    }
                }
                (-tau * l).exp() * basis * (0.5 * t_end * w)
            })
            .sum()
    }

    #[test]
    fn zero_symbol_limits() {
        let dt = 0.3;
        let want = [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0, 3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0];
        for (j, w) in want.iter().enumerate() {
            let got = filon_scalar(j + 1, C64::new(0.0, 0.0), dt);
            assert!((got - w * dt).norm() < 1e-12, "q{}", j + 1);
        }
    }

    #[test]
    fn coefficients_match_moment_integrals() {
        let dt = 0.1;
        for l in [C64::new(0.0, 20.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, 0.1)] {
            let z = l * dt;
            for j in 0..3 {
                let want = moment(l, dt, 2, j);
                let got = filon_scalar(j + 1, z, dt);
                assert!((got - want).norm() < 1e-12, "q{} at z={z}", j + 1);
            }
            for j in 0..4 {
                let want = moment(l, dt, 3, j);
                let got = filon_scalar(j + 4, z, dt);
                assert!((got - want).norm() < 1e-12, "q{} at z={z}", j + 4);
            }
        }
    }

    #[test]
    fn branch_switch_is_continuous() {
        for j in 1..=7 {
            for s in 0..200 {
                let z = C64::from_polar(crate::contour::Z_SWITCH, 2.0 * PI * s as f64 / 200.0);
                let closed = Q_CLOSED[j - 1](z);
                let contour = crate::contour::contour_mean(Q_CLOSED[j - 1], z, 32);
                assert!((closed - contour).norm() < 1e-11, "q{j} at {z}");
            }
        }
    }

    fn scalar_series(l: C64, dt: f64, g: impl Fn(f64) -> C64, levels: usize) -> Vec<C64> {
        let sym = LinearSymbol::constant(1, l);
        let coeffs = filon_coefficients(&sym, dt).unwrap();
        let gf = SpaceTimeField::from_fn(1, levels, |i, _| g(i as f64 * dt));
        duhamel_series_symbol(&gf, &coeffs)
            .unwrap()
            .levels()
            .map(|v| v[0])
            .collect()
    }

    #[test]
    fn constant_integrand_without_operator() {
        let dt = 0.1;
        let out = scalar_series(C64::new(0.0, 0.0), dt, |_| C64::new(1.0, 0.0), 11);
        for (i, v) in out.iter().enumerate() {
            assert!((v - C64::new(i as f64 * dt, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn insufficient_levels() {
        let sym = LinearSymbol::constant(1, C64::new(0.0, 1.0));
        let coeffs = filon_coefficients(&sym, 0.1).unwrap();
        let g = SpaceTimeField::<C64>::zeros(1, 3);
        assert!(matches!(
            duhamel_series_symbol(&g, &coeffs),
            Err(TdsrError::InsufficientLevels { .. })
        ));
    }

    #[test]
    fn fourth_order_on_manufactured_problem() {
        let mut errs = vec![];
        let dts: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        for dt in dts {
            let n = (1.0 / dt).round() as usize;
            let out = scalar_series(C64::new(-1.0, 0.0), dt, |t| C64::new((-t).exp(), 0.0), n + 1);
            let err = out
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let t = i as f64 * dt;
                    (v.re - t * (-t).exp()).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let slope = crate::validation::convergence_order(&errs, &dts).unwrap().slope;
        assert!((slope - 4.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn recurrence_restart_consistency() {
        // Restarting at an even level with the carried integral reproduces the one-pass series.
        let l = C64::new(0.0, 3.0);
        let dt = 0.05;
        let g = |t: f64| C64::new((2.0 * t).cos(), t);
        let full = scalar_series(l, dt, g, 21);
        let split = 10;
        let restarted = scalar_series(l, dt, |t| g(t + split as f64 * dt), 11);
        for i in 0..=10 {
            let carried = (l * (i as f64 * dt)).exp() * full[split];
            let err = (carried + restarted[i] - full[split + i]).norm();
            // restart uses its own startup, so agreement is to quadrature accuracy
            assert!(err < 1e-6, "level {i}: {err}");
        }
    }

    #[test]
    fn march_restart_with_carried_values_is_exact() {
        let sym = LinearSymbol::constant(2, C64::new(0.0, 7.0));
        let dt = 0.05;
        let coeffs = filon_coefficients(&sym, dt).unwrap();
        let g = SpaceTimeField::from_fn(2, 31, |i, j| C64::new((i as f64 * dt + j as f64).sin(), 0.5));
        let full = duhamel_series_symbol(&g, &coeffs).unwrap();
        let s = 12;
        let tail_g = SpaceTimeField::from_levels((s..31).map(|i| g.level(i).to_vec()).collect()).unwrap();
        let mut tail = SpaceTimeField::zeros(2, 31 - s);
        tail.level_mut(0).copy_from_slice(full.level(s));
        tail.level_mut(1).copy_from_slice(full.level(s + 1));
        filon_march(&tail_g, &coeffs, &mut tail);
        for i in 0..31 - s {
            assert!(crate::field::max_abs_diff(tail.level(i), full.level(s + i)) < 1e-12);
        }
    }

    #[test]
    fn trapezoid_scalar_values() {
        let l = DMatrix::from_element(1, 1, 1.0);
        let c = trapezoidal_matrix_coefficients(&l, 1.0, 64).unwrap();
        assert!((c.a[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((c.b[(0, 0)] - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-12);
        let z = DMatrix::<f64>::zeros(3, 3);
        let c = trapezoidal_matrix_coefficients(&z, 0.2, 64).unwrap();
        assert!((c.a - DMatrix::identity(3, 3) * 0.1).amax() < 1e-13);
        assert!((c.b - DMatrix::identity(3, 3) * 0.1).amax() < 1e-13);
    }

    #[test]
    fn trapezoid_contour_matches_direct_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let l = (&m + m.transpose()) * 0.5;
        let c = trapezoidal_matrix_coefficients(&l, 1.0, 64).unwrap();
        let id = DMatrix::<f64>::identity(6, 6);
        let em = crate::propagator::matrix_exponential(&(-&l)).unwrap();
        let inv = l.clone().try_inverse().unwrap();
        let inv2 = &inv * &inv;
        let a = &inv2 * (&em + &l - &id);
        let b = &inv2 * (&id - &l * &em - &em);
        assert!((c.a - a).amax() < 1e-10);
        assert!((c.b - b).amax() < 1e-10);
    }

    #[test]
    fn propagated_weights_match_contour_weights() {
        let g = crate::grid::ChebyshevGrid::new(12, -1.0, 1.0).unwrap();
        let l = LinearMatrix::neumann_diffusion(&g, 0.01);
        let dt = 0.05;
        let md = MatrixDuhamel::new(&l, dt).unwrap();
        let c = trapezoidal_matrix_coefficients(&l.scaled(dt), dt, 64).unwrap();
        assert!((&md.e * &c.a - &md.pa).amax() < 1e-12);
        assert!((&md.e * &c.b - &md.pb).amax() < 1e-12);
    }

    #[test]
    fn trapezoid_exact_for_linear_integrand() {
        let l = LinearMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let dt = 0.1;
        let g = SpaceTimeField::from_fn(2, 11, |i, _| i as f64 * dt);
        let out = duhamel_series_matrix(&g, &l, dt).unwrap();
        for i in 0..11 {
            let t = i as f64 * dt;
            assert!((out.level(i)[0] - 0.5 * t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn trapezoid_second_order_on_diagonal() {
        let l = LinearMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]))).unwrap();
        let dts: [f64; 3] = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let n = (1.0 / dt).round() as usize;
                // G(t) = (cos t, 1)
                let g = SpaceTimeField::from_fn(2, n + 1, |i, j| if j == 0 { (i as f64 * dt).cos() } else { 1.0 });
                let out = duhamel_series_matrix(&g, &l, dt).unwrap();
                let t: f64 = 1.0;
                // ∫ e^{-(t-τ)} cos τ dτ = (cos t + sin t - e^{-t})/2 ; ∫ e^{-2(t-τ)} dτ = (1 - e^{-2t})/2
                let e0 = (out.last_level()[0] - 0.5 * (t.cos() + t.sin() - (-t).exp())).abs();
                let e1 = (out.last_level()[1] - 0.5 * (1.0 - (-2.0 * t).exp())).abs();
                e0.max(e1)
            })
            .collect();
        // constant component is integrated exactly; the cosine component drives the rate
        let slope = crate::validation::convergence_order(&errs, &dts).unwrap().slope;
        assert!((slope - 2.0).abs() < 0.15, "slope {slope}");
    }
}
