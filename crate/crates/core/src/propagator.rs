//! The linear semigroup `e^{tL}`: diagonal Fourier symbols for periodic and
//! decaying problems, dense matrices for Chebyshev discretizations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, TdsrError};
use crate::field::Scalar;
use crate::grid::{ChebyshevGrid, PeriodicGrid};

/// Fourier symbol `L̂(k)` on a periodic grid's flattened spectral indices.
#[derive(Clone, Debug)]
pub struct LinearSymbol {
    values: Vec<Complex64>,
}

impl LinearSymbol {
    pub fn from_values(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    /// `L = -eps^2 d^3/dx^3`, symbol `i eps^2 k^3`.
    pub fn kdv(grid: &PeriodicGrid, eps: f64) -> Self {
        let e2 = eps * eps;
        let values = grid
            .wavenumbers(0, true)
            .into_iter()
            .map(|k| Complex64::new(0.0, e2 * k * k * k))
            .collect();
        Self { values }
    }

    /// `L = i ∇²`, symbol `-i |k|^2`.
    pub fn schrodinger(grid: &PeriodicGrid) -> Self {
        let values = grid
            .wavenumber_sq()
            .into_iter()
            .map(|k2| Complex64::new(0.0, -k2))
            .collect();
        Self { values }
    }

    /// Constant symbol (manufactured tests).
    pub fn constant(len: usize, value: Complex64) -> Self {
        Self {
            values: vec![value; len],
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn exp(&self, t: f64) -> Vec<Complex64> {
        self.values.iter().map(|l| (l * t).exp()).collect()
    }
}

/// `e^{t L} f` through the spectral representation.
pub fn apply_semigroup_symbol<S: Scalar>(
    grid: &PeriodicGrid,
    symbol: &LinearSymbol,
    t: f64,
    field: &[S],
) -> Result<Vec<S>> {
    if symbol.len() != grid.len() {
        return Err(TdsrError::Dimension {
            expected: grid.len(),
            got: symbol.len(),
        });
    }
    let mut spec = grid.forward(field)?;
    for (s, l) in spec.iter_mut().zip(symbol.values()) {
        *s *= (l * t).exp();
    }
    grid.inverse(&spec)
}

/// Dense linear operator with the boundary conditions encoded in its rows.
#[derive(Clone, Debug)]
pub struct LinearMatrix {
    l: DMatrix<f64>,
}

impl LinearMatrix {
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        if l.nrows() != l.ncols() {
            return Err(TdsrError::Dimension {
                expected: l.nrows(),
                got: l.ncols(),
            });
        }
        Ok(Self { l })
    }

    /// `coeff * D D_0`: homogeneous Neumann second derivative.
    pub fn neumann_diffusion(grid: &ChebyshevGrid, coeff: f64) -> Self {
        let l = grid.d() * grid.d0() * coeff;
        Self { l }
    }

    /// `coeff * D^2` on interior rows; boundary rows are zero so homogeneous
    /// Dirichlet values are held fixed.
    pub fn dirichlet_diffusion(grid: &ChebyshevGrid, coeff: f64) -> Self {
        let mut l = grid.d() * grid.d() * coeff;
        let n = l.nrows();
        l.row_mut(0).fill(0.0);
        l.row_mut(n - 1).fill(0.0);
        Self { l }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L̃ = dt L`.
    pub fn scaled(&self, dt: f64) -> DMatrix<f64> {
        &self.l * dt
    }
}

/// Upper bound used to reject exponentials that would overflow or need an
/// unreasonable number of squarings.
pub const DEFAULT_NORM_CAP: f64 = 1e13;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn squarings_for(norm: f64, target: f64) -> u32 {
    if norm <= target {
        0
    } else {
        (norm / target).log2().ceil() as u32
    }
}

/// `e^{A}` by scaling and squaring with a diagonal [6/6] Padé approximant.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    matrix_exponential_capped(a, DEFAULT_NORM_CAP)
}

pub fn matrix_exponential_capped(a: &DMatrix<f64>, cap: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let norm = one_norm(a);
    if !norm.is_finite() || norm > cap {
        return Err(TdsrError::Stiffness { norm, cap });
    }
    let s = squarings_for(norm, 0.5);
    let z = a / 2f64.powi(s as i32);
    // c_j = (2m - j)! m! / ((2m)! j! (m - j)!), m = 6
    const M: usize = 6;
    let mut c = [1.0; M + 1];
    for j in 1..=M {
        c[j] = c[j - 1] * (M + 1 - j) as f64 / (j as f64 * (2 * M + 1 - j) as f64);
    }
    let mut num = DMatrix::<f64>::identity(n, n);
    let mut den = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for (j, cj) in c.iter().enumerate().skip(1) {
        power = &power * &z;
        num += &power * *cj;
        if j % 2 == 0 {
            den += &power * *cj;
        } else {
            den -= &power * *cj;
        }
    }
    let mut e = den
        .lu()
        .solve(&num)
        .ok_or_else(|| TdsrError::Stiffness { norm, cap })?;
    for _ in 0..s {
        e = &e * &e;
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(TdsrError::Stiffness { norm, cap });
    }
    Ok(e)
}

/// Circle geometry for [`contour_phi_matrix`].
#[derive(Clone, Copy, Debug)]
pub enum RadiusPolicy {
    /// Centre at the centroid of the Gershgorin disc centres; radius
    /// `max(factor * enclosing_radius, min_radius)`.
    Gershgorin { factor: f64, min_radius: f64 },
    /// Explicit circle; rejected unless it strictly contains every Gershgorin disc.
    Fixed { center: f64, radius: f64 },
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy::Gershgorin {
            factor: 2.0,
            min_radius: 1.0,
        }
    }
}

/// Default node count on the contour before refinement.
pub const DEFAULT_CONTOUR_POINTS: usize = 64;
const MAX_CONTOUR_POINTS: usize = 4096;
const CONTOUR_TOL: f64 = 1e-12;

/// Centroid of Gershgorin centres and the radius of the smallest circle about
/// it containing every disc.
pub fn gershgorin_circle(a: &DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    let center = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64;
    let radius = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            (a[(i, i)] - center).abs() + off
        })
        .fold(0.0, f64::max);
    (center, radius)
}

fn contour_sum(
    phi: &dyn Fn(Complex64) -> Complex64,
    a: &DMatrix<f64>,
    center: f64,
    radius: f64,
    points: usize,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    // nodes at theta_j = pi (2j + 1) / M come in conjugate pairs; sum the upper half
    for j in 0..points / 2 {
        let theta = PI * (2 * j + 1) as f64 / points as f64;
        let offset = Complex64::from_polar(radius, theta);
        let zeta = Complex64::new(center, 0.0) + offset;
        let mut shifted = -ac.clone();
        for i in 0..n {
            shifted[(i, i)] += zeta;
        }
        let resolvent = shifted.lu().try_inverse().ok_or_else(|| {
            TdsrError::Contour(format!("resolvent singular at contour node {zeta}"))
        })?;
        acc += resolvent * (phi(zeta) * offset);
    }
    Ok(acc.map(|c| 2.0 * c.re / points as f64))
}

/// `(1/2πi) ∮ phi(ζ) (ζI - A)^{-1} dζ` on a circle, trapezoidal rule with
/// node doubling until successive results agree to `1e-12` (relative).
///
/// `phi` must be analytic inside the circle and real on the real axis; the
/// result is the real part.
pub fn contour_phi_matrix(
    phi: &dyn Fn(Complex64) -> Complex64,
    a: &DMatrix<f64>,
    points: usize,
    policy: RadiusPolicy,
) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(TdsrError::Dimension {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(TdsrError::InvalidParameter("matrix has non-finite entries".into()));
    }
    let (g_center, g_radius) = gershgorin_circle(a);
    let (center, radius) = match policy {
        RadiusPolicy::Gershgorin { factor, min_radius } => {
            (g_center, (factor * g_radius).max(min_radius))
        }
        RadiusPolicy::Fixed { center, radius } => {
            let n = a.nrows();
            let needed = (0..n)
                .map(|i| {
                    let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
                    (a[(i, i)] - center).abs() + off
                })
                .fold(0.0, f64::max);
            if radius <= needed {
                return Err(TdsrError::Contour(format!(
                    "circle of radius {radius} about {center} does not enclose the Gershgorin discs (need > {needed})"
                )));
            }
            (center, radius)
        }
    };
    let mut m = points.max(4);
    m += m % 2;
    let mut current = contour_sum(phi, a, center, radius, m)?;
    while m < MAX_CONTOUR_POINTS {
        m *= 2;
        let next = contour_sum(phi, a, center, radius, m)?;
        let scale = next.amax().max(1.0);
        let diff = (&next - &current).amax();
        current = next;
        if diff <= CONTOUR_TOL * scale {
            return Ok(current);
        }
    }
    Err(TdsrError::Contour(format!(
        "trapezoidal contour sum did not settle with {MAX_CONTOUR_POINTS} nodes"
    )))
}

/// `e^{Z}` and `phi_1..phi_K(Z)` for one matrix.
#[derive(Clone, Debug)]
pub struct PhiBundle {
    pub exp: DMatrix<f64>,
    /// `phi[k - 1] = phi_k(Z)`.
    pub phi: Vec<DMatrix<f64>>,
}

impl PhiBundle {
    /// Taylor series `phi_k(Z) = Σ_j Z^j / (j + k)!`, for `||Z||_1 <= 1/2`.
    fn taylor(z: &DMatrix<f64>, order: usize) -> Self {
        const TERMS: usize = 20;
        let n = z.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let mut exp = id.clone();
        let mut phi: Vec<DMatrix<f64>> = (1..=order)
            .map(|k| &id * (1.0 / factorial(k)))
            .collect();
        let mut power = id;
        for j in 1..=TERMS {
            power = &power * z;
            exp += &power * (1.0 / factorial(j));
            for (k, p) in phi.iter_mut().enumerate() {
                *p += &power * (1.0 / factorial(j + k + 1));
            }
        }
        Self { exp, phi }
    }

    /// Bundle at `2Z` from the bundle at `Z`:
    /// `phi_k(2Z) = 2^{-k} [e^Z phi_k(Z) + Σ_{j=1..k} phi_j(Z)/(k-j)!]`.
    fn doubled(&self) -> Self {
        let exp = &self.exp * &self.exp;
        let phi = (1..=self.phi.len())
            .map(|k| {
                let mut acc = &self.exp * &self.phi[k - 1];
                for j in 1..=k {
                    acc += &self.phi[j - 1] * (1.0 / factorial(k - j));
                }
                acc * 0.5f64.powi(k as i32)
            })
            .collect();
        Self { exp, phi }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `e^{L̃}` and `phi_1..phi_order(L̃)` (plus the same at `L̃/2` on request)
/// by scaling to `||·||_1 <= 1/2`, a Taylor sum there, and exact doubling.
///
/// Stable for stiff dissipative matrices where the closed forms and any
/// contour enclosing the spectrum would overflow.
pub fn phi_functions(
    l_tilde: &DMatrix<f64>,
    order: usize,
    want_half: bool,
) -> Result<(PhiBundle, Option<PhiBundle>)> {
    let norm = one_norm(l_tilde);
    if !norm.is_finite() || norm > DEFAULT_NORM_CAP {
        return Err(TdsrError::Stiffness {
            norm,
            cap: DEFAULT_NORM_CAP,
        });
    }
    let s = squarings_for(norm, 0.5).max(1);
    let z = l_tilde / 2f64.powi(s as i32);
    let mut bundle = PhiBundle::taylor(&z, order);
    let mut half = None;
    for step in 0..s {
        if want_half && step == s - 1 {
            half = Some(bundle.clone());
        }
        bundle = bundle.doubled();
    }
    let finite = bundle.exp.iter().all(|v| v.is_finite())
        && bundle.phi.iter().all(|p| p.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(TdsrError::Stiffness {
            norm,
            cap: DEFAULT_NORM_CAP,
        });
    }
    Ok((bundle, half))
}

/// Repeated application of a one-step propagator: level `i` is `E^i f`.
pub fn propagate_levels(e: &DMatrix<f64>, f: &[f64], n_steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut v = DVector::from_column_slice(f);
    out.push(f.to_vec());
    for _ in 0..n_steps {
        v = e * v;
        out.push(v.as_slice().to_vec());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{stable_eval, phi1_closed};

    fn symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert!((matrix_exponential(&z).unwrap() - DMatrix::identity(4, 4)).amax() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 0.5, 2.0]));
        let e = matrix_exponential(&d).unwrap();
        for (i, a) in [-3.0f64, 0.5, 2.0].iter().enumerate() {
            assert!((e[(i, i)] - a.exp()).abs() < 1e-13 * a.exp().max(1.0));
        }
    }

    #[test]
    fn expm_matches_eigendecomposition() {
        let a = symmetric(8, 3) * 3.0;
        let eig = a.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
        let oracle = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        let e = matrix_exponential(&a).unwrap();
        assert!((e - &oracle).amax() < 1e-12 * oracle.amax());
    }

    #[test]
    fn expm_stiffness_cap() {
        let a = DMatrix::from_element(2, 2, 1e20);
        assert!(matches!(
            matrix_exponential(&a),
            Err(TdsrError::Stiffness { .. })
        ));
    }

    #[test]
    fn contour_identity_map() {
        let a = symmetric(5, 9);
        let r = contour_phi_matrix(&|z| z, &a, 64, RadiusPolicy::default()).unwrap();
        assert!((r - a).amax() < 1e-12);
    }

    #[test]
    fn contour_diagonal_exponential() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let r = contour_phi_matrix(&|z: Complex64| (-z).exp(), &a, 64, RadiusPolicy::default())
            .unwrap();
        assert!((r[(0, 0)] - (-1.0f64).exp()).abs() < 1e-11);
        assert!((r[(1, 1)] - (-2.0f64).exp()).abs() < 1e-11);
        assert!(r[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn contour_rejects_small_circle() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0]));
        let err = contour_phi_matrix(
            &|z| z,
            &a,
            64,
            RadiusPolicy::Fixed {
                center: 0.0,
                radius: 2.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, TdsrError::Contour(_)));
    }

    #[test]
    fn contour_refinement_is_stable() {
        let a = symmetric(6, 4);
        let f = |z: Complex64| stable_eval(phi1_closed, z);
        let r64 = contour_phi_matrix(&f, &a, 64, RadiusPolicy::default()).unwrap();
        let r128 = contour_phi_matrix(&f, &a, 128, RadiusPolicy::default()).unwrap();
        assert!((r64 - r128).amax() < 1e-12);
    }

    #[test]
    fn phi_engine_matches_eigendecomposition() {
        let a = symmetric(7, 11) * 10.0 - DMatrix::identity(7, 7) * 60.0;
        let (b, half) = phi_functions(&a, 3, true).unwrap();
        let half = half.unwrap();
        let eig = a.clone().symmetric_eigen();
        let apply = |f: &dyn Fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            &eig.eigenvectors * d * eig.eigenvectors.transpose()
        };
        let phi = |k: usize, x: f64| -> f64 {
            let z = Complex64::new(x, 0.0);
            match k {
                1 => stable_eval(crate::contour::phi1_closed, z).re,
                2 => stable_eval(crate::contour::phi2_closed, z).re,
                _ => stable_eval(crate::contour::phi3_closed, z).re,
            }
        };
        assert!((&b.exp - apply(&|x| x.exp())).amax() < 1e-12);
        for k in 1..=3 {
            let want = apply(&|x| phi(k, x));
            assert!((&b.phi[k - 1] - &want).amax() < 1e-12, "phi_{k}");
            let want_half = apply(&|x| phi(k, 0.5 * x));
            assert!((&half.phi[k - 1] - &want_half).amax() < 1e-12, "half phi_{k}");
        }
    }

    #[test]
    fn semigroup_property_matrix() {
        let g = ChebyshevGrid::new(24, -1.0, 1.0).unwrap();
        let l = LinearMatrix::neumann_diffusion(&g, 0.1);
        let e1 = matrix_exponential(&l.scaled(0.3)).unwrap();
        let e2 = matrix_exponential(&l.scaled(0.5)).unwrap();
        let e12 = matrix_exponential(&l.scaled(0.8)).unwrap();
        assert!((&e1 * &e2 - e12).amax() < 1e-10);
    }

    #[test]
    fn kdv_symbol_is_odd_imaginary() {
        let g = PeriodicGrid::centered_1d(32, 10.0).unwrap();
        let s = LinearSymbol::kdv(&g, 1.0);
        assert_eq!(s.values()[0], Complex64::new(0.0, 0.0));
        for m in 1..16 {
            assert_eq!(s.values()[m].re, 0.0);
            assert!((s.values()[m] + s.values()[32 - m]).norm() < 1e-12);
        }
    }
}
