//! Scalar Cauchy-contour evaluation of functions with a removable singularity
//! at the origin (`(e^z - 1)/z`-type quadrature and exponential-integrator
//! coefficients).
//!
//! Near `z = 0` the closed forms cancel catastrophically. There the value is
//! replaced by the mean of the closed form over a circle of radius one
//! centred at `z`, which equals `f(z)` by the Cauchy integral formula and is
//! evaluated with the periodic trapezoidal rule.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Below this modulus the contour mean replaces the closed form.
pub const Z_SWITCH: f64 = 0.5;

/// Points on the unit circle around `z`.
pub const CONTOUR_POINTS: usize = 32;

/// Mean of `f` over `points` equally spaced nodes of the unit circle centred at `z`.
///
/// For real `z` and `f` real on the real axis the nodes are paired with their
/// conjugates and only the upper half is evaluated.
pub fn contour_mean(f: impl Fn(Complex64) -> Complex64, z: Complex64, points: usize) -> Complex64 {
    let points = points.max(2);
    let node = |j: usize| {
        let theta = PI * (2 * j + 1) as f64 / points as f64;
        z + Complex64::from_polar(1.0, theta)
    };
    if z.im == 0.0 && points % 2 == 0 {
        let sum: f64 = (0..points / 2).map(|j| f(node(j)).re).sum();
        Complex64::new(2.0 * sum / points as f64, 0.0)
    } else {
        (0..points).map(|j| f(node(j))).sum::<Complex64>() / points as f64
    }
}

/// Closed form away from the origin, contour mean inside `|z| < z_switch`.
pub fn stable_eval(f: impl Fn(Complex64) -> Complex64, z: Complex64) -> Complex64 {
    if z.norm() >= Z_SWITCH {
        f(z)
    } else {
        contour_mean(f, z, CONTOUR_POINTS)
    }
}

/// `phi_1(z) = (e^z - 1)/z`.
pub fn phi1_closed(z: Complex64) -> Complex64 {
    (z.exp() - 1.0) / z
}

/// `phi_2(z) = (e^z - 1 - z)/z^2`.
pub fn phi2_closed(z: Complex64) -> Complex64 {
    (z.exp() - 1.0 - z) / (z * z)
}

/// `phi_3(z) = (e^z - 1 - z - z^2/2)/z^3`.
pub fn phi3_closed(z: Complex64) -> Complex64 {
    (z.exp() - 1.0 - z - 0.5 * z * z) / (z * z * z)
}
