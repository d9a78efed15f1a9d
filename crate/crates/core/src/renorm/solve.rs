//! Algebraic solves for the factors `R_j(t_i)` of conservative problems.

use nalgebra::{DMatrix, DVector};

use super::functional::{Functional, LawPoly};
use crate::error::{Result, TdsrError};
use crate::field::{max_abs, Scalar, SpaceTimeField};
use crate::grid::Grid;

/// Roots with `|im| <= REAL_ROOT_TOL * (1 + |re|)` count as real.
pub const REAL_ROOT_TOL: f64 = 1e-10;
/// Certificate threshold relative to `max|f_j|`.
pub const SELECTION_TOL: f64 = 1e-8;
pub const NEWTON_TOL: f64 = 1e-13;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Debug, Default)]
pub struct RenormDiagnostics {
    /// `max|R_j(0) v_j(·,0) - f_j| / max|f_j|` per factor.
    pub certificate: Vec<f64>,
    /// Max over levels of the relative law residual, per law.
    pub residual_max: Vec<f64>,
    /// Newton iterations per level (multi-law solves only).
    pub newton_iterations: Vec<usize>,
    /// The t = 0 certificate rejected the default root and the alternative was used.
    pub root_switched: bool,
    /// Levels where the laws had no exact solution and the closest
    /// (least-squares) factors were used instead.
    pub inexact_levels: usize,
}

/// `r[j][i] = R_j(t_i)`.
#[derive(Clone, Debug)]
pub struct RenormFactors {
    pub r: Vec<Vec<f64>>,
    pub diagnostics: RenormDiagnostics,
}

impl RenormFactors {
    pub fn n_factors(&self) -> usize {
        self.r.len()
    }

    pub fn n_levels(&self) -> usize {
        self.r.first().map_or(0, Vec::len)
    }

    pub fn at(&self, level: usize) -> Vec<f64> {
        self.r.iter().map(|rj| rj[level]).collect()
    }

    /// Level-major view: `out[i][j] = R_j(t_i)`.
    pub fn by_level(&self) -> Vec<Vec<f64>> {
        (0..self.n_levels()).map(|i| self.at(i)).collect()
    }
}

fn certificate<S: Scalar>(r0: f64, v0: &[S], f: &[S]) -> f64 {
    let scale = max_abs(f).max(f64::MIN_POSITIVE);
    v0.iter()
        .zip(f)
        .fold(0.0f64, |m, (v, fj)| m.max((*v * r0 - *fj).abs()))
        / scale
}

fn law_scale(p: &LawPoly, c: f64, r: &[f64]) -> f64 {
    if c != 0.0 {
        c.abs()
    } else {
        p.magnitude(r).max(f64::MIN_POSITIVE)
    }
}

/// Real roots of `c[0] + c[1] x + ... + c[d] x^d` via companion-matrix eigenvalues.
pub fn real_polynomial_roots(c: &[f64]) -> Vec<f64> {
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg] == 0.0 {
        deg -= 1;
    }
    if deg == 0 {
        return vec![];
    }
    if deg == 1 {
        return vec![-c[0] / c[1]];
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let mut roots: Vec<f64> = comp
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= REAL_ROOT_TOL * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    // one Newton polish on the original polynomial
    for x in roots.iter_mut() {
        let (mut p, mut dp) = (0.0, 0.0);
        for k in (0..=deg).rev() {
            dp = dp * *x + p;
            p = p * *x + c[k];
        }
        if dp != 0.0 {
            let step = p / dp;
            if step.is_finite() && step.abs() < 1e-6 * (1.0 + x.abs()) {
                *x -= step;
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

fn polys_at<S: Scalar>(laws: &[Functional], v: &[SpaceTimeField<S>], level: usize, grid: &Grid) -> Result<Vec<LawPoly>> {
    let slices: Vec<&[S]> = v.iter().map(|vj| vj.level(level)).collect();
    laws.iter().map(|law| LawPoly::build(law, &slices, grid)).collect()
}

/// Dispatch on the number and kind of laws.
pub fn solve_conservative<S: Scalar>(
    laws: &[Functional],
    v: &[SpaceTimeField<S>],
    c: &[f64],
    f: &[Vec<S>],
    grid: &Grid,
    warm: Option<&[Vec<f64>]>,
) -> Result<RenormFactors> {
    let n = laws.len();
    if v.len() != n || c.len() != n || f.len() != n || n == 0 {
        return Err(TdsrError::InvalidParameter(format!(
            "{n} laws need as many auxiliary fields, constants and pseudo initial conditions (got {}, {}, {})",
            v.len(),
            c.len(),
            f.len()
        )));
    }
    let canon: Vec<Functional> = laws.iter().map(Functional::canonical).collect();
    match (n, canon.as_slice()) {
        (1, _) => solve_single_law(&laws[0], &v[0], c[0], &f[0], grid),
        (2, [Functional::KdvMass, Functional::KdvMomentum]) => {
            solve_two_law_mass_momentum(&v[0], &v[1], c[0], c[1], &f[1], grid)
        }
        _ => solve_multi_law_newton(laws, v, c, f, grid, warm),
    }
}

/// One law, one factor: closed forms for linear and pure quadratic laws,
/// polynomial roots otherwise (certificate at t = 0, continuity afterwards).
pub fn solve_single_law<S: Scalar>(
    law: &Functional,
    v: &SpaceTimeField<S>,
    c: f64,
    f: &[S],
    grid: &Grid,
) -> Result<RenormFactors> {
    let mut r: Vec<f64> = Vec::with_capacity(v.n_levels());
    let mut residual: f64 = 0.0;
    for i in 0..v.n_levels() {
        let p = LawPoly::build(law, &[v.level(i)], grid)?;
        let [c1, c2, c3, c4] = p.univariate();
        let ri = match p.degree() {
            1 => {
                if c1 == 0.0 {
                    return Err(TdsrError::RootFailure {
                        level: i,
                        detail: format!("{law}: vanishing denominator"),
                    });
                }
                c / c1
            }
            2 if c1 == 0.0 => {
                let ratio = c / c2;
                if !(ratio > 0.0) {
                    return Err(TdsrError::Sign { level: i, ratio });
                }
                ratio.sqrt()
            }
            _ => {
                let roots: Vec<f64> = real_polynomial_roots(&[-c, c1, c2, c3, c4])
                    .into_iter()
                    .filter(|x| *x != 0.0)
                    .collect();
                if roots.is_empty() {
                    return Err(TdsrError::RootFailure {
                        level: i,
                        detail: format!("{law}: no real root of {c4:e} R^4 + {c3:e} R^3 + {c2:e} R^2 + {c1:e} R - {c:e}"),
                    });
                }
                let key = |x: &f64| -> f64 {
                    if i == 0 {
                        certificate(*x, v.level(0), f)
                    } else {
                        (*x - r[i - 1]).abs()
                    }
                };
                roots
                    .iter()
                    .copied()
                    .min_by(|a, b| key(a).partial_cmp(&key(b)).unwrap())
                    .unwrap()
            }
        };
        residual = residual.max((p.eval(&[ri]) - c).abs() / law_scale(&p, c, &[ri]));
        r.push(ri);
    }
    let cert = certificate(r[0], v.level(0), f);
    Ok(RenormFactors {
        r: vec![r],
        diagnostics: RenormDiagnostics {
            certificate: vec![cert],
            residual_max: vec![residual],
            ..Default::default()
        },
    })
}

/// Mass and momentum with two factors, reduced to a quadratic in `R_2`.
///
/// The `+` root is taken unless its t = 0 certificate fails and the other
/// root's passes; the chosen branch is kept for all levels.
pub fn solve_two_law_mass_momentum<S: Scalar>(
    v1: &SpaceTimeField<S>,
    v2: &SpaceTimeField<S>,
    c1: f64,
    c2: f64,
    f2: &[S],
    grid: &Grid,
) -> Result<RenormFactors> {
    let levels = v1.n_levels();
    let mut coeffs = Vec::with_capacity(levels);
    let mut inexact = 0;
    for i in 0..levels {
        let a: Vec<f64> = v1.level(i).iter().map(|x| x.re()).collect();
        let b: Vec<f64> = v2.level(i).iter().map(|x| x.re()).collect();
        let a1 = grid.integrate(&a)?;
        let a2 = grid.integrate(&b)?;
        let a3 = grid.integrate(&a.iter().map(|x| x * x).collect::<Vec<_>>())?;
        let a4 = grid.integrate(&b.iter().map(|x| x * x).collect::<Vec<_>>())?;
        let a5 = grid.integrate(&a.iter().zip(&b).map(|(x, y)| x * y).collect::<Vec<_>>())?;
        if a1 == 0.0 {
            return Err(TdsrError::RootFailure {
                level: i,
                detail: "mass of the first auxiliary field vanishes".into(),
            });
        }
        let mu1 = a3 * a2 * a2 + a4 * a1 * a1 - 2.0 * a1 * a2 * a5;
        let mu2 = 2.0 * a1 * a5 * c1 - 2.0 * a2 * a3 * c1;
        let mu3 = a3 * c1 * c1 - c2 * a1 * a1;
        let mut disc = mu2 * mu2 - 4.0 * mu1 * mu3;
        if mu1 == 0.0 || !disc.is_finite() {
            return Err(TdsrError::RootFailure {
                level: i,
                detail: format!("quadratic for R2 is degenerate (mu = {mu1:e}, {mu2:e}, {mu3:e})"),
            });
        }
        // an iterate far from the fixed point can lose the real pair; the
        // double root minimizes the momentum mismatch along the mass line
        if disc < 0.0 {
            disc = 0.0;
            inexact += 1;
        }
        coeffs.push((a1, a2, mu1, mu2, disc.sqrt()));
    }
    let root = |i: usize, sign: f64| {
        let (a1, a2, mu1, mu2, sq) = coeffs[i];
        let r2 = (-mu2 + sign * sq) / (2.0 * mu1);
        ((c1 - a2 * r2) / a1, r2)
    };
    let cert_plus = certificate(root(0, 1.0).1, v2.level(0), f2);
    let cert_minus = certificate(root(0, -1.0).1, v2.level(0), f2);
    let sign = if cert_plus > SELECTION_TOL && cert_minus < cert_plus { -1.0 } else { 1.0 };
    let (r1, r2): (Vec<f64>, Vec<f64>) = (0..levels).map(|i| root(i, sign)).unzip();
    let residual = two_law_residuals(v1, v2, c1, c2, &r1, &r2, grid)?;
    Ok(RenormFactors {
        diagnostics: RenormDiagnostics {
            certificate: vec![f64::NAN, if sign > 0.0 { cert_plus } else { cert_minus }],
            residual_max: residual,
            newton_iterations: vec![],
            root_switched: sign < 0.0,
            inexact_levels: inexact,
        },
        r: vec![r1, r2],
    })
}

fn two_law_residuals<S: Scalar>(
    v1: &SpaceTimeField<S>,
    v2: &SpaceTimeField<S>,
    c1: f64,
    c2: f64,
    r1: &[f64],
    r2: &[f64],
    grid: &Grid,
) -> Result<Vec<f64>> {
    let mut res = vec![0.0f64; 2];
    let laws = [Functional::KdvMass, Functional::KdvMomentum];
    for i in 0..r1.len() {
        for (m, law) in laws.iter().enumerate() {
            let p = LawPoly::build(law, &[v1.level(i), v2.level(i)], grid)?;
            let r = [r1[i], r2[i]];
            let c = [c1, c2][m];
            res[m] = res[m].max((p.eval(&r) - c).abs() / law_scale(&p, c, &r));
        }
    }
    Ok(res)
}

/// Newton's method on `Q_m(Σ R_j v_j) = C_m` level by level.
///
/// Each level starts from `warm` (the previous iterate's factors) when
/// given, else level 0 from the least-squares fit of `R_j v_j(·,0)` to `f_j`
/// and later levels from the previous level. Steps are minimum-norm, so with
/// near-parallel auxiliary fields the factors move as little as possible.
pub fn solve_multi_law_newton<S: Scalar>(
    laws: &[Functional],
    v: &[SpaceTimeField<S>],
    c: &[f64],
    f: &[Vec<S>],
    grid: &Grid,
    warm: Option<&[Vec<f64>]>,
) -> Result<RenormFactors> {
    let n = laws.len();
    let levels = v[0].n_levels();
    let mut r_levels: Vec<Vec<f64>> = Vec::with_capacity(levels);
    let mut iterations = Vec::with_capacity(levels);
    let mut residual = vec![0.0f64; n];
    let mut inexact = 0;
    for i in 0..levels {
        let polys = polys_at(laws, v, i, grid)?;
        let warm_i = warm
            .filter(|w| w.len() == n && w.iter().all(|wj| wj.len() == levels))
            .map(|w| w.iter().map(|wj| wj[i]).collect::<Vec<f64>>())
            .filter(|r| r.iter().all(|x| x.is_finite() && *x != 0.0));
        let mut r: Vec<f64> = if let Some(r) = warm_i {
            r
        } else if i == 0 {
            v.iter()
                .zip(f)
                .map(|(vj, fj)| {
                    let v0 = vj.level(0);
                    let num: f64 = v0.iter().zip(fj).map(|(a, b)| (*a * b.conj()).re()).sum();
                    let den: f64 = v0.iter().map(|a| a.norm_sqr()).sum();
                    if den > 0.0 { num / den } else { 1.0 }
                })
                .collect()
        } else {
            r_levels[i - 1].clone()
        };
        let rel_res = |r: &[f64]| -> Vec<f64> {
            polys
                .iter()
                .zip(c)
                .map(|(p, cm)| (p.eval(r) - cm) / law_scale(p, *cm, r))
                .collect()
        };
        let mut history = vec![];
        let mut it = 0;
        let norm_of = |r: &[f64]| rel_res(r).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        loop {
            let norm = norm_of(&r);
            history.push(norm);
            if norm <= NEWTON_TOL {
                break;
            }
            let stalled = history.len() >= 3 && norm >= history[history.len() - 3] && norm <= 1e-11;
            if stalled {
                break;
            }
            if it == NEWTON_MAX_ITER || !norm.is_finite() {
                return Err(TdsrError::NewtonFailure {
                    level: i,
                    iterations: it,
                    history,
                });
            }
            // rows scaled like the residual so the laws weigh equally
            let scale: Vec<f64> = polys.iter().zip(c).map(|(p, cm)| law_scale(p, *cm, &r)).collect();
            let rhs = DVector::from_iterator(n, polys.iter().zip(c).zip(&scale).map(|((p, cm), s)| (cm - p.eval(&r)) / s));
            let grads: Vec<Vec<f64>> = polys.iter().map(|p| p.grad(&r)).collect();
            let jac = DMatrix::from_fn(n, n, |m, k| grads[m][k] / scale[m]);
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            if !(smax > 0.0) || !smax.is_finite() {
                return Err(TdsrError::SingularJacobian { level: i });
            }
            // minimum-norm step: proportional auxiliary fields leave a flat direction
            let step = svd
                .solve(&rhs, 1e-12 * smax)
                .map_err(|_| TdsrError::SingularJacobian { level: i })?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = r.iter().zip(step.iter()).map(|(a, s)| a + lambda * s).collect();
                let tn = norm_of(&trial);
                if tn.is_finite() && tn < norm {
                    r = trial;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            it += 1;
            if !accepted {
                // a least-squares stationary point with no exact solution nearby
                inexact += 1;
                break;
            }
        }
        for (m, x) in rel_res(&r).iter().enumerate() {
            residual[m] = residual[m].max(x.abs());
        }
        iterations.push(it);
        r_levels.push(r);
    }
    let cert = (0..n).map(|j| certificate(r_levels[0][j], v[j].level(0), &f[j])).collect();
    Ok(RenormFactors {
        r: (0..n).map(|j| r_levels.iter().map(|rl| rl[j]).collect()).collect(),
        diagnostics: RenormDiagnostics {
            certificate: cert,
            residual_max: residual,
            newton_iterations: iterations,
            root_switched: false,
            inexact_levels: inexact,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;

    #[test]
    fn cubic_roots() {
        // (x - 1)(x + 2)(x - 3) = x^3 - 2x^2 - 5x + 6
        let r = real_polynomial_roots(&[6.0, -5.0, -2.0, 1.0]);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        // x^2 + 1 has no real roots
        assert!(real_polynomial_roots(&[1.0, 0.0, 1.0]).is_empty());
    }

    fn setup() -> (Grid, Vec<f64>) {
        let g = PeriodicGrid::centered_1d(512, 100.0).unwrap();
        let b2: f64 = 0.1;
        let b = b2.sqrt();
        let u = g.sample(|x, _| 2.0 * b2 / (b * x).cosh().powi(2));
        (Grid::Periodic(g), u)
    }

    #[test]
    fn hamiltonian_root_for_scaled_field() {
        let (g, u) = setup();
        let law = Functional::KdvHamiltonian { alpha: 6.0, eps: 1.0 };
        let c = super::super::evaluate_functional(&law, &u, &g).unwrap();
        let v = SpaceTimeField::from_levels(vec![u.iter().map(|x| 1.3 * x).collect(); 3]).unwrap();
        let rf = solve_single_law(&law, &v, c, &u, &g).unwrap();
        for ri in &rf.r[0] {
            assert!((ri - 1.0 / 1.3).abs() < 1e-12);
        }
        assert!(rf.diagnostics.certificate[0] < 1e-12);
    }

    #[test]
    fn momentum_sign_failure() {
        let (g, u) = setup();
        let v = SpaceTimeField::from_levels(vec![u.clone()]).unwrap();
        let err = solve_single_law(&Functional::KdvMomentum, &v, -1.0, &u, &g).unwrap_err();
        assert!(matches!(err, TdsrError::Sign { level: 0, .. }));
    }
}
