//! Conserved and dissipated functionals, and their expansion as polynomials
//! in the renormalization factors.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Result, TdsrError};
use crate::field::Scalar;
use crate::grid::Grid;

/// An integral functional `Q(u) = ∫ q[u] dx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Functional {
    /// `∫ u`
    KdvMass,
    /// `∫ u²`
    KdvMomentum,
    /// `∫ (-(α/6) u³ + (ε²/2) u_x²)`
    KdvHamiltonian { alpha: f64, eps: f64 },
    /// The first six KdV invariants for `α = 1`; `order` in `1..=6`.
    Zk { order: u8, eps: f64 },
    /// `∫ |u|²`
    NlsPower,
    /// `∫ u ∇u*`, complex and vector valued; diagnostic only.
    NlsMomentum,
    /// `∫ (-¼|u|⁴ + ½|∇u|²)`
    NlsHamiltonian,
    /// `∫ u²`, the density of the Allen–Cahn dissipation law.
    AcL2,
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::KdvMass => write!(f, "kdv_mass"),
            Functional::KdvMomentum => write!(f, "kdv_momentum"),
            Functional::KdvHamiltonian { .. } => write!(f, "kdv_hamiltonian"),
            Functional::Zk { order, .. } => write!(f, "zk_q{order}"),
            Functional::NlsPower => write!(f, "nls_power"),
            Functional::NlsMomentum => write!(f, "nls_momentum"),
            Functional::NlsHamiltonian => write!(f, "nls_hamiltonian"),
            Functional::AcL2 => write!(f, "ac_l2"),
        }
    }
}

impl Functional {
    /// Parse a law name; model parameters are filled in by the caller.
    pub fn parse(name: &str, alpha: f64, eps: f64) -> Result<Self> {
        let f = match name {
            "kdv_mass" | "mass" => Functional::KdvMass,
            "kdv_momentum" | "momentum" => Functional::KdvMomentum,
            "kdv_hamiltonian" | "hamiltonian" => Functional::KdvHamiltonian { alpha, eps },
            "nls_power" | "power" => Functional::NlsPower,
            "nls_momentum" => Functional::NlsMomentum,
            "nls_hamiltonian" => Functional::NlsHamiltonian,
            "ac_l2" => Functional::AcL2,
            other => match other.strip_prefix("zk_q").and_then(|s| s.parse::<u8>().ok()) {
                Some(order) if (1..=6).contains(&order) => Functional::Zk { order, eps },
                _ => {
                    return Err(TdsrError::FunctionalMismatch {
                        kind: name.to_string(),
                        reason: "unknown functional".into(),
                    })
                }
            },
        };
        Ok(f)
    }

    pub fn wants_complex(&self) -> bool {
        matches!(
            self,
            Functional::NlsPower | Functional::NlsMomentum | Functional::NlsHamiltonian
        )
    }

    /// Same law with KdV naming normalized (`zk_q1` is the mass, and so on).
    pub fn canonical(&self) -> Functional {
        match *self {
            Functional::Zk { order: 1, .. } => Functional::KdvMass,
            Functional::Zk { order: 2, .. } => Functional::KdvMomentum,
            Functional::Zk { order: 3, eps } => Functional::KdvHamiltonian { alpha: 1.0, eps },
            other => other,
        }
    }

    fn mismatch(&self, reason: &str) -> TdsrError {
        TdsrError::FunctionalMismatch {
            kind: self.to_string(),
            reason: reason.to_string(),
        }
    }
}

fn real_parts<S: Scalar>(u: &[S]) -> Vec<f64> {
    u.iter().map(|v| v.re()).collect()
}

/// Value of a real-valued functional.
pub fn evaluate_functional<S: Scalar>(functional: &Functional, u: &[S], grid: &Grid) -> Result<f64> {
    if functional.wants_complex() != S::IS_COMPLEX {
        return Err(functional.mismatch(if S::IS_COMPLEX {
            "needs a real field"
        } else {
            "needs a complex field"
        }));
    }
    if u.len() != grid.len() {
        return Err(TdsrError::Dimension {
            expected: grid.len(),
            got: u.len(),
        });
    }
    match functional.canonical() {
        Functional::KdvMass => grid.integrate(&real_parts(u)),
        Functional::KdvMomentum | Functional::AcL2 => {
            grid.integrate(&u.iter().map(|v| v.re() * v.re()).collect::<Vec<_>>())
        }
        Functional::KdvHamiltonian { alpha, eps } => {
            let w = real_parts(u);
            let wx = grid.partial(&w, 0, 1)?;
            let density: Vec<f64> = w
                .iter()
                .zip(&wx)
                .map(|(a, b)| -alpha / 6.0 * a * a * a + 0.5 * eps * eps * b * b)
                .collect();
            grid.integrate(&density)
        }
        Functional::Zk { order, eps } => zk_invariant(order, eps, &real_parts(u), grid),
        Functional::NlsPower => grid.integrate(&u.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>()),
        Functional::NlsHamiltonian => {
            let mut density: Vec<f64> = u.iter().map(|v| -0.25 * v.norm_sqr() * v.norm_sqr()).collect();
            for axis in 0..grid.dimension() {
                let du = grid.partial(u, axis, 1)?;
                for (d, g) in density.iter_mut().zip(&du) {
                    *d += 0.5 * g.norm_sqr();
                }
            }
            grid.integrate(&density)
        }
        Functional::NlsMomentum => Err(functional.mismatch("complex vector valued; use nls_momentum()")),
    }
}

/// `∫ u ∂_a u*` for each axis `a`.
pub fn nls_momentum(u: &[Complex64], grid: &Grid) -> Result<Vec<Complex64>> {
    (0..grid.dimension())
        .map(|axis| {
            let du = grid.partial(u, axis, 1)?;
            let dens: Vec<f64> = u.iter().zip(&du).map(|(a, b)| (a * b.conj()).re).collect();
            let dens_im: Vec<f64> = u.iter().zip(&du).map(|(a, b)| (a * b.conj()).im).collect();
            Ok(Complex64::new(grid.integrate(&dens)?, grid.integrate(&dens_im)?))
        })
        .collect()
}

/// Invariants `Q_3..Q_6` of `u_t + u u_x + ε² u_xxx = 0` (`Q_1`, `Q_2` handled above).
fn zk_invariant(order: u8, eps: f64, u: &[f64], grid: &Grid) -> Result<f64> {
    let e2 = eps * eps;
    let e4 = e2 * e2;
    let e6 = e4 * e2;
    let e8 = e4 * e4;
    let d = |k: u32| grid.partial(u, 0, k);
    let density: Vec<f64> = match order {
        4 => {
            let (u1, u2) = (d(1)?, d(2)?);
            (0..u.len())
                .map(|i| {
                    let w = u[i];
                    w.powi(4) / 4.0 - 3.0 * e2 * w * u1[i] * u1[i] + 9.0 * e4 * u2[i] * u2[i] / 5.0
                })
                .collect()
        }
        5 => {
            let (u1, u2, u3) = (d(1)?, d(2)?, d(3)?);
            (0..u.len())
                .map(|i| {
                    let w = u[i];
                    w.powi(5) / 5.0 - 6.0 * e2 * w * w * u1[i] * u1[i] + 36.0 * e4 * w * u2[i] * u2[i] / 5.0
                        - 108.0 * e6 * u3[i] * u3[i] / 35.0
                })
                .collect()
        }
        6 => {
            let (u1, u2, u3, u4) = (d(1)?, d(2)?, d(3)?, d(4)?);
            (0..u.len())
                .map(|i| {
                    let w = u[i];
                    w.powi(6) / 6.0 - 10.0 * e2 * w.powi(3) * u1[i] * u1[i]
                        + 18.0 * e4 * w * w * u2[i] * u2[i]
                        - 5.0 * e4 * u1[i].powi(4)
                        - 108.0 * e6 * w * u3[i] * u3[i] / 7.0
                        + 120.0 * e6 * u2[i].powi(3) / 7.0
                        + 36.0 * e8 * u4[i] * u4[i] / 7.0
                })
                .collect()
        }
        _ => {
            return Err(TdsrError::FunctionalMismatch {
                kind: format!("zk_q{order}"),
                reason: "order must be in 1..=6".into(),
            })
        }
    };
    grid.integrate(&density)
}

/// A conservation law expanded in the factors:
/// `Q(Σ R_i v_i) = Σ a_i R_i + Σ b_ij R_i R_j + Σ c_ijk R_i R_j R_k + Σ d_ijkl R_i R_j R_k R_l`.
///
/// Tensors are stored dense and fully symmetric; absent degrees are empty.
#[derive(Clone, Debug)]
pub struct LawPoly {
    pub n: usize,
    pub lin: Vec<f64>,
    pub quad: Vec<f64>,
    pub cub: Vec<f64>,
    pub quart: Vec<f64>,
}

impl LawPoly {
    fn empty(n: usize) -> Self {
        Self {
            n,
            lin: vec![],
            quad: vec![],
            cub: vec![],
            quart: vec![],
        }
    }

    /// Cross-moment expansion of `law` over the fields `v` at one time level.
    pub fn build<S: Scalar>(law: &Functional, v: &[&[S]], grid: &Grid) -> Result<Self> {
        let n = v.len();
        if law.wants_complex() != S::IS_COMPLEX {
            return Err(law.mismatch("field type does not match the law"));
        }
        let mut p = Self::empty(n);
        let pairs = |f: &dyn Fn(usize, usize) -> Result<f64>| -> Result<Vec<f64>> {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let m = f(i, j)?;
                    out[i * n + j] = m;
                    out[j * n + i] = m;
                }
            }
            Ok(out)
        };
        match law.canonical() {
            Functional::KdvMass => {
                p.lin = v
                    .iter()
                    .map(|vi| grid.integrate(&real_parts(vi)))
                    .collect::<Result<_>>()?;
            }
            Functional::KdvMomentum | Functional::AcL2 => {
                let re: Vec<Vec<f64>> = v.iter().map(|vi| real_parts(vi)).collect();
                p.quad = pairs(&|i, j| grid.integrate(&mul(&re[i], &re[j])))?;
            }
            Functional::KdvHamiltonian { alpha, eps } => {
                let re: Vec<Vec<f64>> = v.iter().map(|vi| real_parts(vi)).collect();
                let dx: Vec<Vec<f64>> = re.iter().map(|w| grid.partial(w, 0, 1)).collect::<Result<_>>()?;
                let h = 0.5 * eps * eps;
                p.quad = pairs(&|i, j| Ok(h * grid.integrate(&mul(&dx[i], &dx[j]))?))?;
                let mut cub = vec![0.0; n * n * n];
                for i in 0..n {
                    for j in i..n {
                        let vij = mul(&re[i], &re[j]);
                        for k in j..n {
                            let m = -alpha / 6.0 * grid.integrate(&mul(&vij, &re[k]))?;
                            for (a, b, c) in perms3(i, j, k) {
                                cub[(a * n + b) * n + c] = m;
                            }
                        }
                    }
                }
                p.cub = cub;
            }
            Functional::NlsPower => {
                p.quad = pairs(&|i, j| grid.integrate(&re_inner(v[i], v[j])))?;
            }
            Functional::NlsHamiltonian => {
                let grads: Vec<Vec<Vec<S>>> = v
                    .iter()
                    .map(|vi| (0..grid.dimension()).map(|a| grid.partial(vi, a, 1)).collect())
                    .collect::<Result<_>>()?;
                p.quad = pairs(&|i, j| {
                    let mut dens = vec![0.0; grid.len()];
                    for a in 0..grid.dimension() {
                        for (d, x) in dens.iter_mut().zip(re_inner(&grads[i][a], &grads[j][a])) {
                            *d += 0.5 * x;
                        }
                    }
                    grid.integrate(&dens)
                })?;
                // |u|^4 = (Σ R_i R_j Re(v_i v_j*))^2
                let inner: Vec<Vec<f64>> = (0..n * n).map(|ij| re_inner(v[ij / n], v[ij % n])).collect();
                let mut quart = vec![0.0; n.pow(4)];
                for ij in 0..n * n {
                    for kl in ij..n * n {
                        let m = -0.25 * grid.integrate(&mul(&inner[ij], &inner[kl]))?;
                        quart[ij * n * n + kl] = m;
                        quart[kl * n * n + ij] = m;
                    }
                }
                p.quart = quart;
            }
            Functional::Zk { .. } => return Err(law.mismatch("only zk_q1..zk_q3 can be enforced")),
            Functional::NlsMomentum => return Err(law.mismatch("complex valued; cannot be enforced")),
        }
        Ok(p)
    }

    pub fn degree(&self) -> usize {
        if !self.quart.is_empty() {
            4
        } else if !self.cub.is_empty() {
            3
        } else if !self.quad.is_empty() {
            2
        } else {
            1
        }
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            if !self.lin.is_empty() {
                s += self.lin[i] * r[i];
            }
            for j in 0..n {
                let rij = r[i] * r[j];
                if !self.quad.is_empty() {
                    s += self.quad[i * n + j] * rij;
                }
                for k in 0..n {
                    if !self.cub.is_empty() {
                        s += self.cub[(i * n + j) * n + k] * rij * r[k];
                    }
                    if !self.quart.is_empty() {
                        for l in 0..n {
                            s += self.quart[((i * n + j) * n + k) * n + l] * rij * r[k] * r[l];
                        }
                    }
                }
            }
        }
        s
    }

    /// Sum of absolute term magnitudes, a scale for round-off in [`LawPoly::eval`].
    pub fn magnitude(&self, r: &[f64]) -> f64 {
        let abs = Self {
            n: self.n,
            lin: self.lin.iter().map(|x| x.abs()).collect(),
            quad: self.quad.iter().map(|x| x.abs()).collect(),
            cub: self.cub.iter().map(|x| x.abs()).collect(),
            quart: self.quart.iter().map(|x| x.abs()).collect(),
        };
        let ra: Vec<f64> = r.iter().map(|x| x.abs()).collect();
        abs.eval(&ra)
    }

    pub fn grad(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; n];
        for (m, gm) in g.iter_mut().enumerate() {
            if !self.lin.is_empty() {
                *gm += self.lin[m];
            }
            for i in 0..n {
                if !self.quad.is_empty() {
                    *gm += 2.0 * self.quad[m * n + i] * r[i];
                }
                for j in 0..n {
                    if !self.cub.is_empty() {
                        *gm += 3.0 * self.cub[(m * n + i) * n + j] * r[i] * r[j];
                    }
                    if !self.quart.is_empty() {
                        for k in 0..n {
                            *gm += 4.0 * self.quart[((m * n + i) * n + j) * n + k] * r[i] * r[j] * r[k];
                        }
                    }
                }
            }
        }
        g
    }

    /// Coefficients `[c_1, c_2, c_3, c_4]` of the univariate polynomial (`n = 1`).
    pub fn univariate(&self) -> [f64; 4] {
        debug_assert_eq!(self.n, 1);
        let first = |v: &Vec<f64>| v.first().copied().unwrap_or(0.0);
        [first(&self.lin), first(&self.quad), first(&self.cub), first(&self.quart)]
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn re_inner<S: Scalar>(a: &[S], b: &[S]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (*x * y.conj()).re()).collect()
}

fn perms3(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;

    fn soliton_grid() -> (Grid, Vec<f64>, f64) {
        let g = PeriodicGrid::centered_1d(2048, 100.0).unwrap();
        let beta = 0.1f64.sqrt();
        let u = g.sample(|x, _| 2.0 * beta * beta / (beta * x).cosh().powi(2));
        (Grid::Periodic(g), u, beta)
    }

    #[test]
    fn soliton_moments() {
        let (g, u, b) = soliton_grid();
        let mass = evaluate_functional(&Functional::KdvMass, &u, &g).unwrap();
        assert!((mass - 4.0 * b).abs() < 1e-12);
        let mom = evaluate_functional(&Functional::KdvMomentum, &u, &g).unwrap();
        assert!((mom - 16.0 * b.powi(3) / 3.0).abs() < 1e-12);
        let h = Functional::KdvHamiltonian { alpha: 6.0, eps: 1.0 };
        let ham = evaluate_functional(&h, &u, &g).unwrap();
        assert!((ham + 32.0 * b.powi(5) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_mass_is_zero() {
        let g = PeriodicGrid::new_1d(256, 0.0, 2.0).unwrap();
        let u = g.sample(|x, _| (PI * x).cos());
        let m = evaluate_functional(&Functional::KdvMass, &u, &Grid::Periodic(g)).unwrap();
        assert!(m.abs() < 1e-15);
    }

    #[test]
    fn field_type_mismatch() {
        let (g, u, _) = soliton_grid();
        let err = evaluate_functional(&Functional::NlsPower, &u, &g).unwrap_err();
        assert!(matches!(err, TdsrError::FunctionalMismatch { .. }));
    }

    #[test]
    fn poly_reproduces_functional() {
        let (g, u, _) = soliton_grid();
        let Grid::Periodic(pg) = &g else { unreachable!() };
        let w = pg.sample(|x, _| (-0.1 * x * x).exp());
        let r = [0.7, -1.3];
        let combo: Vec<f64> = u.iter().zip(&w).map(|(a, b)| r[0] * a + r[1] * b).collect();
        for law in [
            Functional::KdvMass,
            Functional::KdvMomentum,
            Functional::KdvHamiltonian { alpha: 6.0, eps: 1.0 },
        ] {
            let p = LawPoly::build(&law, &[&u, &w], &g).unwrap();
            let direct = evaluate_functional(&law, &combo, &g).unwrap();
            assert!((p.eval(&r) - direct).abs() < 1e-13, "{law}");
            // gradient by central differences
            let gr = p.grad(&r);
            for m in 0..2 {
                let mut rp = r;
                rp[m] += 1e-6;
                let mut rm = r;
                rm[m] -= 1e-6;
                let fd = (p.eval(&rp) - p.eval(&rm)) / 2e-6;
                assert!((fd - gr[m]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn nls_poly_reproduces_functional() {
        let pg = PeriodicGrid::centered_2d(32, 20.0, 32, 20.0).unwrap();
        let a: Vec<Complex64> = pg.sample(|x, y| Complex64::new((-(x * x + y * y) / 4.0).exp(), 0.1 * x));
        let b: Vec<Complex64> = pg.sample(|x, y| Complex64::new(0.0, (-(x * x + 2.0 * y * y) / 6.0).exp()));
        let g = Grid::Periodic(pg);
        let r = [1.1, 0.4];
        let combo: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * r[0] + y * r[1]).collect();
        for law in [Functional::NlsPower, Functional::NlsHamiltonian] {
            let p = LawPoly::build(&law, &[&a, &b], &g).unwrap();
            let direct = evaluate_functional(&law, &combo, &g).unwrap();
            assert!((p.eval(&r) - direct).abs() < 1e-12, "{law}");
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!(Functional::parse("zk_q4", 1.0, 0.022).unwrap(), Functional::Zk { order: 4, eps: 0.022 });
        assert!(Functional::parse("zk_q7", 1.0, 0.022).is_err());
        assert!(Functional::parse("energy", 1.0, 1.0).is_err());
    }
}
