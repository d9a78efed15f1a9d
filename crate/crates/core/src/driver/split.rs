//! Pseudo initial conditions and initial guesses for the auxiliary fields.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Result, TdsrError};
use crate::field::{max_abs, Scalar, SpaceTimeField};
use crate::grid::Grid;

/// Tolerance on `Σ f_j - u0`, relative to `max(1, max|u0|)`.
pub const SPLIT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitStrategy {
    /// `f_1 = u0`.
    Single,
    /// `f_1 = sech(x/√600)/300`, `f_2 = u0 - f_1`.
    BellSech,
    /// `f_2 = 0.05 e^{-x²}`, `f_3 = 0.15 e^{-x²}`, `f_1 = u0 - f_2 - f_3`.
    BellGauss,
    /// User-supplied parts.
    Explicit,
}

impl SplitStrategy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "single" => Ok(Self::Single),
            "bell_sech" => Ok(Self::BellSech),
            "bell_gauss" => Ok(Self::BellGauss),
            "explicit" => Ok(Self::Explicit),
            other => Err(TdsrError::Split(format!("unknown split strategy '{other}'"))),
        }
    }

    /// Number of parts the strategy produces, when fixed.
    pub fn parts(&self) -> Option<usize> {
        match self {
            Self::Single => Some(1),
            Self::BellSech => Some(2),
            Self::BellGauss => Some(3),
            Self::Explicit => None,
        }
    }

    /// The strategy used when none is given for `n` laws.
    pub fn default_for(n: usize) -> Self {
        match n {
            1 => Self::Single,
            2 => Self::BellSech,
            _ => Self::BellGauss,
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Single => "single",
            Self::BellSech => "bell_sech",
            Self::BellGauss => "bell_gauss",
            Self::Explicit => "explicit",
        })
    }
}

/// `u0 = Σ f_j`, one part per enforced law.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoICs<S> {
    pub f: Vec<Vec<S>>,
    pub strategy: SplitStrategy,
}

impl<S: Scalar> PseudoICs<S> {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// Split `u0` into `n` parts by a built-in strategy on the first-axis nodes.
pub fn split_initial_condition<S: Scalar>(
    u0: &[S],
    strategy: SplitStrategy,
    n: usize,
    grid: &Grid,
) -> Result<PseudoICs<S>> {
    if n == 0 {
        return Err(TdsrError::Split("at least one part is required".into()));
    }
    if u0.len() != grid.len() {
        return Err(TdsrError::Dimension {
            expected: grid.len(),
            got: u0.len(),
        });
    }
    if let Some(parts) = strategy.parts() {
        if parts != n {
            return Err(TdsrError::Split(format!(
                "strategy {strategy} makes {parts} parts but {n} laws are enforced"
            )));
        }
    }
    let bells = |profile: &dyn Fn(f64) -> f64, weights: &[f64]| -> Result<Vec<Vec<S>>> {
        if grid.dimension() != 1 {
            return Err(TdsrError::Split(format!("strategy {strategy} is defined in one dimension")));
        }
        let x = grid.x_nodes();
        Ok(weights
            .iter()
            .map(|w| x.iter().map(|xi| S::from_real(w * profile(*xi))).collect())
            .collect())
    };
    let fixed: Vec<Vec<S>> = match strategy {
        SplitStrategy::Single => vec![],
        SplitStrategy::BellSech => bells(&|x| 1.0 / (x / 600f64.sqrt()).cosh(), &[1.0 / 300.0])?,
        SplitStrategy::BellGauss => bells(&|x| (-x * x).exp(), &[0.05, 0.15])?,
        SplitStrategy::Explicit => {
            return Err(TdsrError::Split("explicit splits are built with explicit_split".into()))
        }
    };
    let mut first = u0.to_vec();
    for part in &fixed {
        for (a, b) in first.iter_mut().zip(part) {
            *a = *a - *b;
        }
    }
    let mut f = vec![first];
    f.extend(fixed);
    validate(u0, PseudoICs { f, strategy })
}

/// Validate user-supplied parts against `u0`.
pub fn explicit_split<S: Scalar>(u0: &[S], parts: Vec<Vec<S>>) -> Result<PseudoICs<S>> {
    validate(
        u0,
        PseudoICs {
            f: parts,
            strategy: SplitStrategy::Explicit,
        },
    )
}

fn validate<S: Scalar>(u0: &[S], p: PseudoICs<S>) -> Result<PseudoICs<S>> {
    if p.f.is_empty() {
        return Err(TdsrError::Split("no parts".into()));
    }
    let mut sum = vec![S::default(); u0.len()];
    for (j, part) in p.f.iter().enumerate() {
        if part.len() != u0.len() {
            return Err(TdsrError::Dimension {
                expected: u0.len(),
                got: part.len(),
            });
        }
        if max_abs(part) == 0.0 {
            return Err(TdsrError::DegenerateSplit { index: j + 1 });
        }
        for (s, v) in sum.iter_mut().zip(part) {
            *s += *v;
        }
    }
    let mismatch = crate::field::max_abs_diff(&sum, u0);
    if mismatch > SPLIT_TOL * max_abs(u0).max(1.0) {
        return Err(TdsrError::Split(format!("parts differ from u0 by {mismatch:.3e}")));
    }
    Ok(p)
}

/// Parameters of the random space-time initial guess.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomGuess {
    pub n_gaussians: usize,
    /// Gaussian width `d`.
    pub width: f64,
    /// Mollifier half-width `a` and sharpness `b`.
    pub mollifier_a: f64,
    pub mollifier_b: f64,
    pub seed: u64,
}

/// `χ(x) = exp(b/a² - b/(a² - x²))` on `(-a, a)`, zero outside.
pub fn mollifier(x: f64, a: f64, b: f64) -> f64 {
    let a2 = a * a;
    if x * x >= a2 {
        0.0
    } else {
        (b / a2 - b / (a2 - x * x)).exp()
    }
}

fn domain_length(grid: &Grid) -> f64 {
    match grid {
        Grid::Periodic(g) => g.axis(0).length,
        Grid::Chebyshev(g) => {
            let x = g.nodes();
            x[x.len() - 1] - x[0]
        }
    }
}

/// Peak-normalized sum of Gaussians with uniform centers in `[-L/2, L/2]`
/// and amplitudes uniform in `[-1, 1]` drawn independently per level, times
/// the mollifier. `stream` selects an independent sequence for the same seed.
pub fn generate_initial_guess_stream(
    grid: &Grid,
    n_levels: usize,
    params: &RandomGuess,
    stream: u64,
) -> Result<SpaceTimeField<f64>> {
    if grid.dimension() != 1 {
        return Err(TdsrError::InvalidParameter(
            "random initial guesses are one-dimensional".into(),
        ));
    }
    let l = domain_length(grid);
    let a = params.mollifier_a;
    if !(a > 0.0 && a <= 0.5 * l * (1.0 + 1e-12)) {
        return Err(TdsrError::InvalidParameter(format!(
            "mollifier half-width must lie in (0, L/2], got {a}"
        )));
    }
    if !(params.width > 0.0) {
        return Err(TdsrError::InvalidParameter("Gaussian width must be positive".into()));
    }
    let x = grid.x_nodes();
    let n = x.len();
    if params.n_gaussians == 0 {
        return Ok(SpaceTimeField::zeros(n, n_levels));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let centers: Vec<f64> = (0..params.n_gaussians)
        .map(|_| rng.random_range(-0.5 * l..=0.5 * l))
        .collect();
    let mut field = SpaceTimeField::from_fn(n, n_levels, |_, _| 0.0);
    for i in 0..n_levels {
        let amps: Vec<f64> = (0..params.n_gaussians).map(|_| rng.random_range(-1.0..=1.0)).collect();
        for (j, v) in field.level_mut(i).iter_mut().enumerate() {
            *v = centers
                .iter()
                .zip(&amps)
                .map(|(c, am)| am * (-((x[j] - c) / params.width).powi(2)).exp())
                .sum();
        }
    }
    let peak = field.max_abs();
    let chi: Vec<f64> = x.iter().map(|xi| mollifier(*xi, a, params.mollifier_b)).collect();
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    for i in 0..n_levels {
        for (v, c) in field.level_mut(i).iter_mut().zip(&chi) {
            *v *= scale * c;
        }
    }
    Ok(field)
}

pub fn generate_initial_guess(grid: &Grid, n_levels: usize, params: &RandomGuess) -> Result<SpaceTimeField<f64>> {
    generate_initial_guess_stream(grid, n_levels, params, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;

    fn grid() -> Grid {
        Grid::Periodic(PeriodicGrid::centered_1d(256, 100.0).unwrap())
    }

    fn soliton(g: &Grid) -> Vec<f64> {
        let b = 0.1f64.sqrt();
        g.x_nodes().iter().map(|x| 2.0 * b * b / (b * x).cosh().powi(2)).collect()
    }

    #[test]
    fn single_is_identity() {
        let g = grid();
        let u0 = soliton(&g);
        let p = split_initial_condition(&u0, SplitStrategy::Single, 1, &g).unwrap();
        assert_eq!(p.f, vec![u0]);
    }

    #[test]
    fn bell_sech_parts() {
        let g = grid();
        let u0 = soliton(&g);
        let p = split_initial_condition(&u0, SplitStrategy::BellSech, 2, &g).unwrap();
        let x = g.x_nodes();
        for j in 0..x.len() {
            let f1 = (1.0 / 300.0) / (x[j] / 600f64.sqrt()).cosh();
            assert!((p.f[1][j] - f1).abs() < 1e-17);
            assert!((p.f[0][j] + p.f[1][j] - u0[j]).abs() < 1e-16);
        }
    }

    #[test]
    fn bell_gauss_parts() {
        let g = grid();
        let u0 = soliton(&g);
        let p = split_initial_condition(&u0, SplitStrategy::BellGauss, 3, &g).unwrap();
        let x = g.x_nodes();
        for j in 0..x.len() {
            assert!((p.f[1][j] - 0.05 * (-x[j] * x[j]).exp()).abs() < 1e-17);
            assert!((p.f[2][j] - 0.15 * (-x[j] * x[j]).exp()).abs() < 1e-17);
        }
    }

    #[test]
    fn wrong_count_and_degenerate_rejected() {
        let g = grid();
        let u0 = soliton(&g);
        assert!(split_initial_condition(&u0, SplitStrategy::BellSech, 3, &g).is_err());
        let zero = vec![0.0; u0.len()];
        assert!(matches!(
            explicit_split(&u0, vec![u0.clone(), zero]),
            Err(TdsrError::DegenerateSplit { index: 2 })
        ));
        let half: Vec<f64> = u0.iter().map(|v| 0.5 * v).collect();
        assert!(matches!(
            explicit_split(&u0, vec![half.clone(), half.iter().map(|v| v * 1.1).collect()]),
            Err(TdsrError::Split(_))
        ));
    }

    #[test]
    fn mollifier_endpoints() {
        for (a, b) in [(1.0, 1.0), (47.5, 1.0), (2.0, 0.3)] {
            assert_eq!(mollifier(0.0, a, b), 1.0);
            assert_eq!(mollifier(a, a, b), 0.0);
            assert_eq!(mollifier(-a, a, b), 0.0);
        }
    }

    #[test]
    fn guess_deterministic_and_normalized() {
        let g = grid();
        let params = RandomGuess {
            n_gaussians: 10,
            width: 5.0,
            mollifier_a: 47.5,
            mollifier_b: 1.0,
            seed: 7,
        };
        let a = generate_initial_guess(&g, 5, &params).unwrap();
        let b = generate_initial_guess(&g, 5, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs() <= 1.0 + 1e-15);
        let other = generate_initial_guess(&g, 5, &RandomGuess { seed: 8, ..params }).unwrap();
        assert_ne!(a, other);
        let empty = generate_initial_guess(&g, 5, &RandomGuess { n_gaussians: 0, ..params }).unwrap();
        assert_eq!(empty.max_abs(), 0.0);
    }
}
