//! Spatial discretizations: periodic Fourier grids in one and two dimensions
//! and Chebyshev–Lobatto grids.
//!
//! Fourier convention: the forward transform is the unnormalized DFT and the
//! inverse carries the `1/N` factor. Integrals carry the cell size explicitly.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, TdsrError};
use crate::field::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One periodic axis: `n` nodes `x_min + j * length / n`, wavenumbers in DFT order.
#[derive(Clone, Debug)]
pub struct Axis {
    pub n: usize,
    pub length: f64,
    pub x_min: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
}

impl Axis {
    fn new(n: usize, x_min: f64, length: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(TdsrError::InvalidParameter(format!(
                "periodic node count must be a power of two >= 2, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(TdsrError::InvalidParameter(format!(
                "domain length must be positive, got {length}"
            )));
        }
        let dx = length / n as f64;
        let nodes = (0..n).map(|j| x_min + j as f64 * dx).collect();
        let wavenumbers = (0..n)
            .map(|m| {
                let m = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * m / length
            })
            .collect();
        Ok(Self {
            n,
            length,
            x_min,
            nodes,
            wavenumbers,
        })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Wavenumbers `2*pi*m/L`, `m = 0..N/2-1, -N/2..-1`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Wavenumbers with the Nyquist entry zeroed, for odd-order derivatives
    /// that must map real fields to real fields.
    pub fn wavenumbers_odd(&self) -> Vec<f64> {
        let mut k = self.wavenumbers.clone();
        k[self.n / 2] = 0.0;
        k
    }
}

struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Periodic (or periodically truncated) Fourier grid in one or two dimensions.
///
/// Flattened layout is row-major with `x` fastest: index `iy * nx + ix`.
#[derive(Clone)]
pub struct PeriodicGrid {
    axes: Vec<Axis>,
    plans: Arc<Vec<AxisPlans>>,
    dealias: bool,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("axes", &self.axes)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl PeriodicGrid {
    pub fn new_1d(n: usize, x_min: f64, length: f64) -> Result<Self> {
        Self::from_axes(vec![Axis::new(n, x_min, length)?])
    }

    /// Grid on `[-L/2, L/2)`.
    pub fn centered_1d(n: usize, length: f64) -> Result<Self> {
        Self::new_1d(n, -0.5 * length, length)
    }

    /// Square-cell 2D grid on `[-Lx/2, Lx/2) x [-Ly/2, Ly/2)`.
    pub fn centered_2d(nx: usize, lx: f64, ny: usize, ly: f64) -> Result<Self> {
        Self::from_axes(vec![
            Axis::new(nx, -0.5 * lx, lx)?,
            Axis::new(ny, -0.5 * ly, ly)?,
        ])
    }

    fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        let mut planner = FftPlanner::new();
        let plans = axes
            .iter()
            .map(|a| AxisPlans {
                forward: planner.plan_fft_forward(a.n),
                inverse: planner.plan_fft_inverse(a.n),
            })
            .collect();
        Ok(Self {
            axes,
            plans: Arc::new(plans),
            dealias: false,
        })
    }

    /// Enable the 2/3-rule mask in [`PeriodicGrid::dealias`].
    pub fn with_dealiasing(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn dealiasing(&self) -> bool {
        self.dealias
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::dx).product()
    }

    /// Coordinates of flattened node `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let nx = self.axes[0].n;
        let x = self.axes[0].nodes[idx % nx];
        let y = self.axes.get(1).map_or(0.0, |a| a.nodes[idx / nx]);
        [x, y]
    }

    /// Evaluate `f(x, y)` on every node (`y = 0` in 1D).
    pub fn sample<S: Scalar>(&self, f: impl Fn(f64, f64) -> S) -> Vec<S> {
        (0..self.len())
            .map(|i| {
                let [x, y] = self.point(i);
                f(x, y)
            })
            .collect()
    }

    /// Wavenumber along `axis` for every flattened spectral index.
    pub fn wavenumbers(&self, axis: usize, odd: bool) -> Vec<f64> {
        let k = if odd {
            self.axes[axis].wavenumbers_odd()
        } else {
            self.axes[axis].wavenumbers.clone()
        };
        let nx = self.axes[0].n;
        (0..self.len())
            .map(|i| if axis == 0 { k[i % nx] } else { k[i / nx] })
            .collect()
    }

    /// `|k|^2` for every flattened spectral index.
    pub fn wavenumber_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for a in 0..self.dimension() {
            for (o, k) in out.iter_mut().zip(self.wavenumbers(a, false)) {
                *o += k * k;
            }
        }
        out
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(TdsrError::Dimension {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    fn fft_in_place(&self, data: &mut [Complex64], direction: Direction) {
        let nx = self.axes[0].n;
        let plan = |a: usize| match direction {
            Direction::Forward => &self.plans[a].forward,
            Direction::Inverse => &self.plans[a].inverse,
        };
        plan(0).process(data);
        if self.dimension() == 2 {
            let ny = self.axes[1].n;
            let mut column = vec![Complex64::default(); ny];
            let p = plan(1);
            for ix in 0..nx {
                for iy in 0..ny {
                    column[iy] = data[iy * nx + ix];
                }
                p.process(&mut column);
                for iy in 0..ny {
                    data[iy * nx + ix] = column[iy];
                }
            }
        }
    }

    /// Unnormalized forward DFT of a grid field.
    pub fn forward<S: Scalar>(&self, field: &[S]) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        let mut data: Vec<Complex64> = field.iter().map(|v| v.to_complex()).collect();
        self.fft_in_place(&mut data, Direction::Forward);
        Ok(data)
    }

    /// Inverse DFT with `1/N` normalization; real scalars keep the real part.
    pub fn inverse<S: Scalar>(&self, spectrum: &[Complex64]) -> Result<Vec<S>> {
        self.check_len(spectrum.len())?;
        let mut data = spectrum.to_vec();
        self.fft_in_place(&mut data, Direction::Inverse);
        let scale = 1.0 / self.len() as f64;
        Ok(data.into_iter().map(|c| S::from_complex(c * scale)).collect())
    }

    /// Forward or inverse transform of complex data, in place.
    pub fn transform(&self, data: &mut [Complex64], direction: Direction) -> Result<()> {
        self.check_len(data.len())?;
        self.fft_in_place(data, direction);
        if direction == Direction::Inverse {
            let scale = 1.0 / self.len() as f64;
            data.iter_mut().for_each(|c| *c *= scale);
        }
        Ok(())
    }

    /// Zero-mode (rectangle) rule, exact for resolved band-limited integrands.
    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        self.check_len(field.len())?;
        Ok(self.cell_volume() * field.iter().sum::<f64>())
    }

    pub fn integrate_complex(&self, field: &[Complex64]) -> Result<Complex64> {
        self.check_len(field.len())?;
        Ok(field.iter().sum::<Complex64>() * self.cell_volume())
    }

    /// Partial derivative of order `order` along `axis`, multiplying by `(ik)^order`.
    pub fn partial<S: Scalar>(&self, field: &[S], axis: usize, order: u32) -> Result<Vec<S>> {
        if order == 0 {
            return Err(TdsrError::InvalidParameter("derivative order must be >= 1".into()));
        }
        if axis >= self.dimension() {
            return Err(TdsrError::InvalidParameter(format!(
                "axis {axis} out of range for a {}-D grid",
                self.dimension()
            )));
        }
        let mut spec = self.forward(field)?;
        let k = self.wavenumbers(axis, order % 2 == 1);
        let symbol = |kk: f64| Complex64::new(0.0, kk).powu(order);
        for (s, kk) in spec.iter_mut().zip(k) {
            *s *= symbol(kk);
        }
        self.inverse(&spec)
    }

    /// Apply the 2/3-rule mask to a spectrum when dealiasing is enabled.
    pub fn dealias(&self, spectrum: &mut [Complex64]) {
        if !self.dealias {
            return;
        }
        let nx = self.axes[0].n;
        let cut = |m: usize, n: usize| {
            let m = if m < n / 2 { m } else { n - m };
            3 * m > n
        };
        for (i, s) in spectrum.iter_mut().enumerate() {
            let mx = i % nx;
            let drop_x = cut(mx, nx);
            let drop_y = self.dimension() == 2 && cut(i / nx, self.axes[1].n);
            if drop_x || drop_y {
                *s = Complex64::default();
            }
        }
    }
}

/// Chebyshev–Lobatto grid on `[x_l, x_r]` with nodes in ascending order.
#[derive(Clone, Debug)]
pub struct ChebyshevGrid {
    pub x_l: f64,
    pub x_r: f64,
    nodes: Vec<f64>,
    d: DMatrix<f64>,
    weights: Vec<f64>,
}

impl ChebyshevGrid {
    /// `n + 1` nodes (`n` intervals).
    pub fn new(n: usize, x_l: f64, x_r: f64) -> Result<Self> {
        if n < 2 {
            return Err(TdsrError::InvalidParameter(format!(
                "Chebyshev grid needs n >= 2, got {n}"
            )));
        }
        if !(x_r > x_l) {
            return Err(TdsrError::InvalidParameter(format!(
                "empty interval [{x_l}, {x_r}]"
            )));
        }
        let half = 0.5 * (x_r - x_l);
        let (xi, d_ref) = cheb_reference(n);
        let nodes = xi.iter().map(|s| x_l + (s + 1.0) * half).collect();
        let d = d_ref / half;
        let weights = clenshaw_curtis(n).into_iter().map(|w| w * half).collect();
        Ok(Self {
            x_l,
            x_r,
            nodes,
            d,
            weights,
        })
    }

    pub fn n_intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// First-order differentiation matrix on the mapped interval.
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// `D` with first and last rows replaced by zero.
    pub fn d0(&self) -> DMatrix<f64> {
        let mut d0 = self.d.clone();
        let n = d0.nrows();
        d0.row_mut(0).fill(0.0);
        d0.row_mut(n - 1).fill(0.0);
        d0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(TdsrError::Dimension {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Clenshaw–Curtis quadrature.
    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        self.check_len(field.len())?;
        Ok(self.weights.iter().zip(field).map(|(w, f)| w * f).sum())
    }

    /// Apply `D` `order` times.
    pub fn differentiate(&self, field: &[f64], order: u32) -> Result<Vec<f64>> {
        if order == 0 {
            return Err(TdsrError::InvalidParameter("derivative order must be >= 1".into()));
        }
        self.check_len(field.len())?;
        let mut v = DVector::from_column_slice(field);
        for _ in 0..order {
            v = &self.d * v;
        }
        Ok(v.as_slice().to_vec())
    }
}

/// Reference nodes on `[-1, 1]` (ascending) and the differentiation matrix.
///
/// Node differences use the sine identity and diagonal entries the negative
/// row sum, so constants are annihilated to round-off.
fn cheb_reference(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let nf = n as f64;
    // descending Chebyshev points x_j = cos(j pi / n), j = 0..n
    let x = |j: usize| (PI * j as f64 / nf).cos();
    let diff = |i: usize, j: usize| {
        2.0 * (PI * (i + j) as f64 / (2.0 * nf)).sin() * (PI * (j as f64 - i as f64) / (2.0 * nf)).sin()
    };
    let c = |j: usize| {
        let base = if j == 0 || j == n { 2.0 } else { 1.0 };
        if j % 2 == 0 {
            base
        } else {
            -base
        }
    };
    let mut d_desc = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut row_sum = 0.0;
        for j in 0..=n {
            if i != j {
                let v = c(i) / c(j) / diff(i, j);
                d_desc[(i, j)] = v;
                row_sum += v;
            }
        }
        d_desc[(i, i)] = -row_sum;
    }
    // reverse to ascending order: D'[i][j] = D[n-i][n-j]
    let d = DMatrix::from_fn(n + 1, n + 1, |i, j| d_desc[(n - i, n - j)]);
    let nodes = (0..=n).map(|j| x(n - j)).collect();
    (nodes, d)
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the Chebyshev–Lobatto nodes
/// (symmetric, so node order does not matter).
fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let theta: Vec<f64> = (0..=n).map(|j| PI * j as f64 / nf).collect();
    let mut w = vec![0.0; n + 1];
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (vi, th) in v.iter_mut().zip(&theta[1..n]) {
                *vi -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (vi, th) in v.iter_mut().zip(&theta[1..n]) {
            *vi -= (nf * th).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (vi, th) in v.iter_mut().zip(&theta[1..n]) {
                *vi -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (wi, vi) in w[1..n].iter_mut().zip(v) {
        *wi = 2.0 * vi / nf;
    }
    w
}

/// Either discretization, for code that only needs integration and derivatives.
#[derive(Clone, Debug)]
pub enum Grid {
    Periodic(PeriodicGrid),
    Chebyshev(ChebyshevGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.len(),
            Grid::Chebyshev(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.dimension(),
            Grid::Chebyshev(_) => 1,
        }
    }

    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        match self {
            Grid::Periodic(g) => g.integrate(field),
            Grid::Chebyshev(g) => g.integrate(field),
        }
    }

    /// Derivative along `axis`; Chebyshev grids support real fields on axis 0.
    pub fn partial<S: Scalar>(&self, field: &[S], axis: usize, order: u32) -> Result<Vec<S>> {
        match self {
            Grid::Periodic(g) => g.partial(field, axis, order),
            Grid::Chebyshev(g) => {
                if axis != 0 {
                    return Err(TdsrError::InvalidParameter("Chebyshev grids are 1-D".into()));
                }
                let re: Vec<f64> = field.iter().map(|v| v.re()).collect();
                let d = g.differentiate(&re, order)?;
                if S::IS_COMPLEX {
                    let im: Vec<f64> = field.iter().map(|v| v.to_complex().im).collect();
                    let di = g.differentiate(&im, order)?;
                    Ok(d
                        .into_iter()
                        .zip(di)
                        .map(|(a, b)| S::from_complex(Complex64::new(a, b)))
                        .collect())
                } else {
                    Ok(d.into_iter().map(S::from_real).collect())
                }
            }
        }
    }

    /// Node coordinates along the first axis.
    pub fn x_nodes(&self) -> Vec<f64> {
        match self {
            Grid::Periodic(g) => g.axis(0).nodes().to_vec(),
            Grid::Chebyshev(g) => g.nodes().to_vec(),
        }
    }
}
