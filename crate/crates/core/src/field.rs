//! Grid-field scalars and space-time storage.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Result, TdsrError};

/// Field value type: `f64` for real models, `Complex64` for complex ones.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + Default
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const IS_COMPLEX: bool;

    fn to_complex(self) -> Complex64;
    /// Real models drop the imaginary part.
    fn from_complex(c: Complex64) -> Self;
    fn from_real(x: f64) -> Self;
    fn re(self) -> f64;
    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;

    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    fn is_finite(self) -> bool {
        self.norm_sqr().is_finite()
    }
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_complex(c: Complex64) -> Self {
        c.re
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn to_complex(self) -> Complex64 {
        self
    }
    fn from_complex(c: Complex64) -> Self {
        c
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
}

/// Max-norm of a grid field.
pub fn max_abs<S: Scalar>(f: &[S]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Max-norm of the difference of two grid fields.
pub fn max_abs_diff<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((*x - *y).abs()))
}

/// A field sampled at every grid point and every time level of a block.
///
/// Storage is time-major: level `i` occupies `data[i * n_points..(i + 1) * n_points]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField<S> {
    n_points: usize,
    n_levels: usize,
    data: Vec<S>,
}

impl<S: Scalar> SpaceTimeField<S> {
    pub fn zeros(n_points: usize, n_levels: usize) -> Self {
        Self {
            n_points,
            n_levels,
            data: vec![S::default(); n_points * n_levels],
        }
    }

    pub fn from_levels(levels: Vec<Vec<S>>) -> Result<Self> {
        let n_levels = levels.len();
        let n_points = levels.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_points * n_levels);
        for level in levels {
            if level.len() != n_points {
                return Err(TdsrError::Dimension {
                    expected: n_points,
                    got: level.len(),
                });
            }
            data.extend(level);
        }
        Ok(Self {
            n_points,
            n_levels,
            data,
        })
    }

    pub fn from_fn(n_points: usize, n_levels: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n_points * n_levels);
        for i in 0..n_levels {
            for j in 0..n_points {
                data.push(f(i, j));
            }
        }
        Self {
            n_points,
            n_levels,
            data,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn level(&self, i: usize) -> &[S] {
        &self.data[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn level_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn levels(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks(self.n_points.max(1)).take(self.n_levels)
    }

    pub fn last_level(&self) -> &[S] {
        self.level(self.n_levels - 1)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    /// Multiply level `i` by `scale[i]`.
    pub fn scale_levels(&mut self, scale: &[f64]) {
        for (i, s) in scale.iter().enumerate().take(self.n_levels) {
            for v in self.level_mut(i) {
                *v = *v * *s;
            }
        }
    }

    /// `self += other * scale[i]` level by level.
    pub fn add_scaled_levels(&mut self, other: &Self, scale: &[f64]) {
        let n = self.n_points;
        for i in 0..self.n_levels {
            let s = scale[i];
            let src = &other.data[i * n..(i + 1) * n];
            for (d, o) in self.data[i * n..(i + 1) * n].iter_mut().zip(src) {
                *d += *o * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Append `other`, dropping its first level (shared block interface).
    pub fn append_after_interface(&mut self, other: &Self) -> Result<()> {
        if other.n_points != self.n_points {
            return Err(TdsrError::Dimension {
                expected: self.n_points,
                got: other.n_points,
            });
        }
        if other.n_levels == 0 {
            return Ok(());
        }
        self.data.extend_from_slice(&other.data[other.n_points..]);
        self.n_levels += other.n_levels - 1;
        Ok(())
    }
}

impl<S: Scalar> std::ops::Sub for &SpaceTimeField<S> {
    type Output = SpaceTimeField<S>;

    fn sub(self, rhs: Self) -> SpaceTimeField<S> {
        SpaceTimeField {
            n_points: self.n_points,
            n_levels: self.n_levels,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        }
    }
}
