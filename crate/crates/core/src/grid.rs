use serde::Serialize;

use crate::error::{invalid, Result};
use crate::real::Real;

/// Real values on a rectangular time × space grid, stored row-major with
/// one row per time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridField<T> {
    pub times: Vec<T>,
    pub xs: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> GridField<T> {
    pub fn new(times: Vec<T>, xs: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.is_empty() || xs.is_empty() {
            return Err(invalid("grid axes must be nonempty"));
        }
        if values.len() != times.len() * xs.len() {
            return Err(invalid(format!(
                "grid is {}x{} but {} values were given",
                times.len(),
                xs.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid values must be finite"));
        }
        Ok(Self { times, xs, values })
    }

    pub fn from_fn(times: Vec<T>, xs: Vec<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(times.len() * xs.len());
        for &t in &times {
            for &x in &xs {
                values.push(f(t, x));
            }
        }
        Self { times, xs, values }
    }

    pub fn zeros(times: Vec<T>, xs: Vec<T>) -> Self {
        let n = times.len() * xs.len();
        Self { times, xs, values: vec![T::zero(); n] }
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_xs(&self) -> usize {
        self.xs.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.xs.len() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let n = self.xs.len();
        self.values[i * n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = self.xs.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.times.len() == other.times.len() && self.xs.len() == other.xs.len()
    }

    /// `Δ_i Δ_j h` on the cell `[t_{i-1}, t_i] × [x_{j-1}, x_j]`.
    #[inline]
    pub fn double_difference(&self, i: usize, j: usize) -> T {
        self.get(i, j) - self.get(i - 1, j) - self.get(i, j - 1) + self.get(i - 1, j - 1)
    }

    /// Sub-grid keeping every `st`-th time and every `sx`-th space index.
    pub fn subsample(&self, st: usize, sx: usize) -> Self {
        let ti: Vec<usize> = (0..self.times.len()).step_by(st.max(1)).collect();
        let xi: Vec<usize> = (0..self.xs.len()).step_by(sx.max(1)).collect();
        let mut values = Vec::with_capacity(ti.len() * xi.len());
        for &i in &ti {
            for &j in &xi {
                values.push(self.get(i, j));
            }
        }
        Self {
            times: ti.iter().map(|&i| self.times[i]).collect(),
            xs: xi.iter().map(|&j| self.xs[j]).collect(),
            values,
        }
    }

    /// Adds one zero-valued level below and above the space window, spaced
    /// like the adjacent cells. Used to localize boundary terms.
    pub fn with_dead_levels(&self) -> Self {
        let n = self.xs.len();
        let lo_step = if n > 1 { self.xs[1] - self.xs[0] } else { T::one() };
        let hi_step = if n > 1 { self.xs[n - 1] - self.xs[n - 2] } else { T::one() };
        let mut xs = Vec::with_capacity(n + 2);
        xs.push(self.xs[0] - lo_step);
        xs.extend_from_slice(&self.xs);
        xs.push(self.xs[n - 1] + hi_step);
        let mut values = Vec::with_capacity(self.times.len() * (n + 2));
        for i in 0..self.times.len() {
            values.push(T::zero());
            values.extend_from_slice(self.row(i));
            values.push(T::zero());
        }
        Self { times: self.times.clone(), xs, values }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { times: self.times.clone(), xs: self.xs.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks_and_access() {
        assert!(GridField::new(vec![0.0, 1.0], vec![0.0], vec![1.0]).is_err());
        let g = GridField::from_fn(vec![0.0, 1.0], vec![0.0, 1.0], |t, x| t * x);
        assert_eq!(g.get(1, 1), 1.0);
        assert_eq!(g.double_difference(1, 1), 1.0);
        assert_eq!(g.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn dead_levels_pad_with_zeros() {
        let g = GridField::from_fn(vec![0.0, 1.0], vec![0.0, 0.5, 1.0], |_, _| 2.0);
        let d = g.with_dead_levels();
        assert_eq!(d.xs, vec![-0.5, 0.0, 0.5, 1.0, 1.5]);
        assert_eq!(d.row(0), &[0.0, 2.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn subsampling_keeps_corners() {
        let g = GridField::from_fn((0..5).map(|i| i as f64).collect(), (0..9).map(|i| i as f64).collect(), |t, x| {
            t + 10.0 * x
        });
        let s = g.subsample(2, 4);
        assert_eq!(s.times, vec![0.0, 2.0, 4.0]);
        assert_eq!(s.xs, vec![0.0, 4.0, 8.0]);
        assert_eq!(s.get(2, 2), 84.0);
    }
}
