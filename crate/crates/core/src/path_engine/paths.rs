use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::real::Real;

/// A path sampled on the uniform grid `0, dt, 2dt, ...`, read with linear
/// interpolation between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPath<T> {
    pub dt: T,
    pub values: Vec<T>,
}

impl<T: Real> ContinuousPath<T> {
    pub fn new(dt: T, values: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if values.is_empty() {
            return Err(invalid("a path needs at least one sample"));
        }
        Ok(Self { dt, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> T {
        self.dt * T::from_usize_lossy(self.values.len() - 1)
    }

    pub fn time(&self, i: usize) -> T {
        self.dt * T::from_usize_lossy(i)
    }

    /// Index of the last sample at or before `t`.
    pub fn index_at(&self, t: T) -> usize {
        let i = (t / self.dt).floor().to_usize().unwrap_or(0);
        i.min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: T) -> T {
        if t <= T::zero() {
            return self.values[0];
        }
        let pos = t / self.dt;
        let i = pos.floor().to_usize().unwrap_or(0);
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let w = pos - T::from_usize_lossy(i);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// The samples read as a right-continuous step path (value of sample `i`
    /// held on `[i dt, (i+1) dt)`).
    pub fn to_stepped(&self) -> SteppedPath<T> {
        let times = (1..self.values.len()).map(|i| self.time(i)).collect();
        SteppedPath { initial_value: self.values[0], jump_times: times, values_after_jump: self.values[1..].to_vec() }
    }

    /// Largest absolute sample value.
    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Standard Brownian motion on `[0, horizon]` with Gaussian increments.
pub fn generate_brownian<T: Real, R: Rng + ?Sized>(horizon: T, dt: T, rng: &mut R) -> Result<ContinuousPath<T>>
where
    StandardNormal: Distribution<T>,
{
    let mut values = Vec::new();
    brownian_into(horizon, dt, rng, &mut values)?;
    ContinuousPath::new(dt, values)
}

/// Fills `out` with a Brownian path, reusing its allocation.
pub fn brownian_into<T: Real, R: Rng + ?Sized>(horizon: T, dt: T, rng: &mut R, out: &mut Vec<T>) -> Result<()>
where
    StandardNormal: Distribution<T>,
{
    if !(dt > T::zero()) || !(horizon > T::zero()) {
        return Err(invalid(format!("need dt > 0 and horizon > 0, got dt = {dt}, horizon = {horizon}")));
    }
    let steps = (horizon / dt - T::lit(1e-9)).ceil().to_usize().ok_or_else(|| invalid("too many steps"))?;
    let sd = dt.sqrt();
    out.clear();
    out.reserve(steps + 1);
    let mut b = T::zero();
    out.push(b);
    for _ in 0..steps {
        let z: T = StandardNormal.sample(rng);
        b = b + sd * z;
        out.push(b);
    }
    Ok(())
}

/// Right-continuous piecewise-constant path.
#[derive(Debug, Clone, PartialEq)]
pub struct SteppedPath<T> {
    pub initial_value: T,
    pub jump_times: Vec<T>,
    pub values_after_jump: Vec<T>,
}

impl<T: Real> SteppedPath<T> {
    pub fn new(initial_value: T, jump_times: Vec<T>, values_after_jump: Vec<T>) -> Result<Self> {
        if jump_times.len() != values_after_jump.len() {
            return Err(invalid("jump_times and values_after_jump differ in length"));
        }
        if jump_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("jump times must be nondecreasing"));
        }
        Ok(Self { initial_value, jump_times, values_after_jump })
    }

    pub fn constant(value: T) -> Self {
        Self { initial_value: value, jump_times: Vec::new(), values_after_jump: Vec::new() }
    }

    /// Number of jumps at times `<= t`.
    pub fn jumps_up_to(&self, t: T) -> usize {
        self.jump_times.partition_point(|&s| s <= t)
    }

    /// Number of jumps at times `< t`.
    pub fn jumps_before(&self, t: T) -> usize {
        self.jump_times.partition_point(|&s| s < t)
    }

    fn value_after(&self, m: usize) -> T {
        if m == 0 {
            self.initial_value
        } else {
            self.values_after_jump[m - 1]
        }
    }

    /// `c(t)`: the value after the last jump at or before `t`.
    pub fn value_at(&self, t: T) -> T {
        self.value_after(self.jumps_up_to(t))
    }

    /// `c(t-)`.
    pub fn value_before(&self, t: T) -> T {
        self.value_after(self.jumps_before(t))
    }

    /// Extends the path constantly by `h` past `t`: the result agrees with `c`
    /// on `[0, t]` and is frozen at `c(t)` afterwards.
    pub fn horizontal_extension(&self, t: T, h: T) -> Result<(Self, T)> {
        if !(h > T::zero()) {
            return Err(invalid(format!("extension length must be positive, got {h}")));
        }
        let m = self.jumps_up_to(t);
        let path = Self {
            initial_value: self.initial_value,
            jump_times: self.jump_times[..m].to_vec(),
            values_after_jump: self.values_after_jump[..m].to_vec(),
        };
        Ok((path, t + h))
    }

    /// Copy restricted to `[0, t)` with terminal value `x` at `t`: the terminal
    /// value modification.
    pub fn with_terminal(&self, t: T, x: T) -> Self {
        let m = self.jumps_before(t);
        let mut jump_times = self.jump_times[..m].to_vec();
        let mut values = self.values_after_jump[..m].to_vec();
        jump_times.push(t);
        values.push(x);
        Self { initial_value: self.initial_value, jump_times, values_after_jump: values }
    }

    /// Iterates the constant pieces `(start, end, value)` covering `[0, t)`.
    pub fn pieces(&self, t: T) -> impl Iterator<Item = (T, T, T)> + '_ {
        let m = self.jumps_before(t);
        (0..=m).filter_map(move |i| {
            let start = if i == 0 { T::zero() } else { self.jump_times[i - 1] };
            let end = if i < m { self.jump_times[i] } else { t };
            (end > start).then(|| (start, end, self.value_after(i)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stepped_path_reads_right_continuously() {
        let c = SteppedPath::new(0.0, vec![1.0, 2.0], vec![3.0, 5.0]).unwrap();
        assert_eq!(c.value_at(0.5), 0.0);
        assert_eq!(c.value_at(1.0), 3.0);
        assert_eq!(c.value_before(1.0), 0.0);
        assert_eq!(c.value_at(7.0), 5.0);
    }

    #[test]
    fn extension_freezes_terminal_value() {
        let c = SteppedPath::new(1.0, vec![0.5, 2.0], vec![4.0, 9.0]).unwrap();
        let (e, end) = c.horizontal_extension(1.0, 0.5).unwrap();
        assert_eq!(end, 1.5);
        assert_eq!(e.value_at(1.5), c.value_at(1.0));
        assert!(c.horizontal_extension(1.0, 0.0).is_err());
        let a = SteppedPath::constant(2.5);
        let (e, end) = a.horizontal_extension(1.0, 3.0).unwrap();
        assert_eq!(e.value_at(end), 2.5);
    }

    #[test]
    fn pieces_cover_the_window() {
        let c = SteppedPath::new(0.0, vec![0.25, 0.5], vec![1.0, 2.0]).unwrap();
        let total: f64 = c.pieces(0.75).map(|(a, b, _)| b - a).sum();
        assert_eq!(total, 0.75);
        let p: Vec<_> = c.pieces(0.5).collect();
        assert_eq!(p, vec![(0.0, 0.25, 0.0), (0.25, 0.5, 1.0)]);
    }

    #[test]
    fn brownian_starts_at_origin_and_is_reproducible() {
        let a: ContinuousPath<f64> = generate_brownian(1.0, 1e-3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b: ContinuousPath<f64> = generate_brownian(1.0, 1e-3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values[0], 0.0);
        assert!(a.horizon() >= 1.0 - 1e-12);
        assert!((a.value_at(0.0005) - 0.5 * (a.values[0] + a.values[1])).abs() < 1e-15);
    }
}
