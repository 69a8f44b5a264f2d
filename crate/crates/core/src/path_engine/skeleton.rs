use rand::Rng;

use super::exit_time::{sample_unit, unit_cumulative_hazard, unit_hazard, HazardValue};
use super::paths::{ContinuousPath, SteppedPath};
use crate::error::{invalid, Error, Result};
use crate::real::Real;

/// The embedded `±eps` random walk: arrival times, signs and integer levels.
///
/// Levels are stored as integers; the walk value after the `n`-th arrival is
/// `eps * levels[n-1]`. `T_0 = 0` and `A(0) = 0` are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton<T> {
    pub epsilon: T,
    pub arrival_times: Vec<T>,
    pub signs: Vec<i8>,
    pub levels: Vec<i64>,
    pub horizon: T,
}

impl<T: Real> Skeleton<T> {
    /// Builds a skeleton from arrival times and signs, deriving the levels.
    pub fn from_steps(epsilon: T, horizon: T, arrival_times: Vec<T>, signs: Vec<i8>) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if arrival_times.len() != signs.len() {
            return Err(invalid("arrival_times and signs differ in length"));
        }
        if arrival_times.first().is_some_and(|&t| t <= T::zero()) || arrival_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("arrival times must be positive and strictly increasing"));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid("signs must be +1 or -1"));
        }
        let mut level = 0i64;
        let levels = signs
            .iter()
            .map(|&s| {
                level += s as i64;
                level
            })
            .collect();
        Ok(Self { epsilon, arrival_times, signs, levels, horizon })
    }

    /// Number of arrivals `N(horizon)`.
    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    /// `T_n`, with `T_0 = 0`.
    pub fn time(&self, n: usize) -> T {
        if n == 0 {
            T::zero()
        } else {
            self.arrival_times[n - 1]
        }
    }

    /// Integer level after `n` arrivals.
    pub fn level_index(&self, n: usize) -> i64 {
        if n == 0 {
            0
        } else {
            self.levels[n - 1]
        }
    }

    /// `A(T_n)`.
    pub fn level(&self, n: usize) -> T {
        self.epsilon * T::lit(self.level_index(n) as f64)
    }

    /// Lattice value `j eps`.
    pub fn lattice(&self, j: i64) -> T {
        self.epsilon * T::lit(j as f64)
    }

    fn check_time(&self, t: T) -> Result<()> {
        if t >= T::zero() && t <= self.horizon {
            Ok(())
        } else {
            Err(invalid(format!("time {t} outside [0, {}]", self.horizon)))
        }
    }

    /// `N(t) = max{n : T_n <= t}`.
    pub fn count_arrivals(&self, t: T) -> Result<usize> {
        self.check_time(t)?;
        Ok(self.arrival_times.partition_point(|&s| s <= t))
    }

    /// Index `n` with `T_{n-1} < t <= T_n`. For `t` after the last arrival
    /// this is `N + 1`, an interval that is incomplete at the horizon.
    pub fn interval_of(&self, t: T) -> usize {
        self.arrival_times.partition_point(|&s| s < t) + 1
    }

    /// Whether interval `n` ends inside the horizon.
    pub fn interval_complete(&self, n: usize) -> bool {
        n >= 1 && n <= self.len()
    }

    /// Time since the last arrival strictly before `t`.
    pub fn age(&self, t: T) -> T {
        t - self.time(self.interval_of(t) - 1)
    }

    /// Density of `d<A,A>/dt` at `t`: `eps^2` times the exit-time hazard at
    /// the current age, i.e. the unit hazard at `age / eps^2`.
    pub fn angle_bracket_rate(&self, t: T) -> Result<HazardValue<T>> {
        self.check_time(t)?;
        let n = self.arrival_times.partition_point(|&s| s <= t);
        Ok(unit_hazard((t - self.time(n)) / (self.epsilon * self.epsilon)))
    }

    /// `<A,A>(t)`: the compensator of `[A,A]`, in closed form through the
    /// cumulative hazard of each sojourn.
    pub fn angle_bracket_clock(&self, t: T) -> Result<T> {
        self.check_time(t)?;
        let e2 = self.epsilon * self.epsilon;
        let n = self.arrival_times.partition_point(|&s| s <= t);
        let mut acc = T::zero();
        for m in 0..n {
            acc = acc + e2 * unit_cumulative_hazard((self.time(m + 1) - self.time(m)) / e2);
        }
        Ok(acc + e2 * unit_cumulative_hazard((t - self.time(n)) / e2))
    }

    /// The walk as a right-continuous step path.
    pub fn to_stepped(&self) -> SteppedPath<T> {
        SteppedPath {
            initial_value: T::zero(),
            jump_times: self.arrival_times.clone(),
            values_after_jump: (1..=self.len()).map(|n| self.level(n)).collect(),
        }
    }

    /// `A(t)`.
    pub fn value_at(&self, t: T) -> T {
        self.level(self.arrival_times.partition_point(|&s| s <= t))
    }
}

/// Exact-walk mode: i.i.d. exit times with independent fair signs, stopped
/// at the first arrival beyond the horizon (which is not stored).
pub fn build_skeleton_walk<T: Real, R: Rng + ?Sized>(epsilon: T, horizon: T, rng: &mut R) -> Result<Skeleton<T>> {
    if !(epsilon > T::zero()) || !(horizon > T::zero()) {
        return Err(invalid(format!("need epsilon > 0 and horizon > 0, got {epsilon}, {horizon}")));
    }
    let e2 = epsilon * epsilon;
    let expected = (horizon / e2).to_usize().unwrap_or(0);
    let mut times = Vec::with_capacity(expected + expected / 8 + 8);
    let mut signs = Vec::with_capacity(times.capacity());
    let mut levels = Vec::with_capacity(times.capacity());
    let mut t = T::zero();
    let mut level = 0i64;
    loop {
        let sign: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let wait: T = sample_unit(rng);
        t = t + e2 * wait;
        if t > horizon {
            break;
        }
        level += sign as i64;
        times.push(t);
        signs.push(sign);
        levels.push(level);
    }
    Ok(Skeleton { epsilon, arrival_times: times, signs, levels, horizon })
}

/// `-ζ(1/2) / √(2π)`.
const BARRIER_SHIFT: f64 = 0.582_597_157_939_010_6;

/// Streaming extraction of the skeleton from a sampled path.
///
/// Samples are fed in grid order. The walk sits at lattice level `j eps`;
/// an arrival happens when the linear interpolant reaches `(j ± 1) eps`,
/// with the crossing time located inside the grid segment. One segment may
/// carry several crossings.
///
/// Discrete monitoring misses excursions between samples, so crossings are
/// detected late and visits undercounted by a relative `O(√dt / eps)`.
/// [`SkeletonBuilder::continuity_corrected`] moves both barriers inward by
/// `β√dt`, `β = -ζ(1/2)/√(2π)`, the classical correction that removes the
/// leading term of that bias; levels stay exact lattice points.
#[derive(Debug, Clone)]
pub struct SkeletonBuilder<T> {
    epsilon: T,
    dt: T,
    shift: T,
    horizon: T,
    index: usize,
    origin: T,
    prev: T,
    level: i64,
    times: Vec<T>,
    signs: Vec<i8>,
    levels: Vec<i64>,
}

impl<T: Real> SkeletonBuilder<T> {
    pub fn new(epsilon: T, dt: T, horizon: T, start: T) -> Result<Self> {
        let required = epsilon * epsilon / T::lit(16.0);
        if !(epsilon > T::zero()) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(dt > T::zero()) || dt > required {
            return Err(Error::Resolution { dt: dt.f64(), required: required.f64() });
        }
        Ok(Self {
            epsilon,
            dt,
            shift: T::zero(),
            horizon,
            index: 0,
            origin: start,
            prev: start,
            level: 0,
            times: Vec::new(),
            signs: Vec::new(),
            levels: Vec::new(),
        })
    }

    /// Detects crossings at `(j ± 1) eps ∓ β√dt`.
    pub fn continuity_corrected(mut self) -> Self {
        self.shift = T::lit(BARRIER_SHIFT) * self.dt.sqrt();
        self
    }

    pub fn push(&mut self, v: T) {
        let t0 = self.dt * T::from_usize_lossy(self.index);
        self.index += 1;
        let v0 = self.prev;
        self.prev = v;
        loop {
            let up = self.origin + self.epsilon * T::lit((self.level + 1) as f64) - self.shift;
            let down = self.origin + self.epsilon * T::lit((self.level - 1) as f64) + self.shift;
            let (target, sign) = if v >= up {
                (up, 1i8)
            } else if v <= down {
                (down, -1i8)
            } else {
                break;
            };
            let frac = if v != v0 { ((target - v0) / (v - v0)).max(T::zero()).min(T::one()) } else { T::one() };
            let mut tc = t0 + frac * self.dt;
            if let Some(&last) = self.times.last() {
                if tc <= last {
                    tc = last + last.abs() * T::epsilon() + T::min_positive_value();
                }
            }
            if tc <= T::zero() {
                tc = T::min_positive_value();
            }
            if tc > self.horizon {
                break;
            }
            self.level += sign as i64;
            self.times.push(tc);
            self.signs.push(sign);
            self.levels.push(self.level);
        }
    }

    pub fn finish(self) -> Skeleton<T> {
        Skeleton {
            epsilon: self.epsilon,
            arrival_times: self.times,
            signs: self.signs,
            levels: self.levels,
            horizon: self.horizon,
        }
    }
}

/// Coupled-extraction mode over the whole path horizon. Levels are measured
/// from the starting value of the path.
pub fn extract_skeleton<T: Real>(path: &ContinuousPath<T>, epsilon: T) -> Result<Skeleton<T>> {
    let mut b = SkeletonBuilder::new(epsilon, path.dt, path.horizon(), path.values[0])?;
    for &v in &path.values[1..] {
        b.push(v);
    }
    Ok(b.finish())
}

/// [`extract_skeleton`] with continuity-corrected barriers.
pub fn extract_skeleton_corrected<T: Real>(path: &ContinuousPath<T>, epsilon: T) -> Result<Skeleton<T>> {
    let mut b = SkeletonBuilder::new(epsilon, path.dt, path.horizon(), path.values[0])?.continuity_corrected();
    for &v in &path.values[1..] {
        b.push(v);
    }
    Ok(b.finish())
}

/// `sup_i |A(t_i) - B(t_i)|` over the grid of the coupled path.
pub fn coupling_sup_error<T: Real>(path: &ContinuousPath<T>, skeleton: &Skeleton<T>) -> T {
    let mut n = 0usize;
    let mut worst = T::zero();
    for (i, &b) in path.values.iter().enumerate() {
        let t = path.time(i);
        while n < skeleton.len() && skeleton.arrival_times[n] <= t {
            n += 1;
        }
        worst = worst.max((skeleton.level(n) - b).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(eps: f64, n: usize, to: f64) -> ContinuousPath<f64> {
        let dt = 1.0 / n as f64;
        ContinuousPath::new(dt, (0..=n).map(|i| eps * to * (i as f64 / n as f64)).collect()).unwrap()
    }

    #[test]
    fn ramp_gives_three_up_steps() {
        let eps = 0.125;
        let s = extract_skeleton(&ramp(eps, 4096, 3.0), eps).unwrap();
        assert_eq!(s.signs, vec![1, 1, 1]);
        assert_eq!(s.levels, vec![1, 2, 3]);
        assert!((s.arrival_times[0] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.arrival_times[2], 1.0);
    }

    #[test]
    fn sawtooth_signs() {
        let eps = 0.25;
        let n = 3000;
        let dt = 1.0 / n as f64;
        let tooth = |i: usize| {
            let u = i as f64 / 1000.0;
            let f = u.fract();
            let k = u.floor() as usize;
            if i == n {
                eps
            } else if k % 2 == 0 {
                eps * f
            } else {
                eps * (1.0 - f)
            }
        };
        let path = ContinuousPath::new(dt, (0..=n).map(tooth).collect()).unwrap();
        let s = extract_skeleton(&path, eps).unwrap();
        assert_eq!(s.signs, vec![1, -1, 1]);
    }

    #[test]
    fn resolution_guard_names_required_dt() {
        let path = ramp(1.0, 10, 1.0);
        match extract_skeleton(&path, 0.5) {
            Err(Error::Resolution { required, .. }) => assert_eq!(required, 0.25 / 16.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn counting_and_intervals() {
        let s = Skeleton::from_steps(0.5, 4.0, vec![1.0, 2.0, 3.0], vec![1, 1, -1]).unwrap();
        assert_eq!(s.count_arrivals(0.5).unwrap(), 0);
        assert_eq!(s.count_arrivals(3.0).unwrap(), 3);
        assert!(s.count_arrivals(5.0).is_err());
        assert_eq!(s.interval_of(1.0), 1);
        assert_eq!(s.interval_of(1.5), 2);
        assert_eq!(s.interval_of(3.5), 4);
        assert!(!s.interval_complete(4));
        assert_eq!(s.level(2), 1.0);
        assert_eq!(s.value_at(3.2), 0.5);
        assert!(Skeleton::from_steps(0.5, 4.0, vec![1.0, 1.0], vec![1, 1]).is_err());
    }

    #[test]
    fn angle_bracket_rate_vanishes_at_age_zero() {
        let s = Skeleton::from_steps(0.5, 4.0, vec![1.0], vec![1]).unwrap();
        assert_eq!(s.angle_bracket_rate(1.0).unwrap().value, 0.0);
        assert!(s.angle_bracket_rate(1.5).unwrap().value > 0.0);
        assert!(!s.angle_bracket_rate(3.9).unwrap().asymptotic);
        let far = Skeleton::from_steps(0.1, 4.0, vec![1.0], vec![1]).unwrap();
        assert!(far.angle_bracket_rate(3.9).unwrap().asymptotic);
    }

    #[test]
    fn walk_levels_form_a_ladder() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Skeleton<f64> = build_skeleton_walk(0.0625, 1.0, &mut rng).unwrap();
        assert!(!s.is_empty());
        for n in 1..=s.len() {
            let d = s.level(n) - s.level(n - 1);
            assert_eq!(d.abs(), s.epsilon);
            assert!(s.level_index(n).unsigned_abs() as usize <= n);
        }
        assert!(*s.arrival_times.last().unwrap() <= 1.0);
    }

    #[test]
    fn continuity_correction_restores_visit_counts() {
        use crate::path_engine::generate_brownian;
        let (eps, n) = (0.125, 3000);
        let mean = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            (m, (v / xs.len() as f64).sqrt())
        };
        // exact-law walks are the oracle for the number of visits by time 1
        let exact: Vec<f64> = (0..n)
            .map(|i| build_skeleton_walk(eps, 1.0, &mut ChaCha8Rng::seed_from_u64(1000 + i)).unwrap().len() as f64)
            .collect();
        let (mut plain, mut corrected) = (Vec::new(), Vec::new());
        for i in 0..n {
            let path = generate_brownian(1.0, eps * eps / 64.0, &mut ChaCha8Rng::seed_from_u64(i)).unwrap();
            plain.push(extract_skeleton(&path, eps).unwrap().len() as f64);
            corrected.push(extract_skeleton_corrected(&path, eps).unwrap().len() as f64);
        }
        let (me, se) = mean(&exact);
        let (mp, sp) = mean(&plain);
        let (mc, sc) = mean(&corrected);
        assert!(me - mp > 4.0 * (se * se + sp * sp).sqrt(), "plain {mp} vs exact {me}");
        assert!((me - mc).abs() < 3.0 * (se * se + sc * sc).sqrt(), "corrected {mc} vs exact {me}");
    }
}
