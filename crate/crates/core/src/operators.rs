//! Discrete differential operators of a functional along a skeleton.
//!
//! On the interval `T_{n-1} < t <= T_n` the walk is frozen at its last
//! level `A(T_{n-1}) = j0 eps`; every operator evaluates the functional on
//! that frozen path with a terminal value at `t`:
//!
//! - horizontal: `(F_t(frozen) - X(T_{n-1})) / eps^2`,
//! - second order: `(F_t(+eps) + F_t(-eps) - 2 F_t(frozen)) / eps^2`,
//! - generator: horizontal + second order / 2,
//! - vertical gradient on the cell `((j-1) eps, j eps]`:
//!   `(F_t(j eps) - F_t((j-1) eps)) / eps`.
//!
//! The jump ratio `ΔX(T_n) / ΔA(T_n)` lives on arrival times only.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::functionals::{BoundFunctional, Functional};
use crate::grid::GridField;
use crate::path_engine::{Skeleton, SteppedPath};
use crate::quadrature::adaptive_simpson;
use crate::real::Real;
use crate::stats::{mean_se, MeanSe};

/// Clock against which operator values are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// `[A, A]`: mass `eps^2` at each arrival.
    #[default]
    SquareBracket,
    /// `<A, A>`: density given by the exit-time hazard at the current age.
    AngleBracket,
}

/// All operators at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorSample<T> {
    /// Interval index: `T_{n-1} < t <= T_n`.
    pub n: usize,
    pub t: T,
    pub dh: T,
    pub d2: T,
    pub u: T,
    /// Defined only when `t` is the arrival time `T_n`.
    pub delta_ratio: Option<T>,
}

/// A functional bound to a skeleton path, answering operator queries.
pub struct SkeletonEvaluator<'a, T: Real> {
    skeleton: &'a Skeleton<T>,
    bound: Box<dyn BoundFunctional<T> + 'a>,
}

impl<'a, T: Real> SkeletonEvaluator<'a, T> {
    /// `path` must be `skeleton.to_stepped()`.
    pub fn new(f: &'a (impl Functional<T> + ?Sized), skeleton: &'a Skeleton<T>, path: &'a SteppedPath<T>) -> Self {
        Self { skeleton, bound: f.bind(path) }
    }

    pub fn skeleton(&self) -> &Skeleton<T> {
        self.skeleton
    }

    /// `X^k(T_n) = F_{T_n}(A_{T_n})`.
    pub fn value_at_arrival(&mut self, n: usize) -> Result<T> {
        let sk = self.skeleton;
        self.bound.eval_modified(sk.time(n), sk.level(n))
    }

    /// `X^k(t)`: the functional at the last arrival at or before `t`.
    pub fn value(&mut self, t: T) -> Result<T> {
        let n = self.skeleton.arrival_times.partition_point(|&s| s <= t);
        self.value_at_arrival(n)
    }

    fn interval(&self, t: T) -> Result<usize> {
        if !(t > T::zero() && t <= self.skeleton.horizon) {
            return Err(invalid(format!("operator time must lie in (0, horizon], got {t}")));
        }
        Ok(self.skeleton.interval_of(t))
    }

    /// `F_t` on the frozen path with terminal value shifted by `i` levels.
    fn frozen(&mut self, t: T, n: usize, i: i64) -> Result<T> {
        let j = self.skeleton.level_index(n - 1) + i;
        self.bound.eval_modified(t, self.skeleton.lattice(j))
    }

    pub fn delta_ratio(&mut self, n: usize) -> Result<T> {
        if n == 0 || n > self.skeleton.len() {
            return Err(invalid(format!("arrival index {n} out of range 1..={}", self.skeleton.len())));
        }
        let now = self.value_at_arrival(n)?;
        let before = self.value_at_arrival(n - 1)?;
        let step = self.skeleton.epsilon * T::lit(self.skeleton.signs[n - 1] as f64);
        Ok((now - before) / step)
    }

    pub fn d_horizontal(&mut self, t: T) -> Result<T> {
        let n = self.interval(t)?;
        let e2 = self.skeleton.epsilon * self.skeleton.epsilon;
        Ok((self.frozen(t, n, 0)? - self.value_at_arrival(n - 1)?) / e2)
    }

    pub fn d_second(&mut self, t: T) -> Result<T> {
        let n = self.interval(t)?;
        let e2 = self.skeleton.epsilon * self.skeleton.epsilon;
        let (up, down, mid) = (self.frozen(t, n, 1)?, self.frozen(t, n, -1)?, self.frozen(t, n, 0)?);
        Ok((up + down - T::lit(2.0) * mid) / e2)
    }

    pub fn weak_generator(&mut self, t: T) -> Result<T> {
        Ok(self.d_horizontal(t)? + self.d_second(t)? / T::lit(2.0))
    }

    /// The generator as a conditional average over the two possible next
    /// levels, without splitting into horizontal and vertical parts.
    pub fn weak_generator_average(&mut self, t: T) -> Result<T> {
        let n = self.interval(t)?;
        let e2 = self.skeleton.epsilon * self.skeleton.epsilon;
        let avg = (self.frozen(t, n, 1)? + self.frozen(t, n, -1)?) / T::lit(2.0);
        Ok((avg - self.value_at_arrival(n - 1)?) / e2)
    }

    pub fn sample(&mut self, t: T) -> Result<OperatorSample<T>> {
        let n = self.interval(t)?;
        let dh = self.d_horizontal(t)?;
        let d2 = self.d_second(t)?;
        let delta_ratio =
            if n <= self.skeleton.len() && self.skeleton.time(n) == t { Some(self.delta_ratio(n)?) } else { None };
        Ok(OperatorSample { n, t, dh, d2, u: dh + d2 / T::lit(2.0), delta_ratio })
    }

    /// `(F_t(t(A_t, j eps)) - F_t(t(A_t, (j-1) eps))) / eps`.
    pub fn vertical_gradient(&mut self, t: T, j: i64) -> Result<T> {
        self.interval(t)?;
        let sk = self.skeleton;
        let hi = self.bound.eval_modified(t, sk.lattice(j))?;
        let lo = self.bound.eval_modified(t, sk.lattice(j - 1))?;
        Ok((hi - lo) / sk.epsilon)
    }

    /// Default schedule: every arrival time and every interval midpoint
    /// (including the midpoint of the final, incomplete interval).
    pub fn default_schedule(&self) -> Vec<T> {
        let sk = self.skeleton;
        let two = T::lit(2.0);
        let mut out = Vec::with_capacity(2 * sk.len() + 1);
        for n in 1..=sk.len() {
            out.push((sk.time(n - 1) + sk.time(n)) / two);
            out.push(sk.time(n));
        }
        if sk.time(sk.len()) < sk.horizon {
            out.push((sk.time(sk.len()) + sk.horizon) / two);
        }
        out
    }
}

/// Vertical gradient on a `times × levels` grid. The requested level range
/// is widened to cover the walk plus `margin` levels when it does not; the
/// returned flag reports whether that happened.
pub fn vertical_gradient_field<T: Real>(
    f: &(impl Functional<T> + ?Sized),
    skeleton: &Skeleton<T>,
    times: &[T],
    levels: (i64, i64),
    margin: i64,
) -> Result<(GridField<T>, bool)> {
    if levels.0 > levels.1 {
        return Err(invalid("empty level range"));
    }
    let lo_walk = skeleton.levels.iter().copied().min().unwrap_or(0).min(0) - margin;
    let hi_walk = skeleton.levels.iter().copied().max().unwrap_or(0).max(0) + margin;
    let widened = levels.0 > lo_walk || levels.1 < hi_walk;
    let (lo, hi) = (levels.0.min(lo_walk), levels.1.max(hi_walk));
    let path = skeleton.to_stepped();
    let mut ev = SkeletonEvaluator::new(f, skeleton, &path);
    let xs: Vec<T> = (lo..=hi).map(|j| skeleton.lattice(j)).collect();
    let mut values = Vec::with_capacity(times.len() * xs.len());
    for &t in times {
        for j in lo..=hi {
            values.push(ev.vertical_gradient(t, j)?);
        }
    }
    Ok((GridField::new(times.to_vec(), xs, values)?, widened))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockIntegral<T> {
    pub value: T,
    pub clock: Clock,
    /// Angle-bracket quadrature missed its tolerance and the square-bracket
    /// value was returned instead.
    pub fell_back: bool,
}

/// `∫_0^t g(s) d[A,A](s)` or `∫_0^t g(s) d<A,A>(s)`. The angle-bracket form
/// includes the incomplete interval ending at `t`.
pub fn clock_weighted<T: Real>(
    skeleton: &Skeleton<T>,
    t: T,
    clock: Clock,
    g: impl FnMut(T) -> Result<T>,
) -> Result<ClockIntegral<T>> {
    let trace = clock_trace(skeleton, &[t], clock, g)?;
    Ok(ClockIntegral { value: trace.values[0], clock: trace.clock, fell_back: trace.fell_back })
}

/// Cumulative clock integrals at each of the nondecreasing `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockTrace<T> {
    pub values: Vec<T>,
    pub clock: Clock,
    pub fell_back: bool,
}

/// [`clock_weighted`] at every grid time in one pass. `g(s)` is only
/// queried at times where the clock charges mass, so never at `s = 0`.
pub fn clock_trace<T: Real>(
    skeleton: &Skeleton<T>,
    times: &[T],
    clock: Clock,
    mut g: impl FnMut(T) -> Result<T>,
) -> Result<ClockTrace<T>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("clock trace times must be nondecreasing"));
    }
    for &t in times {
        skeleton.count_arrivals(t)?;
    }
    let e2 = skeleton.epsilon * skeleton.epsilon;
    let square = |g: &mut dyn FnMut(T) -> Result<T>| -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(times.len());
        let mut acc = T::zero();
        let mut n = 1;
        for &t in times {
            while n <= skeleton.len() && skeleton.time(n) <= t {
                acc = acc + e2 * g(skeleton.time(n))?;
                n += 1;
            }
            out.push(acc);
        }
        Ok(out)
    };
    if clock == Clock::SquareBracket {
        return Ok(ClockTrace { values: square(&mut g)?, clock, fell_back: false });
    }
    let tol = T::tol_floor() * e2;
    let mut out = Vec::with_capacity(times.len());
    let mut acc = T::zero();
    let mut pos = T::zero();
    for &t in times {
        while pos < t {
            // visit running on (T_{n-1}, T_n] that contains times just after pos
            let n = skeleton.arrival_times.partition_point(|&s| s <= pos) + 1;
            let start = skeleton.time(n - 1);
            let end = if n <= skeleton.len() { skeleton.time(n).min(t) } else { t };
            let mut failure = None;
            let q = adaptive_simpson(
                |s: T| {
                    let rate = crate::path_engine::unit_hazard((s - start) / e2).value;
                    if rate == T::zero() {
                        return T::zero();
                    }
                    match g(s) {
                        Ok(v) => v * rate,
                        Err(e) => {
                            failure.get_or_insert(e);
                            T::zero()
                        }
                    }
                },
                pos,
                end,
                tol,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            if !q.converged {
                return Ok(ClockTrace { values: square(&mut g)?, clock: Clock::SquareBracket, fell_back: true });
            }
            acc = acc + q.value;
            pos = end;
        }
        out.push(acc);
    }
    Ok(ClockTrace { values: out, clock, fell_back: false })
}

/// Step estimate of the weak derivative at `times`: the jump ratio of the
/// last arrival at or before each time, `0` before the first arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakDerivativeEstimate<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    /// Left-point `∫ (estimate - oracle)^2 dt` over the time grid.
    pub sq_error: Option<T>,
}

pub fn weak_derivative_estimate<T: Real>(
    f: &(impl Functional<T> + ?Sized),
    skeleton: &Skeleton<T>,
    times: &[T],
    oracle: Option<&[T]>,
) -> Result<WeakDerivativeEstimate<T>> {
    if let Some(o) = oracle {
        if o.len() != times.len() {
            return Err(invalid("oracle and time grid differ in length"));
        }
    }
    let path = skeleton.to_stepped();
    let mut ev = SkeletonEvaluator::new(f, skeleton, &path);
    let mut ratios = Vec::with_capacity(skeleton.len());
    for n in 1..=skeleton.len() {
        ratios.push(ev.delta_ratio(n)?);
    }
    let values: Vec<T> = times
        .iter()
        .map(|&t| match skeleton.arrival_times.partition_point(|&s| s <= t) {
            0 => T::zero(),
            n => ratios[n - 1],
        })
        .collect();
    let sq_error = oracle.map(|o| {
        (0..times.len().saturating_sub(1))
            .map(|i| {
                let d = values[i] - o[i];
                d * d * (times[i + 1] - times[i])
            })
            .fold(T::zero(), |a, b| a + b)
    });
    Ok(WeakDerivativeEstimate { times: times.to_vec(), values, sq_error })
}

/// `Σ_{T_n <= t} |ΔX(T_n)|^2` on one skeleton.
pub fn path_energy<T: Real>(f: &(impl Functional<T> + ?Sized), skeleton: &Skeleton<T>, t: T) -> Result<T> {
    let n_t = skeleton.count_arrivals(t)?;
    let path = skeleton.to_stepped();
    let mut ev = SkeletonEvaluator::new(f, skeleton, &path);
    let mut prev = ev.value_at_arrival(0)?;
    let mut acc = T::zero();
    for n in 1..=n_t {
        let now = ev.value_at_arrival(n)?;
        acc = acc + (now - prev) * (now - prev);
        prev = now;
    }
    Ok(acc)
}

/// Monte Carlo mean of the path energy at each skeleton's horizon.
pub fn energy_estimate<T: Real>(f: &(impl Functional<T> + ?Sized), ensemble: &[Skeleton<T>]) -> Result<MeanSe> {
    let mut xs = Vec::with_capacity(ensemble.len());
    for sk in ensemble {
        xs.push(path_energy(f, sk, sk.horizon)?.f64());
    }
    Ok(mean_se(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{
        constant, ex_phi, identity_terminal, integral_time, quadratic_terminal, KernelTerm, ScalarFn,
    };
    use crate::path_engine::build_skeleton_walk;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn walk() -> Skeleton<f64> {
        Skeleton::from_steps(0.25, 2.0, vec![0.1, 0.3, 0.45, 0.9, 1.2], vec![1, 1, -1, -1, -1]).unwrap()
    }

    #[test]
    fn jump_ratios() {
        let sk = walk();
        let path = sk.to_stepped();
        let id = identity_terminal();
        let mut ev = SkeletonEvaluator::new(&id, &sk, &path);
        for n in 1..=sk.len() {
            assert_eq!(ev.delta_ratio(n).unwrap(), 1.0);
        }
        let c = constant(3.0);
        let mut ev = SkeletonEvaluator::new(&c, &sk, &path);
        assert_eq!(ev.delta_ratio(2).unwrap(), 0.0);
        let q = quadratic_terminal();
        let mut ev = SkeletonEvaluator::new(&q, &sk, &path);
        // level before step 3 is 2 (a = 2), step down: (2a - 1) eps
        assert!((ev.delta_ratio(3).unwrap() - 3.0 * 0.25).abs() < 1e-15);
        assert!(ev.delta_ratio(0).is_err() && ev.delta_ratio(6).is_err());
    }

    #[test]
    fn terminal_operators_are_exact() {
        let sk = walk();
        let path = sk.to_stepped();
        let q = quadratic_terminal();
        let id = identity_terminal();
        let mut eq = SkeletonEvaluator::new(&q, &sk, &path);
        let mut ei = SkeletonEvaluator::new(&id, &sk, &path);
        for t in eq.default_schedule() {
            assert_eq!(eq.d_second(t).unwrap(), 2.0);
            assert_eq!(eq.d_horizontal(t).unwrap(), 0.0);
            assert_eq!(eq.weak_generator(t).unwrap(), 1.0);
            assert_eq!(ei.d_second(t).unwrap(), 0.0);
            assert_eq!(ei.weak_generator(t).unwrap(), 0.0);
        }
        for j in -4..=4 {
            assert_eq!(eq.vertical_gradient(0.5, j).unwrap(), (2 * j - 1) as f64 * 0.25);
            assert_eq!(ei.vertical_gradient(0.5, j).unwrap(), 1.0);
        }
        assert!(eq.d_second(0.0).is_err() && eq.d_second(2.5).is_err());
    }

    #[test]
    fn integral_functional_is_horizontal_only() {
        let sk = walk();
        let path = sk.to_stepped();
        let one = integral_time(ScalarFn::Constant { value: 1.0 }).unwrap();
        let mut ev = SkeletonEvaluator::new(&one, &sk, &path);
        let e2 = 0.0625;
        for &(t, prev) in &[(0.2, 0.1), (0.3, 0.1), (1.5, 1.2)] {
            assert!((ev.weak_generator(t).unwrap() - (t - prev) / e2).abs() < 1e-12);
        }
        let f = integral_time(ScalarFn::Sin { amplitude: 1.0, frequency: 3.0, phase: 0.0 }).unwrap();
        let mut ev = SkeletonEvaluator::new(&f, &sk, &path);
        // level on (0.3, 0.45] is 2 eps
        let expected = (3.0f64 * 0.5).sin() * (0.4 - 0.3) / e2;
        assert!((ev.d_horizontal(0.4).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn splitting_identity_on_random_walks() {
        let phi = ex_phi(
            vec![KernelTerm {
                weight: ScalarFn::Sin { amplitude: 1.0, frequency: 1.0, phase: 0.3 },
                profile: ScalarFn::Bump { center: 0.0, radius: 1.5 },
            }],
            None,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let sk: Skeleton<f64> = build_skeleton_walk(0.125, 1.0, &mut rng).unwrap();
            let path = sk.to_stepped();
            let mut ev = SkeletonEvaluator::new(&phi, &sk, &path);
            for t in ev.default_schedule() {
                let s = ev.sample(t).unwrap();
                let avg = ev.weak_generator_average(t).unwrap();
                assert!((s.u - avg).abs() <= 1e-12 * avg.abs().max(1.0));
                assert_eq!(
                    s.delta_ratio.is_some(),
                    sk.arrival_times.binary_search_by(|a| a.partial_cmp(&t).unwrap()).is_ok()
                );
            }
        }
    }

    #[test]
    fn clocks_count_arrivals() {
        let sk = walk();
        let sq = clock_weighted(&sk, 2.0, Clock::SquareBracket, |_| Ok(1.0)).unwrap();
        assert!((sq.value - 0.0625 * 5.0).abs() < 1e-15);
        let ang = clock_weighted(&sk, 2.0, Clock::AngleBracket, |_| Ok(1.0)).unwrap();
        assert!(!ang.fell_back);
        assert!((ang.value - sk.angle_bracket_clock(2.0).unwrap()).abs() < 1e-9);
        let times = [0.05, 0.3, 0.3, 0.95, 2.0];
        let tr = clock_trace(&sk, &times, Clock::AngleBracket, |_| Ok(1.0)).unwrap();
        for (v, &t) in tr.values.iter().zip(&times) {
            assert!((v - sk.angle_bracket_clock(t).unwrap()).abs() < 1e-9, "t = {t}");
        }
        let tr = clock_trace(&sk, &times, Clock::SquareBracket, |s| Ok(s)).unwrap();
        assert!((tr.values[2] - 0.0625 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn weak_derivative_is_a_step_process() {
        let sk = walk();
        let q = quadratic_terminal();
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let est = weak_derivative_estimate(&q, &sk, &times, None).unwrap();
        assert_eq!(est.values[5], 0.0);
        assert!((est.values[10] - 0.25).abs() < 1e-15); // first step up from 0: (2*0+1) eps
        let energy = path_energy(&identity_terminal(), &sk, 2.0).unwrap();
        assert!((energy - 5.0 * 0.0625).abs() < 1e-15);
        assert_eq!(path_energy(&constant(1.0), &sk, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn gradient_field_widens_to_cover_walk() {
        let sk = walk();
        let (g, widened) = vertical_gradient_field(&quadratic_terminal(), &sk, &[0.5, 1.0], (0, 1), 1).unwrap();
        assert!(widened);
        assert_eq!(g.xs.len(), 6); // walk spans -1..=2, plus one margin level each side
        for (j, &x) in g.xs.iter().enumerate() {
            assert_eq!(g.get(0, j), 2.0 * x - 0.25);
        }
    }
}
