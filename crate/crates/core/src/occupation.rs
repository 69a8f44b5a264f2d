//! Crossing-count occupation fields of a skeleton and a binned local-time
//! oracle for the underlying path.
//!
//! Every departure from a level is an occupation event, stamped with the
//! departure time `T_n` (when the square-bracket clock ticks) and tagged by
//! how the level was entered. The clock-modified field counts entries:
//! `L^{j}(t) = eps (u + d)` where `u`/`d` count arrivals at `j eps` from
//! below/above among `T_1, ..., T_{N(t)-1}`, so the initial visit at level 0
//! does not count. The occupation integral uses all departures, including
//! the initial one.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::functionals::Functional;
use crate::grid::GridField;
use crate::operators::{clock_weighted, Clock, ClockIntegral, ClockTrace, SkeletonEvaluator};
use crate::path_engine::{unit_cumulative_hazard, unit_hazard, ContinuousPath, Skeleton};
use crate::quadrature::adaptive_simpson;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    /// The visit at level 0 that starts at time 0.
    Initial,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Up => "up",
            Self::Down => "down",
            Self::Initial => "initial",
        }
    }
}

/// A completed visit: at `level` from `arrival` until `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OccupationEvent<T> {
    pub level: i64,
    pub time: T,
    pub arrival: T,
    pub direction: Direction,
}

/// Value of a clock-dependent quantity with a flag for approximations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockValue<T> {
    pub value: T,
    /// The asymptotic hazard regime was used somewhere.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationField<T> {
    pub epsilon: T,
    pub horizon: T,
    events: Vec<OccupationEvent<T>>,
    /// Level and arrival time of the visit still running at the horizon.
    open_visit: (i64, T),
    by_level: BTreeMap<i64, Vec<usize>>,
}

/// Scaled ages above this use the asymptotic hazard.
const ASYMPTOTIC_AGE: f64 = 20.0;

impl<T: Real> OccupationField<T> {
    pub fn from_skeleton(sk: &Skeleton<T>) -> Self {
        let mut events = Vec::with_capacity(sk.len());
        let mut by_level: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for n in 1..=sk.len() {
            let direction = match n {
                1 => Direction::Initial,
                _ if sk.signs[n - 2] > 0 => Direction::Up,
                _ => Direction::Down,
            };
            let level = sk.level_index(n - 1);
            by_level.entry(level).or_default().push(events.len());
            events.push(OccupationEvent { level, time: sk.time(n), arrival: sk.time(n - 1), direction });
        }
        Self {
            epsilon: sk.epsilon,
            horizon: sk.horizon,
            events,
            open_visit: (sk.level_index(sk.len()), sk.time(sk.len())),
            by_level,
        }
    }

    pub fn events(&self) -> &[OccupationEvent<T>] {
        &self.events
    }

    pub fn open_visit(&self) -> (i64, T) {
        self.open_visit
    }

    /// `j` with `x` in `((j-1) eps, j eps]`.
    pub fn level_of(&self, x: T) -> i64 {
        (x / self.epsilon).ceil().to_i64().unwrap_or(i64::MAX)
    }

    /// Smallest and largest level with at least one completed visit.
    pub fn level_range(&self) -> Option<(i64, i64)> {
        Some((*self.by_level.keys().next()?, *self.by_level.keys().next_back()?))
    }

    fn check_time(&self, t: T) -> Result<()> {
        if t >= T::zero() && t <= self.horizon {
            Ok(())
        } else {
            Err(invalid(format!("time {t} outside [0, {}]", self.horizon)))
        }
    }

    fn level_events(&self, j: i64) -> impl Iterator<Item = &OccupationEvent<T>> {
        self.by_level.get(&j).into_iter().flatten().map(|&i| &self.events[i])
    }

    /// `(u, d)` at level `j` up to time `t`.
    pub fn crossing_counts(&self, j: i64, t: T) -> Result<(usize, usize)> {
        self.check_time(t)?;
        let (mut u, mut d) = (0, 0);
        for e in self.level_events(j).take_while(|e| e.time <= t) {
            match e.direction {
                Direction::Up => u += 1,
                Direction::Down => d += 1,
                Direction::Initial => {}
            }
        }
        Ok((u, d))
    }

    /// `eps (u + d)` at level `j`.
    pub fn level_value(&self, j: i64, t: T) -> Result<T> {
        let (u, d) = self.crossing_counts(j, t)?;
        Ok(self.epsilon * T::from_usize_lossy(u + d))
    }

    /// `(1/eps) ∫_0^t 1{A(s-) = j eps} d<A,A>(s)`, through the closed-form
    /// cumulative hazard of every visit (including the running one).
    pub fn angle_level_value(&self, j: i64, t: T) -> Result<ClockValue<T>> {
        self.check_time(t)?;
        let e2 = self.epsilon * self.epsilon;
        let mut acc = T::zero();
        let mut flagged = false;
        let mut visit = |arrival: T, end: T| {
            if arrival < t {
                let age = (end.min(t) - arrival) / e2;
                flagged |= age > T::lit(ASYMPTOTIC_AGE);
                acc = acc + e2 * unit_cumulative_hazard(age);
            }
        };
        for e in self.level_events(j) {
            visit(e.arrival, e.time);
        }
        if self.open_visit.0 == j {
            visit(self.open_visit.1, self.horizon);
        }
        Ok(ClockValue { value: acc / self.epsilon, flagged })
    }

    /// The field at `x`: the level value of the cell containing `x`.
    pub fn occupation_value(&self, x: T, t: T, clock: Clock) -> Result<ClockValue<T>> {
        let j = self.level_of(x);
        match clock {
            Clock::SquareBracket => Ok(ClockValue { value: self.level_value(j, t)?, flagged: false }),
            Clock::AngleBracket => self.angle_level_value(j, t),
        }
    }

    /// Square-bracket field on a `times × xs` grid.
    pub fn to_grid(&self, times: &[T], xs: &[T]) -> Result<GridField<T>> {
        let mut values = Vec::with_capacity(times.len() * xs.len());
        for &t in times {
            for &x in xs {
                values.push(self.level_value(self.level_of(x), t)?);
            }
        }
        GridField::new(times.to_vec(), xs.to_vec(), values)
    }

    /// Total variation of `t ↦ L^j(t)` on `[0, t]`.
    pub fn time_variation(&self, j: i64, t: T) -> Result<T> {
        self.check_time(t)?;
        let mut prev = T::zero();
        let mut total = T::zero();
        let mut count = 0usize;
        for e in self.level_events(j).take_while(|e| e.time <= t) {
            if e.direction != Direction::Initial {
                count += 1;
                let now = self.epsilon * T::from_usize_lossy(count);
                total = total + (now - prev).abs();
                prev = now;
            }
        }
        Ok(total)
    }
}

/// `Σ_j ∫_0^t α_j(s) [dℓ^{j}(s) - dℓ^{j-1}(s)]` for a simple field with level
/// coefficients `alpha(j, s)`. With the square-bracket clock each departure
/// from `j0` at time `s` contributes `eps (α_{j0}(s) - α_{j0+1}(s))`; with the
/// angle-bracket clock the same difference over `eps` is integrated against
/// the hazard rate of each visit.
pub fn integrate_vs_occupation<T: Real>(
    field: &OccupationField<T>,
    t: T,
    clock: Clock,
    alpha: impl FnMut(i64, T) -> Result<T>,
) -> Result<ClockIntegral<T>> {
    let trace = occupation_integral_trace(field, &[t], clock, alpha)?;
    Ok(ClockIntegral { value: trace.values[0], clock, fell_back: false })
}

/// [`integrate_vs_occupation`] accumulated up to each nondecreasing grid time.
pub fn occupation_integral_trace<T: Real>(
    field: &OccupationField<T>,
    times: &[T],
    clock: Clock,
    mut alpha: impl FnMut(i64, T) -> Result<T>,
) -> Result<ClockTrace<T>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("occupation trace times must be nondecreasing"));
    }
    for &t in times {
        field.check_time(t)?;
    }
    let eps = field.epsilon;
    let mut out = Vec::with_capacity(times.len());
    let mut acc = T::zero();
    if clock == Clock::SquareBracket {
        let mut events = field.events.iter().peekable();
        for &t in times {
            while let Some(e) = events.next_if(|e| e.time <= t) {
                acc = acc + eps * (alpha(e.level, e.time)? - alpha(e.level + 1, e.time)?);
            }
            out.push(acc);
        }
        return Ok(ClockTrace { values: out, clock, fell_back: false });
    }
    let e2 = eps * eps;
    let tol = T::tol_floor() * e2;
    let mut visits = field
        .events
        .iter()
        .map(|e| (e.level, e.arrival, e.time))
        .chain(std::iter::once((field.open_visit.0, field.open_visit.1, field.horizon)))
        .peekable();
    let mut pos = T::zero();
    for &t in times {
        while pos < t {
            let Some(&(j0, a, b)) = visits.peek() else { break };
            let end = b.min(t);
            if end > pos {
                let mut failure = None;
                let q = adaptive_simpson(
                    |s: T| {
                        let rate = unit_hazard((s - a) / e2).value;
                        if rate == T::zero() {
                            // also keeps the left endpoint, which belongs to the previous interval, unevaluated
                            return T::zero();
                        }
                        match (alpha(j0, s), alpha(j0 + 1, s)) {
                            (Ok(lo), Ok(hi)) => (lo - hi) / eps * rate,
                            (Err(e), _) | (_, Err(e)) => {
                                failure.get_or_insert(e);
                                T::zero()
                            }
                        }
                    },
                    pos.max(a),
                    end,
                    tol,
                );
                if let Some(e) = failure {
                    return Err(e);
                }
                if !q.converged {
                    return Err(crate::error::Error::Domain(format!("occupation quadrature failed on [{pos}, {end}]")));
                }
                acc = acc + q.value;
                pos = end;
            }
            if b <= t {
                visits.next();
            }
        }
        out.push(acc);
    }
    Ok(ClockTrace { values: out, clock, fell_back: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SbpCheck<T> {
    /// `½ ∫ D2 X d<clock>`.
    pub lhs: T,
    /// `-½ ∫∫ ∇X dL`.
    pub rhs: T,
    pub residual: T,
}

/// Both sides of the pathwise summation by parts with the same clock.
pub fn summation_by_parts_check<T: Real>(
    f: &(impl Functional<T> + ?Sized),
    skeleton: &Skeleton<T>,
    t: T,
    clock: Clock,
) -> Result<SbpCheck<T>> {
    let path = skeleton.to_stepped();
    let field = OccupationField::from_skeleton(skeleton);
    let half = T::lit(0.5);
    let lhs = {
        let mut ev = SkeletonEvaluator::new(f, skeleton, &path);
        clock_weighted(skeleton, t, clock, |s| ev.d_second(s))?.value * half
    };
    let rhs = {
        let mut ev = SkeletonEvaluator::new(f, skeleton, &path);
        -half * integrate_vs_occupation(&field, t, clock, |j, s| ev.vertical_gradient(s, j))?.value
    };
    Ok(SbpCheck { lhs, rhs, residual: (lhs - rhs).abs() })
}

/// Occupation-formula check `∫ f(x) ℓ(x) dx` vs `∫_0^t f(B(s)) ds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationResidual<T> {
    pub test_function: String,
    pub lhs: T,
    pub rhs: T,
    pub residual: T,
    /// Known smoothing bias of the binned density for this test function.
    pub bandwidth_bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeOracle<T> {
    pub field: GridField<T>,
    pub bandwidth: T,
    /// The requested bandwidth was below `2 sqrt(dt)` and was raised.
    pub widened: bool,
    /// Residuals at the last grid time for `f = 1` and `f = x^2`.
    pub residuals: Vec<OccupationResidual<T>>,
}

/// `(1/2h) Leb{s <= t : |B(s) - x| <= h}` for the linearly interpolated path,
/// on a `times × xs` grid. `xs` must be increasing and `times` nondecreasing
/// within the path's horizon. Default bandwidth `4 sqrt(dt)`.
pub fn local_time_oracle<T: Real>(
    path: &ContinuousPath<T>,
    times: &[T],
    xs: &[T],
    bandwidth: Option<T>,
) -> Result<LocalTimeOracle<T>> {
    if times.is_empty() || xs.is_empty() {
        return Err(invalid("oracle grid axes must be nonempty"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("oracle grid axes must be sorted"));
    }
    let horizon = path.time(path.len() - 1);
    if times[0] < T::zero() || *times.last().unwrap() > horizon {
        return Err(invalid(format!("oracle times must lie in [0, {horizon}]")));
    }
    let floor = T::lit(2.0) * path.dt.sqrt();
    let requested = bandwidth.unwrap_or(T::lit(4.0) * path.dt.sqrt());
    let widened = requested < floor;
    let h = requested.max(floor);

    let nx = xs.len();
    let mut measure = vec![T::zero(); nx];
    let mut values = Vec::with_capacity(times.len() * nx);
    let add_segment = |measure: &mut [T], s0: T, s1: T, b0: T, b1: T| {
        let len = s1 - s0;
        if len <= T::zero() {
            return;
        }
        let (lo, hi) = if b0 <= b1 { (b0, b1) } else { (b1, b0) };
        let first = xs.partition_point(|&x| x + h < lo);
        let last = xs.partition_point(|&x| x - h <= hi);
        for j in first..last {
            let (a, b) = (xs[j] - h, xs[j] + h);
            let frac = if hi > lo {
                (hi.min(b) - lo.max(a)).max(T::zero()) / (hi - lo)
            } else if (lo - xs[j]).abs() <= h {
                T::one()
            } else {
                T::zero()
            };
            measure[j] = measure[j] + frac * len;
        }
    };
    let scale = T::one() / (T::lit(2.0) * h);
    let mut seg = 0usize;
    let mut done_to = T::zero();
    for &t in times {
        // whole segments ending by t
        while seg + 1 < path.len() && path.time(seg + 1) <= t {
            let (s0, s1) = (path.time(seg), path.time(seg + 1));
            let b0 = path.value_at(done_to.max(s0));
            add_segment(&mut measure, done_to.max(s0), s1, b0, path.values[seg + 1]);
            seg += 1;
            done_to = s1;
        }
        if done_to < t {
            add_segment(&mut measure, done_to, t, path.value_at(done_to), path.value_at(t));
            done_to = t;
        }
        values.extend(measure.iter().map(|&m| m * scale));
    }
    let field = GridField::new(times.to_vec(), xs.to_vec(), values)?;

    let t = *times.last().unwrap();
    let last_row = field.row(field.n_times() - 1);
    let integrate_x = |g: &dyn Fn(T) -> T| {
        (0..nx - 1).fold(T::zero(), |acc, j| {
            acc + (g(xs[j]) * last_row[j] + g(xs[j + 1]) * last_row[j + 1]) * (xs[j + 1] - xs[j]) / T::lit(2.0)
        })
    };
    let square_time_integral = (0..path.len() - 1).take_while(|&i| path.time(i) < t).fold(T::zero(), |acc, i| {
        let (s0, s1) = (path.time(i), path.time(i + 1).min(t));
        let (b0, b1) = (path.values[i], path.value_at(s1));
        acc + (s1 - s0) * (b0 * b0 + b0 * b1 + b1 * b1) / T::lit(3.0)
    });
    let residual = |name: &str, lhs: T, rhs: T, bias: T| OccupationResidual {
        test_function: name.to_string(),
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        bandwidth_bias: bias,
    };
    let residuals = vec![
        residual("one", integrate_x(&|_| T::one()), t, T::zero()),
        residual("square", integrate_x(&|x| x * x), square_time_integral, h * h * t / T::lit(3.0)),
    ];
    Ok(LocalTimeOracle { field, bandwidth: h, widened, residuals })
}

/// `sup |L^{x}(t) - ℓ(x, t)|` over an oracle grid.
pub fn occupation_sup_error<T: Real>(field: &OccupationField<T>, oracle: &GridField<T>) -> Result<T> {
    let mut worst = T::zero();
    for (i, &t) in oracle.times.iter().enumerate() {
        for (j, &x) in oracle.xs.iter().enumerate() {
            let v = field.level_value(field.level_of(x), t)?;
            worst = worst.max((v - oracle.get(i, j)).abs());
        }
    }
    Ok(worst)
}
