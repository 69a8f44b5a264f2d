//! Karandikar's pathwise stochastic integral.
//!
//! For a mesh `q`, stopping times `a_0 = 0`, `a_{i+1} = inf{s >= a_i :
//! |rho(s) - rho(a_i)| >= q}` discretize the integrand and
//! `I_t = rho(0) eta(0) + sum_i rho(a_i) (eta(a_{i+1} ∧ t) - eta(a_i ∧ t))`.
//! The sum is evaluated exactly for piecewise-constant and piecewise-linear
//! integrands; along a linear segment the level crossings are counted
//! arithmetically unless every stopping time is needed.

use super::{check_time, BetweenJumps, Functional};
use crate::error::{invalid, Result};
use crate::path_engine::{ContinuousPath, SteppedPath};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Right-continuous, held constant between knots.
    Step,
    /// Linear between knots; a repeated knot time encodes a jump.
    Linear,
}

/// Path given by knots; held at the last value after the final knot.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotPath<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub interpolation: Interpolation,
}

impl<T: Real> KnotPath<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, interpolation: Interpolation) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid("knot path needs equally many times and values, at least one"));
        }
        if times[0] != T::zero() {
            return Err(invalid("knot path must start at time 0"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("knot times must be nondecreasing"));
        }
        Ok(Self { times, values, interpolation })
    }

    pub fn from_stepped(c: &SteppedPath<T>, t: T) -> Self {
        let m = c.jumps_up_to(t);
        let mut times = Vec::with_capacity(m + 1);
        let mut values = Vec::with_capacity(m + 1);
        times.push(T::zero());
        values.push(c.initial_value);
        times.extend_from_slice(&c.jump_times[..m]);
        values.extend_from_slice(&c.values_after_jump[..m]);
        Self { times, values, interpolation: Interpolation::Step }
    }

    pub fn value_at(&self, t: T) -> T {
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        match self.interpolation {
            Interpolation::Step => self.values[k],
            Interpolation::Linear => {
                if k + 1 < self.times.len() && self.times[k + 1] > self.times[k] && t > self.times[k] {
                    let (t0, t1) = (self.times[k], self.times[k + 1]);
                    let (v0, v1) = (self.values[k], self.values[k + 1]);
                    v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
                } else {
                    self.values[k]
                }
            }
        }
    }
}

/// Walks the stopping times of `rho` for one mesh.
struct Cursor<'a, T> {
    rho: &'a KnotPath<T>,
    q: T,
    k: usize,
    u: T,
    w: T,
    reference: T,
}

impl<'a, T: Real> Cursor<'a, T> {
    fn new(rho: &'a KnotPath<T>, q: T) -> Self {
        let k = rho.times.partition_point(|&s| s <= T::zero()) - 1;
        let w = rho.values[k];
        Self { rho, q, k, u: T::zero(), w, reference: w }
    }

    /// Processes `rho` on `[u, until)`, reporting every stopping time when
    /// `emit` is given.
    fn advance<E: FnMut(T, T)>(&mut self, until: T, mut emit: Option<&mut E>) {
        let times = &self.rho.times;
        let values = &self.rho.values;
        match self.rho.interpolation {
            Interpolation::Step => {
                while self.k + 1 < times.len() && times[self.k + 1] < until {
                    self.k += 1;
                    let v = values[self.k];
                    if (v - self.reference).abs() >= self.q {
                        self.reference = v;
                        if let Some(e) = emit.as_deref_mut() {
                            e(times[self.k], v);
                        }
                    }
                }
            }
            Interpolation::Linear => loop {
                if self.k + 1 >= times.len() || self.u >= until {
                    return;
                }
                let (t0, t1) = (times[self.k], times[self.k + 1]);
                let (v0, v1) = (values[self.k], values[self.k + 1]);
                if t1 == t0 {
                    // jump: at most one stop, at the jump time
                    if (v1 - self.reference).abs() >= self.q {
                        self.reference = v1;
                        if let Some(e) = emit.as_deref_mut() {
                            e(t1, v1);
                        }
                    }
                    self.k += 1;
                    self.w = v1;
                    continue;
                }
                if t1 < until {
                    self.sweep(t1, v1, false, emit.as_deref_mut());
                    self.k += 1;
                    self.u = t1;
                    self.w = v1;
                } else {
                    let we = v0 + (v1 - v0) * ((until - t0) / (t1 - t0));
                    self.sweep(until, we, true, emit.as_deref_mut());
                    self.u = until;
                    self.w = we;
                    return;
                }
            },
        }
    }

    /// Level crossings on the monotone piece from `(u, w)` to `(s1, w1)`;
    /// with `open_end` a crossing exactly at `s1` is left for later.
    fn sweep<E: FnMut(T, T)>(&mut self, s1: T, w1: T, open_end: bool, emit: Option<&mut E>) {
        let (u, w, r, q) = (self.u, self.w, self.reference, self.q);
        if w1 == w {
            return;
        }
        let up = w1 > w;
        let dir = if up { T::one() } else { -T::one() };
        let level = |m: T| r + dir * m * q;
        let reached = |lv: T| {
            let past = if up { lv < w1 } else { lv > w1 };
            past || (!open_end && lv == w1)
        };
        let mut m = ((w1 - r) * dir / q).floor().max(T::zero());
        while m > T::zero() && !reached(level(m)) {
            m = m - T::one();
        }
        while reached(level(m + T::one())) {
            m = m + T::one();
        }
        if m == T::zero() {
            return;
        }
        if let Some(e) = emit {
            let mut i = T::one();
            while i <= m {
                let lv = level(i);
                e(u + (s1 - u) * ((lv - w) / (w1 - w)), lv);
                i = i + T::one();
            }
        }
        self.reference = level(m);
    }
}

/// `I_t` for one mesh `q`.
pub fn karandikar_sum<T: Real>(rho: &KnotPath<T>, eta: &KnotPath<T>, t: T, q: T) -> T {
    let mut cursor = Cursor::new(rho, q);
    let mut sum = cursor.reference * eta.value_at(T::zero());
    match eta.interpolation {
        Interpolation::Step => {
            let start = eta.times.partition_point(|&s| s <= T::zero());
            for m in start..eta.times.len() {
                let tau = eta.times[m];
                if tau > t {
                    break;
                }
                cursor.advance(tau, None::<&mut fn(T, T)>);
                sum = sum + cursor.reference * (eta.values[m] - eta.values[m - 1]);
            }
        }
        Interpolation::Linear => {
            let mut prev_a = T::zero();
            let mut prev_r = cursor.reference;
            let mut emit = |a: T, r: T| {
                sum = sum + prev_r * (eta.value_at(a) - eta.value_at(prev_a));
                prev_a = a;
                prev_r = r;
            };
            cursor.advance(t, Some(&mut emit));
            sum = sum + prev_r * (eta.value_at(t) - eta.value_at(prev_a));
        }
    }
    sum
}

/// `q_n = 2^{-n}` for `n` in `first..=last`.
pub fn dyadic_mesh<T: Real>(first: u32, last: u32) -> Vec<T> {
    (first..=last).map(|n| T::lit(2f64.powi(-(n as i32)))).collect()
}

/// Integral across a mesh sequence with its Cauchy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoTrace<T> {
    /// Value at the finest mesh.
    pub value: T,
    pub trace: Vec<T>,
    pub meshes: Vec<T>,
    pub tolerance: T,
    /// Whether the last two levels agree within `tolerance`; otherwise the
    /// limit was not reached and `value` is the finest level only.
    pub converged: bool,
}

pub(crate) fn check_mesh<T: Real>(mesh: &[T]) -> Result<()> {
    if mesh.is_empty() {
        return Err(invalid("mesh sequence is empty"));
    }
    if mesh.iter().any(|q| !(*q > T::zero()) || !q.is_finite()) {
        return Err(invalid("mesh sizes must be positive and finite"));
    }
    if mesh.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("mesh sizes must be strictly decreasing"));
    }
    Ok(())
}

fn run_trace<T: Real>(rho: &KnotPath<T>, eta: &KnotPath<T>, t: T, mesh: &[T], tol: T) -> ItoTrace<T> {
    let trace: Vec<T> = mesh.iter().map(|&q| karandikar_sum(rho, eta, t, q)).collect();
    let n = trace.len();
    let converged = n < 2 || (trace[n - 1] - trace[n - 2]).abs() <= tol;
    ItoTrace { value: trace[n - 1], trace, meshes: mesh.to_vec(), tolerance: tol, converged }
}

/// The integrand `s ↦ Z_s(c_s)` on `[0, t]` as a knot path. Functionals that
/// are not piecewise constant or affine between jumps are sampled every
/// `resolution` and interpolated linearly.
pub fn integrand_path<T: Real>(
    z: &(impl Functional<T> + ?Sized),
    c: &SteppedPath<T>,
    t: T,
    resolution: T,
) -> Result<KnotPath<T>> {
    check_time(t)?;
    let mut bound = z.bind(c);
    let m = c.jumps_before(t);
    let jumps = &c.jump_times[..m];
    let mut times = vec![T::zero()];
    let mut values = vec![bound.eval_modified(T::zero(), c.value_at(T::zero()))?];
    match z.capabilities().between_jumps {
        BetweenJumps::Constant => {
            for (i, &tau) in jumps.iter().enumerate() {
                times.push(tau);
                values.push(bound.eval_modified(tau, c.values_after_jump[i])?);
            }
            return KnotPath::new(times, values, Interpolation::Step);
        }
        BetweenJumps::Linear => {
            for &tau in jumps {
                times.push(tau);
                values.push(bound.eval_modified(tau, c.value_before(tau))?);
                times.push(tau);
                values.push(bound.eval_modified(tau, c.value_at(tau))?);
            }
        }
        BetweenJumps::General => {
            if !(resolution > T::zero()) {
                return Err(invalid("sampling resolution must be positive"));
            }
            let mut next = 0;
            let mut grid = 1usize;
            loop {
                let g = resolution * T::from_usize_lossy(grid);
                let tau = jumps.get(next).copied();
                match tau {
                    Some(tau) if tau <= g && tau < t => {
                        times.push(tau);
                        values.push(bound.eval_modified(tau, c.value_before(tau))?);
                        times.push(tau);
                        values.push(bound.eval_modified(tau, c.value_at(tau))?);
                        next += 1;
                        if tau == g {
                            grid += 1;
                        }
                    }
                    _ if g < t => {
                        times.push(g);
                        values.push(bound.eval_modified(g, c.value_at(g))?);
                        grid += 1;
                    }
                    _ => break,
                }
            }
        }
    }
    if *times.last().unwrap() < t {
        times.push(t);
        values.push(bound.eval_modified(t, c.value_before(t))?);
    }
    KnotPath::new(times, values, Interpolation::Linear)
}

/// `∫_0^t Z_s(c_s) dc(s)` across `mesh`, for a stepped `c`.
pub fn pathwise_ito_integral<T: Real>(
    z: &(impl Functional<T> + ?Sized),
    c: &SteppedPath<T>,
    t: T,
    mesh: &[T],
    tol: T,
) -> Result<ItoTrace<T>> {
    check_mesh(mesh)?;
    let resolution = *mesh.last().unwrap() * *mesh.last().unwrap();
    let rho = integrand_path(z, c, t, resolution)?;
    let eta = KnotPath::from_stepped(c, t);
    Ok(run_trace(&rho, &eta, t, mesh, tol))
}

/// Same for a sampled path: both the integrator and `Z` (evaluated on the
/// samples read as a step path) are held constant between grid times.
pub fn pathwise_ito_integral_sampled<T: Real>(
    z: &(impl Functional<T> + ?Sized),
    path: &ContinuousPath<T>,
    t: T,
    mesh: &[T],
    tol: T,
) -> Result<ItoTrace<T>> {
    check_mesh(mesh)?;
    check_time(t)?;
    let c = path.to_stepped();
    let eta = KnotPath::from_stepped(&c, t);
    let mut bound = z.bind(&c);
    let mut values = Vec::with_capacity(eta.times.len());
    for (&s, &x) in eta.times.iter().zip(&eta.values) {
        values.push(bound.eval_modified(s, x)?);
    }
    let rho = KnotPath::new(eta.times.clone(), values, Interpolation::Step)?;
    Ok(run_trace(&rho, &eta, t, mesh, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{constant, identity_terminal, integral_time, ScalarFn};

    /// Direct transcription of the stopping-time definition on a fine grid.
    fn brute(rho: impl Fn(f64) -> f64, eta: impl Fn(f64) -> f64, t: f64, q: f64, n: usize) -> f64 {
        let mut a = 0.0;
        let mut sum = rho(0.0) * eta(0.0);
        let mut r = rho(0.0);
        for i in 1..=n {
            let s = t * i as f64 / n as f64;
            if (rho(s) - r).abs() >= q && s < t {
                sum += r * (eta(s) - eta(a));
                a = s;
                r = rho(s);
            }
        }
        sum + r * (eta(t) - eta(a))
    }

    #[test]
    fn unit_integrand_telescopes() {
        let c = SteppedPath::new(0.2, vec![0.1, 0.3, 0.6], vec![0.5, -0.25, 1.5]).unwrap();
        let one = constant(1.0);
        let r = pathwise_ito_integral::<f64>(&one, &c, 1.0, &dyadic_mesh(1, 6), 1e-12).unwrap();
        assert!(r.trace.iter().all(|v| (v - 1.5).abs() < 1e-15));
        assert!(r.converged);
    }

    #[test]
    fn linear_integrand_matches_brute_force() {
        let rho = KnotPath::new(vec![0.0, 0.4, 0.4, 1.0], vec![0.0, 1.0, 0.3, -0.6], Interpolation::Linear).unwrap();
        let eta = KnotPath::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 3.0], Interpolation::Linear).unwrap();
        for &q in &[0.3, 0.17, 0.05] {
            let fast = karandikar_sum(&rho, &eta, 0.9, q);
            let slow = brute(|s| rho.value_at(s), |s| eta.value_at(s), 0.9, q, 2_000_000);
            assert!((fast - slow).abs() < 1e-4, "q = {q}: {fast} vs {slow}");
        }
        let step_eta = KnotPath::new(vec![0.0, 0.2, 0.45, 0.8], vec![1.0, 2.0, 0.0, 5.0], Interpolation::Step).unwrap();
        for &q in &[0.3, 0.11] {
            let fast = karandikar_sum(&rho, &step_eta, 0.9, q);
            let slow = brute(|s| rho.value_at(s), |s| step_eta.value_at(s), 0.9, q, 2_000_000);
            assert!((fast - slow).abs() < 1e-5, "q = {q}: {fast} vs {slow}");
        }
    }

    #[test]
    fn skipping_agrees_with_enumeration() {
        let rho = KnotPath::new(vec![0.0, 0.3, 0.7, 1.0], vec![0.0, 2.0, -1.0, 0.5], Interpolation::Linear).unwrap();
        let step_eta = KnotPath::new(vec![0.0, 0.35, 0.93], vec![0.0, 1.0, 2.0], Interpolation::Step).unwrap();
        let lin_eta = KnotPath::new(
            vec![0.0, 0.35, 0.35, 0.93, 0.93, 1.0],
            vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0],
            Interpolation::Linear,
        )
        .unwrap();
        for &q in &[0.5f64, 0.1, 0.013] {
            let a = karandikar_sum(&rho, &step_eta, 1.0, q);
            let b = karandikar_sum(&rho, &lin_eta, 1.0, q);
            assert!((a - b).abs() < 1e-12, "q = {q}: {a} vs {b}");
        }
    }

    #[test]
    fn terminal_modification_is_linear_in_the_terminal_value() {
        let c = SteppedPath::new(0.0, vec![0.2, 0.5, 0.7], vec![0.3, -0.1, 0.4]).unwrap();
        let z = identity_terminal();
        let t = 0.9;
        let mesh = dyadic_mesh(1, 30);
        let base = pathwise_ito_integral::<f64>(&z, &c, t, &mesh, 1e-12).unwrap().value;
        for &x in &[-1.0, 0.0, 2.5] {
            let m = pathwise_ito_integral::<f64>(&z, &c.with_terminal(t, x), t, &mesh, 1e-12).unwrap().value;
            let predicted = Functional::<f64>::eval(&z, t, &c).unwrap() * (x - c.value_at(t));
            assert!((m - base - predicted).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn linear_integrand_from_integral_functional() {
        let c = SteppedPath::new(1.0, vec![0.5], vec![2.0]).unwrap();
        let z = integral_time(ScalarFn::Identity).unwrap();
        let rho = integrand_path::<f64>(&z, &c, 1.0, 1e-3).unwrap();
        assert_eq!(rho.interpolation, Interpolation::Linear);
        assert!((rho.value_at(0.25) - 0.25).abs() < 1e-15);
        assert!((rho.value_at(0.75) - 1.0).abs() < 1e-15);
        // integrand is continuous here, so the jump at 0.5 is weighted by 0.5
        let r = pathwise_ito_integral::<f64>(&z, &c, 1.0, &dyadic_mesh(4, 20), 1e-5).unwrap();
        assert!((r.value - 0.5).abs() < 1e-5);
    }

    #[test]
    fn mesh_validation() {
        let c = SteppedPath::constant(0.0);
        let z = identity_terminal();
        assert!(pathwise_ito_integral::<f64>(&z, &c, 1.0, &[], 1e-6).is_err());
        assert!(pathwise_ito_integral::<f64>(&z, &c, 1.0, &[0.1, 0.2], 1e-6).is_err());
    }
}
