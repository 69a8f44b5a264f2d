//! Built-in functionals.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::karandikar::{check_mesh, integrand_path, karandikar_sum, KnotPath};
use super::{
    check_time, path_integral, BetweenJumps, BoundFunctional, Capabilities, Functional, PrefixIntegral, ScalarFn,
};
use crate::error::{Error, Result};
use crate::path_engine::SteppedPath;
use crate::quadrature::adaptive_simpson;
use crate::real::Real;

fn config(field: &str, msg: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), msg: msg.into() }
}

fn validated(field: &str, f: &ScalarFn) -> Result<()> {
    f.validate().map_err(|m| config(field, m))
}

/// `F_t(c) = f(c(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    name: String,
    f: ScalarFn,
}

pub fn terminal(f: ScalarFn) -> Result<Terminal> {
    validated("f", &f)?;
    Ok(Terminal { name: "terminal".into(), f })
}

pub fn identity_terminal() -> Terminal {
    Terminal { name: "identity".into(), f: ScalarFn::Identity }
}

pub fn quadratic_terminal() -> Terminal {
    Terminal { name: "quadratic".into(), f: ScalarFn::Polynomial { coeffs: vec![0.0, 0.0, 1.0] } }
}

pub fn constant(value: f64) -> Terminal {
    Terminal { name: "constant".into(), f: ScalarFn::Constant { value } }
}

impl Terminal {
    pub fn function(&self) -> &ScalarFn {
        &self.f
    }
}

impl<T: Real> Functional<T> for Terminal {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            closed_form_gradient: self.f.derivative(T::zero()).is_some(),
            time_homogeneous: true,
            between_jumps: BetweenJumps::Constant,
        }
    }

    fn eval_modified(&self, t: T, _c: &SteppedPath<T>, x: T) -> Result<T> {
        check_time(t)?;
        Ok(self.f.eval(x))
    }

    fn vertical_gradient(&self, _t: T, _c: &SteppedPath<T>, x: T) -> Option<Result<T>> {
        self.f.derivative(x).map(Ok)
    }

    fn constant_value(&self) -> Option<T> {
        self.f.is_constant().map(T::lit)
    }
}

/// `F_t(c) = ∫_0^t f(c(s)) ds`; blind to the terminal value.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralTime {
    f: ScalarFn,
}

pub fn integral_time(f: ScalarFn) -> Result<IntegralTime> {
    validated("f", &f)?;
    Ok(IntegralTime { f })
}

impl IntegralTime {
    pub fn function(&self) -> &ScalarFn {
        &self.f
    }
}

impl<T: Real> Functional<T> for IntegralTime {
    fn name(&self) -> &str {
        "integral_time"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { closed_form_gradient: true, time_homogeneous: false, between_jumps: BetweenJumps::Linear }
    }

    fn eval_modified(&self, t: T, c: &SteppedPath<T>, _x: T) -> Result<T> {
        check_time(t)?;
        Ok(path_integral(|v| self.f.eval(v), c, t))
    }

    fn vertical_gradient(&self, _t: T, _c: &SteppedPath<T>, _x: T) -> Option<Result<T>> {
        Some(Ok(T::zero()))
    }

    fn bind<'a>(&'a self, c: &'a SteppedPath<T>) -> Box<dyn BoundFunctional<T> + 'a> {
        Box::new(BoundIntegral { c, prefix: PrefixIntegral::new(|v| self.f.eval(v), c) })
    }
}

struct BoundIntegral<'a, T> {
    c: &'a SteppedPath<T>,
    prefix: PrefixIntegral<T>,
}

impl<T: Real> BoundFunctional<T> for BoundIntegral<'_, T> {
    fn eval_modified(&mut self, t: T, _x: T) -> Result<T> {
        check_time(t)?;
        Ok(self.prefix.at(self.c, t))
    }

    fn vertical_gradient(&mut self, _t: T, _x: T) -> Option<Result<T>> {
        Some(Ok(T::zero()))
    }
}

/// `F_t(c) = sup_{s <= t} c(s)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMax;

pub fn running_max() -> RunningMax {
    RunningMax
}

fn max_before<T: Real>(c: &SteppedPath<T>, t: T) -> T {
    let m = c.jumps_before(t);
    c.values_after_jump[..m].iter().fold(c.initial_value, |a, &b| a.max(b))
}

impl<T: Real> Functional<T> for RunningMax {
    fn name(&self) -> &str {
        "running_max"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { closed_form_gradient: true, time_homogeneous: true, between_jumps: BetweenJumps::Constant }
    }

    fn eval_modified(&self, t: T, c: &SteppedPath<T>, x: T) -> Result<T> {
        check_time(t)?;
        Ok(max_before(c, t).max(x))
    }

    /// One-sided: `1` when the terminal value is a strict new maximum.
    fn vertical_gradient(&self, t: T, c: &SteppedPath<T>, x: T) -> Option<Result<T>> {
        Some(Ok(if x > max_before(c, t) { T::one() } else { T::zero() }))
    }

    fn bind<'a>(&'a self, c: &'a SteppedPath<T>) -> Box<dyn BoundFunctional<T> + 'a> {
        let mut prefix = Vec::with_capacity(c.jump_times.len() + 1);
        let mut m = c.initial_value;
        prefix.push(m);
        for &v in &c.values_after_jump {
            m = m.max(v);
            prefix.push(m);
        }
        Box::new(BoundMax { c, prefix })
    }
}

struct BoundMax<'a, T> {
    c: &'a SteppedPath<T>,
    prefix: Vec<T>,
}

impl<T: Real> BoundFunctional<T> for BoundMax<'_, T> {
    fn eval_modified(&mut self, t: T, x: T) -> Result<T> {
        check_time(t)?;
        Ok(self.prefix[self.c.jumps_before(t)].max(x))
    }

    fn vertical_gradient(&mut self, t: T, x: T) -> Option<Result<T>> {
        Some(Ok(if x > self.prefix[self.c.jumps_before(t)] { T::one() } else { T::zero() }))
    }
}

/// One separable term `weight(a) * profile(y)` of a kernel `φ(a, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub weight: ScalarFn,
    pub profile: ScalarFn,
}

/// `F_t(c) = ∫_{-∞}^{c(t)} ∫_0^t φ(c(s), y) ds dy` for a kernel with compact
/// support in `y`, given as a sum of separable terms.
#[derive(Debug)]
pub struct ExPhi {
    terms: Vec<KernelTerm>,
    supports: Vec<(f64, f64)>,
    exponents: (f64, f64),
    cache: RwLock<HashMap<(usize, u64), f64>>,
}

impl Clone for ExPhi {
    fn clone(&self) -> Self {
        Self {
            terms: self.terms.clone(),
            supports: self.supports.clone(),
            exponents: self.exponents,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

const PRIMITIVE_TOL: f64 = 1e-10;

/// Builds the kernel functional. `declared` Hölder exponents `(γ1, γ2)` of
/// `φ(a, y)` in `y` and in `a` are checked against the term functions.
pub fn ex_phi(terms: Vec<KernelTerm>, declared: Option<(f64, f64)>) -> Result<ExPhi> {
    if terms.is_empty() {
        return Err(config("terms", "kernel needs at least one term"));
    }
    let mut supports = Vec::with_capacity(terms.len());
    for term in &terms {
        validated("weight", &term.weight)?;
        validated("profile", &term.profile)?;
        let s = term.profile.support().ok_or_else(|| config("profile", "kernel profile must have compact support"))?;
        supports.push(s);
    }
    // γ1 acts on the space argument `y`, γ2 on the path argument `a`
    let measured = (
        terms.iter().map(|t| t.profile.holder_exponent()).fold(1.0, f64::min),
        terms.iter().map(|t| t.weight.holder_exponent()).fold(1.0, f64::min),
    );
    let exponents = match declared {
        None => measured,
        Some((g1, g2)) => {
            for (name, g, m) in [("gamma1", g1, measured.0), ("gamma2", g2, measured.1)] {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(config(name, format!("Hölder exponent must lie in (0, 1], got {g}")));
                }
                if g > m {
                    return Err(config(name, format!("kernel is not Hölder of order {g} (at most {m})")));
                }
            }
            (g1, g2)
        }
    };
    Ok(ExPhi { terms, supports, exponents, cache: RwLock::new(HashMap::new()) })
}

impl ExPhi {
    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    /// Hölder exponents `(γ1, γ2)` in use (declared, else those of the terms).
    pub fn exponents(&self) -> (f64, f64) {
        self.exponents
    }

    /// Union of the profile supports.
    pub fn support(&self) -> (f64, f64) {
        self.supports.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(l, h)| (a.min(l), b.max(h)))
    }

    pub fn phi<T: Real>(&self, a: T, y: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, term| acc + term.weight.eval(a) * term.profile.eval(y))
    }

    /// `∫_{-∞}^x profile_r(y) dy`, cached per `(r, x)`.
    pub fn profile_primitive(&self, r: usize, x: f64) -> Result<f64> {
        let (lo, hi) = self.supports[r];
        if x <= lo {
            return Ok(0.0);
        }
        let upper = x.min(hi);
        let key = (r, upper.to_bits());
        if let Some(&v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let profile = &self.terms[r].profile;
        let q = adaptive_simpson(|y: f64| profile.eval(y), lo, upper, PRIMITIVE_TOL);
        if !q.converged {
            return Err(Error::Domain(format!("kernel primitive did not converge at x = {x}")));
        }
        self.cache.write().expect("cache lock").insert(key, q.value);
        Ok(q.value)
    }

    /// `∫_{-∞}^x φ(a, y) dy`.
    pub fn primitive<T: Real>(&self, a: T, x: T) -> Result<T> {
        let mut acc = T::zero();
        for (r, term) in self.terms.iter().enumerate() {
            acc = acc + term.weight.eval(a) * T::lit(self.profile_primitive(r, x.f64())?);
        }
        Ok(acc)
    }

    fn combine<T: Real>(&self, integrals: impl Iterator<Item = T>, x: T) -> Result<T> {
        let mut acc = T::zero();
        for (r, i) in integrals.enumerate() {
            acc = acc + i * T::lit(self.profile_primitive(r, x.f64())?);
        }
        Ok(acc)
    }

    fn gradient<T: Real>(&self, integrals: impl Iterator<Item = T>, x: T) -> T {
        integrals.zip(&self.terms).fold(T::zero(), |acc, (i, term)| acc + i * term.profile.eval(x))
    }
}

impl<T: Real> Functional<T> for ExPhi {
    fn name(&self) -> &str {
        "ex_phi"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { closed_form_gradient: true, time_homogeneous: false, between_jumps: BetweenJumps::Linear }
    }

    fn eval_modified(&self, t: T, c: &SteppedPath<T>, x: T) -> Result<T> {
        check_time(t)?;
        self.combine(self.terms.iter().map(|term| path_integral(|v| term.weight.eval(v), c, t)), x)
    }

    /// `∫_0^t φ(c(s), x) ds`.
    fn vertical_gradient(&self, t: T, c: &SteppedPath<T>, x: T) -> Option<Result<T>> {
        if let Err(e) = check_time(t) {
            return Some(Err(e));
        }
        Some(Ok(self.gradient(self.terms.iter().map(|term| path_integral(|v| term.weight.eval(v), c, t)), x)))
    }

    fn bind<'a>(&'a self, c: &'a SteppedPath<T>) -> Box<dyn BoundFunctional<T> + 'a> {
        let prefixes = self.terms.iter().map(|term| PrefixIntegral::new(|v| term.weight.eval(v), c)).collect();
        Box::new(BoundExPhi { f: self, c, prefixes })
    }
}

struct BoundExPhi<'a, T> {
    f: &'a ExPhi,
    c: &'a SteppedPath<T>,
    prefixes: Vec<PrefixIntegral<T>>,
}

impl<T: Real> BoundFunctional<T> for BoundExPhi<'_, T> {
    fn eval_modified(&mut self, t: T, x: T) -> Result<T> {
        check_time(t)?;
        self.f.combine(self.prefixes.iter().map(|p| p.at(self.c, t)), x)
    }

    fn vertical_gradient(&mut self, t: T, x: T) -> Option<Result<T>> {
        if let Err(e) = check_time(t) {
            return Some(Err(e));
        }
        Some(Ok(self.f.gradient(self.prefixes.iter().map(|p| p.at(self.c, t)), x)))
    }
}

/// Parameters of the rough-drift class `X = M + J` with
/// `M_t = ∫_0^t Z dc` (pathwise Itô) and `J_t = ∫_0^t Y dg` (Young).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughDriftParams {
    /// Deterministic integrator `g`.
    pub g: ScalarFn,
    /// Declared Hölder exponent of `g`.
    pub g_exponent: f64,
    /// Mesh sequence for the martingale part; the finest entry is used.
    #[serde(default = "default_mesh")]
    pub mesh: Vec<f64>,
    /// Step of the left-point sums for the drift part.
    #[serde(default = "default_young_dt")]
    pub young_dt: f64,
}

fn default_mesh() -> Vec<f64> {
    (4..=20).map(|n| 2f64.powi(-n)).collect()
}

fn default_young_dt() -> f64 {
    2f64.powi(-12)
}

impl RoughDriftParams {
    pub fn new(g: ScalarFn, g_exponent: f64) -> Self {
        Self { g, g_exponent, mesh: default_mesh(), young_dt: default_young_dt() }
    }
}

#[derive(Debug, Clone)]
pub struct RoughDrift<T> {
    y: Arc<dyn Functional<T>>,
    z: Arc<dyn Functional<T>>,
    params: RoughDriftParams,
    q: T,
    young_dt: T,
}

pub fn rough_drift<T: Real>(
    y: Arc<dyn Functional<T>>,
    z: Arc<dyn Functional<T>>,
    params: RoughDriftParams,
) -> Result<RoughDrift<T>> {
    validated("g", &params.g)?;
    let gamma = params.g_exponent;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(config("g_exponent", format!("Hölder exponent must lie in (0, 1], got {gamma}")));
    }
    if params.g.holder_exponent() < gamma {
        return Err(config(
            "g_exponent",
            format!("g is not Hölder of order {gamma} (at most {})", params.g.holder_exponent()),
        ));
    }
    if y.constant_value().is_none() && gamma <= 0.5 {
        return Err(Error::YoungRegime(format!(
            "a path-dependent integrand against g needs g Hölder of order > 1/2, got {gamma}"
        )));
    }
    let mesh: Vec<T> = params.mesh.iter().map(|&q| T::lit(q)).collect();
    check_mesh(&mesh)?;
    if !(params.young_dt > 0.0) {
        return Err(config("young_dt", "must be positive"));
    }
    Ok(RoughDrift { q: *mesh.last().unwrap(), young_dt: T::lit(params.young_dt), y, z, params })
}

impl<T: Real> RoughDrift<T> {
    pub fn params(&self) -> &RoughDriftParams {
        &self.params
    }

    /// `g(t) - g(0)`.
    pub fn g_increment(&self, t: T) -> T {
        self.params.g.eval(t) - self.params.g.eval(T::zero())
    }

    /// Drift part `J_t(c)`.
    pub fn drift(&self, t: T, c: &SteppedPath<T>) -> Result<T> {
        check_time(t)?;
        if let Some(y0) = self.y.constant_value() {
            return Ok(y0 * self.g_increment(t));
        }
        let mut y = self.y.bind(c);
        let mut nodes = Nodes::new(c, self.young_dt);
        let mut acc = T::zero();
        let mut s = nodes.next_node();
        let mut ys = y.eval_modified(s, c.value_at(s))?;
        loop {
            let next = nodes.next_node();
            if next >= t {
                return Ok(acc + ys * (self.params.g.eval(t) - self.params.g.eval(s)));
            }
            acc = acc + ys * (self.params.g.eval(next) - self.params.g.eval(s));
            s = next;
            ys = y.eval_modified(s, c.value_at(s))?;
        }
    }

    /// Martingale part `M_t(t(c, x))` at the finest mesh.
    pub fn martingale(&self, t: T, c: &SteppedPath<T>, x: T) -> Result<T> {
        check_time(t)?;
        if let Some(z0) = self.z.constant_value() {
            return Ok(z0 * x);
        }
        let modified = c.with_terminal(t, x);
        let rho = integrand_path(self.z.as_ref(), &modified, t, self.q * self.q)?;
        let eta = KnotPath::from_stepped(&modified, t);
        Ok(karandikar_sum(&rho, &eta, t, self.q))
    }
}

/// Merged grid `{j * dt}` ∪ jump times, strictly increasing from 0.
struct Nodes<'a, T> {
    jumps: &'a [T],
    dt: T,
    j: usize,
    grid: usize,
    last: Option<T>,
}

impl<'a, T: Real> Nodes<'a, T> {
    fn new(c: &'a SteppedPath<T>, dt: T) -> Self {
        Self { jumps: &c.jump_times, dt, j: 0, grid: 0, last: None }
    }

    fn next_node(&mut self) -> T {
        loop {
            let g = self.dt * T::from_usize_lossy(self.grid);
            let candidate = match self.jumps.get(self.j) {
                Some(&tau) if tau <= g => {
                    self.j += 1;
                    tau
                }
                _ => {
                    self.grid += 1;
                    g
                }
            };
            if self.last.is_none_or(|l| candidate > l) {
                self.last = Some(candidate);
                return candidate;
            }
        }
    }
}

impl<T: Real> Functional<T> for RoughDrift<T> {
    fn name(&self) -> &str {
        "rough_drift"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            closed_form_gradient: true,
            time_homogeneous: false,
            between_jumps: if self.y.constant_value().is_some() && self.params.g.is_constant().is_some() {
                BetweenJumps::Constant
            } else {
                BetweenJumps::General
            },
        }
    }

    fn eval_modified(&self, t: T, c: &SteppedPath<T>, x: T) -> Result<T> {
        Ok(self.martingale(t, c, x)? + self.drift(t, c)?)
    }

    /// `Z_t` on the path frozen just before `t`; the exact finite-mesh slope
    /// differs from it by less than the mesh.
    fn vertical_gradient(&self, t: T, c: &SteppedPath<T>, _x: T) -> Option<Result<T>> {
        if let Some(z0) = self.z.constant_value() {
            return Some(Ok(z0));
        }
        Some(self.z.eval_modified(t, c, c.value_before(t)))
    }

    fn bind<'a>(&'a self, c: &'a SteppedPath<T>) -> Box<dyn BoundFunctional<T> + 'a> {
        Box::new(BoundRoughDrift {
            f: self,
            c,
            martingale: BoundMartingale::new(self, c),
            drift: DriftTable {
                nodes: Nodes::new(c, self.young_dt),
                times: Vec::new(),
                cum: Vec::new(),
                ys: Vec::new(),
            },
            y: None,
        })
    }
}

/// Prefix form of the martingale part for integrands that are constant
/// between jumps (same arithmetic as [`karandikar_sum`]).
enum BoundMartingale<T> {
    Constant(T),
    Prefix { sums: Vec<T>, refs: Vec<T>, first: usize },
    Fallback,
}

impl<T: Real> BoundMartingale<T> {
    fn new(f: &RoughDrift<T>, c: &SteppedPath<T>) -> Self {
        if let Some(z0) = f.z.constant_value() {
            return Self::Constant(z0);
        }
        if f.z.capabilities().between_jumps != BetweenJumps::Constant {
            return Self::Fallback;
        }
        let mut z = f.z.bind(c);
        let eta0 = c.value_at(T::zero());
        let Ok(rho0) = z.eval_modified(T::zero(), eta0) else { return Self::Fallback };
        let first = c.jumps_up_to(T::zero());
        let n = c.jump_times.len();
        // refs[m]: reference after the first m knots
        let mut refs = vec![rho0; first + 1];
        let mut r = rho0;
        for m in first..n {
            let Ok(v) = z.eval_modified(c.jump_times[m], c.values_after_jump[m]) else { return Self::Fallback };
            if (v - r).abs() >= f.q {
                r = v;
            }
            refs.push(r);
        }
        let mut sums = vec![T::zero(); first + 1];
        let mut acc = rho0 * eta0;
        sums[first] = acc;
        for m in first..n {
            let before = c.jumps_before(c.jump_times[m]);
            let prev = if m == 0 { c.initial_value } else { c.values_after_jump[m - 1] };
            acc = acc + refs[before] * (c.values_after_jump[m] - prev);
            sums.push(acc);
        }
        Self::Prefix { sums, refs, first }
    }
}

struct DriftTable<'a, T> {
    nodes: Nodes<'a, T>,
    times: Vec<T>,
    cum: Vec<T>,
    ys: Vec<T>,
}

struct BoundRoughDrift<'a, T: Real> {
    f: &'a RoughDrift<T>,
    c: &'a SteppedPath<T>,
    martingale: BoundMartingale<T>,
    drift: DriftTable<'a, T>,
    y: Option<Box<dyn BoundFunctional<T> + 'a>>,
}

impl<T: Real> BoundRoughDrift<'_, T> {
    fn martingale(&mut self, t: T, x: T) -> Result<T> {
        match &self.martingale {
            BoundMartingale::Constant(z0) => Ok(*z0 * x),
            BoundMartingale::Prefix { sums, refs, first } => {
                if t == T::zero() {
                    return self.f.martingale(t, self.c, x);
                }
                let m = self.c.jumps_before(t).max(*first);
                let prev = if m == 0 { self.c.initial_value } else { self.c.values_after_jump[m - 1] };
                Ok(sums[m] + refs[m] * (x - prev))
            }
            BoundMartingale::Fallback => self.f.martingale(t, self.c, x),
        }
    }

    fn drift(&mut self, t: T) -> Result<T> {
        let f = self.f;
        if let Some(y0) = f.y.constant_value() {
            return Ok(y0 * f.g_increment(t));
        }
        let g = |s: T| f.params.g.eval(s);
        let table = &mut self.drift;
        let y = self.y.get_or_insert_with(|| f.y.bind(self.c));
        if table.times.is_empty() {
            let s = table.nodes.next_node();
            table.times.push(s);
            table.cum.push(T::zero());
            table.ys.push(y.eval_modified(s, self.c.value_at(s))?);
        }
        // extend until a node at or beyond t exists
        while *table.times.last().unwrap() < t {
            let i = table.times.len() - 1;
            let s = table.nodes.next_node();
            let acc = table.cum[i] + table.ys[i] * (g(s) - g(table.times[i]));
            table.times.push(s);
            table.cum.push(acc);
            table.ys.push(y.eval_modified(s, self.c.value_at(s))?);
        }
        let i = table.times.partition_point(|&s| s < t).max(1) - 1;
        Ok(table.cum[i] + table.ys[i] * (g(t) - g(table.times[i])))
    }
}

impl<T: Real> BoundFunctional<T> for BoundRoughDrift<'_, T> {
    fn eval_modified(&mut self, t: T, x: T) -> Result<T> {
        check_time(t)?;
        Ok(self.martingale(t, x)? + self.drift(t)?)
    }

    fn vertical_gradient(&mut self, t: T, x: T) -> Option<Result<T>> {
        self.f.vertical_gradient(t, self.c, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{integral_time, pathwise_ito_integral};

    fn stepped() -> SteppedPath<f64> {
        SteppedPath::new(0.0, vec![0.1, 0.35, 0.6, 0.8], vec![0.25, 0.5, 0.25, 0.75]).unwrap()
    }

    #[test]
    fn terminal_family() {
        let eps = 0.25;
        let c = SteppedPath::new(0.0, vec![0.1, 0.2, 0.3], vec![eps, 2.0 * eps, 3.0 * eps]).unwrap();
        let id = identity_terminal();
        assert_eq!(Functional::<f64>::eval(&id, 0.5, &c).unwrap(), 3.0 * eps);
        assert_eq!(id.eval_modified(0.5, &c, 0.7).unwrap(), 0.7);
        assert_eq!(quadratic_terminal().eval_modified(0.5, &c, 1.5).unwrap(), 2.25);
        assert_eq!(Functional::<f64>::constant_value(&constant(2.0)), Some(2.0));
        assert!(terminal(ScalarFn::Bump { center: 0.0, radius: -1.0 }).is_err());
        assert!(Functional::<f64>::eval(&id, -1.0, &c).is_err());
    }

    #[test]
    fn integral_of_constant_path() {
        let a = 1.7;
        let f = integral_time(ScalarFn::Identity).unwrap();
        let c = SteppedPath::constant(a);
        assert!((Functional::<f64>::eval(&f, 2.0, &c).unwrap() - a * 2.0).abs() < 1e-15);
        let (ext, end) = stepped().horizontal_extension(0.7, 0.3).unwrap();
        let gain = f.eval(end, &ext).unwrap() - f.eval(0.7, &stepped()).unwrap();
        assert!((gain - 0.25 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn ex_phi_indicator_example() {
        // φ(a, y) = a 1_[0,1](y), c ≡ 1, t = 1
        let f = ex_phi(
            vec![KernelTerm { weight: ScalarFn::Identity, profile: ScalarFn::Indicator { lo: 0.0, hi: 1.0 } }],
            None,
        )
        .unwrap();
        let c = SteppedPath::constant(1.0);
        assert!((Functional::<f64>::eval(&f, 1.0, &c).unwrap() - 1.0).abs() < 1e-10);
        // gradient at constant path: t φ(a, x)
        let g = Functional::<f64>::vertical_gradient(&f, 0.5, &c, 0.3).unwrap().unwrap();
        assert!((g - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ex_phi_against_nested_quadrature() {
        let g = ScalarFn::Bump { center: 0.2, radius: 0.7 };
        let f = ex_phi(vec![KernelTerm { weight: ScalarFn::Identity, profile: g.clone() }], Some((1.0, 1.0))).unwrap();
        let c = stepped();
        let (t, x) = (0.9, 0.3);
        // midpoint rule in s (exact for stepped c) times Gauss-free fine trapezoid in y
        let n = 200_000;
        let (lo, hi) = (-0.5, x);
        let h = (hi - lo) / n as f64;
        let mut inner = 0.0;
        for i in 0..=n {
            let y = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            inner += w * g.eval(y);
        }
        inner *= h;
        let int_c: f64 = c.pieces(t).map(|(a, b, v)| v * (b - a)).sum();
        let oracle = int_c * inner;
        assert!((f.eval_modified(t, &c, x).unwrap() - oracle).abs() < 1e-9);
        assert!(ex_phi(vec![KernelTerm { weight: ScalarFn::Identity, profile: g.clone() }], Some((1.0, 1.2))).is_err());
        assert!(ex_phi(vec![KernelTerm { weight: ScalarFn::Identity, profile: ScalarFn::Identity }], None).is_err());
    }

    #[test]
    fn running_max_reads_past_and_terminal() {
        let c = stepped();
        let f = running_max();
        assert_eq!(Functional::<f64>::eval(&f, 0.7, &c).unwrap(), 0.5);
        assert_eq!(f.eval_modified(0.7, &c, 0.9).unwrap(), 0.9);
        assert_eq!(f.eval_modified(0.35, &c, 0.0).unwrap(), 0.25);
    }

    #[test]
    fn bound_evaluators_agree_bit_for_bit() {
        let c = stepped();
        let phi = ex_phi(
            vec![KernelTerm {
                weight: ScalarFn::Sin { amplitude: 1.0, frequency: 2.0, phase: 0.1 },
                profile: ScalarFn::Bump { center: 0.0, radius: 1.0 },
            }],
            None,
        )
        .unwrap();
        let rough = rough_drift::<f64>(
            Arc::new(integral_time(ScalarFn::Identity).unwrap()),
            Arc::new(identity_terminal()),
            RoughDriftParams {
                young_dt: 0.01,
                ..RoughDriftParams::new(ScalarFn::Weierstrass { exponent: 0.7, terms: 12 }, 0.7)
            },
        )
        .unwrap();
        let fs: Vec<Box<dyn Functional<f64>>> = vec![
            Box::new(integral_time(ScalarFn::Exp { rate: 0.5 }).unwrap()),
            Box::new(running_max()),
            Box::new(phi),
            Box::new(rough),
        ];
        for f in &fs {
            let mut b = f.bind(&c);
            for &t in &[0.0, 0.05, 0.1, 0.35, 0.5, 0.8, 0.95] {
                for &x in &[-0.3, 0.25, 1.0] {
                    assert_eq!(
                        b.eval_modified(t, x).unwrap(),
                        f.eval_modified(t, &c, x).unwrap(),
                        "{} t={t}",
                        f.name()
                    );
                }
            }
        }
    }

    #[test]
    fn rough_drift_with_unit_integrand_is_the_increment() {
        let g = ScalarFn::Weierstrass { exponent: 0.6, terms: 16 };
        let f =
            rough_drift::<f64>(Arc::new(constant(1.0)), Arc::new(constant(0.0)), RoughDriftParams::new(g.clone(), 0.6))
                .unwrap();
        let c = stepped();
        assert!((f.eval(0.7, &c).unwrap() - (g.eval(0.7) - g.eval(0.0))).abs() < 1e-15);
        // Young regime and Hölder checks
        let y: Arc<dyn Functional<f64>> = Arc::new(identity_terminal());
        let z: Arc<dyn Functional<f64>> = Arc::new(constant(1.0));
        assert!(matches!(
            rough_drift(
                y.clone(),
                z.clone(),
                RoughDriftParams::new(ScalarFn::Weierstrass { exponent: 0.4, terms: 8 }, 0.4)
            ),
            Err(Error::YoungRegime(_))
        ));
        assert!(
            rough_drift(y, z, RoughDriftParams::new(ScalarFn::Weierstrass { exponent: 0.6, terms: 8 }, 0.8)).is_err()
        );
    }

    #[test]
    fn rough_drift_martingale_matches_pathwise_integral() {
        let c = stepped();
        let z = identity_terminal();
        let params = RoughDriftParams::new(ScalarFn::Constant { value: 0.0 }, 1.0);
        let mesh: Vec<f64> = params.mesh.clone();
        let f = rough_drift::<f64>(Arc::new(constant(0.0)), Arc::new(z.clone()), params).unwrap();
        let direct = pathwise_ito_integral(&z, &c, 0.9, &mesh, 1e-9).unwrap().value;
        assert_eq!(f.eval(0.9, &c).unwrap(), direct);
        let mut b = f.bind(&c);
        assert_eq!(b.eval_modified(0.9, c.value_at(0.9)).unwrap(), direct);
    }
}
