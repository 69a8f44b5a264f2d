//! Non-anticipative path functionals `F_t(c_t)` with terminal-value
//! substitution, the built-in library and the pathwise Itô integral.
//!
//! A functional sees a [`SteppedPath`] and a time `t`; only the restriction of
//! the path to `[0, t)` plus a terminal value `x` at `t` may influence the
//! result. [`Functional::bind`] fixes the path once and returns an evaluator
//! that answers repeated `(t, x)` queries in logarithmic time, which is what
//! the skeleton operators need.

mod karandikar;
mod library;
mod registry;
mod scalar_fn;

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::path_engine::SteppedPath;
use crate::real::Real;

pub use karandikar::{
    dyadic_mesh, integrand_path, karandikar_sum, pathwise_ito_integral, pathwise_ito_integral_sampled, Interpolation,
    ItoTrace, KnotPath,
};
pub use library::{
    constant, ex_phi, identity_terminal, integral_time, quadratic_terminal, rough_drift, running_max, terminal, ExPhi,
    IntegralTime, KernelTerm, RoughDrift, RoughDriftParams, RunningMax, Terminal,
};
pub use registry::{build, FunctionalSpec};
pub use scalar_fn::ScalarFn;

/// Shape of `s ↦ F_s(c_s)` between two jumps of a stepped path `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetweenJumps {
    Constant,
    /// Affine in `s`.
    Linear,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// `vertical_gradient` returns a closed form.
    pub closed_form_gradient: bool,
    /// No explicit dependence on `t` beyond the path.
    pub time_homogeneous: bool,
    pub between_jumps: BetweenJumps,
}

/// Evaluator contract for a non-anticipative functional.
pub trait Functional<T: Real>: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// `F_t(t(c_t, x))`: the path `c` on `[0, t)` with terminal value `x` at `t`.
    fn eval_modified(&self, t: T, c: &SteppedPath<T>, x: T) -> Result<T>;

    /// `F_t(c_t)`.
    fn eval(&self, t: T, c: &SteppedPath<T>) -> Result<T> {
        self.eval_modified(t, c, c.value_at(t))
    }

    /// Closed-form `d/dx F_t(t(c_t, x))`, when the functional has one.
    fn vertical_gradient(&self, _t: T, _c: &SteppedPath<T>, _x: T) -> Option<Result<T>> {
        None
    }

    /// Value of a functional that ignores its argument.
    fn constant_value(&self) -> Option<T> {
        None
    }

    /// Fixes the path for repeated queries.
    fn bind<'a>(&'a self, c: &'a SteppedPath<T>) -> Box<dyn BoundFunctional<T> + 'a> {
        Box::new(Unbound { f: self, c })
    }
}

/// A functional with its path fixed. Results agree bit-for-bit with the
/// unbound evaluation.
pub trait BoundFunctional<T: Real> {
    fn eval_modified(&mut self, t: T, x: T) -> Result<T>;

    fn vertical_gradient(&mut self, _t: T, _x: T) -> Option<Result<T>> {
        None
    }
}

struct Unbound<'a, T, F: ?Sized> {
    f: &'a F,
    c: &'a SteppedPath<T>,
}

impl<T: Real, F: Functional<T> + ?Sized> BoundFunctional<T> for Unbound<'_, T, F> {
    fn eval_modified(&mut self, t: T, x: T) -> Result<T> {
        self.f.eval_modified(t, self.c, x)
    }

    fn vertical_gradient(&mut self, t: T, x: T) -> Option<Result<T>> {
        self.f.vertical_gradient(t, self.c, x)
    }
}

pub(crate) fn check_time<T: Real>(t: T) -> Result<()> {
    if t >= T::zero() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("evaluation time must be finite and nonnegative, got {t}")))
    }
}

/// `∫_0^t w(c(s)) ds` for a stepped `c`, accumulated left to right over pieces.
pub(crate) fn path_integral<T: Real>(w: impl Fn(T) -> T, c: &SteppedPath<T>, t: T) -> T {
    let m = c.jumps_before(t);
    let mut acc = T::zero();
    let mut start = T::zero();
    let mut value = c.initial_value;
    for i in 0..m {
        let end = c.jump_times[i];
        acc = acc + w(value) * (end - start);
        start = end;
        value = c.values_after_jump[i];
    }
    acc + w(value) * (t - start)
}

/// Prefix table reproducing [`path_integral`] in `O(log n)` per query.
#[derive(Debug, Clone)]
pub(crate) struct PrefixIntegral<T> {
    cum: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> PrefixIntegral<T> {
    pub(crate) fn new(w: impl Fn(T) -> T, c: &SteppedPath<T>) -> Self {
        let n = c.jump_times.len();
        let mut cum = Vec::with_capacity(n + 1);
        let mut weights = Vec::with_capacity(n + 1);
        let mut acc = T::zero();
        let mut start = T::zero();
        weights.push(w(c.initial_value));
        cum.push(acc);
        for i in 0..n {
            let end = c.jump_times[i];
            acc = acc + weights[i] * (end - start);
            start = end;
            cum.push(acc);
            weights.push(w(c.values_after_jump[i]));
        }
        Self { cum, weights }
    }

    pub(crate) fn at(&self, c: &SteppedPath<T>, t: T) -> T {
        let m = c.jumps_before(t);
        let start = if m == 0 { T::zero() } else { c.jump_times[m - 1] };
        self.cum[m] + self.weights[m] * (t - start)
    }
}
