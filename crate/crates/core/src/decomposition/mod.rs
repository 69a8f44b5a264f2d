//! The exact discrete decomposition of `X^k(t) = F_t(A^k)` and the Monte
//! Carlo experiments built on it.
//!
//! Along a skeleton,
//!
//! ```text
//! X(t) - X(0) = M(t) + H(t) + O(t)
//! H(t) = ∫_0^t D_h X d<clock>          (horizontal drift)
//! O(t) = -½ ∫∫ ∇X dL                    (occupation drift)
//! ```
//!
//! where `M` is defined as the residual. Independently, the compensated jump
//! sum `M_direct(t) = X(t) - X(0) - ∫_0^t U X d<clock>` is assembled from the
//! generator; `|M - M_direct|` is the reconstruction residual and vanishes up
//! to rounding (square-bracket clock) or quadrature tolerance (angle clock)
//! because `½ D_2 X` and the occupation integrand coincide pointwise.

mod audit;
mod experiments;
mod ito_check;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::functionals::Functional;
use crate::occupation::{occupation_integral_trace, OccupationField};
use crate::operators::{clock_trace, Clock, SkeletonEvaluator};
use crate::path_engine::Skeleton;
use crate::real::Real;

pub use audit::{assumption_audit, AuditCheck, AuditReport, AuditSettings};
pub use experiments::{
    drift_via_occupation_experiment, karandikar_experiment, occupation_experiment, path_skeletons,
    weak_derivative_experiment, ConvergenceRow, ConvergenceTable, DriftOracle, EnsembleSpec, KarandikarRow,
    KarandikarStudy, OccupationRow, OccupationStudy, Sampling, SURROGATE_NOTE,
};
pub use ito_check::{functional_ito_check, ItoCheckRow, ItoCheckSettings, ItoCheckStudy, ItoPathTerms};

/// Traces of one path's decomposition on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDecomposition<T> {
    pub times: Vec<T>,
    pub clock: Clock,
    /// The angle-bracket quadrature missed tolerance somewhere and the whole
    /// decomposition was recomputed with the square-bracket clock.
    pub fell_back: bool,
    pub x0: T,
    pub x: Vec<T>,
    pub martingale: Vec<T>,
    pub martingale_direct: Vec<T>,
    pub horizontal: Vec<T>,
    pub occupation: Vec<T>,
    /// `|M - M_direct|` at each time.
    pub reconstruction_residual: Vec<T>,
}

impl<T: Real> PathDecomposition<T> {
    /// Drift estimate `H + O` at grid index `i`.
    pub fn drift(&self, i: usize) -> T {
        self.horizontal[i] + self.occupation[i]
    }

    /// Largest reconstruction residual relative to
    /// `max(1, |X - X0|, |M|, |H|, |O|)` at the same time.
    pub fn max_relative_residual(&self) -> T {
        (0..self.times.len())
            .map(|i| {
                let scale = [self.x[i] - self.x0, self.martingale[i], self.horizontal[i], self.occupation[i]]
                    .iter()
                    .fold(T::one(), |m, v| m.max(v.abs()));
                self.reconstruction_residual[i] / scale
            })
            .fold(T::zero(), T::max)
    }
}

/// Decomposes `X^k = F(A^k)` on `times` (nondecreasing, within
/// `[0, horizon]`) with the given clock.
pub fn decompose_discrete<T: Real>(
    f: &(impl Functional<T> + ?Sized),
    skeleton: &Skeleton<T>,
    times: &[T],
    clock: Clock,
) -> Result<PathDecomposition<T>> {
    if times.is_empty() {
        return Err(invalid("decomposition needs at least one grid time"));
    }
    let path = skeleton.to_stepped();
    let field = OccupationField::from_skeleton(skeleton);
    let mut ev = SkeletonEvaluator::new(f, skeleton, &path);
    let run = |ev: &mut SkeletonEvaluator<'_, T>, clock: Clock| -> Result<_> {
        let h = clock_trace(skeleton, times, clock, |s| ev.d_horizontal(s))?;
        let u = clock_trace(skeleton, times, clock, |s| ev.weak_generator(s))?;
        let o = occupation_integral_trace(&field, times, clock, |j, s| ev.vertical_gradient(s, j))?;
        Ok((h, u, o))
    };
    let (mut h, mut u, mut o) = run(&mut ev, clock)?;
    let fell_back = h.fell_back || u.fell_back;
    if fell_back {
        (h, u, o) = run(&mut ev, Clock::SquareBracket)?;
    }
    let x0 = ev.value_at_arrival(0)?;
    let half = T::lit(0.5);
    let n = times.len();
    let mut out = PathDecomposition {
        times: times.to_vec(),
        clock: h.clock,
        fell_back,
        x0,
        x: Vec::with_capacity(n),
        martingale: Vec::with_capacity(n),
        martingale_direct: Vec::with_capacity(n),
        horizontal: h.values,
        occupation: o.values.iter().map(|&v| -half * v).collect(),
        reconstruction_residual: Vec::with_capacity(n),
    };
    for (i, &t) in times.iter().enumerate() {
        let x = ev.value(t)?;
        let m = x - x0 - out.horizontal[i] - out.occupation[i];
        let direct = x - x0 - u.values[i];
        out.x.push(x);
        out.martingale.push(m);
        out.martingale_direct.push(direct);
        out.reconstruction_residual.push((m - direct).abs());
    }
    Ok(out)
}

/// `n + 1` equally spaced times on `[0, horizon]`.
pub fn uniform_grid<T: Real>(horizon: T, n: usize) -> Vec<T> {
    let n = n.max(1);
    (0..=n).map(|i| horizon * T::from_usize_lossy(i) / T::from_usize_lossy(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{
        ex_phi, identity_terminal, integral_time, quadratic_terminal, running_max, KernelTerm, ScalarFn,
    };
    use crate::path_engine::build_skeleton_walk;
    use crate::rng::{stream, Purpose};

    fn walk(k: i32, seed: u64) -> Skeleton<f64> {
        build_skeleton_walk(2f64.powi(-k), 1.0, &mut stream(seed, Purpose::Walk, 0)).unwrap()
    }

    #[test]
    fn identity_is_pure_martingale() {
        let sk = walk(4, 1);
        let grid = uniform_grid(1.0, 50);
        let d = decompose_discrete(&identity_terminal(), &sk, &grid, Clock::SquareBracket).unwrap();
        for i in 0..grid.len() {
            assert_eq!(d.drift(i), 0.0);
            assert_eq!(d.martingale[i], sk.value_at(grid[i]));
        }
        assert!(d.max_relative_residual() < 1e-14);
    }

    #[test]
    fn quadratic_drift_is_clock_mass() {
        let sk = walk(4, 2);
        let grid = uniform_grid(1.0, 50);
        let d = decompose_discrete(&quadratic_terminal(), &sk, &grid, Clock::SquareBracket).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let mass = sk.count_arrivals(t).unwrap() as f64 / 256.0;
            assert!((d.occupation[i] - mass).abs() < 1e-12);
            assert_eq!(d.horizontal[i], 0.0);
        }
        let a = decompose_discrete(&quadratic_terminal(), &sk, &grid, Clock::AngleBracket).unwrap();
        assert!(!a.fell_back);
        for (i, &t) in grid.iter().enumerate() {
            assert!((a.occupation[i] - sk.angle_bracket_clock(t).unwrap()).abs() < 1e-8);
        }
        assert!(a.max_relative_residual() < 1e-8);
    }

    #[test]
    fn integral_time_drift_is_elapsed_arrival_time() {
        let sk = walk(5, 3);
        let grid = uniform_grid(1.0, 20);
        let f = integral_time(ScalarFn::Constant { value: 1.0 }).unwrap();
        let d = decompose_discrete(&f, &sk, &grid, Clock::SquareBracket).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            // renewal reward: the frozen functional gains exactly the elapsed time per visit
            let n = sk.count_arrivals(t).unwrap();
            assert!((d.horizontal[i] - sk.time(n)).abs() < 1e-12);
            assert_eq!(d.occupation[i], 0.0);
            assert!(d.martingale[i].abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_for_path_dependent_functionals() {
        let phi = ex_phi(
            vec![KernelTerm { weight: ScalarFn::Identity, profile: ScalarFn::Bump { center: 0.0, radius: 1.0 } }],
            None,
        )
        .unwrap();
        let grid = uniform_grid(1.0, 40);
        for seed in 0..4 {
            let sk = walk(5, 10 + seed);
            for clock in [Clock::SquareBracket, Clock::AngleBracket] {
                let d = decompose_discrete(&phi, &sk, &grid, clock).unwrap();
                assert!(d.max_relative_residual() < 1e-8, "{clock:?}");
                let m = decompose_discrete(&running_max(), &sk, &grid, clock).unwrap();
                assert!(m.max_relative_residual() < 1e-8, "{clock:?}");
            }
        }
    }
}
