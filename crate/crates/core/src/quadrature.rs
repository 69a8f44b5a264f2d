//! Adaptive Simpson quadrature.

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    /// False when some panel hit the depth limit before meeting its tolerance.
    pub converged: bool,
}

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> Quadrature<T> {
    if a == b {
        return Quadrature { value: T::zero(), converged: true };
    }
    let two = T::lit(2.0);
    let m = (a + b) / two;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    let mut converged = true;
    // a few forced splits keep narrow features from hiding between nodes
    let value = recurse(&mut f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, 4, &mut converged);
    Quadrature { value, converged }
}

fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
    forced: u32,
    converged: &mut bool,
) -> T {
    let two = T::lit(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if forced == 0 && delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    if depth == 0 || m <= a || m >= b {
        *converged = false;
        return left + right + delta / T::lit(15.0);
    }
    let next = forced.saturating_sub(1);
    recurse(f, a, m, fa, flm, fm, left, tol / two, depth - 1, next, converged)
        + recurse(f, m, b, fm, frm, fb, right, tol / two, depth - 1, next, converged)
}

/// Trapezoid rule on equally spaced samples.
pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = values[1..n - 1].iter().copied().sum();
            h * (inner + (values[0] + values[n - 1]) / T::lit(2.0))
        }
    }
}
