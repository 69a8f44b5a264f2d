//! Exact p-variation on sample partitions, 2D joint variation, 2D-control
//! fitting and the Young–Loève constant.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::GridField;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationMethod {
    Dp,
    Brute,
}

/// `value` is `sup_P sum |Δf|^p` over partitions supported on the sample
/// indices; `root` is its `p`-th root, the p-variation norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationReport<T> {
    pub p: T,
    pub value: T,
    pub root: T,
    pub partition: Vec<usize>,
    pub method: VariationMethod,
}

pub const BRUTE_FORCE_LIMIT: usize = 16;

#[inline]
fn pw<T: Real>(d: T, p: T) -> T {
    let a = d.abs();
    if p == T::one() {
        a
    } else if p == T::lit(2.0) {
        a * a
    } else if p == T::lit(3.0) {
        a * a * a
    } else {
        a.powf(p)
    }
}

fn check<T: Real>(samples: &[T], p: T) -> Result<()> {
    if samples.len() < 2 {
        return Err(invalid("p-variation needs at least two samples"));
    }
    if !(p >= T::one()) {
        return Err(invalid(format!("p must be at least 1, got {p}")));
    }
    Ok(())
}

/// Dynamic program `V(i) = max_{j<i} V(j) + |f(i) - f(j)|^p`, `O(n^2)`.
///
/// Partial sums are accumulated left to right, exactly as
/// [`p_variation_brute`] does, and rounding is monotone, so both return
/// bit-identical values.
pub fn p_variation<T: Real>(samples: &[T], p: T) -> Result<VariationReport<T>> {
    check(samples, p)?;
    let n = samples.len();
    let mut best = vec![T::zero(); n];
    let mut from = vec![0usize; n];
    for i in 1..n {
        let fi = samples[i];
        let (mut v, mut arg) = (T::neg_infinity(), 0);
        for j in 0..i {
            let c = best[j] + pw(fi - samples[j], p);
            if c > v {
                v = c;
                arg = j;
            }
        }
        best[i] = v;
        from[i] = arg;
    }
    let mut partition = vec![n - 1];
    let mut i = n - 1;
    while i > 0 {
        i = from[i];
        partition.push(i);
    }
    partition.reverse();
    let value = best[n - 1];
    Ok(VariationReport { p, value, root: value.powf(p.recip()), partition, method: VariationMethod::Dp })
}

/// Exhaustive search over index subsets containing both endpoints.
pub fn p_variation_brute<T: Real>(samples: &[T], p: T) -> Result<VariationReport<T>> {
    check(samples, p)?;
    let n = samples.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Refused(format!("brute force limited to {BRUTE_FORCE_LIMIT} samples, got {n}")));
    }
    let inner = n - 2;
    let (mut best, mut best_mask) = (T::neg_infinity(), 0u32);
    for mask in 0u32..(1u32 << inner) {
        let mut acc = T::zero();
        let mut last = 0usize;
        for k in 0..inner {
            if mask >> k & 1 == 1 {
                acc = acc + pw(samples[k + 1] - samples[last], p);
                last = k + 1;
            }
        }
        acc = acc + pw(samples[n - 1] - samples[last], p);
        if acc > best {
            best = acc;
            best_mask = mask;
        }
    }
    let mut partition = vec![0];
    partition.extend((0..inner).filter(|k| best_mask >> k & 1 == 1).map(|k| k + 1));
    partition.push(n - 1);
    Ok(VariationReport { p, value: best, root: best.powf(p.recip()), partition, method: VariationMethod::Brute })
}

/// Result of the 2D joint variation over product partitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointVariation<T> {
    pub p: T,
    pub value: T,
    pub time_partition: Vec<usize>,
    pub space_partition: Vec<usize>,
    /// Set when the value comes from the alternating refinement and is only
    /// guaranteed to be a lower bound of the supremum.
    pub lower_bound: bool,
}

/// Largest smaller-axis length for which the exact enumeration is used.
pub const JOINT_EXACT_AXIS_LIMIT: usize = 12;

/// Two-axis view that lets the same code run on a grid or its transpose.
struct Axes<'a, T> {
    g: &'a GridField<T>,
    transposed: bool,
}

impl<T: Real> Axes<'_, T> {
    fn n_outer(&self) -> usize {
        if self.transposed {
            self.g.n_xs()
        } else {
            self.g.n_times()
        }
    }
    fn n_inner(&self) -> usize {
        if self.transposed {
            self.g.n_times()
        } else {
            self.g.n_xs()
        }
    }
    #[inline]
    fn at(&self, o: usize, i: usize) -> T {
        if self.transposed {
            self.g.get(i, o)
        } else {
            self.g.get(o, i)
        }
    }
    /// Cost of the outer block `[a, b]` against a fixed inner partition.
    fn block_cost(&self, a: usize, b: usize, inner: &[usize], p: T) -> T {
        inner.windows(2).fold(T::zero(), |acc, w| {
            let d = self.at(b, w[1]) - self.at(a, w[1]) - self.at(b, w[0]) + self.at(a, w[0]);
            acc + pw(d, p)
        })
    }
    /// Best outer partition for a fixed inner partition.
    fn best_outer(&self, inner: &[usize], p: T) -> (T, Vec<usize>) {
        let n = self.n_outer();
        let mut best = vec![T::zero(); n];
        let mut from = vec![0usize; n];
        for b in 1..n {
            let (mut v, mut arg) = (T::neg_infinity(), 0);
            for a in 0..b {
                let c = best[a] + self.block_cost(a, b, inner, p);
                if c > v {
                    v = c;
                    arg = a;
                }
            }
            best[b] = v;
            from[b] = arg;
        }
        let mut part = vec![n - 1];
        let mut i = n - 1;
        while i > 0 {
            i = from[i];
            part.push(i);
        }
        part.reverse();
        (best[n - 1], part)
    }
}

fn check_grid<T: Real>(grid: &GridField<T>, p: T) -> Result<()> {
    if grid.n_times() < 2 || grid.n_xs() < 2 {
        return Err(invalid("joint variation needs at least 2 points per axis"));
    }
    if !(p >= T::one()) {
        return Err(invalid(format!("p must be at least 1, got {p}")));
    }
    Ok(())
}

/// `sup sum_{i,j} |Δ_i Δ_j h|^p` over product partitions: exact enumeration
/// over subsets of the shorter axis, each followed by an exact dynamic
/// program on the longer axis (block costs are additive along it).
pub fn joint_variation_2d_exact<T: Real>(grid: &GridField<T>, p: T) -> Result<JointVariation<T>> {
    check_grid(grid, p)?;
    let transposed = grid.n_xs() > grid.n_times();
    let ax = Axes { g: grid, transposed };
    let m = ax.n_inner();
    if m > JOINT_EXACT_AXIS_LIMIT {
        return Err(Error::Refused(format!(
            "exact joint variation limited to {JOINT_EXACT_AXIS_LIMIT} points on the shorter axis, got {m}"
        )));
    }
    let mut best = (T::neg_infinity(), Vec::new(), Vec::new());
    for mask in 0u32..(1u32 << (m - 2)) {
        let mut inner = vec![0];
        inner.extend((0..m - 2).filter(|k| mask >> k & 1 == 1).map(|k| k + 1));
        inner.push(m - 1);
        let (v, outer) = ax.best_outer(&inner, p);
        if v > best.0 {
            best = (v, outer, inner);
        }
    }
    let (value, outer, inner) = best;
    let (time_partition, space_partition) = if transposed { (inner, outer) } else { (outer, inner) };
    Ok(JointVariation { p, value, time_partition, space_partition, lower_bound: false })
}

/// Alternating refinement: exact dynamic program on one axis with the other
/// axis partition fixed, alternated until the value stops increasing.
/// Starts from the full partition on both axes; always a lower bound.
pub fn joint_variation_2d_greedy<T: Real>(grid: &GridField<T>, p: T) -> Result<JointVariation<T>> {
    check_grid(grid, p)?;
    let rows = Axes { g: grid, transposed: false };
    let cols = Axes { g: grid, transposed: true };
    let mut space: Vec<usize> = (0..grid.n_xs()).collect();
    let mut time: Vec<usize> = (0..grid.n_times()).collect();
    let mut value = T::neg_infinity();
    for _ in 0..64 {
        let (v1, t) = rows.best_outer(&space, p);
        time = t;
        let (v2, s) = cols.best_outer(&time, p);
        space = s;
        let improved = v2 > value;
        value = value.max(v1).max(v2);
        if !improved {
            break;
        }
    }
    Ok(JointVariation { p, value, time_partition: time, space_partition: space, lower_bound: true })
}

/// Exact when the shorter axis is small enough, otherwise the flagged lower
/// bound from the alternating refinement.
pub fn joint_variation_2d<T: Real>(grid: &GridField<T>, p: T) -> Result<JointVariation<T>> {
    if grid.n_times().min(grid.n_xs()) <= JOINT_EXACT_AXIS_LIMIT {
        joint_variation_2d_exact(grid, p)
    } else {
        joint_variation_2d_greedy(grid, p)
    }
}

/// Largest deviation from the additive fit `h(t, x) ≈ h(t, x0) + h(t0, x) - h(t0, x0)`.
pub fn separability_residual<T: Real>(grid: &GridField<T>) -> T {
    let mut worst = T::zero();
    for i in 0..grid.n_times() {
        for j in 0..grid.n_xs() {
            let r = grid.get(i, j) - grid.get(i, 0) - grid.get(0, j) + grid.get(0, 0);
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Fitted 2D control `|Δ_i Δ_j h| <= M |Δt|^{a1} |Δx|^{a2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderFit<T> {
    pub m: T,
    pub a1: T,
    pub a2: T,
    /// Largest absolute residual of the log-linear regression.
    pub residual: T,
    /// Number of scales used in the regression.
    pub scales: usize,
    /// Scales whose double differences all vanished (excluded from the fit).
    pub excluded_zero: usize,
}

/// Multi-scale fit of a 2D control.
///
/// For every pair of dyadic strides the largest |double difference| over
/// all cells of that shape is recorded; `log max` is regressed on
/// `log Δt` and `log Δx` by least squares. Using several cell shapes is
/// what makes the two exponents identifiable on a uniform grid. `M` is
/// then the smallest constant valid for every nonzero cell.
pub fn holder_2d_control_fit<T: Real>(grid: &GridField<T>) -> Result<HolderFit<T>> {
    let (nt, nx) = (grid.n_times(), grid.n_xs());
    if nt < 3 || nx < 3 {
        return Err(invalid("2D-control fit needs at least 3 points per axis"));
    }
    let strides = |n: usize| {
        let mut v = Vec::new();
        let mut s = 1;
        while s < n && s <= (n - 1) / 2 {
            v.push(s);
            s *= 2;
        }
        v
    };
    let (ts, xs) = (strides(nt), strides(nx));
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let mut cells: Vec<(T, T, T)> = Vec::new();
    let mut excluded = 0;
    for &st in &ts {
        for &sx in &xs {
            let (mut mx, mut dts, mut dxs, mut count) = (T::zero(), T::zero(), T::zero(), 0usize);
            let mut i = st;
            while i < nt {
                let mut j = sx;
                while j < nx {
                    let d = grid.get(i, j) - grid.get(i - st, j) - grid.get(i, j - sx) + grid.get(i - st, j - sx);
                    let dt = grid.times[i] - grid.times[i - st];
                    let dx = grid.xs[j] - grid.xs[j - sx];
                    mx = mx.max(d.abs());
                    dts = dts + dt;
                    dxs = dxs + dx;
                    count += 1;
                    if d != T::zero() {
                        cells.push((d.abs(), dt, dx));
                    }
                    j += sx;
                }
                i += st;
            }
            if mx == T::zero() || count == 0 {
                excluded += 1;
                continue;
            }
            let c = T::from_usize_lossy(count);
            rows.push((mx.f64().ln(), (dts / c).f64().ln(), (dxs / c).f64().ln()));
        }
    }
    if rows.len() < 3 {
        return Err(Error::Domain(format!(
            "only {} scales with nonzero double differences; cannot fit a 2D control",
            rows.len()
        )));
    }
    let (c0, a1, a2) = least_squares_2(&rows)?;
    let residual = rows.iter().map(|(y, u, v)| (y - c0 - a1 * u - a2 * v).abs()).fold(0.0, f64::max);
    let (a1t, a2t) = (T::lit(a1), T::lit(a2));
    let m = cells.iter().fold(T::zero(), |m, &(d, dt, dx)| m.max(d / (dt.powf(a1t) * dx.powf(a2t))));
    Ok(HolderFit { m, a1: a1t, a2: a2t, residual: T::lit(residual), scales: rows.len(), excluded_zero: excluded })
}

/// Least squares for `y = c0 + a1 u + a2 v` via the 3×3 normal equations.
fn least_squares_2(rows: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    let mut a = [[0.0f64; 4]; 3];
    for &(y, u, v) in rows {
        let x = [1.0, u, v];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += x[r] * x[c];
            }
            a[r][3] += x[r] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::Domain("degenerate scales: exponents not identifiable".into()));
        }
        a.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..4 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Ok((a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]))
}

/// Riemann zeta for `s > 1` by Euler–Maclaurin summation (ten explicit
/// terms plus five Bernoulli corrections).
pub fn riemann_zeta<T: Real>(s: T) -> Result<T> {
    if !(s > T::one()) {
        return Err(invalid(format!("zeta needs s > 1, got {s}")));
    }
    const N: usize = 10;
    let bern = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let n = T::from_usize_lossy(N);
    let mut acc = (1..N).map(|k| T::from_usize_lossy(k).powf(-s)).sum::<T>();
    acc = acc + n.powf(T::one() - s) / (s - T::one()) + n.powf(-s) / T::lit(2.0);
    let mut rising = s; // s (s+1) ... (s+2k-2)
    let mut fact = 2.0f64; // (2k)!
    for (k, b) in bern.iter().enumerate() {
        let kk = k as f64 + 1.0;
        acc = acc + T::lit(b / fact) * rising * n.powf(-s - T::lit(2.0 * kk - 1.0));
        rising = rising * (s + T::lit(2.0 * kk - 1.0)) * (s + T::lit(2.0 * kk));
        fact *= (2.0 * kk + 1.0) * (2.0 * kk + 2.0);
    }
    Ok(acc)
}

/// Constant of the Young–Loève estimate used throughout:
/// `C(p, q) = 1 + zeta(1/p + 1/q)`.
///
/// The classical estimate bounds `|sum Y dg - Y(a)(g(b) - g(a))|` by
/// `zeta(1/p + 1/q) ‖Y‖_p ‖g‖_q`; the extra `1` also covers the leading
/// term when the bound is used for the full integral of a path started at 0.
pub fn young_loeve_constant<T: Real>(p: T, q: T) -> Result<T> {
    if !(p >= T::one()) || !(q >= T::one()) {
        return Err(invalid(format!("variation exponents must be >= 1, got p = {p}, q = {q}")));
    }
    let theta = p.recip() + q.recip();
    if theta <= T::one() {
        return Err(Error::YoungRegime(format!("1/p + 1/q = {theta} <= 1")));
    }
    Ok(T::one() + riemann_zeta(theta)?)
}

/// `C(p, q) · var_y · var_g`, an a priori ceiling for Young integral errors.
pub fn young_loeve_bound<T: Real>(p: T, q: T, var_y: T, var_g: T) -> Result<T> {
    Ok(young_loeve_constant(p, q)? * var_y * var_g)
}
