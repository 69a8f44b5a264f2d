//! Monte Carlo convergence experiments over `(path, k)`.
//!
//! Path `i` always draws from `rng::stream(seed, purpose, i)`, so results do
//! not depend on the thread schedule; aggregation runs in path order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decompose_discrete, uniform_grid};
use crate::error::{invalid, Error, Result};
use crate::functionals::{karandikar_sum, Functional, Interpolation, KnotPath, ScalarFn};
use crate::occupation::{local_time_oracle, occupation_sup_error, OccupationField};
use crate::operators::{weak_derivative_estimate, Clock};
use crate::path_engine::{
    build_skeleton_walk, extract_skeleton, extract_skeleton_corrected, generate_brownian, ContinuousPath, Skeleton,
};
use crate::rng::{stream, Purpose};
use crate::stats::{decreasing_trend, mean_se, median, MeanSe, TrendVerdict};
use crate::variation::p_variation;

/// Stated in every report: weak convergence is not observable directly.
pub const SURROGATE_NOTE: &str = "convergence surrogate: Monte Carlo mean of per-path sup-norm (or L2) errors \
     with a decreasing-trend test across k; weak-topology convergence is not tested directly";

/// How skeletons for the levels `k` of one replication are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Independent exact walks for each `k`.
    Exact,
    /// All levels read off one sampled Brownian path with
    /// `dt = eps_max^2 / dt_divisor`, `eps_max` the finest level, optionally
    /// with continuity-corrected crossing barriers.
    Coupled {
        dt_divisor: f64,
        #[serde(default)]
        continuity_correction: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub ks: Vec<u32>,
    pub n_paths: usize,
    pub horizon: f64,
    pub sampling: Sampling,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn epsilon(k: u32) -> f64 {
        2f64.powi(-(k as i32))
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, m: &str| Err(Error::Config { field: f.into(), msg: m.into() });
        if self.ks.is_empty() {
            return field("ks", "k range is empty");
        }
        if self.ks.iter().any(|&k| k > 30) {
            return field("ks", "levels above 30 are not supported");
        }
        if self.n_paths == 0 {
            return field("n_paths", "must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return field("horizon", "must be positive and finite");
        }
        if let Sampling::Coupled { dt_divisor, .. } = self.sampling {
            if !(dt_divisor >= 16.0) {
                return field("dt_divisor", "coupled sampling needs dt <= eps^2 / 16");
            }
        }
        Ok(())
    }

    /// Step of the shared Brownian path in coupled mode.
    pub fn fine_dt(&self) -> Option<f64> {
        match self.sampling {
            Sampling::Exact => None,
            Sampling::Coupled { dt_divisor, .. } => {
                let eps = Self::epsilon(*self.ks.iter().max()?);
                Some(eps * eps / dt_divisor)
            }
        }
    }
}

/// Replication `i`: the shared Brownian path (coupled mode) and one skeleton
/// per entry of `spec.ks`.
pub fn path_skeletons(spec: &EnsembleSpec, i: usize) -> Result<(Option<ContinuousPath<f64>>, Vec<Skeleton<f64>>)> {
    match spec.fine_dt() {
        None => {
            let sks = spec
                .ks
                .iter()
                .enumerate()
                .map(|(m, &k)| {
                    let index = (i as u64) << 8 | m as u64;
                    build_skeleton_walk(
                        EnsembleSpec::epsilon(k),
                        spec.horizon,
                        &mut stream(spec.seed, Purpose::Walk, index),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((None, sks))
        }
        Some(dt) => {
            let path = generate_brownian(spec.horizon, dt, &mut stream(spec.seed, Purpose::Path, i as u64))?;
            let corrected = matches!(spec.sampling, Sampling::Coupled { continuity_correction: true, .. });
            let extract = if corrected { extract_skeleton_corrected } else { extract_skeleton };
            let sks = spec.ks.iter().map(|&k| extract(&path, EnsembleSpec::epsilon(k))).collect::<Result<Vec<_>>>()?;
            Ok((Some(path), sks))
        }
    }
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: u32,
    pub mean_sup_error: f64,
    pub se: f64,
    pub median: f64,
    pub n_paths: usize,
    pub clock: Clock,
    pub oracle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub experiment: String,
    /// What `mean_sup_error` measures.
    pub metric: String,
    pub note: &'static str,
    pub rows: Vec<ConvergenceRow>,
    /// Per-level, per-path errors in path order.
    #[serde(skip)]
    pub per_path: Vec<Vec<f64>>,
    pub trend: TrendVerdict,
}

impl ConvergenceTable {
    fn from_errors(
        experiment: &str,
        metric: &str,
        ks: &[u32],
        per_path: Vec<Vec<f64>>,
        clock: Clock,
        oracle: &str,
    ) -> Self {
        let rows: Vec<ConvergenceRow> = ks
            .iter()
            .zip(&per_path)
            .map(|(&k, errs)| {
                let MeanSe { mean, se, n } = mean_se(errs);
                ConvergenceRow {
                    k,
                    mean_sup_error: mean,
                    se,
                    median: median(errs),
                    n_paths: n,
                    clock,
                    oracle: oracle.into(),
                }
            })
            .collect();
        let centers: Vec<f64> = rows.iter().map(|r| r.mean_sup_error).collect();
        let ses: Vec<f64> = rows.iter().map(|r| r.se).collect();
        let trend = decreasing_trend(&centers, &ses, Some(&per_path));
        Self { experiment: experiment.into(), metric: metric.into(), note: SURROGATE_NOTE, rows, per_path, trend }
    }

    pub fn final_row(&self) -> &ConvergenceRow {
        self.rows.last().expect("tables have at least one row")
    }
}

/// `per_path[path][k]` to `[k][path]`.
fn transpose(per_path: Vec<Vec<f64>>, levels: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(per_path.len()); levels];
    for row in per_path {
        for (m, v) in row.into_iter().enumerate() {
            out[m].push(v);
        }
    }
    out
}

fn run_paths<R: Send>(n: usize, f: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    (0..n).into_par_iter().map(f).collect()
}

/// Reference drift `V` for [`drift_via_occupation_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftOracle {
    /// `V(t) = t`.
    ElapsedTime,
    /// `V(t) = g(t) - g(0)`.
    GIncrement { g: ScalarFn },
    /// `V(t) = max_{s <= t} B(s)` on the shared fine path (coupled mode only).
    RunningMax,
}

impl DriftOracle {
    pub fn label(&self) -> &'static str {
        match self {
            Self::ElapsedTime => "closed_form_t",
            Self::GIncrement { .. } => "g_increment",
            Self::RunningMax => "fine_path_running_max",
        }
    }
}

/// Per `k`: mean over paths of `sup_{t in grid} |V̂^k(t) - V(t)|` with
/// `V̂ = H + O` from the discrete decomposition.
pub fn drift_via_occupation_experiment(
    f: &dyn Functional<f64>,
    oracle: &DriftOracle,
    spec: &EnsembleSpec,
    grid_points: usize,
    clock: Clock,
) -> Result<ConvergenceTable> {
    spec.validate()?;
    if *oracle == DriftOracle::RunningMax && spec.fine_dt().is_none() {
        return Err(invalid("the running-max oracle needs coupled sampling"));
    }
    let grid = uniform_grid(spec.horizon, grid_points);
    let per_path = run_paths(spec.n_paths, |i| {
        let (path, sks) = path_skeletons(spec, i)?;
        let reference: Vec<f64> = match oracle {
            DriftOracle::ElapsedTime => grid.clone(),
            DriftOracle::GIncrement { g } => grid.iter().map(|&t| g.eval(t) - g.eval(0.0)).collect(),
            DriftOracle::RunningMax => {
                let path = path.as_ref().expect("checked above");
                let mut out = Vec::with_capacity(grid.len());
                let mut max = f64::NEG_INFINITY;
                let mut next = 0;
                for &t in &grid {
                    let end = path.index_at(t);
                    while next <= end {
                        max = max.max(path.values[next]);
                        next += 1;
                    }
                    out.push(max);
                }
                out
            }
        };
        sks.iter()
            .map(|sk| {
                let d = decompose_discrete(f, sk, &grid, clock)?;
                Ok((0..grid.len()).map(|j| (d.drift(j) - reference[j]).abs()).fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(ConvergenceTable::from_errors(
        "drift_via_occupation",
        "mean over paths of sup_t |drift estimate - V(t)|",
        &spec.ks,
        transpose(per_path, spec.ks.len()),
        clock,
        oracle.label(),
    ))
}

/// Per `k`: relative `L2(P x Leb)` error of the step weak-derivative
/// estimate against the functional's closed-form vertical gradient on the
/// shared fine path, on `time_points + 1` grid times.
///
/// The table's `mean_sup_error` column holds
/// `sqrt(E ∫ (D - oracle)^2) / sqrt(E ∫ oracle^2)` and `se` its delta-method
/// standard error; `per_path` holds the per-path squared errors.
pub fn weak_derivative_experiment(
    f: &dyn Functional<f64>,
    spec: &EnsembleSpec,
    time_points: usize,
) -> Result<ConvergenceTable> {
    spec.validate()?;
    if spec.fine_dt().is_none() {
        return Err(invalid("weak-derivative recovery needs coupled sampling"));
    }
    if !f.capabilities().closed_form_gradient {
        return Err(invalid(format!("{} has no closed-form gradient oracle", f.name())));
    }
    let grid = uniform_grid(spec.horizon, time_points);
    let per_path = run_paths(spec.n_paths, |i| {
        let (path, sks) = path_skeletons(spec, i)?;
        let path = path.expect("coupled");
        let stepped = path.to_stepped();
        let mut bound = f.bind(&stepped);
        let oracle = grid
            .iter()
            .map(|&t| bound.vertical_gradient(t, stepped.value_at(t)).expect("closed form"))
            .collect::<Result<Vec<f64>>>()?;
        let norm: f64 = (0..grid.len() - 1).map(|j| oracle[j] * oracle[j] * (grid[j + 1] - grid[j])).sum();
        let mut errs = Vec::with_capacity(sks.len() + 1);
        for sk in &sks {
            errs.push(weak_derivative_estimate(f, sk, &grid, Some(&oracle))?.sq_error.expect("oracle given"));
        }
        errs.push(norm);
        Ok(errs)
    })?;
    let mut levels = transpose(per_path, spec.ks.len() + 1);
    let norms = levels.pop().expect("norm column");
    let norm = mean_se(&norms).mean;
    let scale = norm.sqrt().max(f64::MIN_POSITIVE);
    let mut table = ConvergenceTable::from_errors(
        "weak_derivative",
        "relative L2(P x Leb) error",
        &spec.ks,
        levels,
        Clock::SquareBracket,
        "closed_form_gradient_on_fine_path",
    );
    for row in &mut table.rows {
        let l2 = row.mean_sup_error.sqrt();
        row.se = if l2 > 0.0 { row.se / (2.0 * l2) / scale } else { 0.0 };
        row.median = row.median.sqrt() / scale;
        row.mean_sup_error = l2 / scale;
    }
    Ok(table)
}

/// Occupation-field statistics at one level `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationRow {
    pub k: u32,
    pub median_sup_error: f64,
    pub mean_sup_error: f64,
    pub se: f64,
    /// Mean over paths of `max_x ‖L^{k,x}‖_{1-var, [0, T]}` over the window.
    pub mean_time_variation: f64,
    /// Mean over paths of the `p`-variation norm `‖x ↦ L^{k,x}(T)‖_p` over
    /// the window (the `p`-th root of the partition supremum).
    pub mean_space_variation: f64,
    /// Mean over paths of the partition supremum itself, `‖·‖_p^p`.
    pub mean_space_variation_power: f64,
    /// `L^{k,0}(T)` across paths.
    pub level_zero: MeanSe,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationStudy {
    pub rows: Vec<OccupationRow>,
    pub window: (f64, f64),
    pub space_p: f64,
    pub bandwidth: f64,
    pub note: &'static str,
    #[serde(skip)]
    pub per_path: Vec<Vec<f64>>,
    /// Trend of the median sup error (paired sign tests between levels).
    pub trend: TrendVerdict,
}

/// Crossing-count occupation fields against the fine-path local-time oracle
/// on `window × [0, T]`: `x_points + 1` lattice-aligned space points and
/// `time_points + 1` times.
pub fn occupation_experiment(
    spec: &EnsembleSpec,
    window: (f64, f64),
    x_points: usize,
    time_points: usize,
    space_p: f64,
) -> Result<OccupationStudy> {
    spec.validate()?;
    let Some(dt) = spec.fine_dt() else {
        return Err(invalid("occupation convergence needs coupled sampling"));
    };
    if !(window.0 < window.1) || x_points == 0 {
        return Err(invalid("occupation window must be a nonempty interval"));
    }
    let xs = uniform_grid(window.1 - window.0, x_points).into_iter().map(|x| window.0 + x).collect::<Vec<_>>();
    let times = uniform_grid(spec.horizon, time_points);
    // narrowest bandwidth the oracle accepts: its own bias is O(sqrt(h))
    let bandwidth = 2.0 * dt.sqrt();
    let per_path = run_paths(spec.n_paths, |i| {
        let (path, sks) = path_skeletons(spec, i)?;
        let oracle = local_time_oracle(&path.expect("coupled"), &times, &xs, Some(bandwidth))?;
        sks.iter()
            .map(|sk| {
                let field = OccupationField::from_skeleton(sk);
                let sup = occupation_sup_error(&field, &oracle.field)?;
                let (lo, hi) = (field.level_of(window.0), field.level_of(window.1));
                let mut tv = 0f64;
                let mut profile = Vec::with_capacity((hi - lo + 1) as usize);
                for j in lo..=hi {
                    tv = tv.max(field.time_variation(j, spec.horizon)?);
                    profile.push(field.level_value(j, spec.horizon)?);
                }
                let sv = p_variation(&profile, space_p)?;
                Ok([sup, tv, sv.root, sv.value, field.level_value(0, spec.horizon)?])
            })
            .collect::<Result<Vec<[f64; 5]>>>()
    })?;
    let levels = spec.ks.len();
    let column =
        |c: usize| -> Vec<Vec<f64>> { (0..levels).map(|m| per_path.iter().map(|p| p[m][c]).collect()).collect() };
    let (sup, tv, sv, svp, zero) = (column(0), column(1), column(2), column(3), column(4));
    let rows: Vec<OccupationRow> = (0..levels)
        .map(|m| {
            let s = mean_se(&sup[m]);
            OccupationRow {
                k: spec.ks[m],
                median_sup_error: median(&sup[m]),
                mean_sup_error: s.mean,
                se: s.se,
                mean_time_variation: mean_se(&tv[m]).mean,
                mean_space_variation: mean_se(&sv[m]).mean,
                mean_space_variation_power: mean_se(&svp[m]).mean,
                level_zero: mean_se(&zero[m]),
                n_paths: s.n,
            }
        })
        .collect();
    let centers: Vec<f64> = rows.iter().map(|r| r.median_sup_error).collect();
    // the median's standard error, from the mean's via the normal efficiency factor
    let ses: Vec<f64> = rows.iter().map(|r| r.se * (std::f64::consts::PI / 2.0).sqrt()).collect();
    let trend = decreasing_trend(&centers, &ses, Some(&sup));
    Ok(OccupationStudy { rows, window, space_p, bandwidth, note: SURROGATE_NOTE, per_path: sup, trend })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KarandikarRow {
    pub n: u32,
    pub mesh: f64,
    pub mean_sq_error: f64,
    pub se: f64,
    /// Mean squared error over `E[((B_T^2 - T) / 2)^2]`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KarandikarStudy {
    pub rows: Vec<KarandikarRow>,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Sample mean of the squared target.
    pub target_second_moment: f64,
    /// Largest `|I(t(c, x)) - I(c) - c(t-) (x - c(t-))|` over paths.
    pub max_terminal_residual: f64,
    #[serde(skip)]
    pub per_path: Vec<Vec<f64>>,
    pub trend: TrendVerdict,
}

/// `∫_0^T B dB` by the stopping-time construction with `q_n = 2^{-n}`
/// against `(B_T^2 - T) / 2`, plus the terminal-modification identity.
pub fn karandikar_experiment(ns: &[u32], n_paths: usize, horizon: f64, dt: f64, seed: u64) -> Result<KarandikarStudy> {
    if ns.is_empty() || n_paths == 0 || !(horizon > 0.0) || !(dt > 0.0) {
        return Err(invalid("karandikar study needs levels, paths, and positive horizon and step"));
    }
    let terminal_mesh = 2f64.powi(-40);
    let per_path = run_paths(n_paths, |i| {
        let path = generate_brownian(horizon, dt, &mut stream(seed, Purpose::Path, i as u64))?;
        let c = path.to_stepped();
        let eta = KnotPath::from_stepped(&c, horizon);
        let rho = KnotPath::new(eta.times.clone(), eta.values.clone(), Interpolation::Step)?;
        let b = *path.values.last().unwrap();
        let target = (b * b - horizon) / 2.0;
        let mut row: Vec<f64> = ns
            .iter()
            .map(|&n| (karandikar_sum(&rho, &eta, horizon, 2f64.powi(-(n as i32))) - target).powi(2))
            .collect();
        row.push(target * target);
        // terminal modification strictly between grid times
        let t = horizon - dt / 2.0;
        let x = c.value_at(t) + 0.37 * (1.0 + (i % 5) as f64);
        let modified = c.with_terminal(t, x);
        let integral = |p: &crate::path_engine::SteppedPath<f64>| {
            let eta = KnotPath::from_stepped(p, t);
            let rho = KnotPath::new(eta.times.clone(), eta.values.clone(), Interpolation::Step)?;
            Ok::<f64, Error>(karandikar_sum(&rho, &eta, t, terminal_mesh))
        };
        let left = c.value_at(t);
        row.push((integral(&modified)? - integral(&c)? - left * (x - left)).abs());
        Ok(row)
    })?;
    let mut levels = transpose(per_path, ns.len() + 2);
    let terminal = levels.pop().unwrap();
    let targets = levels.pop().unwrap();
    let target_second_moment = mean_se(&targets).mean;
    let rows: Vec<KarandikarRow> = ns
        .iter()
        .zip(&levels)
        .map(|(&n, errs)| {
            let s = mean_se(errs);
            KarandikarRow {
                n,
                mesh: 2f64.powi(-(n as i32)),
                mean_sq_error: s.mean,
                se: s.se,
                relative: s.mean / target_second_moment,
            }
        })
        .collect();
    let centers: Vec<f64> = rows.iter().map(|r| r.mean_sq_error).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.se).collect();
    let trend = decreasing_trend(&centers, &ses, Some(&levels));
    Ok(KarandikarStudy {
        rows,
        n_paths,
        horizon,
        dt,
        target_second_moment,
        max_terminal_residual: terminal.into_iter().fold(0.0, f64::max),
        per_path: levels,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{quadratic_terminal, rough_drift, RoughDriftParams};
    use std::sync::Arc;

    fn spec(ks: Vec<u32>, n: usize, sampling: Sampling) -> EnsembleSpec {
        EnsembleSpec { ks, n_paths: n, horizon: 1.0, sampling, seed: 11 }
    }

    #[test]
    fn skeletons_are_reproducible_and_coupled() {
        let s = spec(vec![3, 4], 3, Sampling::Coupled { dt_divisor: 64.0, continuity_correction: false });
        let (p1, a) = path_skeletons(&s, 2).unwrap();
        let (_, b) = path_skeletons(&s, 2).unwrap();
        assert_eq!(a, b);
        let p1 = p1.unwrap();
        assert!(crate::path_engine::coupling_sup_error(&p1, &a[1]) <= 2.0 * 0.0625 + 1e-12);
        let e = spec(vec![3, 4], 3, Sampling::Exact);
        assert_ne!(path_skeletons(&e, 0).unwrap().1, path_skeletons(&e, 1).unwrap().1);
        assert!(spec(vec![], 1, Sampling::Exact).validate().is_err());
        assert!(spec(vec![3], 1, Sampling::Coupled { dt_divisor: 4.0, continuity_correction: false })
            .validate()
            .is_err());
    }

    #[test]
    fn quadratic_drift_error_shrinks() {
        let s = spec(vec![3, 5], 20, Sampling::Exact);
        let t = drift_via_occupation_experiment(
            &quadratic_terminal(),
            &DriftOracle::ElapsedTime,
            &s,
            32,
            Clock::SquareBracket,
        )
        .unwrap();
        assert!(t.trend.strictly_decreasing, "{:?}", t.rows);
        assert_eq!(t.rows[0].n_paths, 20);
    }

    #[test]
    fn constant_y_rough_drift_tracks_g() {
        let g = ScalarFn::Weierstrass { exponent: 0.6, terms: 12 };
        let params = RoughDriftParams::new(g.clone(), 0.6);
        let one: Arc<dyn Functional<f64>> = Arc::new(crate::functionals::constant(1.0));
        let f = rough_drift(one.clone(), one, params).unwrap();
        let s = spec(vec![3, 6], 5, Sampling::Exact);
        let t =
            drift_via_occupation_experiment(&f, &DriftOracle::GIncrement { g }, &s, 64, Clock::SquareBracket).unwrap();
        assert!(t.rows[1].mean_sup_error < t.rows[0].mean_sup_error);
    }

    #[test]
    fn weak_derivative_of_quadratic() {
        let s = spec(vec![3, 5], 10, Sampling::Coupled { dt_divisor: 64.0, continuity_correction: false });
        let t = weak_derivative_experiment(&quadratic_terminal(), &s, 512).unwrap();
        assert!(t.trend.strictly_decreasing);
        assert!(t.final_row().mean_sup_error < 0.1, "{:?}", t.rows);
    }

    #[test]
    fn karandikar_study_converges() {
        let k = karandikar_experiment(&[1, 3, 5], 20, 1.0, 2f64.powi(-12), 3).unwrap();
        assert!(k.trend.strictly_decreasing, "{:?}", k.rows);
        assert!(k.max_terminal_residual < 1e-8);
    }
}
