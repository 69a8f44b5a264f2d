//! One function per subcommand: run the module operation, emit its tables.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use skelcalc::decomposition::{
    assumption_audit, decompose_discrete, drift_via_occupation_experiment, functional_ito_check, occupation_experiment,
    path_skeletons, uniform_grid, AuditSettings, EnsembleSpec, ItoCheckSettings,
};
use skelcalc::functionals::{build, ex_phi, Functional, FunctionalSpec};
use skelcalc::occupation::OccupationField;
use skelcalc::operators::SkeletonEvaluator;
use skelcalc::path_engine::{coupling_sup_error, ContinuousPath, Skeleton};
use skelcalc::stats::mean_se;
use skelcalc::variation::p_variation;
use skelcalc::young::{young_integral_1d, YoungOptions};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{num, Output};

/// Why a run stopped before producing a verdict.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration (exit 2).
    Usage(String),
    /// The computation itself failed (exit 1).
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(format!("i/o error: {e}"))
    }
}

impl From<skelcalc::Error> for Failure {
    fn from(e: skelcalc::Error) -> Self {
        match e {
            skelcalc::Error::Config { field, msg } => Self::Usage(format!("invalid config field `{field}`: {msg}")),
            other => Self::Runtime(other.to_string()),
        }
    }
}

/// Outcome of a completed run.
pub struct Verdict {
    pub passed: bool,
    pub message: String,
    pub summary: Value,
}

impl Verdict {
    fn ok(summary: Value) -> Self {
        Self { passed: true, message: String::new(), summary }
    }

    fn gate(passed: bool, message: String, summary: Value) -> Self {
        Self { passed, message, summary }
    }
}

type Run = Result<Verdict, Failure>;

/// Replications are generated in parallel in blocks of this size and written
/// in order, so memory stays bounded and the file order is fixed.
const BLOCK: usize = 64;

fn functional(cfg: &ExperimentConfig) -> Result<std::sync::Arc<dyn Functional<f64>>, Failure> {
    Ok(build::<f64>(&cfg.functional)?)
}

fn ensembles(
    spec: &EnsembleSpec,
    mut each: impl FnMut(usize, Option<ContinuousPath<f64>>, Vec<Skeleton<f64>>) -> Result<(), Failure>,
) -> Result<(), Failure> {
    spec.validate()?;
    for start in (0..spec.n_paths).step_by(BLOCK) {
        let end = (start + BLOCK).min(spec.n_paths);
        let block = (start..end).into_par_iter().map(|i| path_skeletons(spec, i)).collect::<Result<Vec<_>, _>>()?;
        for (offset, (path, sks)) in block.into_iter().enumerate() {
            each(start + offset, path, sks)?;
        }
    }
    Ok(())
}

fn tag(k: u32, i: usize) -> String {
    format!("k{k:02}_path{i:05}")
}

fn stats_json(xs: &[f64]) -> Value {
    let m = mean_se(xs);
    json!({ "mean": m.mean, "se": m.se, "n": m.n })
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let spec = cfg.ensemble_spec();
    let ks = spec.ks.clone();
    let mut arrivals = vec![Vec::new(); ks.len()];
    let mut waits = vec![Vec::new(); ks.len()];
    let mut ups = vec![0usize; ks.len()];
    let mut coupling = vec![Vec::new(); ks.len()];
    ensembles(&spec, |i, path, sks| {
        if let Some(path) = &path {
            out.path_csv(&format!("paths/path{i:05}.csv"), path.dt, spec.horizon, spec.seed, i, &path.values)?;
        }
        for (m, sk) in sks.iter().enumerate() {
            let rows = (0..=sk.len()).map(|n| {
                let sign = if n == 0 { 0 } else { sk.signs[n - 1] };
                [n.to_string(), num(sk.time(n)), sign.to_string(), num(sk.level(n))]
            });
            out.csv(&format!("skeletons/skeleton_{}.csv", tag(ks[m], i)), &["n", "T_n", "sign", "level"], rows)?;
            arrivals[m].push(sk.len() as f64);
            waits[m].extend((1..=sk.len()).map(|n| sk.time(n) - sk.time(n - 1)));
            ups[m] += sk.signs.iter().filter(|&&s| s > 0).count();
            if let Some(path) = &path {
                coupling[m].push(coupling_sup_error(path, sk));
            }
            if i == 0 {
                let xs: Vec<f64> = (0..=sk.len()).map(|n| sk.time(n)).collect();
                let ys: Vec<f64> = (0..=sk.len()).map(|n| sk.level(n)).collect();
                out.plot(&format!("skeleton_k{:02}", ks[m]), &xs, &ys)?;
            }
        }
        Ok(())
    })?;
    let levels: Vec<Value> = ks
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let eps = EnsembleSpec::epsilon(k);
            let total: f64 = arrivals[m].iter().sum();
            json!({
                "k": k,
                "epsilon": eps,
                "arrivals": stats_json(&arrivals[m]),
                "waiting_time": stats_json(&waits[m]),
                "expected_waiting_time": eps * eps,
                "up_fraction": if total > 0.0 { ups[m] as f64 / total } else { f64::NAN },
                "coupling_sup_error": if coupling[m].is_empty() { Value::Null } else { stats_json(&coupling[m]) },
            })
        })
        .collect();
    let summary =
        json!({ "n_paths": spec.n_paths, "horizon": spec.horizon, "fine_dt": spec.fine_dt(), "levels": levels });
    out.json("summary.json", &summary)?;
    Ok(Verdict::ok(summary))
}

pub fn operators(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let f = functional(cfg)?;
    let spec = cfg.ensemble_spec();
    let tol = cfg.tolerances.reconstruction;
    let mut worst = 0f64;
    ensembles(&spec, |i, _, sks| {
        for sk in &sks {
            let stepped = sk.to_stepped();
            let mut ev = SkeletonEvaluator::new(f.as_ref(), sk, &stepped);
            let mut rows = Vec::new();
            for t in ev.default_schedule() {
                let s = ev.sample(t)?;
                // the generator average is an independent route to dh + d2/2
                let average = ev.weak_generator_average(t)?;
                worst = worst.max((s.u - average).abs() / (1.0 + average.abs()));
                rows.push([
                    num(s.t),
                    s.n.to_string(),
                    num(s.dh),
                    num(s.d2),
                    num(s.u),
                    s.delta_ratio.map_or(String::new(), num),
                ]);
            }
            let name = format!("operators/operators_{}.csv", tag(sk_k(sk), i));
            out.csv(&name, &["t", "n", "dh", "d2", "u", "delta_ratio"], rows)?;
        }
        Ok(())
    })?;
    let summary = json!({ "functional": f.name(), "max_splitting_residual": worst, "tolerance": tol });
    out.json("summary.json", &summary)?;
    let passed = worst <= tol;
    Ok(Verdict::gate(passed, format!("generator splitting residual {worst:e} exceeds {tol:e}"), summary))
}

/// Level index `k` of a dyadic skeleton.
fn sk_k(sk: &Skeleton<f64>) -> u32 {
    (-sk.epsilon.log2()).round() as u32
}

pub fn occupation(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let spec = cfg.ensemble_spec();
    let ks = spec.ks.clone();
    let level = cfg.occupation.level;
    let mut terminal = vec![Vec::new(); ks.len()];
    ensembles(&spec, |i, _, sks| {
        for (m, sk) in sks.iter().enumerate() {
            let field = OccupationField::from_skeleton(sk);
            let rows = field
                .events()
                .iter()
                .map(|e| [num(sk.lattice(e.level)), num(e.time), e.direction.as_str().to_string()]);
            out.csv(&format!("occupation/events_{}.csv", tag(ks[m], i)), &["level", "event_time", "direction"], rows)?;
            terminal[m].push(field.level_value(level, spec.horizon)?);
        }
        Ok(())
    })?;
    let bins = cfg.occupation.bins;
    let mut levels = Vec::new();
    for (m, &k) in ks.iter().enumerate() {
        let values = &terminal[m];
        out.csv(
            &format!("occupation/level_values_k{k:02}.csv"),
            &["path", "value"],
            values.iter().enumerate().map(|(i, &v)| [i.to_string(), num(v)]),
        )?;
        let (edges, counts) = histogram(values, bins);
        out.csv(
            &format!("occupation/level_histogram_k{k:02}.csv"),
            &["bin_lo", "bin_hi", "count"],
            counts.iter().enumerate().map(|(b, c)| [num(edges[b]), num(edges[b + 1]), c.to_string()]),
        )?;
        let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let heights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        out.plot(&format!("level_histogram_k{k:02}"), &centers, &heights)?;
        levels.push(json!({ "k": k, "level": level, "terminal_value": stats_json(values) }));
    }
    let mut summary = json!({ "level": level, "horizon": spec.horizon, "levels": levels });
    let mut verdict = (true, String::new());
    if spec.fine_dt().is_some() && ks.len() >= 2 {
        let o = &cfg.occupation;
        let study = occupation_experiment(&spec, o.window, o.x_points, o.time_points, o.space_p)?;
        out.csv(
            "occupation/convergence.csv",
            &[
                "k",
                "median_sup_error",
                "mean_sup_error",
                "se",
                "mean_time_variation",
                "mean_space_variation",
                "n_paths",
            ],
            study.rows.iter().map(|r| {
                [
                    r.k.to_string(),
                    num(r.median_sup_error),
                    num(r.mean_sup_error),
                    num(r.se),
                    num(r.mean_time_variation),
                    num(r.mean_space_variation),
                    r.n_paths.to_string(),
                ]
            }),
        )?;
        out.json("occupation/study.json", &study)?;
        let xs: Vec<f64> = study.rows.iter().map(|r| r.k as f64).collect();
        let ys: Vec<f64> = study.rows.iter().map(|r| r.median_sup_error).collect();
        out.plot("occupation_convergence", &xs, &ys)?;
        if !study.trend.strictly_decreasing {
            verdict = (false, format!("median sup error is not decreasing across k: {ys:?}"));
        }
        summary["convergence"] = serde_json::to_value(&study.trend).unwrap_or(Value::Null);
    }
    out.json("summary.json", &summary)?;
    Ok(Verdict::gate(verdict.0, verdict.1, summary))
}

/// Equal-width bins over the sample range.
fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    (edges, counts)
}

/// Numbers from the last column of each line; `#` comments and lines that
/// do not parse (headers) are skipped.
pub fn read_series(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Usage(format!("invalid config field `pvar.input`: cannot read {}: {e}", path.display()))
    })?;
    let xs: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.rsplit(',').next().and_then(|v| v.trim().parse().ok()))
        .collect();
    if xs.len() < 2 {
        return Err(Failure::Usage(format!(
            "invalid config field `pvar.input`: {} holds fewer than two numbers",
            path.display()
        )));
    }
    Ok(xs)
}

pub fn pvar(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let Some(input) = &cfg.pvar.input else {
        return Err(Failure::Usage("invalid config field `pvar.input`: a series is required (--input FILE)".into()));
    };
    let xs = read_series(input)?;
    let report = p_variation(&xs, cfg.pvar.p)?;
    out.json("pvar.json", &report)?;
    let idx: Vec<f64> = report.partition.iter().map(|&i| i as f64).collect();
    let ys: Vec<f64> = report.partition.iter().map(|&i| xs[i]).collect();
    out.plot("pvar_partition", &idx, &ys)?;
    Ok(Verdict::ok(json!({ "p": report.p, "value": report.value, "root": report.root, "n_samples": xs.len() })))
}

#[derive(Serialize)]
struct YoungRun<'a> {
    integrand: &'a skelcalc::functionals::ScalarFn,
    integrator: &'a skelcalc::functionals::ScalarFn,
    points: usize,
    result: skelcalc::YoungResult64,
}

pub fn young(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let y = &cfg.young;
    let grid = uniform_grid(1.0, 1usize << y.depth);
    let f: Vec<f64> = grid.iter().map(|&t| y.integrand.eval(t)).collect();
    let g: Vec<f64> = grid.iter().map(|&t| y.integrator.eval(t)).collect();
    let opts = YoungOptions { tolerance: cfg.tolerances.young, max_depth: y.depth, extrapolate: !y.raw };
    let result = young_integral_1d(&f, &g, None, y.exponents, &opts)?;
    let rows =
        result.trace.iter().enumerate().map(|(l, &s)| {
            [l.to_string(), num(s), result.extrapolated_trace.get(l).map_or(String::new(), |&v| num(v))]
        });
    out.csv("young_trace.csv", &["level", "left_sum", "extrapolated"], rows)?;
    let levels: Vec<f64> = (0..result.trace.len()).map(|l| l as f64).collect();
    out.plot("young_trace", &levels, &result.trace)?;
    let summary = json!({ "value": result.value, "converged": result.converged, "extrapolated": result.extrapolated });
    let passed = result.converged;
    let message = format!("refinement did not reach tolerance {:e} by depth {}", cfg.tolerances.young, y.depth);
    out.json(
        "young.json",
        &YoungRun { integrand: &y.integrand, integrator: &y.integrator, points: grid.len(), result },
    )?;
    Ok(Verdict::gate(passed, message, summary))
}

pub fn decompose(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let f = functional(cfg)?;
    let spec = cfg.ensemble_spec();
    let ks = spec.ks.clone();
    let grid = uniform_grid(spec.horizon, cfg.ensemble.grid_points);
    let clock = cfg.ensemble.clock;
    let mut residual = vec![0f64; ks.len()];
    let mut terminal_m = vec![Vec::new(); ks.len()];
    let mut fell_back = vec![0usize; ks.len()];
    ensembles(&spec, |i, _, sks| {
        for (m, sk) in sks.iter().enumerate() {
            let d = decompose_discrete(f.as_ref(), sk, &grid, clock)?;
            residual[m] = residual[m].max(d.max_relative_residual());
            terminal_m[m].push(*d.martingale.last().expect("grid is nonempty"));
            fell_back[m] += d.fell_back as usize;
            let rows = (0..grid.len()).map(|j| {
                [
                    num(d.times[j]),
                    num(d.x[j]),
                    num(d.martingale[j]),
                    num(d.martingale_direct[j]),
                    num(d.horizontal[j]),
                    num(d.occupation[j]),
                    num(d.reconstruction_residual[j]),
                ]
            });
            out.csv(
                &format!("decompose/decompose_{}.csv", tag(ks[m], i)),
                &["t", "x", "martingale", "martingale_direct", "horizontal", "occupation", "residual"],
                rows,
            )?;
            if i == 0 {
                out.plot(&format!("decompose_martingale_k{:02}", ks[m]), &d.times, &d.martingale)?;
                let drift: Vec<f64> = (0..grid.len()).map(|j| d.drift(j)).collect();
                out.plot(&format!("decompose_drift_k{:02}", ks[m]), &d.times, &drift)?;
            }
        }
        Ok(())
    })?;
    let tol = cfg.tolerances.reconstruction;
    let levels: Vec<Value> = ks
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            json!({
                "k": k,
                "max_relative_residual": residual[m],
                "terminal_martingale": stats_json(&terminal_m[m]),
                "fell_back": fell_back[m],
            })
        })
        .collect();
    let worst = residual.iter().copied().fold(0.0, f64::max);
    let summary = json!({ "functional": f.name(), "clock": clock, "tolerance": tol, "levels": levels });
    out.json("summary.json", &summary)?;
    Ok(Verdict::gate(worst <= tol, format!("reconstruction residual {worst:e} exceeds {tol:e}"), summary))
}

pub fn drift(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let f = functional(cfg)?;
    let spec = cfg.ensemble_spec();
    let table = drift_via_occupation_experiment(
        f.as_ref(),
        &cfg.drift.oracle,
        &spec,
        cfg.ensemble.grid_points,
        cfg.ensemble.clock,
    )?;
    let clock =
        serde_json::to_value(cfg.ensemble.clock).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    out.csv(
        "convergence.csv",
        &["k", "mean_sup_error", "se", "n_paths", "clock", "oracle"],
        table.rows.iter().map(|r| {
            [r.k.to_string(), num(r.mean_sup_error), num(r.se), r.n_paths.to_string(), clock.clone(), r.oracle.clone()]
        }),
    )?;
    out.json("drift.json", &table)?;
    let xs: Vec<f64> = table.rows.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.mean_sup_error).collect();
    out.plot("drift_convergence", &xs, &ys)?;
    let last = table.final_row().mean_sup_error;
    let tol = cfg.tolerances.final_error;
    let decreasing = xs.len() < 2 || table.trend.strictly_decreasing;
    let summary = json!({ "functional": f.name(), "oracle": cfg.drift.oracle.label(), "errors": ys, "final": last, "tolerance": tol, "trend": table.trend });
    let message = if decreasing {
        format!("final mean sup error {last} exceeds {tol}")
    } else {
        format!("mean sup error is not decreasing across k: {ys:?}")
    };
    Ok(Verdict::gate(decreasing && last <= tol, message, summary))
}

pub fn ito_check(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let FunctionalSpec::ExPhi { terms, exponents } = &cfg.functional else {
        return Err(Failure::Usage(
            "invalid config field `functional.name`: ito-check needs an `ex_phi` functional".into(),
        ));
    };
    let phi = ex_phi(terms.clone(), *exponents)?;
    let settings = ItoCheckSettings {
        ks: cfg.ks(),
        n_paths: cfg.ensemble.n_paths,
        horizon: cfg.ensemble.horizon,
        dt: cfg.ito_check.dt,
        seed: cfg.seed,
    };
    let study = functional_ito_check(&phi, &settings)?;
    out.csv(
        "ito_check.csv",
        &["k", "mean_abs_residual", "se", "max_ibp_relative", "n_paths"],
        study.rows.iter().map(|r| {
            [r.k.to_string(), num(r.mean_abs_residual), num(r.se), num(r.max_ibp_relative), r.n_paths.to_string()]
        }),
    )?;
    out.json("ito_check.json", &study)?;
    let xs: Vec<f64> = study.rows.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = study.rows.iter().map(|r| r.mean_abs_residual).collect();
    out.plot("ito_residual", &xs, &ys)?;
    let ibp = study.rows.iter().map(|r| r.max_ibp_relative).fold(0.0, f64::max);
    let ratio = study.final_ratio();
    let decreasing = xs.len() < 2 || study.trend.strictly_decreasing;
    let (tol_ibp, tol_final) = (cfg.tolerances.ibp, cfg.tolerances.final_error);
    let summary = json!({ "residuals": ys, "final_ratio": ratio, "max_ibp_relative": ibp, "trend": study.trend });
    let message = if ibp > tol_ibp {
        format!("2D Young term and its by-parts form differ by {ibp:e} > {tol_ibp:e}")
    } else if !decreasing {
        format!("residual is not decreasing across k: {ys:?}")
    } else {
        format!("final residual ratio {ratio} exceeds {tol_final}")
    };
    Ok(Verdict::gate(ibp <= tol_ibp && decreasing && ratio <= tol_final, message, summary))
}

pub fn audit(cfg: &ExperimentConfig, out: &mut Output) -> Run {
    let f = functional(cfg)?;
    let a = &cfg.audit;
    let settings = AuditSettings {
        n_paths: cfg.ensemble.n_paths,
        horizon: cfg.ensemble.horizon,
        dt: a.dt,
        window: a.window,
        seed: cfg.seed,
        declared: a.declared,
    };
    let report = assumption_audit(f.as_ref(), &settings)?;
    out.json("audit.json", &report)?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| c.pass == Some(false)).map(|c| c.assumption).collect();
    let summary = json!({ "functional": report.functional, "failed_checks": failed, "control_exponents": report.control_exponents });
    Ok(Verdict::gate(failed.is_empty(), format!("declared assumptions not met: {}", failed.join(", ")), summary))
}
