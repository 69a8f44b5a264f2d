//! Empirical regularity constants of a functional on sampled Brownian paths.
//! An audit reports; it does not gate anything.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::uniform_grid;
use crate::error::{invalid, Result};
use crate::functionals::Functional;
use crate::grid::GridField;
use crate::path_engine::{generate_brownian, SteppedPath};
use crate::rng::{stream, Purpose};
use crate::variation::holder_2d_control_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSettings {
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Space window for terminal values.
    pub window: (f64, f64),
    pub seed: u64,
    /// Declared vertical (space) and horizontal (time) Hölder exponents.
    #[serde(default)]
    pub declared: Option<(f64, f64)>,
}

/// One audited property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub assumption: &'static str,
    pub description: &'static str,
    /// Fitted exponent; `None` when every increment vanished.
    pub exponent: Option<f64>,
    /// Smallest constant valid at the fitted exponent (or the growth ratio).
    pub constant: f64,
    pub declared: Option<f64>,
    /// Declared exponent within 0.15 of (or below) the fitted one, and the
    /// constant finite; `None` when nothing was declared.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub functional: String,
    pub n_paths: usize,
    pub checks: Vec<AuditCheck>,
    /// `a1` (time) and `a2` (space) of the fitted 2D control of the gradient field.
    pub control_exponents: Option<(f64, f64)>,
    pub note: &'static str,
}

const SLACK: f64 = 0.15;
const SCALES: i32 = 7;

/// Slope of `log d` on `log h` over the nonzero pairs, and the smallest
/// constant `max d / h^slope`.
fn fit(pairs: &[(f64, f64)]) -> (Option<f64>, f64) {
    let pts: Vec<(f64, f64)> = pairs.iter().filter(|p| p.1 > 1e-14).map(|&(h, d)| (h.ln(), d.ln())).collect();
    if pts.len() < 2 {
        return (None, pairs.iter().map(|p| p.1).fold(0.0, f64::max));
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = (sxy / sxx).clamp(0.0, 1.0);
    let constant = pairs.iter().map(|&(h, d)| d / h.powf(slope)).fold(0.0, f64::max);
    (Some(slope), constant)
}

fn gradient(f: &dyn Functional<f64>, c: &SteppedPath<f64>, t: f64, x: f64) -> Result<f64> {
    match f.vertical_gradient(t, c, x) {
        Some(g) => g,
        None => {
            let h = 1e-6;
            Ok((f.eval_modified(t, c, x + h)? - f.eval_modified(t, c, x - h)?) / (2.0 * h))
        }
    }
}

/// Per path: `(h, sup |Δ|)` pairs for the vertical, perturbation and
/// horizontal checks, growth ratios, and the gradient field.
struct PathAudit {
    vertical: Vec<(f64, f64)>,
    perturbation: Vec<(f64, f64)>,
    horizontal: Vec<(f64, f64)>,
    growth: f64,
    gradient_growth: f64,
    field: GridField<f64>,
}

fn audit_path(f: &dyn Functional<f64>, s: &AuditSettings, i: usize) -> Result<PathAudit> {
    let path = generate_brownian(s.horizon, s.dt, &mut stream(s.seed, Purpose::Path, i as u64))?;
    let c = path.to_stepped();
    let (a, b) = s.window;
    let base = (b - a) / 512.0;
    let xs = uniform_grid(b - a, 512).into_iter().map(|x| a + x).collect::<Vec<_>>();
    let t = s.horizon;

    let grads = xs.iter().map(|&x| gradient(f, &c, t, x)).collect::<Result<Vec<_>>>()?;
    let vertical = (0..SCALES)
        .map(|m| {
            let stride = 1usize << m;
            let d = (0..xs.len() - stride).map(|j| (grads[j + stride] - grads[j]).abs()).fold(0.0, f64::max);
            (base * stride as f64, d)
        })
        .collect();

    // additive smooth perturbation of the whole path
    let perturbation = (0..SCALES)
        .map(|m| {
            let delta = 2f64.powi(-2 - m);
            let shift = |v: f64, s: f64| v + delta * (std::f64::consts::PI * s / t).sin();
            let d = SteppedPath::new(
                shift(c.initial_value, 0.0),
                c.jump_times.clone(),
                c.jump_times.iter().zip(&c.values_after_jump).map(|(&s, &v)| shift(v, s)).collect(),
            )?;
            let worst = xs
                .iter()
                .step_by(8)
                .map(|&x| Ok((gradient(f, &c, t, x)? - gradient(f, &d, t, x)?).abs()))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok((delta, worst))
        })
        .collect::<Result<Vec<_>>>()?;

    let horizontal = (0..SCALES)
        .map(|m| {
            let h = s.horizon * 2f64.powi(-3 - m);
            let mut worst = 0f64;
            for &u in &[0.25, 0.5, 0.75] {
                let t0 = u * s.horizon;
                let (ext, t1) = c.horizontal_extension(t0, h)?;
                let now = f.eval(t0, &c)?;
                worst = worst.max((f.eval(t1, &ext)? - now).abs());
            }
            Ok((h, worst))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut growth = 0f64;
    let mut gradient_growth = 0f64;
    let mut running = 0f64;
    for (n, &v) in path.values.iter().enumerate().step_by(64) {
        running = running.max(path.values[..=n].iter().fold(0f64, |m, w| m.max(w.abs())));
        let tn = path.time(n);
        growth = growth.max(f.eval(tn, &c)?.abs() / (1.0 + running));
        gradient_growth = gradient_growth.max(gradient(f, &c, tn, v)?.abs() / (1.0 + running));
    }

    let times = uniform_grid(s.horizon, 32);
    let fxs: Vec<f64> = xs.iter().copied().step_by(8).collect();
    let mut field = GridField::zeros(times.clone(), fxs.clone());
    for (p, &tt) in times.iter().enumerate() {
        for (q, &x) in fxs.iter().enumerate() {
            field.set(p, q, gradient(f, &c, tt, x)?);
        }
    }
    Ok(PathAudit { vertical, perturbation, horizontal, growth, gradient_growth, field })
}

/// Largest per-scale value across paths.
fn envelope(paths: &[PathAudit], pick: impl Fn(&PathAudit) -> &Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let first = pick(&paths[0]);
    (0..first.len()).map(|m| (first[m].0, paths.iter().map(|p| pick(p)[m].1).fold(0.0, f64::max))).collect()
}

pub fn assumption_audit(f: &dyn Functional<f64>, settings: &AuditSettings) -> Result<AuditReport> {
    if settings.n_paths == 0
        || !(settings.horizon > 0.0)
        || !(settings.dt > 0.0)
        || !(settings.window.0 < settings.window.1)
    {
        return Err(invalid("audit needs paths, a positive horizon and step, and a nonempty window"));
    }
    let paths =
        (0..settings.n_paths).into_par_iter().map(|i| audit_path(f, settings, i)).collect::<Result<Vec<_>>>()?;
    let judge = |exponent: Option<f64>, constant: f64, declared: Option<f64>| {
        declared.map(|d| constant.is_finite() && exponent.is_none_or(|e| d <= e + SLACK))
    };
    let fitted = |assumption, description, pairs: Vec<(f64, f64)>, declared: Option<f64>| {
        let (exponent, constant) = fit(&pairs);
        AuditCheck { assumption, description, exponent, constant, declared, pass: judge(exponent, constant, declared) }
    };
    let (dv, dh) = settings.declared.map_or((None, None), |(v, h)| (Some(v), Some(h)));
    let growth = paths.iter().map(|p| p.growth).fold(0.0, f64::max);
    let gradient_growth = paths.iter().map(|p| p.gradient_growth).fold(0.0, f64::max);
    let checks = vec![
        fitted("A2", "vertical gradient Hölder in the terminal value", envelope(&paths, |p| &p.vertical), dv),
        fitted(
            "A3/L1",
            "vertical gradient under a smooth path perturbation",
            envelope(&paths, |p| &p.perturbation),
            None,
        ),
        fitted("A5", "horizontal extension Hölder in time", envelope(&paths, |p| &p.horizontal), dh),
        AuditCheck {
            assumption: "A1",
            description: "|F_t(c)| / (1 + sup |c|) on sampled paths",
            exponent: None,
            constant: growth,
            declared: None,
            pass: Some(growth.is_finite()),
        },
        AuditCheck {
            assumption: "A4",
            description: "|∇F_t(c)| / (1 + sup |c|) on sampled paths",
            exponent: None,
            constant: gradient_growth,
            declared: None,
            pass: Some(gradient_growth.is_finite()),
        },
    ];
    let control_exponents = holder_2d_control_fit(&paths[0].field).ok().map(|h| (h.a1, h.a2));
    Ok(AuditReport {
        functional: f.name().to_string(),
        n_paths: settings.n_paths,
        checks,
        control_exponents,
        note: "finite values certify the properties only on the sampled paths",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{ex_phi, identity_terminal, quadratic_terminal, KernelTerm, ScalarFn};

    fn settings(declared: Option<(f64, f64)>) -> AuditSettings {
        AuditSettings { n_paths: 3, horizon: 1.0, dt: 2f64.powi(-10), window: (-1.5, 1.5), seed: 8, declared }
    }

    #[test]
    fn identity_has_zero_vertical_constant() {
        let r = assumption_audit(&identity_terminal(), &settings(None)).unwrap();
        assert_eq!(r.checks[0].exponent, None);
        assert_eq!(r.checks[0].constant, 0.0);
    }

    #[test]
    fn quadratic_is_lipschitz_with_constant_two() {
        let r = assumption_audit(&quadratic_terminal(), &settings(Some((1.0, 1.0)))).unwrap();
        let a2 = &r.checks[0];
        assert!((a2.exponent.unwrap() - 1.0).abs() < 1e-6);
        assert!((a2.constant - 2.0).abs() < 1e-6);
        assert_eq!(a2.pass, Some(true));
    }

    #[test]
    fn holder_kernel_exponent_is_recovered() {
        for gamma in [0.6, 0.8] {
            let phi = ex_phi(
                vec![KernelTerm {
                    weight: ScalarFn::Constant { value: 1.0 },
                    profile: ScalarFn::HolderBump { center: 0.0, radius: 1.0, exponent: gamma },
                }],
                None,
            )
            .unwrap();
            let r = assumption_audit(&phi, &settings(Some((gamma, 1.0)))).unwrap();
            let e = r.checks[0].exponent.unwrap();
            assert!((e - gamma).abs() < 0.15, "gamma = {gamma}: fitted {e}");
        }
    }
}
