//! Pathwise check of the functional Itô formula for the kernel functional
//! `F_t(c) = ∫_0^t ∫_{-∞}^{c(t)} φ(c(r), y) dy dr`:
//!
//! ```text
//! F_T(B) = ∫_0^T ∇F_s dB_s + ∫_0^T ∫_{-∞}^{B_s} φ(B_s, y) dy ds - ½ ∫∫ ∇F_s(x) d_{(s,x)} ℓ^x(s)
//! ```
//!
//! with `∇F_s(x) = ∫_0^s φ(B_r, x) dr`. Level `k` fixes the resolution of the
//! approximations on the right: the stopping-time mesh `2^{-k}` of the Itô
//! term and a `(2^k + 1)`-time, `2^{-k}`-spaced grid for the 2D Young term,
//! whose integrator is the binned local time with cells tiling the line.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::uniform_grid;
use crate::error::{invalid, Error, Result};
use crate::functionals::{karandikar_sum, ExPhi, Functional, Interpolation, KnotPath, ScalarFn};
use crate::grid::GridField;
use crate::occupation::local_time_oracle;
use crate::path_engine::generate_brownian;
use crate::rng::{stream, Purpose};
use crate::stats::{decreasing_trend, mean_se, TrendVerdict};
use crate::young::{ibp_transform, young_integral_2d, YoungOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoCheckSettings {
    pub ks: Vec<u32>,
    pub n_paths: usize,
    pub horizon: f64,
    /// Step of the sampled Brownian path.
    pub dt: f64,
    pub seed: u64,
}

/// The four terms on one path at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItoPathTerms {
    pub lhs: f64,
    pub ito: f64,
    pub time_term: f64,
    pub young_2d: f64,
    /// `|young - by parts| / Σ|terms|` for the 2D term.
    pub ibp_relative: f64,
}

impl ItoPathTerms {
    pub fn rhs(&self) -> f64 {
        self.ito + self.time_term - 0.5 * self.young_2d
    }

    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs()).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItoCheckRow {
    pub k: u32,
    pub mean_abs_residual: f64,
    pub se: f64,
    pub max_ibp_relative: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItoCheckStudy {
    pub rows: Vec<ItoCheckRow>,
    /// `max |F_T(B)|` over paths.
    pub sup_abs_lhs: f64,
    pub exponents: (f64, f64),
    #[serde(skip)]
    pub terms: Vec<Vec<ItoPathTerms>>,
    pub trend: TrendVerdict,
}

impl ItoCheckStudy {
    /// Final mean residual over `sup |LHS|`.
    pub fn final_ratio(&self) -> f64 {
        let last = self.rows.last().map_or(0.0, |r| r.mean_abs_residual);
        if self.sup_abs_lhs > 0.0 {
            last / self.sup_abs_lhs
        } else {
            last
        }
    }
}

/// Tabulated `x ↦ ∫_{-∞}^x p(y) dy` for a compactly supported profile:
/// cumulative trapezoid on a fine grid, linear interpolation in between.
struct PrimitiveTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl PrimitiveTable {
    const CELLS: usize = 1 << 16;

    fn new(p: &ScalarFn) -> Result<Self> {
        let (lo, hi) = p.support().ok_or_else(|| invalid("kernel profile must have compact support"))?;
        let step = ((hi - lo) / Self::CELLS as f64).max(f64::MIN_POSITIVE);
        let mut values = Vec::with_capacity(Self::CELLS + 1);
        let mut acc = 0.0;
        let mut prev = p.eval(lo);
        values.push(0.0);
        for i in 1..=Self::CELLS {
            let v = p.eval(lo + step * i as f64);
            acc += (prev + v) * step / 2.0;
            values.push(acc);
            prev = v;
        }
        Ok(Self { lo, step, values })
    }

    fn at(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.step;
        if u <= 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i >= Self::CELLS {
            return self.values[Self::CELLS];
        }
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// All terms of the identity per path and level, with the 2D term also
/// evaluated in its integration-by-parts form.
pub fn functional_ito_check(phi: &ExPhi, settings: &ItoCheckSettings) -> Result<ItoCheckStudy> {
    let exponents = phi.exponents();
    if exponents.0 <= 0.5 {
        return Err(Error::YoungRegime(format!(
            "the 2D Young term needs a kernel Hölder of order in (1/2, 1] in space, got {}",
            exponents.0
        )));
    }
    let ItoCheckSettings { ref ks, n_paths, horizon, dt, seed } = *settings;
    if ks.is_empty() || n_paths == 0 || !(horizon > 0.0) || !(dt > 0.0) {
        return Err(invalid("ito check needs levels, paths, and positive horizon and step"));
    }
    let tables = phi.terms().iter().map(|t| PrimitiveTable::new(&t.profile)).collect::<Result<Vec<_>>>()?;
    let opts = YoungOptions::<f64>::two_dim().raw();
    let per_path: Vec<Vec<ItoPathTerms>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = generate_brownian(horizon, dt, &mut stream(seed, Purpose::Path, i as u64))?;
            let c = path.to_stepped();
            let lhs = Functional::<f64>::eval(phi, horizon, &c)?;
            let mut bound = phi.bind(&c);
            // left-point time integral on the sampling grid
            let time_term: f64 = path.values[..path.len() - 1]
                .iter()
                .map(|&b| {
                    phi.terms().iter().zip(&tables).map(|(term, tab)| term.weight.eval(b) * tab.at(b)).sum::<f64>() * dt
                })
                .sum();
            let eta = KnotPath::from_stepped(&c, horizon);
            let gradients = eta
                .times
                .iter()
                .zip(&eta.values)
                .map(|(&s, &x)| bound.vertical_gradient(s, x).expect("closed-form gradient"))
                .collect::<Result<Vec<f64>>>()?;
            let rho = KnotPath::new(eta.times.clone(), gradients, Interpolation::Step)?;
            let (bmin, bmax) = path.values.iter().fold((0f64, 0f64), |(a, b), &v| (a.min(v), b.max(v)));
            ks.iter()
                .map(|&k| {
                    let q = 2f64.powi(-(k as i32));
                    let ito = karandikar_sum(&rho, &eta, horizon, q);
                    // space cells of width q covering the path with one spare cell on each side
                    let lo = (bmin / q).floor() as i64 - 1;
                    let hi = (bmax / q).ceil() as i64 + 1;
                    let xs: Vec<f64> = (lo..=hi).map(|j| j as f64 * q).collect();
                    let times = uniform_grid(horizon, 1usize << k);
                    let local = local_time_oracle(&path, &times, &xs, Some(q / 2.0))?;
                    let mut g = GridField::zeros(times.clone(), xs.clone());
                    for (a, &s) in times.iter().enumerate() {
                        for (b, &x) in xs.iter().enumerate() {
                            g.set(a, b, bound.vertical_gradient(s, x).expect("closed-form gradient")?);
                        }
                    }
                    let young = young_integral_2d(&g, &local.field, &opts)?;
                    let parts = ibp_transform(&g, &local.field)?;
                    let ibp_relative =
                        if parts.scale > 0.0 { (young.value - parts.via_parts).abs() / parts.scale } else { 0.0 };
                    Ok(ItoPathTerms { lhs, ito, time_term, young_2d: young.value, ibp_relative })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut terms = vec![Vec::with_capacity(n_paths); ks.len()];
    for row in per_path {
        for (m, t) in row.into_iter().enumerate() {
            terms[m].push(t);
        }
    }
    let residuals: Vec<Vec<f64>> = terms.iter().map(|ts| ts.iter().map(ItoPathTerms::residual).collect()).collect();
    let rows: Vec<ItoCheckRow> = ks
        .iter()
        .zip(&terms)
        .zip(&residuals)
        .map(|((&k, ts), res)| {
            let s = mean_se(res);
            ItoCheckRow {
                k,
                mean_abs_residual: s.mean,
                se: s.se,
                max_ibp_relative: ts.iter().map(|t| t.ibp_relative).fold(0.0, f64::max),
                n_paths: s.n,
            }
        })
        .collect();
    let centers: Vec<f64> = rows.iter().map(|r| r.mean_abs_residual).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.se).collect();
    let trend = decreasing_trend(&centers, &ses, Some(&residuals));
    let sup_abs_lhs = terms[0].iter().map(|t| t.lhs.abs()).fold(0.0, f64::max);
    Ok(ItoCheckStudy { rows, sup_abs_lhs, exponents, terms, trend })
}
