//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Every tolerance is pinned below.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use skelcalc::decomposition::{
    decompose_discrete, drift_via_occupation_experiment, functional_ito_check, karandikar_experiment,
    occupation_experiment, path_skeletons, uniform_grid, weak_derivative_experiment, DriftOracle, EnsembleSpec,
    ItoCheckSettings, Sampling,
};
use skelcalc::functionals::{
    constant, ex_phi, identity_terminal, integral_time, quadratic_terminal, rough_drift, running_max, terminal,
    Functional, KernelTerm, RoughDriftParams, ScalarFn,
};
use skelcalc::occupation::summation_by_parts_check;
use skelcalc::operators::Clock;
use skelcalc::path_engine::{build_skeleton_walk, exit_time_survival, sample_exit_time};
use skelcalc::rng::{stream, Purpose};
use skelcalc::stats::{chi_square, ks_one_sample, mean_se};
use skelcalc::variation::{p_variation, p_variation_brute};
use skelcalc::young::{young_integral_1d, YoungOptions};

// criterion 1
const C1_RECONSTRUCTION_REL: f64 = 1e-9;
const C1_SBP_REL: f64 = 1e-10;
// criterion 2
const C2_SE_MULTIPLE: f64 = 3.0;
const C2_MIN_P: f64 = 1e-3;
// criterion 3
const C3_QUADRATIC_FINAL: f64 = 0.10;
const C3_KERNEL_FINAL: f64 = 0.20;
// criterion 4
const C4_ALPHA: f64 = 0.05;
const C4_SE_MULTIPLE: f64 = 3.0;
// criterion 5
const C5_SPREAD: f64 = 2.0;
// criterion 6
const C6_QUADRATIC_FINAL: f64 = 0.05;
const C6_ROUGH_FINAL: f64 = 0.10;
// criterion 7
const C7_FINAL_RATIO: f64 = 0.10;
const C7_IBP_REL: f64 = 1e-6;
// criterion 9
const C9_SMOOTH_ABS: f64 = 1e-6;
// criterion 10
const C10_FINAL_REL: f64 = 0.05;
const C10_TERMINAL_ABS: f64 = 1e-8;

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn kernel() -> skelcalc::functionals::ExPhi {
    ex_phi(vec![KernelTerm { weight: ScalarFn::Identity, profile: ScalarFn::Bump { center: 0.0, radius: 1.0 } }], None)
        .expect("valid kernel")
}

fn weierstrass() -> ScalarFn {
    ScalarFn::Weierstrass { exponent: 0.6, terms: 16 }
}

fn library() -> Vec<Arc<dyn Functional<f64>>> {
    let one: Arc<dyn Functional<f64>> = Arc::new(constant(1.0));
    let id: Arc<dyn Functional<f64>> = Arc::new(identity_terminal());
    let sin = ScalarFn::Sin { amplitude: 1.0, frequency: 1.5, phase: 0.3 };
    let y_path: Arc<dyn Functional<f64>> = Arc::new(integral_time(sin.clone()).unwrap());
    let params = || RoughDriftParams::new(weierstrass(), 0.6);
    vec![
        id.clone(),
        Arc::new(quadratic_terminal()),
        Arc::new(constant(2.5)),
        Arc::new(terminal(sin.clone()).unwrap()),
        Arc::new(integral_time(ScalarFn::Identity).unwrap()),
        Arc::new(running_max()),
        Arc::new(kernel()),
        Arc::new(rough_drift(one, id.clone(), params()).unwrap()),
        Arc::new(rough_drift(y_path, Arc::new(terminal(sin).unwrap()), params()).unwrap()),
    ]
}

fn c1() -> Verdict {
    let spec =
        EnsembleSpec { ks: (3..=8).collect(), n_paths: 100, horizon: 0.25, sampling: Sampling::Exact, seed: SEED };
    let grid = uniform_grid(spec.horizon, 32);
    let lib = library();
    let (mut worst_rec, mut worst_sbp) = (0f64, 0f64);
    for i in 0..spec.n_paths {
        let (_, sks) = path_skeletons(&spec, i).unwrap();
        for sk in &sks {
            for f in &lib {
                let d = decompose_discrete(f.as_ref(), sk, &grid, Clock::SquareBracket).unwrap();
                worst_rec = worst_rec.max(d.max_relative_residual());
                let s = summation_by_parts_check(f.as_ref(), sk, spec.horizon, Clock::SquareBracket).unwrap();
                worst_sbp = worst_sbp.max(s.residual / s.lhs.abs().max(1.0));
            }
        }
    }
    verdict(
        worst_rec <= C1_RECONSTRUCTION_REL && worst_sbp <= C1_SBP_REL,
        format!(
            "max reconstruction rel {worst_rec:.2e}, max summation-by-parts rel {worst_sbp:.2e} over {} functionals",
            lib.len()
        ),
    )
}

fn c2() -> Verdict {
    let eps = 2f64.powi(-4);
    let mut rng = stream(SEED, Purpose::Synthetic, 2);
    let draws: Vec<f64> = (0..10_000).map(|_| sample_exit_time(eps, &mut rng).unwrap()).collect();
    let m = mean_se(&draws);
    let target = 2f64.powi(-8);
    let mean_ok = (m.mean - target).abs() <= C2_SE_MULTIPLE * m.se;
    let (_, ks_p) = ks_one_sample(&draws, |t| 1.0 - exit_time_survival(eps, t).unwrap());
    let sk = build_skeleton_walk(eps, 40.0, &mut stream(SEED, Purpose::Walk, 2)).unwrap();
    let ups = sk.signs.iter().filter(|&&s| s > 0).count() as f64;
    let n = sk.signs.len() as f64;
    let (_, chi_p) = chi_square(&[ups, n - ups], &[n / 2.0, n / 2.0]);
    verdict(
        mean_ok && ks_p > C2_MIN_P && chi_p > C2_MIN_P,
        format!(
            "mean {:.4e} (target {target:.4e}, se {:.1e}), KS p {ks_p:.3}, sign chi2 p {chi_p:.3} over {n} steps",
            m.mean, m.se
        ),
    )
}

fn c3() -> Verdict {
    let spec = EnsembleSpec {
        ks: (3..=7).collect(),
        n_paths: 200,
        horizon: 1.0,
        sampling: Sampling::Coupled { dt_divisor: 64.0, continuity_correction: false },
        seed: SEED,
    };
    let q = weak_derivative_experiment(&quadratic_terminal(), &spec, 4096).unwrap();
    let k = weak_derivative_experiment(&kernel(), &spec, 4096).unwrap();
    let fmt = |t: &skelcalc::decomposition::ConvergenceTable| {
        t.rows.iter().map(|r| format!("{:.4}", r.mean_sup_error)).collect::<Vec<_>>().join(" ")
    };
    verdict(
        q.trend.strictly_decreasing
            && k.trend.strictly_decreasing
            && q.final_row().mean_sup_error < C3_QUADRATIC_FINAL
            && k.final_row().mean_sup_error < C3_KERNEL_FINAL,
        format!("relative L2 error quadratic [{}], kernel [{}]", fmt(&q), fmt(&k)),
    )
}

fn c4_c5() -> (Verdict, Verdict) {
    let spec = EnsembleSpec {
        ks: (4..=8).collect(),
        n_paths: 100,
        horizon: 1.0,
        // uncorrected crossings undercount visits by ~15% at the finest level
        sampling: Sampling::Coupled { dt_divisor: 64.0, continuity_correction: true },
        seed: SEED,
    };
    let s = occupation_experiment(&spec, (-2.0, 2.0), 64, 64, 3.0).unwrap();
    let medians: Vec<String> = s.rows.iter().map(|r| format!("{:.4}", r.median_sup_error)).collect();
    let p_values: Vec<String> = s.trend.paired_p_values.iter().map(|p| format!("{p:.1e}")).collect();
    let at7 = &s.rows.iter().find(|r| r.k == 7).unwrap().level_zero;
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let sanity = (at7.mean - target).abs() <= C4_SE_MULTIPLE * at7.se;
    let c4 = verdict(
        s.trend.strictly_decreasing && s.trend.paired_significant(C4_ALPHA) && sanity,
        format!(
            "median sup error [{}], paired p [{}], E L(k=7, x=0) = {:.4} +- {:.4} (target {target:.4})",
            medians.join(" "),
            p_values.join(" "),
            at7.mean,
            at7.se
        ),
    );
    let spread = |v: Vec<f64>| v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min);
    let tv = spread(s.rows.iter().map(|r| r.mean_time_variation).collect());
    // variation norms; the p-th powers are reported alongside
    let sv = spread(s.rows.iter().map(|r| r.mean_space_variation).collect());
    let svp = spread(s.rows.iter().map(|r| r.mean_space_variation_power).collect());
    let c5 = verdict(
        tv <= C5_SPREAD && sv <= C5_SPREAD,
        format!(
            "max/min across k: time 1-variation {tv:.3}, space 3-variation norm {sv:.3} [{}] (cubed: {svp:.3})",
            s.rows.iter().map(|r| format!("{:.3}", r.mean_space_variation)).collect::<Vec<_>>().join(" ")
        ),
    );
    (c4, c5)
}

fn c6() -> Verdict {
    let spec =
        EnsembleSpec { ks: (4..=8).collect(), n_paths: 200, horizon: 1.0, sampling: Sampling::Exact, seed: SEED };
    let q = drift_via_occupation_experiment(
        &quadratic_terminal(),
        &DriftOracle::ElapsedTime,
        &spec,
        256,
        Clock::SquareBracket,
    )
    .unwrap();
    let one: Arc<dyn Functional<f64>> = Arc::new(constant(1.0));
    let f = rough_drift(one.clone(), one, RoughDriftParams::new(weierstrass(), 0.6)).unwrap();
    let r = drift_via_occupation_experiment(
        &f,
        &DriftOracle::GIncrement { g: weierstrass() },
        &spec,
        256,
        Clock::SquareBracket,
    )
    .unwrap();
    let fmt = |t: &skelcalc::decomposition::ConvergenceTable| {
        t.rows.iter().map(|r| format!("{:.4}", r.mean_sup_error)).collect::<Vec<_>>().join(" ")
    };
    verdict(
        q.trend.strictly_decreasing
            && r.trend.strictly_decreasing
            && q.final_row().mean_sup_error < C6_QUADRATIC_FINAL * spec.horizon
            && r.final_row().mean_sup_error < C6_ROUGH_FINAL,
        format!("mean sup error quadratic [{}], rough drift [{}]", fmt(&q), fmt(&r)),
    )
}

fn c7() -> Verdict {
    let settings = ItoCheckSettings { ks: vec![5, 6, 7], n_paths: 100, horizon: 1.0, dt: 2f64.powi(-18), seed: SEED };
    let s = functional_ito_check(&kernel(), &settings).unwrap();
    let means: Vec<String> = s.rows.iter().map(|r| format!("{:.2e}", r.mean_abs_residual)).collect();
    let ibp = s.rows.iter().map(|r| r.max_ibp_relative).fold(0.0, f64::max);
    verdict(
        s.trend.strictly_decreasing && s.final_ratio() < C7_FINAL_RATIO && ibp <= C7_IBP_REL,
        format!(
            "mean |LHS - RHS| [{}], final / sup|LHS| = {:.3} (sup {:.3}), max 2D by-parts rel {ibp:.1e}",
            means.join(" "),
            s.final_ratio(),
            s.sup_abs_lhs
        ),
    )
}

fn c8() -> Verdict {
    let mut rng = stream(SEED, Purpose::Synthetic, 8);
    let mut mismatches = 0;
    for trial in 0..1000 {
        let n = rng.random_range(2..=12);
        let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let p = [1.0, 1.5, 2.0, 3.0][trial % 4];
        let dp = p_variation(&xs, p).unwrap().value;
        let brute = p_variation_brute(&xs, p).unwrap().value;
        if dp.to_bits() != brute.to_bits() {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} bitwise mismatches in 1000 sequences"))
}

/// Random sum `Σ 2^{-n h} (a_n cos + b_n sin)(2^n π x)`, Hölder of order `h`.
fn synthetic(rng: &mut impl Rng, h: f64, xs: &[f64]) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> =
        (0..10).map(|_| (rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))).collect();
    xs.iter()
        .map(|&x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(n, (a, b))| {
                    let w = 2f64.powi(n as i32) * std::f64::consts::PI * x;
                    2f64.powf(-(n as f64) * h) * (a * w.cos() + b * w.sin())
                })
                .sum()
        })
        .collect()
}

fn c9() -> Verdict {
    let xs: Vec<f64> = (0..=4096).map(|i| i as f64 / 4096.0).collect();
    let g: Vec<f64> = xs.iter().map(|&x| (2.0 * x).sin() + x * x).collect();
    let r = young_integral_1d(&g, &g, None, None, &YoungOptions::one_dim()).unwrap();
    let smooth_err = (r.value - (g[4096] * g[4096] - g[0] * g[0]) / 2.0).abs();

    let mut rng = stream(SEED, Purpose::Synthetic, 9);
    let grid: Vec<f64> = (0..=256).map(|i| i as f64 / 256.0).collect();
    let mut violations = 0;
    let mut tightest = 0f64;
    for _ in 0..1000 {
        let a = rng.random_range(0.55..0.95);
        let b = rng.random_range((1.05 - a)..0.95);
        let f = synthetic(&mut rng, a, &grid);
        let h = synthetic(&mut rng, b, &grid);
        let (p, q) = (1.0 / a, 1.0 / b);
        let res = young_integral_1d(&f, &h, None, Some((p, q)), &YoungOptions::one_dim().raw()).unwrap();
        let bound = res.apriori_bound.expect("Young regime");
        let deviation = (res.value - f[0] * (h[256] - h[0])).abs();
        tightest = tightest.max(deviation / bound);
        if deviation > bound {
            violations += 1;
        }
    }

    let ones = vec![1.0; xs.len()];
    let tele = young_integral_1d(&ones, &g, None, None, &YoungOptions::one_dim().raw()).unwrap();
    let exact = g[4096] - g[0];
    let telescoping = tele.trace.iter().all(|&v| v == exact);
    verdict(
        smooth_err < C9_SMOOTH_ABS && violations == 0 && telescoping,
        format!(
            "smooth error {smooth_err:.1e}, {violations} bound violations in 1000 trials (max ratio {tightest:.3}), telescoping exact: {telescoping}"
        ),
    )
}

fn c10() -> Verdict {
    let s = karandikar_experiment(&(1..=7).collect::<Vec<_>>(), 200, 1.0, 2f64.powi(-16), SEED).unwrap();
    let rel: Vec<String> = s.rows.iter().map(|r| format!("{:.1e}", r.relative)).collect();
    let last = s.rows.last().unwrap().relative;
    verdict(
        s.trend.strictly_decreasing && last < C10_FINAL_REL && s.max_terminal_residual < C10_TERMINAL_ABS,
        format!("relative MSE [{}], terminal-modification residual {:.1e}", rel.join(" "), s.max_terminal_residual),
    )
}

fn main() {
    let only: Option<Vec<String>> =
        std::env::args().nth(1).filter(|a| !a.starts_with('-')).map(|a| a.split(',').map(String::from).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|o| o.iter().any(|x| x == id));
    let mut failed = 0;
    let mut report = |id: &str, name: &str, started: Instant, v: Verdict| {
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} C{id} {name} ({:.1}s): {}", started.elapsed().as_secs_f64(), v.detail);
        if !v.pass {
            failed += 1;
        }
    };
    type Criterion = (&'static str, &'static str, fn() -> Verdict);
    let singles: [Criterion; 4] = [
        ("1", "exact decomposition identity", c1),
        ("2", "skeleton law", c2),
        ("3", "weak derivative recovery", c3),
        ("6", "drift via occupation", c6),
    ];
    for (id, name, run) in singles.iter().take(3) {
        if wanted(id) {
            let t = Instant::now();
            report(id, name, t, run());
        }
    }
    if wanted("4") || wanted("5") {
        let t = Instant::now();
        let (c4, c5) = c4_c5();
        report("4", "local-time convergence", t, c4);
        report("5", "occupation variation bounds", t, c5);
    }
    let rest: [Criterion; 5] = [
        singles[3],
        ("7", "functional Ito identity", c7),
        ("8", "p-variation correctness", c8),
        ("9", "Young integration", c9),
        ("10", "pathwise Ito integral", c10),
    ];
    for (id, name, run) in rest {
        if wanted(id) {
            let t = Instant::now();
            report(id, name, t, run());
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
