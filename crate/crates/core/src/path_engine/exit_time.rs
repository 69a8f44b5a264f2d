//! Law of the first exit time of Brownian motion from `(-eps, eps)`.
//!
//! Everything is computed on the unit scale `s = t / eps^2`, where the exit
//! time has mean 1. Two series representations are used: the image (method
//! of reflections) series for small `s`, where it converges in a handful of
//! terms, and the spectral (Fourier–sine) series for large `s`.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::real::Real;

/// Below this unit time the image series is used, above it the spectral one.
const SERIES_SWITCH: f64 = 0.5;
/// Beyond this unit age the hazard is flat to double precision.
pub const ASYMPTOTIC_AGE: f64 = 20.0;

/// A hazard value together with a flag telling whether the asymptotic
/// (spectral-gap) regime was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardValue<T> {
    pub value: T,
    pub asymptotic: bool,
}

fn check_eps<T: Real>(eps: T) -> Result<()> {
    if eps > T::zero() && eps.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("epsilon must be positive and finite, got {eps}")))
    }
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if t >= T::zero() && !t.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("time must be nonnegative, got {t}")))
    }
}

/// `P(tau_1 <= s)` by the image series. Accurate for small and moderate `s`.
fn image_cdf<T: Real>(s: T) -> T {
    if s <= T::zero() {
        return T::zero();
    }
    let scale = (T::lit(2.0) * s).sqrt();
    let mut acc = T::zero();
    let mut sign = T::one();
    for k in 1..64 {
        let a = T::lit((2 * k - 1) as f64) / scale;
        let term = a.erfc();
        acc = acc + sign * term;
        if term < T::epsilon() * T::lit(1e-3) * acc.abs().max(T::min_positive_value()) {
            break;
        }
        sign = -sign;
    }
    T::lit(2.0) * acc
}

fn image_density<T: Real>(s: T) -> T {
    if s <= T::zero() {
        return T::zero();
    }
    let two = T::lit(2.0);
    let pref = two / ((two * T::PI()).sqrt() * s * s.sqrt());
    let mut acc = T::zero();
    let mut sign = T::one();
    for k in 1..64 {
        let a = T::lit((2 * k - 1) as f64);
        let term = a * (-(a * a) / (two * s)).exp();
        acc = acc + sign * term;
        if term <= T::epsilon() * T::lit(1e-3) * acc.abs() {
            break;
        }
        sign = -sign;
    }
    pref * acc
}

/// `sum_n (-1)^n w_n exp(-((2n+1)^2 - 1) pi^2 s / 8)` with `w_n = (2n+1)^power`.
/// Factoring out the leading exponential keeps this O(1) for every `s > 0`.
fn spectral_tail<T: Real>(s: T, power: i32) -> T {
    let c = T::PI() * T::PI() * s / T::lit(8.0);
    let mut acc = T::zero();
    let mut sign = T::one();
    for n in 0..400 {
        let m = T::lit((2 * n + 1) as f64);
        let decay = (-(m * m - T::one()) * c).exp();
        let term = m.powi(power) * decay;
        acc = acc + sign * term;
        if n > 0 && decay <= T::epsilon() * T::lit(1e-3) {
            break;
        }
        sign = -sign;
    }
    acc
}

/// `(ln P(tau_1 > s), hazard)` from one series pass.
fn log_survival_and_hazard<T: Real>(s: T) -> (T, T) {
    if s < T::lit(SERIES_SWITCH) {
        let p = image_cdf(s);
        return ((-p).ln_1p(), image_density(s) / (T::one() - p));
    }
    let gap = T::PI() * T::PI() / T::lit(8.0);
    let (mut num, mut den) = (T::zero(), T::zero());
    let mut sign = T::one();
    for n in 0..400 {
        let m = T::lit((2 * n + 1) as f64);
        let decay = (-(m * m - T::one()) * gap * s).exp();
        num = num + sign * m * decay;
        den = den + sign * decay / m;
        if n > 0 && decay <= T::epsilon() * T::lit(1e-3) {
            break;
        }
        sign = -sign;
    }
    ((T::lit(4.0) / T::PI()).ln() - gap * s + den.ln(), gap * num / den)
}

/// `P(tau_1 > s)`.
pub fn unit_survival<T: Real>(s: T) -> T {
    if s <= T::zero() {
        return T::one();
    }
    if s < T::lit(SERIES_SWITCH) {
        T::one() - image_cdf(s)
    } else {
        let lead = T::lit(4.0) / T::PI() * (-T::PI() * T::PI() * s / T::lit(8.0)).exp();
        lead * spectral_tail(s, -1)
    }
}

/// Density of `tau_1` at `s`.
pub fn unit_density<T: Real>(s: T) -> T {
    if s <= T::zero() {
        return T::zero();
    }
    if s < T::lit(SERIES_SWITCH) {
        image_density(s)
    } else {
        let lead = T::PI() / T::lit(2.0) * (-T::PI() * T::PI() * s / T::lit(8.0)).exp();
        lead * spectral_tail(s, 1)
    }
}

/// Hazard rate `f/S` of `tau_1` at unit age `s`; tends to `pi^2/8`.
pub fn unit_hazard<T: Real>(s: T) -> HazardValue<T> {
    if s <= T::zero() {
        return HazardValue { value: T::zero(), asymptotic: false };
    }
    if s < T::lit(SERIES_SWITCH) {
        let value = image_density(s) / (T::one() - image_cdf(s));
        return HazardValue { value, asymptotic: false };
    }
    let gap = T::PI() * T::PI() / T::lit(8.0);
    if s > T::lit(ASYMPTOTIC_AGE) {
        return HazardValue { value: gap, asymptotic: true };
    }
    let value = gap * spectral_tail(s, 1) / spectral_tail(s, -1);
    HazardValue { value, asymptotic: false }
}

/// Cumulative hazard `-ln P(tau_1 > s)`, computed without cancellation.
pub fn unit_cumulative_hazard<T: Real>(s: T) -> T {
    if s <= T::zero() {
        return T::zero();
    }
    if s < T::lit(SERIES_SWITCH) {
        -(-image_cdf(s)).ln_1p()
    } else {
        T::PI() * T::PI() * s / T::lit(8.0) - (T::lit(4.0) / T::PI()).ln() - spectral_tail(s, -1).ln()
    }
}

/// Solves `P(tau_1 > s) = u` for `u` in `(0, 1]`.
///
/// Newton iteration on `ln S(s) - ln u` (whose derivative is minus the
/// hazard), safeguarded by bisection on a bracket that is valid because the
/// leading spectral term dominates the survival function.
pub fn unit_quantile<T: Real>(u: T) -> T {
    if u >= T::one() {
        return T::zero();
    }
    let target = u.ln();
    let gap = T::PI() * T::PI() / T::lit(8.0);
    let lead_root = ((T::lit(4.0) / T::PI()).ln() - target) / gap;
    let mut lo = T::zero();
    let mut hi = lead_root.max(T::lit(1e-3));
    // widen defensively: S(hi) must not exceed u
    while unit_survival(hi) > u {
        hi = hi * T::lit(2.0);
    }
    let mut s = if u < T::lit(0.6) {
        lead_root
    } else {
        let x = ((T::one() - u) / T::lit(2.0)).erfc_inv();
        T::one() / (T::lit(2.0) * x * x)
    };
    if !(s > lo && s < hi) {
        s = (lo + hi) / T::lit(2.0);
    }
    let tol = T::tol_floor() * T::lit(0.01);
    for _ in 0..200 {
        let (log_s, h) = log_survival_and_hazard(s);
        let phi = log_s - target;
        if phi.abs() <= tol {
            return s;
        }
        if phi > T::zero() {
            lo = s;
        } else {
            hi = s;
        }
        let mut next = s + phi / h;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) / T::lit(2.0);
        }
        if (hi - lo) <= T::epsilon() * hi {
            return next;
        }
        s = next;
    }
    s
}

/// `P(tau_eps > t)`.
pub fn exit_time_survival<T: Real>(eps: T, t: T) -> Result<T> {
    check_eps(eps)?;
    check_time(t)?;
    Ok(unit_survival(t / (eps * eps)))
}

/// Density of `tau_eps` at `t`.
pub fn exit_time_density<T: Real>(eps: T, t: T) -> Result<T> {
    check_eps(eps)?;
    check_time(t)?;
    Ok(unit_density(t / (eps * eps)) / (eps * eps))
}

/// Hazard rate of `tau_eps` at age `t`.
pub fn exit_time_hazard<T: Real>(eps: T, t: T) -> Result<HazardValue<T>> {
    check_eps(eps)?;
    check_time(t)?;
    let h = unit_hazard(t / (eps * eps));
    Ok(HazardValue { value: h.value / (eps * eps), asymptotic: h.asymptotic })
}

/// One draw of the exit time of Brownian motion from `(-eps, eps)`.
pub fn sample_exit_time<T: Real, R: Rng + ?Sized>(eps: T, rng: &mut R) -> Result<T> {
    check_eps(eps)?;
    Ok(eps * eps * sample_unit(rng))
}

pub(crate) fn sample_unit<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    loop {
        let u = 1.0 - rng.random::<f64>();
        if u < 1.0 {
            let s = unit_quantile(T::lit(u));
            if s > T::zero() {
                return s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn series_agree_across_the_switch() {
        for &s in &[0.2, 0.35, 0.5, 0.7, 1.0, 1.5] {
            let img = 1.0 - image_cdf(s);
            let lead = 4.0 / std::f64::consts::PI * (-std::f64::consts::PI.powi(2) * s / 8.0).exp();
            let spec = lead * spectral_tail(s, -1);
            assert!((img - spec).abs() < 1e-13, "s={s}: {img} vs {spec}");
            let fi = image_density(s);
            let fs = std::f64::consts::PI / 2.0 * (-std::f64::consts::PI.powi(2) * s / 8.0).exp() * spectral_tail(s, 1);
            assert!((fi - fs).abs() < 1e-12, "s={s}: {fi} vs {fs}");
        }
    }

    #[test]
    fn boundary_values() {
        assert_eq!(exit_time_survival(0.5f64, 0.0).unwrap(), 1.0);
        assert!(exit_time_survival(0.5f64, 21.0 * 0.25).unwrap() < 1e-10);
        assert_eq!(unit_hazard(0.0f64).value, 0.0);
        assert!(exit_time_survival(0.0f64, 1.0).is_err());
        assert!(exit_time_survival(1.0f64, -1.0).is_err());
    }

    #[test]
    fn quantile_inverts_survival() {
        for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.59, 0.61, 0.9, 0.999, 1.0 - 1e-12] {
            let s: f64 = unit_quantile(u);
            let back = unit_survival(s);
            assert!((back - u).abs() <= 1e-10 * u.max(1e-3), "u={u} s={s} S={back}");
        }
    }

    #[test]
    fn asymptotic_hazard_flagged() {
        let h = unit_hazard(25.0f64);
        assert!(h.asymptotic);
        assert!((h.value - std::f64::consts::PI.powi(2) / 8.0).abs() < 1e-15);
        let h = unit_hazard(19.0f64);
        assert!(!h.asymptotic);
        assert!((h.value - std::f64::consts::PI.powi(2) / 8.0).abs() < 1e-15);
    }

    #[test]
    fn cumulative_hazard_is_minus_log_survival() {
        for &s in &[0.05f64, 0.3, 0.6, 2.0, 10.0] {
            assert!((unit_cumulative_hazard(s) + unit_survival(s).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let s: f32 = unit_survival(1.0f32);
        assert!((s - 0.370_76).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: f32 = sample_exit_time(0.5f32, &mut rng).unwrap();
        assert!(x > 0.0);
    }
}
