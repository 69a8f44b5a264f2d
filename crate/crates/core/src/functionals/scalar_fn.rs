use serde::{Deserialize, Serialize};

use crate::real::Real;

/// Named real functions used as parameters of library functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Constant {
        value: f64,
    },
    Identity,
    /// `sum_k coeffs[k] x^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `amplitude sin(frequency x + phase)`.
    Sin {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `exp(rate x)`.
    Exp {
        rate: f64,
    },
    /// `(1 - u^2)^2` on `|u| < 1`, `u = (x - center)/radius`: C¹ with compact support.
    Bump {
        center: f64,
        radius: f64,
    },
    /// `(1 - |u|)^exponent` on `|u| < 1`: Hölder of the given exponent at the edges.
    HolderBump {
        center: f64,
        radius: f64,
        exponent: f64,
    },
    /// `1` on `[lo, hi]`, `0` elsewhere.
    Indicator {
        lo: f64,
        hi: f64,
    },
    /// `sum_{n < terms} 2^{-n exponent} cos(2^n pi x)`: Hölder of the given exponent.
    Weierstrass {
        exponent: f64,
        terms: u32,
    },
}

impl ScalarFn {
    pub fn eval<T: Real>(&self, x: T) -> T {
        let l = T::lit;
        match self {
            Self::Constant { value } => l(*value),
            Self::Identity => x,
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + l(c)),
            Self::Sin { amplitude, frequency, phase } => l(*amplitude) * (l(*frequency) * x + l(*phase)).sin(),
            Self::Exp { rate } => (l(*rate) * x).exp(),
            Self::Bump { center, radius } => {
                let u = (x - l(*center)) / l(*radius);
                if u.abs() < T::one() {
                    let v = T::one() - u * u;
                    v * v
                } else {
                    T::zero()
                }
            }
            Self::HolderBump { center, radius, exponent } => {
                let u = ((x - l(*center)) / l(*radius)).abs();
                if u < T::one() {
                    (T::one() - u).powf(l(*exponent))
                } else {
                    T::zero()
                }
            }
            Self::Indicator { lo, hi } => {
                if x >= l(*lo) && x <= l(*hi) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::Weierstrass { exponent, terms } => {
                let mut acc = T::zero();
                let mut freq = T::PI();
                let decay = l(2f64.powf(-*exponent));
                let mut amp = T::one();
                for _ in 0..*terms {
                    acc = acc + amp * (freq * x).cos();
                    freq = freq * l(2.0);
                    amp = amp * decay;
                }
                acc
            }
        }
    }

    /// Closed-form derivative where the function is differentiable.
    pub fn derivative<T: Real>(&self, x: T) -> Option<T> {
        let l = T::lit;
        Some(match self {
            Self::Constant { .. } => T::zero(),
            Self::Identity => T::one(),
            Self::Polynomial { coeffs } => {
                coeffs.iter().enumerate().skip(1).rev().fold(T::zero(), |acc, (k, &c)| acc * x + l(c * k as f64))
            }
            Self::Sin { amplitude, frequency, phase } => {
                l(amplitude * frequency) * (l(*frequency) * x + l(*phase)).cos()
            }
            Self::Exp { rate } => l(*rate) * (l(*rate) * x).exp(),
            Self::Bump { center, radius } => {
                let u = (x - l(*center)) / l(*radius);
                if u.abs() < T::one() {
                    -l(4.0) * u * (T::one() - u * u) / l(*radius)
                } else {
                    T::zero()
                }
            }
            _ => return None,
        })
    }

    /// Closed interval outside which the function vanishes, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Bump { center, radius } | Self::HolderBump { center, radius, .. } => {
                Some((center - radius.abs(), center + radius.abs()))
            }
            Self::Indicator { lo, hi } => Some((*lo, *hi)),
            Self::Constant { value } if *value == 0.0 => Some((0.0, 0.0)),
            _ => None,
        }
    }

    /// Largest Hölder exponent (capped at 1) the function is known to have on
    /// bounded sets; `0` for discontinuous functions.
    pub fn holder_exponent(&self) -> f64 {
        match self {
            Self::HolderBump { exponent, .. } => exponent.min(1.0),
            Self::Weierstrass { exponent, .. } => exponent.min(1.0),
            Self::Indicator { .. } => 0.0,
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Bump { radius, .. } if !(*radius > 0.0) => Err(format!("bump radius must be positive, got {radius}")),
            Self::HolderBump { radius, exponent, .. } if !(*radius > 0.0) || !(*exponent > 0.0 && *exponent <= 1.0) => {
                Err(format!("holder bump needs radius > 0 and exponent in (0, 1], got {radius}, {exponent}"))
            }
            Self::Indicator { lo, hi } if !(lo <= hi) => Err(format!("indicator needs lo <= hi, got [{lo}, {hi}]")),
            Self::Weierstrass { exponent, terms } if !(*exponent > 0.0 && *exponent < 1.0) || *terms == 0 => {
                Err(format!("weierstrass needs exponent in (0, 1) and terms >= 1, got {exponent}, {terms}"))
            }
            Self::Constant { value } | Self::Exp { rate: value } if !value.is_finite() => {
                Err("parameters must be finite".to_string())
            }
            _ => Ok(()),
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            Self::Constant { value } => Some(*value),
            Self::Polynomial { coeffs } if coeffs.iter().skip(1).all(|&c| c == 0.0) => {
                Some(coeffs.first().copied().unwrap_or(0.0))
            }
            _ => None,
        }
    }
}
