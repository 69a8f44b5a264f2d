use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type accepted by the numerical kernels.
///
/// Implemented for `f32` and `f64`. Special functions that `num-traits` does
/// not provide are routed through `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn erfc(self) -> Self {
        Self::lit(libm::erfc(self.f64()))
    }

    fn erfc_inv(self) -> Self {
        Self::lit(statrs::function::erf::erfc_inv(self.f64()))
    }

    /// Working tolerance floor: `10^-10` for `f64`, a few ulps for narrower types.
    fn tol_floor() -> Self {
        Self::lit(1e-10).max(Self::epsilon() * Self::lit(8.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(<f64 as Real>::lit(0.25), 0.25);
        assert_eq!(<f32 as Real>::lit(0.25), 0.25f32);
        assert!(<f32 as Real>::tol_floor() > 1e-10);
        assert_eq!(<f64 as Real>::tol_floor(), 1e-10);
    }

    #[test]
    fn erfc_matches_known_value() {
        // erfc(1) = 0.157299207050285...
        assert!((<f64 as Real>::erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-14);
        let x = <f64 as Real>::erfc_inv(0.3);
        assert!((<f64 as Real>::erfc(x) - 0.3).abs() < 1e-13);
    }
}
