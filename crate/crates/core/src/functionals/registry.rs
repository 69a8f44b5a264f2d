//! Functionals addressable by name with a JSON/TOML parameter blob.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::library::{
    constant, ex_phi, identity_terminal, integral_time, quadratic_terminal, rough_drift, running_max, terminal,
    KernelTerm, RoughDriftParams,
};
use super::{Functional, ScalarFn};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    Identity,
    Quadratic,
    Constant {
        value: f64,
    },
    Terminal {
        f: ScalarFn,
    },
    IntegralTime {
        f: ScalarFn,
    },
    RunningMax,
    ExPhi {
        terms: Vec<KernelTerm>,
        #[serde(default)]
        exponents: Option<(f64, f64)>,
    },
    RoughDrift {
        y: Box<FunctionalSpec>,
        z: Box<FunctionalSpec>,
        #[serde(flatten)]
        params: RoughDriftParams,
    },
}

impl FunctionalSpec {
    /// Parses `{"name": ..., <parameters>}`.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone())
            .map_err(|e| Error::Config { field: "functional".into(), msg: e.to_string() })
    }
}

pub fn build<T: Real>(spec: &FunctionalSpec) -> Result<Arc<dyn Functional<T>>> {
    Ok(match spec {
        FunctionalSpec::Identity => Arc::new(identity_terminal()),
        FunctionalSpec::Quadratic => Arc::new(quadratic_terminal()),
        FunctionalSpec::Constant { value } => Arc::new(constant(*value)),
        FunctionalSpec::Terminal { f } => Arc::new(terminal(f.clone())?),
        FunctionalSpec::IntegralTime { f } => Arc::new(integral_time(f.clone())?),
        FunctionalSpec::RunningMax => Arc::new(running_max()),
        FunctionalSpec::ExPhi { terms, exponents } => Arc::new(ex_phi(terms.clone(), *exponents)?),
        FunctionalSpec::RoughDrift { y, z, params } => Arc::new(rough_drift(build(y)?, build(z)?, params.clone())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_engine::SteppedPath;

    #[test]
    fn builds_from_json() {
        let v = serde_json::json!({
            "name": "ex_phi",
            "terms": [{"weight": {"kind": "identity"}, "profile": {"kind": "indicator", "lo": 0.0, "hi": 1.0}}]
        });
        let f = build::<f64>(&FunctionalSpec::from_json(&v).unwrap()).unwrap();
        assert_eq!(f.name(), "ex_phi");
        assert!((f.eval(1.0, &SteppedPath::constant(1.0)).unwrap() - 1.0).abs() < 1e-10);

        let v = serde_json::json!({
            "name": "rough_drift",
            "y": {"name": "constant", "value": 1.0},
            "z": {"name": "identity"},
            "g": {"kind": "weierstrass", "exponent": 0.6, "terms": 12},
            "g_exponent": 0.6
        });
        let spec = FunctionalSpec::from_json(&v).unwrap();
        assert!(build::<f64>(&spec).is_ok());
        assert!(FunctionalSpec::from_json(&serde_json::json!({"name": "nope"})).is_err());
        let back: FunctionalSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
