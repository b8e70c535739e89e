use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::grid::GridParams;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Seed used by every suite unless overridden.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Input matrix, one string per entry (exact values print as fractions).
    pub input: Vec<Vec<String>>,
    pub detail: String,
}

impl Counterexample {
    pub fn new<S: Scalar + std::fmt::Display>(input: &Matrix<S>, detail: impl Into<String>) -> Self {
        Self {
            input: input
                .to_rows()
                .iter()
                .map(|row| row.iter().map(|v| v.to_string()).collect())
                .collect(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub property: String,
    pub scope: BTreeMap<String, Value>,
    pub passed: bool,
    /// Negative controls: the property is expected not to hold.
    #[serde(default)]
    pub expect_failure: bool,
    pub counterexample: Option<Counterexample>,
    pub metrics: BTreeMap<String, Value>,
    pub seed: Option<u64>,
}

impl VerificationReport {
    pub fn new(property: impl Into<String>) -> Self {
        Self {
            property: property.into(),
            scope: BTreeMap::new(),
            passed: true,
            expect_failure: false,
            counterexample: None,
            metrics: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_grid(mut self, grid: &GridParams) -> Self {
        self.scope.insert("delta".into(), Value::from(grid.delta_string()));
        self.scope.insert("d".into(), Value::from(grid.d()));
        self.scope.insert("n".into(), Value::from(grid.n()));
        self
    }

    pub fn with_scope(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.scope.insert(key.into(), value.into());
        self
    }

    pub fn with_metric(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metrics.insert(key.into(), value.into());
        self
    }

    pub fn set_metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn negative_control(mut self) -> Self {
        self.expect_failure = true;
        self
    }

    /// Marks the report failed; a failure always carries its witness.
    pub fn fail(mut self, witness: Counterexample) -> Self {
        self.passed = false;
        self.counterexample = Some(witness);
        self
    }

    /// True when the outcome matches what the suite expected.
    pub fn as_expected(&self) -> bool {
        self.passed != self.expect_failure
    }

    /// A one-line summary; negative controls read `XFAIL` when they fail as expected.
    pub fn summary(&self) -> String {
        let status = match (self.expect_failure, self.passed) {
            (false, true) => "PASS",
            (false, false) => "FAIL",
            (true, false) => "XFAIL",
            (true, true) => "XPASS",
        };
        let scope = scope_string(&self.scope);
        format!("{status} {} [{scope}]", self.property)
    }

    /// The headline metric for tabular output: the first entry in key order.
    pub fn headline_metric(&self) -> Option<(&str, &Value)> {
        self.metrics.iter().next().map(|(k, v)| (k.as_str(), v))
    }
}

pub fn scope_string(scope: &BTreeMap<String, Value>) -> String {
    scope
        .iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn reports_to_json(reports: &[VerificationReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn reports_from_json(text: &str) -> Result<Vec<VerificationReport>> {
    Ok(serde_json::from_str(text)?)
}

/// `f64` metric that stays valid JSON when not finite.
pub fn float_metric(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(v.to_string()), Value::Number)
}
