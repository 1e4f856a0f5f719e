//! Uniform JSON envelope for analysis results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub pass: bool,
    /// Named numeric residuals the verdict was based on.
    pub residuals: BTreeMap<String, f64>,
    pub details: Value,
}

impl Report {
    pub fn new(kind: impl Into<String>, pass: bool, details: impl Serialize) -> Self {
        Report {
            kind: kind.into(),
            pass,
            residuals: BTreeMap::new(),
            details: serde_json::to_value(details).unwrap_or(Value::Null),
        }
    }

    pub fn residual(mut self, name: impl Into<String>, value: f64) -> Self {
        self.residuals.insert(name.into(), value);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_shape() {
        let r = Report::new("validate", true, serde_json::json!({"violations": []})).residual("max", 0.0);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["kind"], "validate");
        assert_eq!(v["pass"], true);
        assert_eq!(v["residuals"]["max"], 0.0);
        assert!(v["details"]["violations"].is_array());
    }
}
