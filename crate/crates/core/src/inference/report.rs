//! JSON serialization of reports with full-precision floats.

use std::str::FromStr;

use serde_json::{json, Map, Number, Value};

use crate::lab::fmt_f64;
use crate::moments::PopulationModel;

use super::estimate::{EstimateReport, OrderReport};
use super::testing::TestReport;
use super::theta::ThetaVector;

/// A float as a JSON number with 17 significant digits; `null` if not finite.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Number::from_str(&fmt_f64(x)).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn model_json(model: &PopulationModel) -> Value {
    Value::Array(model.blocks().iter().map(|b| json!({ "a": num(b.magnitude), "t": num(b.mass) })).collect())
}

pub fn theta_json(theta: &ThetaVector) -> Value {
    let entry = |p: &super::theta::Param| json!({ "value": num(p.value()), "free": p.is_free() });
    json!({
        "t": theta.masses().iter().map(entry).collect::<Vec<_>>(),
        "a": theta.magnitudes().iter().map(entry).collect::<Vec<_>>(),
    })
}

impl TestReport {
    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "theta": self.theta.as_ref().map(model_json).unwrap_or(Value::Null),
            "statistic": num(self.statistic),
            "dof": self.dof,
            "p_value": num(self.p_value),
            "decision": self.decision.as_str(),
            "diagnostics": { "threshold": num(self.threshold), "notes": self.notes },
        })
    }
}

impl EstimateReport {
    pub fn to_json(&self) -> Value {
        json!({
            "kind": "estimate",
            "theta": theta_json(&self.theta_hat),
            "statistic": num(self.objective),
            "dof": self.q,
            "p_value": Value::Null,
            "decision": Value::Null,
            "diagnostics": {
                "q": self.q,
                "restarts": self.restarts,
                "evaluations": self.evaluations,
                "converged": self.converged,
                "notes": self.notes,
            },
        })
    }
}

impl OrderReport {
    pub fn to_json(&self) -> Value {
        let mut est = self.estimate.to_json();
        let diag = est["diagnostics"].as_object_mut().expect("object");
        diag.insert("k_hat".into(), json!(self.k_hat));
        diag.insert("criteria".into(), nums(&self.criteria));
        diag.insert("order_notes".into(), json!(self.notes));
        est["kind"] = json!("order");
        est
    }
}

/// Adds the resolved run configuration to a report object.
pub fn with_config(mut report: Value, config: Value) -> Value {
    if let Value::Object(map) = &mut report {
        map.insert("config".into(), config);
    } else {
        let mut map = Map::new();
        map.insert("report".into(), report);
        map.insert("config".into(), config);
        return Value::Object(map);
    }
    report
}
