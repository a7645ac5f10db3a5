use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use nambu_core::flows::Drift;

use crate::error::CliError;

/// Column-labelled numeric rows, written once at the end of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let context = || format!("writing {}", path.display());
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(context(), e.into()))?;
        w.write_record(&self.header)
            .map_err(|e| CliError::io(context(), e.into()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_real(*v)))
                .map_err(|e| CliError::io(context(), e.into()))?;
        }
        w.flush().map_err(|e| CliError::io(context(), e))
    }
}

/// Shortest round-trip text, switching to exponent form for very small or
/// very large magnitudes.
pub fn format_real(v: f64) -> String {
    let mag = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&mag) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// `prefix1, prefix2, …`
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralDrift {
    pub initial: f64,
    pub max_drift_abs: f64,
    pub max_drift_rel: f64,
}

impl From<&Drift> for IntegralDrift {
    fn from(d: &Drift) -> Self {
        Self {
            initial: d.initial,
            max_drift_abs: d.max_drift_abs,
            max_drift_rel: d.max_drift_rel,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetCheck {
    pub label: String,
    pub det: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reversible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub system: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub samples: usize,
    pub integrals: BTreeMap<String, IntegralDrift>,
    pub det_checks: Vec<DetCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
    pub runtime_seconds: Option<f64>,
}

impl Report {
    pub fn new(system: &str) -> Self {
        Self {
            system: system.to_string(),
            status: "ok".to_string(),
            error: None,
            samples: 0,
            integrals: BTreeMap::new(),
            det_checks: Vec::new(),
            diagnostics: None,
            runtime_seconds: None,
        }
    }

    pub fn add_drifts(&mut self, drifts: &[Drift]) {
        for d in drifts {
            self.integrals.insert(d.name.clone(), d.into());
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}
