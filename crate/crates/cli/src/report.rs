use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub metric: String,
    pub value: f64,
    /// `"<="` or `">="`; `"=="` for boolean checks, with value 1 or 0.
    pub relation: &'static str,
    pub bound: f64,
    pub pass: bool,
}

/// Contents of `report.json`. Field order and map ordering are fixed so that
/// equal inputs give byte-identical files.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_hash: String,
    pub grid_hash: String,
    pub status: &'static str,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, Value>,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(subcommand: &str, config_hash: String, grid_hash: String) -> Self {
        Report {
            tool: "fmse",
            version: fmse_core::VERSION,
            subcommand: subcommand.to_string(),
            config_hash,
            grid_hash,
            status: "pass",
            failures: Vec::new(),
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn at_most(&mut self, metric: &str, value: f64, bound: f64) {
        self.push(metric, value, "<=", bound, value <= bound);
    }

    pub fn at_least(&mut self, metric: &str, value: f64, bound: f64) {
        self.push(metric, value, ">=", bound, value >= bound);
    }

    pub fn holds(&mut self, metric: &str, ok: bool) {
        self.push(metric, ok as u8 as f64, "==", 1.0, ok);
    }

    fn push(&mut self, metric: &str, value: f64, relation: &'static str, bound: f64, pass: bool) {
        if !pass {
            self.failures.push(metric.to_string());
            self.status = "fail";
        }
        self.checks.push(Check { metric: metric.to_string(), value, relation, bound, pass });
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("metric serializes");
        self.metrics.insert(name.to_string(), v);
    }

    pub fn artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        std::fs::write(dir.join("report.json"), text)
    }
}
