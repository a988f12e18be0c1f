use serde::{Deserialize, Serialize};

/// Per-tick snapshot of a model's metrics. The names live with the model
/// (see [`crate::model::Model::metric_names`]); `values` follows that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub tick: u64,
    pub values: Vec<f64>,
}

impl MetricsFrame {
    /// Value of metric `name`, given the model's metric names.
    pub fn get(&self, names: &[String], name: &str) -> Option<f64> {
        names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Index metric names once and read frames by name.
#[derive(Debug, Clone)]
pub struct MetricIndex {
    names: Vec<String>,
}

impl MetricIndex {
    pub fn new(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Panics if `name` is not a metric of this model.
    pub fn read(&self, frame: &MetricsFrame, name: &str) -> f64 {
        let i = self.position(name).unwrap_or_else(|| panic!("no metric named `{name}`"));
        frame.values[i]
    }

    /// Series of metric `name` over `frames`.
    pub fn series(&self, frames: &[MetricsFrame], name: &str) -> Vec<f64> {
        let i = self.position(name).unwrap_or_else(|| panic!("no metric named `{name}`"));
        frames.iter().map(|f| f.values[i]).collect()
    }
}
