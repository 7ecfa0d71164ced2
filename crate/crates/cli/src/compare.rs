//! Metric-by-metric differences between two completed runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub left: f64,
    pub right: f64,
    /// `right - left`.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub kind: String,
    pub deltas: BTreeMap<String, MetricDelta>,
    /// Metrics present in only one of the runs.
    pub unmatched: Vec<String>,
}

pub fn compare(left: &RunManifest, right: &RunManifest) -> Result<CompareReport, CliError> {
    if left.kind != right.kind {
        return Err(CliError::KindMismatch {
            left: left.kind.clone(),
            right: right.kind.clone(),
        });
    }
    let mut deltas = BTreeMap::new();
    let mut unmatched = Vec::new();
    for (name, &a) in &left.metrics {
        match right.metrics.get(name) {
            Some(&b) => {
                deltas.insert(
                    name.clone(),
                    MetricDelta {
                        left: a,
                        right: b,
                        delta: b - a,
                    },
                );
            }
            None => unmatched.push(name.clone()),
        }
    }
    unmatched.extend(right.metrics.keys().filter(|k| !left.metrics.contains_key(*k)).cloned());
    Ok(CompareReport {
        kind: left.kind.clone(),
        deltas,
        unmatched,
    })
}
