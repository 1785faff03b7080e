//! Report types and their canonical JSON encoding.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::branch::MeasurementRecord;
use crate::optics::{GridSpec, ScreenDistribution};
use crate::oracle::ResidualReport;

use super::config::{ScenarioConfig, ScenarioId};

pub const FORMAT_VERSION: &str = "qslit-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub index: usize,
    pub label: String,
    pub norm_sq: f64,
    pub branch_count: usize,
    /// Set on measurement steps, after which the state is renormalized.
    pub renormalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub integral: f64,
    pub path_count: usize,
    pub visibility: Option<f64>,
    pub cross_to_direct: Option<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl DistributionSummary {
    pub fn new(dist: &ScreenDistribution, visibility: Option<f64>) -> Self {
        Self {
            x_min: dist.xs[0],
            x_max: *dist.xs.last().expect("non-empty grid"),
            points: dist.xs.len(),
            integral: dist.integral,
            path_count: dist.path_count,
            visibility,
            cross_to_direct: dist.cross_to_direct_ratio(),
            raw: dist.raw.clone(),
            normalized: dist.density.clone(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { x_min: self.x_min, x_max: self.x_max, points: self.points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Derived {
    Flag(bool),
    Number(f64),
    Text(String),
}

impl From<f64> for Derived {
    fn from(v: f64) -> Self {
        Derived::Number(v)
    }
}

impl From<bool> for Derived {
    fn from(v: bool) -> Self {
        Derived::Flag(v)
    }
}

impl Derived {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Derived::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Derived::Flag(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub format_version: String,
    pub scenario: ScenarioId,
    pub description: String,
    pub config: ScenarioConfig,
    pub steps: Vec<StepLog>,
    pub measurements: Vec<MeasurementRecord>,
    /// Key into `distributions` of the density written to the CSV.
    pub primary_distribution: String,
    pub distributions: BTreeMap<String, DistributionSummary>,
    pub visibility: Option<f64>,
    pub derived: BTreeMap<String, Derived>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<ResidualReport>,
}

impl ScenarioReport {
    pub fn primary(&self) -> &DistributionSummary {
        &self.distributions[&self.primary_distribution]
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.derived.get(key).and_then(Derived::as_f64)
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        self.derived.get(key).and_then(Derived::as_bool)
    }

    /// Every probability the report carries: measurement records and
    /// derived keys starting with `p_`.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.measurements.iter().map(|m| m.probability).collect();
        out.extend(self.derived.iter().filter(|(k, _)| k.starts_with("p_")).filter_map(|(_, v)| v.as_f64()));
        out
    }

    /// Compact JSON with sorted keys and every float written with 17
    /// significant digits.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }
}

struct FixedFloat;

impl Formatter for FixedFloat {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

fn sort_keys(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Serializes through `serde_json::Value` with object keys sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let tree = sort_keys(serde_json::to_value(value).expect("report serializes"));
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloat);
    tree.serialize(&mut ser).expect("in-memory write");
    String::from_utf8(buf).expect("JSON is UTF-8")
}
