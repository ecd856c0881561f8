//! Versioned JSON persistence for instances and solutions.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{CostCurve, Instance, InstanceIssue, Relation, Solution};

pub const INSTANCE_VERSION: &str = "copra-instance/1";
pub const SOLUTION_VERSION: &str = "copra-solution/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unsupported version {found:?}, expected {expected:?}")]
    VersionMismatch {
        found: String,
        expected: &'static str,
    },
    #[error("invalid instance: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<InstanceIssue>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    version: String,
    num_contents: usize,
    num_slots: usize,
    sizes: Vec<u64>,
    requests: Vec<Vec<u64>>,
    aoi_limits: Vec<usize>,
    aoi_cost: Vec<Vec<CostCurve>>,
    relations: Vec<Vec<Relation>>,
    cache_capacity: u64,
    backhaul_capacity: u64,
    cost_server: f64,
    cost_cache: f64,
    rec_limit: usize,
}

/// Solution file, optionally annotated with the producing run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    pub solution: Solution,
}

impl SolutionDoc {
    pub fn new(solution: Solution) -> Self {
        Self {
            version: SOLUTION_VERSION.to_string(),
            algorithm: None,
            cost: None,
            lower_bound: None,
            solution,
        }
    }
}

pub fn instance_to_json(inst: &Instance) -> String {
    let doc = InstanceDoc {
        version: INSTANCE_VERSION.to_string(),
        num_contents: inst.num_contents,
        num_slots: inst.num_slots,
        sizes: inst.sizes.clone(),
        requests: inst.requests.clone(),
        aoi_limits: inst.aoi_limits.clone(),
        aoi_cost: inst.aoi_cost.clone(),
        relations: inst.relations.clone(),
        cache_capacity: inst.cache_capacity,
        backhaul_capacity: inst.backhaul_capacity,
        cost_server: inst.cost_server,
        cost_cache: inst.cost_cache,
        rec_limit: inst.rec_limit,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("instance serializes");
    s.push('\n');
    s
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<Instance, IoError> {
    let doc: InstanceDoc = parse_versioned(text, INSTANCE_VERSION)?;
    let inst = Instance {
        num_contents: doc.num_contents,
        num_slots: doc.num_slots,
        sizes: doc.sizes,
        requests: doc.requests,
        aoi_limits: doc.aoi_limits,
        aoi_cost: doc.aoi_cost,
        relations: doc.relations,
        cache_capacity: doc.cache_capacity,
        backhaul_capacity: doc.backhaul_capacity,
        cost_server: doc.cost_server,
        cost_cache: doc.cost_cache,
        rec_limit: doc.rec_limit,
    };
    let issues = inst.validate();
    if issues.is_empty() {
        Ok(inst)
    } else {
        Err(IoError::Invalid(issues))
    }
}

pub fn read_instance(path: &Path) -> Result<Instance, IoError> {
    parse_instance(&read(path)?)
}

pub fn write_instance(inst: &Instance, path: &Path) -> Result<(), IoError> {
    write(path, &instance_to_json(inst))
}

pub fn solution_to_json(doc: &SolutionDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("solution serializes");
    s.push('\n');
    s
}

pub fn parse_solution(text: &str) -> Result<SolutionDoc, IoError> {
    parse_versioned(text, SOLUTION_VERSION)
}

pub fn read_solution(path: &Path) -> Result<SolutionDoc, IoError> {
    parse_solution(&read(path)?)
}

pub fn write_solution(doc: &SolutionDoc, path: &Path) -> Result<(), IoError> {
    write(path, &solution_to_json(doc))
}

fn parse_versioned<T: DeserializeOwned>(text: &str, expected: &'static str) -> Result<T, IoError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IoError::Malformed(e.to_string()))?;
    let Some(obj) = value.as_object() else {
        return Err(IoError::Schema("top level must be an object".into()));
    };
    match obj.get("version") {
        None => return Err(IoError::Schema("missing field `version`".into())),
        Some(Value::String(v)) if v == expected => {}
        Some(Value::String(v)) => {
            return Err(IoError::VersionMismatch {
                found: v.clone(),
                expected,
            })
        }
        Some(_) => return Err(IoError::Schema("field `version` must be a string".into())),
    }
    serde_json::from_value(value).map_err(|e| IoError::Schema(e.to_string()))
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}
