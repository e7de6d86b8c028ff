//! Canonical single-line JSON records.
//!
//! Encoding goes through `serde_json::Value`, whose object map is sorted, so
//! every record has a stable key order and byte equality implies value
//! equality. Graph nodes and edges are already id-sorted by their containers.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{PlanError, PlanResult};
use crate::plan::{PlanConfiguration, PlanGraph, Trajectory};

/// An entity with a canonical text record.
pub trait Record: Serialize + DeserializeOwned {
    /// Name used in schema errors.
    const ENTITY: &'static str;
}

impl Record for PlanGraph {
    const ENTITY: &'static str = "plan graph";
}

impl Record for Trajectory {
    const ENTITY: &'static str = "trajectory";
}

impl Record for PlanConfiguration {
    const ENTITY: &'static str = "plan configuration";
}

pub fn encode<T: Record>(entity: &T) -> String {
    let value = serde_json::to_value(entity).expect("records serialize to JSON");
    serde_json::to_string(&value).expect("JSON values render")
}

/// Parses a record; errors name the offending field as serde reports it.
pub fn decode<T: Record>(text: &str) -> PlanResult<T> {
    serde_json::from_str(text.trim())
        .map_err(|e| PlanError::Schema { entity: T::ENTITY, message: e.to_string() })
}
