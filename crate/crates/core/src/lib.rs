//! Planning-configuration framework for multi-agent systems: plan graphs
//! and their topologies, initialization paradigms, runtime adaptation,
//! navigation, an execution engine, the impedance cost metric, training-data
//! generation and the preference-optimization math.

pub mod adaptation;
pub mod datapipe;
pub mod error;
pub mod executor;
pub mod igpo;
pub mod impedance;
pub mod markup;
pub mod navigation;
pub mod paradigms;
pub mod plan;
pub mod planner;
pub mod suite;
pub mod topology;

pub use error::{BackendError, PlanError, PlanResult};
