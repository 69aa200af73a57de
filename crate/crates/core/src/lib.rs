//! Utilization-fairness cluster allocation for distributed ML workloads.
//!
//! The crate partitions a cluster into per-application sets of uniform
//! containers and resizes those partitions as applications arrive and leave.
//! Each reallocation solves a mixed-integer program that maximizes resource
//! utilization while bounding the deviation from weighted dominant resource
//! fairness and the number of running applications that must be checkpointed
//! and restarted. A discrete-event simulator replays workloads against this
//! policy and a static baseline.

pub mod adjustment;
pub mod cli;
pub mod drf;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod simulator;
pub mod workload;

pub use model::{
    containers_of, total_capacity, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec,
    Rational, ResourceVector, Slave, SlaveId, WorkloadProfile,
};
