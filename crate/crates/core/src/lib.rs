//! Fine-grained, layer-fused scheduling of DNN workloads on multi-core
//! accelerator models.
//!
//! The flow is: parse a [`workload::WorkloadGraph`] and an
//! [`arch::AcceleratorSpec`], split layers into computation nodes
//! ([`partition`]), connect them by exact data dependencies ([`depgraph`]),
//! cost every node on every compatible core ([`cost`]), search a layer-core
//! allocation ([`ga`]) and list-schedule it ([`schedule`]).

pub mod arch;
pub mod cost;
pub mod depgraph;
pub mod ga;
pub mod partition;
pub mod pipeline;
pub mod report;
pub mod rtree;
pub mod schedule;
pub mod workload;

pub use arch::{parse_architecture, AcceleratorSpec};
pub use pipeline::{Error, Prepared};
pub use schedule::{schedule, schedule_with, Allocation, Priority, ScheduleOptions, ScheduleResult};
pub use workload::{parse_workload, WorkloadGraph};
