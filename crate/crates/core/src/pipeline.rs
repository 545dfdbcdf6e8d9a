//! Glue from parsed inputs to a costed CN graph.

use thiserror::Error;

use crate::arch::{AcceleratorSpec, ArchError};
use crate::cost::{CostError, CostOverride, CostTable};
use crate::depgraph::{generate_cn_graph, CnGraph, DepGraphError};
use crate::ga::GaError;
use crate::partition::{derive_cn_granularity, partition_workload, CnGranularity, PartitionError, TileRequest};
use crate::schedule::{schedule, Allocation, Priority, ScheduleError, ScheduleResult};
use crate::workload::{WorkloadError, WorkloadGraph};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    DepGraph(#[from] DepGraphError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Ga(#[from] GaError),
}

impl Error {
    pub fn is_unschedulable(&self) -> bool {
        match self {
            Error::Schedule(e) => e.is_unschedulable(),
            Error::Ga(GaError::Infeasible(e)) => e.is_unschedulable(),
            _ => false,
        }
    }
}

/// A workload partitioned, connected and costed for one architecture.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub accel: AcceleratorSpec,
    pub granularity: CnGranularity,
    pub graph: CnGraph,
    pub costs: CostTable,
}

impl Prepared {
    pub fn new(
        workload: &WorkloadGraph,
        accel: &AcceleratorSpec,
        request: TileRequest,
        overrides: &[CostOverride],
    ) -> Result<Self, Error> {
        let granularity = derive_cn_granularity(workload, accel, request)?;
        let part = partition_workload(workload, &granularity)?;
        let graph = generate_cn_graph(workload, part)?;
        let costs = CostTable::build(&graph, accel, overrides);
        log::debug!("{} CNs, {} edges", graph.nodes.len(), graph.edges.len());
        Ok(Prepared { accel: accel.clone(), granularity, graph, costs })
    }

    pub fn schedule(&self, alloc: &Allocation, priority: Priority) -> Result<ScheduleResult, ScheduleError> {
        schedule(&self.graph, alloc, &self.accel, &self.costs, priority)
    }
}
