//! Event-driven list scheduling of a CN graph onto allocated cores.
//!
//! The scheduler keeps a pool of CNs whose predecessors are all scheduled and
//! repeatedly places the best one according to the priority. Placing a CN may
//! insert a DRAM weight fetch, DRAM reads of first-layer inputs or spilled
//! activations, and one bus transfer per incoming cross-core data edge. The
//! bus and the DRAM port each serve requests first-come-first-serve in the
//! order they are issued, one at a time, without preemption.
//!
//! Activation memory is traced afterwards from the event list:
//! * a CN allocates its outputs on its core when it starts;
//! * producer data is freed once every consumer layer is done with it: a
//!   same-core consumer frees an element when its last reader ends, a
//!   cross-core consumer when the last transfer of the producer's data ends;
//! * data arriving over the bus or from DRAM is a private copy on the
//!   consuming core, allocated at transfer start and freed when the CN ends;
//! * a CN whose inputs plus outputs exceed its core's activation memory
//!   writes its outputs to DRAM and frees them when the write ends; its
//!   consumers read their share back from DRAM;
//! * outputs of layers without consumers are written to DRAM and freed when
//!   the write ends, unless [`ScheduleOptions::write_back_outputs`] is off.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::arch::AcceleratorSpec;
use crate::cost::CostTable;
use crate::depgraph::{CnGraph, EdgeKind};
use crate::partition::bits_to_bytes;

/// (primary, secondary, tertiary, core, cn); smallest pops first
type ReadyKey = (u64, u64, u64, u64, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Latency,
    Memory,
}

impl Priority {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "latency" => Some(Priority::Latency),
            "memory" => Some(Priority::Memory),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Priority::Latency => "latency",
            Priority::Memory => "memory",
        }
    }
}

/// Layer id -> core id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Allocation(pub BTreeMap<usize, usize>);

impl Allocation {
    pub fn core_of(&self, layer: usize) -> Option<usize> {
        self.0.get(&layer).copied()
    }

    /// `[[layer, core], ...]`
    pub fn to_json(&self) -> Value {
        Value::Array(self.0.iter().map(|(l, c)| json!([l, c])).collect())
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let pairs: Vec<(usize, usize)> = serde_json::from_str(text)?;
        Ok(Allocation(pairs.into_iter().collect()))
    }
}

impl FromIterator<(usize, usize)> for Allocation {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Allocation(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Compute,
    BusTransfer,
    DramTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lane {
    Core(usize),
    Bus,
    Dram,
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lane::Core(c) => write!(f, "core_{c}"),
            Lane::Bus => f.write_str("bus"),
            Lane::Dram => f.write_str("dram"),
        }
    }
}

/// Why an event exists; transfers into a CN name it as `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Compute,
    /// activation transfer from producer `src` over the bus
    Transfer { src: usize },
    WeightFetch,
    /// first-layer input fetch
    InputFetch,
    SpillWrite,
    /// network output written off-chip
    OutputWrite,
    /// read back of data spilled by `src`
    SpillRead { src: usize },
}

impl Purpose {
    fn name(&self) -> &'static str {
        match self {
            Purpose::Compute => "compute",
            Purpose::Transfer { .. } => "activation",
            Purpose::WeightFetch => "weights",
            Purpose::InputFetch => "input",
            Purpose::SpillWrite => "spill_write",
            Purpose::OutputWrite => "output",
            Purpose::SpillRead { .. } => "spill_read",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEvent {
    pub kind: EventKind,
    pub lane: Lane,
    pub node: usize,
    pub layer: usize,
    pub purpose: Purpose,
    pub start: u64,
    pub end: u64,
    /// pJ
    pub energy: f64,
    pub bits: u64,
}

impl ScheduleEvent {
    pub fn bytes(&self) -> u64 {
        bits_to_bytes(self.bits)
    }

    pub fn duration(&self) -> u64 {
        self.end - self.start
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "kind": self.kind,
            "lane": self.lane.to_string(),
            "node": self.node,
            "layer": self.layer,
            "purpose": self.purpose.name(),
            "start": self.start,
            "end": self.end,
            "energy": self.energy,
        });
        if self.kind != EventKind::Compute {
            v["bytes"] = json!(self.bytes());
        }
        match self.purpose {
            Purpose::Transfer { src } | Purpose::SpillRead { src } => v["src"] = json!(src),
            _ => {}
        }
        v
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("layer {0} is not allocated")]
    Unallocated(usize),
    #[error("layer {layer} cannot run on core {core}")]
    IncompatibleAllocation { layer: usize, core: usize },
    #[error("layer {layer} weights ({bytes} B) exceed core {core} weight memory ({capacity} B)")]
    WeightsTooLarge { layer: usize, core: usize, bytes: u64, capacity: u64 },
    #[error("no cost for CN {cn} on core {core}")]
    MissingCost { cn: usize, core: usize },
    #[error("negative activation occupancy on core {core} at t={time}")]
    NegativeOccupancy { core: usize, time: u64 },
}

impl ScheduleError {
    /// Configuration cannot be scheduled at all (as opposed to a bad input).
    pub fn is_unschedulable(&self) -> bool {
        matches!(self, ScheduleError::WeightsTooLarge { .. })
    }
}

/// A shared, one-at-a-time channel (bus or DRAM port) served in request order.
#[derive(Debug, Clone)]
pub struct Channel {
    pub bw: u64,
    pub e_per_bit: f64,
    pub free_at: u64,
}

impl Channel {
    pub fn new(bw: u64, e_per_bit: f64) -> Self {
        Channel { bw, e_per_bit, free_at: 0 }
    }

    /// Reserves a transfer of `bits` requested at `ready`; returns (start, end, energy).
    pub fn reserve(&mut self, ready: u64, bits: u64) -> (u64, u64, f64) {
        let start = ready.max(self.free_at);
        let end = start + bits.div_ceil(self.bw);
        self.free_at = end;
        (start, end, bits as f64 * self.e_per_bit)
    }
}

/// Bus node for one cross-core data edge; `None` for same-core or empty edges.
#[allow(clippy::too_many_arguments)]
pub fn insert_comm_node(
    bus: &mut Channel,
    producer_end: u64,
    producer_core: usize,
    consumer_core: usize,
    consumer: usize,
    consumer_layer: usize,
    src: usize,
    bits: u64,
) -> Option<ScheduleEvent> {
    if producer_core == consumer_core || bits == 0 {
        return None;
    }
    let (start, end, energy) = bus.reserve(producer_end, bits);
    Some(ScheduleEvent {
        kind: EventKind::BusTransfer,
        lane: Lane::Bus,
        node: consumer,
        layer: consumer_layer,
        purpose: Purpose::Transfer { src },
        start,
        end,
        energy,
        bits,
    })
}

/// Layer weights held in one core's weight memory, oldest first.
#[derive(Debug, Clone)]
pub struct WeightResidency {
    pub capacity_bits: u64,
    entries: VecDeque<(usize, u64)>,
}

impl WeightResidency {
    pub fn new(capacity_bytes: u64) -> Self {
        WeightResidency { capacity_bits: capacity_bytes * 8, entries: VecDeque::new() }
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.entries.iter().any(|&(l, _)| l == layer)
    }

    pub fn used_bits(&self) -> u64 {
        self.entries.iter().map(|&(_, b)| b).sum()
    }

    pub fn layers(&self) -> Vec<usize> {
        self.entries.iter().map(|&(l, _)| l).collect()
    }

    /// Makes room first-in-first-out and records the layer; returns evicted layers.
    /// The caller guarantees `bits <= capacity_bits`.
    pub fn admit(&mut self, layer: usize, bits: u64) -> Vec<usize> {
        debug_assert!(bits <= self.capacity_bits);
        let mut evicted = Vec::new();
        while self.used_bits() + bits > self.capacity_bits {
            let (l, _) = self.entries.pop_front().expect("capacity covers a single layer");
            evicted.push(l);
        }
        self.entries.push_back((layer, bits));
        evicted
    }
}

/// DRAM fetch for a CN's layer weights unless they are already resident.
pub fn manage_weights(
    residency: &mut WeightResidency,
    dram: &mut Channel,
    layer: usize,
    weight_bits: u64,
    request_at: u64,
    node: usize,
) -> Option<ScheduleEvent> {
    if weight_bits == 0 || residency.contains(layer) {
        return None;
    }
    residency.admit(layer, weight_bits);
    let (start, end, energy) = dram.reserve(request_at, weight_bits);
    Some(ScheduleEvent {
        kind: EventKind::DramTransfer,
        lane: Lane::Dram,
        node,
        layer,
        purpose: Purpose::WeightFetch,
        start,
        end,
        energy,
        bits: weight_bits,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryTrace {
    /// per core: (time, occupied bytes) after all changes at that time
    pub per_core: Vec<Vec<(u64, u64)>>,
    pub total: Vec<(u64, u64)>,
    pub peak_memory: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub compute: f64,
    pub bus: f64,
    pub dram: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.compute + self.bus + self.dram
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub events: Vec<ScheduleEvent>,
    pub memory: MemoryTrace,
    pub latency: u64,
    pub energy: EnergyBreakdown,
    pub edp: f64,
    pub peak_memory: u64,
    /// busy cycles / latency, per core
    pub core_utilization: Vec<f64>,
}

impl ScheduleResult {
    pub fn total_energy(&self) -> f64 {
        self.energy.total()
    }

    pub fn totals_json(&self) -> Value {
        json!({
            "latency": self.latency,
            "energy": self.energy,
            "energy_total": self.total_energy(),
            "edp": self.edp,
            "peak_memory": self.peak_memory,
            "core_utilization": self.core_utilization,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut trace = serde_json::Map::new();
        for (c, pts) in self.memory.per_core.iter().enumerate() {
            trace.insert(format!("core_{c}"), json!(pts));
        }
        trace.insert("total".into(), json!(self.memory.total));
        json!({
            "latency": self.latency,
            "energy": self.energy,
            "edp": self.edp,
            "peak_memory": self.peak_memory,
            "core_utilization": self.core_utilization,
            "events": self.events.iter().map(ScheduleEvent::to_json).collect::<Vec<_>>(),
            "memory_trace": Value::Object(trace),
        })
    }
}

fn check_allocation(graph: &CnGraph, alloc: &Allocation, accel: &AcceleratorSpec) -> Result<Vec<usize>, ScheduleError> {
    let mut layer_core = HashMap::new();
    for layer in &graph.workload.layers {
        let core = alloc.core_of(layer.id).ok_or(ScheduleError::Unallocated(layer.id))?;
        let spec = accel
            .cores
            .get(core)
            .ok_or(ScheduleError::IncompatibleAllocation { layer: layer.id, core })?;
        let allowed = layer.allowed_cores.as_ref().is_none_or(|a| a.contains(&core));
        if !spec.supports(layer) || !allowed {
            return Err(ScheduleError::IncompatibleAllocation { layer: layer.id, core });
        }
        let bytes = bits_to_bytes(layer.weight_bits());
        if bytes > spec.weight_mem_capacity {
            return Err(ScheduleError::WeightsTooLarge {
                layer: layer.id,
                core,
                bytes,
                capacity: spec.weight_mem_capacity,
            });
        }
        layer_core.insert(layer.id, core);
    }
    Ok(graph.nodes.iter().map(|n| layer_core[&n.layer_id]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleOptions {
    pub write_back_outputs: bool,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions { write_back_outputs: true }
    }
}

/// Schedules every CN and traces activation memory.
pub fn schedule(
    graph: &CnGraph,
    alloc: &Allocation,
    accel: &AcceleratorSpec,
    costs: &CostTable,
    priority: Priority,
) -> Result<ScheduleResult, ScheduleError> {
    schedule_with(graph, alloc, accel, costs, priority, ScheduleOptions::default())
}

pub fn schedule_with(
    graph: &CnGraph,
    alloc: &Allocation,
    accel: &AcceleratorSpec,
    costs: &CostTable,
    priority: Priority,
    opts: ScheduleOptions,
) -> Result<ScheduleResult, ScheduleError> {
    let core_of = check_allocation(graph, alloc, accel)?;
    let n = graph.nodes.len();
    let ic = &accel.interconnect;
    let mut bus = Channel::new(ic.bus_bw, ic.e_bus);
    let mut dram = Channel::new(ic.dram_bw, ic.e_dram);
    let mut residency: Vec<WeightResidency> =
        accel.cores.iter().map(|c| WeightResidency::new(c.weight_mem_capacity)).collect();
    let mut core_free = vec![0u64; accel.cores.len()];
    let mut end = vec![0u64; n];
    let mut spill_end: Vec<Option<u64>> = vec![None; n];
    let mut missing: Vec<usize> = (0..n).map(|c| graph.in_edges(c).len()).collect();
    let mut events = Vec::new();
    let consumers = graph.workload.consumers();
    let is_output: Vec<bool> = graph.nodes.iter().map(|c| consumers[&c.layer_id].is_empty()).collect();

    // keys are fixed once a CN enters the pool: all its predecessors are placed
    let key = |cn: usize, end: &[u64]| -> ReadyKey {
        let node = &graph.nodes[cn];
        let lid = node.layer_id as u64;
        let core = core_of[cn] as u64;
        match priority {
            Priority::Latency => {
                let ready = graph.in_edges(cn).iter().map(|&e| end[graph.edges[e].src]).max().unwrap_or(0);
                (ready, lid, node.intra_layer_index as u64, core, cn)
            }
            Priority::Memory => (u64::MAX - lid, node.intra_layer_index as u64, core, 0, cn),
        }
    };
    let mut pool: BinaryHeap<Reverse<ReadyKey>> =
        (0..n).filter(|&c| missing[c] == 0).map(|c| Reverse(key(c, &end))).collect();

    while let Some(Reverse((.., cn))) = pool.pop() {
        let node = &graph.nodes[cn];
        let layer = graph.layer(node.layer_id);
        let core = core_of[cn];
        let spec = accel.core(core);
        let mut ready = core_free[core];

        let was_resident = layer.weight_bits() == 0 || residency[core].contains(layer.id);
        if let Some(ev) = manage_weights(&mut residency[core], &mut dram, layer.id, layer.weight_bits(), core_free[core], cn) {
            ready = ready.max(ev.end);
            events.push(ev);
        }

        if layer.is_graph_input() {
            let bits: u64 = node.in_footprints.iter().flatten().map(|r| r.volume()).sum::<u64>()
                * layer.act_precision as u64;
            if bits > 0 {
                let (start, stop, energy) = dram.reserve(core_free[core], bits);
                ready = ready.max(stop);
                events.push(ScheduleEvent {
                    kind: EventKind::DramTransfer,
                    lane: Lane::Dram,
                    node: cn,
                    layer: layer.id,
                    purpose: Purpose::InputFetch,
                    start,
                    end: stop,
                    energy,
                    bits,
                });
            }
        }

        let mut incoming: Vec<usize> = graph.in_edges(cn).to_vec();
        incoming.sort_by_key(|&e| graph.edges[e].src);
        for e in incoming {
            let edge = graph.edges[e];
            let src = edge.src;
            if edge.kind == EdgeKind::IntraLayer {
                ready = ready.max(end[src]);
                continue;
            }
            if let Some(written) = spill_end[src] {
                let (start, stop, energy) = dram.reserve(written.max(core_free[core]), edge.data_bits);
                ready = ready.max(stop);
                events.push(ScheduleEvent {
                    kind: EventKind::DramTransfer,
                    lane: Lane::Dram,
                    node: cn,
                    layer: layer.id,
                    purpose: Purpose::SpillRead { src },
                    start,
                    end: stop,
                    energy,
                    bits: edge.data_bits,
                });
            } else if let Some(ev) =
                insert_comm_node(&mut bus, end[src], core_of[src], core, cn, layer.id, src, edge.data_bits)
            {
                ready = ready.max(ev.end);
                events.push(ev);
            } else {
                ready = ready.max(end[src]);
            }
        }

        let cost = costs
            .lookup(cn, core, was_resident)
            .ok_or(ScheduleError::MissingCost { cn, core })?;
        let start = ready;
        let stop = start + cost.cycles;
        end[cn] = stop;
        core_free[core] = stop;
        events.push(ScheduleEvent {
            kind: EventKind::Compute,
            lane: Lane::Core(core),
            node: cn,
            layer: layer.id,
            purpose: Purpose::Compute,
            start,
            end: stop,
            energy: cost.energy,
            bits: 0,
        });

        let working_set = node.input_bytes() + node.output_bytes();
        let purpose = if working_set > spec.act_mem_capacity {
            Some(Purpose::SpillWrite)
        } else if opts.write_back_outputs && is_output[cn] {
            Some(Purpose::OutputWrite)
        } else {
            None
        };
        if let Some(purpose) = purpose {
            let (ws, we, energy) = dram.reserve(stop, node.output_bits);
            spill_end[cn] = Some(we);
            events.push(ScheduleEvent {
                kind: EventKind::DramTransfer,
                lane: Lane::Dram,
                node: cn,
                layer: layer.id,
                purpose,
                start: ws,
                end: we,
                energy,
                bits: node.output_bits,
            });
        }

        for &e in graph.out_edges(cn) {
            let dst = graph.edges[e].dst;
            missing[dst] -= 1;
            if missing[dst] == 0 {
                pool.push(Reverse(key(dst, &end)));
            }
        }
    }

    events.sort_by_key(|e| (e.start, e.lane, e.end, e.node));
    let memory = trace_memory(graph, &core_of, accel.cores.len(), &events)?;
    Ok(compute_metrics(events, memory, accel.cores.len()))
}

/// Replays the event list into per-core and total activation occupancy.
pub fn trace_memory(
    graph: &CnGraph,
    core_of: &[usize],
    core_count: usize,
    events: &[ScheduleEvent],
) -> Result<MemoryTrace, ScheduleError> {
    let n = graph.nodes.len();
    let mut start = vec![0u64; n];
    let mut end = vec![0u64; n];
    let mut spilled: Vec<Option<u64>> = vec![None; n];
    // (producer CN, consumer layer) -> last transfer end
    let mut last_transfer: HashMap<(usize, usize), u64> = HashMap::new();
    let mut copies: Vec<(usize, u64, u64)> = Vec::new();
    for ev in events {
        match ev.purpose {
            Purpose::Compute => {
                start[ev.node] = ev.start;
                end[ev.node] = ev.end;
            }
            Purpose::SpillWrite | Purpose::OutputWrite => spilled[ev.node] = Some(ev.end),
            Purpose::Transfer { src } => {
                let slot = last_transfer.entry((src, ev.layer)).or_insert(0);
                *slot = (*slot).max(ev.end);
                copies.push((ev.node, ev.start, ev.bits));
            }
            Purpose::InputFetch | Purpose::SpillRead { .. } => copies.push((ev.node, ev.start, ev.bits)),
            Purpose::WeightFetch => {}
        }
    }

    // (time, core, delta bits)
    let mut deltas: Vec<(u64, usize, i64)> = Vec::new();
    for (node, t, bits) in copies {
        deltas.push((t, core_of[node], bits as i64));
        deltas.push((end[node], core_of[node], -(bits as i64)));
    }

    let consumers = graph.workload.consumers();
    for cn in &graph.nodes {
        let core = core_of[cn.id];
        deltas.push((start[cn.id], core, cn.output_bits as i64));
        if let Some(t) = spilled[cn.id] {
            deltas.push((t, core, -(cn.output_bits as i64)));
            continue;
        }
        let users = &consumers[&cn.layer_id];
        if users.is_empty() {
            continue;
        }
        let k_bits = graph.layer(cn.layer_id).dims.k * graph.layer(cn.layer_id).act_precision as u64;
        let (ys, xs) = (cn.oy_range(), cn.ox_range());
        let mut releases: BTreeMap<u64, u64> = BTreeMap::new();
        for row in ys.start..ys.stop {
            for col in xs.start..xs.stop {
                let mut t = end[cn.id];
                for &(user, _) in users {
                    let user_cns = &graph.partition_of(user).cns;
                    if core_of[user_cns[0]] == core {
                        let rel = &graph.partition_of(user).release;
                        t = t.max(end[user_cns[rel.releaser(row as usize, col as usize)]]);
                    } else if let Some(&te) = last_transfer.get(&(cn.id, user)) {
                        t = t.max(te);
                    }
                }
                *releases.entry(t).or_insert(0) += k_bits;
            }
        }
        for (t, bits) in releases {
            deltas.push((t, core, -(bits as i64)));
        }
    }

    deltas.sort_unstable();
    let mut occupancy = vec![0i64; core_count];
    let mut total = 0i64;
    let mut per_core: Vec<Vec<(u64, u64)>> = vec![vec![(0, 0)]; core_count];
    let mut total_trace = vec![(0u64, 0u64)];
    let mut peak = 0u64;
    let mut i = 0;
    while i < deltas.len() {
        let t = deltas[i].0;
        let mut touched = Vec::new();
        while i < deltas.len() && deltas[i].0 == t {
            let (_, core, d) = deltas[i];
            occupancy[core] += d;
            total += d;
            touched.push(core);
            i += 1;
        }
        touched.dedup();
        for core in touched {
            if occupancy[core] < 0 {
                return Err(ScheduleError::NegativeOccupancy { core, time: t });
            }
            push_point(&mut per_core[core], t, bits_to_bytes(occupancy[core] as u64));
        }
        let bytes = bits_to_bytes(total as u64);
        push_point(&mut total_trace, t, bytes);
        peak = peak.max(bytes);
    }
    Ok(MemoryTrace { per_core, total: total_trace, peak_memory: peak })
}

fn push_point(trace: &mut Vec<(u64, u64)>, t: u64, v: u64) {
    match trace.last_mut() {
        Some(last) if last.0 == t => last.1 = v,
        Some(last) if last.1 == v => {}
        _ => trace.push((t, v)),
    }
}

/// Aggregates latency, per-lane energy, EDP and core utilization.
pub fn compute_metrics(events: Vec<ScheduleEvent>, memory: MemoryTrace, core_count: usize) -> ScheduleResult {
    let latency = events.iter().map(|e| e.end).max().unwrap_or(0);
    let mut energy = EnergyBreakdown::default();
    let mut busy = vec![0u64; core_count];
    for e in &events {
        match e.kind {
            EventKind::Compute => {
                energy.compute += e.energy;
                if let Lane::Core(c) = e.lane {
                    busy[c] += e.duration();
                }
            }
            EventKind::BusTransfer => energy.bus += e.energy,
            EventKind::DramTransfer => energy.dram += e.energy,
        }
    }
    let core_utilization = busy
        .iter()
        .map(|&b| if latency == 0 { 0.0 } else { b as f64 / latency as f64 })
        .collect();
    let peak_memory = memory.peak_memory;
    ScheduleResult {
        latency,
        edp: latency as f64 * energy.total(),
        energy,
        peak_memory,
        memory,
        events,
        core_utilization,
    }
}
