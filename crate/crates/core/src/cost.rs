//! Closed-form intra-core cost of running one CN on one core, plus a
//! layer-level override table for calibrated numbers.
//!
//! Inside a CN, local reuse is assumed perfect: every operand element crosses
//! the core's SRAM port once. Latency is `max(compute, onload + offload)`,
//! i.e. operand movement is double-buffered against compute and only stalls
//! when the port is the bottleneck.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{AcceleratorSpec, CoreSpec};
use crate::depgraph::CnGraph;
use crate::partition::ComputationNode;
use crate::workload::{Dim, Layer, LayerKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEntry {
    pub cycles: u64,
    /// pJ
    pub energy: f64,
    pub spatial_utilization: f64,
    pub onload_cycles: u64,
    pub offload_cycles: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("layer {layer} ({kind}) cannot run on core {core}")]
    Incompatible { layer: usize, kind: LayerKind, core: usize },
    #[error("cost table syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("cost table entry (layer {layer}, core {core}): {message}")]
    InvalidEntry { layer: i64, core: i64, message: String },
}

/// Loop extents of a CN: tiled OX/OY, everything else full.
pub fn cn_extents(cn: &ComputationNode, layer: &Layer) -> [(Dim, u64); 6] {
    layer.loop_extents(cn.ox_range().len(), cn.oy_range().len())
}

fn check_compatible(layer: &Layer, core: &CoreSpec) -> Result<(), CostError> {
    if core.supports(layer) {
        Ok(())
    } else {
        Err(CostError::Incompatible { layer: layer.id, kind: layer.kind, core: core.id })
    }
}

/// Fraction of the PE array doing useful work, averaged over the temporal
/// iterations of the unrolled dims: product over unrolled dims of `S / (U * ceil(S / U))`.
pub fn spatial_utilization(cn: &ComputationNode, layer: &Layer, core: &CoreSpec) -> Result<f64, CostError> {
    check_compatible(layer, core)?;
    Ok(utilization_of(&cn_extents(cn, layer), core))
}

fn extent(extents: &[(Dim, u64); 6], dim: Dim) -> u64 {
    extents.iter().find(|(d, _)| *d == dim).map_or(1, |&(_, e)| e)
}

fn utilization_of(extents: &[(Dim, u64); 6], core: &CoreSpec) -> f64 {
    core.spatial_unrolling
        .iter()
        .map(|&(d, u)| {
            let s = extent(extents, d);
            s as f64 / (u * s.div_ceil(u)) as f64
        })
        .product()
}

fn compute_cycles(extents: &[(Dim, u64); 6], core: &CoreSpec) -> u64 {
    extents
        .iter()
        .map(|&(d, s)| match core.unroll(d) {
            Some(u) => s.div_ceil(u),
            None => s,
        })
        .product()
}

/// Analytical cost. When the layer's weights are not yet resident they are
/// streamed in through the operand port as well; their DRAM fetch is
/// accounted for by the scheduler, not here.
pub fn cn_cost(cn: &ComputationNode, layer: &Layer, core: &CoreSpec, weights_resident: bool) -> Result<CostEntry, CostError> {
    check_compatible(layer, core)?;
    let extents = cn_extents(cn, layer);
    let compute = compute_cycles(&extents, core);
    let in_bits = cn.input_bits + if weights_resident { 0 } else { cn.weight_bits };
    let onload = in_bits.div_ceil(core.onchip_port_bw);
    let offload = cn.output_bits.div_ceil(core.onchip_port_bw);
    let energy = cn.macs as f64 * core.e_mac
        + (cn.input_bits + cn.output_bits) as f64 * core.e_sram_act
        + cn.weight_bits as f64 * core.e_sram_weight;
    Ok(CostEntry {
        cycles: compute.max(onload + offload).max(1),
        energy,
        spatial_utilization: utilization_of(&extents, core),
        onload_cycles: onload,
        offload_cycles: offload,
    })
}

/// Calibrated whole-layer cost on one core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOverride {
    pub layer: usize,
    pub core: usize,
    pub cycles: u64,
    pub energy: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    layer: i64,
    core: i64,
    cycles: i64,
    energy: f64,
}

/// Parses a cost-table file: `[{"layer", "core", "cycles", "energy"}]`.
pub fn load_cost_table(text: &str) -> Result<Vec<CostOverride>, CostError> {
    let raw: Vec<RawOverride> = serde_json::from_str(text).map_err(|e| CostError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = std::collections::BTreeSet::new();
    raw.into_iter()
        .map(|r| {
            let bad = |m: &str| CostError::InvalidEntry { layer: r.layer, core: r.core, message: m.to_string() };
            if r.layer < 0 || r.core < 0 {
                return Err(bad("ids must be non-negative"));
            }
            if r.cycles < 0 || !r.energy.is_finite() || r.energy < 0.0 {
                return Err(bad("costs must be non-negative"));
            }
            if !seen.insert((r.layer, r.core)) {
                return Err(bad("duplicate entry"));
            }
            Ok(CostOverride { layer: r.layer as usize, core: r.core as usize, cycles: r.cycles as u64, energy: r.energy })
        })
        .collect()
}

pub fn cost_table_to_json(entries: &[CostOverride]) -> String {
    serde_json::to_string_pretty(entries).expect("cost table serializes")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ShapeKey {
    kind: LayerKind,
    extents: [(Dim, u64); 6],
    input_bits: u64,
    output_bits: u64,
    weight_bits: u64,
    macs: u64,
    core: usize,
}

/// Costs of every (CN, compatible core) pair, for resident and non-resident weights.
#[derive(Debug, Clone, Default)]
pub struct CostTable {
    entries: HashMap<(usize, usize), [CostEntry; 2]>,
    overrides: BTreeMap<(usize, usize), CostOverride>,
}

impl CostTable {
    /// Extracts costs of all CN/core combinations, evaluating each unique CN
    /// shape once per core. Overrides scale to a CN by its share of the layer's outputs.
    pub fn build(graph: &CnGraph, accel: &AcceleratorSpec, overrides: &[CostOverride]) -> Self {
        let overrides: BTreeMap<(usize, usize), CostOverride> =
            overrides.iter().map(|o| ((o.layer, o.core), *o)).collect();
        let mut memo: HashMap<ShapeKey, [CostEntry; 2]> = HashMap::new();
        let mut entries = HashMap::new();
        for cn in &graph.nodes {
            let layer = graph.layer(cn.layer_id);
            for core in accel.cores.iter().filter(|c| c.supports(layer)) {
                let key = ShapeKey {
                    kind: layer.kind,
                    extents: cn_extents(cn, layer),
                    input_bits: cn.input_bits,
                    output_bits: cn.output_bits,
                    weight_bits: cn.weight_bits,
                    macs: cn.macs,
                    core: core.id,
                };
                let mut pair = *memo.entry(key).or_insert_with(|| {
                    [
                        cn_cost(cn, layer, core, true).expect("compatible"),
                        cn_cost(cn, layer, core, false).expect("compatible"),
                    ]
                });
                if let Some(o) = overrides.get(&(layer.id, core.id)) {
                    let frac = cn.generated_outputs as f64 / layer.output_elements() as f64;
                    for e in pair.iter_mut() {
                        e.cycles = ((o.cycles as f64 * frac).ceil() as u64).max(1);
                        e.energy = o.energy * frac;
                    }
                }
                entries.insert((cn.id, core.id), pair);
            }
        }
        CostTable { entries, overrides }
    }

    pub fn lookup(&self, cn: usize, core: usize, weights_resident: bool) -> Option<&CostEntry> {
        self.entries.get(&(cn, core)).map(|pair| &pair[usize::from(!weights_resident)])
    }

    pub fn overrides(&self) -> impl Iterator<Item = &CostOverride> {
        self.overrides.values()
    }

    /// Whole-layer totals per (layer, core) with resident weights, in cost-table file form.
    pub fn layer_summary(&self, graph: &CnGraph, accel: &AcceleratorSpec) -> Vec<CostOverride> {
        let mut out = Vec::new();
        for lp in &graph.layers {
            for core in &accel.cores {
                let mut cycles = 0u64;
                let mut energy = 0.0;
                let mut any = false;
                for &cn in &lp.cns {
                    if let Some(e) = self.lookup(cn, core.id, true) {
                        cycles += e.cycles;
                        energy += e.energy;
                        any = true;
                    }
                }
                if any {
                    out.push(CostOverride { layer: lp.layer_id, core: core.id, cycles, energy });
                }
            }
        }
        out
    }
}
