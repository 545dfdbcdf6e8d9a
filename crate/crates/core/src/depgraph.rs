//! Fine-grained CN graph: intra-layer ordering chains plus inter-layer data
//! edges found by querying an R-tree of consumer footprints with each
//! producer CN's output region.

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Value};
use thiserror::Error;

use crate::partition::{bits_to_bytes, ComputationNode, LayerPartition, Partition};
use crate::rtree::{RTree, Rect};
use crate::workload::{Layer, WorkloadGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    IntraLayer,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    /// zero for ordering edges
    pub data_bits: u64,
}

impl CnEdge {
    pub fn data_bytes(&self) -> u64 {
        bits_to_bytes(self.data_bits)
    }
}

/// Data edges keyed by (producer CN, consumer CN), valued in bits.
pub type DataEdges = BTreeMap<(usize, usize), u64>;

#[derive(Debug, Clone)]
pub struct CnGraph {
    pub workload: WorkloadGraph,
    pub nodes: Vec<ComputationNode>,
    pub edges: Vec<CnEdge>,
    pub layers: Vec<LayerPartition>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    layer_pos: HashMap<usize, usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepGraphError {
    #[error("CN graph contains a cycle through {0} nodes")]
    Cycle(usize),
    #[error("partition does not match workload")]
    Mismatch,
}

impl CnGraph {
    /// Indices into `edges` of the edges entering `cn`.
    pub fn in_edges(&self, cn: usize) -> &[usize] {
        &self.preds[cn]
    }

    pub fn out_edges(&self, cn: usize) -> &[usize] {
        &self.succs[cn]
    }

    /// Position of a layer in topological order.
    pub fn layer_position(&self, layer_id: usize) -> usize {
        self.layer_pos[&layer_id]
    }

    pub fn layer(&self, layer_id: usize) -> &Layer {
        &self.workload.layers[self.layer_pos[&layer_id]]
    }

    pub fn partition_of(&self, layer_id: usize) -> &LayerPartition {
        &self.layers[self.layer_pos[&layer_id]]
    }

    pub fn data_edges(&self) -> DataEdges {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Data)
            .map(|e| ((e.src, e.dst), e.data_bits))
            .collect()
    }

    /// Debug dump: nodes with loop ranges and footprints, edges with bytes.
    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                let ranges: serde_json::Map<String, Value> = n
                    .out_ranges
                    .iter()
                    .map(|r| (r.dim.name().to_string(), json!([r.start, r.stop])))
                    .collect();
                let fps: Vec<Value> = n
                    .in_footprints
                    .iter()
                    .map(|f| match f {
                        Some(r) => json!({"lo": r.lo, "hi": r.hi}),
                        None => Value::Null,
                    })
                    .collect();
                json!({
                    "id": n.id,
                    "layer": n.layer_id,
                    "index": n.intra_layer_index,
                    "ranges": ranges,
                    "footprints": fps,
                    "macs": n.macs,
                    "discardable_inputs": n.discardable_inputs,
                    "generated_outputs": n.generated_outputs,
                    "output_bytes": n.output_bytes(),
                    "input_bytes": n.input_bytes(),
                    "weight_bytes": n.weight_bytes(),
                })
            })
            .collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .map(|e| {
                json!({
                    "src": e.src,
                    "dst": e.dst,
                    "kind": match e.kind { EdgeKind::IntraLayer => "intra_layer", EdgeKind::Data => "data" },
                    "bytes": e.data_bytes(),
                })
            })
            .collect();
        json!({"workload": self.workload.name, "nodes": nodes, "edges": edges})
    }
}

/// One R-tree per consumer operand, holding its CNs' footprints.
pub fn build_consumer_index(consumer_cns: &[ComputationNode], operand: usize) -> RTree<3> {
    let items = consumer_cns
        .iter()
        .filter_map(|cn| cn.in_footprints.get(operand).copied().flatten().map(|r| (r, cn.id)))
        .collect();
    RTree::bulk_load(items)
}

/// Consumer CN ids whose footprint intersects the producer region.
pub fn query_overlaps(index: &RTree<3>, producer_region: &Rect<3>) -> Vec<usize> {
    index.query(producer_region)
}

/// (producer layer, consumer layer, operand slot) triples in consumer order.
fn layer_pairs(g: &WorkloadGraph) -> Vec<(usize, usize, usize)> {
    let mut pairs = Vec::new();
    for l in &g.layers {
        for &(p, slot) in &l.predecessors {
            pairs.push((p, l.id, slot));
        }
    }
    pairs
}

fn cns_of<'a>(part: &'a Partition, pos: &HashMap<usize, usize>, layer: usize) -> &'a [ComputationNode] {
    let lp = &part.layers[pos[&layer]];
    let first = lp.cns[0];
    &part.nodes[first..first + lp.cns.len()]
}

fn indexed_pair_edges(g: &WorkloadGraph, part: &Partition, pos: &HashMap<usize, usize>, pair: (usize, usize, usize)) -> DataEdges {
    let (prod, cons, slot) = pair;
    let bits = g.layers[pos[&prod]].act_precision as u64;
    let index = build_consumer_index(cns_of(part, pos, cons), slot);
    let mut out = DataEdges::new();
    for p in cns_of(part, pos, prod) {
        let region = p.out_region();
        index.query_with(&region, |rect, c| {
            let vol = rect.intersection(&region).map_or(0, |r| r.volume());
            *out.entry((p.id, c)).or_insert(0) += vol * bits;
        });
    }
    out
}

fn merge(into: &mut DataEdges, from: DataEdges) {
    for (k, v) in from {
        *into.entry(k).or_insert(0) += v;
    }
}

/// Assembles the CN graph. Parallel edges from multi-operand joins are merged
/// with their volumes summed.
pub fn generate_cn_graph(g: &WorkloadGraph, part: Partition) -> Result<CnGraph, DepGraphError> {
    if part.layers.len() != g.layers.len()
        || part.layers.iter().zip(&g.layers).any(|(lp, l)| lp.layer_id != l.id || lp.cns.is_empty())
    {
        return Err(DepGraphError::Mismatch);
    }
    let pos = g.positions();
    let pairs = layer_pairs(g);

    #[cfg(feature = "parallel")]
    let per_pair: Vec<DataEdges> = {
        use rayon::prelude::*;
        pairs.par_iter().map(|&pair| indexed_pair_edges(g, &part, &pos, pair)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_pair: Vec<DataEdges> = pairs.iter().map(|&pair| indexed_pair_edges(g, &part, &pos, pair)).collect();

    let mut data = DataEdges::new();
    for m in per_pair {
        merge(&mut data, m);
    }

    let mut edges = Vec::new();
    for lp in &part.layers {
        for w in lp.cns.windows(2) {
            edges.push(CnEdge { src: w[0], dst: w[1], kind: EdgeKind::IntraLayer, data_bits: 0 });
        }
    }
    edges.extend(
        data.into_iter()
            .map(|((src, dst), data_bits)| CnEdge { src, dst, kind: EdgeKind::Data, data_bits }),
    );

    let n = part.nodes.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        preds[e.dst].push(i);
        succs[e.src].push(i);
    }

    let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut visited = 0;
    while let Some(v) = stack.pop() {
        visited += 1;
        for &e in &succs[v] {
            let d = edges[e].dst;
            indeg[d] -= 1;
            if indeg[d] == 0 {
                stack.push(d);
            }
        }
    }
    if visited != n {
        return Err(DepGraphError::Cycle(n - visited));
    }

    Ok(CnGraph {
        workload: g.clone(),
        nodes: part.nodes,
        edges,
        layers: part.layers,
        preds,
        succs,
        layer_pos: pos,
    })
}

/// Reference edge set by checking every producer/consumer CN pair.
pub fn brute_force_dependencies(g: &WorkloadGraph, part: &Partition) -> DataEdges {
    let pos = g.positions();
    let mut out = DataEdges::new();
    for (prod, cons, slot) in layer_pairs(g) {
        let bits = g.layers[pos[&prod]].act_precision as u64;
        for p in cns_of(part, &pos, prod) {
            let region = p.out_region();
            for c in cns_of(part, &pos, cons) {
                if let Some(fp) = c.in_footprints[slot] {
                    if let Some(ov) = fp.intersection(&region) {
                        *out.entry((p.id, c.id)).or_insert(0) += ov.volume() * bits;
                    }
                }
            }
        }
    }
    out
}
