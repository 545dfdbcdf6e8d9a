#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use streamforge::arch::{AcceleratorSpec, CoreSpec, InterconnectSpec};
use streamforge::depgraph::{CnGraph, EdgeKind};
use streamforge::partition::TileRequest;
use streamforge::schedule::{Allocation, EventKind, Lane, Purpose, ScheduleResult};
use streamforge::workload::{Dim, Layer, LayerDims, LayerKind, WorkloadGraph};

pub fn config(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// (pad_lo, pad_hi, out) for one axis so that the input extent comes out exactly `input`.
pub fn fit_axis(rng: &mut impl Rng, input: u64, kernel: u64, stride: u64) -> (u64, u64, u64) {
    let lo = rng.gen_range(0..kernel);
    let mut hi = rng.gen_range(0..kernel);
    while input + lo + hi < kernel || !(input + lo + hi - kernel).is_multiple_of(stride) {
        hi += 1;
    }
    (lo, hi, (input + lo + hi - kernel) / stride + 1)
}

/// Conv consuming a (c, h, w) tensor with random kernel, stride and padding.
pub fn random_conv(rng: &mut impl Rng, id: usize, c: u64, h: u64, w: u64, k: u64) -> Layer {
    let f = *[1u64, 3, 5].choose(rng).unwrap();
    let s = rng.gen_range(1..=2u64);
    let (pt, pb, oy) = fit_axis(rng, h, f, s);
    let (pl, pr, ox) = fit_axis(rng, w, f, s);
    Layer::new(id, LayerKind::Conv, LayerDims::new(k, c, ox, oy, f, f).with_stride(s, s).with_pad(pt, pl, pb, pr))
}

/// Random two-layer conv chain with dims up to 32.
pub fn random_pair(rng: &mut impl Rng) -> WorkloadGraph {
    let c0 = rng.gen_range(1..=8);
    let k0 = rng.gen_range(1..=8);
    let (h, w) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
    let l0 = Layer::new(0, LayerKind::Conv, LayerDims::new(k0, c0, w, h, 1, 1));
    let k1 = rng.gen_range(1..=8);
    let mut l1 = random_conv(rng, 1, k0, h, w, k1);
    l1.predecessors = vec![(0, 0)];
    l1.act_precision = *[4u32, 8, 16].choose(rng).unwrap();
    let mut l0 = l0;
    l0.act_precision = *[4u32, 8, 16].choose(rng).unwrap();
    WorkloadGraph { name: "pair".into(), layers: vec![l0, l1] }
}

/// Random DAG of conv, depthwise, pointwise, pooling and residual adds.
pub fn random_workload(rng: &mut impl Rng, max_layers: usize) -> WorkloadGraph {
    let n = rng.gen_range(2..=max_layers);
    let c = rng.gen_range(1..=8);
    let (h, w) = (rng.gen_range(4..=24), rng.gen_range(4..=24));
    let mut layers = vec![Layer::new(0, LayerKind::Conv, LayerDims::new(8, c, w, h, 3, 3).with_pad(1, 1, 1, 1))];
    // (layer id, K, OY, OX)
    let mut shapes = vec![(0usize, 8u64, h, w)];
    while layers.len() < n {
        let id = layers.len();
        let (pid, pk, ph, pw) = *shapes.last().unwrap();
        let twins: Vec<usize> = shapes[..shapes.len() - 1]
            .iter()
            .filter(|s| (s.1, s.2, s.3) == (pk, ph, pw))
            .map(|s| s.0)
            .collect();
        let roll = rng.gen_range(0..10);
        let mut layer = if roll < 2 && !twins.is_empty() {
            let other = *twins.choose(rng).unwrap();
            Layer::new(id, LayerKind::ElementwiseAdd, LayerDims::new(pk, pk, pw, ph, 1, 1))
                .with_predecessors(&[(pid, 0), (other, 1)])
        } else if roll < 3 && ph >= 2 && pw >= 2 && ph % 2 == 0 && pw % 2 == 0 {
            Layer::new(id, LayerKind::PoolMax, LayerDims::new(pk, pk, pw / 2, ph / 2, 2, 2).with_stride(2, 2))
                .with_predecessors(&[(pid, 0)])
        } else if roll < 4 {
            Layer::new(id, LayerKind::DepthwiseConv, LayerDims::new(pk, pk, pw, ph, 3, 3).with_pad(1, 1, 1, 1))
                .with_predecessors(&[(pid, 0)])
        } else if roll < 5 {
            let k = *[4u64, 8, 16].choose(rng).unwrap();
            Layer::new(id, LayerKind::PointwiseConv, LayerDims::new(k, pk, pw, ph, 1, 1)).with_predecessors(&[(pid, 0)])
        } else if roll < 6 {
            // kept same-size so residual adds have partners
            Layer::new(id, LayerKind::Conv, LayerDims::new(pk, pk, pw, ph, 3, 3).with_pad(1, 1, 1, 1))
                .with_predecessors(&[(pid, 0)])
        } else {
            let k = *[4u64, 8, 16].choose(rng).unwrap();
            let mut l = random_conv(rng, id, pk, ph, pw, k);
            l.predecessors = vec![(pid, 0)];
            l
        };
        layer.act_precision = *[8u32, 8, 16].choose(rng).unwrap();
        shapes.push((id, layer.dims.k, layer.dims.oy, layer.dims.ox));
        layers.push(layer);
    }
    WorkloadGraph { name: "random".into(), layers }
}

pub fn core(id: usize, unroll: &[(Dim, u64)], act: u64, weight: u64, simd: bool) -> CoreSpec {
    CoreSpec {
        id,
        pe_count: unroll.iter().map(|u| u.1).product(),
        spatial_unrolling: unroll.to_vec(),
        act_mem_capacity: act,
        weight_mem_capacity: weight,
        onchip_port_bw: 128,
        e_mac: 0.5,
        e_sram_act: 0.05,
        e_sram_weight: 0.05,
        is_simd: simd,
    }
}

/// One to three compute cores plus a SIMD core; weight memories hold the largest layer.
pub fn random_arch(rng: &mut impl Rng, g: &WorkloadGraph) -> AcceleratorSpec {
    let max_w = g.layers.iter().map(|l| l.weight_bits().div_ceil(8)).max().unwrap_or(0).max(1);
    let unrolls: [&[(Dim, u64)]; 4] = [
        &[(Dim::K, 8), (Dim::C, 8)],
        &[(Dim::K, 16)],
        &[(Dim::K, 4), (Dim::OX, 4)],
        &[(Dim::C, 16), (Dim::K, 4)],
    ];
    let n = rng.gen_range(1..=3);
    let mut cores: Vec<CoreSpec> = (0..n)
        .map(|i| {
            let act = 1024 * rng.gen_range(1..=64u64);
            core(i, unrolls.choose(rng).unwrap(), act, max_w * rng.gen_range(1..=4), false)
        })
        .collect();
    cores.push(core(n, &[(Dim::K, 16)], 1024 * rng.gen_range(1..=64u64), max_w, true));
    AcceleratorSpec {
        name: "random".into(),
        cores,
        interconnect: InterconnectSpec {
            bus_bw: *[32u64, 64, 128].choose(rng).unwrap(),
            e_bus: 0.5,
            dram_bw: *[16u64, 32, 64].choose(rng).unwrap(),
            e_dram: 10.0,
        },
    }
}

pub fn random_allocation(rng: &mut impl Rng, g: &WorkloadGraph, a: &AcceleratorSpec) -> Allocation {
    g.layers.iter().map(|l| (l.id, *a.candidate_cores(l).choose(rng).unwrap())).collect()
}

pub fn random_request(rng: &mut impl Rng) -> TileRequest {
    match rng.gen_range(0..5) {
        0 => TileRequest::LayerByLayer,
        1 => TileRequest::Fused { tile_oy: rng.gen_range(1..=4), tile_ox: Some(rng.gen_range(2..=8)) },
        _ => TileRequest::rows(*[1u64, 2, 4].choose(rng).unwrap()),
    }
}

/// Every schedule invariant that can be read off the event list; returns the first violation.
pub fn check_schedule(graph: &CnGraph, alloc: &Allocation, r: &ScheduleResult) -> Result<(), String> {
    let n = graph.nodes.len();
    let mut start = vec![None; n];
    let mut end = vec![0u64; n];
    for e in &r.events {
        if e.end <= e.start {
            return Err(format!("empty event {e:?}"));
        }
        if e.kind == EventKind::Compute {
            if start[e.node].is_some() {
                return Err(format!("CN {} computed twice", e.node));
            }
            start[e.node] = Some(e.start);
            end[e.node] = e.end;
            let want = Lane::Core(alloc.core_of(e.layer).unwrap());
            if e.lane != want {
                return Err(format!("CN {} on {} instead of {}", e.node, e.lane, want));
            }
        }
    }
    if let Some(cn) = start.iter().position(Option::is_none) {
        return Err(format!("CN {cn} never scheduled"));
    }
    let start: Vec<u64> = start.into_iter().map(Option::unwrap).collect();

    let mut lanes: std::collections::BTreeMap<Lane, Vec<(u64, u64)>> = Default::default();
    for e in &r.events {
        lanes.entry(e.lane).or_default().push((e.start, e.end));
    }
    for (lane, mut spans) in lanes {
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(format!("overlap on {lane}: {:?} {:?}", w[0], w[1]));
            }
        }
    }

    let spill_end: std::collections::HashMap<usize, u64> = r
        .events
        .iter()
        .filter(|e| e.purpose == Purpose::SpillWrite)
        .map(|e| (e.node, e.end))
        .collect();
    for edge in &graph.edges {
        let (p, c) = (edge.src, edge.dst);
        if start[c] < end[p] {
            return Err(format!("CN {c} starts at {} before producer {p} ends at {}", start[c], end[p]));
        }
        if edge.kind == EdgeKind::IntraLayer {
            continue;
        }
        let cross = graph.nodes[p].layer_id != graph.nodes[c].layer_id
            && alloc.core_of(graph.nodes[p].layer_id) != alloc.core_of(graph.nodes[c].layer_id);
        let carrier = r.events.iter().find(|e| {
            e.node == c
                && matches!(e.purpose, Purpose::Transfer { src } | Purpose::SpillRead { src } if src == p)
        });
        match (spill_end.get(&p), carrier) {
            (Some(&written), Some(ev)) => {
                if ev.purpose != (Purpose::SpillRead { src: p }) || ev.start < written || ev.end > start[c] {
                    return Err(format!("spilled edge {p}->{c} read badly: {ev:?}"));
                }
            }
            (Some(_), None) => return Err(format!("spilled edge {p}->{c} never read back")),
            (None, Some(ev)) => {
                if !cross || ev.start < end[p] || ev.end > start[c] || ev.bits != edge.data_bits {
                    return Err(format!("bad transfer for {p}->{c}: {ev:?}"));
                }
            }
            (None, None) if cross => return Err(format!("cross-core edge {p}->{c} without transfer")),
            (None, None) => {}
        }
    }
    let latency = r.events.iter().map(|e| e.end).max().unwrap_or(0);
    if latency != r.latency || (r.edp - r.latency as f64 * r.total_energy()).abs() > 0.0 {
        return Err("totals disagree with events".into());
    }
    Ok(())
}

/// Σ generated outputs and Σ discardable inputs per layer match the layer's tensors.
pub fn check_attribute_sums(graph: &CnGraph) -> Result<(), String> {
    for lp in &graph.layers {
        let layer = graph.layer(lp.layer_id);
        let generated: u64 = lp.cns.iter().map(|&c| graph.nodes[c].generated_outputs).sum();
        if generated != layer.output_elements() {
            return Err(format!("layer {}: generated {generated} != {}", layer.id, layer.output_elements()));
        }
        for op in 0..layer.kind.operand_count() {
            let freed: u64 = lp.cns.iter().map(|&c| graph.nodes[c].discardable_inputs[op]).sum();
            if freed != layer.input_elements() {
                return Err(format!("layer {} operand {op}: discarded {freed} != {}", layer.id, layer.input_elements()));
            }
        }
    }
    Ok(())
}
