//! Output artifacts: Gantt SVG, memory CSV and metrics JSON.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde_json::{json, Value};

use crate::arch::AcceleratorSpec;
use crate::depgraph::CnGraph;
use crate::schedule::{Allocation, Lane, ScheduleResult};

const WIDTH: f64 = 1200.0;
const LEFT: f64 = 70.0;
const LANE_H: f64 = 26.0;
const MEM_H: f64 = 140.0;

fn layer_color(pos: usize) -> String {
    format!("hsl({:.0},65%,60%)", (pos as f64 * 137.508) % 360.0)
}

fn lane_row(lane: Lane, cores: usize) -> usize {
    match lane {
        Lane::Core(c) => c,
        Lane::Bus => cores,
        Lane::Dram => cores + 1,
    }
}

/// One lane per core plus bus and DRAM, with the total memory curve below.
pub fn gantt_svg(result: &ScheduleResult, graph: &CnGraph, accel: &AcceleratorSpec) -> String {
    let cores = accel.cores.len();
    let lanes = cores + 2;
    let span = result.latency.max(1) as f64;
    let sx = (WIDTH - LEFT - 10.0) / span;
    let mem_top = 20.0 + lanes as f64 * LANE_H + 30.0;
    let height = mem_top + MEM_H + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="monospace" font-size="10" style="background:white">"#
    );
    for row in 0..lanes {
        let y = 20.0 + row as f64 * LANE_H;
        let name = if row < cores { format!("core{row}") } else if row == cores { "bus".into() } else { "dram".into() };
        let _ = writeln!(s, r#"<text x="4" y="{:.1}">{name}</text>"#, y + LANE_H * 0.65);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{WIDTH}" y2="{y:.1}" stroke="#ddd"/>"##
        );
    }
    for ev in &result.events {
        let y = 20.0 + lane_row(ev.lane, cores) as f64 * LANE_H + 2.0;
        let x = LEFT + ev.start as f64 * sx;
        let w = (ev.duration() as f64 * sx).max(0.5);
        let color = layer_color(graph.layer_position(ev.layer));
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{:.1}" fill="{color}" stroke="#333" stroke-width="0.3"><title>node {} layer {} [{}, {})</title></rect>"##,
            LANE_H - 4.0,
            ev.node,
            ev.layer,
            ev.start,
            ev.end
        );
        if w >= 7.0 * (ev.node.to_string().len() as f64) {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.1}">{}</text>"#, x + 1.5, y + LANE_H * 0.55, ev.node);
        }
    }

    let peak = result.peak_memory.max(1) as f64;
    let sy = MEM_H / peak;
    let base = mem_top + MEM_H;
    let _ = writeln!(s, r#"<text x="4" y="{:.1}">memory</text>"#, mem_top + 10.0);
    let _ = writeln!(s, r#"<text x="4" y="{:.1}">{} B</text>"#, mem_top + 24.0, result.peak_memory);
    let mut pts = String::new();
    let mut prev = 0.0;
    for &(t, v) in &result.memory.total {
        let x = LEFT + t as f64 * sx;
        let _ = write!(pts, "{x:.2},{:.2} {x:.2},{:.2} ", base - prev * sy, base - v as f64 * sy);
        prev = v as f64;
    }
    let _ = write!(pts, "{:.2},{:.2}", LEFT + span * sx, base - prev * sy);
    let _ = writeln!(s, r##"<polyline points="{pts}" fill="none" stroke="#c03" stroke-width="1.2"/>"##);
    let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{base}" x2="{WIDTH}" y2="{base}" stroke="#333"/>"##);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.1}">0</text>"#, base + 14.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{} cc</text>"#, WIDTH - 10.0, base + 14.0, result.latency);
    s.push_str("</svg>\n");
    s
}

/// `time,core_0,...,total` in bytes, one row per change point.
pub fn memory_csv(result: &ScheduleResult) -> String {
    let series: Vec<&Vec<(u64, u64)>> =
        result.memory.per_core.iter().chain(std::iter::once(&result.memory.total)).collect();
    let times: BTreeSet<u64> = series.iter().flat_map(|s| s.iter().map(|p| p.0)).collect();
    let mut out = String::from("time");
    for c in 0..result.memory.per_core.len() {
        let _ = write!(out, ",core_{c}");
    }
    out.push_str(",total\n");
    let mut idx = vec![0usize; series.len()];
    for t in times {
        let _ = write!(out, "{t}");
        for (k, s) in series.iter().enumerate() {
            while idx[k] + 1 < s.len() && s[idx[k] + 1].0 <= t {
                idx[k] += 1;
            }
            let v = if s.is_empty() || s[idx[k]].0 > t { 0 } else { s[idx[k]].1 };
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Totals plus the allocation that produced them.
pub fn metrics_json(result: &ScheduleResult, alloc: &Allocation, graph: &CnGraph) -> Value {
    let mut v = result.totals_json();
    v["allocation"] = alloc.to_json();
    v["cn_count"] = json!(graph.nodes.len());
    v["edge_count"] = json!(graph.edges.len());
    v
}
