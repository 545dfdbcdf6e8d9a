//! wasm-bindgen entry points for the browser demo. Each export has a plain
//! Rust counterpart returning `Result<String, String>` so it can be tested natively.

use std::fmt::Write;

use serde_json::json;
use streamforge::ga::{objective_names, optimize_allocation, ping_pong_allocation, GaConfig};
use streamforge::partition::{split_layer_into_cns, LayerTiling, TileRequest};
use streamforge::report::{gantt_svg, metrics_json};
use streamforge::workload::{Layer, LayerDims, LayerKind};
use streamforge::{parse_architecture, parse_workload, AcceleratorSpec, Prepared, Priority, WorkloadGraph};
use wasm_bindgen::prelude::*;

const WORKLOADS: &[(&str, &str)] = &[
    ("chain4", include_str!("../../core/configs/chain4.json")),
    ("resnet12", include_str!("../../core/configs/resnet12.json")),
    ("fsrcnn_like", include_str!("../../core/configs/fsrcnn_like.json")),
];

const ARCHS: &[(&str, &str)] = &[
    ("tri_core", include_str!("../../core/configs/tri_core.json")),
    ("quad_core_homogeneous", include_str!("../../core/configs/quad_core_homogeneous.json")),
    ("quad_core_heterogeneous", include_str!("../../core/configs/quad_core_heterogeneous.json")),
    ("single_core_dram", include_str!("../../core/configs/single_core_dram.json")),
];

fn lookup<'a>(table: &[(&str, &'a str)], name: &str) -> Result<&'a str, String> {
    table.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| format!("unknown example '{name}'"))
}

fn load(workload: &str, arch: &str) -> Result<(WorkloadGraph, AcceleratorSpec), String> {
    let w = parse_workload(lookup(WORKLOADS, workload)?).map_err(|e| e.to_string())?;
    let a = parse_architecture(lookup(ARCHS, arch)?).map_err(|e| e.to_string())?;
    Ok((w, a))
}

fn request(tile_oy: u32) -> TileRequest {
    if tile_oy == 0 {
        TileRequest::LayerByLayer
    } else {
        TileRequest::rows(tile_oy as u64)
    }
}

fn priority(name: &str) -> Result<Priority, String> {
    Priority::from_name(name).ok_or_else(|| format!("unknown priority '{name}'"))
}

pub fn example_names() -> String {
    let names = |t: &[(&'static str, &'static str)]| t.iter().map(|(n, _)| *n).collect::<Vec<_>>();
    json!({"workloads": names(WORKLOADS), "architectures": names(ARCHS)}).to_string()
}

/// Schedules a bundled example with the ping-pong allocation.
/// `tile_oy == 0` selects layer-by-layer. Returns `{svg, metrics}`.
pub fn schedule_example(workload: &str, arch: &str, tile_oy: u32, prio: &str) -> Result<String, String> {
    let (w, a) = load(workload, arch)?;
    let p = Prepared::new(&w, &a, request(tile_oy), &[]).map_err(|e| e.to_string())?;
    let alloc = ping_pong_allocation(&p.graph, &a);
    let r = p.schedule(&alloc, priority(prio)?).map_err(|e| e.to_string())?;
    Ok(json!({"svg": gantt_svg(&r, &p.graph, &a), "metrics": metrics_json(&r, &alloc, &p.graph)}).to_string())
}

/// Runs a small allocation search and returns the front JSON plus the best schedule's SVG.
pub fn search_example(workload: &str, arch: &str, tile_oy: u32, population: u32, generations: u32, seed: u32) -> Result<String, String> {
    let (w, a) = load(workload, arch)?;
    let p = Prepared::new(&w, &a, request(tile_oy), &[]).map_err(|e| e.to_string())?;
    let cfg = GaConfig {
        population: population as usize,
        generations: generations as usize,
        seed: seed as u64,
        ..GaConfig::default()
    };
    let out = optimize_allocation(&p.graph, &a, &p.costs, &cfg).map_err(|e| e.to_string())?;
    let r = p.schedule(&out.best.allocation, cfg.priority).map_err(|e| e.to_string())?;
    Ok(json!({
        "front": out.front_json(objective_names(cfg.priority)),
        "svg": gantt_svg(&r, &p.graph, &a),
        "metrics": metrics_json(&r, &out.best.allocation, &p.graph),
    })
    .to_string())
}

const CELL: u64 = 14;

fn grid(svg: &mut String, x0: u64, cols: u64, rows: u64, label: &str) {
    let _ = writeln!(svg, r#"<text x="{x0}" y="14">{label}</text>"#);
    for y in 0..rows {
        for x in 0..cols {
            let _ = writeln!(
                svg,
                r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="#f4f4f4" stroke="#ccc"/>"##,
                x0 + x * CELL,
                24 + y * CELL
            );
        }
    }
}

/// Draws a single conv layer's output grid next to its input grid, highlighting
/// CN `cn` and the input rows and columns it reads.
pub fn footprint_svg(size: u32, kernel: u32, stride: u32, pad: u32, tile_oy: u32, tile_ox: u32, cn: u32) -> Result<String, String> {
    let (size, kernel, stride, pad) = (size as u64, kernel as u64, stride as u64, pad as u64);
    if size == 0 || kernel == 0 || stride == 0 || size > 64 {
        return Err("size must be 1..=64, kernel and stride at least 1".into());
    }
    let layer = Layer::new(0, LayerKind::Conv, LayerDims::new(1, 1, size, size, kernel, kernel).with_stride(stride, stride).with_pad(pad, pad, pad, pad));
    if layer.dims.iy_signed() < 1 {
        return Err("padding larger than the input".into());
    }
    let tiling = LayerTiling { tile_oy: (tile_oy as u64).clamp(1, size), tile_ox: (tile_ox as u64).clamp(1, size) };
    let cns = split_layer_into_cns(&layer, &tiling, 0);
    let node = cns.get(cn as usize).ok_or_else(|| format!("CN {cn} out of range (0..{})", cns.len()))?;
    let (iy, ix) = (layer.dims.iy(), layer.dims.ix());
    let in_x0 = size * CELL + 40;
    let width = in_x0 + ix * CELL + 10;
    let height = 24 + size.max(iy) * CELL + 10;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#);
    grid(&mut svg, 0, size, size, "output");
    grid(&mut svg, in_x0, ix, iy, "input");
    let (ys, xs) = (node.oy_range(), node.ox_range());
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#3b82f6" fill-opacity="0.6"/>"##,
        xs.start * CELL,
        24 + ys.start * CELL,
        (xs.stop - xs.start) * CELL,
        (ys.stop - ys.start) * CELL
    );
    if let Some(fp) = node.in_footprints[0] {
        let _ = writeln!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#f59e0b" fill-opacity="0.6"/>"##,
            in_x0 + fp.lo[2] as u64 * CELL,
            24 + fp.lo[1] as u64 * CELL,
            (fp.hi[2] - fp.lo[2]) as u64 * CELL,
            (fp.hi[1] - fp.lo[1]) as u64 * CELL
        );
    }
    svg.push_str("</svg>\n");
    Ok(json!({
        "svg": svg,
        "cn_count": cns.len(),
        "input": [iy, ix],
        "footprint": node.in_footprints[0].map(|r| json!({"rows": [r.lo[1], r.hi[1]], "cols": [r.lo[2], r.hi[2]]})),
        "discardable": node.discardable_inputs[0],
    })
    .to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = exampleNames)]
pub fn example_names_js() -> String {
    example_names()
}

#[wasm_bindgen(js_name = scheduleExample)]
pub fn schedule_example_js(workload: &str, arch: &str, tile_oy: u32, prio: &str) -> Result<String, JsValue> {
    js(schedule_example(workload, arch, tile_oy, prio))
}

#[wasm_bindgen(js_name = searchExample)]
pub fn search_example_js(workload: &str, arch: &str, tile_oy: u32, population: u32, generations: u32, seed: u32) -> Result<String, JsValue> {
    js(search_example(workload, arch, tile_oy, population, generations, seed))
}

#[wasm_bindgen(js_name = footprintSvg)]
pub fn footprint_svg_js(size: u32, kernel: u32, stride: u32, pad: u32, tile_oy: u32, tile_ox: u32, cn: u32) -> Result<String, JsValue> {
    js(footprint_svg(size, kernel, stride, pad, tile_oy, tile_ox, cn))
}
