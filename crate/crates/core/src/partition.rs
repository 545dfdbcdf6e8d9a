//! Splitting layers into computation nodes (CNs).
//!
//! A CN keeps the full K and all reduction loops (C, FX, FY) and tiles the
//! output rows, optionally also the output columns. CNs of a layer run in
//! row-major tile order. Input footprints come from interval arithmetic on
//! the convolution index map with padding clipped away.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::arch::AcceleratorSpec;
use crate::rtree::Rect;
use crate::workload::{Dim, Layer, WorkloadGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopRange {
    pub dim: Dim,
    pub start: u64,
    pub stop: u64,
}

impl LoopRange {
    pub fn len(&self) -> u64 {
        self.stop - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.stop <= self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputationNode {
    pub id: usize,
    pub layer_id: usize,
    pub intra_layer_index: usize,
    /// K, OY, OX in that order
    pub out_ranges: Vec<LoopRange>,
    /// per input operand, (C, IY, IX) box; `None` when only padding is read
    pub in_footprints: Vec<Option<Rect<3>>>,
    pub macs: u64,
    /// per input operand, elements whose last use is this CN
    pub discardable_inputs: Vec<u64>,
    pub generated_outputs: u64,
    pub input_bits: u64,
    pub output_bits: u64,
    pub weight_bits: u64,
}

pub fn bits_to_bytes(bits: u64) -> u64 {
    bits.div_ceil(8)
}

impl ComputationNode {
    fn range(&self, dim: Dim) -> LoopRange {
        *self.out_ranges.iter().find(|r| r.dim == dim).expect("K/OY/OX ranges present")
    }

    pub fn oy_range(&self) -> LoopRange {
        self.range(Dim::OY)
    }

    pub fn ox_range(&self) -> LoopRange {
        self.range(Dim::OX)
    }

    /// Output region in the consumer's (C, IY, IX) coordinates, i.e. (K, OY, OX).
    pub fn out_region(&self) -> Rect<3> {
        let k = self.range(Dim::K);
        let y = self.oy_range();
        let x = self.ox_range();
        Rect::new(
            [k.start as i64, y.start as i64, x.start as i64],
            [k.stop as i64, y.stop as i64, x.stop as i64],
        )
        .expect("CN output region is non-empty")
    }

    pub fn input_bytes(&self) -> u64 {
        bits_to_bytes(self.input_bits)
    }

    pub fn output_bytes(&self) -> u64 {
        bits_to_bytes(self.output_bits)
    }

    pub fn weight_bytes(&self) -> u64 {
        bits_to_bytes(self.weight_bits)
    }

    pub fn total_discardable(&self) -> u64 {
        self.discardable_inputs.iter().sum()
    }
}

/// Requested CN granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileRequest {
    /// Tile output rows by `tile_oy`, and columns by `tile_ox` when given.
    Fused { tile_oy: u64, tile_ox: Option<u64> },
    /// One CN per layer.
    LayerByLayer,
}

impl TileRequest {
    pub fn rows(tile_oy: u64) -> Self {
        TileRequest::Fused { tile_oy, tile_ox: None }
    }
}

/// Resolved tiling of one layer. Untiled dims carry their full extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerTiling {
    pub tile_oy: u64,
    pub tile_ox: u64,
}

impl LayerTiling {
    pub fn full(layer: &Layer) -> Self {
        LayerTiling { tile_oy: layer.dims.oy, tile_ox: layer.dims.ox }
    }

    pub fn tiles_y(&self, layer: &Layer) -> usize {
        layer.dims.oy.div_ceil(self.tile_oy) as usize
    }

    pub fn tiles_x(&self, layer: &Layer) -> usize {
        layer.dims.ox.div_ceil(self.tile_ox) as usize
    }

    pub fn outer_dims(&self, layer: &Layer) -> Vec<Dim> {
        let mut dims = Vec::new();
        if self.tile_oy < layer.dims.oy {
            dims.push(Dim::OY);
        }
        if self.tile_ox < layer.dims.ox {
            dims.push(Dim::OX);
        }
        dims
    }

    pub fn cn_count(&self, layer: &Layer) -> usize {
        self.tiles_y(layer) * self.tiles_x(layer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CnGranularity {
    pub layers: BTreeMap<usize, LayerTiling>,
    /// clamping notes
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("layer {0} has no compatible core")]
    NoCompatibleCore(usize),
    #[error("join layer {layer}: producers {a} and {b} have different tilings")]
    JoinMismatch { layer: usize, a: usize, b: usize },
    #[error("tile sizes must be >= 1")]
    ZeroTile,
    #[error("layer {0} missing from granularity")]
    MissingLayer(usize),
}

/// Per-layer tile sizes: the request, raised to the largest unroll factor of
/// the dim over the layer's candidate cores, capped at the layer extent.
pub fn derive_cn_granularity(
    g: &WorkloadGraph,
    a: &AcceleratorSpec,
    request: TileRequest,
) -> Result<CnGranularity, PartitionError> {
    let mut gran = CnGranularity::default();
    for layer in &g.layers {
        let tiling = match request {
            TileRequest::LayerByLayer => LayerTiling::full(layer),
            _ if layer.kind.is_unsplittable() => LayerTiling::full(layer),
            TileRequest::Fused { tile_oy, tile_ox } => {
                if tile_oy == 0 || tile_ox == Some(0) {
                    return Err(PartitionError::ZeroTile);
                }
                let cores = a.candidate_cores(layer);
                if cores.is_empty() {
                    return Err(PartitionError::NoCompatibleCore(layer.id));
                }
                let mut resolve = |dim: Dim, req: u64, extent: u64| {
                    let unroll = cores.iter().filter_map(|&c| a.core(c).unroll(dim)).max().unwrap_or(1);
                    if req > extent {
                        gran.diagnostics.push(format!(
                            "layer {}: requested {dim} tile {req} exceeds extent {extent}; clamped",
                            layer.id
                        ));
                    }
                    req.max(unroll).min(extent)
                };
                LayerTiling {
                    tile_oy: resolve(Dim::OY, tile_oy, layer.dims.oy),
                    tile_ox: match tile_ox {
                        Some(t) => resolve(Dim::OX, t, layer.dims.ox),
                        None => layer.dims.ox,
                    },
                }
            }
        };
        gran.layers.insert(layer.id, tiling);
    }

    for layer in g.layers.iter().filter(|l| l.kind.is_elementwise()) {
        let tilings: Vec<(usize, LayerTiling)> =
            layer.predecessors.iter().map(|&(p, _)| (p, gran.layers[&p])).collect();
        for w in tilings.windows(2) {
            if w[0].1 != w[1].1 {
                return Err(PartitionError::JoinMismatch { layer: layer.id, a: w[0].0, b: w[1].0 });
            }
        }
    }
    Ok(gran)
}

/// Input interval `[lo, hi)` read by output positions `[start, stop)` along one axis.
pub fn input_interval(start: u64, stop: u64, stride: u64, pad_lo: u64, kernel: u64, extent: u64) -> (i64, i64) {
    let lo = (start as i64 * stride as i64 - pad_lo as i64).max(0);
    let hi = ((stop as i64 - 1) * stride as i64 - pad_lo as i64 + kernel as i64).min(extent as i64);
    (lo, hi)
}

/// CNs of one layer in intra-layer order, ids starting at `first_id`.
/// Attributes are filled in as well.
pub fn split_layer_into_cns(layer: &Layer, tiling: &LayerTiling, first_id: usize) -> Vec<ComputationNode> {
    let d = &layer.dims;
    let (iy, ix) = (d.iy(), d.ix());
    let ty = tiling.tiles_y(layer);
    let tx = tiling.tiles_x(layer);
    let operands = layer.kind.operand_count();
    let act = layer.act_precision as u64;
    let mut out = Vec::with_capacity(ty * tx);
    for yi in 0..ty {
        let y0 = yi as u64 * tiling.tile_oy;
        let y1 = (y0 + tiling.tile_oy).min(d.oy);
        let (r_lo, r_hi) = input_interval(y0, y1, d.stride_y, d.pad_top, d.fy, iy);
        for xi in 0..tx {
            let x0 = xi as u64 * tiling.tile_ox;
            let x1 = (x0 + tiling.tile_ox).min(d.ox);
            let (c_lo, c_hi) = input_interval(x0, x1, d.stride_x, d.pad_left, d.fx, ix);
            let fp = Rect::new([0, r_lo, c_lo], [d.c as i64, r_hi, c_hi]);
            let in_elems = fp.map_or(0, |r| r.volume());
            let generated = d.k * (y1 - y0) * (x1 - x0);
            let macs = layer.loop_extents(x1 - x0, y1 - y0).iter().map(|&(_, e)| e).product();
            out.push(ComputationNode {
                id: first_id + out.len(),
                layer_id: layer.id,
                intra_layer_index: out.len(),
                out_ranges: vec![
                    LoopRange { dim: Dim::K, start: 0, stop: d.k },
                    LoopRange { dim: Dim::OY, start: y0, stop: y1 },
                    LoopRange { dim: Dim::OX, start: x0, stop: x1 },
                ],
                in_footprints: vec![fp; operands],
                macs,
                discardable_inputs: vec![0; operands],
                generated_outputs: generated,
                input_bits: in_elems * operands as u64 * act,
                output_bits: generated * act,
                weight_bits: layer.weight_bits(),
            });
        }
    }
    extract_cn_attributes(layer, tiling, &mut out);
    out
}

/// For each input row (column), the tile row (column) after which it is no longer needed.
///
/// A row belongs to the last tile whose window covers it. Rows no window
/// covers (skipped by the stride) go to the first tile starting beyond them,
/// or to the last tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseMap {
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub tiles_x: usize,
}

impl ReleaseMap {
    pub fn new(layer: &Layer, tiling: &LayerTiling) -> Self {
        let d = &layer.dims;
        let rows = axis_release(d.iy(), d.oy, tiling.tile_oy, d.stride_y, d.pad_top, d.fy);
        let cols = axis_release(d.ix(), d.ox, tiling.tile_ox, d.stride_x, d.pad_left, d.fx);
        ReleaseMap { rows, cols, tiles_x: tiling.tiles_x(layer) }
    }

    /// Intra-layer index of the CN that frees input element (row, col).
    pub fn releaser(&self, row: usize, col: usize) -> usize {
        self.rows[row] as usize * self.tiles_x + self.cols[col] as usize
    }
}

fn axis_release(in_extent: u64, out_extent: u64, tile: u64, stride: u64, pad_lo: u64, kernel: u64) -> Vec<u32> {
    let tiles = out_extent.div_ceil(tile) as usize;
    let windows: Vec<(i64, i64)> = (0..tiles)
        .map(|t| {
            let s = t as u64 * tile;
            input_interval(s, (s + tile).min(out_extent), stride, pad_lo, kernel, in_extent)
        })
        .collect();
    (0..in_extent as i64)
        .map(|r| {
            let last = windows.iter().rposition(|&(lo, hi)| lo <= r && r < hi);
            let release = last
                .or_else(|| windows.iter().position(|&(lo, hi)| lo < hi && lo > r))
                .unwrap_or(tiles - 1);
            release as u32
        })
        .collect()
}

/// Fills `discardable_inputs` and `generated_outputs`. Reduction loops stay
/// inside a CN, so every output of a CN is final.
pub fn extract_cn_attributes(layer: &Layer, tiling: &LayerTiling, cns: &mut [ComputationNode]) {
    let map = ReleaseMap::new(layer, tiling);
    let ty = tiling.tiles_y(layer);
    let mut rows_per_tile = vec![0u64; ty];
    for &r in &map.rows {
        rows_per_tile[r as usize] += 1;
    }
    let mut cols_per_tile = vec![0u64; map.tiles_x];
    for &c in &map.cols {
        cols_per_tile[c as usize] += 1;
    }
    for cn in cns.iter_mut() {
        let (yi, xi) = (cn.intra_layer_index / map.tiles_x, cn.intra_layer_index % map.tiles_x);
        let freed = layer.dims.c * rows_per_tile[yi] * cols_per_tile[xi];
        cn.discardable_inputs.iter_mut().for_each(|d| *d = freed);
        cn.generated_outputs = cn.out_ranges.iter().map(LoopRange::len).product();
    }
}

/// All CNs of a workload plus the per-layer bookkeeping the scheduler needs.
#[derive(Debug, Clone)]
pub struct LayerPartition {
    pub layer_id: usize,
    pub tiling: LayerTiling,
    /// global CN ids in intra-layer order
    pub cns: Vec<usize>,
    pub release: ReleaseMap,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub nodes: Vec<ComputationNode>,
    /// in workload (topological) order
    pub layers: Vec<LayerPartition>,
}

/// Splits every layer; CN ids are dense and follow layer order.
pub fn partition_workload(g: &WorkloadGraph, gran: &CnGranularity) -> Result<Partition, PartitionError> {
    let mut nodes = Vec::new();
    let mut layers = Vec::with_capacity(g.layers.len());
    for layer in &g.layers {
        let tiling = *gran.layers.get(&layer.id).ok_or(PartitionError::MissingLayer(layer.id))?;
        let cns = split_layer_into_cns(layer, &tiling, nodes.len());
        layers.push(LayerPartition {
            layer_id: layer.id,
            tiling,
            cns: cns.iter().map(|c| c.id).collect(),
            release: ReleaseMap::new(layer, &tiling),
        });
        nodes.extend(cns);
    }
    Ok(Partition { nodes, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{CoreSpec, InterconnectSpec};
    use crate::workload::{LayerDims, LayerKind};

    fn core(id: usize, unroll: Vec<(Dim, u64)>, simd: bool) -> CoreSpec {
        CoreSpec {
            id,
            pe_count: unroll.iter().map(|u| u.1).product(),
            spatial_unrolling: unroll,
            act_mem_capacity: 1 << 20,
            weight_mem_capacity: 1 << 20,
            onchip_port_bw: 1024,
            e_mac: 1.0,
            e_sram_act: 0.1,
            e_sram_weight: 0.1,
            is_simd: simd,
        }
    }

    fn accel(cores: Vec<CoreSpec>) -> AcceleratorSpec {
        AcceleratorSpec {
            name: "t".into(),
            cores,
            interconnect: InterconnectSpec { bus_bw: 128, e_bus: 1.0, dram_bw: 64, e_dram: 10.0 },
        }
    }

    fn single(layer: Layer) -> WorkloadGraph {
        WorkloadGraph { name: "one".into(), layers: vec![layer] }
    }

    fn conv4() -> Layer {
        Layer::new(0, LayerKind::Conv, LayerDims::new(2, 2, 4, 4, 3, 3).with_pad(1, 1, 1, 1))
    }

    fn rows(cn: &ComputationNode) -> (i64, i64) {
        let r = cn.in_footprints[0].unwrap();
        (r.lo[1], r.hi[1])
    }

    #[test]
    fn line_granularity() {
        let l = Layer::new(0, LayerKind::Conv, LayerDims::new(8, 8, 8, 8, 3, 3).with_pad(1, 1, 1, 1));
        let a = accel(vec![core(0, vec![(Dim::K, 8), (Dim::C, 8)], false)]);
        let gran = derive_cn_granularity(&single(l.clone()), &a, TileRequest::rows(1)).unwrap();
        let cns = split_layer_into_cns(&l, &gran.layers[&0], 0);
        assert_eq!(cns.len(), 8);
        assert!(cns.iter().all(|c| c.oy_range().len() == 1));
    }

    #[test]
    fn fully_connected_is_one_cn() {
        let l = Layer::new(0, LayerKind::FullyConnected, LayerDims::new(10, 64, 1, 1, 1, 1));
        let a = accel(vec![core(0, vec![(Dim::K, 8)], false)]);
        let gran = derive_cn_granularity(&single(l.clone()), &a, TileRequest::rows(1)).unwrap();
        assert_eq!(gran.layers[&0].cn_count(&l), 1);
    }

    #[test]
    fn tile_raised_to_unroll_factor() {
        let l = Layer::new(0, LayerKind::Conv, LayerDims::new(8, 8, 8, 8, 3, 3).with_pad(1, 1, 1, 1));
        let a = accel(vec![
            core(0, vec![(Dim::K, 8), (Dim::C, 8)], false),
            core(1, vec![(Dim::OY, 4), (Dim::K, 4)], false),
        ]);
        let gran = derive_cn_granularity(&single(l.clone()), &a, TileRequest::rows(1)).unwrap();
        assert_eq!(gran.layers[&0].tile_oy, 4);
        assert_eq!(gran.layers[&0].cn_count(&l), 2);
    }

    #[test]
    fn oversized_tile_is_clamped_with_note() {
        let l = conv4();
        let a = accel(vec![core(0, vec![(Dim::K, 2)], false)]);
        let gran = derive_cn_granularity(&single(l.clone()), &a, TileRequest::rows(99)).unwrap();
        assert_eq!(gran.layers[&0].tile_oy, 4);
        assert_eq!(gran.diagnostics.len(), 1);
    }

    #[test]
    fn conv_footprints_and_discards() {
        let l = conv4();
        let cns = split_layer_into_cns(&l, &LayerTiling { tile_oy: 1, tile_ox: 4 }, 0);
        let fps: Vec<_> = cns.iter().map(rows).collect();
        assert_eq!(fps, vec![(0, 2), (0, 3), (1, 4), (2, 4)]);
        // last reader of rows 0..4 is CN 1, 2, 3, 3 (brute force below)
        let per_row: Vec<u64> = cns.iter().map(|c| c.discardable_inputs[0] / (2 * 4)).collect();
        assert_eq!(per_row, vec![0, 1, 1, 2]);
        assert_eq!(cns.iter().map(|c| c.discardable_inputs[0]).sum::<u64>(), l.input_elements());
    }

    #[test]
    fn pool_windows_are_disjoint() {
        let l = Layer::new(0, LayerKind::PoolMax, LayerDims::new(3, 3, 4, 4, 2, 2).with_stride(2, 2));
        let cns = split_layer_into_cns(&l, &LayerTiling { tile_oy: 1, tile_ox: 4 }, 0);
        let fps: Vec<_> = cns.iter().map(rows).collect();
        assert_eq!(fps, vec![(0, 2), (2, 4), (4, 6), (6, 8)]);
        for cn in &cns {
            assert_eq!(cn.discardable_inputs[0], 3 * 2 * 8, "each CN frees its own two rows");
        }
    }

    #[test]
    fn layer_by_layer_is_one_full_cn() {
        let l = conv4();
        let cns = split_layer_into_cns(&l, &LayerTiling::full(&l), 0);
        assert_eq!(cns.len(), 1);
        let fp = cns[0].in_footprints[0].unwrap();
        assert_eq!((fp.lo, fp.hi), ([0, 0, 0], [2, 4, 4]));
        assert_eq!(cns[0].discardable_inputs[0], l.input_elements());
        assert_eq!(cns[0].generated_outputs, l.output_elements());
    }

    #[test]
    fn join_with_mismatched_producers_is_rejected() {
        let mut a_layer = Layer::new(0, LayerKind::Conv, LayerDims::new(4, 4, 8, 8, 1, 1));
        a_layer.allowed_cores = Some(vec![0]);
        let b_layer = Layer::new(1, LayerKind::Conv, LayerDims::new(4, 4, 8, 8, 1, 1)).with_predecessors(&[(0, 0)]);
        let mut b_layer = b_layer;
        b_layer.allowed_cores = Some(vec![1]);
        let add = Layer::new(2, LayerKind::ElementwiseAdd, LayerDims::new(4, 4, 8, 8, 1, 1))
            .with_predecessors(&[(0, 0), (1, 1)]);
        let g = WorkloadGraph { name: "j".into(), layers: vec![a_layer, b_layer, add] };
        let a = accel(vec![
            core(0, vec![(Dim::K, 4)], false),
            core(1, vec![(Dim::OY, 4)], false),
            core(2, vec![(Dim::K, 4)], true),
        ]);
        let err = derive_cn_granularity(&g, &a, TileRequest::rows(1)).unwrap_err();
        assert_eq!(err, PartitionError::JoinMismatch { layer: 2, a: 0, b: 1 });
    }
}
