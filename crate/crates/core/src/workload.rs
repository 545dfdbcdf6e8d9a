//! DNN layer graph: loop-nest dimensions, layer kinds and the JSON workload format.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A loop dimension of the seven-dim layer nest (batch fixed at 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dim {
    K,
    C,
    OX,
    OY,
    FX,
    FY,
}

impl Dim {
    pub const ALL: [Dim; 6] = [Dim::K, Dim::C, Dim::OX, Dim::OY, Dim::FX, Dim::FY];

    pub fn name(self) -> &'static str {
        match self {
            Dim::K => "K",
            Dim::C => "C",
            Dim::OX => "OX",
            Dim::OY => "OY",
            Dim::FX => "FX",
            Dim::FY => "FY",
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    PointwiseConv,
    FullyConnected,
    Gemm,
    PoolMax,
    PoolAvg,
    ElementwiseAdd,
    ElementwiseMul,
}

impl LayerKind {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "conv" => LayerKind::Conv,
            "depthwise_conv" => LayerKind::DepthwiseConv,
            "pointwise_conv" => LayerKind::PointwiseConv,
            "fully_connected" => LayerKind::FullyConnected,
            "gemm" => LayerKind::Gemm,
            "pool_max" => LayerKind::PoolMax,
            "pool_avg" => LayerKind::PoolAvg,
            "elementwise_add" => LayerKind::ElementwiseAdd,
            "elementwise_mul" => LayerKind::ElementwiseMul,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::PointwiseConv => "pointwise_conv",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::Gemm => "gemm",
            LayerKind::PoolMax => "pool_max",
            LayerKind::PoolAvg => "pool_avg",
            LayerKind::ElementwiseAdd => "elementwise_add",
            LayerKind::ElementwiseMul => "elementwise_mul",
        }
    }

    /// Pool and elementwise kinds run on SIMD cores only.
    pub fn is_simd(self) -> bool {
        matches!(
            self,
            LayerKind::PoolMax | LayerKind::PoolAvg | LayerKind::ElementwiseAdd | LayerKind::ElementwiseMul
        )
    }

    pub fn is_elementwise(self) -> bool {
        matches!(self, LayerKind::ElementwiseAdd | LayerKind::ElementwiseMul)
    }

    /// Kinds that must stay a single computation node.
    pub fn is_unsplittable(self) -> bool {
        matches!(self, LayerKind::FullyConnected | LayerKind::Gemm)
    }

    /// Number of activation input operands.
    pub fn operand_count(self) -> usize {
        if self.is_elementwise() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerDims {
    pub k: u64,
    pub c: u64,
    pub ox: u64,
    pub oy: u64,
    pub fx: u64,
    pub fy: u64,
    pub stride_x: u64,
    pub stride_y: u64,
    pub pad_top: u64,
    pub pad_left: u64,
    pub pad_bottom: u64,
    pub pad_right: u64,
}

impl LayerDims {
    /// Unit-stride, unpadded dims.
    pub fn new(k: u64, c: u64, ox: u64, oy: u64, fx: u64, fy: u64) -> Self {
        LayerDims {
            k,
            c,
            ox,
            oy,
            fx,
            fy,
            stride_x: 1,
            stride_y: 1,
            pad_top: 0,
            pad_left: 0,
            pad_bottom: 0,
            pad_right: 0,
        }
    }

    pub fn with_stride(mut self, sx: u64, sy: u64) -> Self {
        self.stride_x = sx;
        self.stride_y = sy;
        self
    }

    /// Padding in (top, left, bottom, right) order.
    pub fn with_pad(mut self, top: u64, left: u64, bottom: u64, right: u64) -> Self {
        self.pad_top = top;
        self.pad_left = left;
        self.pad_bottom = bottom;
        self.pad_right = right;
        self
    }

    /// Derived input width; may be non-positive for inconsistent dims.
    pub fn ix_signed(&self) -> i64 {
        (self.ox as i64 - 1) * self.stride_x as i64 + self.fx as i64
            - self.pad_left as i64
            - self.pad_right as i64
    }

    pub fn iy_signed(&self) -> i64 {
        (self.oy as i64 - 1) * self.stride_y as i64 + self.fy as i64
            - self.pad_top as i64
            - self.pad_bottom as i64
    }

    pub fn ix(&self) -> u64 {
        self.ix_signed().max(0) as u64
    }

    pub fn iy(&self) -> u64 {
        self.iy_signed().max(0) as u64
    }

    pub fn get(&self, dim: Dim) -> u64 {
        match dim {
            Dim::K => self.k,
            Dim::C => self.c,
            Dim::OX => self.ox,
            Dim::OY => self.oy,
            Dim::FX => self.fx,
            Dim::FY => self.fy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub id: usize,
    pub kind: LayerKind,
    pub dims: LayerDims,
    /// (producer layer id, input operand slot)
    pub predecessors: Vec<(usize, usize)>,
    pub act_precision: u32,
    pub weight_precision: u32,
    pub allowed_cores: Option<Vec<usize>>,
}

impl Layer {
    pub fn new(id: usize, kind: LayerKind, dims: LayerDims) -> Self {
        Layer {
            id,
            kind,
            dims,
            predecessors: Vec::new(),
            act_precision: 8,
            weight_precision: 8,
            allowed_cores: None,
        }
    }

    pub fn with_predecessors(mut self, preds: &[(usize, usize)]) -> Self {
        self.predecessors = preds.to_vec();
        self
    }

    /// Input tensor shape as (C, IY, IX).
    pub fn input_shape(&self) -> [u64; 3] {
        [self.dims.c, self.dims.iy(), self.dims.ix()]
    }

    /// Output tensor shape as (K, OY, OX).
    pub fn output_shape(&self) -> [u64; 3] {
        [self.dims.k, self.dims.oy, self.dims.ox]
    }

    pub fn input_elements(&self) -> u64 {
        self.input_shape().iter().product()
    }

    pub fn output_elements(&self) -> u64 {
        self.output_shape().iter().product()
    }

    /// Loop extents a computation covering `oy` x `ox` output pixels iterates.
    ///
    /// Depthwise layers reduce over a single channel per output channel;
    /// pool and elementwise kinds count one op per output element.
    pub fn loop_extents(&self, ox: u64, oy: u64) -> [(Dim, u64); 6] {
        let d = &self.dims;
        let (c, fx, fy) = match self.kind {
            LayerKind::Conv | LayerKind::PointwiseConv | LayerKind::FullyConnected | LayerKind::Gemm => {
                (d.c, d.fx, d.fy)
            }
            LayerKind::DepthwiseConv => (1, d.fx, d.fy),
            _ => (1, 1, 1),
        };
        [
            (Dim::K, d.k),
            (Dim::C, c),
            (Dim::OX, ox),
            (Dim::OY, oy),
            (Dim::FX, fx),
            (Dim::FY, fy),
        ]
    }

    /// MACs (or elementary ops for pool/elementwise kinds) of the whole layer.
    pub fn op_count(&self) -> u64 {
        self.loop_extents(self.dims.ox, self.dims.oy)
            .iter()
            .map(|&(_, e)| e)
            .product()
    }

    pub fn weight_elements(&self) -> u64 {
        let d = &self.dims;
        match self.kind {
            LayerKind::Conv | LayerKind::PointwiseConv => d.k * d.c * d.fx * d.fy,
            LayerKind::DepthwiseConv => d.k * d.fx * d.fy,
            LayerKind::FullyConnected | LayerKind::Gemm => d.k * d.c,
            _ => 0,
        }
    }

    pub fn weight_bits(&self) -> u64 {
        self.weight_elements() * self.weight_precision as u64
    }

    pub fn is_graph_input(&self) -> bool {
        self.predecessors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadGraph {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl WorkloadGraph {
    pub fn layer(&self, id: usize) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Position of each layer id in `layers`.
    pub fn positions(&self) -> HashMap<usize, usize> {
        self.layers.iter().enumerate().map(|(i, l)| (l.id, i)).collect()
    }

    /// Consumers of each layer id as (consumer id, operand slot), in layer order.
    pub fn consumers(&self) -> HashMap<usize, Vec<(usize, usize)>> {
        let mut out: HashMap<usize, Vec<(usize, usize)>> =
            self.layers.iter().map(|l| (l.id, Vec::new())).collect();
        for l in &self.layers {
            for &(p, slot) in &l.predecessors {
                out.entry(p).or_default().push((l.id, slot));
            }
        }
        out
    }

    pub fn total_ops(&self) -> u64 {
        self.layers.iter().map(Layer::op_count).sum()
    }

    pub fn to_json(&self) -> String {
        let raw = RawWorkload {
            name: self.name.clone(),
            layers: self.layers.iter().map(RawLayer::from).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("workload serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    DuplicateId,
    DimRange,
    KindConstraint,
    Arity,
    OperandSlot,
    DanglingPredecessor,
    ShapeMismatch,
    Cycle,
    Precision,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DuplicateId => "duplicate-id",
            Rule::DimRange => "dim-range",
            Rule::KindConstraint => "kind-constraint",
            Rule::Arity => "arity",
            Rule::OperandSlot => "operand-slot",
            Rule::DanglingPredecessor => "dangling-predecessor",
            Rule::ShapeMismatch => "shape-mismatch",
            Rule::Cycle => "cycle",
            Rule::Precision => "precision",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub layer: usize,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}: [{}] {}", self.layer, self.rule, self.message)
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("layer {layer}: unknown layer kind `{kind}`")]
    UnknownKind { layer: usize, kind: String },
    #[error("{0}")]
    DanglingPredecessor(Diagnostic),
    #[error("{0}")]
    ShapeMismatch(Diagnostic),
    #[error("{0}")]
    Cycle(Diagnostic),
    #[error("{0}")]
    Invalid(Diagnostic),
}

impl From<Diagnostic> for WorkloadError {
    fn from(d: Diagnostic) -> Self {
        match d.rule {
            Rule::DanglingPredecessor => WorkloadError::DanglingPredecessor(d),
            Rule::ShapeMismatch => WorkloadError::ShapeMismatch(d),
            Rule::Cycle => WorkloadError::Cycle(d),
            _ => WorkloadError::Invalid(d),
        }
    }
}

/// Checks every graph invariant; an empty result means the graph is valid.
pub fn validate_graph(g: &WorkloadGraph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut push = |layer: usize, rule: Rule, message: String| diags.push(Diagnostic { layer, rule, message });

    let mut seen = BTreeSet::new();
    for l in &g.layers {
        if !seen.insert(l.id) {
            push(l.id, Rule::DuplicateId, format!("id {} used more than once", l.id));
        }
    }
    let by_id: HashMap<usize, &Layer> = g.layers.iter().map(|l| (l.id, l)).collect();

    for l in &g.layers {
        let d = &l.dims;
        for dim in Dim::ALL {
            if d.get(dim) == 0 {
                push(l.id, Rule::DimRange, format!("{dim} must be >= 1"));
            }
        }
        if d.stride_x == 0 || d.stride_y == 0 {
            push(l.id, Rule::DimRange, "strides must be >= 1".into());
        }
        if d.ix_signed() < 1 || d.iy_signed() < 1 {
            push(
                l.id,
                Rule::DimRange,
                format!("derived input extent {}x{} must be >= 1", d.iy_signed(), d.ix_signed()),
            );
        }
        if l.act_precision == 0 || l.weight_precision == 0 {
            push(l.id, Rule::Precision, "precisions must be >= 1 bit".into());
        }
        match l.kind {
            LayerKind::DepthwiseConv | LayerKind::PoolMax | LayerKind::PoolAvg if d.c != d.k => {
                push(l.id, Rule::KindConstraint, format!("{} requires C = K ({} != {})", l.kind, d.c, d.k));
            }
            LayerKind::PointwiseConv | LayerKind::Gemm if d.fx != 1 || d.fy != 1 => {
                push(l.id, Rule::KindConstraint, format!("{} requires FX = FY = 1", l.kind));
            }
            LayerKind::FullyConnected if d.ox != 1 || d.oy != 1 || d.fx != 1 || d.fy != 1 => {
                push(l.id, Rule::KindConstraint, "fully_connected requires OX = OY = FX = FY = 1".into());
            }
            LayerKind::ElementwiseAdd | LayerKind::ElementwiseMul => {
                let unit = d.fx == 1
                    && d.fy == 1
                    && d.stride_x == 1
                    && d.stride_y == 1
                    && d.pad_top + d.pad_left + d.pad_bottom + d.pad_right == 0;
                if d.c != d.k || !unit {
                    push(
                        l.id,
                        Rule::KindConstraint,
                        format!("{} requires C = K, unit kernel and stride, no padding", l.kind),
                    );
                }
            }
            _ => {}
        }

        let n = l.predecessors.len();
        let arity_ok = if l.kind.is_elementwise() { n == 2 } else { n <= 1 };
        if !arity_ok {
            let want = if l.kind.is_elementwise() { "exactly 2" } else { "0 or 1" };
            push(l.id, Rule::Arity, format!("{} takes {want} predecessors, got {n}", l.kind));
        }
        let mut slots = BTreeSet::new();
        for &(p, slot) in &l.predecessors {
            if slot >= l.kind.operand_count() || !slots.insert(slot) {
                push(l.id, Rule::OperandSlot, format!("invalid or repeated operand slot {slot}"));
            }
            match by_id.get(&p) {
                None => push(l.id, Rule::DanglingPredecessor, format!("predecessor {p} does not exist")),
                Some(prod) => {
                    if prod.id != l.id && prod.output_shape() != l.input_shape() {
                        push(
                            l.id,
                            Rule::ShapeMismatch,
                            format!(
                                "input shape {:?} does not match output {:?} of layer {p}",
                                l.input_shape(),
                                prod.output_shape()
                            ),
                        );
                    }
                }
            }
        }
    }

    if let Err(stuck) = topo_order(g) {
        for id in stuck {
            push(id, Rule::Cycle, "layer lies on a dependency cycle".into());
        }
    }
    diags
}

/// Stable topological order (ties by file position); `Err` lists the layers left on cycles.
fn topo_order(g: &WorkloadGraph) -> Result<Vec<usize>, Vec<usize>> {
    let pos = g.positions();
    let mut indeg = vec![0usize; g.layers.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); g.layers.len()];
    for (i, l) in g.layers.iter().enumerate() {
        for &(p, _) in &l.predecessors {
            if let Some(&pi) = pos.get(&p) {
                indeg[i] += 1;
                succ[pi].push(i);
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..g.layers.len()).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(g.layers.len());
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &s in &succ[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(Reverse(s));
            }
        }
    }
    if order.len() == g.layers.len() {
        Ok(order)
    } else {
        let done: BTreeSet<usize> = order.into_iter().collect();
        Err((0..g.layers.len()).filter(|i| !done.contains(i)).map(|i| g.layers[i].id).collect())
    }
}

/// Parses and validates a workload file, returning layers in topological order.
pub fn parse_workload(text: &str) -> Result<WorkloadGraph, WorkloadError> {
    let raw: RawWorkload = serde_json::from_str(text).map_err(|e| WorkloadError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut layers = Vec::with_capacity(raw.layers.len());
    for rl in raw.layers {
        layers.push(rl.into_layer()?);
    }
    let mut g = WorkloadGraph { name: raw.name, layers };
    if let Some(first) = validate_graph(&g).into_iter().next() {
        return Err(first.into());
    }
    let order = topo_order(&g).expect("validated graph is acyclic");
    let mut slots: Vec<Option<Layer>> = g.layers.drain(..).map(Some).collect();
    g.layers = order.into_iter().map(|i| slots[i].take().expect("each layer once")).collect();
    Ok(g)
}

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    name: String,
    layers: Vec<RawLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    id: usize,
    kind: String,
    dims: RawDims,
    #[serde(default)]
    precision: RawPrecision,
    #[serde(default)]
    predecessors: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    allowed_cores: Option<Vec<usize>>,
}

fn one() -> u64 {
    1
}

fn unit_stride() -> [u64; 2] {
    [1, 1]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawDims {
    K: u64,
    C: u64,
    #[serde(default = "one")]
    OX: u64,
    #[serde(default = "one")]
    OY: u64,
    #[serde(default = "one")]
    FX: u64,
    #[serde(default = "one")]
    FY: u64,
    /// [x, y]
    #[serde(default = "unit_stride")]
    stride: [u64; 2],
    /// [top, left, bottom, right]
    #[serde(default)]
    pad: [u64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrecision {
    act: u32,
    weight: u32,
}

impl Default for RawPrecision {
    fn default() -> Self {
        RawPrecision { act: 8, weight: 8 }
    }
}

impl RawLayer {
    fn into_layer(self) -> Result<Layer, WorkloadError> {
        let kind = LayerKind::from_name(&self.kind).ok_or_else(|| WorkloadError::UnknownKind {
            layer: self.id,
            kind: self.kind.clone(),
        })?;
        let d = self.dims;
        Ok(Layer {
            id: self.id,
            kind,
            dims: LayerDims {
                k: d.K,
                c: d.C,
                ox: d.OX,
                oy: d.OY,
                fx: d.FX,
                fy: d.FY,
                stride_x: d.stride[0],
                stride_y: d.stride[1],
                pad_top: d.pad[0],
                pad_left: d.pad[1],
                pad_bottom: d.pad[2],
                pad_right: d.pad[3],
            },
            predecessors: self.predecessors,
            act_precision: self.precision.act,
            weight_precision: self.precision.weight,
            allowed_cores: self.allowed_cores,
        })
    }
}

impl From<&Layer> for RawLayer {
    fn from(l: &Layer) -> Self {
        let d = &l.dims;
        RawLayer {
            id: l.id,
            kind: l.kind.name().to_string(),
            dims: RawDims {
                K: d.k,
                C: d.c,
                OX: d.ox,
                OY: d.oy,
                FX: d.fx,
                FY: d.fy,
                stride: [d.stride_x, d.stride_y],
                pad: [d.pad_top, d.pad_left, d.pad_bottom, d.pad_right],
            },
            precision: RawPrecision { act: l.act_precision, weight: l.weight_precision },
            predecessors: l.predecessors.clone(),
            allowed_cores: l.allowed_cores.clone(),
        }
    }
}

/// Layer ids grouped by the rule they violate, for compact reporting.
pub fn summarize(diags: &[Diagnostic]) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for d in diags {
        out.entry(d.rule.to_string()).or_default().push(d.layer);
    }
    out
}
