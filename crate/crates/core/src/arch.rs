//! Multi-core accelerator description: cores with a spatial dataflow and local
//! memories, one shared bus and one shared DRAM port.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{Dim, Layer};

#[derive(Debug, Clone, PartialEq)]
pub struct CoreSpec {
    pub id: usize,
    pub pe_count: u64,
    pub spatial_unrolling: Vec<(Dim, u64)>,
    /// bytes
    pub act_mem_capacity: u64,
    /// bytes
    pub weight_mem_capacity: u64,
    /// bits per cycle
    pub onchip_port_bw: u64,
    /// pJ per MAC (per elementary op on SIMD cores)
    pub e_mac: f64,
    /// pJ per bit
    pub e_sram_act: f64,
    /// pJ per bit
    pub e_sram_weight: f64,
    pub is_simd: bool,
}

impl CoreSpec {
    pub fn unroll(&self, dim: Dim) -> Option<u64> {
        self.spatial_unrolling.iter().find(|(d, _)| *d == dim).map(|&(_, u)| u)
    }

    /// SIMD cores take pool/elementwise kinds, all other cores take the rest.
    pub fn supports(&self, layer: &Layer) -> bool {
        self.is_simd == layer.kind.is_simd()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectSpec {
    pub bus_bw: u64,
    pub e_bus: f64,
    pub dram_bw: u64,
    pub e_dram: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceleratorSpec {
    pub name: String,
    pub cores: Vec<CoreSpec>,
    pub interconnect: InterconnectSpec,
}

impl AcceleratorSpec {
    /// Summed activation plus weight memory over all cores, in bytes.
    pub fn total_memory(&self) -> u64 {
        self.cores.iter().map(|c| c.act_mem_capacity + c.weight_mem_capacity).sum()
    }

    pub fn core(&self, id: usize) -> &CoreSpec {
        &self.cores[id]
    }

    /// Cores a layer may be allocated to: its `allowed_cores` if given,
    /// otherwise every core whose kind matches. Incompatible entries are dropped.
    pub fn candidate_cores(&self, layer: &Layer) -> Vec<usize> {
        let compatible = |id: &usize| self.cores.get(*id).is_some_and(|c| c.supports(layer));
        match &layer.allowed_cores {
            Some(list) => {
                let set: BTreeSet<usize> = list.iter().copied().filter(compatible).collect();
                set.into_iter().collect()
            }
            None => self.cores.iter().map(|c| c.id).filter(compatible).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawArch::from(self)).expect("architecture serializes")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ArchError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("core {core}: unroll product {product} != pe_count {pe_count}")]
    UnrollProduct { core: usize, product: u64, pe_count: u64 },
    #[error("duplicate core id {0}")]
    DuplicateCore(usize),
    #[error("core ids must be dense from 0; missing {0}")]
    SparseIds(usize),
    #[error("core {core}: {message}")]
    InvalidCore { core: usize, message: String },
    #[error("interconnect: {0}")]
    InvalidInterconnect(String),
    #[error("at least one non-SIMD core is required")]
    NoComputeCore,
}

/// Checks the architecture invariants.
pub fn validate_architecture(a: &AcceleratorSpec) -> Result<(), ArchError> {
    let mut ids = BTreeSet::new();
    for c in &a.cores {
        if !ids.insert(c.id) {
            return Err(ArchError::DuplicateCore(c.id));
        }
    }
    for want in 0..a.cores.len() {
        if !ids.contains(&want) {
            return Err(ArchError::SparseIds(want));
        }
    }
    for c in &a.cores {
        let invalid = |m: &str| ArchError::InvalidCore { core: c.id, message: m.to_string() };
        let mut dims = BTreeSet::new();
        for &(d, u) in &c.spatial_unrolling {
            if !dims.insert(d) {
                return Err(invalid(&format!("dimension {d} unrolled twice")));
            }
            if u == 0 {
                return Err(invalid("unroll factors must be >= 1"));
            }
        }
        let product: u64 = c.spatial_unrolling.iter().map(|&(_, u)| u).product();
        if product != c.pe_count {
            return Err(ArchError::UnrollProduct { core: c.id, product, pe_count: c.pe_count });
        }
        if c.act_mem_capacity == 0 || c.weight_mem_capacity == 0 {
            return Err(invalid("memory capacities must be > 0"));
        }
        if c.onchip_port_bw == 0 {
            return Err(invalid("port bandwidth must be > 0"));
        }
        if [c.e_mac, c.e_sram_act, c.e_sram_weight].iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(invalid("energies must be finite and non-negative"));
        }
    }
    let ic = &a.interconnect;
    if ic.bus_bw == 0 || ic.dram_bw == 0 {
        return Err(ArchError::InvalidInterconnect("bandwidths must be > 0".into()));
    }
    if !(ic.e_bus > 0.0 && ic.e_dram > 0.0 && ic.e_bus.is_finite() && ic.e_dram.is_finite()) {
        return Err(ArchError::InvalidInterconnect("energies per bit must be > 0".into()));
    }
    if a.cores.iter().all(|c| c.is_simd) {
        return Err(ArchError::NoComputeCore);
    }
    Ok(())
}

/// Parses and validates an architecture file. Cores come back sorted by id.
pub fn parse_architecture(text: &str) -> Result<AcceleratorSpec, ArchError> {
    let raw: RawArch = serde_json::from_str(text).map_err(|e| ArchError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut spec = AcceleratorSpec::from(raw);
    validate_architecture(&spec)?;
    spec.cores.sort_by_key(|c| c.id);
    Ok(spec)
}

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArch {
    name: String,
    bus: RawLink,
    dram: RawLink,
    cores: Vec<RawCore>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    bw: u64,
    e_per_bit: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCore {
    id: usize,
    pe_count: u64,
    unrolling: Vec<(Dim, u64)>,
    act_mem: u64,
    weight_mem: u64,
    port_bw: u64,
    e_mac: f64,
    e_sram_act: f64,
    e_sram_weight: f64,
    #[serde(default)]
    simd: bool,
}

impl From<RawArch> for AcceleratorSpec {
    fn from(r: RawArch) -> Self {
        AcceleratorSpec {
            name: r.name,
            interconnect: InterconnectSpec {
                bus_bw: r.bus.bw,
                e_bus: r.bus.e_per_bit,
                dram_bw: r.dram.bw,
                e_dram: r.dram.e_per_bit,
            },
            cores: r
                .cores
                .into_iter()
                .map(|c| CoreSpec {
                    id: c.id,
                    pe_count: c.pe_count,
                    spatial_unrolling: c.unrolling,
                    act_mem_capacity: c.act_mem,
                    weight_mem_capacity: c.weight_mem,
                    onchip_port_bw: c.port_bw,
                    e_mac: c.e_mac,
                    e_sram_act: c.e_sram_act,
                    e_sram_weight: c.e_sram_weight,
                    is_simd: c.simd,
                })
                .collect(),
        }
    }
}

impl From<&AcceleratorSpec> for RawArch {
    fn from(a: &AcceleratorSpec) -> Self {
        let ic = &a.interconnect;
        RawArch {
            name: a.name.clone(),
            bus: RawLink { bw: ic.bus_bw, e_per_bit: ic.e_bus },
            dram: RawLink { bw: ic.dram_bw, e_per_bit: ic.e_dram },
            cores: a
                .cores
                .iter()
                .map(|c| RawCore {
                    id: c.id,
                    pe_count: c.pe_count,
                    unrolling: c.spatial_unrolling.clone(),
                    act_mem: c.act_mem_capacity,
                    weight_mem: c.weight_mem_capacity,
                    port_bw: c.onchip_port_bw,
                    e_mac: c.e_mac,
                    e_sram_act: c.e_sram_act,
                    e_sram_weight: c.e_sram_weight,
                    simd: c.is_simd,
                })
                .collect(),
        }
    }
}
