// SPDX-License-Identifier: Apache-2.0

//! Mesh-of-chiplets package: XY-routed network-on-package, memory channels
//! on the left and right edges, and DRAM/NoP transfer costs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::{ChipletSpec, Dataflow, MemoryEnv};
use crate::error::{Error, Result};

/// Network-on-package link parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoPParams {
    pub hop_lat_s: f64,
    pub e_bit_j: f64,
    pub bw_bytes_s: f64,
}

impl Default for NoPParams {
    fn default() -> Self {
        NoPConfig::default().resolve()
    }
}

/// Off-chip memory parameters (SI units). Bandwidth is per side channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DramParams {
    pub lat_s: f64,
    pub e_bit_j: f64,
    pub bw_bytes_s: f64,
}

impl Default for DramParams {
    fn default() -> Self {
        DramConfig::default().resolve()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackageSpec {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub chiplets: Vec<ChipletSpec>,
    /// Row-major fixed dataflow of each chiplet.
    pub dataflow_map: Vec<Dataflow>,
    pub nop: NoPParams,
    pub dram: DramParams,
}

impl Default for PackageSpec {
    /// 2x2 mesh, column 0 output-stationary, column 1 weight-stationary.
    fn default() -> Self {
        PackageConfig::default()
            .resolve()
            .expect("default package config is valid")
    }
}

impl PackageSpec {
    /// A package where every chiplet shares `chip`.
    pub fn uniform(
        rows: usize,
        cols: usize,
        chip: ChipletSpec,
        dataflow_map: Vec<Dataflow>,
        nop: NoPParams,
        dram: DramParams,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!("mesh {rows}x{cols} has no chiplets")));
        }
        if dataflow_map.len() != rows * cols {
            return Err(Error::config(format!(
                "dataflow_map has {} entries, mesh has {}",
                dataflow_map.len(),
                rows * cols
            )));
        }
        let p = Self {
            rows,
            cols,
            chiplets: vec![chip; rows * cols],
            dataflow_map,
            nop,
            dram,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default constants with every chiplet running `df`.
    pub fn homogeneous(rows: usize, cols: usize, df: Dataflow) -> Result<Self> {
        Self::uniform(
            rows,
            cols,
            ChipletSpec::default(),
            vec![df; rows * cols],
            NoPParams::default(),
            DramParams::default(),
        )
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("nop.hop_lat", self.nop.hop_lat_s),
            ("nop.e_bit", self.nop.e_bit_j),
            ("nop.bw", self.nop.bw_bytes_s),
            ("dram.lat", self.dram.lat_s),
            ("dram.e_bit", self.dram.e_bit_j),
            ("dram.bw", self.dram.bw_bytes_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for c in &self.chiplets {
            if c.pe_count == 0 || c.buffer_bytes == 0 || c.freq_hz.is_nan() || c.freq_hz <= 0.0 {
                return Err(Error::config(
                    "chiplet pe_count, buffer and frequency must be positive",
                ));
            }
            if !(c.e_mac >= 0.0 && c.e_buf_byte >= 0.0) {
                return Err(Error::config("chiplet energies must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, c: Coord) -> Result<()> {
        if c.row < self.rows && c.col < self.cols {
            Ok(())
        } else {
            Err(Error::Coord {
                row: c.row,
                col: c.col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    fn index(&self, c: Coord) -> usize {
        c.row * self.cols + c.col
    }

    /// All coordinates in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Coord::new(r, c)))
    }

    pub fn chiplet(&self, c: Coord) -> Result<&ChipletSpec> {
        self.check(c)?;
        Ok(&self.chiplets[self.index(c)])
    }

    pub fn dataflow_at(&self, c: Coord) -> Result<Dataflow> {
        self.check(c)?;
        Ok(self.dataflow_map[self.index(c)])
    }

    /// Memory-side environment of the chiplet at `c`.
    pub fn memory_env(&self, c: Coord) -> Result<MemoryEnv> {
        Ok(MemoryEnv {
            dram: self.dram,
            nop: self.nop,
            access_hops: memory_access_hops(c, self)?,
        })
    }
}

/// XY-routing hop count between two chiplets.
pub fn hop_count(a: Coord, b: Coord, p: &PackageSpec) -> Result<u64> {
    p.check(a)?;
    p.check(b)?;
    Ok((a.row.abs_diff(b.row) + a.col.abs_diff(b.col)) as u64)
}

/// Hops to the nearest memory-channel column (the leftmost or rightmost).
pub fn memory_access_hops(c: Coord, p: &PackageSpec) -> Result<u64> {
    p.check(c)?;
    Ok(c.col.min(p.cols - 1 - c.col) as u64)
}

/// `(latency_s, energy_j)` of moving `bytes` across `hops` NoP links. The
/// transfer is limited by a single link's bandwidth; energy is per bit,
/// independent of distance.
pub fn nop_transfer(bytes: u64, hops: u64, nop: &NoPParams) -> (f64, f64) {
    let latency = hops as f64 * nop.hop_lat_s + bytes as f64 / nop.bw_bytes_s;
    let energy = (bytes * 8) as f64 * nop.e_bit_j;
    (latency, energy)
}

/// `(latency_s, energy_j)` of a DRAM access from a chiplet `access_hops`
/// away from its memory channel.
pub fn dram_transfer(bytes: u64, access_hops: u64, p: &PackageSpec) -> (f64, f64) {
    let latency =
        p.dram.lat_s + bytes as f64 / p.dram.bw_bytes_s + access_hops as f64 * p.nop.hop_lat_s;
    let mut energy = (bytes * 8) as f64 * p.dram.e_bit_j;
    if access_hops > 0 {
        energy += (bytes * 8) as f64 * p.nop.e_bit_j;
    }
    (latency, energy)
}

// ---------------------------------------------------------------------------
// Config file schema (engineering units).

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoPConfig {
    pub hop_lat_ns: f64,
    pub e_pj_per_bit: f64,
    pub bw_gb_s: f64,
}

impl Default for NoPConfig {
    fn default() -> Self {
        Self {
            hop_lat_ns: 35.0,
            e_pj_per_bit: 2.04,
            bw_gb_s: 100.0,
        }
    }
}

impl NoPConfig {
    pub fn resolve(&self) -> NoPParams {
        NoPParams {
            hop_lat_s: self.hop_lat_ns / 1e9,
            e_bit_j: self.e_pj_per_bit / 1e12,
            bw_bytes_s: self.bw_gb_s * 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramConfig {
    pub lat_ns: f64,
    pub e_pj_per_bit: f64,
    pub bw_gb_s: f64,
}

impl Default for DramConfig {
    fn default() -> Self {
        Self {
            lat_ns: 200.0,
            e_pj_per_bit: 14.8,
            bw_gb_s: 64.0,
        }
    }
}

impl DramConfig {
    pub fn resolve(&self) -> DramParams {
        DramParams {
            lat_s: self.lat_ns / 1e9,
            e_bit_j: self.e_pj_per_bit / 1e12,
            bw_bytes_s: self.bw_gb_s * 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipletConfig {
    pub pe_count: u64,
    pub freq_mhz: f64,
    /// Binary megabytes.
    pub buffer_mb: f64,
    pub e_mac_pj: f64,
    pub e_buf_pj_per_byte: f64,
}

impl Default for ChipletConfig {
    fn default() -> Self {
        Self {
            pe_count: 256,
            freq_mhz: 500.0,
            buffer_mb: 10.0,
            e_mac_pj: 1.0,
            e_buf_pj_per_byte: 1.2,
        }
    }
}

impl ChipletConfig {
    pub fn resolve(&self) -> ChipletSpec {
        ChipletSpec {
            pe_count: self.pe_count,
            freq_hz: self.freq_mhz * 1e6,
            buffer_bytes: (self.buffer_mb * (1u64 << 20) as f64).round() as u64,
            e_mac: self.e_mac_pj / 1e12,
            e_buf_byte: self.e_buf_pj_per_byte / 1e12,
        }
    }
}

/// Package description as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackageConfig {
    pub rows: usize,
    pub cols: usize,
    pub nop: NoPConfig,
    pub dram: DramConfig,
    pub chiplet: ChipletConfig,
    /// `rows` lists of `cols` dataflow names. When omitted, even columns run
    /// os and odd columns ws.
    pub dataflow_map: Option<Vec<Vec<Dataflow>>>,
}

impl Default for PackageConfig {
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 2,
            nop: NoPConfig::default(),
            dram: DramConfig::default(),
            chiplet: ChipletConfig::default(),
            dataflow_map: None,
        }
    }
}

impl PackageConfig {
    /// The dataflow map after defaulting.
    pub fn resolved_dataflow_map(&self) -> Vec<Vec<Dataflow>> {
        match &self.dataflow_map {
            Some(map) => map.clone(),
            None => (0..self.rows)
                .map(|_| (0..self.cols).map(|c| Dataflow::ALL[c % 2]).collect())
                .collect(),
        }
    }

    pub fn resolve(&self) -> Result<PackageSpec> {
        let map = self.resolved_dataflow_map();
        if map.len() != self.rows || map.iter().any(|row| row.len() != self.cols) {
            return Err(Error::config(format!(
                "dataflow_map must be {} rows of {} entries",
                self.rows, self.cols
            )));
        }
        PackageSpec::uniform(
            self.rows,
            self.cols,
            self.chiplet.resolve(),
            map.into_iter().flatten().collect(),
            self.nop.resolve(),
            self.dram.resolve(),
        )
    }
}
