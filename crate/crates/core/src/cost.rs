// SPDX-License-Identifier: Apache-2.0

//! Closed-form intra-chiplet cost model for one GEMM under an
//! output-stationary or weight-stationary dataflow.
//!
//! The PE array is abstracted as `pe_count` MAC units arranged as a square
//! tile. Off-chip traffic follows a buffer-aware re-read model:
//!
//! * When `A`, `W` and `O` fit in the global buffer together, each input is
//!   read once.
//! * Otherwise the output is blocked into `Bm x Bn` tiles with
//!   `Bm = Bn = max(1, floor(sqrt(buffer / (2 k elem_bytes))))`; `A` is then
//!   re-read `ceil(n / Bn)` times and `W` `ceil(m / Bm)` times.
//! * Output-stationary writes each output once. Weight-stationary spills
//!   partial sums once per `Tk`-deep reduction slice, so every output is
//!   written `ceil(k / Tk)` times and read back one time less.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::package::{DramParams, NoPParams};
use crate::workload::{GemmShape, Layer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "os")]
    OutputStationary,
    #[serde(rename = "ws")]
    WeightStationary,
}

impl Dataflow {
    pub const ALL: [Dataflow; 2] = [Dataflow::OutputStationary, Dataflow::WeightStationary];

    pub fn short_name(self) -> &'static str {
        match self {
            Dataflow::OutputStationary => "os",
            Dataflow::WeightStationary => "ws",
        }
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Dataflow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "os" => Ok(Dataflow::OutputStationary),
            "ws" => Ok(Dataflow::WeightStationary),
            other => Err(format!("unknown dataflow `{other}` (expected os or ws)")),
        }
    }
}

/// One accelerator die. Energies are in joules, frequency in hertz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipletSpec {
    pub pe_count: u64,
    pub freq_hz: f64,
    pub buffer_bytes: u64,
    pub e_mac: f64,
    pub e_buf_byte: f64,
}

impl Default for ChipletSpec {
    fn default() -> Self {
        crate::package::ChipletConfig::default().resolve()
    }
}

/// Cost of one layer on one chiplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub cycles: u64,
    pub compute_s: f64,
    pub dram_bytes: u64,
    pub nop_bytes: u64,
    pub latency_s: f64,
    pub e_mac_j: f64,
    pub e_buf_j: f64,
    pub e_dram_j: f64,
    pub e_nop_j: f64,
    pub e_total_j: f64,
}

impl LayerCost {
    pub fn edp(&self) -> f64 {
        self.e_total_j * self.latency_s
    }
}

/// Off-chip traffic of one GEMM, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramTraffic {
    pub a_bytes: u64,
    pub w_bytes: u64,
    pub o_bytes: u64,
    pub total: u64,
}

/// The memory-side parameters a layer sees from its chiplet position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryEnv {
    pub dram: DramParams,
    pub nop: NoPParams,
    /// NoP hops between the chiplet and its nearest memory channel.
    pub access_hops: u64,
}

pub(crate) fn isqrt(x: u64) -> u64 {
    if x < 2 {
        return x;
    }
    let mut r = (x as f64).sqrt() as u64;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

/// Compute cycles of a GEMM on `pe_count` MAC units.
pub fn gemm_cycles(s: &GemmShape, pe_count: u64, df: Dataflow) -> u64 {
    match df {
        Dataflow::OutputStationary => (s.m * s.n).div_ceil(pe_count) * s.k,
        Dataflow::WeightStationary => (s.k * s.n).div_ceil(pe_count) * s.m,
    }
}

/// Weight-stationary reduction tile depth `Tk`.
fn ws_reduction_tile(n: u64, pe_count: u64) -> u64 {
    let tn = n.min(isqrt(pe_count)).max(1);
    (pe_count / tn).max(1)
}

pub fn gemm_dram_traffic(
    s: &GemmShape,
    pe_count: u64,
    buffer_bytes: u64,
    df: Dataflow,
) -> DramTraffic {
    let GemmShape {
        m,
        k,
        n,
        elem_bytes,
    } = *s;
    let footprint = (m * k + k * n + m * n) * elem_bytes;
    let (a_reads, w_reads) = if footprint <= buffer_bytes {
        (1, 1)
    } else {
        let block = isqrt(buffer_bytes / (2 * k * elem_bytes)).max(1);
        (n.div_ceil(block), m.div_ceil(block))
    };
    let o_elems = match df {
        Dataflow::OutputStationary => m * n,
        Dataflow::WeightStationary => {
            let spills = k.div_ceil(ws_reduction_tile(n, pe_count));
            m * n * spills + m * n * (spills - 1)
        }
    };
    let a_bytes = m * k * a_reads * elem_bytes;
    let w_bytes = k * n * w_reads * elem_bytes;
    let o_bytes = o_elems * elem_bytes;
    DramTraffic {
        a_bytes,
        w_bytes,
        o_bytes,
        total: a_bytes + w_bytes + o_bytes,
    }
}

/// Overlapped compute/memory latency. A layer with no off-chip traffic never
/// issues a DRAM access and pays no access latency.
pub fn roofline_latency(compute_s: f64, dram_bytes: u64, env: &MemoryEnv) -> f64 {
    if dram_bytes == 0 {
        return compute_s;
    }
    let memory_s = env.dram.lat_s
        + dram_bytes as f64 / env.dram.bw_bytes_s
        + env.access_hops as f64 * env.nop.hop_lat_s;
    compute_s.max(memory_s)
}

pub fn layer_cost(layer: &Layer, chip: &ChipletSpec, df: Dataflow, env: &MemoryEnv) -> LayerCost {
    let s = &layer.shape;
    let cycles = gemm_cycles(s, chip.pe_count, df);
    let compute_s = cycles as f64 / chip.freq_hz;
    let dram_bytes = gemm_dram_traffic(s, chip.pe_count, chip.buffer_bytes, df).total;
    // DRAM traffic of an interior chiplet crosses the NoP once, whatever the
    // hop count.
    let nop_bytes = dram_bytes * env.access_hops.min(1);
    let latency_s = roofline_latency(compute_s, dram_bytes, env);

    let e_mac_j = s.macs() as f64 * chip.e_mac;
    let e_buf_j = (dram_bytes + nop_bytes) as f64 * chip.e_buf_byte;
    let e_dram_j = (dram_bytes * 8) as f64 * env.dram.e_bit_j;
    let e_nop_j = (nop_bytes * 8) as f64 * env.nop.e_bit_j;
    LayerCost {
        cycles,
        compute_s,
        dram_bytes,
        nop_bytes,
        latency_s,
        e_mac_j,
        e_buf_j,
        e_dram_j,
        e_nop_j,
        e_total_j: e_mac_j + e_buf_j + e_dram_j + e_nop_j,
    }
}

/// The dataflow with the lower energy-delay product for `layer`;
/// output-stationary on ties.
pub fn favored_dataflow(
    layer: &Layer,
    chip: &ChipletSpec,
    env: &MemoryEnv,
) -> (Dataflow, LayerCost) {
    let os = layer_cost(layer, chip, Dataflow::OutputStationary, env);
    let ws = layer_cost(layer, chip, Dataflow::WeightStationary, env);
    if ws.edp() < os.edp() {
        (Dataflow::WeightStationary, ws)
    } else {
        (Dataflow::OutputStationary, os)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::LayerKind;
    use proptest::prelude::*;

    const HUGE: u64 = u64::MAX / 4;

    fn layer(m: u64, k: u64, n: u64) -> Layer {
        Layer {
            id: 0,
            name: "l".into(),
            shape: GemmShape::new(m, k, n, 1),
            kind: LayerKind::Gemm,
        }
    }

    fn env(access_hops: u64) -> MemoryEnv {
        MemoryEnv {
            dram: DramParams::default(),
            nop: NoPParams::default(),
            access_hops,
        }
    }

    /// Steps a loop nest PE-by-PE: each step every busy PE performs one MAC.
    fn loop_nest_steps(m: u64, k: u64, n: u64, pes: u64, df: Dataflow) -> (u64, u64) {
        let (stationary, streamed): (Vec<(u64, u64)>, u64) = match df {
            Dataflow::OutputStationary => (
                (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect(),
                k,
            ),
            Dataflow::WeightStationary => (
                (0..k).flat_map(|r| (0..n).map(move |j| (r, j))).collect(),
                m,
            ),
        };
        let (mut steps, mut macs) = (0, 0);
        for group in stationary.chunks(pes as usize) {
            for _ in 0..streamed {
                steps += 1;
                macs += group.len() as u64;
            }
        }
        (steps, macs)
    }

    #[test]
    fn cycles_examples() {
        let unit = GemmShape::new(1, 1, 1, 1);
        for df in Dataflow::ALL {
            assert_eq!(gemm_cycles(&unit, 1, df), 1);
        }
        assert_eq!(
            gemm_cycles(&GemmShape::new(4, 8, 4, 1), 4, Dataflow::OutputStationary),
            32
        );
        assert_eq!(
            gemm_cycles(&GemmShape::new(2, 4, 2, 1), 4, Dataflow::WeightStationary),
            4
        );
    }

    #[test]
    fn cycles_match_loop_nest_on_small_grid() {
        for m in 1..=8 {
            for k in 1..=8 {
                for n in 1..=8 {
                    for p in 1..=8 {
                        for df in Dataflow::ALL {
                            let (steps, macs) = loop_nest_steps(m, k, n, p, df);
                            assert_eq!(macs, m * k * n);
                            assert_eq!(gemm_cycles(&GemmShape::new(m, k, n, 1), p, df), steps);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn traffic_examples() {
        let os = gemm_dram_traffic(
            &GemmShape::new(4, 8, 4, 1),
            4,
            HUGE,
            Dataflow::OutputStationary,
        );
        assert_eq!(
            os,
            DramTraffic {
                a_bytes: 32,
                w_bytes: 32,
                o_bytes: 16,
                total: 80
            }
        );
        let ws = gemm_dram_traffic(
            &GemmShape::new(2, 4, 2, 1),
            4,
            HUGE,
            Dataflow::WeightStationary,
        );
        assert_eq!(
            ws,
            DramTraffic {
                a_bytes: 8,
                w_bytes: 8,
                o_bytes: 12,
                total: 28
            }
        );
        let unit = gemm_dram_traffic(
            &GemmShape::new(1, 1, 1, 1),
            1,
            HUGE,
            Dataflow::OutputStationary,
        );
        assert_eq!(
            (unit.a_bytes, unit.w_bytes, unit.o_bytes, unit.total),
            (1, 1, 1, 3)
        );
    }

    #[test]
    fn traffic_rereads_when_buffer_overflows() {
        // footprint = 64*16 + 16*64 + 64*64 = 6144 B > 1024 B buffer.
        // block = isqrt(1024 / 32) = 5; rA = ceil(64/5) = 13, rW = 13.
        let t = gemm_dram_traffic(
            &GemmShape::new(64, 16, 64, 1),
            16,
            1024,
            Dataflow::OutputStationary,
        );
        assert_eq!(t.a_bytes, 64 * 16 * 13);
        assert_eq!(t.w_bytes, 16 * 64 * 13);
        assert_eq!(t.o_bytes, 64 * 64);
    }

    #[test]
    fn isqrt_exact() {
        for x in 0..10_000u64 {
            let r = isqrt(x);
            assert!(r * r <= x && (r + 1) * (r + 1) > x, "{x}");
        }
        assert_eq!(isqrt(u64::MAX / 4), 2_147_483_647);
    }

    #[test]
    fn unit_layer_cost() {
        let chip = ChipletSpec {
            pe_count: 1,
            buffer_bytes: HUGE,
            ..Default::default()
        };
        let c = layer_cost(&layer(1, 1, 1), &chip, Dataflow::OutputStationary, &env(0));
        assert_eq!(c.cycles, 1);
        assert_eq!(c.dram_bytes, 3);
        assert_eq!(c.nop_bytes, 0);
        assert!((c.e_dram_j - 355.2e-12).abs() <= 1e-12 * 355.2e-12);
        assert_eq!(c.e_total_j, c.e_mac_j + c.e_buf_j + c.e_dram_j + c.e_nop_j);
        // 200 ns + 3 B / 64 GB/s dominates a 2 ns compute step.
        assert_eq!(c.latency_s, 200e-9 + 3.0 / 64e9);
    }

    #[test]
    fn zero_traffic_latency_is_compute() {
        assert_eq!(roofline_latency(1.5e-9, 0, &env(3)), 1.5e-9);
    }

    #[test]
    fn ffn_up_compute_time() {
        let c = layer_cost(
            &layer(1024, 768, 3072),
            &ChipletSpec::default(),
            Dataflow::OutputStationary,
            &env(0),
        );
        assert_eq!(c.cycles, 9_437_184);
        assert!((c.compute_s - 0.018874368).abs() < 1e-15);
        assert_eq!(c.latency_s, c.compute_s);
    }

    #[test]
    fn interior_chiplet_pays_nop_once() {
        // Memory-bound GEMV, so the extra hop latency shows.
        let l = layer(1, 2048, 1000);
        let chip = ChipletSpec::default();
        let one = layer_cost(&l, &chip, Dataflow::OutputStationary, &env(1));
        let three = layer_cost(&l, &chip, Dataflow::OutputStationary, &env(3));
        assert_eq!(one.nop_bytes, one.dram_bytes);
        assert_eq!(one.e_total_j, three.e_total_j);
        assert!(three.latency_s > one.latency_s);
    }

    #[test]
    fn favored_ties_to_os() {
        let (df, _) = favored_dataflow(&layer(1, 1, 1), &ChipletSpec::default(), &env(0));
        assert_eq!(df, Dataflow::OutputStationary);
    }

    #[test]
    fn favored_picks_lower_edp() {
        let chip = ChipletSpec::default();
        for (m, k, n) in [
            (4096, 8, 4096),
            (64, 65536, 64),
            (1, 4096, 16),
            (1, 2048, 1000),
        ] {
            let l = layer(m, k, n);
            let os = layer_cost(&l, &chip, Dataflow::OutputStationary, &env(0));
            let ws = layer_cost(&l, &chip, Dataflow::WeightStationary, &env(0));
            let (df, cost) = favored_dataflow(&l, &chip, &env(0));
            let expect = if ws.edp() < os.edp() {
                Dataflow::WeightStationary
            } else {
                Dataflow::OutputStationary
            };
            assert_eq!(df, expect, "({m},{k},{n})");
            assert_eq!(cost.edp(), os.edp().min(ws.edp()));
        }
        // Deep reduction: ws spills partial sums on every slice.
        assert_eq!(
            favored_dataflow(&layer(64, 65536, 64), &chip, &env(0)).0,
            Dataflow::OutputStationary
        );
        // A single output row leaves most of the os array idle.
        assert_eq!(
            favored_dataflow(&layer(1, 4096, 16), &chip, &env(0)).0,
            Dataflow::WeightStationary
        );
    }

    fn arb_df() -> impl Strategy<Value = Dataflow> {
        prop_oneof![
            Just(Dataflow::OutputStationary),
            Just(Dataflow::WeightStationary)
        ]
    }

    proptest! {
        #[test]
        fn energy_is_additive(
            m in 1u64..5000, k in 1u64..5000, n in 1u64..5000,
            pe in 1u64..1024, buf in 1u64..(64 << 20), hops in 0u64..4, df in arb_df(),
        ) {
            let chip = ChipletSpec { pe_count: pe, buffer_bytes: buf, ..Default::default() };
            let c = layer_cost(&layer(m, k, n), &chip, df, &env(hops));
            prop_assert_eq!(c.e_total_j, c.e_mac_j + c.e_buf_j + c.e_dram_j + c.e_nop_j);
            prop_assert!(c.latency_s >= c.compute_s);
            for v in [c.compute_s, c.latency_s, c.e_mac_j, c.e_buf_j, c.e_dram_j, c.e_nop_j] {
                prop_assert!(v >= 0.0 && v.is_finite());
            }
        }

        #[test]
        fn cycles_non_increasing_in_pes(
            m in 1u64..2000, k in 1u64..2000, n in 1u64..2000, pe in 1u64..2048, df in arb_df(),
        ) {
            let s = GemmShape::new(m, k, n, 1);
            prop_assert!(gemm_cycles(&s, pe + 1, df) <= gemm_cycles(&s, pe, df));
            prop_assert!(gemm_cycles(&s, pe, df) * pe >= s.macs());
        }

        #[test]
        fn traffic_covers_compulsory(
            m in 1u64..3000, k in 1u64..3000, n in 1u64..3000, eb in 1u64..4,
            pe in 1u64..1024, buf in 1u64..(32 << 20), df in arb_df(),
        ) {
            let s = GemmShape::new(m, k, n, eb);
            let t = gemm_dram_traffic(&s, pe, buf, df);
            prop_assert_eq!(t.total, t.a_bytes + t.w_bytes + t.o_bytes);
            prop_assert!(t.total >= (m * k + k * n + m * n) * eb);
        }

        #[test]
        fn favored_is_argmin(
            m in 1u64..3000, k in 1u64..3000, n in 1u64..3000, pe in 1u64..1024,
        ) {
            let chip = ChipletSpec { pe_count: pe, ..Default::default() };
            let l = layer(m, k, n);
            let (df, cost) = favored_dataflow(&l, &chip, &env(0));
            let os = layer_cost(&l, &chip, Dataflow::OutputStationary, &env(0));
            let ws = layer_cost(&l, &chip, Dataflow::WeightStationary, &env(0));
            prop_assert_eq!(cost, layer_cost(&l, &chip, df, &env(0)));
            prop_assert!(cost.edp() <= os.edp() && cost.edp() <= ws.edp());
        }
    }
}
