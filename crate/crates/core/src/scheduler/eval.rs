// SPDX-License-Identifier: Apache-2.0

use super::tree::validate_schedule;
use super::{CostReport, Schedule, ScheduleTree, StageLeaf, StageReport, TransferReport};
use crate::cost::{layer_cost, LayerCost};
use crate::error::Result;
use crate::package::{hop_count, nop_transfer, PackageSpec};
use crate::workload::{activation_bytes_at_cut, ModelGraph};

/// Steady-state initiation interval and single-inference latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub interval: f64,
    pub e2e: f64,
}

impl Timing {
    pub fn stage(latency: f64) -> Self {
        Self {
            interval: latency,
            e2e: latency,
        }
    }
}

/// Pipeline law with double-buffered transfers. `inbound[i]` is the latency
/// of the activation transfer feeding `stages[i + 1]`.
pub fn pipeline_timing(stages: &[Timing], inbound: &[f64]) -> Timing {
    debug_assert_eq!(inbound.len() + 1, stages.len());
    let mut interval = stages[0].interval;
    for (st, &t) in stages[1..].iter().zip(inbound) {
        interval = interval.max(st.interval).max(t);
    }
    let mut e2e = 0.0;
    for st in stages {
        e2e += st.e2e;
    }
    for &t in inbound {
        e2e += t;
    }
    Timing { interval, e2e }
}

fn sequential_timing(children: &[Timing]) -> Timing {
    let mut e2e = 0.0;
    for c in children {
        e2e += c.e2e;
    }
    Timing::stage(e2e)
}

/// `(latency, energy)` of layers run back to back on one chiplet.
pub(super) fn stage_totals<'a>(costs: impl IntoIterator<Item = &'a LayerCost>) -> (f64, f64) {
    let mut latency = 0.0;
    let mut energy = 0.0;
    for c in costs {
        latency += c.latency_s;
        energy += c.e_total_j;
    }
    (latency, energy)
}

pub(super) fn total_energy(
    stages: impl IntoIterator<Item = f64>,
    transfers: impl IntoIterator<Item = f64>,
) -> f64 {
    let mut e = 0.0;
    for s in stages {
        e += s;
    }
    for t in transfers {
        e += t;
    }
    e
}

/// `(throughput, edp, efficiency)`.
pub(super) fn metrics(batch: u64, timing: Timing, energy: f64) -> (f64, f64, f64) {
    let edp = energy * timing.e2e;
    (batch as f64 / timing.interval, edp, 1.0 / edp)
}

struct Ctx<'a> {
    g: &'a ModelGraph,
    p: &'a PackageSpec,
    stages: Vec<StageReport>,
    transfers: Vec<TransferReport>,
}

impl Ctx<'_> {
    fn leaf(&mut self, leaf: &StageLeaf) -> Result<Timing> {
        let chip = self.p.chiplet(leaf.chiplet)?;
        let env = self.p.memory_env(leaf.chiplet)?;
        let layer_costs: Vec<LayerCost> = self.g.layers[leaf.layers.clone()]
            .iter()
            .map(|l| layer_cost(l, chip, leaf.dataflow, &env))
            .collect();
        let (latency_s, energy_j) = stage_totals(&layer_costs);
        self.stages.push(StageReport {
            layers: [leaf.layers.start, leaf.layers.end],
            chiplet: leaf.chiplet,
            dataflow: leaf.dataflow,
            latency_s,
            energy_j,
            edp: energy_j * latency_s,
            layer_costs,
        });
        Ok(Timing::stage(latency_s))
    }

    fn node(&mut self, node: &ScheduleTree) -> Result<Timing> {
        match node {
            ScheduleTree::Leaf(leaf) => self.leaf(leaf),
            ScheduleTree::Sequential { children } => {
                let timings = children
                    .iter()
                    .map(|c| self.node(c))
                    .collect::<Result<Vec<_>>>()?;
                Ok(sequential_timing(&timings))
            }
            ScheduleTree::Pipelined { children } => {
                let mut timings = Vec::with_capacity(children.len());
                let mut inbound = Vec::with_capacity(children.len().saturating_sub(1));
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        inbound.push(self.transfer(&children[i - 1], child)?);
                    }
                    timings.push(self.node(child)?);
                }
                Ok(pipeline_timing(&timings, &inbound))
            }
        }
    }

    fn transfer(&mut self, from: &ScheduleTree, to: &ScheduleTree) -> Result<f64> {
        let src = *from.leaves().last().expect("validated non-empty");
        let dst = to.leaves()[0];
        let cut = dst.layers.start;
        let bytes = activation_bytes_at_cut(self.g, cut)?;
        let hops = hop_count(src.chiplet, dst.chiplet, self.p)?;
        let (latency_s, energy_j) = nop_transfer(bytes, hops, &self.p.nop);
        self.transfers.push(TransferReport {
            cut,
            from: src.chiplet,
            to: dst.chiplet,
            bytes,
            hops,
            latency_s,
            energy_j,
        });
        Ok(latency_s)
    }
}

/// Prices a schedule. Layers inside a leaf run back to back; pipeline stages
/// overlap across inferences, with activation transfers double-buffered.
pub fn evaluate_schedule(s: &Schedule, g: &ModelGraph, p: &PackageSpec) -> Result<CostReport> {
    validate_schedule(s, g, p)?;
    let mut ctx = Ctx {
        g,
        p,
        stages: Vec::new(),
        transfers: Vec::new(),
    };
    let timing = ctx.node(&s.tree)?;
    let energy_j = total_energy(
        ctx.stages.iter().map(|st| st.energy_j),
        ctx.transfers.iter().map(|t| t.energy_j),
    );
    let (throughput_out_s, edp, efficiency) = metrics(g.batch, timing, energy_j);
    Ok(CostReport {
        batch: g.batch,
        e2e_latency_s: timing.e2e,
        interval_s: timing.interval,
        throughput_out_s,
        energy_j,
        edp,
        efficiency,
        stages: ctx.stages,
        transfers: ctx.transfers,
    })
}
