// SPDX-License-Identifier: Apache-2.0

//! Two-stage scheduling: per-layer dataflow-aware chiplet assignment, then
//! inter-chiplet pipeline search over a composition-tree schedule space.
//!
//! A schedule is a tree whose leaves bind contiguous layer ranges to a
//! chiplet. Inner nodes compose their children either sequentially (one
//! after another, nothing overlaps) or as a pipeline (children on disjoint
//! chiplets, successive inferences overlap and activations cross the NoP).

mod assign;
mod eval;
mod search;
mod tree;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{Dataflow, LayerCost};
use crate::package::Coord;

pub(crate) use assign::nearest_chiplet;
pub use assign::{
    balanced_cut, balanced_cut_on, enumerate_cuts, stage1_assign, Assignment, Partition,
};
pub use eval::{evaluate_schedule, pipeline_timing, Timing};
pub use search::MAX_STAGE_HOPS;
pub use search::{brute_force_oracle, co_schedule, search, search_within, CoScheduleEntry};
pub use tree::validate_schedule;

/// A contiguous layer range `[start, end)` bound to one chiplet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "tree::LeafRepr", from = "tree::LeafRepr")]
pub struct StageLeaf {
    pub layers: Range<usize>,
    pub chiplet: Coord,
    pub dataflow: Dataflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ScheduleTree {
    #[serde(rename = "leaf")]
    Leaf(StageLeaf),
    #[serde(rename = "seq")]
    Sequential { children: Vec<ScheduleTree> },
    #[serde(rename = "pipe")]
    Pipelined { children: Vec<ScheduleTree> },
}

impl ScheduleTree {
    pub fn leaf(layers: Range<usize>, chiplet: Coord, dataflow: Dataflow) -> Self {
        ScheduleTree::Leaf(StageLeaf {
            layers,
            chiplet,
            dataflow,
        })
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&StageLeaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a StageLeaf>) {
        match self {
            ScheduleTree::Leaf(l) => out.push(l),
            ScheduleTree::Sequential { children } | ScheduleTree::Pipelined { children } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub label: String,
    pub tree: ScheduleTree,
}

impl Schedule {
    /// A flat pipeline, or a single leaf when there is only one stage.
    pub fn pipeline(label: impl Into<String>, stages: Vec<StageLeaf>) -> Self {
        let tree = if stages.len() == 1 {
            ScheduleTree::Leaf(stages.into_iter().next().unwrap())
        } else {
            ScheduleTree::Pipelined {
                children: stages.into_iter().map(ScheduleTree::Leaf).collect(),
            }
        };
        Self {
            label: label.into(),
            tree,
        }
    }

    /// Stage dataflows joined by `-`, e.g. `os-ws`.
    pub fn label_for(dataflows: impl IntoIterator<Item = Dataflow>) -> String {
        dataflows
            .into_iter()
            .map(Dataflow::short_name)
            .collect::<Vec<_>>()
            .join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Throughput,
    Efficiency,
}

impl Objective {
    /// Larger is better.
    pub fn value(self, r: &CostReport) -> f64 {
        match self {
            Objective::Throughput => r.throughput_out_s,
            Objective::Efficiency => r.efficiency,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Throughput => "throughput",
            Objective::Efficiency => "efficiency",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "throughput" => Ok(Objective::Throughput),
            "efficiency" => Ok(Objective::Efficiency),
            other => Err(format!(
                "unknown objective `{other}` (expected throughput or efficiency)"
            )),
        }
    }
}

/// Aggregate cost of one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub layers: [usize; 2],
    pub chiplet: Coord,
    pub dataflow: Dataflow,
    pub latency_s: f64,
    pub energy_j: f64,
    pub edp: f64,
    pub layer_costs: Vec<LayerCost>,
}

/// Activation hand-off between consecutive pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Index of the first layer of the receiving stage.
    pub cut: usize,
    pub from: Coord,
    pub to: Coord,
    pub bytes: u64,
    pub hops: u64,
    pub latency_s: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub batch: u64,
    pub e2e_latency_s: f64,
    pub interval_s: f64,
    pub throughput_out_s: f64,
    pub energy_j: f64,
    pub edp: f64,
    pub efficiency: f64,
    pub stages: Vec<StageReport>,
    pub transfers: Vec<TransferReport>,
}
