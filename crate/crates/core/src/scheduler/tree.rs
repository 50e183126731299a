// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Schedule, ScheduleTree, StageLeaf};
use crate::cost::Dataflow;
use crate::error::{Error, Result};
use crate::package::{Coord, PackageSpec};
use crate::workload::ModelGraph;

/// Wire form of a leaf: `{"layers":[s,e],"chiplet":[r,c],"dataflow":"os"}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct LeafRepr {
    layers: [usize; 2],
    chiplet: [usize; 2],
    dataflow: Dataflow,
}

impl From<StageLeaf> for LeafRepr {
    fn from(l: StageLeaf) -> Self {
        Self {
            layers: [l.layers.start, l.layers.end],
            chiplet: [l.chiplet.row, l.chiplet.col],
            dataflow: l.dataflow,
        }
    }
}

impl From<LeafRepr> for StageLeaf {
    fn from(r: LeafRepr) -> Self {
        Self {
            layers: r.layers[0]..r.layers[1],
            chiplet: Coord::new(r.chiplet[0], r.chiplet[1]),
            dataflow: r.dataflow,
        }
    }
}

/// Checks every structural rule of `s` against `g` and `p`. The error names
/// the first violated rule.
pub fn validate_schedule(s: &Schedule, g: &ModelGraph, p: &PackageSpec) -> Result<()> {
    if s.label.is_empty() {
        return Err(Error::schedule("label", "schedule label is empty"));
    }
    check_node(&s.tree, p)?;

    let mut next = 0;
    for leaf in s.tree.leaves() {
        let r = &leaf.layers;
        if r.start >= r.end {
            return Err(Error::schedule(
                "partition",
                format!("leaf range [{}, {}) is empty", r.start, r.end),
            ));
        }
        if r.start != next {
            return Err(Error::schedule(
                "partition",
                format!(
                    "leaf range [{}, {}) should start at layer {next}",
                    r.start, r.end
                ),
            ));
        }
        next = r.end;
    }
    if next != g.len() {
        return Err(Error::schedule(
            "partition",
            format!("leaves cover layers [0, {next}) of {}", g.len()),
        ));
    }
    Ok(())
}

fn check_node(node: &ScheduleTree, p: &PackageSpec) -> Result<()> {
    match node {
        ScheduleTree::Leaf(leaf) => {
            p.check(leaf.chiplet)
                .map_err(|e| Error::schedule("chiplet-bounds", e.to_string()))?;
            let actual = p.dataflow_at(leaf.chiplet)?;
            if actual != leaf.dataflow {
                return Err(Error::schedule(
                    "dataflow",
                    format!(
                        "leaf on chiplet {} requests {} but the chiplet runs {actual}",
                        leaf.chiplet, leaf.dataflow
                    ),
                ));
            }
            Ok(())
        }
        ScheduleTree::Sequential { children } | ScheduleTree::Pipelined { children } => {
            if children.is_empty() {
                return Err(Error::schedule(
                    "empty-composite",
                    "composite node has no children",
                ));
            }
            for c in children {
                check_node(c, p)?;
            }
            if matches!(node, ScheduleTree::Pipelined { .. }) {
                let mut used = BTreeSet::new();
                for c in children {
                    let mine: BTreeSet<Coord> = c.leaves().iter().map(|l| l.chiplet).collect();
                    if let Some(shared) = mine.intersection(&used).next() {
                        return Err(Error::schedule(
                            "pipeline-disjoint",
                            format!("chiplet {shared} is used by two stages of one pipeline"),
                        ));
                    }
                    used.extend(mine);
                }
            }
            Ok(())
        }
    }
}
