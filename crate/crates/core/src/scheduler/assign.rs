// SPDX-License-Identifier: Apache-2.0

use std::ops::Range;

use serde::Serialize;

use super::eval::stage_totals;
use crate::cost::{favored_dataflow, layer_cost, Dataflow, LayerCost, MemoryEnv};
use crate::error::{Error, Result};
use crate::package::{memory_access_hops, Coord, PackageSpec};
use crate::workload::ModelGraph;

/// Contiguous, in-order layer ranges covering a whole chain.
pub type Partition = Vec<Range<usize>>;

/// Stage-one placement of a single layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub chiplet: Coord,
    pub dataflow: Dataflow,
    pub cost: LayerCost,
    /// The favored dataflow is absent from the package; the layer runs on
    /// the other one.
    pub fallback: bool,
}

/// The chiplet running `df` closest to a memory channel, row-major first.
pub(crate) fn nearest_chiplet(p: &PackageSpec, df: Dataflow) -> Option<Coord> {
    p.coords()
        .filter(|&c| p.dataflow_at(c).ok() == Some(df))
        .min_by_key(|&c| (memory_access_hops(c, p).unwrap_or(u64::MAX), c))
}

/// Places every layer on a chiplet running its favored dataflow.
pub fn stage1_assign(g: &ModelGraph, p: &PackageSpec) -> Result<Vec<Assignment>> {
    let reference = MemoryEnv {
        dram: p.dram,
        nop: p.nop,
        access_hops: 0,
    };
    g.layers
        .iter()
        .map(|layer| {
            let chip = p.chiplet(Coord::new(0, 0))?;
            let (favored, _) = favored_dataflow(layer, chip, &reference);
            let (chiplet, fallback) = match nearest_chiplet(p, favored) {
                Some(c) => (c, false),
                None => {
                    let other = Dataflow::ALL.into_iter().find(|&d| d != favored).unwrap();
                    let c = nearest_chiplet(p, other)
                        .ok_or_else(|| Error::Internal("package has no chiplets".into()))?;
                    (c, true)
                }
            };
            let dataflow = p.dataflow_at(chiplet)?;
            let cost = layer_cost(
                layer,
                p.chiplet(chiplet)?,
                dataflow,
                &p.memory_env(chiplet)?,
            );
            Ok(Assignment {
                chiplet,
                dataflow,
                cost,
                fallback,
            })
        })
        .collect()
}

/// All ways to split `[0, n)` into `1..=max_stages` contiguous non-empty
/// ranges, ordered by stage count and then by cut positions.
pub fn enumerate_cuts(n_layers: usize, max_stages: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    if n_layers == 0 {
        return out;
    }
    for stages in 1..=max_stages.min(n_layers) {
        partitions_with(n_layers, stages, &mut |cuts| {
            out.push(cuts_to_ranges(n_layers, cuts))
        });
    }
    out
}

/// Calls `f` with every ascending choice of `stages - 1` cut points in
/// `1..n`, lexicographically.
pub(super) fn partitions_with(n: usize, stages: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, left: usize, from: usize, cuts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if left == 0 {
            f(cuts);
            return;
        }
        // Leave room for the remaining cuts.
        for c in from..=(n - left) {
            cuts.push(c);
            rec(n, left - 1, c + 1, cuts, f);
            cuts.pop();
        }
    }
    if stages == 0 || stages > n {
        return;
    }
    rec(n, stages - 1, 1, &mut Vec::with_capacity(stages), f);
}

pub(super) fn cuts_to_ranges(n: usize, cuts: &[usize]) -> Partition {
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(cuts);
    bounds.push(n);
    bounds.windows(2).map(|w| w[0]..w[1]).collect()
}

/// Exactly-`k`-stage partition minimizing the slowest stage, then the spread
/// of per-stage EDP, then the earliest cuts. `cost(stage, layer)` prices a
/// layer on the chiplet of `stage`.
fn balanced_partition(
    n: usize,
    k: usize,
    cost: &dyn Fn(usize, usize) -> LayerCost,
) -> Result<Partition> {
    if k == 0 || k > n {
        return Err(Error::config(format!(
            "cannot cut {n} layers into {k} stages"
        )));
    }
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    partitions_with(n, k, &mut |cuts| {
        let ranges = cuts_to_ranges(n, cuts);
        let mut worst = f64::NEG_INFINITY;
        let (mut edp_lo, mut edp_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (stage, r) in ranges.iter().enumerate() {
            let costs: Vec<LayerCost> = r.clone().map(|l| cost(stage, l)).collect();
            let (lat, energy) = stage_totals(&costs);
            worst = worst.max(lat);
            let edp = lat * energy;
            edp_lo = edp_lo.min(edp);
            edp_hi = edp_hi.max(edp);
        }
        let spread = edp_hi - edp_lo;
        let better = match &best {
            None => true,
            Some((w, s, _)) => worst < *w || (worst == *w && spread < *s),
        };
        if better {
            best = Some((worst, spread, cuts.to_vec()));
        }
    });
    let (_, _, cuts) = best.expect("k <= n yields at least one partition");
    Ok(cuts_to_ranges(n, &cuts))
}

/// Balanced `k`-stage cut using each layer's stage-one placement cost.
pub fn balanced_cut(g: &ModelGraph, p: &PackageSpec, k: usize) -> Result<Partition> {
    let assigned = stage1_assign(g, p)?;
    balanced_partition(g.len(), k, &|_, layer| assigned[layer].cost)
}

/// Balanced cut where stage `i` runs on `chiplets[i]` with that chiplet's
/// dataflow.
pub fn balanced_cut_on(g: &ModelGraph, p: &PackageSpec, chiplets: &[Coord]) -> Result<Partition> {
    let mut per_stage = Vec::with_capacity(chiplets.len());
    for &c in chiplets {
        let chip = p.chiplet(c)?;
        let df = p.dataflow_at(c)?;
        let env = p.memory_env(c)?;
        per_stage.push(
            g.layers
                .iter()
                .map(|l| layer_cost(l, chip, df, &env))
                .collect::<Vec<_>>(),
        );
    }
    balanced_partition(g.len(), chiplets.len(), &|stage, layer| {
        per_stage[stage][layer]
    })
}
