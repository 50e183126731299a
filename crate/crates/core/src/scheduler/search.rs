// SPDX-License-Identifier: Apache-2.0

//! Pipeline search over partitions and chiplet placements.
//!
//! [`search`] prices candidates from a precomputed per-chiplet layer-cost
//! table and prunes placements whose consecutive stages are more than two
//! hops apart. [`brute_force_oracle`] builds and evaluates every legal
//! schedule tree without that pruning.

use std::cmp::Ordering;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use super::assign::{cuts_to_ranges, partitions_with};
use super::eval::{metrics, pipeline_timing, stage_totals, total_energy, Timing};
use super::{evaluate_schedule, CostReport, Objective, Schedule, StageLeaf};
use crate::cost::{layer_cost, Dataflow, LayerCost};
use crate::error::{Error, Result};
use crate::package::{hop_count, memory_access_hops, nop_transfer, Coord, PackageSpec};
use crate::workload::{activation_bytes_at_cut, ModelGraph};

/// Consecutive pipeline stages may be at most this many hops apart.
pub const MAX_STAGE_HOPS: u64 = 2;

const ORACLE_MAX_LAYERS: usize = 12;
const ORACLE_MAX_CHIPLETS: usize = 4;

/// A ranked candidate: larger `value` wins, then the smaller key.
#[derive(Debug, Clone)]
struct Ranked {
    value: f64,
    label: String,
    chiplets: Vec<Coord>,
    cuts: Vec<usize>,
}

impl Ranked {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.label
            .cmp(&other.label)
            .then_with(|| self.chiplets.cmp(&other.chiplets))
            .then_with(|| self.cuts.cmp(&other.cuts))
    }

    fn better(a: Self, b: Self) -> Self {
        match a.value.partial_cmp(&b.value) {
            Some(Ordering::Greater) => a,
            Some(Ordering::Less) => b,
            _ => {
                if a.key_cmp(&b) != Ordering::Greater {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn into_schedule(self, p: &PackageSpec, n: usize) -> Schedule {
        let stages = cuts_to_ranges(n, &self.cuts)
            .into_iter()
            .zip(&self.chiplets)
            .map(|(layers, &chiplet)| StageLeaf {
                layers,
                chiplet,
                dataflow: p.dataflow_at(chiplet).expect("candidate chiplet in bounds"),
            })
            .collect();
        Schedule::pipeline(self.label, stages)
    }
}

/// Per-chiplet layer costs with precomputed stage sums.
struct CostTable {
    /// `ranges[chiplet][start][len - 1]` = `(latency, energy)` of layers
    /// `start..start + len`, summed in layer order.
    ranges: Vec<Vec<Vec<(f64, f64)>>>,
}

impl CostTable {
    fn build(g: &ModelGraph, p: &PackageSpec, chiplets: &[Coord]) -> Result<Self> {
        let n = g.len();
        let mut ranges = Vec::with_capacity(chiplets.len());
        for &c in chiplets {
            let chip = p.chiplet(c)?;
            let df = p.dataflow_at(c)?;
            let env = p.memory_env(c)?;
            let costs: Vec<LayerCost> = g
                .layers
                .iter()
                .map(|l| layer_cost(l, chip, df, &env))
                .collect();
            let per_start = (0..n)
                .map(|start| {
                    (start + 1..=n)
                        .map(|end| stage_totals(&costs[start..end]))
                        .collect()
                })
                .collect();
            ranges.push(per_start);
        }
        Ok(Self { ranges })
    }

    fn stage(&self, chiplet: usize, start: usize, end: usize) -> (f64, f64) {
        self.ranges[chiplet][start][end - start - 1]
    }
}

/// Legal chiplet sequences of length `stages`, in lexicographic order of
/// indices into `allowed` (which is itself sorted).
fn placements(
    p: &PackageSpec,
    allowed: &[Coord],
    stages: usize,
    starts: &[bool],
    max_hops: Option<u64>,
) -> Vec<Vec<usize>> {
    fn rec(
        p: &PackageSpec,
        allowed: &[Coord],
        stages: usize,
        max_hops: Option<u64>,
        cur: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == stages {
            out.push(cur.clone());
            return;
        }
        let prev = *cur.last().expect("seeded with a start chiplet");
        for i in 0..allowed.len() {
            if used[i] {
                continue;
            }
            if let Some(limit) = max_hops {
                if hop_count(allowed[prev], allowed[i], p).unwrap_or(u64::MAX) > limit {
                    continue;
                }
            }
            used[i] = true;
            cur.push(i);
            rec(p, allowed, stages, max_hops, cur, used, out);
            cur.pop();
            used[i] = false;
        }
    }
    let mut out = Vec::new();
    for (i, _) in starts.iter().enumerate().filter(|(_, &ok)| ok) {
        let mut used = vec![false; allowed.len()];
        used[i] = true;
        rec(
            p,
            allowed,
            stages,
            max_hops,
            &mut vec![i],
            &mut used,
            &mut out,
        );
    }
    out
}

/// Best pipeline over the whole package.
pub fn search(
    g: &ModelGraph,
    p: &PackageSpec,
    objective: Objective,
    max_stages: usize,
) -> Result<(Schedule, CostReport)> {
    let all: Vec<Coord> = p.coords().collect();
    search_within(g, p, objective, max_stages, &all)
}

/// Best pipeline using only the `allowed` chiplets. The first stage is
/// placed on an allowed chiplet nearest to a memory channel, which for any
/// block touching the package edge means one with a direct DRAM link.
pub fn search_within(
    g: &ModelGraph,
    p: &PackageSpec,
    objective: Objective,
    max_stages: usize,
    allowed: &[Coord],
) -> Result<(Schedule, CostReport)> {
    if g.is_empty() {
        return Err(Error::config(format!(
            "workload `{}` has no layers",
            g.name
        )));
    }
    if max_stages == 0 {
        return Err(Error::config("max_stages must be >= 1"));
    }
    let mut allowed = allowed.to_vec();
    allowed.sort();
    allowed.dedup();
    if allowed.is_empty() {
        return Err(Error::config("no chiplets available to schedule on"));
    }
    for &c in &allowed {
        p.check(c)?;
    }

    let access: Vec<u64> = allowed
        .iter()
        .map(|&c| memory_access_hops(c, p))
        .collect::<Result<_>>()?;
    let nearest = *access.iter().min().expect("non-empty");
    let starts: Vec<bool> = access.iter().map(|&a| a == nearest).collect();

    let n = g.len();
    let table = CostTable::build(g, p, &allowed)?;
    let dataflows: Vec<Dataflow> = allowed
        .iter()
        .map(|&c| p.dataflow_at(c))
        .collect::<Result<_>>()?;
    let cut_bytes: Vec<u64> = (1..n)
        .map(|c| activation_bytes_at_cut(g, c))
        .collect::<Result<_>>()?;

    let max_stages = max_stages.min(n).min(allowed.len());
    // placements_by_stages[j - 1]: legal chiplet sequences for j stages.
    let placements_by_stages: Vec<Vec<Vec<usize>>> = (1..=max_stages)
        .map(|j| placements(p, &allowed, j, &starts, Some(MAX_STAGE_HOPS)))
        .collect();
    let mut partitions = Vec::new();
    for stages in 1..=max_stages {
        partitions_with(n, stages, &mut |cuts| partitions.push(cuts.to_vec()));
    }
    debug!(
        "{}: {} partitions, placements per stage count {:?}",
        g.name,
        partitions.len(),
        placements_by_stages
            .iter()
            .map(Vec::len)
            .collect::<Vec<_>>()
    );

    let best = partitions
        .par_iter()
        .filter_map(|cuts| {
            let stages = cuts.len() + 1;
            let ranges = cuts_to_ranges(n, cuts);
            placements_by_stages[stages - 1]
                .iter()
                .map(|seq| {
                    let mut timings = Vec::with_capacity(stages);
                    let mut energies = Vec::with_capacity(stages);
                    for (r, &ci) in ranges.iter().zip(seq) {
                        let (lat, e) = table.stage(ci, r.start, r.end);
                        timings.push(Timing::stage(lat));
                        energies.push(e);
                    }
                    let mut inbound = Vec::with_capacity(stages - 1);
                    let mut xfer_e = Vec::with_capacity(stages - 1);
                    for (w, &cut) in seq.windows(2).zip(cuts) {
                        let hops = hop_count(allowed[w[0]], allowed[w[1]], p).expect("in bounds");
                        let (lat, e) = nop_transfer(cut_bytes[cut - 1], hops, &p.nop);
                        inbound.push(lat);
                        xfer_e.push(e);
                    }
                    let timing = if stages == 1 {
                        timings[0]
                    } else {
                        pipeline_timing(&timings, &inbound)
                    };
                    let energy = total_energy(energies, xfer_e);
                    let (throughput, _, efficiency) = metrics(g.batch, timing, energy);
                    Ranked {
                        value: match objective {
                            Objective::Throughput => throughput,
                            Objective::Efficiency => efficiency,
                        },
                        label: Schedule::label_for(seq.iter().map(|&i| dataflows[i])),
                        chiplets: seq.iter().map(|&i| allowed[i]).collect(),
                        cuts: cuts.clone(),
                    }
                })
                .reduce(Ranked::better)
        })
        .reduce_with(Ranked::better)
        .ok_or_else(|| Error::Internal(format!("no schedule candidates for `{}`", g.name)))?;

    let schedule = best.into_schedule(p, n);
    let report = evaluate_schedule(&schedule, g, p)?;
    Ok((schedule, report))
}

/// Exhaustive optimum: every partition into at most `max_stages` stages on
/// every sequence of distinct chiplets whose first stage has a direct memory
/// link. Each candidate is built as a tree and priced by
/// [`evaluate_schedule`].
pub fn brute_force_oracle(
    g: &ModelGraph,
    p: &PackageSpec,
    objective: Objective,
    max_stages: usize,
) -> Result<(Schedule, CostReport)> {
    if g.len() > ORACLE_MAX_LAYERS || p.len() > ORACLE_MAX_CHIPLETS {
        return Err(Error::SizeGuard(format!(
            "{} layers on {} chiplets (limit {ORACLE_MAX_LAYERS} layers, {ORACLE_MAX_CHIPLETS} chiplets)",
            g.len(),
            p.len()
        )));
    }
    let n = g.len();
    let coords: Vec<Coord> = p.coords().collect();
    let mut best: Option<(Ranked, Schedule, CostReport)> = None;

    for part in super::enumerate_cuts(n, max_stages) {
        let stages = part.len();
        // Every injective sequence, as nested counting over chiplet indices.
        let total = coords.len().pow(stages as u32);
        for code in 0..total {
            let mut seq = Vec::with_capacity(stages);
            let mut rest = code;
            for _ in 0..stages {
                seq.push(coords[rest % coords.len()]);
                rest /= coords.len();
            }
            let distinct = seq.iter().enumerate().all(|(i, c)| !seq[..i].contains(c));
            if !distinct || memory_access_hops(seq[0], p)? != 0 {
                continue;
            }
            let leaves = part
                .iter()
                .zip(&seq)
                .map(|(r, &c)| {
                    Ok(StageLeaf {
                        layers: r.clone(),
                        chiplet: c,
                        dataflow: p.dataflow_at(c)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = Schedule::label_for(leaves.iter().map(|l| l.dataflow));
            let schedule = Schedule::pipeline(label.clone(), leaves);
            let report = evaluate_schedule(&schedule, g, p)?;
            let ranked = Ranked {
                value: objective.value(&report),
                label,
                chiplets: seq,
                cuts: part[1..].iter().map(|r| r.start).collect(),
            };
            let replace = match &best {
                None => true,
                Some((b, _, _)) => {
                    ranked.value > b.value
                        || (ranked.value == b.value && ranked.key_cmp(b) == Ordering::Less)
                }
            };
            if replace {
                best = Some((ranked, schedule, report));
            }
        }
    }
    best.map(|(_, s, r)| (s, r))
        .ok_or_else(|| Error::Internal(format!("no legal schedule for `{}`", g.name)))
}

/// One model's share of a co-scheduled package.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoScheduleEntry {
    pub model: String,
    pub chiplets: Vec<Coord>,
    pub schedule: Schedule,
    pub report: CostReport,
}

/// Compositions of `total` into `parts` positive integers, lexicographic.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if parts == 0 || parts > total {
        return out;
    }
    partitions_with(total, parts, &mut |cuts| {
        out.push(
            cuts_to_ranges(total, cuts)
                .into_iter()
                .map(|r| r.len())
                .collect(),
        );
    });
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Splits the package into disjoint contiguous column blocks, one per model,
/// and schedules each model inside its block. Returns the split maximizing
/// the worst per-model objective.
pub fn co_schedule(
    models: &[ModelGraph],
    p: &PackageSpec,
    objective: Objective,
    max_stages: usize,
) -> Result<Vec<CoScheduleEntry>> {
    if models.is_empty() {
        return Err(Error::config("co-scheduling needs at least one model"));
    }
    if models.len() > p.len() {
        return Err(Error::config(format!(
            "{} models but only {} chiplets",
            models.len(),
            p.len()
        )));
    }
    if models.len() > p.cols {
        return Err(Error::config(format!(
            "{} models cannot each get a column block of a {}-column package",
            models.len(),
            p.cols
        )));
    }

    // Results depend only on (model, column block); cache them.
    let mut cache: std::collections::BTreeMap<(usize, usize, usize), (Schedule, CostReport)> =
        Default::default();
    let mut best: Option<(f64, Vec<CoScheduleEntry>)> = None;

    for widths in compositions(p.cols, models.len()) {
        let mut blocks = Vec::with_capacity(widths.len());
        let mut col = 0;
        for w in &widths {
            blocks.push(col..col + w);
            col += w;
        }
        for perm in permutations(models.len()) {
            // Model `i` takes block `perm[i]`.
            let mut entries = Vec::with_capacity(models.len());
            let mut worst = f64::INFINITY;
            for (i, g) in models.iter().enumerate() {
                let cols = blocks[perm[i]].clone();
                let chiplets: Vec<Coord> = p.coords().filter(|c| cols.contains(&c.col)).collect();
                let key = (i, cols.start, cols.end);
                if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(key) {
                    slot.insert(search_within(g, p, objective, max_stages, &chiplets)?);
                }
                let (schedule, report) = cache[&key].clone();
                worst = worst.min(objective.value(&report));
                entries.push(CoScheduleEntry {
                    model: g.name.clone(),
                    chiplets,
                    schedule,
                    report,
                });
            }
            if best.as_ref().is_none_or(|(b, _)| worst > *b) {
                best = Some((worst, entries));
            }
        }
    }
    Ok(best.expect("at least one composition").1)
}
