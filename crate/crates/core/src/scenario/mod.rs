// SPDX-License-Identifier: Apache-2.0

//! Scenario runs: every configured workload under every schedule option,
//! normalized against a baseline, plus report output.

mod config;
mod report;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

pub use config::{
    builtin_workload, load_config, load_workload_file, read_json, Baseline, ScenarioConfig,
    ScheduleOption, Workload, WorkloadSource,
};
pub use report::{
    compare, compare_csv, dump_workload, emit_reports, to_csv_string, to_json_string, CompareRow,
    CSV_HEADER,
};

use crate::cost::{ChipletSpec, Dataflow};
use crate::error::{Error, Result};
use crate::package::{hop_count, memory_access_hops, PackageConfig, PackageSpec};
use crate::scheduler::{
    balanced_cut_on, evaluate_schedule, nearest_chiplet, search, stage1_assign, CostReport,
    Objective, Schedule, StageLeaf, MAX_STAGE_HOPS,
};
use crate::workload::ModelGraph;

/// Every constant a run depends on, resolved to SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    pub nop_hop_lat_s: f64,
    pub nop_e_bit_j: f64,
    pub nop_bw_bytes_s: f64,
    pub dram_lat_s: f64,
    pub dram_e_bit_j: f64,
    pub dram_bw_bytes_s: f64,
    pub pe_count: u64,
    pub freq_hz: f64,
    pub buffer_bytes: u64,
    pub e_mac_j: f64,
    pub e_buf_byte_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEcho {
    pub name: String,
    #[serde(flatten)]
    pub source: WorkloadSource,
    pub batch: u64,
    pub elem_bytes: u64,
    pub layers: usize,
    pub total_macs: u64,
}

/// Report header: the inputs of the run after defaulting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub package_source: String,
    pub package: PackageConfig,
    pub resolved: ResolvedConstants,
    pub workloads: Vec<WorkloadEcho>,
    pub options: Vec<ScheduleOption>,
    pub objective: Objective,
    pub max_stages: usize,
    pub max_stage_hops: u64,
    pub baseline: Baseline,
    /// Chiplet count the monolithic baseline is scaled by.
    pub monolithic_scale: Option<u64>,
    pub seed: u64,
}

impl ConfigEcho {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let p = &cfg.package;
        let chip = p.chiplets[0];
        ConfigEcho {
            package_source: cfg.package_source.clone(),
            package: cfg.package_config.clone(),
            resolved: ResolvedConstants {
                nop_hop_lat_s: p.nop.hop_lat_s,
                nop_e_bit_j: p.nop.e_bit_j,
                nop_bw_bytes_s: p.nop.bw_bytes_s,
                dram_lat_s: p.dram.lat_s,
                dram_e_bit_j: p.dram.e_bit_j,
                dram_bw_bytes_s: p.dram.bw_bytes_s,
                pe_count: chip.pe_count,
                freq_hz: chip.freq_hz,
                buffer_bytes: chip.buffer_bytes,
                e_mac_j: chip.e_mac,
                e_buf_byte_j: chip.e_buf_byte,
            },
            workloads: cfg
                .workloads
                .iter()
                .map(|w| WorkloadEcho {
                    name: w.graph.name.clone(),
                    source: w.source.clone(),
                    batch: w.graph.batch,
                    elem_bytes: w.graph.elem_bytes,
                    layers: w.graph.len(),
                    total_macs: w.graph.total_macs(),
                })
                .collect(),
            options: cfg.options.clone(),
            objective: cfg.objective,
            max_stages: cfg.max_stages,
            max_stage_hops: MAX_STAGE_HOPS,
            baseline: cfg.baseline,
            monolithic_scale: (cfg.baseline == Baseline::Monolithic).then_some(p.len() as u64),
            seed: cfg.seed,
        }
    }
}

/// One (workload, option) cell. Exactly one of `report` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub workload: String,
    pub option: ScheduleOption,
    pub schedule: Option<Schedule>,
    pub report: Option<CostReport>,
    pub throughput_norm: Option<f64>,
    pub efficiency_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub workload: String,
    pub schedule: Option<Schedule>,
    pub report: Option<CostReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedReport {
    pub config: ConfigEcho,
    pub baselines: Vec<BaselineRow>,
    pub rows: Vec<ScenarioRow>,
    /// Modeling assumptions and notable outcomes a reader should see.
    pub flags: Vec<String>,
}

impl NormalizedReport {
    pub fn row(&self, workload: &str, option: ScheduleOption) -> Option<&ScenarioRow> {
        self.rows
            .iter()
            .find(|r| r.workload == workload && r.option == option)
    }
}

fn single(p: &PackageSpec, df: Dataflow, g: &ModelGraph) -> Result<Schedule> {
    let chiplet = nearest_chiplet(p, df)
        .ok_or_else(|| Error::config(format!("package has no {df} chiplet")))?;
    Ok(Schedule::pipeline(
        df.short_name(),
        vec![StageLeaf {
            layers: 0..g.len(),
            chiplet,
            dataflow: df,
        }],
    ))
}

/// Two-stage pipeline: the first stage on the `first` chiplet nearest to
/// memory, the second on the closest distinct `second` chiplet, cut for
/// balanced stage latency.
fn pair(p: &PackageSpec, first: Dataflow, second: Dataflow, g: &ModelGraph) -> Result<Schedule> {
    if g.len() < 2 {
        return Err(Error::config(format!(
            "a two-stage pipeline needs at least 2 layers, `{}` has {}",
            g.name,
            g.len()
        )));
    }
    let a = nearest_chiplet(p, first)
        .ok_or_else(|| Error::config(format!("package has no {first} chiplet")))?;
    let b = p
        .coords()
        .filter(|&c| c != a && p.dataflow_at(c).ok() == Some(second))
        .min_by_key(|&c| {
            (
                hop_count(a, c, p).unwrap_or(u64::MAX),
                memory_access_hops(c, p).unwrap_or(u64::MAX),
                c,
            )
        })
        .ok_or_else(|| Error::config(format!("package has no second {second} chiplet")))?;
    let cut = balanced_cut_on(g, p, &[a, b])?;
    let stages = cut
        .into_iter()
        .zip([(a, first), (b, second)])
        .map(|(layers, (chiplet, dataflow))| StageLeaf {
            layers,
            chiplet,
            dataflow,
        })
        .collect();
    Ok(Schedule::pipeline(
        Schedule::label_for([first, second]),
        stages,
    ))
}

/// Evaluates one option. Search results keep their own label, e.g. `os-ws-ws`.
pub fn run_option(
    opt: ScheduleOption,
    g: &ModelGraph,
    p: &PackageSpec,
    objective: Objective,
    max_stages: usize,
) -> Result<(Schedule, CostReport)> {
    use Dataflow::{OutputStationary as Os, WeightStationary as Ws};
    let schedule = match opt {
        ScheduleOption::Os => single(p, Os, g)?,
        ScheduleOption::Ws => single(p, Ws, g)?,
        ScheduleOption::OsOs => pair(p, Os, Os, g)?,
        ScheduleOption::OsWs => pair(p, Os, Ws, g)?,
        ScheduleOption::Search => return search(g, p, objective, max_stages),
    };
    let report = evaluate_schedule(&schedule, g, p)?;
    Ok((schedule, report))
}

/// Single os chiplet carrying the PE count and buffer of the whole package.
pub fn monolithic_package(p: &PackageSpec) -> Result<PackageSpec> {
    let n = p.len() as u64;
    let base = p.chiplets[0];
    let chip = ChipletSpec {
        pe_count: base.pe_count * n,
        buffer_bytes: base.buffer_bytes * n,
        ..base
    };
    PackageSpec::uniform(1, 1, chip, vec![Dataflow::OutputStationary], p.nop, p.dram)
}

fn baseline_for(cfg: &ScenarioConfig, g: &ModelGraph) -> Result<(Schedule, CostReport)> {
    match cfg.baseline {
        Baseline::Os => run_option(ScheduleOption::Os, g, &cfg.package, cfg.objective, 1),
        Baseline::Monolithic => {
            let mono = monolithic_package(&cfg.package)?;
            let s = single(&mono, Dataflow::OutputStationary, g)?;
            let r = evaluate_schedule(&s, g, &mono)?;
            Ok((s, r))
        }
    }
}

fn workload_flags(w: &Workload, p: &PackageSpec, flags: &mut Vec<String>) {
    match &w.source {
        WorkloadSource::Gpt2Block { params } => flags.push(format!(
            "{}: model size and sequence length are assumed (d_model={}, n_heads={}, seq={}, ffn_mult={})",
            w.graph.name, params.d_model, params.n_heads, params.seq, params.ffn_mult
        )),
        WorkloadSource::Resnet50 { .. } => flags.push(format!(
            "{}: projection-shortcut convs run as chain layers; pooling, batchnorm and residual adds are not modeled",
            w.graph.name
        )),
        WorkloadSource::File { .. } => {}
    }
    if let Ok(asg) = stage1_assign(&w.graph, p) {
        let fell_back: Vec<&str> = asg
            .iter()
            .zip(&w.graph.layers)
            .filter(|(a, _)| a.fallback)
            .map(|(_, l)| l.name.as_str())
            .collect();
        if !fell_back.is_empty() {
            flags.push(format!(
                "{}: favored dataflow missing from package for {}",
                w.graph.name,
                fell_back.join(", ")
            ));
        }
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    let r = a / b;
    r.is_finite().then_some(r)
}

/// Runs the whole scenario matrix. Failures of individual options are
/// recorded in their row and do not stop the run.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<NormalizedReport> {
    let mut rows = Vec::new();
    let mut baselines = Vec::new();
    let mut flags = vec![
        "compute energies use modeled e_mac and e_buf constants; absolute energies are indicative"
            .to_string(),
    ];

    for w in &cfg.workloads {
        let g = &w.graph;
        info!(
            "workload {} ({} layers, {} MACs)",
            g.name,
            g.len(),
            g.total_macs()
        );
        workload_flags(w, &cfg.package, &mut flags);

        let base = baseline_for(cfg, g);
        let base_report = base.as_ref().ok().map(|(_, r)| r.clone());
        baselines.push(match base {
            Ok((s, r)) => BaselineRow {
                workload: g.name.clone(),
                schedule: Some(s),
                report: Some(r),
                error: None,
            },
            Err(e) => {
                warn!("{}: baseline failed: {e}", g.name);
                BaselineRow {
                    workload: g.name.clone(),
                    schedule: None,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        });

        for &opt in &cfg.options {
            let row = match run_option(opt, g, &cfg.package, cfg.objective, cfg.max_stages) {
                Ok((s, r)) => {
                    debug!(
                        "{} {opt}: {} interval {:.6e} s",
                        g.name, s.label, r.interval_s
                    );
                    let (tn, en) = match &base_report {
                        Some(b) => (
                            ratio(r.throughput_out_s, b.throughput_out_s),
                            ratio(r.efficiency, b.efficiency),
                        ),
                        None => (None, None),
                    };
                    ScenarioRow {
                        workload: g.name.clone(),
                        option: opt,
                        schedule: Some(s),
                        report: Some(r),
                        throughput_norm: tn,
                        efficiency_norm: en,
                        error: None,
                    }
                }
                Err(e) => {
                    warn!("{} {opt}: {e}", g.name);
                    ScenarioRow {
                        workload: g.name.clone(),
                        option: opt,
                        schedule: None,
                        report: None,
                        throughput_norm: None,
                        efficiency_norm: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            rows.push(row);
        }

        let eff = |o| {
            rows.iter()
                .find(|r: &&ScenarioRow| r.workload == g.name && r.option == o)
                .and_then(|r| r.efficiency_norm)
        };
        if let (Some(ow), Some(oo)) = (eff(ScheduleOption::OsWs), eff(ScheduleOption::OsOs)) {
            if ow < oo {
                flags.push(format!(
                    "{}: os-ws efficiency_norm {ow:.4} is below os-os {oo:.4}; no layer is cheaper under ws in this cost model",
                    g.name
                ));
            }
        }
    }

    Ok(NormalizedReport {
        config: ConfigEcho::new(cfg),
        baselines,
        rows,
        flags,
    })
}
