// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NormalizedReport, ScheduleOption};
use crate::error::{Error, Result};
use crate::workload::ModelGraph;

pub const CSV_HEADER: [&str; 10] = [
    "workload",
    "option",
    "latency_s",
    "interval_s",
    "throughput_out_s",
    "energy_j",
    "edp",
    "efficiency",
    "throughput_norm",
    "efficiency_norm",
];

fn raw(v: f64) -> String {
    format!("{v:.8e}")
}

fn norm(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.9}")).unwrap_or_default()
}

fn internal(e: impl std::fmt::Display) -> Error {
    Error::Internal(e.to_string())
}

/// One line per row; failed rows keep their labels and leave numbers blank.
pub fn to_csv_string(r: &NormalizedReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(internal)?;
    for row in &r.rows {
        let mut rec = vec![row.workload.clone(), row.option.to_string()];
        match &row.report {
            Some(c) => rec.extend(
                [
                    c.e2e_latency_s,
                    c.interval_s,
                    c.throughput_out_s,
                    c.energy_j,
                    c.edp,
                    c.efficiency,
                ]
                .map(raw),
            ),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        rec.push(norm(row.throughput_norm));
        rec.push(norm(row.efficiency_norm));
        w.write_record(&rec).map_err(internal)?;
    }
    String::from_utf8(w.into_inner().map_err(internal)?).map_err(internal)
}

pub fn to_json_string<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(internal)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes whichever of the JSON and CSV outputs have a path.
pub fn emit_reports(r: &NormalizedReport, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    if let Some(path) = json {
        write_file(path, &to_json_string(r)?)?;
    }
    if let Some(path) = csv {
        write_file(path, &to_csv_string(r)?)?;
    }
    Ok(())
}

pub fn dump_workload(g: &ModelGraph, path: &Path) -> Result<()> {
    write_file(path, &to_json_string(g)?)
}

/// Ratio of `after` to `before` for one (workload, option) present in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub workload: String,
    pub option: ScheduleOption,
    pub throughput_ratio: Option<f64>,
    pub efficiency_ratio: Option<f64>,
    pub energy_ratio: Option<f64>,
}

pub fn compare(before: &NormalizedReport, after: &NormalizedReport) -> Vec<CompareRow> {
    let div = |a: f64, b: f64| Some(a / b).filter(|r| r.is_finite());
    after
        .rows
        .iter()
        .filter_map(|b| {
            let a = before.row(&b.workload, b.option)?;
            let (ra, rb) = (a.report.as_ref(), b.report.as_ref());
            let pick = |f: fn(&crate::scheduler::CostReport) -> f64| match (ra, rb) {
                (Some(x), Some(y)) => div(f(y), f(x)),
                _ => None,
            };
            Some(CompareRow {
                workload: b.workload.clone(),
                option: b.option,
                throughput_ratio: pick(|c| c.throughput_out_s),
                efficiency_ratio: pick(|c| c.efficiency),
                energy_ratio: pick(|c| c.energy_j),
            })
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "workload",
        "option",
        "throughput_ratio",
        "efficiency_ratio",
        "energy_ratio",
    ])
    .map_err(internal)?;
    for r in rows {
        w.write_record([
            r.workload.clone(),
            r.option.to_string(),
            norm(r.throughput_ratio),
            norm(r.efficiency_ratio),
            norm(r.energy_ratio),
        ])
        .map_err(internal)?;
    }
    String::from_utf8(w.into_inner().map_err(internal)?).map_err(internal)
}

#[cfg(test)]
mod tests {
    use super::super::{builtin_workload, run_scenario, ScenarioConfig};
    use super::*;

    fn report() -> NormalizedReport {
        let cfg = ScenarioConfig {
            workloads: vec![builtin_workload(
                "gpt2-block",
                Some(&serde_json::json!({"seq": 32, "d_model": 64, "n_heads": 2})),
            )
            .unwrap()],
            ..Default::default()
        };
        run_scenario(&cfg).unwrap()
    }

    #[test]
    fn csv_layout() {
        let text = to_csv_string(&report()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "workload,option,latency_s,interval_s,throughput_out_s,energy_j,edp,efficiency,throughput_norm,efficiency_norm"
        );
        let os: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(os[..2], ["gpt2-block", "os"]);
        assert_eq!(os[8..], ["1.000000000", "1.000000000"]);
        for cell in &os[2..8] {
            cell.parse::<f64>().unwrap();
        }
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = report();
        let back: NormalizedReport = serde_json::from_str(&to_json_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn compare_against_self_is_unity() {
        let r = report();
        let rows = compare(&r, &r);
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.throughput_ratio, Some(1.0));
            assert_eq!(row.efficiency_ratio, Some(1.0));
        }
        assert!(compare_csv(&rows)
            .unwrap()
            .starts_with("workload,option,throughput_ratio"));
    }
}
