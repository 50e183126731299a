// SPDX-License-Identifier: Apache-2.0

//! The `chiplet-sched` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::error::{Error, Result};
use crate::scenario::{
    builtin_workload, compare, compare_csv, dump_workload, emit_reports, load_config, read_json,
    run_scenario, to_csv_string, to_json_string, Baseline, NormalizedReport, ScenarioConfig,
};
use crate::scheduler::{co_schedule, search, Objective};
use crate::ModelGraph;

/// Cost model and pipeline scheduler for heterogeneous chiplet packages.
///
/// Set CHIPLET_SCHED_LOG (e.g. `info`, `debug`) for log output on stderr.
#[derive(Parser)]
#[command(name = "chiplet-sched", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate every workload under every configured schedule option.
    Run(RunArgs),
    /// Search the best pipeline for each workload.
    Search(SearchArgs),
    /// Write a built-in workload as a JSON workload file.
    DumpWorkload(DumpArgs),
    /// Ratio table between two JSON reports (AFTER / BEFORE).
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON. Defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    max_stages: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// `os` or `monolithic-4x`.
    #[arg(long)]
    baseline: Option<Baseline>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Split the package into column blocks, one per workload.
    #[arg(long)]
    co_schedule: bool,
}

#[derive(Args)]
struct DumpArgs {
    /// `gpt2-block` or `resnet50`.
    name: String,
    /// Generator parameters as a JSON object, e.g. '{"seq": 512}'.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    before: PathBuf,
    after: PathBuf,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

fn scenario(c: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        // An unreadable scenario file is a configuration problem.
        Some(path) => load_config(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            e => e,
        })?,
        None => ScenarioConfig::default(),
    };
    if let Some(o) = c.objective {
        cfg.objective = o;
    }
    if let Some(m) = c.max_stages {
        if m == 0 {
            return Err(Error::Config("--max-stages must be >= 1".into()));
        }
        cfg.max_stages = m;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => out.write_all(text.as_bytes()).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn run(args: RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = scenario(&args.common)?;
    if let Some(b) = args.baseline {
        cfg.baseline = b;
    }
    if args.out_json.is_some() {
        cfg.out_json = args.out_json;
    }
    if args.out_csv.is_some() {
        cfg.out_csv = args.out_csv;
    }
    let report = run_scenario(&cfg)?;
    for flag in &report.flags {
        info!("flag: {flag}");
    }
    emit_reports(&report, cfg.out_json.as_deref(), cfg.out_csv.as_deref())?;
    if cfg.out_json.is_none() && cfg.out_csv.is_none() {
        write_or_print(None, &to_csv_string(&report)?, out)?;
    }
    Ok(())
}

fn run_search(args: SearchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = scenario(&args.common)?;
    let path = args.out_json.or(cfg.out_json.clone());
    let text = if args.co_schedule {
        let models: Vec<ModelGraph> = cfg.workloads.iter().map(|w| w.graph.clone()).collect();
        let entries = co_schedule(&models, &cfg.package, cfg.objective, cfg.max_stages)?;
        to_json_string(&entries)?
    } else {
        let mut results = Vec::new();
        for w in &cfg.workloads {
            let (schedule, report) = search(&w.graph, &cfg.package, cfg.objective, cfg.max_stages)?;
            info!(
                "{}: best {} ({})",
                w.graph.name, schedule.label, cfg.objective
            );
            results.push(serde_json::json!({
                "workload": w.graph.name,
                "objective": cfg.objective,
                "schedule": schedule,
                "report": report,
            }));
        }
        to_json_string(&results)?
    };
    write_or_print(path.as_deref(), &text, out)
}

fn run_dump(args: DumpArgs) -> Result<()> {
    let params = match &args.params {
        Some(text) => Some(
            serde_json::from_str(text)
                .map_err(|e| Error::Config(format!("--params is not valid JSON: {e}")))?,
        ),
        None => None,
    };
    let w = builtin_workload(&args.name, params.as_ref())?;
    dump_workload(&w.graph, &args.out)
}

fn run_compare(args: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let before: NormalizedReport = read_json(&args.before)?;
    let after: NormalizedReport = read_json(&args.after)?;
    write_or_print(
        args.out_csv.as_deref(),
        &compare_csv(&compare(&before, &after))?,
        out,
    )
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 for configuration
/// errors, 2 for runtime errors.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                1
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    let result = match cli.cmd {
        Cmd::Run(a) => run(a, out),
        Cmd::Search(a) => run_search(a, out),
        Cmd::DumpWorkload(a) => run_dump(a),
        Cmd::Compare(a) => run_compare(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ScheduleOption, CSV_HEADER};
    use serde_json::Value;

    fn cli(args: &[&str]) -> (u8, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(
            std::iter::once("chiplet-sched").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    fn write(dir: &Path, name: &str, text: &str) -> String {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    }

    fn path(dir: &Path, name: &str) -> String {
        dir.join(name).to_str().unwrap().to_string()
    }

    const SMALL: &str =
        r#"{"builtin": "gpt2-block", "params": {"seq": 64, "d_model": 128, "n_heads": 4}}"#;

    fn small_scenario(dir: &Path, name: &str, extra: &str) -> String {
        write(dir, name, &format!(r#"{{"workloads": [{SMALL}]{extra}}}"#))
    }

    #[test]
    fn run_prints_csv_by_default() {
        let (code, out, err) = cli(&["run"]);
        assert_eq!(code, 0, "{err}");
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("gpt2-block,os,"));
        assert!(lines[8].starts_with("resnet50,os-ws,"));
    }

    #[test]
    fn config_echo_matches_golden() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "empty.json", "{}");
        let json = path(dir.path(), "r.json");
        let (code, _, err) = cli(&["run", "--config", &cfg, "--out-json", &json]);
        assert_eq!(code, 0, "{err}");
        let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        let golden: Value =
            serde_json::from_str(include_str!("../tests/golden/default_config_echo.json")).unwrap();
        assert_eq!(report["config"], golden);
    }

    #[test]
    fn outputs_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_scenario(
            dir.path(),
            "s.json",
            r#", "options": ["os", "os-ws", "search"], "max_stages": 3"#,
        );
        let (json, csv) = (path(dir.path(), "r.json"), path(dir.path(), "r.csv"));
        let (code, out, err) = cli(&[
            "run",
            "--config",
            &cfg,
            "--out-json",
            &json,
            "--out-csv",
            &csv,
            "--objective",
            "efficiency",
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.is_empty());
        let r: NormalizedReport =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.config.max_stages, 3);
        assert_eq!(r.config.objective, Objective::Efficiency);
        let os = r.row("gpt2-block", ScheduleOption::Os).unwrap();
        assert_eq!(os.throughput_norm, Some(1.0));
        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn config_paths_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_scenario(dir.path(), "s.json", r#", "out_csv": "from_cfg.csv""#);
        let (code, out, err) = cli(&["run", "--config", &cfg]);
        assert_eq!(code, 0, "{err}");
        assert!(out.is_empty());
        assert!(dir.path().join("from_cfg.csv").exists());
    }

    #[test]
    fn config_errors_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let bad_opt = write(dir.path(), "a.json", r#"{"options": ["os", "foo"]}"#);
        let (code, _, err) = cli(&["run", "--config", &bad_opt]);
        assert_eq!(code, 1);
        assert!(err.contains("foo"), "{err}");

        let bad_json = write(
            dir.path(),
            "b.json",
            "{\n  \"max_stages\": 2,\n  \"seed\": x\n}",
        );
        let (code, _, err) = cli(&["run", "--config", &bad_json]);
        assert_eq!(code, 1);
        assert!(err.contains("line 3"), "{err}");

        let missing = path(dir.path(), "missing.json");
        assert_eq!(cli(&["run", "--config", &missing]).0, 1);
        assert_eq!(cli(&["run", "--baseline", "gpu"]).0, 1);
        assert_eq!(cli(&["run", "--objective", "speed"]).0, 1);
        assert_eq!(cli(&["run", "--max-stages", "0"]).0, 1);
        assert_eq!(cli(&["frobnicate"]).0, 1);

        let empty = write(dir.path(), "c.json", r#"{"workloads": []}"#);
        assert_eq!(cli(&["run", "--config", &empty]).0, 1);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = cli(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("dump-workload"));
    }

    #[test]
    fn unwritable_output_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_scenario(dir.path(), "s.json", "");
        let bad = path(dir.path(), "no/such/dir/r.csv");
        let (code, _, err) = cli(&["run", "--config", &cfg, "--out-csv", &bad]);
        assert_eq!(code, 2, "{err}");
    }

    #[test]
    fn dumped_workload_round_trips_through_run() {
        let dir = tempfile::tempdir().unwrap();
        let w = path(dir.path(), "w.json");
        let params = r#"{"seq": 64, "d_model": 128, "n_heads": 4}"#;
        let (code, _, err) = cli(&[
            "dump-workload",
            "gpt2-block",
            "--params",
            params,
            "--out",
            &w,
        ]);
        assert_eq!(code, 0, "{err}");
        let cfg = write(
            dir.path(),
            "s.json",
            &format!(r#"{{"workloads": [{{"file": "w.json"}}, {SMALL}]}}"#),
        );
        let (code, out, err) = cli(&["run", "--config", &cfg]);
        assert_eq!(code, 0, "{err}");
        let rows: Vec<&str> = out.lines().skip(1).collect();
        assert_eq!(rows.len(), 8);
        for i in 0..4 {
            assert_eq!(rows[i], rows[i + 4]);
        }

        let v = path(dir.path(), "v.json");
        assert_eq!(cli(&["dump-workload", "vgg16", "--out", &v]).0, 1);
        assert_eq!(
            cli(&["dump-workload", "resnet50", "--params", "{", "--out", &v]).0,
            1
        );
    }

    #[test]
    fn compare_reports() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (path(dir.path(), "a.json"), path(dir.path(), "b.json"));
        let cfg = small_scenario(dir.path(), "s.json", "");
        assert_eq!(cli(&["run", "--config", &cfg, "--out-json", &a]).0, 0);
        let slow = small_scenario(
            dir.path(),
            "t.json",
            r#", "package": {"nop": {"bw_gb_s": 1}}"#,
        );
        assert_eq!(cli(&["run", "--config", &slow, "--out-json", &b]).0, 0);
        let (code, out, err) = cli(&["compare", &a, &b]);
        assert_eq!(code, 0, "{err}");
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(
            lines[0],
            "workload,option,throughput_ratio,efficiency_ratio,energy_ratio"
        );
        assert!(lines[1].starts_with("gpt2-block,os,1.000000000,1.000000000"));
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn search_and_co_schedule() {
        let (code, out, err) = cli(&["search", "--max-stages", "3"]);
        assert_eq!(code, 0, "{err}");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        for entry in v.as_array().unwrap() {
            let stages = entry["report"]["stages"].as_array().unwrap().len();
            assert!((1..=3).contains(&stages));
        }

        let (code, out, err) = cli(&["search", "--co-schedule"]);
        assert_eq!(code, 0, "{err}");
        let v: Value = serde_json::from_str(&out).unwrap();
        let entries = v.as_array().unwrap();
        assert_eq!(entries.len(), 2);
        assert_ne!(entries[0]["chiplets"], entries[1]["chiplets"]);
    }

    #[test]
    fn monolithic_baseline_flag() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_scenario(dir.path(), "s.json", "");
        let json = path(dir.path(), "m.json");
        let (code, _, err) = cli(&[
            "run",
            "--config",
            &cfg,
            "--baseline",
            "monolithic-4x",
            "--out-json",
            &json,
        ]);
        assert_eq!(code, 0, "{err}");
        let r: NormalizedReport =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(r.config.monolithic_scale, Some(4));
        assert_eq!(r.config.baseline, Baseline::Monolithic);
    }
}
