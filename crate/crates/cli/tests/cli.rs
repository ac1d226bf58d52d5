use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use tokendrop_cli::config::RunConfig;

fn tokendrop(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokendrop")).args(args).arg("--out").arg(out).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tokendrop-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

#[test]
fn omsel_bench_writes_report() {
    let dir = scratch("bench");
    let o = tokendrop(&["omsel-bench", "--n", "8,16", "--trials", "5", "--profile", "wan"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = header(&dir.join("omsel_bench.csv"));
    assert_eq!(&h[..4], ["method", "n", "trials", "mean_cmp"]);
    assert!(h.contains(&"time_wan_s".to_string()));
    assert!(h.contains(&"op_ratio_vs_bitonic".to_string()));
    let rows = csv::Reader::from_path(dir.join("omsel_bench.csv")).unwrap().records().count();
    assert_eq!(rows, 4);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("omsel_bench.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn pipeline_writes_stage_and_summary_tables() {
    let dir = scratch("pipeline");
    let o = tokendrop(&["pipeline", "--n", "64", "--profile", "lan", "--scheme", "pre,baseline"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&dir.join("pipeline_stages.csv")),
        ["scheme", "profile", "m0", "layer", "stage", "time_s", "cmp", "mux", "bytes"]
    );
    assert_eq!(
        header(&dir.join("pipeline_summary.csv")),
        ["scheme", "profile", "m0", "schedule", "total_s", "speedup"]
    );
    let mut r = csv::Reader::from_path(dir.join("pipeline_summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let baseline = rows.iter().find(|r| &r[0] == "baseline").unwrap();
    let pre = rows.iter().find(|r| &r[0] == "pre_drop").unwrap();
    assert_eq!(&baseline[5], "1");
    assert!(pre[5].parse::<f64>().unwrap() > 1.0);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn trace_writes_events_and_verdict() {
    let dir = scratch("trace");
    let o = tokendrop(&["trace", "--n", "16"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.join("trace.jsonl")).unwrap();
    let trace = tokendrop_core::Trace::from_json_lines(&text).unwrap();
    assert!(tokendrop_core::trace::verify_full_coverage(&trace, 16).is_ok());
    let check: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("trace_check.json")).unwrap()).unwrap();
    assert_eq!(check["coverage_ok"], true);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn toytask_reports_both_scorers() {
    let dir = scratch("toy");
    let o = tokendrop(&["toytask", "--trials", "20"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.join("toytask.csv")).unwrap();
    let scorers: Vec<String> = r.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(scorers.len(), 4);
    assert!(scorers.iter().any(|s| s == "mcn"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_input_exits_with_config_error() {
    let dir = scratch("bad");
    for args in [
        &["omsel-bench", "--n", "7"][..],
        &["omsel-bench", "--set", "ring.ell=16"],
        &["pipeline", "--profile", "dialup"],
        &["pipeline", "--set", "no.such.key=1"],
        &["omsel-bench", "--config", "/nonexistent/tokendrop.conf"],
    ] {
        let o = tokendrop(args, &dir);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn config_file_is_applied() {
    let dir = scratch("conf");
    fs::create_dir_all(&dir).unwrap();
    let conf = dir.join("run.conf");
    fs::write(&conf, "# small run\nseed = 9\nn = 8\ntrials = 3\nprofile = lan\n").unwrap();
    let out = dir.join("out");
    let o = tokendrop(&["omsel-bench", "--config", conf.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("omsel_bench.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 9);
    assert_eq!(json["rows"][0]["trials"], 3);
    fs::remove_dir_all(dir).unwrap();
}

proptest! {
    #[test]
    fn set_accepts_any_seed(seed in any::<u64>()) {
        let mut cfg = RunConfig::default();
        cfg.set("seed", &seed.to_string()).unwrap();
        prop_assert_eq!(cfg.seed, seed);
    }

    #[test]
    fn lengths_must_be_even(n in 0usize..600) {
        let mut cfg = RunConfig::default();
        let ok = cfg.set("n", &n.to_string()).and_then(|_| cfg.validate()).is_ok();
        prop_assert_eq!(ok, n >= 2 && n % 2 == 0);
    }
}
