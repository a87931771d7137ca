use std::path::Path;
use std::process::{Command, Output};

fn cellgraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellgraph"))
        .args(args)
        .env("CELLGRAPH_OUT", dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cellgraph(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const TRAIN: &[&str] = &["train", "--n-pt", "10", "--n-ft", "10", "--hidden", "16", "--layers", "2"];

fn pipeline(dir: &Path) {
    ok(dir, &["generate", "--sites", "20", "--sectors", "3", "--carriers", "800,2100", "--seed", "4"]);
    ok(dir, &["simulate"]);
    ok(dir, &["build-graph", "--seed", "4"]);
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn report_without_wallclock(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wallclock_s");
    v
}

fn run_dirs(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for group in std::fs::read_dir(dir.join("runs")).unwrap() {
        for run in std::fs::read_dir(group.unwrap().path()).unwrap() {
            out.push(run.unwrap().path());
        }
    }
    out.sort();
    out
}

#[test]
fn twenty_site_pipeline_yields_120_node_graph() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let generated = ok(d, &["generate", "--sites", "20", "--sectors", "3", "--carriers", "800,2100", "--seed", "4"]);
    assert!(generated.contains("120 cells"), "{generated}");
    ok(d, &["simulate"]);
    assert_eq!(read(d, "kpi.csv").lines().count(), 1 + 3 * 120);
    let built = ok(d, &["build-graph", "--seed", "4"]);
    assert!(built.contains("120 nodes"), "{built}");
    let graph: serde_json::Value = serde_json::from_str(&read(d, "graph.json")).unwrap();
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 120);
}

#[test]
fn train_eval_report_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let mut args = TRAIN.to_vec();
    args.extend(["--runs", "5", "--jobs", "2"]);
    let trained = ok(d, &args);
    assert_eq!(trained.lines().count(), 5);
    let runs = run_dirs(d);
    assert_eq!(runs.len(), 5);
    assert_eq!(read(d, "ledger.csv").lines().count(), 6);

    let model = runs[0].join("model.json");
    let eval = ok(d, &["eval", "--model", model.to_str().unwrap(), "--nodes", "all"]);
    let v: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    assert_eq!(v["n_nodes"], 120);
    assert!(v["mse_pct"].as_f64().unwrap() >= 0.0);

    let table = ok(d, &["report", "--csv", "summary.csv"]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[1].contains("pf2") && rows[1].contains("gine") && rows[1].contains("cqi"));
    let cells: Vec<&str> = rows[1].split_whitespace().collect();
    let mse = cells.iter().position(|c| *c == "±").unwrap();
    assert!(cells[mse - 1].parse::<f64>().is_ok() && cells[mse + 1].ends_with('%'), "{}", rows[1]);
    assert_eq!(cells[mse - 1].split('.').nth(1).unwrap().len(), 1);
    assert!(read(d, "summary.csv").starts_with("config_hash,"));

    let bench = ok(d, &["bench", "--reps", "2", "--enforce"]);
    let lines: Vec<serde_json::Value> = bench.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        assert!(l["forward_s"].as_f64().unwrap() > 0.0);
        assert!(l["activation_bytes"].as_u64().unwrap() > 0);
        assert_eq!(l["n_nodes"], 120);
    }
}

#[test]
fn repeated_pipeline_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        pipeline(d);
        ok(d, TRAIN);
    }
    for name in ["scenario.json", "kpi.csv", "graph.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let (ra, rb) = (run_dirs(a.path()), run_dirs(b.path()));
    assert_eq!(ra.len(), 1);
    assert_eq!(ra[0].strip_prefix(a.path()).unwrap(), rb[0].strip_prefix(b.path()).unwrap());
    assert_eq!(
        std::fs::read(ra[0].join("model.json")).unwrap(),
        std::fs::read(rb[0].join("model.json")).unwrap()
    );
    assert_eq!(report_without_wallclock(&ra[0].join("report.json")), report_without_wallclock(&rb[0].join("report.json")));
}

#[test]
fn exit_codes_separate_usage_validation_and_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let error_kind = |out: &Output| -> String {
        let v: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
        assert!(v["message"].is_string());
        v["error"].as_str().unwrap().to_string()
    };

    let usage = cellgraph(d, &["generate", "--sites", "many"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_kind(&usage), "usage");

    let missing = cellgraph(d, &["simulate", "--scenario", "absent.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_kind(&missing), "validation");

    std::fs::write(d.join("broken.json"), "{ not json").unwrap();
    let broken = cellgraph(d, &["build-graph", "--scenario", "broken.json"]);
    assert_eq!(broken.status.code(), Some(2));
    assert_eq!(error_kind(&broken), "validation");

    let crowded = cellgraph(d, &["generate", "--sites", "200", "--side-m", "1000"]);
    assert_eq!(crowded.status.code(), Some(1));
    assert_eq!(error_kind(&crowded), "runtime");

    assert_eq!(cellgraph(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn out_dir_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    ok(env_dir.path(), &["generate", "--sites", "3", "--seed", "1"]);
    assert!(env_dir.path().join("scenario.json").exists());
    ok(env_dir.path(), &["--out-dir", flag_dir.path().to_str().unwrap(), "generate", "--sites", "3", "--seed", "1"]);
    assert_eq!(read(env_dir.path(), "scenario.json"), read(flag_dir.path(), "scenario.json"));
}
