use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use himnet::train::EvalReport;
use jsonschema::JSONSchema;
use serde_json::Value;

fn himnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_himnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let out = himnet(
        tmp.path(),
        &["synth", "--normals", "30", "--anomalies", "10", "--seed", "3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    tmp
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema_file: &str, instance: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("schema")
        .join(schema_file);
    let schema = JSONSchema::compile(&json(&path)).expect("schema compiles");
    if let Err(errors) = schema.validate(instance) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{schema_file}: {}", msgs.join("; "));
    };
}

const QUICK: [&str; 6] = ["--dataset", "SYNTH", "--epochs", "2", "--folds", "3"];

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = himnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cv_writes_schema_valid_outputs() {
    let tmp = workspace();
    let mut args = vec!["cv"];
    args.extend(QUICK);
    args.extend(["--seed", "7", "--out-dir", "run"]);
    let stdout = run_ok(tmp.path(), &args);
    assert!(stdout.contains("mean AUC"));

    let run = tmp.path().join("run");
    let report = json(&run.join("report.json"));
    assert_valid("eval_report.schema.json", &report);
    let manifest = json(&run.join("manifest.json"));
    assert_valid("manifest.schema.json", &manifest);
    assert_eq!(manifest["config"]["alpha"]["value"], "0.01");
    assert_eq!(manifest["config"]["seed"]["source"], "flag");
    assert_eq!(manifest["dataset_checksum"].as_str().unwrap().len(), 64);

    let parsed = EvalReport::from_json(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(parsed.config.alpha, 0.01);
    assert_eq!(parsed.seed, 7);
    parsed.check(&(1..=40).collect::<Vec<_>>()).unwrap();
    let csv = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "dataset,variant,P,Q,tau,fold,auc");
    assert_eq!(csv.lines().count(), 4);
    let history = fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3 * 2);
}

#[test]
fn unknown_dataset_exits_2_without_output() {
    let tmp = workspace();
    let out = himnet(tmp.path(), &["cv", "--dataset", "NOPE", "--out-dir", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOPE"));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = workspace();
    for args in [
        vec!["sweep", "memory", "--dataset", "SYNTH", "--p", "0"],
        vec!["sweep", "memory", "--dataset", "SYNTH", "--p", "1..x"],
        vec!["sweep", "contamination", "--dataset", "SYNTH", "--tau", "0,,8"],
        vec!["cv", "--dataset", "SYNTH", "--variant", "vae"],
        vec!["cv", "--dataset", "SYNTH", "--folds", "1"],
        vec!["cv", "--dataset", "SYNTH", "--folds", "20"],
        vec!["cv", "--dataset", "SYNTH", "--no-such-flag"],
        vec!["cv"],
    ] {
        let out = himnet(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

fn sweep(tmp: &Path, kind: &str, extra: &[&str]) -> Value {
    let mut args = vec!["sweep", kind];
    args.extend(QUICK);
    args.extend(["--out-dir", kind]);
    args.extend(extra);
    run_ok(tmp, &args);
    let dir = tmp.join(kind);
    let index = json(&dir.join("index.json"));
    assert_valid("index.schema.json", &index);
    assert_valid("manifest.schema.json", &json(&dir.join("manifest.json")));
    for cell in index["cells"].as_array().unwrap() {
        assert_valid(
            "eval_report.schema.json",
            &json(&dir.join(cell["report"].as_str().unwrap())),
        );
        assert!(dir.join(cell["loss_history"].as_str().unwrap()).is_file());
    }
    index
}

#[test]
fn contamination_sweep_emits_one_report_per_rate() {
    let tmp = workspace();
    let index = sweep(tmp.path(), "contamination", &["--tau", "0,8,16"]);
    let taus: Vec<f64> = index["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["tau_percent"].as_f64().unwrap())
        .collect();
    assert_eq!(taus, vec![0.0, 8.0, 16.0]);
}

#[test]
fn memory_sweep_over_six_node_block_counts() {
    let tmp = workspace();
    let index = sweep(tmp.path(), "memory", &["--p", "1..6", "--q", "1"]);
    let cells: Vec<(u64, u64)> = index["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["node_blocks"].as_u64().unwrap(),
                c["graph_blocks"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(cells, (1..=6).map(|p| (p, 1)).collect::<Vec<_>>());
}

#[test]
fn ablation_sweep_runs_requested_variants() {
    let tmp = workspace();
    let index = sweep(tmp.path(), "ablation", &["--variant", "gae_only,full"]);
    let variants: Vec<&str> = index["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["variant"].as_str().unwrap())
        .collect();
    assert_eq!(variants, vec!["gae_only", "full"]);
}

#[test]
fn config_file_precedence_is_recorded() {
    let tmp = workspace();
    fs::write(
        tmp.path().join("run.conf"),
        "# quick run\nseed = 3\nepochs = 1\nfolds = 3\n",
    )
    .unwrap();
    run_ok(
        tmp.path(),
        &[
            "cv",
            "--dataset",
            "SYNTH",
            "--config",
            "run.conf",
            "--seed",
            "5",
            "--out-dir",
            "run",
        ],
    );
    let manifest = json(&tmp.path().join("run/manifest.json"));
    let entry = |k: &str| {
        (
            manifest["config"][k]["value"].as_str().unwrap().to_string(),
            manifest["config"][k]["source"].as_str().unwrap().to_string(),
        )
    };
    assert_eq!(entry("seed"), ("5".into(), "flag".into()));
    assert_eq!(entry("epochs"), ("1".into(), "file".into()));
    assert_eq!(entry("lr"), ("0.001".into(), "default".into()));
    assert_eq!(manifest["config_file"], "run.conf");

    fs::write(tmp.path().join("bad.conf"), "colour = red\n").unwrap();
    let out = himnet(tmp.path(), &["cv", "--dataset", "SYNTH", "--config", "bad.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_reproduces_and_detects_changed_data() {
    let tmp = workspace();
    let mut args = vec!["sweep", "contamination"];
    args.extend(QUICK);
    args.extend(["--tau", "0,8", "--out-dir", "orig"]);
    run_ok(tmp.path(), &args);
    let stdout = run_ok(
        tmp.path(),
        &["replay", "orig/manifest.json", "--out-dir", "again", "--verify"],
    );
    assert!(stdout.contains("replay matches"));
    for f in ["tau_0.json", "tau_8.json"] {
        let a = EvalReport::from_json(&fs::read_to_string(tmp.path().join("orig").join(f)).unwrap()).unwrap();
        let b =
            EvalReport::from_json(&fs::read_to_string(tmp.path().join("again").join(f)).unwrap()).unwrap();
        assert!(a.same_results(&b));
    }

    let labels = tmp.path().join("data/SYNTH/SYNTH_graph_labels.txt");
    let text = fs::read_to_string(&labels).unwrap();
    fs::write(&labels, text.replacen('0', "1", 1)).unwrap();
    let out = himnet(
        tmp.path(),
        &["replay", "orig/manifest.json", "--out-dir", "third"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = workspace();
    for (jobs, dir) in [("1", "one"), ("3", "three")] {
        let mut args = vec!["cv"];
        args.extend(QUICK);
        args.extend(["--jobs", jobs, "--out-dir", dir]);
        run_ok(tmp.path(), &args);
    }
    let read = |d: &str| {
        EvalReport::from_json(&fs::read_to_string(tmp.path().join(d).join("report.json")).unwrap()).unwrap()
    };
    assert!(read("one").same_results(&read("three")));
}

#[test]
fn gradcheck_passes_and_reports_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = run_ok(
        tmp.path(),
        &["gradcheck", "--eps", "1e-5", "--seeds", "10", "--out-dir", "g"],
    );
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["eps"], 1e-5);
    assert_eq!(report["seeds"], 10);
    assert_eq!(report["passed"], true);
    assert!(report["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["model"].as_object().unwrap().len(), 7);
    assert_valid("manifest.schema.json", &json(&tmp.path().join("g/manifest.json")));
}

#[test]
fn gradcheck_fault_injection_names_the_primitive() {
    let tmp = tempfile::tempdir().unwrap();
    let out = himnet(
        tmp.path(),
        &["gradcheck", "--seeds", "2", "--inject-fault", "row_softmax"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row_softmax"));
}
