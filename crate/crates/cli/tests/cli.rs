use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dea_core::autodiff::Checkpoint;
use dea_core::fairness::FairnessReport;
use dea_core::graph::{generate_sbm, load_graph, split_edges_with};
use dea_core::pipeline::{evaluate, Dataset, Model};

const CONFIG: &str = "groups = [40, 40]\np_intra = 0.2\np_inter = 0.01\nfeature_dim = 6\nepochs = 15\nfinetune_epochs = 5\nlambda_grid = [0.5, 2.0]\n";

fn dea(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dea")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = dea(args, cwd);
    assert!(out.status.success(), "dea {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    dir
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_round_trips_and_is_reproducible() {
    let dir = workspace();
    let p = dir.path();
    ok(&["generate", "--config", "c.toml", "--seed", "3", "--out", "a"], p);
    ok(&["generate", "--config", "c.toml", "--seed", "3", "--out", "b"], p);
    for f in ["edges.txt", "sensitive.txt", "features.csv"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    let g = load_graph(p.join("a/edges.txt"), Some(&p.join("a/features.csv")), p.join("a/sensitive.txt")).unwrap();
    assert_eq!(g, generate_sbm(80, &[40, 40], 0.2, 0.01, 6, 3).unwrap());
    let lines = fs::read_to_string(p.join("a/edges.txt")).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    let summary = json(&p.join("a/generate.json"));
    assert_eq!(summary["graphs"][0]["edges"], lines);
    assert_eq!(summary["graphs"][0]["num_sensitive"], 2);
    assert_eq!(summary["config"]["feature_dim"], 6);
}

#[test]
fn pretrain_finetune_report_flow() {
    let dir = workspace();
    let p = dir.path();
    ok(&["pretrain", "--config", "c.toml", "--seeds", "0..2", "--out", "run"], p);
    let first = fs::read_to_string(p.join("run/seed-0/pretrain_report.json")).unwrap();
    let report = json(&p.join("run/seed-0/pretrain_report.json"));
    for m in FairnessReport::METRICS {
        assert!(report["report"][m].is_number(), "{m}");
    }
    assert_eq!(report["config"]["epochs"], 15);
    assert_eq!(fs::read_to_string(p.join("run/seed-0/pretrain_loss.csv")).unwrap().lines().count(), 16);

    // rerunning the same seed reproduces the report byte for byte
    ok(&["pretrain", "--config", "c.toml", "--seeds", "0..2", "--out", "run"], p);
    assert_eq!(fs::read_to_string(p.join("run/seed-0/pretrain_report.json")).unwrap(), first);

    ok(&["finetune", "--config", "c.toml", "--seeds", "0..2", "--out", "run", "--parallel-seeds", "2"], p);
    let fine = json(&p.join("run/seed-1/finetune_report.json"));
    let removed = fine["result"]["removed_fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&removed));
    assert!(fine["result"]["before"]["accuracy"].is_number());
    assert!(fine["result"]["after"]["accuracy"].is_number());
    assert_eq!(fine["lambda_choice"]["candidates"].as_array().unwrap().len(), 2);

    // comparison table equals a standalone evaluation of the exported model and mask
    let g = generate_sbm(80, &[40, 40], 0.2, 0.01, 6, 1).unwrap();
    let split = split_edges_with(&g, 0.05, 0.10, 1.0, 1).unwrap();
    let data = Dataset::from_graph(g, split).unwrap();
    let model = Model::from_checkpoint(&Checkpoint::load(&p.join("run/seed-1/finetuned.json")).unwrap()).unwrap();
    let mask: Vec<f64> = fs::read_to_string(p.join("run/seed-1/mask.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(mask.len(), data.split.train_pos.len());
    let threshold = fine["result"]["after"]["threshold"].as_f64().unwrap();
    let standalone = evaluate(&model, Some(&mask), &data, threshold, 1).unwrap();
    let mut table = csv::Reader::from_path(p.join("run/seed-1/comparison.csv")).unwrap();
    for row in table.records() {
        let row = row.unwrap();
        if let Some(v) = standalone.metric(&row[0]) {
            assert_eq!(row[2].parse::<f64>().unwrap(), v, "{}", &row[0]);
        }
    }

    let out = ok(&["report", "run", "--out", "agg"], p);
    assert!(out.contains("population"));
    let mut agg = csv::Reader::from_path(p.join("agg/aggregate.csv")).unwrap();
    assert_eq!(agg.headers().unwrap(), vec!["metric", "mean", "std_population", "runs"]);
    let rows: Vec<csv::StringRecord> = agg.records().map(Result::unwrap).collect();
    assert_eq!(&rows[0][0], "before_accuracy");
    assert!(rows.iter().all(|r| &r[3] == "2"));
}

#[test]
fn report_rejects_mixed_run_kinds() {
    let dir = workspace();
    let p = dir.path();
    ok(&["pretrain", "--config", "c.toml", "--seed", "0", "--out", "mixed"], p);
    ok(&["pretrain", "--config", "c.toml", "--seed", "1", "--out", "mixed"], p);
    ok(&["finetune", "--config", "c.toml", "--seed", "1", "--lambda", "1", "--out", "mixed"], p);
    let out = dea(&["report", "mixed", "--out", "agg"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot aggregate"));
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let dir = workspace();
    let p = dir.path();
    ok(&["pretrain", "--config", "c.toml", "--seed", "0", "--out", "run"], p);
    fs::write(p.join("wide.toml"), CONFIG.replace("feature_dim = 6", "feature_dim = 9")).unwrap();
    let out = dea(&["finetune", "--config", "wide.toml", "--seed", "0", "--out", "run"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint incompatible"));
}

#[test]
fn unknown_config_keys_fail_before_work() {
    let dir = workspace();
    let p = dir.path();
    fs::write(p.join("bad.toml"), "lamda = 1.0\n").unwrap();
    let out = dea(&["pretrain", "--config", "bad.toml", "--out", "never"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
    assert!(!p.join("never").exists());
}

#[test]
fn ablation_writes_one_row_per_variant() {
    let dir = workspace();
    let p = dir.path();
    ok(&["ablation", "--config", "c.toml", "--seed", "2", "--lambda", "1", "--constraint", "covg", "--out", "ab"], p);
    let mut rows = csv::Reader::from_path(p.join("ab/seed-2/ablation.csv")).unwrap();
    let names: Vec<String> = rows.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(names, ["baseline", "sampler_only", "constraint_only", "full", "full_with_features"]);
    assert_eq!(json(&p.join("ab/ablation.json"))["config"]["constraint"], "covg");
}
