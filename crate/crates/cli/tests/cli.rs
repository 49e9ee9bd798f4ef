use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vnorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnorm")).args(args).output().unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.push("--json");
    let out = vnorm(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, entities: usize, seed: u64) -> (String, String) {
    let values = dir.join(format!("v{seed}.txt"));
    let gold = dir.join(format!("g{seed}.csv"));
    let out = vnorm(&[
        "synth",
        "--n-values",
        &n.to_string(),
        "--n-entities",
        &entities.to_string(),
        "--seed",
        &seed.to_string(),
        "--values-out",
        p(&values),
        "--gold-out",
        p(&gold),
    ]);
    assert!(out.status.success());
    (p(&values).to_string(), p(&gold).to_string())
}

#[test]
fn evaluate_figure_two_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.csv");
    let cand = dir.path().join("cand.csv");
    std::fs::write(&gold, "value,cluster_id\nSony,a\nSony Corp,a\nVizio Corp,b\nVizio,b\nVizio Inc,b\n").unwrap();
    std::fs::write(&cand, "value,cluster_id\nSony,1\nSony Corp,1\nVizio Corp,1\nVizio,2\nVizio Inc,2\n").unwrap();
    let v = json(&["evaluate", "--partition", p(&cand), "--gold", p(&gold)]);
    assert_eq!((v["precision"].as_f64(), v["recall"].as_f64()), (Some(0.5), Some(0.5)));
    let v = json(&["evaluate", "--partition", p(&gold), "--gold", p(&gold)]);
    assert_eq!((v["precision"].as_f64(), v["recall"].as_f64()), (Some(1.0), Some(1.0)));

    std::fs::write(&cand, "value,cluster_id\nSony,1\nSony Corp,2\nVizio Corp,3\nVizio,4\nVizio Inc,5\n").unwrap();
    let v = json(&["evaluate", "--partition", p(&cand), "--gold", p(&gold)]);
    assert_eq!((v["precision"].as_f64(), v["recall"].as_f64()), (Some(1.0), Some(0.0)));

    std::fs::write(&cand, "value,cluster_id\nSony,1\nSonny,1\n").unwrap();
    let out = vnorm(&["evaluate", "--partition", p(&cand), "--gold", p(&gold)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Sonny"));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (v1, g1) = synth(dir.path(), 100, 20, 5);
    let a = (std::fs::read(&v1).unwrap(), std::fs::read(&g1).unwrap());
    let (v2, g2) = synth(dir.path(), 100, 20, 5);
    assert_eq!(a, (std::fs::read(v2).unwrap(), std::fs::read(g2).unwrap()));
    let lines = String::from_utf8(a.0).unwrap();
    assert_eq!(lines.lines().count(), 100);

    let (_, g) = synth(dir.path(), 10, 10, 6);
    let rows = std::fs::read_to_string(g).unwrap();
    let labels: std::collections::HashSet<&str> = rows.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 10);

    let out = vnorm(&["synth", "--n-values", "5", "--n-entities", "6"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn plan_reports_rank_and_single_cap() {
    let dir = tempfile::tempdir().unwrap();
    let (values, gold) = synth(dir.path(), 120, 30, 1);
    let v = json(&["plan", "--values", &values, "--gold", &gold, "--caps", "1,2,4,8,120", "--seed", "3"]);
    let plans = v["plans"].as_array().unwrap();
    assert_eq!(plans.len(), 5);
    assert_eq!(v["selected"], plans[0]["cap"]);
    let rank = v["picked_rank"].as_u64().unwrap();
    assert!((1..=5).contains(&rank));
    assert!(v["diff_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(v, json(&["plan", "--values", &values, "--gold", &gold, "--caps", "1,2,4,8,120", "--seed", "3"]));

    let v = json(&["plan", "--values", &values, "--gold", &gold, "--caps", "1"]);
    assert_eq!(v["plans"].as_array().unwrap().len(), 1);
    assert_eq!(v["selected"], 1);

    let out = vnorm(&["plan", "--values", &values]);
    assert_eq!(out.status.code(), Some(1), "no params and no gold");
}

#[test]
fn calibrate_then_plan_with_params() {
    let dir = tempfile::tempdir().unwrap();
    let (values, gold) = synth(dir.path(), 80, 20, 2);
    let params = dir.path().join("params.json");
    let out = vnorm(&["calibrate", "--gold", &gold, "--seed", "4", "-o", p(&params)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    assert!(doc["user_params"]["rho_m"].as_f64().unwrap() > 0.0);
    let v = json(&["plan", "--values", &values, "--params", p(&params), "--caps", "1,3,80"]);
    assert_eq!(v["plans"].as_array().unwrap().len(), 3);
    assert!(v["picked_rank"].is_null());
}

#[test]
fn simulate_is_deterministic_and_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (values, gold) = synth(dir.path(), 90, 20, 3);
    let args = ["simulate", "--values", &values, "--gold", &gold, "--plan", "auto,merge,quack,4", "--users", "3", "--seed", "9"];
    let a = json(&args);
    assert_eq!(a, json(&args));
    let results = a["results"].as_array().unwrap();
    assert_eq!(results.len(), 4);
    assert!(results.iter().all(|r| r["all_correct"] == true));
    assert_eq!(results[1]["caps"], serde_json::json!([1]));
    assert_eq!(results[2]["caps"], serde_json::json!([90]));
    assert_eq!(results[3]["caps"], serde_json::json!([4]));

    let seq = json(&["simulate", "--values", &values, "--gold", &gold, "--plan", "auto,merge,quack,4", "--users", "3", "--seed", "9", "--sequential"]);
    assert_eq!(a, seq);

    let team = json(&["simulate", "--gold", &gold, "--users", "2", "-k", "3", "--seed", "9"]);
    assert_eq!(team["results"][0]["k"], 3);
    assert_eq!(team["results"][0]["all_correct"], true);
    let out = vnorm(&["simulate", "--gold", &gold, "-k", "2", "--plan", "merge"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn text_output_is_in_minutes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gold) = synth(dir.path(), 40, 10, 4);
    let out = vnorm(&["simulate", "--gold", &gold, "--plan", "merge"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(" min") && !text.contains(" s)"), "{text}");
    let out = vnorm(&["simulate", "--gold", &gold, "--plan", "merge", "--verbose"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains(" s)"));
}

#[test]
fn gold_must_cover_values() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("v.txt");
    let gold = dir.path().join("g.csv");
    std::fs::write(&values, "IBM\nI.B.M.\nApple\n").unwrap();
    std::fs::write(&gold, "value,cluster_id\nIBM,1\nI.B.M.,1\n").unwrap();
    let out = vnorm(&["simulate", "--values", p(&values), "--gold", p(&gold)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Apple"));
}

#[test]
fn config_file_sets_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gold) = synth(dir.path(), 40, 10, 5);
    let cfg = dir.path().join("vnorm.toml");
    std::fs::write(&cfg, "seed = 11\nusers = 2\n").unwrap();
    let v = json(&["simulate", "--gold", &gold, "--plan", "merge", "--config", p(&cfg)]);
    assert_eq!((v["seed"].as_u64(), v["results"][0]["runs"].as_u64()), (Some(11), Some(2)));
    std::fs::write(&cfg, "sed = 11\n").unwrap();
    let out = vnorm(&["simulate", "--gold", &gold, "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_reports_a_busy_port() {
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = vnorm(&["serve", "--port", &port, "--data", p(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cannot listen"), "{err}");
}
