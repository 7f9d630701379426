use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn shasmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shasmc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_lines(dir: &Path, name: &str, values: &[f64]) -> String {
    let p = dir.join(name);
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn csv_rows(s: &str) -> Vec<Vec<String>> {
    s.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn predictor_small_gaps_disable_idling() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_lines(dir.path(), "a.txt", &[5.0; 40]);
    let o = shasmc(&["predictor", &f]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "batch,TI1,TI2,TI3,TI4,TI5,q2,q3,goIdle");
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        assert_eq!(r[1..6], ["20", "0", "0", "0", "0"]);
        assert_eq!(r[6..], ["20", "0", "0"]);
    }
}

#[test]
fn predictor_incomplete_batch_emits_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_lines(dir.path(), "a.txt", &[5.0; 19]);
    let o = shasmc(&["predictor", &f]);
    assert_eq!(code(&o), 0);
    assert!(csv_rows(&stdout(&o)).is_empty());
}

#[test]
fn predictor_mixed_batch_counts() {
    // two values per short interval, five, five and six in the long ones, interleaved
    let mut v = Vec::new();
    for (value, n) in [(3.0, 2), (30.0, 2), (50.0, 5), (75.0, 5), (120.0, 6)] {
        v.extend(std::iter::repeat_n(value, n));
    }
    let mut shuffled = Vec::new();
    for k in 0..20 {
        shuffled.push(v[(k * 7) % 20]);
    }
    let dir = tempfile::tempdir().unwrap();
    let f = write_lines(dir.path(), "a.txt", &shuffled);
    for extra in [&[][..], &["--sort"][..]] {
        let mut args = vec!["predictor", f.as_str()];
        args.extend(extra);
        let rows = csv_rows(&stdout(&shasmc(&args)));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][1..], ["2", "2", "5", "5", "6", "4", "16", "1"]);
    }
}

#[test]
fn predictor_thresholds_flag() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_lines(dir.path(), "a.txt", &[5.0; 20]);
    let rows = csv_rows(&stdout(&shasmc(&["predictor", &f, "--thresholds", "1,2,3,4"])));
    assert_eq!(rows[0][1..], ["0", "0", "0", "0", "20", "0", "20", "1"]);
    let bad = shasmc(&["predictor", &f, "--thresholds", "4,3,2,1"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn predictor_rejects_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.txt");
    fs::write(&p, "5\n\n7\nabc\n").unwrap();
    let o = shasmc(&["predictor", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":4:"));
    fs::write(&p, "5\n-1\n").unwrap();
    assert_eq!(code(&shasmc(&["predictor", p.to_str().unwrap()])), 2);
}

#[test]
fn unknown_automaton_exits_2() {
    let o = shasmc(&["check", "--model", "casestudy", "--query", "A[] Robot.Idle", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown identifier"));
}

#[test]
fn query_file_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.q");
    fs::write(&q, "# header\nA[] true\nPr[t<=\n").unwrap();
    let o = shasmc(&["check", "--model", "casestudy", "--queries", q.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("q.q:3"));
}

#[test]
fn bad_model_reference_exits_2() {
    assert_eq!(code(&shasmc(&["check", "--model", "nope", "--query", "A[] true", "--seed", "1"])), 2);
    assert_eq!(code(&shasmc(&["check", "--model", "casestudy", "--query", "A[] true", "--epsilon", "2"])), 2);
}

#[test]
fn empty_query_file_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.q");
    fs::write(&q, "# only comments\n\n").unwrap();
    let out = dir.path().join("out");
    let o = shasmc(&[
        "check", "--model", "casestudy", "--queries", q.to_str().unwrap(), "--seed", "3", "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"], Value::Array(vec![]));
    assert_eq!(report["config"]["check"]["sim"]["seed"], 3);
}

#[test]
fn falsified_safety_query_sets_exit_code() {
    let base = ["check", "--model", "casestudy", "--query", "A[] false", "--seed", "1", "--monitored-runs", "3"];
    let o = shasmc(&base);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("invalid (falsified in trial 0 at t=0)"));
    let mut allowed = base.to_vec();
    allowed.push("--allow-falsified");
    assert_eq!(code(&shasmc(&allowed)), 0);
    // falsified reachability is not a safety failure
    let e = shasmc(&["check", "--model", "casestudy", "--query", "E<> false", "--seed", "1", "--monitored-runs", "3"]);
    assert_eq!(code(&e), 0);
}

#[test]
fn evidence_trace_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = shasmc(&[
        "check", "--model", "casestudy", "--query", "E<> Behavior.InIdle", "--seed", "5", "--monitored-runs", "50",
        "--horizon", "3000", "--out-dir", out.to_str().unwrap(), "--format", "csv",
    ]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let row = &report["results"][0];
    assert_eq!(row["verdict"]["kind"], "witness-found");
    assert_eq!(row["evidence_file"], "evidence_1.csv");
    let trace = fs::read_to_string(out.join("evidence_1.csv")).unwrap();
    let last = trace.lines().last().unwrap();
    assert!(last.contains("Behavior: StandbyB -> InIdle") || last.contains("Behavior: StandbyC -> InIdle"), "{last}");
    assert!(stdout(&o).starts_with("index,query,result,"));
    assert!(out.join("timings.json").exists());
}

#[test]
fn sequential_and_parallel_agree() {
    let run = |extra: Option<&str>| {
        let mut args = vec![
            "check", "--model", "casestudy-compare", "--query", "E[<=2000; 8] (max:energy)", "--query",
            "Pr[t<=2000](<> energy <= energy2)", "--query", "A[] not deadlock", "--seed", "11", "--monitored-runs", "8",
            "--horizon", "2000", "--format", "json",
        ];
        args.extend(extra);
        let v: Value = serde_json::from_str(&stdout(&shasmc(&args))).unwrap();
        v["results"].clone()
    };
    assert_eq!(run(None), run(Some("--sequential")));
}

#[test]
fn simulate_respects_horizon_and_counts_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = shasmc(&["simulate", "--model", "casestudy", "--horizon", "600", "--seed", "7", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let trace = fs::read_to_string(out.join("run_0.csv")).unwrap();
    let last_time: f64 = trace.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(last_time <= 600.0);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let run = &summary["runs"][0];
    assert!(run["final_time"].as_f64().unwrap() <= 600.0);
    let arrivals = run["arrivals"].as_u64().unwrap();
    assert!(arrivals > 0);
    assert_eq!(run["go_idle_history"].as_array().unwrap().len() as u64, arrivals / 20);
    assert!(run["final_values"]["energy"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_is_reproducible_and_streams_differ() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = shasmc(&[
            "simulate", "--model", "casestudy-compare", "--runs", "20", "--horizon", "1500", "--seed", "99", "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut files: Vec<String> = (0..20).map(|i| format!("run_{i}.csv")).collect();
    files.push("summary.json".into());
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let traces: std::collections::HashSet<Vec<u8>> = (0..20).map(|i| fs::read(a.join(format!("run_{i}.csv"))).unwrap()).collect();
    assert_eq!(traces.len(), 20);
}

#[test]
fn exported_model_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    for (fmt, ext) in [("toml", "toml"), ("json", "json")] {
        let o = shasmc(&["export", "--model", "casestudy-compare", "--format", fmt]);
        assert_eq!(code(&o), 0);
        let p = dir.path().join(format!("m.{ext}"));
        fs::write(&p, &o.stdout).unwrap();
        let model = p.to_str().unwrap();
        let q = "E[<=1000; 4] (max:energy2)";
        let from_file = shasmc(&["check", "--model", model, "--query", q, "--seed", "4", "--format", "csv"]);
        let builtin = shasmc(&["check", "--model", "casestudy-compare", "--query", q, "--seed", "4", "--format", "csv"]);
        assert_eq!(code(&from_file), 0);
        assert_eq!(stdout(&from_file), stdout(&builtin));
    }
}

#[test]
fn config_file_and_thresholds_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[robot]\npolicy = \"never-idle\"\n").unwrap();
    let o = shasmc(&[
        "check", "--model", "casestudy", "--config", cfg.to_str().unwrap(), "--query", "A[] not Behavior.InIdle", "--seed",
        "2", "--monitored-runs", "20", "--horizon", "3000",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(&cfg, "[robot]\nbogus = 1\n").unwrap();
    let bad = shasmc(&["check", "--model", "casestudy", "--config", cfg.to_str().unwrap(), "--query", "A[] true"]);
    assert_eq!(code(&bad), 2);
    let t = shasmc(&["export", "--model", "casestudy", "--thresholds", "10,30,50,80", "--format", "json"]);
    let def: Value = serde_json::from_slice(&t.stdout).unwrap();
    assert_eq!(def["predictors"][0]["thresholds"], serde_json::json!([10.0, 30.0, 50.0, 80.0]));
}

#[test]
fn bundled_sample_model_checks() {
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/ticker.toml");
    let o = shasmc(&[
        "check", "--model", model, "--query", "A[] power >= 0", "--query", "Lamp.On --> Lamp.Off", "--seed", "1",
        "--monitored-runs", "20", "--horizon", "100",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
