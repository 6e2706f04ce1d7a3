use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orch5g"))
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/demo.json")
}

fn ref_topo() -> serde_json::Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/ref_topo.json");
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn demo_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let log = dir.path().join(format!("log{i}.jsonl"));
        let report = dir.path().join(format!("report{i}.txt"));
        let o = run(bin().arg("run").arg(demo()).arg("--log").arg(&log).arg("--report").arg(&report));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((fs::read(&log).unwrap(), fs::read(&report).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8(outputs[0].0.clone()).unwrap().lines().count(), 20);
}

#[test]
fn structured_report_on_stdout() {
    let o = run(bin().arg("run").arg(demo()).args(["--format", "structured"]));
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["events"]["total"], 19);
}

#[test]
fn validate_reports_event_count() {
    let o = run(bin().arg("validate").arg(demo()));
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("19 events"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = ref_topo();
    doc["events"] = serde_json::json!([{"seq": 1, "action": "nonsense"}]);
    let path = dir.path().join("bad.json");
    fs::write(&path, doc.to_string()).unwrap();
    assert_eq!(run(bin().arg("validate").arg(&path)).status.code(), Some(2));
    assert_eq!(run(bin().arg("run").arg(&path)).status.code(), Some(2));
    assert_eq!(run(bin().arg("run").arg(dir.path().join("missing.json"))).status.code(), Some(2));
}

#[test]
fn expectation_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = ref_topo();
    doc["events"] = serde_json::json!([
        {"seq": 1, "action": "link_down", "link_id": "p1-p2", "expect": "error(UnknownLink)"}
    ]);
    let path = dir.path().join("s.json");
    fs::write(&path, doc.to_string()).unwrap();
    let o = run(bin().arg("run").arg(&path));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected error(UnknownLink)"));
}

#[test]
fn inject_and_report_against_saved_context() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = dir.path().join("ctx");
    let mut doc = ref_topo();
    doc["events"] = serde_json::json!([
        {"seq": 1, "action": "bootstrap_epc", "tenant_id": "op1", "placement": {"mme": "core", "sgw": "core", "pgw": "core"}},
        {"seq": 2, "action": "establish_bearer", "enb_id": "enb1", "qos": {"gbr_mbps": 100}}
    ]);
    let scenario = dir.path().join("s.json");
    fs::write(&scenario, doc.to_string()).unwrap();
    assert_eq!(run(bin().arg("run").arg(&scenario).arg("--context").arg(&ctx)).status.code(), Some(0));

    let event = dir.path().join("e.json");
    fs::write(&event, r#"{"action": "link_down", "link_id": "p2-p3"}"#).unwrap();
    let o = run(bin().arg("inject").arg(&ctx).arg(&event));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(rec["seq"], 3);
    assert!(rec["detail"]["services"].as_object().is_some_and(|m| !m.is_empty()));

    let log_before = fs::read_to_string(ctx.join("log.jsonl")).unwrap();
    fs::write(&event, r#"{"action": "summon"}"#).unwrap();
    assert_eq!(run(bin().arg("inject").arg(&ctx).arg(&event)).status.code(), Some(2));
    assert_eq!(fs::read_to_string(ctx.join("log.jsonl")).unwrap(), log_before);

    let a = run(bin().arg("report").arg(&ctx));
    let b = run(bin().arg("report").arg(&ctx));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("p2-p3"));
}
