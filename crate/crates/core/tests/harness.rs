use orch5g::fixtures;
use orch5g::harness::{census, run_scenario, Census, Harness, HarnessError, ReportFormat};
use serde_json::{json, Value};

fn scenario(events: Value) -> String {
    let mut doc: Value = serde_json::from_str(fixtures::REF_TOPO_JSON).unwrap();
    doc["events"] = events;
    doc.to_string()
}

fn bootstrap_and_bearers() -> Value {
    json!([
        {"seq": 1, "action": "bootstrap_epc", "tenant_id": "op1", "placement": {"mme": "core", "sgw": "core", "pgw": "core"}},
        {"seq": 2, "action": "establish_bearer", "enb_id": "enb1", "qos": {"gbr_mbps": 100}},
        {"seq": 3, "action": "establish_bearer", "enb_id": "enb1", "qos": {"gbr_mbps": 100}},
        {"seq": 4, "action": "establish_bearer", "enb_id": "enb2", "qos": {"gbr_mbps": 100}}
    ])
}

#[test]
fn bearer_round_trip_passes_snapshot_check() {
    let mut events = bootstrap_and_bearers().as_array().unwrap().clone();
    for (i, b) in ["bearer-1", "bearer-2", "bearer-3"].iter().enumerate() {
        events.push(json!({"seq": 10 + i, "action": "release_bearer", "bearer_id": b}));
    }
    events.push(json!({"seq": 20, "action": "teardown_graph", "graph_id": "epc"}));
    events.push(json!({"seq": 30, "action": "snapshot_check"}));
    let h = run_scenario(&scenario(Value::Array(events))).unwrap();
    assert_eq!(h.exit_code(), 0, "{}", h.log_text());
    let last = h.records().last().unwrap();
    assert_eq!((last.action.as_str(), last.outcome.as_str()), ("snapshot_check", "ok"));
}

#[test]
fn snapshot_check_fails_while_resources_are_held() {
    let mut events = bootstrap_and_bearers().as_array().unwrap().clone();
    events.push(json!({"seq": 9, "action": "snapshot_check", "expect": "error(SnapshotMismatch)"}));
    let h = run_scenario(&scenario(Value::Array(events))).unwrap();
    assert_eq!(h.exit_code(), 0);
    assert_eq!(h.records().last().unwrap().error_kind.as_deref(), Some("SnapshotMismatch"));
}

#[test]
fn unexpected_success_is_a_mismatch() {
    let events = json!([
        {"seq": 1, "action": "create_vm", "cpu": 1, "ram_mb": 512, "disk_gb": 1, "image_id": "img-fw",
         "expect": "error(CapacityExceeded)"}
    ]);
    let h = run_scenario(&scenario(events)).unwrap();
    assert_eq!(h.exit_code(), 1);
    let r = &h.records()[0];
    assert_eq!(r.outcome, "ok");
    assert!(!r.matched);
    assert_eq!(h.report().events.mismatched, 1);
}

#[test]
fn unexpected_error_is_a_mismatch() {
    let events = json!([{"seq": 1, "action": "release_bearer", "bearer_id": "bearer-9"}]);
    let h = run_scenario(&scenario(events)).unwrap();
    assert_eq!(h.exit_code(), 1);
    assert_eq!(h.records()[0].error_kind.as_deref(), Some("UnknownBearer"));
}

#[test]
fn empty_event_list_reports_fresh_topology() {
    let h = run_scenario(&scenario(json!([]))).unwrap();
    assert!(h.records().is_empty());
    assert_eq!(h.exit_code(), 0);
    let r = h.report();
    assert!(r.counts.values().all(|v| *v == 0), "{:?}", r.counts);
    assert!(r.links.values().all(|l| l.utilization == 0.into()));
    assert!(r.grids.values().all(|g| g.occupied == 0));
    assert!(r.dcs.values().all(|d| d.used.cpu == 0));
    assert_eq!(h.log_text().lines().count(), 1);
}

#[test]
fn invalid_documents_abort_before_any_event() {
    let bad_action = scenario(json!([{"seq": 1, "action": "warp_drive"}]));
    assert!(matches!(run_scenario(&bad_action), Err(HarnessError::Validation(_))));
    let bad_order = scenario(json!([
        {"seq": 2, "action": "snapshot_check"},
        {"seq": 2, "action": "snapshot_check"}
    ]));
    assert!(matches!(run_scenario(&bad_order), Err(HarnessError::Validation(_))));
    let bad_field = scenario(json!([{"seq": 1, "action": "link_down", "link": "p1-p2"}]));
    assert!(matches!(run_scenario(&bad_field), Err(HarnessError::Validation(_))));
    assert!(matches!(run_scenario("{"), Err(HarnessError::Validation(_))));
}

#[test]
fn groomed_bearers_show_in_report() {
    let h = run_scenario(&scenario(bootstrap_and_bearers())).unwrap();
    let r = h.report();
    assert_eq!(r.counts["lsps"], 1);
    assert_eq!(r.counts["bearers_active"], 3);
    let text = h.render_report(ReportFormat::Text);
    assert_eq!(text, h.render_report(ReportFormat::Text));
    let structured = h.render_report(ReportFormat::Structured);
    assert_eq!(structured, h.render_report(ReportFormat::Structured));
    let parsed: Value = serde_json::from_str(&structured).unwrap();
    assert_eq!(parsed["counts"]["lsps"], 1);
}

#[test]
fn inject_link_down_lists_recovery() {
    let mut h = run_scenario(&scenario(bootstrap_and_bearers())).unwrap();
    let r = h.inject(&json!({"action": "link_down", "link_id": "p2-p3"})).unwrap().clone();
    assert_eq!(r.seq, 5);
    assert_eq!(r.outcome, "ok");
    let services = r.detail["services"].as_object().unwrap();
    assert_eq!(services.len(), 3);
    assert!(services.values().all(|o| o.get("recovered").is_some()), "{services:?}");
    assert_eq!(r.detail["bearers"].as_object().unwrap().len(), 3);
}

#[test]
fn rejected_injection_leaves_log_unchanged() {
    let mut h = run_scenario(&scenario(bootstrap_and_bearers())).unwrap();
    let before = h.log_text();
    assert!(h.inject(&json!({"action": "teleport"})).is_err());
    assert!(h.inject(&json!({"seq": 2, "action": "snapshot_check"})).is_err());
    assert_eq!(h.log_text(), before);
}

#[test]
fn injection_after_final_check_appends() {
    let mut h = run_scenario(&scenario(json!([{"seq": 7, "action": "snapshot_check"}]))).unwrap();
    h.inject(&json!({"action": "link_down", "link_id": "o1-o2"})).unwrap();
    h.inject(&json!({"seq": 100, "action": "link_up", "link_id": "o1-o2"})).unwrap();
    let seqs: Vec<u64> = h.records().iter().map(|r| r.seq).collect();
    assert_eq!(seqs, vec![7, 8, 100]);
}

#[test]
fn folding_the_log_reproduces_final_counts() {
    let h = run_scenario(fixtures::DEMO_JSON).unwrap();
    let mut folded: Census = h.header().initial_census.clone();
    for r in h.records() {
        for (k, d) in &r.census_delta {
            *folded.entry(k.clone()).or_default() += d;
        }
    }
    assert_eq!(folded, census(&h.platform));
    assert_eq!(folded, h.report().counts);
}

#[test]
fn log_snapshots_track_state() {
    let h = run_scenario(fixtures::DEMO_JSON).unwrap();
    assert_eq!(h.records().last().unwrap().snapshot, h.header().initial_snapshot);
    assert_eq!(h.header().digest, "sha256");
    for line in h.log_text().lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}

#[test]
fn context_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = run_scenario(&scenario(bootstrap_and_bearers())).unwrap();
    h.save_context(dir.path()).unwrap();
    let mut loaded = Harness::load_context(dir.path()).unwrap();
    assert_eq!(loaded.log_text(), h.log_text());
    assert_eq!(loaded.platform, h.platform);
    assert_eq!(loaded.render_report(ReportFormat::Text), h.render_report(ReportFormat::Text));
    let a = h.inject(&json!({"action": "link_down", "link_id": "p1-p2"})).unwrap().clone();
    let b = loaded.inject(&json!({"action": "link_down", "link_id": "p1-p2"})).unwrap().clone();
    assert_eq!(a, b);
    assert!(Harness::load_context(&dir.path().join("missing")).is_err());
}

#[test]
fn demo_runs_clean() {
    let h = run_scenario(fixtures::DEMO_JSON).unwrap();
    assert_eq!(h.exit_code(), 0, "{}", h.log_text());
    assert_eq!(h.records().len(), 19);
    let r = h.report();
    assert!(r.recovery.recovered > 0);
    assert_eq!(r.counts["bearers_active"], 0);
}
