//! Scenario runner: event execution, the append-only event log, metrics
//! reports and persisted run contexts.

pub mod events;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::mobile::BearerState;
use crate::model::{ScenarioDoc, DIGEST_ALGORITHM};
use crate::nfv::{EmbeddingState, VnfState};
use crate::optical::LspState;
use crate::platform::Platform;

pub use events::{parse_events, Action, Expect, ScenarioEvent};
pub use report::{MetricsReport, ReportFormat};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Named counters over the platform state.
pub type Census = BTreeMap<String, i64>;

pub fn census(p: &Platform) -> Census {
    let bearers = |s: BearerState| p.mobile.bearers().filter(|b| b.state == s).count();
    let graphs = |s: EmbeddingState| p.nfv.embeddings().filter(|e| e.state == s).count();
    let counts = [
        ("bearers_active", bearers(BearerState::Active)),
        ("bearers_lost", bearers(BearerState::Lost)),
        ("bearers_released", bearers(BearerState::Released)),
        ("flow_entries", p.net.packet.entry_count()),
        ("graphs_degraded", graphs(EmbeddingState::Degraded)),
        ("graphs_deployed", graphs(EmbeddingState::Deployed)),
        ("lsps", p.net.optical.lsps().filter(|l| l.state == LspState::Active).count()),
        ("services", p.net.services().count()),
        ("slices", p.net.slices().count()),
        ("split_plans", p.mobile.splits().count()),
        ("vms", p.cloud.live_count()),
        ("vnfs_running", p.nfv.instances().filter(|i| i.state == VnfState::Running).count()),
    ];
    counts.into_iter().map(|(k, v)| (k.to_string(), v as i64)).collect()
}

fn census_delta(before: &Census, after: &Census) -> Census {
    after
        .iter()
        .filter_map(|(k, v)| {
            let d = v - before.get(k).copied().unwrap_or(0);
            (d != 0).then(|| (k.clone(), d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub log: String,
    pub scenario: String,
    pub digest: String,
    pub initial_snapshot: String,
    pub initial_census: Census,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub action: String,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
    pub detail: Value,
    pub expect: String,
    pub matched: bool,
    pub snapshot: String,
    pub census_delta: Census,
}

/// A loaded platform plus its event log.
#[derive(Debug, Clone)]
pub struct Harness {
    pub platform: Platform,
    header: LogHeader,
    records: Vec<LogRecord>,
    last_seq: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct SavedState {
    last_seq: Option<u64>,
    platform: Platform,
}

const LOG_TAG: &str = "orch5g-event-log/1";

impl Harness {
    pub fn new(name: &str, platform: Platform) -> Self {
        let header = LogHeader {
            log: LOG_TAG.into(),
            scenario: name.into(),
            digest: DIGEST_ALGORITHM.into(),
            initial_snapshot: platform.snapshot().digest(),
            initial_census: census(&platform),
        };
        Self { platform, header, records: Vec::new(), last_seq: None }
    }

    /// Validates the whole document, including every event, before anything
    /// runs.
    pub fn load(doc: &ScenarioDoc) -> Result<(Self, Vec<ScenarioEvent>), HarnessError> {
        let platform = Platform::from_doc(doc).map_err(|e| HarnessError::Validation(e.to_string()))?;
        let events = parse_events(&doc.events)?;
        Ok((Self::new(&doc.name, platform), events))
    }

    pub fn from_json(text: &str) -> Result<(Self, Vec<ScenarioEvent>), HarnessError> {
        let doc = ScenarioDoc::from_json(text).map_err(|e| HarnessError::Validation(e.to_string()))?;
        Self::load(&doc)
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// Runs a batch of already validated events.
    pub fn run_events(&mut self, events: &[ScenarioEvent]) {
        for ev in events {
            self.apply(ev);
        }
    }

    /// Executes one event and appends its record.
    pub fn apply(&mut self, ev: &ScenarioEvent) -> &LogRecord {
        let before = census(&self.platform);
        let result = execute(&mut self.platform, &ev.action, &self.header.initial_snapshot);
        let after = census(&self.platform);
        let (outcome, error_kind, detail) = match result {
            Ok(detail) => ("ok", None, detail),
            Err((kind, message)) => ("error", Some(kind), json!({ "message": message })),
        };
        let matched = ev.expect.matches(error_kind.as_deref());
        self.records.push(LogRecord {
            seq: ev.seq,
            action: ev.action.name().into(),
            outcome: outcome.into(),
            error_kind,
            detail,
            expect: ev.expect.to_string(),
            matched,
            snapshot: self.platform.snapshot().digest(),
            census_delta: census_delta(&before, &after),
        });
        self.last_seq = Some(ev.seq);
        self.records.last().expect("just pushed")
    }

    /// Parses and runs one extra event. A missing `seq` takes the next one.
    pub fn inject(&mut self, value: &Value) -> Result<&LogRecord, HarnessError> {
        let next = self.last_seq.map_or(1, |s| s + 1);
        let ev = ScenarioEvent::from_value(value, Some(next))?;
        if self.last_seq.is_some_and(|s| ev.seq <= s) {
            return Err(HarnessError::Validation(format!("seq {} does not follow {}", ev.seq, next - 1)));
        }
        Ok(self.apply(&ev))
    }

    /// 0 when every event met its expectation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.records.iter().all(|r| r.matched) {
            0
        } else {
            1
        }
    }

    /// The log as JSON lines: header first, then one record per event.
    pub fn log_text(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport::build(&self.platform, &self.header, &self.records)
    }

    pub fn render_report(&self, format: ReportFormat) -> String {
        self.report().render(&self.platform, format)
    }

    /// Writes `state.json` and `log.jsonl` into `dir`.
    pub fn save_context(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        let state = SavedState { last_seq: self.last_seq, platform: self.platform.clone() };
        let text = serde_json::to_string(&state).map_err(|e| HarnessError::Io(e.to_string()))?;
        fs::write(dir.join("state.json"), text).map_err(io)?;
        fs::write(dir.join("log.jsonl"), self.log_text()).map_err(io)?;
        Ok(())
    }

    pub fn load_context(dir: &Path) -> Result<Self, HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
        let bad = |e: serde_json::Error| HarnessError::Validation(format!("corrupt context: {e}"));
        let state: SavedState = serde_json::from_str(&fs::read_to_string(dir.join("state.json")).map_err(io)?).map_err(bad)?;
        let log = fs::read_to_string(dir.join("log.jsonl")).map_err(io)?;
        let mut lines = log.lines();
        let header: LogHeader = serde_json::from_str(lines.next().unwrap_or_default()).map_err(bad)?;
        let records = lines.map(serde_json::from_str).collect::<Result<Vec<LogRecord>, _>>().map_err(bad)?;
        Ok(Self { platform: state.platform, header, records, last_seq: state.last_seq })
    }
}

type Failure = (String, String);

fn fail<E: std::fmt::Display>(kind: &str, e: E) -> Failure {
    (kind.to_string(), e.to_string())
}

fn value<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Runs one action against the platform. Errors come back as
/// `(kind, message)`.
pub fn execute(p: &mut Platform, action: &Action, initial_snapshot: &str) -> Result<Value, Failure> {
    match action.clone() {
        Action::ProvisionE2e(req) => p.provision_e2e(req).map(value).map_err(|e| fail(e.kind(), e)),
        Action::TeardownE2e { service_id } => {
            p.teardown_e2e(&service_id).map(|()| json!({ "service_id": service_id })).map_err(|e| fail(e.kind(), e))
        }
        Action::CreateSlice { slice_id, tenant_id, nodes, carve } => p
            .net
            .create_slice(&mut p.topo, slice_id, &tenant_id, nodes, carve)
            .map(value)
            .map_err(|e| fail(e.kind(), e)),
        Action::DeleteSlice { slice_id } => p
            .net
            .delete_slice(&mut p.topo, &slice_id)
            .map(|()| json!({ "slice_id": slice_id }))
            .map_err(|e| fail(e.kind(), e)),
        Action::CreateVm(spec) => p.cloud.create_vm(&mut p.topo, &spec).map(value).map_err(|e| fail(e.kind(), e)),
        Action::MigrateVm { vm_id, target_dc } => {
            if let Some(v) = p.nfv.instances().find(|i| i.vm_id == vm_id && i.state != VnfState::Terminated) {
                return Err(fail("VmInUse", format!("vm {vm_id} backs vnf {}; migrate the vnf instead", v.id)));
            }
            p.cloud.migrate_vm(&mut p.topo, &vm_id, &target_dc).map(value).map_err(|e| fail(e.kind(), e))
        }
        Action::DeleteVm { vm_id } => {
            if let Some(v) = p.nfv.instances().find(|i| i.vm_id == vm_id && i.state != VnfState::Terminated) {
                return Err(fail("VmInUse", format!("vm {vm_id} backs vnf {}", v.id)));
            }
            p.cloud.delete_vm(&mut p.topo, &vm_id).map(|()| json!({ "vm_id": vm_id })).map_err(|e| fail(e.kind(), e))
        }
        Action::RegisterImage { image_id, dcs } => p
            .cloud
            .register_image(&mut p.topo, &image_id, &dcs)
            .map(|()| json!({ "image_id": image_id, "dcs": dcs }))
            .map_err(|e| fail(e.kind(), e)),
        Action::DeployGraph(graph) => p.deploy_forwarding_graph(graph).map(value).map_err(|e| fail(e.kind(), e)),
        Action::TeardownGraph { graph_id } => p
            .teardown_forwarding_graph(&graph_id)
            .map(|()| json!({ "graph_id": graph_id }))
            .map_err(|e| fail(e.kind(), e)),
        Action::MigrateVnf { vnf_id, target_dc } => p.migrate_vnf(&vnf_id, &target_dc).map(value).map_err(|e| fail(e.kind(), e)),
        Action::BootstrapEpc { tenant_id, placement } => {
            p.bootstrap_epc(&tenant_id, &placement).map(value).map_err(|e| fail(e.kind(), e))
        }
        Action::EstablishBearer { enb_id, qos } => p.establish_bearer(&enb_id, qos).map(value).map_err(|e| fail(e.kind(), e)),
        Action::ReleaseBearer { bearer_id } => p
            .release_bearer(&bearer_id)
            .map(|()| json!({ "bearer_id": bearer_id }))
            .map_err(|e| fail(e.kind(), e)),
        Action::EstablishX2 { a, b, bw_mbps } => p.establish_x2(&a, &b, bw_mbps).map(value).map_err(|e| fail(e.kind(), e)),
        Action::LinkDown { link_id } => p.link_down(&link_id).map(value).map_err(|e| fail(e.kind(), e)),
        Action::LinkUp { link_id } => p.link_up(&link_id).map(|()| json!({ "link_id": link_id })).map_err(|e| fail(e.kind(), e)),
        Action::SelectAndDeploySplit { enb_id, fronthaul, tier } => p
            .select_and_deploy_split(&enb_id, &fronthaul, tier)
            .map(value)
            .map_err(|e| fail(e.kind(), e)),
        Action::ReevaluateSplit { enb_id, fronthaul } => {
            p.reevaluate_split(&enb_id, &fronthaul).map(value).map_err(|e| fail(e.kind(), e))
        }
        Action::SnapshotCheck {} => {
            let now = p.snapshot().digest();
            if now == initial_snapshot {
                Ok(json!({ "snapshot": now, "initial": initial_snapshot }))
            } else {
                Err(fail("SnapshotMismatch", format!("snapshot {now} differs from initial {initial_snapshot}")))
            }
        }
    }
}

/// Convenience: load, run every event, return the finished harness.
pub fn run_scenario(text: &str) -> Result<Harness, HarnessError> {
    let (mut h, events) = Harness::from_json(text)?;
    h.run_events(&events);
    Ok(h)
}
