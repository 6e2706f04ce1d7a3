//! Scenario event schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cloud::VmSpec;
use crate::ids::{BearerId, DcId, GraphId, ImageId, LinkId, NodeId, ServiceId, SliceId, TenantId, VmId, VnfId};
use crate::mobile::{FronthaulState, Qos};
use crate::model::Tier;
use crate::netorch::E2ERequest;
use crate::nfv::ForwardingGraph;
use crate::rational::{serde_rational, serde_rational_map, Rational};

use super::HarnessError;

/// What an event is expected to produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Ok,
    AnyError,
    Error(String),
}

impl Expect {
    pub fn matches(&self, error_kind: Option<&str>) -> bool {
        match (self, error_kind) {
            (Expect::Ok, None) => true,
            (Expect::AnyError, Some(_)) => true,
            (Expect::Error(want), Some(got)) => want == got,
            _ => false,
        }
    }
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expect::Ok => f.write_str("ok"),
            Expect::AnyError => f.write_str("error"),
            Expect::Error(k) => write!(f, "error({k})"),
        }
    }
}

impl FromStr for Expect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "ok" => Ok(Expect::Ok),
            "error" => Ok(Expect::AnyError),
            other => other
                .strip_prefix("error(")
                .and_then(|r| r.strip_suffix(')'))
                .filter(|k| !k.is_empty())
                .map(|k| Expect::Error(k.to_string()))
                .ok_or_else(|| format!("bad expectation `{other}`")),
        }
    }
}

impl Serialize for Expect {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    ProvisionE2e(E2ERequest),
    TeardownE2e {
        service_id: ServiceId,
    },
    CreateSlice {
        #[serde(default)]
        slice_id: Option<SliceId>,
        tenant_id: TenantId,
        nodes: BTreeSet<NodeId>,
        #[serde(with = "serde_rational_map")]
        carve: BTreeMap<LinkId, Rational>,
    },
    DeleteSlice {
        slice_id: SliceId,
    },
    CreateVm(VmSpec),
    MigrateVm {
        vm_id: VmId,
        target_dc: DcId,
    },
    DeleteVm {
        vm_id: VmId,
    },
    RegisterImage {
        image_id: ImageId,
        dcs: Vec<DcId>,
    },
    DeployGraph(ForwardingGraph),
    TeardownGraph {
        graph_id: GraphId,
    },
    MigrateVnf {
        vnf_id: VnfId,
        target_dc: DcId,
    },
    BootstrapEpc {
        tenant_id: TenantId,
        #[serde(default)]
        placement: BTreeMap<String, Tier>,
    },
    EstablishBearer {
        enb_id: NodeId,
        qos: Qos,
    },
    ReleaseBearer {
        bearer_id: BearerId,
    },
    EstablishX2 {
        a: NodeId,
        b: NodeId,
        #[serde(with = "serde_rational")]
        bw_mbps: Rational,
    },
    LinkDown {
        link_id: LinkId,
    },
    LinkUp {
        link_id: LinkId,
    },
    SelectAndDeploySplit {
        enb_id: NodeId,
        fronthaul: FronthaulState,
        tier: Tier,
    },
    ReevaluateSplit {
        enb_id: NodeId,
        fronthaul: FronthaulState,
    },
    SnapshotCheck {},
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::ProvisionE2e(_) => "provision_e2e",
            Action::TeardownE2e { .. } => "teardown_e2e",
            Action::CreateSlice { .. } => "create_slice",
            Action::DeleteSlice { .. } => "delete_slice",
            Action::CreateVm(_) => "create_vm",
            Action::MigrateVm { .. } => "migrate_vm",
            Action::DeleteVm { .. } => "delete_vm",
            Action::RegisterImage { .. } => "register_image",
            Action::DeployGraph(_) => "deploy_graph",
            Action::TeardownGraph { .. } => "teardown_graph",
            Action::MigrateVnf { .. } => "migrate_vnf",
            Action::BootstrapEpc { .. } => "bootstrap_epc",
            Action::EstablishBearer { .. } => "establish_bearer",
            Action::ReleaseBearer { .. } => "release_bearer",
            Action::EstablishX2 { .. } => "establish_x2",
            Action::LinkDown { .. } => "link_down",
            Action::LinkUp { .. } => "link_up",
            Action::SelectAndDeploySplit { .. } => "select_and_deploy_split",
            Action::ReevaluateSplit { .. } => "reevaluate_split",
            Action::SnapshotCheck {} => "snapshot_check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioEvent {
    pub seq: u64,
    pub action: Action,
    pub expect: Expect,
}

impl ScenarioEvent {
    /// Parses one event object. `seq` may be omitted only when `default_seq`
    /// is given.
    pub fn from_value(value: &serde_json::Value, default_seq: Option<u64>) -> Result<Self, HarnessError> {
        let mut obj = value
            .as_object()
            .cloned()
            .ok_or_else(|| HarnessError::Validation("event is not an object".into()))?;
        let seq = match obj.remove("seq") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| HarnessError::Validation(format!("bad seq {v}")))?,
            None => default_seq.ok_or_else(|| HarnessError::Validation("event without seq".into()))?,
        };
        let expect = match obj.remove("expect") {
            None => Expect::Ok,
            Some(serde_json::Value::String(s)) => s.parse().map_err(|e| HarnessError::Validation(format!("event {seq}: {e}")))?,
            Some(v) => return Err(HarnessError::Validation(format!("event {seq}: bad expect {v}"))),
        };
        let action: Action = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| HarnessError::Validation(format!("event {seq}: {e}")))?;
        Ok(Self { seq, action, expect })
    }

    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.action).expect("actions serialize");
        let obj = v.as_object_mut().expect("actions are objects");
        obj.insert("seq".into(), self.seq.into());
        if self.expect != Expect::Ok {
            obj.insert("expect".into(), self.expect.to_string().into());
        }
        v
    }
}

/// Parses every event and checks that `seq` strictly increases.
pub fn parse_events(values: &[serde_json::Value]) -> Result<Vec<ScenarioEvent>, HarnessError> {
    let mut out: Vec<ScenarioEvent> = Vec::with_capacity(values.len());
    for v in values {
        let ev = ScenarioEvent::from_value(v, None)?;
        if let Some(prev) = out.last() {
            if ev.seq <= prev.seq {
                return Err(HarnessError::Validation(format!("seq {} does not follow {}", ev.seq, prev.seq)));
            }
        }
        out.push(ev);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn expectation_syntax() {
        assert_eq!("ok".parse::<Expect>().unwrap(), Expect::Ok);
        assert_eq!("error".parse::<Expect>().unwrap(), Expect::AnyError);
        assert_eq!("error(NoCapacity)".parse::<Expect>().unwrap(), Expect::Error("NoCapacity".into()));
        assert!("error()".parse::<Expect>().is_err());
        assert!("maybe".parse::<Expect>().is_err());
        assert!(Expect::Error("A".into()).matches(Some("A")));
        assert!(!Expect::Error("A".into()).matches(Some("B")));
        assert!(!Expect::Ok.matches(Some("B")));
    }

    #[test]
    fn parses_and_round_trips() {
        let raw = vec![
            json!({"seq": 1, "action": "link_down", "link_id": "p1-p2"}),
            json!({"seq": 2, "action": "establish_bearer", "enb_id": "enb1", "qos": {"gbr_mbps": 100}, "expect": "error(EpcNotReady)"}),
            json!({"seq": 5, "action": "snapshot_check"}),
        ];
        let evs = parse_events(&raw).unwrap();
        assert_eq!(evs[1].expect, Expect::Error("EpcNotReady".into()));
        for (e, r) in evs.iter().zip(&raw) {
            assert_eq!(ScenarioEvent::from_value(&e.to_value(), None).unwrap(), *e);
            assert_eq!(e.action.name(), r["action"]);
        }
    }

    #[test]
    fn rejects_bad_events() {
        let bad = |v: serde_json::Value| parse_events(&[v]).is_err();
        assert!(bad(json!({"seq": 1, "action": "explode"})));
        assert!(bad(json!({"seq": 1, "action": "link_down"})));
        assert!(bad(json!({"seq": 1, "action": "link_down", "link_id": "x", "extra": 1})));
        assert!(bad(json!({"action": "snapshot_check"})));
        assert!(bad(json!({"seq": -1, "action": "snapshot_check"})));
        let order = vec![json!({"seq": 2, "action": "snapshot_check"}), json!({"seq": 2, "action": "snapshot_check"})];
        assert!(parse_events(&order).is_err());
    }
}
