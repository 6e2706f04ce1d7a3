//! Mobile workflows: EPC bootstrap, bearer-triggered transport and RAN
//! functional split selection and deployment.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::faults::InjectedFault;
use crate::ids::{BearerId, Counter, GraphId, NodeId, ServiceId, TenantId, VnfId, VnfTypeId};
use crate::model::{NodeKind, Tier};
use crate::netorch::{E2ERequest, NetError};
use crate::nfv::{EmbeddingState, ForwardingGraph, GraphEdge, GraphNode, GraphNodeKind, NfvError, RadioLayer, VnfRole};
use crate::platform::Platform;
use crate::rational::{self, serde_opt_rational, serde_rational, Rational};

/// Split point in the radio stack, ordered from full centralization to
/// fully local processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitBoundary {
    BelowPhy,
    PhyMac,
    MacRlc,
    RlcPdcp,
    PdcpRrc,
    AboveRrc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitOption {
    pub id: String,
    pub boundary: SplitBoundary,
    #[serde(with = "serde_rational")]
    pub fronthaul_bw_mbps: Rational,
    /// `None` is an unbounded budget.
    #[serde(default, with = "serde_opt_rational")]
    pub fronthaul_latency_budget_ms: Option<Rational>,
    #[serde(with = "serde_rational")]
    pub energy_cost: Rational,
}

impl SplitBoundary {
    /// Number of radio layers kept local at the eNB.
    pub fn local_depth(self) -> usize {
        self as usize
    }
}

impl SplitOption {
    pub fn local_layers(&self) -> BTreeSet<RadioLayer> {
        RadioLayer::ALL[..self.boundary.local_depth()].iter().copied().collect()
    }

    pub fn central_layers(&self) -> BTreeSet<RadioLayer> {
        RadioLayer::ALL[self.boundary.local_depth()..].iter().copied().collect()
    }

    pub fn is_feasible(&self, state: &FronthaulState) -> bool {
        self.fronthaul_bw_mbps <= state.available_bw_mbps
            && self.fronthaul_latency_budget_ms.is_none_or(|b| b >= state.path_latency_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FronthaulState {
    #[serde(with = "serde_rational")]
    pub available_bw_mbps: Rational,
    #[serde(with = "serde_rational")]
    pub path_latency_ms: Rational,
}

impl FronthaulState {
    pub fn new(available_bw_mbps: Rational, path_latency_ms: Rational) -> Self {
        Self { available_bw_mbps, path_latency_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MobileError {
    #[error("EPC not bootstrapped")]
    EpcNotReady,
    #[error("EPC already bootstrapped")]
    AlreadyBootstrapped,
    #[error("unknown eNB {0}")]
    UnknownEnb(NodeId),
    #[error("unknown bearer {0}")]
    UnknownBearer(BearerId),
    #[error("transport infeasible: {cause}")]
    TransportInfeasible { cause: String },
    #[error("empty split option table")]
    NoOptions,
    #[error("invalid split option: {0}")]
    InvalidOption(String),
    #[error("no feasible split option and no all-local fallback")]
    NoFeasibleOption,
    #[error("no split plan for {0}")]
    NoSplitPlan(NodeId),
    #[error("split plan for {0} already exists")]
    SplitExists(NodeId),
    #[error(transparent)]
    Nfv(#[from] NfvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Injected(#[from] InjectedFault),
}

impl MobileError {
    pub fn kind(&self) -> &'static str {
        match self {
            MobileError::EpcNotReady => "EpcNotReady",
            MobileError::AlreadyBootstrapped => "AlreadyBootstrapped",
            MobileError::UnknownEnb(_) => "UnknownEnb",
            MobileError::UnknownBearer(_) => "UnknownBearer",
            MobileError::TransportInfeasible { .. } => "TransportInfeasible",
            MobileError::NoOptions => "NoOptions",
            MobileError::InvalidOption(_) => "InvalidOption",
            MobileError::NoFeasibleOption => "NoFeasibleOption",
            MobileError::NoSplitPlan(_) => "NoSplitPlan",
            MobileError::SplitExists(_) => "SplitExists",
            MobileError::Nfv(e) => e.kind(),
            MobileError::Net(e) => e.kind(),
            MobileError::Injected(_) => "InjectedFault",
        }
    }
}

/// Picks the feasible option with the lowest energy cost, preferring deeper
/// centralization and then the smaller id on ties. Falls back to the
/// all-local option when nothing is feasible.
pub fn select_split<'a>(options: &'a [SplitOption], state: &FronthaulState) -> Result<&'a SplitOption, MobileError> {
    if options.is_empty() {
        return Err(MobileError::NoOptions);
    }
    let mut seen = BTreeSet::new();
    for o in options {
        if !seen.insert(o.boundary) {
            return Err(MobileError::InvalidOption(format!("duplicate boundary in {}", o.id)));
        }
        if o.fronthaul_bw_mbps < Rational::zero()
            || o.energy_cost < Rational::zero()
            || o.fronthaul_latency_budget_ms.is_some_and(|b| b < Rational::zero())
        {
            return Err(MobileError::InvalidOption(format!("{} has a negative value", o.id)));
        }
        if o.boundary == SplitBoundary::AboveRrc && !o.fronthaul_bw_mbps.is_zero() {
            return Err(MobileError::InvalidOption(format!("{} is all-local but demands fronthaul", o.id)));
        }
    }
    options
        .iter()
        .filter(|o| o.is_feasible(state))
        .min_by(|a, b| (a.energy_cost, a.boundary, &a.id).cmp(&(b.energy_cost, b.boundary, &b.id)))
        .or_else(|| options.iter().find(|o| o.boundary == SplitBoundary::AboveRrc))
        .ok_or(MobileError::NoFeasibleOption)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    S1,
    S11,
    S5,
    X2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub kind: InterfaceKind,
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpcState {
    pub tenant_id: TenantId,
    pub graph_id: GraphId,
    pub mme: VnfId,
    pub sgw: VnfId,
    pub pgw: VnfId,
    pub interfaces: Vec<Interface>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qos {
    #[serde(with = "serde_rational")]
    pub gbr_mbps: Rational,
    #[serde(default, with = "serde_opt_rational", skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<Rational>,
    #[serde(default)]
    pub priority: u8,
}

impl Qos {
    pub fn new(gbr_mbps: Rational, max_latency_ms: Option<Rational>) -> Self {
        Self { gbr_mbps, max_latency_ms, priority: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearerState {
    Active,
    Recovering,
    Released,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bearer {
    pub id: BearerId,
    pub enb_id: NodeId,
    pub qos: Qos,
    pub transport_service: ServiceId,
    pub state: BearerState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearerOutcome {
    Recovered,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub enb_id: NodeId,
    pub chosen: String,
    pub boundary: SplitBoundary,
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment: Option<GraphId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobileState {
    epc: Option<EpcState>,
    bearers: BTreeMap<BearerId, Bearer>,
    splits: BTreeMap<NodeId, SplitPlan>,
    ids: Counter,
}

impl MobileState {
    pub fn epc(&self) -> Option<&EpcState> {
        self.epc.as_ref()
    }

    pub fn bearer(&self, id: &BearerId) -> Option<&Bearer> {
        self.bearers.get(id)
    }

    pub fn bearers(&self) -> impl Iterator<Item = &Bearer> {
        self.bearers.values()
    }

    pub(crate) fn bearers_mut(&mut self) -> impl Iterator<Item = &mut Bearer> {
        self.bearers.values_mut()
    }

    pub fn split(&self, enb: &NodeId) -> Option<&SplitPlan> {
        self.splits.get(enb)
    }

    pub fn splits(&self) -> impl Iterator<Item = &SplitPlan> {
        self.splits.values()
    }

    /// `bearer | enb | gbr | state | service`
    pub fn dump_bearers(&self) -> Vec<String> {
        self.bearers
            .values()
            .map(|b| {
                let state = serde_json::to_value(b.state).expect("state serializes");
                format!(
                    "{} | {} | {} | {} | {}",
                    b.id,
                    b.enb_id,
                    rational::format(&b.qos.gbr_mbps),
                    state.as_str().unwrap_or_default(),
                    b.transport_service
                )
            })
            .collect()
    }

    /// `enb | option | tier | graph`
    pub fn dump_splits(&self) -> Vec<String> {
        self.splits
            .values()
            .map(|s| {
                let tier = serde_json::to_value(s.tier).expect("tier serializes");
                let graph = s.deployment.as_ref().map_or("-", |g| g.as_str());
                format!("{} | {} | {} | {}", s.enb_id, s.chosen, tier.as_str().unwrap_or_default(), graph)
            })
            .collect()
    }

    /// QoS of Active bearers, interface endpoints, split deployments.
    pub fn check_invariants(&self, p: &Platform) -> Result<(), String> {
        for b in self.bearers.values().filter(|b| b.state == BearerState::Active) {
            let svc = p.net.service(&b.transport_service).ok_or_else(|| format!("bearer {} lost its service", b.id))?;
            if svc.request.bw_mbps < b.qos.gbr_mbps {
                return Err(format!("bearer {} under-provisioned", b.id));
            }
            if b.qos.max_latency_ms.is_some_and(|m| svc.plan.total_latency_ms > m) {
                return Err(format!("bearer {} violates its latency bound", b.id));
            }
        }
        if let Some(epc) = &self.epc {
            for i in &epc.interfaces {
                if p.topo.node(&i.a).is_none() || p.topo.node(&i.b).is_none() {
                    return Err(format!("interface {:?} {}-{} has a missing endpoint", i.kind, i.a, i.b));
                }
            }
        }
        for s in self.splits.values() {
            if let Some(g) = &s.deployment {
                if p.nfv.embedding(g).is_none_or(|e| e.state == EmbeddingState::Torn) {
                    return Err(format!("split plan for {} points at dead graph {g}", s.enb_id));
                }
            }
        }
        Ok(())
    }
}

fn role_type(p: &Platform, want: impl Fn(&VnfRole) -> bool, label: &str) -> Result<VnfTypeId, NfvError> {
    p.topo
        .vnf_catalog()
        .values()
        .find(|d| want(&d.role))
        .map(|d| d.type_id.clone())
        .ok_or_else(|| NfvError::UnknownType(VnfTypeId::new(label)))
}

const EPC_GRAPH: &str = "epc";

impl Platform {
    /// Deploys MME, SGW and PGW as one forwarding graph with the S11 and
    /// S5 edges.
    pub fn bootstrap_epc(&mut self, tenant: &TenantId, placement: &BTreeMap<String, Tier>) -> Result<EpcState, MobileError> {
        if self.mobile.epc.is_some() {
            return Err(MobileError::AlreadyBootstrapped);
        }
        let mme = role_type(self, |r| *r == VnfRole::Mme, "mme")?;
        let sgw = role_type(self, |r| *r == VnfRole::Sgw, "sgw")?;
        let pgw = role_type(self, |r| *r == VnfRole::Pgw, "pgw")?;
        let s = &self.topo.settings;
        let graph = ForwardingGraph {
            id: GraphId::new(EPC_GRAPH),
            tenant_id: tenant.clone(),
            nodes: vec![
                GraphNode::vnf("mme", mme.as_str()),
                GraphNode::vnf("sgw", sgw.as_str()),
                GraphNode::vnf("pgw", pgw.as_str()),
            ],
            edges: vec![GraphEdge::new("s11", "mme", "sgw", s.s11_bw_mbps), GraphEdge::new("s5", "sgw", "pgw", s.s5_bw_mbps)],
            placement_hints: placement.clone(),
        };
        self.transaction(|p| {
            let emb = p.deploy_forwarding_graph(graph)?;
            let attach = |n: &str| p.attach_node(&emb, n).expect("deployed nodes attach");
            let iface = |kind, a: &str, b: &str, edge: &str| Interface {
                kind,
                a: attach(a),
                b: attach(b),
                service: emb.edges.get(&crate::ids::EdgeId::new(edge)).cloned(),
            };
            let epc = EpcState {
                tenant_id: tenant.clone(),
                graph_id: emb.graph.id.clone(),
                mme: emb.placements["mme"].clone(),
                sgw: emb.placements["sgw"].clone(),
                pgw: emb.placements["pgw"].clone(),
                interfaces: vec![iface(InterfaceKind::S11, "mme", "sgw", "s11"), iface(InterfaceKind::S5, "sgw", "pgw", "s5")],
            };
            p.mobile.epc = Some(epc.clone());
            Ok(epc)
        })
    }

    /// Current attach node of the SGW.
    pub fn sgw_attach(&self) -> Result<NodeId, MobileError> {
        let epc = self.mobile.epc.as_ref().ok_or(MobileError::EpcNotReady)?;
        let emb = self.nfv.embedding(&epc.graph_id).filter(|e| e.state != EmbeddingState::Torn);
        emb.and_then(|e| self.attach_node(e, "sgw")).ok_or(MobileError::EpcNotReady)
    }

    fn check_enb(&self, enb: &NodeId) -> Result<(), MobileError> {
        match self.topo.node(enb) {
            Some(n) if n.kind == NodeKind::Enb => Ok(()),
            _ => Err(MobileError::UnknownEnb(enb.clone())),
        }
    }

    /// Requests transport from the eNB to the SGW matching the bearer QoS.
    pub fn establish_bearer(&mut self, enb: &NodeId, qos: Qos) -> Result<Bearer, MobileError> {
        let sgw = self.sgw_attach()?;
        self.check_enb(enb)?;
        let tenant = self.mobile.epc.as_ref().expect("checked").tenant_id.clone();
        self.transaction(|p| {
            p.faults.step("provision:bearer")?;
            let req = E2ERequest {
                id: None,
                tenant_id: tenant,
                src_node: enb.clone(),
                dst_node: sgw.clone(),
                bw_mbps: qos.gbr_mbps,
                max_latency_ms: qos.max_latency_ms,
                slice_id: None,
            };
            let svc = p
                .net
                .provision_e2e(&mut p.topo, req)
                .map_err(|e| MobileError::TransportInfeasible { cause: format!("{}: {e}", e.kind()) })?;
            let bearer = Bearer {
                id: BearerId::new(p.mobile.ids.next("bearer")),
                enb_id: enb.clone(),
                qos: qos.clone(),
                transport_service: svc.id,
                state: BearerState::Active,
            };
            let epc = p.mobile.epc.as_mut().expect("checked");
            if !epc.interfaces.iter().any(|i| i.kind == InterfaceKind::S1 && i.a == *enb) {
                epc.interfaces.push(Interface { kind: InterfaceKind::S1, a: enb.clone(), b: sgw, service: None });
            }
            p.mobile.bearers.insert(bearer.id.clone(), bearer.clone());
            Ok(bearer)
        })
    }

    pub fn release_bearer(&mut self, id: &BearerId) -> Result<(), MobileError> {
        let b = match self.mobile.bearers.get(id) {
            Some(b) if matches!(b.state, BearerState::Active | BearerState::Lost) => b.clone(),
            _ => return Err(MobileError::UnknownBearer(id.clone())),
        };
        self.transaction(|p| {
            if b.state == BearerState::Active {
                p.net.teardown_e2e(&mut p.topo, &b.transport_service)?;
            }
            p.mobile.bearers.get_mut(id).expect("checked").state = BearerState::Released;
            Ok(())
        })
    }

    /// Fails a link and reports what happened to every affected bearer.
    pub fn on_transport_failure(&mut self, link: &crate::ids::LinkId) -> Result<BTreeMap<BearerId, BearerOutcome>, MobileError> {
        Ok(self.link_down(link)?.bearers)
    }

    /// Provisions an eNB to eNB service and registers it as an X2 interface.
    pub fn establish_x2(&mut self, a: &NodeId, b: &NodeId, bw_mbps: Rational) -> Result<Interface, MobileError> {
        let tenant = self.mobile.epc.as_ref().ok_or(MobileError::EpcNotReady)?.tenant_id.clone();
        self.check_enb(a)?;
        self.check_enb(b)?;
        self.transaction(|p| {
            let req = E2ERequest::new(tenant.as_str(), a.as_str(), b.as_str(), bw_mbps);
            let svc = p
                .net
                .provision_e2e(&mut p.topo, req)
                .map_err(|e| MobileError::TransportInfeasible { cause: format!("{}: {e}", e.kind()) })?;
            let iface = Interface { kind: InterfaceKind::X2, a: a.clone(), b: b.clone(), service: Some(svc.id) };
            p.mobile.epc.as_mut().expect("checked").interfaces.push(iface.clone());
            Ok(iface)
        })
    }

    /// Deploys the central part of the radio stack for `enb` as a graph
    /// eNB -> RAN stack VNF -> SGW attach node.
    pub fn deploy_split(&mut self, enb: &NodeId, chosen: &SplitOption, tier: Tier) -> Result<SplitPlan, MobileError> {
        self.check_enb(enb)?;
        self.sgw_attach()?;
        if self.mobile.splits.contains_key(enb) {
            return Err(MobileError::SplitExists(enb.clone()));
        }
        self.transaction(|p| p.deploy_split_inner(enb, chosen, tier))
    }

    fn deploy_split_inner(&mut self, enb: &NodeId, chosen: &SplitOption, tier: Tier) -> Result<SplitPlan, MobileError> {
        let mut plan = SplitPlan { enb_id: enb.clone(), chosen: chosen.id.clone(), boundary: chosen.boundary, tier, deployment: None };
        let central = chosen.central_layers();
        if !central.is_empty() {
            let sgw = self.sgw_attach()?;
            let tenant = self.mobile.epc.as_ref().expect("checked").tenant_id.clone();
            let ran = role_type(self, |r| matches!(r, VnfRole::RanStack(l) if central.is_subset(l)), "ran_stack")?;
            let layers: Vec<String> = central
                .iter()
                .map(|l| serde_json::to_value(l).expect("layer serializes").as_str().unwrap_or_default().to_string())
                .collect();
            let mut cu = GraphNode::vnf("cu", ran.as_str());
            if let GraphNodeKind::Vnf { config, .. } = &mut cu.kind {
                config.insert("layers".into(), layers.join(","));
            }
            let mut fh = GraphEdge::new("fh", "enb", "cu", chosen.fronthaul_bw_mbps);
            fh.max_latency_ms = chosen.fronthaul_latency_budget_ms;
            let graph = ForwardingGraph {
                id: GraphId::new(format!("split-{enb}")),
                tenant_id: tenant,
                nodes: vec![GraphNode::endpoint("enb", enb.as_str()), cu, GraphNode::endpoint("sgw", sgw.as_str())],
                edges: vec![fh, GraphEdge::new("s1", "cu", "sgw", self.topo.settings.s1_bw_mbps)],
                placement_hints: BTreeMap::from([("cu".to_string(), tier)]),
            };
            plan.deployment = Some(self.deploy_forwarding_graph(graph)?.graph.id);
        }
        self.faults.step("record:split")?;
        self.mobile.splits.insert(enb.clone(), plan.clone());
        Ok(plan)
    }

    /// Selects from the scenario's split table and deploys the choice.
    pub fn select_and_deploy_split(&mut self, enb: &NodeId, state: &FronthaulState, tier: Tier) -> Result<SplitPlan, MobileError> {
        let chosen = select_split(self.topo.split_table(), state)?.clone();
        self.deploy_split(enb, &chosen, tier)
    }

    /// Re-runs selection under new fronthaul conditions and swaps the
    /// deployment when the choice changes.
    pub fn reevaluate_split(&mut self, enb: &NodeId, state: &FronthaulState) -> Result<SplitPlan, MobileError> {
        let plan = self.mobile.splits.get(enb).cloned().ok_or_else(|| MobileError::NoSplitPlan(enb.clone()))?;
        let chosen = select_split(self.topo.split_table(), state)?.clone();
        if chosen.id == plan.chosen {
            return Ok(plan);
        }
        self.transaction(|p| {
            if let Some(g) = &plan.deployment {
                p.teardown_forwarding_graph(g)?;
            }
            p.mobile.splits.remove(enb);
            p.deploy_split_inner(enb, &chosen, plan.tier)
        })
    }
}
