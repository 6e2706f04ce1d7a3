//! VNF catalog, per-VNF lifecycle and forwarding-graph orchestration.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cloud::{CloudError, VmSpec, VmState};
use crate::faults::InjectedFault;
use crate::ids::{Counter, DcId, EdgeId, GraphId, ImageId, NodeId, ServiceId, TenantId, VmId, VnfId, VnfTypeId};
use crate::model::Tier;
use crate::netorch::{E2ERequest, NetError};
use crate::platform::Platform;
use crate::rational::{serde_opt_rational, serde_rational, Rational};

/// Radio protocol layers, bottom to top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioLayer {
    Phy,
    Mac,
    Rlc,
    Pdcp,
    Rrc,
}

impl RadioLayer {
    pub const ALL: [RadioLayer; 5] = [RadioLayer::Phy, RadioLayer::Mac, RadioLayer::Rlc, RadioLayer::Pdcp, RadioLayer::Rrc];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VnfRole {
    Mme,
    Sgw,
    Pgw,
    RanStack(BTreeSet<RadioLayer>),
    Firewall,
    LoadBalancer,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfDescriptor {
    pub type_id: VnfTypeId,
    pub role: VnfRole,
    pub cpu: u64,
    pub ram_mb: u64,
    pub disk_gb: u64,
    pub image_id: ImageId,
    #[serde(default)]
    pub config_schema: Vec<String>,
}

impl VnfDescriptor {
    pub fn vm_spec(&self, tier: Option<Tier>) -> VmSpec {
        VmSpec {
            cpu: self.cpu,
            ram_mb: self.ram_mb,
            disk_gb: self.disk_gb,
            image_id: self.image_id.clone(),
            preferred_tier: tier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NfvError {
    #[error("unknown vnf type {0}")]
    UnknownType(VnfTypeId),
    #[error("unknown vnf instance {0}")]
    UnknownVnf(VnfId),
    #[error("unknown graph {0}")]
    UnknownGraph(GraphId),
    #[error("unknown tenant {0}")]
    UnknownTenant(TenantId),
    #[error("graph {0} is already deployed")]
    DuplicateGraph(GraphId),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("missing config key {key}")]
    MissingConfigKey { key: String },
    #[error("cannot {op} a vnf in state {from:?}")]
    InvalidTransition { from: VnfState, op: &'static str },
    #[error("vnf {vnf} belongs to deployed graph {graph}")]
    VnfInUse { vnf: VnfId, graph: GraphId },
    #[error("vnf {0} is not running")]
    NotRunning(VnfId),
    #[error("vnf {0} is not part of a deployed graph")]
    NotInEmbedding(VnfId),
    #[error("no placement for graph node {node}: {cause}")]
    PlacementFailed { node: String, cause: String },
    #[error("connectivity for edge {edge} failed: {cause}")]
    ConnectivityFailed { edge: EdgeId, cause: String },
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Injected(#[from] InjectedFault),
}

impl NfvError {
    pub fn kind(&self) -> &'static str {
        match self {
            NfvError::UnknownType(_) => "UnknownType",
            NfvError::UnknownVnf(_) => "UnknownVnf",
            NfvError::UnknownGraph(_) => "UnknownGraph",
            NfvError::UnknownTenant(_) => "UnknownTenant",
            NfvError::DuplicateGraph(_) => "DuplicateGraph",
            NfvError::InvalidGraph(_) => "InvalidGraph",
            NfvError::MissingConfigKey { .. } => "MissingConfigKey",
            NfvError::InvalidTransition { .. } => "InvalidTransition",
            NfvError::VnfInUse { .. } => "VnfInUse",
            NfvError::NotRunning(_) => "NotRunning",
            NfvError::NotInEmbedding(_) => "NotInEmbedding",
            NfvError::PlacementFailed { .. } => "PlacementFailed",
            NfvError::ConnectivityFailed { .. } => "ConnectivityFailed",
            NfvError::Cloud(e) => e.kind(),
            NfvError::Net(e) => e.kind(),
            NfvError::Injected(_) => "InjectedFault",
        }
    }

    fn is_injected(&self) -> bool {
        matches!(self, NfvError::Injected(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VnfState {
    Created,
    Configured,
    Running,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VnfInstance {
    pub id: VnfId,
    pub type_id: VnfTypeId,
    pub vm_id: VmId,
    pub state: VnfState,
    pub config: BTreeMap<String, String>,
    /// Every state the instance has been in, oldest first.
    pub history: Vec<VnfState>,
}

impl VnfInstance {
    fn transition(&mut self, to: VnfState) {
        self.state = to;
        self.history.push(to);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphNodeKind {
    Vnf {
        type_id: VnfTypeId,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        config: BTreeMap<String, String>,
    },
    Endpoint {
        node_id: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub name: String,
    #[serde(flatten)]
    pub kind: GraphNodeKind,
}

impl GraphNode {
    pub fn vnf(name: &str, type_id: &str) -> Self {
        Self { name: name.into(), kind: GraphNodeKind::Vnf { type_id: type_id.into(), config: BTreeMap::new() } }
    }

    pub fn endpoint(name: &str, node: &str) -> Self {
        Self { name: name.into(), kind: GraphNodeKind::Endpoint { node_id: node.into() } }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub id: EdgeId,
    pub from: String,
    pub to: String,
    #[serde(with = "serde_rational")]
    pub bw_mbps: Rational,
    #[serde(default, with = "serde_opt_rational", skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<Rational>,
}

impl GraphEdge {
    pub fn new(id: &str, from: &str, to: &str, bw_mbps: Rational) -> Self {
        Self { id: id.into(), from: from.into(), to: to.into(), bw_mbps, max_latency_ms: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardingGraph {
    pub id: GraphId,
    pub tenant_id: TenantId,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub placement_hints: BTreeMap<String, Tier>,
}

impl ForwardingGraph {
    pub fn node(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn incident_edges<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a GraphEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == name || e.to == name)
    }

    fn validate_shape(&self) -> Result<(), NfvError> {
        let bad = |m: String| Err(NfvError::InvalidGraph(m));
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if n.name.is_empty() {
                return bad("empty node name".into());
            }
            if !names.insert(n.name.as_str()) {
                return bad(format!("duplicate node {}", n.name));
            }
        }
        let mut ids = BTreeSet::new();
        for e in &self.edges {
            if !ids.insert(&e.id) {
                return bad(format!("duplicate edge {}", e.id));
            }
            for end in [&e.from, &e.to] {
                if !names.contains(end.as_str()) {
                    return bad(format!("edge {} references unknown node {end}", e.id));
                }
            }
            if e.from == e.to {
                return bad(format!("edge {} is a self loop", e.id));
            }
            if e.bw_mbps < Rational::from_integer(0) {
                return bad(format!("edge {} has negative bandwidth", e.id));
            }
        }
        if let Some(hint) = self.placement_hints.keys().find(|h| !names.contains(h.as_str())) {
            return bad(format!("placement hint for unknown node {hint}"));
        }
        // Undirected connectivity.
        if let Some(first) = self.nodes.first() {
            let mut seen = BTreeSet::from([first.name.as_str()]);
            let mut queue = VecDeque::from([first.name.as_str()]);
            while let Some(n) = queue.pop_front() {
                for e in self.incident_edges(n) {
                    let other = if e.from == n { e.to.as_str() } else { e.from.as_str() };
                    if seen.insert(other) {
                        queue.push_back(other);
                    }
                }
            }
            if seen.len() != self.nodes.len() {
                return bad("graph is not connected".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingState {
    Deployed,
    Degraded,
    Torn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    pub graph: ForwardingGraph,
    /// Graph node name to VNF instance.
    pub placements: BTreeMap<String, VnfId>,
    /// Edge id to the e2e service realizing it.
    pub edges: BTreeMap<EdgeId, ServiceId>,
    pub state: EmbeddingState,
}

impl GraphEmbedding {
    pub fn id(&self) -> &GraphId {
        &self.graph.id
    }

    pub fn node_of(&self, vnf: &VnfId) -> Option<&str> {
        self.placements.iter().find(|(_, v)| *v == vnf).map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfvOrchestrator {
    instances: BTreeMap<VnfId, VnfInstance>,
    embeddings: BTreeMap<GraphId, GraphEmbedding>,
    ids: Counter,
}

/// Leaf placements tried by one deploy before giving up.
const MAX_PLACEMENT_ATTEMPTS: usize = 64;

impl NfvOrchestrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn instance(&self, id: &VnfId) -> Option<&VnfInstance> {
        self.instances.get(id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &VnfInstance> {
        self.instances.values()
    }

    pub fn embedding(&self, id: &GraphId) -> Option<&GraphEmbedding> {
        self.embeddings.get(id)
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &GraphEmbedding> {
        self.embeddings.values()
    }

    pub(crate) fn embeddings_mut(&mut self) -> impl Iterator<Item = &mut GraphEmbedding> {
        self.embeddings.values_mut()
    }

    /// The live embedding holding `vnf`, if any.
    pub fn owner_of(&self, vnf: &VnfId) -> Option<&GraphEmbedding> {
        self.embeddings
            .values()
            .find(|e| e.state != EmbeddingState::Torn && e.placements.values().any(|v| v == vnf))
    }

    /// `graph | node | vnf@dc or endpoint | state` and
    /// `graph | edge | from->to | service`
    pub fn dump_embeddings(&self, p: &Platform) -> Vec<String> {
        let mut out = Vec::new();
        for e in self.embeddings.values() {
            let state = serde_json::to_value(e.state).expect("state serializes");
            let state = state.as_str().unwrap_or_default().to_string();
            for n in &e.graph.nodes {
                let place = match &n.kind {
                    GraphNodeKind::Endpoint { node_id } => format!("endpoint {node_id}"),
                    GraphNodeKind::Vnf { type_id, .. } => {
                        let vnf = &e.placements[&n.name];
                        let dc = self.dc_of(p, vnf).map(|d| d.to_string()).unwrap_or_else(|| "-".into());
                        format!("{type_id} {vnf}@{dc}")
                    }
                };
                out.push(format!("{} | {} | {} | {}", e.graph.id, n.name, place, state));
            }
            for edge in &e.graph.edges {
                let svc = e.edges.get(&edge.id).map_or("-", |s| s.as_str());
                out.push(format!("{} | {} | {}->{} | {}", e.graph.id, edge.id, edge.from, edge.to, svc));
            }
        }
        out
    }

    fn dc_of(&self, p: &Platform, vnf: &VnfId) -> Option<DcId> {
        let inst = self.instances.get(vnf)?;
        p.cloud.vm(&inst.vm_id).map(|vm| vm.dc_id.clone())
    }

    /// Lifecycle legality, VM backing, and joint consistency of every
    /// Deployed embedding.
    pub fn check_invariants(&self, p: &Platform) -> Result<(), String> {
        for inst in self.instances.values() {
            if inst.history.first() != Some(&VnfState::Created) || inst.history.last() != Some(&inst.state) {
                return Err(format!("vnf {} history inconsistent", inst.id));
            }
            if !is_legal_history(&inst.history) {
                return Err(format!("vnf {} has illegal history {:?}", inst.id, inst.history));
            }
            let vm = p.cloud.vm(&inst.vm_id).ok_or_else(|| format!("vnf {} lost vm {}", inst.id, inst.vm_id))?;
            let live = vm.state == VmState::Active;
            if live == (inst.state == VnfState::Terminated) {
                return Err(format!("vnf {} state {:?} with vm {}", inst.id, inst.state, vm.state));
            }
        }
        for e in self.embeddings.values() {
            if e.state != EmbeddingState::Deployed {
                continue;
            }
            for (name, vnf) in &e.placements {
                if self.instances.get(vnf).map(|i| i.state) != Some(VnfState::Running) {
                    return Err(format!("graph {} node {name} not running", e.graph.id));
                }
            }
            for edge in &e.graph.edges {
                let sid = e.edges.get(&edge.id).ok_or_else(|| format!("graph {} edge {} unrealized", e.graph.id, edge.id))?;
                let svc = p.net.service(sid).ok_or_else(|| format!("graph {} edge {} lost service", e.graph.id, edge.id))?;
                let want = (p.attach_node(e, &edge.from), p.attach_node(e, &edge.to));
                if (Some(svc.request.src_node.clone()), Some(svc.request.dst_node.clone())) != want {
                    return Err(format!("graph {} edge {} endpoints out of date", e.graph.id, edge.id));
                }
            }
        }
        Ok(())
    }
}

/// Created, then optionally Configured, then optionally Running, with
/// Terminated allowed as the final state from anywhere.
pub fn is_legal_history(history: &[VnfState]) -> bool {
    history.windows(2).all(|w| match (w[0], w[1]) {
        (VnfState::Terminated, _) => false,
        (_, VnfState::Terminated) => true,
        (a, b) => b as u8 == a as u8 + 1,
    }) && history.first() == Some(&VnfState::Created)
}

impl Platform {
    pub fn instantiate_vnf(&mut self, type_id: &VnfTypeId, hint: Option<Tier>) -> Result<VnfInstance, NfvError> {
        let desc = self.topo.vnf_catalog().get(type_id).ok_or_else(|| NfvError::UnknownType(type_id.clone()))?;
        let spec = desc.vm_spec(hint);
        let vm = self.cloud.create_vm(&mut self.topo, &spec)?;
        Ok(self.nfv_register(type_id, vm.id))
    }

    fn instantiate_vnf_at(&mut self, type_id: &VnfTypeId, dc: &DcId) -> Result<VnfInstance, NfvError> {
        let desc = self.topo.vnf_catalog().get(type_id).ok_or_else(|| NfvError::UnknownType(type_id.clone()))?;
        let spec = desc.vm_spec(None);
        let vm = self.cloud.create_vm_at(&mut self.topo, &spec, dc)?;
        Ok(self.nfv_register(type_id, vm.id))
    }

    fn nfv_register(&mut self, type_id: &VnfTypeId, vm_id: VmId) -> VnfInstance {
        let inst = VnfInstance {
            id: VnfId::new(self.nfv.ids.next("vnf")),
            type_id: type_id.clone(),
            vm_id,
            state: VnfState::Created,
            config: BTreeMap::new(),
            history: vec![VnfState::Created],
        };
        self.nfv.instances.insert(inst.id.clone(), inst.clone());
        inst
    }

    fn live_instance(&mut self, id: &VnfId) -> Result<&mut VnfInstance, NfvError> {
        self.nfv.instances.get_mut(id).ok_or_else(|| NfvError::UnknownVnf(id.clone()))
    }

    pub fn configure_vnf(&mut self, id: &VnfId, config: BTreeMap<String, String>) -> Result<VnfInstance, NfvError> {
        let inst = self.nfv.instances.get(id).ok_or_else(|| NfvError::UnknownVnf(id.clone()))?;
        if inst.state != VnfState::Created {
            return Err(NfvError::InvalidTransition { from: inst.state, op: "configure" });
        }
        let schema = &self.topo.vnf_catalog()[&inst.type_id].config_schema;
        if let Some(key) = schema.iter().find(|k| !config.contains_key(*k)) {
            return Err(NfvError::MissingConfigKey { key: key.clone() });
        }
        let inst = self.live_instance(id)?;
        inst.config = config;
        inst.transition(VnfState::Configured);
        Ok(inst.clone())
    }

    pub fn start_vnf(&mut self, id: &VnfId) -> Result<VnfInstance, NfvError> {
        let inst = self.live_instance(id)?;
        if inst.state != VnfState::Configured {
            return Err(NfvError::InvalidTransition { from: inst.state, op: "start" });
        }
        inst.transition(VnfState::Running);
        Ok(inst.clone())
    }

    /// Terminates a VNF and deletes its VM. VNFs held by a live graph must
    /// be removed through the graph.
    pub fn terminate_vnf(&mut self, id: &VnfId) -> Result<(), NfvError> {
        if let Some(e) = self.nfv.owner_of(id) {
            return Err(NfvError::VnfInUse { vnf: id.clone(), graph: e.graph.id.clone() });
        }
        self.terminate_unchecked(id)
    }

    fn terminate_unchecked(&mut self, id: &VnfId) -> Result<(), NfvError> {
        let inst = self.nfv.instances.get(id).ok_or_else(|| NfvError::UnknownVnf(id.clone()))?;
        if inst.state == VnfState::Terminated {
            return Err(NfvError::InvalidTransition { from: inst.state, op: "terminate" });
        }
        let vm = inst.vm_id.clone();
        self.cloud.delete_vm(&mut self.topo, &vm)?;
        self.live_instance(id)?.transition(VnfState::Terminated);
        Ok(())
    }

    /// Network attach point of a graph node: the DC attach node for VNFs,
    /// the node itself for endpoints.
    pub fn attach_node(&self, e: &GraphEmbedding, name: &str) -> Option<NodeId> {
        match &e.graph.node(name)?.kind {
            GraphNodeKind::Endpoint { node_id } => Some(node_id.clone()),
            GraphNodeKind::Vnf { .. } => {
                let dc = self.nfv.dc_of(self, e.placements.get(name)?)?;
                self.topo.datacenter(&dc).map(|d| d.attach_node.clone())
            }
        }
    }

    /// Opaque address of a graph node, used as a peer config value.
    fn peer_address(&self, e: &GraphEmbedding, name: &str) -> String {
        match &e.graph.node(name).map(|n| &n.kind) {
            Some(GraphNodeKind::Endpoint { node_id }) => format!("node:{node_id}"),
            _ => e
                .placements
                .get(name)
                .and_then(|v| self.nfv.instances.get(v))
                .and_then(|i| self.cloud.vm(&i.vm_id))
                .map(|vm| vm.address().to_string())
                .unwrap_or_default(),
        }
    }

    fn peer_config(&self, e: &GraphEmbedding, name: &str) -> BTreeMap<String, String> {
        let mut cfg = match &e.graph.node(name).map(|n| &n.kind) {
            Some(GraphNodeKind::Vnf { config, .. }) => config.clone(),
            _ => BTreeMap::new(),
        };
        for edge in e.graph.incident_edges(name) {
            let other = if edge.from == name { &edge.to } else { &edge.from };
            cfg.insert(format!("peer.{}", edge.id), self.peer_address(e, other));
        }
        cfg
    }

    fn provision_edge(&mut self, e: &GraphEmbedding, edge: &GraphEdge) -> Result<ServiceId, NfvError> {
        let (Some(src), Some(dst)) = (self.attach_node(e, &edge.from), self.attach_node(e, &edge.to)) else {
            return Err(NfvError::InvalidGraph(format!("edge {} has no attach point", edge.id)));
        };
        let req = E2ERequest {
            id: None,
            tenant_id: e.graph.tenant_id.clone(),
            src_node: src,
            dst_node: dst,
            bw_mbps: edge.bw_mbps,
            max_latency_ms: edge.max_latency_ms,
            slice_id: None,
        };
        match self.net.provision_e2e(&mut self.topo, req) {
            Ok(svc) => Ok(svc.id),
            Err(err) => Err(NfvError::ConnectivityFailed { edge: edge.id.clone(), cause: format!("{}: {err}", err.kind()) }),
        }
    }

    fn validate_graph(&self, graph: &ForwardingGraph) -> Result<(), NfvError> {
        graph.validate_shape()?;
        if self.topo.tenant(&graph.tenant_id).is_none() {
            return Err(NfvError::UnknownTenant(graph.tenant_id.clone()));
        }
        if self.nfv.embeddings.get(&graph.id).is_some_and(|e| e.state != EmbeddingState::Torn) {
            return Err(NfvError::DuplicateGraph(graph.id.clone()));
        }
        for n in &graph.nodes {
            match &n.kind {
                GraphNodeKind::Vnf { type_id, .. } => {
                    if !self.topo.vnf_catalog().contains_key(type_id) {
                        return Err(NfvError::UnknownType(type_id.clone()));
                    }
                }
                GraphNodeKind::Endpoint { node_id } => {
                    if self.topo.node(node_id).is_none() {
                        return Err(NfvError::InvalidGraph(format!("endpoint {} references unknown node {node_id}", n.name)));
                    }
                }
            }
        }
        Ok(())
    }

    fn restore_from(&mut self, saved: Platform) {
        let faults = std::mem::take(&mut self.faults);
        *self = saved;
        self.faults = faults;
    }

    /// Places every VNF, configures and starts them, then provisions one e2e
    /// service per edge. Placement follows hints and the cloud heuristic
    /// first and backtracks over alternative DCs when a later step fails.
    pub fn deploy_forwarding_graph(&mut self, graph: ForwardingGraph) -> Result<GraphEmbedding, NfvError> {
        self.validate_graph(&graph)?;
        self.transaction(|p| {
            let vnf_nodes: Vec<String> = graph
                .nodes
                .iter()
                .filter(|n| matches!(n.kind, GraphNodeKind::Vnf { .. }))
                .map(|n| n.name.clone())
                .collect();
            let mut emb = GraphEmbedding {
                graph: graph.clone(),
                placements: BTreeMap::new(),
                edges: BTreeMap::new(),
                state: EmbeddingState::Deployed,
            };
            let mut budget = MAX_PLACEMENT_ATTEMPTS;
            let mut first_err = None;
            if p.place_and_realize(&mut emb, &vnf_nodes, &mut budget, &mut first_err)? {
                p.faults.step("commit")?;
                p.nfv.embeddings.insert(graph.id.clone(), emb.clone());
                Ok(emb)
            } else {
                Err(first_err.expect("a failed search records its first error"))
            }
        })
    }

    /// Depth-first search over DC assignments. Returns `Ok(false)` when no
    /// assignment worked; injected faults abort the search.
    fn place_and_realize(
        &mut self,
        emb: &mut GraphEmbedding,
        vnf_nodes: &[String],
        budget: &mut usize,
        first_err: &mut Option<NfvError>,
    ) -> Result<bool, NfvError> {
        let depth = emb.placements.len();
        if depth == vnf_nodes.len() {
            if *budget == 0 {
                return Ok(false);
            }
            *budget -= 1;
            let saved = self.clone();
            return match self.realize(emb) {
                Ok(()) => Ok(true),
                Err(e) if e.is_injected() => Err(e),
                Err(e) => {
                    self.restore_from(saved);
                    emb.edges.clear();
                    first_err.get_or_insert(e);
                    Ok(false)
                }
            };
        }
        let name = &vnf_nodes[depth];
        let GraphNodeKind::Vnf { type_id, .. } = &emb.graph.node(name).expect("validated").kind else {
            unreachable!("vnf_nodes holds only vnf nodes")
        };
        let type_id = type_id.clone();
        let hint = emb.graph.placement_hints.get(name).copied();
        let spec = self.topo.vnf_catalog()[&type_id].vm_spec(hint);
        let candidates = match self.cloud.candidate_dcs(&self.topo, &spec) {
            Ok(c) => c,
            Err(e) => {
                first_err.get_or_insert(NfvError::PlacementFailed { node: name.clone(), cause: format!("{}: {e}", e.kind()) });
                return Ok(false);
            }
        };
        for dc in candidates {
            let saved = self.clone();
            self.faults.step(&format!("instantiate:{name}"))?;
            let inst = self.instantiate_vnf_at(&type_id, &dc)?;
            emb.placements.insert(name.clone(), inst.id);
            if self.place_and_realize(emb, vnf_nodes, budget, first_err)? {
                return Ok(true);
            }
            emb.placements.remove(name);
            self.restore_from(saved);
            if *budget == 0 {
                break;
            }
        }
        Ok(false)
    }

    /// Configures and starts every placed VNF and provisions every edge.
    fn realize(&mut self, emb: &mut GraphEmbedding) -> Result<(), NfvError> {
        for (name, vnf) in emb.placements.clone() {
            self.faults.step(&format!("configure:{name}"))?;
            let cfg = self.peer_config(emb, &name);
            self.configure_vnf(&vnf, cfg)?;
        }
        for (name, vnf) in emb.placements.clone() {
            self.faults.step(&format!("start:{name}"))?;
            self.start_vnf(&vnf)?;
        }
        for edge in emb.graph.edges.clone() {
            self.faults.step(&format!("provision:{}", edge.id))?;
            let sid = self.provision_edge(emb, &edge)?;
            emb.edges.insert(edge.id.clone(), sid);
        }
        Ok(())
    }

    /// Tears down every surviving edge service and terminates every VNF.
    pub fn teardown_forwarding_graph(&mut self, id: &GraphId) -> Result<(), NfvError> {
        let emb = match self.nfv.embeddings.get(id) {
            Some(e) if e.state != EmbeddingState::Torn => e.clone(),
            _ => return Err(NfvError::UnknownGraph(id.clone())),
        };
        self.transaction(|p| {
            for (edge, sid) in &emb.edges {
                p.faults.step(&format!("teardown:{edge}"))?;
                if p.net.service(sid).is_some() {
                    p.net.teardown_e2e(&mut p.topo, sid)?;
                }
            }
            for (name, vnf) in &emb.placements {
                p.faults.step(&format!("terminate:{name}"))?;
                if p.nfv.instances[vnf].state != VnfState::Terminated {
                    p.terminate_unchecked(vnf)?;
                }
            }
            p.faults.step("commit")?;
            let e = p.nfv.embeddings.get_mut(id).expect("checked");
            e.state = EmbeddingState::Torn;
            e.edges.clear();
            Ok(())
        })
    }

    /// Moves a VNF's VM and re-provisions every incident edge from the new
    /// attach point. All or nothing.
    pub fn migrate_vnf(&mut self, id: &VnfId, target: &DcId) -> Result<GraphEmbedding, NfvError> {
        let inst = self.nfv.instances.get(id).ok_or_else(|| NfvError::UnknownVnf(id.clone()))?;
        if inst.state != VnfState::Running {
            return Err(NfvError::NotRunning(id.clone()));
        }
        let vm_id = inst.vm_id.clone();
        let emb = match self.nfv.owner_of(id) {
            Some(e) if e.state == EmbeddingState::Deployed => e.clone(),
            _ => return Err(NfvError::NotInEmbedding(id.clone())),
        };
        if self.cloud.vm(&vm_id).is_some_and(|vm| vm.dc_id == *target) {
            return Ok(emb);
        }
        let name = emb.node_of(id).expect("owner holds the vnf").to_string();
        self.transaction(|p| {
            p.faults.step("migrate_vm")?;
            p.cloud.migrate_vm(&mut p.topo, &vm_id, target)?;
            let mut emb = emb.clone();
            let incident: Vec<GraphEdge> = emb.graph.incident_edges(&name).cloned().collect();
            for edge in &incident {
                p.faults.step(&format!("teardown:{}", edge.id))?;
                let old = emb.edges.remove(&edge.id).expect("deployed edges are realized");
                p.net.teardown_e2e(&mut p.topo, &old)?;
                p.faults.step(&format!("provision:{}", edge.id))?;
                let sid = p.provision_edge(&emb, edge)?;
                emb.edges.insert(edge.id.clone(), sid);
            }
            // Refresh peer addresses on both sides of every incident edge.
            let mut touched = BTreeSet::from([name.clone()]);
            for edge in &incident {
                touched.insert(edge.from.clone());
                touched.insert(edge.to.clone());
            }
            for n in touched {
                if let Some(vnf) = emb.placements.get(&n) {
                    let cfg = p.peer_config(&emb, &n);
                    p.live_instance(vnf)?.config = cfg;
                }
            }
            p.faults.step("commit")?;
            p.nfv.embeddings.insert(emb.graph.id.clone(), emb.clone());
            Ok(emb)
        })
    }
}
