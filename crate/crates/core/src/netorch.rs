//! Multi-domain network orchestrator: abstract topology, end-to-end path
//! composition across packet and optical domains, grooming onto shared
//! optical tunnels, tenant slices and service recovery.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::ids::{Counter, DomainId, LinkId, LspId, NodeId, PathId, ServiceId, SliceId, TenantId};
use crate::model::{ControllerKind, LinkScope, ModelError, Tech, Topology};
use crate::optical::{LspState, OpticalError, OpticalPce, Restoration};
use crate::packet::{self, Infeasibility, PacketController, PacketError, PathQuery, PathSpec, PathState};
use crate::rational::{self, serde_opt_rational, serde_rational, serde_rational_map, Rational};
use crate::routing::{self, Arc};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("no domain sequence ({0})")]
    NoDomainSequence(Infeasibility),
    #[error("segment {segment} failed: {cause}")]
    SegmentProvisioningFailed { segment: usize, cause: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown tenant {0}")]
    UnknownTenant(TenantId),
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
    #[error("unknown service {0}")]
    UnknownService(ServiceId),
    #[error("duplicate service {0}")]
    DuplicateService(ServiceId),
    #[error("duplicate slice {0}")]
    DuplicateSlice(SliceId),
    #[error("endpoint {0} is not a member of the slice")]
    EndpointNotInSlice(NodeId),
    #[error("slice {0} still carries services")]
    SliceNotEmpty(SliceId),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Optical(#[from] OpticalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl NetError {
    pub fn kind(&self) -> &'static str {
        match self {
            NetError::NoDomainSequence(_) => "NoDomainSequence",
            NetError::SegmentProvisioningFailed { .. } => "SegmentProvisioningFailed",
            NetError::InvalidRequest(_) => "InvalidRequest",
            NetError::UnknownTenant(_) => "UnknownTenant",
            NetError::UnknownSlice(_) => "UnknownSlice",
            NetError::UnknownService(_) => "UnknownService",
            NetError::DuplicateService(_) => "DuplicateService",
            NetError::DuplicateSlice(_) => "DuplicateSlice",
            NetError::EndpointNotInSlice(_) => "EndpointNotInSlice",
            NetError::SliceNotEmpty(_) => "SliceNotEmpty",
            NetError::Packet(e) => e.kind(),
            NetError::Optical(e) => e.kind(),
            NetError::Model(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2ERequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ServiceId>,
    pub tenant_id: TenantId,
    pub src_node: NodeId,
    pub dst_node: NodeId,
    #[serde(with = "serde_rational")]
    pub bw_mbps: Rational,
    #[serde(default, with = "serde_opt_rational", skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_id: Option<SliceId>,
}

impl E2ERequest {
    pub fn new(tenant: &str, src: &str, dst: &str, bw_mbps: Rational) -> Self {
        Self {
            id: None,
            tenant_id: tenant.into(),
            src_node: src.into(),
            dst_node: dst.into(),
            bw_mbps,
            max_latency_ms: None,
            slice_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    PacketPath(PathId),
    OpticalLsp(LspId),
    GroomedOnto(LspId),
}

impl Realization {
    pub fn lsp(&self) -> Option<&LspId> {
        match self {
            Realization::OpticalLsp(l) | Realization::GroomedOnto(l) => Some(l),
            Realization::PacketPath(_) => None,
        }
    }
}

impl fmt::Display for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Realization::PacketPath(p) => write!(f, "path:{p}"),
            Realization::OpticalLsp(l) => write!(f, "lsp:{l}"),
            Realization::GroomedOnto(l) => write!(f, "groomed:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub domain_id: DomainId,
    pub controller: ControllerKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub realized_by: Realization,
    /// Packet links of the path, or the optical route of the LSP.
    pub links: Vec<LinkId>,
    #[serde(with = "serde_rational")]
    pub latency_ms: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub segments: Vec<Segment>,
    #[serde(with = "serde_rational")]
    pub total_latency_ms: Rational,
}

impl SegmentPlan {
    fn recompute_latency(&mut self) {
        self.total_latency_ms = self.segments.iter().fold(Rational::zero(), |a, s| a + s.latency_ms);
    }

    /// Node sequence of the stitched walk, with each optical segment as a
    /// single virtual adjacency.
    pub fn walk(&self, topo: &Topology) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        for s in &self.segments {
            if out.is_empty() {
                out.push(s.src.clone());
            }
            match s.realized_by {
                Realization::PacketPath(_) => {
                    out.extend(s.links.iter().filter_map(|l| topo.link(l)).map(|l| l.dst.clone()));
                }
                _ => out.push(s.dst.clone()),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct E2EService {
    pub id: ServiceId,
    pub request: E2ERequest,
    pub plan: SegmentPlan,
}

impl E2EService {
    /// `svc | # | domain | controller | src->dst | realization | latency`
    pub fn dump_lines(&self) -> Vec<String> {
        if self.plan.segments.is_empty() {
            return vec![format!("{} | - | local | {}->{} | 0", self.id, self.request.src_node, self.request.dst_node)];
        }
        self.plan
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                format!(
                    "{} | {} | {} | {:?} | {}->{} | {} | {}",
                    self.id,
                    i,
                    s.domain_id,
                    s.controller,
                    s.src,
                    s.dst,
                    s.realized_by,
                    rational::format(&s.latency_ms)
                )
            })
            .collect()
    }
}

/// Groomed load carried by an optical LSP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tunnel {
    #[serde(with = "serde_rational")]
    pub load_mbps: Rational,
    pub orch_created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub id: SliceId,
    pub tenant_id: TenantId,
    pub member_nodes: BTreeSet<NodeId>,
    #[serde(with = "serde_rational_map")]
    pub dedicated_bw: BTreeMap<LinkId, Rational>,
    /// Carved bandwidth not currently used by the slice's services.
    #[serde(with = "serde_rational_map")]
    pub free: BTreeMap<LinkId, Rational>,
    pub services: BTreeSet<ServiceId>,
}

impl Slice {
    pub fn owner(&self) -> String {
        slice_owner(&self.id)
    }
}

/// Ledger requester id under which a slice holds carved bandwidth.
pub fn slice_owner(id: &SliceId) -> String {
    format!("slice:{id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractLinkKind {
    InterDomain(LinkId),
    Reachability(DomainId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractLink {
    pub kind: AbstractLinkKind,
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(with = "serde_rational")]
    pub max_free_bw_mbps: Rational,
    #[serde(with = "serde_rational")]
    pub min_latency_ms: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractTopology {
    pub nodes: BTreeSet<NodeId>,
    pub links: Vec<AbstractLink>,
}

impl AbstractTopology {
    pub fn inter_domain(&self, link: &LinkId) -> Option<&AbstractLink> {
        self.links.iter().find(|l| l.kind == AbstractLinkKind::InterDomain(link.clone()))
    }

    pub fn reachability(&self, src: &NodeId, dst: &NodeId) -> Option<&AbstractLink> {
        self.links
            .iter()
            .find(|l| matches!(l.kind, AbstractLinkKind::Reachability(_)) && l.src == *src && l.dst == *dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryOutcome {
    Recovered(SegmentPlan),
    Unrecoverable,
}

/// One hop of a route through the per-request abstract graph.
#[derive(Debug, Clone)]
enum Hop {
    Link(LinkId),
    Intra(Vec<LinkId>),
    Groom { lsp: LspId, src: NodeId, dst: NodeId },
    NewLsp { route: Vec<LinkId>, slot_start: u32, width: u32, src: NodeId, dst: NodeId },
}

/// Abstract-graph node names: `n:` for packet-side entry, `x:` for a
/// ROADM's exit side so optical adjacencies cannot chain.
fn in_name(n: &NodeId) -> String {
    format!("n:{n}")
}

fn out_name(n: &NodeId) -> String {
    format!("x:{n}")
}

/// Optical slot width needed to carry `bw_mbps`.
pub fn lsp_width(topo: &Topology, bw_mbps: Rational) -> u32 {
    let slots = bw_mbps / rational::int(1000) / topo.settings.gbps_per_slot;
    rational::ceil_u32(&slots).max(topo.settings.min_slot_width)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkOrchestrator {
    pub packet: PacketController,
    pub optical: OpticalPce,
    services: BTreeMap<ServiceId, E2EService>,
    slices: BTreeMap<SliceId, Slice>,
    tunnels: BTreeMap<LspId, Tunnel>,
    service_ids: Counter,
    slice_ids: Counter,
}

impl NetworkOrchestrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn service(&self, id: &ServiceId) -> Option<&E2EService> {
        self.services.get(id)
    }

    pub fn services(&self) -> impl Iterator<Item = &E2EService> {
        self.services.values()
    }

    pub fn slice(&self, id: &SliceId) -> Option<&Slice> {
        self.slices.get(id)
    }

    pub fn slices(&self) -> impl Iterator<Item = &Slice> {
        self.slices.values()
    }

    pub fn tunnel(&self, lsp: &LspId) -> Option<&Tunnel> {
        self.tunnels.get(lsp)
    }

    pub fn tunnels(&self) -> impl Iterator<Item = (&LspId, &Tunnel)> {
        self.tunnels.iter()
    }

    /// Free groomable capacity of a tunnel in Mbps.
    pub fn tunnel_free_mbps(&self, lsp: &LspId) -> Option<Rational> {
        let t = self.tunnels.get(lsp)?;
        let l = self.optical.lsp(lsp)?;
        Some(l.capacity_gbps * rational::int(1000) - t.load_mbps)
    }

    /// Active tunnels from `src` to `dst` able to absorb `bw_mbps`, best first
    /// by (latency, id).
    pub fn groomable(&self, src: &NodeId, dst: &NodeId, bw_mbps: Rational) -> Vec<LspId> {
        let mut v: Vec<(Rational, LspId)> = self
            .tunnels
            .keys()
            .filter_map(|id| self.optical.lsp(id))
            .filter(|l| l.state == LspState::Active && l.src == *src && l.dst == *dst)
            .filter(|l| self.tunnel_free_mbps(&l.id).is_some_and(|f| f >= bw_mbps))
            .map(|l| (l.latency_ms, l.id.clone()))
            .collect();
        v.sort();
        v.into_iter().map(|(_, id)| id).collect()
    }

    // ---- abstraction -------------------------------------------------------

    pub fn build_abstract_topology(&self, topo: &Topology, scope: Option<&SliceId>) -> Result<AbstractTopology, NetError> {
        let slice = match scope {
            Some(id) => Some(self.slices.get(id).ok_or_else(|| NetError::UnknownSlice(id.clone()))?),
            None => None,
        };
        let visible = |n: &NodeId| slice.is_none_or(|s| s.member_nodes.contains(n));
        let nodes: BTreeSet<NodeId> = topo.border_nodes().into_iter().filter(|n| visible(n)).collect();
        let free_of = |l: &crate::model::Link| -> Option<Rational> {
            match slice {
                Some(s) => s.free.get(&l.id).copied(),
                None => l.packet().map(|p| p.free_mbps()),
            }
        };
        let mut links = Vec::new();
        for l in topo.links().filter(|l| l.scope == LinkScope::InterDomain && l.up) {
            if !(visible(&l.src) && visible(&l.dst)) {
                continue;
            }
            let Some(free) = free_of(l) else { continue };
            links.push(AbstractLink {
                kind: AbstractLinkKind::InterDomain(l.id.clone()),
                src: l.src.clone(),
                dst: l.dst.clone(),
                max_free_bw_mbps: free,
                min_latency_ms: l.latency_ms(),
            });
        }
        for d in topo.domains() {
            let members: Vec<&NodeId> = nodes.iter().filter(|n| d.node_ids.contains(*n)).collect();
            for u in &members {
                for v in &members {
                    if u == v {
                        continue;
                    }
                    let reach = if d.tech == Tech::Optical {
                        if slice.is_some() {
                            None
                        } else {
                            self.optical_reachability(topo, u, v)
                        }
                    } else {
                        packet_reachability(topo, &d.id, u, v, slice.map(|s| &s.free))
                    };
                    if let Some((bw, lat)) = reach {
                        links.push(AbstractLink {
                            kind: AbstractLinkKind::Reachability(d.id.clone()),
                            src: (*u).clone(),
                            dst: (*v).clone(),
                            max_free_bw_mbps: bw,
                            min_latency_ms: lat,
                        });
                    }
                }
            }
        }
        Ok(AbstractTopology { nodes, links })
    }

    fn optical_reachability(&self, topo: &Topology, u: &NodeId, v: &NodeId) -> Option<(Rational, Rational)> {
        let down = topo.down_links();
        let arcs = crate::optical::optical_arcs(topo, &down);
        let lat = routing::shortest(&arcs, u.as_str(), v.as_str(), &BTreeSet::new(), |_| true)?.cost;
        let groom = self.groomable(u, v, Rational::zero()).first().and_then(|l| self.tunnel_free_mbps(l));
        let slots = topo.settings.slot_count;
        let fresh = (1..=slots)
            .rev()
            .find(|w| self.optical.rsa_compute(topo, u, v, *w, &down).is_ok())
            .map(|w| rational::int(w as i64) * topo.settings.gbps_per_slot * rational::int(1000));
        let best = groom.into_iter().chain(fresh).max()?;
        Some((best, lat))
    }

    // ---- provisioning ------------------------------------------------------

    fn validate(&self, topo: &Topology, req: &E2ERequest) -> Result<(), NetError> {
        if topo.tenant(&req.tenant_id).is_none() {
            return Err(NetError::UnknownTenant(req.tenant_id.clone()));
        }
        if req.bw_mbps < Rational::zero() {
            return Err(NetError::InvalidRequest("negative bandwidth".into()));
        }
        for n in [&req.src_node, &req.dst_node] {
            let tech = topo.node_tech(n).ok_or_else(|| NetError::Model(ModelError::UnknownNode(n.clone())))?;
            if !tech.is_packet_capable() {
                return Err(NetError::InvalidRequest(format!("endpoint {n} is not packet-capable")));
            }
        }
        if let Some(sid) = &req.slice_id {
            let s = self.slices.get(sid).ok_or_else(|| NetError::UnknownSlice(sid.clone()))?;
            if s.tenant_id != req.tenant_id {
                return Err(NetError::InvalidRequest(format!("slice {sid} belongs to another tenant")));
            }
            for n in [&req.src_node, &req.dst_node] {
                if !s.member_nodes.contains(n) {
                    return Err(NetError::EndpointNotInSlice(n.clone()));
                }
            }
        }
        Ok(())
    }

    /// Minimum-latency route over the request's abstract graph.
    fn route(&self, topo: &Topology, req: &E2ERequest, bw: Rational) -> Option<(Rational, Vec<Hop>)> {
        let slice = req.slice_id.as_ref().and_then(|s| self.slices.get(s));
        let visible = |n: &NodeId| slice.is_none_or(|s| s.member_nodes.contains(n));
        let mut anodes: BTreeSet<NodeId> = topo.border_nodes();
        anodes.insert(req.src_node.clone());
        anodes.insert(req.dst_node.clone());
        anodes.retain(|n| visible(n));

        let mut arcs: Vec<Arc> = Vec::new();
        let mut hops: BTreeMap<String, Hop> = BTreeMap::new();
        let is_optical = |n: &NodeId| topo.node_tech(n) == Some(Tech::Optical);

        for l in topo.links().filter(|l| l.scope == LinkScope::InterDomain && l.up) {
            if !(visible(&l.src) && visible(&l.dst)) {
                continue;
            }
            let free = match slice {
                Some(s) => s.free.get(&l.id).copied(),
                None => l.packet().map(|p| p.free_mbps()),
            };
            if free.is_none_or(|f| f < bw) {
                continue;
            }
            let from = if is_optical(&l.src) { out_name(&l.src) } else { in_name(&l.src) };
            arcs.push(Arc::new(l.id.as_str(), from, in_name(&l.dst), l.latency_ms()));
            hops.insert(l.id.to_string(), Hop::Link(l.id.clone()));
        }

        let width = lsp_width(topo, bw);
        let down = topo.down_links();
        for d in topo.domains() {
            let members: Vec<&NodeId> = anodes.iter().filter(|n| d.node_ids.contains(*n)).collect();
            for u in &members {
                for v in &members {
                    if u == v {
                        continue;
                    }
                    if d.tech == Tech::Optical {
                        if slice.is_some() {
                            continue;
                        }
                        if let Some(lsp) = self.groomable(u, v, bw).into_iter().next() {
                            let lat = self.optical.lsp(&lsp).expect("tunnel has lsp").latency_ms;
                            let key = format!("#{lsp}");
                            arcs.push(Arc::new(key.clone(), in_name(u), out_name(v), lat));
                            hops.insert(key, Hop::Groom { lsp, src: (*u).clone(), dst: (*v).clone() });
                        } else if let Ok(r) = self.optical.rsa_compute(topo, u, v, width, &down) {
                            let key = format!("+{u}>{v}");
                            arcs.push(Arc::new(key.clone(), in_name(u), out_name(v), r.latency_ms));
                            hops.insert(
                                key,
                                Hop::NewLsp {
                                    route: r.route,
                                    slot_start: r.slot_start,
                                    width,
                                    src: (*u).clone(),
                                    dst: (*v).clone(),
                                },
                            );
                        }
                    } else {
                        let q = PathQuery {
                            domains: Some([d.id.clone()].into()),
                            free_override: slice.map(|s| &s.free),
                            ..PathQuery::new(bw)
                        };
                        if let Ok((links, lat)) = packet::compute_packet_path(topo, u, v, &q) {
                            let key = format!("~{}:{u}>{v}", d.id);
                            arcs.push(Arc::new(key.clone(), in_name(u), in_name(v), lat));
                            hops.insert(key, Hop::Intra(links));
                        }
                    }
                }
            }
        }
        let r = routing::shortest(&arcs, &in_name(&req.src_node), &in_name(&req.dst_node), &BTreeSet::new(), |_| true)?;
        let seq = r.arcs.iter().map(|a| hops[a].clone()).collect();
        Some((r.cost, seq))
    }

    /// Composes and realizes an end-to-end plan. All-or-nothing.
    pub fn provision_e2e(&mut self, topo: &mut Topology, req: E2ERequest) -> Result<E2EService, NetError> {
        let saved = (topo.clone(), self.clone());
        let out = self.provision_inner(topo, req);
        if out.is_err() {
            (*topo, *self) = saved;
        }
        out
    }

    fn provision_inner(&mut self, topo: &mut Topology, mut req: E2ERequest) -> Result<E2EService, NetError> {
        self.validate(topo, &req)?;
        let id = match &req.id {
            Some(id) if self.services.contains_key(id) => return Err(NetError::DuplicateService(id.clone())),
            Some(id) => id.clone(),
            None => ServiceId::new(self.service_ids.next("svc")),
        };
        req.id = Some(id.clone());
        let plan = self.realize(topo, &id, &req)?;
        if let Some(sid) = &req.slice_id {
            self.slices.get_mut(sid).expect("validated").services.insert(id.clone());
        }
        let svc = E2EService { id: id.clone(), request: req, plan };
        self.services.insert(id, svc.clone());
        Ok(svc)
    }

    fn realize(&mut self, topo: &mut Topology, id: &ServiceId, req: &E2ERequest) -> Result<SegmentPlan, NetError> {
        if req.src_node == req.dst_node {
            return Ok(SegmentPlan { segments: Vec::new(), total_latency_ms: Rational::zero() });
        }
        let bw = req.bw_mbps;
        let Some((cost, hops)) = self.route(topo, req, bw) else {
            let relaxed = E2ERequest { slice_id: req.slice_id.clone(), ..req.clone() };
            let reason = match self.route(topo, &relaxed, Rational::zero()) {
                Some(_) => Infeasibility::Capacity,
                None => Infeasibility::Disconnected,
            };
            return Err(NetError::NoDomainSequence(reason));
        };
        if req.max_latency_ms.is_some_and(|m| cost > m) {
            return Err(NetError::NoDomainSequence(Infeasibility::Latency));
        }

        // Merge packet links by owning domain; optical hops stand alone.
        enum Item {
            Packet(DomainId, Vec<LinkId>),
            Optical(Hop),
        }
        let mut items: Vec<Item> = Vec::new();
        for hop in hops {
            let links = match hop {
                Hop::Link(l) => vec![l],
                Hop::Intra(ls) => ls,
                other => {
                    items.push(Item::Optical(other));
                    continue;
                }
            };
            for l in links {
                let owner = topo.owning_domain(topo.link(&l).expect("routed link")).expect("owned");
                match items.last_mut() {
                    Some(Item::Packet(d, ls)) if *d == owner => ls.push(l),
                    _ => items.push(Item::Packet(owner, vec![l])),
                }
            }
        }

        let mut segments = Vec::with_capacity(items.len());
        for (idx, item) in items.into_iter().enumerate() {
            let fail = |cause: String| NetError::SegmentProvisioningFailed { segment: idx, cause };
            let seg = match item {
                Item::Packet(domain, links) => {
                    if let Some(sid) = &req.slice_id {
                        let s = self.slices.get_mut(sid).expect("validated");
                        for l in &links {
                            topo.release_packet_bw(l, bw, &slice_owner(sid)).map_err(|e| fail(e.to_string()))?;
                            *s.free.get_mut(l).expect("carved link") -= bw;
                        }
                    }
                    let spec = PathSpec { links: links.clone(), bw_mbps: bw, owner_service: id.to_string() };
                    let path = self.packet.program_path(topo, spec).map_err(|e| fail(e.to_string()))?;
                    let controller = topo.domain(&domain).expect("domain").controller;
                    Segment {
                        domain_id: domain,
                        controller,
                        src: topo.link(&links[0]).expect("link").src.clone(),
                        dst: topo.link(links.last().expect("non-empty")).expect("link").dst.clone(),
                        latency_ms: topo.route_latency(&links),
                        realized_by: Realization::PacketPath(path.id),
                        links,
                    }
                }
                Item::Optical(Hop::Groom { lsp, src, dst }) => {
                    self.tunnels.get_mut(&lsp).expect("groomable").load_mbps += bw;
                    let l = self.optical.lsp(&lsp).expect("lsp");
                    Segment {
                        domain_id: topo.node(&src).expect("node").domain_id.clone(),
                        controller: ControllerKind::PceGmpls,
                        src,
                        dst,
                        links: l.route.clone(),
                        latency_ms: l.latency_ms,
                        realized_by: Realization::GroomedOnto(lsp),
                    }
                }
                Item::Optical(Hop::NewLsp { route, slot_start, width, src, dst }) => {
                    let lsp = self
                        .optical
                        .signal_lsp(topo, &route, slot_start, width, id.as_str())
                        .map_err(|e| fail(e.to_string()))?;
                    self.tunnels.insert(lsp.id.clone(), Tunnel { load_mbps: bw, orch_created: true });
                    Segment {
                        domain_id: topo.node(&src).expect("node").domain_id.clone(),
                        controller: ControllerKind::PceGmpls,
                        src,
                        dst,
                        links: route,
                        latency_ms: lsp.latency_ms,
                        realized_by: Realization::OpticalLsp(lsp.id),
                    }
                }
                Item::Optical(_) => unreachable!("packet hops are merged above"),
            };
            segments.push(seg);
        }
        let mut plan = SegmentPlan { segments, total_latency_ms: Rational::zero() };
        plan.recompute_latency();
        Ok(plan)
    }

    fn release_tunnel(&mut self, topo: &mut Topology, lsp: &LspId, bw: Rational) -> Result<(), NetError> {
        let t = self.tunnels.get_mut(lsp).ok_or_else(|| OpticalError::UnknownLsp(lsp.clone()))?;
        t.load_mbps -= bw;
        if t.load_mbps.is_zero() && t.orch_created && !topo.settings.retain_idle_tunnels {
            self.tunnels.remove(lsp);
            if self.optical.lsp(lsp).is_some_and(|l| matches!(l.state, LspState::Active | LspState::Failed)) {
                self.optical.teardown_lsp(topo, lsp)?;
            }
        }
        Ok(())
    }

    /// Releases everything a service's plan holds, leaving the record.
    fn release_plan(&mut self, topo: &mut Topology, svc: &E2EService) -> Result<(), NetError> {
        let bw = svc.request.bw_mbps;
        for seg in svc.plan.segments.iter().rev() {
            match &seg.realized_by {
                Realization::PacketPath(p) => {
                    self.packet.unprogram_path(topo, p)?;
                    if let Some(sid) = &svc.request.slice_id {
                        let s = self.slices.get_mut(sid).ok_or_else(|| NetError::UnknownSlice(sid.clone()))?;
                        for l in &seg.links {
                            topo.reserve_packet_bw(l, bw, &slice_owner(sid))?;
                            *s.free.entry(l.clone()).or_insert_with(Rational::zero) += bw;
                        }
                    }
                }
                Realization::OpticalLsp(l) | Realization::GroomedOnto(l) => self.release_tunnel(topo, l, bw)?,
            }
        }
        Ok(())
    }

    pub fn teardown_e2e(&mut self, topo: &mut Topology, id: &ServiceId) -> Result<(), NetError> {
        let svc = self.services.get(id).cloned().ok_or_else(|| NetError::UnknownService(id.clone()))?;
        let saved = (topo.clone(), self.clone());
        let out = self.release_plan(topo, &svc);
        if out.is_err() {
            (*topo, *self) = saved;
            return out;
        }
        self.forget(&svc);
        Ok(())
    }

    fn forget(&mut self, svc: &E2EService) {
        if let Some(s) = svc.request.slice_id.as_ref().and_then(|s| self.slices.get_mut(s)) {
            s.services.remove(&svc.id);
        }
        self.services.remove(&svc.id);
    }

    // ---- slices ------------------------------------------------------------

    pub fn create_slice(
        &mut self,
        topo: &mut Topology,
        id: Option<SliceId>,
        tenant: &TenantId,
        members: BTreeSet<NodeId>,
        carve: BTreeMap<LinkId, Rational>,
    ) -> Result<Slice, NetError> {
        if topo.tenant(tenant).is_none() {
            return Err(NetError::UnknownTenant(tenant.clone()));
        }
        for n in &members {
            if topo.node(n).is_none() {
                return Err(NetError::Model(ModelError::UnknownNode(n.clone())));
            }
        }
        for (l, bw) in &carve {
            let link = topo.link(l).ok_or_else(|| NetError::Model(ModelError::UnknownLink(l.clone())))?;
            if !link.is_packet() {
                return Err(NetError::Model(ModelError::NotPacketLink(l.clone())));
            }
            if !(members.contains(&link.src) && members.contains(&link.dst)) {
                return Err(NetError::InvalidRequest(format!("carved link {l} leaves the slice")));
            }
            if *bw < Rational::zero() {
                return Err(NetError::Model(ModelError::NegativeAmount(rational::format(bw))));
            }
        }
        let id = match id {
            Some(id) if self.slices.contains_key(&id) => return Err(NetError::DuplicateSlice(id)),
            Some(id) => id,
            None => SliceId::new(self.slice_ids.next("slice")),
        };
        let saved = topo.clone();
        for (l, bw) in &carve {
            if let Err(e) = topo.reserve_packet_bw(l, *bw, &slice_owner(&id)) {
                *topo = saved;
                return Err(e.into());
            }
        }
        let slice = Slice {
            id: id.clone(),
            tenant_id: tenant.clone(),
            member_nodes: members,
            free: carve.clone(),
            dedicated_bw: carve,
            services: BTreeSet::new(),
        };
        self.slices.insert(id, slice.clone());
        Ok(slice)
    }

    pub fn delete_slice(&mut self, topo: &mut Topology, id: &SliceId) -> Result<(), NetError> {
        let s = self.slices.get(id).ok_or_else(|| NetError::UnknownSlice(id.clone()))?;
        if !s.services.is_empty() {
            return Err(NetError::SliceNotEmpty(id.clone()));
        }
        let owner = s.owner();
        let free = s.free.clone();
        let saved = topo.clone();
        for (l, bw) in &free {
            if let Err(e) = topo.release_packet_bw(l, *bw, &owner) {
                *topo = saved;
                return Err(e.into());
            }
        }
        self.slices.remove(id);
        Ok(())
    }

    // ---- failures ----------------------------------------------------------

    /// Marks a link down in its controller, then recovers dependent services.
    pub fn link_down(
        &mut self,
        topo: &mut Topology,
        link: &LinkId,
    ) -> Result<BTreeMap<ServiceId, RecoveryOutcome>, NetError> {
        let l = topo.link(link).ok_or_else(|| NetError::Model(ModelError::UnknownLink(link.clone())))?;
        if l.is_optical() {
            self.optical.mark_link_down(topo, link)?;
        } else {
            self.packet.mark_link_down(topo, link)?;
        }
        Ok(self.recover_services(topo, link))
    }

    pub fn link_up(&mut self, topo: &mut Topology, link: &LinkId) -> Result<(), NetError> {
        let l = topo.link(link).ok_or_else(|| NetError::Model(ModelError::UnknownLink(link.clone())))?;
        if l.is_optical() {
            self.optical.mark_link_up(topo, link)?;
        } else {
            self.packet.mark_link_up(topo, link)?;
        }
        Ok(())
    }

    /// Optical restoration first, then end-to-end re-provisioning of every
    /// still-broken service in id order.
    pub fn recover_services(&mut self, topo: &mut Topology, failed: &LinkId) -> BTreeMap<ServiceId, RecoveryOutcome> {
        let restored = self.optical.restore_lsps(topo, failed);
        let mut touched: BTreeSet<ServiceId> = BTreeSet::new();
        for (old, r) in &restored {
            let Restoration::Restored(new) = r else { continue };
            if let Some(t) = self.tunnels.remove(old) {
                self.tunnels.insert(new.clone(), t);
            }
            let lsp = self.optical.lsp(new).expect("restored lsp").clone();
            for svc in self.services.values_mut() {
                let mut hit = false;
                for seg in &mut svc.plan.segments {
                    let swapped = match &seg.realized_by {
                        Realization::OpticalLsp(l) if l == old => Some(Realization::OpticalLsp(new.clone())),
                        Realization::GroomedOnto(l) if l == old => Some(Realization::GroomedOnto(new.clone())),
                        _ => None,
                    };
                    if let Some(r) = swapped {
                        seg.realized_by = r;
                        seg.links = lsp.route.clone();
                        seg.latency_ms = lsp.latency_ms;
                        hit = true;
                    }
                }
                if hit {
                    svc.plan.recompute_latency();
                    touched.insert(svc.id.clone());
                }
            }
        }

        let broken: Vec<ServiceId> = self
            .services
            .values()
            .filter(|s| !self.is_healthy(s))
            .map(|s| s.id.clone())
            .collect();
        let mut out = BTreeMap::new();
        for id in &touched {
            if !broken.contains(id) {
                out.insert(id.clone(), RecoveryOutcome::Recovered(self.services[id].plan.clone()));
            }
        }
        for id in broken {
            let svc = self.services[&id].clone();
            self.release_plan(topo, &svc).expect("releasing a live plan cannot fail");
            self.forget(&svc);
            match self.provision_e2e(topo, svc.request.clone()) {
                Ok(new) => {
                    out.insert(id, RecoveryOutcome::Recovered(new.plan));
                }
                Err(_) => {
                    out.insert(id, RecoveryOutcome::Unrecoverable);
                }
            }
        }
        out
    }

    fn is_healthy(&self, svc: &E2EService) -> bool {
        let segments_ok = svc.plan.segments.iter().all(|seg| match &seg.realized_by {
            Realization::PacketPath(p) => self.packet.path(p).is_some_and(|p| p.state == PathState::Active),
            Realization::OpticalLsp(l) | Realization::GroomedOnto(l) => {
                self.optical.lsp(l).is_some_and(|l| l.state == LspState::Active)
            }
        });
        segments_ok && svc.request.max_latency_ms.is_none_or(|m| svc.plan.total_latency_ms <= m)
    }

    // ---- inspection --------------------------------------------------------

    pub fn dump_plans(&self) -> Vec<String> {
        self.services.values().flat_map(E2EService::dump_lines).collect()
    }

    /// Cross-controller consistency: stitched plans, tunnel loads, slice
    /// holdings, plus each controller's own invariants.
    pub fn check_invariants(&self, topo: &Topology) -> Result<(), String> {
        topo.check_invariants()?;
        self.packet.check_invariants(topo)?;
        self.optical.check_invariants(topo)?;
        let mut load: BTreeMap<&LspId, Rational> = BTreeMap::new();
        for svc in self.services.values() {
            let walk = svc.plan.walk(topo);
            if !svc.plan.segments.is_empty()
                && (walk.first() != Some(&svc.request.src_node) || walk.last() != Some(&svc.request.dst_node))
            {
                return Err(format!("{} plan does not join its endpoints", svc.id));
            }
            for pair in svc.plan.segments.windows(2) {
                if pair[0].dst != pair[1].src {
                    return Err(format!("{} plan is not stitched", svc.id));
                }
            }
            for seg in &svc.plan.segments {
                if let Some(l) = seg.realized_by.lsp() {
                    *load.entry(l).or_insert_with(Rational::zero) += svc.request.bw_mbps;
                }
                if let Realization::PacketPath(p) = &seg.realized_by {
                    let path = self.packet.path(p).ok_or(format!("{} lost path {p}", svc.id))?;
                    if path.links != seg.links || path.state == PathState::Removed {
                        return Err(format!("{} segment disagrees with {p}", svc.id));
                    }
                }
            }
        }
        for (id, t) in &self.tunnels {
            let expect = load.get(id).copied().unwrap_or_else(Rational::zero);
            if t.load_mbps != expect {
                return Err(format!("tunnel {id} load {} != groomed {}", t.load_mbps, expect));
            }
            if self.tunnel_free_mbps(id).is_some_and(|f| f < Rational::zero()) {
                return Err(format!("tunnel {id} over capacity"));
            }
        }
        if load.keys().any(|l| !self.tunnels.contains_key(*l)) {
            return Err("plan references an untracked tunnel".into());
        }
        let holdings = topo.holdings();
        for s in self.slices.values() {
            let owner = s.owner();
            for (l, free) in &s.free {
                let held = holdings.get(&(l.clone(), owner.clone())).copied().unwrap_or_else(Rational::zero);
                if held != *free {
                    return Err(format!("slice {} holds {held} on {l}, expected {free}", s.id));
                }
            }
        }
        Ok(())
    }
}

/// Widest and shortest intra-domain reachability between two nodes.
fn packet_reachability(
    topo: &Topology,
    domain: &DomainId,
    u: &NodeId,
    v: &NodeId,
    carve: Option<&BTreeMap<LinkId, Rational>>,
) -> Option<(Rational, Rational)> {
    let base = PathQuery { domains: Some([domain.clone()].into()), free_override: carve, ..PathQuery::new(Rational::zero()) };
    let (_, lat) = packet::compute_packet_path(topo, u, v, &base).ok()?;
    let mut levels: Vec<Rational> = topo
        .links()
        .filter(|l| l.up)
        .filter_map(|l| match carve {
            Some(c) => c.get(&l.id).copied(),
            None => l.packet().map(|p| p.free_mbps()),
        })
        .collect();
    levels.sort();
    levels.dedup();
    let widest = levels
        .into_iter()
        .rev()
        .find(|bw| packet::compute_packet_path(topo, u, v, &PathQuery { bw_mbps: *bw, ..base.clone() }).is_ok())?;
    Some((widest, lat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::int;

    fn setup() -> (Topology, NetworkOrchestrator) {
        (fixtures::ref_topo(), NetworkOrchestrator::new())
    }

    fn req(src: &str, dst: &str, bw: i64) -> E2ERequest {
        E2ERequest::new("op1", src, dst, int(bw))
    }

    fn l(s: &str) -> LinkId {
        LinkId::from(s)
    }

    #[test]
    fn abstract_view_reflects_capacity() {
        let (mut t, mut n) = setup();
        let a = n.build_abstract_topology(&t, None).unwrap();
        assert_eq!(a.inter_domain(&l("rgw-p1")).unwrap().max_free_bw_mbps, int(1000));
        assert_eq!(a.reachability(&"p1".into(), &"p3".into()).unwrap().max_free_bw_mbps, int(1000));
        t.reserve_packet_bw(&l("p3-o1"), int(1000), "x").unwrap();
        let a = n.build_abstract_topology(&t, None).unwrap();
        assert_eq!(a.inter_domain(&l("p3-o1")).unwrap().max_free_bw_mbps, int(0));

        let members = ["p1", "p2"].into_iter().map(NodeId::from).collect();
        let s = n.create_slice(&mut t, None, &"op1".into(), members, [(l("p1-p2"), int(200))].into()).unwrap();
        let a = n.build_abstract_topology(&t, Some(&s.id)).unwrap();
        assert_eq!(a.reachability(&"p1".into(), &"p2".into()), None);
        assert_eq!(n.build_abstract_topology(&t, Some(&"nope".into())).unwrap_err().kind(), "UnknownSlice");
    }

    #[test]
    fn first_request_creates_lsp_and_four_segments() {
        let (mut t, mut n) = setup();
        let svc = n.provision_e2e(&mut t, req("enb1", "dcgw", 100)).unwrap();
        let kinds: Vec<String> = svc.plan.segments.iter().map(|s| s.realized_by.to_string()).collect();
        assert_eq!(kinds, vec!["path:path-1", "path:path-2", "lsp:lsp-1", "path:path-3"]);
        let doms: Vec<&str> = svc.plan.segments.iter().map(|s| s.domain_id.as_str()).collect();
        assert_eq!(doms, vec!["ran", "metro", "core", "metro"]);
        assert_eq!(n.optical.active_count(), 1);
        assert_eq!(n.optical.lsps().next().unwrap().slot_width, 4);
        // enb1-rgw, rgw-p1, p1-p2, p2-p3, p3-o1, o1-o2, o2-o3, o3-dcgw
        assert_eq!(svc.plan.total_latency_ms, int(8));
        n.check_invariants(&t).unwrap();
    }

    #[test]
    fn second_request_grooms() {
        let (mut t, mut n) = setup();
        n.provision_e2e(&mut t, req("enb1", "dcgw", 100)).unwrap();
        let b = n.provision_e2e(&mut t, req("enb2", "dcgw", 100)).unwrap();
        assert!(b.plan.segments.iter().any(|s| s.realized_by == Realization::GroomedOnto("lsp-1".into())));
        assert_eq!(n.optical.lsps().count(), 1);
        assert_eq!(n.tunnel(&"lsp-1".into()).unwrap().load_mbps, int(200));
        n.check_invariants(&t).unwrap();
    }

    #[test]
    fn oversize_request_rolls_back() {
        let (mut t, mut n) = setup();
        let before = t.snapshot();
        let err = n.provision_e2e(&mut t, req("enb1", "dcgw", 5000)).unwrap_err();
        assert_eq!(err, NetError::NoDomainSequence(Infeasibility::Capacity));
        assert_eq!(t.snapshot(), before);
        assert_eq!(n.services().count(), 0);
        let mut r = req("enb1", "dcgw", 10);
        r.max_latency_ms = Some(int(3));
        assert_eq!(n.provision_e2e(&mut t, r).unwrap_err(), NetError::NoDomainSequence(Infeasibility::Latency));
    }

    #[test]
    fn teardown_policy() {
        let (mut t, mut n) = setup();
        let before = t.snapshot();
        let a = n.provision_e2e(&mut t, req("enb1", "dcgw", 100)).unwrap();
        let b = n.provision_e2e(&mut t, req("enb2", "dcgw", 100)).unwrap();
        n.teardown_e2e(&mut t, &a.id).unwrap();
        assert_eq!(n.optical.lsp(&"lsp-1".into()).unwrap().state, LspState::Active);
        n.teardown_e2e(&mut t, &b.id).unwrap();
        assert_eq!(n.optical.lsp(&"lsp-1".into()).unwrap().state, LspState::Deleted);
        assert_eq!(t.snapshot(), before);
        assert_eq!(n.teardown_e2e(&mut t, &b.id).unwrap_err().kind(), "UnknownService");
    }

    #[test]
    fn retained_tunnel_survives_idle() {
        let (mut t, mut n) = setup();
        t.settings.retain_idle_tunnels = true;
        let a = n.provision_e2e(&mut t, req("enb1", "dcgw", 100)).unwrap();
        n.teardown_e2e(&mut t, &a.id).unwrap();
        assert_eq!(n.optical.active_count(), 1);
        let b = n.provision_e2e(&mut t, req("enb1", "dcgw", 100)).unwrap();
        assert!(b.plan.segments.iter().any(|s| matches!(s.realized_by, Realization::GroomedOnto(_))));
    }

    #[test]
    fn slices_carve_and_isolate() {
        let (mut t, mut n) = setup();
        let ring: BTreeSet<NodeId> = ["p1", "p2", "p3", "p4"].into_iter().map(NodeId::from).collect();
        let s = n.create_slice(&mut t, None, &"op1".into(), ring.clone(), [(l("p1-p2"), int(200))].into()).unwrap();
        assert_eq!(t.link(&l("p1-p2")).unwrap().packet().unwrap().reserved_mbps, int(200));
        let a = n.build_abstract_topology(&t, None).unwrap();
        assert_eq!(a.reachability(&"p1".into(), &"p3".into()).unwrap().max_free_bw_mbps, int(1000));

        let err = n
            .create_slice(&mut t, None, &"op2".into(), ring.clone(), [(l("p1-p2"), int(900))].into())
            .unwrap_err();
        assert_eq!(err.kind(), "CapacityExceeded");
        assert_eq!(n.slices().count(), 1);

        let mut r = req("p1", "p2", 150);
        r.slice_id = Some(s.id.clone());
        let svc = n.provision_e2e(&mut t, r.clone()).unwrap();
        assert_eq!(n.slice(&s.id).unwrap().free[&l("p1-p2")], int(50));
        assert_eq!(n.provision_e2e(&mut t, r).unwrap_err(), NetError::NoDomainSequence(Infeasibility::Capacity));
        n.check_invariants(&t).unwrap();
        assert_eq!(n.delete_slice(&mut t, &s.id).unwrap_err().kind(), "SliceNotEmpty");
        n.teardown_e2e(&mut t, &svc.id).unwrap();
        n.delete_slice(&mut t, &s.id).unwrap();
        assert_eq!(t.snapshot(), fixtures::ref_topo().snapshot());
        assert_eq!(
            n.create_slice(&mut t, None, &"nobody".into(), ring, BTreeMap::new()).unwrap_err().kind(),
            "UnknownTenant"
        );
    }

    #[test]
    fn packet_failure_reroutes() {
        let (mut t, mut n) = setup();
        let svc = n.provision_e2e(&mut t, req("p1", "p3", 100)).unwrap();
        assert_eq!(svc.plan.segments[0].links, vec![l("p1-p2"), l("p2-p3")]);
        let out = n.link_down(&mut t, &l("p1-p2")).unwrap();
        let RecoveryOutcome::Recovered(plan) = &out[&svc.id] else { panic!("{out:?}") };
        assert_eq!(plan.segments[0].links, vec![l("p1-p4"), l("p4-p3")]);
        n.check_invariants(&t).unwrap();
        assert_eq!(t.link(&l("p1-p2")).unwrap().packet().unwrap().reserved_mbps, int(0));
    }

    #[test]
    fn isolated_enb_is_unrecoverable() {
        let (mut t, mut n) = setup();
        let svc = n.provision_e2e(&mut t, req("enb2", "dcgw", 100)).unwrap();
        let out = n.link_down(&mut t, &l("enb2-rgw")).unwrap();
        assert_eq!(out[&svc.id], RecoveryOutcome::Unrecoverable);
        assert!(n.service(&svc.id).is_none());
        assert!(t.links().filter_map(|l| l.packet()).all(|p| p.reserved_mbps.is_zero()));
        assert_eq!(n.optical.active_count(), 0);
        n.check_invariants(&t).unwrap();
    }

    #[test]
    fn optical_failure_restores_and_remaps() {
        let (mut t, mut n) = setup();
        let a = n.provision_e2e(&mut t, req("enb1", "dcgw", 100)).unwrap();
        let b = n.provision_e2e(&mut t, req("enb2", "dcgw", 100)).unwrap();
        let out = n.link_down(&mut t, &l("o1-o2")).unwrap();
        assert_eq!(out.len(), 2);
        let new_lsp = LspId::from("lsp-2");
        let svc_b = n.service(&b.id).unwrap();
        assert!(svc_b.plan.segments.iter().any(|s| s.realized_by == Realization::GroomedOnto(new_lsp.clone())));
        let svc_a = n.service(&a.id).unwrap();
        assert!(svc_a.plan.segments.iter().any(|s| s.realized_by == Realization::OpticalLsp(new_lsp.clone())));
        assert_eq!(n.optical.lsp(&new_lsp).unwrap().route, vec![l("o1-o4"), l("o4-o3")]);
        assert_eq!(n.tunnel(&new_lsp).unwrap().load_mbps, int(200));
        n.check_invariants(&t).unwrap();
        n.link_up(&mut t, &l("o1-o2")).unwrap();
        n.teardown_e2e(&mut t, &a.id).unwrap();
        n.teardown_e2e(&mut t, &b.id).unwrap();
        assert_eq!(t.snapshot(), fixtures::ref_topo().snapshot());
    }

    #[test]
    fn same_endpoint_request_is_empty() {
        let (mut t, mut n) = setup();
        let svc = n.provision_e2e(&mut t, req("dcgw", "dcgw", 100)).unwrap();
        assert!(svc.plan.segments.is_empty());
        assert_eq!(n.provision_e2e(&mut t, req("o1", "p1", 1)).unwrap_err().kind(), "InvalidRequest");
    }
}
