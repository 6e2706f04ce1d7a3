//! Packet-domain SDN controller: constrained path computation and
//! label-switched flow programming for RAN backhaul and MPLS-TP aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::ids::{Counter, DomainId, EntryId, LinkId, NodeId, PathId};
use crate::model::{ModelError, Topology};
use crate::rational::{self, serde_rational, Rational};
use crate::routing::{self, Arc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasibility {
    Disconnected,
    Capacity,
    Latency,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Infeasibility::Disconnected => "disconnected",
            Infeasibility::Capacity => "capacity",
            Infeasibility::Latency => "latency",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PacketError {
    #[error("no feasible path {src} -> {dst} ({reason})")]
    NoFeasiblePath { src: NodeId, dst: NodeId, reason: Infeasibility },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("link {0} is down")]
    LinkDown(LinkId),
    #[error("duplicate flow match on {node}")]
    DuplicateMatch { node: NodeId },
    #[error("unknown path {0}")]
    UnknownPath(PathId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("link {0} already down")]
    AlreadyDown(LinkId),
    #[error("link {0} already up")]
    AlreadyUp(LinkId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PacketError {
    pub fn kind(&self) -> &'static str {
        match self {
            PacketError::NoFeasiblePath { .. } => "NoFeasiblePath",
            PacketError::InvalidPath(_) => "InvalidPath",
            PacketError::LinkDown(_) => "LinkDown",
            PacketError::DuplicateMatch { .. } => "DuplicateMatch",
            PacketError::UnknownPath(_) => "UnknownPath",
            PacketError::UnknownLink(_) => "UnknownLink",
            PacketError::AlreadyDown(_) => "AlreadyDown",
            PacketError::AlreadyUp(_) => "AlreadyUp",
            PacketError::Model(m) => m.kind(),
        }
    }
}

/// Input or output port of a flow entry. `Client` is the service-facing port
/// at a path's ingress or egress.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Link(LinkId),
    Client(PathId),
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Port::Link(l) => write!(f, "{l}"),
            Port::Client(p) => write!(f, "client:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowMatch {
    pub in_port: Port,
    pub label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowAction {
    PushLabel(u32),
    PopLabel,
    Forward(Port),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub id: EntryId,
    pub node_id: NodeId,
    pub matcher: FlowMatch,
    pub actions: Vec<FlowAction>,
    pub owner_service: String,
}

impl FlowEntry {
    /// `node | match | actions | owner`
    pub fn dump_line(&self) -> String {
        let label = self.matcher.label.map_or("*".to_string(), |l| l.to_string());
        let actions: Vec<String> = self
            .actions
            .iter()
            .map(|a| match a {
                FlowAction::PushLabel(l) => format!("push({l})"),
                FlowAction::PopLabel => "pop".to_string(),
                FlowAction::Forward(p) => format!("fwd({p})"),
            })
            .collect();
        format!(
            "{} | in={} label={} | {} | {}",
            self.node_id,
            self.matcher.in_port,
            label,
            actions.join(","),
            self.owner_service
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathState {
    Active,
    Failed,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketPath {
    pub id: PathId,
    pub domain: DomainId,
    pub links: Vec<LinkId>,
    #[serde(with = "serde_rational")]
    pub bw_mbps: Rational,
    pub label: u32,
    pub entries: Vec<EntryId>,
    pub state: PathState,
    pub owner_service: String,
}

/// Constraints for [`compute_packet_path`].
#[derive(Debug, Clone, Default)]
pub struct PathQuery<'a> {
    pub bw_mbps: Rational,
    pub max_latency_ms: Option<Rational>,
    pub avoid: BTreeSet<LinkId>,
    /// Restrict to links whose endpoints both lie in these domains.
    pub domains: Option<BTreeSet<DomainId>>,
    /// Free bandwidth override; links absent from the map are unusable.
    pub free_override: Option<&'a BTreeMap<LinkId, Rational>>,
}

impl PathQuery<'_> {
    pub fn new(bw_mbps: Rational) -> Self {
        Self { bw_mbps, ..Default::default() }
    }
}

/// Usable arcs for a packet query, ignoring capacity. The flag says whether
/// the link has enough free bandwidth.
fn candidate_arcs(topo: &Topology, q: &PathQuery<'_>) -> Vec<(Arc, bool)> {
    topo.links()
        .filter(|l| l.up && !q.avoid.contains(&l.id))
        .filter_map(|l| l.packet().map(|p| (l, p)))
        .filter(|(l, _)| match &q.domains {
            None => true,
            Some(ds) => [&l.src, &l.dst]
                .iter()
                .all(|n| topo.node(n).is_some_and(|node| ds.contains(&node.domain_id))),
        })
        .map(|(l, p)| {
            let free = match q.free_override {
                Some(m) => m.get(&l.id).copied(),
                None => Some(p.free_mbps()),
            };
            let ok = free.is_some_and(|f| f >= q.bw_mbps);
            (Arc::new(l.id.as_str(), l.src.as_str(), l.dst.as_str(), l.latency_ms()), ok)
        })
        .collect()
}

/// Minimum-latency packet path with enough free bandwidth on every link,
/// ties broken by lexicographic link-id sequence.
pub fn compute_packet_path(
    topo: &Topology,
    src: &NodeId,
    dst: &NodeId,
    q: &PathQuery<'_>,
) -> Result<(Vec<LinkId>, Rational), PacketError> {
    if src == dst {
        return Err(PacketError::InvalidPath("source equals destination".into()));
    }
    for n in [src, dst] {
        if topo.node(n).is_none() {
            return Err(PacketError::Model(ModelError::UnknownNode(n.clone())));
        }
    }
    let fail = |reason| PacketError::NoFeasiblePath { src: src.clone(), dst: dst.clone(), reason };
    let arcs = candidate_arcs(topo, q);
    let all: Vec<Arc> = arcs.iter().map(|(a, _)| a.clone()).collect();
    let feasible: Vec<Arc> = arcs.into_iter().filter(|(_, ok)| *ok).map(|(a, _)| a).collect();
    let none = BTreeSet::new();
    let Some(route) = routing::shortest(&feasible, src.as_str(), dst.as_str(), &none, |_| true) else {
        return Err(match routing::shortest(&all, src.as_str(), dst.as_str(), &none, |_| true) {
            Some(_) => fail(Infeasibility::Capacity),
            None => fail(Infeasibility::Disconnected),
        });
    };
    if let Some(max) = q.max_latency_ms {
        if route.cost > max {
            return Err(fail(Infeasibility::Latency));
        }
    }
    Ok((route.arcs.into_iter().map(LinkId::from).collect(), route.cost))
}

/// Request to install a packet path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSpec {
    pub links: Vec<LinkId>,
    pub bw_mbps: Rational,
    pub owner_service: String,
}

type Tables = BTreeMap<NodeId, BTreeMap<FlowMatch, FlowEntry>>;

/// Flow tables serialize as a flat entry list.
mod table_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{FlowEntry, Tables};

    pub fn serialize<S: Serializer>(t: &Tables, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<&FlowEntry> = t.values().flat_map(|m| m.values()).collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Tables, D::Error> {
        let mut t = Tables::new();
        for e in Vec::<FlowEntry>::deserialize(d)? {
            t.entry(e.node_id.clone()).or_default().insert(e.matcher.clone(), e);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketController {
    paths: BTreeMap<PathId, PacketPath>,
    #[serde(with = "table_serde")]
    tables: Tables,
    labels: BTreeMap<DomainId, BTreeSet<u32>>,
    path_ids: Counter,
    entry_ids: Counter,
}

impl PacketController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn path(&self, id: &PathId) -> Option<&PacketPath> {
        self.paths.get(id)
    }

    pub fn paths(&self) -> impl Iterator<Item = &PacketPath> {
        self.paths.values()
    }

    pub fn table(&self, node: &NodeId) -> impl Iterator<Item = &FlowEntry> {
        self.tables.get(node).into_iter().flat_map(|t| t.values())
    }

    pub fn entry_count(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }

    /// Flow tables as ordered `node | match | actions | owner` lines.
    pub fn dump_tables(&self) -> Vec<String> {
        self.tables.values().flat_map(|t| t.values().map(FlowEntry::dump_line)).collect()
    }

    fn smallest_free_label(&self, domain: &DomainId) -> u32 {
        let used = self.labels.get(domain);
        (0..).find(|l| used.is_none_or(|u| !u.contains(l))).expect("label space")
    }

    /// Reserves bandwidth along `spec.links`, allocates the smallest free
    /// label of the path's domain and installs one flow entry per node.
    pub fn program_path(&mut self, topo: &mut Topology, spec: PathSpec) -> Result<PacketPath, PacketError> {
        let PathSpec { links, bw_mbps, owner_service } = spec;
        if links.is_empty() {
            return Err(PacketError::InvalidPath("empty link list".into()));
        }
        if bw_mbps < Rational::zero() {
            return Err(PacketError::InvalidPath("negative bandwidth".into()));
        }
        if !topo.is_contiguous(&links) {
            return Err(PacketError::InvalidPath("links are not contiguous".into()));
        }
        let mut demand: BTreeMap<&LinkId, Rational> = BTreeMap::new();
        for id in &links {
            let link = topo.link(id).ok_or_else(|| PacketError::UnknownLink(id.clone()))?;
            if !link.is_packet() {
                return Err(PacketError::Model(ModelError::NotPacketLink(id.clone())));
            }
            if !link.up {
                return Err(PacketError::LinkDown(id.clone()));
            }
            *demand.entry(id).or_insert_with(Rational::zero) += bw_mbps;
        }
        for (id, need) in &demand {
            let free = topo.link(id).and_then(|l| l.packet()).map(|p| p.free_mbps()).unwrap_or_default();
            if *need > free {
                return Err(PacketError::Model(ModelError::CapacityExceeded {
                    link: (*id).clone(),
                    requested: rational::format(need),
                    free: rational::format(&free),
                }));
            }
        }
        let first = topo.link(&links[0]).expect("checked");
        let domain = topo
            .owning_domain(first)
            .ok_or_else(|| PacketError::InvalidPath("path has no owning domain".into()))?;

        let path_id = PathId::new(self.path_ids.next("path"));
        let label = self.smallest_free_label(&domain);

        let mut nodes: Vec<NodeId> = vec![first.src.clone()];
        nodes.extend(links.iter().map(|l| topo.link(l).expect("checked").dst.clone()));
        let last = links.len();
        let mut planned: Vec<FlowEntry> = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            let (matcher, actions) = if i == 0 {
                (
                    FlowMatch { in_port: Port::Client(path_id.clone()), label: None },
                    vec![FlowAction::PushLabel(label), FlowAction::Forward(Port::Link(links[0].clone()))],
                )
            } else if i == last {
                (
                    FlowMatch { in_port: Port::Link(links[i - 1].clone()), label: Some(label) },
                    vec![FlowAction::PopLabel, FlowAction::Forward(Port::Client(path_id.clone()))],
                )
            } else {
                (
                    FlowMatch { in_port: Port::Link(links[i - 1].clone()), label: Some(label) },
                    vec![FlowAction::Forward(Port::Link(links[i].clone()))],
                )
            };
            let clash = self.tables.get(node).is_some_and(|t| t.contains_key(&matcher))
                || planned.iter().any(|e| e.node_id == *node && e.matcher == matcher);
            if clash {
                return Err(PacketError::DuplicateMatch { node: node.clone() });
            }
            planned.push(FlowEntry {
                id: EntryId::new(String::new()),
                node_id: node.clone(),
                matcher,
                actions,
                owner_service: owner_service.clone(),
            });
        }

        // All checks passed; commit.
        for id in &links {
            topo.reserve_packet_bw(id, bw_mbps, path_id.as_str())?;
        }
        let mut entry_ids = Vec::with_capacity(planned.len());
        for mut e in planned {
            e.id = EntryId::new(self.entry_ids.next("flow"));
            entry_ids.push(e.id.clone());
            self.tables.entry(e.node_id.clone()).or_default().insert(e.matcher.clone(), e);
        }
        self.labels.entry(domain.clone()).or_default().insert(label);
        let path = PacketPath {
            id: path_id.clone(),
            domain,
            links,
            bw_mbps,
            label,
            entries: entry_ids,
            state: PathState::Active,
            owner_service,
        };
        self.paths.insert(path_id, path.clone());
        Ok(path)
    }

    /// Removes a path's flow entries, releases its bandwidth on every link and
    /// returns its label to the pool. The record stays with state `Removed`.
    pub fn unprogram_path(&mut self, topo: &mut Topology, id: &PathId) -> Result<(), PacketError> {
        let path = match self.paths.get(id) {
            Some(p) if p.state != PathState::Removed => p.clone(),
            _ => return Err(PacketError::UnknownPath(id.clone())),
        };
        for l in &path.links {
            topo.release_packet_bw(l, path.bw_mbps, id.as_str())?;
        }
        for table in self.tables.values_mut() {
            table.retain(|_, e| !path.entries.contains(&e.id));
        }
        self.tables.retain(|_, t| !t.is_empty());
        if let Some(set) = self.labels.get_mut(&path.domain) {
            set.remove(&path.label);
            if set.is_empty() {
                self.labels.remove(&path.domain);
            }
        }
        if let Some(p) = self.paths.get_mut(id) {
            p.state = PathState::Removed;
            p.entries.clear();
        }
        Ok(())
    }

    /// Marks a link down and fails every active path that crosses it.
    /// Reservations are left untouched.
    pub fn mark_link_down(&mut self, topo: &mut Topology, link: &LinkId) -> Result<Vec<PathId>, PacketError> {
        let l = topo.link(link).ok_or_else(|| PacketError::UnknownLink(link.clone()))?;
        if !l.up {
            return Err(PacketError::AlreadyDown(link.clone()));
        }
        topo.set_link_up(link, false)?;
        let mut affected = Vec::new();
        for p in self.paths.values_mut() {
            if p.state == PathState::Active && p.links.contains(link) {
                p.state = PathState::Failed;
                affected.push(p.id.clone());
            }
        }
        Ok(affected)
    }

    pub fn mark_link_up(&mut self, topo: &mut Topology, link: &LinkId) -> Result<(), PacketError> {
        let l = topo.link(link).ok_or_else(|| PacketError::UnknownLink(link.clone()))?;
        if l.up {
            return Err(PacketError::AlreadyUp(link.clone()));
        }
        topo.set_link_up(link, true)?;
        Ok(())
    }

    /// Follows the flow tables from a path's ingress and returns the links
    /// traversed, or `None` if the walk breaks.
    pub fn trace(&self, topo: &Topology, id: &PathId) -> Option<Vec<LinkId>> {
        let path = self.paths.get(id)?;
        let first = topo.link(path.links.first()?)?;
        let mut node = first.src.clone();
        let mut matcher = FlowMatch { in_port: Port::Client(id.clone()), label: None };
        let mut walked = Vec::new();
        for _ in 0..=path.links.len() {
            let entry = self.tables.get(&node)?.get(&matcher)?;
            let mut label = matcher.label;
            for action in &entry.actions {
                match action {
                    FlowAction::PushLabel(l) => label = Some(*l),
                    FlowAction::PopLabel => label = None,
                    FlowAction::Forward(Port::Client(p)) => {
                        return (p == id && label.is_none()).then_some(walked);
                    }
                    FlowAction::Forward(Port::Link(l)) => {
                        walked.push(l.clone());
                        node = topo.link(l)?.dst.clone();
                        matcher = FlowMatch { in_port: Port::Link(l.clone()), label };
                    }
                }
            }
        }
        None
    }

    /// Structural checks: label uniqueness per domain and table/path agreement.
    pub fn check_invariants(&self, topo: &Topology) -> Result<(), String> {
        let mut seen: BTreeSet<(&DomainId, u32)> = BTreeSet::new();
        for p in self.paths.values().filter(|p| p.state != PathState::Removed) {
            if !seen.insert((&p.domain, p.label)) {
                return Err(format!("label {} reused in {}", p.label, p.domain));
            }
            if p.state == PathState::Active && self.trace(topo, &p.id).as_ref() != Some(&p.links) {
                return Err(format!("flow tables do not realize {}", p.id));
            }
        }
        for t in self.tables.values() {
            for e in t.values() {
                let forwards = e.actions.iter().filter(|a| matches!(a, FlowAction::Forward(_))).count();
                if forwards > 1 || !matches!(e.actions.last(), Some(FlowAction::Forward(_))) {
                    return Err(format!("entry {} has malformed actions", e.id));
                }
            }
        }
        Ok(())
    }
}
