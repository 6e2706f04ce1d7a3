//! Active stateful PCE for the flexi-grid core: routing and spectrum
//! assignment, two-phase LSP signaling, the LSP database and restoration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{Counter, LinkId, LspId, NodeId};
use crate::model::{ModelError, SlotRange, Topology};
use crate::rational::{self, serde_rational, Rational};
use crate::routing::{self, Arc};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OpticalError {
    #[error("no optical route {src} -> {dst}")]
    NoRoute { src: NodeId, dst: NodeId },
    #[error("no common free block of width {width} on any candidate route {src} -> {dst}")]
    NoSpectrum { src: NodeId, dst: NodeId, width: u32 },
    #[error("admission failed for {lsp} at hop {hop}")]
    AdmissionFailed { lsp: LspId, hop: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("unknown lsp {0}")]
    UnknownLsp(LspId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("link {0} already down")]
    AlreadyDown(LinkId),
    #[error("link {0} already up")]
    AlreadyUp(LinkId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl OpticalError {
    pub fn kind(&self) -> &'static str {
        match self {
            OpticalError::NoRoute { .. } => "NoRoute",
            OpticalError::NoSpectrum { .. } => "NoSpectrum",
            OpticalError::AdmissionFailed { .. } => "AdmissionFailed",
            OpticalError::InvalidRequest(_) => "InvalidRequest",
            OpticalError::InvalidRoute(_) => "InvalidRoute",
            OpticalError::UnknownLsp(_) => "UnknownLsp",
            OpticalError::UnknownLink(_) => "UnknownLink",
            OpticalError::AlreadyDown(_) => "AlreadyDown",
            OpticalError::AlreadyUp(_) => "AlreadyUp",
            OpticalError::Model(m) => m.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LspState {
    Requested,
    Signaled,
    Active,
    Failed,
    Deleted,
}

impl fmt::Display for LspState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LspState::Requested => "requested",
            LspState::Signaled => "signaled",
            LspState::Active => "active",
            LspState::Failed => "failed",
            LspState::Deleted => "deleted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpticalLsp {
    pub id: LspId,
    pub src: NodeId,
    pub dst: NodeId,
    pub route: Vec<LinkId>,
    pub slot_start: u32,
    pub slot_width: u32,
    #[serde(with = "serde_rational")]
    pub capacity_gbps: Rational,
    #[serde(with = "serde_rational")]
    pub latency_ms: Rational,
    pub state: LspState,
    pub owner_service: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

impl OpticalLsp {
    pub fn range(&self) -> SlotRange {
        SlotRange::new(self.slot_start, self.slot_width)
    }

    /// `lsp_id | route | [start,end) | state | owner`
    pub fn dump_line(&self) -> String {
        let route: Vec<&str> = self.route.iter().map(LinkId::as_str).collect();
        format!("{} | {} | {} | {} | {}", self.id, route.join(","), self.range(), self.state, self.owner_service)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsgKind {
    PathMsg,
    ResvMsg,
    ErrMsg,
    TearMsg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingMessage {
    pub kind: MsgKind,
    pub lsp_id: LspId,
    /// 1-based position along the route.
    pub hop_index: usize,
    pub range: SlotRange,
}

/// Result of [`OpticalPce::rsa_compute`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaResult {
    pub route: Vec<LinkId>,
    pub slot_start: u32,
    pub latency_ms: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restoration {
    Restored(LspId),
    Unrestorable,
}

/// Up links of optical medium, excluding `avoid`, as routing arcs.
pub fn optical_arcs(topo: &Topology, avoid: &BTreeSet<LinkId>) -> Vec<Arc> {
    topo.links()
        .filter(|l| l.is_optical() && l.up && !avoid.contains(&l.id))
        .map(|l| Arc::new(l.id.as_str(), l.src.as_str(), l.dst.as_str(), l.latency_ms()))
        .collect()
}

/// Smallest `start` such that `[start, start+width)` is free on every link.
pub fn first_fit(topo: &Topology, route: &[LinkId], width: u32) -> Option<u32> {
    let grids: Vec<_> = route.iter().map(|l| topo.link(l).and_then(|l| l.grid())).collect::<Option<_>>()?;
    let slots = grids.iter().map(|g| g.slot_count()).min()?;
    (0..=slots.checked_sub(width)?).find(|&s| grids.iter().all(|g| g.is_free(SlotRange::new(s, width))))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpticalPce {
    lsps: BTreeMap<LspId, OpticalLsp>,
    trace: Vec<SignalingMessage>,
    ids: Counter,
}

impl OpticalPce {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lsp(&self, id: &LspId) -> Option<&OpticalLsp> {
        self.lsps.get(id)
    }

    pub fn lsps(&self) -> impl Iterator<Item = &OpticalLsp> {
        self.lsps.values()
    }

    pub fn active_count(&self) -> usize {
        self.lsps.values().filter(|l| l.state == LspState::Active).count()
    }

    /// Full signaling trace in emission order.
    pub fn trace(&self) -> &[SignalingMessage] {
        &self.trace
    }

    pub fn trace_of(&self, lsp: &LspId) -> Vec<&SignalingMessage> {
        self.trace.iter().filter(|m| m.lsp_id == *lsp).collect()
    }

    pub fn dump_db(&self) -> Vec<String> {
        self.lsps.values().map(OpticalLsp::dump_line).collect()
    }

    /// K-shortest routes by latency, first route with a common free block,
    /// first-fit start on that route.
    pub fn rsa_compute(
        &self,
        topo: &Topology,
        src: &NodeId,
        dst: &NodeId,
        width: u32,
        avoid: &BTreeSet<LinkId>,
    ) -> Result<RsaResult, OpticalError> {
        if width == 0 {
            return Err(OpticalError::InvalidRequest("slot width must be positive".into()));
        }
        if src == dst {
            return Err(OpticalError::InvalidRequest("source equals destination".into()));
        }
        for n in [src, dst] {
            if topo.node(n).is_none() {
                return Err(OpticalError::Model(ModelError::UnknownNode(n.clone())));
            }
        }
        let arcs = optical_arcs(topo, avoid);
        let routes = routing::k_shortest(&arcs, src.as_str(), dst.as_str(), topo.settings.k_paths);
        if routes.is_empty() {
            return Err(OpticalError::NoRoute { src: src.clone(), dst: dst.clone() });
        }
        for r in routes {
            let route: Vec<LinkId> = r.arcs.into_iter().map(LinkId::from).collect();
            if let Some(slot_start) = first_fit(topo, &route, width) {
                return Ok(RsaResult { route, slot_start, latency_ms: r.cost });
            }
        }
        Err(OpticalError::NoSpectrum { src: src.clone(), dst: dst.clone(), width })
    }

    fn validate_route(topo: &Topology, route: &[LinkId]) -> Result<(NodeId, NodeId), OpticalError> {
        if route.is_empty() {
            return Err(OpticalError::InvalidRoute("empty route".into()));
        }
        for id in route {
            let l = topo.link(id).ok_or_else(|| OpticalError::UnknownLink(id.clone()))?;
            if !l.is_optical() {
                return Err(OpticalError::Model(ModelError::NotOpticalLink(id.clone())));
            }
        }
        if !topo.is_contiguous(route) {
            return Err(OpticalError::InvalidRoute("links are not contiguous".into()));
        }
        let src = topo.link(&route[0]).expect("checked").src.clone();
        let dst = topo.link(route.last().expect("non-empty")).expect("checked").dst.clone();
        Ok((src, dst))
    }

    /// Two-phase signaling: PathMsg admission hop by hop, then ResvMsg
    /// allocation in reverse. On admission failure nothing is allocated and
    /// the LSP is recorded as deleted with a cause.
    pub fn signal_lsp(
        &mut self,
        topo: &mut Topology,
        route: &[LinkId],
        slot_start: u32,
        slot_width: u32,
        owner: &str,
    ) -> Result<OpticalLsp, OpticalError> {
        if slot_width == 0 {
            return Err(OpticalError::InvalidRequest("slot width must be positive".into()));
        }
        let (src, dst) = Self::validate_route(topo, route)?;
        let range = SlotRange::new(slot_start, slot_width);
        let id = LspId::new(self.ids.next("lsp"));
        let mut lsp = OpticalLsp {
            id: id.clone(),
            src,
            dst,
            route: route.to_vec(),
            slot_start,
            slot_width,
            capacity_gbps: rational::int(slot_width as i64) * topo.settings.gbps_per_slot,
            latency_ms: topo.route_latency(route),
            state: LspState::Requested,
            owner_service: owner.to_string(),
            cause: None,
        };
        let msg = |kind, hop| SignalingMessage { kind, lsp_id: id.clone(), hop_index: hop, range };

        for (i, link) in route.iter().enumerate() {
            let hop = i + 1;
            self.trace.push(msg(MsgKind::PathMsg, hop));
            let l = topo.link(link).expect("validated");
            let admitted = l.up && l.grid().is_some_and(|g| g.is_free(range));
            // A route that revisits a link would claim it twice.
            let repeated = route[..i].contains(link);
            if !admitted || repeated {
                self.trace.push(msg(MsgKind::ErrMsg, hop));
                lsp.state = LspState::Deleted;
                lsp.cause = Some(format!("admission failed at hop {hop}"));
                self.lsps.insert(id.clone(), lsp);
                return Err(OpticalError::AdmissionFailed { lsp: id, hop });
            }
        }
        lsp.state = LspState::Signaled;
        for (i, link) in route.iter().enumerate().rev() {
            self.trace.push(msg(MsgKind::ResvMsg, i + 1));
            topo.claim_slots(link, range, &id)?;
        }
        lsp.state = LspState::Active;
        self.lsps.insert(id, lsp.clone());
        Ok(lsp)
    }

    /// Sends TearMsg per hop and frees the block on every up link.
    pub fn teardown_lsp(&mut self, topo: &mut Topology, id: &LspId) -> Result<(), OpticalError> {
        let lsp = match self.lsps.get(id) {
            Some(l) if matches!(l.state, LspState::Active | LspState::Failed) => l.clone(),
            _ => return Err(OpticalError::UnknownLsp(id.clone())),
        };
        for (i, link) in lsp.route.iter().enumerate() {
            self.trace.push(SignalingMessage {
                kind: MsgKind::TearMsg,
                lsp_id: id.clone(),
                hop_index: i + 1,
                range: lsp.range(),
            });
            if topo.link(link).is_some_and(|l| l.up) {
                topo.release_slots(link, lsp.range(), id)?;
            }
        }
        if let Some(l) = self.lsps.get_mut(id) {
            l.state = LspState::Deleted;
        }
        Ok(())
    }

    /// Marks an optical link down and fails every active LSP crossing it.
    pub fn mark_link_down(&mut self, topo: &mut Topology, link: &LinkId) -> Result<Vec<LspId>, OpticalError> {
        let l = topo.link(link).ok_or_else(|| OpticalError::UnknownLink(link.clone()))?;
        if !l.up {
            return Err(OpticalError::AlreadyDown(link.clone()));
        }
        topo.set_link_up(link, false)?;
        let mut failed = Vec::new();
        for lsp in self.lsps.values_mut() {
            if lsp.state == LspState::Active && lsp.route.contains(link) {
                lsp.state = LspState::Failed;
                failed.push(lsp.id.clone());
            }
        }
        Ok(failed)
    }

    /// Brings a link back and drops claims left behind by LSPs deleted while
    /// it was down.
    pub fn mark_link_up(&mut self, topo: &mut Topology, link: &LinkId) -> Result<u32, OpticalError> {
        let l = topo.link(link).ok_or_else(|| OpticalError::UnknownLink(link.clone()))?;
        if l.up {
            return Err(OpticalError::AlreadyUp(link.clone()));
        }
        topo.set_link_up(link, true)?;
        if !topo.link(link).is_some_and(|l| l.is_optical()) {
            return Ok(0);
        }
        let live: BTreeSet<LspId> = self
            .lsps
            .values()
            .filter(|l| matches!(l.state, LspState::Active | LspState::Failed))
            .map(|l| l.id.clone())
            .collect();
        Ok(topo.release_slots_where(link, |owner| live.contains(owner))?)
    }

    /// Re-signals every failed LSP on `failed_link` around all down links,
    /// keeping its width, then tears the old one down.
    pub fn restore_lsps(&mut self, topo: &mut Topology, failed_link: &LinkId) -> BTreeMap<LspId, Restoration> {
        let victims: Vec<OpticalLsp> = self
            .lsps
            .values()
            .filter(|l| l.state == LspState::Failed && l.route.contains(failed_link))
            .cloned()
            .collect();
        let mut out = BTreeMap::new();
        for old in victims {
            let avoid = topo.down_links();
            let outcome = self
                .rsa_compute(topo, &old.src, &old.dst, old.slot_width, &avoid)
                .ok()
                .and_then(|r| self.signal_lsp(topo, &r.route, r.slot_start, old.slot_width, &old.owner_service).ok());
            match outcome {
                Some(new) => {
                    self.teardown_lsp(topo, &old.id).expect("failed lsp is tearable");
                    out.insert(old.id, Restoration::Restored(new.id));
                }
                None => {
                    out.insert(old.id, Restoration::Unrestorable);
                }
            }
        }
        out
    }

    /// Continuity, contiguity and ownership checks against the grids.
    pub fn check_invariants(&self, topo: &Topology) -> Result<(), String> {
        for lsp in self.lsps.values().filter(|l| l.state == LspState::Active) {
            for link in &lsp.route {
                let grid = topo.link(link).and_then(|l| l.grid()).ok_or(format!("{} route broken", lsp.id))?;
                for s in lsp.range().slots() {
                    if grid.owner_of(s) != Some(&lsp.id) {
                        return Err(format!("{} does not own slot {s} on {link}", lsp.id));
                    }
                }
            }
        }
        for link in topo.links() {
            let Some(grid) = link.grid() else { continue };
            if !grid.is_consistent() {
                return Err(format!("grid of {} inconsistent", link.id));
            }
            for (slot, owner) in grid.owners() {
                let lsp = self.lsps.get(owner).ok_or(format!("slot {slot} on {} owned by unknown {owner}", link.id))?;
                let live = match lsp.state {
                    LspState::Active | LspState::Failed => lsp.route.contains(&link.id) && lsp.range().slots().any(|s| s == *slot),
                    LspState::Deleted => !link.up,
                    _ => false,
                };
                if !live {
                    return Err(format!("slot {slot} on {} held by {owner} in state {}", link.id, lsp.state));
                }
            }
        }
        Ok(())
    }
}
