//! Multi-domain substrate: domains, nodes, links, data centers and tenants,
//! plus the resource accounting primitives every controller goes through.

mod grid;
mod scenario;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

pub use grid::{GridError, SlotRange, SpectrumGrid};
pub use scenario::{
    load_scenario, DataCenterDoc, DomainDoc, LinkDoc, MediumDoc, NodeDoc, ScenarioDoc, Settings,
    TenantDoc,
};
pub use snapshot::{ResourceSnapshot, DIGEST_ALGORITHM};

use crate::ids::{DcId, DomainId, ImageId, LinkId, LspId, NodeId, TenantId, VnfTypeId};
use crate::mobile::SplitOption;
use crate::nfv::VnfDescriptor;
use crate::rational::{self, serde_rational, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tech {
    Ran,
    Packet,
    Optical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    SdnPacket,
    SdnRan,
    PceGmpls,
}

impl Tech {
    pub fn controller(self) -> ControllerKind {
        match self {
            Tech::Ran => ControllerKind::SdnRan,
            Tech::Packet => ControllerKind::SdnPacket,
            Tech::Optical => ControllerKind::PceGmpls,
        }
    }

    pub fn is_packet_capable(self) -> bool {
        !matches!(self, Tech::Optical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub id: DomainId,
    pub tech: Tech,
    pub controller: ControllerKind,
    pub node_ids: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Enb,
    PacketSwitch,
    Roadm,
    RanGateway,
    DcGateway,
}

impl NodeKind {
    /// Whether a node of this kind may live in a domain of `tech`.
    pub fn allowed_in(self, tech: Tech) -> bool {
        match self {
            NodeKind::Enb | NodeKind::RanGateway => tech == Tech::Ran,
            NodeKind::PacketSwitch => tech == Tech::Packet,
            NodeKind::Roadm => tech == Tech::Optical,
            NodeKind::DcGateway => tech.is_packet_capable(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub domain_id: DomainId,
    pub kind: NodeKind,
    pub dc_id: Option<DcId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkScope {
    IntraDomain,
    InterDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketMedium {
    #[serde(with = "serde_rational")]
    pub capacity_mbps: Rational,
    #[serde(with = "serde_rational")]
    pub reserved_mbps: Rational,
    #[serde(with = "serde_rational")]
    pub latency_ms: Rational,
}

impl PacketMedium {
    pub fn free_mbps(&self) -> Rational {
        self.capacity_mbps - self.reserved_mbps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpticalMedium {
    pub grid: SpectrumGrid,
    #[serde(with = "serde_rational")]
    pub latency_ms: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Packet(PacketMedium),
    Optical(OpticalMedium),
}

/// Directed link. A bidirectional adjacency is two records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub scope: LinkScope,
    pub medium: Medium,
    pub up: bool,
}

impl Link {
    pub fn latency_ms(&self) -> Rational {
        match &self.medium {
            Medium::Packet(p) => p.latency_ms,
            Medium::Optical(o) => o.latency_ms,
        }
    }

    pub fn packet(&self) -> Option<&PacketMedium> {
        match &self.medium {
            Medium::Packet(p) => Some(p),
            Medium::Optical(_) => None,
        }
    }

    pub fn grid(&self) -> Option<&SpectrumGrid> {
        match &self.medium {
            Medium::Optical(o) => Some(&o.grid),
            Medium::Packet(_) => None,
        }
    }

    pub fn is_packet(&self) -> bool {
        matches!(self.medium, Medium::Packet(_))
    }

    pub fn is_optical(&self) -> bool {
        matches!(self.medium, Medium::Optical(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Core,
}

/// Compute demand or capacity triple.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Resources {
    pub cpu: u64,
    pub ram_mb: u64,
    pub disk_gb: u64,
}

impl Resources {
    pub fn new(cpu: u64, ram_mb: u64, disk_gb: u64) -> Self {
        Self { cpu, ram_mb, disk_gb }
    }

    pub fn fits_within(&self, other: &Resources) -> bool {
        self.cpu <= other.cpu && self.ram_mb <= other.ram_mb && self.disk_gb <= other.disk_gb
    }

    pub fn checked_sub(&self, other: &Resources) -> Option<Resources> {
        Some(Resources {
            cpu: self.cpu.checked_sub(other.cpu)?,
            ram_mb: self.ram_mb.checked_sub(other.ram_mb)?,
            disk_gb: self.disk_gb.checked_sub(other.disk_gb)?,
        })
    }

    pub fn saturating_add(&self, other: &Resources) -> Resources {
        Resources {
            cpu: self.cpu.saturating_add(other.cpu),
            ram_mb: self.ram_mb.saturating_add(other.ram_mb),
            disk_gb: self.disk_gb.saturating_add(other.disk_gb),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCenter {
    pub id: DcId,
    pub tier: Tier,
    pub total: Resources,
    pub used: Resources,
    pub attach_node: NodeId,
    pub images: BTreeSet<ImageId>,
}

impl DataCenter {
    pub fn free(&self) -> Resources {
        self.total.checked_sub(&self.used).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tenant {
    pub id: TenantId,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerOp {
    Reserve,
    Release,
}

/// One bandwidth accounting event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub op: LedgerOp,
    pub link: LinkId,
    #[serde(with = "serde_rational")]
    pub amount: Rational,
    pub requester: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown data center {0}")]
    UnknownDc(DcId),
    #[error("link {0} is not a packet link")]
    NotPacketLink(LinkId),
    #[error("link {0} is not an optical link")]
    NotOpticalLink(LinkId),
    #[error("capacity exceeded on {link}: requested {requested}, free {free}")]
    CapacityExceeded { link: LinkId, requested: String, free: String },
    #[error("release of {amount} on {link} exceeds reservation {reserved}")]
    UnderflowRelease { link: LinkId, amount: String, reserved: String },
    #[error("negative amount {0}")]
    NegativeAmount(String),
    #[error("data center {dc} lacks capacity for {demand:?}")]
    DcCapacity { dc: DcId, demand: Resources },
    #[error("data center {dc} cannot credit {amount:?}")]
    DcUnderflow { dc: DcId, amount: Resources },
    #[error("spectrum error on {link}: {source}")]
    Spectrum { link: LinkId, source: GridError },
}

impl ModelError {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Schema(_) => "SchemaError",
            ModelError::Reference(_) => "ReferenceError",
            ModelError::Consistency(_) => "ConsistencyError",
            ModelError::UnknownLink(_) => "UnknownLink",
            ModelError::UnknownNode(_) => "UnknownNode",
            ModelError::UnknownDc(_) => "UnknownDc",
            ModelError::NotPacketLink(_) => "NotPacketLink",
            ModelError::NotOpticalLink(_) => "NotOpticalLink",
            ModelError::CapacityExceeded { .. } => "CapacityExceeded",
            ModelError::UnderflowRelease { .. } => "UnderflowRelease",
            ModelError::NegativeAmount(_) => "NegativeAmount",
            ModelError::DcCapacity { .. } => "NoCapacity",
            ModelError::DcUnderflow { .. } => "DcUnderflow",
            ModelError::Spectrum { .. } => "SpectrumError",
        }
    }
}

/// The validated multi-domain substrate and its resource accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub settings: Settings,
    domains: BTreeMap<DomainId, Domain>,
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeMap<LinkId, Link>,
    datacenters: BTreeMap<DcId, DataCenter>,
    tenants: BTreeMap<TenantId, Tenant>,
    vnf_catalog: BTreeMap<VnfTypeId, VnfDescriptor>,
    split_table: Vec<SplitOption>,
    ledger: Vec<LedgerEntry>,
}

impl Topology {
    pub fn domains(&self) -> impl Iterator<Item = &Domain> {
        self.domains.values()
    }

    pub fn domain(&self, id: &DomainId) -> Option<&Domain> {
        self.domains.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn node_domain(&self, id: &NodeId) -> Option<&Domain> {
        self.nodes.get(id).and_then(|n| self.domains.get(&n.domain_id))
    }

    pub fn node_tech(&self, id: &NodeId) -> Option<Tech> {
        self.node_domain(id).map(|d| d.tech)
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn link(&self, id: &LinkId) -> Option<&Link> {
        self.links.get(id)
    }

    pub fn datacenters(&self) -> impl Iterator<Item = &DataCenter> {
        self.datacenters.values()
    }

    pub fn datacenter(&self, id: &DcId) -> Option<&DataCenter> {
        self.datacenters.get(id)
    }

    pub fn tenants(&self) -> impl Iterator<Item = &Tenant> {
        self.tenants.values()
    }

    pub fn tenant(&self, id: &TenantId) -> Option<&Tenant> {
        self.tenants.get(id)
    }

    pub fn vnf_catalog(&self) -> &BTreeMap<VnfTypeId, VnfDescriptor> {
        &self.vnf_catalog
    }

    pub fn split_table(&self) -> &[SplitOption] {
        &self.split_table
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn down_links(&self) -> BTreeSet<LinkId> {
        self.links.values().filter(|l| !l.up).map(|l| l.id.clone()).collect()
    }

    /// Nodes that terminate at least one inter-domain link.
    pub fn border_nodes(&self) -> BTreeSet<NodeId> {
        self.links
            .values()
            .filter(|l| l.scope == LinkScope::InterDomain)
            .flat_map(|l| [l.src.clone(), l.dst.clone()])
            .collect()
    }

    /// The domain whose controller programs `link`: intra-domain links belong
    /// to their domain; inter-domain links to the packet-capable endpoint,
    /// preferring the source side.
    pub fn owning_domain(&self, link: &Link) -> Option<DomainId> {
        let src = self.node_domain(&link.src)?;
        if link.scope == LinkScope::IntraDomain || src.tech.is_packet_capable() {
            return Some(src.id.clone());
        }
        self.node_domain(&link.dst).map(|d| d.id.clone())
    }

    /// Sum of the latencies of `links` (unknown ids contribute nothing).
    pub fn route_latency(&self, links: &[LinkId]) -> Rational {
        links
            .iter()
            .filter_map(|l| self.links.get(l))
            .map(Link::latency_ms)
            .fold(Rational::zero(), |a, b| a + b)
    }

    /// Checks that `links` exist and chain head-to-tail.
    pub fn is_contiguous(&self, links: &[LinkId]) -> bool {
        let mut prev: Option<&NodeId> = None;
        for id in links {
            let Some(link) = self.links.get(id) else { return false };
            if let Some(p) = prev {
                if *p != link.src {
                    return false;
                }
            }
            prev = Some(&link.dst);
        }
        true
    }

    fn packet_medium_mut(&mut self, link: &LinkId) -> Result<&mut PacketMedium, ModelError> {
        match self.links.get_mut(link) {
            None => Err(ModelError::UnknownLink(link.clone())),
            Some(Link { medium: Medium::Packet(p), .. }) => Ok(p),
            Some(_) => Err(ModelError::NotPacketLink(link.clone())),
        }
    }

    fn grid_mut(&mut self, link: &LinkId) -> Result<&mut SpectrumGrid, ModelError> {
        match self.links.get_mut(link) {
            None => Err(ModelError::UnknownLink(link.clone())),
            Some(Link { medium: Medium::Optical(o), .. }) => Ok(&mut o.grid),
            Some(_) => Err(ModelError::NotOpticalLink(link.clone())),
        }
    }

    /// Reserves `mbps` on a packet link for `requester`. Returns the new
    /// reservation.
    pub fn reserve_packet_bw(
        &mut self,
        link: &LinkId,
        mbps: Rational,
        requester: &str,
    ) -> Result<Rational, ModelError> {
        if mbps < Rational::zero() {
            return Err(ModelError::NegativeAmount(rational::format(&mbps)));
        }
        let medium = self.packet_medium_mut(link)?;
        if medium.reserved_mbps + mbps > medium.capacity_mbps {
            return Err(ModelError::CapacityExceeded {
                link: link.clone(),
                requested: rational::format(&mbps),
                free: rational::format(&medium.free_mbps()),
            });
        }
        medium.reserved_mbps += mbps;
        let reserved = medium.reserved_mbps;
        self.ledger.push(LedgerEntry {
            op: LedgerOp::Reserve,
            link: link.clone(),
            amount: mbps,
            requester: requester.to_string(),
        });
        Ok(reserved)
    }

    pub fn release_packet_bw(
        &mut self,
        link: &LinkId,
        mbps: Rational,
        requester: &str,
    ) -> Result<Rational, ModelError> {
        if mbps < Rational::zero() {
            return Err(ModelError::NegativeAmount(rational::format(&mbps)));
        }
        let medium = self.packet_medium_mut(link)?;
        if mbps > medium.reserved_mbps {
            return Err(ModelError::UnderflowRelease {
                link: link.clone(),
                amount: rational::format(&mbps),
                reserved: rational::format(&medium.reserved_mbps),
            });
        }
        medium.reserved_mbps -= mbps;
        let reserved = medium.reserved_mbps;
        self.ledger.push(LedgerEntry {
            op: LedgerOp::Release,
            link: link.clone(),
            amount: mbps,
            requester: requester.to_string(),
        });
        Ok(reserved)
    }

    pub fn claim_slots(&mut self, link: &LinkId, range: SlotRange, lsp: &LspId) -> Result<(), ModelError> {
        self.grid_mut(link)?
            .claim(range, lsp)
            .map_err(|source| ModelError::Spectrum { link: link.clone(), source })
    }

    pub fn release_slots(&mut self, link: &LinkId, range: SlotRange, lsp: &LspId) -> Result<(), ModelError> {
        self.grid_mut(link)?
            .release(range, lsp)
            .map_err(|source| ModelError::Spectrum { link: link.clone(), source })
    }

    /// Frees every slot on `link` whose owner does not satisfy `keep`.
    pub fn release_slots_where(
        &mut self,
        link: &LinkId,
        keep: impl FnMut(&LspId) -> bool,
    ) -> Result<u32, ModelError> {
        Ok(self.grid_mut(link)?.release_where(keep))
    }

    pub fn set_link_up(&mut self, link: &LinkId, up: bool) -> Result<(), ModelError> {
        let l = self
            .links
            .get_mut(link)
            .ok_or_else(|| ModelError::UnknownLink(link.clone()))?;
        l.up = up;
        Ok(())
    }

    pub fn debit_dc(&mut self, dc: &DcId, demand: &Resources) -> Result<(), ModelError> {
        let d = self
            .datacenters
            .get_mut(dc)
            .ok_or_else(|| ModelError::UnknownDc(dc.clone()))?;
        let used = d.used.saturating_add(demand);
        if !used.fits_within(&d.total) {
            return Err(ModelError::DcCapacity { dc: dc.clone(), demand: *demand });
        }
        d.used = used;
        Ok(())
    }

    pub fn credit_dc(&mut self, dc: &DcId, amount: &Resources) -> Result<(), ModelError> {
        let d = self
            .datacenters
            .get_mut(dc)
            .ok_or_else(|| ModelError::UnknownDc(dc.clone()))?;
        d.used = d
            .used
            .checked_sub(amount)
            .ok_or_else(|| ModelError::DcUnderflow { dc: dc.clone(), amount: *amount })?;
        Ok(())
    }

    pub fn add_image(&mut self, dc: &DcId, image: &ImageId) -> Result<(), ModelError> {
        let d = self
            .datacenters
            .get_mut(dc)
            .ok_or_else(|| ModelError::UnknownDc(dc.clone()))?;
        d.images.insert(image.clone());
        Ok(())
    }

    pub fn snapshot(&self) -> ResourceSnapshot {
        ResourceSnapshot::capture(self)
    }

    /// Signed ledger sum per link (reserve positive, release negative).
    pub fn ledger_balance(&self) -> BTreeMap<LinkId, Rational> {
        let mut out: BTreeMap<LinkId, Rational> = BTreeMap::new();
        for e in &self.ledger {
            let v = out.entry(e.link.clone()).or_insert_with(Rational::zero);
            match e.op {
                LedgerOp::Reserve => *v += e.amount,
                LedgerOp::Release => *v -= e.amount,
            }
        }
        out
    }

    /// Net bandwidth each requester currently holds on each link.
    pub fn holdings(&self) -> BTreeMap<(LinkId, String), Rational> {
        let mut out: BTreeMap<(LinkId, String), Rational> = BTreeMap::new();
        for e in &self.ledger {
            let v = out
                .entry((e.link.clone(), e.requester.clone()))
                .or_insert_with(Rational::zero);
            match e.op {
                LedgerOp::Reserve => *v += e.amount,
                LedgerOp::Release => *v -= e.amount,
            }
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    /// Verifies the accounting invariants: bounded reservations, grid
    /// consistency, ledger conservation, DC usage bounds.
    pub fn check_invariants(&self) -> Result<(), String> {
        let balance = self.ledger_balance();
        for link in self.links.values() {
            match &link.medium {
                Medium::Packet(p) => {
                    if p.reserved_mbps < Rational::zero() || p.reserved_mbps > p.capacity_mbps {
                        return Err(format!("link {} reservation out of bounds", link.id));
                    }
                    let b = balance.get(&link.id).copied().unwrap_or_else(Rational::zero);
                    if b != p.reserved_mbps {
                        return Err(format!(
                            "link {} ledger balance {} != reserved {}",
                            link.id,
                            rational::format(&b),
                            rational::format(&p.reserved_mbps)
                        ));
                    }
                }
                Medium::Optical(o) => {
                    if !o.grid.is_consistent() {
                        return Err(format!("grid of {} inconsistent", link.id));
                    }
                }
            }
        }
        for dc in self.datacenters.values() {
            if !dc.used.fits_within(&dc.total) {
                return Err(format!("dc {} over-committed", dc.id));
            }
        }
        Ok(())
    }
}
