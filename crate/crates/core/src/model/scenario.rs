//! Scenario document schema and validated loading.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{
    DataCenter, Domain, Link, LinkScope, Medium, ModelError, Node, NodeKind, OpticalMedium,
    PacketMedium, Resources, SpectrumGrid, Tech, Tenant, Tier, Topology,
};
use crate::ids::{DcId, DomainId, ImageId, LinkId, NodeId, TenantId};
use crate::mobile::{SplitBoundary, SplitOption};
use crate::nfv::VnfDescriptor;
use crate::rational::{serde_rational, Rational};

/// Tunables that the scenario may override.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Capacity carried by one frequency slot.
    #[serde(with = "serde_rational")]
    pub gbps_per_slot: Rational,
    /// Grid size for optical links that do not state one.
    pub slot_count: u32,
    /// Candidate routes examined by RSA.
    pub k_paths: usize,
    /// Minimum width of orchestrator-created optical LSPs.
    pub min_slot_width: u32,
    /// Keep optical tunnels alive after their last groomed service leaves.
    pub retain_idle_tunnels: bool,
    /// Allow placement in DCs that do not yet hold the image.
    pub image_copy_allowed: bool,
    /// Bandwidth of the MME-SGW control edge created at EPC bootstrap.
    #[serde(with = "serde_rational")]
    pub s11_bw_mbps: Rational,
    /// Bandwidth of the SGW-PGW edge created at EPC bootstrap.
    #[serde(with = "serde_rational")]
    pub s5_bw_mbps: Rational,
    /// Backhaul bandwidth between a split RAN stack and the SGW.
    #[serde(with = "serde_rational")]
    pub s1_bw_mbps: Rational,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            gbps_per_slot: Rational::new(25, 2),
            slot_count: 16,
            k_paths: 3,
            min_slot_width: 4,
            retain_idle_tunnels: false,
            image_copy_allowed: false,
            s11_bw_mbps: Rational::from_integer(10),
            s5_bw_mbps: Rational::from_integer(100),
            s1_bw_mbps: Rational::from_integer(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc: Option<DcId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDoc {
    pub id: DomainId,
    pub tech: Tech,
    pub nodes: Vec<NodeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MediumDoc {
    Packet {
        #[serde(with = "serde_rational")]
        capacity_mbps: Rational,
        #[serde(with = "serde_rational")]
        latency_ms: Rational,
    },
    Optical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slot_count: Option<u32>,
        #[serde(with = "serde_rational")]
        latency_ms: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub medium: MediumDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCenterDoc {
    pub id: DcId,
    pub tier: Tier,
    pub attach_node: NodeId,
    pub cpu: u64,
    pub ram_mb: u64,
    pub disk_gb: u64,
    #[serde(default)]
    pub images: Vec<ImageId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantDoc {
    pub id: TenantId,
    pub name: String,
}

/// Root of a scenario document. Events are kept as raw trees; the harness
/// validates them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settings: Option<Settings>,
    pub domains: Vec<DomainDoc>,
    pub links: Vec<LinkDoc>,
    pub datacenters: Vec<DataCenterDoc>,
    pub tenants: Vec<TenantDoc>,
    pub vnf_catalog: Vec<VnfDescriptor>,
    pub split_table: Vec<SplitOption>,
    pub events: Vec<serde_json::Value>,
}

impl ScenarioDoc {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

fn unique<'a, T: Ord + std::fmt::Display + 'a>(
    what: &str,
    ids: impl IntoIterator<Item = &'a T>,
) -> Result<(), ModelError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ModelError::Consistency(format!("duplicate {what} id {id}")));
        }
    }
    Ok(())
}

/// Validates a scenario document and builds the substrate with all
/// reservations at zero and every link up.
pub fn load_scenario(doc: &ScenarioDoc) -> Result<Topology, ModelError> {
    let settings = doc.settings.clone().unwrap_or_default();
    if settings.gbps_per_slot <= Rational::zero() {
        return Err(ModelError::Consistency("gbps_per_slot must be positive".into()));
    }
    if settings.slot_count == 0 || settings.k_paths == 0 || settings.min_slot_width == 0 {
        return Err(ModelError::Consistency(
            "slot_count, k_paths and min_slot_width must be positive".into(),
        ));
    }

    unique("domain", doc.domains.iter().map(|d| &d.id))?;
    unique("node", doc.domains.iter().flat_map(|d| d.nodes.iter().map(|n| &n.id)))?;
    unique("link", doc.links.iter().map(|l| &l.id))?;
    unique("datacenter", doc.datacenters.iter().map(|d| &d.id))?;
    unique("tenant", doc.tenants.iter().map(|t| &t.id))?;
    unique("vnf type", doc.vnf_catalog.iter().map(|v| &v.type_id))?;
    unique("split option", doc.split_table.iter().map(|s| &s.id))?;

    let mut domains = BTreeMap::new();
    let mut nodes = BTreeMap::new();
    for d in &doc.domains {
        for n in &d.nodes {
            if !n.kind.allowed_in(d.tech) {
                return Err(ModelError::Consistency(format!(
                    "node {} of kind {:?} cannot live in {:?} domain {}",
                    n.id, n.kind, d.tech, d.id
                )));
            }
            nodes.insert(
                n.id.clone(),
                Node { id: n.id.clone(), domain_id: d.id.clone(), kind: n.kind, dc_id: n.dc.clone() },
            );
        }
        domains.insert(
            d.id.clone(),
            Domain {
                id: d.id.clone(),
                tech: d.tech,
                controller: d.tech.controller(),
                node_ids: d.nodes.iter().map(|n| n.id.clone()).collect(),
            },
        );
    }

    let mut datacenters = BTreeMap::new();
    for dc in &doc.datacenters {
        let node = nodes.get_mut(&dc.attach_node).ok_or_else(|| {
            ModelError::Reference(format!("datacenter {} attaches to unknown node {}", dc.id, dc.attach_node))
        })?;
        match &node.dc_id {
            Some(other) if *other != dc.id => {
                return Err(ModelError::Consistency(format!(
                    "node {} declares dc {} but datacenter {} attaches there",
                    node.id, other, dc.id
                )))
            }
            _ => node.dc_id = Some(dc.id.clone()),
        }
        if domains[&node.domain_id].tech == Tech::Optical {
            return Err(ModelError::Consistency(format!(
                "datacenter {} cannot attach to optical node {}",
                dc.id, node.id
            )));
        }
        datacenters.insert(
            dc.id.clone(),
            DataCenter {
                id: dc.id.clone(),
                tier: dc.tier,
                total: Resources::new(dc.cpu, dc.ram_mb, dc.disk_gb),
                used: Resources::default(),
                attach_node: dc.attach_node.clone(),
                images: dc.images.iter().cloned().collect(),
            },
        );
    }
    for node in nodes.values() {
        if let Some(dc) = &node.dc_id {
            match datacenters.get(dc) {
                None => {
                    return Err(ModelError::Reference(format!(
                        "node {} references unknown datacenter {dc}",
                        node.id
                    )))
                }
                Some(d) if d.attach_node != node.id => {
                    return Err(ModelError::Consistency(format!(
                        "node {} declares dc {dc} which attaches to {}",
                        node.id, d.attach_node
                    )))
                }
                Some(_) => {}
            }
        }
    }

    let mut links = BTreeMap::new();
    for l in &doc.links {
        let src = nodes
            .get(&l.src)
            .ok_or_else(|| ModelError::Reference(format!("link {} source {} unknown", l.id, l.src)))?;
        let dst = nodes
            .get(&l.dst)
            .ok_or_else(|| ModelError::Reference(format!("link {} destination {} unknown", l.id, l.dst)))?;
        if src.id == dst.id {
            return Err(ModelError::Consistency(format!("link {} is a self-loop", l.id)));
        }
        let scope = if src.domain_id == dst.domain_id {
            LinkScope::IntraDomain
        } else {
            LinkScope::InterDomain
        };
        let src_tech = domains[&src.domain_id].tech;
        let medium = match &l.medium {
            MediumDoc::Packet { capacity_mbps, latency_ms } => {
                if *capacity_mbps < Rational::zero() || *latency_ms < Rational::zero() {
                    return Err(ModelError::Consistency(format!("link {} has negative attributes", l.id)));
                }
                if scope == LinkScope::IntraDomain && src_tech == Tech::Optical {
                    return Err(ModelError::Consistency(format!(
                        "packet link {} inside optical domain {}",
                        l.id, src.domain_id
                    )));
                }
                Medium::Packet(PacketMedium {
                    capacity_mbps: *capacity_mbps,
                    reserved_mbps: Rational::zero(),
                    latency_ms: *latency_ms,
                })
            }
            MediumDoc::Optical { slot_count, latency_ms } => {
                if scope == LinkScope::InterDomain {
                    return Err(ModelError::Consistency(format!(
                        "inter-domain link {} must be a packet link",
                        l.id
                    )));
                }
                if src_tech != Tech::Optical {
                    return Err(ModelError::Consistency(format!(
                        "optical link {} outside an optical domain",
                        l.id
                    )));
                }
                let slots = slot_count.unwrap_or(settings.slot_count);
                if slots == 0 || *latency_ms < Rational::zero() {
                    return Err(ModelError::Consistency(format!("link {} has invalid grid", l.id)));
                }
                Medium::Optical(OpticalMedium { grid: SpectrumGrid::new(slots), latency_ms: *latency_ms })
            }
        };
        links.insert(
            l.id.clone(),
            Link { id: l.id.clone(), src: l.src.clone(), dst: l.dst.clone(), scope, medium, up: true },
        );
    }

    let tenants = doc
        .tenants
        .iter()
        .map(|t| (t.id.clone(), Tenant { id: t.id.clone(), name: t.name.clone() }))
        .collect();

    let mut vnf_catalog = BTreeMap::new();
    for v in &doc.vnf_catalog {
        if v.cpu == 0 || v.ram_mb == 0 || v.disk_gb == 0 {
            return Err(ModelError::Consistency(format!(
                "vnf type {} must have positive resource demands",
                v.type_id
            )));
        }
        vnf_catalog.insert(v.type_id.clone(), v.clone());
    }

    let mut boundaries = BTreeSet::new();
    for s in &doc.split_table {
        if !boundaries.insert(s.boundary) {
            return Err(ModelError::Consistency(format!(
                "split table has two options at boundary {:?}",
                s.boundary
            )));
        }
        if s.fronthaul_bw_mbps < Rational::zero() || s.energy_cost < Rational::zero() {
            return Err(ModelError::Consistency(format!("split option {} has negative values", s.id)));
        }
        if s.boundary == SplitBoundary::AboveRrc && !s.fronthaul_bw_mbps.is_zero() {
            return Err(ModelError::Consistency(format!(
                "all-local split option {} must not demand fronthaul",
                s.id
            )));
        }
    }

    Ok(Topology {
        name: doc.name.clone(),
        settings,
        domains,
        nodes,
        links,
        datacenters,
        tenants,
        vnf_catalog,
        split_table: doc.split_table.clone(),
        ledger: Vec::new(),
    })
}
