use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Medium, Resources, Topology};
use crate::ids::{DcId, LinkId};
use crate::rational::{self, Rational};

/// Name of the digest used for snapshot hashes in logs.
pub const DIGEST_ALGORITHM: &str = "sha256";

/// Immutable capture of every reservation, spectrum occupancy vector and
/// data-center usage triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSnapshot {
    links: BTreeMap<LinkId, String>,
    grids: BTreeMap<LinkId, String>,
    dcs: BTreeMap<DcId, Resources>,
}

impl ResourceSnapshot {
    pub(super) fn capture(topo: &Topology) -> Self {
        let mut links = BTreeMap::new();
        let mut grids = BTreeMap::new();
        for link in topo.links() {
            match &link.medium {
                Medium::Packet(p) => {
                    links.insert(link.id.clone(), rational::format(&p.reserved_mbps));
                }
                Medium::Optical(o) => {
                    grids.insert(link.id.clone(), o.grid.bits());
                }
            }
        }
        let dcs = topo.datacenters().map(|d| (d.id.clone(), d.used)).collect();
        Self { links, grids, dcs }
    }

    pub fn reserved(&self, link: &LinkId) -> Option<Rational> {
        self.links.get(link).and_then(|s| rational::parse(s).ok())
    }

    pub fn grid_bits(&self, link: &LinkId) -> Option<&str> {
        self.grids.get(link).map(String::as_str)
    }

    pub fn dc_used(&self, dc: &DcId) -> Option<Resources> {
        self.dcs.get(dc).copied()
    }

    /// Canonical, ordered serialization used for hashing.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (id, r) in &self.links {
            out.push_str(&format!("bw {id} {r}\n"));
        }
        for (id, bits) in &self.grids {
            out.push_str(&format!("grid {id} {bits}\n"));
        }
        for (id, u) in &self.dcs {
            out.push_str(&format!("dc {id} {} {} {}\n", u.cpu, u.ram_mb, u.disk_gb));
        }
        out
    }

    /// Hex digest of [`Self::canonical`].
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
