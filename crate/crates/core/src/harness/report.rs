//! Metrics report built from the final state and the event log.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{census, Census, LogHeader, LogRecord};
use crate::ids::{DcId, LinkId};
use crate::model::{Medium, Resources};
use crate::platform::Platform;
use crate::rational::{self, serde_rational, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkUsage {
    #[serde(with = "serde_rational")]
    pub reserved_mbps: Rational,
    #[serde(with = "serde_rational")]
    pub capacity_mbps: Rational,
    #[serde(with = "serde_rational")]
    pub utilization: Rational,
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridUsage {
    pub occupied: u32,
    pub slots: u32,
    #[serde(with = "serde_rational")]
    pub occupancy: Rational,
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcUsage {
    pub used: Resources,
    pub total: Resources,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTally {
    pub total: u64,
    pub ok: u64,
    pub error: u64,
    pub mismatched: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryTally {
    pub recovered: u64,
    pub unrecoverable: u64,
    pub bearers_recovered: u64,
    pub bearers_lost: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub snapshot: String,
    pub counts: Census,
    pub events: EventTally,
    pub recovery: RecoveryTally,
    pub links: BTreeMap<LinkId, LinkUsage>,
    pub grids: BTreeMap<LinkId, GridUsage>,
    pub dcs: BTreeMap<DcId, DcUsage>,
}

fn ratio(num: Rational, den: Rational) -> Rational {
    if den.is_zero() {
        Rational::zero()
    } else {
        num / den
    }
}

impl MetricsReport {
    pub fn build(p: &Platform, header: &LogHeader, records: &[LogRecord]) -> Self {
        let mut events = EventTally::default();
        let mut recovery = RecoveryTally::default();
        for r in records {
            events.total += 1;
            if r.outcome == "ok" {
                events.ok += 1;
            } else {
                events.error += 1;
            }
            if !r.matched {
                events.mismatched += 1;
            }
            if r.action == "link_down" && r.outcome == "ok" {
                for outcome in r.detail["services"].as_object().into_iter().flat_map(|m| m.values()) {
                    if outcome.get("recovered").is_some() {
                        recovery.recovered += 1;
                    } else {
                        recovery.unrecoverable += 1;
                    }
                }
                for outcome in r.detail["bearers"].as_object().into_iter().flat_map(|m| m.values()) {
                    if outcome == "recovered" {
                        recovery.bearers_recovered += 1;
                    } else {
                        recovery.bearers_lost += 1;
                    }
                }
            }
        }
        let mut links = BTreeMap::new();
        let mut grids = BTreeMap::new();
        for l in p.topo.links() {
            match &l.medium {
                Medium::Packet(m) => {
                    links.insert(
                        l.id.clone(),
                        LinkUsage {
                            reserved_mbps: m.reserved_mbps,
                            capacity_mbps: m.capacity_mbps,
                            utilization: ratio(m.reserved_mbps, m.capacity_mbps),
                            up: l.up,
                        },
                    );
                }
                Medium::Optical(o) => {
                    let occupied = o.grid.occupied_count();
                    let slots = o.grid.slot_count();
                    grids.insert(
                        l.id.clone(),
                        GridUsage {
                            occupied,
                            slots,
                            occupancy: ratio(Rational::from(occupied as i64), Rational::from(slots as i64)),
                            up: l.up,
                        },
                    );
                }
            }
        }
        let dcs = p.topo.datacenters().map(|d| (d.id.clone(), DcUsage { used: d.used, total: d.total })).collect();
        Self {
            scenario: header.scenario.clone(),
            snapshot: p.snapshot().digest(),
            counts: census(p),
            events,
            recovery,
            links,
            grids,
            dcs,
        }
    }

    pub fn render(&self, p: &Platform, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            ReportFormat::Text => self.render_text(p),
        }
    }

    fn render_text(&self, p: &Platform) -> String {
        let mut out = Vec::new();
        out.push(format!("scenario {}", self.scenario));
        out.push(format!("snapshot sha256:{}", self.snapshot));
        out.push("[counts]".into());
        out.extend(self.counts.iter().map(|(k, v)| format!("{k} = {v}")));
        out.push("[events]".into());
        let e = &self.events;
        out.push(format!("total = {}, ok = {}, error = {}, mismatched = {}", e.total, e.ok, e.error, e.mismatched));
        out.push("[recovery]".into());
        let r = &self.recovery;
        out.push(format!(
            "services recovered = {}, unrecoverable = {}; bearers recovered = {}, lost = {}",
            r.recovered, r.unrecoverable, r.bearers_recovered, r.bearers_lost
        ));
        out.push("[links]".into());
        for (id, u) in &self.links {
            out.push(format!(
                "{id} | {}/{} | {} | {}",
                rational::format(&u.reserved_mbps),
                rational::format(&u.capacity_mbps),
                rational::format(&u.utilization),
                if u.up { "up" } else { "down" }
            ));
        }
        out.push("[grids]".into());
        for (id, g) in &self.grids {
            let bits = p.topo.link(id).and_then(|l| l.grid()).map(|g| g.bits()).unwrap_or_default();
            out.push(format!("{id} | {bits} | {} | {}", rational::format(&g.occupancy), if g.up { "up" } else { "down" }));
        }
        out.push("[dcs]".into());
        for (id, d) in &self.dcs {
            out.push(format!(
                "{id} | {}/{}/{} of {}/{}/{}",
                d.used.cpu, d.used.ram_mb, d.used.disk_gb, d.total.cpu, d.total.ram_mb, d.total.disk_gb
            ));
        }
        let sections: [(&str, Vec<String>); 7] = [
            ("services", p.net.dump_plans()),
            ("flows", p.net.packet.dump_tables()),
            ("lsps", p.net.optical.dump_db()),
            ("vms", p.cloud.dump_inventory()),
            ("graphs", p.nfv.dump_embeddings(p)),
            ("bearers", p.mobile.dump_bearers()),
            ("splits", p.mobile.dump_splits()),
        ];
        for (name, lines) in sections {
            out.push(format!("[{name}]"));
            out.extend(lines);
        }
        let mut s = out.join("\n");
        s.push('\n');
        s
    }
}
