//! Instance generators and brute-force reference implementations shared by
//! the integration tests. Nothing here calls the crate's routing, RSA or
//! selection code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use orch5g::fixtures;
use orch5g::ids::{LinkId, LspId, NodeId};
use orch5g::mobile::{FronthaulState, SplitBoundary, SplitOption};
use orch5g::nfv::{ForwardingGraph, GraphEdge, GraphNode};
use orch5g::model::{DomainDoc, LinkDoc, MediumDoc, NodeDoc, NodeKind, ScenarioDoc, SlotRange, Tech, Tier, Topology};
use orch5g::netorch::E2ERequest;
use orch5g::optical::{LspState, OpticalPce, Restoration};
use orch5g::rational::{int, Rational};
use orch5g::Platform;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn optical_pair(a: &str, b: &str, latency: Rational, slots: u32) -> [LinkDoc; 2] {
    let link = |s: &str, d: &str| LinkDoc {
        id: format!("{s}-{d}").as_str().into(),
        src: s.into(),
        dst: d.into(),
        medium: MediumDoc::Optical { slot_count: Some(slots), latency_ms: latency },
    };
    [link(a, b), link(b, a)]
}

/// A single optical domain of `n` ROADMs: a ring plus random chords, with
/// random latencies.
pub fn optical_doc(rng: &mut ChaCha8Rng, n: usize, slots: u32) -> ScenarioDoc {
    let names: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let mut pairs: BTreeSet<(usize, usize)> = (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.3) {
                pairs.insert((a, b));
            }
        }
    }
    let mut links = Vec::new();
    for (a, b) in pairs {
        if a == b {
            continue;
        }
        let lat = int(rng.gen_range(1..=3));
        links.extend(optical_pair(&names[a], &names[b], lat, slots));
    }
    ScenarioDoc {
        name: "optical".into(),
        domains: vec![DomainDoc {
            id: "core".into(),
            tech: Tech::Optical,
            nodes: names.iter().map(|n| NodeDoc { id: n.as_str().into(), kind: NodeKind::Roadm, dc: None }).collect(),
        }],
        links,
        ..Default::default()
    }
}

/// Claims random single slots with a background owner.
pub fn scatter_spectrum(rng: &mut ChaCha8Rng, topo: &mut Topology, density: f64) {
    let ids: Vec<LinkId> = topo.links().filter(|l| l.is_optical()).map(|l| l.id.clone()).collect();
    let bg = LspId::from("bg");
    for id in ids {
        let slots = topo.link(&id).unwrap().grid().unwrap().slot_count();
        for s in 0..slots {
            if rng.gen_bool(density) {
                topo.claim_slots(&id, SlotRange::new(s, 1), &bg).unwrap();
            }
        }
    }
}

/// Every loop-free optical route from `src` to `dst` over up links not in
/// `avoid`, ordered by (latency, link ids).
pub fn all_optical_routes(topo: &Topology, src: &NodeId, dst: &NodeId, avoid: &BTreeSet<LinkId>) -> Vec<(Rational, Vec<LinkId>)> {
    #[allow(clippy::too_many_arguments)]
    fn go(
        topo: &Topology,
        at: &NodeId,
        dst: &NodeId,
        avoid: &BTreeSet<LinkId>,
        seen: &mut Vec<NodeId>,
        path: &mut Vec<LinkId>,
        cost: Rational,
        out: &mut Vec<(Rational, Vec<LinkId>)>,
    ) {
        if at == dst {
            out.push((cost, path.clone()));
            return;
        }
        for l in topo.links() {
            if l.src != *at || !l.is_optical() || !l.up || avoid.contains(&l.id) || seen.contains(&l.dst) {
                continue;
            }
            seen.push(l.dst.clone());
            path.push(l.id.clone());
            go(topo, &l.dst, dst, avoid, seen, path, cost + l.latency_ms(), out);
            path.pop();
            seen.pop();
        }
    }
    let mut out = Vec::new();
    if src != dst {
        go(topo, src, dst, avoid, &mut vec![src.clone()], &mut Vec::new(), Rational::zero(), &mut out);
    }
    out.sort();
    out
}

/// Lowest slot index where `width` consecutive slots are free on every link.
pub fn first_fit_oracle(topo: &Topology, route: &[LinkId], width: u32) -> Option<u32> {
    let masks: Vec<Vec<bool>> = route.iter().map(|l| topo.link(l).unwrap().grid().unwrap().free_mask()).collect();
    let n = masks.iter().map(|m| m.len()).min()? as u32;
    (0..n).find(|&s| s + width <= n && (s..s + width).all(|i| masks.iter().all(|m| m[i as usize])))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RsaOracle {
    Found { route: Vec<LinkId>, slot_start: u32, latency: Rational },
    NoRoute,
    NoSpectrum,
}

/// Exhaustive route ranking truncated to `k`, then first fit per route.
pub fn rsa_oracle(topo: &Topology, src: &NodeId, dst: &NodeId, width: u32, avoid: &BTreeSet<LinkId>, k: usize) -> RsaOracle {
    let routes = all_optical_routes(topo, src, dst, avoid);
    if routes.is_empty() {
        return RsaOracle::NoRoute;
    }
    for (latency, route) in routes.into_iter().take(k) {
        if let Some(slot_start) = first_fit_oracle(topo, &route, width) {
            return RsaOracle::Found { route, slot_start, latency };
        }
    }
    RsaOracle::NoSpectrum
}

/// Slot width an orchestrator-created tunnel needs for `bw` Mbps.
pub fn width_for(topo: &Topology, bw: Rational) -> u32 {
    let per_slot_mbps = topo.settings.gbps_per_slot * int(1000);
    let mut w = 0u32;
    while int(w as i64) * per_slot_mbps < bw {
        w += 1;
    }
    w.max(topo.settings.min_slot_width)
}

/// Flattened-graph vertex: packet-capable nodes as themselves, ROADMs split
/// into an entry and an exit side so optical hops cannot be chained.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum V {
    Node(NodeId),
    In(NodeId),
    Out(NodeId),
}

/// Minimum end-to-end latency for `bw` Mbps from `src` to `dst` by
/// exhaustive simple-path enumeration over the flattened multi-layer graph.
/// Optical hops between two ROADMs cost the latency of the best groomable
/// tunnel if one exists, otherwise the latency of the RSA reference result.
pub fn stitch_oracle(p: &Platform, src: &NodeId, dst: &NodeId, bw: Rational) -> Option<Rational> {
    if src == dst {
        return Some(Rational::zero());
    }
    let topo = &p.topo;
    let roadm = |n: &NodeId| topo.node_tech(n) == Some(Tech::Optical);
    let mut arcs: Vec<(V, V, Rational)> = Vec::new();
    for l in topo.links().filter(|l| l.up) {
        let Some(m) = l.packet() else { continue };
        if m.capacity_mbps - m.reserved_mbps < bw {
            continue;
        }
        let from = if roadm(&l.src) { V::Out(l.src.clone()) } else { V::Node(l.src.clone()) };
        let to = if roadm(&l.dst) { V::In(l.dst.clone()) } else { V::Node(l.dst.clone()) };
        arcs.push((from, to, l.latency_ms()));
    }
    let roadms: Vec<NodeId> = topo.nodes().filter(|n| roadm(&n.id)).map(|n| n.id.clone()).collect();
    let down: BTreeSet<LinkId> = topo.links().filter(|l| !l.up).map(|l| l.id.clone()).collect();
    let width = width_for(topo, bw);
    for u in &roadms {
        for v in &roadms {
            if u == v {
                continue;
            }
            let groom = p
                .net
                .tunnels()
                .filter_map(|(id, t)| {
                    let lsp = p.net.optical.lsp(id)?;
                    let free = lsp.capacity_gbps * int(1000) - t.load_mbps;
                    (lsp.state == LspState::Active && lsp.src == *u && lsp.dst == *v && free >= bw).then_some(lsp.latency_ms)
                })
                .min();
            let cost = match groom {
                Some(c) => Some(c),
                None => match rsa_oracle(topo, u, v, width, &down, topo.settings.k_paths) {
                    RsaOracle::Found { latency, .. } => Some(latency),
                    _ => None,
                },
            };
            if let Some(c) = cost {
                arcs.push((V::In(u.clone()), V::Out(v.clone()), c));
            }
        }
    }
    let mut best: Option<Rational> = None;
    let start = V::Node(src.clone());
    let goal = V::Node(dst.clone());
    let mut seen = vec![start.clone()];
    fn dfs(arcs: &[(V, V, Rational)], at: &V, goal: &V, cost: Rational, seen: &mut Vec<V>, best: &mut Option<Rational>) {
        if at == goal {
            if best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
            return;
        }
        for (a, b, c) in arcs {
            if a != at || seen.contains(b) {
                continue;
            }
            seen.push(b.clone());
            dfs(arcs, b, goal, cost + *c, seen, best);
            seen.pop();
        }
    }
    dfs(&arcs, &start, &goal, Rational::zero(), &mut seen, &mut best);
    best
}

/// Random endpoint pair; most pairs straddle the optical core so that
/// tunnels get created and reused.
pub fn pick_endpoints(rng: &mut ChaCha8Rng, topo: &Topology) -> (NodeId, NodeId) {
    let nodes = packet_nodes(topo);
    let src = nodes.choose(rng).unwrap().clone();
    let dst = if rng.gen_bool(0.6) { NodeId::from("dcgw") } else { nodes.choose(rng).unwrap().clone() };
    if rng.gen_bool(0.5) {
        (src, dst)
    } else {
        (dst, src)
    }
}

/// Packet-capable nodes of a topology.
pub fn packet_nodes(topo: &Topology) -> Vec<NodeId> {
    topo.nodes().filter(|n| topo.node_tech(&n.id) != Some(Tech::Optical)).map(|n| n.id.clone()).collect()
}

/// A reference-topology variant with random latencies, optional chords, background
/// load, scattered spectrum, failed links and a few pre-provisioned
/// services (which may leave tunnels behind for grooming).
pub fn ref_variant(rng: &mut ChaCha8Rng) -> Platform {
    let mut doc = fixtures::ref_topo_doc();
    let lats = [Rational::new(1, 2), int(1), int(2), int(3)];
    let extra: [(&str, &str, bool); 4] = [("p2", "p4", false), ("o2", "o4", true), ("p4", "o3", false), ("rgw", "p3", false)];
    for (a, b, optical) in extra {
        if rng.gen_bool(0.5) {
            let lat = *lats.choose(rng).unwrap();
            if optical {
                doc.links.extend(optical_pair(a, b, lat, 16));
            } else {
                for (s, d) in [(a, b), (b, a)] {
                    doc.links.push(LinkDoc {
                        id: format!("{s}-{d}").as_str().into(),
                        src: s.into(),
                        dst: d.into(),
                        medium: MediumDoc::Packet { capacity_mbps: int(1000), latency_ms: lat },
                    });
                }
            }
        }
    }
    let mut by_pair: BTreeMap<(String, String), Rational> = BTreeMap::new();
    for l in &mut doc.links {
        let (a, b) = (l.src.to_string(), l.dst.to_string());
        let key = if a < b { (a, b) } else { (b, a) };
        let lat = *by_pair.entry(key).or_insert_with(|| *lats.choose(rng).unwrap());
        match &mut l.medium {
            MediumDoc::Packet { latency_ms, .. } | MediumDoc::Optical { latency_ms, .. } => *latency_ms = lat,
        }
    }
    let mut p = Platform::from_doc(&doc).unwrap();
    let packet_links: Vec<LinkId> = p.topo.links().filter(|l| l.is_packet()).map(|l| l.id.clone()).collect();
    for l in &packet_links {
        if rng.gen_bool(0.3) {
            let amount = int(rng.gen_range(1..=9) * 100);
            p.topo.reserve_packet_bw(l, amount, "bg").unwrap();
        }
    }
    scatter_spectrum(rng, &mut p.topo, 0.15);
    for _ in 0..rng.gen_range(0..=4) {
        let (src, dst) = pick_endpoints(rng, &p.topo);
        let bw = int(*[50, 100, 200].choose(rng).unwrap());
        let _ = p.provision_e2e(E2ERequest::new("op1", src.as_str(), dst.as_str(), bw));
    }
    let all_links: Vec<LinkId> = p.topo.links().map(|l| l.id.clone()).collect();
    for _ in 0..rng.gen_range(0..=2) {
        let l = all_links.choose(rng).unwrap();
        let _ = p.link_down(l);
    }
    p
}

/// Number of radio layers processed centrally for a boundary.
pub fn central_layer_count(b: SplitBoundary) -> i64 {
    match b {
        SplitBoundary::BelowPhy => 5,
        SplitBoundary::PhyMac => 4,
        SplitBoundary::MacRlc => 3,
        SplitBoundary::RlcPdcp => 2,
        SplitBoundary::PdcpRrc => 1,
        SplitBoundary::AboveRrc => 0,
    }
}

/// Exhaustive split selection: scan every option, keep the feasible one
/// with the smallest (energy, -centralization, id); fall back to the
/// all-local option.
pub fn split_oracle(options: &[SplitOption], state: &FronthaulState) -> Option<String> {
    let mut best: Option<(Rational, i64, &str)> = None;
    for o in options {
        let bw_ok = o.fronthaul_bw_mbps <= state.available_bw_mbps;
        let lat_ok = match o.fronthaul_latency_budget_ms {
            None => true,
            Some(b) => b >= state.path_latency_ms,
        };
        if !(bw_ok && lat_ok) {
            continue;
        }
        let key = (o.energy_cost, -central_layer_count(o.boundary), o.id.as_str());
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    match best {
        Some((_, _, id)) => Some(id.to_string()),
        None => options.iter().find(|o| o.boundary == SplitBoundary::AboveRrc).map(|o| o.id.clone()),
    }
}

/// Every nonempty subset of boundaries, each with `variants` random value
/// assignments. Energy values are drawn from a small range so ties occur.
pub fn split_tables(rng: &mut ChaCha8Rng, variants: usize) -> Vec<Vec<SplitOption>> {
    const ALL: [SplitBoundary; 6] = [
        SplitBoundary::BelowPhy,
        SplitBoundary::PhyMac,
        SplitBoundary::MacRlc,
        SplitBoundary::RlcPdcp,
        SplitBoundary::PdcpRrc,
        SplitBoundary::AboveRrc,
    ];
    let mut out = Vec::new();
    for mask in 1u32..64 {
        for _ in 0..variants {
            let mut table = Vec::new();
            for (i, b) in ALL.iter().enumerate() {
                if mask & (1 << i) == 0 {
                    continue;
                }
                let local = *b == SplitBoundary::AboveRrc;
                let bw = if local { Rational::zero() } else { int(rng.gen_range(0..=40) * 50) };
                let budget = if local || rng.gen_bool(0.15) { None } else { Some(Rational::new(rng.gen_range(1..=40), 4)) };
                table.push(SplitOption {
                    id: format!("opt-{}", rng.gen_range(0..100)),
                    boundary: *b,
                    fronthaul_bw_mbps: bw,
                    fronthaul_latency_budget_ms: budget,
                    energy_cost: int(rng.gen_range(0..=4)),
                });
            }
            table.shuffle(rng);
            out.push(table);
        }
    }
    out
}

/// 132 fronthaul states on a regular bandwidth x latency grid.
pub fn fronthaul_grid() -> Vec<FronthaulState> {
    let mut out = Vec::new();
    for bw in 0..12 {
        for lat in 0..11 {
            out.push(FronthaulState::new(int(bw * 200), Rational::new(lat * 5, 4)));
        }
    }
    out
}

/// Random optical instance for RSA comparison: topology, claimed spectrum,
/// failed links, an avoid set and a request.
pub struct RsaCase {
    pub topo: Topology,
    pub src: NodeId,
    pub dst: NodeId,
    pub width: u32,
    pub avoid: BTreeSet<LinkId>,
}

pub fn rsa_case(seed: u64) -> RsaCase {
    let mut r = rng(seed);
    let n = r.gen_range(2..=6);
    let slots = r.gen_range(4..=16);
    let mut doc = optical_doc(&mut r, n, slots);
    doc.settings = Some(orch5g::model::Settings { k_paths: r.gen_range(1..=4), ..Default::default() });
    let mut topo = orch5g::model::load_scenario(&doc).unwrap();
    let density = *[0.0, 0.2, 0.4, 0.6].choose(&mut r).unwrap();
    scatter_spectrum(&mut r, &mut topo, density);
    let ids: Vec<LinkId> = topo.links().map(|l| l.id.clone()).collect();
    for l in &ids {
        if r.gen_bool(0.1) {
            topo.set_link_up(l, false).unwrap();
        }
    }
    let avoid: BTreeSet<LinkId> = ids.iter().filter(|_| r.gen_bool(0.1)).cloned().collect();
    let nodes: Vec<NodeId> = topo.nodes().map(|n| n.id.clone()).collect();
    let src = nodes.choose(&mut r).unwrap().clone();
    let dst = loop {
        let d = nodes.choose(&mut r).unwrap().clone();
        if d != src {
            break d;
        }
    };
    RsaCase { topo, src, dst, width: r.gen_range(1..=6), avoid }
}

/// Compares the crate's RSA with the reference on one case.
pub fn check_rsa(seed: u64) -> Result<(), String> {
    let c = rsa_case(seed);
    let pce = OpticalPce::new();
    let got = pce.rsa_compute(&c.topo, &c.src, &c.dst, c.width, &c.avoid);
    let mut avoid = c.avoid.clone();
    avoid.extend(c.topo.down_links());
    let want = rsa_oracle(&c.topo, &c.src, &c.dst, c.width, &avoid, c.topo.settings.k_paths);
    let same = match (&want, &got) {
        (RsaOracle::Found { route, slot_start, latency }, Ok(r)) => {
            r.route == *route && r.slot_start == *slot_start && r.latency_ms == *latency
        }
        (RsaOracle::NoRoute, Err(e)) => e.kind() == "NoRoute",
        (RsaOracle::NoSpectrum, Err(e)) => e.kind() == "NoSpectrum",
        _ => false,
    };
    if same {
        Ok(())
    } else {
        Err(format!("seed {seed}: reference {want:?}, got {got:?}"))
    }
}

/// Drives a random sequence of signal, teardown, failure, restoration and
/// repair operations against the optical controller while keeping an
/// independent record of who should own each slot. After every step the
/// grids must equal that record and every active LSP must hold one
/// contiguous block, identical on each hop, on up links only.
pub fn run_spectrum_sequence(seed: u64, steps: usize) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(3..=6);
    let slots = r.gen_range(6..=16);
    let doc = optical_doc(&mut r, n, slots);
    let mut topo = orch5g::model::load_scenario(&doc).unwrap();
    let mut pce = OpticalPce::new();
    // (link, slot) -> owner
    let mut shadow: BTreeMap<(LinkId, u32), LspId> = BTreeMap::new();
    // Live LSPs: route and block, plus whether currently failed.
    let mut live: BTreeMap<LspId, (Vec<LinkId>, u32, u32, bool)> = BTreeMap::new();
    let nodes: Vec<NodeId> = topo.nodes().map(|n| n.id.clone()).collect();
    let links: Vec<LinkId> = topo.links().map(|l| l.id.clone()).collect();

    fn release(topo: &Topology, shadow: &mut BTreeMap<(LinkId, u32), LspId>, route: &[LinkId], start: u32, width: u32) {
        for l in route {
            if topo.link(l).unwrap().up {
                for s in start..start + width {
                    shadow.remove(&(l.clone(), s));
                }
            }
        }
    }

    for step in 0..steps {
        let before = topo.clone();
        match r.gen_range(0..10) {
            0..=3 => {
                let src = nodes.choose(&mut r).unwrap();
                let dst = nodes.choose(&mut r).unwrap();
                let width = r.gen_range(1..=4);
                if let Ok(res) = pce.rsa_compute(&topo, src, dst, width, &BTreeSet::new()) {
                    let lsp = pce
                        .signal_lsp(&mut topo, &res.route, res.slot_start, width, "t")
                        .map_err(|e| format!("seed {seed} step {step}: computed block rejected: {e}"))?;
                    for l in &lsp.route {
                        for s in lsp.slot_start..lsp.slot_start + width {
                            shadow.insert((l.clone(), s), lsp.id.clone());
                        }
                    }
                    live.insert(lsp.id.clone(), (lsp.route.clone(), lsp.slot_start, width, false));
                }
            }
            4 => {
                // Arbitrary explicit block; may collide.
                let l = links.choose(&mut r).unwrap().clone();
                let start = r.gen_range(0..slots);
                let width = r.gen_range(1..=3);
                match pce.signal_lsp(&mut topo, std::slice::from_ref(&l), start, width, "t") {
                    Ok(lsp) => {
                        for s in start..start + width {
                            if shadow.insert((l.clone(), s), lsp.id.clone()).is_some() {
                                return Err(format!("seed {seed} step {step}: double allocation on {l} slot {s}"));
                            }
                        }
                        live.insert(lsp.id.clone(), (vec![l], start, width, false));
                    }
                    Err(_) => {
                        if topo.snapshot() != before.snapshot() {
                            return Err(format!("seed {seed} step {step}: rejected signal changed the grids"));
                        }
                    }
                }
            }
            5 | 6 => {
                if let Some(id) = live.keys().cloned().collect::<Vec<_>>().choose(&mut r) {
                    pce.teardown_lsp(&mut topo, id).map_err(|e| format!("seed {seed} step {step}: {e}"))?;
                    let (route, start, width, _) = live.remove(id).unwrap();
                    release(&topo, &mut shadow, &route, start, width);
                }
            }
            7 | 8 => {
                let l = links.choose(&mut r).unwrap().clone();
                if topo.link(&l).unwrap().up {
                    let expected: BTreeSet<LspId> =
                        live.iter().filter(|(_, v)| !v.3 && v.0.contains(&l)).map(|(k, _)| k.clone()).collect();
                    let failed = pce.mark_link_down(&mut topo, &l).map_err(|e| e.to_string())?;
                    for id in &failed {
                        live.get_mut(id).unwrap().3 = true;
                    }
                    if expected != failed.iter().cloned().collect() {
                        return Err(format!("seed {seed} step {step}: failed set {failed:?} != {expected:?}"));
                    }
                    for (old, outcome) in pce.restore_lsps(&mut topo, &l) {
                        if let Restoration::Restored(new) = outcome {
                            let lsp = pce.lsp(&new).unwrap().clone();
                            if lsp.route.iter().any(|x| !topo.link(x).unwrap().up) {
                                return Err(format!("seed {seed} step {step}: restored {new} over a down link"));
                            }
                            let (route, start, width, _) = live.remove(&old).unwrap();
                            if lsp.slot_width != width {
                                return Err(format!("seed {seed} step {step}: restoration changed width"));
                            }
                            for x in &lsp.route {
                                for s in lsp.slot_start..lsp.slot_start + width {
                                    shadow.insert((x.clone(), s), new.clone());
                                }
                            }
                            release(&topo, &mut shadow, &route, start, width);
                            live.insert(new, (lsp.route.clone(), lsp.slot_start, width, false));
                        }
                    }
                } else {
                    pce.mark_link_up(&mut topo, &l).map_err(|e| e.to_string())?;
                    let keep: BTreeSet<LspId> = live.keys().cloned().collect();
                    shadow.retain(|(link, _), owner| *link != l || keep.contains(owner));
                }
            }
            _ => {
                // Tear down a failed LSP explicitly.
                let failed: Vec<LspId> = live.iter().filter(|(_, v)| v.3).map(|(k, _)| k.clone()).collect();
                if let Some(id) = failed.choose(&mut r) {
                    pce.teardown_lsp(&mut topo, id).map_err(|e| e.to_string())?;
                    let (route, start, width, _) = live.remove(id).unwrap();
                    release(&topo, &mut shadow, &route, start, width);
                }
            }
        }

        let mut actual: BTreeMap<(LinkId, u32), LspId> = BTreeMap::new();
        for l in topo.links() {
            let Some(g) = l.grid() else { continue };
            for s in 0..g.slot_count() {
                if let Some(o) = g.owner_of(s) {
                    actual.insert((l.id.clone(), s), o.clone());
                }
            }
            if g.occupied_count() as usize != g.free_mask().iter().filter(|f| !**f).count() {
                return Err(format!("seed {seed} step {step}: occupancy mask disagrees on {}", l.id));
            }
        }
        if actual != shadow {
            return Err(format!("seed {seed} step {step}: grid ownership diverged from reference"));
        }
        for (id, (route, start, width, failed)) in &live {
            let lsp = pce.lsp(id).ok_or(format!("seed {seed}: {id} missing"))?;
            let active = lsp.state == LspState::Active;
            if active == *failed {
                return Err(format!("seed {seed} step {step}: {id} state {}", lsp.state));
            }
            if active {
                for l in route {
                    if !topo.link(l).unwrap().up {
                        return Err(format!("seed {seed} step {step}: active {id} crosses a down link"));
                    }
                    for s in *start..*start + *width {
                        if shadow.get(&(l.clone(), s)) != Some(id) {
                            return Err(format!("seed {seed} step {step}: {id} lost slot {s} on {l}"));
                        }
                    }
                }
            }
        }
        pce.check_invariants(&topo).map_err(|e| format!("seed {seed} step {step}: {e}"))?;
    }
    Ok(())
}

/// Three-VNF chain from an eNB through a RAN stack, SGW and PGW.
pub fn chain3() -> ForwardingGraph {
    ForwardingGraph {
        id: "chain".into(),
        tenant_id: "op1".into(),
        nodes: vec![
            GraphNode::endpoint("enb", "enb1"),
            GraphNode::vnf("cu", "vbbu"),
            GraphNode::vnf("sgw", "sgw"),
            GraphNode::vnf("pgw", "pgw"),
        ],
        edges: vec![
            GraphEdge::new("fh", "enb", "cu", int(100)),
            GraphEdge::new("s1", "cu", "sgw", int(100)),
            GraphEdge::new("s5", "sgw", "pgw", int(100)),
        ],
        placement_hints: BTreeMap::from([("cu".to_string(), Tier::Edge)]),
    }
}

pub fn ref_platform() -> Platform {
    Platform::new(fixtures::ref_topo())
}

pub fn core_placement() -> BTreeMap<String, Tier> {
    ["mme", "sgw", "pgw"].iter().map(|r| (r.to_string(), Tier::Core)).collect()
}

/// Canonical serialization of every layer, used as a whole-state hash.
pub fn state_hash(p: &Platform) -> String {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(p).unwrap();
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
