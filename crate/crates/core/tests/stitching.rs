mod common;

use common::*;
use orch5g::netorch::{E2ERequest, Realization};
use orch5g::rational::int;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn provisioned_latency_matches_exhaustive_search() {
    let mut checked = 0;
    let mut feasible = 0;
    let mut groomed = 0;
    for seed in 0..300u64 {
        let mut r = rng(seed);
        let mut p = ref_variant(&mut r);
        let (src, dst) = pick_endpoints(&mut r, &p.topo);
        let bw = int(*[50, 100, 300, 600, 900].choose(&mut r).unwrap());
        let expected = stitch_oracle(&p, &src, &dst, bw);
        let got = p.provision_e2e(E2ERequest::new("op1", src.as_str(), dst.as_str(), bw));
        match (&expected, &got) {
            (Some(lat), Ok(svc)) => {
                assert_eq!(svc.plan.total_latency_ms, *lat, "seed {seed} {src}->{dst} {bw}");
                groomed += svc.plan.segments.iter().filter(|s| matches!(s.realized_by, Realization::GroomedOnto(_))).count();
                feasible += 1;
            }
            (None, Err(e)) => assert_eq!(e.kind(), "NoDomainSequence", "seed {seed}: {e}"),
            _ => panic!("seed {seed} {src}->{dst} bw {bw}: oracle {expected:?}, got {got:?}"),
        }
        p.topo.check_invariants().unwrap();
        checked += 1;
    }
    assert_eq!(checked, 300);
    assert!(feasible > 50, "only {feasible} feasible instances");
    assert!(groomed > 20, "only {groomed} groomed segments");
}

#[test]
fn latency_bound_is_respected() {
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let mut p = ref_variant(&mut r);
        let best = stitch_oracle(&p, &"enb1".into(), &"dcgw".into(), int(100));
        let bound = int(r.gen_range(3..=12));
        let mut req = E2ERequest::new("op1", "enb1", "dcgw", int(100));
        req.max_latency_ms = Some(bound);
        let got = p.provision_e2e(req);
        match best {
            Some(l) if l <= bound => assert_eq!(got.unwrap().plan.total_latency_ms, l),
            _ => assert!(got.is_err(), "seed {seed}"),
        }
    }
}
