//! Shipped scenario documents.

use crate::model::{load_scenario, ScenarioDoc, Topology};

/// Reference topology: RAN, metro packet ring and optical core ring with an
/// edge and a core data center.
pub const REF_TOPO_JSON: &str = include_str!("../scenarios/ref_topo.json");

/// Reference topology plus a full mobile workflow event list.
pub const DEMO_JSON: &str = include_str!("../scenarios/demo.json");

pub fn ref_topo_doc() -> ScenarioDoc {
    ScenarioDoc::from_json(REF_TOPO_JSON).expect("shipped fixture parses")
}

pub fn ref_topo() -> Topology {
    load_scenario(&ref_topo_doc()).expect("shipped fixture validates")
}

pub fn demo_doc() -> ScenarioDoc {
    ScenarioDoc::from_json(DEMO_JSON).expect("shipped demo parses")
}
