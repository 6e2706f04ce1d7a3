//! The whole orchestration stack behind one single-writer handle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cloud::CloudOrchestrator;
use crate::faults::FaultInjector;
use crate::ids::{BearerId, GraphId, LinkId, ServiceId};
use crate::mobile::{BearerOutcome, BearerState, MobileState};
use crate::model::{load_scenario, ModelError, ResourceSnapshot, ScenarioDoc, Topology};
use crate::netorch::{E2ERequest, E2EService, NetError, NetworkOrchestrator, RecoveryOutcome};
use crate::nfv::{EmbeddingState, NfvOrchestrator};

/// Outcome of a link failure across every layer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub services: BTreeMap<ServiceId, RecoveryOutcome>,
    pub bearers: BTreeMap<BearerId, BearerOutcome>,
    pub degraded_graphs: Vec<GraphId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Platform {
    pub topo: Topology,
    pub net: NetworkOrchestrator,
    pub cloud: CloudOrchestrator,
    pub nfv: NfvOrchestrator,
    pub mobile: MobileState,
    #[serde(skip)]
    pub faults: FaultInjector,
}

/// State equality; the fault injector is test plumbing and is ignored.
impl PartialEq for Platform {
    fn eq(&self, other: &Self) -> bool {
        self.topo == other.topo
            && self.net == other.net
            && self.cloud == other.cloud
            && self.nfv == other.nfv
            && self.mobile == other.mobile
    }
}

impl Eq for Platform {}

impl Platform {
    pub fn new(topo: Topology) -> Self {
        Self {
            topo,
            net: NetworkOrchestrator::new(),
            cloud: CloudOrchestrator::new(),
            nfv: NfvOrchestrator::new(),
            mobile: MobileState::default(),
            faults: FaultInjector::default(),
        }
    }

    pub fn from_doc(doc: &ScenarioDoc) -> Result<Self, ModelError> {
        load_scenario(doc).map(Self::new)
    }

    pub fn snapshot(&self) -> ResourceSnapshot {
        self.topo.snapshot()
    }

    /// Runs `body` as one transaction: on error every layer is restored to
    /// its state before the call. The fault injector is not rolled back.
    pub(crate) fn transaction<T, E>(&mut self, body: impl FnOnce(&mut Self) -> Result<T, E>) -> Result<T, E> {
        let saved = self.clone();
        let out = body(self);
        if out.is_err() {
            let faults = std::mem::take(&mut self.faults);
            *self = saved;
            self.faults = faults;
        }
        out
    }

    pub fn provision_e2e(&mut self, req: E2ERequest) -> Result<E2EService, NetError> {
        self.net.provision_e2e(&mut self.topo, req)
    }

    pub fn teardown_e2e(&mut self, id: &ServiceId) -> Result<(), NetError> {
        self.net.teardown_e2e(&mut self.topo, id)
    }

    /// Fails a link, recovers services, and propagates the outcome to graph
    /// embeddings and bearers.
    pub fn link_down(&mut self, link: &LinkId) -> Result<FailureReport, NetError> {
        let services = self.net.link_down(&mut self.topo, link)?;
        let mut report = FailureReport { services, ..Default::default() };
        for (sid, outcome) in &report.services {
            let lost = *outcome == RecoveryOutcome::Unrecoverable;
            if lost {
                for e in self.nfv.embeddings_mut() {
                    if e.state == EmbeddingState::Deployed && e.edges.values().any(|s| s == sid) {
                        e.state = EmbeddingState::Degraded;
                        report.degraded_graphs.push(e.graph.id.clone());
                    }
                }
            }
            for b in self.mobile.bearers_mut() {
                if b.state == BearerState::Active && b.transport_service == *sid {
                    if lost {
                        b.state = BearerState::Lost;
                        report.bearers.insert(b.id.clone(), BearerOutcome::Lost);
                    } else {
                        report.bearers.insert(b.id.clone(), BearerOutcome::Recovered);
                    }
                }
            }
        }
        report.degraded_graphs.sort();
        report.degraded_graphs.dedup();
        Ok(report)
    }

    pub fn link_up(&mut self, link: &LinkId) -> Result<(), NetError> {
        self.net.link_up(&mut self.topo, link)
    }

    /// Every cross-layer invariant.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.net.check_invariants(&self.topo)?;
        self.cloud.check_invariants(&self.topo)?;
        self.nfv.check_invariants(self)?;
        self.mobile.check_invariants(self)?;
        Ok(())
    }
}
