//! Distributed data-center cloud orchestrator: VM placement, creation,
//! migration, deletion and image registration across DCs.

use std::collections::BTreeMap;
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{Counter, DcId, ImageId, VmId};
use crate::model::{ModelError, Resources, Tier, Topology};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CloudError {
    #[error("no data center can host {0:?}")]
    NoCapacity(Resources),
    #[error("image {0} unavailable")]
    ImageUnavailable(ImageId),
    #[error("unknown vm {0}")]
    UnknownVm(VmId),
    #[error("unknown data center {0}")]
    UnknownDc(DcId),
    #[error("vm {0} is not active")]
    NotActive(VmId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CloudError {
    pub fn kind(&self) -> &'static str {
        match self {
            CloudError::NoCapacity(_) => "NoCapacity",
            CloudError::ImageUnavailable(_) => "ImageUnavailable",
            CloudError::UnknownVm(_) => "UnknownVm",
            CloudError::UnknownDc(_) => "UnknownDc",
            CloudError::NotActive(_) => "NotActive",
            CloudError::Model(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmSpec {
    pub cpu: u64,
    pub ram_mb: u64,
    pub disk_gb: u64,
    pub image_id: ImageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_tier: Option<Tier>,
}

impl VmSpec {
    pub fn demand(&self) -> Resources {
        Resources::new(self.cpu, self.ram_mb, self.disk_gb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VmState {
    Building,
    Active,
    Migrating,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nic {
    pub net_id: String,
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vm {
    pub id: VmId,
    pub dc_id: DcId,
    pub resources: Resources,
    pub image_id: ImageId,
    pub nics: Vec<Nic>,
    pub state: VmState,
}

impl Vm {
    /// Opaque address token of the VM's primary interface.
    pub fn address(&self) -> &str {
        self.nics.first().map_or("", |n| n.address.as_str())
    }

    fn attach(&mut self, dc: &DcId) {
        self.dc_id = dc.clone();
        self.nics = vec![Nic { net_id: format!("net-{dc}"), address: format!("{}@{dc}", self.id) }];
    }
}

impl fmt::Display for VmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VmState::Building => "building",
            VmState::Active => "active",
            VmState::Migrating => "migrating",
            VmState::Deleted => "deleted",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudOrchestrator {
    vms: BTreeMap<VmId, Vm>,
    ids: Counter,
    created: u64,
    deleted: u64,
}

impl CloudOrchestrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vm(&self, id: &VmId) -> Option<&Vm> {
        self.vms.get(id)
    }

    pub fn vms(&self) -> impl Iterator<Item = &Vm> {
        self.vms.values()
    }

    pub fn created(&self) -> u64 {
        self.created
    }

    pub fn deleted(&self) -> u64 {
        self.deleted
    }

    pub fn live_count(&self) -> usize {
        self.vms.values().filter(|v| matches!(v.state, VmState::Active | VmState::Migrating)).count()
    }

    fn can_use_image(topo: &Topology, dc: &DcId, image: &ImageId) -> bool {
        topo.settings.image_copy_allowed || topo.datacenter(dc).is_some_and(|d| d.images.contains(image))
    }

    /// Every DC able to host `spec` right now, best first: image constraint,
    /// then preferred tier, then most free cpu, then id.
    pub fn candidate_dcs(&self, topo: &Topology, spec: &VmSpec) -> Result<Vec<DcId>, CloudError> {
        let holders: Vec<_> = topo.datacenters().filter(|d| Self::can_use_image(topo, &d.id, &spec.image_id)).collect();
        if holders.is_empty() {
            return Err(CloudError::ImageUnavailable(spec.image_id.clone()));
        }
        let demand = spec.demand();
        let mut fitting: Vec<_> = holders.into_iter().filter(|d| demand.fits_within(&d.free())).collect();
        fitting.sort_by_key(|d| (spec.preferred_tier.is_some_and(|t| t != d.tier), Reverse(d.free().cpu), d.id.clone()));
        if fitting.is_empty() {
            return Err(CloudError::NoCapacity(demand));
        }
        Ok(fitting.into_iter().map(|d| d.id.clone()).collect())
    }

    pub fn place_vm(&self, topo: &Topology, spec: &VmSpec) -> Result<DcId, CloudError> {
        Ok(self.candidate_dcs(topo, spec)?.remove(0))
    }

    pub fn create_vm(&mut self, topo: &mut Topology, spec: &VmSpec) -> Result<Vm, CloudError> {
        let dc = self.place_vm(topo, spec)?;
        self.create_vm_at(topo, spec, &dc)
    }

    /// Creates the VM in a given DC, bypassing placement.
    pub fn create_vm_at(&mut self, topo: &mut Topology, spec: &VmSpec, dc: &DcId) -> Result<Vm, CloudError> {
        let Some(target) = topo.datacenter(dc) else {
            return Err(CloudError::UnknownDc(dc.clone()));
        };
        if !Self::can_use_image(topo, dc, &spec.image_id) {
            return Err(CloudError::ImageUnavailable(spec.image_id.clone()));
        }
        if !spec.demand().fits_within(&target.free()) {
            return Err(CloudError::NoCapacity(spec.demand()));
        }
        topo.debit_dc(dc, &spec.demand())?;
        topo.add_image(dc, &spec.image_id)?;
        let mut vm = Vm {
            id: VmId::new(self.ids.next("vm")),
            dc_id: dc.clone(),
            resources: spec.demand(),
            image_id: spec.image_id.clone(),
            nics: Vec::new(),
            state: VmState::Building,
        };
        vm.attach(dc);
        vm.state = VmState::Active;
        self.created += 1;
        self.vms.insert(vm.id.clone(), vm.clone());
        Ok(vm)
    }

    pub fn delete_vm(&mut self, topo: &mut Topology, id: &VmId) -> Result<(), CloudError> {
        let vm = match self.vms.get_mut(id) {
            Some(v) if v.state != VmState::Deleted => v,
            _ => return Err(CloudError::UnknownVm(id.clone())),
        };
        topo.credit_dc(&vm.dc_id, &vm.resources)?;
        vm.state = VmState::Deleted;
        self.deleted += 1;
        Ok(())
    }

    /// Debits the target, credits the source; on error the VM stays put.
    pub fn migrate_vm(&mut self, topo: &mut Topology, id: &VmId, target: &DcId) -> Result<Vm, CloudError> {
        let vm = match self.vms.get(id) {
            Some(v) if v.state == VmState::Active => v.clone(),
            Some(v) if v.state != VmState::Deleted => return Err(CloudError::NotActive(id.clone())),
            _ => return Err(CloudError::UnknownVm(id.clone())),
        };
        if topo.datacenter(target).is_none() {
            return Err(CloudError::UnknownDc(target.clone()));
        }
        if vm.dc_id == *target {
            return Ok(vm);
        }
        if !Self::can_use_image(topo, target, &vm.image_id) {
            return Err(CloudError::ImageUnavailable(vm.image_id.clone()));
        }
        let free = topo.datacenter(target).expect("checked").free();
        if !vm.resources.fits_within(&free) {
            return Err(CloudError::NoCapacity(vm.resources));
        }
        let entry = self.vms.get_mut(id).expect("checked");
        entry.state = VmState::Migrating;
        topo.debit_dc(target, &vm.resources)?;
        topo.add_image(target, &vm.image_id)?;
        topo.credit_dc(&vm.dc_id, &vm.resources)?;
        entry.attach(target);
        entry.state = VmState::Active;
        Ok(entry.clone())
    }

    pub fn register_image(&mut self, topo: &mut Topology, image: &ImageId, dcs: &[DcId]) -> Result<(), CloudError> {
        if let Some(dc) = dcs.iter().find(|d| topo.datacenter(d).is_none()) {
            return Err(CloudError::UnknownDc(dc.clone()));
        }
        for dc in dcs {
            topo.add_image(dc, image)?;
        }
        Ok(())
    }

    /// `dc | vm | cpu/ram/disk | state`
    pub fn dump_inventory(&self) -> Vec<String> {
        let mut v: Vec<&Vm> = self.vms.values().filter(|v| v.state != VmState::Deleted).collect();
        v.sort_by(|a, b| (&a.dc_id, &a.id).cmp(&(&b.dc_id, &b.id)));
        v.into_iter()
            .map(|vm| {
                let r = vm.resources;
                format!("{} | {} | {}/{}/{} | {}", vm.dc_id, vm.id, r.cpu, r.ram_mb, r.disk_gb, vm.state)
            })
            .collect()
    }

    /// Per-DC usage equals the sum of resident VMs; created minus deleted
    /// equals live VMs.
    pub fn check_invariants(&self, topo: &Topology) -> Result<(), String> {
        let mut sums: BTreeMap<&DcId, Resources> = BTreeMap::new();
        for vm in self.vms.values().filter(|v| matches!(v.state, VmState::Active | VmState::Migrating)) {
            let s = sums.entry(&vm.dc_id).or_default();
            *s = s.saturating_add(&vm.resources);
        }
        for dc in topo.datacenters() {
            let s = sums.get(&dc.id).copied().unwrap_or_default();
            if s != dc.used {
                return Err(format!("dc {} used {:?} but VMs sum to {:?}", dc.id, dc.used, s));
            }
        }
        if self.created - self.deleted != self.live_count() as u64 {
            return Err("vm conservation violated".into());
        }
        Ok(())
    }
}
