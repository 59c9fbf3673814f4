//! Scheduling plans: per-service placement cloud and provisioned VM
//! instances, plus the per-event deltas schedulers emit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CloudIdx, InstanceId, OfferRef, VmInstance};
use crate::problem::Problem;
use crate::scalar::Scalar;
use crate::workflow::ServiceIdx;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("service {0} is unmovable but placed off its pinned cloud")]
    PinViolated(ServiceIdx),
    #[error("service {0}: instance {1:?} lives outside the placement cloud")]
    WrongCloud(ServiceIdx, InstanceId),
    #[error("service {0}: instance {1:?} has fewer MIPS than one stream unit needs")]
    OfferTooSmall(ServiceIdx, InstanceId),
    #[error("service count mismatch: plan has {0}, workflow has {1}")]
    Shape(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulingPlan {
    placements: Vec<CloudIdx>,
    provisioned: Vec<Vec<VmInstance>>,
    next_id: u64,
}

impl SchedulingPlan {
    pub fn new(placements: Vec<CloudIdx>) -> Self {
        let n = placements.len();
        Self {
            placements,
            provisioned: vec![Vec::new(); n],
            next_id: 0,
        }
    }

    pub fn service_count(&self) -> usize {
        self.placements.len()
    }

    pub fn placement(&self, s: ServiceIdx) -> CloudIdx {
        self.placements[s.0]
    }

    pub fn placements(&self) -> &[CloudIdx] {
        &self.placements
    }

    pub fn set_placement(&mut self, s: ServiceIdx, c: CloudIdx) {
        self.placements[s.0] = c;
    }

    /// `pro(S_n)`: every instance held by the service, booting or ready.
    pub fn instances(&self, s: ServiceIdx) -> &[VmInstance] {
        &self.provisioned[s.0]
    }

    pub fn all_instances(&self) -> impl Iterator<Item = (ServiceIdx, &VmInstance)> {
        self.provisioned
            .iter()
            .enumerate()
            .flat_map(|(s, v)| v.iter().map(move |i| (ServiceIdx(s), i)))
    }

    pub fn instance_count(&self) -> usize {
        self.provisioned.iter().map(Vec::len).sum()
    }

    /// Adds an instance of `offer` provisioned at `now`, usable after `boot`
    /// seconds.
    pub fn provision(&mut self, s: ServiceIdx, offer: OfferRef, now: u64, boot: u64) -> InstanceId {
        let id = InstanceId(self.next_id);
        self.next_id += 1;
        self.provisioned[s.0].push(VmInstance {
            id,
            offer,
            provisioned_at: now,
            ready_at: now + boot,
        });
        id
    }

    pub fn deprovision(&mut self, s: ServiceIdx, id: InstanceId) -> Option<VmInstance> {
        let v = &mut self.provisioned[s.0];
        let pos = v.iter().position(|i| i.id == id)?;
        Some(v.remove(pos))
    }

    /// Processing units of all instances, booting ones included.
    pub fn planned_units<T: Scalar>(&self, p: &Problem<'_, T>, s: ServiceIdx) -> u64 {
        self.instances(s).iter().map(|i| p.offer_units(s, i.offer)).sum()
    }

    /// Processing units of instances usable at `now`.
    pub fn ready_units<T: Scalar>(&self, p: &Problem<'_, T>, s: ServiceIdx, now: u64) -> u64 {
        self.instances(s)
            .iter()
            .filter(|i| i.is_ready(now))
            .map(|i| p.offer_units(s, i.offer))
            .sum()
    }

    /// Checks pinning, cloud membership of ready instances and the
    /// one-unit minimum of every instance.
    pub fn check<T: Scalar>(&self, p: &Problem<'_, T>, now: u64) -> Result<(), PlanError> {
        if self.service_count() != p.workflow.service_count() {
            return Err(PlanError::Shape(self.service_count(), p.workflow.service_count()));
        }
        for s in p.workflow.service_ids() {
            if let Some(pin) = p.pinned(s) {
                if self.placement(s) != pin {
                    return Err(PlanError::PinViolated(s));
                }
            }
            for i in self.instances(s) {
                if i.is_ready(now) && i.cloud() != self.placement(s) {
                    return Err(PlanError::WrongCloud(s, i.id));
                }
                if !p.is_eligible(s, i.offer) {
                    return Err(PlanError::OfferTooSmall(s, i.id));
                }
            }
        }
        Ok(())
    }
}

/// When the deprovisions of a delta take effect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Release {
    /// Immediately at the event second.
    #[default]
    Immediate,
    /// Once every instance provisioned for the same service is ready.
    WhenReplacementsReady,
}

/// Provision (`exVM`) and deprovision (`rmVM`) sets for one event.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDelta {
    pub provision: BTreeMap<ServiceIdx, Vec<OfferRef>>,
    pub deprovision: BTreeMap<ServiceIdx, Vec<InstanceId>>,
    /// New placement clouds (only full re-plans move services).
    pub relocate: BTreeMap<ServiceIdx, CloudIdx>,
    pub release: Release,
}

impl PlanDelta {
    pub fn is_empty(&self) -> bool {
        self.provision.values().all(Vec::is_empty) && self.deprovision.values().all(Vec::is_empty)
    }

    /// `|exVM| + |rmVM|` summed over services.
    pub fn change_count(&self) -> usize {
        self.provision.values().map(Vec::len).sum::<usize>()
            + self.deprovision.values().map(Vec::len).sum::<usize>()
    }

    pub fn add_provision(&mut self, s: ServiceIdx, offers: Vec<OfferRef>) {
        if !offers.is_empty() {
            self.provision.entry(s).or_default().extend(offers);
        }
    }

    pub fn add_deprovision(&mut self, s: ServiceIdx, ids: Vec<InstanceId>) {
        if !ids.is_empty() {
            self.deprovision.entry(s).or_default().extend(ids);
        }
    }

    /// Applies the delta as if every provision were ready and every release
    /// done: the plan the event converges to.
    pub fn target_plan<T: Scalar>(&self, p: &Problem<'_, T>, plan: &SchedulingPlan, now: u64) -> SchedulingPlan {
        let mut out = plan.clone();
        for (&s, ids) in &self.deprovision {
            for &id in ids {
                out.deprovision(s, id);
            }
        }
        for (&s, &c) in &self.relocate {
            out.set_placement(s, c);
        }
        for (&s, offers) in &self.provision {
            for &o in offers {
                out.provision(s, o, now, 0);
            }
        }
        debug_assert!(out.check(p, now).is_ok());
        out
    }
}
