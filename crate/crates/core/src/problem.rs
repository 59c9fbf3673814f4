//! A workflow bound to a catalog: cloud ids resolved to indices plus the
//! per-service unit arithmetic every scheduler shares.

use crate::cloud::{CatalogError, CloudCatalog, CloudIdx, OfferRef};
use crate::scalar::{floor_count, Scalar};
use crate::workflow::{Mobility, ServiceIdx, SourceIdx, StreamWorkflow};

#[derive(Clone, Debug)]
pub struct Problem<'a, T> {
    pub workflow: &'a StreamWorkflow<T>,
    pub catalog: &'a CloudCatalog<T>,
    pinned: Vec<Option<CloudIdx>>,
    source_cloud: Vec<CloudIdx>,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(workflow: &'a StreamWorkflow<T>, catalog: &'a CloudCatalog<T>) -> Result<Self, CatalogError> {
        let pinned = workflow
            .services()
            .iter()
            .map(|s| match (&s.pinned_cloud, s.mobility) {
                (Some(c), Mobility::Unmovable) => catalog.cloud_idx(c).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        let source_cloud = workflow
            .sources()
            .iter()
            .map(|s| catalog.cloud_idx(&s.location_cloud))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            workflow,
            catalog,
            pinned,
            source_cloud,
        })
    }

    /// Cloud an unmovable service is pinned to.
    pub fn pinned(&self, s: ServiceIdx) -> Option<CloudIdx> {
        self.pinned[s.0]
    }

    pub fn source_cloud(&self, p: SourceIdx) -> CloudIdx {
        self.source_cloud[p.0]
    }

    /// MIPS needed to process one stream unit per second (`unit_dp_rate * MI`).
    pub fn unit_mips(&self, s: ServiceIdx) -> T {
        self.workflow.unit_dp_rate() * self.workflow.service(s).mi_per_mb
    }

    /// Whole stream units per second an offer achieves for a service.
    pub fn offer_units(&self, s: ServiceIdx, offer: OfferRef) -> u64 {
        floor_count(self.catalog.offer(offer).mips / self.unit_mips(s))
    }

    pub fn is_eligible(&self, s: ServiceIdx, offer: OfferRef) -> bool {
        self.offer_units(s, offer) >= 1
    }

    /// Offers of `cloud` with at least one unit of capacity for `s`.
    pub fn eligible_offers(&self, s: ServiceIdx, cloud: CloudIdx) -> Vec<OfferRef> {
        self.catalog
            .offers_in(cloud)
            .filter(|&o| self.is_eligible(s, o))
            .collect()
    }

    /// Clouds a service may be placed on: its pin, or every cloud with at
    /// least one eligible offer.
    pub fn candidate_clouds(&self, s: ServiceIdx) -> Vec<CloudIdx> {
        match self.pinned(s) {
            Some(c) => vec![c],
            None => (0..self.catalog.cloud_count())
                .map(CloudIdx)
                .filter(|&c| !self.eligible_offers(s, c).is_empty())
                .collect(),
        }
    }

    pub fn units_to_rate(&self, units: u64) -> T {
        T::from_count(units) * self.workflow.unit_dp_rate()
    }

    /// Smallest number of processing units whose rate covers `in_rate`.
    pub fn required_units(&self, in_rate: T) -> u64 {
        if !(in_rate > T::zero()) {
            return 0;
        }
        let unit = self.workflow.unit_dp_rate();
        let mut k = floor_count((in_rate / unit).ceil());
        while k > 0 && self.units_to_rate(k - 1) >= in_rate {
            k -= 1;
        }
        while self.units_to_rate(k) < in_rate {
            k += 1;
        }
        k
    }
}
