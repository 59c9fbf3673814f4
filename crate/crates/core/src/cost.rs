//! Throughput and cost model: per-VM and per-service processing rates,
//! stream propagation, the feasibility check, velocity changes, and the
//! per-second execution and transfer costs.

use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CloudCatalog, CloudIdx, VmOffer};
use crate::plan::SchedulingPlan;
use crate::problem::Problem;
use crate::scalar::{floor_count, round_half_up, Scalar};
use crate::workflow::{ServiceIdx, SourceIdx, StreamWorkflow};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("offer `{offer}` too small for service `{service}`: {mips} MIPS < {unit_mips} per unit")]
    OfferTooSmall {
        service: String,
        offer: String,
        mips: f64,
        unit_mips: f64,
    },
    #[error("decrease of {delta} units on source `{source_id}` would not leave a positive rate (current {current})")]
    DecreaseTooLarge {
        source_id: String,
        delta: u64,
        current: u64,
    },
    #[error("decrease would drain service `{0}`")]
    DrainsService(String),
}

/// `χ`: MIPS needed to process one stream unit per second.
pub fn unit_mips<T: Scalar>(w: &StreamWorkflow<T>, s: ServiceIdx) -> T {
    w.unit_dp_rate() * w.service(s).mi_per_mb
}

/// Rate (MB/s) at which one VM of `offer` processes the service's input:
/// whole units per second only.
pub fn vm_rate<T: Scalar>(w: &StreamWorkflow<T>, s: ServiceIdx, offer: &VmOffer<T>) -> Result<T, CostError> {
    let chi = unit_mips(w, s);
    if offer.mips < chi {
        return Err(CostError::OfferTooSmall {
            service: w.service(s).id.clone(),
            offer: offer.name.clone(),
            mips: offer.mips.as_f64(),
            unit_mips: chi.as_f64(),
        });
    }
    let units = T::from_count(floor_count(offer.mips / chi));
    Ok(units * chi / w.service(s).mi_per_mb)
}

/// Aggregate processing rate of the instances usable at `now`. Booting
/// instances contribute nothing.
pub fn service_rate<T: Scalar>(p: &Problem<'_, T>, plan: &SchedulingPlan, s: ServiceIdx, now: u64) -> T {
    plan.instances(s)
        .iter()
        .filter(|i| i.is_ready(now))
        .map(|i| p.units_to_rate(p.offer_units(s, i.offer)))
        .sum()
}

/// Input and output stream rates (MB/s) per service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RateState<T> {
    pub in_stream: Vec<T>,
    pub out_stream: Vec<T>,
}

impl<T: Scalar> RateState<T> {
    pub fn total_input(&self) -> T {
        self.in_stream.iter().copied().sum()
    }

    pub fn input(&self, s: ServiceIdx) -> T {
        self.in_stream[s.0]
    }

    pub fn output(&self, s: ServiceIdx) -> T {
        self.out_stream[s.0]
    }
}

/// Source rates together with the stream rates they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct Load<T> {
    pub source_units: Vec<u64>,
    pub rates: RateState<T>,
}

impl<T: Scalar> Load<T> {
    pub fn new(w: &StreamWorkflow<T>, source_units: Vec<u64>) -> Self {
        let rates = compute_rates(w, &source_units);
        Self { source_units, rates }
    }

    /// Load at the sources' declared rates.
    pub fn initial(w: &StreamWorkflow<T>) -> Self {
        Self::new(w, w.default_source_units())
    }
}

/// Which parent quantity feeds a child's input.
#[derive(Clone, Copy, Debug)]
pub enum RateModel<'a, T> {
    /// Parents forward `outStream = gamma * inStream`.
    OutStream,
    /// Parents forward `gamma * capacity`, with per-service capacities
    /// (MB/s) given here.
    ParentCapacity(&'a [T]),
}

pub fn compute_rates<T: Scalar>(w: &StreamWorkflow<T>, source_units: &[u64]) -> RateState<T> {
    compute_rates_with(w, source_units, RateModel::OutStream)
}

/// Propagates source rates through the DAG in topological order.
pub fn compute_rates_with<T: Scalar>(
    w: &StreamWorkflow<T>,
    source_units: &[u64],
    model: RateModel<'_, T>,
) -> RateState<T> {
    let n = w.service_count();
    let mut rates = RateState {
        in_stream: vec![T::zero(); n],
        out_stream: vec![T::zero(); n],
    };
    for &s in w.topo_order() {
        let internal: T = w
            .parents(s)
            .iter()
            .map(|&(parent, pct)| {
                let forwarded = match model {
                    RateModel::OutStream => rates.out_stream[parent.0],
                    RateModel::ParentCapacity(cap) => w.service(parent).gamma * cap[parent.0],
                };
                forwarded * pct
            })
            .sum();
        let input = w.lambda_with(s, source_units) + internal;
        rates.in_stream[s.0] = input;
        rates.out_stream[s.0] = w.service(s).gamma * input;
    }
    rates
}

/// True iff every service's usable capacity covers its input rate.
pub fn is_feasible<T: Scalar>(p: &Problem<'_, T>, plan: &SchedulingPlan, rates: &RateState<T>, now: u64) -> bool {
    p.workflow
        .service_ids()
        .all(|s| plan.ready_units(p, s, now) >= p.required_units(rates.input(s)))
}

/// Change in a source's rate by a rounded percentage of its current rate.
pub fn percent_change_units<T: Scalar>(current_units: u64, percent: T) -> u64 {
    round_half_up(T::from_count(current_units) * percent)
}

/// Outcome of a velocity change on one external source.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityUpdate<T> {
    pub source_units: Vec<u64>,
    pub rates: RateState<T>,
    /// Affected services in propagation order with their signed input
    /// change `ϑ` (MB/s).
    pub theta: Vec<(ServiceIdx, T)>,
}

/// Adds `delta_units` (negative for a decrease) to one source and
/// propagates the change. The new rates equal a fresh [`compute_rates`] on
/// the updated source vector.
pub fn apply_velocity_change<T: Scalar>(
    w: &StreamWorkflow<T>,
    source_units: &[u64],
    before: &RateState<T>,
    source: SourceIdx,
    delta_units: i64,
) -> Result<VelocityUpdate<T>, CostError> {
    let current = source_units[source.0];
    let magnitude = delta_units.unsigned_abs();
    if delta_units < 0 && magnitude >= current {
        return Err(CostError::DecreaseTooLarge {
            source_id: w.source(source).id.clone(),
            delta: magnitude,
            current,
        });
    }
    let mut units = source_units.to_vec();
    units[source.0] = if delta_units < 0 { current - magnitude } else { current + magnitude };
    let rates = compute_rates(w, &units);
    let mut theta = Vec::new();
    for s in w.downstream_of(source) {
        let d = rates.input(s) - before.input(s);
        if delta_units < 0 && before.input(s) > T::zero() && !(rates.input(s) > T::zero()) {
            return Err(CostError::DrainsService(w.service(s).id.clone()));
        }
        theta.push((s, d));
    }
    Ok(VelocityUpdate {
        source_units: units,
        rates,
        theta,
    })
}

/// Sum of instance prices, booting instances included (cents/s).
pub fn exec_cost_per_second<T: Scalar>(catalog: &CloudCatalog<T>, plan: &SchedulingPlan) -> T {
    plan.all_instances().map(|(_, i)| catalog.offer(i.offer).price).sum()
}

/// Network characteristics between two clouds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link<T> {
    pub bandwidth: T,
    pub latency: T,
    pub cost: T,
}

impl<T: Scalar> Link<T> {
    pub fn of(catalog: &CloudCatalog<T>, a: CloudIdx, b: CloudIdx) -> Self {
        Self {
            bandwidth: catalog.bandwidth(a, b),
            latency: catalog.latency(a, b),
            cost: catalog.transfer_cost(a, b),
        }
    }
}

/// Per-second cost of moving `stream * percent` MB/s over an inter-cloud
/// link. When the occupancy `stream * percent / B + L` exceeds one second,
/// only `stream * percent / occupancy` MB are moved in that second.
pub fn edge_transfer_cost<T: Scalar>(stream: T, percent: T, link: Link<T>) -> T {
    let volume = stream * percent;
    let occupancy = volume / link.bandwidth + link.latency;
    let moved = if occupancy <= T::one() { volume } else { volume / occupancy };
    moved * link.cost
}

/// Transfer cost per second for a placement, using the catalog network.
pub fn transfer_cost_per_second<T: Scalar>(
    p: &Problem<'_, T>,
    placements: &[CloudIdx],
    rates: &RateState<T>,
    source_units: &[u64],
) -> T {
    transfer_cost_with(p, placements, rates, source_units, |a, b| Link::of(p.catalog, a, b))
}

/// Transfer cost per second with caller-provided link characteristics.
/// Edges within one cloud cost nothing; source edges are charged when the
/// service runs away from the source's location.
pub fn transfer_cost_with<T: Scalar>(
    p: &Problem<'_, T>,
    placements: &[CloudIdx],
    rates: &RateState<T>,
    source_units: &[u64],
    link: impl Fn(CloudIdx, CloudIdx) -> Link<T>,
) -> T {
    let w = p.workflow;
    let mut total = T::zero();
    for s in w.service_ids() {
        let here = placements[s.0];
        for &(parent, pct) in w.parents(s) {
            let there = placements[parent.0];
            if there != here {
                total = total + edge_transfer_cost(rates.output(parent), pct, link(there, here));
            }
        }
        for &(src, pct) in w.source_inputs(s) {
            let there = p.source_cloud(src);
            if there != here {
                let stream = w.units_to_rate(source_units[src.0]);
                total = total + edge_transfer_cost(stream, pct, link(there, here));
            }
        }
    }
    total
}

/// Execution, transfer and total cost (cents or cents/s).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostBreakdown<T> {
    pub exec: T,
    pub transfer: T,
    pub total: T,
}

impl<T: Scalar> CostBreakdown<T> {
    pub fn new(exec: T, transfer: T) -> Self {
        Self {
            exec,
            transfer,
            total: exec + transfer,
        }
    }
}

impl<T: Scalar> Add for CostBreakdown<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.exec + o.exec, self.transfer + o.transfer)
    }
}

/// Cost of one second under a plan and rates.
pub fn cost_per_second<T: Scalar>(
    p: &Problem<'_, T>,
    plan: &SchedulingPlan,
    rates: &RateState<T>,
    source_units: &[u64],
) -> CostBreakdown<T> {
    CostBreakdown::new(
        exec_cost_per_second(p.catalog, plan),
        transfer_cost_per_second(p, plan.placements(), rates, source_units),
    )
}

/// Sums per-second breakdowns over a horizon.
pub fn total_cost<T: Scalar>(per_second: impl IntoIterator<Item = CostBreakdown<T>>) -> CostBreakdown<T> {
    per_second
        .into_iter()
        .fold(CostBreakdown::new(T::zero(), T::zero()), |a, b| a + b)
}
