//! Comparison points: a reactive baseline that always scales with the
//! largest VM, and a relaxed lower bound on the total cost.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cloud::{CloudIdx, OfferRef};
use crate::cost::{apply_velocity_change, transfer_cost_with, CostBreakdown, Link, Load};
use crate::events::{Direction, VelocityChangeEvent};
use crate::greedy::{EventResponse, GreedyError};
use crate::plan::{PlanDelta, SchedulingPlan};
use crate::problem::Problem;
use crate::scalar::Scalar;
use crate::workflow::ServiceIdx;

/// Highest-MIPS eligible offer of a cloud; cheaper first on ties.
fn largest_offer<T: Scalar>(p: &Problem<'_, T>, s: ServiceIdx, cloud: CloudIdx) -> Option<OfferRef> {
    p.eligible_offers(s, cloud).into_iter().max_by(|&a, &b| {
        let (oa, ob) = (p.catalog.offer(a), p.catalog.offer(b));
        oa.mips
            .partial_cmp(&ob.mips)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ob.price.partial_cmp(&oa.price).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| b.offer.cmp(&a.offer))
    })
}

/// Increase: add the placement cloud's largest offer until the service is
/// covered. Decrease: release instances largest first while the service
/// stays covered.
pub fn baseline_handle_event<T: Scalar>(
    p: &Problem<'_, T>,
    plan: &SchedulingPlan,
    load: &Load<T>,
    event: &VelocityChangeEvent,
) -> Result<EventResponse<T>, GreedyError> {
    let src = p.workflow.source_idx(&event.source)?;
    let update = apply_velocity_change(p.workflow, &load.source_units, &load.rates, src, event.signed_delta())?;
    let mut delta = PlanDelta::default();
    if event.delta_units > 0 {
        for &(s, theta) in &update.theta {
            let need = p.required_units(update.rates.input(s));
            let mut have = plan.planned_units(p, s);
            match event.direction {
                Direction::Increase if theta > T::zero() && have < need => {
                    let o = largest_offer(p, s, plan.placement(s))
                        .ok_or_else(|| GreedyError::Unschedulable(p.workflow.service(s).id.clone()))?;
                    let units = p.offer_units(s, o);
                    let mut add = Vec::new();
                    while have < need {
                        add.push(o);
                        have += units;
                    }
                    delta.add_provision(s, add);
                }
                Direction::Decrease if theta < T::zero() => {
                    let mut held: Vec<_> = plan.instances(s).iter().map(|i| (p.offer_units(s, i.offer), i.id)).collect();
                    held.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    let mut drop = Vec::new();
                    for (units, id) in held {
                        if have - units < need {
                            break;
                        }
                        have -= units;
                        drop.push(id);
                    }
                    delta.add_deprovision(s, drop);
                }
                _ => {}
            }
        }
    }
    Ok(EventResponse {
        delta,
        load: Load {
            source_units: update.source_units,
            rates: update.rates,
        },
    })
}

/// Cheapest whole-VM cover of `demand` units for a service, over the
/// eligible offers of every cloud.
pub fn cheapest_cover<T: Scalar>(p: &Problem<'_, T>, s: ServiceIdx, demand: u64) -> T {
    if demand == 0 {
        return T::zero();
    }
    let options: Vec<(u64, T)> = p
        .catalog
        .all_offers()
        .filter_map(|o| {
            let u = p.offer_units(s, o);
            (u > 0).then(|| (u, p.catalog.offer(o).price))
        })
        .collect();
    let n = demand as usize;
    let mut best = vec![T::infinity(); n + 1];
    best[0] = T::zero();
    for k in 1..=n {
        for &(u, price) in &options {
            let rest = k.saturating_sub(u as usize);
            let c = best[rest] + price;
            if c < best[k] {
                best[k] = c;
            }
        }
    }
    best[n]
}

/// Network used by the bound: cheapest transfer price and lowest egress
/// bandwidth of the catalog, with its latencies.
fn relaxed_link<'a, T: Scalar>(p: &Problem<'a, T>) -> impl Fn(CloudIdx, CloudIdx) -> Link<T> + 'a {
    let cat = p.catalog;
    let n = p.catalog.cloud_count();
    let mut cost = p.catalog.ranges().egress_transfer_cost.min;
    let mut bw = p.catalog.ranges().egress_bandwidth.min;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                cost = cost.min(p.catalog.transfer_cost(CloudIdx(a), CloudIdx(b)));
                bw = bw.min(p.catalog.bandwidth(CloudIdx(a), CloudIdx(b)));
            }
        }
    }
    move |a, b| Link {
        bandwidth: if a == b { cat.bandwidth(a, b) } else { bw },
        latency: cat.latency(a, b),
        cost: if a == b { T::zero() } else { cost },
    }
}

/// Placement ignoring pins: each service, in topological order, goes to the
/// cloud with the lowest relaxed cost of its incoming streams.
pub fn relaxed_placement<T: Scalar>(p: &Problem<'_, T>, load: &Load<T>) -> Vec<CloudIdx> {
    let w = p.workflow;
    let link = relaxed_link(p);
    let clouds = p.catalog.cloud_count();
    let mut place = vec![CloudIdx(0); w.service_count()];
    for &s in w.topo_order() {
        let incoming = |c: CloudIdx| -> T {
            let mut t = T::zero();
            for &(parent, pct) in w.parents(s) {
                let from = place[parent.0];
                if from != c {
                    t = t + crate::cost::edge_transfer_cost(load.rates.output(parent), pct, link(from, c));
                }
            }
            for &(src, pct) in w.source_inputs(s) {
                let from = p.source_cloud(src);
                if from != c {
                    let stream = w.units_to_rate(load.source_units[src.0]);
                    t = t + crate::cost::edge_transfer_cost(stream, pct, link(from, c));
                }
            }
            t
        };
        let mut best = (T::infinity(), CloudIdx(0));
        for c in (0..clouds).map(CloudIdx) {
            if p.eligible_offers(s, c).is_empty() {
                continue;
            }
            let v = incoming(c);
            if v < best.0 {
                best = (v, c);
            }
        }
        place[s.0] = best.1;
    }
    place
}

/// Per-second relaxed cost under one load.
pub fn lower_bound_per_second<T: Scalar>(p: &Problem<'_, T>, load: &Load<T>) -> CostBreakdown<T> {
    let exec = p
        .workflow
        .service_ids()
        .map(|s| cheapest_cover(p, s, p.required_units(load.rates.input(s))))
        .sum();
    let place = relaxed_placement(p, load);
    let transfer = transfer_cost_with(p, &place, &load.rates, &load.source_units, relaxed_link(p));
    CostBreakdown::new(exec, transfer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LowerBound<T> {
    pub per_second: Vec<CostBreakdown<T>>,
    pub total: CostBreakdown<T>,
}

/// Relaxed cost over `horizon` seconds, with each event's rates in force
/// from its second onwards.
pub fn lower_bound_cost<T: Scalar>(
    p: &Problem<'_, T>,
    horizon: u64,
    initial: &Load<T>,
    events: &[VelocityChangeEvent],
) -> Result<LowerBound<T>, GreedyError> {
    let mut load = initial.clone();
    let mut cache: HashMap<Vec<u64>, CostBreakdown<T>> = HashMap::new();
    let mut per_second = Vec::with_capacity(horizon as usize);
    let mut pending = events.iter().peekable();
    for t in 0..horizon {
        while let Some(e) = pending.next_if(|e| e.at_second == t) {
            let src = p.workflow.source_idx(&e.source)?;
            let u = apply_velocity_change(p.workflow, &load.source_units, &load.rates, src, e.signed_delta())?;
            load = Load {
                source_units: u.source_units,
                rates: u.rates,
            };
        }
        let c = *cache
            .entry(load.source_units.clone())
            .or_insert_with(|| lower_bound_per_second(p, &load));
        per_second.push(c);
    }
    let total = crate::cost::total_cost(per_second.iter().copied());
    Ok(LowerBound { per_second, total })
}
