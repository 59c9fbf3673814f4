//! Two-level greedy adaptation to velocity changes. Level one finds the
//! services an event reaches; level two picks VMs to add or release for
//! each of them with a shallow minimax search.

pub mod minimax;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{InstanceId, OfferRef, VmOffer};
use crate::cost::{apply_velocity_change, CostError, Load, RateState};
use crate::events::{Direction, VelocityChangeEvent};
use crate::plan::SchedulingPlan;
use crate::problem::Problem;
use crate::scalar::{floor_count, Scalar};
use crate::workflow::{ServiceIdx, WorkflowError};

pub use minimax::{build_tree, minimax, minimax_alpha_beta, GameTreeNode, Score};

#[derive(Debug, Error, PartialEq)]
pub enum GreedyError {
    #[error("unschedulable increase: no eligible offer for service `{0}` in its placement cloud")]
    Unschedulable(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
}

impl From<WorkflowError> for GreedyError {
    fn from(e: WorkflowError) -> Self {
        GreedyError::UnknownSource(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyParams {
    pub depth: usize,
}

impl Default for GreedyParams {
    fn default() -> Self {
        Self { depth: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestKind {
    Increase,
    Decrease,
}

/// Inputs of the leaf evaluation besides the VM itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalContext<T> {
    /// Units still to add (increase) or to shed (decrease).
    pub demand_units: u64,
    pub unit_mips: T,
    pub deps: u64,
    pub kind: RequestKind,
}

/// Leaf score of a VM offer.
///
/// Increase: `(achieved / (req * price)) / boot + ⌊mips / (χ * deps)⌋ / price`.
/// Decrease: `achieved / (red * price)`. A zero boot time counts as one
/// second.
pub fn evaluate<T: Scalar>(offer: &VmOffer<T>, ctx: &EvalContext<T>) -> T {
    assert!(ctx.demand_units > 0, "evaluate needs a positive demand");
    let achieved = T::from_count(floor_count(offer.mips / ctx.unit_mips));
    let demand = T::from_count(ctx.demand_units);
    match ctx.kind {
        RequestKind::Increase => {
            let boot = T::from_count(u64::from(offer.boot_time.max(1)));
            let deps = T::from_count(ctx.deps.max(1));
            let shared = T::from_count(floor_count(offer.mips / (ctx.unit_mips * deps)));
            achieved / (demand * offer.price) / boot + shared / offer.price
        }
        RequestKind::Decrease => achieved / (demand * offer.price),
    }
}

/// Out-degree of a service, at least one.
pub fn deps<T: Scalar>(p: &Problem<'_, T>, s: ServiceIdx) -> u64 {
    p.workflow.out_degree(s).max(1) as u64
}

/// Capacity units held (booting included) minus the units the current
/// input needs. Negative when the service is short.
pub fn extra_units<T: Scalar>(p: &Problem<'_, T>, plan: &SchedulingPlan, s: ServiceIdx, rates: &RateState<T>) -> i64 {
    plan.planned_units(p, s) as i64 - p.required_units(rates.input(s)) as i64
}

/// Tie keys: cheaper first, then by name, then by position.
fn tie_keys<T: Scalar>(offers: &[&VmOffer<T>]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..offers.len()).collect();
    order.sort_by(|&a, &b| {
        offers[a]
            .price
            .partial_cmp(&offers[b].price)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| offers[a].name.cmp(&offers[b].name))
            .then(a.cmp(&b))
    });
    let mut keys = vec![0; offers.len()];
    for (rank, &i) in order.iter().enumerate() {
        keys[i] = (offers.len() - rank) as u64;
    }
    keys
}

/// Shuffles candidates, builds the search tree and returns the chosen
/// candidate index.
fn choose<T: Scalar>(
    offers: &[&VmOffer<T>],
    alive: &[usize],
    ctx: &EvalContext<T>,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let ties = tie_keys(offers);
    let mut leaves = alive.to_vec();
    leaves.shuffle(rng);
    let tree = if depth >= 2 {
        build_tree::<T>(&leaves)
    } else {
        GameTreeNode::internal(true, leaves.iter().map(|&i| GameTreeNode::leaf(i)).collect())
    };
    let mut eval = |n: &GameTreeNode<T>| {
        let i = n.id as usize;
        Score::with_tie(evaluate(offers[i], ctx), ties[i])
    };
    let best = minimax_alpha_beta(if depth >= 2 { 2 } else { 1 }, true, &tree, Score::neg_inf(), Score::pos_inf(), &mut eval);
    best.id as usize
}

/// Offers to provision so that `delta_units` more units are covered, after
/// spare capacity is used up.
pub fn increase_proc<T: Scalar>(
    p: &Problem<'_, T>,
    plan: &SchedulingPlan,
    s: ServiceIdx,
    rates: &RateState<T>,
    delta_units: u64,
    params: &GreedyParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<OfferRef>, GreedyError> {
    let mut req = delta_units as i64 - extra_units(p, plan, s, rates);
    if req <= 0 {
        return Ok(Vec::new());
    }
    let candidates = p.eligible_offers(s, plan.placement(s));
    if candidates.is_empty() {
        return Err(GreedyError::Unschedulable(p.workflow.service(s).id.clone()));
    }
    let offers: Vec<_> = candidates.iter().map(|&o| p.catalog.offer(o)).collect();
    let all: Vec<usize> = (0..candidates.len()).collect();
    let mut chosen = Vec::new();
    while req > 0 {
        let ctx = EvalContext {
            demand_units: req as u64,
            unit_mips: p.unit_mips(s),
            deps: deps(p, s),
            kind: RequestKind::Increase,
        };
        let i = choose(&offers, &all, &ctx, params.depth, rng);
        chosen.push(candidates[i]);
        req -= p.offer_units(s, candidates[i]) as i64;
    }
    Ok(chosen)
}

/// Instances to release after the input drops by `delta_units`. Only
/// instances whose units fit in the remaining reducible amount are
/// candidates, so the service stays feasible.
pub fn decrease_proc<T: Scalar>(
    p: &Problem<'_, T>,
    plan: &SchedulingPlan,
    s: ServiceIdx,
    rates: &RateState<T>,
    delta_units: u64,
    params: &GreedyParams,
    rng: &mut ChaCha8Rng,
) -> Vec<InstanceId> {
    let mut red = delta_units as i64 + extra_units(p, plan, s, rates);
    let instances = plan.instances(s);
    let offers: Vec<_> = instances.iter().map(|i| p.catalog.offer(i.offer)).collect();
    let units: Vec<i64> = instances.iter().map(|i| p.offer_units(s, i.offer) as i64).collect();
    let mut alive: Vec<usize> = (0..instances.len()).collect();
    let mut released = Vec::new();
    loop {
        alive.retain(|&i| units[i] <= red);
        if red <= 0 || alive.is_empty() {
            break;
        }
        let ctx = EvalContext {
            demand_units: red as u64,
            unit_mips: p.unit_mips(s),
            deps: deps(p, s),
            kind: RequestKind::Decrease,
        };
        let i = choose(&offers, &alive, &ctx, params.depth, rng);
        released.push(instances[i].id);
        red -= units[i];
        alive.retain(|&j| j != i);
    }
    released
}

/// Delta chosen for one event, with the load after the change.
#[derive(Clone, Debug, PartialEq)]
pub struct EventResponse<T> {
    pub delta: crate::plan::PlanDelta,
    pub load: Load<T>,
}

/// Applies the velocity change, then runs the increase or decrease
/// procedure on every affected service in topological order.
pub fn handle_event<T: Scalar>(
    p: &Problem<'_, T>,
    plan: &SchedulingPlan,
    load: &Load<T>,
    event: &VelocityChangeEvent,
    params: &GreedyParams,
    rng: &mut ChaCha8Rng,
) -> Result<EventResponse<T>, GreedyError> {
    let src = p.workflow.source_idx(&event.source)?;
    let update = apply_velocity_change(p.workflow, &load.source_units, &load.rates, src, event.signed_delta())?;
    let mut delta = crate::plan::PlanDelta::default();
    if event.delta_units > 0 {
        for &(s, theta) in &update.theta {
            let before = p.required_units(load.rates.input(s));
            let after = p.required_units(update.rates.input(s));
            match event.direction {
                Direction::Increase if theta > T::zero() => {
                    let d = after.saturating_sub(before);
                    delta.add_provision(s, increase_proc(p, plan, s, &load.rates, d, params, rng)?);
                }
                Direction::Decrease if theta < T::zero() => {
                    let d = before.saturating_sub(after);
                    delta.add_deprovision(s, decrease_proc(p, plan, s, &load.rates, d, params, rng));
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
