//! One-second-step simulation of a scheduled workflow under velocity
//! change events.

pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CloudIdx, InstanceId};
use crate::cost::{
    apply_velocity_change, cost_per_second, exec_cost_per_second, service_rate, total_cost,
    transfer_cost_per_second, CostBreakdown, Load,
};
use crate::events::{Direction, VelocityChangeEvent};
use crate::ga::{evolve, replan_delta, GaError, GaParams};
use crate::greedy::{handle_event, GreedyError, GreedyParams};
use crate::plan::{PlanDelta, Release, SchedulingPlan};
use crate::problem::Problem;
use crate::reference::baseline_handle_event;
use crate::scalar::Scalar;
use crate::seed;
use crate::workflow::ServiceIdx;

pub use report::{write_report, MeanReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Adaptive,
    GaReplan,
    Baseline,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Adaptive, SchedulerKind::GaReplan, SchedulerKind::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Adaptive => "adaptive",
            SchedulerKind::GaReplan => "ga-replan",
            SchedulerKind::Baseline => "baseline",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown scheduler `{s}` (expected adaptive, ga-replan or baseline)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scheduler: SchedulerKind,
    pub horizon: u64,
    pub events: Vec<VelocityChangeEvent>,
    pub ga: GaParams,
    pub greedy: GreedyParams,
    /// Seeds the greedy shuffles and the re-plan GA runs.
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Scheduler(#[from] GreedyError),
    #[error("initial plan does not match the workflow: {0}")]
    Plan(#[from] crate::plan::PlanError),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        if self.events.windows(2).any(|w| w[0].at_second >= w[1].at_second) {
            return Err(SimError::Config("events must be sorted with at most one per second".into()));
        }
        self.ga.validate()?;
        Ok(())
    }
}

/// One second of the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SeriesRow<T> {
    pub t: u64,
    pub exec_cost: T,
    pub transfer_cost: T,
    pub total_input: T,
    pub total_capacity: T,
    /// Rate of the whole units by which services fall short of their input.
    pub deficit: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EventRecord<T> {
    pub event_id: usize,
    pub t: u64,
    pub kind: Direction,
    pub source: String,
    pub delta_units: u64,
    pub changes: usize,
    /// Cost per second of the plan the event converges to, at post-event
    /// rates.
    pub post_cost_per_s: T,
    /// Seconds until the event's new VMs are ready (and, for re-plans, the
    /// switch-over completes).
    pub response_s: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimulationReport<T> {
    pub workflow: String,
    pub config: SimConfig,
    pub series: Vec<SeriesRow<T>>,
    pub events: Vec<EventRecord<T>>,
    pub totals: CostBreakdown<T>,
    /// Wall-clock time spent in the scheduler per event. Not part of the
    /// serialised report.
    #[serde(skip)]
    pub handler_time: Vec<Duration>,
}

impl<T: Scalar> SimulationReport<T> {
    pub fn total_changes(&self) -> usize {
        self.events.iter().map(|e| e.changes).sum()
    }
}

/// Pending switch-over of one service to a re-planned VM set.
#[derive(Clone, Debug, Default)]
struct Transition {
    release: Vec<InstanceId>,
    waiting_on: Vec<InstanceId>,
    cloud: Option<CloudIdx>,
}

struct State<'p, 'a, T> {
    p: &'p Problem<'a, T>,
    plan: SchedulingPlan,
    transitions: BTreeMap<ServiceIdx, Transition>,
}

impl<T: Scalar> State<'_, '_, T> {
    fn ready_at(&self, s: ServiceIdx, id: InstanceId) -> Option<u64> {
        self.plan.instances(s).iter().find(|i| i.id == id).map(|i| i.ready_at)
    }

    fn finish(&mut self, s: ServiceIdx, tr: Transition) {
        for id in tr.release {
            self.plan.deprovision(s, id);
        }
        if let Some(c) = tr.cloud {
            self.plan.set_placement(s, c);
        }
    }

    fn settle(&mut self, now: u64) {
        let done: Vec<_> = self
            .transitions
            .iter()
            .filter(|(&s, tr)| tr.waiting_on.iter().all(|&id| self.ready_at(s, id).map_or(true, |r| r <= now)))
            .map(|(&s, _)| s)
            .collect();
        for s in done {
            let tr = self.transitions.remove(&s).expect("present");
            self.finish(s, tr);
        }
    }

    /// The plan with every pending switch-over completed.
    fn resolved(&self) -> SchedulingPlan {
        let mut out = self.plan.clone();
        for (&s, tr) in &self.transitions {
            for &id in &tr.release {
                out.deprovision(s, id);
            }
            if let Some(c) = tr.cloud {
                out.set_placement(s, c);
            }
        }
        out
    }

    /// Applies a delta at `now`; returns the latest ready time it waits on.
    fn apply(&mut self, delta: &PlanDelta, now: u64) -> u64 {
        let mut latest = now;
        match delta.release {
            Release::Immediate => {
                for (&s, ids) in &delta.deprovision {
                    for &id in ids {
                        self.plan.deprovision(s, id);
                    }
                }
                for (&s, offers) in &delta.provision {
                    for &o in offers {
                        let boot = u64::from(self.p.catalog.offer(o).boot_time);
                        self.plan.provision(s, o, now, boot);
                        latest = latest.max(now + boot);
                    }
                }
            }
            Release::WhenReplacementsReady => {
                let touched: Vec<ServiceIdx> = delta
                    .provision
                    .keys()
                    .chain(delta.deprovision.keys())
                    .chain(delta.relocate.keys())
                    .copied()
                    .collect();
                for s in touched {
                    let mut tr = self.transitions.remove(&s).unwrap_or_default();
                    if let Some(ids) = delta.deprovision.get(&s) {
                        tr.release.extend(ids.iter().copied());
                    }
                    for &o in delta.provision.get(&s).into_iter().flatten() {
                        let boot = u64::from(self.p.catalog.offer(o).boot_time);
                        tr.waiting_on.push(self.plan.provision(s, o, now, boot));
                    }
                    tr.waiting_on.retain(|id| !tr.release.contains(id));
                    if let Some(&c) = delta.relocate.get(&s) {
                        tr.cloud = Some(c);
                    }
                    for &id in &tr.waiting_on {
                        latest = latest.max(self.ready_at(s, id).unwrap_or(now));
                    }
                    if tr.waiting_on.is_empty() {
                        self.finish(s, tr);
                    } else {
                        self.transitions.insert(s, tr);
                    }
                }
            }
        }
        latest
    }
}

/// Runs `cfg` from `initial_plan` (assumed ready at second 0) and the
/// initial load.
pub fn run<T: Scalar>(
    p: &Problem<'_, T>,
    initial_plan: &SchedulingPlan,
    initial: &Load<T>,
    cfg: &SimConfig,
) -> Result<SimulationReport<T>, SimError> {
    cfg.validate()?;
    initial_plan.check(p, 0)?;
    let w = p.workflow;
    let mut state = State {
        p,
        plan: initial_plan.clone(),
        transitions: BTreeMap::new(),
    };
    let mut load = initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, "greedy", 0));
    let mut pending = cfg.events.iter().enumerate().peekable();
    let mut series = Vec::with_capacity(cfg.horizon as usize);
    let mut events = Vec::with_capacity(cfg.events.len());
    let mut handler_time = Vec::with_capacity(cfg.events.len());

    for t in 0..cfg.horizon {
        state.settle(t);
        if let Some((k, ev)) = pending.next_if(|(_, e)| e.at_second == t) {
            let started = Instant::now();
            let (delta, next) = match cfg.scheduler {
                SchedulerKind::Adaptive => {
                    let r = handle_event(p, &state.plan, &load, ev, &cfg.greedy, &mut rng)?;
                    (r.delta, r.load)
                }
                SchedulerKind::Baseline => {
                    let r = baseline_handle_event(p, &state.plan, &load, ev)?;
                    (r.delta, r.load)
                }
                SchedulerKind::GaReplan => {
                    let src = w.source_idx(&ev.source).map_err(GreedyError::from)?;
                    let u = apply_velocity_change(w, &load.source_units, &load.rates, src, ev.signed_delta())
                        .map_err(GreedyError::from)?;
                    let next = Load {
                        source_units: u.source_units,
                        rates: u.rates,
                    };
                    let params = cfg.ga.clone().with_seed(seed::derive(cfg.seed, "replan", k as u64));
                    let best = evolve(p, &next, &params)?;
                    (replan_delta(p, &state.resolved(), &best.best), next)
                }
            };
            handler_time.push(started.elapsed());
            load = next;
            let latest = state.apply(&delta, t);
            let post = cost_per_second(p, &state.resolved(), &load.rates, &load.source_units);
            events.push(EventRecord {
                event_id: k,
                t,
                kind: ev.direction,
                source: ev.source.clone(),
                delta_units: ev.delta_units,
                changes: delta.change_count(),
                post_cost_per_s: post.total,
                response_s: latest - t,
            });
        }
        series.push(observe(p, &state.plan, &load, t));
    }
    if let Some((_, ev)) = pending.next() {
        return Err(SimError::Config(format!("event at second {} lies beyond the horizon", ev.at_second)));
    }

    let totals = total_cost(series.iter().map(|r| CostBreakdown::new(r.exec_cost, r.transfer_cost)));
    Ok(SimulationReport {
        workflow: w.name().to_string(),
        config: cfg.clone(),
        series,
        events,
        totals,
        handler_time,
    })
}

fn observe<T: Scalar>(p: &Problem<'_, T>, plan: &SchedulingPlan, load: &Load<T>, t: u64) -> SeriesRow<T> {
    let w = p.workflow;
    let mut short = 0u64;
    let mut capacity = T::zero();
    for s in w.service_ids() {
        capacity = capacity + service_rate(p, plan, s, t);
        short += p.required_units(load.rates.input(s)).saturating_sub(plan.ready_units(p, s, t));
    }
    SeriesRow {
        t,
        exec_cost: exec_cost_per_second(p.catalog, plan),
        transfer_cost: transfer_cost_per_second(p, plan.placements(), &load.rates, &load.source_units),
        total_input: load.rates.total_input(),
        total_capacity: capacity,
        deficit: p.units_to_rate(short),
    }
}

/// Best plan of the placement GA for the initial load, ready at second 0.
pub fn initial_plan<T: Scalar>(p: &Problem<'_, T>, load: &Load<T>, ga: &GaParams) -> Result<SchedulingPlan, GaError> {
    Ok(evolve(p, load, ga)?.best.to_plan(p))
}
