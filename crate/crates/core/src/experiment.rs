//! Repeated paired runs of every scheduler, plus the lower bound, over a
//! grid of generated workflows.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::CloudCatalog;
use crate::cost::{CostBreakdown, Load};
use crate::events::{generate_events, Direction, EventSpec, Range};
use crate::ga::GaParams;
use crate::greedy::GreedyParams;
use crate::problem::Problem;
use crate::reference::lower_bound_cost;
use crate::scalar::Scalar;
use crate::seed;
use crate::sim::{initial_plan, run, SchedulerKind, SimConfig, SimError, SimulationReport};
use crate::workflow::{generate, GeneratorParams, Size, Structure, StreamWorkflow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub structures: Vec<Structure>,
    pub sizes: Vec<Size>,
    pub directions: Vec<Direction>,
    pub range: Range,
    pub reps: usize,
    pub horizon: u64,
    pub seed: u64,
    /// Seed of the workflow generator, shared by every rep.
    pub workflow_seed: u64,
    pub event_count: usize,
    pub event_spacing: u64,
    pub event_offset: u64,
    pub ga: GaParams,
    pub greedy: GreedyParams,
    pub schedulers: Vec<SchedulerKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            structures: Structure::ALL.to_vec(),
            sizes: Size::ALL.to_vec(),
            directions: Direction::ALL.to_vec(),
            range: Range::Medium,
            reps: 10,
            horizon: 180,
            seed: 1,
            workflow_seed: 1,
            event_count: 2,
            event_spacing: 10,
            event_offset: 5,
            ga: GaParams::default(),
            greedy: GreedyParams::default(),
            schedulers: SchedulerKind::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn event_spec(&self, direction: Direction) -> EventSpec {
        EventSpec {
            count: self.event_count,
            spacing: self.event_spacing,
            offset: self.event_offset,
            direction,
            range: self.range,
        }
    }

    /// Seed of repetition `rep`; every other seed of the rep derives from it.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        seed::derive(self.seed, "rep", rep as u64)
    }
}

/// Workflow generated for one grid cell, with sources at the direction's
/// initial rate.
pub fn cell_workflow<T: Scalar>(
    structure: Structure,
    size: Size,
    direction: Direction,
    catalog: &CloudCatalog<T>,
    workflow_seed: u64,
) -> StreamWorkflow<T> {
    let params = GeneratorParams {
        source_rate_units: direction.default_source_units(),
        ..GeneratorParams::default()
    };
    generate(structure, size, &catalog.cloud_ids(), &params, workflow_seed)
}

/// One repetition: every scheduler from the same initial plan and events.
#[derive(Clone, Debug, PartialEq)]
pub struct RepOutcome<T> {
    pub rep: usize,
    pub reports: BTreeMap<SchedulerKind, SimulationReport<T>>,
    pub lower_bound: CostBreakdown<T>,
}

/// Settings shared by every scheduler of a paired run.
#[derive(Clone, Debug)]
pub struct PairedRun<'c> {
    pub schedulers: &'c [SchedulerKind],
    pub horizon: u64,
    pub ga: &'c GaParams,
    pub greedy: GreedyParams,
}

/// Runs every scheduler from one GA plan over one event trace, and the
/// lower bound over the same trace.
pub fn run_paired<T: Scalar>(
    p: &Problem<'_, T>,
    run_cfg: &PairedRun<'_>,
    events: &[crate::events::VelocityChangeEvent],
    rep: usize,
    rep_seed: u64,
) -> Result<RepOutcome<T>, SimError> {
    let load = Load::initial(p.workflow);
    let ga = run_cfg.ga.clone().with_seed(seed::derive(rep_seed, "ga", 0));
    let plan = initial_plan(p, &load, &ga)?;
    let mut reports = BTreeMap::new();
    for &kind in run_cfg.schedulers {
        let sim = SimConfig {
            scheduler: kind,
            horizon: run_cfg.horizon,
            events: events.to_vec(),
            ga: run_cfg.ga.clone(),
            greedy: run_cfg.greedy,
            seed: rep_seed,
        };
        reports.insert(kind, run(p, &plan, &load, &sim)?);
    }
    let lower_bound = lower_bound_cost(p, run_cfg.horizon, &load, events)?.total;
    Ok(RepOutcome {
        rep,
        reports,
        lower_bound,
    })
}

pub fn run_rep<T: Scalar>(
    p: &Problem<'_, T>,
    cfg: &ExperimentConfig,
    direction: Direction,
    rep: usize,
) -> Result<RepOutcome<T>, SimError> {
    let w = p.workflow;
    let rep_seed = cfg.rep_seed(rep);
    let events = generate_events(w, &w.default_source_units(), &cfg.event_spec(direction), seed::derive(rep_seed, "events", 0));
    let run_cfg = PairedRun {
        schedulers: &cfg.schedulers,
        horizon: cfg.horizon,
        ga: &cfg.ga,
        greedy: cfg.greedy,
    };
    run_paired(p, &run_cfg, &events, rep, rep_seed)
}

/// Means over the reps of one (workflow, direction) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub workflow: String,
    pub structure: Structure,
    pub size: Size,
    pub direction: Direction,
    pub reps: usize,
    pub mean_total: BTreeMap<SchedulerKind, f64>,
    pub mean_lower_bound: f64,
    /// Mean plan changes per event.
    pub mean_changes_per_event: BTreeMap<SchedulerKind, f64>,
    /// Per rep and event: `(adaptive, ga-replan)` change counts.
    pub paired_changes: Vec<(usize, usize)>,
}

fn summarise<T: Scalar>(
    w: &StreamWorkflow<T>,
    structure: Structure,
    size: Size,
    direction: Direction,
    outcomes: &[RepOutcome<T>],
) -> CellSummary {
    let n = outcomes.len().max(1) as f64;
    let mut mean_total = BTreeMap::new();
    let mut mean_changes = BTreeMap::new();
    for o in outcomes {
        for (&k, r) in &o.reports {
            *mean_total.entry(k).or_insert(0.0) += r.totals.total.as_f64() / n;
            let per_event = r.total_changes() as f64 / r.events.len().max(1) as f64;
            *mean_changes.entry(k).or_insert(0.0) += per_event / n;
        }
    }
    let mut paired = Vec::new();
    for o in outcomes {
        if let (Some(a), Some(g)) = (o.reports.get(&SchedulerKind::Adaptive), o.reports.get(&SchedulerKind::GaReplan)) {
            paired.extend(a.events.iter().zip(&g.events).map(|(x, y)| (x.changes, y.changes)));
        }
    }
    CellSummary {
        workflow: w.name().to_string(),
        structure,
        size,
        direction,
        reps: outcomes.len(),
        mean_total,
        mean_lower_bound: outcomes.iter().map(|o| o.lower_bound.total.as_f64()).sum::<f64>() / n,
        mean_changes_per_event: mean_changes,
        paired_changes: paired,
    }
}

/// Full outcome of one grid cell.
pub struct Cell<T> {
    pub workflow: StreamWorkflow<T>,
    pub summary: CellSummary,
    pub outcomes: Vec<RepOutcome<T>>,
}

/// Runs one cell, parallel over reps.
pub fn run_cell<T: Scalar>(
    catalog: &CloudCatalog<T>,
    cfg: &ExperimentConfig,
    structure: Structure,
    size: Size,
    direction: Direction,
) -> Result<Cell<T>, SimError> {
    let w = cell_workflow(structure, size, direction, catalog, cfg.workflow_seed);
    let p = Problem::new(&w, catalog).map_err(|e| SimError::Config(e.to_string()))?;
    let outcomes = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_rep(&p, cfg, direction, rep))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarise(&w, structure, size, direction, &outcomes);
    Ok(Cell {
        workflow: w,
        summary,
        outcomes,
    })
}

/// Runs the whole grid; cells come back in (structure, size, direction)
/// order.
pub fn run_grid<T: Scalar>(catalog: &CloudCatalog<T>, cfg: &ExperimentConfig) -> Result<Vec<CellSummary>, SimError> {
    let mut cells = Vec::new();
    for &st in &cfg.structures {
        for &sz in &cfg.sizes {
            for &d in &cfg.directions {
                cells.push((st, sz, d));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(st, sz, d)| run_cell(catalog, cfg, st, sz, d).map(|c| c.summary))
        .collect()
}

/// One row per cell: mean totals, the lower bound and mean changes per
/// event of every scheduler that ran.
pub fn grid_csv(cells: &[CellSummary]) -> String {
    let kinds: Vec<SchedulerKind> = cells.first().map(|c| c.mean_total.keys().copied().collect()).unwrap_or_default();
    let mut out = String::from("workflow,direction,lower_bound");
    for k in &kinds {
        out.push_str(&format!(",total_{}", k.as_str()));
    }
    for k in &kinds {
        out.push_str(&format!(",changes_{}", k.as_str()));
    }
    out.push('\n');
    for c in cells {
        out.push_str(&format!("{},{},{}", c.workflow, c.direction, c.mean_lower_bound));
        for k in &kinds {
            out.push_str(&format!(",{}", c.mean_total[k]));
        }
        for k in &kinds {
            out.push_str(&format!(",{}", c.mean_changes_per_event[k]));
        }
        out.push('\n');
    }
    out
}
