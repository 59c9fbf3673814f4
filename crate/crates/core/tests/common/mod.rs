//! Random workflows and plans shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamflow::cloud::{CloudIdx, OfferRef};
use streamflow::plan::SchedulingPlan;
use streamflow::problem::Problem;
use streamflow::workflow::{DataMode, Edge, ExternalSource, Mobility, Service, WorkflowDocument};
use streamflow::{Catalog, Workflow};

pub fn catalog() -> Catalog {
    Catalog::default_catalog()
}

fn outgoing(rng: &mut ChaCha8Rng, from: &str, targets: &[usize], edges: &mut Vec<Edge<f64>>) {
    if targets.is_empty() {
        return;
    }
    let replica = targets.len() == 1 || rng.gen_bool(0.5);
    let mut left = 1.0;
    for (k, &t) in targets.iter().enumerate() {
        let percent = if replica {
            1.0
        } else if k + 1 == targets.len() {
            left
        } else {
            // Multiples of 1/8 keep the shares exact.
            let share = (rng.gen_range(1..=4) as f64 / 8.0).min(left / 2.0);
            left -= share;
            share
        };
        edges.push(Edge {
            from: from.into(),
            to: format!("s{t}"),
            percent,
            mode: if replica { DataMode::Replica } else { DataMode::Partition },
        });
    }
}

/// A random valid workflow with `1..=max_services` services over the
/// default catalog's clouds. Unit rates are powers of two so capacities
/// sum exactly.
pub fn random_workflow(seed: u64, max_services: usize) -> Workflow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clouds = catalog().cloud_ids();
    let n = rng.gen_range(1..=max_services);
    let unit = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let services: Vec<Service<f64>> = (0..n)
        .map(|i| {
            let unmovable = rng.gen_bool(0.4);
            Service {
                id: format!("s{i}"),
                mi_per_mb: rng.gen_range(1348.0..2674.0_f64).round(),
                gamma: rng.gen_range(1..=50) as f64 / 100.0,
                mobility: if unmovable { Mobility::Unmovable } else { Mobility::Movable },
                pinned_cloud: unmovable.then(|| clouds[rng.gen_range(0..clouds.len())].clone()),
            }
        })
        .collect();
    let mut edges = Vec::new();
    let mut has_parent = vec![false; n];
    for i in 0..n {
        let mut kids: Vec<usize> = (i + 1..n).filter(|_| rng.gen_bool(0.3)).collect();
        kids.truncate(3);
        for &k in &kids {
            has_parent[k] = true;
        }
        outgoing(&mut rng, &format!("s{i}"), &kids, &mut edges);
    }
    let roots: Vec<usize> = (0..n).filter(|&i| !has_parent[i]).collect();
    let source_count = rng.gen_range(1..=roots.len().min(3));
    let mut sources = Vec::new();
    let mut buckets = vec![Vec::new(); source_count];
    for (k, &r) in roots.iter().enumerate() {
        buckets[k % source_count].push(r);
    }
    for (k, targets) in buckets.iter().enumerate() {
        let id = format!("ex_{k}");
        sources.push(ExternalSource {
            id: id.clone(),
            rate_units: rng.gen_range(2..=12),
            location_cloud: clouds[rng.gen_range(0..clouds.len())].clone(),
        });
        outgoing(&mut rng, &id, targets, &mut edges);
    }
    let doc = WorkflowDocument {
        format_version: 1,
        name: format!("random_{seed}"),
        min_dp_unit: 1.0,
        unit_dp_rate: unit,
        services,
        sources,
        edges,
    };
    Workflow::try_from(doc).expect("generated workflow is valid")
}

/// A random plan: placements respect pins, and each service holds a few
/// eligible instances, some still booting at `now`.
pub fn random_plan(p: &Problem<'_, f64>, seed: u64, now: u64) -> SchedulingPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placements: Vec<CloudIdx> = p
        .workflow
        .service_ids()
        .map(|s| p.pinned(s).unwrap_or_else(|| *p.candidate_clouds(s).choose(&mut rng).unwrap()))
        .collect();
    let mut plan = SchedulingPlan::new(placements);
    for s in p.workflow.service_ids() {
        let offers: Vec<OfferRef> = p.eligible_offers(s, plan.placement(s));
        for _ in 0..rng.gen_range(0..4) {
            let o = *offers.choose(&mut rng).unwrap();
            let boot = if rng.gen_bool(0.2) { now + 1 + rng.gen_range(0..50) } else { 0 };
            plan.provision(s, o, 0, boot);
        }
    }
    plan
}

/// Literal feasibility check: per service, add up the rate of every usable
/// VM and compare with the service's input.
pub fn alg1_feasible(p: &Problem<'_, f64>, plan: &SchedulingPlan, rates: &streamflow::Rates, now: u64) -> bool {
    let w = p.workflow;
    for s in w.service_ids() {
        let mut total_dp_rate = 0.0;
        for vm in plan.instances(s).iter().filter(|i| i.is_ready(now)) {
            total_dp_rate += streamflow::cost::vm_rate(w, s, p.catalog.offer(vm.offer)).unwrap();
        }
        if total_dp_rate < rates.input(s) {
            return false;
        }
    }
    true
}
