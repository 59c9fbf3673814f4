//! Random-immigrants genetic algorithm for the initial placement and for
//! full re-plans.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CloudIdx, OfferRef};
use crate::cost::{exec_cost_per_second, transfer_cost_per_second, Load};
use crate::plan::{PlanDelta, Release, SchedulingPlan};
use crate::problem::Problem;
use crate::scalar::Scalar;
use crate::workflow::{Mobility, ServiceIdx};

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("unschedulable service `{0}`: no cloud offers a VM with enough MIPS")]
    Unschedulable(String),
    #[error("invalid GA parameters: {0}")]
    InvalidParams(String),
}

/// One service's placement cloud and VM multiset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gene {
    pub cloud: CloudIdx,
    /// Sorted offers; the order carries no meaning.
    pub offers: Vec<OfferRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: Vec<Gene>,
}

impl Chromosome {
    pub fn placements(&self) -> Vec<CloudIdx> {
        self.genes.iter().map(|g| g.cloud).collect()
    }

    /// Decodes into a plan whose instances are ready at `now + boot`.
    pub fn to_plan_at<T: Scalar>(&self, p: &Problem<'_, T>, now: u64, booting: bool) -> SchedulingPlan {
        let mut plan = SchedulingPlan::new(self.placements());
        for (s, g) in self.genes.iter().enumerate() {
            for &o in &g.offers {
                let boot = if booting { u64::from(p.catalog.offer(o).boot_time) } else { 0 };
                plan.provision(ServiceIdx(s), o, now, boot);
            }
        }
        plan
    }

    /// Decodes into a plan whose instances are all ready at time 0.
    pub fn to_plan<T: Scalar>(&self, p: &Problem<'_, T>) -> SchedulingPlan {
        self.to_plan_at(p, 0, false)
    }

    /// Pins, offer eligibility, cloud membership and capacity coverage.
    pub fn is_valid<T: Scalar>(&self, p: &Problem<'_, T>, load: &Load<T>) -> bool {
        self.genes.len() == p.workflow.service_count()
            && self.genes.iter().enumerate().all(|(i, g)| {
                let s = ServiceIdx(i);
                p.pinned(s).map_or(true, |c| c == g.cloud)
                    && g.offers.iter().all(|&o| o.cloud == g.cloud && p.is_eligible(s, o))
                    && g.offers.iter().map(|&o| p.offer_units(s, o)).sum::<u64>()
                        >= p.required_units(load.rates.input(s))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub generation_limit: usize,
    pub elitism_count: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub immigrant_count: usize,
    pub rng_seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 50,
            generation_limit: 50,
            elitism_count: 1,
            crossover_prob: 0.8,
            mutation_prob: 0.3,
            immigrant_count: 5,
            rng_seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: &str| Err(GaError::InvalidParams(m.into()));
        if !(0.0..=1.0).contains(&self.crossover_prob) || !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.population_size == 0 {
            return bad("population_size must be positive");
        }
        if self.elitism_count < 1 || self.elitism_count > self.population_size {
            return bad("elitism_count must be in 1..=population_size");
        }
        if self.immigrant_count + self.elitism_count > self.population_size {
            return bad("immigrant_count + elitism_count exceeds population_size");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Per-service candidate clouds with their eligible offers.
struct Choices {
    per_service: Vec<Vec<(CloudIdx, Vec<OfferRef>)>>,
    demand: Vec<u64>,
    movable: Vec<bool>,
}

impl Choices {
    fn new<T: Scalar>(p: &Problem<'_, T>, load: &Load<T>) -> Result<Self, GaError> {
        let w = p.workflow;
        let mut per_service = Vec::with_capacity(w.service_count());
        for s in w.service_ids() {
            let opts: Vec<_> = p
                .candidate_clouds(s)
                .into_iter()
                .map(|c| (c, p.eligible_offers(s, c)))
                .filter(|(_, o)| !o.is_empty())
                .collect();
            if opts.is_empty() {
                return Err(GaError::Unschedulable(w.service(s).id.clone()));
            }
            per_service.push(opts);
        }
        Ok(Self {
            per_service,
            demand: w.service_ids().map(|s| p.required_units(load.rates.input(s))).collect(),
            movable: w.services().iter().map(|s| s.mobility == Mobility::Movable).collect(),
        })
    }

    fn fill<T: Scalar>(&self, p: &Problem<'_, T>, s: usize, choice: usize, rng: &mut ChaCha8Rng) -> Gene {
        let (cloud, offers) = &self.per_service[s][choice];
        let mut picked = Vec::new();
        let mut units = 0;
        while units < self.demand[s] {
            let o = *offers.choose(rng).expect("non-empty");
            units += p.offer_units(ServiceIdx(s), o);
            picked.push(o);
        }
        picked.sort();
        Gene { cloud: *cloud, offers: picked }
    }

    fn random_gene<T: Scalar>(&self, p: &Problem<'_, T>, s: usize, rng: &mut ChaCha8Rng) -> Gene {
        let choice = rng.gen_range(0..self.per_service[s].len());
        self.fill(p, s, choice, rng)
    }

    fn rebuild<T: Scalar>(&self, p: &Problem<'_, T>, s: usize, cloud: CloudIdx, rng: &mut ChaCha8Rng) -> Gene {
        let choice = self.per_service[s]
            .iter()
            .position(|(c, _)| *c == cloud)
            .expect("gene cloud is a candidate");
        self.fill(p, s, choice, rng)
    }

    fn random<T: Scalar>(&self, p: &Problem<'_, T>, rng: &mut ChaCha8Rng) -> Chromosome {
        Chromosome {
            genes: (0..self.per_service.len()).map(|s| self.random_gene(p, s, rng)).collect(),
        }
    }
}

/// A random chromosome: movable services get a uniformly random cloud, and
/// each VM multiset is filled with uniformly drawn eligible offers until it
/// covers the service's input.
pub fn random_chromosome<T: Scalar>(p: &Problem<'_, T>, load: &Load<T>, seed: u64) -> Result<Chromosome, GaError> {
    let choices = Choices::new(p, load)?;
    Ok(choices.random(p, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Execution plus transfer cost per second of the decoded plan.
pub fn fitness<T: Scalar>(c: &Chromosome, p: &Problem<'_, T>, load: &Load<T>) -> T {
    let exec: T = c
        .genes
        .iter()
        .flat_map(|g| g.offers.iter())
        .map(|&o| p.catalog.offer(o).price)
        .sum();
    exec + transfer_cost_per_second(p, &c.placements(), &load.rates, &load.source_units)
}

/// Same value as [`fitness`], computed through a decoded plan.
pub fn plan_fitness<T: Scalar>(plan: &SchedulingPlan, p: &Problem<'_, T>, load: &Load<T>) -> T {
    exec_cost_per_second(p.catalog, plan) + transfer_cost_per_second(p, plan.placements(), &load.rates, &load.source_units)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaResult<T> {
    pub best: Chromosome,
    pub fitness: T,
    /// Best fitness of the initial population, then after each generation.
    pub trace: Vec<T>,
}

#[derive(Clone)]
struct Scored<T> {
    c: Chromosome,
    f: T,
}

fn by_fitness<T: Scalar>(a: &Scored<T>, b: &Scored<T>) -> Ordering {
    a.f.partial_cmp(&b.f).unwrap_or(Ordering::Equal)
}

fn score<T: Scalar>(pop: Vec<Chromosome>, p: &Problem<'_, T>, load: &Load<T>) -> Vec<Scored<T>> {
    pop.into_par_iter()
        .map(|c| {
            let f = fitness(&c, p, load);
            Scored { c, f }
        })
        .collect()
}

/// Roulette wheel over weights `1 / (1 + fitness)` with binary search on the
/// cumulative array.
fn roulette(cumulative: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let r = rng.gen::<f64>() * total;
    cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1)
}

pub fn evolve<T: Scalar>(p: &Problem<'_, T>, load: &Load<T>, params: &GaParams) -> Result<GaResult<T>, GaError> {
    params.validate()?;
    let choices = Choices::new(p, load)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let n = params.population_size;
    let genes = p.workflow.service_count();

    let initial = (0..n).map(|_| choices.random(p, &mut rng)).collect();
    let mut pop = score(initial, p, load);
    pop.sort_by(by_fitness);
    let mut trace = vec![pop[0].f];

    for _ in 0..params.generation_limit {
        let elite: Vec<_> = pop[..params.elitism_count].to_vec();

        let immigrants: Vec<_> = (0..params.immigrant_count).map(|_| choices.random(p, &mut rng)).collect();
        let scored = score(immigrants, p, load);
        for (k, im) in scored.into_iter().enumerate() {
            pop[n - 1 - k] = im;
        }

        let mut acc = 0.0;
        let cumulative: Vec<f64> = pop
            .iter()
            .map(|s| {
                acc += 1.0 / (1.0 + s.f.as_f64().max(0.0));
                acc
            })
            .collect();

        let mut offspring = Vec::with_capacity(n);
        while offspring.len() < n - params.elitism_count {
            let mut a = pop[roulette(&cumulative, &mut rng)].c.clone();
            let mut b = pop[roulette(&cumulative, &mut rng)].c.clone();
            if genes > 1 && rng.gen::<f64>() < params.crossover_prob {
                let cut = rng.gen_range(1..genes);
                a.genes[cut..].swap_with_slice(&mut b.genes[cut..]);
            }
            for c in [&mut a, &mut b] {
                if rng.gen::<f64>() < params.mutation_prob {
                    let s = rng.gen_range(0..genes);
                    let redraw = choices.movable[s] && rng.gen_bool(0.5);
                    c.genes[s] = if redraw {
                        choices.random_gene(p, s, &mut rng)
                    } else {
                        choices.rebuild(p, s, c.genes[s].cloud, &mut rng)
                    };
                }
            }
            offspring.push(a);
            if offspring.len() < n - params.elitism_count {
                offspring.push(b);
            }
        }

        let mut next = elite;
        next.extend(score(offspring, p, load));
        next.sort_by(by_fitness);
        pop = next;
        trace.push(pop[0].f);
    }

    let best = pop.swap_remove(0);
    Ok(GaResult {
        best: best.c,
        fitness: best.f,
        trace,
    })
}

/// Delta turning `plan` into `target`. A service that keeps its cloud
/// keeps the instances whose offers `target` still lists; a service that
/// moves replaces all of them. Releases wait for the replacements.
pub fn replan_delta<T: Scalar>(p: &Problem<'_, T>, plan: &SchedulingPlan, target: &Chromosome) -> PlanDelta {
    let mut delta = PlanDelta {
        release: Release::WhenReplacementsReady,
        ..PlanDelta::default()
    };
    for s in p.workflow.service_ids() {
        let gene = &target.genes[s.0];
        let held = plan.instances(s);
        if gene.cloud != plan.placement(s) {
            delta.relocate.insert(s, gene.cloud);
            delta.add_deprovision(s, held.iter().map(|i| i.id).collect());
            delta.add_provision(s, gene.offers.clone());
            continue;
        }
        let mut unmatched: Vec<_> = held.iter().collect();
        let mut add = Vec::new();
        for &o in &gene.offers {
            match unmatched.iter().position(|i| i.offer == o) {
                Some(k) => {
                    unmatched.remove(k);
                }
                None => add.push(o),
            }
        }
        delta.add_provision(s, add);
        delta.add_deprovision(s, unmatched.into_iter().map(|i| i.id).collect());
    }
    delta
}
