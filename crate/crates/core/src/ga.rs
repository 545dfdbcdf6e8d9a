//! Layer-to-core allocation search with an NSGA-II style genetic algorithm.
//!
//! A genome holds one core choice per layer that has more than one candidate
//! core; layers with a single candidate are fixed. Offspring come from binary
//! tournaments, two-point crossover and a bit-flip or swap mutation. Parents
//! and offspring compete together for the next population, ranked by
//! non-dominated sorting and crowding distance.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::arch::AcceleratorSpec;
use crate::cost::CostTable;
use crate::depgraph::CnGraph;
use crate::schedule::{schedule, Allocation, Priority, ScheduleError, ScheduleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Edp,
    Latency,
    Energy,
}

impl Objective {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "edp" => Some(Objective::Edp),
            "latency" => Some(Objective::Latency),
            "energy" => Some(Objective::Energy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Edp => "edp",
            Objective::Latency => "latency",
            Objective::Energy => "energy",
        }
    }

    /// Scalar score from a (latency, energy, ...) objective vector.
    pub fn score(self, objs: &[f64]) -> f64 {
        match self {
            Objective::Edp => objs[0] * objs[1],
            Objective::Latency => objs[0],
            Objective::Energy => objs[1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// generations without improvement of the scalar objective before stopping
    pub patience: usize,
    pub seed: u64,
    pub objective: Objective,
    pub priority: Priority,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 32,
            generations: 64,
            crossover_prob: 0.3,
            mutation_prob: 0.7,
            patience: 16,
            seed: 0,
            objective: Objective::Edp,
            priority: Priority::Latency,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("layer {0} has no compatible core")]
    NoCandidate(usize),
    #[error("population size must be at least 2")]
    Population,
    #[error("no allocation can be scheduled: {0}")]
    Infeasible(ScheduleError),
}

/// Which core each gene may take, and the layers pinned to a single core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenomeSpace {
    pub gene_layers: Vec<usize>,
    pub choices: Vec<Vec<usize>>,
    pub fixed: BTreeMap<usize, usize>,
}

impl GenomeSpace {
    pub fn new(graph: &CnGraph, accel: &AcceleratorSpec) -> Result<Self, GaError> {
        let mut space = GenomeSpace { gene_layers: Vec::new(), choices: Vec::new(), fixed: BTreeMap::new() };
        for layer in &graph.workload.layers {
            let cands = accel.candidate_cores(layer);
            match cands.len() {
                0 => return Err(GaError::NoCandidate(layer.id)),
                1 => {
                    space.fixed.insert(layer.id, cands[0]);
                }
                _ => {
                    space.gene_layers.push(layer.id);
                    space.choices.push(cands);
                }
            }
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.gene_layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gene_layers.is_empty()
    }

    /// Number of distinct genomes, saturating.
    pub fn size(&self) -> u128 {
        self.choices.iter().fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128))
    }

    pub fn is_valid(&self, genome: &[usize]) -> bool {
        genome.len() == self.len() && genome.iter().zip(&self.choices).all(|(g, c)| c.contains(g))
    }

    pub fn decode(&self, genome: &[usize]) -> Allocation {
        let mut a = Allocation(self.fixed.clone());
        a.0.extend(self.gene_layers.iter().copied().zip(genome.iter().copied()));
        a
    }

    pub fn encode(&self, alloc: &Allocation) -> Option<Vec<usize>> {
        let g: Option<Vec<usize>> = self.gene_layers.iter().map(|l| alloc.core_of(*l)).collect();
        g.filter(|g| self.is_valid(g))
    }

    pub fn random(&self, rng: &mut impl Rng) -> Vec<usize> {
        self.choices.iter().map(|c| *c.choose(rng).expect("non-empty")).collect()
    }

    /// Every genome in lexicographic order of choice indices.
    pub fn enumerate(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for c in &self.choices {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    c.iter().map(move |&core| {
                        let mut g = prefix.clone();
                        g.push(core);
                        g
                    })
                })
                .collect();
        }
        out
    }
}

/// Layers assigned round-robin over the non-SIMD candidates in topological order.
pub fn ping_pong_allocation(graph: &CnGraph, accel: &AcceleratorSpec) -> Allocation {
    let mut next = 0usize;
    let mut a = Allocation::default();
    for layer in &graph.workload.layers {
        let cands = accel.candidate_cores(layer);
        let compute: Vec<usize> = cands.iter().copied().filter(|&c| !accel.core(c).is_simd).collect();
        let core = if compute.is_empty() {
            cands.first().copied()
        } else {
            let c = compute[next % compute.len()];
            next += 1;
            Some(c)
        };
        if let Some(core) = core {
            a.0.insert(layer.id, core);
        }
    }
    a
}

/// Each layer on the core with the best MAC-weighted spatial utilization.
pub fn best_utilization_allocation(graph: &CnGraph, accel: &AcceleratorSpec, costs: &CostTable) -> Allocation {
    let mut a = Allocation::default();
    for lp in &graph.layers {
        let layer = graph.layer(lp.layer_id);
        let mut best: Option<(f64, u64, usize)> = None;
        for core in accel.candidate_cores(layer) {
            let (mut util, mut macs, mut cycles) = (0.0, 0u64, 0u64);
            for &cn in &lp.cns {
                if let Some(e) = costs.lookup(cn, core, true) {
                    let m = graph.nodes[cn].macs.max(1);
                    util += e.spatial_utilization * m as f64;
                    macs += m;
                    cycles += e.cycles;
                }
            }
            let util = if macs == 0 { 0.0 } else { util / macs as f64 };
            let better = match best {
                None => true,
                Some((bu, bc, _)) => util > bu + 1e-12 || ((util - bu).abs() <= 1e-12 && cycles < bc),
            };
            if better {
                best = Some((util, cycles, core));
            }
        }
        if let Some((_, _, core)) = best {
            a.0.insert(layer.id, core);
        }
    }
    a
}

/// Two-point crossover: the genes between the cut points are exchanged.
pub fn crossover(a: &[usize], b: &[usize], rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut x, mut y) = (a.to_vec(), b.to_vec());
    if a.len() < 2 {
        return (x, y);
    }
    let mut i = rng.gen_range(0..a.len());
    let mut j = rng.gen_range(0..a.len());
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    for k in i..=j {
        std::mem::swap(&mut x[k], &mut y[k]);
    }
    (x, y)
}

/// Bit-flip or swap, chosen with equal probability. A swap only exchanges
/// genes whose cores are valid at both positions.
pub fn mutate(genome: &mut [usize], space: &GenomeSpace, rng: &mut impl Rng) {
    if genome.is_empty() {
        return;
    }
    if rng.gen_bool(0.5) || genome.len() < 2 {
        let i = rng.gen_range(0..genome.len());
        let others: Vec<usize> = space.choices[i].iter().copied().filter(|&c| c != genome[i]).collect();
        if let Some(&c) = others.choose(rng) {
            genome[i] = c;
        }
    } else {
        for _ in 0..8 {
            let i = rng.gen_range(0..genome.len());
            let j = rng.gen_range(0..genome.len());
            if i != j
                && genome[i] != genome[j]
                && space.choices[i].contains(&genome[j])
                && space.choices[j].contains(&genome[i])
            {
                genome.swap(i, j);
                break;
            }
        }
    }
}

/// `a` is no worse everywhere and better somewhere (minimization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Fronts of indices into `objs`, best first.
pub fn non_dominated_sort(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front`, in the same order.
pub fn crowding_distance(front: &[usize], objs: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    #[allow(clippy::needless_range_loop)]
    for m in 0..objs[front[0]].len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objs[front[a]][m].total_cmp(&objs[front[b]][m]).then(a.cmp(&b)));
        let lo = objs[front[order[0]]][m];
        let hi = objs[front[order[n - 1]]][m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n.saturating_sub(1) {
                let gap = objs[front[order[w + 1]]][m] - objs[front[order[w - 1]]][m];
                dist[order[w]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Picks `k` indices: whole fronts while they fit, then the most spread-out
/// members of the first front that does not.
pub fn nsga2_select(objs: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    for front in non_dominated_sort(objs) {
        if chosen.len() + front.len() <= k {
            chosen.extend(front);
            continue;
        }
        let dist = crowding_distance(&front, objs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(front[a].cmp(&front[b])));
        chosen.extend(order.into_iter().take(k - chosen.len()).map(|i| front[i]));
        break;
    }
    chosen
}

/// rank and crowding for every member of a population
fn rank_and_crowding(objs: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; objs.len()];
    let mut crowd = vec![0.0; objs.len()];
    for (r, front) in non_dominated_sort(objs).into_iter().enumerate() {
        let d = crowding_distance(&front, objs);
        for (i, &m) in front.iter().enumerate() {
            rank[m] = r;
            crowd[m] = d[i];
        }
    }
    (rank, crowd)
}

#[derive(Debug, Clone)]
pub struct FrontMember {
    pub genome: Vec<usize>,
    pub allocation: Allocation,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    /// non-dominated among every evaluated genome, sorted by objectives
    pub front: Vec<FrontMember>,
    pub best: FrontMember,
    pub generations_run: usize,
    pub evaluations: usize,
}

impl GaOutcome {
    pub fn front_json(&self, objective_names: &[&str]) -> Value {
        let members: Vec<Value> = self
            .front
            .iter()
            .map(|m| {
                let objs: serde_json::Map<String, Value> = objective_names
                    .iter()
                    .zip(&m.objectives)
                    .map(|(n, v)| (n.to_string(), json!(v)))
                    .collect();
                json!({"allocation": m.allocation.to_json(), "objectives": objs})
            })
            .collect();
        json!({
            "best": self.best.allocation.to_json(),
            "generations": self.generations_run,
            "evaluations": self.evaluations,
            "front": members,
        })
    }
}

/// Runs the search with an arbitrary evaluator returning an objective
/// vector to minimize, or `None` for an infeasible genome.
pub fn optimize<F>(space: &GenomeSpace, seeds: &[Vec<usize>], cfg: &GaConfig, eval: F) -> Option<GaOutcome>
where
    F: Fn(&[usize]) -> Option<Vec<f64>> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache: HashMap<Vec<usize>, Option<Vec<f64>>> = HashMap::new();
    let mut order: Vec<Vec<usize>> = Vec::new();
    let pop_size = cfg.population.max(2);

    let mut population: Vec<Vec<usize>> = Vec::new();
    let mut seen = HashSet::new();
    for s in seeds.iter().filter(|s| space.is_valid(s)) {
        if seen.insert(s.clone()) {
            population.push(s.clone());
        }
    }
    let mut attempts = 0;
    while population.len() < pop_size && (population.len() as u128) < space.size() && attempts < pop_size * 64 {
        let g = space.random(&mut rng);
        if seen.insert(g.clone()) {
            population.push(g);
        }
        attempts += 1;
    }
    population.truncate(pop_size);
    evaluate_all(&population, &mut cache, &mut order, &eval);

    let feasible = |g: &Vec<usize>, cache: &HashMap<Vec<usize>, Option<Vec<f64>>>| cache[g].is_some();
    population.retain(|g| feasible(g, &cache));
    if population.is_empty() {
        // fall back to random draws until something schedules
        for _ in 0..pop_size * 4 {
            let g = space.random(&mut rng);
            evaluate_all(std::slice::from_ref(&g), &mut cache, &mut order, &eval);
            if feasible(&g, &cache) {
                population.push(g);
                break;
            }
        }
        if population.is_empty() {
            return None;
        }
    }

    let score = |g: &Vec<usize>, cache: &HashMap<Vec<usize>, Option<Vec<f64>>>| {
        cfg.objective.score(cache[g].as_ref().expect("feasible"))
    };
    let best_of = |pop: &[Vec<usize>], cache: &HashMap<Vec<usize>, Option<Vec<f64>>>| {
        pop.iter()
            .min_by(|a, b| score(a, cache).total_cmp(&score(b, cache)).then(a.cmp(b)))
            .cloned()
            .expect("non-empty")
    };
    let mut best = best_of(&population, &cache);
    let mut stale = 0;
    let mut generations_run = 0;

    for gen in 0..cfg.generations {
        if space.is_empty() || (order.len() as u128) >= space.size() {
            break;
        }
        generations_run = gen + 1;
        let objs: Vec<Vec<f64>> = population.iter().map(|g| cache[g].clone().expect("feasible")).collect();
        let (rank, crowd) = rank_and_crowding(&objs);
        let tournament = |rng: &mut ChaCha8Rng| {
            let a = rng.gen_range(0..population.len());
            let b = rng.gen_range(0..population.len());
            let a_better = rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] >= crowd[b]);
            if a_better { a } else { b }
        };
        let mut offspring = Vec::with_capacity(pop_size);
        while offspring.len() < pop_size {
            let pa = &population[tournament(&mut rng)];
            let pb = &population[tournament(&mut rng)];
            let (mut x, mut y) = if rng.gen_bool(cfg.crossover_prob) {
                crossover(pa, pb, &mut rng)
            } else {
                (pa.clone(), pb.clone())
            };
            for child in [&mut x, &mut y] {
                if rng.gen_bool(cfg.mutation_prob) {
                    mutate(child, space, &mut rng);
                }
            }
            offspring.push(x);
            offspring.push(y);
        }
        offspring.truncate(pop_size);
        evaluate_all(&offspring, &mut cache, &mut order, &eval);

        let mut pool: Vec<Vec<usize>> = Vec::new();
        let mut in_pool = HashSet::new();
        for g in population.iter().chain(offspring.iter()) {
            if feasible(g, &cache) && in_pool.insert(g.clone()) {
                pool.push(g.clone());
            }
        }
        let pool_objs: Vec<Vec<f64>> = pool.iter().map(|g| cache[g].clone().expect("feasible")).collect();
        let mut next: Vec<Vec<usize>> = nsga2_select(&pool_objs, pop_size).into_iter().map(|i| pool[i].clone()).collect();
        let gen_best = best_of(&pool, &cache);
        if !next.contains(&gen_best) {
            let last = next.len() - 1;
            next[last] = gen_best.clone();
        }
        population = next;

        if score(&gen_best, &cache) < score(&best, &cache) {
            best = gen_best;
            stale = 0;
        } else {
            stale += 1;
        }
        log::info!(
            "generation {}: best {} = {:.6e}, {} evaluated",
            gen,
            cfg.objective.name(),
            score(&best, &cache),
            order.len()
        );
        if stale >= cfg.patience {
            break;
        }
    }

    let evaluated: Vec<&Vec<usize>> = order.iter().filter(|g| feasible(g, &cache)).collect();
    let objs: Vec<Vec<f64>> = evaluated.iter().map(|g| cache[*g].clone().expect("feasible")).collect();
    let first = non_dominated_sort(&objs).into_iter().next().unwrap_or_default();
    let member = |g: &Vec<usize>| FrontMember {
        genome: g.clone(),
        allocation: space.decode(g),
        objectives: cache[g].clone().expect("feasible"),
    };
    let mut front: Vec<FrontMember> = first.iter().map(|&i| member(evaluated[i])).collect();
    front.sort_by(|a, b| {
        a.objectives
            .iter()
            .zip(&b.objectives)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.genome.cmp(&b.genome))
    });
    Some(GaOutcome { best: member(&best), front, generations_run, evaluations: order.len() })
}

fn evaluate_all<F>(
    genomes: &[Vec<usize>],
    cache: &mut HashMap<Vec<usize>, Option<Vec<f64>>>,
    order: &mut Vec<Vec<usize>>,
    eval: &F,
) where
    F: Fn(&[usize]) -> Option<Vec<f64>> + Sync,
{
    let mut fresh: Vec<Vec<usize>> = Vec::new();
    for g in genomes {
        if !cache.contains_key(g) && !fresh.contains(g) {
            fresh.push(g.clone());
        }
    }
    #[cfg(feature = "parallel")]
    let results: Vec<Option<Vec<f64>>> = {
        use rayon::prelude::*;
        fresh.par_iter().map(|g| eval(g)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Option<Vec<f64>>> = fresh.iter().map(|g| eval(g)).collect();
    for (g, r) in fresh.into_iter().zip(results) {
        order.push(g.clone());
        cache.insert(g, r);
    }
}

/// Objective vector of a schedule: latency and energy, plus peak memory
/// when scheduling for memory.
pub fn schedule_objectives(r: &ScheduleResult, priority: Priority) -> Vec<f64> {
    let mut v = vec![r.latency as f64, r.total_energy()];
    if priority == Priority::Memory {
        v.push(r.peak_memory as f64);
    }
    v
}

pub fn objective_names(priority: Priority) -> &'static [&'static str] {
    match priority {
        Priority::Latency => &["latency", "energy"],
        Priority::Memory => &["latency", "energy", "peak_memory"],
    }
}

/// Searches allocations of `graph` onto `accel`, scheduling each candidate.
pub fn optimize_allocation(
    graph: &CnGraph,
    accel: &AcceleratorSpec,
    costs: &CostTable,
    cfg: &GaConfig,
) -> Result<GaOutcome, GaError> {
    if cfg.population < 2 {
        return Err(GaError::Population);
    }
    let space = GenomeSpace::new(graph, accel)?;
    let seeds: Vec<Vec<usize>> = [ping_pong_allocation(graph, accel), best_utilization_allocation(graph, accel, costs)]
        .iter()
        .filter_map(|a| space.encode(a))
        .collect();
    let eval = |g: &[usize]| {
        schedule(graph, &space.decode(g), accel, costs, cfg.priority)
            .ok()
            .map(|r| schedule_objectives(&r, cfg.priority))
    };
    optimize(&space, &seeds, cfg, eval).ok_or_else(|| {
        let err = schedule(graph, &space.decode(&space.random(&mut ChaCha8Rng::seed_from_u64(cfg.seed))), accel, costs, cfg.priority)
            .err()
            .unwrap_or(ScheduleError::Unallocated(usize::MAX));
        GaError::Infeasible(err)
    })
}
