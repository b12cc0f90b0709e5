//! One evolutionary epoch: correlation/complexity fitness, Pareto
//! dominance, tournament selection, generational breeding at the standard
//! mix, and island parallelism.
//!
//! Fitness is two-objective. Accuracy loss is `1 - R^2` of the best affine
//! fit of model outputs onto responses (equivalently one minus the squared
//! Pearson correlation), so any model whose output is an affine image of
//! the target scores perfectly; a later alignment step recovers the scale
//! and offset. Complexity is combined stack length. Neither objective is
//! collapsed into the other: selection works on the dominance order.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::genetics::{self, SpawnConfig};
use crate::model::StackModel;
use crate::rng::{derive_seed, rng_from_seed, stage, GeneticRng};
use crate::stats;

/// The two minimized objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessPair {
    /// `1 - R^2` in `[0, 1]`; models that evaluate invalid anywhere carry
    /// exactly 1.
    pub accuracy_loss: f64,
    /// Combined stack length.
    pub complexity: usize,
}

impl FitnessPair {
    /// Strict Pareto dominance: no worse in both objectives, better in at
    /// least one.
    pub fn dominates(&self, other: &FitnessPair) -> bool {
        self.accuracy_loss <= other.accuracy_loss
            && self.complexity <= other.complexity
            && (self.accuracy_loss < other.accuracy_loss || self.complexity < other.complexity)
    }
}

/// A model with its cached fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub model: StackModel,
    pub fitness: FitnessPair,
}

/// A scored generation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub models: Vec<Scored>,
    pub generation: u64,
}

impl Population {
    /// Index of the best model by (loss, complexity), ties to the earlier
    /// index.
    pub fn best_index(&self) -> Option<usize> {
        (0..self.models.len()).min_by(|&a, &b| {
            let fa = &self.models[a].fitness;
            let fb = &self.models[b].fitness;
            fa.accuracy_loss
                .total_cmp(&fb.accuracy_loss)
                .then(fa.complexity.cmp(&fb.complexity))
        })
    }

    pub fn best_loss(&self) -> f64 {
        self.best_index()
            .map_or(1.0, |i| self.models[i].fitness.accuracy_loss)
    }
}

/// Epoch parameters. The defaults are the standard settings: population
/// 300, breeding mix 79/11/10, 10% elitism, tournaments of 5, 20% epoch
/// seeding, 2-minute epochs on 4 islands.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub pop_size: usize,
    pub mutation_pct: u32,
    pub crossover_pct: u32,
    pub spawn_pct: u32,
    pub elitism_pct: u32,
    pub tournament_size: usize,
    pub selection_pct: u32,
    pub time_limit: Duration,
    pub islands: usize,
    /// Hard generation cap per island; `None` leaves the wall clock in
    /// charge.
    pub generation_limit: Option<u64>,
    /// Stop an island early once some model's loss falls below this.
    /// Matches the training-side solved tolerance so islands do not burn
    /// their budget after a perfect-on-train model exists.
    pub early_stop_loss: Option<f64>,
    pub spawn: SpawnConfig,
}

impl EvolutionConfig {
    pub fn new(spawn: SpawnConfig) -> Self {
        Self {
            pop_size: 300,
            mutation_pct: 79,
            crossover_pct: 11,
            spawn_pct: 10,
            elitism_pct: 10,
            tournament_size: 5,
            selection_pct: 20,
            time_limit: Duration::from_secs(120),
            islands: 4,
            generation_limit: None,
            early_stop_loss: Some(crate::model::SOLVE_TRAIN_LOSS),
            spawn,
        }
    }

    pub fn validate(&self) {
        assert!(self.pop_size >= 2, "population too small");
        assert!(self.islands >= 1, "need at least one island");
        assert!(self.tournament_size >= 1);
        assert_eq!(
            self.mutation_pct + self.crossover_pct + self.spawn_pct,
            100,
            "breeding percentages must sum to 100"
        );
    }
}

/// Scores one model: accuracy loss from the affine fit onto the responses,
/// complexity from the stacks. Any invalid evaluation or zero output
/// variance yields loss exactly 1.
pub fn score(model: &StackModel, train: &Dataset) -> FitnessPair {
    let responses: Vec<f64> = train.responses().collect();
    let mut scratch = Vec::new();
    score_with(model, train, &responses, &mut scratch)
}

fn score_with(
    model: &StackModel,
    train: &Dataset,
    responses: &[f64],
    scratch: &mut Vec<f64>,
) -> FitnessPair {
    let complexity = model.complexity();
    let mut outputs = Vec::with_capacity(train.len());
    for p in &train.points {
        match model.evaluate_with(&p.inputs, scratch) {
            Some(v) => outputs.push(v),
            None => {
                return FitnessPair {
                    accuracy_loss: 1.0,
                    complexity,
                }
            }
        }
    }
    FitnessPair {
        accuracy_loss: stats::affine_loss(&outputs, responses),
        complexity,
    }
}

fn score_batch(models: Vec<StackModel>, train: &Dataset) -> Vec<Scored> {
    let responses: Vec<f64> = train.responses().collect();
    let mut scratch = Vec::new();
    models
        .into_iter()
        .map(|model| {
            let fitness = score_with(&model, train, &responses, &mut scratch);
            Scored { model, fitness }
        })
        .collect()
}

/// Least-squares `(a, b)` mapping model outputs onto responses over the
/// training set; reported models are `a*m(x) + b`. Degenerate cases (an
/// invalid evaluation or zero output variance) fall back to `(0, mean)`.
pub fn align_model(model: &StackModel, train: &Dataset) -> (f64, f64) {
    let responses: Vec<f64> = train.responses().collect();
    let fallback = (0.0, stats::mean(&responses));
    let mut scratch = Vec::new();
    let mut outputs = Vec::with_capacity(train.len());
    for p in &train.points {
        match model.evaluate_with(&p.inputs, &mut scratch) {
            Some(v) => outputs.push(v),
            None => return fallback,
        }
    }
    stats::affine_fit(&outputs, &responses).unwrap_or(fallback)
}

/// Indices of all non-dominated entries, in input order. Ties (equal pairs)
/// are all kept. Runs as a sort-and-sweep rather than pairwise comparison.
pub fn pareto_front_indices(fits: &[FitnessPair]) -> Vec<usize> {
    if fits.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.sort_by(|&x, &y| {
        fits[x]
            .accuracy_loss
            .total_cmp(&fits[y].accuracy_loss)
            .then(fits[x].complexity.cmp(&fits[y].complexity))
    });
    let mut keep = vec![false; fits.len()];
    let mut best_prev_cx = usize::MAX; // min complexity among strictly smaller losses
    let mut g = 0;
    while g < order.len() {
        let loss = fits[order[g]].accuracy_loss;
        let mut h = g;
        let mut group_min_cx = usize::MAX;
        while h < order.len() && fits[order[h]].accuracy_loss == loss {
            group_min_cx = group_min_cx.min(fits[order[h]].complexity);
            h += 1;
        }
        if group_min_cx < best_prev_cx {
            for &idx in &order[g..h] {
                if fits[idx].complexity == group_min_cx {
                    keep[idx] = true;
                }
            }
            best_prev_cx = group_min_cx;
        }
        g = h;
    }
    (0..fits.len()).filter(|&i| keep[i]).collect()
}

/// Nondominated-sorting rank per entry: 0 for the Pareto front, 1 for the
/// front of the remainder, and so on.
pub fn nondominated_ranks(fits: &[FitnessPair]) -> Vec<usize> {
    let mut ranks = vec![usize::MAX; fits.len()];
    let mut remaining: Vec<usize> = (0..fits.len()).collect();
    let mut rank = 0;
    while !remaining.is_empty() {
        let sub: Vec<FitnessPair> = remaining.iter().map(|&i| fits[i]).collect();
        let front = pareto_front_indices(&sub);
        let mut in_front = vec![false; remaining.len()];
        for &f in &front {
            ranks[remaining[f]] = rank;
            in_front[f] = true;
        }
        remaining = remaining
            .iter()
            .enumerate()
            .filter(|&(pos, _)| !in_front[pos])
            .map(|(_, &i)| i)
            .collect();
        rank += 1;
    }
    ranks
}

/// Population indices ordered by distance from the Pareto front:
/// nondominated-sorting rank, then lower loss, then lower complexity, then
/// original index.
pub fn rank_order(pop: &Population) -> Vec<usize> {
    let fits: Vec<FitnessPair> = pop.models.iter().map(|s| s.fitness).collect();
    let ranks = nondominated_ranks(&fits);
    let mut order: Vec<usize> = (0..pop.models.len()).collect();
    order.sort_by(|&a, &b| {
        ranks[a]
            .cmp(&ranks[b])
            .then(fits[a].accuracy_loss.total_cmp(&fits[b].accuracy_loss))
            .then(fits[a].complexity.cmp(&fits[b].complexity))
            .then(a.cmp(&b))
    });
    order
}

/// Pareto tournament: samples `size` models uniformly (without replacement
/// when the population is large enough) and returns the indices of the
/// sample's entire Pareto front, so a tournament may produce several
/// winners.
pub fn tournament_select(pop: &Population, size: usize, rng: &mut GeneticRng) -> Vec<usize> {
    let n = pop.models.len();
    assert!(n > 0, "tournament on empty population");
    let sample: Vec<usize> = if n >= size {
        rand::seq::index::sample(rng, n, size).into_vec()
    } else {
        use rand::Rng;
        (0..size).map(|_| rng.gen_range(0..n)).collect()
    };
    let fits: Vec<FitnessPair> = sample.iter().map(|&i| pop.models[i].fitness).collect();
    pareto_front_indices(&fits)
        .into_iter()
        .map(|pos| sample[pos])
        .collect()
}

/// Per-source offspring counts of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BreedCounts {
    pub mutants: usize,
    pub crossovers: usize,
    pub spawns: usize,
    pub elites: usize,
}

/// Breeds the next generation: 79% single-mutation children, 11% crossover
/// children, 10% fresh spawns (of `pop_size`), plus the `elitism_pct` of
/// models nearest the Pareto front cloned in unchanged. Parents come from
/// Pareto tournaments; every tournament's winners enter a pool that is
/// drained in order before the next tournament runs.
pub fn breed_generation(
    pop: &Population,
    train: &Dataset,
    cfg: &EvolutionConfig,
    rng: &mut GeneticRng,
) -> Population {
    breed_generation_counted(pop, train, cfg, rng).0
}

/// [`breed_generation`] with the per-source counts exposed.
pub fn breed_generation_counted(
    pop: &Population,
    train: &Dataset,
    cfg: &EvolutionConfig,
    rng: &mut GeneticRng,
) -> (Population, BreedCounts) {
    assert!(!pop.models.is_empty(), "cannot breed an empty population");
    let mutants_n = cfg.pop_size * cfg.mutation_pct as usize / 100;
    let crossovers_n = cfg.pop_size * cfg.crossover_pct as usize / 100;
    let spawns_n = cfg.pop_size - mutants_n - crossovers_n;
    let elites_n = (cfg.pop_size * cfg.elitism_pct as usize / 100).min(pop.models.len());

    let mut pool: VecDeque<usize> = VecDeque::new();
    let mut next_parent = |rng: &mut GeneticRng| -> usize {
        loop {
            if let Some(idx) = pool.pop_front() {
                return idx;
            }
            pool.extend(tournament_select(pop, cfg.tournament_size, rng));
        }
    };

    let mut children: Vec<StackModel> = Vec::with_capacity(cfg.pop_size);
    for _ in 0..mutants_n {
        let p = next_parent(rng);
        children.push(genetics::mutate(&pop.models[p].model, &cfg.spawn, rng));
    }
    for _ in 0..crossovers_n {
        let pa = next_parent(rng);
        let pb = next_parent(rng);
        children.push(genetics::crossover(
            &pop.models[pa].model,
            &pop.models[pb].model,
            rng,
        ));
    }
    for _ in 0..spawns_n {
        children.push(genetics::spawn_random(&cfg.spawn, rng));
    }

    let mut models = score_batch(children, train);
    let order = rank_order(pop);
    for &idx in order.iter().take(elites_n) {
        models.push(pop.models[idx].clone());
    }

    (
        Population {
            models,
            generation: pop.generation + 1,
        },
        BreedCounts {
            mutants: mutants_n,
            crossovers: crossovers_n,
            spawns: spawns_n,
            elites: elites_n,
        },
    )
}

/// The `selection_pct` of the population nearest the Pareto front, used to
/// seed the next epoch. Ordered by nondominated-sorting rank with loss and
/// complexity tie-breaks.
pub fn select_seed_models(pop: &Population, selection_pct: u32) -> Vec<StackModel> {
    let count = pop.models.len() * selection_pct as usize / 100;
    rank_order(pop)
        .into_iter()
        .take(count)
        .map(|i| pop.models[i].model.clone())
        .collect()
}

/// Runs `cfg.islands` independent islands and returns their merged union,
/// rescored on `train`.
///
/// Each island starts from its round-robin share of `seed_models` topped up
/// with fresh spawns to `pop_size`, then breeds generations until the time
/// limit or the generation limit. Islands share nothing while running;
/// determinism per island follows from its derived seed.
///
/// When some model's loss falls below `cfg.early_stop_loss` the island
/// consults the caller: without a stop check it halts immediately; with one
/// it halts only if the check accepts the population, so epochs keep
/// searching past models that merely interpolate the training data.
pub fn run_epoch(
    seed_models: &[StackModel],
    train: &Dataset,
    cfg: &EvolutionConfig,
    epoch_seed: u64,
) -> Population {
    run_epoch_with_stop(seed_models, train, cfg, epoch_seed, None)
}

/// [`run_epoch`] with an early-stop arbiter: a pure predicate over the
/// population deciding whether an island may stop before its budget
/// expires. Callers close over whatever success criterion they own.
pub fn run_epoch_with_stop(
    seed_models: &[StackModel],
    train: &Dataset,
    cfg: &EvolutionConfig,
    epoch_seed: u64,
    stop: Option<&(dyn Fn(&Population) -> bool + Sync)>,
) -> Population {
    cfg.validate();
    let mut shares: Vec<Vec<StackModel>> = vec![Vec::new(); cfg.islands];
    for (i, m) in seed_models.iter().enumerate() {
        shares[i % cfg.islands].push(m.clone());
    }
    let islands: Vec<Population> = shares
        .into_par_iter()
        .enumerate()
        .map(|(i, share)| {
            run_island(
                share,
                train,
                cfg,
                derive_seed(epoch_seed, &[stage::ISLAND, i as u64]),
                stop,
            )
        })
        .collect();

    let generation = islands.iter().map(|p| p.generation).max().unwrap_or(0);
    let merged: Vec<StackModel> = islands
        .into_iter()
        .flat_map(|p| p.models.into_iter().map(|s| s.model))
        .collect();
    Population {
        models: score_batch(merged, train),
        generation,
    }
}

fn run_island(
    seeds: Vec<StackModel>,
    train: &Dataset,
    cfg: &EvolutionConfig,
    island_seed: u64,
    stop: Option<&(dyn Fn(&Population) -> bool + Sync)>,
) -> Population {
    let mut rng = rng_from_seed(island_seed);
    let mut initial: Vec<StackModel> = seeds.into_iter().take(cfg.pop_size).collect();
    while initial.len() < cfg.pop_size {
        initial.push(genetics::spawn_random(&cfg.spawn, &mut rng));
    }
    let mut pop = Population {
        models: score_batch(initial, train),
        generation: 0,
    };
    let deadline = Instant::now() + cfg.time_limit;
    loop {
        if let Some(limit) = cfg.generation_limit {
            if pop.generation >= limit {
                break;
            }
        }
        if Instant::now() >= deadline {
            break;
        }
        if let Some(threshold) = cfg.early_stop_loss {
            if pop.best_loss() < threshold {
                match stop {
                    None => break,
                    Some(check) if check(&pop) => break,
                    Some(_) => {}
                }
            }
        }
        pop = breed_generation(&pop, train, cfg, &mut rng);
    }
    pop
}
