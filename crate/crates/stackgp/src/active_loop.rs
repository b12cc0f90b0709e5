//! The outer learning loop: evolve, check for a perfect model, build a
//! committee, acquire the most uncertain point, label it, repeat.
//!
//! The loop owns all randomness through stage-tagged streams derived from
//! one master seed, so a run is reproducible bit-for-bit. The held-out test
//! points only ever reach the solved check and the error trace; evolution,
//! ensembles and acquisition see the training set alone.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::acquisition::{self, AcquisitionConfig};
use crate::data::{duplicates_any, Dataset};
use crate::ensemble::{self, EnsembleError};
use crate::evolution::{self, EvolutionConfig, Population};
use crate::feynman::{self, EquationSpec, OracleError};
use crate::genetics;
use crate::model::{self, SOLVE_TRAIN_LOSS};
use crate::report::{
    BestModel, IterationRecord, MedianPoints, Mode, RunReport, Seeds, TrialSummary,
    SCHEMA_VERSION,
};
use crate::rng::{derive_rng, derive_seed, stage};
use crate::stats;

/// Parameters of one run.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub mode: Mode,
    pub initial_points: usize,
    pub test_points: usize,
    pub max_iterations: usize,
    pub evolution: EvolutionConfig,
    pub acquisition: AcquisitionConfig,
    pub master_seed: u64,
}

impl LoopConfig {
    pub fn new(evolution: EvolutionConfig) -> Self {
        Self {
            mode: Mode::ActiveLearning,
            initial_points: 3,
            test_points: 100,
            max_iterations: 100,
            evolution,
            acquisition: AcquisitionConfig::default(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("ensemble construction failed after respawn: {0}")]
    Ensemble(#[from] EnsembleError),
}

/// Outcome of the solved check against the current population.
struct BestPick {
    index: usize,
    a: f64,
    b: f64,
    solved: bool,
}

/// Checks every model under the training-loss tolerance, in (loss,
/// complexity) order, against the full solved criterion; falls back to the
/// overall best when none passes.
fn pick_best(pop: &Population, train: &Dataset, test: &Dataset) -> BestPick {
    let mut candidates: Vec<usize> = (0..pop.models.len())
        .filter(|&i| pop.models[i].fitness.accuracy_loss < SOLVE_TRAIN_LOSS)
        .collect();
    candidates.sort_by(|&x, &y| {
        let fx = &pop.models[x].fitness;
        let fy = &pop.models[y].fitness;
        fx.accuracy_loss
            .total_cmp(&fy.accuracy_loss)
            .then(fx.complexity.cmp(&fy.complexity))
            .then(x.cmp(&y))
    });
    for &idx in &candidates {
        let m = &pop.models[idx].model;
        if model::is_solved(m, train, test) {
            let (a, b) = evolution::align_model(m, train);
            return BestPick {
                index: idx,
                a,
                b,
                solved: true,
            };
        }
    }
    let index = pop.best_index().expect("nonempty population");
    let (a, b) = evolution::align_model(&pop.models[index].model, train);
    BestPick {
        index,
        a,
        b,
        solved: false,
    }
}

/// Early-stop arbiter handed to the islands: accept the population only
/// when one of the simplest perfect-on-train models also passes the full
/// solved check. Small training sets are interpolated by many wrong
/// structures, so a bare loss threshold would end epochs long before the
/// true form appears. Structures that already failed are remembered for
/// the epoch (train and test are fixed within one).
fn solved_stop_check<'a>(
    train: &'a Dataset,
    test: &'a Dataset,
    failed: &'a std::sync::Mutex<std::collections::HashSet<u64>>,
) -> impl Fn(&Population) -> bool + Sync + 'a {
    const CANDIDATES_PER_CHECK: usize = 8;
    move |pop: &Population| {
        let mut candidates: Vec<usize> = (0..pop.models.len())
            .filter(|&i| pop.models[i].fitness.accuracy_loss < SOLVE_TRAIN_LOSS)
            .collect();
        // simplest first: the true structure is typically the shortest
        // model on the perfect-loss frontier
        candidates.sort_by(|&x, &y| {
            let fx = &pop.models[x].fitness;
            let fy = &pop.models[y].fitness;
            fx.complexity
                .cmp(&fy.complexity)
                .then(fx.accuracy_loss.total_cmp(&fy.accuracy_loss))
                .then(x.cmp(&y))
        });
        let mut checked = 0;
        for &idx in &candidates {
            if checked >= CANDIDATES_PER_CHECK {
                break;
            }
            let m = &pop.models[idx].model;
            let key = m.structural_hash();
            if failed.lock().unwrap().contains(&key) {
                continue;
            }
            checked += 1;
            if model::is_solved(m, train, test) {
                return true;
            }
            failed.lock().unwrap().insert(key);
        }
        false
    }
}

fn record_iteration(
    index: usize,
    point: Vec<f64>,
    delta: Option<f64>,
    pop: &Population,
    pick: &BestPick,
    test: &Dataset,
    started: Instant,
) -> IterationRecord {
    let best = &pop.models[pick.index];
    IterationRecord {
        index,
        point,
        delta,
        train_loss: best.fitness.accuracy_loss,
        test_max_rel_err: model::test_error(&best.model, pick.a, pick.b, test),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Builds the committee, respawning fresh models once if the population
/// lacks two distinct members.
fn committee(
    pop: &mut Population,
    train: &Dataset,
    cfg: &LoopConfig,
    iteration: usize,
) -> Result<ensemble::Ensemble, RunError> {
    let mut rng = derive_rng(cfg.master_seed, &[stage::CLUSTER, iteration as u64]);
    let clustering = ensemble::cluster_data(train, &mut rng);
    match ensemble::build_ensemble(pop, train, &clustering) {
        Ok(e) => Ok(e),
        Err(EnsembleError::TooFewDistinctModels) => {
            for _ in 0..30 {
                let m = genetics::spawn_random(&cfg.evolution.spawn, &mut rng);
                let fitness = evolution::score(&m, train);
                pop.models.push(evolution::Scored { model: m, fitness });
            }
            Ok(ensemble::build_ensemble(pop, train, &clustering)?)
        }
    }
}

/// Runs the full loop on one equation.
pub fn run(eq: &EquationSpec, cfg: &LoopConfig) -> Result<RunReport, RunError> {
    cfg.evolution.validate();
    assert!(cfg.initial_points >= 2, "correlation needs two points");
    let seed = cfg.master_seed;
    let bounds = eq.bounds();

    let mut train = feynman::sample_uniform(
        eq,
        cfg.initial_points,
        &mut derive_rng(seed, &[stage::TRAIN_DATA]),
    )?;
    let test = feynman::sample_uniform(eq, cfg.test_points, &mut derive_rng(seed, &[stage::TEST_DATA]))?;

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let epoch_started = Instant::now();
    let failed = std::sync::Mutex::new(std::collections::HashSet::new());
    let mut pop = {
        let check = solved_stop_check(&train, &test, &failed);
        evolution::run_epoch_with_stop(
            &[],
            &train,
            &cfg.evolution,
            derive_seed(seed, &[stage::EPOCH, 0]),
            Some(&check),
        )
    };
    let mut pick = pick_best(&pop, &train, &test);
    iterations.push(record_iteration(0, Vec::new(), None, &pop, &pick, &test, epoch_started));

    let mut iteration = 0usize;
    while !pick.solved && iteration < cfg.max_iterations {
        iteration += 1;
        let started = Instant::now();

        let (point, delta) = match cfg.mode {
            Mode::ActiveLearning => {
                let ens = committee(&mut pop, &train, cfg, iteration)?;
                let proposal = acquisition::propose_point(
                    &ens,
                    &bounds,
                    &train,
                    &cfg.acquisition,
                    &mut derive_rng(seed, &[stage::ACQUIRE, iteration as u64]),
                );
                (proposal.point, Some(proposal.delta))
            }
            Mode::RandomSelection => {
                let mut rng = derive_rng(seed, &[stage::RANDOM_POINT, iteration as u64]);
                let mut point = bounds.sample(&mut rng);
                for _ in 0..100_000 {
                    if !duplicates_any(&point, &train, &bounds, cfg.acquisition.duplicate_tol) {
                        break;
                    }
                    point = bounds.sample(&mut rng);
                }
                (point, None)
            }
        };

        let labeled = feynman::label_point(
            eq,
            point,
            &bounds,
            &mut derive_rng(seed, &[stage::ORACLE_RETRY, iteration as u64]),
        )?;
        let recorded_point = labeled.inputs.clone();
        train.push(labeled);

        let seeds = evolution::select_seed_models(&pop, cfg.evolution.selection_pct);
        failed.lock().unwrap().clear();
        pop = {
            let check = solved_stop_check(&train, &test, &failed);
            evolution::run_epoch_with_stop(
                &seeds,
                &train,
                &cfg.evolution,
                derive_seed(seed, &[stage::EPOCH, iteration as u64]),
                Some(&check),
            )
        };
        pick = pick_best(&pop, &train, &test);
        iterations.push(record_iteration(
            iteration,
            recorded_point,
            delta,
            &pop,
            &pick,
            &test,
            started,
        ));
    }

    let chosen = &pop.models[pick.index];
    let var_names = eq.var_names();
    Ok(RunReport {
        schema: SCHEMA_VERSION,
        equation_id: eq.id,
        mode: cfg.mode,
        solved: pick.solved,
        points_used: train.len(),
        best_model: BestModel {
            infix: chosen.model.render_infix(&var_names),
            a: pick.a,
            b: pick.b,
            complexity: chosen.model.complexity(),
        },
        iterations,
        training_points: train.points,
        seeds: Seeds {
            master: seed,
            run: seed,
        },
    })
}

/// Runs `trials` independent replicates and aggregates them. Trial seeds
/// derive from the master seed by index, so two modes run over the same
/// trial list pair up point-for-point.
pub fn run_trials(eq: &EquationSpec, cfg: &LoopConfig, trials: usize) -> Result<TrialSummary, RunError> {
    assert!(trials >= 1);
    let runs: Result<Vec<RunReport>, RunError> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut trial_cfg = cfg.clone();
            trial_cfg.master_seed = derive_seed(cfg.master_seed, &[stage::TRIAL, t as u64]);
            let mut report = run(eq, &trial_cfg)?;
            report.seeds = Seeds {
                master: cfg.master_seed,
                run: trial_cfg.master_seed,
            };
            Ok(report)
        })
        .collect();
    let runs = runs?;
    Ok(summarize(eq.id, cfg, runs))
}

fn summarize(equation_id: u32, cfg: &LoopConfig, runs: Vec<RunReport>) -> TrialSummary {
    let solved_points: Vec<f64> = runs
        .iter()
        .filter(|r| r.solved)
        .map(|r| r.points_used as f64)
        .collect();
    let solve_rate = solved_points.len() as f64 / runs.len() as f64;
    let median_points = if solved_points.is_empty() {
        MedianPoints {
            value: (cfg.initial_points + cfg.max_iterations) as f64,
            is_lower_bound: true,
        }
    } else {
        MedianPoints {
            value: stats::median(&solved_points),
            is_lower_bound: false,
        }
    };
    TrialSummary {
        schema: SCHEMA_VERSION,
        equation_id,
        mode: cfg.mode,
        trials: runs.len(),
        solve_rate,
        median_points,
        runs,
    }
}

/// Paired comparison on one equation: the same trial seeds under informed
/// and random point selection.
pub fn run_ablation(
    eq: &EquationSpec,
    cfg: &LoopConfig,
    trials: usize,
) -> Result<(TrialSummary, TrialSummary), RunError> {
    let mut al_cfg = cfg.clone();
    al_cfg.mode = Mode::ActiveLearning;
    let mut random_cfg = cfg.clone();
    random_cfg.mode = Mode::RandomSelection;
    let al = run_trials(eq, &al_cfg, trials)?;
    let random = run_trials(eq, &random_cfg, trials)?;
    Ok((al, random))
}
