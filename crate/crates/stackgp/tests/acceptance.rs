//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured values. Thresholds are pinned here, not configurable.
//!
//! The two benchmark-scale criteria (trivial solves, the paired ablation)
//! run real evolution under wall-clock budgets and dominate the suite's
//! runtime; everything else is fast property checking against independent
//! oracles.

use std::time::{Duration, Instant};

use stackgp::acquisition::{self, AcquisitionConfig};
use stackgp::active_loop::{self, LoopConfig};
use stackgp::data::{duplicates_any, Bounds, Dataset, LabeledPoint};
use stackgp::ensemble::{Ensemble, EnsembleMember, EnsembleSource};
use stackgp::evolution::{
    self, breed_generation_counted, pareto_front_indices, tournament_select, EvolutionConfig,
    FitnessPair, Population, Scored,
};
use stackgp::feynman::{builtin_registry, find_equation, EquationSpec};
use stackgp::genetics::{self, SpawnConfig};
use stackgp::model::{Op, Operand, StackModel};
use stackgp::report::Mode;
use stackgp::rng::{rng_from_seed, GeneticRng};
use rand::Rng;

fn equation(id: u32) -> EquationSpec {
    find_equation(&builtin_registry(), id).unwrap().clone()
}

fn trivial_solve_config(eq: &EquationSpec, trig: bool, seed: u64) -> LoopConfig {
    let ops = if trig {
        Op::default_set_with_trig()
    } else {
        Op::default_set()
    };
    let mut evo = EvolutionConfig::new(SpawnConfig::new(eq.variables.len(), ops));
    evo.islands = 1;
    evo.time_limit = Duration::from_secs(20);
    let mut cfg = LoopConfig::new(evo);
    cfg.master_seed = seed;
    cfg.max_iterations = 0; // solved on the initial three points or not at all
    cfg
}

#[test]
fn criterion_1_trivial_solve_reproduction() {
    let started = Instant::now();
    let trials = 20;

    let torque = equation(22);
    let cfg = trivial_solve_config(&torque, true, 2201);
    let torque_summary = active_loop::run_trials(&torque, &cfg, trials).unwrap();

    let gaussian = equation(1);
    let cfg = trivial_solve_config(&gaussian, false, 101);
    let gaussian_summary = active_loop::run_trials(&gaussian, &cfg, trials).unwrap();

    let elapsed = started.elapsed();
    assert!(
        torque_summary.solve_rate >= 0.7,
        "equation 22 solved at 3 points in only {:.0}% of trials",
        torque_summary.solve_rate * 100.0
    );
    assert!(
        gaussian_summary.solve_rate >= 0.7,
        "equation 1 solved at 3 points in only {:.0}% of trials",
        gaussian_summary.solve_rate * 100.0
    );
    for run in torque_summary.runs.iter().chain(&gaussian_summary.runs) {
        if run.solved {
            assert_eq!(run.points_used, 3);
        }
    }
    assert!(
        elapsed < Duration::from_secs(1800),
        "criterion 1 overran 30 minutes: {elapsed:?}"
    );
    println!(
        "PASS criterion 1: eq22 rate {:.0}%, eq1 rate {:.0}%, 3 points each, {:.0}s total",
        torque_summary.solve_rate * 100.0,
        gaussian_summary.solve_rate * 100.0,
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_2_active_beats_random_on_oscillator_energy() {
    let eq = equation(24);
    let mut evo = EvolutionConfig::new(SpawnConfig::new(eq.variables.len(), Op::default_set()));
    evo.islands = 1;
    evo.time_limit = Duration::from_secs(30);
    let mut cfg = LoopConfig::new(evo);
    cfg.master_seed = 42;
    cfg.max_iterations = 40;
    let trials = 20;

    let (al, random) = active_loop::run_ablation(&eq, &cfg, trials).unwrap();

    assert!(
        al.solve_rate > 0.0 && random.solve_rate > 0.0,
        "both modes must solve at least once to compare medians (al {:.0}%, random {:.0}%)",
        al.solve_rate * 100.0,
        random.solve_rate * 100.0
    );
    assert!(
        !al.median_points.is_lower_bound && !random.median_points.is_lower_bound,
        "medians must be real values, not bounds"
    );
    assert!(
        al.median_points.value < random.median_points.value,
        "informed selection used {} median points, random used {}",
        al.median_points,
        random.median_points
    );
    println!(
        "PASS criterion 2: eq24 median points AL {} < random {} over {} paired trials (rates {:.0}%/{:.0}%)",
        al.median_points,
        random.median_points,
        trials,
        al.solve_rate * 100.0,
        random.solve_rate * 100.0
    );
}

/// Independent uncertainty computation: textbook formulas, no shared code
/// with the library path.
fn oracle_delta(responses: &[f64], trim_fraction: f64, floor: f64) -> f64 {
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();

    let mut magnitudes: Vec<f64> = responses.iter().map(|v| v.abs()).collect();
    magnitudes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let drop = (trim_fraction * magnitudes.len() as f64).floor() as usize;
    let kept = &magnitudes[drop..magnitudes.len() - drop];
    let trimmed = kept.iter().sum::<f64>() / kept.len() as f64;
    std / trimmed.max(floor)
}

#[test]
fn criterion_3_delta_matches_independent_oracle() {
    let cfg = AcquisitionConfig::default();
    let mut rng = rng_from_seed(33);
    for case in 0..1000 {
        let n = rng.gen_range(2..=10);
        let responses: Vec<f64> = (0..n)
            .map(|_| {
                let magnitude = 10f64.powf(rng.gen_range(-3.0..3.0));
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                sign * magnitude * rng.gen_range(0.1..1.0)
            })
            .collect();
        let ours = acquisition::delta_from_responses(&responses, &cfg);
        let reference = oracle_delta(&responses, cfg.trim_fraction, cfg.denom_floor);
        let denom = reference.abs().max(1e-300);
        assert!(
            (ours - reference).abs() / denom < 1e-12,
            "case {case}: {ours} vs {reference} for {responses:?}"
        );
    }

    let worked: Vec<f64> = (1..=10).map(f64::from).collect();
    let delta = acquisition::delta_from_responses(&worked, &cfg);
    assert!(
        (delta - 0.55048).abs() < 1e-4,
        "worked example gave {delta}"
    );
    println!("PASS criterion 3: 1000 random vectors within 1e-12, worked example {delta:.5}");
}

fn brute_force_front(fits: &[FitnessPair]) -> Vec<usize> {
    (0..fits.len())
        .filter(|&i| !fits.iter().any(|o| o.dominates(&fits[i])))
        .collect()
}

fn random_population(rng: &mut GeneticRng, n: usize) -> Population {
    let models = (0..n)
        .map(|_| {
            let fitness = FitnessPair {
                accuracy_loss: (rng.gen_range(0..25) as f64) / 25.0,
                complexity: rng.gen_range(1..20),
            };
            Scored {
                model: StackModel::new(
                    vec![Op::Add],
                    vec![Operand::Var(0), Operand::Const(rng.gen::<f64>())],
                ),
                fitness,
            }
        })
        .collect();
    Population {
        models,
        generation: 0,
    }
}

#[test]
fn criterion_4_pareto_matches_brute_force() {
    let mut rng = rng_from_seed(44);
    for round in 0..1000 {
        let n = rng.gen_range(1..=200);
        let pop = random_population(&mut rng, n);
        let fits: Vec<FitnessPair> = pop.models.iter().map(|s| s.fitness).collect();
        assert_eq!(
            pareto_front_indices(&fits),
            brute_force_front(&fits),
            "front mismatch on round {round}"
        );

        // tournament over the whole population (sampled without
        // replacement) must return exactly the brute-force front
        let mut winners = tournament_select(&pop, n, &mut rng);
        winners.sort_unstable();
        assert_eq!(winners, brute_force_front(&fits), "round {round}");

        // small tournaments return a mutually nondominated winner set
        if n >= 5 {
            let winners = tournament_select(&pop, 5, &mut rng);
            for (ai, &a) in winners.iter().enumerate() {
                for &b in winners.iter().skip(ai + 1) {
                    assert!(!fits[a].dominates(&fits[b]));
                    assert!(!fits[b].dominates(&fits[a]));
                }
            }
        }
    }
    println!("PASS criterion 4: 1000 populations up to n=200 match O(n^2) enumeration");
}

#[test]
fn criterion_5_breeding_mix_is_exact() {
    let cfg = EvolutionConfig::new(SpawnConfig::new(1, Op::default_set()));
    let train = Dataset::new(
        (0..5)
            .map(|i| LabeledPoint::new(vec![1.0 + i as f64], 2.0 + 3.0 * i as f64))
            .collect(),
    );
    let mut rng = rng_from_seed(55);
    let initial: Vec<StackModel> = (0..cfg.pop_size)
        .map(|_| genetics::spawn_random(&cfg.spawn, &mut rng))
        .collect();
    let pop = Population {
        models: initial
            .into_iter()
            .map(|m| {
                let fitness = evolution::score(&m, &train);
                Scored { model: m, fitness }
            })
            .collect(),
        generation: 0,
    };
    let (next, counts) = breed_generation_counted(&pop, &train, &cfg, &mut rng);
    assert_eq!(counts.mutants, 237);
    assert_eq!(counts.crossovers, 33);
    assert_eq!(counts.spawns, 30);
    assert_eq!(counts.elites, 30);
    assert!(
        (300..=330).contains(&next.models.len()),
        "population size {}",
        next.models.len()
    );
    println!(
        "PASS criterion 5: 237/33/30 offspring + 30 elites, population {}",
        next.models.len()
    );
}

fn fuzzed_ensemble(rng: &mut GeneticRng, dim: usize) -> Ensemble {
    let cfg = SpawnConfig::new(dim, Op::default_set());
    let count = rng.gen_range(2..=6);
    let members = (0..count)
        .map(|_| EnsembleMember {
            model: genetics::spawn_random(&cfg, rng),
            scale: rng.gen_range(0.5..2.0),
            offset: rng.gen_range(-1.0..1.0),
        })
        .collect();
    Ensemble {
        members,
        source: EnsembleSource::Clustered,
    }
}

#[test]
fn criterion_6_acquisition_sanity() {
    let mut rng = rng_from_seed(66);

    // optimizer floor: never worse than the best of 1000 uniform probes
    let cfg = AcquisitionConfig::default();
    for round in 0..100 {
        let dim = rng.gen_range(1..=3);
        let bounds = Bounds::new((0..dim).map(|d| (0.5 + d as f64, 3.0 + d as f64)).collect());
        let ens = fuzzed_ensemble(&mut rng, dim);
        let proposal = acquisition::maximize_uncertainty(&ens, &bounds, &cfg, &mut rng);
        assert!(bounds.contains(&proposal.point));
        let mut probe_best = f64::MIN;
        for _ in 0..1000 {
            let x = bounds.sample(&mut rng);
            probe_best = probe_best.max(acquisition::uncertainty(&ens, &x, &cfg));
        }
        assert!(
            proposal.delta >= probe_best - 1e-9,
            "round {round}: optimizer {} under probe floor {}",
            proposal.delta,
            probe_best
        );
    }

    // proposals never duplicate training points
    let mut fast = AcquisitionConfig::default();
    fast.optimizer.generations = 12;
    let mut worst_case_hits = 0usize;
    for round in 0..1000 {
        let dim = 1 + round % 2;
        let bounds = Bounds::new(vec![(0.0, 1.0); dim]);
        let ens = fuzzed_ensemble(&mut rng, dim);
        let mut train = Dataset::default();
        let points = rng.gen_range(1..=12);
        for _ in 0..points {
            train.push(LabeledPoint::new(bounds.sample(&mut rng), 0.0));
        }
        let proposal = acquisition::propose_point(&ens, &bounds, &train, &fast, &mut rng);
        assert!(bounds.contains(&proposal.point));
        assert!(
            !duplicates_any(&proposal.point, &train, &bounds, fast.duplicate_tol),
            "round {round} proposed a duplicate"
        );
        if proposal.fallback_used {
            worst_case_hits += 1;
        }
    }
    println!(
        "PASS criterion 6: optimizer floor held on 100 ensembles; 1000 proposals duplicate-free ({worst_case_hits} used the fallback)"
    );
}

#[test]
fn criterion_7_end_to_end_determinism() {
    use std::process::Command;
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> Vec<u8> {
        let path = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_stackgp"))
            .args([
                "run",
                "--eq",
                "24",
                "--mode",
                "al",
                "--seed",
                "4242",
                "--gen-limit",
                "4",
                "--epoch-secs",
                "600",
                "--islands",
                "2",
                "--max-iters",
                "2",
                "--no-timings",
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .expect("binary runs");
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(&path).unwrap()
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b, "reports of identical invocations differ");
    println!("PASS criterion 7: two seeded invocations produced byte-identical reports");
}

#[test]
fn criterion_8_oracle_spot_checks() {
    let pi = std::f64::consts::PI;
    // (equation id, inputs, expected response)
    let cases: Vec<(u32, Vec<f64>, f64)> = vec![
        (1, vec![0.0], 0.3989422804014327),
        (1, vec![1.0], 0.24197072451914337),
        (1, vec![2.0], 0.05399096651318806),
        (1, vec![3.5], 0.0008726826950457601),
        (1, vec![5.0], 1.4867195147342977e-6),
        (2, vec![1.0, 0.0], 0.3989422804014327),
        (2, vec![1.0, 1.0], 0.24197072451914337),
        (2, vec![2.0, 1.0], 0.17603266338214976),
        (2, vec![2.5, 4.0], 0.04436833387178222),
        (2, vec![5.0, 5.0], 0.04839414490382867),
        (3, vec![1.0, 1.0, 1.0], 0.3989422804014327),
        (3, vec![1.0, 2.0, 1.0], 0.24197072451914337),
        (3, vec![2.0, 3.0, 1.0], 0.12098536225957168),
        (3, vec![2.5, 4.0, 1.5], 0.09678828980765734),
        (3, vec![5.0, 5.0, 2.0], 0.06664492057835992),
        (5, vec![1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0], 1.0),
        (5, vec![2.0, 3.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 1.0], 1.2),
        (5, vec![1.5, 2.5, 3.5, 1.0, 4.0, 2.0, 5.0, 3.0, 1.0], 0.5965909090909091),
        (5, vec![5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 4.0, 5.0, 1.0], 6.944444444444445),
        (5, vec![2.0, 2.0, 2.0, 1.5, 2.5, 1.5, 2.5, 1.5, 2.5], 2.6666666666666665),
        (14, vec![1.0, 1.0, 1.0, 1.0, 1.0], 0.0),
        (14, vec![1.0, 1.0, 2.0, 1.0, 1.0], 0.5),
        (14, vec![2.0, 3.0, 4.0, 2.0, 1.5], 2.25),
        (14, vec![5.0, 5.0, 5.0, 1.0, 5.0], 100.0),
        (14, vec![1.5, 2.5, 3.0, 4.0, 2.0], -0.625),
        (22, vec![2.0, 3.0, pi / 2.0], 6.0),
        (22, vec![1.0, 1.0, 0.0], 0.0),
        (22, vec![1.5, 2.0, 1.0], 2.5244129544236895),
        (22, vec![4.0, 5.0, 2.5], 11.96944288207913),
        (22, vec![3.0, 3.0, pi], 0.0),
        (24, vec![1.0, 1.0, 1.0, 1.0], 0.5),
        (24, vec![2.0, 1.0, 1.0, 1.0], 1.0),
        (24, vec![1.0, 2.0, 3.0, 1.0], 3.25),
        (24, vec![2.0, 3.0, 4.0, 5.0], 312.5),
        (24, vec![1.5, 2.5, 0.5, 2.0], 9.75),
        (47, vec![2.0, 1.0, 1.0, 1.0], 1.0),
        (47, vec![3.0, 2.0, 3.0, 1.0], 3.0),
        (47, vec![2.0, 5.0, 5.0, 5.0], 5.0),
        (47, vec![1.5, 1.0, 2.0, 4.0], 1.0),
        (47, vec![5.0, 3.0, 1.0, 2.0], 0.375),
        (901, vec![1.0], 1.0),
        (901, vec![2.5], 2.5),
        (901, vec![4.0], 4.0),
        (901, vec![3.3], 3.3),
        (901, vec![5.0], 5.0),
        (902, vec![1.0, 1.0], 1.0),
        (902, vec![2.0, 3.0], 6.0),
        (902, vec![1.5, 4.0], 6.0),
        (902, vec![2.5, 2.5], 6.25),
        (902, vec![5.0, 5.0], 25.0),
    ];
    let registry = builtin_registry();
    for (id, inputs, expected) in &cases {
        let eq = find_equation(&registry, *id).unwrap();
        let got = eq.eval(inputs);
        let tol = 1e-12 * expected.abs().max(1.0);
        assert!(
            (got - expected).abs() <= tol,
            "equation {id} at {inputs:?}: got {got}, expected {expected}"
        );
    }
    println!("PASS criterion 8: {} oracle spot checks matched", cases.len());
}

#[test]
fn criterion_9_stack_semantics_fuzz() {
    let cfg = SpawnConfig::new(3, Op::default_set_with_trig());
    let mut rng = rng_from_seed(99);
    let mut scratch = Vec::new();
    let mut valid = 0u64;
    let mut invalid = 0u64;
    let mut model = genetics::spawn_random(&cfg, &mut rng);
    for step in 0..100_000 {
        // alternate fresh spawns with the variation operators so the fuzz
        // covers mutated and recombined shapes too
        model = match step % 4 {
            0 => genetics::spawn_random(&cfg, &mut rng),
            1 | 2 => genetics::mutate(&model, &cfg, &mut rng),
            _ => {
                let other = genetics::spawn_random(&cfg, &mut rng);
                genetics::crossover(&model, &other, &mut rng)
            }
        };
        let inputs = [
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(0.001..10.0),
        ];
        match model.evaluate_with(&inputs, &mut scratch) {
            Some(v) => {
                assert!(v.is_finite(), "valid result must be finite");
                // deterministic replay, bit for bit
                let again = model.evaluate(&inputs).unwrap();
                assert_eq!(v.to_bits(), again.to_bits());
                valid += 1;
            }
            None => invalid += 1,
        }
    }
    assert_eq!(valid + invalid, 100_000);
    assert!(valid > 0 && invalid > 0, "fuzz should see both outcomes");
    println!(
        "PASS criterion 9: 100000 models evaluated without fault ({valid} valid, {invalid} invalid)"
    );
}
