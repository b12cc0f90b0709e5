//! Disagreement-driven point selection.
//!
//! The uncertainty of a committee at a point is the sample standard
//! deviation of the members' aligned responses divided by the trimmed mean
//! of their absolute values; trimming ignores asymptotic behavior in a few
//! members, and the relative form keeps the measure comparable across
//! regions of very different response magnitude. The next training point is
//! wherever that ratio peaks over the variable box, with a random-subspace
//! retry when the peak lands on an already-sampled point.

use crate::data::{duplicates_any, Bounds, Dataset};
use crate::ensemble::Ensemble;
use crate::optim::{self, OptimizerConfig};
use crate::rng::GeneticRng;
use crate::stats;

/// Knobs of the uncertainty metric and its maximization.
#[derive(Debug, Clone)]
pub struct AcquisitionConfig {
    /// Fraction of sorted absolute responses dropped from each end before
    /// the mean.
    pub trim_fraction: f64,
    /// Magnitude substituted for a member that evaluates invalid at the
    /// probe point; invalidity is treated as disagreement.
    pub invalid_sentinel: f64,
    /// Floor on the trimmed-mean denominator.
    pub denom_floor: f64,
    /// Per-coordinate relative tolerance under which two points count as
    /// duplicates.
    pub duplicate_tol: f64,
    /// Half width of a fallback subspace as a fraction of each variable's
    /// range.
    pub subspace_half_width: f64,
    /// Subspace attempts before giving up on informed selection.
    pub subspace_retries: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            trim_fraction: 0.3,
            invalid_sentinel: 1e6,
            denom_floor: 1e-12,
            duplicate_tol: 1e-6,
            subspace_half_width: 0.125,
            subspace_retries: 5,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// A proposed training point with the uncertainty observed there.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub delta: f64,
    pub fallback_used: bool,
}

/// Ensemble disagreement at `x`: sample standard deviation of member
/// responses over the trimmed mean of their absolute values. Members that
/// evaluate invalid contribute the sentinel magnitude, signed like the
/// most recent finite response (positive when there is none). Total for
/// every input.
pub fn uncertainty(ensemble: &Ensemble, x: &[f64], cfg: &AcquisitionConfig) -> f64 {
    debug_assert!(ensemble.len() >= 2, "uncertainty needs a committee");
    let mut responses = Vec::with_capacity(ensemble.len());
    let mut last_sign = 1.0;
    for member in &ensemble.members {
        match member.respond(x) {
            Some(v) => {
                last_sign = if v < 0.0 { -1.0 } else { 1.0 };
                responses.push(v);
            }
            None => responses.push(last_sign * cfg.invalid_sentinel),
        }
    }
    delta_from_responses(&responses, cfg)
}

/// The metric itself, exposed over raw response vectors.
pub fn delta_from_responses(responses: &[f64], cfg: &AcquisitionConfig) -> f64 {
    let std = stats::sample_std(responses);
    let denom = stats::trimmed_mean_abs(responses, cfg.trim_fraction).max(cfg.denom_floor);
    std / denom
}

/// Finds a point of (locally) maximal uncertainty in the box.
pub fn maximize_uncertainty(
    ensemble: &Ensemble,
    bounds: &Bounds,
    cfg: &AcquisitionConfig,
    rng: &mut GeneticRng,
) -> Proposal {
    let (point, delta) = optim::maximize(
        |x| uncertainty(ensemble, x, cfg),
        bounds,
        &cfg.optimizer,
        rng,
    );
    Proposal {
        point,
        delta,
        fallback_used: false,
    }
}

/// Proposes the next training point: the uncertainty maximum over the full
/// box, falling back to random subspaces (and finally a plain random draw)
/// whenever the winner duplicates an existing training input.
pub fn propose_point(
    ensemble: &Ensemble,
    bounds: &Bounds,
    train: &Dataset,
    cfg: &AcquisitionConfig,
    rng: &mut GeneticRng,
) -> Proposal {
    let full = maximize_uncertainty(ensemble, bounds, cfg, rng);
    if !duplicates_any(&full.point, train, bounds, cfg.duplicate_tol) {
        return full;
    }
    let half_widths: Vec<f64> = bounds
        .ranges()
        .iter()
        .map(|r| r * cfg.subspace_half_width)
        .collect();
    for _ in 0..cfg.subspace_retries {
        let center = bounds.sample(rng);
        let sub = bounds.subbox(&center, &half_widths);
        let (point, delta) = optim::maximize(
            |x| uncertainty(ensemble, x, cfg),
            &sub,
            &cfg.optimizer,
            rng,
        );
        if !duplicates_any(&point, train, bounds, cfg.duplicate_tol) {
            return Proposal {
                point,
                delta,
                fallback_used: true,
            };
        }
    }
    // last resort: uniform random non-duplicate point
    let mut point = bounds.sample(rng);
    for _ in 0..100_000 {
        if !duplicates_any(&point, train, bounds, cfg.duplicate_tol) {
            break;
        }
        point = bounds.sample(rng);
    }
    let delta = uncertainty(ensemble, &point, cfg);
    Proposal {
        point,
        delta,
        fallback_used: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledPoint;
    use crate::ensemble::{EnsembleMember, EnsembleSource};
    use crate::model::{Op, Operand, StackModel};
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn member(model: StackModel) -> EnsembleMember {
        EnsembleMember {
            model,
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// Committee of models `x + c` for the given offsets.
    fn offset_ensemble(offsets: &[f64]) -> Ensemble {
        let members = offsets
            .iter()
            .map(|&c| {
                member(StackModel::new(
                    vec![Op::Add],
                    vec![Operand::Var(0), Operand::Const(c)],
                ))
            })
            .collect();
        Ensemble {
            members,
            source: EnsembleSource::Clustered,
        }
    }

    /// Committee of constant models with the given values.
    fn constant_ensemble(values: &[f64]) -> Ensemble {
        let members = values
            .iter()
            .map(|&c| {
                member(StackModel::new(
                    vec![Op::Add],
                    vec![Operand::Const(c), Operand::Const(0.0)],
                ))
            })
            .collect();
        Ensemble {
            members,
            source: EnsembleSource::Clustered,
        }
    }

    #[test]
    fn agreement_means_zero_uncertainty() {
        let cfg = AcquisitionConfig::default();
        let ens = constant_ensemble(&[5.0, 5.0, 5.0]);
        assert_eq!(uncertainty(&ens, &[0.0], &cfg), 0.0);
        let two = constant_ensemble(&[3.0, 3.0]);
        assert_eq!(uncertainty(&two, &[0.0], &cfg), 0.0);
    }

    #[test]
    fn one_to_ten_worked_example() {
        let cfg = AcquisitionConfig::default();
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let ens = constant_ensemble(&values);
        let delta = uncertainty(&ens, &[0.0], &cfg);
        // std 3.02765, trimmed mean of {4,5,6,7} = 5.5
        assert_relative_eq!(delta, 0.55048, max_relative = 2e-4);
        assert_relative_eq!(delta, 3.0276503540974917 / 5.5, max_relative = 1e-12);
    }

    #[test]
    fn uncertainty_is_permutation_and_scale_invariant() {
        let cfg = AcquisitionConfig::default();
        let mut rng = rng_from_seed(12);
        for _ in 0..200 {
            let n = rng.gen_range(2..=10);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let base = delta_from_responses(&values, &cfg);
            assert!(base >= 0.0);

            let mut shuffled = values.clone();
            shuffled.reverse();
            assert_relative_eq!(
                delta_from_responses(&shuffled, &cfg),
                base,
                max_relative = 1e-12
            );

            let lambda = rng.gen_range(0.1..10.0);
            let scaled: Vec<f64> = values.iter().map(|v| v * lambda).collect();
            if base > 0.0 {
                assert_relative_eq!(
                    delta_from_responses(&scaled, &cfg),
                    base,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn invalid_members_contribute_signed_sentinels() {
        let cfg = AcquisitionConfig::default();
        // first member returns -3, second divides by zero at x=0
        let finite = member(StackModel::new(
            vec![Op::Add],
            vec![Operand::Const(-3.0), Operand::Const(0.0)],
        ));
        let invalid = member(StackModel::new(
            vec![Op::Inverse],
            vec![Operand::Var(0)],
        ));
        let ens = Ensemble {
            members: vec![finite, invalid],
            source: EnsembleSource::Clustered,
        };
        let got = uncertainty(&ens, &[0.0], &cfg);
        let expected = delta_from_responses(&[-3.0, -1e6], &cfg);
        assert_relative_eq!(got, expected, max_relative = 1e-12);

        // invalid member first: no finite value seen yet, sign is positive
        let ens = Ensemble {
            members: vec![
                member(StackModel::new(vec![Op::Inverse], vec![Operand::Var(0)])),
                member(StackModel::new(
                    vec![Op::Add],
                    vec![Operand::Const(2.0), Operand::Const(0.0)],
                )),
            ],
            source: EnsembleSource::Clustered,
        };
        let got = uncertainty(&ens, &[0.0], &cfg);
        let expected = delta_from_responses(&[1e6, 2.0], &cfg);
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn maximizer_matches_grid_scan() {
        // members x and x+1 on [1,2]: delta(x) = (1/sqrt(2)) / (x + 0.5),
        // decreasing, so the peak sits at the left edge
        let cfg = AcquisitionConfig::default();
        let ens = offset_ensemble(&[0.0, 1.0]);
        let bounds = Bounds::new(vec![(1.0, 2.0)]);
        let proposal = maximize_uncertainty(&ens, &bounds, &cfg, &mut rng_from_seed(3));

        let mut grid_best = (f64::MIN, 0.0);
        for i in 0..=10_000 {
            let x = 1.0 + i as f64 / 10_000.0;
            let d = uncertainty(&ens, &[x], &cfg);
            if d > grid_best.0 {
                grid_best = (d, x);
            }
        }
        assert!(proposal.delta >= grid_best.0 - 1e-9);
        assert!((proposal.point[0] - grid_best.1).abs() <= 1e-4);
        assert_relative_eq!(
            proposal.delta,
            (0.5f64).sqrt() / 1.5,
            max_relative = 1e-9
        );
    }

    #[test]
    fn identical_members_yield_zero_delta_inside_box() {
        let cfg = AcquisitionConfig::default();
        let ens = offset_ensemble(&[2.0, 2.0]);
        let bounds = Bounds::new(vec![(0.0, 4.0)]);
        let p = maximize_uncertainty(&ens, &bounds, &cfg, &mut rng_from_seed(9));
        assert_eq!(p.delta, 0.0);
        assert!(bounds.contains(&p.point));
    }

    #[test]
    fn empty_training_set_never_falls_back() {
        let cfg = AcquisitionConfig::default();
        let ens = offset_ensemble(&[0.0, 1.0]);
        let bounds = Bounds::new(vec![(1.0, 2.0)]);
        let train = Dataset::default();
        let p = propose_point(&ens, &bounds, &train, &cfg, &mut rng_from_seed(4));
        assert!(!p.fallback_used);
        assert!(bounds.contains(&p.point));
    }

    #[test]
    fn duplicate_of_global_argmax_triggers_fallback() {
        let cfg = AcquisitionConfig::default();
        let ens = offset_ensemble(&[0.0, 1.0]);
        let bounds = Bounds::new(vec![(1.0, 2.0)]);
        // the unique argmax is the left edge; plant it in the training set
        let train = Dataset::new(vec![LabeledPoint::new(vec![1.0], 0.0)]);
        let p = propose_point(&ens, &bounds, &train, &cfg, &mut rng_from_seed(5));
        assert!(p.fallback_used);
        assert!(bounds.contains(&p.point));
        assert!(!duplicates_any(&p.point, &train, &bounds, cfg.duplicate_tol));
    }

    #[test]
    fn proposals_never_duplicate_training_points() {
        let mut cfg = AcquisitionConfig::default();
        cfg.optimizer.generations = 20; // keep the fuzz fast
        let mut rng = rng_from_seed(6);
        for round in 0..60 {
            let ens = offset_ensemble(&[0.0, 0.5 + (round % 5) as f64]);
            let bounds = Bounds::new(vec![(0.0, 1.0)]);
            let mut train = Dataset::default();
            for i in 0..10 {
                train.push(LabeledPoint::new(vec![i as f64 / 10.0], 0.0));
            }
            // saturate the argmax too
            train.push(LabeledPoint::new(vec![0.0], 0.0));
            let p = propose_point(&ens, &bounds, &train, &cfg, &mut rng);
            assert!(!duplicates_any(&p.point, &train, &bounds, cfg.duplicate_tol));
            assert!(bounds.contains(&p.point));
        }
    }

    #[test]
    fn optimizer_beats_uniform_probes() {
        let mut cfg = AcquisitionConfig::default();
        cfg.optimizer.generations = 60;
        let mut rng = rng_from_seed(13);
        for seed in 0..10 {
            let ens = offset_ensemble(&[0.0, 1.0 + seed as f64 * 0.3]);
            let bounds = Bounds::new(vec![(0.5, 3.0)]);
            let p = maximize_uncertainty(&ens, &bounds, &cfg, &mut rng);
            let mut best_probe = f64::MIN;
            for _ in 0..1000 {
                let x = bounds.sample(&mut rng);
                best_probe = best_probe.max(uncertainty(&ens, &x, &cfg));
            }
            assert!(
                p.delta >= best_probe - 1e-9,
                "optimizer {} below probe floor {}",
                p.delta,
                best_probe
            );
        }
    }
}
