//! Bounded global maximization: differential evolution with Nelder-Mead
//! polish. Deterministic under a fixed seed; every candidate is clipped
//! into the box.

use crate::data::Bounds;
use crate::rng::GeneticRng;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// DE population is `pop_factor * dim`, capped below.
    pub pop_factor: usize,
    pub pop_cap: usize,
    pub generations: usize,
    /// DE differential weight.
    pub f: f64,
    /// DE crossover rate.
    pub cr: f64,
    /// Number of best DE individuals polished with Nelder-Mead.
    pub polish_starts: usize,
    /// Nelder-Mead iterations per polish.
    pub polish_iters: usize,
    /// Uniform samples screened alongside DE; the best few are polished
    /// too. Guards against spiky landscapes where population methods can
    /// miss thin high-value regions that plain random search finds.
    pub screen_samples: usize,
    /// Screened points promoted to a Nelder-Mead polish.
    pub screen_polish_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            pop_factor: 15,
            pop_cap: 120,
            generations: 200,
            f: 0.8,
            cr: 0.9,
            polish_starts: 8,
            polish_iters: 120,
            screen_samples: 2000,
            screen_polish_starts: 4,
        }
    }
}

fn clip(point: &mut [f64], bounds: &Bounds) {
    for (x, &(lo, hi)) in point.iter_mut().zip(&bounds.vars) {
        *x = x.clamp(lo, hi);
    }
}

/// Maximizes `objective` over the box. Returns the best point found and its
/// value. Local optima are acceptable to callers; the DE stage provides
/// global coverage and Nelder-Mead sharpens the best candidates.
pub fn maximize(
    objective: impl Fn(&[f64]) -> f64,
    bounds: &Bounds,
    cfg: &OptimizerConfig,
    rng: &mut GeneticRng,
) -> (Vec<f64>, f64) {
    let dim = bounds.dim();
    assert!(dim > 0);
    let np = (cfg.pop_factor * dim).min(cfg.pop_cap).max(4);

    let mut pop: Vec<Vec<f64>> = (0..np).map(|_| bounds.sample(rng)).collect();
    let mut values: Vec<f64> = pop.iter().map(|x| objective(x)).collect();

    // rand/1/bin
    for _ in 0..cfg.generations {
        for i in 0..np {
            let mut pick = || loop {
                let r = rng.gen_range(0..np);
                if r != i {
                    return r;
                }
            };
            let (r1, r2, r3) = {
                let a = pick();
                let b = loop {
                    let r = pick();
                    if r != a {
                        break r;
                    }
                };
                let c = loop {
                    let r = pick();
                    if r != a && r != b {
                        break r;
                    }
                };
                (a, b, c)
            };
            let mut trial = pop[i].clone();
            let j_rand = rng.gen_range(0..dim);
            for d in 0..dim {
                if d == j_rand || rng.gen::<f64>() < cfg.cr {
                    trial[d] = pop[r1][d] + cfg.f * (pop[r2][d] - pop[r3][d]);
                }
            }
            clip(&mut trial, bounds);
            let value = objective(&trial);
            if value >= values[i] {
                pop[i] = trial;
                values[i] = value;
            }
        }
    }

    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    // uniform screening pass
    let mut screened: Vec<(Vec<f64>, f64)> = (0..cfg.screen_samples)
        .map(|_| {
            let x = bounds.sample(rng);
            let v = objective(&x);
            (x, v)
        })
        .collect();
    screened.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best_point = pop[order[0]].clone();
    let mut best_value = values[order[0]];
    for (x, v) in screened.iter().take(cfg.screen_polish_starts.max(1)) {
        if *v > best_value {
            best_value = *v;
            best_point = x.clone();
        }
    }
    for &idx in order.iter().take(cfg.polish_starts) {
        let (p, v) = nelder_mead(&objective, &pop[idx], bounds, cfg.polish_iters);
        if v > best_value {
            best_value = v;
            best_point = p;
        }
    }
    for (x, _) in screened.iter().take(cfg.screen_polish_starts) {
        let (p, v) = nelder_mead(&objective, x, bounds, cfg.polish_iters);
        if v > best_value {
            best_value = v;
            best_point = p;
        }
    }
    (best_point, best_value)
}

/// Standard Nelder-Mead on the negated objective, with every vertex clipped
/// into the box.
fn nelder_mead(
    objective: &impl Fn(&[f64]) -> f64,
    start: &[f64],
    bounds: &Bounds,
    iters: usize,
) -> (Vec<f64>, f64) {
    let dim = bounds.dim();
    let ranges = bounds.ranges();

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for d in 0..dim {
        let mut v = start.to_vec();
        let step = 0.05 * ranges[d];
        v[d] += step;
        if v[d] > bounds.vars[d].1 {
            v[d] = start[d] - step;
        }
        clip(&mut v, bounds);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(v)).collect();

    for _ in 0..iters {
        // order best (highest) first
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        if (values[best] - values[worst]).abs() <= 1e-14 * values[best].abs().max(1.0) {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &idx in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[idx][d];
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            let mut out: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| x + t * (x - y))
                .collect();
            clip(&mut out, bounds);
            out
        };

        let reflected = blend(&centroid, &simplex[worst], 1.0);
        let fr = objective(&reflected);
        if fr > values[best] {
            let expanded = blend(&centroid, &simplex[worst], 2.0);
            let fe = objective(&expanded);
            if fe > fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
            continue;
        }
        if fr > values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
            continue;
        }
        let contracted = blend(&centroid, &simplex[worst], -0.5);
        let fc = objective(&contracted);
        if fc > values[worst] {
            simplex[worst] = contracted;
            values[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        let anchor = simplex[best].clone();
        for idx in 0..=dim {
            if idx == best {
                continue;
            }
            let mut v: Vec<f64> = anchor
                .iter()
                .zip(&simplex[idx])
                .map(|(&a, &x)| a + 0.5 * (x - a))
                .collect();
            clip(&mut v, bounds);
            values[idx] = objective(&v);
            simplex[idx] = v;
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] > values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn finds_quadratic_peak_inside_box() {
        let bounds = Bounds::new(vec![(0.0, 5.0), (0.0, 5.0)]);
        let f = |x: &[f64]| -((x[0] - 2.0).powi(2) + (x[1] - 3.5).powi(2));
        let (p, v) = maximize(f, &bounds, &OptimizerConfig::default(), &mut rng_from_seed(4));
        assert!(v > -1e-10, "value {v}");
        assert!((p[0] - 2.0).abs() < 1e-5);
        assert!((p[1] - 3.5).abs() < 1e-5);
    }

    #[test]
    fn finds_boundary_maximum() {
        let bounds = Bounds::new(vec![(1.0, 2.0)]);
        let f = |x: &[f64]| -x[0]; // maximal at the lower bound
        let (p, _) = maximize(f, &bounds, &OptimizerConfig::default(), &mut rng_from_seed(5));
        assert!((p[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn multimodal_global_peak_is_found() {
        // two bumps, the taller at x = 4
        let bounds = Bounds::new(vec![(0.0, 5.0)]);
        let f = |x: &[f64]| {
            let a = (-(x[0] - 1.0).powi(2) * 8.0).exp();
            let b = 1.5 * (-(x[0] - 4.0).powi(2) * 8.0).exp();
            a + b
        };
        let (p, _) = maximize(f, &bounds, &OptimizerConfig::default(), &mut rng_from_seed(6));
        assert!((p[0] - 4.0).abs() < 1e-4, "landed at {}", p[0]);
    }

    #[test]
    fn deterministic_under_seed() {
        let bounds = Bounds::new(vec![(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        let f = |x: &[f64]| (x[0] * 3.1).sin() + (x[1] * 2.7).cos() - (x[2] - 0.3).powi(2);
        let a = maximize(&f, &bounds, &OptimizerConfig::default(), &mut rng_from_seed(7));
        let b = maximize(&f, &bounds, &OptimizerConfig::default(), &mut rng_from_seed(7));
        assert_eq!(a, b);
    }

    #[test]
    fn points_stay_inside_bounds() {
        let bounds = Bounds::new(vec![(-2.0, -1.0), (10.0, 11.0)]);
        let mut rng = rng_from_seed(8);
        for trial in 0..20 {
            let shift = trial as f64;
            let f = move |x: &[f64]| (x[0] * shift).sin() * (x[1] - 10.5).cos();
            let small = OptimizerConfig {
                generations: 20,
                ..Default::default()
            };
            let (p, _) = maximize(f, &bounds, &small, &mut rng);
            assert!(bounds.contains(&p), "{p:?} outside bounds");
        }
    }
}
