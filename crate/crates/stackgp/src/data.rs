//! Labeled samples, datasets and variable boxes.

use serde::{Deserialize, Serialize};

/// One observation: an input vector (one entry per equation variable) and
/// the oracle response at that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub inputs: Vec<f64>,
    pub response: f64,
}

impl LabeledPoint {
    pub fn new(inputs: Vec<f64>, response: f64) -> Self {
        Self { inputs, response }
    }
}

/// An ordered collection of labeled points. Order matters: runs replay
/// deterministically, and clustering/acquisition iterate points by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<LabeledPoint>,
}

impl Dataset {
    pub fn new(points: Vec<LabeledPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, point: LabeledPoint) {
        self.points.push(point);
    }

    pub fn responses(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.response)
    }

    /// Number of input coordinates, 0 for an empty set.
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.inputs.len())
    }
}

/// Axis-aligned search box: per-variable `(lo, hi)` with `lo < hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub vars: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(vars: Vec<(f64, f64)>) -> Self {
        debug_assert!(vars.iter().all(|&(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi));
        Self { vars }
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.vars.len()
            && point
                .iter()
                .zip(&self.vars)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// Width of each coordinate's interval.
    pub fn ranges(&self) -> Vec<f64> {
        self.vars.iter().map(|&(lo, hi)| hi - lo).collect()
    }

    /// Uniform sample inside the box.
    pub fn sample(&self, rng: &mut crate::rng::GeneticRng) -> Vec<f64> {
        use rand::Rng;
        self.vars
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect()
    }

    /// Sub-box centered at `center` with the given per-coordinate half
    /// widths, clipped back into this box.
    pub fn subbox(&self, center: &[f64], half_widths: &[f64]) -> Bounds {
        let vars = self
            .vars
            .iter()
            .zip(center.iter().zip(half_widths))
            .map(|(&(lo, hi), (&c, &hw))| {
                let a = (c - hw).max(lo);
                let b = (c + hw).min(hi);
                // keep a usable interval even when the center sits on an edge
                if a < b {
                    (a, b)
                } else {
                    (lo, hi)
                }
            })
            .collect();
        Bounds::new(vars)
    }
}

/// True when `candidate` duplicates `existing` under the per-coordinate
/// relative tolerance: every coordinate is within `tol * range` of the
/// existing point's coordinate.
pub fn is_duplicate_point(candidate: &[f64], existing: &[f64], ranges: &[f64], tol: f64) -> bool {
    candidate
        .iter()
        .zip(existing)
        .zip(ranges)
        .all(|((&c, &e), &r)| (c - e).abs() < tol * r)
}

/// True when `candidate` duplicates any training input.
pub fn duplicates_any(candidate: &[f64], train: &Dataset, bounds: &Bounds, tol: f64) -> bool {
    let ranges = bounds.ranges();
    train
        .points
        .iter()
        .any(|p| is_duplicate_point(candidate, &p.inputs, &ranges, tol))
}
