//! Seeded k-means on points of the complex plane.
//!
//! Initialisation is k-means++ driven by a ChaCha generator, followed by
//! Lloyd iterations until the assignment stops changing or 100 rounds have
//! run. Points are visited in a canonical order (lexicographic on real then
//! imaginary part), so the result does not depend on the order in which the
//! caller lists them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Cluster index of each input point, in input order.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Complex64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Sum of squared distances from each point to its centroid.
    pub fn distortion(&self, points: &[Complex64]) -> f64 {
        points.iter().zip(&self.assignments).map(|(p, &a)| (p - self.centroids[a]).norm_sqr()).sum()
    }
}

pub fn kmeans(points: &[Complex64], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints { needed: k, got: points.len() });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].re.total_cmp(&points[b].re).then(points[a].im.total_cmp(&points[b].im))
    });
    let sorted: Vec<Complex64> = order.iter().map(|&i| points[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(&sorted, k, &mut rng);
    let mut assign = vec![usize::MAX; sorted.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        for (p, a) in sorted.iter().zip(assign.iter_mut()) {
            let best = nearest(&centroids, *p);
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Complex64::new(0.0, 0.0); k];
        let mut counts = vec![0usize; k];
        for (p, &a) in sorted.iter().zip(&assign) {
            sums[a] += p;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            } else {
                centroids[c] = sorted[farthest(&sorted, &assign, &centroids)];
            }
        }
    }

    let mut assignments = vec![0; points.len()];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = assign[pos];
    }
    Ok(KMeans { assignments, centroids, iterations })
}

fn nearest(centroids: &[Complex64], p: Complex64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = (p - c).norm_sqr();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Index of the point farthest from its own centroid.
fn farthest(points: &[Complex64], assign: &[usize], centroids: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_d = -1.0;
    for (i, (p, &a)) in points.iter().zip(assign).enumerate() {
        let d = (p - centroids[a]).norm_sqr();
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn plus_plus(points: &[Complex64], k: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centroids[0]).norm_sqr()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // never land on a zero-weight point through round-off
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min((p - c).norm_sqr());
        }
    }
    centroids
}
