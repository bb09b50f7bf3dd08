//! Local Outlier Factor over complex points.
//!
//! Neighbourhoods hold exactly k points, chosen by ascending distance with
//! ties going to the earlier point. Neighbour search uses a 2-d tree; runs of
//! exact duplicates that already fill a neighbourhood are resolved without a
//! search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use num_complex::Complex64;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;
const LRD_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: Complex64, b: Complex64) -> f64 {
    let dx = a.re - b.re;
    let dy = a.im - b.im;
    dx * dx + dy * dy
}

fn coord(p: Complex64, axis: usize) -> f64 {
    if axis == 0 { p.re } else { p.im }
}

enum Node {
    Leaf(Vec<usize>),
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

struct KdTree<'a> {
    points: &'a [Complex64],
    root: Node,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [Complex64]) -> Self {
        let idx: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, idx, 0);
        Self { points, root }
    }

    fn build_node(points: &[Complex64], mut idx: Vec<usize>, depth: usize) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf(idx);
        }
        let axis = depth % 2;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| coord(points[a], axis).total_cmp(&coord(points[b], axis)));
        let value = coord(points[idx[mid]], axis);
        let right = idx.split_off(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, idx, depth + 1)),
            right: Box::new(Self::build_node(points, right, depth + 1)),
        }
    }

    /// The k nearest points to `points[query]`, excluding itself, ordered by
    /// (distance, index).
    fn knn(&self, query: usize, k: usize) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, query, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn search(&self, node: &Node, query: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let q = self.points[query];
        match node {
            Node::Leaf(idx) => {
                for &i in idx {
                    if i == query {
                        continue;
                    }
                    let cand = Candidate { d2: dist2(q, self.points[i]), index: i };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = coord(q, *axis) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                let full = heap.len() == k;
                if !full || diff * diff <= heap.peek().expect("heap is full").d2 {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

/// k nearest neighbours (excluding the point itself) of every point.
fn neighbourhoods(points: &[Complex64], k: usize) -> Vec<Vec<Candidate>> {
    let mut groups: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        groups.entry((p.re.to_bits(), p.im.to_bits())).or_default().push(i);
    }
    let tree = KdTree::build(points);
    (0..points.len())
        .map(|i| {
            let p = points[i];
            let group = &groups[&(p.re.to_bits(), p.im.to_bits())];
            if group.len() > k {
                group.iter().filter(|&&j| j != i).take(k).map(|&j| Candidate { d2: 0.0, index: j }).collect()
            } else {
                tree.knn(i, k)
            }
        })
        .collect()
}

/// LOF score of every point.
pub fn lof_scores(points: &[Complex64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidConfig("lof_k must be at least 1".into()));
    }
    if points.len() <= k {
        return Err(Error::TooFewPoints { needed: k + 1, got: points.len() });
    }
    let hoods = neighbourhoods(points, k);
    Ok(scores_from(&hoods))
}

fn scores_from(hoods: &[Vec<Candidate>]) -> Vec<f64> {
    let k_distance: Vec<f64> = hoods.iter().map(|h| h.last().map_or(0.0, |c| c.d2.sqrt())).collect();
    let lrd: Vec<f64> = hoods
        .iter()
        .map(|h| {
            let reach: f64 = h.iter().map(|c| k_distance[c.index].max(c.d2.sqrt())).sum();
            1.0 / (reach / h.len() as f64 + LRD_GUARD)
        })
        .collect();
    hoods
        .iter()
        .enumerate()
        .map(|(i, h)| h.iter().map(|c| lrd[c.index]).sum::<f64>() / h.len() as f64 / lrd[i])
        .collect()
}

/// Points whose LOF does not exceed `threshold`, in their original order.
pub fn lof_filter(points: &[Complex64], k: usize, threshold: f64) -> Result<Vec<Complex64>> {
    let scores = lof_scores(points, k)?;
    Ok(points.iter().zip(scores).filter(|(_, s)| *s <= threshold).map(|(p, _)| *p).collect())
}

/// Quadratic reference used to check the tree search.
pub fn lof_scores_brute_force(points: &[Complex64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || points.len() <= k {
        return Err(Error::TooFewPoints { needed: k + 1, got: points.len() });
    }
    let hoods: Vec<Vec<Candidate>> = (0..points.len())
        .map(|i| {
            let mut all: Vec<Candidate> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| Candidate { d2: dist2(points[i], points[j]), index: j })
                .collect();
            all.sort();
            all.truncate(k);
            all
        })
        .collect();
    Ok(scores_from(&hoods))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_interior_is_inlier() {
        let pts: Vec<Complex64> = (0..10).flat_map(|i| (0..10).map(move |j| c(i as f64, j as f64))).collect();
        let scores = lof_scores(&pts, 20).unwrap();
        assert_eq!(scores, lof_scores_brute_force(&pts, 20).unwrap());
        assert_eq!(lof_filter(&pts, 20, 1.5).unwrap().len(), 100);
        for i in 3..7 {
            for j in 3..7 {
                assert!((scores[i * 10 + j] - 1.0).abs() < 0.1, "{}", scores[i * 10 + j]);
            }
        }
    }

    #[test]
    fn isolated_point_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts: Vec<Complex64> = (0..50)
            .map(|_| {
                let r = rng.random::<f64>().sqrt();
                Complex64::from_polar(r, rng.random::<f64>() * std::f64::consts::TAU)
            })
            .collect();
        pts.push(c(10.0, 0.0));
        let kept = lof_filter(&pts, 20, 1.5).unwrap();
        assert!(!kept.contains(&c(10.0, 0.0)));
        assert!(kept.len() >= 45);
        assert_eq!(lof_scores(&pts, 20).unwrap(), lof_scores_brute_force(&pts, 20).unwrap());
    }

    #[test]
    fn duplicates_are_retained() {
        let mut pts = vec![c(1.0, 1.0); 30];
        pts.extend((1..=10).map(|i| c(1.0 + 0.01 * i as f64, 1.0)));
        let scores = lof_scores(&pts, 20).unwrap();
        assert!(scores.iter().all(|s| s.is_finite()));
        let kept = lof_filter(&pts, 20, 1.5).unwrap();
        assert_eq!(kept.iter().filter(|&&p| p == c(1.0, 1.0)).count(), 30);
        assert_eq!(scores, lof_scores_brute_force(&pts, 20).unwrap());
    }

    #[test]
    fn needs_more_than_k_points() {
        let pts = vec![c(0.0, 0.0); 20];
        assert_eq!(lof_scores(&pts, 20), Err(Error::TooFewPoints { needed: 21, got: 20 }));
    }

    proptest! {
        #[test]
        fn tree_matches_brute_force(raw in prop::collection::vec((-3i32..3, -3i32..3, 0.0f64..1.0), 6..200), k in 1usize..6, snap in proptest::bool::ANY) {
            // snapping to a lattice forces many distance ties and duplicates
            let pts: Vec<Complex64> = raw.iter().map(|&(a, b, f)| if snap { c(a as f64, b as f64) } else { c(a as f64 + f, b as f64 - f * 0.5) }).collect();
            prop_assert_eq!(lof_scores(&pts, k).unwrap(), lof_scores_brute_force(&pts, k).unwrap());
        }

        #[test]
        fn filter_never_adds_points(raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 25..80)) {
            let pts: Vec<Complex64> = raw.iter().map(|&(a, b)| c(a, b)).collect();
            prop_assert!(lof_filter(&pts, 20, 1.5).unwrap().len() <= pts.len());
        }
    }
}
