//! Exact k-nearest-neighbor graph construction and edge noise rate.
//!
//! Neighbor search is a brute-force scan over all nodes. Edges are directed
//! (probe -> neighbor) and are not symmetrized.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LabelVector};

/// One directed kNN edge target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub score: f64,
}

/// Per-node candidate lists, each sorted by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<Vec<Neighbor>>,
}

impl KnnGraph {
    /// Builds a graph from explicit lists, checking the structural invariants.
    pub fn from_lists(k: usize, neighbors: Vec<Vec<Neighbor>>) -> Result<Self> {
        let n = neighbors.len();
        for (probe, list) in neighbors.iter().enumerate() {
            if list.len() > k {
                return Err(Error::validation(format!(
                    "node {probe} has {} neighbors, more than k={k}",
                    list.len()
                )));
            }
            for (pos, nb) in list.iter().enumerate() {
                if nb.id >= n {
                    return Err(Error::NodeOutOfRange { id: nb.id, n });
                }
                if nb.id == probe {
                    return Err(Error::validation(format!("self-loop at node {probe}")));
                }
                if !nb.score.is_finite() {
                    return Err(Error::validation("non-finite edge score"));
                }
                if pos > 0 && list[pos - 1].score < nb.score {
                    return Err(Error::validation(format!(
                        "scores of node {probe} are not non-increasing"
                    )));
                }
            }
        }
        Ok(Self { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.neighbors[node]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.neighbors
    }

    /// All directed edges as `(probe, neighbor, score)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(p, list)| list.iter().map(move |nb| (p, nb.id, nb.score)))
    }

    pub fn contains(&self, probe: usize, neighbor: usize) -> bool {
        self.neighbors[probe].iter().any(|nb| nb.id == neighbor)
    }
}

/// Descending score, then ascending id.
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

/// Exact kNN over cosine similarity of row-normalized features.
///
/// Ties in similarity are broken towards the lower node id, so the result is
/// fully determined by the input.
pub fn build_knn_graph(features: &FeatureMatrix, k: usize) -> Result<KnnGraph> {
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(Error::parameter(format!(
            "k must satisfy 1 <= k < N, got k={k} with N={n}"
        )));
    }
    if !features.is_normalized() {
        return Err(Error::validation(
            "kNN construction expects row-normalized features",
        ));
    }
    let data = features.data();
    let neighbors: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|probe| {
            let p = data.row(probe);
            let mut cands: Vec<Neighbor> = (0..n)
                .filter(|&j| j != probe)
                .map(|j| Neighbor {
                    id: j,
                    score: p.dot(&data.row(j)),
                })
                .collect();
            if k < cands.len() {
                cands.select_nth_unstable_by(k - 1, neighbor_order);
                cands.truncate(k);
            }
            cands.sort_by(neighbor_order);
            cands
        })
        .collect();
    Ok(KnnGraph { k, neighbors })
}

/// Fraction of `node`'s outgoing edges that end at a different label.
pub fn enr(graph: &KnnGraph, labels: &LabelVector, node: usize) -> Result<f64> {
    if node >= graph.len() {
        return Err(Error::NodeOutOfRange {
            id: node,
            n: graph.len(),
        });
    }
    let list = graph.neighbors(node);
    if list.is_empty() {
        return Err(Error::IsolatedNode(node));
    }
    let own = labels.get(node);
    let noisy = list.iter().filter(|nb| labels.get(nb.id) != own).count();
    Ok(noisy as f64 / list.len() as f64)
}

/// Mean ENR over every node with at least one neighbor.
pub fn avg_enr(graph: &KnnGraph, labels: &LabelVector) -> Result<f64> {
    if labels.len() != graph.len() {
        return Err(Error::validation(format!(
            "{} labels for a graph of {} nodes",
            labels.len(),
            graph.len()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for node in 0..graph.len() {
        if graph.neighbors(node).is_empty() {
            continue;
        }
        total += enr(graph, labels, node)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::validation("graph has no edges"));
    }
    Ok(total / counted as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::l2_normalize;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, m: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0));
        l2_normalize(&FeatureMatrix::new(data).unwrap()).unwrap()
    }

    // O(N^2) reference: score every pair, full sort with the same tie rule.
    fn reference_knn(features: &FeatureMatrix, k: usize) -> Vec<Vec<usize>> {
        let n = features.rows();
        (0..n)
            .map(|i| {
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let s: f64 = (0..features.cols())
                            .map(|c| features.data()[[i, c]] * features.data()[[j, c]])
                            .sum();
                        (s, j)
                    })
                    .collect();
                all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                all.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect()
    }

    #[test]
    fn orthonormal_ties_pick_lower_id() {
        let f = l2_normalize(&FeatureMatrix::new(Array2::eye(3)).unwrap()).unwrap();
        let g = build_knn_graph(&f, 1).unwrap();
        assert_eq!(g.neighbors(0)[0].id, 1);
        assert_eq!(g.neighbors(1)[0].id, 0);
        assert_eq!(g.neighbors(2)[0].id, 0);
    }

    #[test]
    fn two_tight_clusters() {
        let f = FeatureMatrix::new(array![
            [1.0, 0.01],
            [0.0, 1.0],
            [1.0, 0.02],
            [0.01, 1.0]
        ])
        .unwrap();
        let g = build_knn_graph(&l2_normalize(&f).unwrap(), 1).unwrap();
        let picks: Vec<usize> = (0..4).map(|i| g.neighbors(i)[0].id).collect();
        assert_eq!(picks, vec![2, 3, 0, 1]);
    }

    #[test]
    fn matches_reference_scan() {
        let f = random_features(100, 8, 11);
        let g = build_knn_graph(&f, 10).unwrap();
        let reference = reference_knn(&f, 10);
        for i in 0..100 {
            let ids: Vec<usize> = g.neighbors(i).iter().map(|nb| nb.id).collect();
            assert_eq!(ids, reference[i]);
        }
    }

    #[test]
    fn k_out_of_range() {
        let f = random_features(5, 3, 1);
        assert!(matches!(build_knn_graph(&f, 5), Err(Error::Parameter(_))));
        assert!(matches!(build_knn_graph(&f, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn unnormalized_rejected() {
        let f = FeatureMatrix::new(array![[1.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!(build_knn_graph(&f, 1).is_err());
    }

    #[test]
    fn graph_invariants_hold() {
        let f = random_features(60, 5, 2);
        let g = build_knn_graph(&f, 7).unwrap();
        assert!(KnnGraph::from_lists(7, g.lists().to_vec()).is_ok());
    }

    fn nb(id: usize, score: f64) -> Neighbor {
        Neighbor { id, score }
    }

    #[test]
    fn enr_direct_counts() {
        let g = KnnGraph::from_lists(
            4,
            vec![
                vec![nb(1, 0.9), nb(2, 0.8), nb(3, 0.7), nb(4, 0.6)],
                vec![nb(0, 0.9)],
                vec![],
                vec![],
                vec![],
            ],
        )
        .unwrap();
        let labels = LabelVector::new(vec![0, 0, 0, 1, 0]);
        assert_eq!(enr(&g, &labels, 0).unwrap(), 0.25);
        assert_eq!(enr(&g, &labels, 1).unwrap(), 0.0);
        assert!(matches!(enr(&g, &labels, 2), Err(Error::IsolatedNode(2))));
        assert_eq!(avg_enr(&g, &labels).unwrap(), 0.125);
    }

    #[test]
    fn avg_enr_two_nodes() {
        let g = KnnGraph::from_lists(2, vec![vec![nb(1, 0.5)], vec![nb(0, 0.5), nb(2, 0.1)], vec![]])
            .unwrap();
        let labels = LabelVector::new(vec![0, 0, 1]);
        assert_eq!(avg_enr(&g, &labels).unwrap(), 0.25);
    }

    #[test]
    fn avg_enr_of_empty_graph_errors() {
        let g = KnnGraph::from_lists(1, vec![vec![], vec![]]).unwrap();
        assert!(avg_enr(&g, &LabelVector::new(vec![0, 1])).is_err());
    }

    #[test]
    fn enr_matches_edge_scan_on_random_labels() {
        let f = random_features(80, 6, 5);
        let g = build_knn_graph(&f, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = LabelVector::new((0..80).map(|_| rng.random_range(0..4)).collect());
        let mut noisy = vec![0usize; 80];
        let mut all = vec![0usize; 80];
        for (p, q, _) in g.edges() {
            all[p] += 1;
            if labels.get(p) != labels.get(q) {
                noisy[p] += 1;
            }
        }
        for i in 0..80 {
            assert_eq!(enr(&g, &labels, i).unwrap(), noisy[i] as f64 / all[i] as f64);
        }
    }

    #[test]
    fn avg_enr_recovers_injected_rates() {
        // Node i gets 10 edges of which rates[i]*10 cross the label boundary.
        let rates: [f64; 5] = [0.0, 0.1, 0.3, 0.5, 0.2];
        let n_core = rates.len();
        let n = n_core + 20;
        let mut labels = vec![0usize; n];
        for l in labels.iter_mut().skip(n_core + 10) {
            *l = 1;
        }
        let mut lists = vec![Vec::new(); n];
        for (i, r) in rates.iter().enumerate() {
            let cross = (r * 10.0).round() as usize;
            let mut list: Vec<Neighbor> = (0..10)
                .map(|e| {
                    let target = if e < cross { n_core + 10 + e } else { n_core + e };
                    nb(target, 1.0 - e as f64 * 0.01)
                })
                .collect();
            list.sort_by(neighbor_order);
            lists[i] = list;
        }
        let g = KnnGraph::from_lists(10, lists).unwrap();
        let expected = rates.iter().sum::<f64>() / n_core as f64;
        assert!((avg_enr(&g, &LabelVector::new(labels)).unwrap() - expected).abs() < 1e-12);
    }

    mod props {
        use super::{build_knn_graph, enr, random_features, ChaCha8Rng, LabelVector};
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn knn_is_deterministic(seed in 0u64..1000, n in 3usize..40, k in 1usize..3) {
                let f = random_features(n, 4, seed);
                let a = build_knn_graph(&f, k).unwrap();
                let b = build_knn_graph(&f, k).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn merging_labels_never_raises_enr(seed in 0u64..1000, merge_a in 0usize..4, merge_b in 0usize..4) {
                let f = random_features(30, 4, seed);
                let g = build_knn_graph(&f, 4).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                let raw: Vec<usize> = (0..30).map(|_| rng.random_range(0..4)).collect();
                let merged: Vec<usize> = raw.iter().map(|&l| if l == merge_b { merge_a } else { l }).collect();
                let before = LabelVector::new(raw);
                let after = LabelVector::new(merged);
                for i in 0..30 {
                    prop_assert!(enr(&g, &after, i).unwrap() <= enr(&g, &before, i).unwrap());
                }
            }
        }
    }
}
