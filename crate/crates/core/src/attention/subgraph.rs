use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::knn::KnnGraph;

/// A seed node plus its kNN, zero-padded to a fixed size `L = k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// Dataset ids, `None` for padding.
    pub node_ids: Vec<Option<usize>>,
    pub features: FeatureMatrix,
    /// `true` for real nodes, `false` for padding.
    pub mask: Vec<bool>,
    pub probe_index: usize,
    /// Symmetrized kNN edges among the real nodes (used by the plain GCN).
    pub adjacency: Array2<f64>,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Positions of real (unpadded) nodes.
    pub fn real_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
    }
}

pub fn sample_subgraph(
    features: &FeatureMatrix,
    graph: &KnnGraph,
    seed_node: usize,
) -> Result<Subgraph> {
    let n = features.rows();
    if graph.len() != n {
        return Err(Error::validation("graph and features disagree on node count"));
    }
    if seed_node >= n {
        return Err(Error::NodeOutOfRange { id: seed_node, n });
    }
    let l = graph.k() + 1;
    let m = features.cols();
    let mut node_ids: Vec<Option<usize>> = std::iter::once(seed_node)
        .chain(graph.neighbors(seed_node).iter().map(|nb| nb.id))
        .map(Some)
        .collect();
    node_ids.resize(l, None);

    let mut data = Array2::zeros((l, m));
    for (pos, id) in node_ids.iter().enumerate() {
        if let Some(id) = id {
            data.row_mut(pos).assign(&features.row(*id));
        }
    }
    let mask: Vec<bool> = node_ids.iter().map(Option::is_some).collect();
    let mut adjacency = Array2::zeros((l, l));
    for (a, ida) in node_ids.iter().enumerate() {
        for (b, idb) in node_ids.iter().enumerate() {
            if let (Some(x), Some(y)) = (ida, idb) {
                if a != b && (graph.contains(*x, *y) || graph.contains(*y, *x)) {
                    adjacency[[a, b]] = 1.0;
                }
            }
        }
    }
    let mut sub_features = FeatureMatrix::new(data)?;
    if features.is_normalized() {
        sub_features = FeatureMatrix::assume_normalized(sub_features.into_data());
    }
    Ok(Subgraph {
        node_ids,
        features: sub_features,
        mask,
        probe_index: 0,
        adjacency,
    })
}

/// Splits a shuffled node order into batches of `k_seed` seeds; the last
/// batch may be short. One pass covers every node once.
pub fn seed_batches<R: Rng + ?Sized>(n: usize, k_seed: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k_seed == 0 {
        return Err(Error::parameter("k_seed must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(k_seed).map(<[usize]>::to_vec).collect())
}
