//! Multiple-tests similarity (Sim-M) and the statistics behind it.
//!
//! Sim-M scores a pair `(i, j)` by running a single test of each common
//! candidate `k` against both endpoints and averaging the products. The
//! [`bounds`] module sizes the candidate pool and picks the decision
//! threshold from Chernoff tail bounds; [`simulate`] checks those guarantees
//! by Monte Carlo.

pub mod bounds;
pub mod simulate;
mod truncnorm;

pub use bounds::{
    chernoff_tail_bound, general_chernoff_tail_bound, min_m_binary, min_m_binary_bound,
    min_m_real, min_m_real_bound, separation_holds, single_test_expectations, threshold_s_t,
};
pub use simulate::{simulate, SimulationReport, TrialRecord};
pub use truncnorm::TruncatedNormal;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, SimilarityKind};
use crate::knn::KnnGraph;

/// Whether single tests produce 0/1 outcomes or raw similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMode {
    Binary,
    Real,
}

/// Parameters of the two-category test model.
///
/// Binary mode uses `p`, `q`; real mode uses `s_plus`, `s_minus` and draws
/// similarities from a truncated Gaussian with standard deviation `noise_sd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestModel {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub m: usize,
    pub gamma: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub noise_sd: f64,
    pub mode: TestMode,
}

pub const DEFAULT_NOISE_SD: f64 = 0.2;

impl TestModel {
    pub fn binary(p: f64, q: f64, alpha: f64, m: usize, gamma: f64) -> Result<Self> {
        let model = Self {
            p,
            q,
            alpha,
            m,
            gamma,
            s_plus: 0.0,
            s_minus: 0.0,
            noise_sd: DEFAULT_NOISE_SD,
            mode: TestMode::Binary,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn real(s_plus: f64, s_minus: f64, alpha: f64, m: usize, gamma: f64) -> Result<Self> {
        let model = Self {
            p: 0.0,
            q: 0.0,
            alpha,
            m,
            gamma,
            s_plus,
            s_minus,
            noise_sd: DEFAULT_NOISE_SD,
            mode: TestMode::Real,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Result<Self> {
        self.noise_sd = sd;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.p,
            self.q,
            self.alpha,
            self.gamma,
            self.s_plus,
            self.s_minus,
            self.noise_sd,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::parameter("model parameters must be finite"));
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::parameter(format!(
                "alpha must lie in (0.5, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::parameter(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        match self.mode {
            TestMode::Binary => {
                if !(self.p > 0.0 && self.p <= 1.0) {
                    return Err(Error::parameter(format!("p must lie in (0, 1], got {}", self.p)));
                }
                if !(self.q >= 0.0 && self.q < 1.0) {
                    return Err(Error::parameter(format!("q must lie in [0, 1), got {}", self.q)));
                }
                if !(self.p > self.q) {
                    return Err(Error::parameter(format!(
                        "p must exceed q, got p={} q={}",
                        self.p, self.q
                    )));
                }
            }
            TestMode::Real => {
                let inside = |s: f64| s > -1.0 && s < 1.0;
                if !inside(self.s_plus) || !inside(self.s_minus) {
                    return Err(Error::parameter("s_plus and s_minus must lie in (-1, 1)"));
                }
                if !(self.s_plus > self.s_minus) {
                    return Err(Error::parameter(format!(
                        "s_plus must exceed s_minus, got {} and {}",
                        self.s_plus, self.s_minus
                    )));
                }
                if !(self.noise_sd > 0.0) {
                    return Err(Error::parameter("noise_sd must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Per-candidate probability (or mean) of a noisy single-test edge and
    /// of a missed single-test edge.
    pub fn single_test_rates(&self) -> (f64, f64) {
        match self.mode {
            TestMode::Binary => ((1.0 - self.alpha) * self.q, self.alpha * (1.0 - self.p)),
            TestMode::Real => (
                (1.0 - self.alpha) * self.s_minus,
                self.alpha * (1.0 - self.s_plus),
            ),
        }
    }

    /// `delta = min(noisy rate, miss rate) / gamma`.
    pub fn delta(&self) -> f64 {
        let (noisy, miss) = self.single_test_rates();
        noisy.min(miss) / self.gamma
    }

    /// Expected per-candidate product for a cross-category pair and for a
    /// same-category pair.
    pub fn expected_products(&self) -> (f64, f64) {
        let (hi, lo) = match self.mode {
            TestMode::Binary => (self.p, self.q),
            TestMode::Real => (self.s_plus, self.s_minus),
        };
        (
            hi * lo,
            self.alpha * hi * hi + (1.0 - self.alpha) * lo * lo,
        )
    }

    /// Number of pool members sharing the probe's category, `round(alpha*m)`.
    pub fn same_count(&self) -> usize {
        ((self.alpha * self.m as f64).round() as usize).min(self.m)
    }
}

/// How single tests are turned into Sim-M terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMMode {
    /// Product of raw similarities.
    Real,
    /// Product of indicators `sim >= threshold`.
    Binary { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimMScore {
    pub value: f64,
    /// Number of common candidates the value averages over.
    pub support: usize,
}

/// Ids present in both sorted-by-id slices.
fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut x, mut y) = (0, 0);
    let mut out = Vec::new();
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[x]);
                x += 1;
                y += 1;
            }
        }
    }
    out
}

fn sorted_ids(graph: &KnnGraph, node: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = graph.neighbors(node).iter().map(|nb| nb.id).collect();
    ids.sort_unstable();
    ids
}

/// Sim-M between `i` and `j` over the common candidates `V_i ∩ V_j`,
/// using cosine single tests.
///
/// An empty intersection scores 0 with support 0.
pub fn sim_m(
    graph: &KnnGraph,
    features: &FeatureMatrix,
    i: usize,
    j: usize,
    mode: SimMMode,
) -> Result<SimMScore> {
    sim_m_with(graph, features, i, j, mode, SimilarityKind::Cosine)
}

pub fn sim_m_with(
    graph: &KnnGraph,
    features: &FeatureMatrix,
    i: usize,
    j: usize,
    mode: SimMMode,
    kind: SimilarityKind,
) -> Result<SimMScore> {
    let n = graph.len();
    for id in [i, j] {
        if id >= n || id >= features.rows() {
            return Err(Error::NodeOutOfRange { id, n });
        }
    }
    if i == j {
        return Err(Error::parameter("sim_m needs two distinct nodes"));
    }
    let common = intersect_sorted(&sorted_ids(graph, i), &sorted_ids(graph, j));
    sim_m_over(features, i, j, &common, mode, kind)
}

fn sim_m_over(
    features: &FeatureMatrix,
    i: usize,
    j: usize,
    common: &[usize],
    mode: SimMMode,
    kind: SimilarityKind,
) -> Result<SimMScore> {
    if common.is_empty() {
        return Ok(SimMScore {
            value: 0.0,
            support: 0,
        });
    }
    let mut total = 0.0;
    for &k in common {
        let ik = kind.score(features.row(i), features.row(k))?;
        let kj = kind.score(features.row(k), features.row(j))?;
        total += match mode {
            SimMMode::Real => ik * kj,
            SimMMode::Binary { threshold } => {
                f64::from(u8::from(ik >= threshold && kj >= threshold))
            }
        };
    }
    Ok(SimMScore {
        value: total / common.len() as f64,
        support: common.len(),
    })
}

/// Sim-M for every directed kNN edge, in [`KnnGraph::edges`] order.
pub fn sim_m_edges(
    graph: &KnnGraph,
    features: &FeatureMatrix,
    mode: SimMMode,
) -> Result<Vec<(usize, usize, SimMScore)>> {
    let sorted: Vec<Vec<usize>> = (0..graph.len()).map(|i| sorted_ids(graph, i)).collect();
    let per_probe: Vec<Result<Vec<(usize, usize, SimMScore)>>> = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|nb| {
                    let common = intersect_sorted(&sorted[i], &sorted[nb.id]);
                    let score =
                        sim_m_over(features, i, nb.id, &common, mode, SimilarityKind::Cosine)?;
                    Ok((i, nb.id, score))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for chunk in per_probe {
        out.extend(chunk?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::Neighbor;
    use ndarray::Array2;

    // Node layout: 0 = i, 1 = j, 2 and 3 the common candidates, 4 and 5
    // candidates private to i or j. Features are built so that
    // cos(i,2)=0.8, cos(2,j)=0.9, cos(i,3)=0.5, cos(3,j)=0.4.
    fn fixture() -> (KnnGraph, FeatureMatrix) {
        // Use an orthonormal basis per relationship so each needed cosine is
        // controlled independently: i and j share candidates through
        // dedicated coordinates.
        let n = 6;
        let dim = 8;
        let mut x = Array2::<f64>::zeros((n, dim));
        // k=2 and k=3 are unit basis vectors e0, e1.
        x[[2, 0]] = 1.0;
        x[[3, 1]] = 1.0;
        // i = 0.8 e0 + 0.5 e1 + r_i e2 ; j = 0.9 e0 + 0.4 e1 + r_j e3
        let ri = (1.0f64 - 0.64 - 0.25).sqrt();
        let rj = (1.0f64 - 0.81 - 0.16).sqrt();
        x[[0, 0]] = 0.8;
        x[[0, 1]] = 0.5;
        x[[0, 2]] = ri;
        x[[1, 0]] = 0.9;
        x[[1, 1]] = 0.4;
        x[[1, 3]] = rj;
        x[[4, 4]] = 1.0;
        x[[5, 5]] = 1.0;
        let features = crate::features::l2_normalize(&FeatureMatrix::new(x).unwrap()).unwrap();
        let nb = |id| Neighbor { id, score: 0.0 };
        let graph = KnnGraph::from_lists(
            3,
            vec![
                vec![nb(2), nb(3), nb(4)],
                vec![nb(2), nb(3), nb(5)],
                vec![],
                vec![],
                vec![],
                vec![],
            ],
        )
        .unwrap();
        (graph, features)
    }

    #[test]
    fn real_mode_hand_value() {
        let (g, f) = fixture();
        let s = sim_m(&g, &f, 0, 1, SimMMode::Real).unwrap();
        assert_eq!(s.support, 2);
        assert!((s.value - 0.46).abs() < 1e-12, "{}", s.value);
    }

    #[test]
    fn binary_mode_hand_value() {
        let (g, f) = fixture();
        let s = sim_m(&g, &f, 0, 1, SimMMode::Binary { threshold: 0.6 }).unwrap();
        assert_eq!(s.support, 2);
        assert_eq!(s.value, 0.5);
    }

    #[test]
    fn empty_intersection_scores_zero() {
        let (g, f) = fixture();
        let s = sim_m(&g, &f, 2, 3, SimMMode::Real).unwrap();
        assert_eq!(s, SimMScore { value: 0.0, support: 0 });
    }

    #[test]
    fn out_of_range_ids() {
        let (g, f) = fixture();
        assert!(matches!(
            sim_m(&g, &f, 0, 9, SimMMode::Real),
            Err(Error::NodeOutOfRange { id: 9, .. })
        ));
    }

    #[test]
    fn edge_scores_follow_edge_order() {
        let (g, f) = fixture();
        let all = sim_m_edges(&g, &f, SimMMode::Real).unwrap();
        let pairs: Vec<(usize, usize)> = all.iter().map(|(a, b, _)| (*a, *b)).collect();
        let expected: Vec<(usize, usize)> = g.edges().map(|(a, b, _)| (a, b)).collect();
        assert_eq!(pairs, expected);
    }

    #[test]
    fn model_validation() {
        assert!(TestModel::binary(0.2, 0.8, 0.7, 10, 2.0).is_err());
        assert!(TestModel::binary(0.8, 0.2, 0.5, 10, 2.0).is_err());
        assert!(TestModel::binary(0.8, 0.2, 0.7, 10, 1.0).is_err());
        assert!(TestModel::real(0.3, 0.8, 0.7, 10, 2.0).is_err());
        assert!(TestModel::real(0.8, 0.3, 0.7, 10, 2.0).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn real_value_ignores_candidate_order(
                sims in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12),
                rot in 0usize..12,
            ) {
                // Candidate k is e_k; i and j place weight sims[k] on e_k.
                let c = sims.len();
                let dim = c + 2;
                let mut x = Array2::<f64>::zeros((c + 2, dim));
                for (k, (a, b)) in sims.iter().enumerate() {
                    x[[k + 2, k]] = 1.0;
                    x[[0, k]] = *a;
                    x[[1, k]] = *b;
                }
                x[[0, c]] = 1.0;
                x[[1, c + 1]] = 1.0;
                let f = FeatureMatrix::new(x).unwrap();
                let ids: Vec<usize> = (2..c + 2).collect();
                let mut rotated = ids.clone();
                rotated.rotate_left(rot % c);
                let a = sim_m_over(&f, 0, 1, &ids, SimMMode::Real, SimilarityKind::Cosine).unwrap();
                let b = sim_m_over(&f, 0, 1, &rotated, SimMMode::Real, SimilarityKind::Cosine).unwrap();
                prop_assert!((a.value - b.value).abs() < 1e-12);
            }
        }
    }
}
