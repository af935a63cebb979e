//! Node feature storage and the single-test similarity (Sim-S).

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Tolerance used when checking that a normalized row has unit length.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// `N x M` node features, row-major, one row per node.
///
/// All-zero rows are legal; they are used as padding inside subgraphs and are
/// left untouched by normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    normalized: bool,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::validation(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            data,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::validation("ragged feature rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, m), flat)
            .map_err(|e| Error::validation(e.to_string()))?;
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Indices of rows whose entries are all exactly zero.
    pub fn zero_rows(&self) -> Vec<usize> {
        self.data
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, r)| r.iter().all(|&v| v == 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn assume_normalized(data: Array2<f64>) -> Self {
        Self {
            data,
            normalized: true,
        }
    }
}

/// Integer category id per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    /// Checks the length against the feature matrix it labels.
    pub fn for_features(labels: Vec<usize>, features: &FeatureMatrix) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::validation(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        Ok(Self(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }
}

/// Scales every nonzero row to unit Euclidean norm. Zero rows stay zero.
pub fn l2_normalize(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut data = features.data.clone();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite feature value"));
    }
    for mut row in data.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(FeatureMatrix::assume_normalized(data))
}

/// Cosine similarity between two feature rows.
pub fn sim_s(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 && nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gaussian-kernel similarity `exp(-|a-b|^2 / (2 sigma^2))`.
pub fn sim_gaussian(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation("dimension mismatch"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::parameter(format!("sigma must be positive, got {sigma}")));
    }
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((-d2 / (2.0 * sigma * sigma)).exp())
}

/// Which single-test score to use when a pairwise similarity is needed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SimilarityKind {
    #[default]
    Cosine,
    Gaussian {
        sigma: f64,
    },
}

impl SimilarityKind {
    pub fn score(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
        match *self {
            SimilarityKind::Cosine => sim_s(a, b),
            SimilarityKind::Gaussian { sigma } => sim_gaussian(a, b, sigma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_four_five_row() {
        let f = FeatureMatrix::new(array![[3.0, 4.0]]).unwrap();
        let n = l2_normalize(&f).unwrap();
        assert!((n.data()[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((n.data()[[0, 1]] - 0.8).abs() < 1e-15);
        assert!(n.is_normalized());
    }

    #[test]
    fn zero_row_is_kept_and_flagged() {
        let f = FeatureMatrix::new(array![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let n = l2_normalize(&f).unwrap();
        assert_eq!(n.row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(n.zero_rows(), vec![0]);
    }

    #[test]
    fn random_rows_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((5, 3), |_| rng.random_range(-2.0..2.0));
        let n = l2_normalize(&FeatureMatrix::new(data).unwrap()).unwrap();
        for i in 0..5 {
            let norm: f64 = n.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < NORM_TOLERANCE);
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            FeatureMatrix::new(array![[f64::NAN, 1.0]]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn cosine_examples() {
        let e0 = arr1(&[1.0, 0.0]);
        let e1 = arr1(&[0.0, 1.0]);
        let d = arr1(&[1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]);
        assert_eq!(sim_s(e0.view(), e0.view()).unwrap(), 1.0);
        assert_eq!(sim_s(e0.view(), e1.view()).unwrap(), 0.0);
        assert!((sim_s(e0.view(), d.view()).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_of_two_zero_rows_is_an_error() {
        let z = arr1(&[0.0, 0.0]);
        assert!(matches!(
            sim_s(z.view(), z.view()),
            Err(Error::UndefinedSimilarity)
        ));
    }

    #[test]
    fn gaussian_kernel() {
        let a = arr1(&[0.0, 0.0]);
        let b = arr1(&[1.0, 1.0]);
        assert_eq!(sim_gaussian(a.view(), a.view(), 1.0).unwrap(), 1.0);
        let expected = (-2.0f64 / 2.0).exp();
        assert!((sim_gaussian(a.view(), b.view(), 1.0).unwrap() - expected).abs() < 1e-15);
        assert!(sim_gaussian(a.view(), b.view(), 0.0).is_err());
    }

    #[test]
    fn label_length_checked() {
        let f = FeatureMatrix::new(array![[1.0], [2.0]]).unwrap();
        assert!(LabelVector::for_features(vec![0], &f).is_err());
        assert!(LabelVector::for_features(vec![0, 1], &f).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cosine_is_symmetric(a in prop::collection::vec(-5.0f64..5.0, 4),
                                   b in prop::collection::vec(-5.0f64..5.0, 4)) {
                let a = arr1(&a);
                let b = arr1(&b);
                prop_assume!(a.iter().any(|v| *v != 0.0) || b.iter().any(|v| *v != 0.0));
                let ab = sim_s(a.view(), b.view()).unwrap();
                let ba = sim_s(b.view(), a.view()).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-12);
            }
        }
    }
}
