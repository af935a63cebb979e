//! Labelled toy feature sets: class centroids on the unit sphere plus
//! isotropic Gaussian noise.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Expected norm of the noise vector added to each unit centroid.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 40,
            dim: 32,
            noise: 1.4,
            seed: 0,
        }
    }
}

/// Samples are grouped by class: rows `c * per_class ..` carry label `c`.
pub fn generate(spec: &SyntheticSpec) -> Result<(FeatureMatrix, LabelVector)> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::parameter("classes, per_class and dim must be at least 1"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::parameter("noise must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centroids = Array2::<f64>::zeros((spec.classes, spec.dim));
    for mut row in centroids.rows_mut() {
        loop {
            row.mapv_inplace(|_| StandardNormal.sample(&mut rng));
            let n = f64::sqrt(row.dot(&row));
            if n > 1e-12 {
                row.mapv_inplace(|v| v / n);
                break;
            }
        }
    }
    let n = spec.classes * spec.per_class;
    let sd = spec.noise / (spec.dim as f64).sqrt();
    let mut data = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i / spec.per_class;
        for j in 0..spec.dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            data[[i, j]] = centroids[[c, j]] + sd * z;
        }
        labels.push(c);
    }
    Ok((FeatureMatrix::new(data)?, LabelVector::new(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sim_s;
    use crate::knn::{avg_enr, build_knn_graph};
    use crate::l2_normalize;

    #[test]
    fn noiseless_classes_are_collinear() {
        let (f, l) = generate(&SyntheticSpec { classes: 2, per_class: 50, noise: 0.0, ..Default::default() }).unwrap();
        for i in 0..100 {
            for j in 0..100 {
                if l.get(i) == l.get(j) {
                    assert!((sim_s(f.row(i), f.row(j)).unwrap() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = SyntheticSpec::default();
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = SyntheticSpec { seed: 1, ..s };
        assert_ne!(generate(&s).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn noise_raises_enr() {
        let enr_at = |noise: f64| {
            let (f, l) = generate(&SyntheticSpec { noise, seed: 5, ..Default::default() }).unwrap();
            let f = l2_normalize(&f).unwrap();
            avg_enr(&build_knn_graph(&f, 10).unwrap(), &l).unwrap()
        };
        let rates: Vec<f64> = [0.3, 0.8, 1.3, 1.8, 2.5].iter().map(|&n| enr_at(n)).collect();
        for w in rates.windows(2) {
            assert!(w[1] >= w[0], "{rates:?}");
        }
        assert!(rates[4] > rates[0]);
    }
}
