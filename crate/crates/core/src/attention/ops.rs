use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

use super::{AttentionMap, AttentionParams, Fusion, MapKind, Subgraph, Variant};

/// Finite stand-in for minus infinity at padded positions of `A_self`.
pub const MASKED_SCORE: f64 = -1e30;

/// Gram matrix of `x` with every row scaled to unit L2 norm. Zero rows
/// stay zero. Returns the map and the pre-normalization row norms.
pub(crate) fn gram_rownorm(x: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut g = x.dot(&x.t());
    let mut norms = Vec::with_capacity(g.nrows());
    for mut row in g.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        norms.push(n);
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    (g, norms)
}

pub(crate) fn zero_masked(a: &mut Array2<f64>, mask: &[bool]) {
    for (i, &keep) in mask.iter().enumerate() {
        if !keep {
            a.row_mut(i).fill(0.0);
            a.column_mut(i).fill(0.0);
        }
    }
}

/// Row-normalized gram map of the subgraph features.
pub fn a_x(sub: &Subgraph) -> AttentionMap {
    let (mut values, _) = gram_rownorm(sub.features.data());
    zero_masked(&mut values, &sub.mask);
    AttentionMap {
        values,
        kind: MapKind::AX,
    }
}

/// `(base W_q)(base W_k)^T`, or `base base^T` when the weights are off.
pub(crate) fn qart_from(
    base: &Array2<f64>,
    params: &AttentionParams,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    if params.use_w_qart {
        let q = base.dot(&params.w_qart_q);
        let k = base.dot(&params.w_qart_k);
        let a = q.dot(&k.t());
        (q, k, a)
    } else {
        let a = base.dot(&base.t());
        (base.clone(), base.clone(), a)
    }
}

/// Q-Attention map built from an `A_X` map.
pub fn q_attention(ax: &AttentionMap, params: &AttentionParams) -> AttentionMap {
    AttentionMap {
        values: qart_from(&ax.values, params).2,
        kind: MapKind::AQart,
    }
}

/// Scaled dot-product scores with padded rows and columns left at zero.
pub(crate) fn self_raw(
    x: &Array2<f64>,
    mask: &[bool],
    params: &AttentionParams,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let q = x.dot(&params.w_self_q);
    let k = x.dot(&params.w_self_k);
    let scale = (params.w_self_q.ncols() as f64).sqrt();
    let mut a = q.dot(&k.t()) / scale;
    zero_masked(&mut a, mask);
    (q, k, a)
}

/// Self-attention scores; padded rows and columns hold [`MASKED_SCORE`].
pub fn self_attention(sub: &Subgraph, params: &AttentionParams) -> AttentionMap {
    let (_, _, mut values) = self_raw(sub.features.data(), &sub.mask, params);
    for (i, &keep_i) in sub.mask.iter().enumerate() {
        for (j, &keep_j) in sub.mask.iter().enumerate() {
            if !(keep_i && keep_j) {
                values[[i, j]] = MASKED_SCORE;
            }
        }
    }
    AttentionMap {
        values,
        kind: MapKind::ASelf,
    }
}

/// Row softmax over unmasked columns. Masked rows come out all zero.
pub fn masked_softmax(z: &Array2<f64>, mask: &[bool]) -> Array2<f64> {
    let mut p = Array2::zeros(z.raw_dim());
    for (i, &keep) in mask.iter().enumerate() {
        if !keep {
            continue;
        }
        let row = z.row(i);
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, &m) in mask.iter().enumerate() {
            if m {
                let e = (row[j] - max).exp();
                p[[i, j]] = e;
                sum += e;
            }
        }
        p.row_mut(i).mapv_inplace(|v| v / sum);
    }
    p
}

/// Pre-softmax logits of the fused map.
pub(crate) fn fuse_logits(aq: &Array2<f64>, as_: &Array2<f64>, params: &AttentionParams) -> Array2<f64> {
    match params.fusion {
        Fusion::WeightedSum => {
            let mut z = aq * params.theta_qart;
            Zip::from(&mut z)
                .and(as_)
                .for_each(|z, &s| *z += params.theta_self * s);
            z
        }
        Fusion::PlainSum => aq + as_,
        Fusion::ElementwiseProduct => aq * as_,
    }
}

/// B-Attention map: row softmax of the fused Q-Attention and self-attention
/// maps, with zero weight on padded columns.
pub fn fuse(
    aq: &AttentionMap,
    as_: &AttentionMap,
    params: &AttentionParams,
    mask: &[bool],
) -> Result<AttentionMap> {
    if aq.values.dim() != as_.values.dim() || aq.values.nrows() != mask.len() {
        return Err(Error::validation("fuse needs two maps of the same size as the mask"));
    }
    let z = fuse_logits(&aq.values, &as_.values, params);
    Ok(AttentionMap {
        values: masked_softmax(&z, mask),
        kind: MapKind::ABand,
    })
}

/// `D^{-1/2} (A + I) D^{-1/2}` for a symmetric 0/1 adjacency.
pub fn normalized_adjacency(adjacency: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, n2) = adjacency.dim();
    if n != n2 {
        return Err(Error::validation("adjacency must be square"));
    }
    for i in 0..n {
        for j in 0..n {
            let v = adjacency[[i, j]];
            if v != 0.0 && v != 1.0 {
                return Err(Error::validation("adjacency must be binary"));
            }
            if v != adjacency[[j, i]] {
                return Err(Error::validation("adjacency must be symmetric"));
            }
        }
    }
    let tilde = adjacency + &Array2::<f64>::eye(n);
    let inv_sqrt: Vec<f64> = tilde
        .axis_iter(Axis(0))
        .map(|r| 1.0 / r.sum().sqrt())
        .collect();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        inv_sqrt[i] * tilde[[i, j]] * inv_sqrt[j]
    }))
}

pub(crate) fn leaky(y: &Array2<f64>, slope: f64) -> Array2<f64> {
    y.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

/// `sigma(D^{-1/2} (A + I) D^{-1/2} X W_l)` with a leaky rectifier.
pub fn plain_gcn_layer(
    features: &FeatureMatrix,
    adjacency: &Array2<f64>,
    w_l: &Array2<f64>,
    leaky_slope: f64,
) -> Result<FeatureMatrix> {
    if adjacency.nrows() != features.rows() || w_l.nrows() != features.cols() {
        return Err(Error::validation("plain GCN dimension mismatch"));
    }
    let a_hat = normalized_adjacency(adjacency)?;
    let y = a_hat.dot(features.data()).dot(w_l);
    FeatureMatrix::new(leaky(&y, leaky_slope))
}

/// Everything the backward pass needs from one layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub(crate) input: Array2<f64>,
    /// `A_X` and its pre-normalization row norms (Q-Attention variants).
    pub(crate) ax: Option<(Array2<f64>, Vec<f64>)>,
    /// `(Q, K, A)` of the Q-Attention branch.
    pub(crate) qart: Option<(Array2<f64>, Array2<f64>, Array2<f64>)>,
    /// `(Q, K, A)` of the self-attention branch, padded entries zero.
    pub(crate) selfa: Option<(Array2<f64>, Array2<f64>, Array2<f64>)>,
    /// Row-stochastic attention map, or the normalized adjacency.
    pub propagation: Array2<f64>,
    pub(crate) hidden: Array2<f64>,
    pub(crate) pre_activation: Array2<f64>,
    pub out: Array2<f64>,
}

/// One layer forward pass on raw matrices, keeping intermediates.
pub fn forward_layer(
    x: &Array2<f64>,
    mask: &[bool],
    adjacency: &Array2<f64>,
    params: &AttentionParams,
) -> Result<LayerTrace> {
    let dims = params.dims();
    if x.dim() != (dims.l, dims.m) || mask.len() != dims.l {
        return Err(Error::validation(format!(
            "layer expects {}x{} input, got {:?}",
            dims.l,
            dims.m,
            x.dim()
        )));
    }
    let variant = params.variant;

    let selfa = variant
        .uses_self()
        .then(|| self_raw(x, mask, params));
    let ax = (variant.uses_qart() && !variant.is_tilde()).then(|| {
        let (mut a, norms) = gram_rownorm(x);
        zero_masked(&mut a, mask);
        (a, norms)
    });
    let qart = if variant.uses_qart() {
        let base = if variant.is_tilde() {
            &selfa.as_ref().expect("tilde variants compute A_self").2
        } else {
            &ax.as_ref().expect("A_X computed").0
        };
        Some(qart_from(base, params))
    } else {
        None
    };

    let propagation = match variant {
        Variant::PlainGcn => normalized_adjacency(adjacency)?,
        Variant::SelfOnly => {
            let a = &selfa.as_ref().unwrap().2;
            masked_softmax(&(a * params.theta_self), mask)
        }
        Variant::Qart | Variant::QartTilde => {
            let a = &qart.as_ref().unwrap().2;
            masked_softmax(&(a * params.theta_qart), mask)
        }
        Variant::Band | Variant::BandTilde => {
            let z = fuse_logits(&qart.as_ref().unwrap().2, &selfa.as_ref().unwrap().2, params);
            masked_softmax(&z, mask)
        }
    };

    let hidden = propagation.dot(x);
    let pre_activation = hidden.dot(&params.w_l);
    let out = leaky(&pre_activation, params.leaky_slope);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            layer: 0,
            what: format!("non-finite output in {} layer", variant.name()),
        });
    }
    Ok(LayerTrace {
        input: x.clone(),
        ax,
        qart,
        selfa,
        propagation,
        hidden,
        pre_activation,
        out,
    })
}

/// `sigma(A X W_l)` for a single layer, where `A` is the map selected by the
/// layer's variant.
pub fn b_attention_layer(sub: &Subgraph, params: &AttentionParams) -> Result<FeatureMatrix> {
    let trace = forward_layer(sub.features.data(), &sub.mask, &sub.adjacency, params)?;
    FeatureMatrix::new(trace.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{AttentionModel, LayerDims};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    fn unit_rows(mut x: Array2<f64>) -> Array2<f64> {
        for mut row in x.axis_iter_mut(Axis(0)) {
            let n = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / n);
        }
        x
    }

    fn sub_from(x: Array2<f64>, mask: Vec<bool>) -> Subgraph {
        let l = x.nrows();
        Subgraph {
            node_ids: (0..l).map(Some).collect(),
            features: FeatureMatrix::new(x).unwrap(),
            mask,
            probe_index: 0,
            adjacency: Array2::zeros((l, l)),
        }
    }

    fn params(l: usize, m: usize, variant: Variant, fusion: Fusion, rng: &mut ChaCha8Rng) -> AttentionParams {
        let mut p = AttentionParams::identity(LayerDims::square(l, m), variant, fusion);
        p.w_self_q = random(rng, m, m);
        p.w_self_k = random(rng, m, m);
        p.w_qart_q = random(rng, l, l);
        p.w_qart_k = random(rng, l, l);
        p.w_l = random(rng, m, m);
        p.theta_qart = rng.random_range(0.2..2.0);
        p.theta_self = rng.random_range(0.2..2.0);
        p
    }

    // Reference helpers written with explicit loops.
    fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (n, k) = a.dim();
        let m = b.ncols();
        Array2::from_shape_fn((n, m), |(i, j)| (0..k).map(|t| a[[i, t]] * b[[t, j]]).sum())
    }

    fn transpose(a: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn((a.ncols(), a.nrows()), |(i, j)| a[[j, i]])
    }

    fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
        let mut out = z.clone();
        for i in 0..z.nrows() {
            let e: Vec<f64> = (0..z.ncols()).map(|j| z[[i, j]].exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..z.ncols() {
                out[[i, j]] = e[j] / s;
            }
        }
        out
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn a_x_orthonormal_is_identity() {
        let sub = sub_from(Array2::eye(3), vec![true; 3]);
        assert_eq!(a_x(&sub).values, Array2::eye(3));
    }

    #[test]
    fn a_x_duplicate_rows_match() {
        let x = unit_rows(array![[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [1.0, 2.0, 0.5]]);
        let ax = a_x(&sub_from(x, vec![true; 3])).values;
        assert!(max_diff(&ax.row(0).to_owned().insert_axis(Axis(0)), &ax.row(2).to_owned().insert_axis(Axis(0))) < 1e-15);
    }

    #[test]
    fn a_x_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = unit_rows(random(&mut rng, 4, 3));
        let g = matmul(&x, &transpose(&x));
        let mut want = g.clone();
        for i in 0..4 {
            let n: f64 = (0..4).map(|j| g[[i, j]] * g[[i, j]]).sum::<f64>().sqrt();
            for j in 0..4 {
                want[[i, j]] = g[[i, j]] / n;
            }
        }
        assert!(max_diff(&a_x(&sub_from(x, vec![true; 4])).values, &want) < 1e-12);
    }

    #[test]
    fn a_x_zeroes_padding() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let ax = a_x(&sub_from(x, vec![true, true, false])).values;
        assert!(ax.row(2).iter().all(|v| *v == 0.0));
        assert!(ax.column(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn q_attention_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = params(3, 2, Variant::Qart, Fusion::WeightedSum, &mut rng);
        let eye = AttentionMap { values: Array2::eye(3), kind: MapKind::AX };
        let mut p_id = p.clone();
        p_id.w_qart_q = Array2::eye(3);
        p_id.w_qart_k = Array2::eye(3);
        assert_eq!(q_attention(&eye, &p_id).values, Array2::eye(3));

        let ax = AttentionMap { values: random(&mut rng, 3, 3), kind: MapKind::AX };
        let want = matmul(&matmul(&ax.values, &p.w_qart_q), &transpose(&matmul(&ax.values, &p.w_qart_k)));
        assert!(max_diff(&q_attention(&ax, &p).values, &want) < 1e-12);

        p.use_w_qart = false;
        let want = matmul(&ax.values, &transpose(&ax.values));
        assert!(max_diff(&q_attention(&ax, &p).values, &want) < 1e-12);
    }

    #[test]
    fn self_attention_cases() {
        let p = AttentionParams::identity(LayerDims::square(3, 3), Variant::SelfOnly, Fusion::WeightedSum);
        let a = self_attention(&sub_from(Array2::eye(3), vec![true; 3]), &p).values;
        assert!(max_diff(&a, &(Array2::eye(3) / 3f64.sqrt())) < 1e-15);

        let x = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        let a = self_attention(&sub_from(x, vec![true, true, false]), &p).values;
        assert!(a.row(2).iter().all(|v| *v == MASKED_SCORE));
        assert!(a.column(2).iter().all(|v| *v == MASKED_SCORE));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 4, 3);
        let p = params(4, 3, Variant::SelfOnly, Fusion::WeightedSum, &mut rng);
        let want = matmul(&matmul(&x, &p.w_self_q), &transpose(&matmul(&x, &p.w_self_k))) / 3f64.sqrt();
        assert!(max_diff(&self_attention(&sub_from(x, vec![true; 4]), &p).values, &want) < 1e-12);
    }

    #[test]
    fn fuse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let aq = AttentionMap { values: random(&mut rng, 3, 3), kind: MapKind::AQart };
        let as_ = AttentionMap { values: random(&mut rng, 3, 3), kind: MapKind::ASelf };
        let mask = vec![true; 3];
        let mut p = params(3, 2, Variant::Band, Fusion::WeightedSum, &mut rng);

        p.theta_qart = 0.0;
        let got = fuse(&aq, &as_, &p, &mask).unwrap().values;
        let want = softmax_rows(&(&as_.values * p.theta_self));
        assert!(max_diff(&got, &want) < 1e-15);

        p.theta_qart = 1.0;
        p.theta_self = 1.0;
        let weighted = fuse(&aq, &as_, &p, &mask).unwrap().values;
        p.fusion = Fusion::PlainSum;
        let plain = fuse(&aq, &as_, &p, &mask).unwrap().values;
        assert_eq!(weighted, plain);

        p.fusion = Fusion::ElementwiseProduct;
        let prod = fuse(&aq, &as_, &p, &mask).unwrap().values;
        assert!(max_diff(&prod, &softmax_rows(&(&aq.values * &as_.values))) < 1e-15);
        for out in [weighted, prod] {
            for row in out.axis_iter(Axis(0)) {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fuse_ignores_masked_columns() {
        let aq = AttentionMap { values: Array2::ones((3, 3)), kind: MapKind::AQart };
        let mut s = Array2::zeros((3, 3));
        s[[0, 2]] = MASKED_SCORE;
        let as_ = AttentionMap { values: s, kind: MapKind::ASelf };
        let p = AttentionParams::identity(LayerDims::square(3, 1), Variant::Band, Fusion::WeightedSum);
        let out = fuse(&aq, &as_, &p, &[true, true, false]).unwrap().values;
        assert_eq!(out.column(2).to_vec(), vec![0.0; 3]);
        assert_eq!(out.row(2).to_vec(), vec![0.0; 3]);
        assert!((out[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_node_identity_pipeline() {
        let mut p = AttentionParams::identity(LayerDims::square(1, 3), Variant::Band, Fusion::WeightedSum);
        p.leaky_slope = 1.0;
        let x = array![[0.2, -0.5, 0.7]];
        let out = b_attention_layer(&sub_from(x.clone(), vec![true]), &p).unwrap();
        assert_eq!(out.data(), &x);
    }

    #[test]
    fn padded_rows_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = random(&mut rng, 4, 3);
        x.row_mut(3).fill(0.0);
        for variant in Variant::ALL {
            let p = params(4, 3, variant, Fusion::WeightedSum, &mut rng);
            let out = b_attention_layer(&sub_from(x.clone(), vec![true, true, true, false]), &p).unwrap();
            assert!(out.row(3).iter().all(|v| *v == 0.0), "{variant:?}");
        }
    }

    #[test]
    fn band_layer_matches_stepwise_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = unit_rows(random(&mut rng, 5, 4));
        let p = params(5, 4, Variant::Band, Fusion::WeightedSum, &mut rng);
        let sub = sub_from(x.clone(), vec![true; 5]);
        let ax = a_x(&sub);
        let aq = q_attention(&ax, &p);
        let as_ = self_attention(&sub, &p);
        let band = fuse(&aq, &as_, &p, &sub.mask).unwrap();
        let want = matmul(&matmul(&band.values, &x), &p.w_l).mapv(|v| if v >= 0.0 { v } else { 0.2 * v });
        let got = b_attention_layer(&sub, &p).unwrap();
        assert!(max_diff(got.data(), &want) < 1e-10);
    }

    #[test]
    fn plain_gcn_cases() {
        let x = FeatureMatrix::new(array![[1.0, 2.0], [3.0, -4.0], [0.5, 0.5]]).unwrap();
        let out = plain_gcn_layer(&x, &Array2::zeros((3, 3)), &Array2::eye(2), 1.0).unwrap();
        assert_eq!(out.data(), x.data());

        let twins = FeatureMatrix::new(array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let adj = array![[0.0, 1.0], [1.0, 0.0]];
        let out = plain_gcn_layer(&twins, &adj, &Array2::eye(2), 0.2).unwrap();
        assert_eq!(out.row(0), out.row(1));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = FeatureMatrix::new(random(&mut rng, 4, 3)).unwrap();
        let adj = array![
            [0.0, 1.0, 0.0, 1.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0]
        ];
        let w = random(&mut rng, 3, 3);
        let deg: Vec<f64> = (0..4).map(|i| 1.0 + adj.row(i).sum()).collect();
        let a_hat = Array2::from_shape_fn((4, 4), |(i, j)| {
            (adj[[i, j]] + if i == j { 1.0 } else { 0.0 }) / (deg[i] * deg[j]).sqrt()
        });
        let want = matmul(&matmul(&a_hat, x.data()), &w).mapv(|v| if v >= 0.0 { v } else { 0.2 * v });
        let got = plain_gcn_layer(&x, &adj, &w, 0.2).unwrap();
        assert!(max_diff(got.data(), &want) < 1e-12);

        assert!(plain_gcn_layer(&x, &array![[0.0, 1.0], [0.0, 0.0]], &w, 0.2).is_err());
    }

    #[test]
    fn band_rows_are_stochastic_for_every_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = unit_rows(random(&mut rng, 6, 4));
        x.row_mut(5).fill(0.0);
        let mask = vec![true, true, true, true, true, false];
        for variant in Variant::ALL.into_iter().filter(|v| *v != Variant::PlainGcn) {
            for fusion in Fusion::ALL {
                let p = params(6, 4, variant, fusion, &mut rng);
                let t = forward_layer(&x, &mask, &Array2::zeros((6, 6)), &p).unwrap();
                for i in 0..5 {
                    assert!((t.propagation.row(i).sum() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn theta_qart_zero_band_equals_self_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = unit_rows(random(&mut rng, 5, 3));
        let mut p = params(5, 3, Variant::Band, Fusion::WeightedSum, &mut rng);
        p.theta_qart = 0.0;
        let sub = sub_from(x, vec![true; 5]);
        let band = b_attention_layer(&sub, &p).unwrap();
        p.variant = Variant::SelfOnly;
        let selfonly = b_attention_layer(&sub, &p).unwrap();
        assert_eq!(band, selfonly);
    }

    #[test]
    fn tilde_equals_plain_when_self_equals_ax() {
        // Orthonormal rows give A_X = I; scaling w_self_k by sqrt(M_d)
        // cancels the score scaling so A_self = I too.
        let x = Array2::eye(3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut p = params(3, 3, Variant::Qart, Fusion::WeightedSum, &mut rng);
        p.w_self_q = Array2::eye(3);
        p.w_self_k = Array2::eye(3) * 3f64.sqrt();
        let sub = sub_from(x, vec![true; 3]);
        let qart = b_attention_layer(&sub, &p).unwrap();
        p.variant = Variant::QartTilde;
        let tilde = b_attention_layer(&sub, &p).unwrap();
        assert!(max_diff(qart.data(), tilde.data()) < 1e-12);
    }

    #[test]
    fn orthonormal_without_w_qart_gives_identity() {
        let mut p = AttentionParams::identity(LayerDims::square(4, 4), Variant::Qart, Fusion::WeightedSum);
        p.use_w_qart = false;
        let sub = sub_from(Array2::eye(4), vec![true; 4]);
        let aq = q_attention(&a_x(&sub), &p).values;
        assert!(max_diff(&aq, &Array2::eye(4)) < 1e-12);
    }

    #[test]
    fn stacked_forward_chains_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = unit_rows(random(&mut rng, 4, 3));
        let model = AttentionModel::init(2, LayerDims::square(4, 3), Variant::Band, Fusion::WeightedSum, 0.1, &mut rng).unwrap();
        let sub = sub_from(x, vec![true; 4]);
        let first = b_attention_layer(&sub, &model.layers[0]).unwrap();
        let second = b_attention_layer(&sub_from(first.into_data(), vec![true; 4]), &model.layers[1]).unwrap();
        assert_eq!(model.forward(&sub).unwrap(), second.into_data());
    }
}
