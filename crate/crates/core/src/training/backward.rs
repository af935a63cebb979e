//! Reverse-mode gradients of the pair hinge loss through the attention stack.

use ndarray::{Array2, Zip};

use crate::attention::{AttentionModel, AttentionParams, Fusion, LayerTrace, Subgraph, Variant};
use crate::error::{Error, Result};

use super::loss::{hinge_pair_loss_grad, PairBatch};

/// Gradients for one layer, same shapes as [`AttentionParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub w_self_q: Array2<f64>,
    pub w_self_k: Array2<f64>,
    pub w_qart_q: Array2<f64>,
    pub w_qart_k: Array2<f64>,
    pub theta_qart: f64,
    pub theta_self: f64,
    pub w_l: Array2<f64>,
}

impl LayerGrads {
    pub fn zeros_like(p: &AttentionParams) -> Self {
        Self {
            w_self_q: Array2::zeros(p.w_self_q.raw_dim()),
            w_self_k: Array2::zeros(p.w_self_k.raw_dim()),
            w_qart_q: Array2::zeros(p.w_qart_q.raw_dim()),
            w_qart_k: Array2::zeros(p.w_qart_k.raw_dim()),
            theta_qart: 0.0,
            theta_self: 0.0,
            w_l: Array2::zeros(p.w_l.raw_dim()),
        }
    }

    fn add_scaled(&mut self, other: &LayerGrads, scale: f64) {
        self.w_self_q.scaled_add(scale, &other.w_self_q);
        self.w_self_k.scaled_add(scale, &other.w_self_k);
        self.w_qart_q.scaled_add(scale, &other.w_qart_q);
        self.w_qart_k.scaled_add(scale, &other.w_qart_k);
        self.theta_qart += scale * other.theta_qart;
        self.theta_self += scale * other.theta_self;
        self.w_l.scaled_add(scale, &other.w_l);
    }

    fn all_finite(&self) -> bool {
        [&self.w_self_q, &self.w_self_k, &self.w_qart_q, &self.w_qart_k, &self.w_l]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.theta_qart.is_finite()
            && self.theta_self.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(model: &AttentionModel) -> Self {
        Self {
            layers: model.layers.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(b, scale);
        }
    }
}

fn mask_entries(a: &mut Array2<f64>, mask: &[bool]) {
    for (i, &mi) in mask.iter().enumerate() {
        for (j, &mj) in mask.iter().enumerate() {
            if !(mi && mj) {
                a[[i, j]] = 0.0;
            }
        }
    }
}

/// Backward of a row softmax restricted to unmasked columns.
fn softmax_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut dz = Array2::zeros(p.raw_dim());
    for i in 0..p.nrows() {
        let dot = p.row(i).dot(&dp.row(i));
        Zip::from(dz.row_mut(i))
            .and(p.row(i))
            .and(dp.row(i))
            .for_each(|z, &pv, &dv| *z = pv * (dv - dot));
    }
    dz
}

fn sum_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// Backward through one layer. Returns the parameter gradients and the
/// gradient with respect to the layer input.
pub fn layer_backward(
    trace: &LayerTrace,
    params: &AttentionParams,
    mask: &[bool],
    d_out: &Array2<f64>,
) -> (LayerGrads, Array2<f64>) {
    let mut g = LayerGrads::zeros_like(params);
    let x = &trace.input;
    let slope = params.leaky_slope;

    let mut dy = d_out.clone();
    Zip::from(&mut dy)
        .and(&trace.pre_activation)
        .for_each(|d, &y| {
            if y < 0.0 {
                *d *= slope;
            }
        });
    g.w_l = trace.hidden.t().dot(&dy);
    let dh = dy.dot(&params.w_l.t());
    let mut dx = trace.propagation.t().dot(&dh);
    if params.variant == Variant::PlainGcn {
        return (g, dx);
    }

    let dp = dh.dot(&x.t());
    let dz = softmax_backward(&trace.propagation, &dp);

    let mut d_aq: Option<Array2<f64>> = None;
    let mut d_as: Option<Array2<f64>> = None;
    match params.variant {
        Variant::PlainGcn => unreachable!(),
        Variant::SelfOnly => {
            let a_s = &trace.selfa.as_ref().expect("self branch").2;
            g.theta_self = sum_product(&dz, a_s);
            d_as = Some(&dz * params.theta_self);
        }
        Variant::Qart | Variant::QartTilde => {
            let a_q = &trace.qart.as_ref().expect("qart branch").2;
            g.theta_qart = sum_product(&dz, a_q);
            d_aq = Some(&dz * params.theta_qart);
        }
        Variant::Band | Variant::BandTilde => {
            let a_q = &trace.qart.as_ref().expect("qart branch").2;
            let a_s = &trace.selfa.as_ref().expect("self branch").2;
            match params.fusion {
                Fusion::WeightedSum => {
                    g.theta_qart = sum_product(&dz, a_q);
                    g.theta_self = sum_product(&dz, a_s);
                    d_aq = Some(&dz * params.theta_qart);
                    d_as = Some(&dz * params.theta_self);
                }
                Fusion::PlainSum => {
                    d_aq = Some(dz.clone());
                    d_as = Some(dz);
                }
                Fusion::ElementwiseProduct => {
                    d_aq = Some(&dz * a_s);
                    d_as = Some(&dz * a_q);
                }
            }
        }
    }

    if let Some(d_aq) = d_aq {
        let (q, k, _) = trace.qart.as_ref().expect("qart branch");
        let d_base = if params.use_w_qart {
            let base = if params.variant.is_tilde() {
                &trace.selfa.as_ref().expect("self branch").2
            } else {
                &trace.ax.as_ref().expect("A_X").0
            };
            let dq = d_aq.dot(k);
            let dk = d_aq.t().dot(q);
            g.w_qart_q = base.t().dot(&dq);
            g.w_qart_k = base.t().dot(&dk);
            dq.dot(&params.w_qart_q.t()) + dk.dot(&params.w_qart_k.t())
        } else {
            // q == k == base
            (&d_aq + &d_aq.t()).dot(q)
        };
        if params.variant.is_tilde() {
            let mut d_base = d_base;
            mask_entries(&mut d_base, mask);
            d_as = Some(match d_as {
                Some(d) => d + d_base,
                None => d_base,
            });
        } else {
            let (a, norms) = trace.ax.as_ref().expect("A_X");
            let mut d_a = d_base;
            mask_entries(&mut d_a, mask);
            let mut d_g = Array2::zeros(a.raw_dim());
            for i in 0..a.nrows() {
                if norms[i] > 0.0 {
                    let proj = a.row(i).dot(&d_a.row(i));
                    let mut row = d_g.row_mut(i);
                    row.assign(&d_a.row(i));
                    row.scaled_add(-proj, &a.row(i));
                    row.mapv_inplace(|v| v / norms[i]);
                }
            }
            dx += &(&d_g + &d_g.t()).dot(x);
        }
    }

    if let Some(mut d_as) = d_as {
        let (q, k, _) = trace.selfa.as_ref().expect("self branch");
        mask_entries(&mut d_as, mask);
        let scale = (params.w_self_q.ncols() as f64).sqrt();
        let dq = d_as.dot(k) / scale;
        let dk = d_as.t().dot(q) / scale;
        g.w_self_q = x.t().dot(&dq);
        g.w_self_k = x.t().dot(&dk);
        dx += &dq.dot(&params.w_self_q.t());
        dx += &dk.dot(&params.w_self_k.t());
    }
    (g, dx)
}

/// Loss on one subgraph and exact gradients for every parameter.
pub fn backward(
    model: &AttentionModel,
    sub: &Subgraph,
    batch: &PairBatch,
    margin_pos: f64,
    margin_neg: f64,
) -> Result<(f64, Gradients)> {
    let traces = model.forward_traced(sub)?;
    let out = &traces.last().expect("non-empty model").out;
    let (loss, mut d) = hinge_pair_loss_grad(out, batch, margin_pos, margin_neg)?;
    let mut layers = Vec::with_capacity(model.layers.len());
    for (i, (trace, params)) in traces.iter().zip(&model.layers).enumerate().rev() {
        let (g, dx) = layer_backward(trace, params, &sub.mask, &d);
        if !g.all_finite() || dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: i,
                what: "non-finite gradient".into(),
            });
        }
        layers.push(g);
        d = dx;
    }
    layers.reverse();
    Ok((loss, Gradients { layers }))
}
