use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attention::{sample_subgraph, seed_batches, AttentionModel, LayerDims, Subgraph};
use crate::error::{Error, Result};
use crate::features::{l2_normalize, FeatureMatrix, LabelVector};
use crate::knn::build_knn_graph;

use super::backward::{backward, Gradients};
use super::loss::PairBatch;
use super::TrainConfig;

/// `lr0 * (1 + cos(pi * epoch / epochs)) / 2`.
pub fn cosine_lr(lr0: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr0;
    }
    let t = epoch.min(epochs) as f64 / epochs as f64;
    lr0 * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

/// Plain gradient step at the scheduled rate for `epoch`.
pub fn sgd_step(
    model: &mut AttentionModel,
    grads: &Gradients,
    epoch: usize,
    config: &TrainConfig,
) -> Result<()> {
    if grads.layers.len() != model.layers.len() {
        return Err(Error::validation("gradient and model layer counts differ"));
    }
    let lr = cosine_lr(config.learning_rate, epoch, config.epochs);
    for (p, g) in model.layers.iter_mut().zip(&grads.layers) {
        if p.w_l.dim() != g.w_l.dim() || p.w_self_q.dim() != g.w_self_q.dim() {
            return Err(Error::validation("gradient shape mismatch"));
        }
        p.w_self_q.scaled_add(-lr, &g.w_self_q);
        p.w_self_k.scaled_add(-lr, &g.w_self_k);
        p.w_qart_q.scaled_add(-lr, &g.w_qart_q);
        p.w_qart_k.scaled_add(-lr, &g.w_qart_k);
        p.theta_qart -= lr * g.theta_qart;
        p.theta_self -= lr * g.theta_self;
        p.w_l.scaled_add(-lr, &g.w_l);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub lr: f64,
    /// Mean subgraph loss over the epoch, measured before each update.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AttentionModel,
    pub trace: Vec<EpochStat>,
}

/// Fresh model for `config` on features of width `m`.
pub fn init_model(config: &TrainConfig, m: usize) -> Result<AttentionModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = AttentionModel::init(
        config.layers,
        LayerDims::square(config.k + 1, m),
        config.variant,
        config.fusion,
        config.init_scale,
        &mut rng,
    )?;
    for p in &mut model.layers {
        p.use_w_qart = config.use_w_qart;
        p.leaky_slope = config.leaky_slope;
    }
    Ok(model)
}

/// Trains on every node's kNN subgraph, `k_seed` seeds per update.
pub fn train(
    features: &FeatureMatrix,
    labels: &LabelVector,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if labels.len() != features.rows() {
        return Err(Error::validation(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    let features = l2_normalize(features)?;
    let graph = build_knn_graph(&features, config.k)?;
    let n = features.rows();
    let samples: Vec<(Subgraph, PairBatch)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sub = sample_subgraph(&features, &graph, i)?;
            let batch = PairBatch::from_subgraph(&sub, labels, config.pairs)?;
            Ok((sub, batch))
        })
        .collect::<Result<_>>()?;

    let mut model = init_model(config, features.cols())?;
    // The init stream is separate from the shuffling stream.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for seeds in seed_batches(n, config.k_seed, &mut rng)? {
            let results: Vec<(f64, Gradients)> = seeds
                .par_iter()
                .filter(|&&s| !samples[s].1.is_empty())
                .map(|&s| {
                    let (sub, batch) = &samples[s];
                    backward(&model, sub, batch, config.margin_pos, config.margin_neg)
                })
                .collect::<Result<_>>()?;
            if results.is_empty() {
                continue;
            }
            let mut total = Gradients::zeros_like(&model);
            let scale = 1.0 / results.len() as f64;
            for (loss, g) in &results {
                loss_sum += loss;
                count += 1;
                total.add_scaled(g, scale);
            }
            sgd_step(&mut model, &total, epoch, config)?;
        }
        trace.push(EpochStat {
            epoch,
            lr: cosine_lr(config.learning_rate, epoch, config.epochs),
            loss: if count > 0 { loss_sum / count as f64 } else { 0.0 },
        });
    }
    Ok(TrainOutcome { model, trace })
}

/// Replaces each node's feature with the probe row of its enhanced
/// subgraph, L2-normalized. The subgraph size comes from the model.
pub fn enhance(model: &AttentionModel, features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let dims = model.layers[0].dims();
    if dims.m != features.cols() {
        return Err(Error::validation(format!(
            "model expects {} feature columns, got {}",
            dims.m,
            features.cols()
        )));
    }
    let features = l2_normalize(features)?;
    let graph = build_knn_graph(&features, dims.l - 1)?;
    let m_out = model.layers.last().expect("non-empty").dims().m_out;
    let rows: Vec<Vec<f64>> = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            let sub = sample_subgraph(&features, &graph, i)?;
            let out = model.forward(&sub)?;
            Ok(out.row(sub.probe_index).to_vec())
        })
        .collect::<Result<_>>()?;
    let data = Array2::from_shape_vec((rows.len(), m_out), rows.concat())
        .map_err(|e| Error::validation(e.to_string()))?;
    l2_normalize(&FeatureMatrix::new(data)?)
}

pub fn write_loss_trace(mut w: impl Write, trace: &[EpochStat]) -> Result<()> {
    writeln!(w, "epoch,lr,loss")?;
    for s in trace {
        writeln!(w, "{},{:.8},{:.8}", s.epoch, s.lr, s.loss)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_loss_trace(path: &Path, trace: &[EpochStat]) -> Result<()> {
    write_loss_trace(BufWriter::new(File::create(path)?), trace)
}
