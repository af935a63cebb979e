use ndarray::{Array1, Array2, Axis};

use crate::attention::Subgraph;
use crate::error::{Error, Result};
use crate::features::LabelVector;

use super::PairPolicy;

/// Scored pairs `(a, b, label)` of subgraph positions; label is +1 for the
/// same category and -1 otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize, i8)>,
}

impl PairBatch {
    pub fn new(pairs: Vec<(usize, usize, i8)>, mask: &[bool]) -> Result<Self> {
        for &(a, b, label) in &pairs {
            if a >= mask.len() || b >= mask.len() || !mask[a] || !mask[b] {
                return Err(Error::validation(format!("pair ({a}, {b}) touches padding")));
            }
            if label != 1 && label != -1 {
                return Err(Error::validation(format!("pair label must be +-1, got {label}")));
            }
        }
        Ok(Self { pairs })
    }

    /// Pairs among the real nodes of `sub`, labelled from `labels`.
    pub fn from_subgraph(sub: &Subgraph, labels: &LabelVector, policy: PairPolicy) -> Result<Self> {
        let real: Vec<(usize, usize)> = sub
            .node_ids
            .iter()
            .enumerate()
            .filter_map(|(pos, id)| id.map(|id| (pos, id)))
            .collect();
        let mut cat = Vec::with_capacity(real.len());
        for &(pos, id) in &real {
            if id >= labels.len() {
                return Err(Error::NodeOutOfRange { id, n: labels.len() });
            }
            let c = labels.get(id);
            cat.push((pos, c));
        }
        let label = |x: usize, y: usize| if x == y { 1 } else { -1 };
        let mut pairs = Vec::new();
        match policy {
            PairPolicy::ProbeAnchored => {
                let probe = cat
                    .iter()
                    .find(|(pos, _)| *pos == sub.probe_index)
                    .copied()
                    .ok_or_else(|| Error::validation("probe is padding"))?;
                for &(pos, c) in &cat {
                    if pos != probe.0 {
                        pairs.push((probe.0, pos, label(probe.1, c)));
                    }
                }
            }
            PairPolicy::AllPairs => {
                for (i, &(pa, ca)) in cat.iter().enumerate() {
                    for &(pb, cb) in &cat[i + 1..] {
                        pairs.push((pa, pb, label(ca, cb)));
                    }
                }
            }
        }
        Self::new(pairs, &sub.mask)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn unit_rows(output: &Array2<f64>, batch: &PairBatch) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = output.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    for &(a, b, _) in &batch.pairs {
        for i in [a, b] {
            if i >= output.nrows() {
                return Err(Error::validation(format!("pair index {i} out of range")));
            }
            if !(norms[i] > 0.0 && norms[i].is_finite()) {
                return Err(Error::Numeric {
                    layer: 0,
                    what: format!("output row {i} has norm {}", norms[i]),
                });
            }
        }
    }
    let mut v = output.clone();
    for (mut row, &n) in v.axis_iter_mut(Axis(0)).zip(norms.iter()) {
        if n > 0.0 {
            row.mapv_inplace(|x| x / n);
        }
    }
    Ok((v, norms))
}

fn pair_term(s: f64, label: i8, margin_pos: f64, margin_neg: f64) -> f64 {
    if label > 0 {
        (margin_pos - s).max(0.0)
    } else {
        (s - margin_neg).max(0.0)
    }
}

/// Mean two-sided hinge over the batch on cosine scores of output rows.
pub fn hinge_pair_loss(
    output: &Array2<f64>,
    batch: &PairBatch,
    margin_pos: f64,
    margin_neg: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("empty pair batch"));
    }
    let (v, _) = unit_rows(output, batch)?;
    let total: f64 = batch
        .pairs
        .iter()
        .map(|&(a, b, y)| pair_term(v.row(a).dot(&v.row(b)), y, margin_pos, margin_neg))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Loss and its gradient with respect to the raw (unnormalized) output.
pub fn hinge_pair_loss_grad(
    output: &Array2<f64>,
    batch: &PairBatch,
    margin_pos: f64,
    margin_neg: f64,
) -> Result<(f64, Array2<f64>)> {
    if batch.is_empty() {
        return Err(Error::validation("empty pair batch"));
    }
    let (v, norms) = unit_rows(output, batch)?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dv = Array2::<f64>::zeros(v.raw_dim());
    for &(a, b, y) in &batch.pairs {
        let s = v.row(a).dot(&v.row(b));
        loss += pair_term(s, y, margin_pos, margin_neg);
        let ds = if y > 0 {
            if s < margin_pos { -1.0 / n } else { 0.0 }
        } else if s > margin_neg {
            1.0 / n
        } else {
            0.0
        };
        if ds != 0.0 {
            let (va, vb) = (v.row(a).to_owned(), v.row(b).to_owned());
            dv.row_mut(a).scaled_add(ds, &vb);
            dv.row_mut(b).scaled_add(ds, &va);
        }
    }
    // d(u/|u|) = (dv - v (v . dv)) / |u|
    let mut du = Array2::zeros(v.raw_dim());
    for i in 0..v.nrows() {
        if norms[i] > 0.0 {
            let proj = v.row(i).dot(&dv.row(i));
            let mut row = du.row_mut(i);
            row.assign(&dv.row(i));
            row.scaled_add(-proj, &v.row(i));
            row.mapv_inplace(|x| x / norms[i]);
        }
    }
    Ok((loss / n, du))
}
