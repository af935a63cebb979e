//! AUC/ROC over scored pairs, mAP over cosine rankings, Pairwise and BCubed
//! F-scores over clusterings.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{l2_normalize, FeatureMatrix, LabelVector};

/// Cluster id per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment(Vec<usize>);

impl ClusterAssignment {
    pub fn new(ids: Vec<usize>) -> Self {
        Self(ids)
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

    pub fn cluster_count(&self) -> usize {
        let mut ids = self.0.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

fn check_pairs(pairs: &[(f64, bool)]) -> Result<(usize, usize)> {
    if pairs.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::validation("non-finite score"));
    }
    let pos = pairs.iter().filter(|(_, p)| *p).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::validation("need at least one positive and one negative"));
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC via rank sums; tied scores share their average rank.
pub fn auc(pairs: &[(f64, bool)]) -> Result<f64> {
    let (pos, neg) = check_pairs(pairs)?;
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * sorted[i..j].iter().filter(|(_, p)| *p).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive. The first point uses +inf.
    pub threshold: f64,
}

/// ROC curve over distinct thresholds in descending order, from (0,0) to (1,1).
pub fn roc_points(pairs: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_pairs(pairs)?;
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: t,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC path.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn write_roc_csv(mut w: impl Write, points: &[RocPoint]) -> Result<()> {
    writeln!(w, "fpr,tpr,threshold")?;
    for p in points {
        writeln!(w, "{:.6},{:.6},{:.6}", p.fpr, p.tpr, p.threshold)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// Probes that contributed an AP.
    pub probes: usize,
    /// Probes with no other node of their label.
    pub skipped: usize,
}

/// Average precision of one ranked relevance list.
pub fn average_precision(ranked_relevance: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Every node probes all others ranked by cosine, ties by ascending id.
pub fn mean_average_precision(features: &FeatureMatrix, labels: &LabelVector) -> Result<MapReport> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::validation(format!("{} labels for {n} rows", labels.len())));
    }
    let f = l2_normalize(features)?;
    let data = f.data();
    let aps: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let scores = data.dot(&data.row(i));
            let mut gallery: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            gallery.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let rel: Vec<bool> = gallery.iter().map(|&j| labels.get(j) == labels.get(i)).collect();
            average_precision(&rel)
        })
        .collect();
    let probes = aps.iter().flatten().count();
    if probes == 0 {
        return Err(Error::validation("no probe has a same-label gallery item"));
    }
    let map = aps.iter().flatten().sum::<f64>() / probes as f64;
    Ok(MapReport {
        map,
        probes,
        skipped: n - probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl PrecisionRecall {
    fn new(precision: f64, recall: f64) -> Self {
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f,
        }
    }
}

struct Contingency {
    cluster: HashMap<usize, usize>,
    label: HashMap<usize, usize>,
    joint: HashMap<(usize, usize), usize>,
}

fn contingency(assignment: &ClusterAssignment, labels: &LabelVector) -> Result<Contingency> {
    if assignment.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} cluster ids for {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    let mut c = Contingency {
        cluster: HashMap::new(),
        label: HashMap::new(),
        joint: HashMap::new(),
    };
    for (&k, &l) in assignment.as_slice().iter().zip(labels.as_slice()) {
        *c.cluster.entry(k).or_default() += 1;
        *c.label.entry(l).or_default() += 1;
        *c.joint.entry((k, l)).or_default() += 1;
    }
    Ok(c)
}

fn pairs_of(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Pairwise F over unordered node pairs. No same-cluster pairs gives
/// precision 1.
pub fn pairwise_f(assignment: &ClusterAssignment, labels: &LabelVector) -> Result<PrecisionRecall> {
    let c = contingency(assignment, labels)?;
    let both: f64 = c.joint.values().map(|&v| pairs_of(v)).sum();
    let same_cluster: f64 = c.cluster.values().map(|&v| pairs_of(v)).sum();
    let same_label: f64 = c.label.values().map(|&v| pairs_of(v)).sum();
    let precision = if same_cluster > 0.0 { both / same_cluster } else { 1.0 };
    let recall = if same_label > 0.0 { both / same_label } else { 1.0 };
    Ok(PrecisionRecall::new(precision, recall))
}

pub fn bcubed_f(assignment: &ClusterAssignment, labels: &LabelVector) -> Result<PrecisionRecall> {
    let c = contingency(assignment, labels)?;
    let n = assignment.len();
    if n == 0 {
        return Err(Error::validation("empty assignment"));
    }
    let (mut p, mut r) = (0.0, 0.0);
    // Each (cluster, label) cell holds `v` nodes with identical scores.
    for (&(k, l), &v) in &c.joint {
        let v = v as f64;
        p += v * v / c.cluster[&k] as f64;
        r += v * v / c.label[&l] as f64;
    }
    Ok(PrecisionRecall::new(p / n as f64, r / n as f64))
}
