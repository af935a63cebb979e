//! G-cut: keep edges scoring above a threshold and merge their endpoints
//! transitively with a union-find.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{sim_s, FeatureMatrix, LabelVector};
use crate::knn::KnnGraph;
use crate::metrics::{bcubed_f, pairwise_f, ClusterAssignment};

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn find(&mut self, a: usize) -> usize {
        let mut root = a;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = a;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns true when `a` and `b` were in different components.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }

    /// Component ids numbered in order of each component's smallest member.
    pub fn assignment(&mut self) -> ClusterAssignment {
        let n = self.len();
        let mut id_of_root = vec![usize::MAX; n];
        let mut next = 0;
        let mut ids = Vec::with_capacity(n);
        for v in 0..n {
            let r = self.find(v);
            if id_of_root[r] == usize::MAX {
                id_of_root[r] = next;
                next += 1;
            }
            ids.push(id_of_root[r]);
        }
        ClusterAssignment::new(ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredEdge {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

/// Which kNN edges become undirected clustering edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// `a -> b` or `b -> a`.
    Union,
    /// `a -> b` and `b -> a`.
    Intersection,
}

impl EdgeRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(EdgeRule::Union),
            "intersection" => Ok(EdgeRule::Intersection),
            other => Err(Error::parameter(format!("unknown edge rule {other:?}"))),
        }
    }
}

/// Undirected edges from a kNN graph, each listed once with `a < b`, scored
/// by `score(a, b)`.
pub fn knn_edges(
    graph: &KnnGraph,
    rule: EdgeRule,
    score: impl Fn(usize, usize) -> Result<f64>,
) -> Result<Vec<ScoredEdge>> {
    let mut pairs = Vec::new();
    for (a, list) in graph.lists().iter().enumerate() {
        for nb in list {
            let b = nb.id;
            let keep = match rule {
                EdgeRule::Union => a < b || !graph.contains(b, a),
                EdgeRule::Intersection => a < b && graph.contains(b, a),
            };
            if keep {
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
        .into_iter()
        .map(|(a, b)| {
            let s = score(a, b)?;
            if !s.is_finite() {
                return Err(Error::validation(format!("non-finite score on edge ({a}, {b})")));
            }
            Ok(ScoredEdge { a, b, score: s })
        })
        .collect()
}

/// kNN edges scored by cosine of `features`.
pub fn cosine_edges(features: &FeatureMatrix, graph: &KnnGraph, rule: EdgeRule) -> Result<Vec<ScoredEdge>> {
    knn_edges(graph, rule, |a, b| sim_s(features.row(a), features.row(b)))
}

pub fn g_cut(edges: &[ScoredEdge], n: usize, threshold: f64) -> Result<ClusterAssignment> {
    if !threshold.is_finite() {
        return Err(Error::parameter("threshold must be finite"));
    }
    let mut uf = UnionFind::new(n);
    for e in edges {
        if e.a >= n || e.b >= n {
            return Err(Error::NodeOutOfRange { id: e.a.max(e.b), n });
        }
        if e.a == e.b {
            return Err(Error::validation(format!("self loop on node {}", e.a)));
        }
        if e.score > threshold {
            uf.union(e.a, e.b);
        }
    }
    Ok(uf.assignment())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub fp: f64,
    pub fb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub best: SweepPoint,
}

/// G-cut at every grid threshold; the best point maximizes min(F_P, F_B),
/// ties going to the lower threshold.
pub fn threshold_sweep(
    edges: &[ScoredEdge],
    n: usize,
    labels: &LabelVector,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::parameter("empty threshold grid"));
    }
    let mut points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&t| {
            let a = g_cut(edges, n, t)?;
            Ok(SweepPoint {
                threshold: t,
                fp: pairwise_f(&a, labels)?.f,
                fb: bcubed_f(&a, labels)?.f,
            })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    let mut best = points[0];
    for p in &points[1..] {
        if p.fp.min(p.fb) > best.fp.min(best.fb) {
            best = *p;
        }
    }
    Ok(SweepResult { points, best })
}

/// `count` evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn write_assignment_csv(mut w: impl Write, a: &ClusterAssignment) -> Result<()> {
    writeln!(w, "node,cluster")?;
    for (i, c) in a.as_slice().iter().enumerate() {
        writeln!(w, "{i},{c}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `node,cluster` rows; nodes must be listed as 0..N in order.
pub fn read_assignment_csv(r: impl BufRead) -> Result<ClusterAssignment> {
    let mut ids = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == "node,cluster") {
            continue;
        }
        let bad = || Error::format(format!("line {}: expected node,cluster", lineno + 1));
        let (node, cluster) = line.split_once(',').ok_or_else(bad)?;
        let node: usize = node.trim().parse().map_err(|_| bad())?;
        let cluster: usize = cluster.trim().parse().map_err(|_| bad())?;
        if node != ids.len() {
            return Err(Error::format(format!("line {}: node {node} out of order", lineno + 1)));
        }
        ids.push(cluster);
    }
    Ok(ClusterAssignment::new(ids))
}

pub fn write_sweep_csv(mut w: impl Write, points: &[SweepPoint]) -> Result<()> {
    writeln!(w, "threshold,fp,fb")?;
    for p in points {
        writeln!(w, "{:.6},{:.6},{:.6}", p.threshold, p.fp, p.fb)?;
    }
    w.flush()?;
    Ok(())
}
