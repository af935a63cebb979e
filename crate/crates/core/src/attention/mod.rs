//! Attention layers over fixed-size subgraphs: plain GCN, self-attention,
//! Q-Attention (attention over the gram map `A_X`), and B-Attention, their
//! row-softmax fusion.

pub mod checkpoint;
mod ops;
mod subgraph;

pub use ops::{
    a_x, b_attention_layer, forward_layer, fuse, masked_softmax, normalized_adjacency,
    plain_gcn_layer, q_attention, self_attention, LayerTrace, MASKED_SCORE,
};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use subgraph::{sample_subgraph, seed_batches, Subgraph};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Which attention map feeds the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Symmetric-normalized adjacency of the subgraph, no attention.
    PlainGcn,
    /// `softmax(theta_self * A_self)`.
    SelfOnly,
    /// `softmax(theta_qart * A_qart)`.
    Qart,
    /// Q-Attention built on `A_self` instead of `A_X`.
    QartTilde,
    /// Fusion of `A_qart` and `A_self`.
    Band,
    /// Fusion of the tilde Q-Attention and `A_self`.
    BandTilde,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::PlainGcn,
        Variant::SelfOnly,
        Variant::Qart,
        Variant::QartTilde,
        Variant::Band,
        Variant::BandTilde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PlainGcn => "plain_gcn",
            Variant::SelfOnly => "self",
            Variant::Qart => "qart",
            Variant::QartTilde => "qart_tilde",
            Variant::Band => "band",
            Variant::BandTilde => "band_tilde",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::parameter(format!("unknown variant {s:?}")))
    }

    pub(crate) fn uses_self(self) -> bool {
        matches!(
            self,
            Variant::SelfOnly | Variant::QartTilde | Variant::Band | Variant::BandTilde
        )
    }

    pub(crate) fn uses_qart(self) -> bool {
        matches!(
            self,
            Variant::Qart | Variant::QartTilde | Variant::Band | Variant::BandTilde
        )
    }

    pub(crate) fn is_tilde(self) -> bool {
        matches!(self, Variant::QartTilde | Variant::BandTilde)
    }

    fn code(self) -> u32 {
        Self::ALL.iter().position(|v| *v == self).unwrap() as u32
    }

    fn from_code(code: u32) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::format(format!("unknown variant code {code}")))
    }
}

/// How `A_qart` and `A_self` are combined before the row softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fusion {
    WeightedSum,
    PlainSum,
    ElementwiseProduct,
}

impl Fusion {
    pub const ALL: [Fusion; 3] = [Fusion::WeightedSum, Fusion::PlainSum, Fusion::ElementwiseProduct];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::WeightedSum => "weighted_sum",
            Fusion::PlainSum => "plain_sum",
            Fusion::ElementwiseProduct => "elementwise_product",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::parameter(format!("unknown fusion {s:?}")))
    }

    fn code(self) -> u32 {
        Self::ALL.iter().position(|f| *f == self).unwrap() as u32
    }

    fn from_code(code: u32) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::format(format!("unknown fusion code {code}")))
    }
}

/// Layer shape: subgraph size `l`, input width `m`, query/key width `md`,
/// output width `m_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    pub l: usize,
    pub m: usize,
    pub md: usize,
    pub m_out: usize,
}

impl LayerDims {
    /// Square layer with `md = m_out = m`.
    pub fn square(l: usize, m: usize) -> Self {
        Self { l, m, md: m, m_out: m }
    }
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Learnable weights and configuration of one attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_self_q: Array2<f64>,
    pub w_self_k: Array2<f64>,
    pub w_qart_q: Array2<f64>,
    pub w_qart_k: Array2<f64>,
    pub theta_qart: f64,
    pub theta_self: f64,
    pub w_l: Array2<f64>,
    pub variant: Variant,
    pub fusion: Fusion,
    pub use_w_qart: bool,
    /// Negative-side slope of the leaky rectifier; 1.0 gives the identity.
    pub leaky_slope: f64,
}

impl AttentionParams {
    /// All projections at identity (rectangular identities when widths
    /// differ), both thetas at 1.
    pub fn identity(dims: LayerDims, variant: Variant, fusion: Fusion) -> Self {
        Self {
            w_self_q: Array2::eye(dims.m.max(dims.md))
                .slice(ndarray::s![..dims.m, ..dims.md])
                .to_owned(),
            w_self_k: Array2::eye(dims.m.max(dims.md))
                .slice(ndarray::s![..dims.m, ..dims.md])
                .to_owned(),
            w_qart_q: Array2::eye(dims.l),
            w_qart_k: Array2::eye(dims.l),
            theta_qart: 1.0,
            theta_self: 1.0,
            w_l: Array2::eye(dims.m.max(dims.m_out))
                .slice(ndarray::s![..dims.m, ..dims.m_out])
                .to_owned(),
            variant,
            fusion,
            use_w_qart: true,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Identity initialization plus `N(0, scale^2)` noise on every matrix.
    pub fn perturbed_identity<R: Rng + ?Sized>(
        dims: LayerDims,
        variant: Variant,
        fusion: Fusion,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::identity(dims, variant, fusion);
        for w in p.matrices_mut() {
            w.mapv_inplace(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + scale * z
            });
        }
        p
    }

    pub fn dims(&self) -> LayerDims {
        LayerDims {
            l: self.w_qart_q.nrows(),
            m: self.w_self_q.nrows(),
            md: self.w_self_q.ncols(),
            m_out: self.w_l.ncols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let checks = [
            ("w_self_q", self.w_self_q.dim(), (d.m, d.md)),
            ("w_self_k", self.w_self_k.dim(), (d.m, d.md)),
            ("w_qart_q", self.w_qart_q.dim(), (d.l, d.l)),
            ("w_qart_k", self.w_qart_k.dim(), (d.l, d.l)),
            ("w_l", self.w_l.dim(), (d.m, d.m_out)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::validation(format!(
                    "{name} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        let finite = self.matrices().iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.theta_qart.is_finite()
            && self.theta_self.is_finite()
            && self.leaky_slope.is_finite();
        if !finite {
            return Err(Error::validation("non-finite attention parameter"));
        }
        Ok(())
    }

    /// Matrices in checkpoint order (thetas excluded).
    pub fn matrices(&self) -> [&Array2<f64>; 5] {
        [
            &self.w_self_q,
            &self.w_self_k,
            &self.w_qart_q,
            &self.w_qart_k,
            &self.w_l,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Array2<f64>; 5] {
        [
            &mut self.w_self_q,
            &mut self.w_self_k,
            &mut self.w_qart_q,
            &mut self.w_qart_k,
            &mut self.w_l,
        ]
    }
}

/// Which map an [`AttentionMap`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    AX,
    ASelf,
    AQart,
    ABand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub values: Array2<f64>,
    pub kind: MapKind,
}

/// A stack of layers applied in sequence to the same subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel {
    pub layers: Vec<AttentionParams>,
}

impl AttentionModel {
    pub fn new(layers: Vec<AttentionParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("model needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            if i > 0 {
                let prev = layers[i - 1].dims();
                let cur = layer.dims();
                if prev.m_out != cur.m || prev.l != cur.l {
                    return Err(Error::validation(format!(
                        "layer {i} expects (L={}, M={}) but layer {} produces (L={}, M={})",
                        cur.l,
                        cur.m,
                        i - 1,
                        prev.l,
                        prev.m_out
                    )));
                }
            }
        }
        Ok(Self { layers })
    }

    /// Same configuration and perturbed-identity init for every layer.
    pub fn init<R: Rng + ?Sized>(
        layers: usize,
        dims: LayerDims,
        variant: Variant,
        fusion: Fusion,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if layers > 1 && dims.m_out != dims.m {
            return Err(Error::validation("stacked layers need m_out = m"));
        }
        let layers = (0..layers)
            .map(|_| AttentionParams::perturbed_identity(dims, variant, fusion, scale, rng))
            .collect();
        Self::new(layers)
    }

    /// Runs every layer and returns the per-layer traces.
    pub fn forward_traced(&self, sub: &Subgraph) -> Result<Vec<LayerTrace>> {
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = match traces.last() {
                Some(t) => t.out.clone(),
                None => sub.features.data().clone(),
            };
            let trace = forward_layer(&input, &sub.mask, &sub.adjacency, layer)
                .map_err(|e| match e {
                    Error::Numeric { what, .. } => Error::Numeric { layer: i, what },
                    other => other,
                })?;
            traces.push(trace);
        }
        Ok(traces)
    }

    pub fn forward(&self, sub: &Subgraph) -> Result<Array2<f64>> {
        Ok(self.forward_traced(sub)?.pop().expect("non-empty").out)
    }
}
