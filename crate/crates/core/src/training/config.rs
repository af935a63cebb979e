use std::io::BufRead;

use crate::attention::{Fusion, Variant, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};

/// Which node pairs inside a subgraph are scored by the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairPolicy {
    /// The seed node against every other real node.
    ProbeAnchored,
    /// Every unordered pair of real nodes.
    AllPairs,
}

impl PairPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "probe" => Ok(PairPolicy::ProbeAnchored),
            "all" => Ok(PairPolicy::AllPairs),
            other => Err(Error::parameter(format!("unknown pair policy {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairPolicy::ProbeAnchored => "probe",
            PairPolicy::AllPairs => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub margin_pos: f64,
    pub margin_neg: f64,
    pub k: usize,
    pub k_seed: usize,
    pub layers: usize,
    pub seed: u64,
    pub variant: Variant,
    pub fusion: Fusion,
    pub use_w_qart: bool,
    pub leaky_slope: f64,
    /// Standard deviation of the noise added to the identity initialization.
    pub init_scale: f64,
    pub pairs: PairPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.008,
            epochs: 50,
            margin_pos: 0.9,
            margin_neg: 0.3,
            k: 10,
            k_seed: 1,
            layers: 1,
            seed: 0,
            variant: Variant::Band,
            fusion: Fusion::WeightedSum,
            use_w_qart: true,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            init_scale: 0.01,
            pairs: PairPolicy::ProbeAnchored,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero is accepted so a run can be checked to leave weights untouched.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::parameter("learning_rate must be finite and >= 0"));
        }
        for (name, v) in [("margin_pos", self.margin_pos), ("margin_neg", self.margin_neg)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::parameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.layers == 0 {
            return Err(Error::parameter("layers must be at least 1"));
        }
        if self.k == 0 || self.k_seed == 0 {
            return Err(Error::parameter("k and k_seed must be at least 1"));
        }
        if !(self.init_scale >= 0.0) || !self.leaky_slope.is_finite() {
            return Err(Error::parameter("bad init_scale or leaky_slope"));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::parameter(format!("{key}: cannot parse {value:?}: {e}")))
        }
        match key {
            "learning_rate" => self.learning_rate = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "margin_pos" => self.margin_pos = num(key, value)?,
            "margin_neg" => self.margin_neg = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "k_seed" => self.k_seed = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "variant" => self.variant = Variant::parse(value)?,
            "fusion" => self.fusion = Fusion::parse(value)?,
            "use_w_qart" => self.use_w_qart = num(key, value)?,
            "leaky_slope" => self.leaky_slope = num(key, value)?,
            "init_scale" => self.init_scale = num(key, value)?,
            "pairs" => self.pairs = PairPolicy::parse(value)?,
            other => return Err(Error::parameter(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Reads `key=value` lines on top of the defaults. `#` starts a comment.
    pub fn from_reader(r: impl BufRead) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| {
                Error::parameter(format!("line {}: expected key=value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::parameter(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
