use rand::Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Gaussian truncated to `[lo, hi]`, parameterized by its post-truncation
/// mean rather than its location.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal {
    loc: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    sampler: NormalSampler<f64>,
}

fn truncated_mean(loc: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let std = Normal::standard();
    let a = (lo - loc) / sd;
    let b = (hi - loc) / sd;
    let mass = std.cdf(b) - std.cdf(a);
    if mass < 1e-300 {
        return if a > 0.0 { lo } else { hi };
    }
    loc + sd * (std.pdf(a) - std.pdf(b)) / mass
}

impl TruncatedNormal {
    /// Solves for the location whose truncation to `[lo, hi]` has mean `mean`.
    pub fn with_mean(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < mean && mean < hi) || !(sd > 0.0) {
            return Err(Error::parameter(format!(
                "truncated normal needs lo < mean < hi and sd > 0, got mean={mean} sd={sd} range=[{lo}, {hi}]"
            )));
        }
        // The truncated mean is strictly increasing in the location.
        let mut left = lo - 40.0 * sd;
        let mut right = hi + 40.0 * sd;
        if truncated_mean(left, sd, lo, hi) > mean || truncated_mean(right, sd, lo, hi) < mean {
            return Err(Error::parameter(format!(
                "mean {mean} not reachable with sd {sd}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (left + right);
            if truncated_mean(mid, sd, lo, hi) < mean {
                left = mid;
            } else {
                right = mid;
            }
        }
        let loc = 0.5 * (left + right);
        let sampler = NormalSampler::new(loc, sd).map_err(|e| Error::parameter(e.to_string()))?;
        Ok(Self {
            loc,
            sd,
            lo,
            hi,
            sampler,
        })
    }

    pub fn loc(&self) -> f64 {
        self.loc
    }

    pub fn mean(&self) -> f64 {
        truncated_mean(self.loc, self.sd, self.lo, self.hi)
    }
}

impl Distribution<f64> for TruncatedNormal {
    // Rejection from the untruncated Gaussian.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.sampler.sample(rng);
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
    }
}
