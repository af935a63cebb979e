//! Monte-Carlo check of single-test error counts and post-threshold Sim-M
//! error rates.
//!
//! Each trial draws one candidate pool of size `m` with `round(alpha*m)`
//! members in the probe's category. The probe's single tests against the
//! pool give the single-test noisy/missing counts. A same-category partner
//! and a cross-category partner are then tested against the same pool, and
//! both Sim-M scores are compared against the threshold.
//!
//! In real mode single tests are similarities drawn from a truncated
//! Gaussian, and the single-test "counts" are the soft analogues
//! `sum(s)` over cross-category candidates and `sum(1 - s)` over
//! same-category candidates.

use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::bounds::{single_test_expectations, threshold_s_t};
use super::truncnorm::TruncatedNormal;
use super::{TestMode, TestModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub noisy_single: f64,
    pub miss_single: f64,
    pub simm_same: f64,
    pub simm_cross: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub trials: usize,
    pub m: usize,
    pub delta: f64,
    pub threshold_used: f64,
    pub noisy_mean: f64,
    pub noisy_expected: f64,
    pub noisy_sd: f64,
    pub miss_mean: f64,
    pub miss_expected: f64,
    pub miss_sd: f64,
    /// Single-test counts divided by `m`.
    pub noisy_rate_single: f64,
    pub miss_rate_single: f64,
    /// Fraction of cross-category pairs whose Sim-M exceeds the threshold.
    pub noisy_rate_post: f64,
    /// Fraction of same-category pairs whose Sim-M does not exceed it.
    pub miss_rate_post: f64,
    pub records: Vec<TrialRecord>,
}

/// Draws one single-test outcome for a candidate, given whether the
/// candidate shares the tested node's category.
enum Tester {
    Binary { same: Bernoulli, cross: Bernoulli },
    Real { same: TruncatedNormal, cross: TruncatedNormal },
}

impl Tester {
    fn new(model: &TestModel) -> Result<Self> {
        match model.mode {
            TestMode::Binary => {
                let bern = |p: f64| Bernoulli::new(p).map_err(|e| Error::parameter(e.to_string()));
                Ok(Tester::Binary {
                    same: bern(model.p)?,
                    cross: bern(model.q)?,
                })
            }
            TestMode::Real => Ok(Tester::Real {
                same: TruncatedNormal::with_mean(model.s_plus, model.noise_sd, -1.0, 1.0)?,
                cross: TruncatedNormal::with_mean(model.s_minus, model.noise_sd, -1.0, 1.0)?,
            }),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, same_category: bool) -> f64 {
        match (self, same_category) {
            (Tester::Binary { same, .. }, true) => f64::from(u8::from(same.sample(rng))),
            (Tester::Binary { cross, .. }, false) => f64::from(u8::from(cross.sample(rng))),
            (Tester::Real { same, .. }, true) => same.sample(rng),
            (Tester::Real { cross, .. }, false) => cross.sample(rng),
        }
    }
}

fn run_trial(
    tester: &Tester,
    m: usize,
    n_same: usize,
    seed: u64,
    trial: usize,
) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let mut noisy_single = 0.0;
    let mut miss_single = 0.0;
    let mut same_total = 0.0;
    let mut cross_total = 0.0;
    for k in 0..m {
        // Candidate k shares the probe's category for the first n_same slots.
        let with_probe = k < n_same;
        let probe = tester.draw(&mut rng, with_probe);
        if with_probe {
            miss_single += 1.0 - probe;
        } else {
            noisy_single += probe;
        }
        let partner_same = tester.draw(&mut rng, with_probe);
        let partner_cross = tester.draw(&mut rng, !with_probe);
        same_total += probe * partner_same;
        cross_total += probe * partner_cross;
    }
    TrialRecord {
        trial,
        noisy_single,
        miss_single,
        simm_same: same_total / m as f64,
        simm_cross: cross_total / m as f64,
    }
}

fn mean_and_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs `trials` independent trials. Trial `t` uses its own ChaCha stream
/// derived from `(seed, t)`, so results do not depend on thread count.
pub fn simulate(model: &TestModel, trials: usize, seed: u64) -> Result<SimulationReport> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::parameter("trials must be at least 1"));
    }
    if model.m == 0 {
        return Err(Error::parameter("pool size m must be at least 1"));
    }
    let delta = model.delta();
    let threshold = threshold_s_t(model, delta)?;
    let tester = Tester::new(model)?;
    let m = model.m;
    let n_same = model.same_count();

    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(&tester, m, n_same, seed, t))
        .collect();

    let (noisy_mean, noisy_sd) = mean_and_sd(records.iter().map(|r| r.noisy_single), trials);
    let (miss_mean, miss_sd) = mean_and_sd(records.iter().map(|r| r.miss_single), trials);
    let noisy_post = records.iter().filter(|r| r.simm_cross > threshold).count();
    let miss_post = records.iter().filter(|r| r.simm_same <= threshold).count();
    let (noisy_expected, miss_expected) = single_test_expectations(model);

    Ok(SimulationReport {
        trials,
        m,
        delta,
        threshold_used: threshold,
        noisy_mean,
        noisy_expected,
        noisy_sd,
        miss_mean,
        miss_expected,
        miss_sd,
        noisy_rate_single: noisy_mean / m as f64,
        miss_rate_single: miss_mean / m as f64,
        noisy_rate_post: noisy_post as f64 / trials as f64,
        miss_rate_post: miss_post as f64 / trials as f64,
        records,
    })
}
