//! Chernoff-bound calculators: pool sizing and the Sim-M decision threshold.

use crate::error::{Error, Result};

use super::{TestMode, TestModel};

/// Two-sided tail bound `exp(-eps^2 mu / 3)` for sums of independent 0/1
/// variables with mean `mu`.
pub fn chernoff_tail_bound(mu: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::parameter(format!("mu must be positive, got {mu}")));
    }
    Ok((-epsilon * epsilon * mu / 3.0).exp())
}

/// Tail bound `exp(-eps^2 mu^2 / (m (b-a)^2))` for sums of `m` independent
/// variables bounded in `[a, b]`.
pub fn general_chernoff_tail_bound(mu: f64, epsilon: f64, m: usize, a: f64, b: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if m == 0 || !(b > a) {
        return Err(Error::parameter("need m >= 1 and b > a"));
    }
    let width = b - a;
    Ok((-epsilon * epsilon * mu * mu / (m as f64 * width * width)).exp())
}

/// Expected single-test noisy and missing edge counts over a pool of `m`.
pub fn single_test_expectations(model: &TestModel) -> (f64, f64) {
    let (noisy, miss) = model.single_test_rates();
    let m = model.m as f64;
    (noisy * m, miss * m)
}

/// `((hi+lo)^2 + (2a-1)(hi^2-lo^2)) / ((hi-lo)^2 + (2a-1)(hi^2-lo^2))`,
/// the inverse of the largest admissible relative deviation.
fn spread_ratio(hi: f64, lo: f64, alpha: f64) -> f64 {
    let skew = (2.0 * alpha - 1.0) * (hi * hi - lo * lo);
    ((hi + lo).powi(2) + skew) / ((hi - lo).powi(2) + skew)
}

/// `log(gamma / min(noisy rate, miss rate))`, evaluated as a difference of
/// logs so extreme `gamma` does not overflow.
fn log_inverse_delta(model: &TestModel) -> Result<f64> {
    let (noisy, miss) = model.single_test_rates();
    let floor = noisy.min(miss);
    if !(floor > 0.0) {
        return Err(Error::InfeasibleBound(format!(
            "delta is zero (min single-test rate = {floor})"
        )));
    }
    Ok(model.gamma.ln() - floor.ln())
}

fn smallest_integer_above(bound: f64) -> Result<usize> {
    if !bound.is_finite() || bound >= usize::MAX as f64 / 2.0 {
        return Err(Error::InfeasibleBound(format!(
            "pool-size bound is not representable: {bound}"
        )));
    }
    Ok(bound.max(-1.0).floor() as usize + 1)
}

/// Right-hand side of the binary pool-size condition.
pub fn min_m_binary_bound(model: &TestModel) -> Result<f64> {
    let (p, q, alpha) = (model.p, model.q, model.alpha);
    if p == q {
        return Err(Error::InfeasibleBound("p equals q".into()));
    }
    if !(q > 0.0) {
        return Err(Error::InfeasibleBound("q = 0 makes the cross mean pq vanish".into()));
    }
    model.validate()?;
    let ratio = spread_ratio(p, q, alpha);
    Ok(3.0 * ratio * ratio / (p * q) * log_inverse_delta(model)?)
}

/// Smallest pool size `m` strictly above the binary bound.
pub fn min_m_binary(model: &TestModel) -> Result<usize> {
    smallest_integer_above(min_m_binary_bound(model)?)
}

/// Right-hand side of the real-valued pool-size condition (range width 2).
pub fn min_m_real_bound(model: &TestModel) -> Result<f64> {
    let (sp, sm, alpha) = (model.s_plus, model.s_minus, model.alpha);
    if !(sm > 0.0) {
        return Err(Error::InfeasibleBound(format!(
            "real-mode bound needs s_minus > 0, got {sm}"
        )));
    }
    let model = TestModel {
        mode: TestMode::Real,
        ..*model
    };
    model.validate()?;
    let ratio = spread_ratio(sp, sm, alpha);
    Ok(4.0 * ratio * ratio / (sp * sp * sm * sm) * log_inverse_delta(&model)?)
}

pub fn min_m_real(model: &TestModel) -> Result<usize> {
    smallest_integer_above(min_m_real_bound(model)?)
}

/// Relative deviations `(eps_cross, eps_same)` allowed at confidence
/// `1 - delta` for the model's pool size.
fn deviations(model: &TestModel, delta: f64) -> (f64, f64) {
    let m = model.m as f64;
    let (cross, same) = model.expected_products();
    let log_term = (1.0 / delta).ln();
    match model.mode {
        TestMode::Binary => (
            (3.0 * log_term / (cross * m)).sqrt(),
            (3.0 * log_term / (same * m)).sqrt(),
        ),
        TestMode::Real => (
            (4.0 * log_term / (m * cross * cross)).sqrt(),
            (4.0 * log_term / (m * same * same)).sqrt(),
        ),
    }
}

/// Sim-M decision threshold: the midpoint of the inflated cross-category
/// mean and the deflated same-category mean.
pub fn threshold_s_t(model: &TestModel, delta: f64) -> Result<f64> {
    if model.m == 0 {
        return Err(Error::parameter("threshold needs m > 0"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::parameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    model.validate()?;
    let (cross, same) = model.expected_products();
    if !(cross > 0.0) {
        return Err(Error::InfeasibleBound("cross-category mean is not positive".into()));
    }
    let (eps_cross, eps_same) = deviations(model, delta);
    Ok((1.0 + eps_cross) * cross / 2.0 + (1.0 - eps_same) * same / 2.0)
}

/// Whether the model's pool size makes the two confidence intervals
/// disjoint at `delta` (the larger cross-category deviation is used).
pub fn separation_holds(model: &TestModel, delta: f64) -> bool {
    let (cross, same) = model.expected_products();
    if model.m == 0 || !(cross > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return false;
    }
    let (eps_cross, _) = deviations(model, delta);
    eps_cross < (same - cross) / (same + cross)
}
