//! Poisson photon-number statistics and channel models: the honest
//! beamsplitter channel and adversarial yield-vector channels, with exact
//! expected detection probabilities.

use crate::error::{Error, Result};
use crate::special::ln_factorial;

/// Conditional detection probabilities `y_0..y_K`: `y[n]` is the probability
/// that the detector clicks given an `n`-photon pulse was emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldVector {
    y: Vec<f64>,
}

impl YieldVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("empty yield vector".into()));
        }
        if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "yield {bad} outside [0,1]"
            )));
        }
        Ok(YieldVector { y })
    }

    /// Truncation order K; the vector has K+1 entries.
    pub fn truncation_order(&self) -> usize {
        self.y.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        self.y.get(n).copied()
    }
}

impl std::ops::Index<usize> for YieldVector {
    type Output = f64;
    fn index(&self, n: usize) -> &f64 {
        &self.y[n]
    }
}

/// Channel seen by the pulses: either an honest lossy channel with dark
/// counts, or an arbitrary photon-number-dependent yield vector (the degree
/// of freedom an eavesdropper controls).
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Each photon independently survives with probability `eta`; the
    /// detector additionally fires on noise (dark plus background counts)
    /// with probability `y0` per clock cycle.
    Beamsplitter { eta: f64, y0: f64 },
    /// Detection probability specified directly per photon number.
    Adversarial { yields: YieldVector },
}

impl ChannelModel {
    pub fn beamsplitter(eta: f64, y0: f64) -> Result<Self> {
        for (name, v) in [("eta", eta), ("y0", y0)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name}={v} outside [0,1]")));
            }
        }
        Ok(ChannelModel::Beamsplitter { eta, y0 })
    }

    pub fn adversarial(yields: YieldVector) -> Self {
        ChannelModel::Adversarial { yields }
    }

    /// True conditional click probability for an `n`-photon pulse.
    ///
    /// Beamsplitter: `1 - (1-y0)(1-eta)^n` (a click is a dark count or any
    /// surviving photon, independently). Adversarial: the stored yield;
    /// `n` beyond the stored truncation order is an error.
    pub fn true_yield(&self, n: u64) -> Result<f64> {
        match self {
            ChannelModel::Beamsplitter { eta, y0 } => {
                if n == 0 {
                    return Ok(*y0);
                }
                // (1-eta)^n, safe at eta = 1 where ln_1p(-eta) is -inf
                let survive_none = (n as f64 * (-eta).ln_1p()).exp();
                Ok(1.0 - (1.0 - y0) * survive_none)
            }
            ChannelModel::Adversarial { yields } => {
                yields.get(n as usize).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "adversarial channel defined only up to K={}, asked for n={n}",
                        yields.truncation_order()
                    ))
                })
            }
        }
    }
}

/// Poisson pmf `e^(-mu) mu^n / n!`, in the log domain for large `n`.
pub fn poisson_pmf(n: u64, mu: f64) -> f64 {
    assert!(mu >= 0.0, "poisson_pmf: mu must be nonnegative, got {mu}");
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp()
}

/// Expected detection probability for a Poisson-`mu` pulse, with the
/// unresolved Poisson tail reported alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEstimate {
    /// The detection probability; for adversarial channels this is the sum
    /// truncated at the stored order and therefore a lower value.
    pub value: f64,
    /// Upper bound on the contribution of the dropped tail (tail mass times
    /// the trivial yield bound 1). Zero for the beamsplitter closed form.
    pub tail_bound: f64,
}

/// Detection probability `d_mu = sum_n e^(-mu) mu^n / n! * y_n`.
///
/// The beamsplitter channel admits the closed form `1 - (1-y0) e^(-mu eta)`,
/// which is used directly; adversarial channels are summed to their stored
/// truncation order with the conservative tail bound reported.
pub fn expected_detection_probability(channel: &ChannelModel, mu: f64) -> DetectionEstimate {
    assert!(mu >= 0.0, "mu must be nonnegative, got {mu}");
    match channel {
        ChannelModel::Beamsplitter { eta, y0 } => DetectionEstimate {
            value: 1.0 - (1.0 - y0) * (-mu * eta).exp(),
            tail_bound: 0.0,
        },
        ChannelModel::Adversarial { yields } => {
            let (coeffs, tail) = truncated_series_coefficients(mu, yields.truncation_order());
            let value = coeffs
                .iter()
                .zip(yields.values())
                .map(|(c, y)| c * y)
                .sum();
            DetectionEstimate {
                value,
                tail_bound: tail,
            }
        }
    }
}

/// Poisson coefficients `e^(-mu) mu^k / k!` for `k = 0..=K`, plus the
/// residual tail mass `1 - sum` (used to validate that K is adequate).
pub fn truncated_series_coefficients(mu: f64, k: usize) -> (Vec<f64>, f64) {
    assert!(mu >= 0.0, "mu must be nonnegative, got {mu}");
    let mut coeffs = Vec::with_capacity(k + 1);
    let mut c = (-mu).exp();
    let mut sum = 0.0;
    for i in 0..=k {
        coeffs.push(c);
        sum += c;
        c *= mu / (i + 1) as f64;
    }
    (coeffs, (1.0 - sum).max(0.0))
}
