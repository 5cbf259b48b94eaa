//! Source and access-policy parameterizations, plus the channel-level
//! quantities they induce on a collision channel shared by `M` nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probabilities that drift just outside `[0, 1]` through
/// rounding. Anything further out is rejected.
pub const PROB_SLACK: f64 = 1e-12;

/// Validates a probability, clamping values within [`PROB_SLACK`] of the unit
/// interval.
pub fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() || !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&value) {
        return Err(Error::InvalidProbability { name, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Two-state discrete-time Markov source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    q01: f64,
    q10: f64,
}

impl SourceModel {
    pub fn new(q01: f64, q10: f64) -> Result<Self> {
        let q01 = check_probability("q01", q01)?;
        let q10 = check_probability("q10", q10)?;
        if q01 + q10 <= 0.0 {
            return Err(Error::FrozenSource);
        }
        Ok(Self { q01, q10 })
    }

    pub fn symmetric(q: f64) -> Result<Self> {
        Self::new(q, q)
    }

    /// Builds the source with average transition probability `q_bar` and
    /// asymmetry `eta = q01 / q10`.
    ///
    /// From `q01 = eta * q10` and `q_bar = 2 q01 q10 / (q01 + q10)`:
    /// `q10 = q_bar (1 + eta) / (2 eta)` and `q01 = q_bar (1 + eta) / 2`.
    pub fn from_rate_and_asymmetry(q_bar: f64, eta: f64) -> Result<Self> {
        let q_bar = check_probability("q_bar", q_bar)?;
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive and finite, got {eta}")));
        }
        let q10 = q_bar * (1.0 + eta) / (2.0 * eta);
        let q01 = q_bar * (1.0 + eta) / 2.0;
        Self::new(q01, q10)
    }

    pub fn q01(&self) -> f64 {
        self.q01
    }

    pub fn q10(&self) -> f64 {
        self.q10
    }

    pub fn q00(&self) -> f64 {
        1.0 - self.q01
    }

    pub fn q11(&self) -> f64 {
        1.0 - self.q10
    }

    /// Probability of leaving `state` in one slot.
    pub fn leave_prob(&self, state: u8) -> f64 {
        if state == 0 {
            self.q01
        } else {
            self.q10
        }
    }

    /// Stationary distribution `(pi0, pi1)`.
    pub fn stationary(&self) -> (f64, f64) {
        let total = self.q01 + self.q10;
        (self.q10 / total, self.q01 / total)
    }

    /// Average per-slot probability of a state change, `pi0 q01 + pi1 q10`.
    pub fn avg_transition_prob(&self) -> f64 {
        2.0 * self.q01 * self.q10 / (self.q01 + self.q10)
    }

    /// `q01 / q10`; infinite for a source that never leaves state 1.
    pub fn eta(&self) -> f64 {
        if self.q10 == 0.0 {
            f64::INFINITY
        } else {
            self.q01 / self.q10
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.q01 == self.q10
    }
}

/// Hybrid ALOHA access: transmit with `alpha_c` in a slot where the source
/// changed state, with `alpha_s` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessPolicy {
    alpha_c: f64,
    alpha_s: f64,
}

impl AccessPolicy {
    pub fn hybrid(alpha_c: f64, alpha_s: f64) -> Result<Self> {
        Ok(Self {
            alpha_c: check_probability("alpha_c", alpha_c)?,
            alpha_s: check_probability("alpha_s", alpha_s)?,
        })
    }

    pub fn random(alpha: f64) -> Result<Self> {
        Self::hybrid(alpha, alpha)
    }

    pub fn reactive() -> Self {
        Self {
            alpha_c: 1.0,
            alpha_s: 0.0,
        }
    }

    pub fn alpha_c(&self) -> f64 {
        self.alpha_c
    }

    pub fn alpha_s(&self) -> f64 {
        self.alpha_s
    }

    pub fn tx_prob(&self, changed: bool) -> f64 {
        if changed {
            self.alpha_c
        } else {
            self.alpha_s
        }
    }
}

/// How the per-transmission success probability is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// `(1 - rho)^(M - 1)`.
    Exact,
    /// `exp(-rho M)`, the large-population limit.
    #[default]
    Exponential,
}

/// Per-slot transmission probability of a node, averaged over the source.
pub fn activity(source: &SourceModel, policy: &AccessPolicy) -> f64 {
    let q_bar = source.avg_transition_prob();
    q_bar * policy.alpha_c + (1.0 - q_bar) * policy.alpha_s
}

/// Probability that a transmitted packet is the only one in its slot.
///
/// A lone node has no contenders, so `M = 1` yields 1 in both modes.
pub fn success_prob(m: u32, rho: f64, mode: GammaMode) -> f64 {
    if m <= 1 {
        return 1.0;
    }
    match mode {
        GammaMode::Exact => (1.0 - rho).powf(f64::from(m - 1)),
        GammaMode::Exponential => (-rho * f64::from(m)).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub rho: f64,
    pub load_g: f64,
    pub gamma: f64,
    pub throughput_s: f64,
    pub m: u32,
}

impl ChannelStats {
    pub fn new(source: &SourceModel, policy: &AccessPolicy, m: u32, mode: GammaMode) -> Self {
        let rho = activity(source, policy);
        let gamma = success_prob(m, rho, mode);
        let load_g = rho * f64::from(m);
        Self {
            rho,
            load_g,
            gamma,
            throughput_s: load_g * gamma,
            m,
        }
    }
}
