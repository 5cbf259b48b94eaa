//! Closed-form stationary analysis of one source tracked over the channel.
//!
//! The joint process `(X, X_hat)` of true source state and receiver estimate
//! is a four-state Markov chain once the channel is summarized by the
//! per-transmission success probability `gamma`. Within a slot the source
//! moves first; a node transmits with `alpha_c` if it just changed state and
//! with `alpha_s` otherwise; a successful packet sets the estimate to the
//! current state. An error also clears when the source moves back onto the
//! estimated state, with or without a delivery.
//!
//! Error periods are geometric sojourns in `(0,1)` or `(1,0)`; correct
//! periods are sojourns in `(0,0)` or `(1,1)`. The long-run average AoII
//! follows from their first two moments by a renewal-reward argument: one
//! error period of length `W` accrues `1 + 2 + ... + W = W (W + 1) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sources::{check_probability, AccessPolicy, ChannelStats, GammaMode, SourceModel};

pub type Matrix4 = [[f64; 4]; 4];

/// State of the joint `(X, X_hat)` chain, indexed in the order
/// `(0,0), (0,1), (1,0), (1,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointState {
    Correct0 = 0,
    Wrong01 = 1,
    Wrong10 = 2,
    Correct1 = 3,
}

impl JointState {
    pub const ALL: [JointState; 4] = [
        JointState::Correct0,
        JointState::Wrong01,
        JointState::Wrong10,
        JointState::Correct1,
    ];

    pub fn from_pair(x: u8, x_hat: u8) -> Self {
        match (x, x_hat) {
            (0, 0) => JointState::Correct0,
            (0, _) => JointState::Wrong01,
            (_, 0) => JointState::Wrong10,
            _ => JointState::Correct1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn source(self) -> u8 {
        match self {
            JointState::Correct0 | JointState::Wrong01 => 0,
            JointState::Wrong10 | JointState::Correct1 => 1,
        }
    }

    pub fn estimate(self) -> u8 {
        match self {
            JointState::Correct0 | JointState::Wrong10 => 0,
            JointState::Wrong01 | JointState::Correct1 => 1,
        }
    }

    pub fn is_error(self) -> bool {
        matches!(self, JointState::Wrong01 | JointState::Wrong10)
    }
}

/// Source state singled out for missed-detection accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SourceState {
    Zero,
    #[default]
    One,
}

impl SourceState {
    pub fn bit(self) -> u8 {
        match self {
            SourceState::Zero => 0,
            SourceState::One => 1,
        }
    }
}

impl TryFrom<u8> for SourceState {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(SourceState::Zero),
            1 => Ok(SourceState::One),
            other => Err(format!("source state must be 0 or 1, got {other}")),
        }
    }
}

impl From<SourceState> for u8 {
    fn from(s: SourceState) -> u8 {
        s.bit()
    }
}

/// One outgoing transition of the joint chain, tagged with whether a packet
/// of the tracked node got through in that slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: JointState,
    pub prob: f64,
    pub delivered: bool,
}

/// The joint chain with every transition split by delivery outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTransitions {
    pub rows: [Vec<Edge>; 4],
}

impl LabeledTransitions {
    pub fn new(source: &SourceModel, policy: &AccessPolicy, gamma: f64) -> Self {
        use JointState::*;
        let (q00, q01, q10, q11) = (source.q00(), source.q01(), source.q10(), source.q11());
        let change_ok = policy.alpha_c() * gamma;
        let stay_ok = policy.alpha_s() * gamma;
        let edge = |to, prob, delivered| Edge { to, prob, delivered };
        LabeledTransitions {
            rows: [
                vec![
                    edge(Correct0, q00 * stay_ok, true),
                    edge(Correct0, q00 * (1.0 - stay_ok), false),
                    edge(Correct1, q01 * change_ok, true),
                    edge(Wrong10, q01 * (1.0 - change_ok), false),
                ],
                vec![
                    edge(Correct0, q00 * stay_ok, true),
                    edge(Wrong01, q00 * (1.0 - stay_ok), false),
                    edge(Correct1, q01 * change_ok, true),
                    edge(Correct1, q01 * (1.0 - change_ok), false),
                ],
                vec![
                    edge(Correct1, q11 * stay_ok, true),
                    edge(Wrong10, q11 * (1.0 - stay_ok), false),
                    edge(Correct0, q10 * change_ok, true),
                    edge(Correct0, q10 * (1.0 - change_ok), false),
                ],
                vec![
                    edge(Correct1, q11 * stay_ok, true),
                    edge(Correct1, q11 * (1.0 - stay_ok), false),
                    edge(Correct0, q10 * change_ok, true),
                    edge(Wrong01, q10 * (1.0 - change_ok), false),
                ],
            ],
        }
    }

    pub fn matrix(&self) -> Matrix4 {
        let mut m = [[0.0; 4]; 4];
        for (from, row) in self.rows.iter().enumerate() {
            for e in row {
                m[from][e.to.index()] += e.prob;
            }
        }
        m
    }
}

/// Transition matrix of the joint `(X, X_hat)` chain.
pub fn joint_transition_matrix(source: &SourceModel, policy: &AccessPolicy, gamma: f64) -> Matrix4 {
    LabeledTransitions::new(source, policy, gamma).matrix()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointChainModel {
    pub transition: Matrix4,
    /// `[pi00, pi01, pi10, pi11]`.
    pub stationary: [f64; 4],
    pub normalizer_z: f64,
}

impl JointChainModel {
    pub fn pi(&self, state: JointState) -> f64 {
        self.stationary[state.index()]
    }
}

/// Balance-equation solution scaled by the normalizer `z`, in state order.
fn scaled_stationary(source: &SourceModel, policy: &AccessPolicy, gamma: f64) -> [f64; 4] {
    let (q01, q10) = (source.q01(), source.q10());
    let (ac, as_) = (policy.alpha_c(), policy.alpha_s());
    let leave0_rate = ac * q01 + as_ * (1.0 - q01);
    let leave1_rate = ac * q10 + as_ * (1.0 - q10);
    [
        q10 * leave0_rate * (q10 + (1.0 - q10) * as_ * gamma),
        q01 * q10 * leave1_rate * (1.0 - ac * gamma),
        q01 * q10 * leave0_rate * (1.0 - ac * gamma),
        q01 * leave1_rate * (q01 + (1.0 - q01) * as_ * gamma),
    ]
}

fn normalizer(source: &SourceModel, policy: &AccessPolicy, gamma: f64) -> f64 {
    let (q01, q10) = (source.q01(), source.q10());
    let (ac, as_) = (policy.alpha_c(), policy.alpha_s());
    let sum = q01 + q10;
    sum * (ac * q10 * q01 * (2.0 - ac * gamma)
        + as_ * (sum * (1.0 - as_ * gamma) + as_ * gamma - q01 * q10 * (2.0 - as_ * gamma)))
}

/// Stationary distribution of the joint chain from the balance equations.
pub fn joint_stationary_closed_form(
    source: &SourceModel,
    policy: &AccessPolicy,
    gamma: f64,
) -> Result<JointChainModel> {
    let gamma = check_probability("gamma", gamma)?;
    let z = normalizer(source, policy, gamma);
    if z.is_nan() || z <= 0.0 {
        return Err(Error::DegenerateChain);
    }
    let scaled = scaled_stationary(source, policy, gamma);
    Ok(JointChainModel {
        transition: joint_transition_matrix(source, policy, gamma),
        stationary: scaled.map(|v| v / z),
        normalizer_z: z,
    })
}

/// Error- and correct-period statistics of one source.
///
/// `e_w` and `e_w2` are `None` when error states are never entered; `e_y` is
/// infinite when correct periods never end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCycleModel {
    /// Probability that an error period is spent in `(0,1)`.
    pub c_prime: Option<f64>,
    /// Probability that a correct period is spent in `(0,0)`.
    pub c_dprime: Option<f64>,
    pub e_w: Option<f64>,
    pub e_w2: Option<f64>,
    pub e_y: f64,
    /// Per-slot exit probability of `(0,1)`, the geometric parameter of `W01`.
    pub exit_01: f64,
    /// Per-slot exit probability of `(1,0)`.
    pub exit_10: f64,
}

impl ErrorCycleModel {
    pub fn error_reachable(&self) -> bool {
        self.e_w.is_some()
    }
}

fn weighted(weight: f64, value: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * value
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn error_cycle(source: &SourceModel, policy: &AccessPolicy, gamma: f64) -> Result<ErrorCycleModel> {
    let gamma = check_probability("gamma", gamma)?;
    let (q00, q01, q10, q11) = (source.q00(), source.q01(), source.q10(), source.q11());
    let mut scaled = scaled_stationary(source, policy, gamma);
    if scaled.iter().all(|&v| v == 0.0) {
        // Nobody ever transmits: in the limit of vanishing access
        // probabilities the frozen estimate is a stationary draw independent
        // of the source.
        scaled = [q10 * q10, q01 * q10, q01 * q10, q01 * q01];
    }
    let (w00, w11) = (scaled[0], scaled[3]);

    let change_fail = 1.0 - policy.alpha_c() * gamma;
    let stay_fail = 1.0 - policy.alpha_s() * gamma;
    let exit_01 = 1.0 - q00 * stay_fail;
    let exit_10 = 1.0 - q11 * stay_fail;

    let c_prime = ratio(w11 * q10, w11 * q10 + w00 * q01);
    let c_dprime = ratio(w00 * q01, w00 * q01 + w11 * q10);

    let entry_rate = (w11 * q10 + w00 * q01) * change_fail;
    let (e_w, e_w2) = match c_prime {
        Some(c) if entry_rate > 0.0 => {
            let mean = weighted(c, 1.0 / exit_01) + weighted(1.0 - c, 1.0 / exit_10);
            let second = weighted(c, (2.0 - exit_01) / (exit_01 * exit_01))
                + weighted(1.0 - c, (2.0 - exit_10) / (exit_10 * exit_10));
            (Some(mean), Some(second))
        }
        _ => (None, None),
    };

    let e_y = match c_dprime {
        Some(c) => weighted(c, 1.0 / (q01 * change_fail)) + weighted(1.0 - c, 1.0 / (q10 * change_fail)),
        None => f64::INFINITY,
    };

    Ok(ErrorCycleModel {
        c_prime,
        c_dprime,
        e_w,
        e_w2,
        e_y,
        exit_01,
        exit_10,
    })
}

/// Long-run average AoII, `(E[W^2] + E[W]) / (2 (E[W] + E[Y]))`.
pub fn aoii_general(cycle: &ErrorCycleModel) -> f64 {
    match (cycle.e_w, cycle.e_w2) {
        (Some(w), Some(w2)) if cycle.e_y.is_finite() => (w2 + w) / (2.0 * (w + cycle.e_y)),
        _ => 0.0,
    }
}

/// Average AoII of a symmetric source in terms of load and success
/// probability.
pub fn aoii_symmetric(source: &SourceModel, m: u32, policy: &AccessPolicy, gamma: f64) -> Result<f64> {
    if !source.is_symmetric() {
        return Err(Error::AsymmetricSource {
            q01: source.q01(),
            q10: source.q10(),
        });
    }
    let gamma = check_probability("gamma", gamma)?;
    let q_bar = source.q01();
    let m = f64::from(m);
    let load = crate::sources::activity(source, policy) * m;
    let fail = 1.0 - policy.alpha_c() * gamma;
    let change_term = q_bar * m * fail;
    let delivered = load * gamma;
    Ok(q_bar * m * m * fail / ((change_term + delivered) * (2.0 * change_term + delivered)))
}

/// Average AoII of the random policy on a symmetric source, written in terms
/// of the throughput `s`.
pub fn aoii_random_throughput_form(q_bar: f64, m: u32, s: f64) -> f64 {
    let m = f64::from(m);
    q_bar * m * (m - s) / ((q_bar * m + s * (1.0 - q_bar)) * (2.0 * q_bar * m + s * (1.0 - 2.0 * q_bar)))
}

/// Small-`q_bar` approximation of the symmetric AoII at load `g_load`, with
/// `gamma = exp(-G)`.
pub fn aoii_hybrid_approx(q_bar: f64, m: u32, g_load: f64, alpha_c: f64) -> f64 {
    if g_load <= 0.0 {
        return f64::INFINITY;
    }
    let m = f64::from(m);
    let gamma = (-g_load).exp();
    let s = g_load * gamma;
    q_bar * m * m * (1.0 - alpha_c * gamma) / (s * s)
}

/// Probability that a visit to `critical` ends with no packet delivered
/// during it.
pub fn missed_detection(source: &SourceModel, policy: &AccessPolicy, gamma: f64, critical: SourceState) -> f64 {
    let leave = source.leave_prob(critical.bit());
    let change_fail = 1.0 - policy.alpha_c() * gamma;
    let stay_ok = policy.alpha_s() * gamma;
    let den = leave + stay_ok * (1.0 - leave);
    if den == 0.0 {
        // absorbing critical state, limit of leave -> 0
        return change_fail;
    }
    leave * change_fail / den
}

/// Every analytic metric for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub aoii: f64,
    pub p_miss: f64,
    pub cycle: ErrorCycleModel,
    pub channel: ChannelStats,
}

pub fn analyze(
    source: &SourceModel,
    policy: &AccessPolicy,
    m: u32,
    mode: GammaMode,
    critical: SourceState,
) -> Result<AnalyticReport> {
    let channel = ChannelStats::new(source, policy, m, mode);
    let cycle = error_cycle(source, policy, channel.gamma)?;
    Ok(AnalyticReport {
        aoii: aoii_general(&cycle),
        p_miss: missed_detection(source, policy, channel.gamma, critical),
        cycle,
        channel,
    })
}

/// Average AoII with `gamma` taken from the channel model.
pub fn aoii(source: &SourceModel, policy: &AccessPolicy, m: u32, mode: GammaMode) -> Result<f64> {
    let gamma = ChannelStats::new(source, policy, m, mode).gamma;
    Ok(aoii_general(&error_cycle(source, policy, gamma)?))
}
