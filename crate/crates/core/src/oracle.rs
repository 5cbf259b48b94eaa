//! Brute-force reference computations used to check the closed forms.
//!
//! Nothing here shares algebra with `analytics`: stationary distributions
//! come from iterating the transition matrix, geometric moments from explicit
//! sums, and AoII from walking the chain slot by slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{JointState, LabeledTransitions, Matrix4};
use crate::error::{Error, Result};
use crate::simulator::batch_ci;

/// Bound on neglected tail mass for truncated geometric sums.
pub const TAIL_BOUND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Stop once `||v P - v||_1` falls below this.
    pub power_iter_tol: f64,
    /// Maximum number of matrix-vector products.
    pub power_iter_max: usize,
    pub truncation_cutoff: usize,
    pub chain_sample_slots: u64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            power_iter_tol: 1e-14,
            power_iter_max: 100_000,
            truncation_cutoff: 1_000_000,
            chain_sample_slots: 10_000_000,
            seed: 0,
        }
    }
}

fn vec_mat(v: &[f64; 4], m: &Matrix4) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, vi) in v.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += vi * m[i][j];
        }
    }
    out
}

fn mat_mat(a: &Matrix4, b: &Matrix4) -> Matrix4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        out[i] = vec_mat(&a[i], b);
    }
    out
}

fn l1(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Fixed point of `v P = v` by power iteration from the uniform vector.
///
/// Slowly mixing chains are handled by stepping with `P^(2^k)`, squaring
/// again each time a sweep of steps fails to converge. Convergence is always
/// judged on one step of `P` itself.
pub fn stationary_power_iteration(matrix: &Matrix4, cfg: &OracleConfig) -> Result<[f64; 4]> {
    let mut v = [0.25; 4];
    let mut stepper = *matrix;
    let mut products = 0usize;
    let mut residual = f64::INFINITY;
    while products < cfg.power_iter_max {
        for _ in 0..8 {
            let next = vec_mat(&v, &stepper);
            let total: f64 = next.iter().sum();
            v = next.map(|x| x / total);
            products += 1;
            residual = l1(&vec_mat(&v, matrix), &v);
            if residual < cfg.power_iter_tol {
                return Ok(v);
            }
        }
        stepper = mat_mat(&stepper, &stepper);
        products += 4;
    }
    Err(Error::NonConvergence {
        iterations: products,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedMoments {
    pub mean: f64,
    pub second_moment: f64,
    /// `(1 - p)^cutoff`, the probability mass beyond the cutoff.
    pub tail_mass: f64,
}

impl TruncatedMoments {
    pub fn tail_negligible(&self) -> bool {
        self.tail_mass < TAIL_BOUND
    }
}

/// First two moments of a geometric variable on `{1, 2, ...}` by explicit
/// summation of its PMF up to `cutoff`.
pub fn moments_truncated(p: f64, cutoff: usize) -> TruncatedMoments {
    assert!(p > 0.0 && p <= 1.0, "geometric parameter {p} outside (0, 1]");
    let fail = 1.0 - p;
    let mut mass = p;
    let (mut mean, mut second) = (0.0, 0.0);
    for k in 1..=cutoff {
        let k = k as f64;
        mean += k * mass;
        second += k * k * mass;
        mass *= fail;
        if mass == 0.0 {
            break;
        }
    }
    TruncatedMoments {
        mean,
        second_moment: second,
        tail_mass: fail.powf(cutoff as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub aoii_estimate: f64,
    /// Batch-means 95% half-width of `aoii_estimate`, when enough batches.
    pub aoii_ci95: Option<f64>,
    pub e_w_estimate: f64,
    pub p_miss_estimate: f64,
    pub error_periods: u64,
    pub visits: u64,
}

const CHAIN_BATCHES: u64 = 100;

/// Walks the joint chain for `cfg.chain_sample_slots` slots, starting in
/// `(0,0)`, with `Omega_n = delta_n (Omega_{n-1} + 1)`.
///
/// Missed detection refers to visits of the source to state 1: a visit is
/// missed when no edge taken while in state 1 carried a delivery.
pub fn chain_sample_aoii(chain: &LabeledTransitions, cfg: &OracleConfig) -> ChainSample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let slots = cfg.chain_sample_slots.max(1);
    let batch_len = (slots / CHAIN_BATCHES).max(1);

    let mut state = JointState::Correct0;
    let mut omega = 0u64;
    let mut area: u128 = 0;
    let mut batch_area: u128 = 0;
    let mut batch_means = Vec::with_capacity(CHAIN_BATCHES as usize);
    let (mut error_run, mut error_total, mut error_periods) = (0u64, 0u64, 0u64);
    let mut visit: Option<bool> = None;
    let (mut visits, mut missed) = (0u64, 0u64);

    for n in 0..slots {
        let row = &chain.rows[state.index()];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut edge = row[row.len() - 1];
        for e in row {
            acc += e.prob;
            if u < acc {
                edge = *e;
                break;
            }
        }
        let next = edge.to;

        match (state.source(), next.source()) {
            (0, 1) => visit = Some(edge.delivered),
            (1, 1) => {
                if let Some(notified) = visit.as_mut() {
                    *notified |= edge.delivered;
                }
            }
            (1, 0) => {
                if let Some(notified) = visit.take() {
                    visits += 1;
                    missed += u64::from(!notified);
                }
            }
            _ => {}
        }

        if next.is_error() {
            omega += 1;
            error_run += 1;
        } else {
            if error_run > 0 {
                error_total += error_run;
                error_periods += 1;
            }
            omega = 0;
            error_run = 0;
        }
        area += u128::from(omega);
        batch_area += u128::from(omega);
        if (n + 1) % batch_len == 0 && batch_means.len() < CHAIN_BATCHES as usize {
            batch_means.push(batch_area as f64 / batch_len as f64);
            batch_area = 0;
        }
        state = next;
    }

    let ratio = |num: u64, den: u64| if den == 0 { f64::NAN } else { num as f64 / den as f64 };
    ChainSample {
        aoii_estimate: area as f64 / slots as f64,
        aoii_ci95: batch_ci(&batch_means).ok(),
        e_w_estimate: ratio(error_total, error_periods),
        p_miss_estimate: ratio(missed, visits),
        error_periods,
        visits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{joint_transition_matrix, LabeledTransitions};
    use crate::sources::{AccessPolicy, SourceModel};

    #[test]
    fn uniform_rows_give_uniform_distribution() {
        let m = [[0.25; 4]; 4];
        let v = stationary_power_iteration(&m, &OracleConfig::default()).unwrap();
        for x in v {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_random_policy_mirror() {
        let s = SourceModel::symmetric(0.05).unwrap();
        let p = AccessPolicy::random(0.02).unwrap();
        let v = stationary_power_iteration(&joint_transition_matrix(&s, &p, 0.4), &OracleConfig::default()).unwrap();
        assert!((v[1] - v[2]).abs() < 1e-13);
    }

    #[test]
    fn periodic_chain_does_not_converge() {
        // 0 -> 1 -> 2 -> 0 with 3 feeding 0: period three
        let m = [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ];
        let cfg = OracleConfig {
            power_iter_max: 200,
            ..OracleConfig::default()
        };
        assert!(matches!(
            stationary_power_iteration(&m, &cfg),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn truncated_moments() {
        let t = moments_truncated(1.0, 10);
        assert_eq!((t.mean, t.second_moment), (1.0, 1.0));
        let t = moments_truncated(0.5, 200);
        assert!((t.mean - 2.0).abs() < 1e-12 && (t.second_moment - 6.0).abs() < 1e-12);
        assert!(t.tail_negligible());
        let t = moments_truncated(0.1, 2000);
        assert!((t.mean - 10.0).abs() < 1e-9 && (t.second_moment - 190.0).abs() < 1e-9);
        assert!(!moments_truncated(0.1, 50).tail_negligible());
    }

    #[test]
    fn chain_sample_without_errors() {
        let s = SourceModel::new(0.3, 0.1).unwrap();
        let lt = LabeledTransitions::new(&s, &AccessPolicy::random(1.0).unwrap(), 1.0);
        let cfg = OracleConfig {
            chain_sample_slots: 100_000,
            ..OracleConfig::default()
        };
        let out = chain_sample_aoii(&lt, &cfg);
        assert_eq!(out.aoii_estimate, 0.0);
        assert_eq!(out.p_miss_estimate, 0.0);
        assert_eq!(out.error_periods, 0);
    }

    #[test]
    fn chain_sample_deterministic() {
        let s = SourceModel::new(0.05, 0.2).unwrap();
        let lt = LabeledTransitions::new(&s, &AccessPolicy::hybrid(0.8, 0.1).unwrap(), 0.6);
        let cfg = OracleConfig {
            chain_sample_slots: 200_000,
            seed: 42,
            ..OracleConfig::default()
        };
        assert_eq!(chain_sample_aoii(&lt, &cfg), chain_sample_aoii(&lt, &cfg));
    }
}
