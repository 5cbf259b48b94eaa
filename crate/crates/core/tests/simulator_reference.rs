//! Event-driven simulator against a naive slot-by-slot Bernoulli simulation.

use aoii::simulator::{self, batch_ci, SimConfig};
use aoii::{AccessPolicy, SourceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Naive {
    aoii_mean: f64,
    ci95: f64,
    e_w: f64,
    p_miss: f64,
    gamma: f64,
}

/// Every node draws its source step and its transmission every slot; one
/// shared RNG.
fn naive(m: usize, source: &SourceModel, policy: &AccessPolicy, warmup: u64, slots: u64, seed: u64) -> Naive {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0u8; m];
    let mut x_hat = vec![0u8; m];
    let mut age = vec![0u64; m];
    let mut visit: Vec<Option<bool>> = vec![None; m];
    let mut tx = Vec::with_capacity(m);
    let batches = 100u64;
    let batch_len = slots / batches;
    let (mut area, mut batch_area, mut means) = (0u128, 0u128, Vec::new());
    let (mut w_sum, mut w_count, mut visits, mut missed) = (0u64, 0u64, 0u64, 0u64);
    let (mut sent, mut delivered) = (0u64, 0u64);
    for n in 0..warmup + slots {
        let measuring = n >= warmup;
        tx.clear();
        for i in 0..m {
            let changed = rng.random::<f64>() < source.leave_prob(x[i]);
            if changed {
                x[i] ^= 1;
                if measuring && x[i] == 1 {
                    visit[i] = Some(false);
                } else if let Some(notified) = visit[i].take() {
                    visits += 1;
                    missed += u64::from(!notified);
                }
            }
            if rng.random::<f64>() < policy.tx_prob(changed) {
                tx.push(i);
            }
        }
        if measuring {
            sent += tx.len() as u64;
        }
        if let [only] = tx[..] {
            x_hat[only] = x[only];
            if let Some(notified) = visit[only].as_mut() {
                *notified = true;
            }
            if measuring {
                delivered += 1;
            }
        }
        for i in 0..m {
            if x[i] != x_hat[i] {
                age[i] += 1;
            } else {
                if age[i] > 0 && measuring && n - age[i] >= warmup {
                    w_sum += age[i];
                    w_count += 1;
                }
                age[i] = 0;
            }
            if measuring {
                area += u128::from(age[i]);
                batch_area += u128::from(age[i]);
            }
        }
        if measuring && (n - warmup + 1).is_multiple_of(batch_len) {
            means.push(batch_area as f64 / (batch_len * m as u64) as f64);
            batch_area = 0;
        }
    }
    Naive {
        aoii_mean: area as f64 / (slots * m as u64) as f64,
        ci95: batch_ci(&means).unwrap(),
        e_w: w_sum as f64 / w_count as f64,
        p_miss: missed as f64 / visits as f64,
        gamma: delivered as f64 / sent as f64,
    }
}

#[test]
fn event_driven_agrees_with_naive() {
    let m = 20u32;
    let source = SourceModel::new(0.01, 0.02).unwrap();
    let policies = [
        AccessPolicy::reactive(),
        AccessPolicy::random(0.05).unwrap(),
        AccessPolicy::hybrid(1.0, 0.03).unwrap(),
    ];
    for (k, policy) in policies.into_iter().enumerate() {
        let cfg = SimConfig::new(m, source, policy, 2_000_000, 100 + k as u64);
        let fast = simulator::run(&cfg).unwrap();
        let slow = naive(m as usize, &source, &policy, cfg.warmup, 2_000_000, 200 + k as u64);

        let ci = (fast.ci95_aoii.unwrap().powi(2) + slow.ci95.powi(2)).sqrt();
        let gap = (fast.aoii_mean - slow.aoii_mean).abs();
        assert!(gap < 4.0 / 1.96 * ci, "policy {k}: {} vs {} (ci {ci})", fast.aoii_mean, slow.aoii_mean);
        assert!((fast.e_w - slow.e_w).abs() < 0.03 * slow.e_w, "policy {k}: E[W] {} vs {}", fast.e_w, slow.e_w);
        assert!((fast.p_miss - slow.p_miss).abs() < 0.02, "policy {k}: P_m {} vs {}", fast.p_miss, slow.p_miss);
        assert!((fast.realized_gamma - slow.gamma).abs() < 0.01, "policy {k}: gamma");
    }
}
