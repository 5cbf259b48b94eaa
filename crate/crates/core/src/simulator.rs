//! Slot-accurate Monte-Carlo simulation of `M` nodes on a collision channel.
//!
//! Each slot runs, for every node: source transition, transmit decision
//! (`alpha_c` after a change, `alpha_s` otherwise), then collision
//! resolution over the whole population (a slot succeeds iff exactly one
//! node transmits), then estimate and metric updates.
//!
//! Most slots leave most nodes untouched, so the engine does not visit every
//! node in every slot. Each node owns two Bernoulli processes, its source
//! flips and its `alpha_s` transmit opportunities; both are sampled as
//! geometric gaps and merged through a priority queue. Only nodes with an
//! event in a slot can transmit, deliver, or change their error flag in that
//! slot, and AoII accrued in between is added in closed form. An `alpha_s`
//! opportunity falling on a flip slot is ignored in favor of the `alpha_c`
//! draw, which leaves both processes exact.
//!
//! Every node draws from its own ChaCha stream (master seed, stream = node
//! index), so results do not depend on processing order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::analytics::SourceState;
use crate::error::{Error, Result};
use crate::sources::{AccessPolicy, SourceModel};

/// Upper bound on `M`; node state is kept in memory for the whole run.
pub const MAX_NODES: u32 = 10_000_000;
/// Upper bound on the horizon in slots.
pub const MAX_HORIZON: u64 = 1 << 50;
pub const DEFAULT_BATCHES: usize = 100;
pub const MIN_BATCHES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub m: u32,
    pub source: SourceModel,
    pub policy: AccessPolicy,
    /// Total slots simulated, warmup included.
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub critical_state: SourceState,
    /// Number of batches for the batch-means confidence interval.
    pub batches: usize,
}

impl SimConfig {
    /// Config with default warmup, critical state 1 and
    /// [`DEFAULT_BATCHES`]; `post_warmup` slots are measured.
    pub fn new(m: u32, source: SourceModel, policy: AccessPolicy, post_warmup: u64, seed: u64) -> Self {
        let warmup = Self::default_warmup(&source);
        Self {
            m,
            source,
            policy,
            horizon: warmup.saturating_add(post_warmup),
            warmup,
            seed,
            critical_state: SourceState::One,
            batches: DEFAULT_BATCHES,
        }
    }

    /// `max(10^4, 10 / q_bar)` slots: several mixing times of the source.
    pub fn default_warmup(source: &SourceModel) -> u64 {
        let mixing = (10.0 / source.avg_transition_prob()).ceil();
        if mixing.is_finite() {
            (mixing as u64).max(10_000)
        } else {
            10_000
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_NODES {
            return Err(Error::Config(format!("M = {} outside [1, {MAX_NODES}]", self.m)));
        }
        if self.horizon <= self.warmup {
            return Err(Error::Config(format!(
                "horizon {} must exceed warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.horizon > MAX_HORIZON {
            return Err(Error::Config(format!("horizon {} exceeds {MAX_HORIZON}", self.horizon)));
        }
        if self.batches == 0 {
            return Err(Error::Config("batches must be positive".into()));
        }
        Ok(())
    }

    pub fn measured_slots(&self) -> u64 {
        self.horizon - self.warmup
    }
}

/// Per-node state of the source, the receiver estimate, and the open
/// periods, as of the end of the last processed slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub x: u8,
    pub x_hat: u8,
    /// First slot of the current error period.
    error_since: Option<u64>,
    /// First slot of the current correct period, if it began in the run.
    correct_since: Option<u64>,
    /// Entry slot of the current visit to the critical state, if it began in
    /// the run.
    visit_entry: Option<u64>,
    visit_notified: bool,
    next_flip: u64,
    next_spont: u64,
}

impl NodeState {
    pub fn in_error(&self) -> bool {
        self.x != self.x_hat
    }

    /// AoII at the end of `slot`, for `slot` at or after the last update.
    pub fn aoii(&self, slot: u64) -> u64 {
        match self.error_since {
            Some(s) if self.in_error() => slot + 1 - s,
            _ => 0,
        }
    }

    /// Slots spent in the current error period up to and including `slot`.
    pub fn error_run(&self, slot: u64) -> u64 {
        self.aoii(slot)
    }

    pub fn correct_run(&self, slot: u64) -> Option<u64> {
        if self.in_error() {
            return Some(0);
        }
        self.correct_since.map(|r| slot + 1 - r)
    }

    pub fn visit_active(&self) -> bool {
        self.visit_entry.is_some()
    }

    pub fn visit_notified(&self) -> bool {
        self.visit_notified
    }

    fn next_event(&self) -> u64 {
        self.next_flip.min(self.next_spont)
    }
}

/// Empirical metrics over the measured (post-warmup) slots, pooled over
/// nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub aoii_mean: f64,
    /// Batch-means 95% half-width; `None` with fewer than [`MIN_BATCHES`].
    pub ci95_aoii: Option<f64>,
    pub batch_len: u64,
    pub p_miss: f64,
    pub visits: u64,
    pub missed_visits: u64,
    pub e_w: f64,
    pub error_periods: u64,
    pub e_y: f64,
    pub correct_periods: u64,
    pub realized_load: f64,
    pub realized_throughput: f64,
    pub realized_gamma: f64,
    /// Success ratio of transmissions made in the entry slot of a visit to
    /// the critical state.
    pub entry_gamma: f64,
    pub transmissions: u64,
    pub successes: u64,
    pub collisions: u64,
    pub measured_slots: u64,
}

/// 95% half-width of the mean of `samples` (batch means), normal
/// approximation.
pub fn batch_ci(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < MIN_BATCHES {
        return Err(Error::TooFewBatches {
            batches: n,
            required: MIN_BATCHES,
        });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(1.96 * (var / nf).sqrt())
}

pub fn run(cfg: &SimConfig) -> Result<SimMetrics> {
    cfg.validate()?;
    let mut engine = Engine::new(cfg);
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = engine
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| Reverse((n.next_event(), i as u32)))
        .filter(|Reverse((t, _))| *t < cfg.horizon)
        .collect();
    let mut due = Vec::new();
    while let Some(&Reverse((slot, _))) = heap.peek() {
        due.clear();
        while let Some(&Reverse((t, i))) = heap.peek() {
            if t != slot {
                break;
            }
            heap.pop();
            due.push(i);
        }
        engine.step(slot, &due);
        for &i in &due {
            let t = engine.nodes[i as usize].next_event();
            if t < cfg.horizon {
                heap.push(Reverse((t, i)));
            }
        }
    }
    Ok(engine.finish())
}

fn geometric(p: f64) -> Option<Geometric> {
    (p > 0.0).then(|| Geometric::new(p).expect("validated probability"))
}

/// Slot index of the next success of a Bernoulli process observed from
/// `from` on.
fn next_success(dist: &Option<Geometric>, rng: &mut ChaCha8Rng, from: u64) -> u64 {
    match dist {
        Some(d) => from.saturating_add(d.sample(rng)),
        None => u64::MAX,
    }
}

/// Sum of `Omega_n = n - start + 1` over `n` in `[lo, hi]`.
fn ramp_sum(start: u64, lo: u64, hi: u64) -> u128 {
    let first = u128::from(lo - start + 1);
    let last = u128::from(hi - start + 1);
    (first + last) * u128::from(hi - lo + 1) / 2
}

#[derive(Debug, Default)]
struct Tally {
    area: u128,
    batch_area: Vec<u128>,
    w_sum: u64,
    w_count: u64,
    completed_area: u128,
    y_sum: u64,
    y_count: u64,
    visits: u64,
    missed: u64,
    tx: u64,
    successes: u64,
    collisions: u64,
    entry_tx: u64,
    entry_successes: u64,
}

struct Engine {
    nodes: Vec<NodeState>,
    rngs: Vec<ChaCha8Rng>,
    flip: [Option<Geometric>; 2],
    spont: Option<Geometric>,
    alpha_c: f64,
    critical: u8,
    warmup: u64,
    horizon: u64,
    m: u32,
    batch_len: u64,
    tally: Tally,
    scratch: Vec<(u32, bool, bool, bool)>,
}

impl Engine {
    fn new(cfg: &SimConfig) -> Self {
        let flip = [geometric(cfg.source.q01()), geometric(cfg.source.q10())];
        let spont = geometric(cfg.policy.alpha_s());
        let (_, pi1) = cfg.source.stationary();
        let mut rngs = Vec::with_capacity(cfg.m as usize);
        let mut nodes = Vec::with_capacity(cfg.m as usize);
        for i in 0..cfg.m {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u64::from(i));
            let x = u8::from(rng.random::<f64>() < pi1);
            let next_flip = next_success(&flip[x as usize], &mut rng, 0);
            let next_spont = next_success(&spont, &mut rng, 0);
            nodes.push(NodeState {
                x,
                x_hat: x,
                error_since: None,
                correct_since: None,
                visit_entry: None,
                visit_notified: false,
                next_flip,
                next_spont,
            });
            rngs.push(rng);
        }
        let batch_len = cfg.measured_slots() / cfg.batches as u64;
        let batches = if batch_len == 0 { 0 } else { cfg.batches };
        Self {
            nodes,
            rngs,
            flip,
            spont,
            alpha_c: cfg.policy.alpha_c(),
            critical: cfg.critical_state.bit(),
            warmup: cfg.warmup,
            horizon: cfg.horizon,
            m: cfg.m,
            batch_len,
            tally: Tally {
                batch_area: vec![0; batches],
                ..Tally::default()
            },
            scratch: Vec::new(),
        }
    }

    /// Adds the AoII of an error period that started at `start`, over slots
    /// `[from, to]` clipped to the measurement window.
    fn accrue(&mut self, start: u64, from: u64, to: u64) {
        let lo = from.max(self.warmup);
        let hi = to.min(self.horizon - 1);
        if lo > hi {
            return;
        }
        self.tally.area += ramp_sum(start, lo, hi);
        let nb = self.tally.batch_area.len() as u64;
        if nb == 0 {
            return;
        }
        let len = self.batch_len;
        let first = (lo - self.warmup) / len;
        let last = ((hi - self.warmup) / len).min(nb - 1);
        for b in first..=last {
            let b_lo = (self.warmup + b * len).max(lo);
            let b_hi = (self.warmup + (b + 1) * len - 1).min(hi);
            if b_lo <= b_hi {
                self.tally.batch_area[b as usize] += ramp_sum(start, b_lo, b_hi);
            }
        }
    }

    /// Processes `slot` for the nodes with an event in it. Nodes not listed
    /// must have no flip and no transmit opportunity in `slot`.
    fn step(&mut self, slot: u64, due: &[u32]) {
        let measured = slot >= self.warmup;
        self.scratch.clear();
        let mut transmitters = 0u32;
        let mut sender = 0u32;
        for &i in due {
            let node = &mut self.nodes[i as usize];
            let rng = &mut self.rngs[i as usize];
            let was_error = node.in_error();
            let flipped = node.next_flip == slot;
            if flipped {
                node.x ^= 1;
                node.next_flip = next_success(&self.flip[node.x as usize], rng, slot + 1);
            }
            let spont = node.next_spont == slot;
            if spont {
                node.next_spont = next_success(&self.spont, rng, slot + 1);
            }
            let tx = if flipped { rng.random::<f64>() < self.alpha_c } else { spont };
            if tx {
                transmitters += 1;
                sender = i;
            }
            self.scratch.push((i, flipped, was_error, tx));
        }

        let delivered_to = (transmitters == 1).then_some(sender);
        if measured {
            self.tally.tx += u64::from(transmitters);
            if transmitters == 1 {
                self.tally.successes += 1;
            } else if transmitters > 1 {
                self.tally.collisions += 1;
            }
        }

        for k in 0..self.scratch.len() {
            let (i, flipped, was_error, tx) = self.scratch[k];
            let delivered = delivered_to == Some(i);
            let warmup = self.warmup;
            let node = &mut self.nodes[i as usize];
            if delivered {
                node.x_hat = node.x;
            }
            let now_error = node.in_error();

            if flipped && node.x == self.critical {
                node.visit_entry = Some(slot);
                node.visit_notified = delivered;
                if measured && tx {
                    self.tally.entry_tx += 1;
                    self.tally.entry_successes += u64::from(delivered);
                }
            } else if flipped {
                if let Some(entry) = node.visit_entry.take() {
                    if entry >= warmup {
                        self.tally.visits += 1;
                        self.tally.missed += u64::from(!node.visit_notified);
                    }
                }
            } else if delivered && node.x == self.critical {
                node.visit_notified = true;
            }

            let node = &mut self.nodes[i as usize];
            match (was_error, now_error) {
                (true, false) => {
                    let start = node.error_since.take().expect("open error period");
                    node.correct_since = Some(slot);
                    let w = slot - start;
                    if start >= warmup {
                        self.tally.w_sum += w;
                        self.tally.w_count += 1;
                        self.tally.completed_area += u128::from(w) * u128::from(w + 1) / 2;
                    }
                    self.accrue(start, start, slot - 1);
                }
                (false, true) => {
                    node.error_since = Some(slot);
                    if let Some(r) = node.correct_since.take() {
                        if r >= warmup {
                            self.tally.y_sum += slot - r;
                            self.tally.y_count += 1;
                        }
                    }
                }
                _ => {}
            }
        }
    }

    fn finish(mut self) -> SimMetrics {
        let end = self.horizon - 1;
        let open: Vec<u64> = self
            .nodes
            .iter()
            .filter(|n| n.in_error())
            .filter_map(|n| n.error_since)
            .collect();
        for start in open {
            self.accrue(start, start, end);
        }

        let t = &self.tally;
        let slots = self.horizon - self.warmup;
        let node_slots = f64::from(self.m) * slots as f64;
        let ratio = |num: f64, den: u64| if den == 0 { f64::NAN } else { num / den as f64 };
        let batch_norm = f64::from(self.m) * self.batch_len as f64;
        let means: Vec<f64> = t.batch_area.iter().map(|&a| a as f64 / batch_norm).collect();
        SimMetrics {
            aoii_mean: t.area as f64 / node_slots,
            ci95_aoii: batch_ci(&means).ok(),
            batch_len: self.batch_len,
            p_miss: ratio(t.missed as f64, t.visits),
            visits: t.visits,
            missed_visits: t.missed,
            e_w: ratio(t.w_sum as f64, t.w_count),
            error_periods: t.w_count,
            e_y: ratio(t.y_sum as f64, t.y_count),
            correct_periods: t.y_count,
            realized_load: t.tx as f64 / slots as f64,
            realized_throughput: t.successes as f64 / slots as f64,
            realized_gamma: ratio(t.successes as f64, t.tx),
            entry_gamma: ratio(t.entry_successes as f64, t.entry_tx),
            transmissions: t.tx,
            successes: t.successes,
            collisions: t.collisions,
            measured_slots: slots,
        }
    }
}
