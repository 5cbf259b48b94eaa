//! Access-parameter optimization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, SourceState};
use crate::error::Result;
use crate::sources::{activity, AccessPolicy, GammaMode, SourceModel};

/// `2 (G - 1) e^G - (G - 2)`; its positive root is the AoII-optimal load of
/// the small-rate hybrid approximation.
pub fn load_condition(g: f64) -> f64 {
    2.0 * (g - 1.0) * g.exp() - (g - 2.0)
}

const ROOT_BRACKET: (f64, f64) = (0.5, 0.7);

/// Positive root of [`load_condition`] by bisection on a fixed bracket.
pub fn optimal_load_root() -> f64 {
    optimal_load_root_in(ROOT_BRACKET.0, ROOT_BRACKET.1)
}

/// Bisection for the positive root inside `[lo, hi]`, which must straddle a
/// sign change within `(0, 1]`.
pub fn optimal_load_root_in(mut lo: f64, mut hi: f64) -> f64 {
    assert!(
        load_condition(lo) < 0.0 && load_condition(hi) > 0.0,
        "[{lo}, {hi}] does not bracket the optimal load"
    );
    loop {
        let mid = 0.5 * (lo + hi);
        let f = load_condition(mid);
        if f.abs() < 1e-12 || mid <= lo || mid >= hi {
            return mid;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Secant iteration for the same root from two starting loads.
pub fn optimal_load_root_secant(mut x0: f64, mut x1: f64) -> f64 {
    let (mut f0, mut f1) = (load_condition(x0), load_condition(x1));
    for _ in 0..100 {
        if f1.abs() < 1e-14 || f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        (x0, f0) = (x1, f1);
        x1 = x2;
        f1 = load_condition(x1);
    }
    x1
}

/// Throughput-optimal random access probability.
pub fn optimize_random(m: u32) -> f64 {
    1.0 / f64::from(m.max(1))
}

/// `alpha_s` that puts the load at `g_star` with `alpha_c = 1`, from
/// `rho = q_bar + (1 - q_bar) alpha_s`. Zero once state changes alone exceed
/// `g_star`.
pub fn hybrid_alpha_s_for_load(q_bar: f64, m: u32, g_star: f64) -> f64 {
    if q_bar >= 1.0 {
        return 0.0;
    }
    ((g_star / f64::from(m) - q_bar) / (1.0 - q_bar)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis of each coarse grid: one spans `[0, 1]`, the other
    /// `[0, 4/M]` where contention is decided.
    pub points: usize,
    /// Bracket width at which golden-section refinement stops.
    pub param_tol: f64,
    pub mode: GammaMode,
    /// The optimum counts as collapsed onto the random policy when it improves
    /// on `alpha = 1/M` by less than this relative margin.
    pub collapse_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 41,
            param_tol: 1e-9,
            mode: GammaMode::Exponential,
            collapse_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub alpha_c_star: f64,
    pub alpha_s_star: f64,
    pub aoii_star: f64,
    pub load_star: f64,
    pub collapsed_to_random: bool,
}

impl OptResult {
    pub fn policy(&self) -> AccessPolicy {
        AccessPolicy::hybrid(self.alpha_c_star, self.alpha_s_star).expect("optimizer stays in [0,1]")
    }
}

/// Exact average AoII at `(alpha_c, alpha_s)`, the optimization target.
pub fn objective(source: &SourceModel, m: u32, mode: GammaMode, alpha_c: f64, alpha_s: f64) -> f64 {
    let policy = AccessPolicy::hybrid(alpha_c, alpha_s).expect("point in [0,1]^2");
    let result = if source.is_symmetric() {
        let gamma = crate::sources::success_prob(m, activity(source, &policy), mode);
        analytics::aoii_symmetric(source, m, &policy, gamma)
    } else {
        analytics::aoii(source, &policy, m, mode)
    };
    result.unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    alpha_c: f64,
    alpha_s: f64,
}

impl Candidate {
    /// Lower AoII wins; ties go to larger `alpha_c`, then smaller `alpha_s`.
    fn better_than(&self, other: &Candidate) -> bool {
        if self.value != other.value {
            return self.value < other.value;
        }
        if self.alpha_c != other.alpha_c {
            return self.alpha_c > other.alpha_c;
        }
        self.alpha_s < other.alpha_s
    }
}

fn axis(points: usize, m: u32, extra: &[f64]) -> Vec<f64> {
    let n = points.max(2);
    let span = (4.0 / f64::from(m)).min(1.0);
    let mut v: Vec<f64> = (0..n)
        .flat_map(|k| {
            let t = k as f64 / (n - 1) as f64;
            [t, t * span]
        })
        .chain(extra.iter().copied())
        .map(|a| a.clamp(0.0, 1.0))
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn neighbors(grid: &[f64], x: f64) -> (f64, f64) {
    let i = grid.partition_point(|&g| g < x);
    let lo = if i == 0 { grid[0] } else { grid[i - 1] };
    let hi = match grid.get(i) {
        Some(&g) if g > x => g,
        _ => *grid.get(i + 1).unwrap_or(&grid[grid.len() - 1]),
    };
    (lo, hi)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search of `f` over `[lo, hi]`; returns the best point seen,
/// endpoints and `start` included.
fn golden<F: Fn(f64) -> Candidate>(f: F, mut lo: f64, mut hi: f64, start: Candidate, tol: f64) -> Candidate {
    let mut best = start;
    let consider = |c: Candidate, best: &mut Candidate| {
        if c.better_than(best) {
            *best = c;
        }
    };
    consider(f(lo), &mut best);
    consider(f(hi), &mut best);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut c1 = f(x1);
    let mut c2 = f(x2);
    while hi - lo > tol {
        if c1.value <= c2.value {
            consider(c2, &mut best);
            hi = x2;
            x2 = x1;
            c2 = c1;
            x1 = hi - INV_PHI * (hi - lo);
            c1 = f(x1);
        } else {
            consider(c1, &mut best);
            lo = x1;
            x1 = x2;
            c1 = c2;
            x2 = lo + INV_PHI * (hi - lo);
            c2 = f(x2);
        }
    }
    consider(c1, &mut best);
    consider(c2, &mut best);
    best
}

/// Minimizes the exact average AoII over `(alpha_c, alpha_s)`: coarse grid,
/// then coordinate-wise golden-section refinement inside the neighboring
/// grid cells.
pub fn optimize_hybrid(source: &SourceModel, m: u32, grid: &GridSpec) -> OptResult {
    let eval = |alpha_c: f64, alpha_s: f64| Candidate {
        value: objective(source, m, grid.mode, alpha_c, alpha_s),
        alpha_c,
        alpha_s,
    };
    let q_bar = source.avg_transition_prob();
    let random_alpha = optimize_random(m);
    let seeded_alpha_s = hybrid_alpha_s_for_load(q_bar, m, optimal_load_root());

    let c_axis = axis(grid.points, m, &[random_alpha, 1.0]);
    let s_axis = axis(grid.points, m, &[random_alpha, seeded_alpha_s]);
    let mut best = c_axis
        .par_iter()
        .flat_map_iter(|&ac| s_axis.iter().map(move |&as_| (ac, as_)))
        .map(|(ac, as_)| eval(ac, as_))
        .reduce(
            || Candidate {
                value: f64::INFINITY,
                alpha_c: 0.0,
                alpha_s: 1.0,
            },
            |a, b| if b.better_than(&a) { b } else { a },
        );

    let (c_lo, c_hi) = neighbors(&c_axis, best.alpha_c);
    let (s_lo, s_hi) = neighbors(&s_axis, best.alpha_s);
    for _ in 0..200 {
        let before = best;
        let s = best.alpha_s;
        best = golden(|ac| eval(ac, s), c_lo, c_hi, best, grid.param_tol);
        let c = best.alpha_c;
        best = golden(|as_| eval(c, as_), s_lo, s_hi, best, grid.param_tol);
        if (best.alpha_c - before.alpha_c).abs() <= grid.param_tol
            && (best.alpha_s - before.alpha_s).abs() <= grid.param_tol
        {
            break;
        }
    }

    let random_value = objective(source, m, grid.mode, random_alpha, random_alpha);
    let policy = AccessPolicy::hybrid(best.alpha_c, best.alpha_s).expect("grid in [0,1]");
    OptResult {
        alpha_c_star: best.alpha_c,
        alpha_s_star: best.alpha_s,
        aoii_star: best.value,
        load_star: activity(source, &policy) * f64::from(m),
        collapsed_to_random: best.value >= random_value * (1.0 - grid.collapse_tol),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub alpha_s: f64,
    pub aoii: f64,
    pub p_miss: f64,
    pub e_w: Option<f64>,
}

/// Metrics along `alpha_s` in `[from, to]` with `alpha_c = 1`.
pub fn tradeoff_sweep(
    source: &SourceModel,
    m: u32,
    alpha_s_range: (f64, f64),
    points: usize,
    mode: GammaMode,
    critical: SourceState,
) -> Result<Vec<TradeoffPoint>> {
    let (from, to) = alpha_s_range;
    let n = points.max(1);
    (0..n)
        .map(|k| {
            let alpha_s = if n == 1 {
                from
            } else {
                from + (to - from) * k as f64 / (n - 1) as f64
            };
            let policy = AccessPolicy::hybrid(1.0, alpha_s)?;
            let r = analytics::analyze(source, &policy, m, mode, critical)?;
            Ok(TradeoffPoint {
                alpha_s: policy.alpha_s(),
                aoii: r.aoii,
                p_miss: r.p_miss,
                e_w: r.cycle.e_w,
            })
        })
        .collect()
}
