//! Scenario files and the `aoii` command line.
//!
//! A scenario is a TOML file. Every command expands it into sweep points,
//! evaluates them on a worker pool and writes one CSV record per point, in
//! sweep order. With `--out` a JSON sidecar holding the resolved scenario is
//! written next to the CSV.
//!
//! ```toml
//! M = 1000
//! q_bar = 1e-5        # or q01 = .., q10 = ..
//! eta = 1.0
//! policy = ["reactive", "random", "hybrid"]
//! horizon = 10_000_000
//! seed = 7
//!
//! [sweep]
//! variable = "q_bar_M"
//! from = 1e-3
//! to = 1e2
//! points = 26
//! log = true
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, SourceState};
use crate::error::{Error, Result};
use crate::optimizer::{self, GridSpec};
use crate::simulator::{self, SimConfig};
use crate::sources::{AccessPolicy, GammaMode, SourceModel};

/// Bumped whenever columns are added, removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_CHECK_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Reactive,
    Hybrid,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Reactive => "reactive",
            PolicyKind::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyList {
    One(PolicyKind),
    Many(Vec<PolicyKind>),
}

impl PolicyList {
    pub fn kinds(&self) -> Vec<PolicyKind> {
        match self {
            PolicyList::One(k) => vec![*k],
            PolicyList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "q_bar_M")]
    QBarM,
    #[serde(rename = "alpha_s")]
    AlphaS,
    #[serde(rename = "alpha")]
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.from];
        }
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                if self.log {
                    (self.from.ln() + t * (self.to.ln() - self.from.ln())).exp()
                } else {
                    self.from + t * (self.to - self.from)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "M")]
    pub m: u32,
    pub q01: Option<f64>,
    pub q10: Option<f64>,
    pub q_bar: Option<f64>,
    pub eta: Option<f64>,
    pub policy: PolicyList,
    pub alpha: Option<f64>,
    pub alpha_c: Option<f64>,
    pub alpha_s: Option<f64>,
    /// Measured slots after warmup.
    pub horizon: Option<u64>,
    pub warmup: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub critical_state: SourceState,
    #[serde(default)]
    pub gamma_mode: GammaMode,
    /// Relative `|sim - analytic|` allowed on the AoII under `--check`.
    pub check_tolerance: Option<f64>,
    pub sweep: Option<Sweep>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m == 0 {
            return bad("M: must be at least 1".into());
        }
        let rates = (self.q01.is_some(), self.q10.is_some());
        let shape = (self.q_bar.is_some(), self.eta.is_some());
        match (rates, shape) {
            ((true, true), (false, false)) => {}
            ((false, false), (true, _)) => {}
            ((false, false), (false, _)) if self.sweeps(SweepVariable::QBarM) => {}
            ((true, true), _) => return bad("q01/q10 and q_bar/eta are mutually exclusive".into()),
            _ => return bad("source needs both q01 and q10, or q_bar (with optional eta)".into()),
        }
        if self.policy.kinds().is_empty() {
            return bad("policy: empty list".into());
        }
        if self.alpha_c.is_some() != self.alpha_s.is_some() && !self.sweeps(SweepVariable::AlphaS) {
            return bad("alpha_c and alpha_s must be given together".into());
        }
        if let Some(s) = &self.sweep {
            if s.points == 0 {
                return bad("sweep.points: must be at least 1".into());
            }
            if s.log && (s.from <= 0.0 || s.to <= 0.0) {
                return bad("sweep: log spacing needs positive bounds".into());
            }
            let needs = match s.variable {
                SweepVariable::AlphaS => Some(PolicyKind::Hybrid),
                SweepVariable::Alpha => Some(PolicyKind::Random),
                SweepVariable::QBarM => None,
            };
            if let Some(kind) = needs {
                if self.policy.kinds().iter().any(|k| *k != kind) {
                    return bad(format!("sweep.variable: {:?} sweeps apply to policy {} only", s.variable, kind.name()));
                }
            }
        }
        if let Some(t) = self.check_tolerance {
            if t.is_nan() || t <= 0.0 {
                return bad("check_tolerance: must be positive".into());
            }
        }
        for point in self.points() {
            self.source_at(&point)?;
        }
        Ok(())
    }

    fn sweeps(&self, v: SweepVariable) -> bool {
        self.sweep.as_ref().is_some_and(|s| s.variable == v)
    }

    /// `(policy, sweep value)` pairs in output order.
    pub fn points(&self) -> Vec<Point> {
        let values = match &self.sweep {
            Some(s) => s.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        self.policy
            .kinds()
            .into_iter()
            .flat_map(|policy| values.iter().map(move |&value| (policy, value)))
            .enumerate()
            .map(|(index, (policy, value))| Point { policy, value, index })
            .collect()
    }

    fn eta_or_default(&self) -> f64 {
        match (self.eta, self.q01, self.q10) {
            (Some(eta), _, _) => eta,
            (None, Some(q01), Some(q10)) if q10 > 0.0 => q01 / q10,
            _ => 1.0,
        }
    }

    pub fn source_at(&self, point: &Point) -> Result<SourceModel> {
        match (point.value, &self.sweep) {
            (Some(v), Some(s)) if s.variable == SweepVariable::QBarM => {
                SourceModel::from_rate_and_asymmetry(v / f64::from(self.m), self.eta_or_default())
            }
            _ => match (self.q01, self.q10, self.q_bar) {
                (Some(q01), Some(q10), _) => SourceModel::new(q01, q10),
                (_, _, Some(q_bar)) => SourceModel::from_rate_and_asymmetry(q_bar, self.eta_or_default()),
                _ => Err(Error::Config("source parameters missing".into())),
            },
        }
    }

    /// Access probabilities for `point`; a hybrid policy without explicit
    /// probabilities gets the AoII-optimal ones.
    pub fn policy_at(&self, point: &Point, source: &SourceModel) -> Result<AccessPolicy> {
        let swept = |v: SweepVariable| point.value.filter(|_| self.sweeps(v));
        match point.policy {
            PolicyKind::Reactive => Ok(AccessPolicy::reactive()),
            PolicyKind::Random => {
                let alpha = swept(SweepVariable::Alpha)
                    .or(self.alpha)
                    .unwrap_or_else(|| optimizer::optimize_random(self.m));
                AccessPolicy::random(alpha)
            }
            PolicyKind::Hybrid => {
                if let Some(alpha_s) = swept(SweepVariable::AlphaS) {
                    return AccessPolicy::hybrid(self.alpha_c.unwrap_or(1.0), alpha_s);
                }
                match (self.alpha_c, self.alpha_s) {
                    (Some(c), Some(s)) => AccessPolicy::hybrid(c, s),
                    _ => Ok(optimizer::optimize_hybrid(source, self.m, &self.grid()).policy()),
                }
            }
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            mode: self.gamma_mode,
            ..GridSpec::default()
        }
    }

    pub fn check_tolerance(&self) -> f64 {
        self.check_tolerance.unwrap_or(DEFAULT_CHECK_TOLERANCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub policy: PolicyKind,
    pub value: Option<f64>,
    pub index: usize,
}

/// A column-ordered table of formatted cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Points whose simulated AoII missed the analytic value by more than
    /// the scenario tolerance.
    #[serde(skip)]
    pub check_failures: Vec<usize>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv: {e}")))
    }
}

/// Nine significant digits, `nan`/`inf` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.8e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt_f64)
}

const PARAM_COLUMNS: [&str; 10] = [
    "policy",
    "M",
    "q01",
    "q10",
    "q_bar_M",
    "eta",
    "gamma_mode",
    "critical_state",
    "alpha_c",
    "alpha_s",
];

fn param_cells(s: &ScenarioFile, p: &Point, source: &SourceModel, policy: &AccessPolicy) -> Vec<String> {
    vec![
        p.policy.name().into(),
        s.m.to_string(),
        fmt_f64(source.q01()),
        fmt_f64(source.q10()),
        fmt_f64(source.avg_transition_prob() * f64::from(s.m)),
        fmt_f64(source.eta()),
        match s.gamma_mode {
            GammaMode::Exact => "exact",
            GammaMode::Exponential => "exponential",
        }
        .into(),
        s.critical_state.bit().to_string(),
        fmt_f64(policy.alpha_c()),
        fmt_f64(policy.alpha_s()),
    ]
}

const ANALYTIC_COLUMNS: [&str; 7] = ["gamma", "load_G", "throughput_S", "aoii", "p_miss", "e_w", "e_y"];

fn analytic_cells(r: &analytics::AnalyticReport) -> Vec<String> {
    vec![
        fmt_f64(r.channel.gamma),
        fmt_f64(r.channel.load_g),
        fmt_f64(r.channel.throughput_s),
        fmt_f64(r.aoii),
        fmt_f64(r.p_miss),
        fmt_opt(r.cycle.e_w),
        fmt_f64(r.cycle.e_y),
    ]
}

fn columns(parts: &[&[&'static str]]) -> Vec<&'static str> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn evaluate<F>(scenario: &ScenarioFile, f: F) -> Result<Vec<Vec<String>>>
where
    F: Fn(&Point, &SourceModel, &AccessPolicy) -> Result<Vec<String>> + Sync,
{
    scenario
        .points()
        .par_iter()
        .map(|p| {
            let source = scenario.source_at(p)?;
            let policy = scenario.policy_at(p, &source)?;
            let mut row = param_cells(scenario, p, &source, &policy);
            row.extend(f(p, &source, &policy)?);
            Ok(row)
        })
        .collect()
}

pub fn cmd_analyze(scenario: &ScenarioFile) -> Result<Table> {
    let rows = evaluate(scenario, |_, source, policy| {
        let r = analytics::analyze(source, policy, scenario.m, scenario.gamma_mode, scenario.critical_state)?;
        Ok(analytic_cells(&r))
    })?;
    Ok(Table {
        columns: columns(&[&PARAM_COLUMNS, &ANALYTIC_COLUMNS]),
        rows,
        check_failures: Vec::new(),
    })
}

const SIM_COLUMNS: [&str; 13] = [
    "horizon",
    "warmup",
    "seed",
    "aoii_sim",
    "aoii_ci95",
    "p_miss_sim",
    "e_w_sim",
    "e_y_sim",
    "load_G_sim",
    "throughput_S_sim",
    "gamma_sim",
    "error_periods",
    "visits",
];

/// Seed of the `index`-th sweep point.
pub fn point_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn cmd_simulate(scenario: &ScenarioFile) -> Result<Table> {
    let horizon = scenario
        .horizon
        .ok_or_else(|| Error::Config("horizon: required for simulate".into()))?;
    let tolerance = scenario.check_tolerance();
    let results: Vec<(Vec<String>, bool)> = scenario
        .points()
        .par_iter()
        .map(|p| {
            let source = scenario.source_at(p)?;
            let policy = scenario.policy_at(p, &source)?;
            let mut cfg = SimConfig::new(scenario.m, source, policy, horizon, point_seed(scenario.seed, p.index));
            if let Some(w) = scenario.warmup {
                cfg.horizon = cfg.horizon - cfg.warmup + w;
                cfg.warmup = w;
            }
            cfg.critical_state = scenario.critical_state;
            cfg.validate()?;
            let analytic = analytics::analyze(&source, &policy, scenario.m, scenario.gamma_mode, scenario.critical_state)?;
            let sim = simulator::run(&cfg)?;
            let mut row = param_cells(scenario, p, &source, &policy);
            row.extend([
                cfg.measured_slots().to_string(),
                cfg.warmup.to_string(),
                cfg.seed.to_string(),
                fmt_f64(sim.aoii_mean),
                fmt_opt(sim.ci95_aoii),
                fmt_f64(sim.p_miss),
                fmt_f64(sim.e_w),
                fmt_f64(sim.e_y),
                fmt_f64(sim.realized_load),
                fmt_f64(sim.realized_throughput),
                fmt_f64(sim.realized_gamma),
                sim.error_periods.to_string(),
                sim.visits.to_string(),
            ]);
            row.extend(analytic_cells(&analytic));
            let within = relative_gap(sim.aoii_mean, analytic.aoii) <= tolerance;
            Ok((row, within))
        })
        .collect::<Result<_>>()?;
    let check_failures = results
        .iter()
        .enumerate()
        .filter(|(_, (_, ok))| !ok)
        .map(|(i, _)| i)
        .collect();
    Ok(Table {
        columns: columns(&[&PARAM_COLUMNS, &SIM_COLUMNS, &ANALYTIC_COLUMNS]),
        rows: results.into_iter().map(|(r, _)| r).collect(),
        check_failures,
    })
}

fn relative_gap(x: f64, reference: f64) -> f64 {
    if x == reference {
        0.0
    } else {
        (x - reference).abs() / reference.abs()
    }
}

const OPT_COLUMNS: [&str; 7] = [
    "alpha_c_star",
    "alpha_s_star",
    "aoii_star",
    "load_star",
    "collapsed_to_random",
    "aoii_reactive",
    "aoii_random",
];

/// Optimizes the hybrid policy at each point. The `policy` list is ignored;
/// the reactive and random baselines are always reported.
pub fn cmd_optimize(scenario: &ScenarioFile) -> Result<Table> {
    let mut points = scenario.points();
    points.retain(|p| p.policy == scenario.policy.kinds()[0]);
    let rows = points
        .par_iter()
        .map(|p| {
            let source = scenario.source_at(p)?;
            let opt = optimizer::optimize_hybrid(&source, scenario.m, &scenario.grid());
            let baseline = |policy: AccessPolicy| analytics::aoii(&source, &policy, scenario.m, scenario.gamma_mode);
            let reactive = baseline(AccessPolicy::reactive())?;
            let random = baseline(AccessPolicy::random(optimizer::optimize_random(scenario.m))?)?;
            let hybrid = Point {
                policy: PolicyKind::Hybrid,
                ..*p
            };
            let mut row = param_cells(scenario, &hybrid, &source, &opt.policy());
            row.extend([
                fmt_f64(opt.alpha_c_star),
                fmt_f64(opt.alpha_s_star),
                fmt_f64(opt.aoii_star),
                fmt_f64(opt.load_star),
                opt.collapsed_to_random.to_string(),
                fmt_f64(reactive),
                fmt_f64(random),
            ]);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(Table {
        columns: columns(&[&PARAM_COLUMNS, &OPT_COLUMNS]),
        rows,
        check_failures: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub columns: &'a [&'static str],
    pub scenario: &'a ScenarioFile,
    pub points: usize,
    pub conversions: [&'static str; 3],
}

const CONVERSIONS: [&str; 3] = [
    "q_bar = 2 q01 q10 / (q01 + q10), eta = q01 / q10",
    "q01 = q_bar (1 + eta) / 2, q10 = q_bar (1 + eta) / (2 eta)",
    "q_bar_M = q_bar * M",
];

#[derive(Debug, Parser)]
#[command(name = "aoii", version, about = "AoII analysis and simulation for random-access monitoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fail when a simulated AoII misses the analytic value by more than the
    /// scenario tolerance.
    #[arg(long)]
    pub check: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form metrics per sweep point.
    Analyze(CommonArgs),
    /// Monte-Carlo runs next to the closed-form metrics.
    Simulate(CommonArgs),
    /// Optimal hybrid access probabilities and baselines.
    Optimize(CommonArgs),
}

/// Outcome of a command: the table plus whether `--check` failed.
pub struct Outcome {
    pub table: Table,
    pub check_failed: bool,
}

pub fn execute(cli: &Cli) -> anyhow::Result<Outcome> {
    let (name, args) = match &cli.command {
        Command::Analyze(a) => ("analyze", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Optimize(a) => ("optimize", a),
    };
    let mut scenario = ScenarioFile::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let table = pool.install(|| match name {
        "analyze" => cmd_analyze(&scenario),
        "simulate" => cmd_simulate(&scenario),
        _ => cmd_optimize(&scenario),
    })?;

    match &args.out {
        Some(path) => {
            table.write_csv(std::fs::File::create(path)?)?;
            let sidecar = Sidecar {
                schema_version: CSV_SCHEMA_VERSION,
                command: name,
                columns: &table.columns,
                scenario: &scenario,
                points: table.rows.len(),
                conversions: CONVERSIONS,
            };
            std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    let check_failed = args.check && !table.check_failures.is_empty();
    Ok(Outcome { table, check_failed })
}
