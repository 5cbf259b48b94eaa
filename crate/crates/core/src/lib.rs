//! Age of Incorrect Information for two-state Markov sources reporting over
//! feedback-free slotted ALOHA.
//!
//! - [`sources`]: source, access policy and channel models.
//! - [`analytics`]: closed-form AoII and missed-detection probability.
//! - [`oracle`]: brute-force references for the closed forms.
//! - [`simulator`]: event-driven Monte-Carlo of the full network.
//! - [`optimizer`]: access-probability optimization.
//! - [`cli`]: scenario files and the `aoii` command line.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod simulator;
pub mod sources;

pub use analytics::{AnalyticReport, JointState, SourceState};
pub use error::{Error, Result};
pub use optimizer::{optimize_hybrid, GridSpec, OptResult};
pub use simulator::{SimConfig, SimMetrics};
pub use sources::{AccessPolicy, ChannelStats, GammaMode, SourceModel};
