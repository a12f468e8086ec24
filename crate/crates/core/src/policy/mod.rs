//! Per-stream rate allocation policies.
//!
//! Every policy runs inside one stream and sees only that stream's own
//! observations; streams interact solely through the networks.

pub mod aimd;
pub mod gare;
pub mod hinf;
pub mod media;

use serde::{Deserialize, Serialize};

use crate::distortion::{DrParams, StreamProfile};
use crate::error::{ModelError, ModelResult};
use crate::net_model::Observation;

pub use aimd::{AimdParams, AimdPolicy, AimdVariant};
pub use hinf::{HinfParams, HinfPolicy, HinfVariant};
pub use media::{MediaPolicy, MediaPolicyParams};

/// Everything a policy may look at when it is invoked.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub now: f64,
    /// Time since this policy's previous invocation (s).
    pub dt: f64,
    /// One observation per network, indexed by network id.
    pub observations: &'a [Observation],
    /// Whether a lost or late packet of this stream was detected on each
    /// network since the previous invocation.
    pub loss_seen: &'a [bool],
    /// Distortion-rate parameters of the current GOP.
    pub dr: &'a DrParams,
}

pub trait RatePolicy: Send {
    fn name(&self) -> &'static str;

    /// Rates used before the first observation arrives. `abr_hint` is the
    /// nominal rate of each interface.
    fn initial_rates(&mut self, abr_hint: &[f64]) -> Vec<f64>;

    /// Per-network rates `r^s_n` for the coming period.
    fn allocate(&mut self, input: &PolicyInput<'_>) -> Vec<f64>;

    /// True when the latest allocation fell back to the previous one.
    fn flagged(&self) -> bool {
        false
    }
}

/// Which allocation scheme a stream runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    MediaAware,
    Hinf,
    GreedyAimd,
    ProportionalAimd,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::MediaAware,
        PolicyKind::Hinf,
        PolicyKind::GreedyAimd,
        PolicyKind::ProportionalAimd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::MediaAware => "media-aware",
            PolicyKind::Hinf => "hinf",
            PolicyKind::GreedyAimd => "greedy-aimd",
            PolicyKind::ProportionalAimd => "proportional-aimd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameter blocks for all policies; each stream picks one by kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicySettings {
    pub media: MediaPolicyParams,
    pub hinf: HinfParams,
    pub aimd: AimdParams,
}

impl PolicySettings {
    pub fn build(&self, kind: PolicyKind, profile: &StreamProfile) -> ModelResult<Box<dyn RatePolicy>> {
        Ok(match kind {
            PolicyKind::MediaAware => Box::new(MediaPolicy::new(self.media.clone(), profile)?),
            PolicyKind::Hinf => Box::new(HinfPolicy::new(self.hinf.clone(), profile)?),
            PolicyKind::GreedyAimd => Box::new(AimdPolicy::new(
                AimdParams {
                    variant: AimdVariant::Greedy,
                    ..self.aimd.clone()
                },
                profile,
            )?),
            PolicyKind::ProportionalAimd => Box::new(AimdPolicy::new(
                AimdParams {
                    variant: AimdVariant::RateProportional,
                    ..self.aimd.clone()
                },
                profile,
            )?),
        })
    }
}

/// Constant per-network rates, for baselines and calibration runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRate {
    rates: Vec<f64>,
}

impl FixedRate {
    pub fn new(rates: Vec<f64>) -> Self {
        Self { rates }
    }
}

impl RatePolicy for FixedRate {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn initial_rates(&mut self, _abr_hint: &[f64]) -> Vec<f64> {
        self.rates.clone()
    }

    fn allocate(&mut self, _input: &PolicyInput<'_>) -> Vec<f64> {
        self.rates.clone()
    }
}

/// Split `total` across networks in proportion to `weights`; equal split if
/// every weight is zero.
pub fn split_proportional(total: f64, weights: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    if sum > 0.0 {
        clipped.iter().map(|w| total * w / sum).collect()
    } else {
        vec![total / weights.len() as f64; weights.len()]
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> ModelResult<()> {
    if got == want {
        Ok(())
    } else {
        Err(ModelError::Dimension(format!(
            "{what}: expected {want} entries, got {got}"
        )))
    }
}
