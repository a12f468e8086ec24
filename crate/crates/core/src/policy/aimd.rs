//! Additive-increase multiplicative-decrease heuristics.

use serde::{Deserialize, Serialize};

use crate::distortion::StreamProfile;
use crate::error::{ModelError, ModelResult};
use crate::net_model::Observation;

use super::{split_proportional, PolicyInput, RatePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AimdVariant {
    #[default]
    Greedy,
    RateProportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AimdParams {
    /// Additive step (bit/s).
    pub delta_r: f64,
    /// Interval between increases (s).
    pub delta_t: f64,
    /// RTT threshold (s); half the playout deadline when absent.
    pub rtt_threshold: Option<f64>,
    #[serde(skip)]
    pub variant: AimdVariant,
}

impl Default for AimdParams {
    fn default() -> Self {
        Self {
            delta_r: 1e5,
            delta_t: 2.0,
            rtt_threshold: None,
            variant: AimdVariant::Greedy,
        }
    }
}

impl AimdParams {
    pub fn validate(&self) -> ModelResult<()> {
        if !(self.delta_r > 0.0 && self.delta_t > 0.0) {
            return Err(ModelError::InvalidParameter(
                "delta_r and delta_t must be positive".into(),
            ));
        }
        if let Some(t) = self.rtt_threshold {
            if !(t > 0.0) {
                return Err(ModelError::InvalidParameter("rtt_threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

pub fn detect_congestion(obs: &Observation, loss_seen: bool, rtt_threshold: f64) -> bool {
    loss_seen || obs.rtt > rtt_threshold
}

/// Per-stream AIMD state.
#[derive(Debug, Clone, PartialEq)]
pub struct AimdState {
    pub rates: Vec<f64>,
    /// Floor share of `r_min` fixed at start-up (greedy variant).
    pub initial_floor: Vec<f64>,
    pub last_increase: Option<f64>,
    pub congested: Vec<bool>,
}

impl AimdState {
    pub fn new(r_min: f64, first_abrs: &[f64]) -> Self {
        let rates = split_proportional(r_min, first_abrs);
        Self {
            initial_floor: rates.clone(),
            rates,
            last_increase: None,
            congested: vec![false; first_abrs.len()],
        }
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One AIMD update; returns the new per-network rates.
pub fn aimd_step(
    state: &mut AimdState,
    params: &AimdParams,
    r_min: f64,
    rtt_threshold: f64,
    observations: &[Observation],
    loss_seen: &[bool],
    now: f64,
) -> Vec<f64> {
    let abrs: Vec<f64> = observations.iter().map(|o| o.abr.max(0.0)).collect();
    let floors = match params.variant {
        AimdVariant::Greedy => state.initial_floor.clone(),
        AimdVariant::RateProportional => split_proportional(r_min, &abrs),
    };
    state.congested = observations
        .iter()
        .zip(loss_seen)
        .map(|(o, l)| detect_congestion(o, *l, rtt_threshold))
        .collect();
    let any = state.congested.iter().any(|c| *c);
    for (n, congested) in state.congested.iter().enumerate() {
        if *congested {
            let r = state.rates[n];
            let f = floors[n].min(r);
            state.rates[n] = r - (r - f) / 2.0;
        }
    }
    if state.total() < r_min {
        state.rates = floors.clone();
    }
    // half a microsecond of slack absorbs float drift in the epoch clock
    let due = state
        .last_increase
        .is_none_or(|t| now - t >= params.delta_t - 5e-7);
    if !any && due {
        state.last_increase = Some(now);
        match params.variant {
            AimdVariant::Greedy => {
                let n = argmax_first(&abrs);
                state.rates[n] += params.delta_r;
            }
            AimdVariant::RateProportional => {
                let total = state.total() + params.delta_r;
                state.rates = split_proportional(total, &abrs);
            }
        }
    }
    state.rates.clone()
}

#[derive(Debug, Clone)]
pub struct AimdPolicy {
    params: AimdParams,
    r_min: f64,
    rtt_threshold: f64,
    state: Option<AimdState>,
    hint: Vec<f64>,
}

impl AimdPolicy {
    pub fn new(params: AimdParams, profile: &StreamProfile) -> ModelResult<Self> {
        params.validate()?;
        Ok(Self {
            rtt_threshold: params.rtt_threshold.unwrap_or(profile.deadline / 2.0),
            r_min: profile.min_rate,
            params,
            state: None,
            hint: Vec::new(),
        })
    }

    pub fn rtt_threshold(&self) -> f64 {
        self.rtt_threshold
    }

    pub fn state(&self) -> Option<&AimdState> {
        self.state.as_ref()
    }
}

impl RatePolicy for AimdPolicy {
    fn name(&self) -> &'static str {
        match self.params.variant {
            AimdVariant::Greedy => "greedy-aimd",
            AimdVariant::RateProportional => "proportional-aimd",
        }
    }

    fn initial_rates(&mut self, abr_hint: &[f64]) -> Vec<f64> {
        self.state = None;
        self.hint = abr_hint.to_vec();
        split_proportional(self.r_min, abr_hint)
    }

    fn allocate(&mut self, input: &PolicyInput<'_>) -> Vec<f64> {
        let obs = input.observations;
        let stale = self.state.as_ref().is_none_or(|s| s.rates.len() != obs.len());
        if stale {
            let abrs: Vec<f64> = obs.iter().map(|o| o.abr).collect();
            let mut st = AimdState::new(self.r_min, &abrs);
            st.last_increase = Some(input.now - self.params.delta_t);
            self.state = Some(st);
        }
        let state = self.state.as_mut().expect("initialized above");
        aimd_step(
            state,
            &self.params,
            self.r_min,
            self.rtt_threshold,
            obs,
            input.loss_seen,
            input.now,
        )
    }
}
