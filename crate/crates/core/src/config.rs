//! TOML experiment configuration.
//!
//! ```toml
//! [experiment]
//! policies = ["media-aware", "hinf"]
//! warmup = 60.0
//! [experiment.sweep]
//! "network.*.background_load" = [0.1, 0.3]
//!
//! [sim]
//! duration = 600.0
//!
//! [network.ethernet]
//! synth = "ethernet"
//! background_load = 0.2
//!
//! [stream.harbor]
//! profile = "harbor"
//! deadline = 0.3
//! r_min = 1e6
//! policy = "media-aware"
//!
//! [policy.hinf]
//! g = 8.0
//! ```
//!
//! Rates are in bit/s and times in seconds throughout.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distortion::{builtin_profile, load_profile_schedule, DrParams, StreamProfile};
use crate::policy::hinf::gamma_star;
use crate::policy::{AimdParams, HinfParams, MediaPolicyParams, PolicyKind, PolicySettings};
use crate::sim::{NetworkSetup, SimConfig, StreamSetup};
use crate::traces::{builtin_synth, load_trace, synth_trace, SynthSpec, TraceSeries};

/// Spacing of synthetic trace samples (s).
pub const SYNTH_PERIOD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("bad sweep or override '{key}': {reason}")]
    Override { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub name: Option<String>,
    pub description: Option<String>,
    /// Run every listed policy on all streams; empty keeps each stream's own.
    pub policies: Vec<PolicyKind>,
    /// Leading seconds left out of the summaries.
    pub warmup: f64,
    /// Parameter grid; keys are dotted paths, `*` matches every entry.
    pub sweep: IndexMap<String, Vec<toml::Value>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkBlock {
    /// Trace CSV, relative to the config file.
    pub trace: Option<PathBuf>,
    /// Built-in synthetic profile name.
    pub synth: Option<String>,
    pub mean_abr: Option<f64>,
    pub abr_std: Option<f64>,
    pub mean_rtt: Option<f64>,
    pub rtt_std: Option<f64>,
    pub ar_coeff: Option<f64>,
    /// Seed of the synthetic trace; derived from the run seed when absent.
    pub trace_seed: Option<u64>,
    pub background_load: f64,
}

impl NetworkBlock {
    fn has_inline_synth(&self) -> bool {
        self.mean_abr.is_some()
            || self.abr_std.is_some()
            || self.mean_rtt.is_some()
            || self.rtt_std.is_some()
            || self.ar_coeff.is_some()
    }

    fn synth_spec(&self) -> Result<SynthSpec, String> {
        let base = match &self.synth {
            Some(name) => builtin_synth(name).ok_or_else(|| format!("unknown synthetic profile '{name}'"))?,
            None => SynthSpec {
                mean_abr: self.mean_abr.ok_or("mean_abr is required without a named profile")?,
                abr_std: 0.0,
                mean_rtt: self.mean_rtt.ok_or("mean_rtt is required without a named profile")?,
                rtt_std: 0.0,
                ar_coeff: 0.9,
            },
        };
        let spec = SynthSpec {
            mean_abr: self.mean_abr.unwrap_or(base.mean_abr),
            abr_std: self.abr_std.unwrap_or(base.abr_std),
            mean_rtt: self.mean_rtt.unwrap_or(base.mean_rtt),
            rtt_std: self.rtt_std.unwrap_or(base.rtt_std),
            ar_coeff: self.ar_coeff.unwrap_or(base.ar_coeff),
        };
        if !(spec.mean_abr > 0.0 && spec.mean_rtt > 0.0) {
            return Err("mean_abr and mean_rtt must be positive".into());
        }
        if !(spec.abr_std >= 0.0 && spec.rtt_std >= 0.0) {
            return Err("abr_std and rtt_std must be non-negative".into());
        }
        if !(0.0..1.0).contains(&spec.ar_coeff) {
            return Err("ar_coeff must lie in [0, 1)".into());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamBlock {
    /// Built-in distortion-rate profile name.
    pub profile: Option<String>,
    /// Per-GOP profile CSV, relative to the config file.
    pub profile_file: Option<PathBuf>,
    pub d0: Option<f64>,
    pub theta: Option<f64>,
    pub r0: Option<f64>,
    pub kappa: Option<f64>,
    pub deadline: f64,
    pub r_min: f64,
    pub policy: PolicyKind,
}

impl Default for StreamBlock {
    fn default() -> Self {
        Self {
            profile: None,
            profile_file: None,
            d0: None,
            theta: None,
            r0: None,
            kappa: None,
            deadline: 0.3,
            r_min: 1e6,
            policy: PolicyKind::MediaAware,
        }
    }
}

impl StreamBlock {
    fn schedule(&self, base: &Path) -> Result<Vec<DrParams>, String> {
        let sources = self.profile.is_some() as u8 + self.profile_file.is_some() as u8;
        if sources > 1 {
            return Err("give either profile or profile_file, not both".into());
        }
        let mut schedule = if let Some(name) = &self.profile {
            vec![builtin_profile(name).ok_or_else(|| format!("unknown profile '{name}'"))?]
        } else if let Some(file) = &self.profile_file {
            let path = base.join(file);
            load_profile_schedule(&path).map_err(|e| format!("profile file {}: {e}", path.display()))?
        } else {
            vec![DrParams {
                d0: self.d0.ok_or("d0 is required without a profile")?,
                theta: self.theta.ok_or("theta is required without a profile")?,
                r0: self.r0.ok_or("r0 is required without a profile")?,
                kappa: self.kappa.ok_or("kappa is required without a profile")?,
            }]
        };
        for p in &mut schedule {
            p.d0 = self.d0.unwrap_or(p.d0);
            p.theta = self.theta.unwrap_or(p.theta);
            p.r0 = self.r0.unwrap_or(p.r0);
            p.kappa = self.kappa.unwrap_or(p.kappa);
        }
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub network: IndexMap<String, NetworkBlock>,
    #[serde(default)]
    pub stream: IndexMap<String, StreamBlock>,
    /// `[policy.media-aware]`, `[policy.hinf]` and `[policy.aimd]` blocks.
    #[serde(default)]
    pub policy: toml::Table,
}

const POLICY_BLOCKS: [&str; 3] = ["media-aware", "hinf", "aimd"];

fn block<T: for<'de> Deserialize<'de> + Default>(table: &toml::Table, name: &str) -> Result<T, String> {
    match table.get(name) {
        None => Ok(T::default()),
        Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| format!("[policy.{name}]: {}", e.message())),
    }
}

/// Networks and streams ready to run, with policies still unbuilt.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub sim: SimConfig,
    pub networks: Vec<NetworkSetup>,
    pub profiles: Vec<StreamProfile>,
    pub policies: Vec<PolicyKind>,
    pub settings: PolicySettings,
}

impl Resolved {
    /// Build stream setups, running `policy` on every stream when given.
    pub fn streams(&self, policy: Option<PolicyKind>) -> Result<Vec<StreamSetup>, ConfigError> {
        self.profiles
            .iter()
            .zip(&self.policies)
            .map(|(profile, kind)| {
                let kind = policy.unwrap_or(*kind);
                let policy = self
                    .settings
                    .build(kind, profile)
                    .map_err(|e| ConfigError::Invalid(vec![format!("stream {}: {e}", profile.name)]))?;
                Ok(StreamSetup {
                    profile: profile.clone(),
                    policy,
                })
            })
            .collect()
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Sum of the streams' loss sensitivities, the default `kappa_prime`.
    fn kappa_sum(&self, base: &Path) -> Option<f64> {
        let mut sum = 0.0;
        for s in self.stream.values() {
            sum += s.schedule(base).ok()?.first()?.kappa;
        }
        (sum > 0.0).then_some(sum)
    }

    pub fn policy_settings(&self, base: &Path) -> Result<PolicySettings, Vec<String>> {
        let mut errors = Vec::new();
        for key in self.policy.keys() {
            if !POLICY_BLOCKS.contains(&key.as_str()) {
                errors.push(format!(
                    "[policy.{key}]: unknown policy block; expected one of {}",
                    POLICY_BLOCKS.join(", ")
                ));
            }
        }
        let mut media: MediaPolicyParams = block(&self.policy, "media-aware").unwrap_or_else(|e| {
            errors.push(e);
            MediaPolicyParams::default()
        });
        let explicit_kappa = self
            .policy
            .get("media-aware")
            .and_then(|v| v.get("kappa_prime"))
            .is_some();
        if !explicit_kappa {
            if let Some(k) = self.kappa_sum(base) {
                media.kappa_prime = k;
            }
        }
        if let Err(e) = media.validate() {
            errors.push(format!("[policy.media-aware]: {e}"));
        }
        let hinf: HinfParams = block(&self.policy, "hinf").unwrap_or_else(|e| {
            errors.push(e);
            HinfParams::default()
        });
        if let Err(e) = hinf.validate() {
            let star = gamma_star(hinf.a, hinf.b, hinf.h, hinf.g);
            errors.push(format!("[policy.hinf]: {e} (gamma* = {star})"));
        }
        let aimd: AimdParams = block(&self.policy, "aimd").unwrap_or_else(|e| {
            errors.push(e);
            AimdParams::default()
        });
        if let Err(e) = aimd.validate() {
            errors.push(format!("[policy.aimd]: {e}"));
        }
        if errors.is_empty() {
            Ok(PolicySettings { media, hinf, aimd })
        } else {
            Err(errors)
        }
    }

    fn network_trace(&self, index: usize, id: &str, net: &NetworkBlock, base: &Path) -> Result<TraceSeries, String> {
        let named = net.synth.is_some() || net.has_inline_synth();
        match (&net.trace, named) {
            (Some(_), true) => Err(format!("[network.{id}]: give either trace or synthetic parameters, not both")),
            (None, false) => Err(format!("[network.{id}]: needs a trace file or synthetic parameters")),
            (Some(file), false) => {
                let path = base.join(file);
                load_trace(&path).map_err(|e| format!("[network.{id}]: trace {}: {e}", path.display()))
            }
            (None, true) => {
                let spec = net.synth_spec().map_err(|e| format!("[network.{id}]: {e}"))?;
                let seed = net
                    .trace_seed
                    .unwrap_or_else(|| self.sim.seed.wrapping_mul(7919).wrapping_add(100 + index as u64));
                Ok(synth_trace(&spec, self.sim.duration + self.sim.epoch, SYNTH_PERIOD, seed))
            }
        }
    }

    /// Every violated invariant, without running anything. Empty when valid.
    pub fn diagnostics(&self, base: &Path) -> Vec<String> {
        self.resolve_inner(base).err().unwrap_or_default()
    }

    pub fn resolve(&self, base: &Path) -> Result<Resolved, ConfigError> {
        self.resolve_inner(base).map_err(ConfigError::Invalid)
    }

    fn resolve_inner(&self, base: &Path) -> Result<Resolved, Vec<String>> {
        let mut errors = Vec::new();
        if let Err(e) = self.sim.validate() {
            errors.push(format!("[sim]: {e}"));
        }
        if self.network.is_empty() {
            errors.push("at least one [network.<id>] block is required".into());
        }
        if self.stream.is_empty() {
            errors.push("at least one [stream.<id>] block is required".into());
        }
        if !(self.experiment.warmup >= 0.0) {
            errors.push("[experiment]: warmup must be non-negative".into());
        } else if self.experiment.warmup >= self.sim.duration {
            errors.push("[experiment]: warmup must be shorter than sim.duration".into());
        }
        let mut networks = Vec::new();
        for (index, (id, net)) in self.network.iter().enumerate() {
            if !(0.0..1.0).contains(&net.background_load) {
                errors.push(format!("[network.{id}]: background_load must lie in [0, 1)"));
            }
            match self.network_trace(index, id, net, base) {
                Ok(trace) => {
                    let covered = trace.end_time() + trace.sample_period();
                    if trace.len() > 1 && covered < self.sim.duration {
                        errors.push(format!(
                            "[network.{id}]: trace covers {covered} s but sim.duration is {} s",
                            self.sim.duration
                        ));
                    }
                    networks.push(NetworkSetup {
                        name: id.clone(),
                        trace,
                        background_load: net.background_load,
                    });
                }
                Err(e) => errors.push(e),
            }
        }
        let mut profiles = Vec::new();
        let mut policies = Vec::new();
        for (index, (id, s)) in self.stream.iter().enumerate() {
            match s.schedule(base) {
                Ok(schedule) => match StreamProfile::with_schedule(index, id.clone(), schedule, s.deadline, s.r_min) {
                    Ok(p) => {
                        profiles.push(p);
                        policies.push(s.policy);
                    }
                    Err(e) => errors.push(format!("[stream.{id}]: {e}")),
                },
                Err(e) => errors.push(format!("[stream.{id}]: {e}")),
            }
        }
        let settings = match self.policy_settings(base) {
            Ok(s) => Some(s),
            Err(mut e) => {
                errors.append(&mut e);
                None
            }
        };
        for key in self.experiment.sweep.keys() {
            if let Err(e) = check_path(key) {
                errors.push(format!("[experiment.sweep]: '{key}': {e}"));
            }
        }
        if errors.is_empty() {
            Ok(Resolved {
                sim: self.sim.clone(),
                networks,
                profiles,
                policies,
                settings: settings.expect("no errors"),
            })
        } else {
            Err(errors)
        }
    }

    /// Set a dotted key such as `sim.seed` or `stream.*.deadline`. The bare
    /// key `policy` sets every stream's policy.
    pub fn set(&mut self, key: &str, value: toml::Value) -> Result<(), ConfigError> {
        let fail = |reason: String| ConfigError::Override {
            key: key.to_string(),
            reason,
        };
        check_path(key).map_err(fail)?;
        let mut root = toml::Value::try_from(&*self).map_err(|e| fail(e.to_string()))?;
        if key == "policy" {
            if let Some(streams) = root.get_mut("stream").and_then(|s| s.as_table_mut()) {
                for (_, s) in streams.iter_mut() {
                    if let Some(t) = s.as_table_mut() {
                        t.insert("policy".into(), value.clone());
                    }
                }
            }
        } else {
            let parts: Vec<&str> = key.split('.').collect();
            set_path(&mut root, &parts, &value).map_err(fail)?;
        }
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| fail(e.message().to_string()))?;
        Ok(())
    }
}

fn check_path(key: &str) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty path component".into());
    }
    match parts[0] {
        "policy" if parts.len() == 1 || parts.len() == 3 => Ok(()),
        "sim" | "experiment" if parts.len() == 2 => Ok(()),
        "network" | "stream" if parts.len() == 3 => Ok(()),
        _ => Err("expected sim.<key>, network.<id|*>.<key>, stream.<id|*>.<key>, policy.<name>.<key> or policy".into()),
    }
}

fn set_path(node: &mut toml::Value, parts: &[&str], value: &toml::Value) -> Result<(), String> {
    let table = node.as_table_mut().ok_or("path runs through a non-table value")?;
    let (head, rest) = (parts[0], &parts[1..]);
    if rest.is_empty() {
        let coerced = match (table.get(head), value) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
            (None, toml::Value::Integer(i)) if !head.contains("seed") => toml::Value::Float(*i as f64),
            _ => value.clone(),
        };
        table.insert(head.to_string(), coerced);
        return Ok(());
    }
    if head == "*" {
        if table.is_empty() {
            return Err("wildcard matches nothing".into());
        }
        for (_, v) in table.iter_mut() {
            set_path(v, rest, value)?;
        }
        return Ok(());
    }
    let child = table
        .entry(head.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_path(child, rest, value)
}

/// Interpret a command-line value as TOML: number, boolean, or bare string.
pub fn parse_value(text: &str) -> toml::Value {
    if let Ok(i) = text.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = text.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match text {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(text.to_string()),
    }
}
