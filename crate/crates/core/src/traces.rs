//! Available-bit-rate / round-trip-time traces.
//!
//! Files are CSV with header `t_s,abr_kbps,rtt_ms`. In memory everything is
//! bit/s and seconds. Between samples values are held constant.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: parse error: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Validation { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub abr: f64,
    pub rtt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    samples: Vec<TraceSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t_s: f64,
    abr_kbps: String,
    rtt_ms: String,
}

impl TraceSeries {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::Validation {
                line: 0,
                reason: "trace is empty".into(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            // +2: one header line, one-based numbering
            let line = i + 2;
            if !s.t.is_finite() || !(s.t >= 0.0) {
                return Err(TraceError::Validation {
                    line,
                    reason: format!("timestamp {} is not a finite non-negative time", s.t),
                });
            }
            if !(s.abr > 0.0) || !s.abr.is_finite() {
                return Err(TraceError::Validation {
                    line,
                    reason: format!("abr must be positive, got {}", s.abr),
                });
            }
            if !(s.rtt > 0.0) || !s.rtt.is_finite() {
                return Err(TraceError::Validation {
                    line,
                    reason: format!("rtt must be positive, got {}", s.rtt),
                });
            }
            if i > 0 && !(s.t > samples[i - 1].t) {
                return Err(TraceError::Validation {
                    line,
                    reason: format!(
                        "timestamp {} does not increase past {}",
                        s.t,
                        samples[i - 1].t
                    ),
                });
            }
        }
        Ok(Self { samples })
    }

    /// Constant trace: one sample at time zero.
    pub fn constant(abr: f64, rtt: f64) -> Self {
        Self::new(vec![TraceSample { t: 0.0, abr, rtt }]).expect("constant trace must be valid")
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Nominal spacing between samples (first gap; zero for single-sample traces).
    pub fn sample_period(&self) -> f64 {
        if self.samples.len() < 2 {
            0.0
        } else {
            self.samples[1].t - self.samples[0].t
        }
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Zero-order-hold lookup. Times before the first sample use the first.
    pub fn at(&self, t: f64) -> TraceSample {
        let idx = self.samples.partition_point(|s| s.t <= t);
        self.samples[idx.saturating_sub(1)]
    }

    /// Time average of the held ABR over `[from, to]`.
    pub fn mean_abr_over(&self, from: f64, to: f64) -> f64 {
        if !(to > from) {
            return self.at(from).abr;
        }
        let mut i = self.samples.partition_point(|s| s.t <= from).saturating_sub(1);
        let mut t = from;
        let mut acc = 0.0;
        while t < to {
            let end = self.samples.get(i + 1).map_or(to, |s| s.t.min(to));
            acc += self.samples[i].abr * (end - t);
            t = end;
            if i + 1 < self.samples.len() {
                i += 1;
            }
        }
        acc / (to - from)
    }

    pub fn mean_abr(&self) -> f64 {
        self.samples.iter().map(|s| s.abr).sum::<f64>() / self.samples.len() as f64
    }

    pub fn mean_rtt(&self) -> f64 {
        self.samples.iter().map(|s| s.rtt).sum::<f64>() / self.samples.len() as f64
    }
}

pub fn load_trace(path: &Path) -> Result<TraceSeries, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_trace(&text)
}

pub fn parse_trace(text: &str) -> Result<TraceSeries, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["t_s", "abr_kbps", "rtt_ms"] {
        return Err(TraceError::Parse {
            line: 1,
            reason: format!("expected header t_s,abr_kbps,rtt_ms, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.deserialize::<TraceRow>().enumerate() {
        let row = rec.map_err(|e| TraceError::Parse {
            line: i + 2,
            reason: e.to_string(),
        })?;
        let field = |text: &str, shift: i32, name: &str| {
            parse_shifted(text, shift).ok_or_else(|| TraceError::Parse {
                line: i + 2,
                reason: format!("{name}: invalid number {text:?}"),
            })
        };
        samples.push(TraceSample {
            t: row.t_s,
            abr: field(&row.abr_kbps, 3, "abr_kbps")?,
            rtt: field(&row.rtt_ms, -3, "rtt_ms")?,
        });
    }
    TraceSeries::new(samples)
}

/// Writes `t_s,abr_kbps,rtt_ms`; `load_trace(save_trace(x)) == x` bit for bit.
pub fn save_trace(path: &Path, trace: &TraceSeries) -> std::io::Result<()> {
    std::fs::write(path, render_trace(trace))
}

pub fn render_trace(trace: &TraceSeries) -> String {
    let mut out = String::from("t_s,abr_kbps,rtt_ms\n");
    for s in &trace.samples {
        out.push_str(&format!(
            "{},{},{}\n",
            s.t,
            shifted_repr(s.abr, 3),
            shifted_repr(s.rtt, -3)
        ));
    }
    out
}

/// Parses a decimal and scales it by `10^shift` without intermediate rounding.
fn parse_shifted(text: &str, shift: i32) -> Option<f64> {
    text.parse::<f64>().ok()?;
    format!("{text}e{shift}").parse().ok()
}

/// Shortest round-trip decimal of `value` with the point moved `shift`
/// places to the left, written without an exponent.
fn shifted_repr(value: f64, shift: i32) -> String {
    let sci = format!("{value:e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse::<i32>().expect("exponent") - shift;
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    // value = 0.digits * 10^(exp + 1)
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    format!("{sign}{body}")
}

/// Statistics of a synthetic trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Mean ABR (bit/s).
    pub mean_abr: f64,
    pub abr_std: f64,
    /// Mean RTT (s).
    pub mean_rtt: f64,
    pub rtt_std: f64,
    #[serde(default = "default_ar")]
    pub ar_coeff: f64,
}

fn default_ar() -> f64 {
    0.9
}

/// Stationary AR(1) Gaussian series with the requested mean and standard
/// deviation, clamped to stay positive.
pub fn synth_trace(spec: &SynthSpec, duration: f64, period: f64, seed: u64) -> TraceSeries {
    assert!(spec.mean_abr > 0.0 && spec.mean_rtt > 0.0, "means must be positive");
    assert!(spec.abr_std >= 0.0 && spec.rtt_std >= 0.0, "stds must be non-negative");
    assert!(period > 0.0 && duration >= 0.0);
    assert!((0.0..1.0).contains(&spec.ar_coeff));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = spec.ar_coeff;
    let innov = (1.0 - phi * phi).sqrt();
    let count = (duration / period).floor() as usize + 1;
    let mut za: f64 = StandardNormal.sample(&mut rng);
    let mut zr: f64 = StandardNormal.sample(&mut rng);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            let ea: f64 = StandardNormal.sample(&mut rng);
            let er: f64 = StandardNormal.sample(&mut rng);
            za = phi * za + innov * ea;
            zr = phi * zr + innov * er;
        }
        let abr = (spec.mean_abr + spec.abr_std * za).max(0.05 * spec.mean_abr);
        let rtt = (spec.mean_rtt + spec.rtt_std * zr).max(0.1 * spec.mean_rtt);
        samples.push(TraceSample {
            t: i as f64 * period,
            abr,
            rtt,
        });
    }
    TraceSeries::new(samples).expect("synthetic trace is valid by construction")
}

/// Built-in stand-ins for the three access networks (not measured data).
pub fn builtin_synth(name: &str) -> Option<SynthSpec> {
    let spec = |mean_abr, abr_std, mean_rtt, rtt_std| SynthSpec {
        mean_abr,
        abr_std,
        mean_rtt,
        rtt_std,
        ar_coeff: 0.9,
    };
    match name.to_ascii_lowercase().as_str() {
        "ethernet" => Some(spec(30e6, 1.5e6, 0.020, 0.002)),
        "80211g" | "802.11g" | "wifi-g" => Some(spec(18e6, 1.5e6, 0.040, 0.005)),
        "80211b" | "802.11b" | "wifi-b" => Some(spec(5e6, 0.5e6, 0.060, 0.008)),
        _ => None,
    }
}
