//! Aggregation of epoch reports into run summaries and cross-policy tables.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::sim::{EpochReport, RunOutput};

/// Length of the tail window that defines the settled rate (s).
pub const CONVERGENCE_TAIL: f64 = 30.0;
/// Relative band around the settled rate.
pub const CONVERGENCE_BAND: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("run has no epochs to summarize")]
    EmptyRun,
    #[error("summaries are not comparable: {0}")]
    MismatchedConfigs(String),
}

/// Names and configuration identity attached to a summary.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunMeta {
    /// Identifies the configuration apart from the policies.
    pub tag: String,
    pub policies: Vec<String>,
    pub streams: Vec<String>,
    pub networks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub meta: RunMeta,
    pub epochs: usize,
    /// Mean video utilization per network.
    pub utilization: Vec<f64>,
    /// Mean allocated rate per stream (bit/s).
    pub rate: Vec<f64>,
    pub mean_delay: Vec<Option<f64>>,
    /// Lost (late or dropped) over sent packets per stream.
    pub loss_ratio: Vec<f64>,
    pub psnr: Vec<Option<f64>>,
    /// Standard deviation of the per-epoch total rate (bit/s).
    pub fluctuation: Vec<f64>,
    pub convergence_time: Vec<Option<f64>>,
    /// Epochs in which at least one policy fell back to its previous allocation.
    pub flagged_epochs: usize,
}

impl RunSummary {
    pub fn policy_label(&self) -> String {
        let mut names = self.meta.policies.clone();
        names.dedup();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }

    /// Mean PSNR across streams with a defined PSNR.
    pub fn mean_psnr(&self) -> Option<f64> {
        mean(self.psnr.iter().flatten().copied())
    }

    /// Largest minus smallest per-stream PSNR.
    pub fn psnr_spread(&self) -> Option<f64> {
        let v: Vec<f64> = self.psnr.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(hi - lo)
    }

    pub fn total_rate(&self) -> f64 {
        self.rate.iter().sum()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// First time after which `rates` stays within the band around its mean over
/// the final `tail` seconds. `None` if the settled rate is zero.
pub fn convergence_time(times: &[f64], rates: &[f64], tail: f64, band: f64) -> Option<f64> {
    assert_eq!(times.len(), rates.len());
    let end = *times.last()?;
    let tail_values: Vec<f64> = times
        .iter()
        .zip(rates)
        .filter(|(t, _)| **t > end - tail - 1e-9)
        .map(|(_, r)| *r)
        .collect();
    let settled = tail_values.iter().sum::<f64>() / tail_values.len() as f64;
    if !(settled > 0.0) {
        return None;
    }
    let last_out = rates
        .iter()
        .rposition(|r| (r - settled).abs() > band * settled);
    Some(match last_out {
        None => times[0],
        Some(k) if k + 1 < times.len() => times[k + 1],
        Some(_) => end,
    })
}

pub fn summarize(epochs: &[EpochReport], meta: RunMeta) -> Result<RunSummary, MetricsError> {
    let first = epochs.first().ok_or(MetricsError::EmptyRun)?;
    let n_streams = first.rates.len();
    let n_nets = first.capacity.len();
    let count = epochs.len() as f64;

    let utilization = (0..n_nets)
        .map(|n| epochs.iter().map(|e| e.utilization[n]).sum::<f64>() / count)
        .collect();
    let times: Vec<f64> = epochs.iter().map(|e| e.time).collect();

    let mut summary = RunSummary {
        meta,
        epochs: epochs.len(),
        utilization,
        rate: Vec::with_capacity(n_streams),
        mean_delay: Vec::with_capacity(n_streams),
        loss_ratio: Vec::with_capacity(n_streams),
        psnr: Vec::with_capacity(n_streams),
        fluctuation: Vec::with_capacity(n_streams),
        convergence_time: Vec::with_capacity(n_streams),
        flagged_epochs: epochs.iter().filter(|e| e.flagged.iter().any(|f| *f)).count(),
    };
    for s in 0..n_streams {
        let totals: Vec<f64> = epochs.iter().map(|e| e.rates[s].iter().sum()).collect();
        summary.rate.push(totals.iter().sum::<f64>() / count);
        summary.fluctuation.push(std_dev(&totals));
        summary
            .convergence_time
            .push(convergence_time(&times, &totals, CONVERGENCE_TAIL, CONVERGENCE_BAND));

        let sent: u64 = epochs.iter().map(|e| e.sent[s]).sum();
        let lost: u64 = epochs.iter().map(|e| e.lost[s]).sum();
        summary
            .loss_ratio
            .push(if sent > 0 { lost as f64 / sent as f64 } else { 0.0 });

        let (dsum, dn) = epochs.iter().fold((0.0, 0u64), |(acc, n), e| match e.mean_delay[s] {
            Some(d) => (acc + d * e.delivered[s] as f64, n + e.delivered[s]),
            None => (acc, n),
        });
        summary.mean_delay.push((dn > 0).then(|| dsum / dn as f64));
        summary.psnr.push(mean(epochs.iter().filter_map(|e| e.psnr[s])));
    }
    Ok(summary)
}

/// Summary of a whole run, excluding the first `warmup` seconds from all
/// averages. Convergence times always use the full run.
pub fn summarize_output(out: &RunOutput, tag: &str, warmup: f64) -> Result<RunSummary, MetricsError> {
    let meta = RunMeta {
        tag: tag.to_string(),
        policies: out.policy_names.clone(),
        streams: out.stream_names.clone(),
        networks: out.network_names.clone(),
    };
    let settled: Vec<EpochReport> = out
        .epochs
        .iter()
        .filter(|e| e.time - 1e-9 > warmup)
        .cloned()
        .collect();
    let mut summary = summarize(&settled, meta.clone())?;
    summary.convergence_time = summarize(&out.epochs, meta)?.convergence_time;
    Ok(summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

struct Row {
    scope: &'static str,
    entity: String,
    metric: &'static str,
    value: Option<f64>,
}

fn rows(summary: &RunSummary) -> Vec<Row> {
    let mut out = Vec::new();
    for (s, name) in summary.meta.streams.iter().enumerate() {
        let mut push = |metric, value| {
            out.push(Row {
                scope: "stream",
                entity: name.clone(),
                metric,
                value,
            })
        };
        push("rate_kbps", Some(summary.rate[s] / 1e3));
        push("mean_delay_ms", summary.mean_delay[s].map(|d| d * 1e3));
        push("loss_ratio", Some(summary.loss_ratio[s]));
        push("psnr_db", summary.psnr[s]);
        push("fluctuation_kbps", Some(summary.fluctuation[s] / 1e3));
        push("convergence_s", summary.convergence_time[s]);
    }
    for (n, name) in summary.meta.networks.iter().enumerate() {
        out.push(Row {
            scope: "network",
            entity: name.clone(),
            metric: "utilization",
            value: Some(summary.utilization[n]),
        });
    }
    out
}

/// One run's summary as `scope,entity,metric,value` CSV.
pub fn summary_csv(summary: &RunSummary) -> String {
    let mut out = String::from("scope,entity,metric,value\n");
    for r in rows(summary) {
        let _ = writeln!(out, "{},{},{},{}", r.scope, r.entity, r.metric, fmt_opt(r.value));
    }
    out
}

/// Cross-policy table with one row per (policy, stream or network, metric).
/// `delta` is measured against the first summary.
pub fn compare_policies(summaries: &[RunSummary]) -> Result<String, MetricsError> {
    let reference = summaries
        .first()
        .ok_or_else(|| MetricsError::MismatchedConfigs("no summaries given".into()))?;
    for s in &summaries[1..] {
        if s.meta.tag != reference.meta.tag {
            return Err(MetricsError::MismatchedConfigs(format!(
                "configuration '{}' differs from '{}'",
                s.meta.tag, reference.meta.tag
            )));
        }
        if s.meta.streams != reference.meta.streams || s.meta.networks != reference.meta.networks {
            return Err(MetricsError::MismatchedConfigs(format!(
                "{} runs different streams or networks",
                s.policy_label()
            )));
        }
    }
    let base = rows(reference);
    let mut out = String::from("policy,scope,entity,metric,value,delta\n");
    for s in summaries {
        let label = s.policy_label();
        for (r, b) in rows(s).into_iter().zip(&base) {
            let delta = match (r.value, b.value) {
                (Some(v), Some(w)) => Some(v - w),
                _ => None,
            };
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{}",
                r.scope,
                r.entity,
                r.metric,
                fmt_opt(r.value),
                fmt_opt(delta)
            );
        }
    }
    Ok(out)
}

/// Per-epoch CSV: `epoch,stream,network,rate_kbps,util,mean_delay_ms,loss_ratio,psnr_db`.
pub fn epoch_csv(out: &RunOutput) -> String {
    let mut csv = String::from("epoch,stream,network,rate_kbps,util,mean_delay_ms,loss_ratio,psnr_db\n");
    for e in &out.epochs {
        for (s, stream) in out.stream_names.iter().enumerate() {
            for (n, net) in out.network_names.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    e.index,
                    stream,
                    net,
                    e.rates[s][n] / 1e3,
                    e.utilization[n],
                    fmt_opt(e.mean_delay[s].map(|d| d * 1e3)),
                    e.loss_ratio[s],
                    fmt_opt(e.psnr[s])
                );
            }
        }
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch(index: usize, rates: [[f64; 2]; 1], util: [f64; 2], sent: u64, lost: u64, delay: f64, psnr: f64) -> EpochReport {
        EpochReport {
            index,
            time: 2.0 * (index + 1) as f64,
            rates: rates.iter().map(|r| r.to_vec()).collect(),
            capacity: vec![10e6, 5e6],
            utilization: util.to_vec(),
            sent: vec![sent],
            lost: vec![lost],
            delivered: vec![sent],
            mean_delay: vec![Some(delay)],
            loss_ratio: vec![lost as f64 / sent as f64],
            distortion: vec![None],
            psnr: vec![Some(psnr)],
            flagged: vec![false],
        }
    }

    fn meta() -> RunMeta {
        RunMeta {
            tag: "t".into(),
            policies: vec!["media-aware".into()],
            streams: vec!["a".into()],
            networks: vec!["x".into(), "y".into()],
        }
    }

    #[test]
    fn empty_run_is_an_error() {
        assert_eq!(summarize(&[], meta()), Err(MetricsError::EmptyRun));
    }

    #[test]
    fn single_epoch_equals_epoch() {
        let e = epoch(0, [[2e6, 1e6]], [0.2, 0.2], 100, 3, 0.04, 35.0);
        let s = summarize(std::slice::from_ref(&e), meta()).unwrap();
        assert_eq!(s.utilization, vec![0.2, 0.2]);
        assert_eq!(s.rate, vec![3e6]);
        assert_eq!(s.loss_ratio, vec![0.03]);
        assert_eq!(s.mean_delay, vec![Some(0.04)]);
        assert_eq!(s.psnr, vec![Some(35.0)]);
        assert_eq!(s.fluctuation, vec![0.0]);
    }

    #[test]
    fn three_epoch_fixture() {
        let e = vec![
            epoch(0, [[1e6, 1e6]], [0.1, 0.2], 100, 0, 0.010, 30.0),
            epoch(1, [[2e6, 1e6]], [0.2, 0.2], 200, 10, 0.020, 33.0),
            epoch(2, [[3e6, 2e6]], [0.3, 0.4], 300, 20, 0.030, 36.0),
        ];
        let s = summarize(&e, meta()).unwrap();
        // hand-computed
        assert!((s.utilization[0] - 0.2).abs() < 1e-12);
        assert!((s.utilization[1] - 0.8 / 3.0).abs() < 1e-12);
        assert!((s.rate[0] - 10e6 / 3.0).abs() < 1e-6);
        assert!((s.loss_ratio[0] - 0.05).abs() < 1e-12);
        assert!((s.mean_delay[0].unwrap() - 14.0 / 600.0).abs() < 1e-12);
        assert!((s.psnr[0].unwrap() - 33.0).abs() < 1e-12);
        assert!((s.fluctuation[0] - (14.0f64 / 9.0).sqrt() * 1e6).abs() < 1e-3);
    }

    #[test]
    fn idle_run_has_no_psnr() {
        let mut e = epoch(0, [[0.0, 0.0]], [0.0, 0.0], 1, 0, 0.0, 0.0);
        e.sent = vec![0];
        e.delivered = vec![0];
        e.mean_delay = vec![None];
        e.psnr = vec![None];
        e.loss_ratio = vec![0.0];
        let s = summarize(&[e], meta()).unwrap();
        assert_eq!(s.psnr, vec![None]);
        assert_eq!(s.loss_ratio, vec![0.0]);
        assert_eq!(s.utilization, vec![0.0, 0.0]);
        assert_eq!(s.convergence_time, vec![None]);
    }

    #[test]
    fn psnr_mean_is_order_invariant() {
        let mut e = vec![
            epoch(0, [[1e6, 1e6]], [0.1, 0.2], 100, 0, 0.010, 30.0),
            epoch(1, [[2e6, 1e6]], [0.2, 0.2], 200, 10, 0.020, 33.5),
            epoch(2, [[3e6, 2e6]], [0.3, 0.4], 300, 20, 0.030, 36.25),
        ];
        let a = summarize(&e, meta()).unwrap().psnr[0];
        e.reverse();
        assert_eq!(a, summarize(&e, meta()).unwrap().psnr[0]);
    }

    #[test]
    fn convergence_examples() {
        let times: Vec<f64> = (1..=40).map(|k| 2.0 * k as f64).collect();
        let mut rates = vec![10.0; 40];
        assert_eq!(convergence_time(&times, &rates, 30.0, 0.05), Some(2.0));
        for r in rates.iter_mut().take(10) {
            *r = 5.0;
        }
        assert_eq!(convergence_time(&times, &rates, 30.0, 0.05), Some(22.0));
        rates[39] = 100.0;
        assert_eq!(convergence_time(&times, &rates, 30.0, 0.05), Some(80.0));
    }

    #[test]
    fn compare_shapes_and_zero_deltas() {
        let e = vec![epoch(0, [[1e6, 1e6]], [0.1, 0.2], 100, 0, 0.010, 30.0)];
        let s = summarize(&e, meta()).unwrap();
        let table = compare_policies(&[s.clone(), s.clone()]).unwrap();
        let lines: Vec<&str> = table.lines().skip(1).collect();
        assert_eq!(lines.len(), 2 * (6 + 2));
        for line in lines {
            let delta = line.rsplit(',').next().unwrap();
            assert!(delta.is_empty() || delta.parse::<f64>().unwrap() == 0.0, "{line}");
        }
    }

    #[test]
    fn compare_rejects_mismatch() {
        let e = vec![epoch(0, [[1e6, 1e6]], [0.1, 0.2], 100, 0, 0.010, 30.0)];
        let a = summarize(&e, meta()).unwrap();
        let mut m = meta();
        m.tag = "other".into();
        let b = summarize(&e, m).unwrap();
        assert!(matches!(compare_policies(&[a, b]), Err(MetricsError::MismatchedConfigs(_))));
    }
}
