//! Experiment execution: sweep expansion, parallel runs, output files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::metrics::{compare_policies, epoch_csv, summarize_output, summary_csv, MetricsError, RunSummary};
use crate::policy::PolicyKind;
use crate::sim::{run, RunOutput, SimError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

/// One point of a sweep grid.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// `key=value` pairs joined by commas; empty without a sweep.
    pub label: String,
    pub config: Config,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub label: String,
    pub summaries: Vec<RunSummary>,
    pub comparison: String,
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

fn label_part(key: &str, value: &toml::Value) -> String {
    let text = format!("{}={}", key.replace('*', "all"), value_text(value));
    text.chars()
        .map(|c| if c == '/' || c == '\\' || c == ',' || c.is_whitespace() { '_' } else { c })
        .collect()
}

/// Cartesian product of the config's sweep axes and `extra`; an axis in
/// `extra` replaces a config axis with the same key.
pub fn sweep_points(config: &Config, extra: &[(String, Vec<toml::Value>)]) -> Result<Vec<SweepPoint>, ConfigError> {
    let mut axes = config.experiment.sweep.clone();
    for (k, v) in extra {
        axes.insert(k.clone(), v.clone());
    }
    let mut base = config.clone();
    base.experiment.sweep.clear();
    let mut points = vec![SweepPoint {
        label: String::new(),
        config: base,
    }];
    for (key, values) in &axes {
        if values.is_empty() {
            return Err(ConfigError::Override {
                key: key.clone(),
                reason: "sweep axis has no values".into(),
            });
        }
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut config = p.config.clone();
                config.set(key, v.clone())?;
                let part = label_part(key, v);
                let label = if p.label.is_empty() {
                    part
                } else {
                    format!("{},{part}", p.label)
                };
                next.push(SweepPoint { label, config });
            }
        }
        points = next;
    }
    Ok(points)
}

/// Run one configuration, optionally forcing a policy on every stream.
pub fn run_config(config: &Config, base: &Path, policy: Option<PolicyKind>, tag: &str) -> Result<(RunOutput, RunSummary), RunError> {
    let resolved = config.resolve(base)?;
    let streams = resolved.streams(policy)?;
    let output = run(&resolved.sim, &resolved.networks, streams)?;
    let summary = summarize_output(&output, tag, config.experiment.warmup)?;
    Ok((output, summary))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

struct Task {
    point: usize,
    policy: Option<PolicyKind>,
    dir: Option<PathBuf>,
}

/// Run every sweep point and policy in parallel. With `out`, each run writes
/// `epochs.csv` and `summary.csv`, and each point writes `comparison.csv` and
/// its resolved `config.toml`.
pub fn run_experiment(
    config: &Config,
    base: &Path,
    extra: &[(String, Vec<toml::Value>)],
    out: Option<&Path>,
) -> Result<Vec<PointResult>, RunError> {
    let points = sweep_points(config, extra)?;
    for p in &points {
        p.config.resolve(base)?;
    }
    let policies: Vec<Option<PolicyKind>> = if config.experiment.policies.is_empty() {
        vec![None]
    } else {
        config.experiment.policies.iter().copied().map(Some).collect()
    };
    let point_dir = |label: &str| out.map(|o| if label.is_empty() { o.to_path_buf() } else { o.join(label) });
    let mut tasks = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for policy in &policies {
            let dir = point_dir(&p.label).map(|d| match policy {
                Some(k) => d.join(k.as_str()),
                None => d,
            });
            tasks.push(Task {
                point: i,
                policy: *policy,
                dir,
            });
        }
    }
    let summaries: Vec<RunSummary> = tasks
        .par_iter()
        .map(|task| {
            let point = &points[task.point];
            let tag = if point.label.is_empty() { "base" } else { point.label.as_str() };
            let (output, summary) = run_config(&point.config, base, task.policy, tag)?;
            if let Some(dir) = &task.dir {
                write_atomic(&dir.join("epochs.csv"), &epoch_csv(&output))?;
                write_atomic(&dir.join("summary.csv"), &summary_csv(&summary))?;
            }
            Ok(summary)
        })
        .collect::<Result<_, RunError>>()?;

    let mut results = Vec::with_capacity(points.len());
    for (i, chunk) in summaries.chunks(policies.len()).enumerate() {
        let comparison = compare_policies(chunk)?;
        if let Some(dir) = point_dir(&points[i].label) {
            write_atomic(&dir.join("comparison.csv"), &comparison)?;
            write_atomic(&dir.join("config.toml"), &points[i].config.to_toml())?;
        }
        results.push(PointResult {
            label: points[i].label.clone(),
            summaries: chunk.to_vec(),
            comparison,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_value;

    fn config() -> Config {
        Config::parse(
            r#"
[experiment]
policies = ["media-aware", "greedy-aimd"]
[experiment.sweep]
"network.*.background_load" = [0.1, 0.2]
[sim]
duration = 10.0
[network.eth]
mean_abr = 10e6
mean_rtt = 0.02
[stream.a]
profile = "harbor"
"#,
        )
        .unwrap()
    }

    #[test]
    fn grid_is_cartesian() {
        let extra = vec![("sim.seed".to_string(), vec![parse_value("1"), parse_value("2"), parse_value("3")])];
        let points = sweep_points(&config(), &extra).unwrap();
        assert_eq!(points.len(), 6);
        assert_eq!(points[0].label, "network.all.background_load=0.1,sim.seed=1");
        assert_eq!(points[5].config.sim.seed, 3);
        assert_eq!(points[5].config.network["eth"].background_load, 0.2);
    }

    #[test]
    fn cli_axis_replaces_config_axis() {
        let extra = vec![("network.*.background_load".to_string(), vec![parse_value("0.4")])];
        let points = sweep_points(&config(), &extra).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].config.network["eth"].background_load, 0.4);
    }

    #[test]
    fn writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&config(), Path::new("."), &[], Some(dir.path())).unwrap();
        assert_eq!(res.len(), 2);
        for label in ["network.all.background_load=0.1", "network.all.background_load=0.2"] {
            let p = dir.path().join(label);
            assert!(p.join("comparison.csv").is_file());
            assert!(p.join("config.toml").is_file());
            for policy in ["media-aware", "greedy-aimd"] {
                assert!(p.join(policy).join("epochs.csv").is_file());
                assert!(p.join(policy).join("summary.csv").is_file());
            }
        }
    }
}
