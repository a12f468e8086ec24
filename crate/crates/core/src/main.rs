use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mhrate::config::{parse_value, Config};
use mhrate::runner::run_experiment;
use mhrate::scenarios::{find, SCENARIOS};

#[derive(Parser)]
#[command(name = "mhrate", version, about = "Multi-network video rate allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a canned scenario name.
    Run {
        config: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override sim.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Sweep axis `key=v1,v2,...`; repeatable.
        #[arg(long, value_name = "KEY=V1,V2,...")]
        sweep: Vec<String>,
    },
    /// Check a config without running it.
    Validate { config: String },
    /// List the canned scenarios.
    ListScenarios,
    /// Print a canned scenario as a config file.
    ShowScenario { name: String },
}

fn load(spec: &str) -> Result<(Config, PathBuf), String> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(s) = find(spec) {
            return Ok((s.config(), PathBuf::from(".")));
        }
    }
    let config = Config::load(path).map_err(|e| format!("{spec}: {e}"))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn parse_sweep(arg: &str) -> Result<(String, Vec<toml::Value>), String> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| format!("--sweep '{arg}': expected key=v1,v2,..."))?;
    let values: Vec<toml::Value> = values.split(',').filter(|v| !v.is_empty()).map(parse_value).collect();
    if key.is_empty() || values.is_empty() {
        return Err(format!("--sweep '{arg}': expected key=v1,v2,..."));
    }
    Ok((key.to_string(), values))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

fn run(config: &str, out: &Path, seed: Option<u64>, sweeps: &[String]) -> Result<(), String> {
    let (mut config, base) = load(config)?;
    if let Some(seed) = seed {
        config.sim.seed = seed;
    }
    let extra = sweeps.iter().map(|s| parse_sweep(s)).collect::<Result<Vec<_>, _>>()?;
    let results = run_experiment(&config, &base, &extra, Some(out)).map_err(|e| e.to_string())?;
    for point in &results {
        if !point.label.is_empty() {
            println!("[{}]", point.label);
        }
        println!("{:<20} {:>10} {:>10} {:>10} {:>10}", "policy", "rate_mbps", "loss_pct", "psnr_db", "spread_db");
        for s in &point.summaries {
            let loss = s.loss_ratio.iter().sum::<f64>() / s.loss_ratio.len().max(1) as f64;
            println!(
                "{:<20} {:>10.2} {:>10.3} {:>10} {:>10}",
                s.policy_label(),
                s.total_rate() / 1e6,
                loss * 100.0,
                fmt_opt(s.mean_psnr(), 2),
                fmt_opt(s.psnr_spread(), 2)
            );
        }
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, sweep } => run(&config, &out, seed, &sweep),
        Command::Validate { config } => load(&config).and_then(|(c, base)| {
            let diagnostics = c.diagnostics(&base);
            if diagnostics.is_empty() {
                println!("{config}: ok");
                Ok(())
            } else {
                for d in &diagnostics {
                    println!("{d}");
                }
                Err(format!("{config}: {} problem(s)", diagnostics.len()))
            }
        }),
        Command::ListScenarios => {
            for s in SCENARIOS {
                println!("{:<18} {}", s.name, s.description);
            }
            Ok(())
        }
        Command::ShowScenario { name } => match find(&name) {
            Some(s) => {
                print!("{}", s.toml());
                Ok(())
            }
            None => Err(format!("unknown scenario '{name}'")),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
