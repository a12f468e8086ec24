//! Canned experiment configurations.

use crate::config::Config;

const NETWORKS: &str = r#"
[network.ethernet]
synth = "ethernet"
background_load = 0.2

[network.80211g]
synth = "80211g"
background_load = 0.2

[network.80211b]
synth = "80211b"
background_load = 0.2
"#;

const STREAMS: &str = r#"
[stream.harbor]
profile = "harbor"
deadline = 0.3
r_min = 1e6

[stream.bigships]
profile = "bigships"
deadline = 0.3
r_min = 1e6

[stream.cyclists]
profile = "cyclists"
deadline = 0.3
r_min = 1e6
"#;

const IDENTICAL_STREAMS: &str = r#"
[stream.s1]
profile = "harbor"
deadline = 0.3
r_min = 1e6

[stream.s2]
profile = "harbor"
deadline = 0.3
r_min = 1e6

[stream.s3]
profile = "harbor"
deadline = 0.3
r_min = 1e6
"#;

const SIM: &str = r#"
[sim]
duration = 600.0
measurement = "ideal"
"#;

const ALL_POLICIES: &str = r#"policies = ["media-aware", "hinf", "greedy-aimd", "proportional-aimd"]"#;

pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    build: fn() -> String,
}

impl Scenario {
    pub fn toml(&self) -> String {
        (self.build)()
    }

    pub fn config(&self) -> Config {
        Config::parse(&self.toml()).expect("canned scenario parses")
    }
}

fn experiment(name: &str, description: &str, extra: &str) -> String {
    format!("[experiment]\nname = \"{name}\"\ndescription = \"{description}\"\nwarmup = 60.0\n{extra}\n")
}

fn paper_v_load() -> String {
    let head = experiment(
        "paper-v-load",
        "four policies, three streams, three networks; background load 10, 30 and 50 percent; 300 ms deadline",
        &format!("{ALL_POLICIES}\n[experiment.sweep]\n\"network.*.background_load\" = [0.1, 0.3, 0.5]"),
    );
    format!("{head}{SIM}{NETWORKS}{STREAMS}")
}

fn paper_v_deadline() -> String {
    let head = experiment(
        "paper-v-deadline",
        "four policies at 20 percent background load; playout deadline from 0.2 to 5 s",
        &format!("{ALL_POLICIES}\n[experiment.sweep]\n\"stream.*.deadline\" = [0.2, 0.3, 0.5, 1.0, 2.0, 5.0]"),
    );
    format!("{head}{SIM}{NETWORKS}{STREAMS}")
}

fn random_loss() -> String {
    let head = experiment(
        "random-loss",
        "the 30 percent load point with 1 percent random packet loss on every network",
        ALL_POLICIES,
    );
    let networks = NETWORKS.replace("background_load = 0.2", "background_load = 0.3");
    format!("{head}{SIM}random_loss_rate = 0.01\n{networks}{STREAMS}")
}

fn convergence() -> String {
    let head = "[experiment]\nname = \"convergence\"\n\
        description = \"three identical streams join at once over steady links; media-aware against H-infinity\"\n\
        policies = [\"media-aware\", \"hinf\"]\n";
    let sim = SIM.replace("600.0", "300.0");
    let networks = NETWORKS.replace("background_load = 0.2", "background_load = 0.2\nabr_std = 0.0\nrtt_std = 0.0");
    format!("{head}{sim}{networks}{IDENTICAL_STREAMS}")
}

fn quick() -> String {
    let head = experiment("quick", "one-minute smoke run of all four policies", ALL_POLICIES).replace("60.0", "10.0");
    let sim = SIM.replace("600.0", "60.0");
    format!("{head}{sim}{NETWORKS}{STREAMS}")
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "paper-v-load",
        description: "policy comparison across background loads of 10, 30 and 50 percent",
        build: paper_v_load,
    },
    Scenario {
        name: "paper-v-deadline",
        description: "policy comparison across playout deadlines from 0.2 to 5 s",
        build: paper_v_deadline,
    },
    Scenario {
        name: "random-loss",
        description: "30 percent load with 1 percent random packet loss",
        build: random_loss,
    },
    Scenario {
        name: "convergence",
        description: "three identical streams starting together",
        build: convergence,
    },
    Scenario {
        name: "quick",
        description: "one-minute smoke run",
        build: quick,
    },
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::sweep_points;
    use std::path::Path;

    #[test]
    fn all_parse_and_validate() {
        for s in SCENARIOS {
            let c = s.config();
            assert!(c.diagnostics(Path::new(".")).is_empty(), "{}", s.name);
            assert_eq!(c.experiment.name.as_deref(), Some(s.name));
        }
    }

    #[test]
    fn grids() {
        let load = sweep_points(&find("paper-v-load").unwrap().config(), &[]).unwrap();
        assert_eq!(load.len(), 3);
        assert_eq!(load[1].config.network["80211b"].background_load, 0.3);
        let dl = sweep_points(&find("paper-v-deadline").unwrap().config(), &[]).unwrap();
        assert_eq!(dl.len(), 6);
        assert!(dl[5].config.stream.values().all(|s| s.deadline == 5.0));
        assert!(dl[0].config.network.values().all(|n| n.background_load == 0.2));
    }
}
