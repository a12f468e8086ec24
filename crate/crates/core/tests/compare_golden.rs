use mhrate::metrics::{compare_policies, RunMeta, RunSummary};

fn summary(policy: &str, rate: f64, delay: f64, loss: f64, psnr: f64, fluct: f64, conv: Option<f64>, util: [f64; 2]) -> RunSummary {
    RunSummary {
        meta: RunMeta {
            tag: "base".into(),
            policies: vec![policy.into()],
            streams: vec!["harbor".into()],
            networks: vec!["eth".into(), "wlan".into()],
        },
        epochs: 10,
        utilization: util.to_vec(),
        rate: vec![rate],
        mean_delay: vec![Some(delay)],
        loss_ratio: vec![loss],
        psnr: vec![Some(psnr)],
        fluctuation: vec![fluct],
        convergence_time: vec![conv],
        flagged_epochs: 0,
    }
}

#[test]
fn matches_golden_file() {
    let runs = [
        summary("media-aware", 2e6, 0.0625, 0.125, 36.5, 2.5e5, Some(12.0), [0.5, 0.25]),
        summary("greedy-aimd", 1.5e6, 0.125, 0.25, 35.25, 5e5, None, [0.375, 0.25]),
    ];
    let golden = include_str!("golden/compare_policies.csv");
    assert_eq!(compare_policies(&runs).unwrap(), golden);
}
