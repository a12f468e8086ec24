use mhrate::distortion::{DrParams, StreamProfile};
use mhrate::policy::FixedRate;
use mhrate::sim::{run, BackgroundModel, MeasurementMode, NetworkSetup, RunOutput, SimConfig, StreamSetup};
use mhrate::traces::TraceSeries;
use proptest::prelude::*;

const RTT: f64 = 0.05;

fn link(capacity: f64, load: f64) -> NetworkSetup {
    NetworkSetup {
        name: "link".into(),
        trace: TraceSeries::constant(capacity, RTT),
        background_load: load,
    }
}

fn fixed(id: usize, rates: Vec<f64>, deadline: f64) -> StreamSetup {
    let dr = DrParams {
        d0: 1.0,
        theta: 1e8,
        r0: 5e4,
        kappa: 100.0,
    };
    let total: f64 = rates.iter().sum();
    StreamSetup {
        profile: StreamProfile::new(id, format!("v{id}"), dr, deadline, total.min(1e5)).unwrap(),
        policy: Box::new(FixedRate::new(rates)),
    }
}

fn config(duration: f64) -> SimConfig {
    SimConfig {
        duration,
        background_model: BackgroundModel::Poisson,
        ..Default::default()
    }
}

fn mean_queueing(out: &RunOutput) -> f64 {
    let d: Vec<f64> = out
        .packets
        .iter()
        .filter_map(|p| p.arrival.map(|a| a - p.send - RTT / 2.0))
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

#[test]
fn empty_run() {
    let out = run(&config(20.0), &[link(10e6, 0.0)], vec![]).unwrap();
    assert_eq!(out.epochs.len(), 10);
    assert!(out.epochs.iter().all(|e| e.utilization == vec![0.0]));
    assert!(out.packets.is_empty() && out.gops.is_empty());
    assert_eq!(out.background_bits, vec![0.0]);
}

#[test]
fn uncongested_limit() {
    let cfg = SimConfig {
        record_packets: true,
        ..config(60.0)
    };
    let out = run(&cfg, &[link(100e6, 0.0)], vec![fixed(0, vec![1e6], 1.0)]).unwrap();
    let t = out.totals[0];
    assert!(t.sent > 4000);
    assert_eq!(t.late + t.dropped, 0);
    let service = 1500.0 * 8.0 / 100e6;
    let delay = t.mean_delay().unwrap();
    assert!((delay - (RTT / 2.0 + service)).abs() < 1e-9, "{delay}");
}

#[test]
fn queueing_delay_follows_alpha_over_residual() {
    let capacity = 10e6;
    let video = 1e6;
    let cfg = SimConfig {
        duration: 600.0,
        record_packets: true,
        ..config(600.0)
    };
    let delay_at = |total: f64| {
        let out = run(&cfg, &[link(capacity, total - video / capacity)], vec![fixed(0, vec![video], 10.0)]).unwrap();
        mean_queueing(&out)
    };
    let alpha = delay_at(0.7) * capacity * 0.3;
    for total in [0.5, 0.9] {
        let predicted = alpha / (capacity * (1.0 - total));
        let measured = delay_at(total);
        let err = (measured - predicted).abs() / predicted;
        assert!(err < 0.25, "load {total}: measured {measured}, predicted {predicted}");
    }
}

#[test]
fn measurement_examples() {
    let capacity = 10e6;
    let cfg = SimConfig {
        stagger: false,
        ..config(40.0)
    };
    let idle = run(&cfg, &[link(1e9, 0.0)], vec![fixed(0, vec![1e6], 1.0)]).unwrap();
    for m in idle.measurements.iter().skip(1) {
        assert!((m.abr - 1e9).abs() < 1.0);
        assert!((m.rtt - RTT).abs() < 1e-4, "{}", m.rtt);
    }
    let shared = run(
        &cfg,
        &[link(capacity, 0.0)],
        vec![fixed(0, vec![1e6], 1.0), fixed(1, vec![capacity / 2.0], 1.0)],
    )
    .unwrap();
    for m in shared.measurements.iter().filter(|m| m.stream == 0).skip(1) {
        assert!((m.abr - capacity / 2.0).abs() / (capacity / 2.0) < 0.02, "{}", m.abr);
    }
}

#[test]
fn residual_identity_under_noiseless_measurement() {
    let capacity = 10e6;
    let load = 0.3;
    let rates = [2e6, 3e6];
    let residual = capacity * (1.0 - load) - rates.iter().sum::<f64>();
    for mode in [MeasurementMode::Observed, MeasurementMode::Ideal] {
        let cfg = SimConfig {
            measurement: mode,
            ..config(202.0)
        };
        let streams = vec![fixed(0, vec![rates[0]], 1.0), fixed(1, vec![rates[1]], 1.0)];
        let out = run(&cfg, &[link(capacity, load)], streams).unwrap();
        for s in 0..2 {
            let e: Vec<f64> = out
                .measurements
                .iter()
                .filter(|m| m.stream == s)
                .skip(1)
                .map(|m| m.abr - m.rate)
                .collect();
            assert!(e.len() >= 99);
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            assert!((mean - residual).abs() / residual < 0.05, "{mode:?} stream {s}: {mean}");
        }
    }
}

#[test]
fn fifo_per_network() {
    let cfg = SimConfig {
        record_packets: true,
        ..config(60.0)
    };
    let nets = [link(10e6, 0.5), link(5e6, 0.3)];
    let streams = vec![fixed(0, vec![2e6, 1e6], 1.0), fixed(1, vec![1.5e6, 2e6], 1.0)];
    let out = run(&cfg, &nets, streams).unwrap();
    for n in 0..2 {
        let mut pkts: Vec<_> = out.packets.iter().filter(|p| p.network == n && p.arrival.is_some()).collect();
        assert!(pkts.len() > 1000);
        pkts.sort_by(|a, b| a.send.total_cmp(&b.send));
        assert!(pkts.windows(2).all(|w| w[0].arrival.unwrap() <= w[1].arrival.unwrap()));
    }
}

#[test]
fn late_flag_matches_deadline() {
    let cfg = SimConfig {
        record_packets: true,
        ..config(60.0)
    };
    let out = run(&cfg, &[link(10e6, 0.6)], vec![fixed(0, vec![3.5e6], 0.03)]).unwrap();
    let late = out.packets.iter().filter(|p| p.late).count() as u64;
    assert!(late > 0);
    assert_eq!(late, out.totals[0].late);
    for p in &out.packets {
        let a = p.arrival.unwrap();
        assert_eq!(p.late, a - p.send > p.deadline);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_determinism(
        seed in 0u64..1000,
        load in 0.0f64..0.6,
        r0 in 1e5f64..4e6,
        r1 in 1e5f64..4e6,
        random_loss in prop_oneof![Just(0.0), 0.0f64..0.05],
        on_off in any::<bool>(),
    ) {
        let cfg = SimConfig {
            seed,
            random_loss_rate: random_loss,
            background_model: if on_off { BackgroundModel::OnOff } else { BackgroundModel::Poisson },
            ..config(20.0)
        };
        let build = || vec![fixed(0, vec![r0, r1 / 2.0], 0.2), fixed(1, vec![r1, r0 / 2.0], 0.2)];
        let nets = [link(8e6, load), link(6e6, load / 2.0)];
        let a = run(&cfg, &nets, build()).unwrap();
        let b = run(&cfg, &nets, build()).unwrap();
        for t in &a.totals {
            prop_assert_eq!(t.sent, t.arrived + t.in_flight + t.dropped);
            if random_loss == 0.0 {
                prop_assert_eq!(t.dropped, 0);
            }
        }
        prop_assert_eq!(&a.totals, &b.totals);
        prop_assert_eq!(&a.epochs, &b.epochs);
        prop_assert_eq!(&a.gops, &b.gops);
    }
}
