//! Background traffic generators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::traces::TraceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundModel {
    /// Exponential on/off periods, sending at twice the average rate while on.
    #[default]
    OnOff,
    /// Poisson packet arrivals at the average rate.
    Poisson,
}

/// Packet source whose long-run rate is `load * capacity(t)`.
#[derive(Debug, Clone)]
pub struct BackgroundSource {
    model: BackgroundModel,
    load: f64,
    packet_bits: f64,
    period: Exp<f64>,
    on: bool,
    switch_at: f64,
    next: f64,
    rng: ChaCha8Rng,
}

impl BackgroundSource {
    /// `mean_period` is the mean length of both on and off periods (s).
    pub fn new(
        model: BackgroundModel,
        load: f64,
        packet_bits: f64,
        mean_period: f64,
        mut rng: ChaCha8Rng,
    ) -> Self {
        let period = Exp::new(1.0 / mean_period).expect("positive period");
        let on = rng.random_bool(0.5);
        let switch_at = period.sample(&mut rng);
        Self {
            model,
            load,
            packet_bits,
            period,
            on,
            switch_at,
            next: 0.0,
            rng,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.load <= 0.0
    }

    /// Emission time of the next packet; successive calls are non-decreasing.
    pub fn next_packet(&mut self, trace: &TraceSeries) -> Option<f64> {
        if self.is_idle() {
            return None;
        }
        match self.model {
            BackgroundModel::Poisson => {
                let t = self.next;
                let rate = self.load * trace.at(t).abr / self.packet_bits;
                self.next = t + Exp::new(rate).expect("positive rate").sample(&mut self.rng);
                Some(self.next)
            }
            BackgroundModel::OnOff => loop {
                if self.on {
                    if self.next <= self.switch_at {
                        let t = self.next;
                        self.next = t + self.packet_bits / (2.0 * self.load * trace.at(t).abr);
                        return Some(t);
                    }
                    self.on = false;
                    self.switch_at += self.period.sample(&mut self.rng);
                } else {
                    self.on = true;
                    self.next = self.switch_at;
                    self.switch_at += self.period.sample(&mut self.rng);
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn realized_load(model: BackgroundModel, load: f64, seed: u64) -> f64 {
        let trace = TraceSeries::constant(10e6, 0.02);
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut src = BackgroundSource::new(model, load, 12_000.0, 0.1, rng);
        let horizon = 600.0;
        let mut bits = 0.0;
        while let Some(t) = src.next_packet(&trace) {
            if t >= horizon {
                break;
            }
            bits += 12_000.0;
        }
        bits / horizon / 10e6
    }

    #[test]
    fn zero_load_is_empty() {
        let trace = TraceSeries::constant(10e6, 0.02);
        let mut src = BackgroundSource::new(BackgroundModel::OnOff, 0.0, 12_000.0, 0.1, ChaCha8Rng::seed_from_u64(1));
        assert_eq!(src.next_packet(&trace), None);
    }

    #[test]
    fn long_run_load_matches_target() {
        for seed in 0..5 {
            for model in [BackgroundModel::OnOff, BackgroundModel::Poisson] {
                let l = realized_load(model, 0.2, seed);
                assert!((0.18..=0.22).contains(&l), "{model:?} seed {seed}: {l}");
            }
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let trace = TraceSeries::constant(10e6, 0.02);
        let run = |seed| {
            let mut src =
                BackgroundSource::new(BackgroundModel::OnOff, 0.3, 12_000.0, 0.1, ChaCha8Rng::seed_from_u64(seed));
            (0..1000).map(|_| src.next_packet(&trace).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn emission_times_non_decreasing() {
        let trace = TraceSeries::constant(10e6, 0.02);
        let mut src =
            BackgroundSource::new(BackgroundModel::OnOff, 0.5, 12_000.0, 0.1, ChaCha8Rng::seed_from_u64(2));
        let mut last = 0.0;
        for _ in 0..10_000 {
            let t = src.next_packet(&trace).unwrap();
            assert!(t >= last);
            last = t;
        }
    }
}
