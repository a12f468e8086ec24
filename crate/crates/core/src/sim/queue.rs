//! Unbounded FIFO link served at the traced capacity.

use crate::traces::TraceSeries;

#[derive(Debug, Clone)]
pub struct LinkQueue {
    trace: TraceSeries,
    busy_until: f64,
    last_arrival: f64,
    cursor: usize,
}

/// Where a packet ends up after entering the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transit {
    /// Time the last bit leaves the queue.
    pub departure: f64,
    /// Time the packet reaches the receiver.
    pub arrival: f64,
}

impl LinkQueue {
    pub fn new(trace: TraceSeries) -> Self {
        Self {
            trace,
            busy_until: f64::NEG_INFINITY,
            last_arrival: f64::NEG_INFINITY,
            cursor: 0,
        }
    }

    pub fn trace(&self) -> &TraceSeries {
        &self.trace
    }

    /// Backlog in seconds of service at time `t`.
    pub fn backlog(&self, t: f64) -> f64 {
        (self.busy_until - t).max(0.0)
    }

    /// Enqueues `bits` at time `now`. Calls must come in time order.
    pub fn admit(&mut self, now: f64, bits: f64) -> Transit {
        let start = now.max(self.busy_until);
        let departure = self.serve(start, bits);
        self.busy_until = departure;
        let prop = self.trace.at(now).rtt / 2.0;
        let arrival = (departure + prop).max(self.last_arrival);
        self.last_arrival = arrival;
        Transit { departure, arrival }
    }

    fn serve(&mut self, start: f64, mut bits: f64) -> f64 {
        let samples = self.trace.samples();
        while self.cursor + 1 < samples.len() && samples[self.cursor + 1].t <= start {
            self.cursor += 1;
        }
        let mut t = start;
        let mut i = self.cursor;
        loop {
            let cap = samples[i].abr;
            let need = bits / cap;
            match samples.get(i + 1) {
                Some(next) if t + need > next.t => {
                    bits -= cap * (next.t - t);
                    t = next.t;
                    i += 1;
                }
                _ => return t + need,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::TraceSample;

    #[test]
    fn serves_at_constant_rate() {
        let mut q = LinkQueue::new(TraceSeries::constant(1e6, 0.02));
        let a = q.admit(0.0, 12_000.0);
        assert!((a.departure - 0.012).abs() < 1e-12);
        assert!((a.arrival - 0.022).abs() < 1e-12);
        let b = q.admit(0.001, 12_000.0);
        assert!((b.departure - 0.024).abs() < 1e-12);
        assert!((q.backlog(0.01) - 0.014).abs() < 1e-12);
    }

    #[test]
    fn service_spans_capacity_change() {
        let trace = TraceSeries::new(vec![
            TraceSample { t: 0.0, abr: 1e6, rtt: 0.0 + 1e-9 },
            TraceSample { t: 1.0, abr: 2e6, rtt: 1e-9 },
        ])
        .unwrap();
        let mut q = LinkQueue::new(trace);
        let a = q.admit(0.5, 1.5e6);
        // 0.5 Mbit by t=1, remaining 1 Mbit at 2 Mbit/s
        assert!((a.departure - 1.5).abs() < 1e-12);
    }

    #[test]
    fn arrivals_stay_in_order_when_delay_drops() {
        let trace = TraceSeries::new(vec![
            TraceSample { t: 0.0, abr: 1e9, rtt: 0.2 },
            TraceSample { t: 1.0, abr: 1e9, rtt: 0.02 },
        ])
        .unwrap();
        let mut q = LinkQueue::new(trace);
        let a = q.admit(0.99, 1000.0);
        let b = q.admit(1.0, 1000.0);
        assert!(b.arrival >= a.arrival);
    }
}
