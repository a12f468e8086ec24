//! Analytic network quantities shared by every allocation policy.
//!
//! Rates are in bit/s, times in seconds, and the delay coefficient
//! `alpha` in bits (rate times time). Conversion to kbit/s and ms only
//! happens at file boundaries.

use crate::error::{ModelError, ModelResult};

/// Static description of one access network as seen by the models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    pub id: usize,
    /// Available bit rate `c_n` (bit/s).
    pub capacity: f64,
    /// Round-trip time `tau_n` (s).
    pub rtt: f64,
    /// Delay coefficient `alpha_n` (bit).
    pub alpha: f64,
}

impl NetworkParams {
    pub fn new(id: usize, capacity: f64, rtt: f64, alpha: f64) -> ModelResult<Self> {
        if !(capacity > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "network {id}: capacity must be positive, got {capacity}"
            )));
        }
        if !(rtt > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "network {id}: rtt must be positive, got {rtt}"
            )));
        }
        if !(alpha >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "network {id}: alpha must be non-negative, got {alpha}"
            )));
        }
        Ok(Self {
            id,
            capacity,
            rtt,
            alpha,
        })
    }
}

/// What one stream's measurement agent reports for one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub network: usize,
    pub epoch_index: usize,
    /// Per-stream available bit rate `c^s_n` (bit/s).
    pub abr: f64,
    /// Round-trip time `tau_n` (s).
    pub rtt: f64,
}

/// Rate of each stream on each network, `r^s_n`, stored row-major by stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    streams: usize,
    networks: usize,
    rates: Vec<f64>,
}

impl AllocationMatrix {
    pub fn zeros(streams: usize, networks: usize) -> Self {
        Self {
            streams,
            networks,
            rates: vec![0.0; streams * networks],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> ModelResult<Self> {
        let networks = rows.first().map_or(0, Vec::len);
        let mut rates = Vec::with_capacity(rows.len() * networks);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != networks {
                return Err(ModelError::Dimension(format!(
                    "row {s} has {} entries, expected {networks}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|r| !(**r >= 0.0)) {
                return Err(ModelError::InvalidParameter(format!(
                    "row {s} holds negative or NaN rate {bad}"
                )));
            }
            rates.extend_from_slice(row);
        }
        Ok(Self {
            streams: rows.len(),
            networks,
            rates,
        })
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn networks(&self) -> usize {
        self.networks
    }

    pub fn get(&self, stream: usize, network: usize) -> f64 {
        self.rates[stream * self.networks + network]
    }

    pub fn set(&mut self, stream: usize, network: usize, rate: f64) {
        assert!(rate >= 0.0, "allocation entries must be non-negative");
        self.rates[stream * self.networks + network] = rate;
    }

    pub fn row(&self, stream: usize) -> &[f64] {
        &self.rates[stream * self.networks..(stream + 1) * self.networks]
    }

    pub fn set_row(&mut self, stream: usize, row: &[f64]) {
        assert_eq!(row.len(), self.networks);
        for (n, r) in row.iter().enumerate() {
            self.set(stream, n, *r);
        }
    }

    /// Total rate of one stream, `r^s`.
    pub fn stream_total(&self, stream: usize) -> f64 {
        self.row(stream).iter().sum()
    }

    /// Total rate carried by one network, `r_n`.
    pub fn network_total(&self, network: usize) -> f64 {
        (0..self.streams).map(|s| self.get(s, network)).sum()
    }

    /// Available bandwidth of `network` as seen by `stream`: capacity minus
    /// every other stream's rate there.
    pub fn abr_for(&self, stream: usize, network: usize, capacity: f64) -> f64 {
        let others: Vec<f64> = (0..self.streams)
            .filter(|&s| s != stream)
            .map(|s| self.get(s, network))
            .collect();
        per_stream_abr(capacity, &others)
    }

    /// True when every network carries strictly less than its capacity.
    pub fn is_feasible(&self, capacities: &[f64]) -> bool {
        capacities.len() == self.networks
            && (0..self.networks).all(|n| self.network_total(n) < capacities[n])
    }
}

/// `e_n = c_n - r_n`; negative values are passed through.
pub fn residual_bandwidth(capacity: f64, total_rate: f64) -> f64 {
    capacity - total_rate
}

/// `c^s_n = c_n - sum of the other streams' rates on n`.
pub fn per_stream_abr(capacity: f64, rates_other_streams: &[f64]) -> f64 {
    capacity - rates_other_streams.iter().sum::<f64>()
}

/// Mean one-way delay `t_n = alpha_n / e_n`.
pub fn expected_delay(alpha: f64, residual: f64) -> ModelResult<f64> {
    if residual > 0.0 {
        Ok(alpha / residual)
    } else {
        Err(ModelError::NonPositiveResidual(residual))
    }
}

/// `alpha_n = e_n * tau_n / 2`, assuming the round trip splits evenly.
pub fn estimate_alpha(residual: f64, rtt: f64) -> f64 {
    residual * rtt / 2.0
}

/// Fraction of packets later than `deadline` when delays are exponential
/// with mean `mean_delay`. A non-positive mean means no queueing at all.
pub fn late_loss_probability(deadline: f64, mean_delay: f64) -> f64 {
    if mean_delay <= 0.0 {
        0.0
    } else {
        (-deadline / mean_delay).exp()
    }
}

/// Late-loss probability of one stream averaged over its networks with
/// weights `rho`. Each network contributes `exp(-t0 (c^s_n - r^s_n) / alpha_n)`.
pub fn stream_loss(
    rho: &[f64],
    deadline: f64,
    alphas: &[f64],
    abrs: &[f64],
    rates: &[f64],
) -> ModelResult<f64> {
    let n = rho.len();
    if alphas.len() != n || abrs.len() != n || rates.len() != n {
        return Err(ModelError::Dimension(format!(
            "stream_loss expects {n} entries per vector"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let residual = abrs[i] - rates[i];
        if residual <= 0.0 {
            return Err(ModelError::InfeasibleRate {
                network: i,
                rate: rates[i],
                abr: abrs[i],
            });
        }
        total += rho[i] * late_loss_term(deadline, residual, alphas[i]);
    }
    Ok(total)
}

/// `exp(-t0 * e / alpha)`, with `alpha == 0` read as a delay-free network.
pub(crate) fn late_loss_term(deadline: f64, residual: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else {
        (-deadline * residual / alpha).exp()
    }
}

/// Smoothed `alpha_n` tracker.
///
/// Each epoch contributes `e * tau / 2`; estimates are blended with an
/// exponentially weighted average. A sample taken at a non-positive
/// residual is ignored and the previous estimate is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimator {
    smoothing: f64,
    value: Option<f64>,
}

impl AlphaEstimator {
    /// `smoothing` is the weight kept on the previous estimate, in `[0, 1)`.
    pub fn new(smoothing: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&smoothing),
            "alpha smoothing must lie in [0, 1)"
        );
        Self {
            smoothing,
            value: None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn update(&mut self, residual: f64, rtt: f64) -> Option<f64> {
        if residual > 0.0 && rtt > 0.0 {
            let sample = estimate_alpha(residual, rtt);
            self.value = Some(match self.value {
                Some(prev) => self.smoothing * prev + (1.0 - self.smoothing) * sample,
                None => sample,
            });
        }
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn residual_examples() {
        assert_eq!(residual_bandwidth(10e6, 4e6), 6e6);
        assert_eq!(residual_bandwidth(10e6, 0.0), 10e6);
        assert_eq!(residual_bandwidth(10e6, 12e6), -2e6);
    }

    #[test]
    fn per_stream_abr_examples() {
        assert_eq!(per_stream_abr(10e6, &[3e6, 2e6]), 5e6);
        assert_eq!(per_stream_abr(10e6, &[]), 10e6);
        // e_n = c^s_n - r^s_n once this stream's 1e6 is added to the load
        let cs = per_stream_abr(10e6, &[3e6, 2e6]);
        assert_eq!(cs - 1e6, residual_bandwidth(10e6, 6e6));
    }

    #[test]
    fn delay_examples() {
        assert_relative_eq!(expected_delay(0.06e6, 6e6).unwrap(), 0.01, max_relative = 1e-12);
        let x = 0.06e6;
        assert_relative_eq!(expected_delay(x, 2.0 * x).unwrap(), 0.5, max_relative = 1e-12);
        assert!(expected_delay(x, 1e300).unwrap() < 1e-290);
        assert_eq!(
            expected_delay(1.0, 0.0),
            Err(ModelError::NonPositiveResidual(0.0))
        );
        assert!(expected_delay(1.0, -5.0).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(estimate_alpha(6e6, 0.020), 60000.0, max_relative = 1e-12);
        assert_eq!(estimate_alpha(0.0, 0.020), 0.0);
        let a = estimate_alpha(3e6, 0.1);
        assert_relative_eq!(expected_delay(a, 3e6).unwrap(), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn late_loss_examples() {
        assert_relative_eq!(late_loss_probability(0.3, 0.1), (-3.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(late_loss_probability(0.3, 0.1), 0.049787, max_relative = 1e-5);
        assert!(late_loss_probability(0.3, 1e-6) < 1e-100);
        assert!(late_loss_probability(1e-9, 0.1) > 0.99999);
        assert_eq!(late_loss_probability(0.3, 0.0), 0.0);
        assert_eq!(late_loss_probability(0.3, -1.0), 0.0);
    }

    #[test]
    fn stream_loss_examples() {
        let single = stream_loss(&[1.0], 0.3, &[0.06e6], &[7e6], &[1e6]).unwrap();
        assert_relative_eq!(single, (-30.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(single, 9.36e-14, max_relative = 1e-3);
        let twin = stream_loss(&[0.5, 0.5], 0.3, &[0.06e6; 2], &[7e6; 2], &[1e6; 2]).unwrap();
        assert_relative_eq!(twin, single, max_relative = 1e-12);

        // heterogeneous alphas, checked against a scalar evaluation
        let rho = [0.6, 0.4];
        let alphas = [0.05e6, 0.2e6];
        let abrs = [6e6, 4e6];
        let rates = [3e6, 2e6];
        let got = stream_loss(&rho, 0.3, &alphas, &abrs, &rates).unwrap();
        let want = 0.6 * (-0.3f64 * 3e6 / 0.05e6).exp() + 0.4 * (-0.3f64 * 2e6 / 0.2e6).exp();
        assert_relative_eq!(got, want, max_relative = 1e-12);

        assert!(matches!(
            stream_loss(&[1.0], 0.3, &[1.0], &[1e6], &[1e6]),
            Err(ModelError::InfeasibleRate { network: 0, .. })
        ));
    }

    #[test]
    fn alpha_estimator_holds_on_congestion() {
        let mut est = AlphaEstimator::new(0.5);
        assert_eq!(est.update(-1e6, 0.05), None);
        assert_eq!(est.update(2e6, 0.04), Some(40000.0));
        assert_eq!(est.update(0.0, 0.04), Some(40000.0));
        assert_eq!(est.update(4e6, 0.04), Some(60000.0));
    }

    #[test]
    fn allocation_aggregates() {
        let m = AllocationMatrix::from_rows(&[vec![1e6, 2e6], vec![3e6, 4e6]]).unwrap();
        assert_eq!(m.stream_total(1), 7e6);
        assert_eq!(m.network_total(0), 4e6);
        assert!(m.is_feasible(&[5e6, 7e6]));
        assert!(!m.is_feasible(&[4e6, 7e6]));
        assert!(AllocationMatrix::from_rows(&[vec![-1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn residual_identity_holds(
            cap in 1e5f64..1e8,
            rows in prop::collection::vec(prop::collection::vec(0.0f64..2e7, 3), 1..5),
            s_pick in 0usize..5,
        ) {
            let m = AllocationMatrix::from_rows(&rows).unwrap();
            let s = s_pick % m.streams();
            for n in 0..m.networks() {
                let e = residual_bandwidth(cap, m.network_total(n));
                let via_stream = m.abr_for(s, n, cap) - m.get(s, n);
                prop_assert!((e - via_stream).abs() <= 1e-9 * cap.max(e.abs()));
            }
        }

        #[test]
        fn delay_convex_decreasing(alpha in 1.0f64..1e6, e1 in 1e3f64..1e8, e2 in 1e3f64..1e8, lam in 0.0f64..1.0) {
            let d = |e: f64| expected_delay(alpha, e).unwrap();
            if e1 < e2 { prop_assert!(d(e1) > d(e2)); }
            let mid = lam * e1 + (1.0 - lam) * e2;
            prop_assert!(d(mid) <= lam * d(e1) + (1.0 - lam) * d(e2) + 1e-12 * d(e1.min(e2)));
        }

        #[test]
        fn late_loss_bounded_monotone(t0 in 1e-3f64..10.0, t in 1e-4f64..10.0, k in 1.01f64..3.0) {
            let p = late_loss_probability(t0, t);
            prop_assert!((0.0..1.0).contains(&p));
            prop_assert!(late_loss_probability(t0, t * k) >= p);
            prop_assert!(late_loss_probability(t0 * k, t) <= p);
        }

        #[test]
        fn alpha_round_trip(e in 1e3f64..1e8, tau in 1e-3f64..2.0) {
            let t = expected_delay(estimate_alpha(e, tau), e).unwrap();
            prop_assert!((t - tau / 2.0).abs() <= 1e-12 * tau);
        }
    }
}
