//! Media-aware allocation.
//!
//! Each stream minimizes its own encoder distortion plus a congestion
//! penalty `kappa' * sum_n rho_n exp(-t0 (c^s_n - rho_n r) / alpha_n)` over
//! its total rate `r`, then splits `r` across networks by `rho_n`, the
//! share of its observed available bandwidth on each network. The
//! centralized program and the per-stream alternating objective are kept
//! here as references for the distributed scheme.

use serde::{Deserialize, Serialize};

use crate::distortion::{encoder_distortion, DrParams, StreamProfile};
use crate::error::{ModelError, ModelResult};
use crate::net_model::{late_loss_term, AlphaEstimator, AllocationMatrix};
use crate::optimize::golden_section_min;

use super::{check_len, PolicyInput, RatePolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediaPolicyParams {
    /// Aggressiveness weight `kappa'` (MSE).
    pub kappa_prime: f64,
    /// Termination width of the rate search (bit/s).
    pub search_tol: f64,
    /// Weight kept on the previous `alpha_n` estimate.
    pub alpha_smoothing: f64,
    /// Fraction of the feasible upper bound kept clear of the pole.
    pub upper_margin: f64,
}

impl Default for MediaPolicyParams {
    fn default() -> Self {
        Self {
            kappa_prime: 300.0,
            search_tol: 1e3,
            alpha_smoothing: 0.5,
            upper_margin: 0.02,
        }
    }
}

impl MediaPolicyParams {
    pub fn validate(&self) -> ModelResult<()> {
        if !(self.kappa_prime > 0.0) {
            return Err(ModelError::InvalidParameter("kappa_prime must be positive".into()));
        }
        if !(self.search_tol > 0.0) {
            return Err(ModelError::InvalidParameter("search_tol must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.alpha_smoothing) {
            return Err(ModelError::InvalidParameter(
                "alpha_smoothing must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.upper_margin) {
            return Err(ModelError::InvalidParameter("upper_margin must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `rho_n = c^s_n / sum c^s_n`.
pub fn compute_rho(abrs: &[f64]) -> ModelResult<Vec<f64>> {
    if abrs.iter().any(|c| !(*c >= 0.0)) {
        return Err(ModelError::InvalidParameter(
            "available bit rates must be non-negative".into(),
        ));
    }
    let total: f64 = abrs.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::AllZeroAbr);
    }
    Ok(abrs.iter().map(|c| c / total).collect())
}

/// Upper end of the open feasible interval, `min_n c^s_n / rho_n`.
pub fn feasible_upper(rho: &[f64], abrs: &[f64]) -> f64 {
    rho.iter()
        .zip(abrs)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, c)| c / r)
        .fold(f64::INFINITY, f64::min)
}

/// Inputs of the simplified per-stream problem.
#[derive(Debug, Clone, Copy)]
pub struct DistributedProblem<'a> {
    pub dr: &'a DrParams,
    pub kappa_prime: f64,
    pub deadline: f64,
    pub rho: &'a [f64],
    pub abrs: &'a [f64],
    pub alphas: &'a [f64],
}

impl DistributedProblem<'_> {
    fn check(&self) -> ModelResult<()> {
        check_len("abrs", self.abrs.len(), self.rho.len())?;
        check_len("alphas", self.alphas.len(), self.rho.len())
    }

    fn congestion(&self, r_total: f64) -> f64 {
        self.rho
            .iter()
            .zip(self.abrs)
            .zip(self.alphas)
            .map(|((rho, c), alpha)| rho * late_loss_term(self.deadline, c - rho * r_total, *alpha))
            .sum()
    }

    /// Objective without feasibility checks; used inside the search.
    fn eval_unchecked(&self, r_total: f64) -> f64 {
        self.dr.d0 + self.dr.theta / (r_total - self.dr.r0) + self.kappa_prime * self.congestion(r_total)
    }
}

/// `d^s(r) + kappa' sum_n rho_n exp(-t0 (c^s_n - rho_n r) / alpha_n)`.
pub fn distributed_objective(problem: &DistributedProblem<'_>, r_total: f64) -> ModelResult<f64> {
    problem.check()?;
    let upper = feasible_upper(problem.rho, problem.abrs);
    if !(r_total < upper) {
        let n = problem
            .rho
            .iter()
            .zip(problem.abrs)
            .position(|(rho, c)| rho * r_total >= *c)
            .unwrap_or(0);
        return Err(ModelError::InfeasibleRate {
            network: n,
            rate: problem.rho[n] * r_total,
            abr: problem.abrs[n],
        });
    }
    let d = encoder_distortion(problem.dr, r_total)?;
    Ok(d + problem.kappa_prime * problem.congestion(r_total))
}

/// Search interval `[max(r_min, r0), (1 - margin) * upper]`.
pub fn search_interval(
    problem: &DistributedProblem<'_>,
    min_rate: f64,
    upper_margin: f64,
) -> ModelResult<(f64, f64)> {
    problem.check()?;
    let upper = (1.0 - upper_margin) * feasible_upper(problem.rho, problem.abrs);
    let lower = min_rate.max(problem.dr.r0);
    if !(upper > lower) {
        return Err(ModelError::EmptyFeasibleRegion {
            upper,
            min_rate: lower,
        });
    }
    Ok((lower, upper))
}

/// Golden-section minimizer of [`distributed_objective`].
pub fn minimize_distributed(
    problem: &DistributedProblem<'_>,
    min_rate: f64,
    params: &MediaPolicyParams,
) -> ModelResult<f64> {
    let (lo, hi) = search_interval(problem, min_rate, params.upper_margin)?;
    // r0 < lo is guaranteed by profile validation (r_min > r0); nudge anyway.
    let lo_eval = if lo > problem.dr.r0 { lo } else { problem.dr.r0 + params.search_tol };
    Ok(golden_section_min(
        |r| problem.eval_unchecked(r),
        lo_eval,
        hi.max(lo_eval),
        params.search_tol,
    ))
}

/// One competing stream as seen by the alternating objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtherStream {
    pub kappa: f64,
    pub deadline: f64,
}

/// Stream `s`'s share of the total distortion with every other stream's late
/// loss on the shared networks charged to it.
pub fn alternating_objective(
    dr: &DrParams,
    deadline: f64,
    others: &[OtherStream],
    rho: &[f64],
    abrs: &[f64],
    alphas: &[f64],
    r_total: f64,
) -> ModelResult<f64> {
    let own = DistributedProblem {
        dr,
        kappa_prime: dr.kappa,
        deadline,
        rho,
        abrs,
        alphas,
    };
    let mut value = distributed_objective(&own, r_total)?;
    for other in others {
        let view = DistributedProblem {
            kappa_prime: other.kappa,
            deadline: other.deadline,
            ..own
        };
        value += other.kappa * view.congestion(r_total);
    }
    Ok(value)
}

/// Golden-section minimizer of [`alternating_objective`].
pub fn minimize_alternating(
    dr: &DrParams,
    deadline: f64,
    others: &[OtherStream],
    rho: &[f64],
    abrs: &[f64],
    alphas: &[f64],
    min_rate: f64,
    params: &MediaPolicyParams,
) -> ModelResult<f64> {
    let probe = DistributedProblem {
        dr,
        kappa_prime: dr.kappa,
        deadline,
        rho,
        abrs,
        alphas,
    };
    let (lo, hi) = search_interval(&probe, min_rate, params.upper_margin)?;
    let f = |r: f64| {
        let mut v = probe.eval_unchecked(r);
        for o in others {
            let view = DistributedProblem {
                kappa_prime: o.kappa,
                deadline: o.deadline,
                ..probe
            };
            v += o.kappa * view.congestion(r);
        }
        v
    };
    Ok(golden_section_min(f, lo, hi, params.search_tol))
}

/// Media-aware policy state for one stream.
#[derive(Debug, Clone)]
pub struct MediaPolicy {
    params: MediaPolicyParams,
    deadline: f64,
    min_rate: f64,
    alphas: Vec<AlphaEstimator>,
    rates: Vec<f64>,
    rho: Vec<f64>,
    flagged: bool,
}

impl MediaPolicy {
    pub fn new(params: MediaPolicyParams, profile: &StreamProfile) -> ModelResult<Self> {
        params.validate()?;
        Ok(Self {
            params,
            deadline: profile.deadline,
            min_rate: profile.min_rate,
            alphas: Vec::new(),
            rates: Vec::new(),
            rho: Vec::new(),
            flagged: false,
        })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn alpha_estimates(&self) -> Vec<Option<f64>> {
        self.alphas.iter().map(AlphaEstimator::value).collect()
    }

    fn ensure_networks(&mut self, n: usize) {
        if self.alphas.len() != n {
            self.alphas = vec![AlphaEstimator::new(self.params.alpha_smoothing); n];
        }
        if self.rates.len() != n {
            self.rates = vec![0.0; n];
        }
    }

    fn try_allocate(&mut self, input: &PolicyInput<'_>) -> ModelResult<Vec<f64>> {
        let obs = input.observations;
        let abrs: Vec<f64> = obs.iter().map(|o| o.abr.max(0.0)).collect();
        let mut alphas = Vec::with_capacity(obs.len());
        for (n, o) in obs.iter().enumerate() {
            let residual = o.abr - self.rates[n];
            let alpha = match self.alphas[n].update(residual, o.rtt) {
                Some(a) => a,
                // never seen a positive residual: treat the whole ABR as residual
                None => abrs[n] * o.rtt / 2.0,
            };
            alphas.push(alpha);
        }
        let rho = compute_rho(&abrs)?;
        let problem = DistributedProblem {
            dr: input.dr,
            kappa_prime: self.params.kappa_prime,
            deadline: self.deadline,
            rho: &rho,
            abrs: &abrs,
            alphas: &alphas,
        };
        let total = minimize_distributed(&problem, self.min_rate, &self.params)?;
        let rates = rho.iter().map(|p| p * total).collect();
        self.rho = rho;
        Ok(rates)
    }
}

impl RatePolicy for MediaPolicy {
    fn name(&self) -> &'static str {
        "media-aware"
    }

    fn initial_rates(&mut self, abr_hint: &[f64]) -> Vec<f64> {
        self.ensure_networks(abr_hint.len());
        self.rates = super::split_proportional(self.min_rate, abr_hint);
        self.rates.clone()
    }

    fn allocate(&mut self, input: &PolicyInput<'_>) -> Vec<f64> {
        self.ensure_networks(input.observations.len());
        match self.try_allocate(input) {
            Ok(rates) => {
                self.flagged = false;
                self.rates = rates;
            }
            Err(_) => self.flagged = true,
        }
        self.rates.clone()
    }

    fn flagged(&self) -> bool {
        self.flagged
    }
}

/// Static multi-stream instance used to compare the distributed scheme with
/// the centralized program.
#[derive(Debug, Clone)]
pub struct StaticInstance {
    pub profiles: Vec<StreamProfile>,
    /// Available bit rate of each network (bit/s).
    pub capacities: Vec<f64>,
    /// Fixed delay coefficient of each network (bit).
    pub alphas: Vec<f64>,
}

/// Result of the round-robin best-response iteration.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub allocation: AllocationMatrix,
    pub rounds: usize,
    pub converged: bool,
}

/// Round-robin best responses of the distributed scheme on a static
/// instance. Converged once a full round moves no stream by more than
/// `change_tol` (bit/s).
pub fn distributed_fixed_point(
    instance: &StaticInstance,
    params: &MediaPolicyParams,
    initial: &AllocationMatrix,
    change_tol: f64,
    max_rounds: usize,
) -> ModelResult<FixedPoint> {
    let n_nets = instance.capacities.len();
    check_len("alphas", instance.alphas.len(), n_nets)?;
    let mut alloc = initial.clone();
    for round in 1..=max_rounds {
        let mut max_change: f64 = 0.0;
        for (s, profile) in instance.profiles.iter().enumerate() {
            let abrs: Vec<f64> = (0..n_nets)
                .map(|n| alloc.abr_for(s, n, instance.capacities[n]).max(0.0))
                .collect();
            let rho = compute_rho(&abrs)?;
            let problem = DistributedProblem {
                dr: profile.initial(),
                kappa_prime: params.kappa_prime,
                deadline: profile.deadline,
                rho: &rho,
                abrs: &abrs,
                alphas: &instance.alphas,
            };
            let previous = alloc.stream_total(s);
            let total = match minimize_distributed(&problem, profile.min_rate, params) {
                Ok(t) => t,
                Err(ModelError::EmptyFeasibleRegion { .. }) => previous,
                Err(e) => return Err(e),
            };
            let row: Vec<f64> = rho.iter().map(|p| p * total).collect();
            alloc.set_row(s, &row);
            max_change = max_change.max((total - previous).abs());
        }
        if max_change < change_tol {
            return Ok(FixedPoint {
                allocation: alloc,
                rounds: round,
                converged: true,
            });
        }
    }
    Ok(FixedPoint {
        allocation: alloc,
        rounds: max_rounds,
        converged: false,
    })
}

/// Total expected distortion of all streams for stream totals `totals`
/// split by `rho_n = c_n / sum c`.
pub fn centralized_objective(instance: &StaticInstance, totals: &[f64]) -> ModelResult<f64> {
    check_len("totals", totals.len(), instance.profiles.len())?;
    let cap_sum: f64 = instance.capacities.iter().sum();
    let grand: f64 = totals.iter().sum();
    let mut value = 0.0;
    for (p, &r) in instance.profiles.iter().zip(totals) {
        value += encoder_distortion(p.initial(), r)?;
    }
    for (n, &c) in instance.capacities.iter().enumerate() {
        let rho = c / cap_sum;
        let residual = c - rho * grand;
        if residual <= 0.0 {
            return Err(ModelError::InfeasibleRate {
                network: n,
                rate: rho * grand,
                abr: c,
            });
        }
        for p in &instance.profiles {
            value += p.kappa() * rho * late_loss_term(p.deadline, residual, instance.alphas[n]);
        }
    }
    Ok(value)
}

/// Minimizes the centralized program over stream totals.
///
/// For a fixed grand total the encoder terms are minimized by equalizing
/// marginal distortion (water filling on `theta / (r - r0)^2`); the grand
/// total itself is found by golden-section search, the reduced objective
/// being convex.
pub fn centralized_solve(instance: &StaticInstance, tol: f64) -> ModelResult<AllocationMatrix> {
    let n_nets = instance.capacities.len();
    check_len("alphas", instance.alphas.len(), n_nets)?;
    if instance.profiles.is_empty() || n_nets == 0 {
        return Err(ModelError::Infeasible("no streams or no networks".into()));
    }
    let cap_sum: f64 = instance.capacities.iter().sum();
    let lows: Vec<f64> = instance.profiles.iter().map(|p| p.min_rate).collect();
    let low_sum: f64 = lows.iter().sum();
    let high = cap_sum * (1.0 - 1e-9);
    if !(high > low_sum) {
        return Err(ModelError::Infeasible(format!(
            "minimum rates {low_sum} exceed total capacity {cap_sum}"
        )));
    }
    let split = |grand: f64| water_fill(&instance.profiles, &lows, grand);
    let reduced = |grand: f64| {
        let totals = split(grand);
        centralized_objective(instance, &totals).unwrap_or(f64::INFINITY)
    };
    let grand = golden_section_min(reduced, low_sum, high, tol);
    let totals = split(grand);
    let rows: Vec<Vec<f64>> = totals
        .iter()
        .map(|&r| instance.capacities.iter().map(|c| r * c / cap_sum).collect())
        .collect();
    AllocationMatrix::from_rows(&rows)
}

/// Splits `grand` among streams so that marginal encoder distortion is
/// equal wherever a stream is above its lower bound.
fn water_fill(profiles: &[StreamProfile], lows: &[f64], grand: f64) -> Vec<f64> {
    let at_price = |price: f64| -> Vec<f64> {
        profiles
            .iter()
            .zip(lows)
            .map(|(p, &lo)| {
                let dr = p.initial();
                (dr.r0 + (dr.theta / price).sqrt()).max(lo)
            })
            .collect()
    };
    // Sum is decreasing in price; bracket in log space.
    let (mut lo_p, mut hi_p) = (1e-30f64, 1e30f64);
    for _ in 0..200 {
        let mid = (lo_p * hi_p).sqrt();
        if at_price(mid).iter().sum::<f64>() > grand {
            lo_p = mid;
        } else {
            hi_p = mid;
        }
        if hi_p / lo_p < 1.0 + 1e-15 {
            break;
        }
    }
    let mut totals = at_price(hi_p);
    // Put any bisection leftover on the unconstrained streams.
    let gap = grand - totals.iter().sum::<f64>();
    let free: Vec<usize> = (0..totals.len()).filter(|&i| totals[i] > lows[i]).collect();
    if !free.is_empty() {
        let share = gap / free.len() as f64;
        for i in free {
            totals[i] += share;
        }
    }
    totals
}
