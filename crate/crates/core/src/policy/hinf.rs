//! H∞-optimal rate control.
//!
//! The state `x` integrates the measured residual bandwidth `w`; the rate
//! follows `r' = −φr + u` with `u = −(b/g²)σ_γ x`. One scalar controller
//! runs per network, or the diagonal matrix form solved through the GARE.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distortion::StreamProfile;
use crate::error::{ModelError, ModelResult};

use super::gare::{gare_residual, gare_solve, quadratic_weight};
use super::{check_len, PolicyInput, RatePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HinfVariant {
    #[default]
    Scalar,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HinfParams {
    /// State memory coefficient (1/s), negative.
    pub a: f64,
    /// Control effectiveness, negative.
    pub b: f64,
    /// Rate leak (1/s).
    pub phi: f64,
    pub h: f64,
    pub g: f64,
    /// Explicit performance factor; `gamma_factor * γ*` when absent.
    pub gamma: Option<f64>,
    pub gamma_factor: f64,
    /// Explicit overload scaling (bit/s per s); `mu_factor * capacity` when absent.
    pub mu: Option<f64>,
    pub mu_factor: f64,
    pub variant: HinfVariant,
}

impl Default for HinfParams {
    fn default() -> Self {
        Self {
            a: -0.5,
            b: -1.0,
            phi: 0.01,
            h: 1.0,
            g: 8.0,
            gamma: None,
            gamma_factor: 1.5,
            mu: None,
            mu_factor: -0.25,
            variant: HinfVariant::Scalar,
        }
    }
}

impl HinfParams {
    pub fn validate(&self) -> ModelResult<()> {
        let bad = |m: &str| Err(ModelError::InvalidParameter(m.into()));
        if !(self.a < 0.0) {
            return bad("a must be negative");
        }
        if !(self.b < 0.0) {
            return bad("b must be negative");
        }
        if !(self.phi > 0.0) {
            return bad("phi must be positive");
        }
        if !(self.h > 0.0 && self.g > 0.0) {
            return bad("h and g must be positive");
        }
        if let Some(mu) = self.mu {
            if !(mu < 0.0) {
                return bad("mu must be negative");
            }
        } else if !(self.mu_factor < 0.0) {
            return bad("mu_factor must be negative");
        }
        if self.gamma.is_none() && !(self.gamma_factor > 1.0) {
            return bad("gamma_factor must exceed 1");
        }
        let gamma = self.gamma();
        let star = gamma_star(self.a, self.b, self.h, self.g);
        if !(gamma > star) {
            return Err(ModelError::GammaTooSmall {
                gamma,
                gamma_star: star,
            });
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
            .unwrap_or_else(|| self.gamma_factor * gamma_star(self.a, self.b, self.h, self.g))
    }

    pub fn mu_for(&self, capacity: f64) -> f64 {
        self.mu.unwrap_or(self.mu_factor * capacity)
    }

    pub fn sigma(&self) -> ModelResult<f64> {
        sigma_gamma(self.a, self.b, self.h, self.g, self.gamma())
    }
}

/// Lowest achievable performance factor `1/√(a²/h² + b²/g²)`.
pub fn gamma_star(a: f64, b: f64, h: f64, g: f64) -> f64 {
    1.0 / (a * a / (h * h) + b * b / (g * g)).sqrt()
}

/// `λ = 1/γ² − b²/g²`.
pub fn lambda(b: f64, g: f64, gamma: f64) -> f64 {
    1.0 / (gamma * gamma) - b * b / (g * g)
}

/// Minimal nonnegative root of `2aσ + λσ² + h² = 0`.
///
/// Written as `h² / (−a + √(a² − λh²))`, which equals `(−a − √(a² − λh²))/λ`
/// and stays finite as `λ → 0`.
pub fn sigma_gamma(a: f64, b: f64, h: f64, g: f64, gamma: f64) -> ModelResult<f64> {
    let star = gamma_star(a, b, h, g);
    if !(gamma > star) {
        return Err(ModelError::GammaTooSmall {
            gamma,
            gamma_star: star,
        });
    }
    let lam = lambda(b, g, gamma);
    let disc = a * a - lam * h * h;
    Ok(h * h / (-a + disc.sqrt()))
}

/// Overload-episode bookkeeping for the measured residual bandwidth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeState {
    last_nonnegative: Option<f64>,
    start: Option<f64>,
}

impl EpisodeState {
    /// State with an episode already running since `t_i`.
    pub fn started_at(t_i: f64) -> Self {
        Self {
            last_nonnegative: Some(t_i),
            start: Some(t_i),
        }
    }

    pub fn start(&self) -> Option<f64> {
        self.start
    }
}

/// `w = e` when `e ≥ 0`, else `μ(t_f − t_i)` with `t_f = now` and `t_i` the
/// last time the residual was seen non-negative.
pub fn measure_w(residual: f64, now: f64, mu: f64, state: &mut EpisodeState) -> f64 {
    if residual >= 0.0 {
        state.last_nonnegative = Some(now);
        state.start = None;
        residual
    } else {
        let t_i = *state
            .start
            .get_or_insert(state.last_nonnegative.unwrap_or(now));
        mu * (now - t_i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlStep {
    pub u: f64,
    pub x: f64,
    pub r: f64,
}

/// One forward-Euler step of the scalar loop.
pub fn control_step(params: &HinfParams, sigma: f64, x: f64, r: f64, w: f64, dt: f64) -> ControlStep {
    let u = -(params.b / (params.g * params.g)) * sigma * x;
    let x_next = x + dt * (params.a * x + params.b * u + w);
    let r_next = (r + dt * (-params.phi * r + u)).max(0.0);
    ControlStep {
        u,
        x: x_next,
        r: r_next,
    }
}

/// Diagonal multi-network controller with gain `K = (GᵀG)⁻¹BᵀΣ_γ`.
#[derive(Debug, Clone)]
pub struct HinfMatrixController {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub gamma: f64,
}

impl HinfMatrixController {
    pub fn diagonal(params: &HinfParams, networks: usize) -> ModelResult<Self> {
        let id = DMatrix::<f64>::identity(networks, networks);
        Self::new(
            &id * params.a,
            &id * params.b,
            id.clone(),
            &id * params.phi,
            &id * params.h,
            &id * params.g,
            params.gamma(),
        )
    }

    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
        phi: DMatrix<f64>,
        h: DMatrix<f64>,
        g: DMatrix<f64>,
        gamma: f64,
    ) -> ModelResult<Self> {
        let q = h.transpose() * &h;
        if q.clone().cholesky().is_none() {
            return Err(ModelError::InvalidParameter("HᵀH must be positive definite".into()));
        }
        let gtg = g.transpose() * &g;
        let gtg_inv = gtg
            .clone()
            .cholesky()
            .ok_or_else(|| ModelError::InvalidParameter("GᵀG must be positive definite".into()))?
            .inverse();
        let sigma = gare_solve(&a, &b, &d, &q, &g, gamma)?;
        let gain = gtg_inv * b.transpose() * &sigma;
        Ok(Self {
            a,
            b,
            d,
            phi,
            h,
            g,
            sigma,
            gain,
            gamma,
        })
    }

    pub fn residual_norm(&self) -> f64 {
        let q = self.h.transpose() * &self.h;
        let r = quadratic_weight(&self.b, &self.d, &self.g, self.gamma).expect("validated");
        gare_residual(&self.a, &r, &q, &self.sigma).norm()
    }

    pub fn networks(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStep {
    pub u: DVector<f64>,
    pub x: DVector<f64>,
    pub r: DVector<f64>,
}

/// Vector analogue of [`control_step`].
pub fn matrix_control(
    ctl: &HinfMatrixController,
    x: &DVector<f64>,
    r: &DVector<f64>,
    w: &DVector<f64>,
    dt: f64,
) -> MatrixStep {
    let u = -(&ctl.gain * x);
    let x_next = x + (&ctl.a * x + &ctl.b * &u + &ctl.d * w) * dt;
    let mut r_next = r + (-(&ctl.phi * r) + &u) * dt;
    r_next.iter_mut().for_each(|v| *v = v.max(0.0));
    MatrixStep {
        u,
        x: x_next,
        r: r_next,
    }
}

/// H∞ policy for one stream.
#[derive(Debug, Clone)]
pub struct HinfPolicy {
    params: HinfParams,
    sigma: f64,
    min_rate: f64,
    matrix: Option<HinfMatrixController>,
    x: Vec<f64>,
    r: Vec<f64>,
    mu: Vec<f64>,
    episodes: Vec<EpisodeState>,
}

impl HinfPolicy {
    pub fn new(params: HinfParams, profile: &StreamProfile) -> ModelResult<Self> {
        params.validate()?;
        let sigma = params.sigma()?;
        Ok(Self {
            params,
            sigma,
            min_rate: profile.min_rate,
            matrix: None,
            x: Vec::new(),
            r: Vec::new(),
            mu: Vec::new(),
            episodes: Vec::new(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    fn reset(&mut self, abr_hint: &[f64]) {
        let n = abr_hint.len();
        self.x = vec![0.0; n];
        self.r = super::split_proportional(self.min_rate, abr_hint);
        self.mu = abr_hint.iter().map(|c| self.params.mu_for(*c)).collect();
        self.episodes = vec![EpisodeState::default(); n];
        self.matrix = match self.params.variant {
            HinfVariant::Scalar => None,
            HinfVariant::Matrix => HinfMatrixController::diagonal(&self.params, n).ok(),
        };
    }
}

impl RatePolicy for HinfPolicy {
    fn name(&self) -> &'static str {
        "hinf"
    }

    fn initial_rates(&mut self, abr_hint: &[f64]) -> Vec<f64> {
        self.reset(abr_hint);
        self.r.clone()
    }

    fn allocate(&mut self, input: &PolicyInput<'_>) -> Vec<f64> {
        let obs = input.observations;
        if check_len("observations", obs.len(), self.r.len()).is_err() {
            let hint: Vec<f64> = obs.iter().map(|o| o.abr).collect();
            self.reset(&hint);
        }
        let w: Vec<f64> = obs
            .iter()
            .enumerate()
            .map(|(n, o)| measure_w(o.abr - self.r[n], input.now, self.mu[n], &mut self.episodes[n]))
            .collect();
        match &self.matrix {
            Some(ctl) => {
                let step = matrix_control(
                    ctl,
                    &DVector::from_column_slice(&self.x),
                    &DVector::from_column_slice(&self.r),
                    &DVector::from_vec(w),
                    input.dt,
                );
                self.x = step.x.iter().copied().collect();
                self.r = step.r.iter().copied().collect();
            }
            None => {
                for (n, wn) in w.into_iter().enumerate() {
                    let s = control_step(&self.params, self.sigma, self.x[n], self.r[n], wn, input.dt);
                    self.x[n] = s.x;
                    self.r[n] = s.r;
                }
            }
        }
        self.r.clone()
    }
}
