//! Distortion-rate model of an encoded video stream.
//!
//! Encoder distortion follows `d(r) = d0 + theta / (r - r0)` in MSE units of
//! squared 8-bit pixel values; packet loss adds `kappa * p_loss`.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelResult};

pub const PSNR_PEAK: f64 = 255.0;

/// Distortion-rate parameters valid for one group of pictures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrParams {
    /// Distortion floor (MSE).
    pub d0: f64,
    /// Rate-distortion slope (MSE * bit/s).
    pub theta: f64,
    /// Rate offset (bit/s).
    pub r0: f64,
    /// Loss sensitivity (MSE per unit loss probability).
    pub kappa: f64,
}

impl DrParams {
    pub fn validate(&self) -> ModelResult<()> {
        if !(self.theta > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        if !(self.r0 >= 0.0) || !(self.d0 >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "d0 and r0 must be non-negative, got d0={} r0={}",
                self.d0, self.r0
            )));
        }
        Ok(())
    }

    pub fn encoder_distortion(&self, rate: f64) -> ModelResult<f64> {
        encoder_distortion(self, rate)
    }
}

/// A video stream: its distortion-rate schedule, playout deadline and floor rate.
///
/// The schedule holds one entry per GOP; the last entry stays in force once
/// the schedule runs out.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamProfile {
    pub id: usize,
    pub name: String,
    pub schedule: Vec<DrParams>,
    /// Playout deadline `t^s_0` (s).
    pub deadline: f64,
    /// Minimum acceptable rate `r^s_min` (bit/s).
    pub min_rate: f64,
}

impl StreamProfile {
    pub fn new(
        id: usize,
        name: impl Into<String>,
        params: DrParams,
        deadline: f64,
        min_rate: f64,
    ) -> ModelResult<Self> {
        Self::with_schedule(id, name, vec![params], deadline, min_rate)
    }

    pub fn with_schedule(
        id: usize,
        name: impl Into<String>,
        schedule: Vec<DrParams>,
        deadline: f64,
        min_rate: f64,
    ) -> ModelResult<Self> {
        let profile = Self {
            id,
            name: name.into(),
            schedule,
            deadline,
            min_rate,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> ModelResult<()> {
        if self.schedule.is_empty() {
            return Err(ModelError::InvalidParameter(format!(
                "stream {}: empty distortion-rate schedule",
                self.name
            )));
        }
        if !(self.deadline > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "stream {}: deadline must be positive",
                self.name
            )));
        }
        for p in &self.schedule {
            p.validate()?;
            if !(self.min_rate > p.r0) {
                return Err(ModelError::InvalidParameter(format!(
                    "stream {}: min rate {} must exceed r0 {}",
                    self.name, self.min_rate, p.r0
                )));
            }
        }
        Ok(())
    }

    pub fn params_at(&self, gop: usize) -> &DrParams {
        &self.schedule[gop.min(self.schedule.len() - 1)]
    }

    pub fn initial(&self) -> &DrParams {
        &self.schedule[0]
    }

    pub fn kappa(&self) -> f64 {
        self.initial().kappa
    }
}

/// Per-GOP decoded quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionReport {
    pub d_enc: f64,
    pub d_loss: f64,
    pub d_dec: f64,
    pub psnr: f64,
}

pub fn encoder_distortion(params: &DrParams, rate: f64) -> ModelResult<f64> {
    if rate > params.r0 {
        Ok(params.d0 + params.theta / (rate - params.r0))
    } else {
        Err(ModelError::RateBelowOffset {
            rate,
            r0: params.r0,
        })
    }
}

pub fn loss_distortion(params: &DrParams, p_loss: f64) -> f64 {
    params.kappa * p_loss
}

pub fn decoder_distortion(params: &DrParams, rate: f64, p_loss: f64) -> ModelResult<DistortionReport> {
    let d_enc = encoder_distortion(params, rate)?;
    let d_loss = loss_distortion(params, p_loss);
    let d_dec = d_enc + d_loss;
    Ok(DistortionReport {
        d_enc,
        d_loss,
        d_dec,
        psnr: psnr(d_dec),
    })
}

pub fn psnr(mse: f64) -> f64 {
    10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10()
}

pub fn mse_from_psnr(psnr_db: f64) -> f64 {
    PSNR_PEAK * PSNR_PEAK / 10f64.powf(psnr_db / 10.0)
}

/// Fitted encoder model `(d0, theta, r0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrFit {
    pub d0: f64,
    pub theta: f64,
    pub r0: f64,
}

impl DrFit {
    pub fn eval(&self, rate: f64) -> f64 {
        self.d0 + self.theta / (rate - self.r0)
    }

    fn sse(&self, points: &[(f64, f64)]) -> f64 {
        points
            .iter()
            .map(|&(r, d)| {
                let e = self.eval(r) - d;
                e * e
            })
            .sum()
    }

    fn admissible(&self, min_rate: f64) -> bool {
        self.theta > 0.0 && self.r0 < min_rate && self.d0.is_finite() && self.r0.is_finite()
    }
}

const FIT_MAX_ITER: usize = 500;

/// Least-squares fit of `d0 + theta / (r - r0)` to trial encodings.
///
/// Three points are solved in closed form; more points start from the best
/// three-point subset and refine with Levenberg-Marquardt.
pub fn fit_dr_model(points: &[(f64, f64)]) -> ModelResult<DrFit> {
    if points.len() < 3 {
        return Err(ModelError::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.iter().any(|&(r, d)| !(r > 0.0) || !(d > 0.0)) {
        return Err(ModelError::DegenerateFit(
            "rates and distortions must be positive".into(),
        ));
    }
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(ModelError::DegenerateFit("rates must be distinct".into()));
    }
    if !(pts[0].1 > pts[pts.len() - 1].1) {
        return Err(ModelError::DegenerateFit(
            "distortion does not decrease with rate".into(),
        ));
    }
    let min_rate = pts[0].0;

    if pts.len() == 3 {
        return fit_three([pts[0], pts[1], pts[2]]);
    }

    let mut best: Option<DrFit> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                if let Ok(f) = fit_three([pts[i], pts[j], pts[k]]) {
                    if f.admissible(min_rate)
                        && best.is_none_or(|b| f.sse(&pts) < b.sse(&pts))
                    {
                        best = Some(f);
                    }
                }
            }
        }
    }
    let start = best.ok_or_else(|| {
        ModelError::DegenerateFit("no three-point subset admits a decreasing convex fit".into())
    })?;
    levenberg_marquardt(&pts, start, min_rate)
}

fn fit_three(p: [(f64, f64); 3]) -> ModelResult<DrFit> {
    let [(r1, d1), (r2, d2), (r3, d3)] = p;
    let d12 = d1 - d2;
    let d23 = d2 - d3;
    if !(d12 > 0.0 && d23 > 0.0) {
        return Err(ModelError::DegenerateFit(
            "distortion must strictly decrease across the three rates".into(),
        ));
    }
    // (r3 - r0) / (r1 - r0) = K follows from the two difference equations.
    let k = d12 * (r3 - r2) / (d23 * (r2 - r1));
    if !(k > 1.0) {
        return Err(ModelError::DegenerateFit(
            "points are not convex in rate; no hyperbolic fit".into(),
        ));
    }
    let r0 = (k * r1 - r3) / (k - 1.0);
    let theta = d12 * (r1 - r0) * (r2 - r0) / (r2 - r1);
    let d0 = d1 - theta / (r1 - r0);
    let fit = DrFit { d0, theta, r0 };
    if !fit.admissible(r1) {
        return Err(ModelError::DegenerateFit(format!(
            "closed-form fit is not admissible: {fit:?}"
        )));
    }
    Ok(fit)
}

fn levenberg_marquardt(pts: &[(f64, f64)], start: DrFit, min_rate: f64) -> ModelResult<DrFit> {
    // Work in scaled coordinates so the normal equations stay well conditioned.
    let rs = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let ds = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let scaled: Vec<(f64, f64)> = pts.iter().map(|&(r, d)| (r / rs, d / ds)).collect();
    let mut x = Vector3::new(start.d0 / ds, start.theta / (ds * rs), start.r0 / rs);
    let to_fit = |x: &Vector3<f64>| DrFit {
        d0: x[0],
        theta: x[1],
        r0: x[2],
    };
    let min_scaled = min_rate / rs;
    let mut cost = to_fit(&x).sse(&scaled);
    let mut damping = 1e-3;

    for _ in 0..FIT_MAX_ITER {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for &(r, d) in &scaled {
            let gap = r - x[2];
            let res = x[0] + x[1] / gap - d;
            let jac = Vector3::new(1.0, 1.0 / gap, x[1] / (gap * gap));
            jtj += jac * jac.transpose();
            jtr += jac * res;
        }
        if jtr.norm() < 1e-15 {
            break;
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut lhs = jtj;
            for i in 0..3 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-jtr)) else {
                damping *= 10.0;
                continue;
            };
            let cand = x + step;
            let fit = to_fit(&cand);
            if fit.admissible(min_scaled) {
                let c = fit.sse(&scaled);
                if c < cost {
                    let rel = (cost - c) / cost.max(1e-300);
                    x = cand;
                    cost = c;
                    damping = (damping * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-14 {
                        return Ok(unscale(&x, rs, ds));
                    }
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            // No descent direction left at any damping: stationary point.
            return Ok(unscale(&x, rs, ds));
        }
    }
    Ok(unscale(&x, rs, ds))
}

fn unscale(x: &Vector3<f64>, rs: f64, ds: f64) -> DrFit {
    DrFit {
        d0: x[0] * ds,
        theta: x[1] * ds * rs,
        r0: x[2] * rs,
    }
}

/// Row of the distortion-rate profile file. Theta and r0 are in kbit/s units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
struct ProfileRow {
    gop_index: usize,
    d0: f64,
    theta_kbps_mse: f64,
    r0_kbps: f64,
    kappa: f64,
}

/// Read a per-GOP distortion-rate schedule from CSV
/// (`gop_index,d0,theta_kbps_mse,r0_kbps,kappa`).
pub fn load_profile_schedule(path: &Path) -> Result<Vec<DrParams>, crate::traces::TraceError> {
    use crate::traces::TraceError;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| TraceError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| TraceError::Parse {
            line,
            reason: e.to_string(),
        })?;
        if row.gop_index != out.len() {
            return Err(TraceError::Validation {
                line,
                reason: format!("expected gop_index {}, got {}", out.len(), row.gop_index),
            });
        }
        let params = DrParams {
            d0: row.d0,
            theta: row.theta_kbps_mse * 1e3,
            r0: row.r0_kbps * 1e3,
            kappa: row.kappa,
        };
        params.validate().map_err(|e| TraceError::Validation {
            line,
            reason: e.to_string(),
        })?;
        out.push(params);
    }
    if out.is_empty() {
        return Err(TraceError::Validation {
            line: 1,
            reason: "profile file has no rows".into(),
        });
    }
    Ok(out)
}

pub fn save_profile_schedule(path: &Path, schedule: &[DrParams]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for (gop_index, p) in schedule.iter().enumerate() {
        wtr.serialize(ProfileRow {
            gop_index,
            d0: p.d0,
            theta_kbps_mse: p.theta / 1e3,
            r0_kbps: p.r0 / 1e3,
            kappa: p.kappa,
        })
        .map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

/// Synthetic stand-ins for three 720p60 sequences. Complexity ordering is
/// Harbor > Bigships > Cyclists; the numbers are not measured data.
pub fn builtin_profile(name: &str) -> Option<DrParams> {
    match name.to_ascii_lowercase().as_str() {
        "harbor" => Some(DrParams {
            d0: 2.0,
            theta: 1.6e8,
            r0: 5.0e5,
            kappa: 120.0,
        }),
        "bigships" => Some(DrParams {
            d0: 1.5,
            theta: 1.1e8,
            r0: 4.0e5,
            kappa: 100.0,
        }),
        "cyclists" => Some(DrParams {
            d0: 1.0,
            theta: 0.7e8,
            r0: 3.0e5,
            kappa: 80.0,
        }),
        _ => None,
    }
}

pub const BUILTIN_PROFILES: [&str; 3] = ["bigships", "cyclists", "harbor"];
