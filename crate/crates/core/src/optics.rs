//! Spatial part of the atom: Gaussian slit apertures, exact free-particle
//! spreading, and screen densities assembled from a path Gram matrix.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branch::CompositeState;
use crate::error::{Error, Result};

/// Negative densities smaller than this (relative to the peak envelope) are
/// treated as round-off and clipped; anything larger is a bug.
pub const NEGATIVE_CLIP: f64 = 1e-12;

/// Environment variable capping the density-evaluation thread count.
pub const THREADS_ENV: &str = "QSLIT_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlitStage {
    /// Slit centers along the screen axis.
    pub centers: Vec<f64>,
    /// Gaussian aperture width (standard deviation of `|psi|^2`).
    pub sigma: f64,
    /// Flight distance from this slit screen to the next screen.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlitGeometry {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub velocity: f64,
    pub stage1: SlitStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<SlitStage>,
}

fn one() -> f64 {
    1.0
}

impl SlitGeometry {
    /// Two slits at `+-5`, unit width, and a flight time giving a packet
    /// spread of about 50, i.e. five times the slit separation.
    pub fn default_double_slit() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            velocity: 1.0,
            stage1: SlitStage { centers: vec![-5.0, 5.0], sigma: 1.0, distance: 100.0 },
            stage2: None,
        }
    }

    /// Four-slit geometry where both stage-1 packets reach both stage-2 slits.
    pub fn default_four_slit_overlapping() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            velocity: 1.0,
            stage1: SlitStage { centers: vec![-5.0, 5.0], sigma: 1.0, distance: 20.0 },
            stage2: Some(SlitStage { centers: vec![-5.0, 5.0], sigma: 1.0, distance: 100.0 }),
        }
    }

    /// Four-slit geometry with each stage-1 packet sharply peaked on the
    /// stage-2 slit in front of it.
    pub fn default_four_slit_sharp() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            velocity: 1.0,
            stage1: SlitStage { centers: vec![-10.0, 10.0], sigma: 1.0, distance: 1.0 },
            stage2: Some(SlitStage { centers: vec![-10.0, 10.0], sigma: 1.0, distance: 100.0 }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidGeometry(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("hbar", self.hbar)?;
        positive("mass", self.mass)?;
        positive("velocity", self.velocity)?;
        for (label, stage) in std::iter::once(("stage1", &self.stage1)).chain(self.stage2.iter().map(|s| ("stage2", s))) {
            positive(&format!("{label}.sigma"), stage.sigma)?;
            positive(&format!("{label}.distance"), stage.distance)?;
            if stage.centers.is_empty() || stage.centers.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidGeometry(format!("{label}.centers must be finite and nonempty")));
            }
        }
        if !self.de_broglie_wavelength().is_finite() {
            return Err(Error::InvalidGeometry("de Broglie wavelength is not finite".into()));
        }
        Ok(())
    }

    pub fn stage(&self, stage: usize) -> Result<&SlitStage> {
        match stage {
            1 => Ok(&self.stage1),
            2 => self.stage2.as_ref().ok_or(Error::SingleStageGeometry),
            _ => Err(Error::InvalidGeometry(format!("no stage {stage}"))),
        }
    }

    /// Flight time after the given stage.
    pub fn elapsed(&self, stage: usize) -> Result<f64> {
        Ok(self.stage(stage)?.distance / self.velocity)
    }

    /// `2 pi hbar / (m v)`.
    pub fn de_broglie_wavelength(&self) -> f64 {
        2.0 * PI * self.hbar / (self.mass * self.velocity)
    }

    /// Width of `|psi|^2` for a packet from `stage` after its flight.
    pub fn spread_at_screen(&self, stage: usize) -> Result<f64> {
        let s = self.stage(stage)?;
        let t = self.elapsed(stage)?;
        Ok(packet_width(s.sigma, self.hbar, self.mass, t))
    }

    /// Index of the final screen stage.
    pub fn last_stage(&self) -> usize {
        if self.stage2.is_some() {
            2
        } else {
            1
        }
    }
}

pub fn packet_width(sigma: f64, hbar: f64, mass: f64, t: f64) -> f64 {
    let r = hbar * t / (2.0 * mass * sigma * sigma);
    sigma * (1.0 + r * r).sqrt()
}

/// Freely evolved normalized Gaussian that starts centered on `center` with
/// `|psi|^2` width `sigma`:
/// `psi = (2 pi)^{-1/4} s^{-1/2} exp(-(x - x0)^2 / (4 sigma s))`,
/// `s = sigma + i hbar t / (2 m sigma)`.
pub fn gaussian_packet(center: f64, sigma: f64, hbar: f64, mass: f64, x: f64, t: f64) -> C64 {
    let s = C64::new(sigma, hbar * t / (2.0 * mass * sigma));
    let dx = x - center;
    let prefactor = (2.0 * PI).powf(-0.25) / s.sqrt();
    prefactor * (-(dx * dx) / (4.0 * sigma * s)).exp()
}

/// `psi_slit(x, elapsed)` for slit `slit_index` of `stage`.
pub fn slit_amplitude(geometry: &SlitGeometry, stage: usize, slit_index: usize, x: f64, elapsed: f64) -> Result<C64> {
    if elapsed.is_nan() || elapsed <= 0.0 {
        return Err(Error::NonpositiveElapsed(elapsed));
    }
    let s = geometry.stage(stage)?;
    let center = *s
        .centers
        .get(slit_index)
        .ok_or_else(|| Error::LabelGeometryMismatch(format!("stage {stage} has no slit {slit_index}")))?;
    Ok(gaussian_packet(center, s.sigma, geometry.hbar, geometry.mass, x, elapsed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// `<eta|U|zeta>`: the stage-1 packet sampled at the stage-2 slit center.
    #[default]
    PointSample,
    /// Overlap of the stage-1 packet with the stage-2 aperture Gaussian.
    Aperture,
}

/// Amplitude for passing from stage-1 slit `source` to stage-2 slit `dest`.
pub fn four_slit_transfer(geometry: &SlitGeometry, source: usize, dest: usize, mode: TransferMode) -> Result<C64> {
    let second = geometry.stage2.as_ref().ok_or(Error::SingleStageGeometry)?;
    let t1 = geometry.elapsed(1)?;
    let eta = *second
        .centers
        .get(dest)
        .ok_or_else(|| Error::LabelGeometryMismatch(format!("stage 2 has no slit {dest}")))?;
    match mode {
        TransferMode::PointSample => slit_amplitude(geometry, 1, source, eta, t1),
        TransferMode::Aperture => {
            let first = &geometry.stage1;
            let zeta = *first
                .centers
                .get(source)
                .ok_or_else(|| Error::LabelGeometryMismatch(format!("stage 1 has no slit {source}")))?;
            let sigma = first.sigma;
            let s = C64::new(sigma, geometry.hbar * t1 / (2.0 * geometry.mass * sigma));
            let a = 1.0 / (4.0 * sigma * s);
            let b = 1.0 / (4.0 * second.sigma * second.sigma);
            let sum = a + b;
            let gauss = (C64::new(PI, 0.0) / sum).sqrt() * (-(a * b / sum) * (zeta - eta).powi(2)).exp();
            let prefactor = (2.0 * PI).powf(-0.25) / s.sqrt() * (2.0 * PI * second.sigma * second.sigma).powf(-0.25);
            Ok(prefactor * gauss)
        }
    }
}

/// 2x2 table `T[source][dest]` of stage-1 to stage-2 transfer amplitudes.
pub fn transfer_table(geometry: &SlitGeometry, mode: TransferMode) -> Result<DMatrix<C64>> {
    let n_src = geometry.stage1.centers.len();
    let n_dst = geometry.stage2.as_ref().ok_or(Error::SingleStageGeometry)?.centers.len();
    let mut t = DMatrix::from_element(n_src, n_dst, C64::new(0.0, 0.0));
    for p in 0..n_src {
        for j in 0..n_dst {
            t[(p, j)] = four_slit_transfer(geometry, p, j, mode)?;
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl GridSpec {
    /// 2048 points spanning ten packet widths around the final-stage slits.
    pub fn default_for(geometry: &SlitGeometry) -> Self {
        let stage = geometry.last_stage();
        let spread = geometry.spread_at_screen(stage).unwrap_or(geometry.stage1.sigma);
        let centers = &geometry.stage(stage).map(|s| s.centers.clone()).unwrap_or_default();
        let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { x_min: lo - 5.0 * spread, x_max: hi + 5.0 * spread, points: 2048 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 3 || self.x_max <= self.x_min || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "grid needs x_min < x_max and at least 3 points, got [{}, {}] x {}",
                self.x_min, self.x_max, self.points
            )));
        }
        Ok(())
    }

    pub fn xs(&self) -> Vec<f64> {
        let step = (self.x_max - self.x_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.x_min + step * i as f64).collect()
    }
}

/// Sampled screen probability density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDistribution {
    pub xs: Vec<f64>,
    /// Quadratic form of the state as given, no renormalization.
    pub raw: Vec<f64>,
    /// `raw` divided by its trapezoid integral.
    pub density: Vec<f64>,
    /// Direct (non-interfering) terms only.
    pub envelope: Option<Vec<f64>>,
    /// Trapezoid integral of `raw`.
    pub integral: f64,
    /// Number of paths carrying non-negligible weight.
    pub path_count: usize,
    pub visibility: Option<f64>,
    pub normalized: bool,
}

impl ScreenDistribution {
    /// Builds a distribution from bare samples, with no envelope information.
    pub fn from_samples(xs: Vec<f64>, raw: Vec<f64>) -> Self {
        let integral = trapezoid(&xs, &raw);
        let density = raw.iter().map(|v| v / integral).collect();
        Self { xs, raw, density, envelope: None, integral, path_count: 0, visibility: None, normalized: true }
    }

    /// `max |raw - envelope| / max envelope`.
    pub fn cross_to_direct_ratio(&self) -> Option<f64> {
        let env = self.envelope.as_ref()?;
        let peak = env.iter().copied().fold(0.0, f64::max);
        let cross = self.raw.iter().zip(env).map(|(r, e)| (r - e).abs()).fold(0.0, f64::max);
        Some(cross / peak)
    }
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Runs `f` on a pool capped by `QSLIT_THREADS` when it is set to a positive
/// integer, otherwise on the global pool.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    if cap == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(cap).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// `density(x) = sum_pq W_pq psi_p(x) psi_q(x)^*` for a Hermitian weight
/// matrix `W`, with `psi_p` sampled on `xs`.
pub fn assemble_density(weights: &DMatrix<C64>, waves: &[Vec<C64>], xs: &[f64]) -> Result<ScreenDistribution> {
    let paths = waves.len();
    assert_eq!(weights.nrows(), paths);
    let samples: Vec<(f64, f64)> = with_thread_cap(|| {
        (0..xs.len())
            .into_par_iter()
            .map(|k| {
                let mut direct = 0.0;
                for p in 0..paths {
                    direct += weights[(p, p)].re * waves[p][k].norm_sqr();
                }
                let mut cross = 0.0;
                for p in 0..paths {
                    for q in p + 1..paths {
                        cross += 2.0 * (weights[(p, q)] * waves[p][k] * waves[q][k].conj()).re;
                    }
                }
                (direct, direct + cross)
            })
            .collect()
    });
    let envelope: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let peak = envelope.iter().copied().fold(0.0, f64::max);
    let mut raw = Vec::with_capacity(xs.len());
    for (k, (_, v)) in samples.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NegativeDensity { x: xs[k], value: *v });
        }
        if *v < 0.0 {
            if -v > NEGATIVE_CLIP * peak.max(f64::MIN_POSITIVE) {
                return Err(Error::NegativeDensity { x: xs[k], value: *v });
            }
            raw.push(0.0);
        } else {
            raw.push(*v);
        }
    }
    let total_weight: f64 = (0..paths).map(|p| weights[(p, p)].re).sum();
    let path_count = (0..paths).filter(|&p| weights[(p, p)].re > 1e-12 * total_weight).count();
    let integral = trapezoid(xs, &raw);
    let density = raw.iter().map(|v| v / integral).collect();
    Ok(ScreenDistribution {
        xs: xs.to_vec(),
        raw,
        density,
        envelope: Some(envelope),
        integral,
        path_count,
        visibility: None,
        normalized: true,
    })
}

fn check_labels(state: &CompositeState, centers: usize) -> Result<()> {
    let paths = state.layout().paths().len();
    if paths != centers {
        return Err(Error::LabelGeometryMismatch(format!(
            "{paths} path labels but {centers} stage-1 slits"
        )));
    }
    Ok(())
}

/// Stage-`stage` slit wavefunctions sampled on `xs` after that stage's flight.
pub fn stage_waves(geometry: &SlitGeometry, stage: usize, xs: &[f64]) -> Result<Vec<Vec<C64>>> {
    let t = geometry.elapsed(stage)?;
    let n = geometry.stage(stage)?.centers.len();
    (0..n)
        .map(|j| xs.iter().map(|&x| slit_amplitude(geometry, stage, j, x, t)).collect())
        .collect()
}

/// Two-slit screen density `sum_ij G_ij psi_path(i) psi_path(j)^*` after the
/// stage-1 flight.
pub fn screen_density(state: &CompositeState, geometry: &SlitGeometry, xs: &[f64]) -> Result<ScreenDistribution> {
    check_labels(state, geometry.stage1.centers.len())?;
    let waves = stage_waves(geometry, 1, xs)?;
    assemble_density(&state.path_gram(), &waves, xs)
}

/// Weights over stage-2 slits: `K_jk = sum_pq M_pq T_pj T_qk^*`.
pub fn four_slit_weights(path_gram: &DMatrix<C64>, transfers: &DMatrix<C64>) -> DMatrix<C64> {
    // K = T^T M T^*
    transfers.transpose() * path_gram * transfers.map(|z| z.conj())
}

/// Four-slit screen density: every stage-1 path reaches the screen through
/// both stage-2 slits, weighted by the transfer amplitudes.
pub fn four_slit_density(
    state: &CompositeState,
    geometry: &SlitGeometry,
    xs: &[f64],
    mode: TransferMode,
) -> Result<ScreenDistribution> {
    check_labels(state, geometry.stage1.centers.len())?;
    let transfers = transfer_table(geometry, mode)?;
    let weights = four_slit_weights(&state.path_gram(), &transfers);
    let waves = stage_waves(geometry, 2, xs)?;
    assemble_density(&weights, &waves, xs)
}

/// Fringe contrast `(max - min)/(max + min)` averaged over consecutive
/// extrema of the envelope-normalized density inside `window`.
///
/// A ratio that is flat to 1e-12 has no fringes and returns its residual
/// contrast. Densities from fewer than two paths cannot carry fringes.
pub fn visibility(dist: &ScreenDistribution, window: (f64, f64)) -> Result<f64> {
    if dist.envelope.is_some() && dist.path_count < 2 {
        return Err(Error::InsufficientExtrema { found: 1 });
    }
    let ratio: Vec<f64> = dist
        .xs
        .iter()
        .enumerate()
        .filter(|(_, x)| **x >= window.0 && **x <= window.1)
        .map(|(k, _)| match &dist.envelope {
            Some(env) if env[k] > 0.0 => dist.raw[k] / env[k],
            Some(_) => 0.0,
            None => dist.raw[k],
        })
        .collect();
    if ratio.len() < 3 {
        return Err(Error::InsufficientExtrema { found: 0 });
    }
    let hi = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratio.iter().copied().fold(f64::INFINITY, f64::min);
    if dist.envelope.is_some() && hi - lo <= 1e-12 * hi.abs() {
        return Ok(if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 });
    }
    let mut extrema = Vec::new();
    let mut prev_slope = 0.0f64;
    for k in 1..ratio.len() {
        let slope = ratio[k] - ratio[k - 1];
        if slope == 0.0 {
            continue;
        }
        if prev_slope != 0.0 && slope.signum() != prev_slope.signum() {
            extrema.push(ratio[k - 1]);
        }
        prev_slope = slope;
    }
    if extrema.len() < 3 {
        return Err(Error::InsufficientExtrema { found: extrema.len() });
    }
    let contrasts: Vec<f64> = extrema
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].max(w[1]), w[0].min(w[1]));
            (a - b) / (a + b)
        })
        .collect();
    Ok(contrasts.iter().sum::<f64>() / contrasts.len() as f64)
}

/// Central window of half-width two packet widths around the final-stage slits.
pub fn central_window(geometry: &SlitGeometry) -> (f64, f64) {
    let stage = geometry.last_stage();
    let spread = geometry.spread_at_screen(stage).unwrap_or(geometry.stage1.sigma);
    let centers = geometry.stage(stage).map(|s| s.centers.clone()).unwrap_or_default();
    let mid = centers.iter().sum::<f64>() / centers.len().max(1) as f64;
    (mid - 2.0 * spread, mid + 2.0 * spread)
}
