//! Truncated single-mode Fock space.
//!
//! A [`FieldState`] holds the amplitudes `c_0 ..= c_N` of one cavity mode.
//! States are not required to be normalized; cat states in particular are
//! kept in the unnormalized `|alpha> +- |-alpha>` form unless requested
//! otherwise.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on the coherent-state mass lost beyond the cutoff.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Tolerance used when deciding whether a state is normalized.
pub const NORM_TOL: f64 = 1e-12;

/// Parity sector of a cat state or projector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    #[serde(rename = "+")]
    Even,
    #[serde(rename = "-")]
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    fn keeps(self, n: usize) -> bool {
        n.is_multiple_of(2) == (self == Parity::Even)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    amps: Vec<C64>,
}

impl FieldState {
    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        assert!(!amps.is_empty(), "a field state needs at least the vacuum component");
        Self { amps }
    }

    pub fn vacuum(truncation: usize) -> Self {
        Self::fock(0, truncation)
    }

    pub fn fock(n: usize, truncation: usize) -> Self {
        assert!(n <= truncation);
        let mut amps = vec![C64::new(0.0, 0.0); truncation + 1];
        amps[n] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn zeros(truncation: usize) -> Self {
        Self { amps: vec![C64::new(0.0, 0.0); truncation + 1] }
    }

    pub fn truncation(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sq() - 1.0).abs() < NORM_TOL
    }

    /// True when every amplitude is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.amps.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn mean_photon_number(&self) -> f64 {
        let norm = self.norm_sq();
        if norm == 0.0 {
            return 0.0;
        }
        self.amps
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum::<f64>()
            / norm
    }

    pub fn normalized(&self) -> Self {
        let norm = self.norm_sq().sqrt();
        self.scaled(C64::new(1.0 / norm, 0.0))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { amps: self.amps.iter().map(|c| c * factor).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_truncation(self, other)?;
        Ok(Self {
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_truncation(self, other)?;
        Ok(Self {
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a - b).collect(),
        })
    }

    /// Largest componentwise distance, or `None` on truncation mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.amps.len() != other.amps.len() {
            return None;
        }
        Some(
            self.amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
        )
    }

    /// Elementwise equality within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other).is_some_and(|d| d <= tol)
    }
}

fn check_truncation(a: &FieldState, b: &FieldState) -> Result<()> {
    if a.truncation() != b.truncation() {
        return Err(Error::TruncationMismatch { left: a.truncation(), right: b.truncation() });
    }
    Ok(())
}

/// Poisson mass `sum_{n > truncation} e^{-mean} mean^n / n!`, summed directly
/// from the first omitted term so tiny tails keep their relative precision.
pub fn poisson_tail(mean: f64, truncation: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_fact = 0.0;
    for k in 2..=truncation + 1 {
        ln_fact += (k as f64).ln();
    }
    let mut n = truncation + 1;
    let mut ln_term = -mean + n as f64 * ln_mean - ln_fact;
    let mut sum = 0.0;
    loop {
        let term = ln_term.exp();
        sum += term;
        if n as f64 > mean && term <= sum * 1e-17 {
            break;
        }
        if n > truncation + 100_000 {
            break;
        }
        n += 1;
        ln_term += ln_mean - (n as f64).ln();
    }
    sum.min(1.0)
}

/// Default cutoff: `ceil(4 r^2 + 20)` for the largest amplitude `r` that can
/// occur in an experiment.
pub fn default_truncation(max_amplitude: f64) -> usize {
    (4.0 * max_amplitude * max_amplitude + 20.0).ceil() as usize
}

fn coherent_amplitudes(alpha: C64, truncation: usize) -> Vec<C64> {
    let mut amps = Vec::with_capacity(truncation + 1);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(c);
    for n in 1..=truncation {
        c = c * alpha / (n as f64).sqrt();
        amps.push(c);
    }
    amps
}

fn check_tail(alpha_abs: f64, truncation: usize, tail_tol: f64) -> Result<()> {
    let tail = poisson_tail(alpha_abs * alpha_abs, truncation);
    if tail >= tail_tol {
        return Err(Error::CutoffTooSmall { truncation, tail, tol: tail_tol });
    }
    Ok(())
}

/// `|alpha>` with `c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!)`.
pub fn make_coherent(alpha: C64, truncation: usize, tail_tol: f64) -> Result<FieldState> {
    check_tail(alpha.norm(), truncation, tail_tol)?;
    Ok(FieldState { amps: coherent_amplitudes(alpha, truncation) })
}

/// `|alpha> +- |-alpha>`, optionally divided by `sqrt(2 (1 +- e^{-2|alpha|^2}))`.
pub fn make_cat(
    alpha: C64,
    parity: Parity,
    truncation: usize,
    tail_tol: f64,
    normalize: bool,
) -> Result<FieldState> {
    check_tail(alpha.norm(), truncation, tail_tol)?;
    if parity == Parity::Odd && alpha.norm_sqr() == 0.0 {
        return Err(Error::DegenerateCat);
    }
    let plus = coherent_amplitudes(alpha, truncation);
    let minus = coherent_amplitudes(-alpha, truncation);
    let sign = parity.sign();
    let mut amps: Vec<C64> = plus.iter().zip(&minus).map(|(p, m)| p + m * sign).collect();
    if normalize {
        let norm = (2.0 * (1.0 + sign * (-2.0 * alpha.norm_sqr()).exp())).sqrt();
        for c in &mut amps {
            *c /= norm;
        }
    }
    Ok(FieldState { amps })
}

/// Phase `e^{i phi n}`; exact `(-1)^n` at `phi = pi` so parity stays exact.
pub(crate) fn number_phase(phi: f64, n: usize) -> C64 {
    if phi == 0.0 {
        C64::new(1.0, 0.0)
    } else if phi == PI {
        C64::new(if n.is_multiple_of(2) { 1.0 } else { -1.0 }, 0.0)
    } else {
        C64::from_polar(1.0, phi * n as f64)
    }
}

/// `e^{i phi a^dag a}` acting on `state`.
pub fn apply_number_phase(state: &FieldState, phi: f64) -> FieldState {
    FieldState {
        amps: state
            .amps
            .iter()
            .enumerate()
            .map(|(n, c)| c * number_phase(phi, n))
            .collect(),
    }
}

/// Projection onto the even (`Parity::Even`) or odd photon-number sector.
///
/// Both outputs are true projections, `(1 +- P)/2` with `P` the parity
/// operator. The lambda-atom unitary instead carries `(P - 1)/2`, the
/// negative of the odd projection; see [`signed_parity_operator`].
pub fn parity_project(state: &FieldState, parity: Parity) -> FieldState {
    FieldState {
        amps: state
            .amps
            .iter()
            .enumerate()
            .map(|(n, c)| if parity.keeps(n) { *c } else { C64::new(0.0, 0.0) })
            .collect(),
    }
}

/// `(P + 1)/2` for even, `(P - 1)/2` for odd, as written in the dispersive
/// unitary at `phi = pi`.
pub fn signed_parity_operator(state: &FieldState, parity: Parity) -> FieldState {
    let projected = parity_project(state, parity);
    match parity {
        Parity::Even => projected,
        Parity::Odd => projected.scaled(C64::new(-1.0, 0.0)),
    }
}

/// `sum_n conj(a_n) b_n`.
pub fn inner(a: &FieldState, b: &FieldState) -> Result<C64> {
    check_truncation(a, b)?;
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// `|<a|b>|^2 / (<a|a><b|b>)`.
pub fn fidelity(a: &FieldState, b: &FieldState) -> Result<f64> {
    let overlap = inner(a, b)?;
    Ok(overlap.norm_sqr() / (a.norm_sq() * b.norm_sq()))
}

/// `D(beta) = exp(beta a^dag - beta^* a)` on the truncated space.
///
/// The generator is applied by a scaled Taylor series: the interval is cut
/// into substeps short enough that each series converges to machine
/// precision in a few dozen terms. The pre-check bounds the largest
/// amplitude the output can carry by `sqrt(<n>) + |beta|`.
pub fn displace(state: &FieldState, beta: C64, tail_tol: f64) -> Result<FieldState> {
    if beta.norm_sqr() == 0.0 {
        return Ok(state.clone());
    }
    let truncation = state.truncation();
    let envelope = state.mean_photon_number().sqrt() + beta.norm();
    check_tail(envelope, truncation, tail_tol)?;

    let generator_bound = 2.0 * beta.norm() * (truncation as f64).sqrt().max(1.0);
    let substeps = (generator_bound / 0.5).ceil().max(1.0) as usize;
    let step = beta / substeps as f64;

    let mut current = state.amps.clone();
    let mut term = vec![C64::new(0.0, 0.0); truncation + 1];
    let mut next = vec![C64::new(0.0, 0.0); truncation + 1];
    for _ in 0..substeps {
        term.copy_from_slice(&current);
        let mut sum = current.clone();
        for k in 1..=60 {
            apply_generator(&term, step, &mut next);
            let inv_k = 1.0 / k as f64;
            let mut size = 0.0;
            for (t, nx) in term.iter_mut().zip(&next) {
                *t = nx * inv_k;
                size += t.norm_sqr();
            }
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
            if size < 1e-36 {
                break;
            }
        }
        current = sum;
    }
    Ok(FieldState { amps: current })
}

// out = (beta a^dag - beta^* a) v
fn apply_generator(v: &[C64], beta: C64, out: &mut [C64]) {
    let last = v.len() - 1;
    for n in 0..=last {
        let mut acc = C64::new(0.0, 0.0);
        if n > 0 {
            acc += beta * (n as f64).sqrt() * v[n - 1];
        }
        if n < last {
            acc -= beta.conj() * ((n + 1) as f64).sqrt() * v[n + 1];
        }
        out[n] = acc;
    }
}

/// Closed-form displacement of a coherent state:
/// `D(beta)|alpha> = e^{i Im(beta alpha^*)} |alpha + beta>`.
pub fn displace_coherent(
    alpha: C64,
    beta: C64,
    truncation: usize,
    tail_tol: f64,
) -> Result<FieldState> {
    let shifted = make_coherent(alpha + beta, truncation, tail_tol)?;
    let phase = C64::from_polar(1.0, (beta * alpha.conj()).im);
    Ok(shifted.scaled(phase))
}
