//! Atom-field dynamics: the far-detuned lambda-atom unitary and resonant
//! Jaynes-Cummings rotations of two-level probes.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{number_phase, FieldState};

/// Level indices of a lambda atom.
pub mod lambda {
    pub const A: usize = 0;
    pub const B: usize = 1;
    pub const C: usize = 2;
    pub const NAMES: [&str; 3] = ["a", "b", "c"];
}

/// Level indices of a two-level probe atom.
pub mod two_level {
    pub const F: usize = 0;
    pub const E: usize = 1;
    pub const NAMES: [&str; 2] = ["f", "e"];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    Lambda,
    TwoLevel,
}

impl AtomKind {
    pub fn dim(self) -> usize {
        self.level_names().len()
    }

    pub fn level_names(self) -> &'static [&'static str] {
        match self {
            AtomKind::Lambda => &lambda::NAMES,
            AtomKind::TwoLevel => &two_level::NAMES,
        }
    }

    pub fn level_index(self, name: &str) -> Option<usize> {
        self.level_names().iter().position(|l| *l == name)
    }
}

/// Internal state of one atom as amplitudes over its levels.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomState {
    kind: AtomKind,
    amps: Vec<C64>,
}

pub type LambdaAtomState = AtomState;
pub type TwoLevelAtomState = AtomState;

impl AtomState {
    pub fn new(kind: AtomKind, amps: Vec<C64>) -> Self {
        assert_eq!(amps.len(), kind.dim());
        Self { kind, amps }
    }

    pub fn basis(kind: AtomKind, level: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); kind.dim()];
        amps[level] = C64::new(1.0, 0.0);
        Self { kind, amps }
    }

    pub fn kind(&self) -> AtomKind {
        self.kind
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.kind == other.kind
            && self.amps.iter().zip(&other.amps).all(|(a, b)| (a - b).norm() <= tol)
    }
}

/// Physical parameters of the dispersive and resonant interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub g: Option<f64>,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub phi: f64,
    pub jc_gt: f64,
}

impl InteractionParams {
    /// Dispersive phase `2 g^2 tau / delta`.
    pub fn dispersive(g: f64, delta: f64, tau: f64, jc_gt: f64) -> Result<Self> {
        if delta == 0.0 || !delta.is_finite() {
            return Err(Error::InvalidGeometry("detuning must be nonzero in the dispersive regime".into()));
        }
        Ok(Self { g: Some(g), delta: Some(delta), tau: Some(tau), phi: 2.0 * g * g * tau / delta, jc_gt })
    }

    pub fn with_phase(phi: f64, jc_gt: f64) -> Self {
        Self { g: None, delta: None, tau: None, phi, jc_gt }
    }
}

/// Default probe interaction `gt = pi / (2 sqrt(nbar))` with `nbar = |2 alpha|^2`.
pub fn default_probe_gt(alpha: C64) -> f64 {
    let nbar = (2.0 * alpha).norm_sqr();
    if nbar == 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        std::f64::consts::PI / (2.0 * nbar.sqrt())
    }
}

/// Joint atom-cavity amplitudes: one field vector per atom level.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomFieldJoint {
    kind: AtomKind,
    rows: Vec<FieldState>,
}

impl AtomFieldJoint {
    pub fn new(kind: AtomKind, rows: Vec<FieldState>) -> Result<Self> {
        if rows.len() != kind.dim() {
            return Err(Error::LayoutMismatch(format!(
                "{kind:?} atom needs {} rows, got {}",
                kind.dim(),
                rows.len()
            )));
        }
        let n = rows[0].truncation();
        if let Some(bad) = rows.iter().find(|r| r.truncation() != n) {
            return Err(Error::TruncationMismatch { left: n, right: bad.truncation() });
        }
        Ok(Self { kind, rows })
    }

    pub fn product(atom: &AtomState, field: &FieldState) -> Self {
        let rows = atom.amplitudes().iter().map(|a| field.scaled(*a)).collect();
        Self { kind: atom.kind(), rows }
    }

    pub fn kind(&self) -> AtomKind {
        self.kind
    }

    pub fn row(&self, level: usize) -> &FieldState {
        &self.rows[level]
    }

    pub fn rows(&self) -> &[FieldState] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FieldState> {
        self.rows
    }

    pub fn truncation(&self) -> usize {
        self.rows[0].truncation()
    }

    pub fn norm_sq(&self) -> f64 {
        self.rows.iter().map(FieldState::norm_sq).sum()
    }
}

/// Far-detuned lambda-atom unitary for phase `phi`.
///
/// Level `a` picks up `-e^{i phi n}`; the `(b, c)` pair is mixed per photon
/// number by `[[(p+1)/2, (p-1)/2], [(p-1)/2, (p+1)/2]]` with `p = e^{i phi n}`.
pub fn dispersive_lambda(joint: &AtomFieldJoint, phi: f64) -> Result<AtomFieldJoint> {
    if joint.kind != AtomKind::Lambda {
        return Err(Error::LayoutMismatch("dispersive interaction needs a lambda atom".into()));
    }
    let n_max = joint.truncation();
    let a = joint.rows[lambda::A].amplitudes();
    let b = joint.rows[lambda::B].amplitudes();
    let c = joint.rows[lambda::C].amplitudes();
    let mut out_a = Vec::with_capacity(n_max + 1);
    let mut out_b = Vec::with_capacity(n_max + 1);
    let mut out_c = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let p = number_phase(phi, n);
        let even = (p + 1.0) * 0.5;
        let odd = (p - 1.0) * 0.5;
        out_a.push(-p * a[n]);
        out_b.push(even * b[n] + odd * c[n]);
        out_c.push(odd * b[n] + even * c[n]);
    }
    Ok(AtomFieldJoint {
        kind: AtomKind::Lambda,
        rows: vec![
            FieldState::from_amplitudes(out_a),
            FieldState::from_amplitudes(out_b),
            FieldState::from_amplitudes(out_c),
        ],
    })
}

/// Resonant Jaynes-Cummings evolution as exact rotations in each
/// `{|f,n>, |e,n-1>}` manifold.
///
/// `|f,0>` is invariant. `|e,N>` would pair with `|f,N+1>`, which lies
/// outside the truncation, so it is left unchanged as well.
pub fn jc_evolve(joint: &AtomFieldJoint, gt: f64) -> Result<AtomFieldJoint> {
    if joint.kind != AtomKind::TwoLevel {
        return Err(Error::LayoutMismatch("Jaynes-Cummings evolution needs a two-level atom".into()));
    }
    let n_max = joint.truncation();
    let f = joint.rows[two_level::F].amplitudes();
    let e = joint.rows[two_level::E].amplitudes();
    let mut out_f = f.to_vec();
    let mut out_e = e.to_vec();
    let minus_i = C64::new(0.0, -1.0);
    for n in 1..=n_max {
        let theta = gt * (n as f64).sqrt();
        let (s, co) = theta.sin_cos();
        let fn_ = f[n];
        let em = e[n - 1];
        out_f[n] = co * fn_ + minus_i * s * em;
        out_e[n - 1] = co * em + minus_i * s * fn_;
    }
    Ok(AtomFieldJoint {
        kind: AtomKind::TwoLevel,
        rows: vec![FieldState::from_amplitudes(out_f), FieldState::from_amplitudes(out_e)],
    })
}

/// `sum_n |c_{n+1}|^2 sin^2(gt sqrt(n+1))` for a probe entering in `|f>`.
pub fn jc_excitation_probability(field: &FieldState, gt: f64) -> Result<f64> {
    let norm_sq = field.norm_sq();
    if !field.is_normalized() {
        return Err(Error::Unnormalized { norm_sq });
    }
    Ok(field
        .amplitudes()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, c)| c.norm_sqr() * (gt * (n as f64).sqrt()).sin().powi(2))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_cat, make_coherent, parity_project, Parity, DEFAULT_TAIL_TOL};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn basis_joint(kind: AtomKind, level: usize, field: &FieldState) -> AtomFieldJoint {
        AtomFieldJoint::product(&AtomState::basis(kind, level), field)
    }

    #[test]
    fn lambda_on_coherent_gives_cats() {
        let n = 30;
        let alpha = c(1.0);
        let coh = make_coherent(alpha, n, DEFAULT_TAIL_TOL).unwrap();
        let out = dispersive_lambda(&basis_joint(AtomKind::Lambda, lambda::B, &coh), PI).unwrap();
        let plus = make_cat(alpha, Parity::Even, n, DEFAULT_TAIL_TOL, false).unwrap();
        let minus = make_cat(alpha, Parity::Odd, n, DEFAULT_TAIL_TOL, false).unwrap();
        assert!(out.row(lambda::A).is_zero());
        assert!(out.row(lambda::B).max_abs_diff(&plus.scaled(c(0.5))).unwrap() < 1e-16);
        assert!(out.row(lambda::C).max_abs_diff(&minus.scaled(c(-0.5))).unwrap() < 1e-16);
    }

    #[test]
    fn lambda_zero_phase() {
        let vac = FieldState::vacuum(6);
        let j = basis_joint(AtomKind::Lambda, lambda::B, &vac);
        assert_eq!(dispersive_lambda(&j, 0.0).unwrap(), j);
        let ja = basis_joint(AtomKind::Lambda, lambda::A, &vac);
        let out = dispersive_lambda(&ja, 0.0).unwrap();
        assert_eq!(out.row(lambda::A).amplitudes()[0], c(-1.0));
    }

    #[test]
    fn lambda_on_even_cat_stays_in_b() {
        let plus = make_cat(c(1.5), Parity::Even, 40, DEFAULT_TAIL_TOL, true).unwrap();
        let out = dispersive_lambda(&basis_joint(AtomKind::Lambda, lambda::B, &plus), PI).unwrap();
        assert_eq!(out.row(lambda::B), &plus);
        assert!(out.row(lambda::C).is_zero());
    }

    #[test]
    fn lambda_pi_decomposes_into_parity_sectors() {
        let psi = make_coherent(C64::new(0.9, 0.4), 30, DEFAULT_TAIL_TOL).unwrap();
        let out = dispersive_lambda(&basis_joint(AtomKind::Lambda, lambda::B, &psi), PI).unwrap();
        assert_eq!(out.row(lambda::B), &parity_project(&psi, Parity::Even));
        assert_eq!(out.row(lambda::C), &parity_project(&psi, Parity::Odd).scaled(c(-1.0)));
    }

    #[test]
    fn jc_vacuum_and_single_photon() {
        let vac = FieldState::vacuum(5);
        let j = basis_joint(AtomKind::TwoLevel, two_level::F, &vac);
        for gt in [0.1, 1.0, 7.3] {
            assert_eq!(jc_evolve(&j, gt).unwrap(), j);
        }
        let one = FieldState::fock(1, 5);
        let out = jc_evolve(&basis_joint(AtomKind::TwoLevel, two_level::F, &one), FRAC_PI_2).unwrap();
        assert!((out.row(two_level::E).amplitudes()[0] - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(out.row(two_level::F).norm_sq() < 1e-30);
        assert!((jc_excitation_probability(&one, 0.4).unwrap() - 0.4f64.sin().powi(2)).abs() < 1e-15);
        assert_eq!(jc_excitation_probability(&vac, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn jc_coherent_matches_manifold_oracle() {
        let n = 40;
        let gt = 0.37;
        let field = make_coherent(c(-2.0), n, DEFAULT_TAIL_TOL).unwrap();
        let out = jc_evolve(&basis_joint(AtomKind::TwoLevel, two_level::F, &field), gt).unwrap();
        let coeffs = field.amplitudes();
        for k in 0..n {
            let want = C64::new(0.0, -1.0) * coeffs[k + 1] * (gt * ((k + 1) as f64).sqrt()).sin();
            assert!((out.row(two_level::E).amplitudes()[k] - want).norm() < 1e-16);
            let want_f = coeffs[k] * (gt * (k as f64).sqrt()).cos();
            assert!((out.row(two_level::F).amplitudes()[k] - want_f).norm() < 1e-16);
        }
        let p = jc_excitation_probability(&field, 0.7).unwrap();
        let evolved = jc_evolve(&basis_joint(AtomKind::TwoLevel, two_level::F, &field), 0.7).unwrap();
        assert!((evolved.row(two_level::E).norm_sq() - p).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_probe_field_rejected() {
        let f = FieldState::fock(1, 4).scaled(c(2.0));
        assert!(matches!(jc_excitation_probability(&f, 1.0), Err(Error::Unnormalized { .. })));
    }

    #[test]
    fn dispersive_phase_from_params() {
        let p = InteractionParams::dispersive(2.0, 8.0, PI, 0.5).unwrap();
        assert!((p.phi - PI).abs() < 1e-15);
        assert!(InteractionParams::dispersive(1.0, 0.0, 1.0, 0.5).is_err());
    }

    fn arb_joint(kind: AtomKind, n: usize) -> impl Strategy<Value = AtomFieldJoint> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), kind.dim() * (n + 1)).prop_map(move |v| {
            let amps: Vec<C64> = v.into_iter().map(|(r, i)| C64::new(r, i)).collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let rows = amps
                .chunks(n + 1)
                .map(|ch| FieldState::from_amplitudes(ch.iter().map(|a| a / norm).collect()))
                .collect();
            AtomFieldJoint::new(kind, rows).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn dispersive_is_unitary(j in arb_joint(AtomKind::Lambda, 10), phi in -7.0f64..7.0) {
            let out = dispersive_lambda(&j, phi).unwrap();
            prop_assert!((out.norm_sq() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn jc_is_unitary_and_reversible(j in arb_joint(AtomKind::TwoLevel, 10), gt in -5.0f64..5.0) {
            let out = jc_evolve(&j, gt).unwrap();
            prop_assert!((out.norm_sq() - 1.0).abs() < 1e-14);
            let back = jc_evolve(&out, -gt).unwrap();
            for (r, s) in back.rows().iter().zip(j.rows()) {
                prop_assert!(r.max_abs_diff(s).unwrap() < 1e-13);
            }
            prop_assert_eq!(jc_evolve(&j, 0.0).unwrap(), j);
        }
    }
}
