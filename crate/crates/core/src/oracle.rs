//! Brute-force reference simulator on the full tensor product
//! `path (x) atoms (x) Fock_1 (x) Fock_2`.
//!
//! Every operation is built as an explicit local matrix and applied by
//! strided gather/scatter. Exponentials come from Hermitian
//! eigendecompositions rather than series, and coherent states are built from
//! log-factorials, so this module shares no numerics with the branch engine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::branch::{sample_level, CompositeState, MeasureMode, MeasurementRecord, IMPOSSIBLE_PROBABILITY};
use crate::fock::Parity;
use crate::interactions::AtomKind;
use crate::scenarios::config::ScenarioConfig;
use crate::scenarios::script::{BranchTrace, FieldPrep, Op, Script};
use crate::{Error, Result};

/// Largest Hilbert-space dimension the oracle accepts.
pub const DIMENSION_LIMIT: usize = 1_000_000;
/// Bound on `max |U^dag U - I|` for every matrix the oracle builds.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Default per-step residual threshold for engine comparison.
pub const RESIDUAL_THRESHOLD: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    dims: Vec<usize>,
    strides: Vec<usize>,
    amps: Vec<C64>,
}

fn strides_for(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

impl DenseState {
    /// Zero vector over the given factor dimensions.
    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let dim = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
        if dim > DIMENSION_LIMIT {
            return Err(Error::DimensionTooLarge { dim, limit: DIMENSION_LIMIT });
        }
        let strides = strides_for(&dims);
        Ok(Self { dims, strides, amps: vec![ZERO; dim] })
    }

    /// Kronecker product of per-factor vectors, first factor most significant.
    pub fn product(factors: &[Vec<C64>]) -> Result<Self> {
        let mut state = Self::zeros(factors.iter().map(Vec::len).collect())?;
        let mut acc = vec![ONE];
        for f in factors {
            acc = acc.iter().flat_map(|a| f.iter().map(move |b| a * b)).collect();
        }
        state.amps = acc;
        Ok(state)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(C64::norm_sqr).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.amps {
            *z *= factor;
        }
    }

    /// Base offsets of every configuration of the factors not in `sites`.
    fn rest_bases(&self, sites: &[usize]) -> Vec<usize> {
        let mut bases = vec![0usize];
        for (k, (&d, &s)) in self.dims.iter().zip(&self.strides).enumerate() {
            if sites.contains(&k) {
                continue;
            }
            bases = bases.iter().flat_map(|b| (0..d).map(move |i| b + i * s)).collect();
        }
        bases
    }

    fn local_offsets(&self, sites: &[usize]) -> Vec<usize> {
        let mut offsets = vec![0usize];
        for &k in sites {
            let (d, s) = (self.dims[k], self.strides[k]);
            offsets = offsets.iter().flat_map(|o| (0..d).map(move |i| o + i * s)).collect();
        }
        offsets
    }

    /// Applies `m`, acting on the ordered factor list `sites`, as
    /// `m (x) identity`.
    pub fn apply_local(&mut self, sites: &[usize], m: &DMatrix<C64>) {
        let offsets = self.local_offsets(sites);
        assert_eq!(m.nrows(), offsets.len());
        let mut buf = DVector::from_element(offsets.len(), ZERO);
        for base in self.rest_bases(sites) {
            for (slot, off) in buf.iter_mut().zip(&offsets) {
                *slot = self.amps[base + off];
            }
            let out = m * &buf;
            for (v, off) in out.iter().zip(&offsets) {
                self.amps[base + off] = *v;
            }
        }
    }

    /// Reduced density matrix of factor 0 (the path register).
    pub fn path_gram(&self) -> DMatrix<C64> {
        let paths = self.dims[0];
        let block = self.strides[0];
        DMatrix::from_fn(paths, paths, |p, q| {
            (0..block).map(|r| self.amps[p * block + r] * self.amps[q * block + r].conj()).sum()
        })
    }

    /// Probability that factor `site` is found in `level`.
    pub fn level_weight(&self, site: usize, level: usize) -> f64 {
        let mut p = self.clone();
        p.apply_local(&[site], &projector(self.dims[site], level));
        p.norm_sq() / self.norm_sq()
    }
}

/// Expands a branch-engine state onto the dense basis.
pub fn from_composite(state: &CompositeState) -> Result<DenseState> {
    let layout = state.layout();
    let mut dims = vec![layout.paths().len()];
    dims.extend(layout.atoms().iter().map(|a| a.kind.dim()));
    dims.extend(layout.cavities().iter().map(|c| c.truncation + 1));
    let mut out = DenseState::zeros(dims)?;
    for b in state.branches() {
        let mut factors = Vec::with_capacity(out.dims.len());
        let mut path = vec![ZERO; layout.paths().len()];
        path[b.path] = b.coefficient;
        factors.push(path);
        factors.extend(b.atoms.iter().map(|a| a.amplitudes().to_vec()));
        factors.extend(b.fields.iter().map(|f| f.amplitudes().to_vec()));
        let term = DenseState::product(&factors)?;
        for (o, t) in out.amps.iter_mut().zip(&term.amps) {
            *o += t;
        }
    }
    Ok(out)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Coherent amplitudes from `exp(-|a|^2/2 + n ln|a| - ln(n!)/2 + i n arg a)`.
pub fn coherent_vector(alpha: C64, truncation: usize) -> Vec<C64> {
    let r = alpha.norm();
    if r == 0.0 {
        let mut v = vec![ZERO; truncation + 1];
        v[0] = ONE;
        return v;
    }
    let theta = alpha.arg();
    (0..=truncation)
        .map(|n| {
            let log_mag = -0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_factorial(n);
            C64::from_polar(log_mag.exp(), theta * n as f64)
        })
        .collect()
}

fn prep_vector(prep: &FieldPrep, truncation: usize) -> Vec<C64> {
    match *prep {
        FieldPrep::Coherent(alpha) => coherent_vector(alpha, truncation),
        FieldPrep::Cat { alpha, parity } => {
            let sign = match parity {
                Parity::Even => 1.0,
                Parity::Odd => -1.0,
            };
            let v: Vec<C64> = coherent_vector(alpha, truncation)
                .iter()
                .zip(coherent_vector(-alpha, truncation))
                .map(|(a, b)| a + b * sign)
                .collect();
            let norm = v.iter().map(C64::norm_sqr).sum::<f64>().sqrt();
            v.into_iter().map(|z| z / norm).collect()
        }
    }
}

pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// `exp(-i t H)` for Hermitian `H`.
fn hermitian_exp(h: DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(h);
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -t * l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn annihilation(truncation: usize) -> DMatrix<C64> {
    let d = truncation + 1;
    DMatrix::from_fn(d, d, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { ZERO })
}

/// `D(beta) = exp(beta a^dag - beta^* a) = exp(-i H)` with
/// `H = i (beta a^dag - beta^* a)`.
pub fn displacement_matrix(beta: C64, truncation: usize) -> DMatrix<C64> {
    let a = annihilation(truncation);
    let ad = a.adjoint();
    let i = C64::new(0.0, 1.0);
    let h = (ad * beta - a * beta.conj()) * i;
    hermitian_exp(h, 1.0)
}

/// Resonant Jaynes-Cummings propagator on `two-level (x) Fock`, from
/// `H = sigma_+ a + sigma_- a^dag` in units of the coupling.
pub fn jc_matrix(gt: f64, truncation: usize) -> DMatrix<C64> {
    let d = truncation + 1;
    let a = annihilation(truncation);
    // levels: 0 = f (lower), 1 = e (upper); sigma_+ = |e><f|
    let mut sigma_plus = DMatrix::from_element(2, 2, ZERO);
    sigma_plus[(1, 0)] = ONE;
    let h = sigma_plus.kronecker(&a) + sigma_plus.adjoint().kronecker(&a.adjoint());
    debug_assert_eq!(h.nrows(), 2 * d);
    hermitian_exp(h, gt)
}

/// Dispersive passage of a lambda atom (levels a, b, c) through a cavity,
/// with number phase `p_n = e^{i phi n}`: `|a,n> -> -p_n |a,n>`, and on the
/// b/c plane `p_n |+><+| + |-><-|` with `|+-> = (|b> +- |c>)/sqrt 2`.
pub fn dispersive_matrix(phi: f64, truncation: usize) -> DMatrix<C64> {
    let d = truncation + 1;
    let mut u = DMatrix::from_element(3 * d, 3 * d, ZERO);
    let plus = [0.0, 1.0, 1.0].map(|v| v / 2f64.sqrt());
    let minus = [0.0, 1.0, -1.0].map(|v| v / 2f64.sqrt());
    for n in 0..d {
        let p = C64::from_polar(1.0, phi * n as f64);
        u[(n, n)] = -p;
        for i in 1..3 {
            for j in 1..3 {
                u[(i * d + n, j * d + n)] = p * plus[i] * plus[j] + ONE * minus[i] * minus[j];
            }
        }
    }
    u
}

/// Dispersive operator conditioned on the path register: applied on paths
/// routed through the cavity, identity elsewhere.
fn conditional_dispersive(phi: f64, truncation: usize, paths: usize, active: &[bool]) -> DMatrix<C64> {
    let local = dispersive_matrix(phi, truncation);
    let block = local.nrows();
    let mut u = DMatrix::from_element(paths * block, paths * block, ZERO);
    for (p, &on) in active.iter().enumerate() {
        let sub = if on { local.clone() } else { DMatrix::identity(block, block) };
        u.view_mut((p * block, p * block), (block, block)).copy_from(&sub);
    }
    u
}

pub fn projector(dim: usize, level: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |i, j| if i == j && i == level { ONE } else { ZERO })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrace {
    pub labels: Vec<String>,
    /// Initial state followed by the state after each step.
    pub states: Vec<DenseState>,
    pub records: Vec<MeasurementRecord>,
    /// Largest unitarity defect among the matrices built for this run.
    pub unitarity_defect: f64,
}

/// Runs the scripted experiment a configuration describes.
pub fn dense_run(cfg: &ScenarioConfig) -> Result<DenseTrace> {
    dense_run_script(&Script::from_config(cfg)?)
}

pub fn dense_run_script(script: &Script) -> Result<DenseTrace> {
    let layout = &script.layout;
    let paths = layout.paths().len();
    let n_atoms = layout.atoms().len();
    let atom_site = |id: &str| layout.atom_index(id).map(|k| 1 + k);
    let cavity_site = |id: &str| layout.cavity_index(id).map(|k| 1 + n_atoms + k);

    let mut factors = vec![vec![C64::new((paths as f64).sqrt().recip(), 0.0); paths]];
    for a in layout.atoms() {
        let level = match a.kind {
            AtomKind::Lambda => script.atom_level,
            AtomKind::TwoLevel => 0,
        };
        let mut v = vec![ZERO; a.kind.dim()];
        v[level] = ONE;
        factors.push(v);
    }
    for (prep, spec) in script.fields.iter().zip(layout.cavities()) {
        factors.push(prep_vector(prep, spec.truncation));
    }
    let dims: Vec<usize> = factors.iter().map(Vec::len).collect();
    DenseState::zeros(dims)?;
    let mut state = DenseState::product(&factors)?;

    let mut states = vec![state.clone()];
    let mut labels = Vec::with_capacity(script.steps.len());
    let mut records = Vec::new();
    let mut defect = 0.0f64;
    let mut checked = |u: DMatrix<C64>| -> Result<DMatrix<C64>> {
        let d = unitarity_defect(&u);
        defect = defect.max(d);
        if d >= UNITARITY_TOL {
            return Err(Error::ConfigMismatch(format!("oracle matrix unitarity defect {d:e}")));
        }
        Ok(u)
    };

    for step in &script.steps {
        match &step.op {
            Op::Interact { cavity, atom, phi } => {
                let cav = layout.cavity_index(cavity)?;
                let active: Vec<bool> = (0..paths).map(|p| layout.route(p) == Some(cav)).collect();
                let n = layout.cavities()[cav].truncation;
                let u = checked(conditional_dispersive(*phi, n, paths, &active))?;
                state.apply_local(&[0, atom_site(atom)?, cavity_site(cavity)?], &u);
            }
            Op::Inject { cavity, beta } => {
                let n = layout.cavities()[layout.cavity_index(cavity)?].truncation;
                let u = checked(displacement_matrix(*beta, n))?;
                state.apply_local(&[cavity_site(cavity)?], &u);
            }
            Op::Probe { cavity, atom, gt } => {
                let n = layout.cavities()[layout.cavity_index(cavity)?].truncation;
                let u = checked(jc_matrix(*gt, n))?;
                state.apply_local(&[atom_site(atom)?, cavity_site(cavity)?], &u);
            }
            Op::Measure { atom, mode } => {
                let site = atom_site(atom)?;
                let kind = layout.atoms()[site - 1].kind;
                let names = kind.level_names();
                let probs: Vec<(String, f64)> = (0..kind.dim())
                    .map(|l| (names[l].to_string(), state.level_weight(site, l).clamp(0.0, 1.0)))
                    .collect();
                let level = match mode {
                    MeasureMode::Postselect(o) => kind.level_index(o).ok_or_else(|| Error::InvalidOutcome {
                        atom: atom.clone(),
                        outcome: o.clone(),
                    })?,
                    MeasureMode::Sample(seed) => sample_level(&probs, *seed),
                };
                let (name, probability) = probs[level].clone();
                if probability < IMPOSSIBLE_PROBABILITY {
                    return Err(Error::ImpossibleOutcome { atom: atom.clone(), outcome: name, probability });
                }
                state.apply_local(&[site], &projector(kind.dim(), level));
                let norm = state.norm_sq().sqrt();
                state.scale(norm.recip());
                records.push(MeasurementRecord { atom_id: atom.clone(), outcome: name, probability });
            }
        }
        labels.push(step.label.clone());
        states.push(state.clone());
    }
    Ok(DenseTrace { labels, states, records, unitarity_defect: defect })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResidual {
    pub label: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Entry 0 is the initial state.
    pub steps: Vec<StepResidual>,
    pub max_residual: f64,
    pub unitarity_defect: f64,
    pub threshold: f64,
}

impl ResidualReport {
    pub fn passes(&self) -> bool {
        self.max_residual < self.threshold
    }
}

/// Max absolute amplitude difference after fixing the global phase of each
/// vector on the largest-magnitude entry of `reference`.
pub fn phase_aligned_residual(reference: &DenseState, other: &DenseState) -> Result<f64> {
    if reference.dims != other.dims {
        return Err(Error::ConfigMismatch(format!(
            "dimensions differ: {:?} vs {:?}",
            reference.dims, other.dims
        )));
    }
    let k = reference
        .amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let unit = |z: C64| if z.norm() > 0.0 { z.conj() / z.norm() } else { ONE };
    let (u, v) = (unit(reference.amps[k]), unit(other.amps[k]));
    Ok(reference.amps.iter().zip(&other.amps).map(|(d, b)| (d * u - b * v).norm()).fold(0.0, f64::max))
}

/// Step-by-step comparison of a dense trace with a branch-engine trace of the
/// same script.
pub fn compare(dense: &DenseTrace, branch: &BranchTrace) -> Result<ResidualReport> {
    if dense.states.len() != branch.states.len() {
        return Err(Error::ConfigMismatch(format!(
            "traces have {} and {} states",
            dense.states.len(),
            branch.states.len()
        )));
    }
    let outcomes = |r: &[MeasurementRecord]| r.iter().map(|m| (m.atom_id.clone(), m.outcome.clone())).collect::<Vec<_>>();
    if outcomes(&dense.records) != outcomes(&branch.records) {
        return Err(Error::ConfigMismatch("measurement outcomes differ between engines".into()));
    }
    let mut steps = Vec::with_capacity(dense.states.len());
    for (k, (d, b)) in dense.states.iter().zip(&branch.states).enumerate() {
        let residual = phase_aligned_residual(d, &from_composite(b)?)?;
        let label = if k == 0 { "initial".to_string() } else { dense.labels[k - 1].clone() };
        steps.push(StepResidual { label, residual });
    }
    let max_residual = steps.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(ResidualReport { steps, max_residual, unitarity_defect: dense.unitarity_defect, threshold: RESIDUAL_THRESHOLD })
}
