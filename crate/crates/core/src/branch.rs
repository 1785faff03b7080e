//! Composite atom-path-cavity states as explicit sums of product branches.
//!
//! Each [`Branch`] is one ket term: a coefficient, a discrete path label and
//! a pure register for every atom and cavity. Path labels are orthonormal,
//! so the norm and every Born probability only couple branches that share a
//! path, while the screen density also uses the cross-path overlaps.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, FieldState};
use crate::interactions::{
    dispersive_lambda, jc_evolve, two_level, AtomFieldJoint, AtomKind, AtomState,
};

/// Registers closer than this are treated as identical when coalescing.
pub const MERGE_TOL: f64 = 1e-14;

/// Postselection below this probability is rejected as impossible.
pub const IMPOSSIBLE_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub id: String,
    pub kind: AtomKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    pub id: String,
    pub truncation: usize,
    pub tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemLayout {
    paths: Vec<String>,
    atoms: Vec<AtomSpec>,
    cavities: Vec<CavitySpec>,
    // cavity index sitting behind each path, if any
    routes: Vec<Option<usize>>,
}

impl SystemLayout {
    pub fn new(paths: Vec<String>, atoms: Vec<AtomSpec>, cavities: Vec<CavitySpec>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::LayoutMismatch("at least one path label is required".into()));
        }
        let mut ids: Vec<&str> = paths
            .iter()
            .map(String::as_str)
            .chain(atoms.iter().map(|a| a.id.as_str()))
            .chain(cavities.iter().map(|c| c.id.as_str()))
            .collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::LayoutMismatch(format!("duplicate id `{}`", w[0])));
        }
        let routes = vec![None; paths.len()];
        Ok(Self { paths, atoms, cavities, routes })
    }

    /// Places `cavity` behind the slit of `path`.
    pub fn with_route(mut self, path: &str, cavity: &str) -> Result<Self> {
        let p = self.path_index(path)?;
        let c = self.cavity_index(cavity)?;
        self.routes[p] = Some(c);
        Ok(self)
    }

    pub fn paths(&self) -> &[String] {
        &self.paths
    }

    pub fn atoms(&self) -> &[AtomSpec] {
        &self.atoms
    }

    pub fn cavities(&self) -> &[CavitySpec] {
        &self.cavities
    }

    pub fn route(&self, path: usize) -> Option<usize> {
        self.routes[path]
    }

    pub fn path_index(&self, id: &str) -> Result<usize> {
        self.paths.iter().position(|p| p == id).ok_or_else(|| Error::UnknownId(id.into()))
    }

    pub fn atom_index(&self, id: &str) -> Result<usize> {
        self.atoms.iter().position(|a| a.id == id).ok_or_else(|| Error::UnknownId(id.into()))
    }

    pub fn cavity_index(&self, id: &str) -> Result<usize> {
        self.cavities.iter().position(|c| c.id == id).ok_or_else(|| Error::UnknownId(id.into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub coefficient: C64,
    pub path: usize,
    pub atoms: Vec<AtomState>,
    pub fields: Vec<FieldState>,
}

impl Branch {
    /// `<self registers | other registers>`, path and coefficients excluded.
    pub fn register_overlap(&self, other: &Branch) -> C64 {
        let mut acc = C64::new(1.0, 0.0);
        for (a, b) in self.atoms.iter().zip(&other.atoms) {
            acc *= a.inner(b);
        }
        for (a, b) in self.fields.iter().zip(&other.fields) {
            acc *= fock::inner(a, b).expect("layout fixes truncations");
        }
        acc
    }

    /// `Some(None)` when every register matches, `Some(Some(k))` when only
    /// cavity `k` differs, `None` otherwise.
    fn merge_slot(&self, other: &Branch) -> Option<Option<usize>> {
        if self.path != other.path
            || !self.atoms.iter().zip(&other.atoms).all(|(a, b)| a.approx_eq(b, MERGE_TOL))
        {
            return None;
        }
        let mut differing = None;
        for (k, (a, b)) in self.fields.iter().zip(&other.fields).enumerate() {
            if !a.approx_eq(b, MERGE_TOL) {
                if differing.is_some() {
                    return None;
                }
                differing = Some(k);
            }
        }
        Some(differing)
    }

    fn absorb(&mut self, other: Branch, slot: Option<usize>) {
        match slot {
            None => self.coefficient += other.coefficient,
            Some(k) => {
                let mine = self.fields[k].scaled(self.coefficient);
                let theirs = other.fields[k].scaled(other.coefficient);
                self.fields[k] = mine.add(&theirs).expect("same layout");
                self.coefficient = C64::new(1.0, 0.0);
            }
        }
    }

    fn is_null(&self) -> bool {
        (self.coefficient.re == 0.0 && self.coefficient.im == 0.0)
            || self.fields.iter().any(FieldState::is_zero)
            || self.atoms.iter().any(|a| a.norm_sq() == 0.0)
    }
}

/// How an atom measurement selects its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMode {
    Postselect(String),
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub atom_id: String,
    pub outcome: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    layout: SystemLayout,
    branches: Vec<Branch>,
}

impl CompositeState {
    pub fn new(layout: SystemLayout, branches: Vec<Branch>) -> Result<Self> {
        for b in &branches {
            if b.path >= layout.paths.len()
                || b.atoms.len() != layout.atoms.len()
                || b.fields.len() != layout.cavities.len()
            {
                return Err(Error::LayoutMismatch("branch registers do not match the layout".into()));
            }
            for (a, spec) in b.atoms.iter().zip(&layout.atoms) {
                if a.kind() != spec.kind {
                    return Err(Error::LayoutMismatch(format!("atom `{}` has the wrong kind", spec.id)));
                }
            }
            for (f, spec) in b.fields.iter().zip(&layout.cavities) {
                if f.truncation() != spec.truncation {
                    return Err(Error::TruncationMismatch { left: spec.truncation, right: f.truncation() });
                }
            }
            if !b.coefficient.re.is_finite() || !b.coefficient.im.is_finite() {
                return Err(Error::LayoutMismatch("non-finite branch coefficient".into()));
            }
        }
        Ok(Self { layout, branches })
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// `G_ij = c_i c_j^* <regs_j|regs_i>` over every branch pair.
    pub fn env_gram(&self) -> DMatrix<C64> {
        let n = self.branches.len();
        let mut g = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for i in 0..n {
            for j in 0..=i {
                let bi = &self.branches[i];
                let bj = &self.branches[j];
                let v = bi.coefficient * bj.coefficient.conj() * bj.register_overlap(bi);
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
        for i in 0..n {
            g[(i, i)].im = 0.0;
        }
        g
    }

    /// Gram matrix summed into path blocks: `M_pq = sum_{path_i=p, path_j=q} G_ij`.
    pub fn path_gram(&self) -> DMatrix<C64> {
        let g = self.env_gram();
        let p = self.layout.paths.len();
        let mut m = DMatrix::from_element(p, p, C64::new(0.0, 0.0));
        for (i, bi) in self.branches.iter().enumerate() {
            for (j, bj) in self.branches.iter().enumerate() {
                m[(bi.path, bj.path)] += g[(i, j)];
            }
        }
        m
    }

    pub fn norm_sq(&self) -> f64 {
        let g = self.env_gram();
        let mut acc = 0.0;
        for (i, bi) in self.branches.iter().enumerate() {
            for (j, bj) in self.branches.iter().enumerate() {
                if bi.path == bj.path {
                    acc += g[(i, j)].re;
                }
            }
        }
        acc
    }

    pub fn normalize(&self) -> Self {
        let scale = 1.0 / self.norm_sq().sqrt();
        let mut out = self.clone();
        for b in &mut out.branches {
            b.coefficient *= scale;
        }
        out
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &CompositeState) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for a in &self.branches {
            for b in &other.branches {
                if a.path == b.path {
                    acc += a.coefficient.conj() * b.coefficient * a.register_overlap(b);
                }
            }
        }
        acc
    }

    pub fn fidelity(&self, other: &CompositeState) -> f64 {
        self.overlap(other).norm_sqr() / (self.norm_sq() * other.norm_sq())
    }

    /// Net weight carried by each path label.
    pub fn path_weights(&self) -> Vec<f64> {
        let m = self.path_gram();
        (0..self.layout.paths.len()).map(|p| m[(p, p)].re).collect()
    }

    fn with_branches(&self, branches: Vec<Branch>) -> Self {
        let mut merged: Vec<Branch> = Vec::with_capacity(branches.len());
        for b in branches.into_iter().filter(|b| !b.is_null()) {
            let slot = merged.iter().enumerate().find_map(|(i, m)| m.merge_slot(&b).map(|s| (i, s)));
            if let Some((i, s)) = slot {
                merged[i].absorb(b, s);
            } else {
                merged.push(b);
            }
        }
        merged.retain(|b| !b.is_null());
        Self { layout: self.layout.clone(), branches: merged }
    }

    /// Lambda-atom passage through the cavity behind a slit. Only branches
    /// whose path routes through `cavity_id` are affected; each splits into
    /// one branch per populated atom level.
    pub fn apply_cavity_interaction(&self, cavity_id: &str, atom_id: &str, phi: f64) -> Result<Self> {
        let cav = self.layout.cavity_index(cavity_id)?;
        let atom = self.layout.atom_index(atom_id)?;
        if self.layout.atoms[atom].kind != AtomKind::Lambda {
            return Err(Error::LayoutMismatch(format!("atom `{atom_id}` is not a lambda atom")));
        }
        if !self.layout.routes.contains(&Some(cav)) {
            return Err(Error::MissingAssociation(cavity_id.into()));
        }
        let mut out = Vec::with_capacity(self.branches.len() * 3);
        for b in &self.branches {
            if self.layout.routes[b.path] != Some(cav) {
                out.push(b.clone());
                continue;
            }
            let joint = AtomFieldJoint::product(&b.atoms[atom], &b.fields[cav]);
            let evolved = dispersive_lambda(&joint, phi)?;
            split_into(&mut out, b, atom, cav, evolved);
        }
        Ok(self.with_branches(out))
    }

    /// Displaces the register of `cavity_id` by `beta` in every branch.
    pub fn inject(&self, cavity_id: &str, beta: C64) -> Result<Self> {
        let cav = self.layout.cavity_index(cavity_id)?;
        let tol = self.layout.cavities[cav].tail_tol;
        let mut out = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let mut nb = b.clone();
            nb.fields[cav] = fock::displace(&b.fields[cav], beta, tol)?;
            out.push(nb);
        }
        Ok(self.with_branches(out))
    }

    /// Resonant probe passage through `cavity_id`.
    pub fn send_probe(&self, cavity_id: &str, probe_id: &str, gt: f64) -> Result<Self> {
        let cav = self.layout.cavity_index(cavity_id)?;
        let atom = self.layout.atom_index(probe_id)?;
        if self.layout.atoms[atom].kind != AtomKind::TwoLevel {
            return Err(Error::LayoutMismatch(format!("probe `{probe_id}` is not a two-level atom")));
        }
        if let Some(first) = self.branches.first() {
            let fresh = self.branches.iter().all(|b| b.atoms[atom].approx_eq(&first.atoms[atom], MERGE_TOL));
            if !fresh {
                return Err(Error::LayoutMismatch(format!(
                    "probe `{probe_id}` is entangled with the rest of the system"
                )));
            }
        }
        let mut out = Vec::with_capacity(self.branches.len() * 2);
        for b in &self.branches {
            let joint = AtomFieldJoint::product(&b.atoms[atom], &b.fields[cav]);
            let evolved = jc_evolve(&joint, gt)?;
            split_into(&mut out, b, atom, cav, evolved);
        }
        Ok(self.with_branches(out))
    }

    fn resolve_outcome(&self, atom: usize, outcome: &str) -> Result<usize> {
        let spec = &self.layout.atoms[atom];
        spec.kind.level_index(outcome).ok_or_else(|| Error::InvalidOutcome {
            atom: spec.id.clone(),
            outcome: outcome.into(),
        })
    }

    fn project(&self, atom: usize, level: usize) -> Self {
        let kind = self.layout.atoms[atom].kind;
        let out = self
            .branches
            .iter()
            .map(|b| {
                let mut nb = b.clone();
                nb.coefficient *= b.atoms[atom].amplitudes()[level];
                nb.atoms[atom] = AtomState::basis(kind, level);
                nb
            })
            .collect();
        self.with_branches(out)
    }

    /// Born probabilities of every level of `atom_id`, in declaration order.
    pub fn outcome_probabilities(&self, atom_id: &str) -> Result<Vec<(String, f64)>> {
        let atom = self.layout.atom_index(atom_id)?;
        let kind = self.layout.atoms[atom].kind;
        let total = self.norm_sq();
        Ok(kind
            .level_names()
            .iter()
            .enumerate()
            .map(|(level, name)| {
                let p = self.project(atom, level).norm_sq() / total;
                (name.to_string(), p.clamp(0.0, 1.0))
            })
            .collect())
    }

    /// Projective measurement of one atom's internal level, followed by
    /// renormalization.
    pub fn measure_atom(&self, atom_id: &str, mode: &MeasureMode) -> Result<(MeasurementRecord, Self)> {
        let atom = self.layout.atom_index(atom_id)?;
        let probs = self.outcome_probabilities(atom_id)?;
        let level = match mode {
            MeasureMode::Postselect(outcome) => self.resolve_outcome(atom, outcome)?,
            MeasureMode::Sample(seed) => sample_level(&probs, *seed),
        };
        let (name, probability) = probs[level].clone();
        if probability < IMPOSSIBLE_PROBABILITY {
            return Err(Error::ImpossibleOutcome { atom: atom_id.into(), outcome: name, probability });
        }
        let projected = self.project(atom, level).normalize();
        Ok((MeasurementRecord { atom_id: atom_id.into(), outcome: name, probability }, projected))
    }
}

/// Cumulative-probability inversion over outcomes in declaration order.
pub fn sample_level(probs: &[(String, f64)], seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_possible = 0;
    for (i, (_, p)) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_possible = i;
        }
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    last_possible
}

fn split_into(out: &mut Vec<Branch>, parent: &Branch, atom: usize, cav: usize, joint: AtomFieldJoint) {
    let kind = joint.kind();
    for (level, field) in joint.into_rows().into_iter().enumerate() {
        if field.is_zero() {
            continue;
        }
        let mut nb = parent.clone();
        nb.atoms[atom] = AtomState::basis(kind, level);
        nb.fields[cav] = field;
        out.push(nb);
    }
}

/// Two-slit initial state `(|p1> + |p2>)/sqrt 2` with shared registers: the
/// lambda atom in `atom_level`, any probes in their lower level and the
/// cavities in `cavity_states`.
pub fn init_double_slit(
    layout: SystemLayout,
    cavity_states: Vec<FieldState>,
    atom_level: usize,
) -> Result<CompositeState> {
    if layout.paths.len() != 2 {
        return Err(Error::LayoutMismatch(format!("expected 2 path labels, got {}", layout.paths.len())));
    }
    let lambdas = layout.atoms.iter().filter(|a| a.kind == AtomKind::Lambda).count();
    if lambdas != 1 {
        return Err(Error::LayoutMismatch(format!("expected 1 lambda atom, got {lambdas}")));
    }
    if layout.cavities.len() != 2 || cavity_states.len() != 2 {
        return Err(Error::LayoutMismatch("expected 2 cavities with initial states".into()));
    }
    if atom_level >= AtomKind::Lambda.dim() {
        return Err(Error::InvalidOutcome { atom: "lambda".into(), outcome: atom_level.to_string() });
    }
    for (state, spec) in cavity_states.iter().zip(&layout.cavities) {
        if state.is_zero() || !state.is_finite() {
            return Err(Error::LayoutMismatch(format!("cavity `{}` register is not a valid state", spec.id)));
        }
    }
    let atoms: Vec<AtomState> = layout
        .atoms
        .iter()
        .map(|a| match a.kind {
            AtomKind::Lambda => AtomState::basis(a.kind, atom_level),
            AtomKind::TwoLevel => AtomState::basis(a.kind, two_level::F),
        })
        .collect();
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let branches = (0..2)
        .map(|path| Branch { coefficient: amp, path, atoms: atoms.clone(), fields: cavity_states.clone() })
        .collect();
    CompositeState::new(layout, branches)
}
