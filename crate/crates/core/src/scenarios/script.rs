//! Engine-neutral description of a scripted experiment. Both the branch
//! engine and the dense oracle execute the same [`Script`].

use num_complex::Complex64 as C64;

use crate::branch::{
    init_double_slit, AtomSpec, CavitySpec, CompositeState, MeasureMode, MeasurementRecord, SystemLayout,
};
use crate::fock::{make_cat, make_coherent, FieldState, Parity};
use crate::interactions::{lambda, AtomKind};
use crate::Result;

use super::config::{complex, MeasureKind, ScenarioConfig, ScenarioId, CAVITIES, LAMBDA_ATOM, PATHS};

/// Initial register of one cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldPrep {
    Coherent(C64),
    /// Normalized cat `|alpha> +- |-alpha>`.
    Cat { alpha: C64, parity: Parity },
}

impl FieldPrep {
    pub fn build(&self, truncation: usize, tail_tol: f64) -> Result<FieldState> {
        match *self {
            FieldPrep::Coherent(alpha) => make_coherent(alpha, truncation, tail_tol),
            FieldPrep::Cat { alpha, parity } => make_cat(alpha, parity, truncation, tail_tol, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Interact { cavity: String, atom: String, phi: f64 },
    Inject { cavity: String, beta: C64 },
    Probe { cavity: String, atom: String, gt: f64 },
    Measure { atom: String, mode: MeasureMode },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub label: String,
    pub op: Op,
}

/// Two-path experiment: a lambda atom in `atom_level` crossing two cavities,
/// followed by optional injections, probes and measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub layout: SystemLayout,
    pub fields: Vec<FieldPrep>,
    pub atom_level: usize,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTrace {
    /// Initial state followed by the state after each step.
    pub states: Vec<CompositeState>,
    pub records: Vec<MeasurementRecord>,
}

impl BranchTrace {
    pub fn initial(&self) -> &CompositeState {
        &self.states[0]
    }

    pub fn last(&self) -> &CompositeState {
        self.states.last().expect("trace holds the initial state")
    }
}

impl Script {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let mut atoms = vec![AtomSpec { id: LAMBDA_ATOM.into(), kind: AtomKind::Lambda }];
        atoms.extend(cfg.probes.iter().map(|p| AtomSpec { id: p.atom.clone(), kind: AtomKind::TwoLevel }));
        let cavities = CAVITIES
            .iter()
            .map(|id| CavitySpec { id: (*id).into(), truncation: cfg.truncation, tail_tol: cfg.tail_tol })
            .collect();
        let layout = SystemLayout::new(PATHS.iter().map(|p| (*p).to_string()).collect(), atoms, cavities)?
            .with_route(PATHS[0], CAVITIES[0])?
            .with_route(PATHS[1], CAVITIES[1])?;

        let fields = match cfg.scenario {
            ScenarioId::D | ScenarioId::E => vec![
                FieldPrep::Cat { alpha: cfg.alpha(0), parity: Parity::Even },
                FieldPrep::Cat { alpha: cfg.alpha(1), parity: Parity::Odd },
            ],
            _ => vec![FieldPrep::Coherent(cfg.alpha(0)), FieldPrep::Coherent(cfg.alpha(1))],
        };

        let mut steps = Vec::new();
        for cav in CAVITIES {
            steps.push(Step {
                label: format!("{LAMBDA_ATOM} crosses {cav}"),
                op: Op::Interact { cavity: cav.into(), atom: LAMBDA_ATOM.into(), phi: cfg.phi },
            });
        }
        for (cav, beta) in &cfg.inject {
            steps.push(Step { label: format!("inject into {cav}"), op: Op::Inject { cavity: cav.clone(), beta: complex(*beta) } });
        }
        for p in &cfg.probes {
            let gt = p.gt.expect("resolved configs carry probe gt");
            steps.push(Step {
                label: format!("{} probes {}", p.atom, p.cavity),
                op: Op::Probe { cavity: p.cavity.clone(), atom: p.atom.clone(), gt },
            });
        }
        for (i, m) in cfg.measurements.iter().enumerate() {
            let mode = match m.mode {
                MeasureKind::Postselect => MeasureMode::Postselect(m.outcome.clone().unwrap_or_default()),
                MeasureKind::Sample => MeasureMode::Sample(m.seed.unwrap_or_else(|| cfg.seed.wrapping_add(i as u64))),
            };
            let label = match &mode {
                MeasureMode::Postselect(o) => format!("postselect {} in {o}", m.atom),
                MeasureMode::Sample(seed) => format!("sample {} (seed {seed})", m.atom),
            };
            steps.push(Step { label, op: Op::Measure { atom: m.atom.clone(), mode } });
        }
        Ok(Self { layout, fields, atom_level: lambda::B, steps })
    }

    /// Number of leading steps that are not measurements.
    pub fn unitary_prefix(&self) -> usize {
        self.steps.iter().take_while(|s| !matches!(s.op, Op::Measure { .. })).count()
    }

    pub fn initial_state(&self) -> Result<CompositeState> {
        let fields = self
            .fields
            .iter()
            .zip(self.layout.cavities())
            .map(|(prep, spec)| prep.build(spec.truncation, spec.tail_tol))
            .collect::<Result<Vec<_>>>()?;
        init_double_slit(self.layout.clone(), fields, self.atom_level)
    }

    /// Executes the script on the branch engine.
    pub fn run(&self) -> Result<BranchTrace> {
        let mut states = vec![self.initial_state()?];
        let mut records = Vec::new();
        for step in &self.steps {
            let cur = states.last().expect("non-empty");
            let next = match &step.op {
                Op::Interact { cavity, atom, phi } => cur.apply_cavity_interaction(cavity, atom, *phi)?,
                Op::Inject { cavity, beta } => cur.inject(cavity, *beta)?,
                Op::Probe { cavity, atom, gt } => cur.send_probe(cavity, atom, *gt)?,
                Op::Measure { atom, mode } => {
                    let (record, next) = cur.measure_atom(atom, mode)?;
                    records.push(record);
                    next
                }
            };
            states.push(next);
        }
        Ok(BranchTrace { states, records })
    }
}
