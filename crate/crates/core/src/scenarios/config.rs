//! JSON scenario configuration: parsing, defaults and invariant checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{default_truncation, DEFAULT_TAIL_TOL};
use crate::interactions::{default_probe_gt, AtomKind};
use crate::optics::{central_window, GridSpec, SlitGeometry, TransferMode};

pub const LAMBDA_ATOM: &str = "A1";
pub const CAVITIES: [&str; 2] = ["C1", "C2"];
pub const PATHS: [&str; 2] = ["zeta1", "zeta2"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unknown key at line {line}, column {column}: {message}")]
    UnknownKey { line: usize, column: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Invariant { field: String, message: String },
}

fn invariant(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invariant { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
    C,
    D,
    E,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [ScenarioId::A, ScenarioId::B, ScenarioId::C, ScenarioId::D, ScenarioId::E];

    pub fn description(self) -> &'static str {
        match self {
            ScenarioId::A => "coherent cavities mark the path; fringes persist without a measurement",
            ScenarioId::B => "inject -alpha into C1, probe it with A2; detecting e2 leaves one peak",
            ScenarioId::C => "inject into both cavities, probe with A2 and A3; e2 and e3 never coincide",
            ScenarioId::D => "even/odd cat cavities copy parity into the atom; fringes wash out",
            ScenarioId::E => "four-slit cascade behind cat-marked slits; sharp vs overlapping transfer",
        }
    }

    fn probe_count(self) -> usize {
        match self {
            ScenarioId::B => 1,
            ScenarioId::C => 2,
            _ => 0,
        }
    }

    fn uses_cats(self) -> bool {
        matches!(self, ScenarioId::D | ScenarioId::E)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub atom: String,
    pub cavity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Postselect,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub atom: String,
    pub mode: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Configuration as written by the user; every field optional but `scenario`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: ScenarioId,
    alpha1: Option<[f64; 2]>,
    alpha2: Option<[f64; 2]>,
    truncation: Option<usize>,
    tail_tol: Option<f64>,
    phi: Option<f64>,
    probes: Option<Vec<ProbeSpec>>,
    inject: Option<BTreeMap<String, [f64; 2]>>,
    geometry: Option<SlitGeometry>,
    sharp_geometry: Option<SlitGeometry>,
    transfer_mode: Option<TransferMode>,
    grid: Option<GridSpec>,
    window: Option<[f64; 2]>,
    measurements: Option<Vec<MeasurementSpec>>,
    seed: Option<u64>,
}

/// Fully resolved scenario configuration. Serializing it and parsing the
/// result reproduces the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    pub alpha1: [f64; 2],
    pub alpha2: [f64; 2],
    pub truncation: usize,
    pub tail_tol: f64,
    pub phi: f64,
    pub probes: Vec<ProbeSpec>,
    pub inject: BTreeMap<String, [f64; 2]>,
    pub geometry: SlitGeometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharp_geometry: Option<SlitGeometry>,
    pub transfer_mode: TransferMode,
    pub grid: GridSpec,
    pub window: [f64; 2],
    pub measurements: Vec<MeasurementSpec>,
    pub seed: u64,
}

pub fn complex(pair: [f64; 2]) -> C64 {
    C64::new(pair[0], pair[1])
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

impl ScenarioConfig {
    pub fn alpha(&self, cavity: usize) -> C64 {
        complex(if cavity == 0 { self.alpha1 } else { self.alpha2 })
    }

    pub fn injection(&self, cavity: &str) -> Option<C64> {
        self.inject.get(cavity).copied().map(complex)
    }

    /// Minimal configuration for a scenario with every default applied.
    pub fn defaults(scenario: ScenarioId) -> Self {
        let mut text = format!("{{\"scenario\":\"{scenario}\"");
        match scenario.probe_count() {
            1 => text.push_str(r#","probes":[{"atom":"A2","cavity":"C1"}]"#),
            2 => text.push_str(r#","probes":[{"atom":"A2","cavity":"C1"},{"atom":"A3","cavity":"C2"}]"#),
            _ => {}
        }
        text.push('}');
        parse_config(&text).expect("built-in defaults are valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn locate(text: &str, err: &serde_json::Error) -> ConfigError {
    let message = err.to_string();
    let (line, column) = (err.line(), err.column());
    if message.starts_with("unknown field") || message.starts_with("unknown variant") {
        ConfigError::UnknownKey { line, column, message }
    } else {
        let _ = text;
        ConfigError::Parse { line, column, message }
    }
}

/// Parses a JSON scenario document, applies defaults and checks invariants.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| locate(text, &e))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    let scenario = raw.scenario;
    let alpha1 = raw.alpha1.unwrap_or([1.0, 0.0]);
    let alpha2 = raw.alpha2.unwrap_or([1.0, 0.0]);
    for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2)] {
        if !a.iter().all(|v| v.is_finite()) {
            return Err(invariant(name, "must be finite"));
        }
    }
    if scenario.uses_cats() && complex(alpha2).norm_sqr() == 0.0 {
        return Err(invariant("alpha2", "the odd cat in C2 vanishes at alpha2 = 0"));
    }

    let probes = match (scenario.probe_count(), raw.probes) {
        (0, None) => Vec::new(),
        (0, Some(p)) if p.is_empty() => Vec::new(),
        (0, Some(_)) => return Err(invariant("probes", format!("scenario {scenario} sends no probe atoms"))),
        (n, None) => {
            return Err(invariant("probes", format!("scenario {scenario} requires {n} probe atom(s)")));
        }
        (n, Some(p)) => {
            if p.len() != n {
                return Err(invariant("probes", format!("scenario {scenario} requires {n} probe atom(s), got {}", p.len())));
            }
            p
        }
    };
    let mut seen_ids = vec![LAMBDA_ATOM.to_string()];
    let mut seen_cavities = Vec::new();
    let alpha_of = |cav: &str| if cav == CAVITIES[0] { complex(alpha1) } else { complex(alpha2) };
    let mut resolved_probes = Vec::with_capacity(probes.len());
    for (i, p) in probes.into_iter().enumerate() {
        let field = format!("probes[{i}]");
        if seen_ids.contains(&p.atom) || CAVITIES.contains(&p.atom.as_str()) || PATHS.contains(&p.atom.as_str()) {
            return Err(invariant(format!("{field}.atom"), format!("duplicate or reserved id `{}`", p.atom)));
        }
        if !CAVITIES.contains(&p.cavity.as_str()) {
            return Err(invariant(format!("{field}.cavity"), format!("unknown cavity `{}`", p.cavity)));
        }
        if seen_cavities.contains(&p.cavity) {
            return Err(invariant(format!("{field}.cavity"), "each cavity takes at most one probe"));
        }
        if let Some(gt) = p.gt {
            if !gt.is_finite() {
                return Err(invariant(format!("{field}.gt"), "must be finite"));
            }
        }
        seen_ids.push(p.atom.clone());
        seen_cavities.push(p.cavity.clone());
        let gt = Some(p.gt.unwrap_or_else(|| default_probe_gt(alpha_of(&p.cavity))));
        resolved_probes.push(ProbeSpec { gt, ..p });
    }

    let inject = match raw.inject {
        Some(map) => {
            for (k, v) in &map {
                if !CAVITIES.contains(&k.as_str()) {
                    return Err(invariant("inject", format!("unknown cavity `{k}`")));
                }
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(invariant(format!("inject.{k}"), "must be finite"));
                }
            }
            map
        }
        None => resolved_probes.iter().map(|p| (p.cavity.clone(), pair(-alpha_of(&p.cavity)))).collect(),
    };
    if !matches!(scenario, ScenarioId::B | ScenarioId::C) && !inject.is_empty() {
        return Err(invariant("inject", format!("scenario {scenario} injects nothing")));
    }

    let tail_tol = raw.tail_tol.unwrap_or(DEFAULT_TAIL_TOL);
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(invariant("tail_tol", "must lie in (0, 1)"));
    }
    let envelope = (0..2)
        .map(|k| {
            let a = if k == 0 { complex(alpha1) } else { complex(alpha2) };
            let beta = inject.get(CAVITIES[k]).map(|b| complex(*b).norm()).unwrap_or(0.0);
            a.norm() + beta
        })
        .fold(0.0, f64::max);
    let truncation = raw.truncation.unwrap_or_else(|| default_truncation(envelope));
    if truncation == 0 {
        return Err(invariant("truncation", "must be at least 1"));
    }

    let phi = raw.phi.unwrap_or(PI);
    if !phi.is_finite() {
        return Err(invariant("phi", "must be finite"));
    }

    let geometry = raw.geometry.unwrap_or_else(|| match scenario {
        ScenarioId::E => SlitGeometry::default_four_slit_overlapping(),
        _ => SlitGeometry::default_double_slit(),
    });
    check_geometry("geometry", &geometry, scenario == ScenarioId::E)?;
    let sharp_geometry = match (scenario, raw.sharp_geometry) {
        (ScenarioId::E, g) => {
            let g = g.unwrap_or_else(SlitGeometry::default_four_slit_sharp);
            check_geometry("sharp_geometry", &g, true)?;
            Some(g)
        }
        (_, None) => None,
        (_, Some(_)) => return Err(invariant("sharp_geometry", "only scenario E uses a second geometry")),
    };
    let grid = raw.grid.unwrap_or_else(|| GridSpec::default_for(&geometry));
    grid.validate().map_err(|e| invariant("grid", e.to_string()))?;
    let window = raw.window.unwrap_or_else(|| {
        let (lo, hi) = central_window(&geometry);
        [lo, hi]
    });
    if window[0] >= window[1] || !window.iter().all(|w| w.is_finite()) {
        return Err(invariant("window", "needs lo < hi"));
    }

    let measurements = raw.measurements.unwrap_or_else(|| default_plan(scenario, &resolved_probes));
    for (i, m) in measurements.iter().enumerate() {
        let field = format!("measurements[{i}]");
        let kind = if m.atom == LAMBDA_ATOM {
            AtomKind::Lambda
        } else if resolved_probes.iter().any(|p| p.atom == m.atom) {
            AtomKind::TwoLevel
        } else {
            return Err(invariant(format!("{field}.atom"), format!("unknown atom `{}`", m.atom)));
        };
        match (m.mode, &m.outcome) {
            (MeasureKind::Postselect, None) => {
                return Err(invariant(format!("{field}.outcome"), "postselection needs an outcome"));
            }
            (_, Some(o)) if kind.level_index(o).is_none() => {
                return Err(invariant(format!("{field}.outcome"), format!("`{o}` is not a level of {}", m.atom)));
            }
            _ => {}
        }
    }

    Ok(ScenarioConfig {
        scenario,
        alpha1,
        alpha2,
        truncation,
        tail_tol,
        phi,
        probes: resolved_probes,
        inject,
        geometry,
        sharp_geometry,
        transfer_mode: raw.transfer_mode.unwrap_or_default(),
        grid,
        window,
        measurements,
        seed: raw.seed.unwrap_or(0),
    })
}

fn check_geometry(field: &str, g: &SlitGeometry, four_slit: bool) -> Result<(), ConfigError> {
    let named = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(invariant(format!("{field}.{name}"), format!("must be positive and finite, got {v}")))
        }
    };
    named("hbar", g.hbar)?;
    named("mass", g.mass)?;
    named("velocity", g.velocity)?;
    named("stage1.sigma", g.stage1.sigma)?;
    named("stage1.distance", g.stage1.distance)?;
    if g.stage1.centers.len() != 2 {
        return Err(invariant(format!("{field}.stage1.centers"), "needs exactly two slit centers"));
    }
    match (&g.stage2, four_slit) {
        (Some(s2), true) => {
            named("stage2.sigma", s2.sigma)?;
            named("stage2.distance", s2.distance)?;
            if s2.centers.len() != 2 {
                return Err(invariant(format!("{field}.stage2.centers"), "needs exactly two slit centers"));
            }
        }
        (None, true) => return Err(invariant(format!("{field}.stage2"), "the four-slit scenario needs a second stage")),
        (Some(_), false) => return Err(invariant(format!("{field}.stage2"), "only scenario E has a second stage")),
        (None, false) => {}
    }
    g.validate().map_err(|e| invariant(field, e.to_string()))
}

fn default_plan(scenario: ScenarioId, probes: &[ProbeSpec]) -> Vec<MeasurementSpec> {
    let post = |atom: &str, outcome: &str| MeasurementSpec {
        atom: atom.into(),
        mode: MeasureKind::Postselect,
        outcome: Some(outcome.into()),
        seed: None,
    };
    match scenario {
        ScenarioId::B => vec![post(&probes[0].atom, "e")],
        ScenarioId::C => vec![post(&probes[0].atom, "e"), post(&probes[1].atom, "f")],
        _ => Vec::new(),
    }
}
