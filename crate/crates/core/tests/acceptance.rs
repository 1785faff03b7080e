//! Exit criteria. Each test prints one `ACCEPTANCE <n> PASS|FAIL` line and
//! then asserts the same condition.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use qslit::branch::{Branch, CompositeState};
use qslit::fock::{
    apply_number_phase, make_cat, make_coherent, parity_project, signed_parity_operator, FieldState, Parity,
};
use qslit::interactions::{jc_evolve, lambda, two_level, AtomFieldJoint, AtomKind, AtomState};
use qslit::optics::{assemble_density, stage_waves, trapezoid, GridSpec, SlitGeometry};
use qslit::scenarios::{
    cross_factor_closed_form, cross_factor_printed, parse_config, run_scenario, ScenarioConfig, ScenarioId, Script,
};

const PROBE_C1: &str = r#""probes":[{"atom":"A2","cavity":"C1"}]"#;
const PROBES_C1_C2: &str = r#""probes":[{"atom":"A2","cavity":"C1"},{"atom":"A3","cavity":"C2"}]"#;

fn verdict(criterion: u32, name: &str, ok: bool, detail: String) {
    println!("ACCEPTANCE {criterion:>2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn config(text: &str) -> ScenarioConfig {
    parse_config(text).expect("test config is valid")
}

fn max_diff(a: &FieldState, b: &FieldState) -> f64 {
    a.max_abs_diff(b).expect("same truncation")
}

/// `|psi(x,t)|^2` of a freely spreading Gaussian: a normal density of width
/// `sigma sqrt(1 + (hbar t / (2 m sigma^2))^2)`.
fn spread_gaussian_density(center: f64, sigma: f64, t: f64, x: f64) -> f64 {
    let tau = t / (2.0 * sigma * sigma);
    let w2 = sigma * sigma * (1.0 + tau * tau);
    (-(x - center).powi(2) / (2.0 * w2)).exp() / (2.0 * PI * w2).sqrt()
}

/// Complex free-Gaussian amplitude with `hbar = m = 1`.
fn spread_gaussian_amplitude(center: f64, sigma: f64, t: f64, x: f64) -> C64 {
    let q = C64::new(sigma * sigma, 0.5 * t) * 4.0 / sigma;
    let norm = (2.0 * PI).powf(-0.25) * C64::new(sigma, 0.5 * t / sigma).sqrt().inv();
    norm * (-(x - center).powi(2) / q).exp()
}

fn grid_normalized(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let raw: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let integral = trapezoid(xs, &raw);
    raw.into_iter().map(|v| v / integral).collect()
}

fn max_rel(values: &[f64], reference: &[f64]) -> f64 {
    values.iter().zip(reference).map(|(v, r)| (v - r).abs() / r).fold(0.0, f64::max)
}

#[test]
fn criterion_01_operator_algebra() {
    let start = Instant::now();
    let n = 64;
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0, 2.0, 3.0] {
        let a = C64::new(alpha, 0.0);
        let states = [
            make_coherent(a, n, 1e-12).unwrap(),
            make_coherent(a * C64::from_polar(1.0, 0.7), n, 1e-12).unwrap(),
            make_cat(a, Parity::Even, n, 1e-12, true).unwrap(),
            make_cat(a, Parity::Odd, n, 1e-12, true).unwrap(),
        ];
        for psi in &states {
            let even = parity_project(psi, Parity::Even);
            let odd = parity_project(psi, Parity::Odd);
            worst = worst.max(max_diff(&parity_project(&even, Parity::Even), &even));
            worst = worst.max(max_diff(&parity_project(&odd, Parity::Odd), &odd));
            worst = worst.max(parity_project(&odd, Parity::Even).amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max));
            worst = worst.max(parity_project(&even, Parity::Odd).amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max));

            let plus = signed_parity_operator(psi, Parity::Even);
            let minus = signed_parity_operator(psi, Parity::Odd);
            let both = signed_parity_operator(&minus, Parity::Even);
            worst = worst.max(both.amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max));
            worst = worst.max(max_diff(&plus.sub(&minus).unwrap(), psi));
            let parity = apply_number_phase(psi, PI);
            let direct: Vec<C64> = psi
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(k, c)| if k % 2 == 0 { *c } else { -*c })
                .collect();
            worst = worst.max(max_diff(&parity, &FieldState::from_amplitudes(direct)));
            worst = worst.max(max_diff(&plus.add(&minus).unwrap(), &parity));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "projector algebra on N=64",
        worst <= 1e-14 && elapsed < Duration::from_secs(1),
        format!("max deviation {worst:.2e}, {elapsed:?}"),
    );
}

#[test]
fn criterion_02_stage_one_branch_structure() {
    let cfg = config(r#"{"scenario":"A","alpha1":[1,0],"alpha2":[1,0],"truncation":32}"#);
    let script = Script::from_config(&cfg).unwrap();
    let trace = script.run().unwrap();
    let engine = &trace.states[2];
    let n = cfg.truncation;
    let a = C64::new(1.0, 0.0);
    let plus = make_cat(a, Parity::Even, n, 1e-12, false).unwrap();
    let minus = make_cat(a, Parity::Odd, n, 1e-12, false).unwrap();
    let coh = make_coherent(a, n, 1e-12).unwrap();
    let b = AtomState::basis(AtomKind::Lambda, lambda::B);
    let c = AtomState::basis(AtomKind::Lambda, lambda::C);
    let build = |sign: f64| {
        let half = C64::new(0.5 / 2f64.sqrt(), 0.0);
        let branch = |coef: C64, path: usize, atom: &AtomState, f1: &FieldState, f2: &FieldState| Branch {
            coefficient: coef,
            path,
            atoms: vec![atom.clone()],
            fields: vec![f1.clone(), f2.clone()],
        };
        CompositeState::new(
            engine.layout().clone(),
            vec![
                branch(half, 0, &b, &plus, &coh),
                branch(-half * sign, 0, &c, &minus, &coh),
                branch(half, 1, &b, &coh, &plus),
                branch(-half * sign, 1, &c, &coh, &minus),
            ],
        )
        .unwrap()
    };
    let fidelity = engine.fidelity(&build(1.0));
    let flipped = engine.fidelity(&build(-1.0));
    let ok = fidelity > 1.0 - 1e-10 && engine.branch_count() == 4 && flipped < 1.0 - 1e-3;
    verdict(
        2,
        "four-branch marked state",
        ok,
        format!("fidelity {fidelity:.15}, {} branches, wrong-sign fidelity {flipped:.6}", engine.branch_count()),
    );
}

#[test]
fn criterion_03_oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for id in ScenarioId::ALL {
        let probes = match id {
            ScenarioId::B => format!(",{PROBE_C1}"),
            ScenarioId::C => format!(",{PROBES_C1_C2}"),
            _ => String::new(),
        };
        let cfg = config(&format!(
            r#"{{"scenario":"{id}","alpha1":[1,0],"alpha2":[1,0],"truncation":16,"tail_tol":1e-4{probes}}}"#
        ));
        let report = run_scenario(&cfg, true).unwrap();
        let r = report.residuals.expect("oracle enabled");
        assert!(r.unitarity_defect < 1e-12);
        worst = worst.max(r.max_residual);
        detail.push(format!("{id}:{:.1e}", r.max_residual));
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        "branch engine vs dense simulator",
        worst < 1e-10 && elapsed < Duration::from_secs(60),
        format!("{} in {elapsed:?}", detail.join(" ")),
    );
}

#[test]
fn criterion_04_fringes_persist_for_large_fields() {
    let a = 10f64.sqrt();
    let cfg = config(&format!(r#"{{"scenario":"A","alpha1":[{a},0],"alpha2":[{a},0]}}"#));
    let report = run_scenario(&cfg, false).unwrap();
    let factor = report.number("cross_factor").unwrap();
    let vis = report.visibility.unwrap_or(0.0);
    verdict(
        4,
        "large-alpha fringe persistence",
        vis > 0.9 && (factor - 2.0).abs() < 1e-8,
        format!("visibility {vis:.6} (needs > 0.9), |factor - 2| = {:.2e} (needs < 1e-8)", (factor - 2.0).abs()),
    );
}

#[test]
fn criterion_05_small_alpha_cross_factor() {
    let cfg = config(r#"{"scenario":"A","alpha1":[1,0],"alpha2":[1,0]}"#);
    let report = run_scenario(&cfg, true).unwrap();
    let engine = report.number("cross_factor").unwrap();
    let dense = report.number("cross_factor_oracle").unwrap();
    let expected = 2.0 * (1.0 + (-4.0f64).exp());
    let flagged = report.flag("cross_factor_printed_diverges") == Some(true);
    let printed = report.number("cross_factor_printed").unwrap();
    let big = C64::new(10f64.sqrt(), 0.0);
    let asymptotes = (cross_factor_closed_form(big, big) - cross_factor_printed(big, big)).abs();
    let ok = (engine - expected).abs() < 1e-10
        && (dense - expected).abs() < 1e-10
        && flagged
        && (printed - (2.0 - 2.0 * (-4.0f64).exp())).abs() < 1e-15
        && asymptotes < 1e-8;
    verdict(
        5,
        "cross-term factor at alpha = 1",
        ok,
        format!(
            "engine {engine:.12}, dense {dense:.12}, expected {expected:.12}, printed {printed:.12} flagged={flagged}, asymptote gap {asymptotes:.1e}"
        ),
    );
}

#[test]
fn criterion_06_which_path_probes() {
    let c = run_scenario(&config(&format!(r#"{{"scenario":"C",{PROBES_C1_C2}}}"#)), false).unwrap();
    let b = run_scenario(&config(&format!(r#"{{"scenario":"B",{PROBE_C1}}}"#)), false).unwrap();
    let geometry = &c.config.geometry;
    let xs = c.config.grid.xs();
    let t = geometry.elapsed(1).unwrap();
    let s = &geometry.stage1;
    let slit1 = grid_normalized(&xs, |x| spread_gaussian_density(s.centers[0], s.sigma, t, x));
    let slit2 = grid_normalized(&xs, |x| spread_gaussian_density(s.centers[1], s.sigma, t, x));

    let joint = c.number("p_e2_e3").unwrap();
    let f3_given_e2 = c.number("p_f3_given_e2").unwrap();
    let dev_b = max_rel(&b.distributions["after_e2"].normalized, &slit1);
    let dev_e2 = max_rel(&c.distributions["after_e2"].normalized, &slit1);
    let dev_e3 = max_rel(&c.distributions["after_e3"].normalized, &slit2);
    let ok = joint < 1e-12 && (f3_given_e2 - 1.0).abs() < 1e-12 && dev_b < 1e-9 && dev_e2 < 1e-9 && dev_e3 < 1e-9;
    verdict(
        6,
        "probe atoms reveal the path",
        ok,
        format!(
            "P(e2,e3) {joint:.1e}, P(f3|e2) - 1 = {:.1e}, rel dev B/e2 {dev_b:.1e}, C/e2 {dev_e2:.1e}, C/e3 {dev_e3:.1e}",
            f3_given_e2 - 1.0
        ),
    );
}

#[test]
fn criterion_07_parity_marking_washes_out_fringes() {
    let d = run_scenario(&ScenarioConfig::defaults(ScenarioId::D), false).unwrap();
    let vis = d.visibility.expect("two-path density has a visibility");
    let geometry = &d.config.geometry;
    let xs = d.config.grid.xs();
    let t = geometry.elapsed(1).unwrap();
    let s = &geometry.stage1;
    let slit1 = grid_normalized(&xs, |x| spread_gaussian_density(s.centers[0], s.sigma, t, x));
    let dev = max_rel(&d.distributions["after_b1"].normalized, &slit1);
    let (pb, pc) = (d.number("p_b1").unwrap(), d.number("p_c1").unwrap());
    let ok = vis < 1e-12 && dev < 1e-9 && (pb - 0.5).abs() < 1e-12 && (pc - 0.5).abs() < 1e-12;
    verdict(7, "even/odd cavities", ok, format!("visibility {vis:.1e}, rel dev after b1 {dev:.1e}, P(b1) {pb:.15}, P(c1) {pc:.15}"));
}

/// Four-slit density written out term by term for an equal-weight mixture of
/// the two stage-1 paths.
fn four_slit_direct(geometry: &SlitGeometry, xs: &[f64]) -> Vec<f64> {
    let s1 = &geometry.stage1;
    let s2 = geometry.stage2.as_ref().unwrap();
    let (t1, t2) = (s1.distance, s2.distance);
    let amp = |zeta: usize, eta: usize| spread_gaussian_amplitude(s1.centers[zeta], s1.sigma, t1, s2.centers[eta]);
    let (z1e1, z1e2, z2e1, z2e2) = (amp(0, 0), amp(0, 1), amp(1, 0), amp(1, 1));
    xs.iter()
        .map(|&x| {
            let e1 = spread_gaussian_amplitude(s2.centers[0], s2.sigma, t2, x);
            let e2 = spread_gaussian_amplitude(s2.centers[1], s2.sigma, t2, x);
            let direct = z1e1.norm_sqr() * e1.norm_sqr()
                + z1e2.norm_sqr() * e2.norm_sqr()
                + z2e1.norm_sqr() * e1.norm_sqr()
                + z2e2.norm_sqr() * e2.norm_sqr();
            let cross = 2.0 * ((z1e1.conj() * z1e2 + z2e1.conj() * z2e2) * e1.conj() * e2).re;
            0.5 * (direct + cross)
        })
        .collect()
}

#[test]
fn criterion_08_four_slit_regimes() {
    let e = run_scenario(&ScenarioConfig::defaults(ScenarioId::E), false).unwrap();
    let sharp = e.number("sharp_cross_to_direct").unwrap();
    let overlapping = &e.distributions["overlapping"];
    let xs = overlapping.grid().xs();
    let direct = four_slit_direct(&e.config.geometry, &xs);
    let peak = direct.iter().copied().fold(0.0, f64::max);
    let dev = overlapping.raw.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
    let cross = e.number("overlapping_cross_to_direct").unwrap();
    let ok = sharp < 1e-10 && xs.len() == 2048 && dev < 1e-10 && cross > 1e-3;
    verdict(
        8,
        "four-slit sharp vs overlapping",
        ok,
        format!("sharp cross/direct {sharp:.1e}, overlapping cross/direct {cross:.3}, max |engine - direct| / peak {dev:.1e} over {} points", xs.len()),
    );
}

#[test]
fn criterion_09_resonant_probe_dynamics() {
    let n = 48;
    let mut worst = 0.0f64;
    let f = AtomState::basis(AtomKind::TwoLevel, two_level::F);
    for beta in [C64::new(0.3, 0.0), C64::new(-1.0, 0.5), C64::new(0.0, 1.5), C64::new(-2.0, 0.0)] {
        let field = make_coherent(beta, n, 1e-12).unwrap();
        let joint = AtomFieldJoint::product(&f, &field);
        for k in 0..20 {
            let gt = 0.05 + 0.37 * k as f64;
            let evolved = jc_evolve(&joint, gt).unwrap();
            let engine = evolved.row(two_level::E).norm_sq();
            let mean = beta.norm_sqr();
            let mut weight = (-mean).exp();
            let mut analytic = 0.0;
            for m in 1..=200 {
                weight *= mean / m as f64;
                analytic += weight * (gt * (m as f64).sqrt()).sin().powi(2);
            }
            worst = worst.max((engine - analytic).abs());
        }
    }
    let vacuum = AtomFieldJoint::product(&f, &FieldState::vacuum(n));
    let invariant = (0..20).all(|k| jc_evolve(&vacuum, 0.1 + k as f64).unwrap() == vacuum);
    verdict(9, "resonant probe excitation", worst < 1e-12 && invariant, format!("max |engine - series| {worst:.1e}, |f,0> invariant {invariant}"));
}

#[test]
fn criterion_10_wave_optics_sanity() {
    let mut worst_norm = 0.0f64;
    for t in [0.0, 1.0, 20.0, 100.0] {
        let w = 1.0 * (1.0 + (t / 2.0f64).powi(2)).sqrt();
        let grid = GridSpec { x_min: -12.0 * w, x_max: 12.0 * w, points: 20001 }.xs();
        let dens: Vec<f64> = grid
            .iter()
            .map(|&x| qslit::optics::gaussian_packet(0.0, 1.0, 1.0, 1.0, x, t).norm_sqr())
            .collect();
        worst_norm = worst_norm.max((trapezoid(&grid, &dens) - 1.0).abs());
    }

    let geometry = SlitGeometry::default_double_slit();
    let xs = GridSpec { x_min: -100.0, x_max: 100.0, points: 8001 }.xs();
    let weights = nalgebra::DMatrix::from_element(2, 2, C64::new(0.5, 0.0));
    let dist = assemble_density(&weights, &stage_waves(&geometry, 1, &xs).unwrap(), &xs).unwrap();
    let env = dist.envelope.as_ref().unwrap();
    let ratio: Vec<f64> = dist.raw.iter().zip(env).map(|(r, e)| r / e).collect();
    let maxima: Vec<f64> = (1..ratio.len() - 1)
        .filter(|&k| ratio[k] > ratio[k - 1] && ratio[k] >= ratio[k + 1])
        .map(|k| xs[k])
        .collect();
    let spacing = (maxima.last().unwrap() - maxima[0]) / (maxima.len() - 1) as f64;
    let d = geometry.stage1.centers[1] - geometry.stage1.centers[0];
    let expected = 2.0 * PI * geometry.stage1.distance / d;
    let rel = (spacing - expected).abs() / expected;
    verdict(
        10,
        "packet norm and fringe spacing",
        worst_norm < 1e-9 && rel < 0.02,
        format!("max |norm - 1| {worst_norm:.1e}, spacing {spacing:.3} vs {expected:.3} ({:.2}%)", 100.0 * rel),
    );
}

#[test]
fn criterion_11_determinism() {
    let text = format!(
        r#"{{"scenario":"C",{PROBES_C1_C2},"measurements":[{{"atom":"A2","mode":"sample"}},{{"atom":"A3","mode":"sample"}}],"seed":17}}"#
    );
    let first = run_scenario(&config(&text), false).unwrap().to_canonical_json();
    let second = run_scenario(&config(&text), false).unwrap().to_canonical_json();
    verdict(11, "byte-identical reports", first == second, format!("{} bytes", first.len()));
}
