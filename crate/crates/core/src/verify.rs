//! Acceptance checks: oracle comparisons, conservation audits and the
//! reference runs, each reduced to one pass/fail verdict.

use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{scaling_transform, Prediction};
use crate::config::RunConfig;
use crate::diagnostics::{decay_fit, modulus_drift, TimeSeriesRecord};
use crate::error::{Error, Result};
use crate::fluid::InitSpec;
use crate::geometry::{
    compose_total_inertia, compute_mass_properties, quadrature_inertia_oracle, GeometrySpec,
};
use crate::reference;
use crate::simulation::{RunOptions, RunOutcome, Simulation, BUDGET_TOL, ENERGY_SLACK};
use crate::{Mat3, Vec3};

pub const INERTIA_SPECS: usize = 10;
pub const ORACLE_RESOLUTION: usize = 128;
pub const INERTIA_REL_TOL: f64 = 1e-3;
pub const COMPOSITION_TOL: f64 = 1e-12;
pub const MODULUS_STEPS: u64 = 100_000;
pub const MODULUS_TOL: f64 = 1e-12;
pub const QA_TOL: f64 = 1e-3;
pub const QA_HALVING_FACTOR: f64 = 1.8;
pub const FINE_GRID: usize = 24;
pub const U_DECAY: f64 = 0.01;
pub const ANGLE_DEG: f64 = 5.0;
pub const RESIDUAL: f64 = 1e-2;
pub const INERTIA_MISMATCH: f64 = 0.02;
pub const SPHERE_OMEGA_BAR_TOL: f64 = 1e-6;
pub const MIN_R_SQUARED: f64 = 0.99;
pub const ORTHO_OMEGA_RATIO: f64 = 1e-3;
pub const SCALING_LAMBDA: f64 = 2.0;
pub const SCALING_TOL: f64 = 0.05;
pub const SCALING_SAMPLES: usize = 20;
pub const FIXED_POINT_STEPS: u64 = 1000;
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const DRY_RUN_TOL: f64 = 1e-6;
/// RK4 substeps per coupled step in the rigid reference integration.
pub const DRY_RUN_SUBSTEPS: usize = 16;

/// Checks run at the fast level; the full level runs all of them.
pub const FAST_CHECKS: [u8; 4] = [1, 2, 11, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(Error::InvalidInput(format!(
                "verification level must be `fast` or `full`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub observed: String,
    pub required: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {}: {} (required: {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.observed,
            self.required
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const NAMES: [&str; 12] = [
    "inertia oracle and composition",
    "conserved moduli |A|, |L|",
    "inertial angular momentum QA",
    "energy budget",
    "relative velocity decay",
    "principal-axis convergence",
    "predictor concordance",
    "sphere case",
    "zero angular momentum",
    "scaling covariance",
    "equilibrium fixed points",
    "rigid limit",
];

/// Runs the checks of `level` in order, reporting each as it completes.
pub fn run(level: Level, mut on_check: impl FnMut(&Check)) -> Report {
    let ids: Vec<u8> = match level {
        Level::Fast => FAST_CHECKS.to_vec(),
        Level::Full => (1..=12).collect(),
    };
    let mut runs = ReferenceRuns::default();
    let mut checks = Vec::with_capacity(ids.len());
    for id in ids {
        let check = run_check(id, &mut runs);
        on_check(&check);
        checks.push(check);
    }
    Report { level, checks }
}

/// Runs one check by number (1 to 12).
pub fn run_check_by_id(id: u8) -> Check {
    run_check(id, &mut ReferenceRuns::default())
}

fn run_check(id: u8, runs: &mut ReferenceRuns) -> Check {
    let name = NAMES
        .get(usize::from(id).wrapping_sub(1))
        .copied()
        .unwrap_or("unknown");
    let result = match id {
        1 => inertia_check(),
        2 => modulus_check(),
        3 => inertial_momentum_check(runs),
        4 => budget_check(runs),
        5 => decay_check(runs),
        6 => convergence_check(runs),
        7 => concordance_check(),
        8 => sphere_check(),
        9 => ortho_check(),
        10 => scaling_check(runs),
        11 => fixed_point_check(),
        12 => rigid_limit_check(),
        _ => Err(Error::InvalidInput(format!("no check numbered {id}"))),
    };
    match result {
        Ok((passed, observed, required)) => Check {
            id,
            name: name.into(),
            passed,
            observed,
            required,
        },
        Err(e) => Check {
            id,
            name: name.into(),
            passed: false,
            observed: format!("error: {e}"),
            required: "check completes".into(),
        },
    }
}

type Verdict = Result<(bool, String, String)>;

/// REF-EGG and REF-GEN outcomes, shared between checks.
#[derive(Default)]
struct ReferenceRuns {
    egg: Option<RunOutcome>,
    gen: Option<RunOutcome>,
}

impl ReferenceRuns {
    fn egg(&mut self) -> Result<&RunOutcome> {
        if self.egg.is_none() {
            self.egg = Some(run_config(reference::load(reference::REF_EGG)?)?);
        }
        Ok(self.egg.as_ref().expect("just set"))
    }

    fn gen(&mut self) -> Result<&RunOutcome> {
        if self.gen.is_none() {
            self.gen = Some(run_config(reference::load(reference::REF_GEN)?)?);
        }
        Ok(self.gen.as_ref().expect("just set"))
    }
}

fn run_config(config: RunConfig) -> Result<RunOutcome> {
    Simulation::new(config)?.run(&RunOptions::default())
}

fn u_ratio(run: &RunOutcome) -> f64 {
    let h = &run.history;
    let u0 = h[0].energy.u_l2sq.max(0.0).sqrt();
    h[h.len() - 1].energy.u_l2sq.max(0.0).sqrt() / u0
}

fn rel_frobenius(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).norm() / b.norm()
}

/// Brick-in-brick specs with random extents, offsets and densities.
pub fn random_specs(seed: u64, count: usize) -> Vec<GeometrySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (0..count)
        .map(|_| {
            let outer: [f64; 3] = std::array::from_fn(|_| 0.5 + unit());
            let cavity: [f64; 3] = std::array::from_fn(|i| outer[i] * (0.2 + 0.6 * unit()));
            let offset: [f64; 3] =
                std::array::from_fn(|i| (outer[i] - cavity[i]) * 0.9 * (2.0 * unit() - 1.0));
            GeometrySpec {
                outer_half_extents: outer,
                cavity_half_extents: cavity,
                cavity_offset: offset,
                rho_b: 0.2 + 2.8 * unit(),
                nu: 0.5,
            }
        })
        .collect()
}

/// Inertia about `y_c` assembled directly from the three bricks.
fn inertia_about_structure_center(spec: &GeometrySpec, y_c: &Vec3) -> Mat3 {
    let brick = |mass: f64, half: &[f64; 3], center: Vec3| {
        let sq = |i: usize| (2.0 * half[i]).powi(2);
        let own = Mat3::from_diagonal(&Vec3::new(
            mass * (sq(1) + sq(2)) / 12.0,
            mass * (sq(0) + sq(2)) / 12.0,
            mass * (sq(0) + sq(1)) / 12.0,
        ));
        let d = center - y_c;
        own + mass * (Mat3::identity() * d.norm_squared() - d * d.transpose())
    };
    let outer_center = -spec.body_center_of_mass();
    let cavity_center = spec.cavity_center();
    let v_out = spec.outer_volume();
    let v_cav = spec.cavity_volume();
    brick(spec.rho_b * v_out, &spec.outer_half_extents, outer_center)
        - brick(spec.rho_b * v_cav, &spec.cavity_half_extents, cavity_center)
        + brick(v_cav, &spec.cavity_half_extents, cavity_center)
}

fn inertia_check() -> Verdict {
    let (mut oracle_err, mut comp_err) = (0.0f64, 0.0f64);
    for spec in random_specs(0x1a2b, INERTIA_SPECS) {
        let exact = compute_mass_properties(&spec)?;
        let quad = quadrature_inertia_oracle(&spec, ORACLE_RESOLUTION)?;
        oracle_err = oracle_err.max(rel_frobenius(&exact.i_total, &quad.i_total));
        let composed = compose_total_inertia(&exact.i_b, &exact.i_f, exact.m, &exact.y_c);
        let direct = inertia_about_structure_center(&spec, &exact.y_c);
        comp_err = comp_err.max(rel_frobenius(&composed, &direct));
    }
    Ok((
        oracle_err < INERTIA_REL_TOL && comp_err < COMPOSITION_TOL,
        format!("oracle error {oracle_err:.3e} over {INERTIA_SPECS} specs at {ORACLE_RESOLUTION}^3, composition error {comp_err:.3e}"),
        format!("oracle < {INERTIA_REL_TOL:e}, composition < {COMPOSITION_TOL:e}"),
    ))
}

fn modulus_check() -> Verdict {
    // Coarse grid: the moduli are a property of the rigid update, not the resolution.
    let mut config = reference::load(reference::REF_GEN)?;
    config.grid = [8; 3];
    config.l0 = [0.3, -0.2, 0.1];
    let sim = Simulation::new(config)?;
    let mut state = sim.initial.clone();
    let (a0, l0) = (state.rigid.a, state.rigid.l);
    let (mut da, mut dl) = (0.0f64, 0.0f64);
    for _ in 0..MODULUS_STEPS {
        state = sim.system.step(&state, sim.dt)?.0;
        da = da.max(modulus_drift(&state.rigid.a, &a0));
        dl = dl.max(modulus_drift(&state.rigid.l, &l0));
    }
    Ok((
        da <= MODULUS_TOL && dl <= MODULUS_TOL,
        format!("max | |A|/|A0| - 1 | = {da:.3e}, max | |L|/|L0| - 1 | = {dl:.3e} over {MODULUS_STEPS} steps"),
        format!("both <= {MODULUS_TOL:e}"),
    ))
}

fn inertial_momentum_check(runs: &mut ReferenceRuns) -> Verdict {
    let egg = runs.egg()?;
    let drift = egg.conservation().max_qa_drift;
    let mut halved = reference::load(reference::REF_EGG)?;
    halved.dt = Some(egg.summary.dt / 2.0);
    let drift_half = run_config(halved)?.conservation().max_qa_drift;
    let factor = drift / drift_half;
    Ok((
        drift < QA_TOL && factor >= QA_HALVING_FACTOR,
        format!("max |QA - A0|/|A0| = {drift:.3e}, at dt/2 {drift_half:.3e}, reduction factor {factor:.3}"),
        format!("drift < {QA_TOL:e} and reduction factor >= {QA_HALVING_FACTOR}"),
    ))
}

fn budget_check(runs: &mut ReferenceRuns) -> Verdict {
    let coarse = runs.egg()?.budget().clone();
    let mut fine_config = reference::load(reference::REF_EGG)?;
    fine_config.grid = [FINE_GRID; 3];
    let fine = run_config(fine_config)?.budget().clone();
    let passed = coarse.max_residual < BUDGET_TOL
        && fine.max_residual < coarse.max_residual
        && coarse.monotonicity_violations == 0
        && fine.monotonicity_violations == 0;
    Ok((
        passed,
        format!(
            "max residual {:.3e} at 16^3, {:.3e} at {FINE_GRID}^3; largest per-step rise of E {:.3e} / {:.3e}",
            coarse.max_residual,
            fine.max_residual,
            coarse.max_energy_increase,
            fine.max_energy_increase
        ),
        format!("residual < {BUDGET_TOL} and smaller at {FINE_GRID}^3; rise <= {ENERGY_SLACK:e} E(0)"),
    ))
}

fn decay_check(runs: &mut ReferenceRuns) -> Verdict {
    let egg = u_ratio(runs.egg()?);
    let gen = u_ratio(runs.gen()?);
    Ok((
        egg <= U_DECAY && gen <= U_DECAY,
        format!("||u(T)||/||u(0)|| = {egg:.3e} (egg), {gen:.3e} (general)"),
        format!("<= {U_DECAY}"),
    ))
}

fn convergence_check(runs: &mut ReferenceRuns) -> Verdict {
    let mut passed = true;
    let mut observed = Vec::new();
    for (label, run) in [
        ("egg", runs.egg()?.clone()),
        ("general", runs.gen()?.clone()),
    ] {
        let v = run.verdict();
        passed &= v.converged
            && v.final_angle_deg < ANGLE_DEG
            && v.residual < RESIDUAL
            && v.inertia_mismatch < INERTIA_MISMATCH;
        observed.push(format!(
            "{label}: converged {} axis {:?} angle {:.3e} deg residual {:.3e} mismatch {:.3e}",
            v.converged, v.axis_index, v.final_angle_deg, v.residual, v.inertia_mismatch
        ));
    }
    Ok((
        passed,
        observed.join("; "),
        format!("converged, angle < {ANGLE_DEG} deg, residual < {RESIDUAL:e}, mismatch < {INERTIA_MISMATCH}"),
    ))
}

fn concordance_check() -> Verdict {
    let mut passed = true;
    let mut observed = Vec::new();
    for text in reference::EGG_VARIANTS {
        let config = reference::load(text)?;
        let name = config.name.clone();
        let run = run_config(config)?;
        let v = run.verdict();
        let egg_holds = run.prediction().verdict == Prediction::LargestAxisGuaranteed;
        passed &= egg_holds && v.converged && v.axis_index == Some(3);
        observed.push(format!(
            "{name}: predicted {:?}, converged {} axis {:?}",
            run.prediction().verdict,
            v.converged,
            v.axis_index
        ));
    }
    for text in reference::GEN_VARIANTS {
        let config = reference::load(text)?;
        let name = config.name.clone();
        let run = run_config(config)?;
        let v = run.verdict();
        let instability = run
            .prediction()
            .inequalities
            .iter()
            .any(|q| q.name == "smallest_axis_instability" && q.holds);
        passed &= instability && !(v.converged && v.axis_index == Some(1));
        observed.push(format!(
            "{name}: instability inequality {instability}, converged {} axis {:?}, final angles {:.3?} deg",
            v.converged,
            v.axis_index,
            run.history[run.history.len() - 1].angles_deg
        ));
    }
    Ok((
        passed,
        observed.join("; "),
        "egg variants satisfy the egg inequality and reach axis 3; general variants satisfy the instability inequality and never settle on axis 1".into(),
    ))
}

fn full_decay_fit(history: &[TimeSeriesRecord]) -> Result<crate::diagnostics::DecayFit> {
    let t_end = history.last().ok_or(Error::EmptyHistory)?.t;
    decay_fit(history, (0.0, t_end))
}

fn sphere_check() -> Verdict {
    let run = run_config(reference::load(reference::REF_SPHERE)?)?;
    let w0 = run.history[0].omega_bar_vec();
    let drift = run
        .history
        .iter()
        .map(|r| (r.omega_bar_vec() - w0).norm())
        .fold(0.0, f64::max)
        / w0.norm();
    let fit = full_decay_fit(&run.history)?;
    Ok((
        drift < SPHERE_OMEGA_BAR_TOL && fit.rate < 0.0 && fit.r_squared > MIN_R_SQUARED,
        format!(
            "max |Omega_bar - Omega_bar0|/|Omega_bar0| = {drift:.3e}; log E_tilde slope {:.4}, r^2 {:.5}",
            fit.rate, fit.r_squared
        ),
        format!("drift < {SPHERE_OMEGA_BAR_TOL:e}, slope < 0, r^2 > {MIN_R_SQUARED}"),
    ))
}

fn ortho_check() -> Verdict {
    let run = run_config(reference::load(reference::REF_ORTHO)?)?;
    let fit = full_decay_fit(&run.history)?;
    let w0 = run.history[0].omega_vec().norm();
    let w_end = run.history[run.history.len() - 1].omega_vec().norm();
    let ratio = w_end / w0;
    Ok((
        fit.r_squared > MIN_R_SQUARED && ratio < ORTHO_OMEGA_RATIO,
        format!(
            "log E_tilde slope {:.4}, r^2 {:.5}; |Omega(T)|/|Omega(0)| = {ratio:.3e}",
            fit.rate, fit.r_squared
        ),
        format!("r^2 > {MIN_R_SQUARED}, ratio < {ORTHO_OMEGA_RATIO:e}"),
    ))
}

/// Linear interpolation of `Omega_bar` at time `t` in a step-ordered history.
fn omega_bar_at(history: &[TimeSeriesRecord], t: f64) -> Vec3 {
    let idx = history.partition_point(|r| r.t < t);
    if idx == 0 {
        return history[0].omega_bar_vec();
    }
    if idx >= history.len() {
        return history[history.len() - 1].omega_bar_vec();
    }
    let (a, b) = (&history[idx - 1], &history[idx]);
    let s = (t - a.t) / (b.t - a.t);
    a.omega_bar_vec() * (1.0 - s) + b.omega_bar_vec() * s
}

fn scaling_check(runs: &mut ReferenceRuns) -> Verdict {
    let base_config = reference::load(reference::REF_EGG)?;
    let scaled = run_config(scaling_transform(&base_config, SCALING_LAMBDA)?)?;
    let base = runs.egg()?;
    let l2 = SCALING_LAMBDA * SCALING_LAMBDA;
    let t_scaled = scaled.history[scaled.history.len() - 1].t;
    let mut worst = 0.0f64;
    for k in 1..=SCALING_SAMPLES {
        let s = t_scaled * k as f64 / SCALING_SAMPLES as f64;
        let got = omega_bar_at(&scaled.history, s);
        let want = omega_bar_at(&base.history, l2 * s) * l2;
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok((
        worst <= SCALING_TOL,
        format!("max relative mismatch {worst:.3e} at {SCALING_SAMPLES} sample times, lambda = {SCALING_LAMBDA}"),
        format!("<= {SCALING_TOL}"),
    ))
}

fn fixed_point_check() -> Verdict {
    let mut config = reference::load(reference::REF_GEN)?;
    config.init = InitSpec::Zero;
    let probe = Simulation::new(config.clone())?;
    let mut worst = 0.0f64;
    let mut observed = Vec::new();
    for j in 0..3 {
        let axis = probe.axes.axis(j) * 10.0;
        config.omega_bar0 = Some(axis.into());
        config.a0 = None;
        let sim = Simulation::new(config.clone())?;
        let mut state = sim.initial.clone();
        let scale_a = state.rigid.a.norm();
        let scale_w = state.omega.norm();
        let mut axis_worst = 0.0f64;
        for _ in 0..FIXED_POINT_STEPS {
            let next = sim.system.step(&state, sim.dt)?.0;
            let mut du = 0.0f64;
            for (p, q) in next
                .fluid
                .velocity
                .comps
                .iter()
                .zip(&state.fluid.velocity.comps)
            {
                for (x, y) in p.data.iter().zip(&q.data) {
                    du = du.max((x - y).abs());
                }
            }
            let change = ((next.rigid.a - state.rigid.a).norm() / scale_a)
                .max((next.omega - state.omega).norm() / scale_w)
                .max(du);
            axis_worst = axis_worst.max(change);
            state = next;
        }
        observed.push(format!("axis {}: {axis_worst:.3e}", j + 1));
        worst = worst.max(axis_worst);
    }
    Ok((
        worst < FIXED_POINT_TOL,
        format!(
            "largest per-step change over {FIXED_POINT_STEPS} steps: {}",
            observed.join(", ")
        ),
        format!("< {FIXED_POINT_TOL:e} (relative for A and Omega, absolute for u)"),
    ))
}

/// Classical RK4 for the free rigid body `I Omega' = (I Omega) x Omega`.
pub fn rigid_body_rk4(inertia: &Mat3, omega0: Vec3, dt: f64, steps: usize) -> Vec3 {
    let inv = inertia.try_inverse().expect("inertia is positive definite");
    let f = |w: Vec3| inv * (inertia * w).cross(&w);
    let mut w = omega0;
    for _ in 0..steps {
        let k1 = f(w);
        let k2 = f(w + k1 * (dt / 2.0));
        let k3 = f(w + k2 * (dt / 2.0));
        let k4 = f(w + k3 * dt);
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    w
}

fn rigid_limit_check() -> Verdict {
    let sim = Simulation::new(reference::load(reference::DRY_RUN)?)?;
    let inertia = sim.inertia.i_total;
    let mut state = sim.initial.clone();
    let mut reference_omega = state.omega;
    let scale = reference_omega.norm();
    let mut worst = 0.0f64;
    let sub_dt = sim.dt / DRY_RUN_SUBSTEPS as f64;
    for _ in 0..sim.n_steps {
        state = sim.system.step(&state, sim.dt)?.0;
        reference_omega = rigid_body_rk4(&inertia, reference_omega, sub_dt, DRY_RUN_SUBSTEPS);
        worst = worst.max((state.omega - reference_omega).norm() / scale);
    }
    Ok((
        worst < DRY_RUN_TOL,
        format!(
            "max |Omega - Omega_ref|/|Omega0| = {worst:.3e} over t = {:.1} ({} steps)",
            state.time, sim.n_steps
        ),
        format!("< {DRY_RUN_TOL:e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_parses() {
        assert_eq!("fast".parse::<Level>().unwrap(), Level::Fast);
        assert_eq!("full".parse::<Level>().unwrap(), Level::Full);
        assert!("quick".parse::<Level>().is_err());
    }

    #[test]
    fn random_specs_are_valid_and_reproducible() {
        let a = random_specs(7, 20);
        assert_eq!(a, random_specs(7, 20));
        for spec in &a {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn rk4_conserves_energy_and_momentum_modulus() {
        let inertia = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        let w0 = Vec3::new(0.3, 1.0, 0.2);
        let w = rigid_body_rk4(&inertia, w0, 1e-3, 10_000);
        let energy = |w: Vec3| w.dot(&(inertia * w));
        assert!((energy(w) - energy(w0)).abs() < 1e-10);
        assert!(((inertia * w).norm() - (inertia * w0).norm()).abs() < 1e-10);
    }

    #[test]
    fn unknown_check_fails_cleanly() {
        let c = run_check_by_id(13);
        assert!(!c.passed);
        assert!(c.to_string().starts_with("FAIL 13"));
    }

    #[test]
    fn interpolation_hits_samples_and_midpoints() {
        let mut history = Vec::new();
        for i in 0..3 {
            history.push(TimeSeriesRecord {
                t: i as f64,
                omega_bar: [i as f64, 0.0, 1.0],
                ..Default::default()
            });
        }
        assert_eq!(omega_bar_at(&history, 1.0), Vec3::new(1.0, 0.0, 1.0));
        assert_eq!(omega_bar_at(&history, 1.5), Vec3::new(1.5, 0.0, 1.0));
        assert_eq!(omega_bar_at(&history, 9.0), Vec3::new(2.0, 0.0, 1.0));
    }
}
