//! Energy ledger, conservation drifts and decay fits.
//!
//! Energies use the unhalved convention `E = ||u||^2 - Ot.I.Ot + Ob.I.Ob`,
//! so the energy equality reads `E(t) + 2 nu int ||grad u||^2 = E(0)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coupling::CoupledState;
use crate::error::{Error, Result};
use crate::geometry::PrincipalAxes;
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e: f64,
    pub e_bar: f64,
    pub e_tilde: f64,
    pub u_l2sq: f64,
}

impl EnergyBreakdown {
    /// From `||u||^2`, `Ot.I.Ot` and `Ob.I.Ob`.
    pub fn from_parts(u_l2sq: f64, tilde_quadratic: f64, bar_quadratic: f64) -> Self {
        let e_tilde = u_l2sq - tilde_quadratic;
        Self {
            e: bar_quadratic + e_tilde,
            e_bar: bar_quadratic,
            e_tilde,
            u_l2sq,
        }
    }
}

pub fn energy_breakdown(state: &CoupledState, inertia: &Mat3) -> EnergyBreakdown {
    let quad = |w: &Vec3| w.dot(&(inertia * w));
    EnergyBreakdown::from_parts(
        state.fluid.kinetic_energy(),
        quad(&state.omega_tilde),
        quad(&state.omega_bar),
    )
}

/// Relative modulus drift `| |v|/|v0| - 1 |`, or `|v|` when `v0 = 0`.
pub fn modulus_drift(v: &Vec3, v0: &Vec3) -> f64 {
    let n0 = v0.norm();
    if n0 > 0.0 {
        (v.norm() / n0 - 1.0).abs()
    } else {
        v.norm()
    }
}

/// `||Q A - A0|| / |A0|`, or the absolute value when `A0 = 0`.
pub fn inertial_drift(q: &Mat3, a: &Vec3, a0: &Vec3) -> f64 {
    let d = (q * a - a0).norm();
    let n0 = a0.norm();
    if n0 > 0.0 {
        d / n0
    } else {
        d
    }
}

/// Angle in degrees between `omega` and each principal axis, up to sign.
/// `NaN` when `omega = 0`.
pub fn axis_angles_deg(omega: &Vec3, axes: &PrincipalAxes) -> [f64; 3] {
    let n = omega.norm();
    let mut out = [f64::NAN; 3];
    if n > 0.0 {
        for (j, slot) in out.iter_mut().enumerate() {
            let c = (omega.dot(&axes.axis(j)).abs() / n).min(1.0);
            *slot = c.acos().to_degrees();
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub diss_rate: f64,
    pub diss_cum: f64,
    pub a: [f64; 3],
    pub abs_a_drift: f64,
    pub qa_drift: f64,
    pub abs_l_drift: f64,
    pub omega: [f64; 3],
    pub omega_bar: [f64; 3],
    pub mean_u_abs: f64,
    pub angles_deg: [f64; 3],
    pub picard_iters: usize,
}

/// Reference values every record is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub a0: [f64; 3],
    pub l0: [f64; 3],
}

impl TimeSeriesRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        state: &CoupledState,
        inertia: &Mat3,
        axes: &PrincipalAxes,
        baseline: &Baseline,
        diss_rate: f64,
        diss_cum: f64,
        picard_iters: usize,
    ) -> Self {
        let a0 = Vec3::from(baseline.a0);
        let l0 = Vec3::from(baseline.l0);
        let grid = &state.fluid.grid;
        Self {
            t: state.time,
            energy: energy_breakdown(state, inertia),
            diss_rate,
            diss_cum,
            a: state.rigid.a.into(),
            abs_a_drift: modulus_drift(&state.rigid.a, &a0),
            qa_drift: inertial_drift(&state.rigid.q, &state.rigid.a, &a0),
            abs_l_drift: modulus_drift(&state.rigid.l, &l0),
            omega: state.omega.into(),
            omega_bar: state.omega_bar.into(),
            mean_u_abs: crate::fluid::mean_velocity(grid, &state.fluid.velocity).norm(),
            angles_deg: axis_angles_deg(&state.omega, axes),
            picard_iters,
        }
    }

    pub fn omega_vec(&self) -> Vec3 {
        Vec3::from(self.omega)
    }

    pub fn omega_bar_vec(&self) -> Vec3 {
        Vec3::from(self.omega_bar)
    }
}

pub const CSV_HEADER: [&str; 24] = [
    "t",
    "E",
    "E_bar",
    "E_tilde",
    "u_l2sq",
    "diss_rate",
    "diss_cum",
    "A1",
    "A2",
    "A3",
    "absA_drift",
    "QA_drift",
    "absL_drift",
    "Om1",
    "Om2",
    "Om3",
    "Ombar1",
    "Ombar2",
    "Ombar3",
    "mean_u_abs",
    "ang1_deg",
    "ang2_deg",
    "ang3_deg",
    "picard_iters",
];

/// Time-series writer; values are written in shortest round-trip form.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(CSV_HEADER)?;
        Ok(Self { writer })
    }

    /// Appends to an existing file without repeating the header.
    pub fn append(inner: W) -> Self {
        Self {
            writer: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(inner),
        }
    }

    pub fn write(&mut self, r: &TimeSeriesRecord) -> Result<()> {
        let e = &r.energy;
        let mut fields: Vec<String> = [
            r.t,
            e.e,
            e.e_bar,
            e.e_tilde,
            e.u_l2sq,
            r.diss_rate,
            r.diss_cum,
            r.a[0],
            r.a[1],
            r.a[2],
            r.abs_a_drift,
            r.qa_drift,
            r.abs_l_drift,
            r.omega[0],
            r.omega[1],
            r.omega[2],
            r.omega_bar[0],
            r.omega_bar[1],
            r.omega_bar[2],
            r.mean_u_abs,
            r.angles_deg[0],
            r.angles_deg[1],
            r.angles_deg[2],
        ]
        .iter()
        .map(|v| v.to_string())
        .collect();
        fields.push(r.picard_iters.to_string());
        self.writer.write_record(&fields)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub e0: f64,
    /// `max_t |E(t) + D(t) - E(0)| / E(0)`.
    pub max_residual: f64,
    pub final_residual: f64,
    /// Cumulative dissipation `D(T)` by the trapezoid rule.
    pub total_dissipation: f64,
    /// Records where `E` rose by more than the slack since the previous record.
    pub monotonicity_violations: usize,
    /// Largest rise of `E` between consecutive records, relative to `E(0)`.
    pub max_energy_increase: f64,
    /// Records with `E(t) + D(t) > E(0) (1 + r_tol)`.
    pub inequality_violations: usize,
}

/// Budget audit over consecutive records. `slack` and `r_tol` are relative to `E(0)`.
pub fn energy_budget(history: &[TimeSeriesRecord], slack: f64, r_tol: f64) -> Result<BudgetReport> {
    let first = history.first().ok_or(Error::EmptyHistory)?;
    let e0 = first.energy.e;
    let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    let mut cum = 0.0;
    let mut report = BudgetReport {
        e0,
        max_residual: 0.0,
        final_residual: 0.0,
        total_dissipation: 0.0,
        monotonicity_violations: 0,
        max_energy_increase: 0.0,
        inequality_violations: 0,
    };
    for (idx, r) in history.iter().enumerate() {
        if idx > 0 {
            let prev = &history[idx - 1];
            cum += 0.5 * (r.t - prev.t) * (r.diss_rate + prev.diss_rate);
            let rise = (r.energy.e - prev.energy.e) / scale;
            report.max_energy_increase = report.max_energy_increase.max(rise);
            if rise > slack {
                report.monotonicity_violations += 1;
            }
        }
        let residual = (r.energy.e + cum - e0).abs() / scale;
        report.max_residual = report.max_residual.max(residual);
        report.final_residual = residual;
        if (r.energy.e + cum - e0) / scale > r_tol {
            report.inequality_violations += 1;
        }
    }
    report.total_dissipation = cum;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub max_abs_a_drift: f64,
    pub final_abs_a_drift: f64,
    pub max_qa_drift: f64,
    pub final_qa_drift: f64,
    pub max_abs_l_drift: f64,
    pub final_abs_l_drift: f64,
    pub max_mean_u_abs: f64,
}

pub fn conservation_report(history: &[TimeSeriesRecord]) -> Result<ConservationReport> {
    let last = history.last().ok_or(Error::EmptyHistory)?;
    let max = |f: fn(&TimeSeriesRecord) -> f64| history.iter().map(f).fold(0.0, f64::max);
    Ok(ConservationReport {
        max_abs_a_drift: max(|r| r.abs_a_drift),
        final_abs_a_drift: last.abs_a_drift,
        max_qa_drift: max(|r| r.qa_drift),
        final_qa_drift: last.qa_drift,
        max_abs_l_drift: max(|r| r.abs_l_drift),
        final_abs_l_drift: last.abs_l_drift,
        max_mean_u_abs: max(|r| r.mean_u_abs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log E_tilde` against `t`.
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares line through `(t, log y)`.
pub fn log_linear_fit(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "decay fit needs at least two samples".into(),
        ));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(t, y) in points {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "decay fit needs positive values, got {y} at t = {t}"
            )));
        }
        logs.push((t, y.ln()));
    }
    let n = logs.len() as f64;
    let mt = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for &(t, l) in &logs {
        stt += (t - mt) * (t - mt);
        stl += (t - mt) * (l - ml);
        sll += (l - ml) * (l - ml);
    }
    if stt == 0.0 {
        return Err(Error::InvalidInput(
            "decay fit window has zero width".into(),
        ));
    }
    let rate = stl / stt;
    let r_squared = if sll == 0.0 {
        1.0
    } else {
        stl * stl / (stt * sll)
    };
    Ok(DecayFit {
        rate,
        r_squared,
        samples: logs.len(),
    })
}

/// Exponential fit of `E_tilde` over records with `t` in `[window.0, window.1]`.
pub fn decay_fit(history: &[TimeSeriesRecord], window: (f64, f64)) -> Result<DecayFit> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let points: Vec<(f64, f64)> = history
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, r.energy.e_tilde))
        .collect();
    log_linear_fit(&points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{CoupledSystem, FluidMode};
    use crate::fluid::{
        initialize_velocity, FluidParams, FluidState, FluidStepper, InitSpec, MacGrid,
    };
    use crate::geometry::{compute_mass_properties, principal_axes, GeometrySpec};

    fn record(t: f64, e: f64, diss: f64) -> TimeSeriesRecord {
        TimeSeriesRecord {
            t,
            energy: EnergyBreakdown {
                e,
                e_bar: e,
                e_tilde: e,
                u_l2sq: 0.0,
            },
            diss_rate: diss,
            diss_cum: 0.0,
            a: [0.0; 3],
            abs_a_drift: 0.0,
            qa_drift: 0.0,
            abs_l_drift: 0.0,
            omega: [0.0; 3],
            omega_bar: [0.0; 3],
            mean_u_abs: 0.0,
            angles_deg: [0.0; 3],
            picard_iters: 0,
        }
    }

    #[test]
    fn breakdown_arithmetic() {
        let b = EnergyBreakdown::from_parts(5.0, 2.0, 3.0);
        assert_eq!((b.e, b.e_bar, b.e_tilde, b.u_l2sq), (6.0, 3.0, 3.0, 5.0));
    }

    fn system() -> CoupledSystem {
        let spec = GeometrySpec {
            outer_half_extents: [1.0, 0.9, 0.8],
            cavity_half_extents: [0.5, 0.45, 0.4],
            cavity_offset: [0.1, 0.0, -0.05],
            rho_b: 0.5,
            nu: 0.5,
        };
        let inertia = compute_mass_properties(&spec).unwrap();
        let axes = principal_axes(&inertia.i_total).unwrap();
        let grid = MacGrid::for_cavity(&spec, [8, 8, 8]).unwrap();
        let fluid = FluidStepper::new(&grid, FluidParams::new(spec.nu, 0.5).unwrap()).unwrap();
        CoupledSystem::new(inertia, axes, fluid)
    }

    #[test]
    fn tilde_energy_is_bounded_by_fluid_energy() {
        let sys = system();
        let grid = sys.fluid.grid().clone();
        for seed in 0..100 {
            let u = initialize_velocity(
                &grid,
                sys.fluid.solver(),
                &InitSpec::RandomSolenoidal {
                    seed,
                    amplitude: 1.0,
                },
            )
            .unwrap();
            let state = sys.initial_state(
                FluidState::new(grid.clone(), u),
                Vec3::new(0.1, 0.2, 0.3),
                Vec3::zeros(),
            );
            let b = energy_breakdown(&state, &sys.inertia.i_total);
            assert!(
                b.e_tilde >= 0.0 && b.e_tilde <= b.u_l2sq,
                "seed {seed}: {b:?}"
            );
            assert!((b.e - b.e_bar - b.e_tilde).abs() <= 1e-15 * b.e);
        }
    }

    #[test]
    fn rest_fluid_energy_is_rigid() {
        let sys = system();
        let grid = sys.fluid.grid().clone();
        let state = sys.initial_state(
            FluidState::new(grid.clone(), crate::fluid::VelocityField::zeros(&grid)),
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::zeros(),
        );
        let b = energy_breakdown(&state, &sys.inertia.i_total);
        assert_eq!(b.e_tilde, 0.0);
        assert_eq!(b.e, b.e_bar);
    }

    #[test]
    fn budget_trapezoid_and_monotonicity() {
        // E = 1 - t^2/2 loses exactly int_0^t s ds, with dissipation rate t.
        let h: Vec<_> = (0..=10)
            .map(|i| {
                let t = i as f64 * 0.1;
                record(t, 1.0 - 0.5 * t * t, t)
            })
            .collect();
        let r = energy_budget(&h, 1e-6, 0.02).unwrap();
        assert!(r.max_residual < 1e-14, "{r:?}");
        assert!((r.total_dissipation - 0.5).abs() < 1e-14);
        assert_eq!(r.monotonicity_violations, 0);

        let mut bumped = h.clone();
        bumped[4].energy.e += 0.1;
        let r = energy_budget(&bumped, 1e-6, 0.02).unwrap();
        assert_eq!(r.monotonicity_violations, 1);
        assert_eq!(r.inequality_violations, 1);
        assert!(energy_budget(&[], 1e-6, 0.02).is_err());
    }

    #[test]
    fn dry_run_budget_is_flat() {
        let mut sys = system();
        sys.mode = FluidMode::DryRun;
        let grid = sys.fluid.grid().clone();
        let baseline = Baseline {
            a0: [0.3, 0.5, 1.2],
            l0: [0.0; 3],
        };
        let mut state = sys.initial_state(
            FluidState::new(grid.clone(), crate::fluid::VelocityField::zeros(&grid)),
            Vec3::from(baseline.a0),
            Vec3::zeros(),
        );
        let rec = |s: &CoupledState| {
            TimeSeriesRecord::from_state(s, &sys.inertia.i_total, &sys.axes, &baseline, 0.0, 0.0, 0)
        };
        let mut history = vec![rec(&state)];
        for _ in 0..500 {
            state = sys.step(&state, 2e-3).unwrap().0;
            history.push(rec(&state));
        }
        let r = energy_budget(&history, 1e-6, 0.02).unwrap();
        assert_eq!(r.total_dissipation, 0.0);
        assert!(r.max_residual < 1e-10, "{r:?}");
    }

    #[test]
    fn exact_exponential_fit() {
        let h: Vec<_> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.02;
                record(t, (-3.0 * t).exp(), 0.0)
            })
            .collect();
        let fit = decay_fit(&h, (0.0, 1.0)).unwrap();
        assert!((fit.rate + 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let mut bad = h.clone();
        bad[3].energy.e_tilde = 0.0;
        assert!(decay_fit(&bad, (0.0, 1.0)).is_err());
    }

    #[test]
    fn csv_header_and_row_shape() {
        let mut buf = Vec::new();
        {
            let mut sink = CsvSink::new(&mut buf).unwrap();
            sink.write(&record(0.5, 1.0, 0.25)).unwrap();
            sink.flush().unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap().split(',').count(), CSV_HEADER.len());
    }

    #[test]
    fn angles_ignore_axis_sign() {
        let axes = principal_axes(&Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0))).unwrap();
        let a = axis_angles_deg(&Vec3::new(0.0, 0.0, -2.0), &axes);
        assert!(a[2].abs() < 1e-12 && (a[0] - 90.0).abs() < 1e-12);
        assert!(axis_angles_deg(&Vec3::zeros(), &axes)[0].is_nan());
    }
}
