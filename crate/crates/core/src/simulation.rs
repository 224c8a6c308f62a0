//! Run driver: builds the coupled system from a config, steps it, samples
//! diagnostics, writes artifacts and checkpoints.

use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    classify_limit, predict_axis_body, AxisVerdict, LimitSample, PredictionReport,
};
use crate::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::config::{InitialRotation, RunConfig};
use crate::coupling::{translational_velocity, CoupledState, CoupledSystem, FluidMode};
use crate::diagnostics::{
    conservation_report, energy_breakdown, energy_budget, Baseline, BudgetReport,
    ConservationReport, CsvSink, TimeSeriesRecord,
};
use crate::error::{Error, Result};
use crate::fluid::{
    dissipation_rate, initialize_velocity, FluidParams, FluidState, FluidStepper, MacGrid,
    VelocityField,
};
use crate::geometry::{compute_mass_properties, principal_axes, InertiaData, PrincipalAxes};
use crate::Vec3;

/// Per-step rise of `E` tolerated by the monotonicity audit, relative to `E(0)`.
pub const ENERGY_SLACK: f64 = 1e-6;
/// One-sided tolerance of the energy inequality audit, relative to `E(0)`.
pub const BUDGET_TOL: f64 = 0.02;
/// Fraction of the stable step used when the config does not fix `dt`.
pub const AUTO_DT_HEADROOM: f64 = 0.8;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// A configured run, ready to step.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub inertia: InertiaData,
    pub axes: PrincipalAxes,
    pub system: CoupledSystem,
    pub dt: f64,
    pub n_steps: u64,
    pub sample_every: u64,
    pub initial: CoupledState,
    pub baseline: Baseline,
    pub e0: f64,
    pub u0_l2: f64,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let inertia = compute_mass_properties(&config.geometry)?;
        let axes = principal_axes(&inertia.i_total)?;
        let grid = MacGrid::for_cavity(&config.geometry, config.grid)?;
        let params = FluidParams::new(config.geometry.nu, config.dt_safety)?;
        let stepper = FluidStepper::new(&grid, params)?;
        let mut system = CoupledSystem::new(inertia.clone(), axes.clone(), stepper);
        system.max_picard = config.picard.max_iterations;
        system.picard_rel_tol = config.picard.rel_tol;
        if config.dry_run {
            system.mode = FluidMode::DryRun;
        }

        let u0 = if config.dry_run {
            VelocityField::zeros(&grid)
        } else {
            initialize_velocity(&grid, system.fluid.solver(), &config.init)?
        };
        let a0 = match config.initial_rotation() {
            InitialRotation::OmegaBar(w) => inertia.i_total * Vec3::from(w),
            InitialRotation::Momentum(a) => Vec3::from(a),
        };
        let l0 = Vec3::from(config.l0);
        let dt = match config.dt {
            Some(dt) => dt,
            None => AUTO_DT_HEADROOM * system.fluid.stable_step(&u0).limit,
        };
        let n_steps = ((config.t_end / dt) - 1e-9).ceil().max(1.0) as u64;
        let sample_every = ((config.sample_interval / dt).round() as u64).max(1);
        let initial = system.initial_state(FluidState::new(grid, u0), a0, l0);
        let e0 = energy_breakdown(&initial, &inertia.i_total).e;
        let u0_l2 = initial.fluid.kinetic_energy().sqrt();
        Ok(Self {
            config,
            inertia,
            axes,
            system,
            dt,
            n_steps,
            sample_every,
            initial,
            baseline: Baseline {
                a0: a0.into(),
                l0: l0.into(),
            },
            e0,
            u0_l2,
        })
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.system.fluid.set_parallel(parallel);
    }

    pub fn grid(&self) -> &MacGrid {
        self.system.fluid.grid()
    }

    pub fn abs_a0(&self) -> f64 {
        Vec3::from(self.baseline.a0).norm()
    }

    pub fn prediction(&self) -> Result<PredictionReport> {
        let e_tilde0 = energy_breakdown(&self.initial, &self.inertia.i_total).e_tilde;
        predict_axis_body(&self.axes, &self.initial.omega_bar, e_tilde0, self.abs_a0())
    }

    fn dissipation(&self, state: &CoupledState) -> f64 {
        match self.system.mode {
            FluidMode::Active => {
                dissipation_rate(self.grid(), &state.fluid.velocity, self.config.geometry.nu)
            }
            FluidMode::DryRun => 0.0,
        }
    }

    fn record(
        &self,
        state: &CoupledState,
        diss_rate: f64,
        diss_cum: f64,
        picard: usize,
    ) -> TimeSeriesRecord {
        TimeSeriesRecord::from_state(
            state,
            &self.inertia.i_total,
            &self.axes,
            &self.baseline,
            diss_rate,
            diss_cum,
            picard,
        )
    }

    fn meta(&self, state: &CoupledState, diss_cum: f64) -> CheckpointMeta {
        let (a, l, q) = checkpoint::rigid_to_meta(&state.rigid);
        CheckpointMeta {
            config_hash: self.config.hash(),
            data_file: String::new(),
            step: state.step,
            time: state.time,
            a,
            l,
            q,
            omega_prev: state.omega_prev.map(Into::into),
            diss_cum,
            a0: self.baseline.a0,
            l0: self.baseline.l0,
            e0: self.e0,
            u0_l2: self.u0_l2,
            dt: self.dt,
        }
    }

    /// State and running dissipation restored from a checkpoint of this run.
    pub fn restore(&self, ckpt: &Checkpoint) -> Result<(CoupledState, f64)> {
        if ckpt.meta.config_hash != self.config.hash() {
            return Err(Error::Checkpoint(
                "checkpoint was written by a different config".into(),
            ));
        }
        if ckpt.grid != *self.grid() || ckpt.meta.dt.to_bits() != self.dt.to_bits() {
            return Err(Error::Checkpoint(
                "grid or dt does not match the config".into(),
            ));
        }
        let mut state = self.system.initial_state(
            checkpoint::fluid_from_checkpoint(ckpt),
            Vec3::from(ckpt.meta.a),
            Vec3::from(ckpt.meta.l),
        );
        state.rigid = ckpt.rigid();
        state.time = ckpt.meta.time;
        state.step = ckpt.meta.step;
        state.omega_prev = ckpt.meta.omega_prev.map(Vec3::from);
        Ok((state, ckpt.meta.diss_cum))
    }

    /// Steps to the end time. Artifacts go to `opts.out_dir` when given.
    pub fn run(&self, opts: &RunOptions) -> Result<RunOutcome> {
        let started = Instant::now();
        let result = self.run_inner(opts, started);
        if let (Err(err), Some(dir)) = (&result, &opts.out_dir) {
            let summary = RunSummary::failure(self, err, started.elapsed().as_secs_f64());
            summary.write(dir)?;
        }
        result
    }

    fn run_inner(&self, opts: &RunOptions, started: Instant) -> Result<RunOutcome> {
        let (mut state, mut diss_cum) = match &opts.resume {
            Some(ckpt) => self.restore(ckpt)?,
            None => (self.initial.clone(), 0.0),
        };
        let resumed = opts.resume.is_some();
        let mut csv = match &opts.out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(TIMESERIES_FILE);
                Some(if resumed && path.exists() {
                    CsvSink::append(BufWriter::new(OpenOptions::new().append(true).open(&path)?))
                } else {
                    CsvSink::new(BufWriter::new(File::create(&path)?))?
                })
            }
            None => None,
        };

        let mut diss = self.dissipation(&state);
        let mut history = Vec::with_capacity((self.n_steps - state.step + 1) as usize);
        let first = self.record(&state, diss, diss_cum, 0);
        if let (Some(sink), false) = (csv.as_mut(), resumed) {
            sink.write(&first)?;
        }
        history.push(first);
        let mut checkpoints = Vec::new();

        while state.step < self.n_steps {
            let (next, report) = match self.system.step(&state, self.dt) {
                Ok(ok) => ok,
                Err(source) => {
                    let snapshot = match &opts.out_dir {
                        Some(dir) => Some(checkpoint::write_checkpoint(
                            dir,
                            &format!("failure_step{}", state.step),
                            &state,
                            self.meta(&state, diss_cum),
                        )?),
                        None => None,
                    };
                    return Err(Error::AtStep {
                        step: state.step,
                        time: state.time,
                        snapshot,
                        source: Box::new(source),
                    });
                }
            };
            let next_diss = match self.system.mode {
                FluidMode::Active => report.dissipation_rate,
                FluidMode::DryRun => 0.0,
            };
            diss_cum += 0.5 * self.dt * (diss + next_diss);
            diss = next_diss;
            state = next;
            let rec = self.record(&state, diss, diss_cum, report.picard_iterations);
            let sample = state.step % self.sample_every == 0 || state.step == self.n_steps;
            if let (Some(sink), true) = (csv.as_mut(), sample) {
                sink.write(&rec)?;
            }
            history.push(rec);
            if let (Some(every), Some(dir)) = (opts.checkpoint_every, &opts.out_dir) {
                if every > 0 && state.step % every == 0 && state.step < self.n_steps {
                    if let Some(sink) = csv.as_mut() {
                        sink.flush()?;
                    }
                    checkpoints.push(checkpoint::write_checkpoint(
                        dir,
                        &format!("checkpoint_step{}", state.step),
                        &state,
                        self.meta(&state, diss_cum),
                    )?);
                }
            }
        }
        if let Some(sink) = csv.as_mut() {
            sink.flush()?;
        }

        let samples: Vec<LimitSample> = history
            .iter()
            .map(|r| LimitSample {
                t: r.t,
                omega: r.omega_vec(),
                u_l2: r.energy.u_l2sq.max(0.0).sqrt(),
            })
            .collect();
        let verdict = classify_limit(
            &samples,
            &self.axes,
            self.abs_a0(),
            self.u0_l2,
            &self.config.tolerances,
        )?;
        let prediction = self.prediction()?;
        let conservation = conservation_report(&history)?;
        let budget = energy_budget(&history, ENERGY_SLACK, BUDGET_TOL)?;
        let xi = translational_velocity(&state.rigid.l, &state.omega, &self.inertia);
        let summary = RunSummary {
            name: self.config.name.clone(),
            config_hash: self.config.hash(),
            steps: state.step,
            dt: self.dt,
            t_end: state.time,
            case: Some(prediction.case),
            verdict: Some(prediction.verdict),
            axis_index: verdict.axis_index,
            mu: Some(verdict.mu),
            final_angle_deg: Some(verdict.final_angle_deg),
            residual: Some(verdict.residual),
            inertia_mismatch: Some(verdict.inertia_mismatch),
            prediction: Some(prediction),
            limit: Some(verdict),
            conservation: Some(conservation),
            budget: Some(budget),
            final_translational_velocity: Some(xi.into()),
            wall_time_s: started.elapsed().as_secs_f64(),
            error: None,
        };
        if let Some(dir) = &opts.out_dir {
            summary.write(dir)?;
        }
        Ok(RunOutcome {
            history,
            state,
            summary,
            checkpoints,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: Option<u64>,
    pub resume: Option<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// One record per step, starting with the initial (or resumed) state.
    pub history: Vec<TimeSeriesRecord>,
    pub state: CoupledState,
    pub summary: RunSummary,
    pub checkpoints: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn verdict(&self) -> &AxisVerdict {
        self.summary.limit.as_ref().expect("completed run")
    }

    pub fn budget(&self) -> &BudgetReport {
        self.summary.budget.as_ref().expect("completed run")
    }

    pub fn conservation(&self) -> &ConservationReport {
        self.summary.conservation.as_ref().expect("completed run")
    }

    pub fn prediction(&self) -> &PredictionReport {
        self.summary.prediction.as_ref().expect("completed run")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config_hash: String,
    pub steps: u64,
    pub dt: f64,
    pub t_end: f64,
    pub case: Option<crate::asymptotics::InertiaCase>,
    pub verdict: Option<crate::asymptotics::Prediction>,
    pub axis_index: Option<usize>,
    pub mu: Option<f64>,
    pub final_angle_deg: Option<f64>,
    pub residual: Option<f64>,
    pub inertia_mismatch: Option<f64>,
    pub prediction: Option<PredictionReport>,
    pub limit: Option<AxisVerdict>,
    pub conservation: Option<ConservationReport>,
    pub budget: Option<BudgetReport>,
    pub final_translational_velocity: Option<[f64; 3]>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl RunSummary {
    fn failure(sim: &Simulation, err: &Error, wall_time_s: f64) -> Self {
        let prediction = sim.prediction().ok();
        Self {
            name: sim.config.name.clone(),
            config_hash: sim.config.hash(),
            steps: match err {
                Error::AtStep { step, .. } => *step,
                _ => 0,
            },
            dt: sim.dt,
            t_end: match err {
                Error::AtStep { time, .. } => *time,
                _ => 0.0,
            },
            case: prediction.as_ref().map(|p| p.case),
            verdict: prediction.as_ref().map(|p| p.verdict),
            axis_index: None,
            mu: None,
            final_angle_deg: None,
            residual: None,
            inertia_mismatch: None,
            prediction,
            limit: None,
            conservation: None,
            budget: None,
            final_translational_velocity: None,
            wall_time_s,
            error: Some(error_chain(err)),
        }
    }

    /// Summary for a run that never started, e.g. on a config error.
    pub fn config_failure(name: &str, err: &Error) -> Self {
        Self {
            name: name.to_string(),
            config_hash: String::new(),
            steps: 0,
            dt: 0.0,
            t_end: 0.0,
            case: None,
            verdict: None,
            axis_index: None,
            mu: None,
            final_angle_deg: None,
            residual: None,
            inertia_mismatch: None,
            prediction: None,
            limit: None,
            conservation: None,
            budget: None,
            final_translational_velocity: None,
            wall_time_s: 0.0,
            error: Some(error_chain(err)),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(SUMMARY_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

fn error_chain(err: &Error) -> String {
    match err {
        Error::AtStep {
            snapshot: Some(p), ..
        } => format!("{err} (snapshot: {})", p.display()),
        _ => err.to_string(),
    }
}
