//! Command-line front end: inspect, run, predict, verify, scale.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cavityflow::asymptotics::scaling_transform;
use cavityflow::checkpoint::read_checkpoint;
use cavityflow::config::RunConfig;
use cavityflow::coupling::translational_velocity;
use cavityflow::simulation::{RunOptions, RunSummary, Simulation};
use cavityflow::verify::{self, Level};
use cavityflow::Error;

const EXIT_OK: u8 = 0;
const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cavityflow",
    version,
    about = "Rigid body with a viscous-fluid-filled cavity"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Print mass properties, principal axes and the axis prediction.
    Inspect(Common),
    /// Run the coupled simulation and write the time series and summary.
    Run(RunArgs),
    /// Evaluate the a-priori axis criteria for the initial data.
    Predict(Common),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
    /// Emit the config rescaled by `--lambda`.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Worker threads for the fluid substep; 1 keeps runs bitwise reproducible.
    #[arg(long, value_name = "N", default_value_t = 1)]
    threads: usize,
    /// Write a checkpoint every N steps.
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<u64>,
    /// Continue from a checkpoint written by the same config.
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// `fast` runs the oracle checks; `full` adds the reference simulations.
    #[arg(long, default_value = "fast")]
    level: String,
    /// Also validate this config and check that its run converges.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for the JSON report.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N", default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    common: Common,
    /// Scaling factor: lengths shrink by lambda, times by lambda^2.
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } | Error::Checkpoint(_) | Error::InvalidInput(_) => EXIT_CONFIG,
            Error::Geometry(_) => EXIT_CONFIG,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_OTHER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.verb {
        Verb::Inspect(args) => inspect(&args),
        Verb::Run(args) => run(&args),
        Verb::Predict(args) => predict(&args),
        Verb::Verify(args) => verify_cmd(&args),
        Verb::Scale(args) => scale(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn config_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a config; on failure writes a summary carrying the error when a directory is known.
fn load_config(path: &Path, out: Option<&Path>) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| {
        if let Some(dir) = out {
            let _ = RunSummary::config_failure(&config_name(path), &e).write(dir);
        }
        Failure::from(e)
    })
}

fn write_json(dir: &Path, file: &str, value: &serde_json::Value) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(file);
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

fn vec3(v: &cavityflow::Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn mat3(m: &cavityflow::Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
}

fn inspect(args: &Common) -> CliResult {
    let config = load_config(&args.config, args.out.as_deref())?;
    let sim = Simulation::new(config)?;
    let i = &sim.inertia;
    let axes = &sim.axes;
    let prediction = sim.prediction()?;
    let report = json!({
        "name": sim.config.name,
        "config_hash": sim.config.hash(),
        "mass": {"m_b": i.m_b, "m_f": i.m_f, "m": i.m},
        "y_f": vec3(&i.y_f),
        "y_c": vec3(&i.y_c),
        "i_b": mat3(&i.i_b),
        "i_f": mat3(&i.i_f),
        "i_total": mat3(&i.i_total),
        "principal_moments": axes.eigenvalues,
        "principal_axes": (0..3).map(|j| vec3(&axes.axis(j))).collect::<Vec<_>>(),
        "degenerate": axes.degenerate,
        "eigenspaces": axes.eigenspaces().iter()
            .map(|g| g.iter().map(|j| j + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "grid": sim.config.grid,
        "dt": sim.dt,
        "steps": sim.n_steps,
        "e0": sim.e0,
        "u0_l2": sim.u0_l2,
        "prediction": prediction,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &args.out {
        write_json(dir, "summary.json", &report)?;
    }
    Ok(EXIT_OK)
}

fn predict(args: &Common) -> CliResult {
    let config = load_config(&args.config, args.out.as_deref())?;
    let sim = Simulation::new(config)?;
    let report = serde_json::to_value(sim.prediction()?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &args.out {
        write_json(dir, "prediction.json", &report)?;
    }
    Ok(EXIT_OK)
}

fn init_threads(n: usize) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "--threads must be at least 1".into(),
        });
    }
    if n > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_OTHER,
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn default_out(config: &RunConfig) -> PathBuf {
    match &config.output_dir {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from("out").join(if config.name.is_empty() {
            "run"
        } else {
            &config.name
        }),
    }
}

fn run(args: &RunArgs) -> CliResult {
    init_threads(args.threads)?;
    let fallback = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(config_name(&args.common.config)));
    let config = load_config(&args.common.config, Some(&fallback))?;
    let out = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| default_out(&config));
    let mut sim = Simulation::new(config).map_err(|e| {
        let _ = RunSummary::config_failure(&config_name(&args.common.config), &e).write(&out);
        Failure::from(e)
    })?;
    sim.set_parallel(args.threads > 1);
    let resume = match &args.resume {
        Some(path) => Some(read_checkpoint(path)?),
        None => None,
    };
    let opts = RunOptions {
        out_dir: Some(out.clone()),
        checkpoint_every: args.checkpoint_every,
        resume,
    };
    let outcome = sim.run(&opts)?;
    let s = &outcome.summary;
    let xi = translational_velocity(&outcome.state.rigid.l, &outcome.state.omega, &sim.inertia);
    println!(
        "{}: {} steps, t = {:.4}, predicted {:?}, converged {} axis {:?}, angle {:.3e} deg, budget residual {:.3e}, |xi(T)| {:.3e}, wall {:.1}s",
        s.name,
        s.steps,
        s.t_end,
        s.verdict,
        outcome.verdict().converged,
        s.axis_index,
        s.final_angle_deg.unwrap_or(f64::NAN),
        outcome.budget().max_residual,
        xi.norm(),
        s.wall_time_s
    );
    println!("artifacts in {}", out.display());
    Ok(EXIT_OK)
}

fn verify_cmd(args: &VerifyArgs) -> CliResult {
    init_threads(args.threads)?;
    let level: Level = args.level.parse()?;
    let extra = match &args.config {
        Some(path) => Some(load_config(path, args.out.as_deref())?),
        None => None,
    };
    let mut report = verify::run(level, |c| println!("{c}"));
    if let Some(config) = extra {
        let name = config.name.clone();
        let mut sim = Simulation::new(config)?;
        sim.set_parallel(args.threads > 1);
        let check = match sim.run(&RunOptions::default()) {
            Ok(outcome) => verify::Check {
                id: 0,
                name: format!("config {name}"),
                passed: outcome.verdict().converged && outcome.budget().inequality_violations == 0,
                observed: format!(
                    "converged {} axis {:?}, budget residual {:.3e}",
                    outcome.verdict().converged,
                    outcome.verdict().axis_index,
                    outcome.budget().max_residual
                ),
                required: "converged, energy inequality holds".into(),
            },
            Err(e) => verify::Check {
                id: 0,
                name: format!("config {name}"),
                passed: false,
                observed: format!("error: {e}"),
                required: "run completes".into(),
            },
        };
        println!("{check}");
        report.checks.push(check);
    }
    let passed = report.passed();
    println!(
        "{} of {} checks passed",
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len()
    );
    if let Some(dir) = &args.out {
        write_json(dir, "verify.json", &serde_json::to_value(&report)?)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION })
}

fn scale(args: &ScaleArgs) -> CliResult {
    let config = load_config(&args.common.config, args.common.out.as_deref())?;
    let scaled = scaling_transform(&config, args.lambda)?;
    scaled.validate()?;
    let text = scaled.to_json();
    match &args.common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}.json", scaled.name));
            std::fs::write(&path, text + "\n")?;
            println!("{}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}
