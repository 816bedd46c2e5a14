//! Experiment harness behind the `swlab` binary.
//!
//! Every subcommand reads one JSON [`ExperimentConfig`], writes its
//! artifacts into the output directory, and prints a JSON summary on
//! stdout. CSV files open with a `#` line holding the serialized config and
//! seed; floats use the shortest representation that round-trips.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 gradient check failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::constraints::{Method, PenaltyConfig};
use crate::diracsim::{
    classify, field_grid, integrate, Convergence, DiracConfig, DiracPenalty, DiracState, Objective,
    Scheme, Trajectory,
};
use crate::error::{Error, Result};
use crate::gradcheck::{default_suite, run_checks, select};
use crate::nets::{critic_values, MlpParams};
use crate::oracle::{empirical_w1, min_pair_omega};
use crate::rng::seeded;
use crate::toydata::ToyDistribution;
use crate::trainer::{run, RunOutput, RunRecord, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Critic snapshot iterations for the 1D profile file.
pub const PROFILE_CHECKPOINTS: [usize; 8] = [0, 30, 60, 90, 120, 180, 240, 300];

#[derive(Debug, Parser)]
#[command(
    name = "swlab",
    version,
    about = "Sobolev-duality Wasserstein GAN laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed-generator 1D critic training: curve and critic profiles.
    Train1d(CommonArgs),
    /// 2D training with a learned or fixed generator.
    Train2d(CommonArgs),
    /// Critic level sets against real data plus Gaussian noise.
    Levelset(CommonArgs),
    /// Dirac-GAN trajectories and vector fields.
    Dirac(CommonArgs),
    /// Exact empirical W1 between the configured distributions.
    Oracle(CommonArgs),
    /// Finite-difference gradient verification.
    Gradcheck(CommonArgs),
    /// Penalty-parameter sensitivity grid.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment config; defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's `output_dir`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn experiment(&self) -> Experiment {
        match self {
            Command::Train1d(_) => Experiment::Train1d,
            Command::Train2d(_) => Experiment::Train2d,
            Command::Levelset(_) => Experiment::Levelset,
            Command::Dirac(_) => Experiment::Dirac,
            Command::Oracle(_) => Experiment::Oracle,
            Command::Gradcheck(_) => Experiment::Gradcheck,
            Command::Sweep(_) => Experiment::Sweep,
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Train1d(a)
            | Command::Train2d(a)
            | Command::Levelset(a)
            | Command::Dirac(a)
            | Command::Oracle(a)
            | Command::Gradcheck(a)
            | Command::Sweep(a) => a,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Train1d,
    Train2d,
    Levelset,
    Dirac,
    Oracle,
    Gradcheck,
    Sweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train1d => "train1d",
            Experiment::Train2d => "train2d",
            Experiment::Levelset => "levelset",
            Experiment::Dirac => "dirac",
            Experiment::Oracle => "oracle",
            Experiment::Gradcheck => "gradcheck",
            Experiment::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub real: ToyDistribution,
    /// Fixed fake distribution; `None` trains a generator where that
    /// applies, and means the bimodal 1D mixture for `train1d`/`oracle`.
    pub fake: Option<ToyDistribution>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            real: ToyDistribution::Gauss1d {
                mean: 0.0,
                std: 1.0,
            },
            fake: None,
        }
    }
}

impl DataConfig {
    fn fake_or_bimodal(&self) -> ToyDistribution {
        self.fake
            .clone()
            .unwrap_or_else(ToyDistribution::bimodal_fake)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiracRunConfig {
    pub penalty: DiracPenalty,
    pub lambda: f64,
    pub objective: Objective,
    pub start: DiracState,
    pub lr: f64,
    pub steps: usize,
    pub scheme: Scheme,
    pub eps: f64,
    /// Emit all six `{gp, cp} × {simgd, altgd(1), altgd(5)}` panels
    /// instead of the single configured run.
    pub six_panels: bool,
    pub gp_g0: f64,
    pub gp_lambda: f64,
    pub cp_lambda: f64,
    pub field_lo: f64,
    pub field_hi: f64,
    pub field_resolution: usize,
}

impl Default for DiracRunConfig {
    fn default() -> Self {
        DiracRunConfig {
            penalty: DiracPenalty::Cp,
            lambda: 1.0,
            objective: Objective::Linear { slope: 1.0 },
            start: DiracState::new(1.0, 1.0),
            lr: 0.05,
            steps: 5000,
            scheme: Scheme::SimGd,
            eps: 1e-3,
            six_panels: false,
            gp_g0: 1.0,
            gp_lambda: 10.0,
            cp_lambda: 1.0,
            field_lo: -2.0,
            field_hi: 2.0,
            field_resolution: 41,
        }
    }
}

impl DiracRunConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("dirac.lambda", self.lambda),
            ("dirac.lr", self.lr),
            ("dirac.eps", self.eps),
            ("dirac.gp_lambda", self.gp_lambda),
            ("dirac.cp_lambda", self.cp_lambda),
        ];
        for (path, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(path, "must be finite and > 0"));
            }
        }
        if self.steps == 0 {
            return Err(Error::config("dirac.steps", "must be >= 1"));
        }
        if let Scheme::AltGd { n_d: 0 } = self.scheme {
            return Err(Error::config("dirac.scheme.n_d", "must be >= 1"));
        }
        if !(self.field_lo < self.field_hi) || self.field_resolution == 0 {
            return Err(Error::config(
                "dirac.field",
                "need lo < hi and resolution >= 1",
            ));
        }
        if !self.start.w.is_finite() || !self.start.theta.is_finite() {
            return Err(Error::config("dirac.start", "must be finite"));
        }
        Ok(())
    }

    fn single(&self) -> DiracConfig {
        DiracConfig {
            penalty: self.penalty,
            lambda: self.lambda,
            objective: self.objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsetConfig {
    pub resolution: usize,
    /// Fraction of the sample range added on each side.
    pub padding: f64,
    /// Std of the Gaussian noise that turns real data into fake data.
    pub noise_std: f64,
}

impl Default for LevelsetConfig {
    fn default() -> Self {
        LevelsetConfig {
            resolution: 128,
            padding: 0.25,
            noise_std: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Name prefixes to run; `None` runs the full suite.
    pub checks: Option<Vec<String>>,
    /// Scales tanh adjoints on the analytic side; a negative control.
    pub corrupt_adjoint: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { samples: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    /// `ρ` for multiplier methods, `λ` otherwise.
    pub values: Vec<f64>,
    /// Fresh pairs for the final `min Ω̂` are `side × side`.
    pub fresh_side: usize,
    pub fresh_m: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: vec![Method::SwganAl, Method::SwganGp],
            values: vec![1.0, 10.0, 100.0],
            fresh_side: 16,
            fresh_m: 64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must name the subcommand being run.
    pub experiment: Option<Experiment>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub penalty: PenaltyConfig,
    pub data: DataConfig,
    pub dirac: DiracRunConfig,
    pub levelset: LevelsetConfig,
    pub gradcheck: GradcheckConfig,
    pub oracle: OracleConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// Parses JSON, reporting the field path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                path: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_json(&text)
    }

    /// Checks the parts the given experiment reads.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(Error::config(
                    "experiment",
                    format!("config is for {}, not {}", e.name(), experiment.name()),
                ));
            }
        }
        let needs_training = matches!(
            experiment,
            Experiment::Train1d | Experiment::Train2d | Experiment::Levelset | Experiment::Sweep
        );
        if needs_training || experiment == Experiment::Oracle {
            self.data.real.validate()?;
            if let Some(f) = &self.data.fake {
                f.validate()?;
            }
        }
        if needs_training {
            self.penalty.validate()?;
        }
        let want_dim = match experiment {
            Experiment::Train1d | Experiment::Sweep => Some(1),
            Experiment::Train2d | Experiment::Levelset => Some(2),
            _ => None,
        };
        if let Some(d) = want_dim {
            if self.data.real.dim() != d {
                return Err(Error::config(
                    "data.real",
                    format!("{} needs {d}D data", experiment.name()),
                ));
            }
        }
        match experiment {
            Experiment::Dirac => self.dirac.validate(),
            Experiment::Levelset => {
                let l = &self.levelset;
                if l.resolution < 2 || !(l.padding >= 0.0) || !(l.noise_std > 0.0) {
                    return Err(Error::config(
                        "levelset",
                        "need resolution >= 2, padding >= 0, noise_std > 0",
                    ));
                }
                Ok(())
            }
            Experiment::Oracle if self.oracle.samples == 0 => {
                Err(Error::config("oracle.samples", "must be >= 1"))
            }
            Experiment::Sweep if self.sweep.fresh_side == 0 || self.sweep.fresh_m == 0 => Err(
                Error::config("sweep", "fresh_side and fresh_m must be >= 1"),
            ),
            _ => Ok(()),
        }
    }
}

/// Result of one subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
    /// False only for a failing gradient check.
    pub passed: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Json(_) | Error::Io(_) | Error::Capacity { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

/// Parses `args`, runs the subcommand, prints the summary and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let experiment = cli.command.experiment();
    let args = cli.command.args();
    let result = (|| -> Result<Outcome> {
        let mut config = match &args.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        let out = args
            .out
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        execute(experiment, &config, &out)
    })();
    match result {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.summary).unwrap_or_default();
            // A closed stdout is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{text}");
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("swlab {}: {e}", experiment.name());
            exit_code(&e)
        }
    }
}

/// Runs one experiment into `out`.
pub fn execute(experiment: Experiment, config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    config.validate(experiment)?;
    fs::create_dir_all(out)?;
    let stamp = stamp(experiment, config)?;
    match experiment {
        Experiment::Train1d => train1d(config, out, &stamp),
        Experiment::Train2d => train2d(config, out, &stamp),
        Experiment::Levelset => levelset(config, out, &stamp),
        Experiment::Dirac => dirac(config, out, &stamp),
        Experiment::Oracle => oracle(config, out),
        Experiment::Gradcheck => gradcheck(config, out),
        Experiment::Sweep => sweep(config, out, &stamp),
    }
}

/// The `#` metadata line opening every CSV file.
pub fn stamp(experiment: Experiment, config: &ExperimentConfig) -> Result<String> {
    let meta = json!({
        "experiment": experiment.name(),
        "seed": config.seed,
        "config": config,
    });
    Ok(format!("# {}", serde_json::to_string(&meta)?))
}

/// Buffered CSV document with a metadata line and a column header.
struct Csv {
    text: String,
}

impl Csv {
    fn new(stamp: &str, columns: &[&str]) -> Self {
        let mut text = String::with_capacity(4096);
        text.push_str(stamp);
        text.push('\n');
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    fn write(self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.text)?;
        Ok(path.to_path_buf())
    }
}

/// Shortest round-trip form; scientific outside `[1e-5, 1e16)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_curve(record: &RunRecord, stamp: &str, path: &Path) -> Result<PathBuf> {
    let mut csv = Csv::new(
        stamp,
        &[
            "step",
            "objective",
            "omega_mean",
            "omega_min",
            "alpha",
            "dualgap",
        ],
    );
    for e in &record.entries {
        csv.row(&[
            e.step.to_string(),
            num(e.objective),
            num(e.omega_mean),
            num(e.omega_min),
            num(e.alpha),
            opt(e.dualgap),
        ]);
    }
    csv.write(path)
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

fn write_params(params: &MlpParams, path: &Path) -> Result<PathBuf> {
    let mut text = params.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

fn run_summary(experiment: Experiment, config: &ExperimentConfig, out: &RunOutput) -> Value {
    let last = out.record.last();
    json!({
        "experiment": experiment.name(),
        "seed": config.seed,
        "method": config.penalty.method.name(),
        "final_step": last.map(|e| e.step),
        "final_objective": last.map(|e| e.objective),
        "final_dualgap": last.and_then(|e| e.dualgap),
        "final_alpha": out.alm.alpha,
    })
}

/// `x` grid on `[−8, 8]` in steps of 0.1.
pub fn profile_grid() -> Vec<Vec<f64>> {
    (0..=160).map(|i| vec![-8.0 + 0.1 * i as f64]).collect()
}

fn train1d(config: &ExperimentConfig, out: &Path, stamp: &str) -> Result<Outcome> {
    let fake = config.data.fake_or_bimodal();
    if fake.dim() != 1 {
        return Err(Error::config("data.fake", "train1d needs 1D data"));
    }
    let mut train = config.train.clone();
    train.fixed_generator = Some(fake);
    let mut checkpoints: Vec<usize> = PROFILE_CHECKPOINTS
        .iter()
        .copied()
        .filter(|&s| s <= train.iterations)
        .collect();
    if !checkpoints.contains(&train.iterations) {
        checkpoints.push(train.iterations);
    }
    train.snapshot_steps = checkpoints;
    let result = run(&config.data.real, &train, &config.penalty, config.seed)?;

    let mut files = vec![write_curve(&result.record, stamp, &out.join("curve.csv"))?];
    let grid = profile_grid();
    let mut profile = Csv::new(stamp, &["step", "x", "d"]);
    for (step, critic) in &result.snapshots {
        let d = critic_values(critic, &grid)?;
        for (x, d) in grid.iter().zip(d) {
            profile.row(&[step.to_string(), num(x[0]), num(d)]);
        }
    }
    files.push(profile.write(&out.join("critic-profile.csv"))?);
    files.push(write_params(&result.critic, &out.join("critic.json"))?);
    Ok(Outcome {
        files,
        summary: run_summary(Experiment::Train1d, config, &result),
        passed: true,
    })
}

fn train2d(config: &ExperimentConfig, out: &Path, stamp: &str) -> Result<Outcome> {
    let mut train = config.train.clone();
    if let Some(f) = &config.data.fake {
        train.fixed_generator = Some(f.clone());
    }
    let result = run(&config.data.real, &train, &config.penalty, config.seed)?;
    let mut files = vec![write_curve(&result.record, stamp, &out.join("curve.csv"))?];
    let mut samples = Csv::new(stamp, &["kind", "x", "y"]);
    for (kind, set) in [
        ("real", &result.real_holdout),
        ("fake", &result.fake_holdout),
    ] {
        for p in set {
            samples.row(&[kind.to_string(), num(p[0]), num(p[1])]);
        }
    }
    files.push(samples.write(&out.join("samples.csv"))?);
    files.push(write_params(&result.critic, &out.join("critic.json"))?);
    if let Some(g) = &result.generator {
        files.push(write_params(g, &out.join("generator.json"))?);
    }
    Ok(Outcome {
        files,
        summary: run_summary(Experiment::Train2d, config, &result),
        passed: true,
    })
}

/// Grid of `resolution²` points over `bounds` widened by `padding` times
/// the range on each side; `x` varies slowest.
pub fn levelset_grid(bounds: &[(f64, f64)], padding: f64, resolution: usize) -> Vec<Vec<f64>> {
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let pad = padding * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let xs = axis(bounds[0]);
    let ys = axis(bounds[1]);
    let mut out = Vec::with_capacity(resolution * resolution);
    for &x in &xs {
        for &y in &ys {
            out.push(vec![x, y]);
        }
    }
    out
}

pub fn write_levelset(
    critic: &MlpParams,
    grid: &[Vec<f64>],
    stamp: &str,
    path: &Path,
) -> Result<PathBuf> {
    let d = critic_values(critic, grid)?;
    let mut csv = Csv::new(stamp, &["x", "y", "d"]);
    for (p, d) in grid.iter().zip(d) {
        csv.row(&[num(p[0]), num(p[1]), num(d)]);
    }
    csv.write(path)
}

fn levelset(config: &ExperimentConfig, out: &Path, stamp: &str) -> Result<Outcome> {
    let mut train = config.train.clone();
    train.fixed_generator = Some(ToyDistribution::Noisy {
        base: Box::new(config.data.real.clone()),
        std: config.levelset.noise_std,
    });
    let result = run(&config.data.real, &train, &config.penalty, config.seed)?;
    let grid = levelset_grid(
        &result.sample_bounds,
        config.levelset.padding,
        config.levelset.resolution,
    );
    let files = vec![
        write_levelset(&result.critic, &grid, stamp, &out.join("levelset.csv"))?,
        write_curve(&result.record, stamp, &out.join("curve.csv"))?,
        write_params(&result.critic, &out.join("critic.json"))?,
    ];
    let mut summary = run_summary(Experiment::Levelset, config, &result);
    summary["grid_points"] = json!(grid.len());
    summary["sample_bounds"] = json!(result.sample_bounds);
    Ok(Outcome {
        files,
        summary,
        passed: true,
    })
}

fn convergence_label(c: Convergence) -> String {
    match c {
        Convergence::Converged(k) => format!("converged at step {k}"),
        Convergence::NonConverged => "non-converged".to_string(),
        Convergence::Diverged(k) => format!("diverged at step {k}"),
    }
}

fn write_trajectory(
    traj: &Trajectory,
    status: Convergence,
    stamp: &str,
    path: &Path,
) -> Result<PathBuf> {
    let mut csv = Csv::new(stamp, &["step", "w", "theta"]);
    for (k, s) in traj.states.iter().enumerate() {
        csv.row(&[k.to_string(), num(s.w), num(s.theta)]);
    }
    csv.comment(&format!("status: {}", convergence_label(status)));
    csv.write(path)
}

fn write_field(
    cfg: &DiracConfig,
    run: &DiracRunConfig,
    stamp: &str,
    path: &Path,
) -> Result<PathBuf> {
    let mut csv = Csv::new(stamp, &["w", "theta", "vw", "vtheta"]);
    for s in field_grid(cfg, run.field_lo, run.field_hi, run.field_resolution) {
        csv.row(&[num(s.w), num(s.theta), num(s.v_w), num(s.v_theta)]);
    }
    csv.write(path)
}

fn dirac(config: &ExperimentConfig, out: &Path, stamp: &str) -> Result<Outcome> {
    let d = &config.dirac;
    let mut files = Vec::new();
    let mut runs = Vec::new();
    if d.six_panels {
        let panels = [
            ("gp", DiracConfig::gp(d.gp_g0, d.gp_lambda)),
            ("cp", DiracConfig::cp(d.cp_lambda)),
        ];
        for (label, cfg) in panels {
            let cfg = DiracConfig {
                objective: d.objective,
                ..cfg
            };
            for scheme in [
                Scheme::SimGd,
                Scheme::AltGd { n_d: 1 },
                Scheme::AltGd { n_d: 5 },
            ] {
                let traj = integrate(d.start, &cfg, d.lr, d.steps, scheme);
                let status = classify(&traj, d.eps);
                let name = format!("dirac_traj_{label}_{}.csv", scheme.label());
                files.push(write_trajectory(&traj, status, stamp, &out.join(&name))?);
                runs.push(json!({
                    "file": name,
                    "final": traj.states.last().map(|s| [s.w, s.theta]),
                    "status": convergence_label(status),
                }));
            }
            files.push(write_field(
                &cfg,
                d,
                stamp,
                &out.join(format!("field_{label}.csv")),
            )?);
        }
    } else {
        let cfg = d.single();
        let traj = integrate(d.start, &cfg, d.lr, d.steps, d.scheme);
        let status = classify(&traj, d.eps);
        files.push(write_trajectory(
            &traj,
            status,
            stamp,
            &out.join("dirac_traj.csv"),
        )?);
        files.push(write_field(&cfg, d, stamp, &out.join("field.csv"))?);
        runs.push(json!({
            "file": "dirac_traj.csv",
            "final": traj.states.last().map(|s| [s.w, s.theta]),
            "status": convergence_label(status),
        }));
    }
    Ok(Outcome {
        files,
        summary: json!({ "experiment": "dirac", "runs": runs }),
        passed: true,
    })
}

fn oracle(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let real = &config.data.real;
    let fake = config.data.fake_or_bimodal();
    if fake.dim() != real.dim() {
        return Err(Error::config(
            "data.fake",
            "dimension differs from data.real",
        ));
    }
    let n = config.oracle.samples;
    let mut rng = seeded(config.seed, 0);
    let a = real.sample(n, &mut rng);
    let b = fake.sample(n, &mut rng);
    let w1 = empirical_w1(&a, &b)?;
    let summary = json!({
        "experiment": "oracle",
        "seed": config.seed,
        "samples": n,
        "dim": real.dim(),
        "solver": if real.dim() == 1 { "sorted" } else { "assignment" },
        "w1": w1,
    });
    let files = vec![write_json(&summary, &out.join("oracle.json"))?];
    Ok(Outcome {
        files,
        summary,
        passed: true,
    })
}

fn gradcheck(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let g = &config.gradcheck;
    let checks = match &g.checks {
        Some(prefixes) => select(prefixes),
        None => default_suite(),
    };
    let report = run_checks(&checks, g.corrupt_adjoint)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let files = vec![write_json(&report, &out.join("report.json"))?];
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    Ok(Outcome {
        files,
        summary: json!({
            "experiment": "gradcheck",
            "passed": report.passed,
            "checks": report.checks.len(),
            "failed": failed,
        }),
        passed: report.passed,
    })
}

/// One sweep cell's outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub value: f64,
    pub final_dualgap: Option<f64>,
    pub min_omega: Option<f64>,
    pub status: String,
}

fn sweep(config: &ExperimentConfig, out: &Path, stamp: &str) -> Result<Outcome> {
    let s = &config.sweep;
    let fake = config.data.fake_or_bimodal();
    let cells: Vec<(Method, f64)> = s
        .methods
        .iter()
        .flat_map(|&m| s.values.iter().map(move |&v| (m, v)))
        .collect();
    let mut train = config.train.clone();
    train.fixed_generator = Some(fake.clone());

    let results: Vec<(SweepRow, Option<RunRecord>)> = cells
        .par_iter()
        .map(|&(method, value)| {
            let mut penalty = PenaltyConfig {
                method,
                ..config.penalty.clone()
            };
            if method.uses_multiplier() {
                penalty.rho = value;
            } else {
                penalty.lambda = value;
            }
            let cell = (|| -> Result<(Option<f64>, Option<f64>, RunRecord)> {
                let result = run(&config.data.real, &train, &penalty, config.seed)?;
                let mut rng = seeded(config.seed, 0x5eeb);
                let r = config.data.real.sample(s.fresh_side, &mut rng);
                let f = fake.sample(s.fresh_side, &mut rng);
                let min_omega = min_pair_omega(&result.critic, &r, &f, s.fresh_m, &mut rng)?;
                let gap = result.record.last().and_then(|e| e.dualgap);
                Ok((gap, min_omega, result.record))
            })();
            match cell {
                Ok((gap, min_omega, record)) => (
                    SweepRow {
                        method,
                        value,
                        final_dualgap: gap,
                        min_omega,
                        status: "ok".to_string(),
                    },
                    Some(record),
                ),
                Err(e) => (
                    SweepRow {
                        method,
                        value,
                        final_dualgap: None,
                        min_omega: None,
                        status: format!("error: {e}").replace(',', ";"),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut files = Vec::new();
    let mut csv = Csv::new(
        stamp,
        &["method", "value", "final_dualgap", "min_omega", "status"],
    );
    for (row, record) in &results {
        csv.row(&[
            row.method.name().to_string(),
            num(row.value),
            opt(row.final_dualgap),
            opt(row.min_omega),
            row.status.clone(),
        ]);
        if let Some(record) = record {
            let name = format!("sweep_{}_{}.csv", row.method.name(), num(row.value));
            files.push(write_curve(record, stamp, &out.join(name))?);
        }
    }
    files.insert(0, csv.write(&out.join("sweep.csv"))?);

    let spread: Vec<Value> = s
        .methods
        .iter()
        .map(|&m| {
            let gaps: Vec<f64> = results
                .iter()
                .filter(|(r, _)| r.method == m)
                .filter_map(|(r, _)| r.final_dualgap.map(f64::abs))
                .collect();
            let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            json!({ "method": m.name(), "max_over_min_abs_gap": (!gaps.is_empty()).then(|| hi / lo) })
        })
        .collect();
    let rows: Vec<&SweepRow> = results.iter().map(|(r, _)| r).collect();
    Ok(Outcome {
        files,
        summary: json!({ "experiment": "sweep", "rows": rows, "spread": spread }),
        passed: true,
    })
}
