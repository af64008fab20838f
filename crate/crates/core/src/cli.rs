//! Config-driven experiment runner.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::holder::{drift_holder_exponent, ALL_PAIRS_MAX_STEPS};
use crate::analysis::strong::dyadic_factor;
use crate::analysis::{
    bound_check_suite, cir_moment_study, default_bound_specs, holder_study, rate_study,
    recursion_bound_check, BoundCheck, BoundSetup, HolderSetup, MomentSetup, PairPolicy,
    StrongErrorSetup,
};
use crate::error::{Error, Result};
use crate::model::{classify_regime, CirParams};
use crate::paths::{generate_increments, TimeGrid};
use crate::schemes::simulate_cir_implicit;

fn default_seed() -> u64 {
    0
}
fn default_paths() -> usize {
    1000
}
fn default_horizon() -> f64 {
    1.0
}
fn default_h_list() -> Vec<f64> {
    (5..=10).map(|k| 2f64.powi(-k)).collect()
}
fn default_p_list() -> Vec<f64> {
    vec![1.0]
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_q_list() -> Vec<f64> {
    vec![-0.5, 0.5, 1.0, 2.0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Experiment description read from JSON; every field except `params` has
/// a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: CirParams,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_horizon", alias = "T")]
    pub horizon: f64,
    /// Coarse steps, largest first.
    #[serde(default = "default_h_list")]
    pub h_list: Vec<f64>,
    /// Reference step; defaults to the smallest coarse step over 16.
    #[serde(default)]
    pub h_ref: Option<f64>,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_q_list")]
    pub q_list: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads, 0 for one per core.
    #[serde(default)]
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn h_min(&self) -> f64 {
        self.h_list.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_ref(&self) -> f64 {
        self.h_ref.unwrap_or(self.h_min() / 16.0)
    }

    /// Structural checks shared by all subcommands.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_paths < 2 {
            return Err(Error::validation(
                "n_paths",
                format!("need at least 2, got {}", self.n_paths),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::validation(
                "horizon",
                format!("must be > 0, got {}", self.horizon),
            ));
        }
        if self.h_list.is_empty() {
            return Err(Error::validation("h_list", "empty"));
        }
        if self.h_list.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::validation("h_list", "must be strictly descending"));
        }
        let h_ref = self.h_ref();
        TimeGrid::with_step(self.horizon, h_ref)?;
        for &h in &self.h_list {
            TimeGrid::with_step(self.horizon, h)?;
            dyadic_factor(h, h_ref)?;
        }
        if self.p_list.is_empty() || self.p_list.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::validation("p_list", "needs positive entries"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::validation(
                "epsilon",
                format!("must lie in (0, 1/2), got {}", self.epsilon),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Print the boundary and regime classification as JSON.
    Classify,
    /// Write scheme trajectories on the smallest step.
    Simulate,
    /// Strong errors over `h_list` and the fitted convergence rate.
    Rate,
    /// Hölder estimates of the transformed process and its drift path.
    Holder,
    /// Moments of the scheme, with closed-form values where known.
    Moments,
    /// Default matrix of moment and increment bound checks.
    Bounds,
    /// Error recursion check at every coarse node.
    Recursion,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Holder => "holder",
            Command::Moments => "moments",
            Command::Bounds => "bounds",
            Command::Recursion => "recursion",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cirsim",
    version,
    about = "Implicit square-root Euler experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x0: Option<f64>,
}

impl Cli {
    /// Config file merged with flags; flags win.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                ExperimentConfig::from_json(&text)?
            }
            None => {
                let missing = [self.delta, self.gamma, self.beta]
                    .iter()
                    .any(Option::is_none);
                if missing {
                    return Err(Error::Config(
                        "either --config or all of --delta, --gamma, --beta are required".into(),
                    ));
                }
                ExperimentConfig::from_json(r#"{"params":{"delta":0,"gamma":0,"beta":1,"x0":0}}"#)?
            }
        };
        if let Some(v) = self.delta {
            cfg.params.delta = v;
        }
        if let Some(v) = self.gamma {
            cfg.params.gamma = v;
        }
        if let Some(v) = self.beta {
            cfg.params.beta = v;
        }
        if let Some(v) = self.x0 {
            cfg.params.x0 = v;
        } else if self.config.is_none() {
            cfg.params.x0 = 1.0;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.paths {
            cfg.n_paths = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        Ok(cfg)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tracks created files so a failed run can remove them.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            if !parent.exists() {
                fs::create_dir_all(parent)?;
                self.dirs.push(parent.to_path_buf());
            }
        }
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn write_str(&mut self, rel: &str, text: &str) -> Result<()> {
        let mut w = self.create(rel)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn remove_all(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }

    fn relative(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|f| f.strip_prefix(&self.dir).unwrap_or(f).display().to_string())
            .collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    status: &'a str,
    subcommand: &'a str,
    error: Option<String>,
    exit_code: i32,
    config: Option<&'a ExperimentConfig>,
    version: &'a str,
    wall_time_seconds: f64,
    outputs: Vec<String>,
}

fn write_bounds_csv(out: &mut Outputs, rel: &str, checks: &[BoundCheck]) -> Result<()> {
    let mut w = out.create(rel)?;
    writeln!(w, "label,lhs,rhs,slack,pass")?;
    for c in checks {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.label,
            fmt(c.mc_lhs),
            fmt(c.oracle_rhs),
            fmt(c.slack_factor),
            c.pass
        )?;
    }
    w.flush()?;
    Ok(())
}

fn run_classify(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let report = classify_regime(&cfg.params)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    out.write_str("classify.json", &(json + "\n"))
}

fn run_simulate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    cfg.params.require_scheme()?;
    let grid = TimeGrid::with_step(cfg.horizon, cfg.h_min())?;
    for i in 0..cfg.n_paths {
        let inc = generate_increments(cfg.seed, i as u64, &grid);
        let traj = simulate_cir_implicit(&cfg.params, &grid, &inc)?;
        let mut w = out.create(&format!("trajectories/path_{i:05}.csv"))?;
        traj.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run_rate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let setups: Vec<StrongErrorSetup> = cfg
        .p_list
        .iter()
        .map(|&p| StrongErrorSetup {
            params: cfg.params,
            horizon: cfg.horizon,
            h_ref: cfg.h_ref(),
            p,
            seed: cfg.seed,
            n_paths: cfg.n_paths,
        })
        .collect();
    for s in &setups {
        crate::analysis::rate::check_rate_preconditions(s, &cfg.h_list)?;
    }
    let mut summaries = Vec::new();
    for (idx, s) in setups.iter().enumerate() {
        let study = rate_study(s, &cfg.h_list)?;
        let name = if idx == 0 {
            "rate.csv".to_string()
        } else {
            format!("rate_p{}.csv", s.p)
        };
        let mut w = out.create(&name)?;
        writeln!(w, "h,error,se")?;
        for r in &study.errors {
            writeln!(
                w,
                "{},{},{}",
                fmt(r.h),
                fmt(r.sup_error_lp),
                fmt(r.std_error)
            )?;
        }
        w.flush()?;
        summaries.push(serde_json::json!({
            "p": s.p,
            "fitted_slope": study.rate.fitted_slope,
            "intercept": study.rate.intercept,
            "residual": study.rate.residual,
            "slope_confidence_halfwidth": study.rate.slope_confidence_halfwidth,
            "node_fitted_slope": study.node_rate.fitted_slope,
            "node_errors": study.errors.iter().map(|r| r.node_error_lp).collect::<Vec<_>>(),
            "theoretical_rate": study.theoretical_rate,
            "h_ref": s.h_ref,
            "n_paths": s.n_paths,
        }));
    }
    let mut summary = summaries[0].clone();
    summary["by_p"] = serde_json::Value::Array(summaries);
    out.write_str(
        "rate_summary.json",
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )
}

fn run_holder(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = cfg.params.transformed()?;
    drift_holder_exponent(model.alpha, cfg.epsilon)?;
    let fine_steps = TimeGrid::with_step(cfg.horizon, cfg.h_ref())?.n_steps();
    let mut levels: Vec<usize> = cfg
        .h_list
        .iter()
        .map(|&h| TimeGrid::with_step(cfg.horizon, h).map(|g| g.n_steps()))
        .collect::<Result<_>>()?;
    levels.push(fine_steps);
    let policy = if fine_steps <= ALL_PAIRS_MAX_STEPS {
        PairPolicy::AllPairs
    } else {
        PairPolicy::DyadicLags
    };
    let study = holder_study(&HolderSetup {
        params: cfg.params,
        horizon: cfg.horizon,
        fine_steps,
        levels,
        epsilon: cfg.epsilon,
        drift_epsilon: cfg.epsilon,
        p: cfg.p_list[0],
        policy,
        seed: cfg.seed,
        n_paths: cfg.n_paths,
    })?;
    for (name, reports) in [
        ("holder.csv", &study.process),
        ("drift_holder.csv", &study.drift_path),
    ] {
        let mut w = out.create(name)?;
        writeln!(w, "level,estimate")?;
        for r in reports {
            writeln!(w, "{},{}", r.grid_level, fmt(r.estimate))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_moments(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    cfg.params.require_scheme()?;
    let h = cfg.h_min();
    let grid = TimeGrid::with_step(cfg.horizon, h)?;
    let n = grid.n_steps();
    let mut nodes: Vec<usize> = (1..=4).map(|k| k * n / 4).filter(|&k| k > 0).collect();
    nodes.dedup();
    let rows = cir_moment_study(&MomentSetup {
        params: cfg.params,
        horizon: cfg.horizon,
        h,
        times: nodes.iter().map(|&k| grid.node(k)).collect(),
        q_list: cfg.q_list.clone(),
        seed: cfg.seed,
        n_paths: cfg.n_paths,
    })?;
    let mut w = out.create("moments.csv")?;
    writeln!(w, "t,q,estimate,se,oracle")?;
    for r in rows {
        let e = &r.estimate;
        let oracle = r.oracle.map(fmt).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt(e.t),
            fmt(e.q),
            fmt(e.estimate),
            fmt(e.se),
            oracle
        )?;
    }
    w.flush()?;
    Ok(())
}

fn run_bounds(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    cfg.params.require_scheme()?;
    let h = cfg.h_min();
    let specs = default_bound_specs(&cfg.params, cfg.horizon, h, cfg.seed)?;
    let checks = bound_check_suite(
        &BoundSetup::new(cfg.params, cfg.seed, cfg.n_paths, cfg.horizon, h),
        &specs,
    )?;
    write_bounds_csv(out, "bounds.csv", &checks)
}

fn run_recursion(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    cfg.params.require_rate_regime()?;
    let mut all = Vec::new();
    for &h in &cfg.h_list {
        let checks = recursion_bound_check(
            &cfg.params,
            cfg.seed,
            cfg.n_paths,
            cfg.horizon,
            h,
            cfg.h_ref(),
        )?;
        all.push((h, checks));
    }
    let mut w = out.create("recursion.csv")?;
    writeln!(w, "h,node,lhs,rhs,slack,pass")?;
    for (h, checks) in all {
        for (k, c) in checks.iter().enumerate() {
            writeln!(
                w,
                "{},{k},{},{},{},{}",
                fmt(h),
                fmt(c.mc_lhs),
                fmt(c.oracle_rhs),
                fmt(c.slack_factor),
                c.pass
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn dispatch(command: Command, cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    match command {
        Command::Classify => run_classify(cfg, out),
        Command::Simulate => run_simulate(cfg, out),
        Command::Rate => run_rate(cfg, out),
        Command::Holder => run_holder(cfg, out),
        Command::Moments => run_moments(cfg, out),
        Command::Bounds => run_bounds(cfg, out),
        Command::Recursion => run_recursion(cfg, out),
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest<'_>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let (cfg, dir) = match cli.resolve_config() {
        Ok(c) => {
            let dir = c.output_dir.clone();
            (Ok(c), dir)
        }
        Err(e) => (
            Err(e),
            cli.output_dir.clone().unwrap_or_else(default_output_dir),
        ),
    };
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
        dirs: Vec::new(),
    };
    let result = match &cfg {
        Ok(c) => execute(cli.command, c, &mut out),
        Err(_) => Ok(()),
    };
    let failure = cfg.as_ref().err().or(result.as_ref().err());
    let (status, error, code) = match failure {
        None => ("ok", None, 0),
        Some(e) => {
            out.remove_all();
            eprintln!("error: {e}");
            ("error", Some(e.to_string()), e.exit_code())
        }
    };
    let manifest = Manifest {
        status,
        subcommand: cli.command.name(),
        error,
        exit_code: code,
        config: cfg.as_ref().ok(),
        version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: if code == 0 {
            out.relative()
        } else {
            Vec::new()
        },
    };
    if let Err(e) = write_manifest(&dir, &manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return if code == 0 { e.exit_code() } else { code };
    }
    code
}

fn execute(command: Command, cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(&out.dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(command, cfg, out))
}

/// Parses `args` (including the program name) and runs them.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}
