use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use steepfit::descent::{DescentOptions, ParamBox};
use steepfit::objective::ConstraintMode;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_260_101;
pub const DEFAULT_TERMS: [&str; 4] = ["ux", "uxx", "ut", "utt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    FitFn,
    FitOde,
    FitPde,
    Certify,
    Compare,
    Noise,
    Basin,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FitFn => "fit-fn",
            Command::FitOde => "fit-ode",
            Command::FitPde => "fit-pde",
            Command::Certify => "certify",
            Command::Compare => "compare",
            Command::Noise => "noise",
            Command::Basin => "basin",
            Command::Simulate => "simulate",
        }
    }
}

/// Everything a run depends on. Reports echo this after defaults are filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
    /// Parameter values of an already fitted model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params2: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub search_box: Option<ParamBox>,
    pub starts: usize,
    pub seed: u64,
    pub descent: DescentOptions,
    pub constraint: ConstraintMode,
    pub terms: Vec<String>,
    pub constant: bool,
    pub epsilon: f64,
    pub resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Points on exported bound curves.
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::default(),
            data: None,
            grid: None,
            model: None,
            state_dim: None,
            params: None,
            model2: None,
            params2: None,
            start: None,
            search_box: None,
            starts: 16,
            seed: DEFAULT_SEED,
            descent: DescentOptions::default(),
            constraint: ConstraintMode::None,
            terms: DEFAULT_TERMS.iter().map(|s| s.to_string()).collect(),
            constant: false,
            epsilon: 0.0,
            resolution: 16,
            t0: None,
            x0: None,
            t_end: None,
            h: None,
            samples: 1000,
            out: None,
            threads: None,
            trace: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn require_model(&self) -> Result<&str, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{} needs --model", self.command.name())))
    }

    pub fn require_data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{} needs --data", self.command.name())))
    }

    pub fn require_params(&self) -> Result<&[f64], CliError> {
        self.params
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{} needs --params", self.command.name())))
    }

    /// Checks values that do not depend on the input files.
    pub fn validate(&self) -> Result<(), CliError> {
        self.descent.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.starts == 0 {
            return Err(CliError::Config("--starts must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::Config(format!("--epsilon must be non-negative, got {}", self.epsilon)));
        }
        if self.resolution < 2 {
            return Err(CliError::Config("--resolution must be at least 2".into()));
        }
        if self.samples < 2 {
            return Err(CliError::Config("samples must be at least 2".into()));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(CliError::Config(format!("--h must be positive, got {h}")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if let Some(b) = &self.search_box {
            b.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        for path in [&self.data, &self.grid].into_iter().flatten() {
            if !path.exists() {
                return Err(CliError::Config(format!("input {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// `lo:hi` per axis, axes separated by commas, e.g. `-1:4,0:6`.
pub fn parse_box(text: &str) -> Result<ParamBox, String> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for axis in text.split(',') {
        let (lo, hi) = axis
            .split_once(':')
            .ok_or_else(|| format!("axis '{axis}' is not of the form lo:hi"))?;
        lower.push(lo.trim().parse::<f64>().map_err(|e| format!("'{lo}': {e}"))?);
        upper.push(hi.trim().parse::<f64>().map_err(|e| format!("'{hi}': {e}"))?);
    }
    ParamBox::new(lower, upper).map_err(|e| e.to_string())
}

/// `none`, `unit-norm` or `pin:<k>=<v>` with a one-based parameter index.
pub fn parse_constraint(text: &str) -> Result<ConstraintMode, String> {
    match text {
        "none" => Ok(ConstraintMode::None),
        "unit-norm" => Ok(ConstraintMode::UnitNorm),
        _ => {
            let spec = text
                .strip_prefix("pin:")
                .ok_or_else(|| format!("unknown constraint '{text}' (none, unit-norm, pin:<k>=<v>)"))?;
            let (k, v) = spec
                .split_once('=')
                .ok_or_else(|| format!("pin constraint '{text}' needs <k>=<v>"))?;
            let k: usize = k.trim().parse().map_err(|e| format!("pin index '{k}': {e}"))?;
            if k == 0 {
                return Err("pin index is one-based".into());
            }
            let value: f64 = v.trim().parse().map_err(|e| format!("pin value '{v}': {e}"))?;
            Ok(ConstraintMode::Pin { index: k - 1, value })
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "steepfit", version, about = "Fit functions, ODEs and PDEs to data by steepest descent")]
pub struct Cli {
    /// TOML run configuration; flags given on the command line override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Subcommands>,
}

#[derive(Debug, Subcommand)]
pub enum Subcommands {
    /// Fit f(a, t) directly to the samples.
    FitFn(Flags),
    /// Fit x' = f(a, t, x) to the difference quotients of a time series.
    FitOde(Flags),
    /// Fit a linear constant-coefficient PDE to gridded data.
    FitPde(Flags),
    /// Error certificate for given parameters.
    Certify(Flags),
    /// Bound the distance between the solutions of two fitted models.
    Compare(Flags),
    /// Propagate a measurement error level through fit and certificate.
    Noise(Flags),
    /// Label a 2-parameter grid of starts by the minimum they reach.
    Basin(Flags),
    /// Integrate a fitted model with RK4.
    Simulate(Flags),
}

impl Subcommands {
    fn split(self) -> (Command, Flags) {
        match self {
            Subcommands::FitFn(f) => (Command::FitFn, f),
            Subcommands::FitOde(f) => (Command::FitOde, f),
            Subcommands::FitPde(f) => (Command::FitPde, f),
            Subcommands::Certify(f) => (Command::Certify, f),
            Subcommands::Compare(f) => (Command::Compare, f),
            Subcommands::Noise(f) => (Command::Noise, f),
            Subcommands::Basin(f) => (Command::Basin, f),
            Subcommands::Simulate(f) => (Command::Simulate, f),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Time series CSV (`t,x1..xd`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Grid CSV (`x,t,u`).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Model expression; components separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub model: Option<String>,
    /// Fitted parameter values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    #[arg(long)]
    pub state_dim: Option<usize>,
    /// Second model for `compare`.
    #[arg(long, allow_hyphen_values = true)]
    pub model2: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params2: Option<Vec<f64>>,
    /// Initial guess, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    /// Search box `lo:hi,lo:hi,...`; enables multi-start search.
    #[arg(long = "box", value_parser = parse_box, allow_hyphen_values = true)]
    pub search_box: Option<ParamBox>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub f_tol: Option<f64>,
    /// none | unit-norm | pin:<k>=<v>
    #[arg(long, value_parser = parse_constraint)]
    pub constraint: Option<ConstraintMode>,
    /// PDE terms, e.g. `ux,uxx,ut,utt`.
    #[arg(long, value_delimiter = ',')]
    pub terms: Option<Vec<String>>,
    /// Add a constant term to the PDE.
    #[arg(long)]
    pub constant: bool,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    /// RK4 step.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Output directory for the report and CSV exports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record the descent trace and export it.
    #[arg(long)]
    pub trace: bool,
}

impl Flags {
    pub fn apply(self, config: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = Some(v); })*
            };
        }
        set!(data, grid, model, params, state_dim, model2, params2, start, search_box, t0, x0, t_end, h, out, threads);
        if let Some(v) = self.starts {
            config.starts = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.step {
            config.descent.step = v;
        }
        if let Some(v) = self.max_iters {
            config.descent.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            config.descent.grad_tol = v;
        }
        if let Some(v) = self.f_tol {
            config.descent.f_tol = v;
        }
        if let Some(v) = self.constraint {
            config.constraint = v;
        }
        if let Some(v) = self.terms {
            config.terms = v;
        }
        if let Some(v) = self.epsilon {
            config.epsilon = v;
        }
        if let Some(v) = self.resolution {
            config.resolution = v;
        }
        if let Some(v) = self.samples {
            config.samples = v;
        }
        config.constant |= self.constant;
        config.trace |= self.trace;
    }
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        match self.command {
            Some(sub) => {
                let (command, flags) = sub.split();
                config.command = command;
                flags.apply(&mut config);
            }
            None if self.config.is_some() => {}
            None => return Err(CliError::Config("no subcommand given (see --help)".into())),
        }
        config.descent.record_trace = config.trace;
        Ok(config)
    }
}
