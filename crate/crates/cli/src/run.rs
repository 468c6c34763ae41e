use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use steepfit::certify::{
    certify_fit, compare_models, estimate_lipschitz, error_certificate, noise_analysis, write_bound_csv,
    ErrorCertificate, LipschitzEstimate, NoiseEnvelope,
};
use steepfit::data::{load_grid, load_time_series, series_stats, GridField, SeriesStats, TimeSeries};
use steepfit::descent::{basin_map, shotgun, steepest_descent, FitResult};
use steepfit::expr::{parse_model, Expr, ModelExpr};
use steepfit::integrate::{default_step, rk4_solve, sample_times, Trajectory};
use steepfit::objective::{
    ConstraintMode, FnFitObjective, Objective, OdeObjective, PdeObjective, PdeTerm, Stencil,
};

use crate::config::{Command, RunConfig};
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    /// Effective configuration, defaults included.
    pub config: RunConfig,
    pub warnings: Vec<String>,
    pub outcome: Outcome,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum Outcome {
    FitFn(FitReport),
    FitOde(OdeFitReport),
    FitPde(PdeFitReport),
    Certify(CertifyReport),
    Compare(CompareReport),
    Noise(NoiseReport),
    Basin(BasinReport),
    Simulate(SimulateReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotgunSummary {
    pub starts: Vec<Vec<f64>>,
    pub objectives: Vec<f64>,
    pub best_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: FitResult,
    pub stats: SeriesStats,
    pub shotgun: Option<ShotgunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeFitReport {
    pub fit: FitResult,
    pub stats: SeriesStats,
    pub shotgun: Option<ShotgunSummary>,
    pub certificate: Option<ErrorCertificate>,
    /// Why no certificate could be issued.
    pub certificate_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeFitReport {
    pub fit: FitResult,
    pub nodes: usize,
    pub terms: Vec<String>,
    pub constant: bool,
    /// Coefficient of `uxx` over coefficient of `ut`, when both are fitted.
    pub diffusivity_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub stats: SeriesStats,
    pub lipschitz: LipschitzEstimate,
    pub certificate: ErrorCertificate,
    pub bound_at_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub stats: SeriesStats,
    pub first: ErrorCertificate,
    pub second: ErrorCertificate,
    pub bound_at_end: f64,
    /// Largest sampled `‖y(t) − z(t)‖` of the two RK4 solutions.
    pub max_difference: f64,
    /// End of the range where both solutions exist.
    pub compared_until: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub envelope: NoiseEnvelope,
    pub envelope_at_end: f64,
    /// Largest sampled `‖ȳ(t) − y̲(t)‖`.
    pub max_spread: f64,
    pub compared_until: f64,
    pub spread_within_envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub resolution: usize,
    pub distinct_labels: usize,
    pub minima: Vec<Vec<f64>>,
    pub minima_objective: Vec<f64>,
    pub cluster_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub h: f64,
    pub nodes: usize,
    pub truncated: bool,
    pub covered_until: f64,
    pub final_state: Vec<f64>,
}

/// A file produced by a run, written into the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

struct Output {
    outcome: Outcome,
    artifacts: Vec<Artifact>,
    warnings: Vec<String>,
}

fn load_series(path: &Path) -> Result<TimeSeries, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(load_time_series(BufReader::new(file))?)
}

fn load_grid_file(path: &Path) -> Result<GridField, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(load_grid(BufReader::new(file))?)
}

/// Number of parameters a model text uses: the largest `a<k>` index.
pub fn infer_param_count(text: &str, state_dim: usize) -> Result<usize, CliError> {
    let probe = parse_model(text, 1 << 20, state_dim)?;
    let mut count = 0;
    for component in probe.components() {
        component.walk(&mut |e| {
            if let Expr::Param(k) = e {
                count = count.max(k + 1);
            }
        });
    }
    Ok(count)
}

fn load_model(text: &str, state_dim: usize) -> Result<ModelExpr, CliError> {
    Ok(parse_model(text, infer_param_count(text, state_dim)?, state_dim)?)
}

fn csv_artifact(name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Artifact {
    let mut contents = Vec::new();
    write(&mut contents).expect("writing to memory cannot fail");
    Artifact {
        name: name.to_string(),
        contents,
    }
}

fn trace_artifact(config: &RunConfig, fit: &FitResult) -> Option<Artifact> {
    config
        .trace
        .then(|| csv_artifact("trace.csv", |out| fit.write_trace_csv(out)))
}

fn bound_artifact(times: &[f64], curve: impl Fn(f64) -> f64) -> Artifact {
    csv_artifact("bound.csv", |out| write_bound_csv(out, times, curve))
}

fn start_or_zeros(config: &mut RunConfig, dim: usize) -> Vec<f64> {
    config.start.get_or_insert_with(|| vec![0.0; dim]).clone()
}

fn fit_series(config: &mut RunConfig, obj: &dyn Objective) -> Result<(FitResult, Option<ShotgunSummary>), CliError> {
    match &config.search_box {
        Some(bounds) => {
            if config.constraint != ConstraintMode::None {
                return Err(CliError::Config("--box search runs unconstrained; drop --constraint".into()));
            }
            let result = shotgun(obj, bounds, config.starts, &config.descent, config.seed)?;
            let summary = ShotgunSummary {
                objectives: result.all.iter().map(|r| r.objective).collect(),
                starts: result.starts,
                best_index: result.best_index,
            };
            Ok((result.best, Some(summary)))
        }
        None => {
            let start = start_or_zeros(config, obj.dim());
            Ok((steepest_descent(obj, &start, &config.descent, &config.constraint)?, None))
        }
    }
}

fn fit_fn(config: &mut RunConfig) -> Result<Output, CliError> {
    let ts = load_series(config.require_data()?)?;
    let state_dim = *config.state_dim.get_or_insert(0);
    let model = load_model(config.require_model()?, state_dim)?;
    let obj = FnFitObjective::new(model, ts.clone())?;
    let (fit, shotgun) = fit_series(config, &obj)?;
    let artifacts = trace_artifact(config, &fit).into_iter().collect();
    Ok(Output {
        outcome: Outcome::FitFn(FitReport {
            fit,
            stats: series_stats(&ts),
            shotgun,
        }),
        artifacts,
        warnings: Vec::new(),
    })
}

fn fit_ode(config: &mut RunConfig) -> Result<Output, CliError> {
    let ts = load_series(config.require_data()?)?;
    let state_dim = *config.state_dim.get_or_insert(ts.dim());
    let model = load_model(config.require_model()?, state_dim)?;
    let obj = OdeObjective::new(model.clone(), ts.clone())?;
    let (fit, shotgun) = fit_series(config, &obj)?;
    let mut artifacts: Vec<Artifact> = trace_artifact(config, &fit).into_iter().collect();
    let mut warnings = Vec::new();
    let (certificate, certificate_error) = match certify_fit(&model, &fit.params, &ts, fit.objective) {
        Ok(cert) => {
            let times = sample_times(ts.first_time(), ts.last_time(), config.samples);
            artifacts.push(bound_artifact(&times, |t| cert.bound(t)));
            (Some(cert), None)
        }
        Err(e) => {
            warnings.push(format!("no error certificate: {e}"));
            (None, Some(e.to_string()))
        }
    };
    Ok(Output {
        outcome: Outcome::FitOde(OdeFitReport {
            fit,
            stats: series_stats(&ts),
            shotgun,
            certificate,
            certificate_error,
        }),
        artifacts,
        warnings,
    })
}

fn fit_pde(config: &mut RunConfig) -> Result<Output, CliError> {
    let grid = load_grid_file(
        config
            .grid
            .as_deref()
            .ok_or_else(|| CliError::Config("fit-pde needs --grid".into()))?,
    )?;
    let mut terms = Vec::with_capacity(config.terms.len());
    for (coefficient, name) in config.terms.iter().enumerate() {
        let stencil = Stencil::from_name(name)
            .ok_or_else(|| CliError::Config(format!("unknown PDE term '{name}' (u, ux, uxx, ut, utt)")))?;
        terms.push(PdeTerm { coefficient, stencil });
    }
    let obj = PdeObjective::new(terms.clone(), &grid, config.constraint, config.constant)?;
    if config.search_box.is_some() {
        return Err(CliError::Config("fit-pde does not support --box".into()));
    }
    let mut warnings = Vec::new();
    if config.constraint == ConstraintMode::None {
        warnings.push("constraint none: a = 0 is a global minimum of the PDE objective; the fit is only meaningful as a capped descent or with --constraint".into());
    }
    let start = config.start.get_or_insert_with(|| vec![1.0; obj.dim()]).clone();
    let fit = steepest_descent(&obj, &start, &config.descent, &config.constraint)?;
    let coefficient_of = |s: Stencil| terms.iter().find(|t| t.stencil == s).map(|t| fit.params[t.coefficient]);
    let diffusivity_ratio = match (coefficient_of(Stencil::UXX), coefficient_of(Stencil::UT)) {
        (Some(uxx), Some(ut)) => Some(uxx / ut).filter(|r| r.is_finite()),
        _ => None,
    };
    let artifacts = trace_artifact(config, &fit).into_iter().collect();
    Ok(Output {
        outcome: Outcome::FitPde(PdeFitReport {
            nodes: obj.node_count(),
            terms: config.terms.clone(),
            constant: config.constant,
            diffusivity_ratio,
            fit,
        }),
        artifacts,
        warnings,
    })
}

fn certify(config: &mut RunConfig) -> Result<Output, CliError> {
    let ts = load_series(config.require_data()?)?;
    let state_dim = *config.state_dim.get_or_insert(ts.dim());
    let model = load_model(config.require_model()?, state_dim)?;
    let params = config.require_params()?.to_vec();
    let obj = OdeObjective::new(model.clone(), ts.clone())?;
    let m = value_checked(&obj, &params)?;
    let lipschitz = estimate_lipschitz(&model, &params, &ts)?;
    let stats = series_stats(&ts);
    let certificate = error_certificate(m, &stats, lipschitz.value)?
        .with_method(lipschitz.method.clone())
        .with_direct_slope(steepfit::certify::direct_slope_bound(&model, &params, &ts)?);
    let times = sample_times(ts.first_time(), ts.last_time(), config.samples);
    let artifacts = vec![bound_artifact(&times, |t| certificate.bound(t))];
    Ok(Output {
        outcome: Outcome::Certify(CertifyReport {
            stats,
            lipschitz,
            bound_at_end: certificate.bound(ts.last_time()),
            certificate,
        }),
        artifacts,
        warnings: Vec::new(),
    })
}

fn value_checked(obj: &dyn Objective, params: &[f64]) -> Result<f64, CliError> {
    if params.len() != obj.dim() {
        return Err(CliError::Config(format!(
            "model has {} parameters, {} values given",
            obj.dim(),
            params.len()
        )));
    }
    let m = obj.value(params);
    if !m.is_finite() {
        return Err(CliError::Numeric {
            origin: "objective",
            message: format!("objective is not finite at {params:?}"),
        });
    }
    Ok(m)
}

/// Largest `‖y(t) − z(t)‖` over `times` that both trajectories cover, and
/// the last time compared.
pub fn max_difference(y: &Trajectory, z: &Trajectory, times: &[f64]) -> (f64, f64, Vec<(f64, f64)>) {
    let until = y.covered_end().min(z.covered_end());
    let mut worst: f64 = 0.0;
    let mut pairs = Vec::with_capacity(times.len());
    for &t in times.iter().filter(|t| **t <= until) {
        let (a, b) = (y.eval(t).expect("t is covered"), z.eval(t).expect("t is covered"));
        let d = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        worst = worst.max(d);
        pairs.push((t, d));
    }
    (worst, until, pairs)
}

fn compare(config: &mut RunConfig) -> Result<Output, CliError> {
    let ts = load_series(config.require_data()?)?;
    let state_dim = *config.state_dim.get_or_insert(ts.dim());
    let text = config.require_model()?.to_string();
    let text2 = config.model2.get_or_insert(text.clone()).clone();
    let (f, h) = (load_model(&text, state_dim)?, load_model(&text2, state_dim)?);
    let pf = config.require_params()?.to_vec();
    let ph = config
        .params2
        .clone()
        .ok_or_else(|| CliError::Config("compare needs --params2".into()))?;
    let mf = value_checked(&OdeObjective::new(f.clone(), ts.clone())?, &pf)?;
    let mh = value_checked(&OdeObjective::new(h.clone(), ts.clone())?, &ph)?;
    let first = certify_fit(&f, &pf, &ts, mf)?;
    let second = certify_fit(&h, &ph, &ts, mh)?;
    let cmp = compare_models(&first, &second)?;

    let stats = series_stats(&ts);
    let step = *config.h.get_or_insert(default_step(&stats));
    let (t0, t1) = (ts.first_time(), ts.last_time());
    let y = rk4_solve(&f, &pf, t0, ts.value(0), t1, step)?;
    let z = rk4_solve(&h, &ph, t0, ts.value(0), t1, step)?;
    let times = sample_times(t0, t1, config.samples);
    let (max_difference, compared_until, pairs) = self::max_difference(&y, &z, &times);
    let within_bound = pairs.iter().all(|(t, d)| *d <= cmp.bound(*t));
    let mut warnings = Vec::new();
    if y.truncated || z.truncated {
        warnings.push(format!("a trajectory left the bounded region; compared up to t = {compared_until}"));
    }
    let artifacts = vec![bound_artifact(&times, |t| cmp.bound(t))];
    Ok(Output {
        outcome: Outcome::Compare(CompareReport {
            stats,
            bound_at_end: cmp.bound(t1),
            first,
            second,
            max_difference,
            compared_until,
            within_bound,
        }),
        artifacts,
        warnings,
    })
}

fn noise(config: &mut RunConfig) -> Result<Output, CliError> {
    let ts = load_series(config.require_data()?)?;
    let state_dim = *config.state_dim.get_or_insert(ts.dim());
    let model = load_model(config.require_model()?, state_dim)?;
    let start = start_or_zeros(config, model.param_count());
    let envelope = noise_analysis(&model, &ts, config.epsilon, &config.descent, &start)?;

    let stats = series_stats(&ts);
    let step = *config.h.get_or_insert(default_step(&stats));
    let (t0, t1) = (ts.first_time(), ts.last_time());
    let shifted = |sign: f64| -> Vec<f64> { ts.value(0).iter().map(|v| v + sign * config.epsilon).collect() };
    let upper = rk4_solve(&model, &envelope.upper.fit.params, t0, &shifted(1.0), t1, step)?;
    let lower = rk4_solve(&model, &envelope.lower.fit.params, t0, &shifted(-1.0), t1, step)?;
    let times = sample_times(t0, t1, config.samples);
    let (max_spread, compared_until, pairs) = max_difference(&upper, &lower, &times);
    let spread_within_envelope = pairs.iter().all(|(t, d)| *d <= envelope.envelope(*t));
    let mut warnings = Vec::new();
    if upper.truncated || lower.truncated {
        warnings.push(format!("a trajectory left the bounded region; compared up to t = {compared_until}"));
    }
    let artifacts = vec![bound_artifact(&times, |t| envelope.envelope(t))];
    Ok(Output {
        outcome: Outcome::Noise(NoiseReport {
            envelope_at_end: envelope.envelope(t1),
            envelope,
            max_spread,
            compared_until,
            spread_within_envelope,
        }),
        artifacts,
        warnings,
    })
}

fn basin(config: &mut RunConfig) -> Result<Output, CliError> {
    let ts = load_series(config.require_data()?)?;
    let bounds = config
        .search_box
        .clone()
        .ok_or_else(|| CliError::Config("basin needs --box".into()))?;
    let text = config.require_model()?.to_string();
    let probe = load_model(&text, config.state_dim.unwrap_or(ts.dim()))?;
    // Models that reference the state are ODE right-hand sides.
    let obj: Box<dyn Objective> = if probe.references_state() {
        config.state_dim.get_or_insert(ts.dim());
        Box::new(OdeObjective::new(probe, ts)?)
    } else {
        config.state_dim.get_or_insert(0);
        let model = load_model(&text, 0)?;
        Box::new(FnFitObjective::new(model, ts)?)
    };
    let grid = basin_map(obj.as_ref(), &bounds, config.resolution, &config.descent)?;
    let artifacts = vec![csv_artifact("basin.csv", |out| grid.write_csv(out))];
    Ok(Output {
        outcome: Outcome::Basin(BasinReport {
            resolution: grid.resolution,
            distinct_labels: grid.distinct_labels(),
            minima: grid.minima.clone(),
            minima_objective: grid.minima_objective.clone(),
            cluster_radius: grid.cluster_radius,
        }),
        artifacts,
        warnings: Vec::new(),
    })
}

fn simulate(config: &mut RunConfig) -> Result<Output, CliError> {
    let series = match &config.data {
        Some(path) => Some(load_series(path)?),
        None => None,
    };
    let t0 = *config.t0.get_or_insert(match &series {
        Some(ts) => ts.first_time(),
        None => return Err(CliError::Config("simulate needs --data or --t0".into())),
    });
    let x0 = match (&config.x0, &series) {
        (Some(x0), _) => x0.clone(),
        (None, Some(ts)) => ts.value(0).to_vec(),
        (None, None) => return Err(CliError::Config("simulate needs --data or --x0".into())),
    };
    config.x0 = Some(x0.clone());
    let t_end = match (config.t_end, &series) {
        (Some(t), _) => t,
        (None, Some(ts)) => ts.last_time(),
        (None, None) => return Err(CliError::Config("simulate needs --data or --t-end".into())),
    };
    config.t_end = Some(t_end);
    let state_dim = *config.state_dim.get_or_insert(x0.len());
    let model = load_model(config.require_model()?, state_dim)?;
    let params = config.require_params()?.to_vec();
    let h = *config.h.get_or_insert(match &series {
        Some(ts) => default_step(&series_stats(ts)),
        None => 1e-4,
    });
    let y = rk4_solve(&model, &params, t0, &x0, t_end, h)?;
    let mut warnings = Vec::new();
    if y.truncated {
        warnings.push(format!("trajectory truncated at t = {}", y.covered_end()));
    }
    let artifacts = vec![csv_artifact("trajectory.csv", |out| y.write_csv(out))];
    Ok(Output {
        outcome: Outcome::Simulate(SimulateReport {
            t0,
            x0,
            t_end,
            h,
            nodes: y.len(),
            truncated: y.truncated,
            covered_until: y.covered_end(),
            final_state: y.state(y.len() - 1).to_vec(),
        }),
        artifacts,
        warnings,
    })
}

/// Executes the configured subcommand and returns the report together with
/// the files it would export. Nothing is written to disk.
pub fn execute(config: &RunConfig) -> Result<(RunReport, Vec<Artifact>), CliError> {
    config.validate()?;
    let started = Instant::now();
    let mut effective = config.clone();
    effective.descent.record_trace = effective.trace;
    let work = |effective: &mut RunConfig| match effective.command {
        Command::FitFn => fit_fn(effective),
        Command::FitOde => fit_ode(effective),
        Command::FitPde => fit_pde(effective),
        Command::Certify => certify(effective),
        Command::Compare => compare(effective),
        Command::Noise => noise(effective),
        Command::Basin => basin(effective),
        Command::Simulate => simulate(effective),
    };
    let output = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| work(&mut effective))?,
        None => work(&mut effective)?,
    };
    let report = RunReport {
        version: VERSION.to_string(),
        config: effective,
        warnings: output.warnings,
        outcome: output.outcome,
        timings: Timings {
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    };
    let mut artifacts = output.artifacts;
    artifacts.push(Artifact {
        name: "report.json".into(),
        contents: report_json(&report).into_bytes(),
    });
    Ok((report, artifacts))
}

pub fn report_json(report: &RunReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports always serialize");
    text.push('\n');
    text
}

/// Writes every artifact into `dir`. On failure the files written so far
/// are removed again.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for artifact in artifacts {
            let path = dir.join(&artifact.name);
            written.push(path.clone());
            std::fs::write(&path, &artifact.contents).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for path in &written {
                let _ = std::fs::remove_file(path);
            }
            Err(e)
        }
    }
}

/// [`execute`] followed by writing the exports when an output directory is
/// configured.
pub fn run(config: &RunConfig) -> Result<RunReport, CliError> {
    let (report, artifacts) = execute(config)?;
    if let Some(dir) = &config.out {
        write_artifacts(dir, &artifacts)?;
    }
    Ok(report)
}
