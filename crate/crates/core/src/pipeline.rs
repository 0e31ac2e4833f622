//! Configuration-driven experiment runner.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, write_bundle, write_dataset, TtBundle};
use crate::error::{Error, Result};
use crate::fcsprop::{MapSource, Propagator};
use crate::gaussian::GaussianResonantLevel;
use crate::linalg::ComplexMatrix;
use crate::models::{build_anderson, discretize_bath, system_initial_state, AndersonParams, InitialState, Preset};
use crate::stats::{
    current_from_series, cutoff_sweep, default_tail_start, fmt_f64, generating_function, reconstruct_series,
    write_sweep_csv, write_text, FcsSeries, Provenance,
};
use crate::tomography::{build_map_from_dataset, build_maps_selfdual, project_cptp, BasisKind, DynamicalMap, MapDataset};
use crate::transfer::{tt_from_maps_smoothed, tt_from_maps_stationary, tt_norm_series};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub pipeline: PipelineFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels_per_lead: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinful: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lambdas: Vec<f64>,
    pub dt: f64,
    /// Horizon of the short-time data.
    pub t_data: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    /// Memory cutoffs `t_m`.
    pub cutoffs: Vec<f64>,
    pub smoothing: usize,
    /// Propagation horizon; defaults to `t_data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Counting-field step of the derivative stencil.
    pub fd_step: f64,
    /// Start of the steady-state window; defaults to the final eighth of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_start: Option<f64>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { cutoffs: vec![0.4, 0.8, 1.2], smoothing: 6, horizon: None, fd_step: 1e-2, tail_start: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineFlags {
    pub input_basis: BasisKind,
    pub output_basis: BasisKind,
    /// Project `lambda = 0` maps onto CPTP maps before reconstruction.
    pub cptp_projection: bool,
    /// Write the transfer tensors of every cutoff.
    pub write_tensors: bool,
}

impl Default for PipelineFlags {
    fn default() -> Self {
        Self {
            input_basis: BasisKind::MatrixUnits,
            output_basis: BasisKind::MatrixUnits,
            cptp_projection: false,
            write_tensors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Whole number of steps `t / dt`, or an error naming `what`.
fn steps_of(t: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (t / dt).round();
    if !(t > 0.0) || !t.is_finite() || (n * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(Error::Config(format!("{what} = {t} is not a positive multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Validated configuration with times converted to steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub params: AndersonParams,
    pub data_steps: usize,
    pub cutoff_steps: Vec<usize>,
    pub horizon_steps: usize,
    pub tail_start: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Normalized TOML without the output location.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        toml::to_string(&c).expect("configuration serializes")
    }

    pub fn model_params(&self) -> Result<AndersonParams> {
        let m = &self.model;
        let mut p = m.preset.params();
        if let Some(n_b) = m.levels_per_lead {
            p.bath = discretize_bath(p.bath.gamma, p.bath.omega_c, p.bath.nu, n_b)?;
        }
        p.epsilon = m.epsilon.unwrap_or(p.epsilon);
        p.u = m.u.unwrap_or(p.u);
        p.beta = m.beta.unwrap_or(p.beta);
        p.voltage = m.voltage.unwrap_or(p.voltage);
        p.spinful = m.spinful.unwrap_or(p.spinful);
        p.initial = m.initial.unwrap_or(p.initial);
        Ok(p)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema {} is not supported (expected {SCHEMA_VERSION})", self.schema)));
        }
        let g = &self.grid;
        if !(g.dt > 0.0) || !g.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", g.dt)));
        }
        let data_steps = steps_of(g.t_data, g.dt, "t_data")?;
        if g.lambdas.is_empty() || g.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("lambdas must be a non-empty list of finite values".into()));
        }
        for (i, a) in g.lambdas.iter().enumerate() {
            if g.lambdas[..i].contains(a) {
                return Err(Error::Config(format!("lambda {a} listed twice")));
            }
        }
        let r = &self.reconstruct;
        let mut cutoff_steps = Vec::new();
        for &t_m in &r.cutoffs {
            let m = steps_of(t_m, g.dt, "cutoff")?;
            if m > data_steps {
                return Err(Error::Config(format!("cutoff {t_m} exceeds the data horizon t_data = {}", g.t_data)));
            }
            cutoff_steps.push(m);
        }
        let horizon = r.horizon.unwrap_or(g.t_data);
        let horizon_steps = steps_of(horizon, g.dt, "horizon")?;
        if let Some(&m) = cutoff_steps.iter().max() {
            if horizon_steps < m {
                return Err(Error::Config("horizon must not be shorter than the longest cutoff".into()));
            }
        }
        if !(r.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        let tail_start = r.tail_start.unwrap_or_else(|| default_tail_start(horizon));
        if !(tail_start >= 0.0 && tail_start <= horizon) {
            return Err(Error::Config(format!("tail_start {tail_start} outside [0, {horizon}]")));
        }
        if let Some(n) = self.noise {
            if !(n.sigma >= 0.0) || !n.sigma.is_finite() {
                return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {}", n.sigma)));
            }
        }
        let params = self.model_params().map_err(|e| Error::Config(e.to_string()))?;
        if !(params.beta >= 0.0) {
            return Err(Error::Config("beta must be >= 0".into()));
        }
        Ok(Resolved { params, data_steps, cutoff_steps, horizon_steps, tail_start })
    }

    fn noise_seed_override(&mut self, seed: Option<u64>) {
        if let (Some(s), Some(n)) = (seed, self.noise.as_mut()) {
            n.seed = s;
        }
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        if let Some(dir) = out {
            self.output = Some(OutputConfig { dir });
        }
        self.noise_seed_override(seed);
        self
    }

    pub fn output_dir(&self) -> Result<PathBuf> {
        self.output.as_ref().map(|o| o.dir.clone()).ok_or_else(|| Error::Config("no output directory given".into()))
    }
}

/// Exact propagation backend chosen by the preset.
pub enum Engine {
    Dense(Box<crate::models::BuiltModel>),
    Gaussian(Box<GaussianResonantLevel>),
}

impl Engine {
    pub fn build(preset: Preset, params: &AndersonParams) -> Result<Self> {
        if preset.is_dense() {
            Ok(Engine::Dense(Box::new(build_anderson(params)?)))
        } else {
            Ok(Engine::Gaussian(Box::new(GaussianResonantLevel::new(params)?)))
        }
    }

    pub fn with_source<R>(&self, f: impl FnOnce(&dyn MapSource) -> Result<R>) -> Result<R> {
        match self {
            Engine::Dense(b) => {
                let prop = Propagator::new(&b.spec)?;
                f(&prop)
            }
            Engine::Gaussian(g) => f(g.as_ref()),
        }
    }
}

/// `zeta_n = Lambda_n(rho_S0)` with `zeta_0 = rho_S0`.
pub fn zetas_from_maps(maps: &[DynamicalMap], rho_s0: &ComplexMatrix) -> Vec<ComplexMatrix> {
    std::iter::once(rho_s0.clone()).chain(maps.iter().map(|m| m.apply(rho_s0))).collect()
}

fn series_from_maps(maps: &[Vec<DynamicalMap>], lambdas: &[f64], dt: f64, rho: &ComplexMatrix, prov: Provenance) -> Result<FcsSeries> {
    let zetas: Vec<Vec<ComplexMatrix>> = maps.iter().map(|m| zetas_from_maps(m, rho)).collect();
    generating_function(lambdas, dt, &zetas, prov)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn has_stencil(lambdas: &[f64], h: f64) -> bool {
    [-h, 0.0, h].iter().all(|x| lambdas.iter().any(|l| (l - x).abs() <= 1e-12))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub records: usize,
    pub files: Vec<PathBuf>,
}

/// Exact short-time maps, the tomography dataset and the exact generating function.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateSummary> {
    let r = cfg.resolve()?;
    prepare_dir(out)?;
    let engine = Engine::build(cfg.model.preset, &r.params)?;
    let lambdas = &cfg.grid.lambdas;
    let dt = cfg.grid.dt;
    let (maps, rho) = engine.with_source(|src| {
        let maps = lambdas
            .iter()
            .map(|&l| build_maps_selfdual(src, l, dt, r.data_steps))
            .collect::<Result<Vec<_>>>()?;
        Ok((maps, src.rho_s0().clone()))
    })?;
    let mut ds = MapDataset::from_maps(cfg.model.preset.name(), &maps, cfg.pipeline.input_basis, cfg.pipeline.output_basis)?;
    if let Some(n) = cfg.noise {
        ds = ds.with_noise(n.sigma, n.seed)?;
    }
    let mut files = Vec::new();
    let path = out.join("dataset.txt");
    write_dataset(&ds, &path)?;
    files.push(path);

    let exact = series_from_maps(&maps, lambdas, dt, &rho, Provenance::Exact)?;
    let path = out.join("z_series.csv");
    exact.write_csv(&path)?;
    files.push(path);
    let h = cfg.reconstruct.fd_step;
    if has_stencil(lambdas, h) {
        let path = out.join("current.csv");
        current_from_series(&exact, h)?.write_csv(&path)?;
        files.push(path);
    }
    let path = out.join("config.toml");
    write_text(&path, &cfg.echo())?;
    files.push(path);
    Ok(SimulateSummary { records: ds.n_records(), files })
}

fn check_dataset_against(cfg: &ExperimentConfig, ds: &MapDataset, r: &Resolved) -> Result<()> {
    if (ds.dt - cfg.grid.dt).abs() > 1e-12 * cfg.grid.dt {
        return Err(Error::Config(format!("dataset dt {} differs from configured dt {}", ds.dt, cfg.grid.dt)));
    }
    if let Some(&m) = r.cutoff_steps.iter().max() {
        if m > ds.n_steps {
            return Err(Error::Config(format!(
                "cutoff of {m} steps exceeds the dataset horizon of {} steps",
                ds.n_steps
            )));
        }
    }
    Ok(())
}

fn dataset_maps(cfg: &ExperimentConfig, ds: &MapDataset) -> Result<Vec<Vec<DynamicalMap>>> {
    let mut maps = build_map_from_dataset(ds)?;
    if cfg.pipeline.cptp_projection {
        for series in maps.iter_mut().filter(|s| s.first().is_some_and(|m| m.lambda == 0.0)) {
            for m in series.iter_mut() {
                *m = project_cptp(m, 100)?;
            }
        }
    }
    Ok(maps)
}

fn noise_of(ds: &MapDataset) -> Option<crate::tomography::NoiseSpec> {
    ds.noise
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructSummary {
    pub sweep: Option<Vec<crate::stats::SweepRow>>,
    pub files: Vec<PathBuf>,
}

/// Per-cutoff reconstructed generating functions and currents, plus the sweep table.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<ReconstructSummary> {
    let r = cfg.resolve()?;
    let ds = read_dataset(dataset)?;
    check_dataset_against(cfg, &ds, &r)?;
    prepare_dir(out)?;
    let maps = dataset_maps(cfg, &ds)?;
    let rho = system_initial_state(r.params.initial, r.params.spinful)?;
    if rho.nrows() != ds.d {
        return Err(Error::Config(format!("model impurity dimension {} differs from dataset d = {}", rho.nrows(), ds.d)));
    }
    let smoothing = cfg.reconstruct.smoothing;
    let h = cfg.reconstruct.fd_step;
    let mut files = Vec::new();
    for &m in &r.cutoff_steps {
        let dir = out.join(format!("cutoff_{m:04}"));
        prepare_dir(&dir)?;
        let s = reconstruct_series(&maps, &rho, m, smoothing, r.horizon_steps, noise_of(&ds))?;
        let path = dir.join("z_series.csv");
        s.write_csv(&path)?;
        files.push(path);
        if has_stencil(&ds.lambdas, h) {
            match current_from_series(&s, h) {
                Ok(c) => {
                    let path = dir.join("current.csv");
                    c.write_csv(&path)?;
                    files.push(path);
                }
                Err(Error::VanishingGeneratingFunction { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if cfg.pipeline.write_tensors {
            let families = maps
                .iter()
                .map(|series| tt_from_maps_smoothed(&series[..m], smoothing))
                .collect::<Result<Vec<_>>>()?;
            let path = dir.join("tensors.txt");
            write_bundle(&TtBundle { preset: ds.preset.clone(), families }, &path)?;
            files.push(path);
        }
    }
    let mut sweep = None;
    if has_stencil(&ds.lambdas, h) && !r.cutoff_steps.is_empty() {
        let idx: Vec<usize> = [-h, 0.0, h]
            .iter()
            .map(|x| ds.lambdas.iter().position(|l| (l - x).abs() <= 1e-12).expect("stencil present"))
            .collect();
        let stencil: Vec<Vec<DynamicalMap>> = idx.iter().map(|&i| maps[i].clone()).collect();
        let rows = cutoff_sweep(&stencil, &rho, h, &r.cutoff_steps, r.horizon_steps, smoothing, r.tail_start)?;
        let path = out.join("sweep.csv");
        write_sweep_csv(&rows, &path)?;
        files.push(path);
        sweep = Some(rows);
    }
    let path = out.join("config.toml");
    write_text(&path, &cfg.echo())?;
    files.push(path);
    Ok(ReconstructSummary { sweep, files })
}

/// Norm of every transfer tensor extracted from the full dataset (no smoothing).
pub fn cmd_ttnorms(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<PathBuf> {
    cfg.resolve()?;
    let ds = read_dataset(dataset)?;
    prepare_dir(out)?;
    let maps = dataset_maps(cfg, &ds)?;
    let mut text = String::from("lambda,n,t,norm\n");
    for series in &maps {
        let f = tt_from_maps_stationary(series)?;
        for (t, norm) in f.tensors.iter().zip(tt_norm_series(&f)) {
            text.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(f.lambda),
                t.lag,
                fmt_f64(t.lag as f64 * f.dt),
                fmt_f64(norm)
            ));
        }
    }
    let path = out.join("ttnorms.csv");
    write_text(&path, &text)?;
    write_text(&out.join("config.toml"), &cfg.echo())?;
    Ok(path)
}

/// Process exit status for an error: 2 for configuration and input problems,
/// 3 for numerical-contract violations.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Io { .. }
        | Error::InvalidParameter(_)
        | Error::DimensionOverflow { .. }
        | Error::Incomplete(_)
        | Error::InsufficientHistory { .. }
        | Error::MissingStencil(_)
        | Error::SeriesTooShort { .. } => 2,
        _ => 3,
    }
}
