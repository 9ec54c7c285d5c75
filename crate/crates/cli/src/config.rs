//! Experiment configuration: JSON schema, defaults, validation and conversion into a
//! core [`ExperimentSetup`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use spde_core::{
    build_noise_basis, derive_seed, DiffusionCoefficient, ExperimentMode, ExperimentSetup, Grid1D,
    Model, MollifierSpec, NoiseFamily, NoiseSpec, Nonlinearity, PsiSpec, RealField, Schedule,
    SolverOptions, Window,
};

use crate::error::{CliError, CliResult};

/// Environment variable consulted for the seed when neither the flag nor the file sets one.
pub const SEED_ENV: &str = "SPDE_SEED";

/// Tolerance on `dt * round(T / dt) = T`.
const SCHEDULE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub equation: EquationConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    pub noise: NoiseConfig,
    pub initial: Profile,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory; not part of the echo, so artifacts do not depend on where they land.
    #[serde(default, skip_serializing)]
    pub output: Option<String>,
    /// Hash written into config echoes; accepted and ignored on input.
    #[serde(default, skip_serializing)]
    pub content_hash: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_length: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub final_time: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EquationConfig {
    #[serde(alias = "fp")]
    FokkerPlanck { a: DiffusionConfig },
    #[serde(alias = "pme")]
    PorousMedia { psi: PsiSpec },
}

/// Diffusion coefficient of the Fokker-Planck equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    Constant {
        value: f64,
    },
    /// `value` in the bulk, vanishing smoothly on the left half of the domain.
    HalfDegenerate {
        value: f64,
    },
    /// Node values; `sup` defaults to their maximum.
    Tabulated {
        values: Vec<f64>,
        #[serde(default)]
        sup: Option<f64>,
    },
    /// `value * sigmoid(W^mode_t)`, uniform in space and adapted to the noise.
    PathModulated {
        value: f64,
        #[serde(default = "one")]
        mode: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub family: NoiseFamily,
    #[serde(rename = "N")]
    pub n_modes: usize,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub window: Option<Window>,
}

/// Initial profiles on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `amplitude * exp(-(xi - center)^2 / (2 width^2))`.
    Gaussian {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "unit")]
        width: f64,
    },
    /// `offset + amplitude * cos(mode pi xi / L)`.
    Cosine {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
        #[serde(default)]
        offset: f64,
    },
    /// Mollified point mass of total `mass` at `center`.
    Spike {
        #[serde(default)]
        center: f64,
        epsilon: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    Tabulated {
        values: Vec<f64>,
    },
    Zero,
}

fn unit() -> f64 {
    1.0
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Cosine {
            amplitude: 1.0,
            mode: 1,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_mode")]
    pub mode: ExperimentMode,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub perturbation: Profile,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_slack")]
    pub slack_factor: f64,
    #[serde(default = "default_floor")]
    pub dissipation_floor: f64,
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    #[serde(default = "default_ratio")]
    pub refinement_ratio: f64,
    #[serde(default = "default_oracle")]
    pub oracle_tolerance: f64,
}

fn default_mode() -> ExperimentMode {
    ExperimentMode::Perturbation
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_slack() -> f64 {
    10.0
}
fn default_floor() -> f64 {
    1e-10
}
fn default_refinements() -> usize {
    2
}
fn default_ratio() -> f64 {
    1.8
}
fn default_oracle() -> f64 {
    1e-6
}

impl Default for ExperimentSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every experiment field has a default")
    }
}

/// Parses a configuration, reporting the key path and source position of any error.
pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        let key = match missing_field(&message) {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        CliError::Config(format!("{key}: {message}"))
    })
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Where the seed came from, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSource {
    Flag,
    Config,
    Environment,
    Default,
}

/// Precedence: command-line flag, then the config file, then `SPDE_SEED`, then 0.
pub fn resolve_seed(
    flag: Option<u64>,
    config: Option<u64>,
    env: Option<&str>,
) -> CliResult<(u64, SeedSource)> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(s) = config {
        return Ok((s, SeedSource::Config));
    }
    if let Some(raw) = env {
        let s = raw.trim().parse().map_err(|_| {
            CliError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
        })?;
        return Ok((s, SeedSource::Environment));
    }
    Ok((0, SeedSource::Default))
}

impl ExperimentConfig {
    /// Number of steps, after checking that `dt` divides `T`.
    pub fn n_steps(&self) -> CliResult<usize> {
        let TimeConfig { final_time, dt, .. } = self.time;
        if !(final_time.is_finite() && final_time > 0.0 && dt.is_finite() && dt > 0.0) {
            return Err(CliError::Config(format!(
                "time: need T > 0 and dt > 0, got T = {final_time}, dt = {dt}"
            )));
        }
        let n = (final_time / dt).round();
        if (dt * n - final_time).abs() > SCHEDULE_TOLERANCE || n < 1.0 {
            return Err(CliError::Config(format!(
                "time: dt = {dt} does not divide T = {final_time} (dt * round(T/dt) = {})",
                dt * n
            )));
        }
        Ok(n as usize)
    }

    /// Resolved form as JSON, without the hash.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    /// SHA-256 of the compact resolved form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_value()).expect("configuration serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Pretty echo with every default filled in and the content hash attached.
    pub fn echo(&self) -> String {
        let mut v = self.to_value();
        v.as_object_mut()
            .expect("configuration is an object")
            .insert("content_hash".into(), Value::String(self.content_hash()));
        let mut s = serde_json::to_string_pretty(&v).expect("configuration serializes");
        s.push('\n');
        s
    }

    pub fn build_setup(&self) -> CliResult<ExperimentSetup> {
        let grid = Grid1D::new(self.grid.half_length, self.grid.n)?;
        let n_steps = self.n_steps()?;
        let schedule = Schedule::new(self.time.dt, n_steps, self.time.stride)?;
        let noise = build_noise_basis(
            &NoiseSpec {
                family: self.noise.family.clone(),
                n_modes: self.noise.n_modes,
                drift: self.noise.drift,
                window: self.noise.window,
            },
            &grid,
        )?;
        let model = match &self.equation {
            EquationConfig::FokkerPlanck { a } => {
                Model::FokkerPlanck(diffusion(a, grid, self.noise.n_modes)?)
            }
            EquationConfig::PorousMedia { psi } => {
                Model::PorousMedia(Nonlinearity::from_spec(*psi)?)
            }
        };
        let x0 = profile(&self.initial, grid, "initial")?;
        let e = &self.experiment;
        let mut setup = ExperimentSetup::new(model, noise, x0, schedule);
        setup.perturbation = profile(&e.perturbation, grid, "experiment.perturbation")?;
        setup.delta = e.delta;
        setup.options = self.solver;
        setup.ensemble = e.ensemble;
        setup.seed = self.seed.unwrap_or(0);
        setup.levels = e.levels.clone();
        setup.epsilons = e.epsilons.clone();
        setup.check.tolerance = e.tolerance;
        setup.check.slack_factor = e.slack_factor;
        setup.check.dissipation_floor = e.dissipation_floor;
        setup.refinements = e.refinements;
        setup.refinement_ratio = e.refinement_ratio;
        setup.oracle_tolerance = e.oracle_tolerance;
        Ok(setup)
    }
}

fn diffusion(a: &DiffusionConfig, grid: Grid1D, n_modes: usize) -> CliResult<DiffusionCoefficient> {
    Ok(match a {
        DiffusionConfig::Constant { value } => DiffusionCoefficient::constant(grid, *value)?,
        DiffusionConfig::HalfDegenerate { value } => {
            DiffusionCoefficient::half_degenerate(grid, *value)?
        }
        DiffusionConfig::Tabulated { values, sup } => {
            let sup = sup.unwrap_or_else(|| values.iter().copied().fold(0.0, f64::max));
            DiffusionCoefficient::from_values(grid, values.clone(), sup)?
        }
        DiffusionConfig::PathModulated { value, mode } => {
            if *mode == 0 || *mode > n_modes {
                return Err(CliError::Config(format!(
                    "equation.a.mode: {mode} is not one of the {n_modes} noise modes"
                )));
            }
            let (value, mode) = (*value, *mode);
            DiffusionCoefficient::path_dependent(grid, value, move |ctx, out| {
                let w = ctx.history.value(mode);
                out.fill(value / (1.0 + (-w).exp()));
            })?
        }
    })
}

fn profile(p: &Profile, grid: Grid1D, key: &str) -> CliResult<RealField> {
    let field = match p {
        Profile::Gaussian {
            amplitude,
            center,
            width,
        } => {
            if !(*width > 0.0) {
                return Err(CliError::Config(format!(
                    "{key}.width: must be positive, got {width}"
                )));
            }
            RealField::from_fn(grid, |x| {
                amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp()
            })?
        }
        Profile::Cosine {
            amplitude,
            mode,
            offset,
        } => {
            let k = *mode as f64 * std::f64::consts::PI / grid.half_length();
            RealField::from_fn(grid, |x| offset + amplitude * (k * x).cos())?
        }
        Profile::Spike {
            center,
            epsilon,
            mass,
        } => MollifierSpec::new(*epsilon)
            .kernel_at(&grid, *center)?
            .scaled(*mass),
        Profile::Tabulated { values } => {
            if values.len() != grid.len() {
                return Err(CliError::Config(format!(
                    "{key}.values: expected {} node values, got {}",
                    grid.len(),
                    values.len()
                )));
            }
            RealField::new(grid, values.clone())?
        }
        Profile::Zero => RealField::zeros(grid),
    };
    Ok(field)
}

/// Seed of sweep entry `index`.
pub fn entry_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

/// Replaces the scalar at dotted `axis` in the resolved configuration by `value`.
///
/// `experiment.epsilon` is accepted as a shorthand for a one-rung ladder.
pub fn with_axis_value(
    config: &ExperimentConfig,
    axis: &str,
    value: f64,
) -> CliResult<ExperimentConfig> {
    let mut root = config.to_value();
    if axis == "experiment.epsilon" {
        root["experiment"]["epsilons"] = serde_json::json!([value]);
    } else {
        let mut node = &mut root;
        for part in axis.split('.') {
            node = node
                .get_mut(part)
                .ok_or_else(|| CliError::Config(format!("sweep axis {axis}: no key {part:?}")))?;
        }
        let replacement = match node {
            Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(CliError::Config(format!(
                        "sweep axis {axis}: needs nonnegative integers, got {value}"
                    )));
                }
                Value::from(value as u64)
            }
            Value::Number(_) => serde_json::Number::from_f64(value)
                .map(Value::Number)
                .ok_or_else(|| {
                    CliError::Config(format!("sweep axis {axis}: value {value} is not finite"))
                })?,
            other => {
                return Err(CliError::Config(format!(
                    "sweep axis {axis} is not a scalar number (found {})",
                    kind_of(other)
                )))
            }
        };
        *node = replacement;
    }
    let mut next: ExperimentConfig = serde_json::from_value(root)
        .map_err(|e| CliError::Config(format!("sweep axis {axis} = {value}: {e}")))?;
    next.output = config.output.clone();
    Ok(next)
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}
