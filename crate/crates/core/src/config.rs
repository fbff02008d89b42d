//! Declarative run configuration: TOML schema, validation with field-path
//! diagnostics, named experiment presets, and resolution into solver inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gelling_kernel, KernelSpec};
use crate::mesh::{build_mesh, InitialCondition, Mesh};
use crate::solver::{self, RunSetup, TimeGrid, Trajectory};
use crate::weights::{WeightSpec, WeightTag};

pub const DEFAULT_CELLS: usize = 500;
pub const DEFAULT_GRADING: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    Constant {
        c: f64,
    },
    Sum,
    Product,
    Homogeneous {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        allow_wide: bool,
    },
    ProductPlusSum,
    PaperQuadratic,
    PaperExponential,
    Gelling {
        weight: Box<WeightConfig>,
        lambda: f64,
        mu: f64,
        epsilon: f64,
    },
    Custom {
        expr: String,
    },
}

impl KernelConfig {
    pub fn resolve(&self) -> Result<KernelSpec> {
        match self {
            KernelConfig::Constant { c } => KernelSpec::constant(*c),
            KernelConfig::Sum => Ok(KernelSpec::sum()),
            KernelConfig::Product => Ok(KernelSpec::product()),
            KernelConfig::Homogeneous { alpha, beta, allow_wide } => {
                if *allow_wide {
                    Ok(KernelSpec::homogeneous_wide(*alpha, *beta))
                } else {
                    KernelSpec::homogeneous(*alpha, *beta)
                }
            }
            KernelConfig::ProductPlusSum => Ok(KernelSpec::product_plus_sum()),
            KernelConfig::PaperQuadratic => Ok(KernelSpec::paper_quadratic()),
            KernelConfig::PaperExponential => Ok(KernelSpec::paper_exponential()),
            KernelConfig::Gelling { weight, lambda, mu, epsilon } => {
                gelling_kernel(&weight.resolve()?, *lambda, *mu, *epsilon)
            }
            KernelConfig::Custom { expr } => KernelSpec::custom(expr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightConfig {
    One,
    Identity,
    Power {
        p: f64,
    },
    PowerPlusOne {
        beta: f64,
    },
    Exponential,
    LogQuotient,
    Custom {
        expr: String,
        #[serde(default)]
        tags: Vec<WeightTag>,
    },
}

impl WeightConfig {
    pub fn resolve(&self) -> Result<WeightSpec> {
        match self {
            WeightConfig::One => Ok(WeightSpec::one()),
            WeightConfig::Identity => Ok(WeightSpec::identity()),
            WeightConfig::Power { p } => WeightSpec::power(*p),
            WeightConfig::PowerPlusOne { beta } => WeightSpec::power_plus_one(*beta),
            WeightConfig::Exponential => Ok(WeightSpec::exponential()),
            WeightConfig::LogQuotient => Ok(WeightSpec::log_quotient()),
            WeightConfig::Custom { expr, tags } => WeightSpec::custom(expr, tags),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub n: Option<usize>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[serde(rename = "N")]
    pub steps: Option<usize>,
    pub adaptive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
}

fn default_cadence() -> usize {
    1
}

fn default_outdir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { cadence: 1, snapshot_times: Vec::new(), outdir: default_outdir() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    MassBalance,
    Monotonicity,
    LBound,
    M0Decay,
    Tmi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub enabled: Vec<CheckKind>,
    /// M0 must fall below this fraction of M0(0) for the decay check.
    #[serde(default = "default_m0_theta")]
    pub m0_theta: f64,
    /// Kernel floor used in the decay-rate report.
    #[serde(default = "default_m0_floor")]
    pub m0_floor: f64,
}

fn default_m0_theta() -> f64 {
    0.9
}

fn default_m0_floor() -> f64 {
    1e-3
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self { enabled: Vec::new(), m0_theta: default_m0_theta(), m0_floor: default_m0_floor() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GelConfig {
    #[serde(default = "default_gel_theta")]
    pub theta: f64,
    #[serde(default = "default_gel_sustain")]
    pub sustain: usize,
    #[serde(default)]
    pub r_list: Vec<f64>,
}

fn default_gel_theta() -> f64 {
    crate::gelation::DEFAULT_THETA
}

fn default_gel_sustain() -> usize {
    crate::gelation::DEFAULT_SUSTAIN
}

impl Default for GelConfig {
    fn default() -> Self {
        Self { theta: default_gel_theta(), sustain: default_gel_sustain(), r_list: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n0: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sample_times: Vec<f64>,
}

fn default_replicates() -> usize {
    20
}

fn default_seed() -> u64 {
    42
}

/// Full experiment description. Tables omitted from a file fall back to the
/// preset named by `preset`, when one is given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<WeightConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<ChecksConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gel: Option<GelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigValidation { field: field.to_string(), message: message.into() }
}

impl SimConfig {
    /// Overlay: any table present in `self` wins over `base`.
    fn merged_over(self, base: SimConfig) -> SimConfig {
        SimConfig {
            preset: self.preset.clone().or(base.preset),
            kernel: self.kernel.or(base.kernel),
            weights: self.weights.or(base.weights),
            mesh: self.mesh.or(base.mesh),
            time: self.time.or(base.time),
            initial: self.initial.or(base.initial),
            outputs: self.outputs.or(base.outputs),
            checks: self.checks.or(base.checks),
            gel: self.gel.or(base.gel),
            oracle: self.oracle.or(base.oracle),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kernel = self.kernel.as_ref().ok_or_else(|| invalid("kernel", "missing table"))?;
        kernel.resolve()?;
        for (i, w) in self.weight_configs().iter().enumerate() {
            w.resolve().map_err(|e| invalid(&format!("weights[{i}]"), e.to_string()))?;
        }
        let mesh = self.mesh.as_ref().ok_or_else(|| invalid("mesh", "missing table"))?;
        let r = mesh.r.ok_or_else(|| invalid("mesh.R", "missing domain size"))?;
        build_mesh(r, mesh.n.unwrap_or(DEFAULT_CELLS), mesh.p.unwrap_or(DEFAULT_GRADING))
            .map_err(|e| invalid("mesh", e.to_string()))?;
        let time = self.time.as_ref().ok_or_else(|| invalid("time", "missing table"))?;
        let t_end = time.t_end.ok_or_else(|| invalid("time.T", "missing horizon"))?;
        if !(t_end > 0.0) {
            return Err(invalid("time.T", format!("must be > 0, got {t_end}")));
        }
        if let Some(steps) = time.steps {
            if steps == 0 {
                return Err(invalid("time.N", "must be >= 1"));
            }
        } else if !time.adaptive.unwrap_or(true) {
            return Err(invalid("time", "needs N or adaptive = true"));
        }
        if let Some(out) = &self.outputs {
            if out.cadence == 0 {
                return Err(invalid("outputs.cadence", "must be >= 1"));
            }
            for &ts in &out.snapshot_times {
                if !(0.0..=t_end).contains(&ts) {
                    return Err(invalid(
                        "outputs.snapshot_times",
                        format!("{ts} outside [0, {t_end}]"),
                    ));
                }
            }
        }
        if let Some(gel) = &self.gel {
            if !(gel.theta > 0.0 && gel.theta < 1.0) {
                return Err(invalid("gel.theta", "must lie in (0, 1)"));
            }
            if gel.sustain < 2 {
                return Err(invalid("gel.sustain", "must be >= 2"));
            }
            if gel.r_list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("gel.r_list", "must be strictly increasing"));
            }
        }
        if let Some(oracle) = &self.oracle {
            if oracle.n0 == 0 {
                return Err(invalid("oracle.n0", "must be >= 1"));
            }
            if oracle.replicates == 0 {
                return Err(invalid("oracle.replicates", "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn weight_configs(&self) -> Vec<WeightConfig> {
        self.weights.clone().unwrap_or_default()
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        self.kernel.as_ref().ok_or_else(|| invalid("kernel", "missing table"))?.resolve()
    }

    pub fn weight_specs(&self) -> Result<Vec<WeightSpec>> {
        self.weight_configs().iter().map(|w| w.resolve()).collect()
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let mesh = self.mesh.as_ref().ok_or_else(|| invalid("mesh", "missing table"))?;
        let r = mesh.r.ok_or_else(|| invalid("mesh.R", "missing domain size"))?;
        build_mesh(r, mesh.n.unwrap_or(DEFAULT_CELLS), mesh.p.unwrap_or(DEFAULT_GRADING))
    }

    pub fn t_end(&self) -> Result<f64> {
        self.time
            .as_ref()
            .and_then(|t| t.t_end)
            .ok_or_else(|| invalid("time.T", "missing horizon"))
    }

    pub fn outputs(&self) -> OutputConfig {
        self.outputs.clone().unwrap_or_default()
    }

    pub fn checks(&self) -> ChecksConfig {
        self.checks.clone().unwrap_or_default()
    }

    pub fn to_setup(&self) -> Result<RunSetup> {
        self.validate()?;
        let time = self.time.as_ref().unwrap();
        let grid = match time.steps {
            Some(steps) => TimeGrid::Fixed { steps },
            None => TimeGrid::Adaptive,
        };
        let outputs = self.outputs();
        Ok(RunSetup {
            mesh: self.build_mesh()?,
            kernel: self.kernel_spec()?,
            weights: self.weight_specs()?,
            initial: self.initial.clone().unwrap_or(InitialCondition::ExpDecay),
            t_end: self.t_end()?,
            grid,
            cadence: outputs.cadence,
            snapshot_times: outputs.snapshot_times,
        })
    }

    pub fn run(&self) -> Result<Trajectory> {
        solver::run(&self.to_setup()?)
    }
}

/// Parse a config file, apply its preset base if named, and validate.
pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)?;
    load_config_str(&text)
}

pub fn load_config_str(text: &str) -> Result<SimConfig> {
    let raw: SimConfig =
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let cfg = match &raw.preset {
        Some(name) => raw.clone().merged_over(preset(name)?),
        None => raw,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn fig_defaults(outdir: &str) -> SimConfig {
    SimConfig {
        weights: Some(vec![WeightConfig::One, WeightConfig::Power { p: 0.5 }]),
        mesh: Some(MeshConfig { r: Some(200.0), n: Some(DEFAULT_CELLS), p: Some(DEFAULT_GRADING) }),
        time: Some(TimeConfig { t_end: Some(3.0), steps: Some(1000), adaptive: None }),
        initial: Some(InitialCondition::ExpDecay),
        outputs: Some(OutputConfig {
            cadence: 1,
            snapshot_times: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            outdir: PathBuf::from(outdir),
        }),
        checks: Some(ChecksConfig {
            enabled: vec![CheckKind::MassBalance, CheckKind::Monotonicity],
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn log_quotient_gelling() -> KernelConfig {
    KernelConfig::Gelling {
        weight: Box::new(WeightConfig::LogQuotient),
        lambda: 1.0,
        mu: 0.0,
        epsilon: 0.001,
    }
}

/// Named experiment presets. The gelling presets keep lambda = 1, mu = 0 as
/// overridable defaults.
pub fn preset(name: &str) -> Result<SimConfig> {
    let mut cfg = match name {
        "fig1" => SimConfig {
            kernel: Some(KernelConfig::Custom { expr: "(x*y)^0.5".into() }),
            ..fig_defaults("out/fig1")
        },
        "fig2" => SimConfig {
            kernel: Some(KernelConfig::ProductPlusSum),
            gel: Some(GelConfig::default()),
            ..fig_defaults("out/fig2")
        },
        "fig4b" | "fig4c" | "fig4d" | "fig4e" | "fig4f" => {
            let (r, steps) = match name {
                "fig4b" => (50.0, 1000),
                "fig4c" => (200.0, 1000),
                "fig4d" => (1000.0, 1000),
                "fig4e" => (1e5, 80_000),
                _ => (1.5e5, 120_000),
            };
            let mut cfg = fig_defaults(&format!("out/{name}"));
            cfg.kernel = Some(log_quotient_gelling());
            cfg.mesh = Some(MeshConfig {
                r: Some(r),
                n: Some(DEFAULT_CELLS),
                p: Some(DEFAULT_GRADING),
            });
            cfg.time = Some(TimeConfig { t_end: Some(3.0), steps: Some(steps), adaptive: None });
            if let Some(out) = cfg.outputs.as_mut() {
                out.cadence = (steps / 1000).max(1);
            }
            cfg.gel = Some(GelConfig::default());
            cfg
        }
        other => {
            return Err(Error::ConfigValidation {
                field: "preset".into(),
                message: format!(
                    "unknown preset `{other}` (expected fig1, fig2, fig4b..fig4f)"
                ),
            })
        }
    };
    cfg.preset = Some(name.to_string());
    cfg.validate()?;
    Ok(cfg)
}

pub const PRESET_NAMES: [&str; 7] = ["fig1", "fig2", "fig4b", "fig4c", "fig4d", "fig4e", "fig4f"];
