//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bounds::{DeltaGrid, NoiseModel};
use crate::error::{Error, Result};
use crate::estimator::MleConfig;
use crate::fisher::{DEFAULT_FD_STEP, DEFAULT_ROUNDS};
use crate::render::DEFAULT_DEPTH;
use crate::render_error::DEFAULT_L_MAX;
use crate::scene::{parse_scene, ParameterPoint, ParameterSpace, SceneDescription};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scene document, relative to the config file.
    #[serde(default)]
    pub scene: Option<PathBuf>,
    /// Built-in analytic model used instead of a scene.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Values of the components not being swept; defaults to the midpoint of Θ.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub delta_grid: Option<GridSpec>,
    #[serde(default = "default_noise")]
    pub noise: Vec<NoiseSpec>,
    /// Sample count for direct bounds, gradients and stack renders.
    #[serde(default = "default_spp")]
    pub spp: u32,
    #[serde(default = "default_schedule")]
    pub spp_schedule: Vec<u32>,
    /// Sample count of the direct bound at the low end of an interval.
    #[serde(default = "default_n_eff")]
    pub n_eff: u32,
    #[serde(default = "default_step")]
    pub cr_step: f64,
    #[serde(default = "default_depth")]
    pub depth: u32,
    /// Render every θ from the same random stream.
    #[serde(default)]
    pub common_random_numbers: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub fisher: Option<FisherSpec>,
    #[serde(default)]
    pub viewgrid: Option<ViewGridConfig>,
    #[serde(default)]
    pub variance: Option<VarianceSpec>,
    #[serde(default)]
    pub mle: Option<MleSpec>,
    /// Commands whose renders `render` writes to the stack.
    #[serde(default = "default_stack")]
    pub stack: Vec<StackOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackOp {
    Bounds,
    Fisher,
    Intervals,
}

fn default_stack() -> Vec<StackOp> {
    vec![StackOp::Bounds]
}

/// Grid points on each side of θ* when no `delta_grid` is given.
pub const DEFAULT_GRID_COUNT: usize = 10;

fn default_noise() -> Vec<NoiseSpec> {
    vec![NoiseSpec::Poisson]
}
fn default_spp() -> u32 {
    1024
}
fn default_schedule() -> Vec<u32> {
    (2..=11).map(|k| k * 1024).collect()
}
fn default_n_eff() -> u32 {
    65536
}
fn default_step() -> f64 {
    DEFAULT_FD_STEP
}
fn default_depth() -> u32 {
    DEFAULT_DEPTH
}
fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}
fn default_true() -> bool {
    true
}
fn default_axes() -> [usize; 2] {
    [0, 1]
}
fn default_l_max() -> f64 {
    DEFAULT_L_MAX
}
fn default_draws() -> usize {
    1000
}
fn default_replicates() -> usize {
    20
}
fn default_variance_spp() -> Vec<u32> {
    vec![256, 512, 1024, 2048]
}
fn default_runs() -> usize {
    30
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Every pixel equals θ₀.
    Constant {
        pixels: usize,
        #[serde(default = "one")]
        channels: usize,
        parameter_space: ParameterSpace,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SweepSpec {
    Values {
        component: usize,
        values: Vec<f64>,
    },
    Range {
        component: usize,
        start: f64,
        stop: f64,
        step: f64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub step: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Poisson,
    Awgn { sigma: f64 },
}

impl NoiseSpec {
    pub fn model(self) -> NoiseModel {
        match self {
            NoiseSpec::Poisson => NoiseModel::Poisson,
            NoiseSpec::Awgn { sigma } => NoiseModel::Awgn { sigma },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSpec {
    #[serde(default = "default_step")]
    pub xi: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_true")]
    pub channel_mean: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewGridConfig {
    pub offsets: Vec<f64>,
    #[serde(default = "default_axes")]
    pub axes: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSpec {
    #[serde(default = "default_variance_spp")]
    pub spp: Vec<u32>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_l_max")]
    pub l_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleSpec {
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Initial values are drawn from θ* ± init_halfwidth (clipped to Θ).
    pub init_halfwidth: f64,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub step_decay: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub coarse_spp: Option<u32>,
    #[serde(default)]
    pub fine_spp: Option<u32>,
    #[serde(default)]
    pub switch_iteration: Option<usize>,
    #[serde(default)]
    pub observation_spp: Option<u32>,
}

impl MleSpec {
    pub fn config(&self, theta: &ParameterPoint, fd_step: f64) -> MleConfig {
        let s = theta.space();
        let lo = theta
            .values()
            .iter()
            .zip(&s.lower)
            .map(|(t, l)| (t - self.init_halfwidth).max(*l))
            .collect();
        let hi = theta
            .values()
            .iter()
            .zip(&s.upper)
            .map(|(t, u)| (t + self.init_halfwidth).min(*u))
            .collect();
        let mut c = MleConfig::new(lo, hi);
        c.fd_step = fd_step;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(step, step_decay, max_iterations, tolerance, coarse_spp, fine_spp, switch_iteration, observation_spp);
        c
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// A config with its scene (or analytic model) loaded and checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scene: Option<SceneDescription>,
    pub space: ParameterSpace,
    pub points: Vec<ParameterPoint>,
    /// Image shape (width, height, channels).
    pub shape: (usize, usize, usize),
}

impl Experiment {
    pub fn component(&self) -> usize {
        match self.config.sweep {
            SweepSpec::Values { component, .. } | SweepSpec::Range { component, .. } => component,
        }
    }

    pub fn noises(&self) -> Vec<NoiseModel> {
        self.config.noise.iter().map(|n| n.model()).collect()
    }

    /// Δ grid along the swept component at `theta`; the default step is the
    /// parameter space's grid step.
    pub fn grid(&self, theta: &ParameterPoint) -> Result<DeltaGrid> {
        let j = self.component();
        let spec = self.config.delta_grid.unwrap_or(GridSpec {
            step: self.space.step[j],
            count: DEFAULT_GRID_COUNT,
        });
        DeltaGrid::axis(theta, j, spec.step, spec.count)
    }

    pub fn fisher(&self) -> FisherSpec {
        self.config.fisher.clone().unwrap_or(FisherSpec {
            xi: DEFAULT_FD_STEP,
            rounds: DEFAULT_ROUNDS,
            channel_mean: true,
        })
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.into_inner().to_string())
    })
}

/// Reads, parses and validates a config file; relative paths resolve
/// against the file's directory.
pub fn load_experiment(path: impl AsRef<Path>) -> Result<Experiment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(".", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    build_experiment(parse_config(&text)?, base)
}

pub fn build_experiment(config: ExperimentConfig, base: &Path) -> Result<Experiment> {
    let (scene, space, shape) = match (&config.scene, &config.model) {
        (Some(_), Some(_)) => return Err(config_err("scene", "give either `scene` or `model`, not both")),
        (None, None) => return Err(config_err("scene", "one of `scene` or `model` is required")),
        (Some(p), None) => {
            let full = base.join(p);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| config_err("scene", format!("{}: {e}", full.display())))?;
            let scene = parse_scene(&text).map_err(|e| config_err("scene", e.to_string()))?;
            let space = scene
                .space()
                .map_err(|e| config_err("scene", e.to_string()))?
                .clone();
            let shape = (scene.camera.width, scene.camera.height, 3);
            (Some(scene), space, shape)
        }
        (None, Some(ModelSpec::Constant { pixels, channels, parameter_space })) => {
            parameter_space
                .validate()
                .map_err(|e| config_err("model.constant.parameter_space", e.to_string()))?;
            if *pixels == 0 || !(*channels == 1 || *channels == 3) {
                return Err(config_err(
                    "model.constant",
                    "pixels must be ≥ 1 and channels 1 or 3",
                ));
            }
            (None, parameter_space.clone(), (*pixels, 1, *channels))
        }
    };

    let (component, values) = match &config.sweep {
        SweepSpec::Values { component, values } => (*component, values.clone()),
        SweepSpec::Range { component, start, stop, step } => {
            if !(*step > 0.0 && step.is_finite()) {
                return Err(config_err("sweep.step", "must be positive"));
            }
            let n = ((stop - start) / step + 1e-9).floor();
            let values = if n.is_finite() && n >= 0.0 {
                (0..=n as usize).map(|k| start + k as f64 * step).collect()
            } else {
                Vec::new()
            };
            (*component, values)
        }
    };
    if values.is_empty() {
        return Err(config_err("sweep", "sweep has no points"));
    }
    if component >= space.dim() {
        return Err(config_err(
            "sweep.component",
            format!("component {component} but θ has {} components", space.dim()),
        ));
    }
    let base_theta = match &config.theta {
        Some(t) if t.len() == space.dim() => t.clone(),
        Some(t) => {
            return Err(config_err(
                "theta",
                format!("{} components, parameter space has {}", t.len(), space.dim()),
            ))
        }
        None => space
            .lower
            .iter()
            .zip(&space.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    };
    let points = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut t = base_theta.clone();
            t[component] = *v;
            ParameterPoint::new(t, space.clone())
                .map_err(|e| config_err(&format!("sweep[{i}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    for (i, n) in config.noise.iter().enumerate() {
        n.model()
            .validate()
            .map_err(|e| config_err(&format!("noise[{i}]"), e.to_string()))?;
    }
    if config.noise.is_empty() {
        return Err(config_err("noise", "at least one noise model is required"));
    }
    if config.spp == 0 || config.n_eff == 0 || config.spp_schedule.contains(&0) {
        return Err(config_err("spp", "sample counts must be ≥ 1"));
    }
    if config.depth == 0 {
        return Err(config_err("depth", "must be ≥ 1"));
    }
    if !(config.cr_step > 0.0 && config.cr_step.is_finite()) {
        return Err(config_err("cr_step", "must be positive"));
    }
    if let Some(g) = &config.delta_grid {
        if !(g.step > 0.0 && g.step.is_finite()) || g.count == 0 {
            return Err(config_err("delta_grid", "step must be positive and count ≥ 1"));
        }
    }
    if let Some(v) = &config.viewgrid {
        if scene.is_none() {
            return Err(config_err("viewgrid", "needs a scene"));
        }
        if v.offsets.is_empty() {
            return Err(config_err("viewgrid.offsets", "needs at least one offset"));
        }
    }
    Ok(Experiment {
        config,
        scene,
        space,
        points,
        shape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONSTANT: &str = r#"{
        "model": {"constant": {"pixels": 100, "parameter_space": {"lower": [0], "upper": [20], "step": [0.01]}}},
        "sweep": {"component": 0, "values": [10.0]},
        "delta_grid": {"step": 0.01, "count": 100}
    }"#;

    #[test]
    fn constant_model_config() {
        let e = build_experiment(parse_config(CONSTANT).unwrap(), Path::new(".")).unwrap();
        assert_eq!(e.points.len(), 1);
        assert_eq!(e.shape, (100, 1, 1));
        assert_eq!(e.noises(), vec![NoiseModel::Poisson]);
        assert_eq!(e.config.spp_schedule.len(), 10);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let text = CONSTANT.replace("[10.0]", "[]");
        let err = build_experiment(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("sweep has no points"), "{err}");
        let text = CONSTANT.replace(
            r#""values": [10.0]"#,
            r#""start": 5.0, "stop": 4.0, "step": 0.5"#,
        );
        let err = build_experiment(parse_config(&text).unwrap(), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("sweep has no points"));
    }

    #[test]
    fn ranges_and_bounds() {
        let text = CONSTANT.replace(
            r#""values": [10.0]"#,
            r#""start": 1.0, "stop": 2.0, "step": 0.25"#,
        );
        let e = build_experiment(parse_config(&text).unwrap(), Path::new(".")).unwrap();
        assert_eq!(e.points.len(), 5);
        let text = CONSTANT.replace("[10.0]", "[30.0]");
        assert!(matches!(
            build_experiment(parse_config(&text).unwrap(), Path::new(".")),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let text = CONSTANT.replace(r#""step": 0.01, "count""#, r#""stride": 1, "count""#);
        match parse_config(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "delta_grid.stride"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_list() {
        let text = CONSTANT.replace(
            r#""sweep""#,
            r#""noise": ["poisson", {"awgn": {"sigma": 0.1}}], "sweep""#,
        );
        let e = build_experiment(parse_config(&text).unwrap(), Path::new(".")).unwrap();
        assert_eq!(e.noises()[1], NoiseModel::Awgn { sigma: 0.1 });
        let bad = text.replace("0.1}", "-1}");
        assert!(build_experiment(parse_config(&bad).unwrap(), Path::new(".")).is_err());
    }
}
