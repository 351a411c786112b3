//! Command-line experiment drivers.
//!
//! Every command reads one config file and writes CSV and PFM files under
//! the output directory. All randomness comes from the base seed, so the
//! output tree is a function of (config, seed) alone.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{cr_limit, hcr_bound, HcrResult, NoiseModel};
use crate::config::{load_experiment, Experiment, ModelSpec, StackOp};
use crate::error::{Error, Result};
use crate::estimator::{run_trials, write_table_csv, TableRow};
use crate::fisher::{fi_map, total_fi, viewpoint_grid, ViewGridSpec};
use crate::forward::{constant_model, render_seed, Cached, CommonRandomNumbers, Forward, Planner, SampleKey, SceneForward, StackForward};
use crate::io::{load_stack, write_float_map, write_manifest, write_pfm, ManifestRow, Role};
use crate::math::theta_key;
use crate::render::rng::derive_seed;
use crate::render_error::{
    hcr_hat, hcr_interval, join, value_str, variance_decay_fit, write_decay_histogram_csv,
    write_intervals_csv, write_lambda_trace_csv, HcrInterval,
};
use crate::scene::ParameterPoint;

/// Stream tag for the replicate renders of `validate-variance`.
const VARIANCE_TAG: u64 = 0x7661_7269;
/// Stream tag for the MLE trial seeds.
const MLE_TAG: u64 = 0x6d6c_6500;
/// Stream tag for the shared stream under common random numbers.
const CRN_TAG: u64 = 0x6372_6e00;

#[derive(Debug, Parser)]
#[command(name = "plenoptic-bounds", version, about = "Estimation-error lower bounds for rendered observations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides the config's `workers`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Base seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Read renders from a manifest written by `render` instead of rendering.
    #[arg(long, global = true)]
    pub from_stack: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Render every image the configured commands need and write a manifest.
    Render,
    /// HCR and Cramér-Rao bounds over the sweep.
    Bounds,
    /// Pixel-wise Fisher information maps.
    Fisher,
    /// Mean Fisher information over a grid of camera positions.
    Viewgrid,
    /// Direct and bias-corrected bound intervals.
    Intervals,
    /// Variance-decay exponent fit over replicate renders.
    ValidateVariance,
    /// Maximum-likelihood trials next to the bound interval.
    Mle,
}

/// Process exit code for an error: 2 for config problems, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config { .. } | Error::Schema { .. } => 2,
        _ => 3,
    }
}

/// A loaded experiment with command-line overrides applied.
pub struct Session {
    pub experiment: Experiment,
    pub out: PathBuf,
    pub seed: u64,
    pub from_stack: Option<PathBuf>,
}

impl Session {
    pub fn load(options: &Options) -> Result<Self> {
        let path = options.config.as_ref().ok_or_else(|| Error::Config {
            path: ".".into(),
            message: "--config is required".into(),
        })?;
        let experiment = load_experiment(path)?;
        let out = options
            .out
            .clone()
            .or_else(|| experiment.config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = options.seed.unwrap_or(experiment.config.seed);
        Ok(Session {
            experiment,
            out,
            seed,
            from_stack: options.from_stack.clone(),
        })
    }

    /// The forward model: a stack if one was given, else the scene renderer
    /// or analytic model.
    pub fn forward(&self) -> Result<Box<dyn Forward>> {
        if let Some(manifest) = &self.from_stack {
            let mut stack = StackForward::new(self.seed);
            for entry in load_stack(manifest)? {
                stack.insert(entry.image)?;
            }
            return Ok(self.keyed(Box::new(stack)));
        }
        self.live_forward()
    }

    fn shared_stream(&self) -> Option<u64> {
        self.experiment
            .config
            .common_random_numbers
            .then(|| derive_seed(self.seed, &[CRN_TAG]))
    }

    fn keyed(&self, model: Box<dyn Forward>) -> Box<dyn Forward> {
        match self.shared_stream() {
            Some(stream) => Box::new(CommonRandomNumbers { inner: model, stream }),
            None => model,
        }
    }

    fn live_forward(&self) -> Result<Box<dyn Forward>> {
        Ok(self.keyed(self.model()?))
    }

    fn model(&self) -> Result<Box<dyn Forward>> {
        let cfg = &self.experiment.config;
        match (&self.experiment.scene, &cfg.model) {
            (Some(scene), _) => {
                let mut f = SceneForward::new(scene.clone(), self.seed);
                f.depth = cfg.depth;
                Ok(Box::new(f))
            }
            (None, Some(ModelSpec::Constant { pixels, channels, .. })) => {
                Ok(Box::new(constant_model(*pixels, *channels)))
            }
            (None, None) => Err(Error::Config {
                path: "scene".into(),
                message: "no forward model".into(),
            }),
        }
    }

    fn out_file(&self, name: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.out.join(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(p)
    }

    fn reject_stack(&self, command: &str) -> Result<()> {
        if self.from_stack.is_some() {
            return Err(Error::Config {
                path: "--from-stack".into(),
                message: format!("`{command}` does not read pre-rendered input"),
            });
        }
        Ok(())
    }
}

/// Runs a parsed command line, setting up the worker pool first.
pub fn run(cli: &Cli) -> Result<()> {
    let session = Session::load(&cli.options)?;
    let workers = cli.options.workers.or(session.experiment.config.workers);
    match workers {
        Some(0) => Err(Error::Config {
            path: "workers".into(),
            message: "must be ≥ 1".into(),
        }),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| dispatch(cli.command, &session)),
        None => dispatch(cli.command, &session),
    }
}

pub fn dispatch(command: Command, session: &Session) -> Result<()> {
    match command {
        Command::Render => cmd_render(session),
        Command::Bounds => cmd_bounds(session),
        Command::Fisher => cmd_fisher(session),
        Command::Viewgrid => cmd_viewgrid(session),
        Command::Intervals => cmd_intervals(session),
        Command::ValidateVariance => cmd_validate_variance(session),
        Command::Mle => cmd_mle(session),
    }
}

fn flags(r: &HcrResult) -> String {
    let mut f = Vec::new();
    if r.unbounded {
        f.push("unbounded");
    }
    if r.clamped {
        f.push("clamped");
    }
    f.join(";")
}

fn bounds_with(session: &Session, forward: &dyn Forward) -> Result<()> {
    let exp = &session.experiment;
    let j = exp.component();
    let cfg = &exp.config;
    let mut w = csv::Writer::from_path(session.out_file("bounds.csv")?)?;
    w.write_record(["theta", "j", "noise", "hcr", "cr", "argmax_delta", "flags"])?;
    let mut trace = csv::Writer::from_path(session.out_file("bounds_trace.csv")?)?;
    trace.write_record(["theta", "noise", "delta", "lambda", "hcr_functional"])?;
    for theta in &exp.points {
        let grid = exp.grid(theta)?;
        let cached = Cached::new(forward);
        for noise in exp.noises() {
            let r = hcr_bound(&cached, theta, &grid, noise, j, cfg.spp)?;
            let cr = cr_limit(&cached, theta, cfg.cr_step, noise, j, cfg.spp)?;
            w.write_record([
                join(theta.values()),
                j.to_string(),
                noise.label(),
                value_str(r.bound),
                value_str(cr),
                join(&r.argmax),
                flags(&r),
            ])?;
            for t in &r.trace {
                trace.write_record([
                    join(theta.values()),
                    noise.label(),
                    join(&t.delta),
                    format!("{:?}", t.lambda),
                    value_str(t.value),
                ])?;
            }
        }
    }
    w.flush()?;
    trace.flush()?;
    Ok(())
}

fn fisher_with(session: &Session, forward: &dyn Forward) -> Result<()> {
    let exp = &session.experiment;
    let j = exp.component();
    let spec = exp.fisher();
    let spp = exp.config.spp;
    let mut w = csv::Writer::from_path(session.out_file("fisher.csv")?)?;
    w.write_record(["theta", "j", "noise", "total_fi", "mean_fi", "min_fi", "max_fi", "map"])?;
    for (i, theta) in exp.points.iter().enumerate() {
        let cached = Cached::new(forward);
        for (k, noise) in exp.noises().into_iter().enumerate() {
            let full = fi_map(&cached, theta, j, spec.xi, spec.rounds, noise, spp)?;
            let map = if spec.channel_mean { full.channel_mean() } else { full };
            let name = format!("fisher/fi_t{i:03}_n{k}.pfm");
            write_float_map(session.out_file(&name)?, map.width, map.height, map.channels, &map.data)?;
            write_float_map(
                session.out_file(format!("fisher/log_fi_t{i:03}_n{k}.pfm"))?,
                map.width,
                map.height,
                map.channels,
                &map.log_values(),
            )?;
            w.write_record([
                join(theta.values()),
                j.to_string(),
                noise.label(),
                format!("{:?}", total_fi(&map)),
                format!("{:?}", map.mean()),
                format!("{:?}", map.min()),
                format!("{:?}", map.max()),
                name,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn intervals_with(session: &Session, forward: &dyn Forward) -> Result<()> {
    let exp = &session.experiment;
    let j = exp.component();
    let cfg = &exp.config;
    let mut rows = Vec::new();
    for (i, theta) in exp.points.iter().enumerate() {
        let grid = exp.grid(theta)?;
        let cached = Cached::new(forward);
        for (k, noise) in exp.noises().into_iter().enumerate() {
            let (iv, hat) = interval(&cached, theta, &grid, noise, j, cfg.n_eff, &cfg.spp_schedule)?;
            write_lambda_trace_csv(session.out_file(format!("lambda_trace_t{i:03}_n{k}.csv"))?, &hat)?;
            rows.push(iv);
        }
    }
    write_intervals_csv(session.out_file("intervals.csv")?, &rows)
}

fn interval(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    grid: &crate::bounds::DeltaGrid,
    noise: NoiseModel,
    j: usize,
    n_eff: u32,
    schedule: &[u32],
) -> Result<(HcrInterval, crate::render_error::HcrHat)> {
    let direct = hcr_bound(forward, theta, grid, noise, j, n_eff)?;
    let hat = hcr_hat(forward, theta, grid, noise, j, schedule)?;
    Ok((hcr_interval(&direct, &hat.result)?, hat))
}

/// Renders every image `bounds`, `fisher` or `intervals` (as listed in the
/// config's `stack`) would request, and writes them with a manifest.
pub fn cmd_render(session: &Session) -> Result<()> {
    session.reject_stack("render")?;
    let exp = &session.experiment;
    let (w, h, c) = exp.shape;
    let planner = Planner::new(w, h, c);
    // The planning pass writes its (zero-valued) outputs to a scratch
    // directory that is discarded.
    let scratch = tempfile_dir(&session.out)?;
    let plan_session = Session {
        experiment: exp.clone(),
        out: scratch.clone(),
        seed: session.seed,
        from_stack: None,
    };
    let mut ops = exp.config.stack.clone();
    ops.dedup();
    let plan = |model: &dyn Forward| {
        ops.iter().try_for_each(|op| match op {
            StackOp::Bounds => bounds_with(&plan_session, model),
            StackOp::Fisher => fisher_with(&plan_session, model),
            StackOp::Intervals => intervals_with(&plan_session, model),
        })
    };
    let shared = session.shared_stream();
    let planned = match shared {
        Some(stream) => plan(&CommonRandomNumbers {
            inner: |t: &[f64], k: SampleKey| planner.evaluate(t, k),
            stream,
        }),
        None => plan(&planner),
    };
    fs::remove_dir_all(&scratch)?;
    planned?;

    let mut requests = planner.into_requests();
    requests.sort_by(|a, b| {
        (theta_key(&a.theta), a.key.spp, a.key.stream).cmp(&(theta_key(&b.theta), b.key.spp, b.key.stream))
    });
    // keys were already mapped to the shared stream while planning
    let forward = session.model()?;
    let j = exp.component();
    let mut rows = Vec::with_capacity(requests.len());
    for (idx, req) in requests.iter().enumerate() {
        let img = forward.evaluate(&req.theta, req.key)?;
        let img = if img.is_f32_exact() { img } else { img.to_f32_precision() };
        let rel = PathBuf::from(format!("images/r{idx:05}.pfm"));
        write_pfm(&img, session.out_file(&rel)?)?;
        rows.push(ManifestRow {
            path: rel,
            theta: req.theta.clone(),
            spp: req.key.spp,
            seed: render_seed(session.seed, req.key),
            role: role_of(exp, req.theta.as_slice(), req.key, shared, j),
        });
    }
    write_manifest(session.out_file("manifest.csv")?, &rows)
}

fn tempfile_dir(out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let mut k = 0u32;
    loop {
        let p = out.join(format!(".plan-{k}"));
        match fs::create_dir(&p) {
            Ok(()) => return Ok(p),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

fn role_of(exp: &Experiment, theta: &[f64], key: SampleKey, shared: Option<u64>, j: usize) -> Role {
    let on_sweep = |t: &[f64]| exp.points.iter().any(|p| p.values() == t);
    if key == SampleKey::for_theta(theta, key.spp) || Some(key.stream) == shared {
        return if on_sweep(theta) { Role::Primary } else { Role::Perturbed };
    }
    let nearest = exp
        .points
        .iter()
        .map(|p| p.values()[j])
        .min_by(|a, b| (a - theta[j]).abs().total_cmp(&(b - theta[j]).abs()))
        .unwrap_or(theta[j]);
    if theta[j] >= nearest {
        Role::GradientPlus
    } else {
        Role::GradientMinus
    }
}

/// `bounds.csv`: `theta,j,noise,hcr,cr,argmax_delta,flags`, plus the per-Δ
/// trace in `bounds_trace.csv`.
pub fn cmd_bounds(session: &Session) -> Result<()> {
    let forward = session.forward()?;
    bounds_with(session, forward.as_ref())
}

/// FI maps under `fisher/` and per-map totals in `fisher.csv`.
pub fn cmd_fisher(session: &Session) -> Result<()> {
    let forward = session.forward()?;
    fisher_with(session, forward.as_ref())
}

/// One matrix per (θ, noise): rows follow the first axis offsets, columns
/// the second.
pub fn cmd_viewgrid(session: &Session) -> Result<()> {
    session.reject_stack("viewgrid")?;
    let exp = &session.experiment;
    let (scene, view) = match (&exp.scene, &exp.config.viewgrid) {
        (Some(s), Some(v)) => (s, v),
        _ => {
            return Err(Error::Config {
                path: "viewgrid".into(),
                message: "`viewgrid` needs a scene and a `viewgrid` section".into(),
            })
        }
    };
    let fisher = exp.fisher();
    for (i, theta) in exp.points.iter().enumerate() {
        for (k, noise) in exp.noises().into_iter().enumerate() {
            let spec = ViewGridSpec {
                offsets: view.offsets.clone(),
                axes: view.axes,
                component: exp.component(),
                xi: fisher.xi,
                rounds: fisher.rounds,
                spp: exp.config.spp,
                noise,
                depth: exp.config.depth,
            };
            let grid = viewpoint_grid(scene, derive_seed(session.seed, &[i as u64, k as u64]), theta, &spec)?;
            let mut w = csv::Writer::from_path(session.out_file(format!("viewgrid_t{i:03}_n{k}.csv"))?)?;
            let mut header = vec!["offset".to_string()];
            header.extend(grid.offsets.iter().map(|o| format!("{o:?}")));
            w.write_record(&header)?;
            for (a, row) in grid.mean_fi.iter().enumerate() {
                let mut rec = vec![format!("{:?}", grid.offsets[a])];
                rec.extend(row.iter().map(|v| format!("{v:?}")));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// `intervals.csv` plus one λ̃ trace per (θ, noise).
pub fn cmd_intervals(session: &Session) -> Result<()> {
    let forward = session.forward()?;
    intervals_with(session, forward.as_ref())
}

/// Replicate renders at the first sweep point for each configured sample
/// count; writes the p_opt histogram and a one-row summary.
pub fn cmd_validate_variance(session: &Session) -> Result<()> {
    session.reject_stack("validate-variance")?;
    let exp = &session.experiment;
    let spec = exp.config.variance.clone().ok_or_else(|| Error::Config {
        path: "variance".into(),
        message: "`validate-variance` needs a `variance` section".into(),
    })?;
    let forward = session.live_forward()?;
    let theta = &exp.points[0];
    let renders = spec
        .spp
        .iter()
        .map(|&n| {
            let imgs = (0..spec.replicates)
                .map(|r| {
                    let key = SampleKey {
                        spp: n,
                        stream: derive_seed(session.seed, &[VARIANCE_TAG, r as u64]),
                    };
                    forward.evaluate(theta.values(), key)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((n, imgs))
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = variance_decay_fit(&renders, spec.draws, spec.l_max, session.seed)?;
    write_decay_histogram_csv(session.out_file("variance_decay.csv")?, &dist)?;
    let mut w = csv::Writer::from_path(session.out_file("variance_summary.csv")?)?;
    w.write_record(["draws", "median_p", "mean_p", "mode_p"])?;
    w.write_record([
        dist.fits.len().to_string(),
        format!("{:?}", dist.median()),
        format!("{:?}", dist.mean()),
        format!("{:?}", dist.mode()),
    ])?;
    w.flush()?;
    Ok(())
}

/// Table of bound interval against MLE mean-squared error and variance per
/// sweep point, under the first AWGN noise model. Values are converted to
/// cm and cm², so θ is taken to be in meters.
pub fn cmd_mle(session: &Session) -> Result<()> {
    session.reject_stack("mle")?;
    let exp = &session.experiment;
    let cfg = &exp.config;
    let spec = cfg.mle.clone().ok_or_else(|| Error::Config {
        path: "mle".into(),
        message: "`mle` needs an `mle` section".into(),
    })?;
    let noise = exp
        .noises()
        .into_iter()
        .find(|n| matches!(n, NoiseModel::Awgn { .. }))
        .ok_or_else(|| Error::Config {
            path: "noise".into(),
            message: "`mle` needs an awgn noise model".into(),
        })?;
    let forward = session.live_forward()?;
    let j = exp.component();
    let mut table = Vec::new();
    let mut runs = csv::Writer::from_path(session.out_file("mle_runs.csv")?)?;
    runs.write_record(["theta_star", "run", "seed", "init", "theta_hat", "iterations", "converged"])?;
    for (i, theta) in exp.points.iter().enumerate() {
        let mle_cfg = spec.config(theta, exp.fisher().xi);
        mle_cfg.validate(theta.space()).map_err(|e| Error::Config {
            path: "mle".into(),
            message: e.to_string(),
        })?;
        let report = run_trials(
            forward.as_ref(),
            theta,
            noise,
            &mle_cfg,
            spec.runs,
            derive_seed(session.seed, &[MLE_TAG, i as u64]),
            None,
        )?;
        let grid = exp.grid(theta)?;
        let cached = Cached::new(forward.as_ref());
        let (iv, _) = interval(&cached, theta, &grid, noise, j, cfg.n_eff, &cfg.spp_schedule)?;
        for (r, run) in report.runs.iter().enumerate() {
            runs.write_record([
                join(theta.values()),
                r.to_string(),
                run.seed.to_string(),
                join(&run.init),
                join(&run.theta_hat),
                run.iterations.to_string(),
                run.converged.to_string(),
            ])?;
        }
        table.push(TableRow {
            theta_star: theta.values()[j],
            hcr_lower: iv.lower,
            hcr_upper: iv.upper,
            mse: report.mse,
            var: report.var,
            diverged: report.diverged,
        });
    }
    runs.flush()?;
    write_table_csv(session.out_file("mle_table.csv")?, &table)
}
