//! Noisy observations and the maximum-likelihood harness.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::bounds::{HcrValue, NoiseModel};
use crate::error::{Error, Result};
use crate::forward::{Forward, SampleKey};
use crate::image::RadianceImage;
use crate::math::pairwise_sum;
use crate::render::rng::derive_seed;
use crate::render_error::value_str;
use crate::scene::{ParameterPoint, ParameterSpace};

/// Y = L + ε (AWGN) or Y ~ Poisson(L), per pixel and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyObservation {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub noise: NoiseModel,
    pub seed: u64,
    pub theta: Vec<f64>,
}

impl NoisyObservation {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

pub fn synthesize_noisy(
    image: &RadianceImage,
    noise: NoiseModel,
    seed: u64,
) -> Result<NoisyObservation> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match noise {
        NoiseModel::Awgn { sigma } => {
            let n = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            image.data().iter().map(|l| l + n.sample(&mut rng)).collect()
        }
        NoiseModel::Poisson => image
            .data()
            .iter()
            .map(|&l| {
                if l < 0.0 || !l.is_finite() {
                    Err(Error::InvalidArgument(format!("negative Poisson rate {l}")))
                } else if l == 0.0 {
                    Ok(0.0)
                } else {
                    let p = Poisson::new(l).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                    Ok(p.sample(&mut rng))
                }
            })
            .collect::<Result<_>>()?,
    };
    Ok(NoisyObservation {
        width: image.width(),
        height: image.height(),
        channels: image.channels(),
        data,
        noise,
        seed,
        theta: image.meta.theta.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleConfig {
    /// Initial θ drawn uniformly from [init_lo, init_hi].
    pub init_lo: Vec<f64>,
    pub init_hi: Vec<f64>,
    pub step: f64,
    /// Step size at iteration t is step · step_decay^t.
    pub step_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once, for every coordinate, both the last step and the secant
    /// estimate of the distance to the stationary point fall below this.
    pub tolerance: f64,
    pub fd_step: f64,
    pub coarse_spp: u32,
    pub fine_spp: u32,
    pub switch_iteration: usize,
    /// Sample count of the render the observation is synthesized from.
    pub observation_spp: u32,
}

impl MleConfig {
    pub fn new(init_lo: Vec<f64>, init_hi: Vec<f64>) -> Self {
        MleConfig {
            init_lo,
            init_hi,
            step: 0.05,
            step_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 200,
            tolerance: 1e-3,
            fd_step: 0.01,
            coarse_spp: 512,
            fine_spp: 1024,
            switch_iteration: 50,
            observation_spp: 4096,
        }
    }

    pub fn validate(&self, space: &ParameterSpace) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("MLE config: {m}")));
        let j = space.dim();
        if self.init_lo.len() != j || self.init_hi.len() != j {
            return bad("init range must match the parameter dimension");
        }
        for k in 0..j {
            let (lo, hi) = (self.init_lo[k], self.init_hi[k]);
            if !(lo < hi) || lo < space.lower[k] || hi > space.upper[k] {
                return bad("init range must satisfy lower ≤ lo < hi ≤ upper");
            }
        }
        let positive = [self.step, self.epsilon, self.tolerance, self.fd_step];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("step, epsilon, tolerance and fd_step must be positive");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return bad("step_decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment decays must lie in [0, 1)");
        }
        if self.max_iterations == 0 || self.coarse_spp == 0 || self.fine_spp == 0 {
            return bad("iteration cap and sample counts must be ≥ 1");
        }
        if self.observation_spp == 0 {
            return bad("observation_spp must be ≥ 1");
        }
        Ok(())
    }

    fn spp_at(&self, iteration: usize) -> u32 {
        if iteration < self.switch_iteration {
            self.coarse_spp
        } else {
            self.fine_spp
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleRun {
    pub seed: u64,
    pub init: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// (θ_t, loss estimate at θ_t) for each iteration.
    pub trajectory: Vec<(Vec<f64>, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

fn loss(y: &NoisyObservation, img: &RadianceImage) -> Result<f64> {
    if img.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            expected: y.shape(),
            found: img.shape(),
        });
    }
    let sq: Vec<f64> = y
        .data
        .iter()
        .zip(img.data())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(pairwise_sum(&sq))
}

/// Minimizes Σ (Y − L_θ)² with Adam on central-difference gradients.
///
/// Each iteration renders L(θ ± ξ e_j) under a fresh key derived from
/// (seed, iteration, j); both sides of one difference share that key. The
/// iterate is projected onto Θ shrunk by ξ so the stencil stays inside.
pub fn mle_gaussian(
    y: &NoisyObservation,
    forward: &dyn Forward,
    space: &ParameterSpace,
    cfg: &MleConfig,
    seed: u64,
) -> Result<MleRun> {
    if !matches!(y.noise, NoiseModel::Awgn { .. }) {
        return Err(Error::InvalidArgument(
            "maximum likelihood is implemented for AWGN observations only".into(),
        ));
    }
    cfg.validate(space)?;
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x1417]));
    let mut theta: Vec<f64> = (0..dim)
        .map(|k| rng.random_range(cfg.init_lo[k]..=cfg.init_hi[k]))
        .collect();
    space.project(&mut theta, cfg.fd_step);
    let init = theta.clone();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut trajectory = Vec::new();
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for t in 0..cfg.max_iterations {
        iterations = t + 1;
        let spp = cfg.spp_at(t);
        let mut grad = vec![0.0; dim];
        let mut loss_sum = 0.0;
        for j in 0..dim {
            let key = SampleKey {
                spp,
                stream: derive_seed(seed, &[t as u64, j as u64]),
            };
            let mut hi = theta.clone();
            hi[j] += cfg.fd_step;
            let mut lo = theta.clone();
            lo[j] -= cfg.fd_step;
            let lp = loss(y, &forward.evaluate(&hi, key).map_err(|e| e.at(&theta, &[], spp))?)?;
            let lm = loss(y, &forward.evaluate(&lo, key).map_err(|e| e.at(&theta, &[], spp))?)?;
            grad[j] = (lp - lm) / (hi[j] - lo[j]);
            loss_sum += 0.5 * (lp + lm);
        }
        let current_loss = loss_sum / dim as f64;
        if !current_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged(t));
        }
        trajectory.push((theta.clone(), current_loss));

        let lr = cfg.step * cfg.step_decay.powi(t as i32);
        let b1t = 1.0 - cfg.beta1.powi(t as i32 + 1);
        let b2t = 1.0 - cfg.beta2.powi(t as i32 + 1);
        let mut next = theta.clone();
        for k in 0..dim {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            next[k] -= lr * (m[k] / b1t) / ((v[k] / b2t).sqrt() + cfg.epsilon);
        }
        space.project(&mut next, cfg.fd_step);
        let moved = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Adam's normalized steps shrink well before the iterate arrives, so
        // a small step alone is not evidence of convergence
        let remaining = match &previous {
            Some((pt, pg)) => (0..dim)
                .map(|k| {
                    let dg = grad[k] - pg[k];
                    let dt = theta[k] - pt[k];
                    if grad[k] == 0.0 {
                        0.0
                    } else if dg == 0.0 || dt == 0.0 {
                        f64::INFINITY
                    } else {
                        (grad[k] * dt / dg).abs()
                    }
                })
                .fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        previous = Some((theta, grad));
        theta = next;
        if moved < cfg.tolerance && remaining < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MleRun {
        seed,
        init,
        theta_hat: theta,
        trajectory,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub theta_star: Vec<f64>,
    /// Runs that finished, in run order.
    pub runs: Vec<MleRun>,
    pub diverged: usize,
    /// mean ‖θ̂ − θ*‖².
    pub mse: f64,
    /// mean ‖θ̂ − mean θ̂‖².
    pub var: f64,
    /// mean θ̂ − θ*.
    pub bias: Vec<f64>,
}

/// `runs` independent noise realizations and initializations at θ*.
///
/// The observation is synthesized from L at θ* rendered with
/// `cfg.observation_spp`. Run r uses seed derive(seed, r) unless `seeds`
/// overrides it; runs that diverge are counted and left out of the
/// aggregates.
pub fn run_trials(
    forward: &dyn Forward,
    theta_star: &ParameterPoint,
    noise: NoiseModel,
    cfg: &MleConfig,
    runs: usize,
    seed: u64,
    seeds: Option<&[u64]>,
) -> Result<TrialReport> {
    if runs < 2 {
        return Err(Error::InvalidArgument("need ≥ 2 runs".into()));
    }
    if let Some(s) = seeds {
        if s.len() != runs {
            return Err(Error::InvalidArgument("one seed per run required".into()));
        }
    }
    theta_star.check_bounds()?;
    cfg.validate(theta_star.space())?;
    let t = theta_star.values();
    let clean = forward
        .evaluate(t, SampleKey::for_theta(t, cfg.observation_spp))
        .map_err(|e| e.at(t, &[], cfg.observation_spp))?;
    let outcomes: Vec<Option<MleRun>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let run_seed = seeds.map_or_else(|| derive_seed(seed, &[r as u64]), |s| s[r]);
            let y = synthesize_noisy(&clean, noise, derive_seed(run_seed, &[0x6e6f]))?;
            match mle_gaussian(&y, forward, theta_star.space(), cfg, run_seed) {
                Ok(run) => Ok(Some(run)),
                Err(Error::Diverged(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let diverged = outcomes.iter().filter(|o| o.is_none()).count();
    let runs: Vec<MleRun> = outcomes.into_iter().flatten().collect();
    let (mse, var, bias) = aggregate(t, &runs);
    Ok(TrialReport {
        theta_star: t.to_vec(),
        runs,
        diverged,
        mse,
        var,
        bias,
    })
}

fn aggregate(theta_star: &[f64], runs: &[MleRun]) -> (f64, f64, Vec<f64>) {
    let dim = theta_star.len();
    if runs.is_empty() {
        return (f64::NAN, f64::NAN, vec![f64::NAN; dim]);
    }
    let k = runs.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| pairwise_sum(&runs.iter().map(|r| r.theta_hat[j]).collect::<Vec<_>>()) / k)
        .collect();
    let sq = |centre: &[f64]| {
        pairwise_sum(
            &runs
                .iter()
                .map(|r| {
                    r.theta_hat
                        .iter()
                        .zip(centre)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .collect::<Vec<_>>(),
        ) / k
    };
    let mse = sq(theta_star);
    let var = sq(&mean);
    let bias = mean.iter().zip(theta_star).map(|(a, b)| a - b).collect();
    (mse, var, bias)
}

/// One row of the bound-versus-estimator comparison table, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub theta_star: f64,
    pub hcr_lower: HcrValue,
    pub hcr_upper: HcrValue,
    pub mse: f64,
    pub var: f64,
    pub diverged: usize,
}

pub const TABLE_HEADER: [&str; 6] = [
    "theta_star_cm",
    "hcr_lower_cm2",
    "hcr_upper_cm2",
    "mse_cm2",
    "var_cm2",
    "diverged_runs",
];

/// Writes rows with θ converted from m to cm and variances from m² to cm².
pub fn write_table_csv(path: impl AsRef<Path>, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TABLE_HEADER)?;
    let cm2 = |v: HcrValue| match v {
        HcrValue::Finite(x) => HcrValue::Finite(x * 1e4),
        u => u,
    };
    for r in rows {
        w.write_record([
            format!("{:?}", r.theta_star * 100.0),
            value_str(cm2(r.hcr_lower)),
            value_str(cm2(r.hcr_upper)),
            format!("{:?}", r.mse * 1e4),
            format!("{:?}", r.var * 1e4),
            r.diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
