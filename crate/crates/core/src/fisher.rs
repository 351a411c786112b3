//! Finite-difference image gradients and pixel-wise Fisher information.

use rayon::prelude::*;

use crate::bounds::NoiseModel;
use crate::error::{Error, Result};
use crate::forward::{Forward, SampleKey, SceneForward};
use crate::image::RadianceImage;
use crate::math::pairwise_sum;
use crate::render::rng::derive_seed;
use crate::scene::{ParameterPoint, SceneDescription};

pub const DEFAULT_FD_STEP: f64 = 0.01;
pub const DEFAULT_ROUNDS: usize = 16;
/// Offset inside the logarithm of exported maps.
pub const LOG_EPSILON: f64 = 1e-12;

const GRADIENT_TAG: u64 = 0x6772_6164;

/// ∂L/∂θ_j estimate; values may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub xi: f64,
    pub component: usize,
    pub rounds: usize,
}

impl GradientImage {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

/// Central-difference gradient averaged over `rounds` independent rounds.
///
/// Within a round the two sides L(θ ± ξ e_j) are evaluated under one sample
/// key, so a Monte-Carlo model uses the same random numbers on both sides and
/// most of the rendering noise cancels in the difference. Different rounds
/// use disjoint keys.
pub fn fd_gradient(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    j: usize,
    xi: f64,
    rounds: usize,
    spp: u32,
) -> Result<GradientImage> {
    if j >= theta.dim() {
        return Err(Error::InvalidArgument(format!("component {j} out of range")));
    }
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::InvalidArgument(format!("step ξ must be positive, got {xi}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be ≥ 1".into()));
    }
    let mut d = vec![0.0; theta.dim()];
    d[j] = xi;
    let plus = theta.shifted(&d)?;
    d[j] = -xi;
    let minus = theta.shifted(&d)?;
    let span = plus.values()[j] - minus.values()[j];
    let root = SampleKey::for_theta(theta.values(), spp);

    let diffs: Vec<((usize, usize, usize), Vec<f64>)> = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let key = root.fork(&[GRADIENT_TAG, j as u64, r as u64]);
            let hi = forward
                .evaluate(plus.values(), key)
                .map_err(|e| e.at(theta.values(), &[xi], spp))?;
            let lo = forward
                .evaluate(minus.values(), key)
                .map_err(|e| e.at(theta.values(), &[-xi], spp))?;
            hi.ensure_same_shape(&lo)?;
            let diff = hi
                .data()
                .iter()
                .zip(lo.data())
                .map(|(a, b)| (a - b) / span)
                .collect();
            Ok((hi.shape(), diff))
        })
        .collect::<Result<_>>()?;

    let (w, h, c) = diffs[0].0;
    if let Some((s, _)) = diffs.iter().find(|(s, _)| *s != (w, h, c)) {
        return Err(Error::DimensionMismatch {
            expected: (w, h, c),
            found: *s,
        });
    }
    let mut data = vec![0.0; w * h * c];
    for (_, round) in &diffs {
        for (acc, v) in data.iter_mut().zip(round) {
            *acc += v;
        }
    }
    let k = rounds as f64;
    data.iter_mut().for_each(|v| *v /= k);
    Ok(GradientImage {
        width: w,
        height: h,
        channels: c,
        data,
        xi,
        component: j,
        rounds,
    })
}

/// Per-pixel, per-channel Fisher information I_ω(θ_j).
#[derive(Debug, Clone, PartialEq)]
pub struct FiMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub noise: NoiseModel,
    pub component: usize,
    pub theta: Vec<f64>,
}

impl FiMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        noise: NoiseModel,
        component: usize,
        theta: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Invariant("FI map length does not match its shape".into()));
        }
        if data.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Invariant("FI values must be finite and ≥ 0".into()));
        }
        Ok(FiMap {
            width,
            height,
            channels,
            data,
            noise,
            component,
            theta,
        })
    }

    /// Single-channel map holding the mean over channels at each pixel.
    pub fn channel_mean(&self) -> FiMap {
        let c = self.channels;
        let data = self
            .data
            .chunks(c)
            .map(|px| px.iter().sum::<f64>() / c as f64)
            .collect();
        FiMap {
            channels: 1,
            data,
            ..self.clone()
        }
    }

    /// Mean over all entries.
    pub fn mean(&self) -> f64 {
        total_fi(self) / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// ln(I + ε) for display on a log scale.
    pub fn log_values(&self) -> Vec<f64> {
        self.data.iter().map(|v| (v + LOG_EPSILON).ln()).collect()
    }
}

pub fn pixelwise_fi(
    grad: &GradientImage,
    image: &RadianceImage,
    noise: NoiseModel,
) -> Result<FiMap> {
    noise.validate()?;
    if grad.shape() != image.shape() {
        return Err(Error::DimensionMismatch {
            expected: image.shape(),
            found: grad.shape(),
        });
    }
    let mut data = Vec::with_capacity(grad.data.len());
    for (i, (g, l)) in grad.data.iter().zip(image.data()).enumerate() {
        let v = match noise {
            _ if *g == 0.0 => 0.0,
            NoiseModel::Awgn { sigma } => g * g / (sigma * sigma),
            NoiseModel::Poisson if *l > 0.0 => g * g / l,
            NoiseModel::Poisson => {
                let (x, y, channel) = image.coords(i);
                return Err(Error::ZeroRate { x, y, channel });
            }
        };
        data.push(v);
    }
    FiMap::new(
        grad.width,
        grad.height,
        grad.channels,
        data,
        noise,
        grad.component,
        image.meta.theta.clone(),
    )
}

pub fn total_fi(map: &FiMap) -> f64 {
    pairwise_sum(&map.data)
}

/// Gradient plus base image at θ*, then the FI map.
pub fn fi_map(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    j: usize,
    xi: f64,
    rounds: usize,
    noise: NoiseModel,
    spp: u32,
) -> Result<FiMap> {
    let grad = fd_gradient(forward, theta, j, xi, rounds, spp)?;
    let t = theta.values();
    let mut base = forward
        .evaluate(t, SampleKey::for_theta(t, spp))
        .map_err(|e| e.at(t, &[], spp))?;
    base.meta.theta = t.to_vec();
    pixelwise_fi(&grad, &base, noise).map_err(|e| e.at(t, &[], spp))
}

/// Settings for a grid of displaced cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGridSpec {
    /// Camera offsets (m), applied along both axes.
    pub offsets: Vec<f64>,
    /// World axes (0 = x, 1 = y, 2 = z) along which the camera moves.
    pub axes: [usize; 2],
    pub component: usize,
    pub xi: f64,
    pub rounds: usize,
    pub spp: u32,
    pub noise: NoiseModel,
    /// Path depth of every view's renders.
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGrid {
    pub offsets: Vec<f64>,
    pub axes: [usize; 2],
    /// `mean_fi[a][b]`: camera displaced by offsets[a] along axes[0] and
    /// offsets[b] along axes[1].
    pub mean_fi: Vec<Vec<f64>>,
}

/// Mean FI for every displaced camera; each camera keeps the scene's
/// look-at point.
pub fn viewpoint_grid(
    scene: &SceneDescription,
    base_seed: u64,
    theta: &ParameterPoint,
    spec: &ViewGridSpec,
) -> Result<ViewGrid> {
    if spec.offsets.is_empty() {
        return Err(Error::InvalidArgument("view grid needs at least one offset".into()));
    }
    if spec.axes.iter().any(|a| *a > 2) || spec.axes[0] == spec.axes[1] {
        return Err(Error::InvalidArgument(
            "view grid axes must be two distinct world axes".into(),
        ));
    }
    let g = spec.offsets.len();
    let mut views = Vec::with_capacity(g * g);
    for a in 0..g {
        for b in 0..g {
            let mut s = scene.clone();
            s.camera.position[spec.axes[0]] += spec.offsets[a];
            s.camera.position[spec.axes[1]] += spec.offsets[b];
            s.validate().map_err(|e| {
                Error::InvalidArgument(format!(
                    "view ({}, {}): {e}",
                    spec.offsets[a], spec.offsets[b]
                ))
            })?;
            views.push((a, b, s));
        }
    }
    let means: Vec<f64> = views
        .into_par_iter()
        .map(|(a, b, s)| {
            let mut fwd = SceneForward::new(s, derive_seed(base_seed, &[a as u64, b as u64]));
            fwd.depth = spec.depth;
            let map = fi_map(&fwd, theta, spec.component, spec.xi, spec.rounds, spec.noise, spec.spp)?;
            Ok(map.mean())
        })
        .collect::<Result<_>>()?;
    Ok(ViewGrid {
        offsets: spec.offsets.clone(),
        axes: spec.axes,
        mean_fi: means.chunks(g).map(|r| r.to_vec()).collect(),
    })
}
