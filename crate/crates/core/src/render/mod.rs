//! Unbiased Monte-Carlo path tracer for depth-truncated Lambertian transport.
//!
//! Ground truth is the depth-D truncation of the rendering equation: every
//! light path has at most D segments between the camera and an emitter.
//! Paths stop deterministically at depth D (no Russian roulette). Emitters
//! seen directly by camera rays contribute their radiance; after the first
//! vertex, emitter light is gathered only through next-event estimation, and
//! bounce rays that hit an emitter terminate. Escaping rays pick up the
//! background radiance, which is never light-sampled.

mod geometry;
pub mod rng;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ImageMeta, RadianceImage};
use crate::math::Vec3;
use crate::scene::{ParameterPoint, SceneDescription, CHANNELS};

pub use geometry::{Camera, Geometry, Hit, Owner, Ray};
use rng::{derive_seed, SampleStream};

pub const DEFAULT_DEPTH: u32 = 4;
pub const DEFAULT_TILE: usize = 64;

const SURFACE_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderConfig {
    /// Samples per pixel, N.
    pub spp: u32,
    pub seed: u64,
    /// Maximum camera-to-light segment count, D.
    pub depth: u32,
    /// Pixels per parallel work item.
    pub tile: usize,
}

impl RenderConfig {
    pub fn new(spp: u32, seed: u64) -> Self {
        RenderConfig {
            spp,
            seed,
            depth: DEFAULT_DEPTH,
            tile: DEFAULT_TILE,
        }
    }

    pub fn with_depth(mut self, depth: u32) -> Self {
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 {
            return Err(Error::InvalidArgument("spp must be ≥ 1".into()));
        }
        if self.depth == 0 {
            return Err(Error::InvalidArgument("depth must be ≥ 1".into()));
        }
        if self.tile == 0 {
            return Err(Error::InvalidArgument("tile size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Light-sampling table: emitters chosen in proportion to area × mean radiance.
struct LightTable {
    cdf: Vec<f64>,
    total: f64,
}

impl LightTable {
    fn new(geo: &Geometry) -> Self {
        let mut acc = 0.0;
        let cdf = geo
            .emitters
            .iter()
            .map(|e| {
                acc += e.area * (e.radiance.iter().sum::<f64>() / 3.0);
                acc
            })
            .collect();
        LightTable { cdf, total: acc }
    }

    fn pick(&self, u: f64) -> (usize, f64) {
        let target = u * self.total;
        let i = self
            .cdf
            .iter()
            .position(|c| target < *c)
            .unwrap_or(self.cdf.len() - 1);
        let lo = if i == 0 { 0.0 } else { self.cdf[i - 1] };
        (i, (self.cdf[i] - lo) / self.total)
    }
}

struct Tracer<'a> {
    geo: &'a Geometry,
    lights: LightTable,
    background: [f64; 3],
    depth: u32,
}

/// Orthonormal basis around a unit normal (Duff et al. 2017).
fn basis(n: Vec3) -> (Vec3, Vec3) {
    let sign = 1f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    (
        Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        Vec3::new(b, sign + n.y * n.y * a, -n.y),
    )
}

fn cosine_sample(n: Vec3, u1: f64, u2: f64) -> Vec3 {
    let (t, b) = basis(n);
    let r = u1.sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()).normalized()
}

impl Tracer<'_> {
    fn direct_light(&self, p: Vec3, n: Vec3, rng: &mut SampleStream) -> [f64; 3] {
        if self.lights.total <= 0.0 {
            // keep the stream layout independent of the light configuration
            rng.next_f64();
            rng.next_f64();
            rng.next_f64();
            return [0.0; 3];
        }
        let (i, p_pick) = self.lights.pick(rng.next_f64());
        let (s, t) = (rng.next_f64(), rng.next_f64());
        let e = &self.geo.emitters[i];
        let q = e.corner + e.edge_u * s + e.edge_v * t;
        let to = q - p;
        let dist2 = to.dot(to);
        let dist = dist2.sqrt();
        let wi = to / dist;
        let cos_s = n.dot(wi);
        let cos_l = -e.normal.dot(wi);
        if cos_s <= 0.0 || cos_l <= 0.0 {
            return [0.0; 3];
        }
        let shadow = Ray {
            origin: p + n * SURFACE_OFFSET,
            dir: wi,
        };
        if self.geo.occluded(&shadow, dist * (1.0 - 1e-7) - SURFACE_OFFSET) {
            return [0.0; 3];
        }
        // Lambertian f = albedo/π is applied by the caller; pdf_area = p_pick / area
        let g = cos_s * cos_l / dist2 * e.area / (p_pick * std::f64::consts::PI);
        [e.radiance[0] * g, e.radiance[1] * g, e.radiance[2] * g]
    }

    fn trace(&self, primary: Ray, rng: &mut SampleStream) -> [f64; 3] {
        let mut hit = match self.geo.intersect(&primary, f64::INFINITY) {
            None => return self.background,
            Some(h) => h,
        };
        if let Owner::Emitter(i) = hit.owner {
            let e = &self.geo.emitters[i];
            return if e.normal.dot(primary.dir) < 0.0 {
                e.radiance
            } else {
                [0.0; 3]
            };
        }
        let mut radiance = [0.0; 3];
        let mut throughput = [1.0; 3];
        let mut dir = primary.dir;
        // vertex k is reached through k segments; both the light-sample and the
        // bounce segment leaving it are segment k + 1
        for _k in 1..self.depth {
            let Owner::Surface(si) = hit.owner else { break };
            let albedo = self.geo.albedo[si];
            for c in 0..3 {
                throughput[c] *= albedo[c];
            }
            if throughput.iter().all(|t| *t == 0.0) {
                break;
            }
            let n = if hit.normal.dot(dir) < 0.0 {
                hit.normal
            } else {
                -hit.normal
            };
            let direct = self.direct_light(hit.point, n, rng);
            for c in 0..3 {
                radiance[c] += throughput[c] * direct[c];
            }
            dir = cosine_sample(n, rng.next_f64(), rng.next_f64());
            let ray = Ray {
                origin: hit.point + n * SURFACE_OFFSET,
                dir,
            };
            match self.geo.intersect(&ray, f64::INFINITY) {
                None => {
                    for c in 0..3 {
                        radiance[c] += throughput[c] * self.background[c];
                    }
                    break;
                }
                Some(h) if matches!(h.owner, Owner::Emitter(_)) => break,
                Some(h) => hit = h,
            }
        }
        radiance
    }
}

/// Renders `scene` with `cfg.spp` independent path samples per pixel.
///
/// The result is a pure function of `(scene, cfg)`: each pixel sample draws
/// from its own counter-based stream keyed on (seed, pixel, sample), and
/// pixel means are rounded to `f32` precision.
pub fn render(scene: &SceneDescription, cfg: &RenderConfig) -> Result<RadianceImage> {
    cfg.validate()?;
    let geo = Geometry::build(scene);
    let tracer = Tracer {
        lights: LightTable::new(&geo),
        geo: &geo,
        background: scene.background,
        depth: cfg.depth,
    };
    let camera = Camera::new(&scene.camera);
    let (w, h) = (scene.camera.width, scene.camera.height);
    let mut data = vec![0.0f64; w * h * CHANNELS];
    let inv_n = 1.0 / cfg.spp as f64;

    let tile_results: Vec<Result<()>> = data
        .par_chunks_mut(cfg.tile * CHANNELS)
        .enumerate()
        .map(|(tile, out)| {
            let first = tile * cfg.tile;
            for (k, px_out) in out.chunks_mut(CHANNELS).enumerate() {
                let pixel = first + k;
                let (x, y) = (pixel % w, pixel / w);
                let mut sum = [0.0f64; 3];
                for s in 0..cfg.spp {
                    let mut rng = SampleStream::new(cfg.seed, pixel as u64, s as u64);
                    let ray = camera.ray(x, y, rng.next_f64(), rng.next_f64());
                    let l = tracer.trace(ray, &mut rng);
                    if !l.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFiniteSample { x, y });
                    }
                    for c in 0..3 {
                        sum[c] += l[c];
                    }
                }
                for c in 0..3 {
                    let mean = sum[c] * inv_n;
                    if !mean.is_finite() {
                        return Err(Error::NonFiniteSample { x, y });
                    }
                    px_out[c] = (mean as f32) as f64;
                }
            }
            Ok(())
        })
        .collect();
    tile_results.into_iter().collect::<Result<Vec<()>>>()?;

    Ok(RadianceImage::from_raw_unchecked(
        w,
        h,
        CHANNELS,
        data,
        ImageMeta {
            spp: cfg.spp,
            seed: cfg.seed,
            theta: Vec::new(),
            depth: cfg.depth,
        },
    ))
}

/// Renders every (θ, cfg) pair, θ-major. Image (i, k) uses the seed derived
/// from (cfg_k.seed, i, k), so all streams are disjoint.
pub fn render_stack(
    scene: &SceneDescription,
    thetas: &[ParameterPoint],
    cfgs: &[RenderConfig],
) -> Result<Vec<RadianceImage>> {
    for t in thetas {
        t.check_bounds()?;
    }
    let mut out = Vec::with_capacity(thetas.len() * cfgs.len());
    for (i, theta) in thetas.iter().enumerate() {
        let bound = scene.apply_parameters(theta)?;
        for (k, cfg) in cfgs.iter().enumerate() {
            let derived = RenderConfig {
                seed: stack_seed(cfg.seed, i, k),
                ..*cfg
            };
            let mut img = render(&bound, &derived)
                .map_err(|e| e.at(theta.values(), &[], cfg.spp))?;
            img.meta.theta = theta.values().to_vec();
            out.push(img);
        }
    }
    Ok(out)
}

pub fn stack_seed(base: u64, theta_index: usize, cfg_index: usize) -> u64 {
    derive_seed(base, &[theta_index as u64, cfg_index as u64])
}
