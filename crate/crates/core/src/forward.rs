//! Forward models θ ↦ L_θ.
//!
//! Every evaluation is addressed by a [`SampleKey`]: the samples-per-pixel
//! count and a stream identifier. Deterministic models ignore the key;
//! Monte-Carlo models derive their render seed from it, so the same
//! (θ, key) always yields the same image whether rendered now or loaded from
//! a persisted stack.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::math::theta_key;
use crate::render::rng::derive_seed;
use crate::render::{render, RenderConfig};
use crate::scene::{ParameterPoint, SceneDescription};

const THETA_TAG: u64 = 0x7468_6574_61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleKey {
    pub spp: u32,
    pub stream: u64,
}

impl SampleKey {
    /// Key whose stream is a hash of the bit pattern of θ.
    pub fn for_theta(theta: &[f64], spp: u32) -> Self {
        SampleKey {
            spp,
            stream: derive_seed(THETA_TAG, &theta_key(theta)),
        }
    }

    /// A sub-stream of this key, e.g. one finite-difference round.
    pub fn fork(self, parts: &[u64]) -> Self {
        SampleKey {
            spp: self.spp,
            stream: derive_seed(self.stream, parts),
        }
    }
}

pub trait Forward: Sync {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage>;
}

impl<F> Forward for F
where
    F: Fn(&[f64], SampleKey) -> Result<RadianceImage> + Sync,
{
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        self(theta, key)
    }
}

impl Forward for Box<dyn Forward> {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        (**self).evaluate(theta, key)
    }
}

/// Noise-free model given by a closure θ ↦ image; the sample key is ignored.
pub struct Analytic<F>(pub F);

impl<F> Forward for Analytic<F>
where
    F: Fn(&[f64]) -> Result<RadianceImage> + Sync,
{
    fn evaluate(&self, theta: &[f64], _key: SampleKey) -> Result<RadianceImage> {
        let mut img = (self.0)(theta)?;
        img.meta.theta = theta.to_vec();
        Ok(img)
    }
}

/// Every pixel and channel equals θ₀.
pub fn constant_model(
    pixels: usize,
    channels: usize,
) -> Analytic<impl Fn(&[f64]) -> Result<RadianceImage> + Sync> {
    Analytic(move |theta: &[f64]| RadianceImage::filled(pixels, 1, channels, theta[0]))
}

/// Seed used for a render addressed by `key` under base seed `base`.
pub fn render_seed(base: u64, key: SampleKey) -> u64 {
    derive_seed(base, &[key.stream, key.spp as u64])
}

/// The built-in path tracer applied to a parameterized scene.
#[derive(Debug, Clone)]
pub struct SceneForward {
    pub scene: SceneDescription,
    pub base_seed: u64,
    pub depth: u32,
}

impl SceneForward {
    pub fn new(scene: SceneDescription, base_seed: u64) -> Self {
        SceneForward {
            scene,
            base_seed,
            depth: crate::render::DEFAULT_DEPTH,
        }
    }

    pub fn config(&self, key: SampleKey) -> RenderConfig {
        RenderConfig::new(key.spp, render_seed(self.base_seed, key)).with_depth(self.depth)
    }
}

impl Forward for SceneForward {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        let space = self.scene.space()?.clone();
        let point = ParameterPoint::new(theta.to_vec(), space)?;
        let bound = self.scene.apply_parameters(&point)?;
        let mut img = render(&bound, &self.config(key)).map_err(|e| e.at(theta, &[], key.spp))?;
        img.meta.theta = theta.to_vec();
        Ok(img)
    }
}

type StackKey = (Vec<u64>, u32, u64);

/// Pre-rendered images looked up by (θ, N, seed), using the same seed
/// derivation as [`SceneForward`].
#[derive(Debug, Clone, Default)]
pub struct StackForward {
    base_seed: u64,
    images: HashMap<StackKey, RadianceImage>,
}

impl StackForward {
    pub fn new(base_seed: u64) -> Self {
        StackForward {
            base_seed,
            images: HashMap::new(),
        }
    }

    /// Adds an image; its `meta` supplies θ, N and seed.
    pub fn insert(&mut self, image: RadianceImage) -> Result<()> {
        let k = (theta_key(&image.meta.theta), image.meta.spp, image.meta.seed);
        if self.images.contains_key(&k) {
            return Err(Error::Manifest(format!(
                "duplicate image for θ={:?}, N={}, seed={}",
                image.meta.theta, image.meta.spp, image.meta.seed
            )));
        }
        self.images.insert(k, image);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl Forward for StackForward {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        let seed = render_seed(self.base_seed, key);
        self.images
            .get(&(theta_key(theta), key.spp, seed))
            .cloned()
            .ok_or_else(|| {
                Error::Manifest(format!(
                    "stack has no image for θ={theta:?}, N={}, seed={seed}",
                    key.spp
                ))
            })
    }
}

/// Evaluates every θ under one random stream per sample count, so renders
/// at nearby θ share their sample paths and most rendering noise cancels in
/// image differences. Only the default per-θ keys are replaced; keys an
/// operation forked for itself (such as gradient rounds) pass through.
pub struct CommonRandomNumbers<F> {
    pub inner: F,
    pub stream: u64,
}

impl<F: Forward> Forward for CommonRandomNumbers<F> {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        let shared = SampleKey {
            spp: key.spp,
            stream: self.stream,
        };
        let key = if key == SampleKey::for_theta(theta, key.spp) {
            shared
        } else {
            key
        };
        self.inner.evaluate(theta, key)
    }
}

/// Memoizes another model by (θ, key).
pub struct Cached<'a> {
    inner: &'a dyn Forward,
    memo: Mutex<HashMap<(Vec<u64>, SampleKey), RadianceImage>>,
}

impl<'a> Cached<'a> {
    pub fn new(inner: &'a dyn Forward) -> Self {
        Cached {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }
}

impl Forward for Cached<'_> {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        let k = (theta_key(theta), key);
        if let Some(img) = self.memo.lock().unwrap().get(&k) {
            return Ok(img.clone());
        }
        let img = self.inner.evaluate(theta, key)?;
        self.memo.lock().unwrap().insert(k, img.clone());
        Ok(img)
    }
}

/// A request made by an operation: which θ it needs, under which key.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub theta: Vec<f64>,
    pub key: SampleKey,
}

/// Stand-in model that records requests and returns zero images of a fixed
/// shape. Running an operation against it yields exactly the set of renders
/// that operation will ask for, since no operation chooses its evaluation
/// points from image values.
pub struct Planner {
    shape: (usize, usize, usize),
    seen: Mutex<(Vec<Request>, std::collections::HashSet<(Vec<u64>, SampleKey)>)>,
}

impl Planner {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Planner {
            shape: (width, height, channels),
            seen: Mutex::new(Default::default()),
        }
    }

    /// Distinct requests in first-seen order.
    pub fn into_requests(self) -> Vec<Request> {
        self.seen.into_inner().unwrap().0
    }
}

impl Forward for Planner {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        let mut g = self.seen.lock().unwrap();
        if g.1.insert((theta_key(theta), key)) {
            g.0.push(Request {
                theta: theta.to_vec(),
                key,
            });
        }
        let (w, h, c) = self.shape;
        let mut img = RadianceImage::filled(w, h, c, 0.0)?;
        img.meta.theta = theta.to_vec();
        img.meta.spp = key.spp;
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{corridor_fixture, parse_scene};

    fn tiny_corridor() -> SceneDescription {
        let mut s = parse_scene(corridor_fixture()).unwrap();
        s.camera.width = 8;
        s.camera.height = 6;
        s
    }

    #[test]
    fn keys_depend_on_theta_bits() {
        let a = SampleKey::for_theta(&[0.1], 4);
        assert_eq!(a, SampleKey::for_theta(&[0.1], 4));
        assert_ne!(a, SampleKey::for_theta(&[0.1 + 1e-16], 4));
        assert_ne!(a.fork(&[0]), a.fork(&[1]));
    }

    #[test]
    fn closures_are_models() {
        let f = |t: &[f64], _k: SampleKey| RadianceImage::filled(1, 1, 1, t[0] * 2.0);
        let img = f.evaluate(&[3.0], SampleKey::for_theta(&[3.0], 1)).unwrap();
        assert_eq!(img.data(), &[6.0]);
        let c = constant_model(100, 1);
        let img = c.evaluate(&[10.0], SampleKey::for_theta(&[10.0], 1)).unwrap();
        assert_eq!(img.len(), 100);
        assert!(img.data().iter().all(|v| *v == 10.0));
    }

    #[test]
    fn stack_reproduces_scene_renders() {
        let fwd = SceneForward::new(tiny_corridor(), 42);
        let key = SampleKey::for_theta(&[0.3], 2);
        let img = fwd.evaluate(&[0.3], key).unwrap();
        let mut stack = StackForward::new(42);
        stack.insert(img.clone()).unwrap();
        assert_eq!(stack.evaluate(&[0.3], key).unwrap(), img);
        assert!(stack.evaluate(&[0.3], SampleKey::for_theta(&[0.3], 3)).is_err());
        assert!(StackForward::new(43).insert(img.clone()).is_ok());
        assert!(stack.insert(img).is_err());
    }

    #[test]
    fn scene_forward_checks_bounds() {
        let fwd = SceneForward::new(tiny_corridor(), 1);
        let err = fwd.evaluate(&[5.0], SampleKey::for_theta(&[5.0], 1)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }));
    }

    #[test]
    fn planner_dedupes() {
        let p = Planner::new(2, 2, 3);
        let k = SampleKey::for_theta(&[1.0], 8);
        p.evaluate(&[1.0], k).unwrap();
        p.evaluate(&[1.0], k).unwrap();
        p.evaluate(&[2.0], k).unwrap();
        assert_eq!(p.into_requests().len(), 2);
    }

    #[test]
    fn common_streams_ignore_theta() {
        let seen = Planner::new(1, 1, 1);
        let crn = CommonRandomNumbers {
            inner: |t: &[f64], k: SampleKey| seen.evaluate(t, k),
            stream: 9,
        };
        crn.evaluate(&[0.1], SampleKey::for_theta(&[0.1], 4)).unwrap();
        crn.evaluate(&[0.2], SampleKey::for_theta(&[0.2], 4)).unwrap();
        let forked = SampleKey::for_theta(&[0.1], 4).fork(&[1]);
        crn.evaluate(&[0.3], forked).unwrap();
        drop(crn);
        let keys: Vec<SampleKey> = seen.into_requests().into_iter().map(|r| r.key).collect();
        assert_eq!(keys[0], SampleKey { spp: 4, stream: 9 });
        assert_eq!(keys[1], keys[0]);
        assert_eq!(keys[2], forked);
    }

    #[test]
    fn cache_returns_same_image() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let f = |t: &[f64], _k: SampleKey| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            RadianceImage::filled(1, 1, 1, t[0])
        };
        let c = Cached::new(&f);
        let k = SampleKey::for_theta(&[1.0], 1);
        c.evaluate(&[1.0], k).unwrap();
        c.evaluate(&[1.0], k).unwrap();
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 1);
    }
}
