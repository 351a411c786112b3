//! Rendering error in divergence exponents and bounds.
//!
//! A Monte-Carlo render with N samples per pixel inflates the observed
//! exponent: E[λ̃^(N)] = λ + C/N + o(1/N). Observing λ̃ at several N and
//! fitting that line recovers the noise-free λ as the intercept.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bounds::{assemble, lambda_trace, DeltaGrid, HcrResult, HcrValue, NoiseModel};
use crate::error::{Error, Result};
use crate::forward::{render_seed, Forward, SampleKey};
use crate::image::RadianceImage;
use crate::math::{median, pairwise_sum};
use crate::render::rng::derive_seed;
use crate::scene::ParameterPoint;

/// Light radiance of the shipped fixture; default upper end of the weights.
pub const DEFAULT_L_MAX: f64 = 12.0;
pub const P_MIN: f64 = 0.85;
pub const P_MAX: f64 = 1.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaObservation {
    pub spp: u32,
    pub lambda_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    /// Intercept, clamped at zero.
    pub lambda: f64,
    /// Intercept before clamping.
    pub lambda_raw: f64,
    /// Slope against 1/N.
    pub c: f64,
    /// λ̃_i − (λ_raw + c/N_i).
    pub residuals: Vec<f64>,
    pub clamped: bool,
}

/// Weighted least-squares fit of λ̃_i = λ + C/N_i.
///
/// Without explicit weights, observation i gets weight N_i (its inverse
/// variance up to a constant). The fit is anchored on the first observation,
/// so identical λ̃ values return that value exactly.
pub fn estimate_lambda(
    obs: &[LambdaObservation],
    weights: Option<&[f64]>,
) -> Result<LambdaEstimate> {
    if obs.len() < 2 {
        return Err(Error::Insufficient(format!(
            "need observations at ≥ 2 distinct sample counts, got {}",
            obs.len()
        )));
    }
    for o in obs {
        if o.spp == 0 {
            return Err(Error::InvalidArgument("sample count must be ≥ 1".into()));
        }
        if !(o.lambda_tilde >= 0.0 && o.lambda_tilde.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "observed exponent must be finite and ≥ 0, got {}",
                o.lambda_tilde
            )));
        }
    }
    if obs.iter().all(|o| o.spp == obs[0].spp) {
        return Err(Error::SingularDesign(format!(
            "all observations at N = {}",
            obs[0].spp
        )));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != obs.len() || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(
                    "weights must be positive, finite, one per observation".into(),
                ));
            }
            w.to_vec()
        }
        None => obs.iter().map(|o| o.spp as f64).collect(),
    };
    let x: Vec<f64> = obs.iter().map(|o| 1.0 / o.spp as f64).collect();
    let y0 = obs[0].lambda_tilde;
    let r: Vec<f64> = obs.iter().map(|o| o.lambda_tilde - y0).collect();

    let sw = pairwise_sum(&w);
    let xbar = pairwise_sum(&w.iter().zip(&x).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let rbar = pairwise_sum(&w.iter().zip(&r).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let dx: Vec<f64> = x.iter().map(|v| v - xbar).collect();
    let sxx = pairwise_sum(&w.iter().zip(&dx).map(|(a, d)| a * d * d).collect::<Vec<_>>());
    let sxy = pairwise_sum(
        &w.iter()
            .zip(&dx)
            .zip(&r)
            .map(|((a, d), v)| a * d * (v - rbar))
            .collect::<Vec<_>>(),
    );
    if sxx <= 0.0 {
        return Err(Error::SingularDesign("design has no spread in 1/N".into()));
    }
    let c = sxy / sxx;
    let lambda_raw = y0 + (rbar - c * xbar);
    let residuals = obs
        .iter()
        .zip(&x)
        .map(|(o, xi)| o.lambda_tilde - (lambda_raw + c * xi))
        .collect();
    let clamped = lambda_raw < 0.0;
    Ok(LambdaEstimate {
        lambda: lambda_raw.max(0.0),
        lambda_raw,
        c,
        residuals,
        clamped,
    })
}

/// Bias-corrected bound plus the per-Δ fits behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct HcrHat {
    pub result: HcrResult,
    pub schedule: Vec<u32>,
    /// observed[i][k]: λ̃ for grid point i at schedule[k].
    pub observed: Vec<Vec<f64>>,
    pub estimates: Vec<LambdaEstimate>,
}

/// HCR bound evaluated with least-squares exponents λ̂ fitted over the
/// sample-count schedule. Grid points whose λ̂ clamps to zero stay in the
/// trace but are excluded from the maximum.
pub fn hcr_hat(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    noise: NoiseModel,
    j: usize,
    schedule: &[u32],
) -> Result<HcrHat> {
    let mut distinct = schedule.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Insufficient(
            "sample-count schedule needs ≥ 2 distinct values".into(),
        ));
    }
    if j >= theta.dim() {
        return Err(Error::InvalidArgument(format!("component {j} out of range")));
    }
    let per_n: Vec<Vec<f64>> = schedule
        .iter()
        .map(|n| lambda_trace(forward, theta, grid, noise, *n))
        .collect::<Result<_>>()?;
    let observed: Vec<Vec<f64>> = (0..grid.len())
        .map(|i| per_n.iter().map(|col| col[i]).collect())
        .collect();
    let estimates: Vec<LambdaEstimate> = observed
        .iter()
        .zip(grid.deltas())
        .map(|(row, d)| {
            let obs: Vec<LambdaObservation> = schedule
                .iter()
                .zip(row)
                .map(|(n, l)| LambdaObservation {
                    spp: *n,
                    lambda_tilde: *l,
                })
                .collect();
            estimate_lambda(&obs, None).map_err(|e| e.at(theta.values(), d, 0))
        })
        .collect::<Result<_>>()?;
    let lambdas: Vec<f64> = estimates.iter().map(|e| e.lambda).collect();
    let excluded: Vec<bool> = estimates.iter().map(|e| e.clamped).collect();
    let mut result = assemble(theta, grid, &lambdas, &excluded, Some(j))?;
    result.noise = Some(noise);
    Ok(HcrHat {
        result,
        schedule: schedule.to_vec(),
        observed,
        estimates,
    })
}

/// `delta,lambda_tilde_<N>...,lambda_hat,C_hat`; multi-component Δ are
/// semicolon-joined.
pub fn write_lambda_trace_csv(path: impl AsRef<Path>, hat: &HcrHat) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["delta".to_string()];
    header.extend(hat.schedule.iter().map(|n| format!("lambda_tilde_{n}")));
    header.push("lambda_hat".into());
    header.push("C_hat".into());
    w.write_record(&header)?;
    for ((term, obs), est) in hat.result.trace.iter().zip(&hat.observed).zip(&hat.estimates) {
        let mut rec = vec![join(&term.delta)];
        rec.extend(obs.iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", est.lambda));
        rec.push(format!("{:e}", est.c));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

/// Pair of bounds expected to bracket the noise-free HCR value.
#[derive(Debug, Clone, PartialEq)]
pub struct HcrInterval {
    /// Direct bound at a high sample count.
    pub lower: HcrValue,
    /// Least-squares corrected bound.
    pub upper: HcrValue,
    pub theta: Vec<f64>,
    pub component: usize,
    pub noise: Option<NoiseModel>,
    /// upper < lower on this realization.
    pub inverted: bool,
    pub clamped: bool,
}

impl HcrInterval {
    pub fn new(
        theta: Vec<f64>,
        component: usize,
        noise: Option<NoiseModel>,
        lower: HcrValue,
        upper: HcrValue,
    ) -> Self {
        HcrInterval {
            inverted: upper.to_f64() < lower.to_f64(),
            lower,
            upper,
            theta,
            component,
            noise,
            clamped: false,
        }
    }

    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.inverted {
            f.push("inverted");
        }
        if self.lower.is_unbounded() {
            f.push("lower-unbounded");
        }
        if self.upper.is_unbounded() {
            f.push("upper-unbounded");
        }
        if self.clamped {
            f.push("clamped");
        }
        f.join(";")
    }
}

pub fn hcr_interval(direct: &HcrResult, corrected: &HcrResult) -> Result<HcrInterval> {
    let mismatch = |what: &str| Err(Error::InvalidArgument(format!("interval inputs differ in {what}")));
    if direct.component != corrected.component || direct.component.is_none() {
        return mismatch("component");
    }
    if direct.theta != corrected.theta {
        return mismatch("θ*");
    }
    if direct.noise != corrected.noise {
        return mismatch("noise model");
    }
    let grid_a: Vec<&Vec<f64>> = direct.trace.iter().map(|t| &t.delta).collect();
    let grid_b: Vec<&Vec<f64>> = corrected.trace.iter().map(|t| &t.delta).collect();
    if grid_a != grid_b {
        return mismatch("Δ grid");
    }
    let mut iv = HcrInterval::new(
        direct.theta.clone(),
        direct.component.unwrap_or(0),
        direct.noise,
        direct.bound,
        corrected.bound,
    );
    iv.clamped = corrected.clamped;
    Ok(iv)
}

/// `theta,j,lower,upper,flags`.
pub fn write_intervals_csv(path: impl AsRef<Path>, rows: &[HcrInterval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "j", "lower", "upper", "flags"])?;
    for r in rows {
        w.write_record([
            join(&r.theta),
            r.component.to_string(),
            value_str(r.lower),
            value_str(r.upper),
            r.flags(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn value_str(v: HcrValue) -> String {
    match v {
        HcrValue::Finite(x) => format!("{x:?}"),
        HcrValue::Unbounded => "inf".into(),
    }
}

/// Best power-law fit γ ≈ C_p·N^(−p) on the exponent grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub p_opt: f64,
    pub c_p: f64,
    /// Squared residual norm at p_opt.
    pub error: f64,
}

/// Exponents 0.850, 0.851, …, 1.150.
pub fn exponent_grid() -> Vec<f64> {
    (850..=1150).map(|k| k as f64 / 1000.0).collect()
}

/// Grid search over p with the least-squares C_p at each p; ties resolve to
/// the smaller exponent.
pub fn fit_decay_exponent(spp: &[f64], gamma: &[f64]) -> Result<DecayFit> {
    if spp.len() != gamma.len() || spp.len() < 2 {
        return Err(Error::Insufficient("decay fit needs ≥ 2 (N, γ) pairs".into()));
    }
    let mut best: Option<DecayFit> = None;
    for p in exponent_grid() {
        let x: Vec<f64> = spp.iter().map(|n| n.powf(-p)).collect();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(gamma).map(|(a, b)| a * b).sum();
        let c = sxy / sxx;
        let error: f64 = x.iter().zip(gamma).map(|(a, g)| (g - c * a).powi(2)).sum();
        if best.is_none_or(|b| error < b.error) {
            best = Some(DecayFit { p_opt: p, c_p: c, error });
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Unbiased per-entry sample variance across replicate renders.
pub fn pixel_variances(renders: &[RadianceImage]) -> Result<Vec<f64>> {
    if renders.len() < 2 {
        return Err(Error::Insufficient(format!(
            "need ≥ 2 replicate renders, got {}",
            renders.len()
        )));
    }
    for r in &renders[1..] {
        renders[0].ensure_same_shape(r)?;
    }
    let k = renders.len() as f64;
    Ok((0..renders[0].len())
        .map(|i| {
            let m = renders.iter().map(|r| r.data()[i]).sum::<f64>() / k;
            renders.iter().map(|r| (r.data()[i] - m).powi(2)).sum::<f64>() / (k - 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayDistribution {
    pub fits: Vec<DecayFit>,
}

impl DecayDistribution {
    pub fn p_values(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.p_opt).collect()
    }

    pub fn median(&self) -> f64 {
        median(&self.p_values())
    }

    pub fn mean(&self) -> f64 {
        self.p_values().iter().sum::<f64>() / self.fits.len() as f64
    }

    /// (p, count) for every exponent that occurred, ascending.
    pub fn histogram(&self) -> Vec<(f64, usize)> {
        let mut h: BTreeMap<i64, usize> = BTreeMap::new();
        for f in &self.fits {
            *h.entry((f.p_opt * 1000.0).round() as i64).or_default() += 1;
        }
        h.into_iter().map(|(k, c)| (k as f64 / 1000.0, c)).collect()
    }

    pub fn mode(&self) -> f64 {
        self.histogram()
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.total_cmp(&a.0)))
            .map(|(p, _)| p)
            .unwrap_or(f64::NAN)
    }
}

/// γ^(N) = Σ_ω W_ω·var_ω^(N) for `draws` random weight maps W ~ U[0, l_max],
/// each fitted with [`fit_decay_exponent`].
pub fn decay_fit_from_variances(
    spp: &[u32],
    variances: &[Vec<f64>],
    draws: usize,
    l_max: f64,
    seed: u64,
) -> Result<DecayDistribution> {
    let mut distinct = spp.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 || spp.len() != variances.len() {
        return Err(Error::Insufficient(
            "need variances at ≥ 2 distinct sample counts".into(),
        ));
    }
    if draws == 0 || !(l_max > 0.0 && l_max.is_finite()) {
        return Err(Error::InvalidArgument("need ≥ 1 draw and L_max > 0".into()));
    }
    let m = variances[0].len();
    if variances.iter().any(|v| v.len() != m) {
        return Err(Error::InvalidArgument("variance maps differ in size".into()));
    }
    let ns: Vec<f64> = spp.iter().map(|n| *n as f64).collect();
    let fits = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[d as u64]));
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..l_max)).collect();
            let gamma: Vec<f64> = variances
                .iter()
                .map(|v| pairwise_sum(&v.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>()))
                .collect();
            fit_decay_exponent(&ns, &gamma)
        })
        .collect::<Result<_>>()?;
    Ok(DecayDistribution { fits })
}

/// Replicate renders per sample count → decay-exponent distribution.
pub fn variance_decay_fit(
    renders: &[(u32, Vec<RadianceImage>)],
    draws: usize,
    l_max: f64,
    seed: u64,
) -> Result<DecayDistribution> {
    let spp: Vec<u32> = renders.iter().map(|(n, _)| *n).collect();
    let variances = renders
        .iter()
        .map(|(_, imgs)| pixel_variances(imgs))
        .collect::<Result<Vec<_>>>()?;
    decay_fit_from_variances(&spp, &variances, draws, l_max, seed)
}

/// `p_opt,count`.
pub fn write_decay_histogram_csv(path: impl AsRef<Path>, dist: &DecayDistribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["p_opt", "count"])?;
    for (p, c) in dist.histogram() {
        w.write_record([format!("{p:.3}"), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Wraps a noise-free model with synthetic rendering error: each entry
/// becomes L·(1 + s·z/√N), z ~ N(0, 1), clamped at zero, drawn
/// independently per (θ, key). This mimics an unbiased renderer whose
/// per-sample relative standard deviation is `s`.
pub struct SyntheticRenderError<F> {
    pub inner: F,
    pub relative_sd: f64,
    pub seed: u64,
}

impl<F: Forward> Forward for SyntheticRenderError<F> {
    fn evaluate(&self, theta: &[f64], key: SampleKey) -> Result<RadianceImage> {
        let clean = self.inner.evaluate(theta, key)?;
        let seed = render_seed(
            self.seed,
            SampleKey {
                spp: key.spp,
                stream: derive_seed(key.stream, &crate::math::theta_key(theta)),
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = self.relative_sd / (key.spp.max(1) as f64).sqrt();
        let (w, h, c) = clean.shape();
        let meta = clean.meta.clone();
        let data = clean
            .into_data()
            .into_iter()
            .map(|l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (l * (1.0 + scale * z)).max(0.0)
            })
            .collect();
        Ok(RadianceImage::new(w, h, c, data)?.with_meta(meta))
    }
}
