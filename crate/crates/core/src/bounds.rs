//! χ²-divergence exponents and Hammersley-Chapman-Robbins lower bounds.
//!
//! For observations Y ~ p(·; θ) the variance of any unbiased estimator of
//! θ_j obeys Var ≥ sup_Δ Δ_j² / (e^{λ(θ, θ+Δ)} − 1), where e^λ − 1 is the
//! χ² divergence between the two observation laws. Under Poisson noise
//! λ = Σ (L₁ − L₂)² / L₁, under AWGN λ = ‖L₁ − L₂‖² / σ².

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{Forward, SampleKey};
use crate::image::RadianceImage;
use crate::math::pairwise_sum;
use crate::scene::ParameterPoint;

/// Above this exponent e^λ − 1 is evaluated in log space.
const LOG_SPACE_LAMBDA: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Poisson,
    Awgn { sigma: f64 },
}

impl NoiseModel {
    pub fn awgn(sigma: f64) -> Result<Self> {
        let m = NoiseModel::Awgn { sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Awgn { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidArgument(format!("AWGN σ must be positive and finite, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Divergence exponent between the laws centred on `l1` and `l2`.
    pub fn lambda(&self, l1: &RadianceImage, l2: &RadianceImage) -> Result<f64> {
        match *self {
            NoiseModel::Poisson => lambda_poisson(l1, l2),
            NoiseModel::Awgn { sigma } => lambda_gaussian(l1, l2, sigma),
        }
    }

    pub fn label(&self) -> String {
        match self {
            NoiseModel::Poisson => "poisson".into(),
            NoiseModel::Awgn { sigma } => format!("awgn:{sigma}"),
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn lambda_poisson(l1: &RadianceImage, l2: &RadianceImage) -> Result<f64> {
    l1.ensure_same_shape(l2)?;
    let mut terms = Vec::with_capacity(l1.len());
    for (i, (a, b)) in l1.data().iter().zip(l2.data()).enumerate() {
        let d = a - b;
        if d == 0.0 {
            terms.push(0.0);
        } else if *a > 0.0 {
            terms.push(d * d / a);
        } else {
            let (x, y, channel) = l1.coords(i);
            return Err(Error::DivergenceUndefined { x, y, channel });
        }
    }
    Ok(pairwise_sum(&terms))
}

pub fn lambda_gaussian(l1: &RadianceImage, l2: &RadianceImage, sigma: f64) -> Result<f64> {
    NoiseModel::Awgn { sigma }.validate()?;
    l1.ensure_same_shape(l2)?;
    let terms: Vec<f64> = l1
        .data()
        .iter()
        .zip(l2.data())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(pairwise_sum(&terms) / (sigma * sigma))
}

/// A bound or functional value; `Unbounded` marks λ = 0, where the two
/// parameter values are statistically indistinguishable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HcrValue {
    Finite(f64),
    Unbounded,
}

impl HcrValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            HcrValue::Finite(v) => Some(v),
            HcrValue::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, HcrValue::Unbounded)
    }

    /// `+∞` for `Unbounded`; convenient for tables.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    fn cmp_value(self, other: HcrValue) -> Ordering {
        self.to_f64().total_cmp(&other.to_f64())
    }
}

impl fmt::Display for HcrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HcrValue::Finite(v) => write!(f, "{v:e}"),
            HcrValue::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// numerator / (e^λ − 1) for numerator ≥ 0.
fn ratio(numerator: f64, lambda: f64) -> Result<HcrValue> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    if lambda == 0.0 {
        return Ok(HcrValue::Unbounded);
    }
    if numerator == 0.0 {
        return Ok(HcrValue::Finite(0.0));
    }
    if lambda < LOG_SPACE_LAMBDA {
        Ok(HcrValue::Finite(numerator / lambda.exp_m1()))
    } else {
        // e^λ − 1 = e^λ to double precision here
        Ok(HcrValue::Finite((numerator.ln() - lambda).exp()))
    }
}

/// Δ_j² / (e^λ − 1).
pub fn hcr_functional(lambda: f64, delta_j: f64) -> Result<HcrValue> {
    if delta_j == 0.0 || !delta_j.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "perturbation component must be finite and nonzero, got {delta_j}"
        )));
    }
    ratio(delta_j * delta_j, lambda)
}

/// Finite set of perturbations Δ, each nonzero with θ* + Δ inside Θ.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaGrid {
    deltas: Vec<Vec<f64>>,
}

impl DeltaGrid {
    pub fn new(theta: &ParameterPoint, deltas: Vec<Vec<f64>>) -> Result<Self> {
        for d in &deltas {
            if d.len() != theta.dim() {
                return Err(Error::InvalidArgument(format!(
                    "Δ {d:?} has {} components, θ has {}",
                    d.len(),
                    theta.dim()
                )));
            }
            if d.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidArgument("Δ = 0 is not a perturbation".into()));
            }
            theta.shifted(d)?;
        }
        Ok(DeltaGrid { deltas })
    }

    /// Δ = ±k·step·e_j for k = 1..=count, keeping those that stay inside Θ.
    pub fn axis(theta: &ParameterPoint, j: usize, step: f64, count: usize) -> Result<Self> {
        check_component(theta, j)?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {step}")));
        }
        let mut deltas = Vec::with_capacity(2 * count);
        for k in 1..=count {
            for sign in [-1.0, 1.0] {
                let mut d = vec![0.0; theta.dim()];
                d[j] = sign * k as f64 * step;
                if theta.shifted(&d).is_ok() {
                    deltas.push(d);
                }
            }
        }
        Ok(DeltaGrid { deltas })
    }

    /// Full lattice Δ = (k₀·step₀, k₁·step₁, …) with |k_i| ≤ counts[i],
    /// excluding Δ = 0 and points leaving Θ.
    pub fn lattice(theta: &ParameterPoint, steps: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = theta.dim();
        if steps.len() != dim || counts.len() != dim {
            return Err(Error::InvalidArgument(
                "lattice needs one step and one count per component".into(),
            ));
        }
        let mut deltas = vec![Vec::new()];
        for (step, count) in steps.iter().zip(counts) {
            let c = *count as i64;
            deltas = deltas
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    (-c..=c).map(move |k| {
                        let mut d = prefix.clone();
                        d.push(k as f64 * step);
                        d
                    })
                })
                .collect();
        }
        deltas.retain(|d| d.iter().any(|v| *v != 0.0) && theta.shifted(d).is_ok());
        Ok(DeltaGrid { deltas })
    }

    pub fn deltas(&self) -> &[Vec<f64>] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

fn check_component(theta: &ParameterPoint, j: usize) -> Result<()> {
    if j >= theta.dim() {
        return Err(Error::InvalidArgument(format!(
            "component {j} out of range for {}-dimensional θ",
            theta.dim()
        )));
    }
    Ok(())
}

/// One grid point of a bound computation.
#[derive(Debug, Clone, PartialEq)]
pub struct HcrTerm {
    /// Nominal perturbation from the grid.
    pub delta: Vec<f64>,
    /// (θ* + Δ) − θ* as evaluated in floating point; used in numerators.
    pub realized: Vec<f64>,
    pub lambda: f64,
    pub value: HcrValue,
    /// Left out of the maximum (e.g. a clamped λ estimate).
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcrResult {
    pub bound: HcrValue,
    /// Maximizing perturbation (nominal); ties go to the lexicographically
    /// smallest Δ.
    pub argmax: Vec<f64>,
    pub trace: Vec<HcrTerm>,
    /// Some grid point had λ = 0.
    pub unbounded: bool,
    /// Some grid point was excluded from the maximum.
    pub clamped: bool,
    /// Component bounded, or `None` for the total-MSE bound.
    pub component: Option<usize>,
    pub theta: Vec<f64>,
    /// Noise law the exponents were computed under, when known.
    pub noise: Option<NoiseModel>,
}

impl HcrResult {
    /// Largest finite functional value over the non-excluded grid.
    pub fn finite_max(&self) -> Option<f64> {
        self.trace
            .iter()
            .filter(|t| !t.excluded)
            .filter_map(|t| t.value.finite())
            .max_by(|a, b| a.total_cmp(b))
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Packages per-Δ exponents into a bound. `excluded[i]` drops term i from
/// the maximum while keeping it in the trace.
pub(crate) fn assemble(
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    lambdas: &[f64],
    excluded: &[bool],
    component: Option<usize>,
) -> Result<HcrResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("Δ grid is empty".into()));
    }
    let mut trace = Vec::with_capacity(grid.len());
    for ((delta, lambda), skip) in grid.deltas().iter().zip(lambdas).zip(excluded) {
        let realized: Vec<f64> = theta
            .values()
            .iter()
            .zip(delta)
            .map(|(t, d)| (t + d) - t)
            .collect();
        let numerator = match component {
            Some(j) => realized[j] * realized[j],
            None => realized.iter().map(|v| v * v).sum(),
        };
        let value = ratio(numerator, *lambda)
            .map_err(|e| e.at(theta.values(), delta, 0))?;
        trace.push(HcrTerm {
            delta: delta.clone(),
            realized,
            lambda: *lambda,
            value,
            excluded: *skip,
        });
    }
    let mut best: Option<&HcrTerm> = None;
    for t in trace.iter().filter(|t| !t.excluded) {
        best = match best {
            None => Some(t),
            Some(b) => match t.value.cmp_value(b.value) {
                Ordering::Greater => Some(t),
                Ordering::Equal if lex_cmp(&t.delta, &b.delta) == Ordering::Less => Some(t),
                _ => Some(b),
            },
        };
    }
    let unbounded = trace.iter().any(|t| !t.excluded && t.value.is_unbounded());
    let clamped = trace.iter().any(|t| t.excluded);
    let (bound, argmax) = match best {
        Some(b) => (b.value, b.delta.clone()),
        None => (HcrValue::Finite(0.0), Vec::new()),
    };
    Ok(HcrResult {
        bound,
        argmax,
        trace,
        unbounded,
        clamped,
        component,
        theta: theta.values().to_vec(),
        noise: None,
    })
}

/// λ(L_θ*, L_θ*+Δ) for every Δ in the grid, evaluated in parallel.
pub fn lambda_trace(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    noise: NoiseModel,
    spp: u32,
) -> Result<Vec<f64>> {
    noise.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("Δ grid is empty".into()));
    }
    let t0 = theta.values();
    let base = forward
        .evaluate(t0, SampleKey::for_theta(t0, spp))
        .map_err(|e| e.at(t0, &[], spp))?;
    grid.deltas()
        .par_iter()
        .map(|d| {
            let shifted = theta.shifted(d).map_err(|e| e.at(t0, d, spp))?;
            let tv = shifted.values();
            let img = forward
                .evaluate(tv, SampleKey::for_theta(tv, spp))
                .map_err(|e| e.at(t0, d, spp))?;
            noise.lambda(&base, &img).map_err(|e| e.at(t0, d, spp))
        })
        .collect()
}

/// Grid-supremum HCR bound on the variance of unbiased estimators of θ_j.
pub fn hcr_bound(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    noise: NoiseModel,
    j: usize,
    spp: u32,
) -> Result<HcrResult> {
    check_component(theta, j)?;
    let lambdas = lambda_trace(forward, theta, grid, noise, spp)?;
    let mut r = hcr_from_lambdas(theta, grid, &lambdas, j)?;
    r.noise = Some(noise);
    Ok(r)
}

/// HCR bound for component `j` from precomputed exponents.
pub fn hcr_from_lambdas(
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    lambdas: &[f64],
    j: usize,
) -> Result<HcrResult> {
    check_component(theta, j)?;
    check_lengths(grid, lambdas)?;
    assemble(theta, grid, lambdas, &vec![false; lambdas.len()], Some(j))
}

/// Bound on the total mean-squared error, sup_Δ ‖Δ‖² / (e^λ − 1).
pub fn mse_bound(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    noise: NoiseModel,
    spp: u32,
) -> Result<HcrResult> {
    let lambdas = lambda_trace(forward, theta, grid, noise, spp)?;
    let mut r = mse_from_lambdas(theta, grid, &lambdas)?;
    r.noise = Some(noise);
    Ok(r)
}

pub fn mse_from_lambdas(
    theta: &ParameterPoint,
    grid: &DeltaGrid,
    lambdas: &[f64],
) -> Result<HcrResult> {
    check_lengths(grid, lambdas)?;
    assemble(theta, grid, lambdas, &vec![false; lambdas.len()], None)
}

fn check_lengths(grid: &DeltaGrid, lambdas: &[f64]) -> Result<()> {
    if grid.len() != lambdas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} exponents for a grid of {}",
            lambdas.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Small-step Cramér-Rao limit h² / λ(L_θ*, L_θ*+h·e_j), where h is the step
/// ξ as realized in floating point.
pub fn cr_limit(
    forward: &dyn Forward,
    theta: &ParameterPoint,
    xi: f64,
    noise: NoiseModel,
    j: usize,
    spp: u32,
) -> Result<HcrValue> {
    check_component(theta, j)?;
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::InvalidArgument(format!("step ξ must be positive, got {xi}")));
    }
    let mut d = vec![0.0; theta.dim()];
    d[j] = -xi;
    theta.shifted(&d)?;
    d[j] = xi;
    let plus = theta.shifted(&d)?;
    let lambda = lambda_trace(forward, theta, &DeltaGrid { deltas: vec![d] }, noise, spp)?[0];
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    if lambda == 0.0 {
        return Ok(HcrValue::Unbounded);
    }
    let h = plus.values()[j] - theta.values()[j];
    Ok(HcrValue::Finite(h * h / lambda))
}
