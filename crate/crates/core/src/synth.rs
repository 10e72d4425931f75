//! Synthetic latents and Monte-Carlo distortion estimates.
//!
//! Element `i` draws from its own ChaCha8 stream: the generator is seeded with
//! `seed` and positioned at stream `i`, so any element can be regenerated
//! without the others.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::codec::clamp_codable;
use crate::gaussian::{build_element_model, Base, ElementModel, GaussianError, SIGMA_MIN};
use crate::slicing::max_exponent;
use crate::tensor::Shape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("zero weight {0} is outside [0, 1]")]
    BadZeroWeight(f64),
    #[error("scale range [{lo}, {hi}] is invalid (lower end must be at least {min})", min = SIGMA_MIN)]
    BadSigmaRange { lo: f64, hi: f64 },
    #[error(transparent)]
    Model(#[from] GaussianError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub shape: Shape,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// Probability that an element is forced to zero.
    pub zero_weight: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(shape: Shape, seed: u64) -> Self {
        SynthConfig {
            shape,
            sigma_lo: 0.1,
            sigma_hi: 8.0,
            zero_weight: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.zero_weight) {
            return Err(SynthError::BadZeroWeight(self.zero_weight));
        }
        if !(self.sigma_lo >= SIGMA_MIN && self.sigma_hi >= self.sigma_lo && self.sigma_hi.is_finite()) {
            return Err(SynthError::BadSigmaRange {
                lo: self.sigma_lo,
                hi: self.sigma_hi,
            });
        }
        Ok(())
    }
}

/// Generated latent tensor with its scales.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLatent {
    pub shape: Shape,
    pub values: Vec<i32>,
    pub sigmas: Vec<f32>,
}

fn element_rng(seed: u64, element: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(element as u64);
    rng
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Draws one tensor. Values are clamped to what both the binary and the
/// ternary model of the element can code, so one tensor serves both bases.
pub fn generate(config: &SynthConfig) -> Result<SynthLatent, SynthError> {
    config.validate()?;
    let k = config.shape.len();
    let span = libm::log(config.sigma_hi / config.sigma_lo);
    let mut sigmas = Vec::with_capacity(k);
    let mut raw = Vec::with_capacity(k);
    for i in 0..k {
        let mut rng = element_rng(config.seed, i);
        let sigma = (config.sigma_lo * libm::exp(span * unit(&mut rng))) as f32;
        let zero = unit(&mut rng) < config.zero_weight;
        let g: f64 = StandardNormal.sample(&mut rng);
        sigmas.push(sigma);
        raw.push(if zero { 0.0 } else { libm::round(g * sigma as f64) });
    }
    let mut models = [Vec::with_capacity(k), Vec::with_capacity(k)];
    for &s in &sigmas {
        models[0].push(build_element_model(s as f64, Base::Binary)?);
        models[1].push(build_element_model(s as f64, Base::Ternary)?);
    }
    let depths = [max_exponent(&models[0]), max_exponent(&models[1])];
    let values = raw
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut v = y as i64;
            // Alternate until both models accept the same value.
            for _ in 0..8 {
                let a = clamp_codable(&models[0][i], depths[0], v);
                let b = clamp_codable(&models[1][i], depths[1], a);
                if b == v {
                    break;
                }
                v = b;
            }
            v as i32
        })
        .collect();
    Ok(SynthLatent {
        shape: config.shape,
        values,
        sigmas,
    })
}

/// Samples an index of `model.masses()` by inverse CDF.
fn sample_index(model: &ElementModel, rng: &mut ChaCha8Rng) -> usize {
    let u = unit(rng);
    let mut acc = 0.0;
    for (j, &p) in model.masses().iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    model.len() - 1
}

/// Empirical `D_n`: draw `y` from the discretized PMF, refine by the first
/// `digits` digits of `y` itself, and average `(y - ŷ)²` with `ŷ` the
/// conditional mean of the reached interval.
pub fn mc_distortion_oracle(model: &ElementModel, digits: u32, samples: usize, seed: u64) -> f64 {
    let base = model.base();
    let depth = model.exponent();
    if digits >= depth {
        return 0.0;
    }
    let width = base.pow(depth - digits);
    // One conditional mean per interval reachable after `digits` digits.
    let means: Vec<f64> = (0..model.len() / width)
        .map(|b| model.moments(b * width, (b + 1) * width).0)
        .collect();
    let mut rng = element_rng(seed, 0);
    let mut acc = 0.0;
    for _ in 0..samples {
        let j = sample_index(model, &mut rng);
        let e = model.value_at(j) as f64 - means[j / width];
        acc += e * e;
    }
    acc / samples as f64
}

/// Monte-Carlo estimate of a decoder's distortion. Element `i` is known to
/// lie in mass indices `ranges[i]` and was reconstructed as `estimates[i]`;
/// `samples` draws are split evenly over the unresolved elements and
/// stratified inside each element's interval.
pub fn mc_reconstruction_mse(
    models: &[ElementModel],
    ranges: &[(usize, usize)],
    estimates: &[f64],
    samples: usize,
    seed: u64,
) -> f64 {
    // Resolved elements carry no error; spend the samples on the rest.
    let open = ranges.iter().filter(|(lo, hi)| hi - lo > 1).count();
    if open == 0 {
        return 0.0;
    }
    let per_element = samples.div_ceil(open);
    let mut total = 0.0;
    for (i, m) in models.iter().enumerate() {
        let (lo, hi) = ranges[i];
        if hi - lo <= 1 {
            continue;
        }
        let range = &m.masses()[lo..hi];
        let mass: f64 = range.iter().sum();
        let mut rng = element_rng(seed, i);
        let mut acc = 0.0;
        let mut cdf = 0.0;
        let mut j = 0;
        // Stratum points increase, so the inverse-CDF walk only moves forward.
        for s in 0..per_element {
            let u = (s as f64 + unit(&mut rng)) / per_element as f64 * mass;
            while j + 1 < range.len() && u >= cdf + range[j] {
                cdf += range[j];
                j += 1;
            }
            let e = m.value_at(lo + j) as f64 - estimates[i];
            acc += e * e;
        }
        total += acc / per_element as f64;
    }
    total / models.len() as f64
}
