//! Standard normal CDF/quantile and per-element discretized Gaussian models.
//!
//! Every element `y` is a rounded zero-mean Gaussian with scale `σ`. Its support
//! is clipped to the smallest run of `base^L` consecutive integers that holds
//! all but `2ε` of the mass, and the clipped masses are renormalized.
//!
//! The displayed clipping rule `L = ceil(log_base(2σ·Φ⁻¹(1-ε)))` gives
//! `L ≈ ceil(3.61 + log₂σ)` for bit-planes. Prose elsewhere quotes `6.1 + log₂σ`,
//! which is `Φ⁻¹(1-ε)` itself rather than the exponent; the formula is what is
//! implemented.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use thiserror::Error;

/// Tail probability left outside the clipped interval on each side.
pub const EPSILON: f64 = 5e-10;

/// Scales below this are clamped so every element keeps at least one digit.
pub const SIGMA_MIN: f64 = 0.05;

/// Largest number of integers an element model may cover.
pub const MAX_SUPPORT: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GaussianError {
    #[error("scale {0} is not a positive finite number")]
    InvalidSigma(f64),
    #[error("scale {sigma} needs {exponent} digits, support exceeds {MAX_SUPPORT} integers")]
    SupportTooLarge { sigma: f64, exponent: u32 },
}

/// Digit radix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Base {
    Binary,
    Ternary,
}

impl Base {
    pub fn radix(self) -> usize {
        match self {
            Base::Binary => 2,
            Base::Ternary => 3,
        }
    }

    pub fn from_radix(radix: u8) -> Option<Base> {
        match radix {
            2 => Some(Base::Binary),
            3 => Some(Base::Ternary),
            _ => None,
        }
    }

    /// `base^exp`, saturating at `usize::MAX`.
    pub fn pow(self, exp: u32) -> usize {
        (self.radix()).saturating_pow(exp)
    }
}

/// `Φ(x)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate far into the tail.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`: rational initial guess refined by Newton steps
/// on whichever tail is smaller.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return upper_tail_quantile(1.0 - p);
    }
    -upper_tail_quantile(p)
}

/// Solves `1 - Φ(x) = tail` for `tail ∈ (0, 0.5]`.
fn upper_tail_quantile(tail: f64) -> f64 {
    // Acklam's rational approximations.
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let mut x = if tail < 0.02425 {
        let q = libm::sqrt(-2.0 * libm::log(tail));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = 0.5 - tail;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..4 {
        let pdf = std_normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        x += (std_normal_sf(x) - tail) / pdf;
    }
    x
}

/// `Φ⁻¹(1 - ε)` for the clipping tail.
pub fn clip_quantile() -> f64 {
    upper_tail_quantile(EPSILON)
}

/// Clamps a scale to [`SIGMA_MIN`], rejecting non-positive or non-finite input.
pub fn clamp_sigma(sigma: f64) -> Result<f64, GaussianError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(GaussianError::InvalidSigma(sigma));
    }
    Ok(sigma.max(SIGMA_MIN))
}

/// Smallest `L ≥ 1` with `base^L ≥ 2σΦ⁻¹(1-ε)`.
pub fn interval_exponent(sigma: f64, base: Base) -> u32 {
    let span = 2.0 * sigma * clip_quantile();
    let radix = base.radix() as f64;
    let mut exponent = 1u32;
    let mut length = radix;
    while length < span {
        exponent += 1;
        length *= radix;
    }
    exponent
}

/// Unnormalized probability of the integer `m` under `N(0, σ²)` rounding.
/// Depends only on `|m|`, so models are bitwise symmetric about zero.
pub fn integer_mass(sigma: f64, m: i64) -> f64 {
    let a = m.unsigned_abs() as f64;
    if a == 0.0 {
        1.0 - 2.0 * std_normal_sf(0.5 / sigma)
    } else {
        std_normal_sf((a - 0.5) / sigma) - std_normal_sf((a + 0.5) / sigma)
    }
}

/// Discretized, clipped and renormalized Gaussian for one latent element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementModel {
    sigma: f64,
    base: Base,
    exponent: u32,
    offset: i64,
    masses: Vec<f64>,
    clipped_mass: f64,
}

/// Builds the model for one element; `sigma` is clamped to [`SIGMA_MIN`].
pub fn build_element_model(sigma: f64, base: Base) -> Result<ElementModel, GaussianError> {
    let sigma = clamp_sigma(sigma)?;
    let exponent = interval_exponent(sigma, base);
    let len = base.pow(exponent);
    if len > MAX_SUPPORT {
        return Err(GaussianError::SupportTooLarge { sigma, exponent });
    }
    let offset = support_offset(base, len);
    let mut masses: Vec<f64> = (0..len)
        .map(|j| integer_mass(sigma, offset + j as i64))
        .collect();
    let total = crate::tensor::sequential_sum(&masses);
    for m in &mut masses {
        *m /= total;
    }
    Ok(ElementModel {
        sigma,
        base,
        exponent,
        offset,
        masses,
        clipped_mass: 1.0 - total,
    })
}

/// Leftmost integer of `[l₀, r₀)`: `-(3^L-1)/2` for trits, `-(2^L-2)/2` for bits.
fn support_offset(base: Base, len: usize) -> i64 {
    match base {
        Base::Ternary => -((len as i64 - 1) / 2),
        Base::Binary => -(len as i64 / 2) + 1,
    }
}

impl ElementModel {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn base(&self) -> Base {
        self.base
    }

    /// Digit count `L` of this element's own interval.
    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    /// Value of `masses[0]`.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Mass lost to clipping before renormalization.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    pub fn value_at(&self, index: usize) -> i64 {
        self.offset + index as i64
    }

    /// Clamps `value` into the support and returns its mass index.
    pub fn clamp_index(&self, value: i64) -> usize {
        let hi = self.offset + self.masses.len() as i64 - 1;
        (value.clamp(self.offset, hi) - self.offset) as usize
    }

    pub fn contains(&self, value: i64) -> bool {
        value >= self.offset && value < self.offset + self.masses.len() as i64
    }

    /// Conditional mean and variance of `y` given `y ∈ [value_at(lo), value_at(hi))`.
    ///
    /// Masses of `m` and `-m` are identical, so their contributions to the mean
    /// cancel and only the unpaired values are summed. This keeps the mean of
    /// any zero-centered range exactly `0.0`.
    pub fn moments(&self, lo: usize, hi: usize) -> (f64, f64) {
        debug_assert!(lo < hi && hi <= self.masses.len());
        if hi - lo == 1 {
            return (self.value_at(lo) as f64, 0.0);
        }
        let range = &self.masses[lo..hi];
        let total = crate::tensor::sequential_sum(range);
        let first = self.value_at(lo);
        let last = self.value_at(hi - 1);
        let paired = if first <= 0 && last >= 0 {
            (-first).min(last)
        } else {
            -1
        };
        let mut weighted = 0.0;
        for (j, &p) in range.iter().enumerate() {
            let m = first + j as i64;
            if m.abs() > paired {
                weighted += m as f64 * p;
            }
        }
        let mean = weighted / total;
        let mut spread = 0.0;
        for (j, &p) in range.iter().enumerate() {
            let d = (first + j as i64) as f64 - mean;
            spread += d * d * p;
        }
        (mean, spread / total)
    }
}

#[cfg(test)]
impl ElementModel {
    /// Same layout with hand-picked masses.
    pub(crate) fn with_masses(&self, masses: &[f64]) -> ElementModel {
        assert_eq!(masses.len(), self.masses.len());
        ElementModel {
            masses: masses.to_vec(),
            clipped_mass: 0.0,
            ..self.clone()
        }
    }
}

/// Builds one model per scale.
pub fn build_models(sigmas: &[f32], base: Base) -> Result<Vec<ElementModel>, GaussianError> {
    sigmas
        .iter()
        .map(|&s| build_element_model(s as f64, base))
        .collect()
}
