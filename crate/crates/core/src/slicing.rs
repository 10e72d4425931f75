//! Digit-plane decomposition and the per-element interval state.
//!
//! Each element's value is shifted by `-offset` into `[0, base^L)` and written
//! in base `base` with `L_max` digits, where `L_max` is the largest `L` in the
//! tensor. Elements with a smaller `L` get leading zero digits; those digits
//! sit outside the element's own support and are certain, so they are never
//! coded. Interval indices below are in that padded `[0, base^L_max)` space.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::gaussian::{Base, ElementModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SliceError {
    #[error("element {element} is already fully refined")]
    FullyRefined { element: usize },
    #[error("digit {digit} out of range for base {radix}")]
    DigitOutOfRange { digit: u8, radix: usize },
    #[error("element {element}: {reason}")]
    Corrupt {
        element: usize,
        reason: &'static str,
    },
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("element models disagree on the base")]
    MixedBase,
}

/// Digit planes `T_0` (most significant) through `T_{L_max-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneStack {
    base: Base,
    planes: Vec<Vec<u8>>,
}

impl PlaneStack {
    pub fn new(base: Base, planes: Vec<Vec<u8>>) -> Self {
        PlaneStack { base, planes }
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn depth(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, n: usize) -> &[u8] {
        &self.planes[n]
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    pub fn digits_of(&self, element: usize) -> impl Iterator<Item = u8> + '_ {
        self.planes.iter().map(move |p| p[element])
    }
}

/// Largest digit count over all element models.
pub fn max_exponent(models: &[ElementModel]) -> u32 {
    models.iter().map(ElementModel::exponent).max().unwrap_or(0)
}

fn check_base(models: &[ElementModel], base: Base) -> Result<(), SliceError> {
    if models.iter().any(|m| m.base() != base) {
        return Err(SliceError::MixedBase);
    }
    Ok(())
}

/// Splits `values` into digit planes. Values outside an element's support
/// are clamped to the nearest endpoint first.
pub fn slice(values: &[i32], models: &[ElementModel], base: Base) -> Result<PlaneStack, SliceError> {
    if values.len() != models.len() {
        return Err(SliceError::LengthMismatch {
            what: "models",
            expected: values.len(),
            got: models.len(),
        });
    }
    check_base(models, base)?;
    let depth = max_exponent(models);
    let radix = base.radix();
    let mut planes = vec![vec![0u8; values.len()]; depth as usize];
    for (i, (&v, model)) in values.iter().zip(models).enumerate() {
        let mut shifted = model.clamp_index(v as i64);
        for n in (0..depth as usize).rev() {
            planes[n][i] = (shifted % radix) as u8;
            shifted /= radix;
        }
    }
    Ok(PlaneStack { base, planes })
}

/// Inverse of [`slice`] on a complete plane stack.
pub fn unslice(stack: &PlaneStack, models: &[ElementModel]) -> Result<Vec<i32>, SliceError> {
    let radix = stack.base.radix();
    check_base(models, stack.base)?;
    for plane in &stack.planes {
        if plane.len() != models.len() {
            return Err(SliceError::LengthMismatch {
                what: "plane",
                expected: models.len(),
                got: plane.len(),
            });
        }
    }
    let depth = stack.depth() as u32;
    let mut out = Vec::with_capacity(models.len());
    for (i, model) in models.iter().enumerate() {
        if model.exponent() > depth {
            return Err(SliceError::Corrupt {
                element: i,
                reason: "plane stack shallower than element support",
            });
        }
        let mut shifted = 0usize;
        for digit in stack.digits_of(i) {
            if digit as usize >= radix {
                return Err(SliceError::DigitOutOfRange { digit, radix });
            }
            shifted = shifted * radix + digit as usize;
        }
        if shifted >= model.len() {
            return Err(SliceError::Corrupt {
                element: i,
                reason: "digits address a value outside the support",
            });
        }
        out.push(model.value_at(shifted) as i32);
    }
    Ok(out)
}

/// Current sub-range `[lo, lo + base^(L_max - level))` of every element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalState {
    base: Base,
    depth: u32,
    lo: Vec<u32>,
    level: Vec<u8>,
}

impl IntervalState {
    /// Every element starts with the full padded range.
    pub fn new(len: usize, base: Base, depth: u32) -> Self {
        IntervalState {
            base,
            depth,
            lo: vec![0; len],
            level: vec![0; len],
        }
    }

    pub fn base(&self) -> Base {
        self.base
    }

    /// `L_max`.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Number of digits applied to `element`.
    pub fn level(&self, element: usize) -> u32 {
        self.level[element] as u32
    }

    pub fn width(&self, element: usize) -> usize {
        self.base.pow(self.depth - self.level(element))
    }

    /// Padded index range.
    pub fn range(&self, element: usize) -> (usize, usize) {
        let lo = self.lo[element] as usize;
        (lo, lo + self.width(element))
    }

    /// Padded range intersected with the element's own support.
    pub fn support_range(&self, element: usize, model: &ElementModel) -> (usize, usize) {
        let (lo, hi) = self.range(element);
        (lo.min(model.len()), hi.min(model.len()))
    }

    pub fn is_resolved(&self, element: usize) -> bool {
        self.level(element) == self.depth
    }

    /// Narrows `element` to the `digit`-th equal part of its current range.
    pub fn refine(&mut self, element: usize, digit: u8) -> Result<(), SliceError> {
        let radix = self.base.radix();
        if digit as usize >= radix {
            return Err(SliceError::DigitOutOfRange { digit, radix });
        }
        if self.is_resolved(element) {
            return Err(SliceError::FullyRefined { element });
        }
        let step = self.width(element) / radix;
        self.lo[element] += (step * digit as usize) as u32;
        self.level[element] += 1;
        Ok(())
    }

    /// MMSE estimate and conditional variance for every element.
    pub fn reconstruct(&self, models: &[ElementModel]) -> (Vec<f64>, Vec<f64>) {
        models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (lo, hi) = self.support_range(i, m);
                m.moments(lo, hi)
            })
            .unzip()
    }
}
