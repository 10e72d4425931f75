//! Rate-distortion priorities of the digits in one plane.
//!
//! For an element whose first `n` digits are known, let `q_k` be the
//! probability that digit `n` is `k`. Coding the digit costs
//! `ΔR = H(q)` bits and changes the expected squared error by
//! `ΔD = Σ q_k D_{n+1}^k - D_n ≤ 0`, where `D` is the conditional variance of
//! the element given its interval. Digits of a plane are sent in decreasing
//! order of `-ΔD/ΔR`.
//!
//! Two engines compute the same numbers. [`NaiveEngine`] walks the elements
//! one at a time and rebuilds each element's PMF on demand, as a direct
//! per-digit implementation would. [`VectorizedEngine`] stacks the
//! precomputed masses of every uncertain element into a matrix `P` and gets
//! everything from Hadamard products and row sums. Both reduce in the same
//! order, so their outputs agree exactly.
//!
//! Positions inside a row are `0..W` rather than the element's actual integer
//! values; variances are unchanged by the shift.

use alloc::vec::Vec;

use thiserror::Error;

use crate::entropy::{quantize_pmf, FrequencyTable};
use crate::gaussian::{build_element_model, ElementModel, GaussianError};
use crate::slicing::IntervalState;
use crate::tensor::{partition_row_sum, row_sum, sequential_sum, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorityError {
    #[error("element {element}: current interval carries no probability mass")]
    ImpossibleState { element: usize },
    #[error("element {element} has no digit left to code")]
    Resolved { element: usize },
    #[error("element {element} is at level {level}, expected plane {plane}")]
    WrongPlane {
        element: usize,
        level: u32,
        plane: usize,
    },
    #[error(transparent)]
    Model(#[from] GaussianError),
}

/// `q_k = P(digit = k | previous digits)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalPmf {
    q: [f64; 3],
    radix: u8,
}

impl ConditionalPmf {
    pub fn new(q: &[f64]) -> Self {
        let mut a = [0.0; 3];
        a[..q.len()].copy_from_slice(q);
        ConditionalPmf {
            q: a,
            radix: q.len() as u8,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.q[..self.radix as usize]
    }

    pub fn table(&self) -> FrequencyTable {
        quantize_pmf(self.probs())
    }
}

/// Conditional PMF of the next digit of `element` from its mass array.
pub fn conditional_pmf(
    model: &ElementModel,
    state: &IntervalState,
    element: usize,
) -> Result<ConditionalPmf, PriorityError> {
    if state.is_resolved(element) {
        return Err(PriorityError::Resolved { element });
    }
    let (lo, hi) = state.range(element);
    range_pmf(model, lo, hi, state.base().radix()).ok_or(PriorityError::ImpossibleState { element })
}

/// Next-digit PMF for the padded index range `[lo, hi)`; `None` if the range
/// holds no mass.
pub fn range_pmf(model: &ElementModel, lo: usize, hi: usize, radix: usize) -> Option<ConditionalPmf> {
    let step = (hi - lo) / radix;
    let masses = model.masses();
    if lo == 0 && step >= masses.len() {
        // Whole support inside the first sub-range: a padding digit.
        let mut q = [0.0; 3];
        q[0] = 1.0;
        return Some(ConditionalPmf::new(&q[..radix]));
    }
    if hi > masses.len() {
        return None;
    }
    let mut sums = [0.0; 3];
    for (k, s) in sums.iter_mut().take(radix).enumerate() {
        *s = sequential_sum(&masses[lo + k * step..lo + (k + 1) * step]);
    }
    let total = sequential_sum(&sums[..radix]);
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut q = [0.0; 3];
    for k in 0..radix {
        q[k] = sums[k] / total;
    }
    Some(ConditionalPmf::new(&q[..radix]))
}

/// `ΔR = -Σ q_k log₂ q_k`.
pub fn delta_r(q: &ConditionalPmf) -> f64 {
    q.probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * libm::log2(p))
        .sum()
}

/// `ΔD = Σ q_k D_{n+1}^k - D_n`, with each `D` from the element's actual
/// integer values.
pub fn delta_d(
    model: &ElementModel,
    state: &IntervalState,
    element: usize,
    q: &ConditionalPmf,
) -> f64 {
    let (lo, hi) = state.support_range(element, model);
    let (_, d_now) = model.moments(lo, hi);
    let radix = state.base().radix();
    let (plo, phi) = state.range(element);
    let step = (phi - plo) / radix;
    let mut expected = 0.0;
    for (k, &p) in q.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let a = (plo + k * step).min(model.len());
        let b = (plo + (k + 1) * step).min(model.len());
        expected += p * model.moments(a, b).1;
    }
    expected - d_now
}

/// Which digits of plane `n` must be coded, with their frequency tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneCensus {
    pub plane: usize,
    /// Elements with at least two possible digits, ascending.
    pub uncertain: Vec<usize>,
    /// `tables[j]` belongs to `uncertain[j]`.
    pub tables: Vec<FrequencyTable>,
    /// `(element, digit)` for every certain element.
    pub forced: Vec<(usize, u8)>,
}

impl PlaneCensus {
    pub fn table_of(&self, element: usize) -> Option<&FrequencyTable> {
        self.uncertain
            .binary_search(&element)
            .ok()
            .map(|j| &self.tables[j])
    }
}

fn check_level(state: &IntervalState, element: usize, plane: usize) -> Result<(), PriorityError> {
    let level = state.level(element);
    if level as usize != plane {
        return Err(PriorityError::WrongPlane {
            element,
            level,
            plane,
        });
    }
    Ok(())
}

/// Classifies every element for plane `plane`; certainty is judged on the
/// quantized table, the same one the entropy coder uses.
pub fn plane_census(
    models: &[ElementModel],
    state: &IntervalState,
    plane: usize,
) -> Result<PlaneCensus, PriorityError> {
    let mut census = PlaneCensus {
        plane,
        uncertain: Vec::new(),
        tables: Vec::new(),
        forced: Vec::new(),
    };
    for (i, model) in models.iter().enumerate() {
        check_level(state, i, plane)?;
        let table = conditional_pmf(model, state, i)?.table();
        match table.forced_digit() {
            Some(d) => census.forced.push((i, d)),
            None => {
                census.uncertain.push(i);
                census.tables.push(table);
            }
        }
    }
    Ok(census)
}

/// Priorities of the uncertain digits of one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanePriorities {
    pub plane: usize,
    pub uncertain: Vec<usize>,
    pub delta_r: Vec<f64>,
    pub delta_d: Vec<f64>,
    /// Element indices in coding order.
    pub order: Vec<usize>,
}

impl PlanePriorities {
    /// Sorts by decreasing `-ΔD/ΔR`, ties by ascending element index.
    pub fn from_deltas(plane: usize, uncertain: Vec<usize>, delta_r: Vec<f64>, delta_d: Vec<f64>) -> Self {
        let keys: Vec<f64> = delta_r
            .iter()
            .zip(&delta_d)
            .map(|(&r, &d)| {
                assert!(r > 0.0, "uncertain digit with zero rate");
                -d / r
            })
            .collect();
        let mut idx: Vec<usize> = (0..uncertain.len()).collect();
        idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
        let order = idx.iter().map(|&j| uncertain[j]).collect();
        PlanePriorities {
            plane,
            uncertain,
            delta_r,
            delta_d,
            order,
        }
    }

    pub fn priority(&self, j: usize) -> f64 {
        -self.delta_d[j] / self.delta_r[j]
    }

    pub fn is_empty(&self) -> bool {
        self.uncertain.is_empty()
    }
}

/// Strategy for computing plane priorities.
pub trait PriorityEngine {
    /// Priorities for plane `census.plane`. `census` is the shared ground
    /// truth for which digits are coded; an engine may recompute it.
    fn plane_priorities(
        &self,
        models: &[ElementModel],
        state: &IntervalState,
        census: &PlaneCensus,
    ) -> Result<PlanePriorities, PriorityError>;
}

impl<E: PriorityEngine + ?Sized> PriorityEngine for &E {
    fn plane_priorities(
        &self,
        models: &[ElementModel],
        state: &IntervalState,
        census: &PlaneCensus,
    ) -> Result<PlanePriorities, PriorityError> {
        (**self).plane_priorities(models, state, census)
    }
}

/// Element-at-a-time reference engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveEngine;

/// Matrix-form engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct VectorizedEngine;

impl PriorityEngine for NaiveEngine {
    fn plane_priorities(
        &self,
        models: &[ElementModel],
        state: &IntervalState,
        census: &PlaneCensus,
    ) -> Result<PlanePriorities, PriorityError> {
        plane_priorities_naive(models, state, census.plane)
    }
}

impl PriorityEngine for VectorizedEngine {
    fn plane_priorities(
        &self,
        models: &[ElementModel],
        state: &IntervalState,
        census: &PlaneCensus,
    ) -> Result<PlanePriorities, PriorityError> {
        let (dr, dd) = vectorized_deltas(models, state, &census.uncertain)?;
        Ok(PlanePriorities::from_deltas(
            census.plane,
            census.uncertain.clone(),
            dr,
            dd,
        ))
    }
}

/// One digit at a time: rebuild the element's PMF, test certainty, then
/// accumulate the moments of the current range and each sub-range.
pub fn plane_priorities_naive(
    models: &[ElementModel],
    state: &IntervalState,
    plane: usize,
) -> Result<PlanePriorities, PriorityError> {
    let radix = state.base().radix();
    let mut uncertain = Vec::new();
    let mut delta_r = Vec::new();
    let mut delta_d = Vec::new();
    for (i, stored) in models.iter().enumerate() {
        check_level(state, i, plane)?;
        let model = build_element_model(stored.sigma(), stored.base())?;
        let q = conditional_pmf(&model, state, i)?;
        if !q.table().is_uncertain() {
            continue;
        }
        let (lo, hi) = state.range(i);
        let row = &model.masses()[lo..hi];
        let step = row.len() / radix;

        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut t0 = [0.0; 3];
        let mut t1 = [0.0; 3];
        let mut t2 = [0.0; 3];
        for (j, &p) in row.iter().enumerate() {
            let y = j as f64;
            let py = p * y;
            let py2 = py * y;
            s0 += p;
            s1 += py;
            s2 += py2;
            let k = j / step;
            t0[k] += p;
            t1[k] += py;
            t2[k] += py2;
        }
        let mean = s1 / s0;
        let d_now = s2 / s0 - mean * mean;
        let mut next = [0.0; 3];
        for k in 0..radix {
            if t0[k] > 0.0 {
                let m = t1[k] / t0[k];
                next[k] = (t2[k] - m * m * t0[k]) / s0;
            }
        }
        let mut rate = 0.0;
        let mut expected = 0.0;
        for k in 0..radix {
            expected += next[k];
            let qk = t0[k] / s0;
            if qk > 0.0 {
                rate += -qk * libm::log2(qk);
            }
        }
        uncertain.push(i);
        delta_r.push(rate);
        delta_d.push(expected - d_now);
    }
    Ok(PlanePriorities::from_deltas(plane, uncertain, delta_r, delta_d))
}

/// `(ΔR, ΔD)` for `rows` (all at the same level) from the stacked mass
/// matrix.
pub fn vectorized_deltas(
    models: &[ElementModel],
    state: &IntervalState,
    rows: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), PriorityError> {
    let Some(&first) = rows.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let radix = state.base().radix();
    let width = state.width(first);
    let mut p = Matrix::zeros(rows.len(), width);
    for (r, &i) in rows.iter().enumerate() {
        let (lo, hi) = state.range(i);
        let masses = models[i].masses();
        if hi > masses.len() || hi - lo != width {
            return Err(PriorityError::ImpossibleState { element: i });
        }
        p.row_mut(r).copy_from_slice(&masses[lo..hi]);
    }
    let positions: Vec<f64> = (0..width).map(|j| j as f64).collect();
    let py = p.mul_row_broadcast(&positions);
    let py2 = py.mul_row_broadcast(&positions);

    let split = |m: &Matrix| partition_row_sum(m, radix).expect("width is a power of the radix");
    let (sp, spy, spy2) = (row_sum(&p), row_sum(&py), row_sum(&py2));
    let (tp, tpy, tpy2) = (split(&p), split(&py), split(&py2));

    let mut delta_r = Vec::with_capacity(rows.len());
    let mut delta_d = Vec::with_capacity(rows.len());
    for r in 0..rows.len() {
        let s0 = sp.get(r, 0);
        let mean = spy.get(r, 0) / s0;
        let d_now = spy2.get(r, 0) / s0 - mean * mean;
        let mut next = [0.0; 3];
        let mut q = [0.0; 3];
        for k in 0..radix {
            let t0 = tp.get(r, k);
            if t0 > 0.0 {
                let m = tpy.get(r, k) / t0;
                next[k] = (tpy2.get(r, k) - m * m * t0) / s0;
            }
            q[k] = t0 / s0;
        }
        let mut info = [0.0; 3];
        for k in 0..radix {
            if q[k] > 0.0 {
                info[k] = -q[k] * libm::log2(q[k]);
            }
        }
        let expected = sequential_sum(&next[..radix]);
        let rate = sequential_sum(&info[..radix]);
        delta_r.push(rate);
        delta_d.push(expected - d_now);
    }
    Ok((delta_r, delta_d))
}

/// Matrix-form priorities for plane `plane`.
pub fn plane_priorities_vectorized(
    models: &[ElementModel],
    state: &IntervalState,
    plane: usize,
) -> Result<PlanePriorities, PriorityError> {
    let census = plane_census(models, state, plane)?;
    VectorizedEngine.plane_priorities(models, state, &census)
}
