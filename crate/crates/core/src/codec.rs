//! Plane-ordered progressive encoder and decoder.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DPTS" | version u8 | radix u8 | sigma mode u8 | arithmetic profile u8
//! C u32 | H u32 | W u32 | L_max u8 | L_max x payload length u32
//! [K x σ f32 when sigma mode is 1]
//! payload of plane 0 | payload of plane 1 | ...
//! ```
//!
//! A plane's payload is the range-coded sequence of its uncertain digits in
//! priority order. Because the decoder only ever commits digits it can prove
//! from the bytes it has, any cut at or after the end of the header yields a
//! valid reconstruction. Directory lengths are kept as written when the
//! stream is cut; the decoder reads them as upper bounds.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::entropy::{self, decode_digits, encode_digits, prefix_requirements, ChunkEnd, EntropyError};
use crate::gaussian::{build_models, Base, ElementModel, GaussianError};
use crate::priority::{plane_census, range_pmf, PriorityEngine, PriorityError, VectorizedEngine};
use crate::slicing::{max_exponent, slice, IntervalState, SliceError};
use crate::tensor::{sequential_sum, Shape, TensorError};

pub const MAGIC: [u8; 4] = *b"DPTS";
pub const VERSION: u8 = 1;
/// IEEE-754 binary64, sequential left-to-right reductions.
pub const ARITHMETIC_PROFILE: u8 = 1;
/// Digits per point in [`rd_trace`].
pub const DEFAULT_GROUP: usize = 256;

const FIXED_HEADER: usize = 4 + 4 + 12 + 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("not a DPTS stream")]
    BadMagic,
    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid radix {0}")]
    BadBase(u8),
    #[error("invalid sigma mode {0}")]
    BadSigmaMode(u8),
    #[error("stream uses arithmetic profile {found}, this decoder implements {expected}")]
    ProfileMismatch { found: u8, expected: u8 },
    #[error("header needs {needed} bytes, only {got} available")]
    HeaderTruncated { needed: usize, got: usize },
    #[error("stream does not embed scales and none were supplied")]
    MissingSigmas,
    #[error("scales imply {found} planes but the stream declares {declared}")]
    DepthMismatch { declared: u32, found: u32 },
    #[error("byte budget {budget} is smaller than the {header}-byte header")]
    BudgetBelowHeader { budget: usize, header: usize },
    #[error("plane {plane}: priority engine disagrees with the plane census")]
    EngineMismatch { plane: usize },
    #[error("element {element} takes a digit the model cannot code on plane {plane}")]
    Uncodable { element: usize, plane: usize },
    #[error("plane payload of {0} bytes does not fit the directory")]
    PlaneTooLarge(usize),
    #[error(transparent)]
    Model(#[from] GaussianError),
    #[error(transparent)]
    Priority(#[from] PriorityError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Slice(#[from] SliceError),
}

/// Where the decoder gets the scales from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Supplied to the decoder separately.
    OutOfBand = 0,
    /// Stored after the plane directory.
    Embedded = 1,
}

impl SigmaMode {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SigmaMode::OutOfBand),
            1 => Some(SigmaMode::Embedded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub base: Base,
    pub sigma_mode: SigmaMode,
}

impl EncodeOptions {
    pub fn new(base: Base) -> Self {
        EncodeOptions {
            base,
            sigma_mode: SigmaMode::OutOfBand,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub base: Base,
    pub sigma_mode: SigmaMode,
    pub profile: u8,
    pub shape: Shape,
    pub plane_lengths: Vec<u32>,
    pub sigmas: Option<Vec<f32>>,
}

impl Header {
    pub fn depth(&self) -> u32 {
        self.plane_lengths.len() as u32
    }

    /// Bytes before the first payload.
    pub fn encoded_len(&self) -> usize {
        header_len(self.plane_lengths.len(), self.sigma_mode, self.shape.len())
    }

    pub fn payload_len(&self) -> usize {
        self.plane_lengths.iter().map(|&n| n as usize).sum()
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.base.radix() as u8);
        out.push(self.sigma_mode as u8);
        out.push(self.profile);
        for d in [self.shape.channels, self.shape.height, self.shape.width] {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.plane_lengths.len() as u8);
        for n in &self.plane_lengths {
            out.extend_from_slice(&n.to_le_bytes());
        }
        if let Some(s) = &self.sigmas {
            for v in s {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    /// Parses the header at the start of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Header, CodecError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(CodecError::HeaderTruncated {
                    needed: n,
                    got: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        if bytes[..4] != MAGIC {
            return Err(CodecError::BadMagic);
        }
        need(FIXED_HEADER)?;
        if bytes[4] != VERSION {
            return Err(CodecError::UnsupportedVersion(bytes[4]));
        }
        let base = Base::from_radix(bytes[5]).ok_or(CodecError::BadBase(bytes[5]))?;
        let sigma_mode = SigmaMode::from_byte(bytes[6]).ok_or(CodecError::BadSigmaMode(bytes[6]))?;
        let profile = bytes[7];
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let shape = Shape::new(u32_at(8), u32_at(12), u32_at(16))?;
        let depth = bytes[20] as usize;
        let total = header_len(depth, sigma_mode, shape.len());
        need(total)?;
        let plane_lengths = (0..depth).map(|n| u32_at(FIXED_HEADER + 4 * n)).collect();
        let sigmas = match sigma_mode {
            SigmaMode::OutOfBand => None,
            SigmaMode::Embedded => {
                let start = FIXED_HEADER + 4 * depth;
                Some(
                    bytes[start..total]
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
        };
        Ok(Header {
            base,
            sigma_mode,
            profile,
            shape,
            plane_lengths,
            sigmas,
        })
    }
}

fn header_len(depth: usize, mode: SigmaMode, elements: usize) -> usize {
    let sigma_bytes = match mode {
        SigmaMode::OutOfBand => 0,
        SigmaMode::Embedded => 4 * elements,
    };
    FIXED_HEADER + 4 * depth + sigma_bytes
}

/// Result of [`encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub header_len: usize,
    /// Values actually coded, after clamping to what the models can represent.
    pub values: Vec<i32>,
    /// Number of input values changed by clamping.
    pub clamped: usize,
    /// Coding order of every plane.
    pub orders: Vec<Vec<usize>>,
    /// `Σ ΔR` over coded digits.
    pub model_bits: f64,
}

impl Encoded {
    pub fn payload_bits(&self) -> u64 {
        8 * (self.bytes.len() - self.header_len) as u64
    }

    pub fn planes(&self) -> usize {
        self.orders.len()
    }
}

/// Decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub header: Header,
    /// MMSE estimate of every element.
    pub values: Vec<f64>,
    /// Conditional variance `D` of every element.
    pub variances: Vec<f64>,
    /// Current interval of every element as a range of mass indices.
    pub ranges: Vec<(usize, usize)>,
    /// Mean of `variances`.
    pub mse: f64,
    /// Coding order of every plane the decoder entered.
    pub orders: Vec<Vec<usize>>,
    /// Coded digits recovered.
    pub digits: usize,
    /// True when every digit of every plane was recovered.
    pub complete: bool,
}

impl DecodeOutput {
    /// Exact integers, available only for a complete decode.
    pub fn integers(&self) -> Option<Vec<i32>> {
        self.complete
            .then(|| self.values.iter().map(|&v| v as i32).collect())
    }
}

/// One point of a rate-distortion trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    /// Stream bits, header included.
    pub bits: u64,
    pub mse: f64,
}

fn check_inputs(shape: Shape, values: &[i32], sigmas: &[f32]) -> Result<(), CodecError> {
    let k = shape.len();
    if values.len() != k {
        return Err(CodecError::LengthMismatch {
            what: "values",
            expected: k,
            got: values.len(),
        });
    }
    if sigmas.len() != k {
        return Err(CodecError::LengthMismatch {
            what: "sigmas",
            expected: k,
            got: sigmas.len(),
        });
    }
    Ok(())
}

/// Nearest value to `value` whose every digit has a nonzero frequency under
/// `model`, with `depth` planes. Ties go toward zero.
pub fn clamp_codable(model: &ElementModel, depth: u32, value: i64) -> i64 {
    let base = model.base();
    let radix = base.radix();
    let target = model.clamp_index(value);
    let mut lo = 0usize;
    let mut width = base.pow(depth);
    // Once the target's own digit is uncodable, `pull` holds which end of the
    // chosen neighbour to head for: 1 = as high as possible, -1 = as low.
    let mut pull = 0i8;
    while width > 1 {
        let table = range_pmf(model, lo, lo + width, radix)
            .expect("reachable ranges carry mass")
            .table();
        let step = width / radix;
        let own = ((target.max(lo) - lo) / step).min(radix - 1);
        let digit = match pull {
            1 => (0..radix).rev().find(|&d| table.freq(d as u8) > 0).unwrap(),
            -1 => (0..radix).find(|&d| table.freq(d as u8) > 0).unwrap(),
            _ if table.freq(own as u8) > 0 => own,
            _ => {
                let best = (0..radix)
                    .filter(|&d| table.freq(d as u8) > 0)
                    .min_by_key(|&d| (d.abs_diff(own), d.abs_diff(radix / 2)))
                    .unwrap();
                pull = if best < own { 1 } else { -1 };
                best
            }
        };
        lo += digit * step;
        width = step;
    }
    model.value_at(lo)
}

/// Encodes with the matrix-form priority engine.
pub fn encode(shape: Shape, values: &[i32], sigmas: &[f32], opts: EncodeOptions) -> Result<Encoded, CodecError> {
    encode_with(&VectorizedEngine, shape, values, sigmas, opts)
}

pub fn encode_with<E: PriorityEngine>(
    engine: &E,
    shape: Shape,
    values: &[i32],
    sigmas: &[f32],
    opts: EncodeOptions,
) -> Result<Encoded, CodecError> {
    check_inputs(shape, values, sigmas)?;
    let base = opts.base;
    let models = build_models(sigmas, base)?;
    let depth = max_exponent(&models);
    let mut clamped = 0;
    let coded: Vec<i32> = values
        .iter()
        .zip(&models)
        .map(|(&v, m)| {
            let c = clamp_codable(m, depth, v as i64) as i32;
            clamped += (c != v) as usize;
            c
        })
        .collect();
    let stack = slice(&coded, &models, base)?;
    let mut state = IntervalState::new(models.len(), base, depth);

    let mut payloads = Vec::with_capacity(depth as usize);
    let mut orders = Vec::with_capacity(depth as usize);
    let mut model_bits = 0.0;
    for n in 0..depth as usize {
        let census = plane_census(&models, &state, n)?;
        let pri = engine.plane_priorities(&models, &state, &census)?;
        if pri.uncertain != census.uncertain {
            return Err(CodecError::EngineMismatch { plane: n });
        }
        let plane = stack.plane(n);
        for &(i, d) in &census.forced {
            if plane[i] != d {
                return Err(CodecError::Uncodable { element: i, plane: n });
            }
        }
        let digits: Vec<u8> = pri.order.iter().map(|&i| plane[i]).collect();
        let tables: Vec<_> = pri
            .order
            .iter()
            .map(|&i| *census.table_of(i).unwrap())
            .collect();
        let chunk = encode_digits(&digits, &tables).map_err(|e| match e {
            EntropyError::ZeroFrequency { .. } => CodecError::Uncodable { element: 0, plane: n },
            other => other.into(),
        })?;
        model_bits += sequential_sum(&pri.delta_r);
        for (i, &d) in plane.iter().enumerate() {
            state.refine(i, d)?;
        }
        payloads.push(chunk.bytes);
        orders.push(pri.order);
    }

    let header = Header {
        base,
        sigma_mode: opts.sigma_mode,
        profile: ARITHMETIC_PROFILE,
        shape,
        plane_lengths: payloads
            .iter()
            .map(|p| u32::try_from(p.len()).map_err(|_| CodecError::PlaneTooLarge(p.len())))
            .collect::<Result<_, _>>()?,
        sigmas: (opts.sigma_mode == SigmaMode::Embedded).then(|| sigmas.to_vec()),
    };
    let mut bytes = Vec::with_capacity(header.encoded_len() + header.payload_len());
    header.write(&mut bytes);
    let header_len = bytes.len();
    for p in &payloads {
        bytes.extend_from_slice(p);
    }
    Ok(Encoded {
        bytes,
        header_len,
        values: coded,
        clamped,
        orders,
        model_bits,
    })
}

/// Decodes any prefix of a stream that contains the whole header. Scales are
/// taken from the stream in embedded mode and from `sigmas` otherwise.
pub fn decode(stream: &[u8], sigmas: Option<&[f32]>) -> Result<DecodeOutput, CodecError> {
    decode_with(&VectorizedEngine, stream, sigmas)
}

pub fn decode_with<E: PriorityEngine>(
    engine: &E,
    stream: &[u8],
    sigmas: Option<&[f32]>,
) -> Result<DecodeOutput, CodecError> {
    let header = Header::parse(stream)?;
    if header.profile != ARITHMETIC_PROFILE {
        return Err(CodecError::ProfileMismatch {
            found: header.profile,
            expected: ARITHMETIC_PROFILE,
        });
    }
    let k = header.shape.len();
    let sigmas = match (&header.sigmas, sigmas) {
        (Some(s), _) => s.as_slice(),
        (None, Some(s)) => s,
        (None, None) => return Err(CodecError::MissingSigmas),
    };
    if sigmas.len() != k {
        return Err(CodecError::LengthMismatch {
            what: "sigmas",
            expected: k,
            got: sigmas.len(),
        });
    }
    let models = build_models(sigmas, header.base)?;
    let depth = max_exponent(&models);
    if depth != header.depth() {
        return Err(CodecError::DepthMismatch {
            declared: header.depth(),
            found: depth,
        });
    }

    let mut state = IntervalState::new(k, header.base, depth);
    let mut pos = header.encoded_len();
    let full_len = pos + header.payload_len();
    let mut orders = Vec::new();
    let mut digits = 0;
    let mut complete = true;
    for n in 0..depth as usize {
        let declared = header.plane_lengths[n] as usize;
        let avail = declared.min(stream.len() - pos);
        if !enters_plane(stream.len(), pos, declared, full_len) {
            complete = false;
            break;
        }
        let census = plane_census(&models, &state, n)?;
        let pri = engine.plane_priorities(&models, &state, &census)?;
        if pri.uncertain != census.uncertain {
            return Err(CodecError::EngineMismatch { plane: n });
        }
        for &(i, d) in &census.forced {
            state.refine(i, d)?;
        }
        let tables: Vec<_> = pri
            .order
            .iter()
            .map(|&i| *census.table_of(i).unwrap())
            .collect();
        let end = if avail == declared {
            ChunkEnd::Complete
        } else {
            ChunkEnd::Truncated
        };
        let got = decode_digits(&stream[pos..pos + avail], &tables, end)?;
        for (&i, &d) in pri.order.iter().zip(&got.digits) {
            state.refine(i, d)?;
        }
        digits += got.digits.len();
        let finished = got.digits.len() == pri.order.len();
        orders.push(pri.order);
        pos += avail;
        if !finished || avail < declared {
            complete = false;
            break;
        }
    }

    let (values, variances) = state.reconstruct(&models);
    let mse = sequential_sum(&variances) / k as f64;
    let ranges = models
        .iter()
        .enumerate()
        .map(|(i, m)| state.support_range(i, m))
        .collect();
    Ok(DecodeOutput {
        header,
        values,
        variances,
        ranges,
        mse,
        orders,
        digits,
        complete,
    })
}

/// A plane is entered once one of its bytes is present. An empty plane is
/// entered once anything after it is present, or when the stream is whole, so
/// a header-only prefix never applies digits.
fn enters_plane(available: usize, start: usize, declared: usize, full_len: usize) -> bool {
    if declared > 0 {
        available > start
    } else {
        available > start || available >= full_len
    }
}

/// Smallest prefix length that enters a plane starting at `start`.
fn entry_budget(start: usize, declared: usize, full_len: usize) -> usize {
    if declared > 0 || start < full_len {
        start + 1
    } else {
        full_len
    }
}

/// Byte prefix of `stream` of length `budget` (or the whole stream if shorter).
pub fn truncate(stream: &[u8], budget: usize) -> Result<&[u8], CodecError> {
    let header = Header::parse(stream)?.encoded_len();
    if budget < header {
        return Err(CodecError::BudgetBelowHeader { budget, header });
    }
    Ok(&stream[..budget.min(stream.len())])
}

/// Rate-distortion points of the stream for `values`, one every `group`
/// digits. Every point is exactly what [`decode`] returns for the prefix of
/// `bits / 8` bytes.
pub fn rd_trace(
    shape: Shape,
    values: &[i32],
    sigmas: &[f32],
    opts: EncodeOptions,
    group: usize,
) -> Result<Vec<RdPoint>, CodecError> {
    let enc = encode(shape, values, sigmas, opts)?;
    let models = build_models(sigmas, opts.base)?;
    let header = Header::parse(&enc.bytes)?;
    let depth = header.depth();
    let stack = slice(&enc.values, &models, opts.base)?;
    let group = group.max(1);

    let mut state = IntervalState::new(models.len(), opts.base, depth);
    let mut variances: Vec<f64> = (0..models.len())
        .map(|i| element_variance(&state, &models, i))
        .collect();
    let mse = |v: &[f64]| sequential_sum(v) / v.len() as f64;

    // Every digit becomes visible at a byte budget; budgets never decrease
    // along coding order.
    let full_len = enc.bytes.len();
    let mut points = vec![RdPoint {
        bits: 8 * enc.header_len as u64,
        mse: mse(&variances),
    }];
    let mut offset = enc.header_len;
    let mut since = 0;
    for n in 0..depth as usize {
        let plane = stack.plane(n);
        let order = &enc.orders[n];
        let declared = header.plane_lengths[n] as usize;
        let chunk = &enc.bytes[offset..offset + declared];
        let census = plane_census(&models, &state, n)?;
        let tables: Vec<_> = order
            .iter()
            .map(|&i| *census.table_of(i).unwrap())
            .collect();
        let needs = prefix_requirements(chunk, &tables)?;
        let entry = entry_budget(offset, declared, full_len);
        let visible = |j: usize| (offset + needs[j]).max(entry);
        // First budget of the next plane, for deciding where points may go.
        let next_plane = if n + 1 < depth as usize {
            let start = offset + declared;
            entry_budget(start, header.plane_lengths[n + 1] as usize, full_len)
        } else {
            usize::MAX
        };

        for &(i, d) in &census.forced {
            state.refine(i, d)?;
            variances[i] = element_variance(&state, &models, i);
        }
        if order.is_empty() && !census.forced.is_empty() && next_plane > entry {
            points.push(RdPoint {
                bits: 8 * entry as u64,
                mse: mse(&variances),
            });
        }
        for (j, &i) in order.iter().enumerate() {
            state.refine(i, plane[i])?;
            variances[i] = element_variance(&state, &models, i);
            since += 1;
            let here = visible(j);
            let last = j + 1 == order.len();
            let next = if last { next_plane } else { visible(j + 1) };
            if next > here && (since >= group || last) {
                points.push(RdPoint {
                    bits: 8 * here as u64,
                    mse: mse(&variances),
                });
                since = 0;
            }
        }
        offset += declared;
    }
    let last = RdPoint {
        bits: 8 * full_len as u64,
        mse: mse(&variances),
    };
    match points.last_mut() {
        Some(p) if p.bits == last.bits => *p = last,
        _ => points.push(last),
    }
    Ok(points)
}

fn element_variance(state: &IntervalState, models: &[ElementModel], i: usize) -> f64 {
    let (lo, hi) = state.support_range(i, &models[i]);
    models[i].moments(lo, hi).1
}

/// Distortion of a trace at a byte budget: the last point not above it, or
/// the first point below the header.
pub fn mse_at(trace: &[RdPoint], bits: u64) -> f64 {
    match trace.iter().rposition(|p| p.bits <= bits) {
        Some(j) => trace[j].mse,
        None => trace[0].mse,
    }
}

/// Frequency-table cost of the coded digits, in bits: what an ideal coder
/// would spend on this exact stream.
pub fn ideal_payload_bits(shape: Shape, values: &[i32], sigmas: &[f32], opts: EncodeOptions) -> Result<f64, CodecError> {
    let enc = encode(shape, values, sigmas, opts)?;
    let models = build_models(sigmas, opts.base)?;
    let depth = max_exponent(&models);
    let stack = slice(&enc.values, &models, opts.base)?;
    let mut state = IntervalState::new(models.len(), opts.base, depth);
    let mut bits = 0.0;
    for n in 0..depth as usize {
        let census = plane_census(&models, &state, n)?;
        let plane = stack.plane(n);
        for (&i, t) in census.uncertain.iter().zip(&census.tables) {
            bits += entropy::FrequencyTable::cost_bits(t, plane[i]);
        }
        for (i, &d) in plane.iter().enumerate() {
            state.refine(i, d)?;
        }
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::build_element_model;
    use crate::priority::NaiveEngine;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn gauss(seed: &mut u64) -> f64 {
        let u = lcg(seed).max(1e-300);
        let v = lcg(seed);
        libm::sqrt(-2.0 * libm::log(u)) * libm::cos(2.0 * core::f64::consts::PI * v)
    }

    fn random_tensor(shape: Shape, seed: u64) -> (Vec<i32>, Vec<f32>) {
        let mut s = seed;
        let sigmas: Vec<f32> = (0..shape.len())
            .map(|_| (0.1 * libm::exp(lcg(&mut s) * libm::log(80.0))) as f32)
            .collect();
        let values = sigmas
            .iter()
            .map(|&sg| libm::round(gauss(&mut s) * sg as f64) as i32)
            .collect();
        (values, sigmas)
    }

    fn shape(c: u32, h: u32, w: u32) -> Shape {
        Shape::new(c, h, w).unwrap()
    }

    #[test]
    fn single_element_small_sigma() {
        let s = shape(1, 1, 1);
        let enc = encode(s, &[0], &[0.2], EncodeOptions::new(Base::Ternary)).unwrap();
        assert_eq!(enc.planes(), 1);
        assert_eq!(enc.orders[0], vec![0]);
        // H(q) ≈ 0.109 bits plus the four-byte coder flush.
        assert_eq!(enc.bytes.len() - enc.header_len, 4);
        let dec = decode(&enc.bytes, Some(&[0.2])).unwrap();
        assert!(dec.complete);
        assert_eq!(dec.values, vec![0.0]);
        assert_eq!(dec.mse, 0.0);
    }

    #[test]
    fn header_roundtrip_and_errors() {
        let s = shape(2, 3, 4);
        let (v, sg) = random_tensor(s, 5);
        for mode in [SigmaMode::OutOfBand, SigmaMode::Embedded] {
            let opts = EncodeOptions {
                base: Base::Ternary,
                sigma_mode: mode,
            };
            let enc = encode(s, &v, &sg, opts).unwrap();
            let h = Header::parse(&enc.bytes).unwrap();
            assert_eq!(h.encoded_len(), enc.header_len);
            assert_eq!(h.shape, s);
            assert_eq!(h.encoded_len() + h.payload_len(), enc.bytes.len());
            let mut again = Vec::new();
            h.write(&mut again);
            assert_eq!(again[..], enc.bytes[..enc.header_len]);
            assert!(matches!(
                Header::parse(&enc.bytes[..enc.header_len - 1]),
                Err(CodecError::HeaderTruncated { .. })
            ));
        }
        let enc = encode(s, &v, &sg, EncodeOptions::new(Base::Binary)).unwrap();
        let mut bad = enc.bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode(&bad, Some(&sg)), Err(CodecError::BadMagic));
        let mut bad = enc.bytes.clone();
        bad[4] = 9;
        assert_eq!(decode(&bad, Some(&sg)), Err(CodecError::UnsupportedVersion(9)));
        let mut bad = enc.bytes.clone();
        bad[7] = 2;
        assert!(matches!(decode(&bad, Some(&sg)), Err(CodecError::ProfileMismatch { .. })));
        assert_eq!(decode(&enc.bytes, None), Err(CodecError::MissingSigmas));
        assert!(matches!(
            truncate(&enc.bytes, enc.header_len - 1),
            Err(CodecError::BudgetBelowHeader { .. })
        ));
        assert_eq!(truncate(&enc.bytes, enc.header_len).unwrap().len(), enc.header_len);
        assert_eq!(truncate(&enc.bytes, usize::MAX).unwrap(), &enc.bytes[..]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = shape(1, 2, 2);
        assert!(matches!(
            encode(s, &[0; 3], &[1.0; 4], EncodeOptions::new(Base::Ternary)),
            Err(CodecError::LengthMismatch { what: "values", .. })
        ));
        assert!(matches!(
            encode(s, &[0; 4], &[1.0; 5], EncodeOptions::new(Base::Ternary)),
            Err(CodecError::LengthMismatch { what: "sigmas", .. })
        ));
    }

    #[test]
    fn random_tensor_roundtrip_both_bases() {
        let s = shape(16, 8, 8);
        for base in [Base::Binary, Base::Ternary] {
            let (v, sg) = random_tensor(s, 11);
            let enc = encode(s, &v, &sg, EncodeOptions::new(base)).unwrap();
            let dec = decode(&enc.bytes, Some(&sg)).unwrap();
            assert!(dec.complete);
            assert_eq!(dec.mse, 0.0);
            assert_eq!(dec.integers().unwrap(), enc.values);
            assert_eq!(dec.orders, enc.orders);
        }
    }

    #[test]
    fn embedded_sigmas_decode_alone() {
        let s = shape(3, 2, 2);
        let (v, sg) = random_tensor(s, 3);
        let opts = EncodeOptions {
            base: Base::Ternary,
            sigma_mode: SigmaMode::Embedded,
        };
        let enc = encode(s, &v, &sg, opts).unwrap();
        assert_eq!(enc.header_len, FIXED_HEADER + 4 * enc.planes() + 4 * s.len());
        let dec = decode(&enc.bytes, None).unwrap();
        assert_eq!(dec.integers().unwrap(), enc.values);
    }

    #[test]
    fn header_only_prefix() {
        let s = shape(4, 3, 3);
        let (v, sg) = random_tensor(s, 21);
        let enc = encode(s, &v, &sg, EncodeOptions::new(Base::Ternary)).unwrap();
        let dec = decode(&enc.bytes[..enc.header_len], Some(&sg)).unwrap();
        assert!(dec.values.iter().all(|&x| x == 0.0));
        let models = build_models(&sg, Base::Ternary).unwrap();
        let d0: Vec<f64> = models.iter().map(|m| m.moments(0, m.len()).1).collect();
        assert_eq!(dec.mse, sequential_sum(&d0) / d0.len() as f64);
        assert!(!dec.complete);
    }

    #[test]
    fn all_zero_ternary_reconstructs_zero_at_every_cut() {
        let s = shape(4, 4, 4);
        let mut seed = 8;
        let sg: Vec<f32> = (0..s.len()).map(|_| (0.1 + 9.0 * lcg(&mut seed)) as f32).collect();
        let v = vec![0; s.len()];
        let enc = encode(s, &v, &sg, EncodeOptions::new(Base::Ternary)).unwrap();
        for cut in enc.header_len..=enc.bytes.len() {
            let dec = decode(&enc.bytes[..cut], Some(&sg)).unwrap();
            assert!(dec.values.iter().all(|&x| x == 0.0), "cut {cut}");
        }
    }

    #[test]
    fn mid_plane_cut_applies_a_priority_prefix() {
        let s = shape(8, 4, 4);
        let (v, sg) = random_tensor(s, 77);
        let enc = encode(s, &v, &sg, EncodeOptions::new(Base::Ternary)).unwrap();
        let h = Header::parse(&enc.bytes).unwrap();
        let p = (0..h.plane_lengths.len())
            .max_by_key(|&n| h.plane_lengths[n])
            .unwrap();
        assert!(h.plane_lengths[p] >= 4);
        let start = enc.header_len + h.plane_lengths[..p].iter().map(|&n| n as usize).sum::<usize>();
        let cut = start + h.plane_lengths[p] as usize / 2;
        let dec = decode(&enc.bytes[..cut], Some(&sg)).unwrap();
        assert_eq!(dec.orders.len(), p + 1);
        assert_eq!(dec.orders[..], enc.orders[..p + 1]);
        let before: usize = enc.orders[..p].iter().map(Vec::len).sum();
        assert!(dec.digits >= before);
        assert!(dec.digits < before + enc.orders[p].len());
    }

    #[test]
    fn naive_and_vectorized_streams_identical() {
        let s = shape(6, 4, 4);
        for base in [Base::Binary, Base::Ternary] {
            let (v, sg) = random_tensor(s, 4);
            let a = encode_with(&NaiveEngine, s, &v, &sg, EncodeOptions::new(base)).unwrap();
            let b = encode(s, &v, &sg, EncodeOptions::new(base)).unwrap();
            assert_eq!(a.bytes, b.bytes);
            let da = decode_with(&NaiveEngine, &a.bytes, Some(&sg)).unwrap();
            assert_eq!(da.integers().unwrap(), b.values);
        }
    }

    #[test]
    fn codable_clamp_keeps_central_values() {
        let m = build_element_model(1.0, Base::Ternary).unwrap();
        for v in -4..=4 {
            assert_eq!(clamp_codable(&m, 3, v), v);
        }
        let far = clamp_codable(&m, 3, 13);
        assert!(far < 13 && far > 0);
        assert_eq!(clamp_codable(&m, 3, -13), -far);
        // Padding planes never block values.
        let m = build_element_model(0.2, Base::Ternary).unwrap();
        assert_eq!(clamp_codable(&m, 4, 1), 1);
    }

    #[test]
    fn trace_points_match_decoder() {
        let s = shape(8, 4, 4);
        for base in [Base::Binary, Base::Ternary] {
            let (v, sg) = random_tensor(s, 123);
            let opts = EncodeOptions::new(base);
            let enc = encode(s, &v, &sg, opts).unwrap();
            let trace = rd_trace(s, &v, &sg, opts, 16).unwrap();
            assert_eq!(trace[0].bits, 8 * enc.header_len as u64);
            assert_eq!(trace.last().unwrap().bits, 8 * enc.bytes.len() as u64);
            assert_eq!(trace.last().unwrap().mse, 0.0);
            for p in &trace {
                let dec = decode(&enc.bytes[..(p.bits / 8) as usize], Some(&sg)).unwrap();
                assert_eq!(dec.mse, p.mse, "at {} bits", p.bits);
            }
            assert!(trace.windows(2).all(|w| w[0].bits <= w[1].bits && w[0].mse >= w[1].mse));
            assert_eq!(mse_at(&trace, 0), trace[0].mse);
        }
    }

    #[test]
    fn payload_close_to_table_cost() {
        let s = shape(16, 8, 8);
        let (v, sg) = random_tensor(s, 9);
        let opts = EncodeOptions::new(Base::Ternary);
        let enc = encode(s, &v, &sg, opts).unwrap();
        let ideal = ideal_payload_bits(s, &v, &sg, opts).unwrap();
        let actual = enc.payload_bits() as f64;
        assert!(actual >= ideal);
        assert!(actual <= ideal + 40.0 * enc.planes() as f64, "{actual} vs {ideal}");
    }
}
