//! Static-table range coding of digit sequences.
//!
//! The coder is a byte-oriented, carry-propagating range coder with 16-bit
//! frequency tables. Decoding is prefix-safe: the decoder tracks the smallest
//! and largest code values consistent with the bytes it has actually seen and
//! only emits a digit when both bounds agree, so any byte prefix of a chunk
//! decodes to a prefix of its digits and never to a wrong digit.

use alloc::vec::Vec;

use thiserror::Error;

/// Frequency precision in bits.
pub const FREQ_BITS: u32 = 16;
/// Sum of every frequency table.
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;
/// Probabilities below this quantize to a zero frequency.
pub const MASS_FLOOR: f64 = 1.0 / FREQ_TOTAL as f64;

const TOP: u32 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntropyError {
    #[error("digit {digit} at position {position} has zero frequency")]
    ZeroFrequency { position: usize, digit: u8 },
    #[error("{digits} digits but {tables} tables")]
    TableCountMismatch { digits: usize, tables: usize },
    #[error("range decoder left its valid state at symbol {position}")]
    Corrupt { position: usize },
}

/// Quantized PMF over at most three digits; frequencies sum to [`FREQ_TOTAL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrequencyTable {
    freqs: [u32; 3],
    radix: u8,
}

impl FrequencyTable {
    pub fn new(freqs: &[u32]) -> Option<Self> {
        if !(2..=3).contains(&freqs.len()) || freqs.iter().sum::<u32>() != FREQ_TOTAL {
            return None;
        }
        let mut f = [0; 3];
        f[..freqs.len()].copy_from_slice(freqs);
        Some(FrequencyTable {
            freqs: f,
            radix: freqs.len() as u8,
        })
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs[..self.radix as usize]
    }

    pub fn radix(&self) -> usize {
        self.radix as usize
    }

    pub fn freq(&self, digit: u8) -> u32 {
        self.freqs.get(digit as usize).copied().unwrap_or(0)
    }

    /// Number of digits with nonzero frequency.
    pub fn support(&self) -> usize {
        self.freqs().iter().filter(|&&f| f > 0).count()
    }

    /// At least two digits are possible.
    pub fn is_uncertain(&self) -> bool {
        self.support() >= 2
    }

    /// The only possible digit, when there is exactly one.
    pub fn forced_digit(&self) -> Option<u8> {
        if self.support() != 1 {
            return None;
        }
        self.freqs().iter().position(|&f| f > 0).map(|d| d as u8)
    }

    fn start(&self, digit: u8) -> u32 {
        self.freqs[..digit as usize].iter().sum()
    }

    fn lookup(&self, value: u32) -> u8 {
        let mut cum = 0;
        for (d, &f) in self.freqs().iter().enumerate() {
            cum += f;
            if value < cum {
                return d as u8;
            }
        }
        unreachable!("value below FREQ_TOTAL")
    }

    /// Ideal code length of `digit` under this table.
    pub fn cost_bits(&self, digit: u8) -> f64 {
        -libm::log2(self.freq(digit) as f64 / FREQ_TOTAL as f64)
    }
}

/// Largest-remainder apportionment of `q` onto [`FREQ_TOTAL`].
///
/// Entries below [`MASS_FLOOR`] get zero; every other entry gets at least one.
/// Leftover units go to the largest fractional remainders, ties to the lower
/// digit.
pub fn quantize_pmf(q: &[f64]) -> FrequencyTable {
    assert!((2..=3).contains(&q.len()), "pmf over 2 or 3 digits");
    let scale = FREQ_TOTAL as f64;
    let mut freqs = [0u32; 3];
    let mut rema = [-1.0f64; 3];
    let mut assigned = 0u32;
    for (k, &p) in q.iter().enumerate() {
        let scaled = p * scale;
        if scaled >= 1.0 {
            let f = libm::floor(scaled).min(scale);
            freqs[k] = f as u32;
            rema[k] = scaled - f;
            assigned += freqs[k];
        }
    }
    let mut order = [0usize; 3];
    let mut live = 0;
    for (k, &r) in rema.iter().enumerate().take(q.len()) {
        if r >= 0.0 {
            order[live] = k;
            live += 1;
        }
    }
    assert!(live > 0, "pmf has no mass above the floor");
    let order = &mut order[..live];
    order.sort_by(|&a, &b| rema[b].total_cmp(&rema[a]).then(a.cmp(&b)));
    let mut left = FREQ_TOTAL.saturating_sub(assigned);
    let mut i = 0;
    while left > 0 {
        freqs[order[i % order.len()]] += 1;
        left -= 1;
        i += 1;
    }
    FrequencyTable {
        freqs,
        radix: q.len() as u8,
    }
}

/// Encoded digits of one plane.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodedChunk {
    pub bytes: Vec<u8>,
    pub symbol_count: usize,
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    started: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            started: false,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, table: &FrequencyTable, digit: u8) {
        let size = table.freq(digit);
        debug_assert!(size > 0);
        let start = table.start(digit);
        let r = self.range >> FREQ_BITS;
        self.low += r as u64 * start as u64;
        if start + size == FREQ_TOTAL {
            self.range -= r * start;
        } else {
            self.range = r * size;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.emit(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn emit(&mut self, byte: u8) {
        if self.started {
            self.out.push(byte);
        } else {
            // The leading byte is structurally zero.
            debug_assert_eq!(byte, 0);
            self.started = true;
        }
    }

    /// Flushes the four bytes of `low`.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

/// Encodes `digits[j]` under `tables[j]`.
pub fn encode_digits(digits: &[u8], tables: &[FrequencyTable]) -> Result<CodedChunk, EntropyError> {
    if digits.len() != tables.len() {
        return Err(EntropyError::TableCountMismatch {
            digits: digits.len(),
            tables: tables.len(),
        });
    }
    if digits.is_empty() {
        return Ok(CodedChunk::default());
    }
    let mut enc = RangeEncoder::new();
    for (position, (&digit, table)) in digits.iter().zip(tables).enumerate() {
        if table.freq(digit) == 0 {
            return Err(EntropyError::ZeroFrequency { position, digit });
        }
        enc.encode(table, digit);
    }
    Ok(CodedChunk {
        bytes: enc.finish(),
        symbol_count: digits.len(),
    })
}

/// Whether the bytes handed to the decoder are the whole chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkEnd {
    /// The chunk ends here; missing bytes are zero.
    Complete,
    /// More bytes may follow; missing bytes are unknown.
    Truncated,
}

/// Range decoder over a possibly truncated chunk.
#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    limit: usize,
    end: ChunkEnd,
    pos: usize,
    range: u32,
    lo: u32,
    hi: u32,
    decoded: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8], end: ChunkEnd) -> Self {
        Self::with_limit(data, data.len(), end)
    }

    fn with_limit(data: &'a [u8], limit: usize, end: ChunkEnd) -> Self {
        let mut dec = RangeDecoder {
            data,
            limit: limit.min(data.len()),
            end,
            pos: 0,
            range: u32::MAX,
            lo: 0,
            hi: 0,
            decoded: 0,
        };
        for _ in 0..4 {
            dec.shift_in();
        }
        dec
    }

    fn next_byte(&mut self) -> (u8, u8) {
        let p = self.pos;
        self.pos += 1;
        if p < self.limit {
            let b = self.data[p];
            (b, b)
        } else {
            match self.end {
                ChunkEnd::Complete => (0, 0),
                ChunkEnd::Truncated => (0x00, 0xFF),
            }
        }
    }

    fn shift_in(&mut self) {
        let (a, b) = self.next_byte();
        self.lo = (self.lo << 8) | a as u32;
        let hi = ((self.hi as u64) << 8) | b as u64;
        self.hi = hi.min(self.range as u64 - 1) as u32;
    }

    /// Bytes read so far, capped at the data length.
    pub fn consumed(&self) -> usize {
        self.pos.min(self.data.len())
    }

    pub fn decoded(&self) -> usize {
        self.decoded
    }

    /// Next digit, or `None` once the available bytes no longer determine it.
    pub fn decode(&mut self, table: &FrequencyTable) -> Result<Option<u8>, EntropyError> {
        let corrupt = EntropyError::Corrupt {
            position: self.decoded,
        };
        if self.lo > self.hi {
            return Err(corrupt);
        }
        let r = self.range >> FREQ_BITS;
        let top = FREQ_TOTAL - 1;
        let d_lo = table.lookup((self.lo / r).min(top));
        let d_hi = table.lookup((self.hi / r).min(top));
        if d_lo != d_hi {
            return Ok(None);
        }
        let start = table.start(d_lo);
        let size = table.freq(d_lo);
        let base = r * start;
        self.lo -= base;
        self.hi -= base;
        if start + size == FREQ_TOTAL {
            self.range -= base;
        } else {
            self.range = r * size;
        }
        if self.lo >= self.range {
            return Err(corrupt);
        }
        self.hi = self.hi.min(self.range - 1);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_in();
        }
        self.decoded += 1;
        Ok(Some(d_lo))
    }
}

/// Result of decoding a (possibly truncated) chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedDigits {
    pub digits: Vec<u8>,
    pub consumed: usize,
    /// The bytes ran out before every table was used.
    pub exhausted: bool,
}

/// Decodes up to `tables.len()` digits from `bytes`.
pub fn decode_digits(
    bytes: &[u8],
    tables: &[FrequencyTable],
    end: ChunkEnd,
) -> Result<DecodedDigits, EntropyError> {
    let mut digits = Vec::with_capacity(tables.len());
    if tables.is_empty() {
        return Ok(DecodedDigits {
            digits,
            consumed: 0,
            exhausted: false,
        });
    }
    let mut dec = RangeDecoder::new(bytes, end);
    for table in tables {
        match dec.decode(table)? {
            Some(d) => digits.push(d),
            None => break,
        }
    }
    let exhausted = digits.len() < tables.len();
    Ok(DecodedDigits {
        digits,
        consumed: dec.consumed(),
        exhausted,
    })
}

/// For each symbol `j` of a complete chunk, the shortest byte prefix from
/// which the prefix-safe decoder recovers symbols `0..=j`.
pub fn prefix_requirements(bytes: &[u8], tables: &[FrequencyTable]) -> Result<Vec<usize>, EntropyError> {
    let count = tables.len();
    if count == 0 {
        return Ok(Vec::new());
    }
    // States of the full decoder before each symbol, with the number of
    // bytes they have read.
    let mut snapshots = Vec::with_capacity(count);
    let mut truth = RangeDecoder::new(bytes, ChunkEnd::Complete);
    for table in tables {
        snapshots.push((truth.pos, truth.range, truth.lo));
        if truth.decode(table)?.is_none() {
            return Err(EntropyError::Corrupt {
                position: truth.decoded,
            });
        }
    }

    let mut need = Vec::with_capacity(count);
    let mut snap = 0usize;
    for q in 0..=bytes.len() {
        let end = if q == bytes.len() {
            ChunkEnd::Complete
        } else {
            ChunkEnd::Truncated
        };
        while snap + 1 < count && snapshots[snap + 1].0 <= q {
            snap += 1;
        }
        let (mut dec, first) = if snapshots[snap].0 <= q {
            let (pos, range, lo) = snapshots[snap];
            let dec = RangeDecoder {
                data: bytes,
                limit: q,
                end,
                pos,
                range,
                lo,
                hi: lo,
                decoded: snap,
            };
            (dec, snap)
        } else {
            (RangeDecoder::with_limit(bytes, q, end), 0)
        };
        let mut reached = first;
        for table in &tables[first..] {
            match dec.decode(table)? {
                Some(_) => reached += 1,
                None => break,
            }
        }
        while need.len() < reached {
            need.push(q);
        }
        if need.len() == count {
            break;
        }
    }
    debug_assert_eq!(need.len(), count);
    Ok(need)
}
