//! Reference-versus-matrix priority benchmark.
//!
//! Both engines run on the same synthetic tensor. Their streams and decodes
//! must agree exactly before any timing is reported.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use thiserror::Error;
use tritstream_core::codec::{decode_with, encode_with, CodecError, EncodeOptions};
use tritstream_core::entropy::encode_digits;
use tritstream_core::gaussian::{build_models, Base};
use tritstream_core::priority::{plane_census, NaiveEngine};
use tritstream_core::slicing::{max_exponent, slice, IntervalState};
use tritstream_core::synth::{generate, SynthConfig, SynthError};
use tritstream_core::tensor::Shape;

use crate::engine::{worker_count, ThreadedEngine, TimedEngine};
use crate::report::format_real;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("reference and matrix engines disagree: {0}")]
    Mismatch(&'static str),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Best wall time of each phase over the repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub shape: Shape,
    pub base: Base,
    pub repeat: usize,
    pub workers: usize,
    pub slice: Duration,
    pub priority_naive_encode: Duration,
    pub priority_vectorized_encode: Duration,
    pub priority_naive_decode: Duration,
    pub priority_vectorized_decode: Duration,
    pub entropy: Duration,
    pub encode_total: Duration,
    pub decode_total: Duration,
    pub machine: String,
}

fn ratio(slow: Duration, fast: Duration) -> f64 {
    slow.as_secs_f64() / fast.as_secs_f64().max(1e-9)
}

impl BenchReport {
    pub fn encode_speedup(&self) -> f64 {
        ratio(self.priority_naive_encode, self.priority_vectorized_encode)
    }

    pub fn decode_speedup(&self) -> f64 {
        ratio(self.priority_naive_decode, self.priority_vectorized_decode)
    }

    fn rows(&self) -> Vec<(&'static str, Duration)> {
        vec![
            ("slice", self.slice),
            ("priority_naive_encode", self.priority_naive_encode),
            ("priority_vectorized_encode", self.priority_vectorized_encode),
            ("priority_naive_decode", self.priority_naive_decode),
            ("priority_vectorized_decode", self.priority_vectorized_decode),
            ("entropy", self.entropy),
            ("encode_total", self.encode_total),
            ("decode_total", self.decode_total),
        ]
    }

    /// `metric,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["metric", "value"])?;
        for (name, t) in self.rows() {
            w.write_record([format!("{name}_s"), format_real(t.as_secs_f64())])?;
        }
        w.write_record(["speedup_encode".into(), format_real(self.encode_speedup())])?;
        w.write_record(["speedup_decode".into(), format_real(self.decode_speedup())])?;
        w.write_record(["machine", self.machine.as_str()])?;
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.shape;
        writeln!(
            f,
            "shape {}x{}x{}, base {}, best of {}, {} worker(s)",
            s.channels,
            s.height,
            s.width,
            self.base.radix(),
            self.repeat,
            self.workers
        )?;
        for (name, t) in self.rows() {
            writeln!(f, "  {name:<28} {:>12.6} s", t.as_secs_f64())?;
        }
        writeln!(f, "  speedup encode {:.1}x, decode {:.1}x", self.encode_speedup(), self.decode_speedup())?;
        write!(f, "  machine: {}", self.machine)
    }
}

pub fn machine_descriptor(workers: usize) -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {cores} core(s), {workers} worker(s)",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Times every phase on a synthetic tensor of `shape`, keeping the best
/// of `repeat` runs.
pub fn run_bench(shape: Shape, repeat: usize, base: Base, seed: u64) -> Result<BenchReport, BenchError> {
    let x = generate(&SynthConfig::new(shape, seed))?;
    let opts = EncodeOptions::new(base);
    let workers = worker_count();
    let engine = ThreadedEngine::new(workers);
    let mut best = BenchReport {
        shape,
        base,
        repeat: repeat.max(1),
        workers,
        slice: Duration::MAX,
        priority_naive_encode: Duration::MAX,
        priority_vectorized_encode: Duration::MAX,
        priority_naive_decode: Duration::MAX,
        priority_vectorized_decode: Duration::MAX,
        entropy: Duration::MAX,
        encode_total: Duration::MAX,
        decode_total: Duration::MAX,
        machine: machine_descriptor(workers),
    };
    let keep = |slot: &mut Duration, t: Duration| *slot = (*slot).min(t);

    for _ in 0..best.repeat {
        let t = Instant::now();
        let models = build_models(&x.sigmas, base).map_err(CodecError::from)?;
        slice(&x.values, &models, base).map_err(CodecError::from)?;
        keep(&mut best.slice, t.elapsed());

        let naive = TimedEngine::new(NaiveEngine, false);
        let reference = encode_with(&naive, shape, &x.values, &x.sigmas, opts)?;
        keep(&mut best.priority_naive_encode, naive.spent());

        let fast = TimedEngine::new(engine, true);
        let t = Instant::now();
        let enc = encode_with(&fast, shape, &x.values, &x.sigmas, opts)?;
        keep(&mut best.encode_total, t.elapsed());
        keep(&mut best.priority_vectorized_encode, fast.spent());
        if enc.bytes != reference.bytes {
            return Err(BenchError::Mismatch("encoded streams differ"));
        }

        let naive = TimedEngine::new(NaiveEngine, false);
        let slow = decode_with(&naive, &enc.bytes, Some(&x.sigmas))?;
        keep(&mut best.priority_naive_decode, naive.spent());
        let fast = TimedEngine::new(engine, true);
        let t = Instant::now();
        let dec = decode_with(&fast, &enc.bytes, Some(&x.sigmas))?;
        keep(&mut best.decode_total, t.elapsed());
        keep(&mut best.priority_vectorized_decode, fast.spent());
        if dec != slow {
            return Err(BenchError::Mismatch("decoded reconstructions differ"));
        }

        // Entropy coding alone, on the digit sequences the encoder produced.
        let stack = slice(&enc.values, &models, base).map_err(CodecError::from)?;
        let mut state = IntervalState::new(models.len(), base, max_exponent(&models));
        let mut planes = Vec::with_capacity(stack.depth());
        for (n, order) in enc.orders.iter().enumerate() {
            let census = plane_census(&models, &state, n).map_err(CodecError::from)?;
            let plane = stack.plane(n);
            let digits: Vec<u8> = order.iter().map(|&i| plane[i]).collect();
            let tables: Vec<_> = order.iter().map(|&i| *census.table_of(i).unwrap()).collect();
            planes.push((digits, tables));
            for (i, &d) in plane.iter().enumerate() {
                state.refine(i, d).map_err(CodecError::from)?;
            }
        }
        let t = Instant::now();
        for (digits, tables) in &planes {
            encode_digits(digits, tables).map_err(CodecError::from)?;
        }
        keep(&mut best.entropy, t.elapsed());
    }
    Ok(best)
}
