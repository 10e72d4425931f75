use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tritstream::bench::run_bench;
use tritstream::formats::{LatentFile, ReconstructionFile};
use tritstream::report::write_rd_csv;
use tritstream::{ThreadedEngine, ToolError};
use tritstream_core::codec::{
    decode_with, encode_with, rd_trace, truncate, EncodeOptions, Header, SigmaMode, DEFAULT_GROUP,
};
use tritstream_core::gaussian::Base;
use tritstream_core::synth::{generate, SynthConfig};
use tritstream_core::tensor::Shape;

/// Progressive entropy coding of quantized latent tensors.
#[derive(Debug, Parser)]
#[command(name = "tritstream", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode an LTEN latent file into a progressive stream.
    Encode {
        input: PathBuf,
        output: PathBuf,
        /// Digit base.
        #[arg(long, default_value_t = 3, value_parser = parse_base)]
        base: u8,
        /// 0 keeps scales out of band, 1 embeds them in the header.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        sigma_mode: u8,
    },
    /// Decode a stream, or a prefix of it, into an LREC reconstruction.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// LTEN file supplying the scales for streams without embedded ones.
        #[arg(long)]
        sigma: Option<PathBuf>,
        /// Decode only the first N bytes.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Keep the first N bytes of a stream.
    Truncate {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        budget: usize,
    },
    /// Write the rate-distortion curve of an LTEN file as CSV.
    RdCurve {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2u8, 3], value_parser = parse_base)]
        bases: Vec<u8>,
    },
    /// Time the reference and matrix priority engines against each other.
    Bench {
        #[arg(long, value_parser = parse_shape, default_value = "32,16,16")]
        shape: Shape,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
    },
    /// Generate a synthetic LTEN latent file.
    Synth {
        output: PathBuf,
        #[arg(long, value_parser = parse_shape)]
        shape: Shape,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        zero_weight: Option<f64>,
        #[arg(long)]
        sigma_lo: Option<f64>,
        #[arg(long)]
        sigma_hi: Option<f64>,
    },
}

fn parse_base(s: &str) -> Result<u8, String> {
    match s.trim() {
        "2" => Ok(2),
        "3" => Ok(3),
        other => Err(format!("base must be 2 or 3, got {other:?}")),
    }
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    let dims: Vec<u32> = s
        .split(',')
        .map(|d| d.trim().parse::<u32>().map_err(|e| format!("{d:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match dims[..] {
        [c, h, w] => Shape::new(c, h, w).map_err(|e| e.to_string()),
        _ => Err(format!("shape needs three comma-separated sizes, got {s:?}")),
    }
}

fn base_of(radix: u8) -> Base {
    Base::from_radix(radix).expect("validated by the argument parser")
}

fn read(path: &Path) -> Result<Vec<u8>, ToolError> {
    fs::read(path).map_err(|source| ToolError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ToolError> {
    fs::write(path, bytes).map_err(|source| ToolError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn dims(s: Shape) -> (u32, u32, u32) {
    (s.channels, s.height, s.width)
}

fn run(command: Command, out: &mut impl Write) -> Result<(), ToolError> {
    let engine = ThreadedEngine::from_env();
    let stdout_err = |source| ToolError::Io {
        path: "<stdout>".into(),
        source,
    };
    match command {
        Command::Encode {
            input,
            output,
            base,
            sigma_mode,
        } => {
            let latent = LatentFile::from_bytes(&read(&input)?)?;
            let opts = EncodeOptions {
                base: base_of(base),
                sigma_mode: SigmaMode::from_byte(sigma_mode).expect("validated by the argument parser"),
            };
            let enc = encode_with(&engine, latent.shape, &latent.values, &latent.sigmas, opts)?;
            write(&output, &enc.bytes)?;
            let k = latent.shape.len() as f64;
            writeln!(
                out,
                "{} bytes ({} header), {:.4} bits/element, {} clamped",
                enc.bytes.len(),
                enc.header_len,
                8.0 * enc.bytes.len() as f64 / k,
                enc.clamped
            )
            .map_err(stdout_err)?;
        }
        Command::Decode {
            input,
            output,
            sigma,
            budget,
        } => {
            let bytes = read(&input)?;
            let stream = match budget {
                Some(b) => truncate(&bytes, b)?,
                None => &bytes[..],
            };
            let header = Header::parse(stream)?;
            let sigmas = match (&header.sigmas, sigma) {
                (Some(_), _) => None,
                (None, Some(path)) => {
                    let latent = LatentFile::from_bytes(&read(&path)?)?;
                    if latent.shape != header.shape {
                        return Err(ToolError::SigmaShape {
                            expected: dims(header.shape),
                            got: dims(latent.shape),
                        });
                    }
                    Some(latent.sigmas)
                }
                (None, None) => return Err(ToolError::SigmaRequired),
            };
            let dec = decode_with(&engine, stream, sigmas.as_deref())?;
            let recon = ReconstructionFile {
                shape: dec.header.shape,
                values: dec.values.iter().map(|&v| v as f32).collect(),
            };
            write(&output, &recon.to_bytes())?;
            writeln!(
                out,
                "mse {:.6} over {} bytes, {} digits, {}",
                dec.mse,
                stream.len(),
                dec.digits,
                if dec.complete { "complete" } else { "partial" }
            )
            .map_err(stdout_err)?;
        }
        Command::Truncate { input, output, budget } => {
            let bytes = read(&input)?;
            let prefix = truncate(&bytes, budget)?;
            write(&output, prefix)?;
            writeln!(out, "kept {} of {} bytes", prefix.len(), bytes.len()).map_err(stdout_err)?;
        }
        Command::RdCurve {
            input,
            output,
            bases,
        } => {
            let latent = LatentFile::from_bytes(&read(&input)?)?;
            let mut curves = Vec::new();
            for radix in bases {
                let base = base_of(radix);
                let trace = rd_trace(
                    latent.shape,
                    &latent.values,
                    &latent.sigmas,
                    EncodeOptions::new(base),
                    DEFAULT_GROUP,
                )?;
                curves.push((base, trace));
            }
            let mut buf = Vec::new();
            write_rd_csv(&mut buf, &curves)?;
            write(&output, &buf)?;
            for (base, trace) in &curves {
                writeln!(out, "base {}: {} points", base.radix(), trace.len()).map_err(stdout_err)?;
            }
        }
        Command::Bench { shape, repeat } => {
            let report = run_bench(shape, repeat, Base::Ternary, 0)?;
            writeln!(out, "{report}\n").map_err(stdout_err)?;
            report.write_csv(&mut *out)?;
        }
        Command::Synth {
            output,
            shape,
            seed,
            zero_weight,
            sigma_lo,
            sigma_hi,
        } => {
            let mut config = SynthConfig::new(shape, seed);
            if let Some(z) = zero_weight {
                config.zero_weight = z;
            }
            if let Some(lo) = sigma_lo {
                config.sigma_lo = lo;
            }
            if let Some(hi) = sigma_hi {
                config.sigma_hi = hi;
            }
            let x = generate(&config)?;
            let file = LatentFile {
                shape: x.shape,
                values: x.values,
                sigmas: x.sigmas,
            };
            write(&output, &file.to_bytes())?;
            writeln!(out, "wrote {} elements", shape.len()).map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
