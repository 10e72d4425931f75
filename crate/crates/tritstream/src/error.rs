use std::io;

use thiserror::Error;
use tritstream_core::codec::CodecError;
use tritstream_core::synth::SynthError;
use tritstream_core::tensor::TensorError;

use crate::bench::BenchError;
use crate::formats::FormatError;

/// Anything a command can fail with once its arguments have parsed.
#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("stream has no embedded scales; pass --sigma with the latent file")]
    SigmaRequired,
    #[error("scale file shape {got:?} does not match stream shape {expected:?}")]
    SigmaShape {
        expected: (u32, u32, u32),
        got: (u32, u32, u32),
    },
}
