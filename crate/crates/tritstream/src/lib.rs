//! File formats, reports, benchmarks and a multi-threaded priority engine
//! around [`tritstream_core`].

pub mod bench;
pub mod engine;
pub mod error;
pub mod formats;
pub mod report;

pub use bench::{run_bench, BenchError, BenchReport};
pub use engine::{ThreadedEngine, TimedEngine};
pub use error::ToolError;
pub use formats::{FormatError, LatentFile, ReconstructionFile};
