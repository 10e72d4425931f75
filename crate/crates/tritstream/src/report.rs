//! CSV output. LF line endings, dot decimals, header row first.

use std::io::Write;

use tritstream_core::codec::RdPoint;
use tritstream_core::gaussian::Base;

/// Writes `base,cumulative_bits,mse` rows; each curve is emitted in order of
/// increasing bits.
pub fn write_rd_csv<W: Write>(out: W, curves: &[(Base, Vec<RdPoint>)]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["base", "cumulative_bits", "mse"])?;
    for (base, points) in curves {
        let mut sorted = points.clone();
        sorted.sort_by_key(|p| p.bits);
        for p in sorted {
            w.write_record([base.radix().to_string(), p.bits.to_string(), format_real(p.mse)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:?}")
}
