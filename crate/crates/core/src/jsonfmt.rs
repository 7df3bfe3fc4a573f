//! JSON serialization with floats written to 17 significant digits.
//!
//! 17 digits round-trip every finite `f64` exactly, and the fixed width
//! keeps save -> load -> save byte-identical for corpora and checkpoints.

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};
use std::io;

#[derive(Default)]
pub struct F64Exact(CompactFormatter);

impl Formatter for F64Exact {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn to_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, F64Exact::default());
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-7, 1.0, f64::MIN_POSITIVE, -0.0] {
            let s = to_string(&v).unwrap();
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn formatting_is_stable_under_reserialization() {
        let v = std::f64::consts::PI;
        let once = to_string(&v).unwrap();
        let back: f64 = serde_json::from_str(&once).unwrap();
        assert_eq!(to_string(&back).unwrap(), once);
    }
}
