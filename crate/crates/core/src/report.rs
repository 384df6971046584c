//! JSON emission with round-trip-safe number formatting.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::numeric::format_f64;

/// Compact JSON formatter that writes every float with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sig17Formatter;

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(format_f64(value).as_bytes())
        } else {
            CompactFormatter.write_null(writer)
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as a single JSON line (no trailing newline).
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter);
    value
        .serialize(&mut ser)
        .expect("serializing into memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_round_trip() {
        let v = json!({"n": 3, "values": [2.0 / 3.0, 0.1, -1e-300], "missing": null});
        let text = to_json_string(&v);
        assert!(text.contains("\"n\":3"));
        assert!(text.contains("6.6666666666666663e-1"));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["values"][0].as_f64().unwrap(), 2.0 / 3.0);
        assert_eq!(back["values"][1].as_f64().unwrap(), 0.1);
        assert_eq!(back["values"][2].as_f64().unwrap(), -1e-300);
    }
}
