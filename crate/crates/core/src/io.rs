//! JSON and CSV text formats. Floats are written with 17 significant digits.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, Serializer};
use thiserror::Error;

use crate::error::Error;
use crate::heights::HeightVector;
use crate::model::CoefficientPoint;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

struct Precise;

impl Formatter for Precise {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, Precise);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

#[derive(Deserialize)]
struct PointInput {
    n: usize,
    x: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Deserialize)]
struct HeightInput {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

/// `{"n": N, "x": [..], "b": [..]}`, validated.
pub fn parse_point(text: &str) -> Result<CoefficientPoint, InputError> {
    let raw: PointInput = serde_json::from_str(text)?;
    let p = CoefficientPoint::new_unchecked(raw.x, raw.b);
    if p.period() != raw.n {
        return Err(Error::DimensionMismatch { expected: raw.n, found: p.period() }.into());
    }
    p.check()?;
    Ok(p)
}

/// Borrowed view serializing as `{"n", "x", "b"}` in that order.
#[derive(Serialize)]
pub struct PointJson<'a> {
    pub n: usize,
    pub x: &'a [f64],
    pub b: &'a [f64],
}

impl<'a> From<&'a CoefficientPoint> for PointJson<'a> {
    fn from(p: &'a CoefficientPoint) -> Self {
        PointJson { n: p.period(), x: p.x(), b: p.b() }
    }
}

pub fn point_to_json(p: &CoefficientPoint) -> String {
    to_json(&PointJson::from(p))
}

/// `{"h1": [..], "h2": [..]}`; other keys are ignored and `|h_n|` is derived.
pub fn parse_heights(text: &str) -> Result<HeightVector, InputError> {
    let raw: HeightInput = serde_json::from_str(text)?;
    Ok(HeightVector::from_components(raw.h1, raw.h2)?)
}

#[derive(Serialize)]
struct HeightJson<'a> {
    h1: &'a [f64],
    h2: &'a [f64],
}

pub fn heights_to_json(h: &HeightVector) -> String {
    to_json(&HeightJson { h1: &h.h1, h2: &h.h2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_point;

    #[test]
    fn point_round_trip_is_exact() {
        let p = random_point(5, 0.8, 3).unwrap();
        let text = point_to_json(&p);
        assert!(text.starts_with("{\"n\":5,\"x\":["));
        assert_eq!(parse_point(&text).unwrap(), p);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(to_json(&vec![1.0 / 3.0]), "[3.3333333333333331e-1]");
        let x: f64 = format_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(x, std::f64::consts::PI);
    }

    #[test]
    fn parse_errors_are_classified() {
        assert!(matches!(parse_point("{\"n\":2,"), Err(InputError::Json(_))));
        assert!(matches!(parse_point("{\"n\":2,\"x\":[1,0],\"b\":[0,0]}"), Err(InputError::Invalid(_))));
        assert!(matches!(
            parse_point("{\"n\":3,\"x\":[0,0],\"b\":[0,0]}"),
            Err(InputError::Invalid(Error::DimensionMismatch { .. }))
        ));
        assert!(matches!(parse_heights("{\"h1\":[1],\"h2\":[]}"), Err(InputError::Invalid(_))));
    }

    #[test]
    fn heights_ignore_extra_keys() {
        let h = parse_heights("{\"edges\":[0],\"h1\":[-0.6],\"h2\":[0.5],\"habs\":[9]}").unwrap();
        assert_eq!(h.h1, vec![-0.6]);
        assert!((h.habs[0] - (0.36f64 + 0.25).sqrt()).abs() < 1e-15);
        assert_eq!(parse_heights(&heights_to_json(&h)).unwrap(), h);
    }
}
