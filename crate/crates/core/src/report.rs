//! Output artifacts: JSON with fixed float precision, CSV tables and SVG.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::geometry::RadialShape;

/// Pretty JSON where every float carries 17 significant digits.
struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as indented JSON with 17-significant-digit floats.
/// Key order follows struct field order.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Number of boundary samples in `shape.csv` and the SVG outline.
pub const SHAPE_SAMPLES: usize = 512;

/// `phi,r,x,y` at equispaced angles.
pub fn shape_csv(shape: &RadialShape) -> String {
    let mut out = String::from("phi,r,x,y\n");
    for [phi, r, x, y] in shape.sample(SHAPE_SAMPLES) {
        let _ = writeln!(out, "{phi:.16e},{r:.16e},{x:.16e},{y:.16e}");
    }
    out
}

/// Unit cell outline with the inclusion (or hole) filled. `y` points up.
pub fn shape_svg(shape: &RadialShape, hole: bool) -> String {
    const SIZE: f64 = 400.0;
    let fill = if hole { "#ffffff" } else { "#404040" };
    let background = if hole { "#b0b0b0" } else { "#ffffff" };
    let points: Vec<String> = shape
        .sample(SHAPE_SAMPLES)
        .iter()
        .map(|[_, _, x, y]| format!("{:.3},{:.3}", x * SIZE, (1.0 - y) * SIZE))
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{s}\" height=\"{s}\" fill=\"{background}\" stroke=\"#000000\" stroke-width=\"2\"/>\n\
         <polygon points=\"{}\" fill=\"{fill}\" stroke=\"#000000\" stroke-width=\"1\"/>\n\
         </svg>\n",
        points.join(" "),
        s = SIZE
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        b: f64,
        a: Vec<f64>,
        n: usize,
        missing: Option<f64>,
    }

    #[test]
    fn floats_have_seventeen_digits_and_round_trip() {
        let s = Sample {
            b: 0.1,
            a: vec![1.0, -2.5e-12, 1.0 / 3.0],
            n: 7,
            missing: None,
        };
        let text = to_json(&s).unwrap();
        assert!(text.contains("\"b\": 1.0000000000000001e-1"), "{text}");
        assert!(text.contains("\"n\": 7"));
        assert!(text.contains("\"missing\": null"));
        assert!(text.find("\"b\"").unwrap() < text.find("\"a\"").unwrap());
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"][2].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(back["a"][1].as_f64().unwrap(), -2.5e-12);
    }

    #[test]
    fn non_finite_values_become_null() {
        let text = to_json(&vec![f64::NAN, 1.0]).unwrap();
        assert!(text.contains("null"));
    }

    #[test]
    fn shape_csv_has_512_rows() {
        let shape = RadialShape::circle(2, 0.25).unwrap();
        let csv = shape_csv(&shape);
        assert_eq!(csv.lines().count(), SHAPE_SAMPLES + 1);
        let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 0.25, 0.75, 0.5]);
    }

    #[test]
    fn svg_contains_cell_and_outline() {
        let svg = shape_svg(&RadialShape::circle(2, 0.25).unwrap(), false);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<rect"));
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("300.000,200.000"));
    }
}
