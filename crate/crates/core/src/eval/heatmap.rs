//! Binary PPM (P6) heatmaps with a blue-white-red colormap over `[min, max]`.
//! The image is drawn with `y` increasing upwards, so grid row 0 is the
//! bottom image row.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::Field;

/// Floor applied before taking logs of standard deviations.
pub const LOG_FLOOR: f64 = 1e-300;

/// Maps `t ∈ [0, 1]` to blue (0), white (½) and red (1).
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.5 } else { t.clamp(0.0, 1.0) };
    let ramp = |s: f64| (255.0 * s).round() as u8;
    if t < 0.5 {
        let s = 2.0 * t;
        [ramp(s), ramp(s), 255]
    } else {
        let s = 2.0 * (1.0 - t);
        [255, ramp(s), ramp(s)]
    }
}

pub fn encode_heatmap(field: &Field) -> Vec<u8> {
    let n = field.grid().n();
    let (lo, hi) = field
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
    for i in (0..n).rev() {
        for j in 0..n {
            let t = if span > 0.0 { (field.get(i, j) - lo) / span } else { 0.5 };
            out.extend_from_slice(&colormap(t));
        }
    }
    out
}

pub fn write_heatmap(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_heatmap(field)).map_err(|e| Error::io(path, e))
}

/// Natural log of a nonnegative field, floored at [`LOG_FLOOR`].
pub fn log_field(field: &Field) -> Field {
    let data = field.data().iter().map(|&v| v.max(LOG_FLOOR).ln()).collect();
    Field::from_raw(*field.grid(), data)
}
