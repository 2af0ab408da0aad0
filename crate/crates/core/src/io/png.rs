use std::path::Path;

use crate::error::{Error, Result};

/// Map `[lo, hi]` linearly onto 0..=255, clamping outside the window.
pub fn window_to_gray(values: &[f64], lo: f64, hi: f64) -> Result<Vec<u8>> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidArgument(format!("display window [{lo}, {hi}] must be finite with hi > lo")));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let t = if v.is_nan() { 0.0 } else { (v - lo) / (hi - lo) };
            (255.0 * t.clamp(0.0, 1.0)).round() as u8
        })
        .collect())
}

/// Encode an 8-bit grayscale PNG.
pub fn encode_png(gray: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    if gray.len() != width * height {
        return Err(Error::shape("png", format!("{} pixels for {width}x{height}", gray.len())));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(gray)?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, values: &[f64], width: usize, height: usize, window: (f64, f64)) -> Result<()> {
    let bytes = encode_png(&window_to_gray(values, window.0, window.1)?, width, height)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
