//! Color coding of displacement fields: hue encodes direction, value the
//! magnitude relative to the largest displacement in the image.

use image::{Rgb, RgbImage};
use metamorph_core::grid::DeformationField;

/// Fields whose largest displacement is below this many pixels are drawn
/// black instead of amplifying rounding noise to full brightness.
pub const DISPLACEMENT_FLOOR: f64 = 1e-6;

/// HSV to RGB, `h` in degrees, `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Hue of the displacement direction in `[0, 360)`.
pub fn direction_hue(d: [f64; 2]) -> f64 {
    d[1].atan2(d[0]).to_degrees().rem_euclid(360.0)
}

pub fn colorize_displacement(phi: &DeformationField) -> RgbImage {
    let dims = phi.dims();
    let max = phi.max_displacement();
    RgbImage::from_fn(dims.width() as u32, dims.height() as u32, |x, y| {
        let d = phi.displacement(x as usize, y as usize);
        let norm = d[0].hypot(d[1]);
        if max < DISPLACEMENT_FLOOR || norm == 0.0 {
            return Rgb([0, 0, 0]);
        }
        let rgb = hsv_to_rgb(direction_hue(d), 1.0, norm / max);
        Rgb(rgb.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}
