//! PNG input/output and edge-replicating padding.
//!
//! 8-bit samples map to `[0, 1]` by division by 255, with no gamma
//! conversion.

use std::path::Path;

use anyhow::{Context, Result};
use image::{GrayImage, Luma, Rgb, RgbImage};
use metamorph_core::grid::{GridDims, ScalarField};
use serde::Serialize;

pub type Rgb3 = [ScalarField; 3];

pub fn load_rgb(path: &Path) -> Result<Rgb3> {
    let img = image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .into_rgb8();
    rgb_from_image(&img)
}

pub fn rgb_from_image(img: &RgbImage) -> Result<Rgb3> {
    let dims = GridDims::new(img.width() as usize, img.height() as usize)?;
    let channel = |c: usize| {
        ScalarField::from_fn(dims, |i, j| img.get_pixel(i as u32, j as u32)[c] as f64 / 255.0)
    };
    Ok([channel(0), channel(1), channel(2)])
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn rgb_to_image(rgb: &Rgb3) -> RgbImage {
    let d = rgb[0].dims();
    RgbImage::from_fn(d.width() as u32, d.height() as u32, |x, y| {
        let (i, j) = (x as usize, y as usize);
        Rgb([quantize(rgb[0].get(i, j)), quantize(rgb[1].get(i, j)), quantize(rgb[2].get(i, j))])
    })
}

pub fn gray_to_image(f: &ScalarField) -> GrayImage {
    let d = f.dims();
    GrayImage::from_fn(d.width() as u32, d.height() as u32, |x, y| {
        Luma([quantize(f.get(x as usize, y as usize))])
    })
}

pub fn save_rgb(path: &Path, rgb: &Rgb3) -> Result<()> {
    rgb_to_image(rgb)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn save_gray(path: &Path, f: &ScalarField) -> Result<()> {
    gray_to_image(f)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// Margins added around an image, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Padding {
    pub left: usize,
    pub right: usize,
    pub top: usize,
    pub bottom: usize,
}

impl Padding {
    /// Centered margins growing `dims` to the next multiples of `multiple`.
    pub fn to_multiple(dims: GridDims, multiple: usize) -> Padding {
        let grow = |n: usize| n.div_ceil(multiple) * multiple - n;
        let (gx, gy) = (grow(dims.width()), grow(dims.height()));
        Padding {
            left: gx / 2,
            right: gx - gx / 2,
            top: gy / 2,
            bottom: gy - gy / 2,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Padding::default()
    }

    pub fn padded(&self, dims: GridDims) -> Result<GridDims> {
        Ok(GridDims::new(
            dims.width() + self.left + self.right,
            dims.height() + self.top + self.bottom,
        )?)
    }
}

/// Extend a channel by replicating its edge samples.
pub fn pad(f: &ScalarField, p: Padding) -> Result<ScalarField> {
    let d = f.dims();
    let out = p.padded(d)?;
    Ok(ScalarField::from_fn(out, |i, j| {
        let x = i.saturating_sub(p.left).min(d.width() - 1);
        let y = j.saturating_sub(p.top).min(d.height() - 1);
        f.get(x, y)
    }))
}

/// Undo [`pad`].
pub fn crop(f: &ScalarField, p: Padding) -> Result<ScalarField> {
    let d = f.dims();
    let out = GridDims::new(
        d.width() - p.left - p.right,
        d.height() - p.top - p.bottom,
    )?;
    Ok(ScalarField::from_fn(out, |i, j| f.get(i + p.left, j + p.top)))
}

pub fn crop_image(img: &RgbImage, p: Padding) -> RgbImage {
    let w = img.width() - (p.left + p.right) as u32;
    let h = img.height() - (p.top + p.bottom) as u32;
    image::imageops::crop_imm(img, p.left as u32, p.top as u32, w, h).to_image()
}
