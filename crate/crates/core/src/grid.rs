//! Raster containers and the discrete operators shared by every other module.
//!
//! Pixel `(i, j)` is column `i` in `0..width` and row `j` in `0..height`; all
//! fields are stored row-major at address `j * width + i`. Deformations hold
//! absolute positions in pixel units, `(0..=width-1) x (0..=height-1)`; the
//! unit-square picture of the continuous model is recovered by dividing by
//! `width - 1` and `height - 1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ceil, exp, floor, Mat2};
use crate::{Error, Result};

/// Size of a computational grid, both sides at least 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    width: usize,
    height: usize,
}

impl GridDims {
    /// Create dimensions, rejecting grids without interior pixels.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::GridTooSmall { width, height });
        }
        Ok(GridDims { width, height })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels, `M * N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    /// Always false; a grid has at least nine pixels.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    /// Whether `(i, j)` lies on the outer pixel ring.
    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.width || j + 1 == self.height
    }

    /// Grid spacing factors `(M - 1, N - 1)` converting pixel-unit
    /// derivatives into unit-square derivatives.
    #[inline]
    pub fn scale(&self) -> [f64; 2] {
        [(self.width - 1) as f64, (self.height - 1) as f64]
    }

    /// As a tuple, for error reporting.
    pub fn as_tuple(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub(crate) fn ensure_same(&self, other: &GridDims) -> Result<()> {
        if self != other {
            return Err(Error::DimsMismatch {
                expected: self.as_tuple(),
                found: other.as_tuple(),
            });
        }
        Ok(())
    }
}

/// A scalar raster: one image channel, feature channel or anisotropy map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dims: GridDims,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(dims: GridDims) -> Self {
        Self::constant(dims, 0.0)
    }

    pub fn constant(dims: GridDims, value: f64) -> Self {
        ScalarField {
            dims,
            data: vec![value; dims.len()],
        }
    }

    /// Wrap a row-major buffer.
    pub fn from_vec(dims: GridDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                found: data.len(),
            });
        }
        Ok(ScalarField { dims, data })
    }

    /// Sample `f(i, j)` at every pixel.
    pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for j in 0..dims.height {
            for i in 0..dims.width {
                data.push(f(i, j));
            }
        }
        ScalarField { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.dims.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.dims.index(i, j);
        self.data[idx] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.dims, other.dims);
        ScalarField {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| v * s)
    }

    /// Euclidean inner product (plain sum, no grid normalization).
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Discrete squared L2 norm `1/(MN) * sum f^2`.
    pub fn mean_sq(&self) -> f64 {
        self.dot(self) / self.dims.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.dims.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replicate-padded access.
    #[inline]
    fn clamped(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.dims.width as isize - 1) as usize;
        let j = j.clamp(0, self.dims.height as isize - 1) as usize;
        self.get(i, j)
    }
}

/// A field of 2-vectors (x, y components).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    dims: GridDims,
    data: Vec<[f64; 2]>,
}

impl VectorField2 {
    pub fn zeros(dims: GridDims) -> Self {
        VectorField2 {
            dims,
            data: vec![[0.0; 2]; dims.len()],
        }
    }

    pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for j in 0..dims.height {
            for i in 0..dims.width {
                data.push(f(i, j));
            }
        }
        VectorField2 { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.data[self.dims.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: [f64; 2]) {
        let idx = self.dims.index(i, j);
        self.data[idx] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[[f64; 2]] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    /// Euclidean inner product over all components.
    pub fn dot(&self, other: &VectorField2) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .sum()
    }

    /// Component `c` as a scalar field.
    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            dims: self.dims,
            data: self.data.iter().map(|v| v[c]).collect(),
        }
    }
}

/// A field of 2x2 matrices, e.g. the discrete Jacobian of a deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2Field {
    dims: GridDims,
    data: Vec<Mat2>,
}

impl Matrix2Field {
    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Mat2 {
        self.data[self.dims.index(i, j)]
    }

    #[inline]
    pub fn as_slice(&self) -> &[Mat2] {
        &self.data
    }

    /// Smallest determinant over the grid.
    pub fn min_det(&self) -> f64 {
        self.data.iter().map(Mat2::det).fold(f64::INFINITY, f64::min)
    }
}

/// A discrete deformation: absolute pixel-unit positions with the outer
/// ring pinned to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    dims: GridDims,
    pos: Vec<[f64; 2]>,
}

impl DeformationField {
    /// The identity map.
    pub fn identity(dims: GridDims) -> Self {
        let mut pos = Vec::with_capacity(dims.len());
        for j in 0..dims.height {
            for i in 0..dims.width {
                pos.push([i as f64, j as f64]);
            }
        }
        DeformationField { dims, pos }
    }

    /// Identity plus a displacement; boundary pixels are pinned regardless of
    /// what `disp` returns there.
    pub fn from_displacement(dims: GridDims, mut disp: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        let mut phi = Self::identity(dims);
        for j in 1..dims.height - 1 {
            for i in 1..dims.width - 1 {
                let d = disp(i, j);
                phi.set(i, j, [i as f64 + d[0], j as f64 + d[1]]);
            }
        }
        phi
    }

    /// Build from positions, re-pinning the boundary.
    pub fn from_positions(dims: GridDims, pos: Vec<[f64; 2]>) -> Result<Self> {
        if pos.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                found: pos.len(),
            });
        }
        let mut phi = DeformationField { dims, pos };
        phi.pin_boundary();
        Ok(phi)
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.pos[self.dims.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, p: [f64; 2]) {
        let idx = self.dims.index(i, j);
        self.pos[idx] = p;
    }

    #[inline]
    pub fn as_slice(&self) -> &[[f64; 2]] {
        &self.pos
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [[f64; 2]] {
        &mut self.pos
    }

    /// Displacement `phi(i, j) - (i, j)`.
    #[inline]
    pub fn displacement(&self, i: usize, j: usize) -> [f64; 2] {
        let p = self.get(i, j);
        [p[0] - i as f64, p[1] - j as f64]
    }

    /// Displacement field `phi - id`.
    pub fn displacement_field(&self) -> VectorField2 {
        VectorField2::from_fn(self.dims, |i, j| self.displacement(i, j))
    }

    /// Largest displacement norm in pixels.
    pub fn max_displacement(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.dims.height {
            for i in 0..self.dims.width {
                let d = self.displacement(i, j);
                m = m.max(crate::math::sqrt(d[0] * d[0] + d[1] * d[1]));
            }
        }
        m
    }

    /// Reset the outer ring to identity positions.
    pub fn pin_boundary(&mut self) {
        let (w, h) = (self.dims.width, self.dims.height);
        for i in 0..w {
            self.set(i, 0, [i as f64, 0.0]);
            self.set(i, h - 1, [i as f64, (h - 1) as f64]);
        }
        for j in 0..h {
            self.set(0, j, [0.0, j as f64]);
            self.set(w - 1, j, [(w - 1) as f64, j as f64]);
        }
    }

    /// Whether every boundary pixel holds exactly its identity position.
    pub fn boundary_is_identity(&self) -> bool {
        let (w, h) = (self.dims.width, self.dims.height);
        (0..h).all(|j| {
            (0..w).all(|i| !self.dims.is_boundary(i, j) || self.get(i, j) == [i as f64, j as f64])
        })
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|p| p[0].is_finite() && p[1].is_finite())
    }

    /// Euclidean inner product of positions.
    pub fn dot(&self, other: &DeformationField) -> f64 {
        self.pos
            .iter()
            .zip(&other.pos)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .sum()
    }
}

/// Discrete Jacobian of `phi` in unit-square coordinates.
///
/// Forward differences of the pixel positions; the cross terms carry the
/// aspect factor `(M-1)/(N-1)` resp. its inverse so that the result is the
/// derivative of the unit-square map. Along the last column/row the
/// difference is replaced by the identity increment, hence the identity map
/// has exactly the identity Jacobian everywhere.
pub fn jacobian_forward(phi: &DeformationField) -> Matrix2Field {
    let dims = phi.dims;
    let s = dims.scale();
    let mut data = Vec::with_capacity(dims.len());
    for j in 0..dims.height {
        for i in 0..dims.width {
            let p = phi.get(i, j);
            let mut m = Mat2::IDENTITY;
            if i + 1 < dims.width {
                let q = phi.get(i + 1, j);
                m.0[0][0] = q[0] - p[0];
                m.0[1][0] = (q[1] - p[1]) * s[0] / s[1];
            }
            if j + 1 < dims.height {
                let q = phi.get(i, j + 1);
                m.0[0][1] = (q[0] - p[0]) * s[1] / s[0];
                m.0[1][1] = q[1] - p[1];
            }
            data.push(m);
        }
    }
    Matrix2Field { dims, data }
}

/// 3x3 Sobel gradient with replicate padding, normalized by 1/8 and scaled by
/// `(M-1, N-1)` so that it approximates the unit-square gradient.
pub fn sobel_gradient(channel: &ScalarField) -> VectorField2 {
    let s = channel.dims.scale();
    let mut out = sobel_pixel(channel);
    for v in out.data.iter_mut() {
        v[0] *= s[0];
        v[1] *= s[1];
    }
    out
}

/// Sobel gradient in pixel units (no grid scaling).
pub(crate) fn sobel_pixel(channel: &ScalarField) -> VectorField2 {
    let dims = channel.dims;
    VectorField2::from_fn(dims, |i, j| {
        let (i, j) = (i as isize, j as isize);
        let v = |di: isize, dj: isize| channel.clamped(i + di, j + dj);
        let gx = (v(1, -1) - v(-1, -1)) + 2.0 * (v(1, 0) - v(-1, 0)) + (v(1, 1) - v(-1, 1));
        let gy = (v(-1, 1) - v(-1, -1)) + 2.0 * (v(0, 1) - v(0, -1)) + (v(1, 1) - v(1, -1));
        [gx / 8.0, gy / 8.0]
    })
}

/// Normalized 1-D Gaussian taps for radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = ceil(3.0 * sigma) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| exp(-((k * k) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= total;
    }
    taps
}

/// Separable Gaussian blur with replicate boundary handling.
pub fn gaussian_blur(channel: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: "must be positive and finite",
        });
    }
    let taps = gaussian_kernel(sigma);
    let r = (taps.len() / 2) as isize;
    let dims = channel.dims;
    let rows = ScalarField::from_fn(dims, |i, j| {
        taps.iter()
            .enumerate()
            .map(|(t, w)| w * channel.clamped(i as isize + t as isize - r, j as isize))
            .sum()
    });
    Ok(ScalarField::from_fn(dims, |i, j| {
        taps.iter()
            .enumerate()
            .map(|(t, w)| w * rows.clamped(i as isize, j as isize + t as isize - r))
            .sum()
    }))
}

/// Bilinear resampling under the corner-aligned correspondence
/// `(0, 0) <-> (0, 0)`, `(M-1, N-1) <-> (M'-1, N'-1)`.
pub fn resample_bilinear(field: &ScalarField, new_dims: GridDims) -> ScalarField {
    let src = field.dims;
    let rx = (src.width - 1) as f64 / (new_dims.width - 1) as f64;
    let ry = (src.height - 1) as f64 / (new_dims.height - 1) as f64;
    ScalarField::from_fn(new_dims, |i, j| sample_bilinear(field, i as f64 * rx, j as f64 * ry))
}

/// Bilinear sample at a (clamped) pixel-unit position.
pub fn sample_bilinear(field: &ScalarField, x: f64, y: f64) -> f64 {
    let d = field.dims;
    let x = x.clamp(0.0, (d.width - 1) as f64);
    let y = y.clamp(0.0, (d.height - 1) as f64);
    let i0 = (floor(x) as usize).min(d.width - 2);
    let j0 = (floor(y) as usize).min(d.height - 2);
    let tx = x - i0 as f64;
    let ty = y - j0 as f64;
    let top = (1.0 - tx) * field.get(i0, j0) + tx * field.get(i0 + 1, j0);
    let bottom = (1.0 - tx) * field.get(i0, j0 + 1) + tx * field.get(i0 + 1, j0 + 1);
    (1.0 - ty) * top + ty * bottom
}
