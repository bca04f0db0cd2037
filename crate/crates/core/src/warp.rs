//! Cubic B-spline warping of feature channels.
//!
//! A channel is first converted into interpolating spline coefficients
//! (recursive prefilter, whole-sample mirror boundary), then evaluated at
//! deformed positions with the 4x4 cubic B-spline stencil. Stencil taps that
//! fall outside the grid are folded back by the same mirror rule, so that
//! evaluation at the nodes reproduces the samples exactly.
//!
//! Both stages are linear; their transposes are provided so that feature
//! gradients can be pulled back through the warp.

use alloc::vec;

use crate::grid::{DeformationField, GridDims, ScalarField};
use crate::math::{floor, powi, sqrt};
use crate::Result;

/// Coefficients of the cubic B-spline interpolating a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoefficients(ScalarField);

impl SplineCoefficients {
    /// Wrap raw coefficients (no prefiltering applied).
    pub fn from_raw(coef: ScalarField) -> Self {
        SplineCoefficients(coef)
    }

    pub fn dims(&self) -> GridDims {
        self.0.dims()
    }

    pub fn as_field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }

    /// Evaluate the spline at a pixel-unit position (clamped to the grid).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dims = self.dims();
        let (ix, wx) = stencil(x, dims.width());
        let (iy, wy) = stencil(y, dims.height());
        let mut acc = 0.0;
        for b in 0..4 {
            let mut row = 0.0;
            for a in 0..4 {
                row += wx[a] * self.0.get(ix[a], iy[b]);
            }
            acc += wy[b] * row;
        }
        acc
    }
}

/// Pole of the cubic B-spline interpolation filter.
fn pole() -> f64 {
    sqrt(3.0) - 2.0
}

/// Whole-sample symmetric reflection of an index into `0..n`.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Cubic B-spline weights at fractional offset `t` in `[0, 1)`, for taps
/// `-1, 0, 1, 2`.
#[inline]
pub(crate) fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0,
        t3 / 6.0,
    ]
}

/// Clamp `x` into `[0, n-1]` and return the four mirrored tap indices and
/// their weights.
#[inline]
fn stencil(x: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let x = x.clamp(0.0, (n - 1) as f64);
    let base = floor(x);
    let t = x - base;
    let base = base as isize;
    let idx = [
        mirror(base - 1, n),
        mirror(base, n),
        mirror(base + 1, n),
        mirror(base + 2, n),
    ];
    (idx, bspline_weights(t))
}

/// In-place 1-D interpolation prefilter on a strided line.
fn prefilter_line(line: &mut [f64]) {
    let n = line.len();
    let z = pole();
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in line.iter_mut() {
        *v *= gain;
    }
    // exact causal initialization for the mirror-extended signal of period 2n-2
    let period = 2 * n - 2;
    let mut zk = 1.0;
    let mut sum = 0.0;
    for k in 0..period {
        sum += zk * line[mirror(k as isize, n)];
        zk *= z;
    }
    line[0] = sum / (1.0 - powi(z, period as i32));
    for k in 1..n {
        line[k] += z * line[k - 1];
    }
    line[n - 1] = (z / (z * z - 1.0)) * (line[n - 1] + z * line[n - 2]);
    for k in (0..n - 1).rev() {
        line[k] = z * (line[k + 1] - line[k]);
    }
}

/// Solve `B^T y = r` where `B` maps coefficients to node samples under the
/// mirror boundary: rows `(c[i-1] + 4 c[i] + c[i+1]) / 6` with
/// `c[-1] = c[1]`, `c[n] = c[n-2]`.
fn prefilter_transpose_line(line: &mut [f64]) {
    let n = line.len();
    // B^T as a tridiagonal: sub[i] multiplies y[i-1], sup[i] multiplies y[i+1].
    let mut sub = vec![1.0 / 6.0; n];
    let diag = vec![4.0 / 6.0; n];
    let mut sup = vec![1.0 / 6.0; n];
    // B[0][1] = 2/6 and B[n-1][n-2] = 2/6 move to the transposed positions.
    sub[1] = 2.0 / 6.0;
    sup[n - 2] = 2.0 / 6.0;
    sub[0] = 0.0;
    sup[n - 1] = 0.0;
    thomas(&sub, &diag, &sup, line);
}

/// Tridiagonal solve in place (diagonally dominant, no pivoting).
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = sup[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / beta;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

fn separable(field: &ScalarField, f: fn(&mut [f64])) -> ScalarField {
    let dims = field.dims();
    let (w, h) = (dims.width(), dims.height());
    let mut data = field.clone().into_vec();
    for row in data.chunks_mut(w) {
        f(row);
    }
    let mut col = vec![0.0; h];
    for i in 0..w {
        for j in 0..h {
            col[j] = data[j * w + i];
        }
        f(&mut col);
        for j in 0..h {
            data[j * w + i] = col[j];
        }
    }
    ScalarField::from_vec(dims, data).expect("same length")
}

/// Interpolating cubic B-spline coefficients of a channel.
pub fn bspline_prefilter(channel: &ScalarField) -> SplineCoefficients {
    SplineCoefficients(separable(channel, prefilter_line))
}

/// Transpose of [`bspline_prefilter`] viewed as a linear map.
pub fn bspline_prefilter_transpose(coef_space: &ScalarField) -> ScalarField {
    separable(coef_space, prefilter_transpose_line)
}

/// `T[f, phi](k, l)`: the spline evaluated at `phi(k, l)`.
pub fn warp(coef: &SplineCoefficients, phi: &DeformationField) -> Result<ScalarField> {
    coef.dims().ensure_same(&phi.dims())?;
    let data = phi.as_slice().iter().map(|p| coef.eval(p[0], p[1])).collect();
    ScalarField::from_vec(phi.dims(), data)
}

/// Transpose of `coef -> warp(coef, phi)`: splats each residual value onto
/// the coefficients with the stencil weights used by [`warp`].
pub fn warp_adjoint(residual: &ScalarField, phi: &DeformationField) -> Result<ScalarField> {
    let dims = phi.dims();
    dims.ensure_same(&residual.dims())?;
    let mut out = ScalarField::zeros(dims);
    let acc = out.as_mut_slice();
    for (p, &r) in phi.as_slice().iter().zip(residual.as_slice()) {
        if r == 0.0 {
            continue;
        }
        let (ix, wx) = stencil(p[0], dims.width());
        let (iy, wy) = stencil(p[1], dims.height());
        for b in 0..4 {
            let rb = r * wy[b];
            for a in 0..4 {
                acc[dims.index(ix[a], iy[b])] += rb * wx[a];
            }
        }
    }
    Ok(out)
}

/// Prefilter and warp a raw channel.
pub fn warp_channel(channel: &ScalarField, phi: &DeformationField) -> Result<ScalarField> {
    warp(&bspline_prefilter(channel), phi)
}

/// Transpose of [`warp_channel`]: the gradient of `<warp_channel(f, phi), r>`
/// with respect to the raw channel `f`.
pub fn warp_channel_adjoint(residual: &ScalarField, phi: &DeformationField) -> Result<ScalarField> {
    Ok(bspline_prefilter_transpose(&warp_adjoint(residual, phi)?))
}
