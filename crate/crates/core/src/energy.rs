//! Energy terms of the fully discrete model and their analytic gradients.
//!
//! Norms are grid-averaged: `||f||^2 = 1/(MN) * sum |f(i, j)|^2`. The path
//! energy of `K + 1` feature maps, `K` deformations and `K` anisotropy maps is
//!
//! ```text
//! E = K * sum_k ( R[phi_k, a_k] + D[f_{k-1}, f_k, phi_k] / delta )
//! ```
//!
//! with the anisotropic elastic regularizer `R = ||a W(grad phi)||_1` and the
//! mismatch `D = 1/(2(3+C)) sum_c ||T[f_k^c, phi_k] - f_{k-1}^c||^2`.
//!
//! Gradients returned here are Euclidean (plain sums), so they agree with
//! finite differences of the energies taken entry by entry.

use alloc::vec::Vec;

pub use crate::features::FeatureMap;
pub use crate::grid::DeformationField;
use crate::grid::{gaussian_blur, jacobian_forward, sobel_gradient, ScalarField, VectorField2};
use crate::math::{exp, ln, Mat2};
use crate::warp::{warp_channel, warp_channel_adjoint};
use crate::{Error, Result};

/// Weights of the elastic density: `lambda` for the log-determinant term,
/// `mu` for the strain term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticParams {
    pub lambda: f64,
    pub mu: f64,
}

impl ElasticParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("mu", mu)?;
        Ok(ElasticParams { lambda, mu })
    }
}

/// Parameters of the edge indicator.
///
/// `sigma` and `rho` are the pixel-unit standard deviations of the inner
/// (pre-smoothing) and outer Gaussians, `xi1` the contrast scale and `xi2`
/// the floor of the weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyParams {
    pub sigma: f64,
    pub rho: f64,
    pub xi1: f64,
    pub xi2: f64,
}

impl AnisotropyParams {
    pub fn new(sigma: f64, rho: f64, xi1: f64, xi2: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        positive("rho", rho)?;
        positive("xi1", xi1)?;
        positive("xi2", xi2)?;
        Ok(AnisotropyParams { sigma, rho, xi1, xi2 })
    }
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: "must be positive and finite",
        })
    }
}

/// Elastic energy density
/// `W(F) = lambda/2 (exp((log det F)^2) - 1) + mu |sym F - I|^2`.
///
/// Returns `+inf` when `det F <= 0`.
pub fn density_w(f: &Mat2, p: &ElasticParams) -> f64 {
    let det = f.det();
    if !(det > 0.0) {
        return f64::INFINITY;
    }
    let l = ln(det);
    let strain = f.sym() - Mat2::IDENTITY;
    0.5 * p.lambda * (exp(l * l) - 1.0) + p.mu * strain.norm_sq()
}

/// Derivative of [`density_w`] with respect to the matrix entries:
/// `lambda exp(L^2) L F^{-T} + 2 mu (sym F - I)`, `L = log det F`.
pub fn density_w_grad(f: &Mat2, p: &ElasticParams) -> Result<Mat2> {
    let det = f.det();
    let inv = match f.inverse() {
        Some(inv) if det > 0.0 => inv,
        _ => return Err(Error::NotAdmissible { x: 0, y: 0, det }),
    };
    let l = ln(det);
    let barrier = inv.transpose().scale(p.lambda * exp(l * l) * l);
    Ok(barrier + (f.sym() - Mat2::IDENTITY).scale(2.0 * p.mu))
}

/// Edge indicator `a = exp(-|G_rho * D (G_sigma * u)|^2 / xi1) + xi2`.
///
/// `rgb` holds the unscaled image channels. `D` is the unit-square Sobel
/// gradient; the outer Gaussian smooths each gradient component and the
/// squared norm runs over all channels and both components.
pub fn anisotropy(rgb: &[ScalarField], p: &AnisotropyParams) -> Result<ScalarField> {
    let first = rgb.first().ok_or(Error::ChannelMismatch {
        expected: 3,
        found: 0,
    })?;
    let dims = first.dims();
    let mut norm_sq = ScalarField::zeros(dims);
    for channel in rgb {
        dims.ensure_same(&channel.dims())?;
        let grad = sobel_gradient(&gaussian_blur(channel, p.sigma)?);
        for c in 0..2 {
            let smooth = gaussian_blur(&grad.component(c), p.rho)?;
            for (acc, g) in norm_sq.as_mut_slice().iter_mut().zip(smooth.as_slice()) {
                *acc += g * g;
            }
        }
    }
    Ok(norm_sq.map(|s| exp(-s / p.xi1) + p.xi2))
}

/// Anisotropy of the image component of a feature map, undoing the
/// `eta` scaling of the stored RGB channels first.
pub fn anisotropy_of(f: &FeatureMap, p: &AnisotropyParams) -> Result<ScalarField> {
    anisotropy(&f.rgb_image(), p)
}

/// Mismatch `1/(2(3+C)) sum_c ||T[f_next^c, phi] - f^c||^2` (grid averaged).
pub fn mismatch_d(f: &FeatureMap, f_next: &FeatureMap, phi: &DeformationField) -> Result<f64> {
    f.ensure_compatible(f_next)?;
    f.dims().ensure_same(&phi.dims())?;
    let mut sum = 0.0;
    for (c, cn) in f.channels().iter().zip(f_next.channels()) {
        sum += warp_channel(cn, phi)?.sub(c).mean_sq();
    }
    Ok(sum / (2.0 * f.channel_count() as f64))
}

/// Regularizer `1/(MN) sum a W(grad phi)`; `+inf` if any determinant is
/// non-positive.
pub fn regularizer_r(phi: &DeformationField, a: &ScalarField, p: &ElasticParams) -> Result<f64> {
    phi.dims().ensure_same(&a.dims())?;
    let jac = jacobian_forward(phi);
    let mut sum = 0.0;
    for (m, &w) in jac.as_slice().iter().zip(a.as_slice()) {
        let density = density_w(m, p);
        if density.is_infinite() {
            return Ok(f64::INFINITY);
        }
        sum += w * density;
    }
    Ok(sum / phi.dims().len() as f64)
}

/// The two contributions of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepEnergy {
    /// `R[phi_k, a_k]`.
    pub regularizer: f64,
    /// `D[f_{k-1}, f_k, phi_k]`.
    pub mismatch: f64,
}

/// Path energy with its per-step breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnergy {
    pub total: f64,
    pub steps: Vec<StepEnergy>,
}

impl PathEnergy {
    pub fn regularizer_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.regularizer).sum()
    }

    pub fn mismatch_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.mismatch).sum()
    }
}

pub(crate) fn check_path(fs: &[FeatureMap], phis: &[DeformationField], as_: &[ScalarField]) -> Result<()> {
    let k = phis.len();
    if k == 0 {
        return Err(Error::Config("a path needs at least one time step".into()));
    }
    if fs.len() != k + 1 || as_.len() != k {
        return Err(Error::Config(alloc::format!(
            "path sizes disagree: {} feature maps, {} deformations, {} anisotropies",
            fs.len(),
            k,
            as_.len()
        )));
    }
    let dims = fs[0].dims();
    for f in &fs[1..] {
        fs[0].ensure_compatible(f)?;
    }
    for phi in phis {
        dims.ensure_same(&phi.dims())?;
    }
    for a in as_ {
        dims.ensure_same(&a.dims())?;
    }
    Ok(())
}

/// `E = K * sum_k (R_k + D_k / delta)`.
pub fn path_energy(
    fs: &[FeatureMap],
    phis: &[DeformationField],
    as_: &[ScalarField],
    p: &ElasticParams,
    delta: f64,
) -> Result<PathEnergy> {
    check_path(fs, phis, as_)?;
    let k_steps = phis.len() as f64;
    let mut steps = Vec::with_capacity(phis.len());
    let mut total = 0.0;
    for k in 1..=phis.len() {
        let regularizer = regularizer_r(&phis[k - 1], &as_[k - 1], p)?;
        let mismatch = mismatch_d(&fs[k - 1], &fs[k], &phis[k - 1])?;
        total += k_steps * (regularizer + mismatch / delta);
        steps.push(StepEnergy { regularizer, mismatch });
    }
    Ok(PathEnergy { total, steps })
}

/// Euclidean gradient of [`regularizer_r`] with respect to the pixel-unit
/// positions of `phi`. Boundary entries are zero (they are pinned).
pub fn grad_r_phi(phi: &DeformationField, a: &ScalarField, p: &ElasticParams) -> Result<VectorField2> {
    let dims = phi.dims();
    dims.ensure_same(&a.dims())?;
    let (w, h) = (dims.width(), dims.height());
    let s = dims.scale();
    let jac = jacobian_forward(phi);
    let norm = 1.0 / dims.len() as f64;

    // weighted density gradients a * dW/dF
    let mut dw = Vec::with_capacity(dims.len());
    for j in 0..h {
        for i in 0..w {
            let g = density_w_grad(&jac.get(i, j), p).map_err(|_| Error::NotAdmissible {
                x: i,
                y: j,
                det: jac.get(i, j).det(),
            })?;
            dw.push(g.scale(a.get(i, j) * norm));
        }
    }

    // J[r][c](p) = (s_c / s_r) (phi_r(p + e_c) - phi_r(p)) for p + e_c inside
    let mut out = VectorField2::zeros(dims);
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            let mut g = [0.0; 2];
            for (r, gr) in g.iter_mut().enumerate() {
                // column 0: x-direction
                let fx = s[0] / s[r];
                let here = dw[dims.index(i, j)].at(r, 0);
                let left = dw[dims.index(i - 1, j)].at(r, 0);
                *gr += fx * (left - here);
                // column 1: y-direction
                let fy = s[1] / s[r];
                let here = dw[dims.index(i, j)].at(r, 1);
                let up = dw[dims.index(i, j - 1)].at(r, 1);
                *gr += fy * (up - here);
            }
            out.set(i, j, g);
        }
    }
    Ok(out)
}

/// Euclidean gradient of the path energy with respect to the intermediate
/// feature map `f_k`, `0 < k < K`, with all deformations and anisotropies
/// held fixed.
pub fn grad_e_feature(
    k: usize,
    fs: &[FeatureMap],
    phis: &[DeformationField],
    as_: &[ScalarField],
    delta: f64,
) -> Result<Vec<ScalarField>> {
    check_path(fs, phis, as_)?;
    let steps = phis.len();
    if k == 0 || k >= steps {
        return Err(Error::IndexOutOfRange {
            index: k,
            lo: 1,
            hi: steps.saturating_sub(1),
        });
    }
    let f = &fs[k];
    let scale = steps as f64 / (delta * f.channel_count() as f64 * f.dims().len() as f64);
    let mut grad = Vec::with_capacity(f.channel_count());
    for c in 0..f.channel_count() {
        // D[f_{k-1}, f_k, phi_k]: f_k is warped
        let r_in = warp_channel(&f.channels()[c], &phis[k - 1])?.sub(&fs[k - 1].channels()[c]);
        let mut g = warp_channel_adjoint(&r_in, &phis[k - 1])?;
        // D[f_k, f_{k+1}, phi_{k+1}]: f_k is the reference
        let r_out = warp_channel(&fs[k + 1].channels()[c], &phis[k])?.sub(&f.channels()[c]);
        g.axpy(-1.0, &r_out);
        grad.push(g.scaled(scale));
    }
    Ok(grad)
}
