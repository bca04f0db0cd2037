//! Inertial proximal alternating minimization of the path energy on one
//! grid level.
//!
//! Each outer iteration sweeps `k = 1..=K` and, in this order, refreshes the
//! anisotropy `a_k` from the image component of `f_k`, updates `phi_k` by a
//! gradient step on the regularizer followed by the proximal map of the
//! linearized mismatch, and (for `k < K`) takes a gradient step on `f_k`.
//! Deformations and features are extrapolated with weight `beta` before their
//! update; step sizes come from backtracking on the usual sufficient-decrease
//! condition.
//!
//! Step sizes and proximal weights are measured in the grid-averaged inner
//! product `<u, v> = 1/(MN) sum u v`, so Lipschitz estimates do not scale
//! with the grid size.

use alloc::vec::Vec;

use crate::energy::{
    anisotropy_of, check_path, grad_r_phi, mismatch_d, path_energy, regularizer_r, AnisotropyParams,
    ElasticParams, StepEnergy,
};
use crate::features::FeatureMap;
use crate::grid::{jacobian_forward, sobel_gradient, DeformationField, ScalarField, VectorField2};
use crate::warp::{warp_channel, warp_channel_adjoint};
use crate::{Error, Result};

/// Parameters of the alternating scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpalmParams {
    /// Extrapolation weight in `[0, 1)`.
    pub beta: f64,
    /// Number of outer iterations.
    pub iterations: usize,
    /// Weight `delta` of the mismatch (`1/delta` multiplies it).
    pub delta: f64,
    /// Initial Lipschitz guess for every block.
    pub lipschitz_init: f64,
    /// Factor applied on a rejected trial step (> 1).
    pub lipschitz_up: f64,
    /// Factor applied after an accepted step, in `(0, 1]`.
    pub lipschitz_down: f64,
    /// Maximal number of increases per step before the step is skipped.
    pub max_backtracks: usize,
}

impl Default for IpalmParams {
    fn default() -> Self {
        IpalmParams {
            beta: core::f64::consts::FRAC_1_SQRT_2,
            iterations: 250,
            delta: 1.0,
            lipschitz_init: 1.0,
            lipschitz_up: 2.0,
            lipschitz_down: 0.9,
            max_backtracks: 60,
        }
    }
}

impl IpalmParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must lie in [0, 1)",
            });
        }
        crate::energy::positive("delta", self.delta)?;
        crate::energy::positive("lipschitz_init", self.lipschitz_init)?;
        if !(self.lipschitz_up > 1.0) {
            return Err(Error::InvalidParameter {
                name: "lipschitz_up",
                reason: "must exceed 1",
            });
        }
        if !(self.lipschitz_down > 0.0 && self.lipschitz_down <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lipschitz_down",
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

/// Variables of one level: `K + 1` feature maps (the end points are fixed
/// data), `K` deformations and `K` anisotropy maps, plus the previous
/// iterates used for extrapolation.
#[derive(Debug, Clone)]
pub struct PathState {
    fs: Vec<FeatureMap>,
    phis: Vec<DeformationField>,
    as_: Vec<ScalarField>,
    prev_fs: Vec<FeatureMap>,
    prev_phis: Vec<DeformationField>,
    lip_phi: Vec<f64>,
    lip_f: Vec<f64>,
}

impl PathState {
    /// Assemble a state; previous iterates start equal to the current ones.
    pub fn new(fs: Vec<FeatureMap>, phis: Vec<DeformationField>, as_: Vec<ScalarField>) -> Result<Self> {
        check_path(&fs, &phis, &as_)?;
        for phi in &phis {
            if !phi.boundary_is_identity() {
                return Err(Error::Config("deformations must be the identity on the boundary".into()));
            }
        }
        let k = phis.len();
        Ok(PathState {
            prev_fs: fs.clone(),
            prev_phis: phis.clone(),
            fs,
            phis,
            as_,
            lip_phi: alloc::vec![f64::NAN; k],
            lip_f: alloc::vec![f64::NAN; k + 1],
        })
    }

    /// Linear blend between the end points, identity deformations and
    /// anisotropies of the blended frames.
    pub fn linear_blend(f_a: &FeatureMap, f_b: &FeatureMap, steps: usize, aniso: &AnisotropyParams) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let mut fs = Vec::with_capacity(steps + 1);
        fs.push(f_a.clone());
        for k in 1..steps {
            fs.push(f_a.blend(f_b, k as f64 / steps as f64)?);
        }
        fs.push(f_b.clone());
        let phis = alloc::vec![DeformationField::identity(f_a.dims()); steps];
        Self::with_identity_anisotropy_refresh(fs, phis, aniso)
    }

    /// Assemble from frames and deformations, computing `a_k` from `f_k`.
    pub fn with_identity_anisotropy_refresh(
        fs: Vec<FeatureMap>,
        phis: Vec<DeformationField>,
        aniso: &AnisotropyParams,
    ) -> Result<Self> {
        let as_ = fs[1..].iter().map(|f| anisotropy_of(f, aniso)).collect::<Result<Vec<_>>>()?;
        Self::new(fs, phis, as_)
    }

    /// Number of time steps `K`.
    pub fn steps(&self) -> usize {
        self.phis.len()
    }

    pub fn features(&self) -> &[FeatureMap] {
        &self.fs
    }

    pub fn deformations(&self) -> &[DeformationField] {
        &self.phis
    }

    pub fn anisotropies(&self) -> &[ScalarField] {
        &self.as_
    }

    pub fn into_parts(self) -> (Vec<FeatureMap>, Vec<DeformationField>, Vec<ScalarField>) {
        (self.fs, self.phis, self.as_)
    }

    /// Path energy with the stored anisotropies.
    pub fn energy(&self, elastic: &ElasticParams, delta: f64) -> Result<crate::energy::PathEnergy> {
        path_energy(&self.fs, &self.phis, &self.as_, elastic, delta)
    }

    /// Smallest Jacobian determinant over all deformations.
    pub fn min_det(&self) -> f64 {
        self.phis
            .iter()
            .map(|phi| jacobian_forward(phi).min_det())
            .fold(f64::INFINITY, f64::min)
    }

    fn forget_history(&mut self) {
        self.prev_fs.clone_from(&self.fs);
        self.prev_phis.clone_from(&self.phis);
        self.lip_phi.iter_mut().for_each(|l| *l = f64::NAN);
        self.lip_f.iter_mut().for_each(|l| *l = f64::NAN);
    }
}

/// `f + beta (f - f_prev)` channel by channel.
pub fn extrapolate_feature(current: &FeatureMap, previous: &FeatureMap, beta: f64) -> FeatureMap {
    let mut out = current.clone();
    if beta == 0.0 {
        return out;
    }
    for (o, p) in out.channels_mut().iter_mut().zip(previous.channels()) {
        let cur = o.clone();
        o.axpy(beta, &cur);
        o.axpy(-beta, p);
    }
    out
}

/// `phi + beta (phi - phi_prev)`, boundary re-pinned to the identity.
pub fn extrapolate_deformation(current: &DeformationField, previous: &DeformationField, beta: f64) -> DeformationField {
    let mut out = current.clone();
    if beta == 0.0 {
        return out;
    }
    for (o, p) in out.as_mut_slice().iter_mut().zip(previous.as_slice()) {
        o[0] += beta * (o[0] - p[0]);
        o[1] += beta * (o[1] - p[1]);
    }
    out.pin_boundary();
    out
}

/// `Lambda_c = 1/2 (grad T[f_next^c, phi_tilde] + grad f^c)` with the
/// unit-square Sobel gradient, one vector field per channel.
pub fn linearization_lambda(
    f: &FeatureMap,
    f_next: &FeatureMap,
    phi_tilde: &DeformationField,
) -> Result<Vec<VectorField2>> {
    Ok(LinearizedMismatch::new(f, f_next, phi_tilde)?.lambdas_unit())
}

/// The mismatch `D[f, f_next, .]` linearized around `phi_tilde`:
///
/// ```text
/// D~(phi) = 1/(2(3+C)) sum_c || T[f_next^c, phi_tilde] + <Lambda_c, phi - phi_tilde> - f^c ||^2
/// ```
///
/// The gradients `Lambda_c` are unit-square quantities; they are paired
/// with pixel-unit displacements through the grid spacing.
#[derive(Debug, Clone)]
pub struct LinearizedMismatch {
    reference: Vec<ScalarField>,
    warped: Vec<ScalarField>,
    // per-pixel gradients in pixel units
    lambdas: Vec<VectorField2>,
    phi_tilde: DeformationField,
}

impl LinearizedMismatch {
    pub fn new(f: &FeatureMap, f_next: &FeatureMap, phi_tilde: &DeformationField) -> Result<Self> {
        f.ensure_compatible(f_next)?;
        let dims = f.dims();
        dims.ensure_same(&phi_tilde.dims())?;
        let s = dims.scale();
        let mut warped = Vec::with_capacity(f.channel_count());
        let mut lambdas = Vec::with_capacity(f.channel_count());
        for (c, cn) in f.channels().iter().zip(f_next.channels()) {
            let t = warp_channel(cn, phi_tilde)?;
            let gt = sobel_gradient(&t);
            let gf = sobel_gradient(c);
            let lam = VectorField2::from_fn(dims, |i, j| {
                let (a, b) = (gt.get(i, j), gf.get(i, j));
                [0.5 * (a[0] + b[0]) / s[0], 0.5 * (a[1] + b[1]) / s[1]]
            });
            warped.push(t);
            lambdas.push(lam);
        }
        Ok(LinearizedMismatch {
            reference: f.channels().to_vec(),
            warped,
            lambdas,
            phi_tilde: phi_tilde.clone(),
        })
    }

    /// The gradients `Lambda_c` in unit-square units.
    pub fn lambdas_unit(&self) -> Vec<VectorField2> {
        let s = self.phi_tilde.dims().scale();
        self.lambdas
            .iter()
            .map(|l| {
                let mut out = l.clone();
                for v in out.as_mut_slice() {
                    v[0] *= s[0];
                    v[1] *= s[1];
                }
                out
            })
            .collect()
    }

    /// `T[f_next^c, phi_tilde]` per channel.
    pub fn warped(&self) -> &[ScalarField] {
        &self.warped
    }

    /// Value of the linearized mismatch at `phi`.
    pub fn value(&self, phi: &DeformationField) -> f64 {
        let dims = self.phi_tilde.dims();
        let mut sum = 0.0;
        for ((t, f), lam) in self.warped.iter().zip(&self.reference).zip(&self.lambdas) {
            let mut acc = 0.0;
            for idx in 0..dims.len() {
                let p = phi.as_slice()[idx];
                let q = self.phi_tilde.as_slice()[idx];
                let l = lam.as_slice()[idx];
                let r = t.as_slice()[idx] + l[0] * (p[0] - q[0]) + l[1] * (p[1] - q[1]) - f.as_slice()[idx];
                acc += r * r;
            }
            sum += acc / dims.len() as f64;
        }
        sum / (2.0 * self.reference.len() as f64)
    }

    /// Proximal map of `(K/delta) D~` with weight `tau` in the grid-averaged
    /// norm: the minimizer of
    /// `tau/2 ||phi - phi_point||^2 + (K/delta) D~(phi)`. Each interior pixel
    /// solves a 2x2 symmetric positive definite system; boundary pixels are
    /// copied from `phi_point`.
    pub fn prox(&self, phi_point: &DeformationField, tau: f64, steps: usize, delta: f64) -> DeformationField {
        let dims = phi_point.dims();
        let c = steps as f64 / (tau * delta * self.reference.len() as f64);
        let mut out = phi_point.clone();
        for j in 1..dims.height() - 1 {
            for i in 1..dims.width() - 1 {
                let idx = dims.index(i, j);
                let pt = phi_point.as_slice()[idx];
                let q = self.phi_tilde.as_slice()[idx];
                let (mut a00, mut a01, mut a11) = (1.0, 0.0, 1.0);
                let (mut b0, mut b1) = (pt[0], pt[1]);
                for ((t, f), lam) in self.warped.iter().zip(&self.reference).zip(&self.lambdas) {
                    let l = lam.as_slice()[idx];
                    a00 += c * l[0] * l[0];
                    a01 += c * l[0] * l[1];
                    a11 += c * l[1] * l[1];
                    // Lambda (T - Lambda^T phi_tilde - f)
                    let r = t.as_slice()[idx] - (l[0] * q[0] + l[1] * q[1]) - f.as_slice()[idx];
                    b0 -= c * l[0] * r;
                    b1 -= c * l[1] * r;
                }
                let det = a00 * a11 - a01 * a01;
                out.as_mut_slice()[idx] = [(a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det];
            }
        }
        out
    }
}

/// Proximal map of the linearized mismatch, see [`LinearizedMismatch::prox`].
pub fn prox_deformation(
    phi_point: &DeformationField,
    tau: f64,
    f: &FeatureMap,
    f_next: &FeatureMap,
    phi_tilde: &DeformationField,
    steps: usize,
    delta: f64,
) -> Result<DeformationField> {
    crate::energy::positive("tau", tau)?;
    f.dims().ensure_same(&phi_point.dims())?;
    Ok(LinearizedMismatch::new(f, f_next, phi_tilde)?.prox(phi_point, tau, steps, delta))
}

/// Outcome of one backtracked block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Accepted Lipschitz estimate (the last one tried when skipped).
    pub lipschitz: f64,
    /// Number of increases of the estimate.
    pub backtracks: usize,
    /// `false` when backtracking gave up and the variable was left unchanged.
    pub accepted: bool,
    /// Smallest Jacobian determinant of the resulting deformation (deformation
    /// updates only, `+inf` otherwise).
    pub min_det: f64,
}

fn start_lipschitz(stored: f64, params: &IpalmParams) -> f64 {
    if stored.is_nan() {
        params.lipschitz_init
    } else {
        (stored * params.lipschitz_down).max(1e-12)
    }
}

fn check_time(k: usize, lo: usize, hi: usize) -> Result<()> {
    if k < lo || k > hi {
        return Err(Error::IndexOutOfRange { index: k, lo, hi });
    }
    Ok(())
}

/// Refresh `a_k` from the image component of `f_k`, `1 <= k <= K`.
pub fn update_anisotropy_k(state: &mut PathState, k: usize, aniso: &AnisotropyParams) -> Result<()> {
    check_time(k, 1, state.steps())?;
    state.as_[k - 1] = anisotropy_of(&state.fs[k], aniso)?;
    Ok(())
}

/// Update `phi_k`, `1 <= k <= K`: proximal map of the linearized mismatch
/// applied after a gradient step on `K R[., a_k]` from the extrapolated point.
pub fn update_deformation_k(
    state: &mut PathState,
    k: usize,
    params: &IpalmParams,
    elastic: &ElasticParams,
) -> Result<StepOutcome> {
    check_time(k, 1, state.steps())?;
    let steps = state.steps();
    let kf = steps as f64;
    let idx = k - 1;
    let current = &state.phis[idx];
    let dims = current.dims();
    let n = dims.len() as f64;
    let a = &state.as_[idx];

    let mut phi_tilde = extrapolate_deformation(current, &state.prev_phis[idx], params.beta);
    let mut base = regularizer_r(&phi_tilde, a, elastic)?;
    if !base.is_finite() {
        // extrapolation folded the grid: fall back to the current iterate
        phi_tilde = current.clone();
        base = regularizer_r(&phi_tilde, a, elastic)?;
    }
    let base = kf * base;
    let grad = grad_r_phi(&phi_tilde, a, elastic)?;
    let lin = LinearizedMismatch::new(&state.fs[k - 1], &state.fs[k], &phi_tilde)?;

    let mut lip = start_lipschitz(state.lip_phi[idx], params);
    let mut backtracks = 0;
    loop {
        // Riesz representative of the gradient of K R in the averaged norm
        let step = kf * n / lip;
        let mut point = phi_tilde.clone();
        for (p, g) in point.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            p[0] -= step * g[0];
            p[1] -= step * g[1];
        }
        let candidate = lin.prox(&point, lip, steps, params.delta);
        let value = kf * regularizer_r(&candidate, a, elastic)?;
        if value.is_finite() {
            let mut lin_term = 0.0;
            let mut dist = 0.0;
            for ((c, t), g) in candidate.as_slice().iter().zip(phi_tilde.as_slice()).zip(grad.as_slice()) {
                let d = [c[0] - t[0], c[1] - t[1]];
                lin_term += kf * (g[0] * d[0] + g[1] * d[1]);
                dist += d[0] * d[0] + d[1] * d[1];
            }
            let bound = base + lin_term + 0.5 * lip * dist / n;
            if value <= bound + 1e-12 * base.abs().max(1e-300) {
                let min_det = jacobian_forward(&candidate).min_det();
                if min_det > 0.0 {
                    let old = core::mem::replace(&mut state.phis[idx], candidate);
                    state.prev_phis[idx] = old;
                    state.lip_phi[idx] = lip;
                    return Ok(StepOutcome {
                        lipschitz: lip,
                        backtracks,
                        accepted: true,
                        min_det,
                    });
                }
            }
        }
        if backtracks >= params.max_backtracks {
            let min_det = jacobian_forward(&state.phis[idx]).min_det();
            state.prev_phis[idx] = state.phis[idx].clone();
            state.lip_phi[idx] = params.lipschitz_init;
            return Ok(StepOutcome {
                lipschitz: lip,
                backtracks,
                accepted: false,
                min_det,
            });
        }
        lip *= params.lipschitz_up;
        backtracks += 1;
    }
}

/// The part of the path energy that depends on `f_k`:
/// `(K/delta) (D[f_{k-1}, f_k, phi_k] + D[f_k, f_{k+1}, phi_{k+1}])`, given
/// the already warped `T[f_{k+1}, phi_{k+1}]`.
fn local_feature_energy(
    f_prev: &FeatureMap,
    f: &FeatureMap,
    phi_in: &DeformationField,
    warped_next: &[ScalarField],
    steps: usize,
    delta: f64,
) -> Result<f64> {
    let mut d_out = 0.0;
    for (t, c) in warped_next.iter().zip(f.channels()) {
        d_out += t.sub(c).mean_sq();
    }
    d_out /= 2.0 * f.channel_count() as f64;
    let d_in = mismatch_d(f_prev, f, phi_in)?;
    Ok(steps as f64 / delta * (d_in + d_out))
}

/// Euclidean gradient of [`local_feature_energy`] with respect to `f`.
fn local_feature_gradient(
    f_prev: &FeatureMap,
    f: &FeatureMap,
    phi_in: &DeformationField,
    warped_next: &[ScalarField],
    steps: usize,
    delta: f64,
) -> Result<Vec<ScalarField>> {
    let scale = steps as f64 / (delta * f.channel_count() as f64 * f.dims().len() as f64);
    let mut grad = Vec::with_capacity(f.channel_count());
    for ((c, p), t) in f.channels().iter().zip(f_prev.channels()).zip(warped_next) {
        let r_in = warp_channel(c, phi_in)?.sub(p);
        let mut g = warp_channel_adjoint(&r_in, phi_in)?;
        g.axpy(-1.0, &t.sub(c));
        grad.push(g.scaled(scale));
    }
    Ok(grad)
}

/// Gradient step on the intermediate frame `f_k`, `0 < k < K`, from its
/// extrapolated value; all deformations and anisotropies are held fixed.
pub fn update_feature_k(state: &mut PathState, k: usize, params: &IpalmParams) -> Result<StepOutcome> {
    let steps = state.steps();
    check_time(k, 1, steps.saturating_sub(1))?;
    let f_tilde = extrapolate_feature(&state.fs[k], &state.prev_fs[k], params.beta);
    let n = f_tilde.dims().len() as f64;
    let warped_next = state.fs[k + 1]
        .channels()
        .iter()
        .map(|c| warp_channel(c, &state.phis[k]))
        .collect::<Result<Vec<_>>>()?;
    let f_prev = &state.fs[k - 1];
    let phi_in = &state.phis[k - 1];
    let base = local_feature_energy(f_prev, &f_tilde, phi_in, &warped_next, steps, params.delta)?;
    let grad = local_feature_gradient(f_prev, &f_tilde, phi_in, &warped_next, steps, params.delta)?;
    let grad_sq: f64 = grad.iter().map(|g| g.dot(g)).sum();

    let mut lip = start_lipschitz(state.lip_f[k], params);
    let mut backtracks = 0;
    loop {
        let step = n / lip;
        let mut candidate = f_tilde.clone();
        for (c, g) in candidate.channels_mut().iter_mut().zip(&grad) {
            c.axpy(-step, g);
        }
        let value = local_feature_energy(f_prev, &candidate, phi_in, &warped_next, steps, params.delta)?;
        // candidate - f_tilde = -step * grad
        let bound = base - step * grad_sq + 0.5 * lip * step * step * grad_sq / n;
        if value <= bound + 1e-12 * base.abs().max(1e-300) {
            let old = core::mem::replace(&mut state.fs[k], candidate);
            state.prev_fs[k] = old;
            state.lip_f[k] = lip;
            return Ok(StepOutcome {
                lipschitz: lip,
                backtracks,
                accepted: true,
                min_det: f64::INFINITY,
            });
        }
        if backtracks >= params.max_backtracks {
            state.prev_fs[k] = state.fs[k].clone();
            state.lip_f[k] = params.lipschitz_init;
            return Ok(StepOutcome {
                lipschitz: lip,
                backtracks,
                accepted: false,
                min_det: f64::INFINITY,
            });
        }
        lip *= params.lipschitz_up;
        backtracks += 1;
    }
}

/// One record of the energy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Outer iteration, 0 for the initial state.
    pub iteration: usize,
    /// Path energy after the iteration.
    pub energy: f64,
    /// `sum_k R_k`.
    pub regularizer_sum: f64,
    /// `sum_k D_k`.
    pub mismatch_sum: f64,
    pub deformation_backtracks: usize,
    pub feature_backtracks: usize,
    /// Block updates abandoned after exhausting the backtracking budget.
    pub skipped_steps: usize,
    /// Smallest Jacobian determinant over all deformations.
    pub min_det: f64,
    /// `R_k` and `D_k` for every time step.
    pub steps: Vec<StepEnergy>,
}

/// Energy trace of one level run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelTrace {
    pub records: Vec<IterationRecord>,
}

impl LevelTrace {
    pub fn initial_energy(&self) -> Option<f64> {
        self.records.first().map(|r| r.energy)
    }

    pub fn final_energy(&self) -> Option<f64> {
        self.records.last().map(|r| r.energy)
    }

    pub fn skipped_steps(&self) -> usize {
        self.records.iter().map(|r| r.skipped_steps).sum()
    }
}

/// Which blocks an outer iteration updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blocks {
    /// Anisotropies, deformations and features.
    All,
    /// Features only, deformations frozen.
    FeaturesOnly,
}

fn record(state: &PathState, iteration: usize, elastic: &ElasticParams, delta: f64) -> Result<IterationRecord> {
    let e = state.energy(elastic, delta)?;
    Ok(IterationRecord {
        iteration,
        energy: e.total,
        regularizer_sum: e.regularizer_sum(),
        mismatch_sum: e.mismatch_sum(),
        deformation_backtracks: 0,
        feature_backtracks: 0,
        skipped_steps: 0,
        min_det: state.min_det(),
        steps: e.steps,
    })
}

/// Run `params.iterations` outer iterations of the alternating scheme.
pub fn ipalm_level(
    state: &mut PathState,
    params: &IpalmParams,
    elastic: &ElasticParams,
    aniso: &AnisotropyParams,
) -> Result<LevelTrace> {
    run_blocks(state, params, elastic, aniso, Blocks::All, &mut |_| {})
}

/// As [`ipalm_level`], restricted to `blocks`, reporting every record to
/// `observer` as soon as it is available.
pub fn run_blocks(
    state: &mut PathState,
    params: &IpalmParams,
    elastic: &ElasticParams,
    aniso: &AnisotropyParams,
    blocks: Blocks,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<LevelTrace> {
    params.validate()?;
    state.forget_history();
    let mut trace = LevelTrace::default();
    let first = record(state, 0, elastic, params.delta)?;
    observer(&first);
    trace.records.push(first);
    let steps = state.steps();
    for j in 1..=params.iterations {
        let (mut def_bt, mut feat_bt, mut skipped) = (0, 0, 0);
        for k in 1..=steps {
            if blocks == Blocks::All {
                update_anisotropy_k(state, k, aniso)?;
                let out = update_deformation_k(state, k, params, elastic)?;
                def_bt += out.backtracks;
                skipped += usize::from(!out.accepted);
            }
            if k < steps {
                let out = update_feature_k(state, k, params)?;
                feat_bt += out.backtracks;
                skipped += usize::from(!out.accepted);
            }
        }
        let mut rec = record(state, j, elastic, params.delta)?;
        rec.deformation_backtracks = def_bt;
        rec.feature_backtracks = feat_bt;
        rec.skipped_steps = skipped;
        observer(&rec);
        trace.records.push(rec);
    }
    Ok(trace)
}
