//! Coarse-to-fine drivers.
//!
//! The RGB model prolongates deformations and intermediate frames from one
//! level to the next. The deep model re-assembles every frame from the level's
//! feature tensors, prolongates deformations only, and first optimizes the
//! features against the prolongated deformations before the full scheme runs.

use alloc::format;
use alloc::vec::Vec;

use crate::energy::{AnisotropyParams, ElasticParams};
use crate::features::{assemble_feature, FeatureMap, FeatureTensor};
use crate::grid::{jacobian_forward, resample_bilinear, DeformationField, GridDims, ScalarField};
use crate::optimizer::{run_blocks, Blocks, IpalmParams, IterationRecord, LevelTrace, PathState};
use crate::{Error, Result};

/// Multiscale layers of the VGG-19 feature extractor: grid side, layer and
/// channel count.
pub const VGG_LAYERS: [(usize, &str, usize); 5] = [
    (512, "conv1_2", 64),
    (256, "conv2_2", 128),
    (128, "conv3_4", 256),
    (64, "conv4_4", 512),
    (32, "conv5_4", 512),
];

/// Channel count of the VGG layer used on a square grid of side `side`.
pub fn vgg_channels_for(side: usize) -> Option<usize> {
    VGG_LAYERS.iter().find(|(s, _, _)| *s == side).map(|&(_, _, c)| c)
}

/// Smallest admissible side of the coarsest level.
pub const MIN_COARSE_SIDE: usize = 8;

/// Grid sizes of all levels, coarsest first, doubling from level to level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSchedule {
    levels: Vec<GridDims>,
}

impl LevelSchedule {
    /// `levels` levels ending at `finest`; the coarsest has
    /// `2^-(levels-1)` times the finest size.
    pub fn new(finest: GridDims, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("at least one level is required".into()));
        }
        let factor = 1usize
            .checked_shl(levels as u32 - 1)
            .ok_or_else(|| Error::Config("too many levels".into()))?;
        let (w, h) = finest.as_tuple();
        if w % factor != 0 || h % factor != 0 {
            return Err(Error::Config(format!(
                "{w}x{h} is not divisible by 2^{} = {factor}; pad to {}x{}",
                levels - 1,
                w.div_ceil(factor) * factor,
                h.div_ceil(factor) * factor
            )));
        }
        let (cw, ch) = (w / factor, h / factor);
        if levels > 1 && (cw < MIN_COARSE_SIDE || ch < MIN_COARSE_SIDE) {
            return Err(Error::Config(format!(
                "coarsest level {cw}x{ch} is smaller than {MIN_COARSE_SIDE}x{MIN_COARSE_SIDE}; use fewer levels"
            )));
        }
        let levels = (0..levels)
            .map(|l| GridDims::new(cw << l, ch << l))
            .collect::<Result<Vec<_>>>()?;
        Ok(LevelSchedule { levels })
    }

    pub fn levels(&self) -> &[GridDims] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> GridDims {
        *self.levels.last().expect("non-empty schedule")
    }
}

/// Everything the multilevel drivers need besides the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphConfig {
    /// Number of time steps `K`.
    pub steps: usize,
    pub ipalm: IpalmParams,
    pub elastic: ElasticParams,
    pub anisotropy: AnisotropyParams,
    /// Scale `eta` of the RGB channels in the deep model.
    pub eta: f64,
    /// Feature-only iterations on each deep level before the full scheme.
    pub warm_start_iterations: usize,
    /// How the RGB model initializes intermediate frames on finer levels.
    pub frame_init: FrameInit,
}

/// Initialization of the intermediate frames of the RGB model on every level
/// but the coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameInit {
    /// Restart from the linear blend of the end points.
    Blend,
    /// Bilinear prolongation of the coarse frames.
    Prolongate,
    /// Bilinear prolongation plus the fine-scale detail lost by the coarse
    /// end points, blended linearly in time.
    #[default]
    ProlongateWithDetail,
}

/// Result of a multilevel solve.
#[derive(Debug, Clone)]
pub struct MorphResult {
    /// Optimized path on the finest level.
    pub state: PathState,
    /// One trace per level, coarsest first (deep levels include the warm start
    /// as a separate trace preceding the full run).
    pub traces: Vec<LevelTrace>,
    pub schedule: LevelSchedule,
}

/// Observer receiving `(level index, record)` pairs.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &IterationRecord);

/// Displacement `phi - id` resampled bilinearly to `fine`, rescaled to the
/// finer pixel spacing, added to the fine identity and re-pinned.
pub fn prolongate_deformation(phi: &DeformationField, fine: GridDims) -> DeformationField {
    let coarse = phi.dims();
    let disp = phi.displacement_field();
    let sx = (fine.width() - 1) as f64 / (coarse.width() - 1) as f64;
    let sy = (fine.height() - 1) as f64 / (coarse.height() - 1) as f64;
    let dx = resample_bilinear(&disp.component(0), fine);
    let dy = resample_bilinear(&disp.component(1), fine);
    DeformationField::from_displacement(fine, |i, j| [sx * dx.get(i, j), sy * dy.get(i, j)])
}

/// Halve the displacement until every Jacobian determinant is positive.
fn make_admissible(mut phi: DeformationField) -> DeformationField {
    for _ in 0..60 {
        if jacobian_forward(&phi).min_det() > 0.0 {
            return phi;
        }
        let dims = phi.dims();
        phi = DeformationField::from_displacement(dims, |i, j| {
            let d = phi.displacement(i, j);
            [0.5 * d[0], 0.5 * d[1]]
        });
    }
    DeformationField::identity(phi.dims())
}

fn resize_rgb(u: &[ScalarField; 3], dims: GridDims) -> [ScalarField; 3] {
    [
        resample_bilinear(&u[0], dims),
        resample_bilinear(&u[1], dims),
        resample_bilinear(&u[2], dims),
    ]
}

fn resize_feature(f: &FeatureMap, dims: GridDims) -> Result<FeatureMap> {
    let channels = f.channels().iter().map(|c| resample_bilinear(c, dims)).collect();
    FeatureMap::from_channels(channels, f.eta())
}

fn check_inputs(u_a: &[ScalarField; 3], u_b: &[ScalarField; 3], schedule: &LevelSchedule) -> Result<()> {
    let finest = schedule.finest();
    for c in u_a.iter().chain(u_b.iter()) {
        finest.ensure_same(&c.dims())?;
    }
    Ok(())
}

fn blend_path(
    f_a: &FeatureMap,
    f_b: &FeatureMap,
    phis: Vec<DeformationField>,
    cfg: &MorphConfig,
) -> Result<PathState> {
    let steps = cfg.steps;
    let mut fs = Vec::with_capacity(steps + 1);
    fs.push(f_a.clone());
    for k in 1..steps {
        fs.push(f_a.blend(f_b, k as f64 / steps as f64)?);
    }
    fs.push(f_b.clone());
    PathState::with_identity_anisotropy_refresh(fs, phis, &cfg.anisotropy)
}

/// Coarse-to-fine solve of the RGB model (`C = 0`, `eta = 1`).
pub fn solve_rgb(
    u_a: &[ScalarField; 3],
    u_b: &[ScalarField; 3],
    schedule: &LevelSchedule,
    cfg: &MorphConfig,
    observer: Observer<'_>,
) -> Result<MorphResult> {
    check_inputs(u_a, u_b, schedule)?;
    if cfg.steps == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut traces = Vec::with_capacity(schedule.len());
    let mut state: Option<PathState> = None;
    for (level, &dims) in schedule.levels().iter().enumerate() {
        let f_a = assemble_feature(&resize_rgb(u_a, dims), None, 1.0)?;
        let f_b = assemble_feature(&resize_rgb(u_b, dims), None, 1.0)?;
        let mut current = match state.take() {
            None => blend_path(&f_a, &f_b, identity_path(dims, cfg.steps), cfg)?,
            Some(prev) => {
                let (fs, phis, _) = prev.into_parts();
                let phis = phis
                    .iter()
                    .map(|phi| make_admissible(prolongate_deformation(phi, dims)))
                    .collect();
                match cfg.frame_init {
                    FrameInit::Blend => blend_path(&f_a, &f_b, phis, cfg)?,
                    FrameInit::Prolongate | FrameInit::ProlongateWithDetail => {
                        let frames = prolongate_frames(&fs, &f_a, &f_b, cfg.frame_init)?;
                        PathState::with_identity_anisotropy_refresh(frames, phis, &cfg.anisotropy)?
                    }
                }
            }
        };
        let trace = run_blocks(
            &mut current,
            &cfg.ipalm,
            &cfg.elastic,
            &cfg.anisotropy,
            Blocks::All,
            &mut |r| observer(level, r),
        )?;
        traces.push(trace);
        state = Some(current);
    }
    Ok(MorphResult {
        state: state.expect("at least one level"),
        traces,
        schedule: schedule.clone(),
    })
}

/// Fine-level frames from the coarse path `coarse`, end points replaced by
/// the fine data.
fn prolongate_frames(coarse: &[FeatureMap], f_a: &FeatureMap, f_b: &FeatureMap, mode: FrameInit) -> Result<Vec<FeatureMap>> {
    let dims = f_a.dims();
    let steps = coarse.len() - 1;
    let details = if mode == FrameInit::ProlongateWithDetail {
        let da = f_a.difference(&resize_feature(&coarse[0], dims)?)?;
        let db = f_b.difference(&resize_feature(&coarse[steps], dims)?)?;
        Some((da, db))
    } else {
        None
    };
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(f_a.clone());
    for (k, f) in coarse.iter().enumerate().take(steps).skip(1) {
        let mut fine = resize_feature(f, dims)?;
        if let Some((da, db)) = &details {
            let t = k as f64 / steps as f64;
            for ((c, a), b) in fine.channels_mut().iter_mut().zip(da.channels()).zip(db.channels()) {
                c.axpy(1.0 - t, a);
                c.axpy(t, b);
            }
        }
        frames.push(fine);
    }
    frames.push(f_b.clone());
    Ok(frames)
}

fn identity_path(dims: GridDims, steps: usize) -> Vec<DeformationField> {
    alloc::vec![DeformationField::identity(dims); steps]
}

/// Per-level deep feature tensors of one input, coarsest first.
pub type FeaturePyramid = [FeatureTensor];

fn check_pyramid(name: &str, pyramid: &FeaturePyramid, schedule: &LevelSchedule) -> Result<()> {
    if pyramid.len() != schedule.len() {
        return Err(Error::Config(format!(
            "pyramid {name} has {} levels, the schedule has {}",
            pyramid.len(),
            schedule.len()
        )));
    }
    for (level, (t, dims)) in pyramid.iter().zip(schedule.levels()).enumerate() {
        if (t.width(), t.height()) != dims.as_tuple() {
            return Err(Error::Config(format!(
                "pyramid {name}, level {level}: tensor is {}x{}, grid is {}x{}",
                t.width(),
                t.height(),
                dims.width(),
                dims.height()
            )));
        }
    }
    Ok(())
}

/// Coarse-to-fine solve of the deep feature model.
pub fn solve_deep(
    u_a: &[ScalarField; 3],
    u_b: &[ScalarField; 3],
    pyramid_a: &FeaturePyramid,
    pyramid_b: &FeaturePyramid,
    schedule: &LevelSchedule,
    cfg: &MorphConfig,
    observer: Observer<'_>,
) -> Result<MorphResult> {
    check_inputs(u_a, u_b, schedule)?;
    if cfg.steps == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    check_pyramid("A", pyramid_a, schedule)?;
    check_pyramid("B", pyramid_b, schedule)?;
    for (level, (ta, tb)) in pyramid_a.iter().zip(pyramid_b).enumerate() {
        if ta.channels() != tb.channels() {
            return Err(Error::Config(format!(
                "level {level}: pyramid A has {} channels, pyramid B has {}",
                ta.channels(),
                tb.channels()
            )));
        }
    }

    let mut traces = Vec::new();
    let mut phis: Option<Vec<DeformationField>> = None;
    let mut state: Option<PathState> = None;
    for (level, &dims) in schedule.levels().iter().enumerate() {
        let f_a = assemble_feature(&resize_rgb(u_a, dims), Some(&pyramid_a[level]), cfg.eta)?;
        let f_b = assemble_feature(&resize_rgb(u_b, dims), Some(&pyramid_b[level]), cfg.eta)?;
        let level_phis = match phis.take() {
            None => identity_path(dims, cfg.steps),
            Some(coarse) => coarse
                .iter()
                .map(|phi| make_admissible(prolongate_deformation(phi, dims)))
                .collect(),
        };
        let mut current = blend_path(&f_a, &f_b, level_phis, cfg)?;
        if cfg.warm_start_iterations > 0 {
            let warm = IpalmParams {
                iterations: cfg.warm_start_iterations,
                ..cfg.ipalm
            };
            let trace = run_blocks(
                &mut current,
                &warm,
                &cfg.elastic,
                &cfg.anisotropy,
                Blocks::FeaturesOnly,
                &mut |r| observer(level, r),
            )?;
            traces.push(trace);
        }
        let trace = run_blocks(
            &mut current,
            &cfg.ipalm,
            &cfg.elastic,
            &cfg.anisotropy,
            Blocks::All,
            &mut |r| observer(level, r),
        )?;
        traces.push(trace);
        phis = Some(current.deformations().to_vec());
        state = Some(current);
    }
    Ok(MorphResult {
        state: state.expect("at least one level"),
        traces,
        schedule: schedule.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_sizes() {
        let s = LevelSchedule::new(GridDims::new(64, 32).unwrap(), 3).unwrap();
        let sizes: Vec<_> = s.levels().iter().map(|d| d.as_tuple()).collect();
        assert_eq!(sizes, [(16, 8), (32, 16), (64, 32)]);
        assert!(LevelSchedule::new(GridDims::new(60, 64).unwrap(), 4).is_err());
        assert!(LevelSchedule::new(GridDims::new(64, 64).unwrap(), 5).is_err());
        assert_eq!(LevelSchedule::new(GridDims::new(12, 9).unwrap(), 1).unwrap().len(), 1);
        assert!(LevelSchedule::new(GridDims::new(12, 9).unwrap(), 0).is_err());
    }

    #[test]
    fn padding_suggestion_in_error() {
        let err = LevelSchedule::new(GridDims::new(100, 64).unwrap(), 4).unwrap_err();
        assert!(format!("{err}").contains("104x64"));
    }

    #[test]
    fn table_channels() {
        assert_eq!(vgg_channels_for(32), Some(512));
        assert_eq!(vgg_channels_for(256), Some(128));
        assert_eq!(vgg_channels_for(512), Some(64));
        assert_eq!(vgg_channels_for(100), None);
    }

    #[test]
    fn prolongation_identity_and_constant() {
        let coarse = GridDims::new(9, 9).unwrap();
        let fine = GridDims::new(17, 17).unwrap();
        let id = prolongate_deformation(&DeformationField::identity(coarse), fine);
        assert_eq!(id, DeformationField::identity(fine));

        let phi = DeformationField::from_displacement(coarse, |_, _| [0.25, -0.5]);
        let up = prolongate_deformation(&phi, fine);
        // fine pixels whose coarse neighbours are all interior
        for j in 2..15 {
            for i in 2..15 {
                let d = up.displacement(i, j);
                assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
            }
        }
        assert!(up.boundary_is_identity());
    }

    #[test]
    fn admissibility_repair() {
        let d = GridDims::new(6, 6).unwrap();
        let mut phi = DeformationField::identity(d);
        phi.set(2, 2, [4.5, 2.0]);
        let fixed = make_admissible(phi);
        assert!(jacobian_forward(&fixed).min_det() > 0.0);
    }
}
