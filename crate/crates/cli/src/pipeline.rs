//! End-to-end run: load, pad, solve, write frames, maps and traces.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::{debug, info};
use metamorph_core::features::FeatureTensor;
use metamorph_core::grid::GridDims;
use metamorph_core::multilevel::{solve_deep, solve_rgb, LevelSchedule, MorphResult};
use metamorph_core::optimizer::IterationRecord;
use serde::Serialize;

use crate::config::{Mode, SolverConfig};
use crate::format::{load_tensor, parse_level_file_name};
use crate::imageio::{crop, crop_image, load_rgb, pad, save_gray, save_rgb, Padding, Rgb3};
use crate::visualize::colorize_displacement;

#[derive(Debug, Clone)]
pub struct Inputs {
    pub image_a: PathBuf,
    pub image_b: PathBuf,
    pub features_a: Option<PathBuf>,
    pub features_b: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceLine {
    pub level: usize,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: f64,
    pub regularizer_sum: f64,
    pub mismatch_sum: f64,
    pub deformation_backtracks: usize,
    pub feature_backtracks: usize,
    pub skipped_steps: usize,
    pub min_det: f64,
    pub regularizer: Vec<f64>,
    pub mismatch: Vec<f64>,
}

impl From<&IterationRecord> for TraceRecord {
    fn from(r: &IterationRecord) -> Self {
        TraceRecord {
            iteration: r.iteration,
            energy: r.energy,
            regularizer_sum: r.regularizer_sum,
            mismatch_sum: r.mismatch_sum,
            deformation_backtracks: r.deformation_backtracks,
            feature_backtracks: r.feature_backtracks,
            skipped_steps: r.skipped_steps,
            min_det: r.min_det,
            regularizer: r.steps.iter().map(|s| s.regularizer).collect(),
            mismatch: r.steps.iter().map(|s| s.mismatch).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepSummary {
    pub k: usize,
    pub regularizer: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: SolverConfig,
    pub input_size: (usize, usize),
    pub padded_size: (usize, usize),
    pub padding: Padding,
    pub levels: Vec<(usize, usize)>,
    pub final_energy: f64,
    pub regularizer_sum: f64,
    pub mismatch_sum: f64,
    pub steps: Vec<StepSummary>,
    pub level_final_energies: Vec<f64>,
    pub skipped_steps: usize,
    pub min_det: f64,
    pub elapsed_seconds: f64,
}

/// Load the tensors of `dir` matching every level of `schedule`.
pub fn load_pyramid(dir: &Path, schedule: &LevelSchedule) -> Result<Vec<FeatureTensor>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if let Some(name) = entry.file_name().to_str() {
            if let Some((w, h, c)) = parse_level_file_name(name) {
                found.push((w, h, c, entry.path()));
            }
        }
    }
    schedule
        .levels()
        .iter()
        .map(|dims| {
            let (w, h) = dims.as_tuple();
            let mut matches = found.iter().filter(|(fw, fh, _, _)| (*fw, *fh) == (w, h));
            let (_, _, c, path) = matches
                .next()
                .ok_or_else(|| anyhow!("{}: no level_{w}x{h}_C*.mft tensor", dir.display()))?;
            if matches.next().is_some() {
                bail!("{}: several tensors for a {w}x{h} grid", dir.display());
            }
            let t = load_tensor(path).with_context(|| format!("reading {}", path.display()))?;
            if (t.width(), t.height(), t.channels()) != (w, h, *c) {
                bail!(
                    "{}: header says {}x{}x{}, file name says {w}x{h}x{c}",
                    path.display(),
                    t.width(),
                    t.height(),
                    t.channels()
                );
            }
            Ok(t)
        })
        .collect()
}

fn dims_of(rgb: &Rgb3) -> GridDims {
    rgb[0].dims()
}

fn pad_rgb(rgb: &Rgb3, p: Padding) -> Result<Rgb3> {
    Ok([pad(&rgb[0], p)?, pad(&rgb[1], p)?, pad(&rgb[2], p)?])
}

fn crop_rgb(rgb: &Rgb3, p: Padding) -> Result<Rgb3> {
    Ok([crop(&rgb[0], p)?, crop(&rgb[1], p)?, crop(&rgb[2], p)?])
}

/// Run the solver and write all outputs to `inputs.out_dir`.
pub fn run(cfg: &SolverConfig, inputs: &Inputs) -> Result<Summary> {
    cfg.validate()?;
    let morph = cfg.morph_config()?;
    let start = Instant::now();

    let u_a = load_rgb(&inputs.image_a)?;
    let u_b = load_rgb(&inputs.image_b)?;
    let dims = dims_of(&u_a);
    if dims != dims_of(&u_b) {
        bail!(
            "input sizes differ: {}x{} and {}x{}",
            dims.width(),
            dims.height(),
            dims_of(&u_b).width(),
            dims_of(&u_b).height()
        );
    }
    let multiple = 1usize << (cfg.levels - 1);
    let padding = Padding::to_multiple(dims, multiple);
    let (u_a, u_b) = if padding.is_zero() {
        (u_a, u_b)
    } else {
        info!("padding {}x{} by {padding:?}", dims.width(), dims.height());
        (pad_rgb(&u_a, padding)?, pad_rgb(&u_b, padding)?)
    };
    let padded = dims_of(&u_a);
    let schedule = LevelSchedule::new(padded, cfg.levels)?;

    fs::create_dir_all(&inputs.out_dir)
        .with_context(|| format!("creating {}", inputs.out_dir.display()))?;
    let trace_path = inputs.out_dir.join("trace.jsonl");
    let mut trace = BufWriter::new(File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?);
    let mut trace_err: Option<std::io::Error> = None;
    let mut observer = |level: usize, rec: &IterationRecord| {
        debug!("level {level} iteration {} energy {:.6e}", rec.iteration, rec.energy);
        if trace_err.is_some() {
            return;
        }
        let line = TraceLine { level, record: rec.into() };
        let res = serde_json::to_writer(&mut trace, &line)
            .map_err(std::io::Error::from)
            .and_then(|_| trace.write_all(b"\n"));
        if let Err(e) = res {
            trace_err = Some(e);
        }
    };

    let result: MorphResult = match cfg.mode {
        Mode::Rgb => {
            if inputs.features_a.is_some() || inputs.features_b.is_some() {
                bail!("feature pyramids are only used in deep mode");
            }
            solve_rgb(&u_a, &u_b, &schedule, &morph, &mut observer)?
        }
        Mode::Deep => {
            let (Some(fa), Some(fb)) = (&inputs.features_a, &inputs.features_b) else {
                bail!("deep mode needs --features-a and --features-b");
            };
            let pa = load_pyramid(fa, &schedule)?;
            let pb = load_pyramid(fb, &schedule)?;
            solve_deep(&u_a, &u_b, &pa, &pb, &schedule, &morph, &mut observer)?
        }
    };
    if let Some(e) = trace_err {
        return Err(e).with_context(|| format!("writing {}", trace_path.display()));
    }
    trace.flush()?;
    drop(trace);

    let state = &result.state;
    let out = &inputs.out_dir;
    for (k, f) in state.features().iter().enumerate() {
        let rgb = crop_rgb(&f.rgb_image(), padding)?;
        save_rgb(&out.join(format!("frame_{k:03}.png")), &rgb)?;
    }
    for (k, a) in state.anisotropies().iter().enumerate() {
        save_gray(&out.join(format!("anisotropy_{:03}.png", k + 1)), &crop(a, padding)?)?;
    }
    for (k, phi) in state.deformations().iter().enumerate() {
        let img = crop_image(&colorize_displacement(phi), padding);
        let path = out.join(format!("displacement_{:03}.png", k + 1));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }

    let energy = state.energy(&morph.elastic, morph.ipalm.delta)?;
    let summary = Summary {
        config: cfg.clone(),
        input_size: dims.as_tuple(),
        padded_size: padded.as_tuple(),
        padding,
        levels: schedule.levels().iter().map(|d| d.as_tuple()).collect(),
        final_energy: energy.total,
        regularizer_sum: energy.regularizer_sum(),
        mismatch_sum: energy.mismatch_sum(),
        steps: energy
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| StepSummary {
                k: k + 1,
                regularizer: s.regularizer,
                mismatch: s.mismatch,
            })
            .collect(),
        level_final_energies: result.traces.iter().filter_map(|t| t.final_energy()).collect(),
        skipped_steps: result.traces.iter().map(|t| t.skipped_steps()).sum(),
        min_det: state.min_det(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    info!("final energy {:.6e}, outputs in {}", summary.final_energy, out.display());
    Ok(summary)
}
