//! End-to-end fusion: preprocessing, OL-U, OL-RC and PL-RC in sequence, plus
//! coarse-image simulation, synthetic scenes and stage-wise evaluation.

mod config;
mod stepwise;
pub mod synth;

use std::time::{Duration, Instant};

pub use config::{FusionConfig, Segmentation};
pub use stepwise::{stepwise_report, StepwiseReport};

use crate::error::{Error, Result, Stage};
use crate::preprocess::{
    ingest_segmentation, kmeans_classify, refine_classmap, segment_builtin, ClassMap, ObjectMap,
};
use crate::raster::{block_mean_upscale, read_raster, Raster, RasterDescriptor, ScaleFactor};
use crate::residual::{
    compute_dc, compute_ohi, compute_ori, compute_residuals, olrc_compensate, plrc_compensate,
};
use crate::unmix::olu_predict;

/// Sentinel written into masked coarse pixels.
pub const MASK_NODATA: f32 = -9999.0;

/// Images for one fusion run. A class or object map supplied here replaces
/// the corresponding preprocessing step.
#[derive(Clone, Copy, Debug)]
pub struct FusionInputs<'a> {
    pub fine_tb: &'a Raster,
    pub coarse_tp: &'a Raster,
    pub classes: Option<&'a ClassMap>,
    pub objects: Option<&'a ObjectMap>,
}

impl<'a> FusionInputs<'a> {
    pub fn new(fine_tb: &'a Raster, coarse_tp: &'a Raster) -> Self {
        FusionInputs {
            fine_tb,
            coarse_tp,
            classes: None,
            objects: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Intermediates {
    /// Class map after per-object refinement.
    pub classes: ClassMap,
    pub objects: ObjectMap,
    pub olu: Raster,
    pub olrc: Raster,
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub obsum: Raster,
    pub intermediates: Option<Intermediates>,
    pub timings: Vec<(Stage, Duration)>,
}

fn check_inputs(inputs: &FusionInputs, cfg: &FusionConfig) -> Result<()> {
    let (fine, coarse) = (inputs.fine_tb, inputs.coarse_tp);
    cfg.scale.check_pair(
        (fine.width(), fine.height()),
        (coarse.width(), coarse.height()),
    )?;
    if fine.bands() != coarse.bands() {
        return Err(Error::DimensionMismatch(format!(
            "fine image has {} bands, coarse image {}",
            fine.bands(),
            coarse.bands()
        )));
    }
    if fine.has_nodata() {
        return Err(Error::InvalidRaster(
            "base fine image must not contain nodata".into(),
        ));
    }
    fine.check_reflectance()?;
    coarse.check_reflectance()?;
    let dims_match = |w: usize, h: usize| w == fine.width() && h == fine.height();
    if let Some(c) = inputs.classes {
        if !dims_match(c.width(), c.height()) {
            return Err(Error::DimensionMismatch(
                "class map does not match the fine image".into(),
            ));
        }
    }
    if let Some(o) = inputs.objects {
        if !dims_match(o.width(), o.height()) {
            return Err(Error::DimensionMismatch(
                "object map does not match the fine image".into(),
            ));
        }
    }
    Ok(())
}

fn fine_shaped(fine: &Raster, pred: Raster) -> Raster {
    let desc = RasterDescriptor {
        nodata: None,
        ..fine.descriptor().clone()
    };
    Raster::from_parts_unchecked(desc, pred.into_data())
}

pub fn fuse(inputs: &FusionInputs, cfg: &FusionConfig) -> Result<FusionOutput> {
    cfg.validate()?;
    check_inputs(inputs, cfg)?;
    let (fine, coarse, s) = (inputs.fine_tb, inputs.coarse_tp, cfg.scale);
    let mut timings = Vec::new();
    let mut timed = |stage: Stage, start: Instant| {
        let t = start.elapsed();
        log::info!("{stage}: {:.2} s", t.as_secs_f64());
        timings.push((stage, t));
    };

    let t = Instant::now();
    let classes = match inputs.classes {
        Some(c) => c.clone(),
        None => kmeans_classify(fine, cfg.n_classes, cfg.kmeans_seed, cfg.kmeans_max_iter)
            .map_err(|e| e.at(Stage::Classification))?,
    };
    timed(Stage::Classification, t);

    let t = Instant::now();
    let objects = match (inputs.objects, &cfg.segmentation) {
        (Some(o), _) => o.clone(),
        (None, Segmentation::Builtin { scale_param, .. }) => {
            segment_builtin(fine, *scale_param, cfg.min_object_size())
                .map_err(|e| e.at(Stage::Segmentation))?
        }
        (None, Segmentation::External { path }) => read_raster(path)
            .and_then(|labels| ingest_segmentation(&labels, fine))
            .map_err(|e| e.at(Stage::Segmentation))?,
    };
    timed(Stage::Segmentation, t);

    let t = Instant::now();
    let refined = refine_classmap(&classes, &objects).map_err(|e| e.at(Stage::Refinement))?;
    timed(Stage::Refinement, t);

    let t = Instant::now();
    let olu = olu_predict(coarse, &refined, &objects, s, cfg.window)
        .map(|r| fine_shaped(fine, r))
        .map_err(|e| e.at(Stage::Unmixing))?;
    timed(Stage::Unmixing, t);

    let t = Instant::now();
    let olrc = compute_residuals(coarse, &olu, s)
        .and_then(|r1| {
            let ori = compute_ori(&compute_ohi(&objects, s), &compute_dc(s));
            olrc_compensate(&olu, &r1, &ori, &objects, cfg.or_percent)
        })
        .map_err(|e| e.at(Stage::ObjectResidual))?;
    timed(Stage::ObjectResidual, t);

    let t = Instant::now();
    let obsum = plrc_compensate(&olrc, coarse, fine, s, cfg.sim_window, cfg.n_similar)
        .map_err(|e| e.at(Stage::PixelResidual))?;
    timed(Stage::PixelResidual, t);

    let intermediates = cfg.emit_intermediates.then_some(Intermediates {
        classes: refined,
        objects,
        olu,
        olrc,
    });
    Ok(FusionOutput {
        obsum,
        intermediates,
        timings,
    })
}

/// Block-mean degradation of a fine image. `mask` is a single-band raster at
/// coarse or fine resolution; a nonzero value masks the coarse pixel (at fine
/// resolution, any masked pixel masks its whole block).
pub fn simulate_coarse(fine: &Raster, s: ScaleFactor, mask: Option<&Raster>) -> Result<Raster> {
    let coarse = block_mean_upscale(fine, s)?;
    let Some(mask) = mask else {
        return Ok(coarse);
    };
    if mask.bands() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "mask must have one band, found {}",
            mask.bands()
        )));
    }
    let (cw, ch) = (coarse.width(), coarse.height());
    let factor = if (mask.width(), mask.height()) == (cw, ch) {
        1
    } else if (mask.width(), mask.height()) == (fine.width(), fine.height()) {
        s.get()
    } else {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} matches neither the fine {}x{} nor the coarse {cw}x{ch} grid",
            mask.width(),
            mask.height(),
            fine.width(),
            fine.height()
        )));
    };
    let mut masked = vec![false; cw * ch];
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(0, r, c) != 0.0 {
                masked[(r / factor) * cw + c / factor] = true;
            }
        }
    }
    let n = cw * ch;
    let mut data = coarse.into_data();
    for (i, v) in data.iter_mut().enumerate() {
        if masked[i % n] {
            *v = MASK_NODATA;
        }
    }
    let desc = RasterDescriptor {
        nodata: Some(MASK_NODATA),
        ..fine.descriptor().rescaled(cw, ch, s.get() as f64)
    };
    Raster::new(desc, data)
}
