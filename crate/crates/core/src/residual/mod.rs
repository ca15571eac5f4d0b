//! Residual compensation. OL-RC adds one residual per object, picked from
//! the bicubic fine residuals with the object residual index; PL-RC adds
//! per-pixel residuals pooled over spectrally similar neighbors.

mod diagnostics;
mod olrc;
mod ori;
mod plrc;

pub use diagnostics::{
    residual_diagnostics, CorrelationRow, DiagnosticMaps, DiagnosticReport, MapStats,
    ACTUAL_RESIDUALS, COARSE_RESIDUALS, FINE_RESIDUALS, OBJECT_RESIDUALS, OLR, OLR_PLR,
};
pub use olrc::{object_level_residuals, olrc_compensate, selected_count};
pub use ori::{compute_dc, compute_ohi, compute_ori, DcTile, Grid};
pub use plrc::{
    pixel_level_residuals, plrc_compensate, select_similar_pixels, SimilarPixel, SimilarPixelSet,
};

use crate::error::Result;
use crate::raster::{bicubic_downscale, block_mean_upscale, Raster, ScaleFactor};

/// Sentinel for residual pixels without a valid coarse observation.
pub const RESIDUAL_NODATA: f32 = -9999.0;

/// Coarse residuals `C - upscale(prediction)` and their bicubic fine-scale version.
#[derive(Clone, Debug)]
pub struct ResidualMaps {
    pub coarse: Raster,
    pub fine: Raster,
}

pub fn compute_residuals(
    coarse_tp: &Raster,
    prediction: &Raster,
    s: ScaleFactor,
) -> Result<ResidualMaps> {
    s.check_pair(
        (prediction.width(), prediction.height()),
        (coarse_tp.width(), coarse_tp.height()),
    )?;
    if coarse_tp.bands() != prediction.bands() {
        return Err(crate::Error::DimensionMismatch(format!(
            "coarse image has {} bands, prediction {}",
            coarse_tp.bands(),
            prediction.bands()
        )));
    }
    let up = block_mean_upscale(prediction, s)?;
    let mut any_invalid = false;
    let data: Vec<f32> = coarse_tp
        .data()
        .iter()
        .zip(up.data())
        .map(|(&c, &p)| {
            if coarse_tp.is_valid(c) && up.is_valid(p) {
                (c - p).clamp(-1.0, 1.0)
            } else {
                any_invalid = true;
                RESIDUAL_NODATA
            }
        })
        .collect();
    let mut desc = coarse_tp.descriptor().clone();
    desc.nodata = any_invalid.then_some(RESIDUAL_NODATA);
    let coarse = Raster::new(desc, data)?;

    let mut fine = bicubic_downscale(&coarse, s)?;
    let nodata = fine.nodata();
    for v in fine.data_mut() {
        if nodata.is_none_or(|nd| *v != nd) {
            *v = v.clamp(-1.0, 1.0);
        }
    }
    Ok(ResidualMaps { coarse, fine })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterDescriptor;

    fn sf(s: usize) -> ScaleFactor {
        ScaleFactor::new(s).unwrap()
    }

    #[test]
    fn zero_residuals_when_consistent() {
        let pred =
            Raster::from_fn(12, 8, 2, |b, r, c| ((r * 12 + c + b) % 7) as f32 / 10.0).unwrap();
        let coarse = block_mean_upscale(&pred, sf(4)).unwrap();
        let res = compute_residuals(&coarse, &pred, sf(4)).unwrap();
        assert!(res.coarse.data().iter().all(|&v| v == 0.0));
        assert!(res.fine.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset_propagates() {
        let pred = Raster::filled(12, 12, 1, 0.4).unwrap();
        let coarse = Raster::filled(3, 3, 1, 0.45).unwrap();
        let res = compute_residuals(&coarse, &pred, sf(4)).unwrap();
        assert!(res.fine.data().iter().all(|&v| (v - 0.05).abs() < 1e-6));
    }

    #[test]
    fn ramp_residual_reproduced_in_interior() {
        let s = 3;
        let pred = Raster::filled(8 * s, 4 * s, 1, 0.2).unwrap();
        let coarse = Raster::from_fn(8, 4, 1, |_, _, c| 0.2 + 0.01 * c as f32).unwrap();
        let res = compute_residuals(&coarse, &pred, sf(s)).unwrap();
        for col in 0..8 * s {
            let x = (col as f64 + 0.5) / s as f64 - 0.5;
            if x.floor() >= 1.0 && x.floor() <= 5.0 {
                assert!((res.fine.get(0, 5, col) as f64 - 0.01 * x).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn masked_coarse_gives_nodata_residual() {
        let pred = Raster::filled(4, 4, 1, 0.4).unwrap();
        let coarse = Raster::new(
            RasterDescriptor::new(2, 2, 1).with_nodata(-1.0),
            vec![0.5, -1.0, 0.5, 0.5],
        )
        .unwrap();
        let res = compute_residuals(&coarse, &pred, sf(2)).unwrap();
        assert_eq!(res.coarse.data()[1], RESIDUAL_NODATA);
        assert!(res.fine.data().iter().all(|&v| (v - 0.1).abs() < 1e-6));
    }

    #[test]
    fn dimension_mismatch() {
        let pred = Raster::filled(8, 8, 1, 0.4).unwrap();
        let coarse = Raster::filled(3, 2, 1, 0.4).unwrap();
        assert!(compute_residuals(&coarse, &pred, sf(4)).is_err());
    }
}
