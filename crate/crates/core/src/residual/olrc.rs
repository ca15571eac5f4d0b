use rayon::prelude::*;

use super::ori::Grid;
use super::ResidualMaps;
use crate::error::{Error, Result};
use crate::preprocess::ObjectMap;
use crate::raster::Raster;

/// Number of residual samples drawn from an object of `pixels` candidates.
pub fn selected_count(pixels: usize, or_percent: f64) -> usize {
    ((or_percent / 100.0 * pixels as f64).round() as usize)
        .max(1)
        .min(pixels)
}

fn check_percent(or_percent: f64) -> Result<()> {
    if !(or_percent > 0.0 && or_percent <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "OR percent must lie in (0, 100], got {or_percent}"
        )));
    }
    Ok(())
}

/// One residual per object and band (`object * bands + band`): the
/// ORI-weighted mean of the fine residuals at the object's highest-ORI pixels.
/// Pixels whose fine residual is nodata are not candidates; an object without
/// candidates gets a zero residual.
pub fn object_level_residuals(
    fine_residuals: &Raster,
    ori: &Grid,
    objects: &ObjectMap,
    or_percent: f64,
) -> Result<Vec<f64>> {
    check_percent(or_percent)?;
    if fine_residuals.width() != objects.width()
        || fine_residuals.height() != objects.height()
        || ori.width != objects.width()
        || ori.height != objects.height()
    {
        return Err(Error::DimensionMismatch(format!(
            "residuals {}x{}, ORI {}x{}, objects {}x{}",
            fine_residuals.width(),
            fine_residuals.height(),
            ori.width,
            ori.height,
            objects.width(),
            objects.height()
        )));
    }
    let bands = fine_residuals.bands();
    let n = fine_residuals.pixels();
    let data = fine_residuals.data();
    let members = objects.members();

    let per_object: Vec<Vec<f64>> = (0..objects.object_count())
        .into_par_iter()
        .map(|o| {
            let mut cand: Vec<u32> = members
                .of(o)
                .iter()
                .copied()
                .filter(|&p| fine_residuals.pixel_valid(p as usize))
                .collect();
            if cand.is_empty() {
                log::warn!("object {o} has no valid fine residual; using zero");
                return vec![0.0; bands];
            }
            let r = selected_count(cand.len(), or_percent);
            let order = |a: &u32, b: &u32| {
                ori.values[*b as usize]
                    .total_cmp(&ori.values[*a as usize])
                    .then(a.cmp(b))
            };
            if r < cand.len() {
                cand.select_nth_unstable_by(r - 1, order);
                cand.truncate(r);
            }
            cand.sort_unstable_by(order);
            let total: f64 = cand.iter().map(|&p| ori.values[p as usize]).sum();
            let weight = |p: u32| {
                if total > 0.0 {
                    ori.values[p as usize] / total
                } else {
                    1.0 / cand.len() as f64
                }
            };
            (0..bands)
                .map(|b| {
                    cand.iter()
                        .map(|&p| weight(p) * data[b * n + p as usize] as f64)
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(per_object.into_iter().flatten().collect())
}

/// Adds each object's residual to the OL-U prediction, clamped to `[0, 1]`.
pub fn olrc_compensate(
    olu: &Raster,
    residuals: &ResidualMaps,
    ori: &Grid,
    objects: &ObjectMap,
    or_percent: f64,
) -> Result<Raster> {
    olu.require_same_shape(&residuals.fine, "OL-U prediction vs fine residuals")?;
    let olr = object_level_residuals(&residuals.fine, ori, objects, or_percent)?;
    let bands = olu.bands();
    let n = olu.pixels();
    let labels = objects.labels();
    let mut data = olu.data().to_vec();
    data.par_chunks_mut(n).enumerate().for_each(|(b, band)| {
        for (v, &o) in band.iter_mut().zip(labels) {
            *v = (*v as f64 + olr[o as usize * bands + b]).clamp(0.0, 1.0) as f32;
        }
    });
    let mut desc = olu.descriptor().clone();
    desc.nodata = None;
    Ok(Raster::from_parts_unchecked(desc, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterDescriptor;

    fn grid(w: usize, h: usize, values: Vec<f64>) -> Grid {
        Grid {
            width: w,
            height: h,
            values,
        }
    }

    #[test]
    fn selected_count_rounding() {
        assert_eq!(selected_count(1, 15.0), 1);
        assert_eq!(selected_count(3, 15.0), 1);
        assert_eq!(selected_count(10, 15.0), 2);
        assert_eq!(selected_count(100, 15.0), 15);
        assert_eq!(selected_count(7, 100.0), 7);
    }

    #[test]
    fn hand_weighted_sum() {
        // Three selected pixels (100 percent) with ORI summing to one.
        let objects = ObjectMap::new(3, 1, vec![0, 0, 0]).unwrap();
        let ori = grid(3, 1, vec![0.2, 0.3, 0.5]);
        let res = Raster::new(RasterDescriptor::new(3, 1, 1), vec![0.01, 0.02, 0.03]).unwrap();
        let olr = object_level_residuals(&res, &ori, &objects, 100.0).unwrap();
        assert!((olr[0] - 0.023).abs() < 1e-9);
    }

    #[test]
    fn picks_highest_ori_with_index_ties() {
        let objects = ObjectMap::new(5, 1, vec![0; 5]).unwrap();
        let ori = grid(5, 1, vec![0.1, 0.9, 0.5, 0.5, 0.2]);
        let res = Raster::new(
            RasterDescriptor::new(5, 1, 1),
            vec![0.0, 0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        // 40 percent of 5 selects two: pixel 1 and, of the tied pair, pixel 2.
        let olr = object_level_residuals(&res, &ori, &objects, 40.0).unwrap();
        let expect = (0.9 * 0.1 + 0.5 * 0.2) / 1.4;
        assert!((olr[0] - expect).abs() < 1e-7);
    }

    #[test]
    fn zero_ori_gives_uniform_weights() {
        let objects = ObjectMap::new(2, 1, vec![0, 0]).unwrap();
        let ori = grid(2, 1, vec![0.0, 0.0]);
        let res = Raster::new(RasterDescriptor::new(2, 1, 1), vec![0.1, 0.3]).unwrap();
        let olr = object_level_residuals(&res, &ori, &objects, 100.0).unwrap();
        assert!((olr[0] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn nodata_residuals_are_skipped() {
        let objects = ObjectMap::new(3, 1, vec![0, 0, 1]).unwrap();
        let ori = grid(3, 1, vec![1.0, 0.5, 1.0]);
        let res = Raster::new(
            RasterDescriptor::new(3, 1, 1).with_nodata(-9999.0),
            vec![-9999.0, 0.04, -9999.0],
        )
        .unwrap();
        let olr = object_level_residuals(&res, &ori, &objects, 15.0).unwrap();
        assert!((olr[0] - 0.04).abs() < 1e-7);
        assert_eq!(olr[1], 0.0);
    }

    #[test]
    fn identity_and_constant_residual() {
        let (w, h) = (6, 4);
        let labels: Vec<u32> = (0..w * h).map(|i| u32::from(i % w >= 3)).collect();
        let objects = ObjectMap::new(w, h, labels).unwrap();
        let olu = Raster::from_fn(w, h, 2, |b, _, c| {
            0.2 + 0.1 * b as f32 + 0.3 * (c >= 3) as u8 as f32
        })
        .unwrap();
        let ori = grid(w, h, (0..w * h).map(|i| (i % 7) as f64 / 7.0).collect());
        let zero = ResidualMaps {
            coarse: Raster::filled(3, 2, 2, 0.0).unwrap(),
            fine: Raster::filled(w, h, 2, 0.0).unwrap(),
        };
        assert_eq!(
            olrc_compensate(&olu, &zero, &ori, &objects, 15.0).unwrap(),
            olu
        );
        let c = ResidualMaps {
            coarse: Raster::filled(3, 2, 2, 0.05).unwrap(),
            fine: Raster::filled(w, h, 2, 0.05).unwrap(),
        };
        let out = olrc_compensate(&olu, &c, &ori, &objects, 15.0).unwrap();
        for (a, b) in out.data().iter().zip(olu.data()) {
            assert!((a - b - 0.05).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_percent() {
        let objects = ObjectMap::new(1, 1, vec![0]).unwrap();
        let res = Raster::filled(1, 1, 1, 0.0).unwrap();
        let ori = grid(1, 1, vec![1.0]);
        assert!(object_level_residuals(&res, &ori, &objects, 0.0).is_err());
        assert!(object_level_residuals(&res, &ori, &objects, 100.5).is_err());
    }
}
