use rayon::prelude::*;

use super::{Raster, ScaleFactor};
use crate::error::Result;

/// Block-mean degradation by `s`. Nodata pixels are skipped; a block with no
/// valid pixel becomes nodata.
pub fn block_mean_upscale(fine: &Raster, s: ScaleFactor) -> Result<Raster> {
    let (cw, ch) = s.coarse_dims(fine.width(), fine.height())?;
    let sz = s.get();
    let fw = fine.width();
    let desc = fine.descriptor().rescaled(cw, ch, sz as f64);
    let nodata = desc.nodata.unwrap_or(f32::NAN);
    let fdesc = fine.descriptor();

    let mut data = vec![0.0f32; cw * ch * fine.bands()];
    data.par_chunks_mut(cw)
        .enumerate()
        .for_each(|(row_idx, out_row)| {
            let band = row_idx / ch;
            let cr = row_idx % ch;
            let src = fine.band(band);
            for (cc, out) in out_row.iter_mut().enumerate() {
                let mut sum = 0.0f64;
                let mut n = 0usize;
                for r in cr * sz..(cr + 1) * sz {
                    for &v in &src[r * fw + cc * sz..r * fw + (cc + 1) * sz] {
                        if !fdesc.is_nodata(v) {
                            sum += v as f64;
                            n += 1;
                        }
                    }
                }
                *out = if n == 0 {
                    nodata
                } else {
                    (sum / n as f64) as f32
                };
            }
        });
    Ok(Raster::from_parts_unchecked(desc, data))
}

/// Catmull-Rom cubic convolution weights (a = -0.5) for the taps at
/// offsets -1, 0, 1, 2 from `floor(x)`, where `t = x - floor(x)`.
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Tap indices (edge-clamped) and weights for every fine coordinate along one axis.
fn axis_taps(coarse_len: usize, s: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..coarse_len * s)
        .map(|i| {
            let x = (i as f64 + 0.5) / s as f64 - 0.5;
            let x0 = x.floor();
            let w = catmull_rom_weights(x - x0);
            let x0 = x0 as isize;
            let clamp = |k: isize| k.clamp(0, coarse_len as isize - 1) as usize;
            ([clamp(x0 - 1), clamp(x0), clamp(x0 + 1), clamp(x0 + 2)], w)
        })
        .collect()
}

/// Bicubic (Catmull-Rom) interpolation of `coarse` onto the grid `s` times
/// finer, sampling at fine-pixel centers with replicated borders.
///
/// When the 4x4 support of a fine pixel contains nodata the pixel takes the
/// mean of the valid support values; a fully invalid support yields nodata.
pub fn bicubic_downscale(coarse: &Raster, s: ScaleFactor) -> Result<Raster> {
    let sz = s.get();
    let (cw, ch) = (coarse.width(), coarse.height());
    let (fw, fh) = (cw * sz, ch * sz);
    let desc = coarse.descriptor().rescaled(fw, fh, 1.0 / sz as f64);
    let nodata = desc.nodata.unwrap_or(f32::NAN);
    let cdesc = coarse.descriptor();
    let cols = axis_taps(cw, sz);
    let rows = axis_taps(ch, sz);

    let mut data = vec![0.0f32; fw * fh * coarse.bands()];
    data.par_chunks_mut(fw)
        .enumerate()
        .for_each(|(row_idx, out_row)| {
            let band = row_idx / fh;
            let (ri, rw) = rows[row_idx % fh];
            let src = coarse.band(band);
            for (out, &(ci, cwt)) in out_row.iter_mut().zip(&cols) {
                let mut acc = 0.0f64;
                let mut valid_sum = 0.0f64;
                let mut valid = 0usize;
                for (&r, &wr) in ri.iter().zip(&rw) {
                    let line = &src[r * cw..(r + 1) * cw];
                    for (&c, &wc) in ci.iter().zip(&cwt) {
                        let v = line[c];
                        if !cdesc.is_nodata(v) {
                            acc += wr * wc * v as f64;
                            valid_sum += v as f64;
                            valid += 1;
                        }
                    }
                }
                *out = match valid {
                    16 => acc as f32,
                    0 => nodata,
                    n => (valid_sum / n as f64) as f32,
                };
            }
        });
    Ok(Raster::from_parts_unchecked(desc, data))
}
