//! Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
//! `K1 = 0.01`, `K2 = 0.03` and dynamic range 1. Only windows lying fully
//! inside the image and free of nodata contribute.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// "Valid" separable filtering of a `w x h` plane: output is `(w-10) x (h-10)`.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut horiz = vec![0.0; ow * h];
    for r in 0..h {
        let line = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = taps
                .iter()
                .zip(&line[c..c + WINDOW])
                .map(|(t, v)| t * v)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horiz[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

/// Count of invalid pixels in each full window.
fn invalid_counts(invalid: &[bool], w: usize, h: usize) -> Vec<u32> {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut horiz = vec![0u32; ow * h];
    for r in 0..h {
        for c in 0..ow {
            horiz[r * ow + c] = invalid[r * w + c..r * w + c + WINDOW]
                .iter()
                .filter(|&&x| x)
                .count() as u32;
        }
    }
    let mut out = vec![0u32; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WINDOW).map(|k| horiz[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// SSIM from local statistics.
#[inline]
pub fn ssim_from_moments(mx: f64, my: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
}

fn band_ssim(pred: &Raster, reference: &Raster, band: usize, taps: &[f64; WINDOW]) -> Result<f64> {
    let (w, h) = (pred.width(), pred.height());
    let (x, y) = (pred.band(band), reference.band(band));
    let invalid: Vec<bool> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| !pred.is_valid(a) || !reference.is_valid(b))
        .collect();
    let val = |v: f32, bad: bool| if bad { 0.0 } else { v as f64 };
    let xs: Vec<f64> = x.iter().zip(&invalid).map(|(&v, &b)| val(v, b)).collect();
    let ys: Vec<f64> = y.iter().zip(&invalid).map(|(&v, &b)| val(v, b)).collect();
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a * b).collect();

    let mx = filter_valid(&xs, w, h, taps);
    let my = filter_valid(&ys, w, h, taps);
    let exx = filter_valid(&xx, w, h, taps);
    let eyy = filter_valid(&yy, w, h, taps);
    let exy = filter_valid(&xy, w, h, taps);
    let bad = invalid_counts(&invalid, w, h);

    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..mx.len() {
        if bad[i] > 0 {
            continue;
        }
        let (a, b) = (mx[i], my[i]);
        sum += ssim_from_moments(a, b, exx[i] - a * a, eyy[i] - b * b, exy[i] - a * b);
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / n as f64)
}

pub fn ssim(pred: &Raster, reference: &Raster) -> Result<Vec<f64>> {
    pred.require_same_shape(reference, "ssim")?;
    if pred.width() < WINDOW || pred.height() < WINDOW {
        return Err(Error::ImageTooSmall {
            width: pred.width(),
            height: pred.height(),
            window: WINDOW,
        });
    }
    let taps = gaussian_taps();
    (0..pred.bands())
        .into_par_iter()
        .map(|b| band_ssim(pred, reference, b, &taps))
        .collect()
}
