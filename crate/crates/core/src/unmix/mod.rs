//! Object-level unmixing (OL-U).
//!
//! Each coarse pixel is modeled as the fraction-weighted mix of per-class
//! reflectances. For every coarse pixel a `w x w` window of coarse pixels
//! gives an overdetermined system `A F = C` (`A` holds class fractions), solved
//! per band with `0 <= F <= 1`. Fine pixels take the solved value of their
//! class, then every object is flattened to its mean.

pub mod bvls;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::{ClassMap, ObjectMap};
use crate::raster::{Raster, ScaleFactor};
use bvls::{solve_box, Normal};

/// Class fractions of every coarse pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionCube {
    width: usize,
    height: usize,
    n_classes: usize,
    data: Vec<f64>,
}

impl FractionCube {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Fraction vector of coarse pixel `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        let p = row * self.width + col;
        &self.data[p * self.n_classes..(p + 1) * self.n_classes]
    }
}

/// Counts the proportion of each class inside every `s x s` block.
pub fn class_fractions(refined: &ClassMap, s: ScaleFactor) -> Result<FractionCube> {
    let (cw, ch) = s.coarse_dims(refined.width(), refined.height())?;
    let nc = refined.n_classes();
    let sz = s.get();
    let m = s.fine_per_coarse() as f64;
    let mut data = vec![0.0; cw * ch * nc];
    for r in 0..refined.height() {
        for c in 0..refined.width() {
            let p = (r / sz) * cw + c / sz;
            data[p * nc + refined.get(r, c) as usize] += 1.0;
        }
    }
    data.iter_mut().for_each(|v| *v /= m);
    Ok(FractionCube {
        width: cw,
        height: ch,
        n_classes: nc,
        data,
    })
}

/// Unmixed class reflectances for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSolution {
    pub center: (usize, usize),
    pub n_classes: usize,
    /// Band-major: `values[b * n_classes + c]`. Unsolved classes hold `NaN`.
    pub values: Vec<f64>,
    pub solved: Vec<bool>,
}

impl WindowSolution {
    #[inline]
    pub fn value(&self, band: usize, class: usize) -> Option<f64> {
        self.solved[class].then(|| self.values[band * self.n_classes + class])
    }
}

fn coarse_validity(coarse: &Raster, mask: Option<&[bool]>) -> Vec<bool> {
    (0..coarse.pixels())
        .map(|p| coarse.pixel_valid(p) && mask.is_none_or(|m| m[p]))
        .collect()
}

/// Solves the system built from a set of coarse pixel indices.
fn solve_rows(
    coarse: &Raster,
    fractions: &FractionCube,
    rows: &[usize],
    center: (usize, usize),
) -> Result<WindowSolution> {
    let nc = fractions.n_classes;
    let mut totals = vec![0.0; nc];
    for &p in rows {
        for (t, f) in totals.iter_mut().zip(&fractions.data[p * nc..(p + 1) * nc]) {
            *t += f;
        }
    }
    let solved: Vec<bool> = totals.iter().map(|&t| t > 0.0).collect();
    let cols: Vec<usize> = (0..nc).filter(|&c| solved[c]).collect();
    let k = cols.len();
    let mut a = Vec::with_capacity(rows.len() * k);
    for &p in rows {
        a.extend(cols.iter().map(|&c| fractions.data[p * nc + c]));
    }
    let normal = Normal::from_rows(&a, k);

    let nb = coarse.bands();
    let mut values = vec![f64::NAN; nb * nc];
    let mut b = vec![0.0; rows.len()];
    for band in 0..nb {
        let src = coarse.band(band);
        for (bi, &p) in b.iter_mut().zip(rows) {
            *bi = src[p] as f64;
        }
        let h = normal.rhs(&a, &b);
        let x = solve_box(&normal, &h, 0.0, 1.0)?;
        for (&c, v) in cols.iter().zip(x) {
            values[band * nc + c] = v;
        }
    }
    Ok(WindowSolution {
        center,
        n_classes: nc,
        values,
        solved,
    })
}

fn window_rows(
    valid: &[bool],
    cw: usize,
    ch: usize,
    center: (usize, usize),
    w: usize,
) -> Vec<usize> {
    let half = w / 2;
    let (r0, r1) = (center.0.saturating_sub(half), (center.0 + half).min(ch - 1));
    let (c0, c1) = (center.1.saturating_sub(half), (center.1 + half).min(cw - 1));
    (r0..=r1)
        .flat_map(|r| (c0..=c1).map(move |c| r * cw + c))
        .filter(|&p| valid[p])
        .collect()
}

fn check_window(w: usize) -> Result<()> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "unmixing window must be odd, got {w}"
        )));
    }
    Ok(())
}

/// Bounded least-squares unmixing of the window of size `w` centered on
/// coarse pixel `center = (row, col)`. The window shrinks at image borders;
/// masked coarse pixels are dropped from the system.
pub fn unmix_window(
    coarse: &Raster,
    fractions: &FractionCube,
    center: (usize, usize),
    w: usize,
    valid_mask: Option<&[bool]>,
) -> Result<WindowSolution> {
    check_window(w)?;
    check_fraction_dims(coarse, fractions)?;
    if let Some(m) = valid_mask {
        if m.len() != coarse.pixels() {
            return Err(Error::DimensionMismatch("valid mask length".into()));
        }
    }
    let valid = coarse_validity(coarse, valid_mask);
    let rows = window_rows(&valid, fractions.width, fractions.height, center, w);
    if rows.is_empty() {
        return Err(Error::FullyMaskedWindow {
            row: center.0,
            col: center.1,
        });
    }
    solve_rows(coarse, fractions, &rows, center)
}

fn check_fraction_dims(coarse: &Raster, fractions: &FractionCube) -> Result<()> {
    if coarse.width() != fractions.width || coarse.height() != fractions.height {
        return Err(Error::DimensionMismatch(format!(
            "coarse image {}x{} vs fraction grid {}x{}",
            coarse.width(),
            coarse.height(),
            fractions.width,
            fractions.height
        )));
    }
    Ok(())
}

/// OL-U prediction at fine resolution; constant within every object.
///
/// Fallbacks: a class unsolved in a window takes the whole-image solution; a
/// class absent from every valid coarse pixel takes its coarse pixel's value
/// (or the band mean when that pixel is masked). Windows without any valid
/// coarse pixel use the whole-image solution.
pub fn olu_predict(
    coarse: &Raster,
    refined: &ClassMap,
    objects: &ObjectMap,
    s: ScaleFactor,
    w: usize,
) -> Result<Raster> {
    check_window(w)?;
    let (fw, fh) = (refined.width(), refined.height());
    if objects.width() != fw || objects.height() != fh {
        return Err(Error::DimensionMismatch(format!(
            "class map {fw}x{fh} vs object map {}x{}",
            objects.width(),
            objects.height()
        )));
    }
    s.check_pair((fw, fh), (coarse.width(), coarse.height()))?;
    let fractions = class_fractions(refined, s)?;
    let (cw, ch) = (coarse.width(), coarse.height());
    let valid = coarse_validity(coarse, None);
    let all: Vec<usize> = (0..cw * ch).filter(|&p| valid[p]).collect();
    if all.is_empty() {
        return Err(Error::FullyMaskedImage);
    }
    let global = solve_rows(coarse, &fractions, &all, (ch / 2, cw / 2))?;

    let windows: Vec<WindowSolution> = (0..cw * ch)
        .into_par_iter()
        .map(|p| {
            let center = (p / cw, p % cw);
            let rows = window_rows(&valid, cw, ch, center, w);
            if rows.is_empty() {
                Ok(WindowSolution {
                    center,
                    ..global.clone()
                })
            } else {
                solve_rows(coarse, &fractions, &rows, center)
            }
        })
        .collect::<Result<_>>()?;

    let nb = coarse.bands();
    let band_means: Vec<f64> = (0..nb)
        .map(|b| {
            let src = coarse.band(b);
            all.iter().map(|&p| src[p] as f64).sum::<f64>() / all.len() as f64
        })
        .collect();
    let sz = s.get();
    let unmixed = |band: usize, row: usize, col: usize| -> f64 {
        let cp = (row / sz) * cw + col / sz;
        let class = refined.get(row, col) as usize;
        windows[cp]
            .value(band, class)
            .or_else(|| global.value(band, class))
            .unwrap_or_else(|| {
                if valid[cp] {
                    coarse.band(band)[cp] as f64
                } else {
                    band_means[band]
                }
            })
    };

    let n_obj = objects.object_count();
    let sizes = objects.sizes();
    let mut data = vec![0.0f32; fw * fh * nb];
    data.par_chunks_mut(fw * fh)
        .enumerate()
        .for_each(|(band, out)| {
            let mut sums = vec![0.0f64; n_obj];
            for row in 0..fh {
                for col in 0..fw {
                    sums[objects.get(row, col) as usize] += unmixed(band, row, col);
                }
            }
            let means: Vec<f32> = sums
                .iter()
                .zip(&sizes)
                .map(|(s, &n)| (s / n as f64).clamp(0.0, 1.0) as f32)
                .collect();
            for (o, &l) in out.iter_mut().zip(objects.labels()) {
                *o = means[l as usize];
            }
        });
    let mut desc = coarse.descriptor().rescaled(fw, fh, 1.0 / sz as f64);
    desc.nodata = None;
    Ok(Raster::from_parts_unchecked(desc, data))
}
