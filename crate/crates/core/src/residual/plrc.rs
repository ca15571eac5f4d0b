use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::compute_residuals;
use crate::error::{Error, Result};
use crate::raster::{Raster, ScaleFactor};

/// A neighbor chosen for pixel-level compensation of one target pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarPixel {
    pub row: usize,
    pub col: usize,
    /// Mean absolute band difference to the target.
    pub spectral: f64,
    /// `1 + distance / (w_s / 2)`.
    pub spatial: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarPixelSet {
    pub target: (usize, usize),
    /// Ordered by spectral distance, then spatial distance, then pixel index.
    pub pixels: Vec<SimilarPixel>,
}

fn check_window(w_s: usize, n_s: usize) -> Result<()> {
    if w_s.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "similar-pixel window must be odd, got {w_s}"
        )));
    }
    if n_s == 0 {
        return Err(Error::InvalidParameter(
            "number of similar pixels must be at least 1".into(),
        ));
    }
    Ok(())
}

#[inline]
fn spatial_distance(d2: usize, w_s: usize) -> f64 {
    1.0 + (d2 as f64).sqrt() / (w_s as f64 / 2.0)
}

fn inverse_distance_weights(d: &[f64]) -> Vec<f64> {
    let total: f64 = d.iter().map(|x| 1.0 / x).sum();
    d.iter().map(|x| (1.0 / x) / total).collect()
}

/// The `n_s` pixels of the `w_s x w_s` window around `target` that are
/// spectrally closest to it, with inverse-distance weights summing to one.
pub fn select_similar_pixels(
    fine_tb: &Raster,
    target: (usize, usize),
    w_s: usize,
    n_s: usize,
) -> Result<SimilarPixelSet> {
    check_window(w_s, n_s)?;
    let (w, h) = (fine_tb.width(), fine_tb.height());
    let (tr, tc) = target;
    if tr >= h || tc >= w {
        return Err(Error::InvalidParameter(format!(
            "target ({tr}, {tc}) outside {w}x{h} image"
        )));
    }
    let n = fine_tb.pixels();
    let nb = fine_tb.bands();
    let data = fine_tb.data();
    let tp = tr * w + tc;
    if !fine_tb.pixel_valid(tp) {
        return Ok(SimilarPixelSet {
            target,
            pixels: Vec::new(),
        });
    }
    let half = w_s / 2;
    let mut cand = Vec::new();
    for r in tr.saturating_sub(half)..=(tr + half).min(h - 1) {
        for c in tc.saturating_sub(half)..=(tc + half).min(w - 1) {
            let p = r * w + c;
            if !fine_tb.pixel_valid(p) {
                continue;
            }
            let mut sum = 0.0;
            for b in 0..nb {
                sum += (data[b * n + p] as f64 - data[b * n + tp] as f64).abs();
            }
            let d2 = r.abs_diff(tr).pow(2) + c.abs_diff(tc).pow(2);
            cand.push((sum / nb as f64, d2, p));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    cand.truncate(n_s);
    let spatial: Vec<f64> = cand.iter().map(|c| spatial_distance(c.1, w_s)).collect();
    let weights = inverse_distance_weights(&spatial);
    let pixels = cand
        .into_iter()
        .zip(spatial.into_iter().zip(weights))
        .map(|((spectral, _, p), (spatial, weight))| SimilarPixel {
            row: p / w,
            col: p % w,
            spectral,
            spatial,
            weight,
        })
        .collect();
    Ok(SimilarPixelSet { target, pixels })
}

/// Per-pixel residual as the similar-pixel weighted mean of `residuals`,
/// band-major. Nodata residuals count as zero.
pub fn pixel_level_residuals(
    fine_tb: &Raster,
    residuals: &Raster,
    w_s: usize,
    n_s: usize,
) -> Result<Vec<f64>> {
    check_window(w_s, n_s)?;
    fine_tb.require_same_shape(residuals, "base fine image vs residuals")?;
    let (w, h) = (fine_tb.width(), fine_tb.height());
    let n = fine_tb.pixels();
    let nb = fine_tb.bands();
    let half = w_s / 2;

    let spectra: Vec<f64> = fine_tb.data().iter().map(|&v| v as f64).collect();
    let valid: Vec<bool> = (0..n).map(|p| fine_tb.pixel_valid(p)).collect();
    let res: Vec<f64> = residuals
        .data()
        .iter()
        .map(|&v| if residuals.is_valid(v) { v as f64 } else { 0.0 })
        .collect();
    let inv_d: Vec<f64> = (0..=2 * half * half)
        .map(|d2| 1.0 / spatial_distance(d2, w_s))
        .collect();

    struct Scratch {
        s: Vec<f64>,
        heap: BinaryHeap<(u64, usize, usize)>,
        picked: Vec<(u64, usize, usize)>,
    }

    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map_init(
            || Scratch {
                s: vec![0.0; w_s],
                heap: BinaryHeap::with_capacity(n_s + 1),
                picked: Vec::with_capacity(n_s),
            },
            |sc, tr| {
                let mut out = vec![0.0; w * nb];
                let r0 = tr.saturating_sub(half);
                let r1 = (tr + half).min(h - 1);
                for tc in 0..w {
                    let tp = tr * w + tc;
                    if !valid[tp] {
                        continue;
                    }
                    let c0 = tc.saturating_sub(half);
                    let c1 = (tc + half).min(w - 1);
                    let span = c1 - c0 + 1;
                    sc.heap.clear();
                    for r in r0..=r1 {
                        let s = &mut sc.s[..span];
                        s.iter_mut().for_each(|v| *v = 0.0);
                        for b in 0..nb {
                            let line = &spectra[b * n + r * w + c0..b * n + r * w + c1 + 1];
                            let t = spectra[b * n + tp];
                            for (acc, &x) in s.iter_mut().zip(line) {
                                *acc += (x - t).abs();
                            }
                        }
                        let dr2 = r.abs_diff(tr).pow(2);
                        for (i, &sum) in s.iter().enumerate() {
                            let c = c0 + i;
                            let p = r * w + c;
                            if !valid[p] {
                                continue;
                            }
                            // Non-negative f64 bit patterns order like the values.
                            let key = ((sum / nb as f64).to_bits(), dr2 + c.abs_diff(tc).pow(2), p);
                            if sc.heap.len() < n_s {
                                sc.heap.push(key);
                            } else if key < *sc.heap.peek().expect("heap is full") {
                                sc.heap.pop();
                                sc.heap.push(key);
                            }
                        }
                    }
                    sc.picked.clear();
                    sc.picked.extend(sc.heap.drain());
                    sc.picked.sort_unstable();
                    let total: f64 = sc.picked.iter().map(|k| inv_d[k.1]).sum();
                    for b in 0..nb {
                        let mut acc = 0.0;
                        for k in &sc.picked {
                            acc += inv_d[k.1] / total * res[b * n + k.2];
                        }
                        out[tc * nb + b] = acc;
                    }
                }
                out
            },
        )
        .collect();

    let mut plr = vec![0.0; n * nb];
    for (r, row) in rows.iter().enumerate() {
        for c in 0..w {
            for b in 0..nb {
                plr[b * n + r * w + c] = row[c * nb + b];
            }
        }
    }
    Ok(plr)
}

/// Recomputes residuals against the OL-RC prediction and adds their
/// similar-pixel weighted mean, clamped to `[0, 1]`.
pub fn plrc_compensate(
    olrc: &Raster,
    coarse_tp: &Raster,
    fine_tb: &Raster,
    s: ScaleFactor,
    w_s: usize,
    n_s: usize,
) -> Result<Raster> {
    olrc.require_same_shape(fine_tb, "OL-RC prediction vs base fine image")?;
    let r2 = compute_residuals(coarse_tp, olrc, s)?;
    let plr = pixel_level_residuals(fine_tb, &r2.fine, w_s, n_s)?;
    let data = olrc
        .data()
        .iter()
        .zip(&plr)
        .map(|(&v, &r)| (v as f64 + r).clamp(0.0, 1.0) as f32)
        .collect();
    let mut desc = olrc.descriptor().clone();
    desc.nodata = None;
    Ok(Raster::from_parts_unchecked(desc, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raster(w: usize, h: usize, bands: usize, levels: u32, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, bands, |_, _, _| {
            rng.random_range(0..levels) as f32 / levels as f32
        })
        .unwrap()
    }

    /// Naive double loop over each window with a full sort.
    fn brute_plr(fine: &Raster, res: &Raster, w_s: usize, n_s: usize) -> Vec<f64> {
        let (w, h, nb) = (fine.width() as i64, fine.height() as i64, fine.bands());
        let half = (w_s / 2) as i64;
        let mut out = vec![0.0; res.data().len()];
        for r in 0..h {
            for c in 0..w {
                let mut cand = Vec::new();
                for rr in (r - half).max(0)..=(r + half).min(h - 1) {
                    for cc in (c - half).max(0)..=(c + half).min(w - 1) {
                        let mut s = 0.0;
                        for b in 0..nb {
                            let x = fine.get(b, rr as usize, cc as usize) as f64;
                            let t = fine.get(b, r as usize, c as usize) as f64;
                            s += (x - t).abs();
                        }
                        let d2 = (rr - r).pow(2) + (cc - c).pow(2);
                        cand.push((s / nb as f64, d2, rr * w + cc));
                    }
                }
                cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cand.truncate(n_s);
                let d: Vec<f64> = cand
                    .iter()
                    .map(|k| 1.0 + (k.1 as f64).sqrt() / (w_s as f64 / 2.0))
                    .collect();
                let z: f64 = d.iter().map(|x| 1.0 / x).sum();
                for b in 0..nb {
                    let mut acc = 0.0;
                    for (k, dk) in cand.iter().zip(&d) {
                        let p = k.2 as usize;
                        acc += (1.0 / dk) / z * res.data()[b * fine.pixels() + p] as f64;
                    }
                    out[b * fine.pixels() + (r * w + c) as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn spatial_distance_hand_value() {
        assert!((spatial_distance(25, 31) - 1.322_580_645).abs() < 1e-8);
        assert_eq!(spatial_distance(0, 31), 1.0);
    }

    #[test]
    fn target_is_always_selected() {
        let fine = random_raster(12, 9, 3, 7, 3);
        for (r, c) in [(0, 0), (4, 5), (8, 11)] {
            let set = select_similar_pixels(&fine, (r, c), 5, 4).unwrap();
            let first = set.pixels[0];
            assert_eq!((first.row, first.col), (r, c));
            assert_eq!(first.spectral, 0.0);
            assert_eq!(first.spatial, 1.0);
            let total: f64 = set.pixels.iter().map(|p| p.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_distance_weight_pair() {
        let w = inverse_distance_weights(&[1.0, 2.0]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn offset_three_four_distance() {
        let fine = Raster::from_fn(40, 40, 1, |_, r, c| match (r, c) {
            (0, 0) | (3, 4) => 0.5,
            _ => 0.1 + (r * 40 + c) as f32 / 4000.0,
        })
        .unwrap();
        let set = select_similar_pixels(&fine, (0, 0), 31, 2).unwrap();
        assert_eq!((set.pixels[1].row, set.pixels[1].col), (3, 4));
        assert!((set.pixels[1].spatial - 1.322_580_645).abs() < 1e-8);
        let ratio = set.pixels[0].weight / set.pixels[1].weight;
        assert!((ratio - set.pixels[1].spatial).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_and_selection() {
        for (seed, w_s, n_s) in [(1, 5, 6), (2, 7, 30), (3, 31, 30), (4, 3, 9)] {
            let fine = random_raster(32, 32, 3, 5, seed);
            let res = Raster::from_fn(32, 32, 3, |b, r, c| {
                ((r * 7 + c * 3 + b) % 11) as f32 / 100.0 - 0.05
            })
            .unwrap();
            let fast = pixel_level_residuals(&fine, &res, w_s, n_s).unwrap();
            let brute = brute_plr(&fine, &res, w_s, n_s);
            for (a, b) in fast.iter().zip(&brute) {
                assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            }
            let set = select_similar_pixels(&fine, (10, 20), w_s, n_s).unwrap();
            let via_set: f64 = set
                .pixels
                .iter()
                .map(|p| p.weight * res.get(1, p.row, p.col) as f64)
                .sum();
            assert!((via_set - fast[1024 + 10 * 32 + 20]).abs() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_image_uses_nearest() {
        let fine = Raster::filled(16, 16, 2, 0.3).unwrap();
        let res = Raster::from_fn(16, 16, 2, |_, r, c| (r * 16 + c) as f32 / 1000.0).unwrap();
        let fast = pixel_level_residuals(&fine, &res, 7, 5).unwrap();
        let brute = brute_plr(&fine, &res, 7, 5);
        for (a, b) in fast.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_and_constant_residual() {
        let s = ScaleFactor::new(4).unwrap();
        let fine_tb = random_raster(16, 16, 2, 9, 5);
        let olrc = Raster::from_fn(16, 16, 2, |b, r, c| {
            0.3 + 0.01 * ((r / 4 + c / 4 + b) % 3) as f32
        })
        .unwrap();
        let coarse = crate::raster::block_mean_upscale(&olrc, s).unwrap();
        let same = plrc_compensate(&olrc, &coarse, &fine_tb, s, 7, 10).unwrap();
        assert_eq!(same, olrc);
        let shifted = Raster::new(
            coarse.descriptor().clone(),
            coarse.data().iter().map(|v| v + 0.02).collect(),
        )
        .unwrap();
        let out = plrc_compensate(&olrc, &shifted, &fine_tb, s, 7, 10).unwrap();
        for (a, b) in out.data().iter().zip(olrc.data()) {
            assert!((a - b - 0.02).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_even_window() {
        let fine = Raster::filled(4, 4, 1, 0.1).unwrap();
        assert!(select_similar_pixels(&fine, (0, 0), 4, 3).is_err());
        assert!(pixel_level_residuals(&fine, &fine, 5, 0).is_err());
    }
}
