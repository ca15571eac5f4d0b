use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ClassMap;
use crate::error::{Error, Result};
use crate::raster::Raster;

// Fixed chunking keeps reductions independent of the thread count.
const CHUNK: usize = 8192;

/// Lloyd's algorithm run to convergence.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    /// Sum of squared distances after every assignment step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

pub fn kmeans_classify(
    fine: &Raster,
    n_classes: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClassMap> {
    let fit = kmeans_fit(fine, n_classes, seed, max_iter)?;
    ClassMap::new(fine.width(), fine.height(), n_classes, fit.labels)
}

pub fn kmeans_fit(fine: &Raster, k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "k-means needs at least 2 classes, got {k}"
        )));
    }
    if fine.has_nodata() {
        return Err(Error::InvalidRaster(
            "fine image for classification must be nodata-free".into(),
        ));
    }
    let nb = fine.bands();
    let n = fine.pixels();
    let points = interleave(fine);

    let distinct = count_distinct(&points, nb, k);
    if distinct < k {
        return Err(Error::TooFewSpectra {
            requested: k,
            found: distinct,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&points, nb, k, &mut rng);
    let mut labels = vec![0u32; n];
    let mut dist = vec![0.0f64; n];
    assign(&points, nb, &centroids, &mut labels, &mut dist);
    let mut objective = vec![ordered_sum(&dist)];
    let mut converged = false;

    for _ in 0..max_iter {
        update_centroids(&points, nb, &labels, &dist, &mut centroids);
        let changed = assign(&points, nb, &centroids, &mut labels, &mut dist);
        objective.push(ordered_sum(&dist));
        if changed == 0 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("k-means stopped at max_iter={max_iter} before convergence");
    }
    Ok(KMeansFit {
        centroids: centroids.chunks(nb).map(<[f64]>::to_vec).collect(),
        labels,
        objective,
        converged,
    })
}

fn interleave(r: &Raster) -> Vec<f64> {
    let (n, nb) = (r.pixels(), r.bands());
    let mut out = vec![0.0; n * nb];
    for b in 0..nb {
        for (p, &v) in r.band(b).iter().enumerate() {
            out[p * nb + b] = v as f64;
        }
    }
    out
}

fn count_distinct(points: &[f64], nb: usize, cap: usize) -> usize {
    let mut seen = HashSet::new();
    for p in points.chunks(nb) {
        seen.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if seen.len() >= cap {
            break;
        }
    }
    seen.len()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn ordered_sum(v: &[f64]) -> f64 {
    v.par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

fn plus_plus_init(points: &[f64], nb: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / nb;
    let first = rng.random_range(0..n);
    let mut centroids = points[first * nb..(first + 1) * nb].to_vec();
    let mut d2: Vec<f64> = points
        .par_chunks(nb)
        .map(|p| sq_dist(p, &centroids[..nb]))
        .collect();
    while centroids.len() < k * nb {
        let total = ordered_sum(&d2);
        // total > 0 because at least k distinct spectra exist
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = i;
                break;
            }
        }
        if d2[pick] == 0.0 {
            pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
        }
        let c = points[pick * nb..(pick + 1) * nb].to_vec();
        d2.par_iter_mut()
            .zip(points.par_chunks(nb))
            .for_each(|(d, p)| *d = d.min(sq_dist(p, &c)));
        centroids.extend(c);
    }
    centroids
}

/// Nearest-centroid assignment, ties to the lowest index. Returns the number
/// of labels that changed.
fn assign(
    points: &[f64],
    nb: usize,
    centroids: &[f64],
    labels: &mut [u32],
    dist: &mut [f64],
) -> usize {
    labels
        .par_chunks_mut(CHUNK)
        .zip(dist.par_chunks_mut(CHUNK))
        .zip(points.par_chunks(CHUNK * nb))
        .map(|((ls, ds), ps)| {
            let mut changed = 0;
            for ((l, d), p) in ls.iter_mut().zip(ds.iter_mut()).zip(ps.chunks(nb)) {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (j, c) in centroids.chunks(nb).enumerate() {
                    let dj = sq_dist(p, c);
                    if dj < best_d {
                        best_d = dj;
                        best = j;
                    }
                }
                if *l != best as u32 {
                    changed += 1;
                    *l = best as u32;
                }
                *d = best_d;
            }
            changed
        })
        .sum()
}

fn update_centroids(
    points: &[f64],
    nb: usize,
    labels: &[u32],
    dist: &[f64],
    centroids: &mut [f64],
) {
    let k = centroids.len() / nb;
    let partials: Vec<(Vec<f64>, Vec<usize>)> = labels
        .par_chunks(CHUNK)
        .zip(points.par_chunks(CHUNK * nb))
        .map(|(ls, ps)| {
            let mut sums = vec![0.0; k * nb];
            let mut counts = vec![0usize; k];
            for (&l, p) in ls.iter().zip(ps.chunks(nb)) {
                let l = l as usize;
                counts[l] += 1;
                for (s, v) in sums[l * nb..(l + 1) * nb].iter_mut().zip(p) {
                    *s += v;
                }
            }
            (sums, counts)
        })
        .collect();
    let mut sums = vec![0.0; k * nb];
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        sums.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    let mut taken: Vec<usize> = Vec::new();
    for j in 0..k {
        if counts[j] > 0 {
            for b in 0..nb {
                centroids[j * nb + b] = sums[j * nb + b] / counts[j] as f64;
            }
        } else {
            // Empty cluster: move it onto the worst-fit point not already used.
            let far = dist
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .fold(
                    (0usize, -1.0f64),
                    |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
                )
                .0;
            taken.push(far);
            centroids[j * nb..(j + 1) * nb].copy_from_slice(&points[far * nb..(far + 1) * nb]);
        }
    }
}
