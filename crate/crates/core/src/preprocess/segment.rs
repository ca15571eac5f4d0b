//! Graph-based segmentation (Felzenszwalb & Huttenlocher) on the 4-connected
//! pixel grid, followed by absorption of undersized segments into their most
//! spectrally similar neighbor.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::ObjectMap;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// `100 / 255`: the customary FH scale parameter for 8-bit imagery expressed
/// on the unit reflectance scale.
pub const DEFAULT_SCALE_PARAM: f64 = 100.0 / 255.0;

struct Forest {
    parent: Vec<u32>,
    size: Vec<u32>,
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32, w: f64) {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = w;
    }
}

pub fn segment_builtin(fine: &Raster, scale_param: f64, min_size: usize) -> Result<ObjectMap> {
    if fine.has_nodata() {
        return Err(Error::InvalidRaster(
            "fine image for segmentation must be nodata-free".into(),
        ));
    }
    if !(scale_param >= 0.0 && scale_param.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "segmentation scale must be finite and non-negative, got {scale_param}"
        )));
    }
    let (w, h, nb) = (fine.width(), fine.height(), fine.bands());
    let n = w * h;
    let mut spectra = vec![0.0f64; n * nb];
    for b in 0..nb {
        for (p, &v) in fine.band(b).iter().enumerate() {
            spectra[p * nb + b] = v as f64;
        }
    }
    let dist = |p: usize, q: usize| -> f64 {
        spectra[p * nb..(p + 1) * nb]
            .iter()
            .zip(&spectra[q * nb..(q + 1) * nb])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };

    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(2 * n);
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            if c + 1 < w {
                edges.push((dist(p, p + 1), p as u32, p as u32 + 1));
            }
            if r + 1 < h {
                edges.push((dist(p, p + w), p as u32, (p + w) as u32));
            }
        }
    }
    // generation order breaks weight ties, so the sort is total and stable
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut forest = Forest::new(n);
    for &(wt, p, q) in &edges {
        let (a, b) = (forest.find(p), forest.find(q));
        if a == b {
            continue;
        }
        let ta = forest.internal[a as usize] + scale_param / forest.size[a as usize] as f64;
        let tb = forest.internal[b as usize] + scale_param / forest.size[b as usize] as f64;
        if wt <= ta.min(tb) {
            forest.union(a, b, wt);
        }
    }

    let roots: Vec<u32> = (0..n as u32).map(|p| forest.find(p)).collect();
    let regions = compact(&roots);
    let merged = absorb_small(&regions, &spectra, nb, w, h, min_size);
    ObjectMap::new(w, h, compact(&merged))
}

/// Renumbers arbitrary ids to `0..k` in order of first appearance.
fn compact(ids: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    ids.iter()
        .map(|&id| {
            let next = map.len() as u32;
            *map.entry(id).or_insert(next)
        })
        .collect()
}

fn absorb_small(
    regions: &[u32],
    spectra: &[f64],
    nb: usize,
    w: usize,
    h: usize,
    min_size: usize,
) -> Vec<u32> {
    let k = regions.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut size = vec![0usize; k];
    let mut sum = vec![0.0f64; k * nb];
    for (p, &r) in regions.iter().enumerate() {
        size[r as usize] += 1;
        for b in 0..nb {
            sum[r as usize * nb + b] += spectra[p * nb + b];
        }
    }
    let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); k];
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            let a = regions[p];
            let mut link = |q: usize| {
                let b = regions[q];
                if a != b {
                    adj[a as usize].insert(b);
                    adj[b as usize].insert(a);
                }
            };
            if c + 1 < w {
                link(p + 1);
            }
            if r + 1 < h {
                link(p + w);
            }
        }
    }

    let mut target: Vec<u32> = (0..k as u32).collect();
    let mut heap: BinaryHeap<Reverse<(usize, u32)>> = (0..k)
        .filter(|&r| size[r] < min_size)
        .map(|r| Reverse((size[r], r as u32)))
        .collect();
    let mean_dist = |sum: &[f64], size: &[usize], a: usize, b: usize| -> f64 {
        (0..nb)
            .map(|i| {
                let d = sum[a * nb + i] / size[a] as f64 - sum[b * nb + i] / size[b] as f64;
                d * d
            })
            .sum()
    };

    while let Some(Reverse((sz, id))) = heap.pop() {
        let id = id as usize;
        if target[id] != id as u32 || size[id] != sz || sz >= min_size {
            continue;
        }
        let Some(best) = adj[id]
            .iter()
            .map(|&nbr| (mean_dist(&sum, &size, id, nbr as usize), nbr))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, nbr)| nbr as usize)
        else {
            continue;
        };
        let moved = std::mem::take(&mut adj[id]);
        for &x in &moved {
            let x = x as usize;
            adj[x].remove(&(id as u32));
            if x != best {
                adj[x].insert(best as u32);
                adj[best].insert(x as u32);
            }
        }
        size[best] += size[id];
        for b in 0..nb {
            sum[best * nb + b] += sum[id * nb + b];
        }
        target[id] = best as u32;
        if size[best] < min_size {
            heap.push(Reverse((size[best], best as u32)));
        }
    }

    let resolve = |mut r: usize| {
        while target[r] as usize != r {
            r = target[r] as usize;
        }
        r as u32
    };
    let final_ids: Vec<u32> = (0..k).map(resolve).collect();
    regions.iter().map(|&r| final_ids[r as usize]).collect()
}
