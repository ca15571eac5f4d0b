use rayon::prelude::*;

use crate::preprocess::ObjectMap;
use crate::raster::ScaleFactor;

/// Row-major `f64` grid at fine resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Grid {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Normalized distance of each fine pixel to the center of its coarse pixel.
/// Every coarse pixel shares the same `s x s` tile.
#[derive(Clone, Debug, PartialEq)]
pub struct DcTile {
    pub s: usize,
    pub values: Vec<f64>,
}

impl DcTile {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[(row % self.s) * self.s + col % self.s]
    }
}

pub fn compute_dc(s: ScaleFactor) -> DcTile {
    let s = s.get();
    let c = (s as f64 - 1.0) / 2.0;
    let half = s as f64 / 2.0;
    let mut values = Vec::with_capacity(s * s);
    for u in 0..s {
        for v in 0..s {
            let du = u as f64 - c;
            let dv = v as f64 - c;
            values.push(1.0 + (du * du + dv * dv).sqrt() / half);
        }
    }
    DcTile { s, values }
}

/// Fraction of the `s x s` window around each pixel that belongs to the
/// pixel's own object. Windows are clipped at the image border.
pub fn compute_ohi(objects: &ObjectMap, s: ScaleFactor) -> Grid {
    let (w, h) = (objects.width(), objects.height());
    let s = s.get();
    let lo = s / 2;
    let hi = s - 1 - lo;
    let labels = objects.labels();
    let n_obj = objects.object_count();

    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w).enumerate().for_each_init(
        || vec![0u32; n_obj],
        |counts, (r, out)| {
            let r0 = r.saturating_sub(lo);
            let r1 = (r + hi).min(h - 1);
            let rows = r1 - r0 + 1;
            let add_col = |counts: &mut Vec<u32>, c: usize| {
                for rr in r0..=r1 {
                    counts[labels[rr * w + c] as usize] += 1;
                }
            };
            let remove_col = |counts: &mut Vec<u32>, c: usize| {
                for rr in r0..=r1 {
                    counts[labels[rr * w + c] as usize] -= 1;
                }
            };
            // Current window holds columns a..b (exclusive end).
            let (mut a, mut b) = (0usize, 0usize);
            for (c, o) in out.iter_mut().enumerate() {
                let c0 = c.saturating_sub(lo);
                let c1 = (c + hi).min(w - 1) + 1;
                while b < c1 {
                    add_col(counts, b);
                    b += 1;
                }
                while a < c0 {
                    remove_col(counts, a);
                    a += 1;
                }
                let m = rows * (c1 - c0);
                *o = counts[labels[r * w + c] as usize] as f64 / m as f64;
            }
            while a < b {
                remove_col(counts, a);
                a += 1;
            }
        },
    );
    Grid {
        width: w,
        height: h,
        values,
    }
}

/// `ORI = OHI / DC`.
pub fn compute_ori(ohi: &Grid, dc: &DcTile) -> Grid {
    let w = ohi.width;
    let values = ohi
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| v / dc.at(i / w, i % w))
        .collect();
    Grid {
        width: w,
        height: ohi.height,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf(s: usize) -> ScaleFactor {
        ScaleFactor::new(s).unwrap()
    }

    fn brute_ohi(objects: &ObjectMap, s: usize) -> Vec<f64> {
        let (w, h) = (objects.width() as i64, objects.height() as i64);
        let lo = -((s / 2) as i64);
        let hi = lo + s as i64 - 1;
        let mut out = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let me = objects.get(r as usize, c as usize);
                let (mut same, mut m) = (0, 0);
                for dr in lo..=hi {
                    for dc in lo..=hi {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr < 0 || cc < 0 || rr >= h || cc >= w {
                            continue;
                        }
                        m += 1;
                        if objects.get(rr as usize, cc as usize) == me {
                            same += 1;
                        }
                    }
                }
                out.push(same as f64 / m as f64);
            }
        }
        out
    }

    #[test]
    fn dc_hand_values() {
        assert!((compute_dc(sf(5)).at(2, 2) - 1.0).abs() < 1e-15);
        assert!((compute_dc(sf(2)).at(0, 0) - 1.707_106_781).abs() < 1e-8);
        let t = compute_dc(sf(10));
        assert!((t.at(0, 0) - 2.272_792_206).abs() < 1e-8);
        assert_eq!(t.at(13, 27), t.at(3, 7));
    }

    #[test]
    fn dc_tile_is_fourfold_symmetric() {
        for s in 2..12 {
            let t = compute_dc(sf(s));
            for u in 0..s {
                for v in 0..s {
                    let x = t.at(u, v);
                    assert_eq!(x, t.at(s - 1 - u, v));
                    assert_eq!(x, t.at(u, s - 1 - v));
                    assert_eq!(x, t.at(v, u));
                }
            }
        }
    }

    #[test]
    fn ohi_interior_and_half_split() {
        let (w, h) = (20, 12);
        let labels = (0..w * h).map(|i| u32::from(i % w >= 10)).collect();
        let objects = ObjectMap::new(w, h, labels).unwrap();
        let ohi = compute_ohi(&objects, sf(4));
        assert_eq!(ohi.get(6, 3), 1.0);
        // Window columns 8..=11 straddle the boundary at 10.
        assert_eq!(ohi.get(6, 10), 0.5);
    }

    #[test]
    fn ohi_singleton_object() {
        let (w, h) = (9, 9);
        let labels = (0..w * h).map(|i| u32::from(i == 40)).collect();
        let objects = ObjectMap::new(w, h, labels).unwrap();
        let ohi = compute_ohi(&objects, sf(3));
        assert!((ohi.get(4, 4) - 1.0 / 9.0).abs() < 1e-15);
        let corner = compute_ohi(&objects, sf(3)).get(0, 0);
        assert_eq!(corner, 1.0);
    }

    #[test]
    fn ohi_matches_brute_force() {
        let (w, h) = (17, 13);
        // Stripes and blocks give many window configurations.
        let raw = crate::raster::Raster::from_fn(w, h, 1, |_, r, c| {
            (((r / 3) * 7 + (c * c) / 11) % 5) as f32
        })
        .unwrap();
        let objects = crate::preprocess::ingest_segmentation(&raw, &raw).unwrap();
        for s in 2..8 {
            let fast = compute_ohi(&objects, sf(s));
            assert_eq!(fast.values, brute_ohi(&objects, s), "s = {s}");
        }
    }

    #[test]
    fn ori_quotients() {
        let ohi = Grid {
            width: 2,
            height: 1,
            values: vec![0.5, 0.0],
        };
        let dc = DcTile {
            s: 2,
            values: vec![2.0, 1.5, 1.0, 1.0],
        };
        assert_eq!(compute_ori(&ohi, &dc).values, vec![0.25, 0.0]);
        let ones = Grid {
            width: 3,
            height: 3,
            values: vec![1.0; 9],
        };
        assert_eq!(compute_ori(&ones, &compute_dc(sf(3))).get(1, 1), 1.0);
    }
}
