//! Synthetic fine/coarse image pairs with known truth.
//!
//! The grid is cut into rectangular objects by repeated guillotine splits.
//! Every object gets a class; class spectra plus a small per-object offset
//! make the base image. The prediction-date image adds a per-class change, a
//! per-object change and, inside some objects, a rectangular patch with its
//! own change. Independent Gaussian noise is added to both dates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::simulate_coarse;
use crate::error::{Error, Result};
use crate::preprocess::{ClassMap, ObjectMap};
use crate::raster::{Raster, ScaleFactor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    pub bands: usize,
    pub n_classes: usize,
    pub n_objects: usize,
    /// Smallest allowed object edge, in fine pixels.
    pub min_side: usize,
    /// Standard deviation of per-object offsets from the class spectrum at the base date.
    pub object_spread: f64,
    /// Standard deviation of per-class change between the two dates.
    pub class_change: f64,
    /// Standard deviation of per-object change added to the class change.
    pub object_change: f64,
    /// Fraction of objects containing a patch with extra change.
    pub patch_fraction: f64,
    pub patch_change: f64,
    /// Pixel noise standard deviation, applied to both dates.
    pub noise: f64,
    /// Fraction of coarse pixels covered by a rectangular cloud.
    pub cloud_fraction: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 320,
            height: 320,
            scale: 16,
            bands: 4,
            n_classes: 5,
            n_objects: 60,
            min_side: 6,
            object_spread: 0.03,
            class_change: 0.06,
            object_change: 0.04,
            patch_fraction: 0.3,
            patch_change: 0.04,
            noise: 0.01,
            cloud_fraction: 0.0,
            seed: 1,
        }
    }
}

impl SceneSpec {
    /// Noise-free scene whose prediction-date image is constant per class.
    pub fn exact(width: usize, height: usize, scale: usize, seed: u64) -> Self {
        SceneSpec {
            width,
            height,
            scale,
            object_spread: 0.0,
            object_change: 0.0,
            patch_fraction: 0.0,
            patch_change: 0.0,
            noise: 0.0,
            seed,
            ..SceneSpec::default()
        }
    }

    /// Parses a TOML scene description; omitted fields keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub fine_tb: Raster,
    pub fine_tp: Raster,
    pub classes: ClassMap,
    pub objects: ObjectMap,
    pub coarse_tp: Raster,
    /// Coarse-resolution mask, 1 where clouded.
    pub mask: Option<Raster>,
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    r0: usize,
    c0: usize,
    h: usize,
    w: usize,
}

fn layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Rect>> {
    let m = spec.min_side.max(1);
    let mut rects = vec![Rect {
        r0: 0,
        c0: 0,
        h: spec.height,
        w: spec.width,
    }];
    while rects.len() < spec.n_objects {
        // Split the largest rectangle that can still hold two objects.
        let pick = rects
            .iter()
            .enumerate()
            .filter(|(_, r)| r.h >= 2 * m || r.w >= 2 * m)
            .max_by_key(|(i, r)| (r.h * r.w, std::cmp::Reverse(*i)))
            .map(|(i, _)| i);
        let Some(i) = pick else {
            return Err(Error::InfeasibleScene(format!(
                "{} objects with minimum side {m} do not fit a {}x{} grid",
                spec.n_objects, spec.width, spec.height
            )));
        };
        let r = rects[i];
        let split_rows = if r.h >= 2 * m && r.w >= 2 * m {
            r.h > r.w || (r.h == r.w && rng.random::<bool>())
        } else {
            r.h >= 2 * m
        };
        let (a, b) = if split_rows {
            let cut = rng.random_range(m..=r.h - m);
            (
                Rect { h: cut, ..r },
                Rect {
                    r0: r.r0 + cut,
                    h: r.h - cut,
                    ..r
                },
            )
        } else {
            let cut = rng.random_range(m..=r.w - m);
            (
                Rect { w: cut, ..r },
                Rect {
                    c0: r.c0 + cut,
                    w: r.w - cut,
                    ..r
                },
            )
        };
        rects[i] = a;
        rects.push(b);
    }
    // Row-major order of each rectangle's first pixel.
    rects.sort_by_key(|r| (r.r0, r.c0));
    Ok(rects)
}

/// Class spectra spread over `[0.05, 0.6]`, kept at least `gap` apart in mean
/// absolute difference when possible.
fn class_spectra(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let gap = 0.08;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for _ in 0..spec.n_classes {
        let mut best = Vec::new();
        let mut best_d = -1.0;
        for _ in 0..200 {
            let cand: Vec<f64> = (0..spec.bands)
                .map(|_| rng.random_range(0.05..0.6))
                .collect();
            let d = out
                .iter()
                .map(|o| {
                    o.iter().zip(&cand).map(|(a, b)| (a - b).abs()).sum::<f64>() / spec.bands as f64
                })
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = cand;
            }
            if d >= gap {
                break;
            }
        }
        out.push(best);
    }
    out
}

fn check_spec(spec: &SceneSpec) -> Result<ScaleFactor> {
    let bad = |msg: String| Err(Error::InfeasibleScene(msg));
    let s = ScaleFactor::new(spec.scale)?;
    if spec.width == 0 || spec.height == 0 || spec.bands == 0 {
        return bad("grid and band count must be positive".into());
    }
    if !spec.width.is_multiple_of(spec.scale) || !spec.height.is_multiple_of(spec.scale) {
        return bad(format!(
            "{}x{} grid is not divisible by scale {}",
            spec.width, spec.height, spec.scale
        ));
    }
    if spec.n_classes < 2 {
        return bad("at least two classes are required".into());
    }
    if spec.n_objects < spec.n_classes {
        return bad(format!(
            "{} objects cannot hold {} classes",
            spec.n_objects, spec.n_classes
        ));
    }
    let sigmas = [
        spec.object_spread,
        spec.class_change,
        spec.object_change,
        spec.patch_change,
        spec.noise,
    ];
    if sigmas.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return bad("standard deviations must be finite and non-negative".into());
    }
    for f in [spec.patch_fraction, spec.cloud_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return bad(format!("fraction {f} outside [0, 1]"));
        }
    }
    Ok(s)
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma is finite and non-negative")
}

pub fn generate_synthetic_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let s = check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rects = layout(spec, &mut rng)?;
    let (w, h, nb) = (spec.width, spec.height, spec.bands);
    let n = w * h;

    let spectra = class_spectra(spec, &mut rng);
    let class_delta: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| {
            (0..nb)
                .map(|_| normal(spec.class_change).sample(&mut rng))
                .collect()
        })
        .collect();

    // Every class appears at least once.
    let mut object_class: Vec<usize> = (0..rects.len())
        .map(|i| {
            if i < spec.n_classes {
                i
            } else {
                rng.random_range(0..spec.n_classes)
            }
        })
        .collect();
    for i in (1..object_class.len()).rev() {
        let j = rng.random_range(0..=i);
        object_class.swap(i, j);
    }

    let mut labels = vec![0u32; n];
    let mut class_labels = vec![0u32; n];
    let mut tb = vec![0.0f64; n * nb];
    let mut tp = vec![0.0f64; n * nb];
    for (o, r) in rects.iter().enumerate() {
        let c = object_class[o];
        let offset: Vec<f64> = (0..nb)
            .map(|_| normal(spec.object_spread).sample(&mut rng))
            .collect();
        let change: Vec<f64> = (0..nb)
            .map(|_| normal(spec.object_change).sample(&mut rng))
            .collect();
        let patch =
            (spec.patch_fraction > 0.0 && rng.random::<f64>() < spec.patch_fraction).then(|| {
                let ph = rng.random_range(1..=r.h.div_ceil(2));
                let pw = rng.random_range(1..=r.w.div_ceil(2));
                let pr = r.r0 + rng.random_range(0..=r.h - ph);
                let pc = r.c0 + rng.random_range(0..=r.w - pw);
                let delta: Vec<f64> = (0..nb)
                    .map(|_| normal(spec.patch_change).sample(&mut rng))
                    .collect();
                (pr, pc, ph, pw, delta)
            });
        for row in r.r0..r.r0 + r.h {
            for col in r.c0..r.c0 + r.w {
                let p = row * w + col;
                labels[p] = o as u32;
                class_labels[p] = c as u32;
                let in_patch = patch.as_ref().filter(|(pr, pc, ph, pw, _)| {
                    (*pr..pr + ph).contains(&row) && (*pc..pc + pw).contains(&col)
                });
                for b in 0..nb {
                    let base = spectra[c][b] + offset[b];
                    tb[b * n + p] = base;
                    let extra = in_patch.map_or(0.0, |pt| pt.4[b]);
                    tp[b * n + p] = base + class_delta[c][b] + change[b] + extra;
                }
            }
        }
    }
    if spec.noise > 0.0 {
        let noise = normal(spec.noise);
        tb.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        tp.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    let to_raster = |v: Vec<f64>| {
        let data = v.into_iter().map(|x| x.clamp(0.01, 0.99) as f32).collect();
        Raster::new(crate::raster::RasterDescriptor::new(w, h, nb), data)
    };
    let fine_tb = to_raster(tb)?;
    let fine_tp = to_raster(tp)?;

    let mask = if spec.cloud_fraction > 0.0 {
        let (cw, ch) = (w / spec.scale, h / spec.scale);
        let area = (spec.cloud_fraction * (cw * ch) as f64).round() as usize;
        let mh = ((area as f64).sqrt().round() as usize).clamp(1, ch);
        let mw = area.div_ceil(mh).clamp(1, cw);
        let r0 = rng.random_range(0..=ch - mh);
        let c0 = rng.random_range(0..=cw - mw);
        Some(Raster::from_fn(cw, ch, 1, |_, r, c| {
            ((r0..r0 + mh).contains(&r) && (c0..c0 + mw).contains(&c)) as u8 as f32
        })?)
    } else {
        None
    };
    let coarse_tp = simulate_coarse(&fine_tp, s, mask.as_ref())?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        fine_tb,
        fine_tp,
        classes: ClassMap::new(w, h, spec.n_classes, class_labels)?,
        objects: ObjectMap::new(w, h, labels)?,
        coarse_tp,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::block_mean_upscale;

    #[test]
    fn four_rectangles() {
        let spec = SceneSpec {
            width: 64,
            height: 64,
            scale: 8,
            n_classes: 2,
            n_objects: 4,
            noise: 0.0,
            ..SceneSpec::default()
        };
        let scene = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(scene.objects.object_count(), 4);
        assert_eq!(scene.objects.sizes().iter().sum::<usize>(), 64 * 64);
    }

    #[test]
    fn coarse_is_block_mean_of_truth() {
        let scene = generate_synthetic_scene(&SceneSpec::default()).unwrap();
        let s = ScaleFactor::new(16).unwrap();
        assert_eq!(
            scene.coarse_tp,
            block_mean_upscale(&scene.fine_tp, s).unwrap()
        );
        scene.fine_tb.check_reflectance().unwrap();
    }

    #[test]
    fn no_change_scene() {
        let spec = SceneSpec {
            class_change: 0.0,
            object_change: 0.0,
            patch_change: 0.0,
            noise: 0.0,
            ..SceneSpec::default()
        };
        let scene = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(scene.fine_tb, scene.fine_tp);
    }

    #[test]
    fn exact_scene_is_class_constant() {
        let scene = generate_synthetic_scene(&SceneSpec::exact(64, 64, 8, 3)).unwrap();
        let labels = scene.classes.labels();
        for b in 0..4 {
            let band = scene.fine_tp.band(b);
            for (p, &c) in labels.iter().enumerate() {
                let first = labels.iter().position(|&x| x == c).unwrap();
                assert_eq!(band[p], band[first]);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = SceneSpec {
            cloud_fraction: 0.2,
            ..SceneSpec::default()
        };
        let a = generate_synthetic_scene(&spec).unwrap();
        let b = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(a.fine_tb, b.fine_tb);
        assert_eq!(a.fine_tp, b.fine_tp);
        assert_eq!(a.coarse_tp, b.coarse_tp);
        assert_eq!(a.mask, b.mask);
        let c = generate_synthetic_scene(&SceneSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.fine_tp, c.fine_tp);
    }

    #[test]
    fn infeasible_specs() {
        let too_many = SceneSpec {
            width: 32,
            height: 32,
            scale: 8,
            n_objects: 100,
            min_side: 8,
            ..SceneSpec::default()
        };
        assert!(matches!(
            generate_synthetic_scene(&too_many),
            Err(Error::InfeasibleScene(_))
        ));
        let indivisible = SceneSpec {
            width: 30,
            ..SceneSpec::default()
        };
        assert!(generate_synthetic_scene(&indivisible).is_err());
    }
}
