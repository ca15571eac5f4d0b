use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ori::{compute_dc, compute_ohi, compute_ori, Grid};
use super::{compute_residuals, RESIDUAL_NODATA};
use crate::error::{Error, Result};
use crate::metrics::{fmt_value, pearson};
use crate::preprocess::ObjectMap;
use crate::raster::{Raster, RasterDescriptor, ScaleFactor};

/// Residual maps explaining where each compensation stage gains accuracy.
/// All fine-resolution maps share the prediction's shape.
#[derive(Clone, Debug)]
pub struct DiagnosticMaps {
    /// `C_tp - upscale(OL-U)`, coarse resolution.
    pub coarse_residuals: Raster,
    /// Bicubic downscaling of the coarse residuals.
    pub fine_residuals: Raster,
    /// `reference - OL-U`.
    pub actual_residuals: Raster,
    /// Per-object mean of the actual residuals.
    pub object_residuals: Raster,
    /// `|object residuals - fine residuals|`.
    pub or_minus_fr: Raster,
    pub ori: Grid,
    /// `OL-RC - OL-U`.
    pub olr: Raster,
    /// `OBSUM - OL-U`.
    pub olr_plr: Raster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Correlation of one residual map with one reference residual map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub reference: String,
    pub map: String,
    /// `None` where either map is constant.
    pub bands: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub stats: Vec<MapStats>,
    pub correlations: Vec<CorrelationRow>,
}

pub const OBJECT_RESIDUALS: &str = "object residuals";
pub const ACTUAL_RESIDUALS: &str = "actual residuals";
pub const COARSE_RESIDUALS: &str = "coarse residuals";
pub const FINE_RESIDUALS: &str = "fine residuals";
pub const OLR: &str = "OL-R";
pub const OLR_PLR: &str = "OL-R + PL-R";

impl DiagnosticReport {
    pub fn correlation(&self, map: &str, reference: &str) -> Option<&CorrelationRow> {
        self.correlations
            .iter()
            .find(|c| c.map == map && c.reference == reference)
    }

    /// `reference,map,band,r` rows; band 0 holds the band mean.
    pub fn correlations_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("reference,map,band,r\n");
        for c in &self.correlations {
            for (b, &v) in c.bands.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", c.reference, c.map, b + 1, cell(v));
            }
            let _ = writeln!(out, "{},{},0,{}", c.reference, c.map, cell(c.mean));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>10} {:>10} {:>10} {:>10}",
            "map", "band", "mean", "std", "min", "max"
        );
        for s in &self.stats {
            for b in 0..s.mean.len() {
                let _ = writeln!(
                    out,
                    "{:<20} {:>5} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                    s.name,
                    b + 1,
                    s.mean[b],
                    s.std[b],
                    s.min[b],
                    s.max[b]
                );
            }
        }
        out.push('\n');
        let maps = [COARSE_RESIDUALS, FINE_RESIDUALS, OLR, OLR_PLR];
        let _ = write!(out, "{:<18}", "r (band mean)");
        for m in maps {
            let _ = write!(out, " {m:>16}");
        }
        out.push('\n');
        for reference in [OBJECT_RESIDUALS, ACTUAL_RESIDUALS] {
            let _ = write!(out, "{reference:<18}");
            for m in maps {
                let v = self.correlation(m, reference).and_then(|c| c.mean);
                let _ = write!(out, " {:>16}", fmt_value(v));
            }
            out.push('\n');
        }
        out
    }
}

fn map_stats(name: &str, map: &Raster) -> MapStats {
    let mut stats = MapStats {
        name: name.to_string(),
        mean: Vec::new(),
        std: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
    };
    for b in 0..map.bands() {
        let vals: Vec<f64> = map
            .band(b)
            .iter()
            .filter(|&&v| map.is_valid(v))
            .map(|&v| v as f64)
            .collect();
        let n = vals.len().max(1) as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        stats.mean.push(mean);
        stats.std.push(var.sqrt());
        stats
            .min
            .push(vals.iter().copied().fold(f64::INFINITY, f64::min));
        stats
            .max
            .push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    stats
}

fn correlate(
    map_name: &str,
    map: &Raster,
    ref_name: &str,
    reference: &Raster,
    s: usize,
) -> CorrelationRow {
    // Coarse maps are compared after nearest-neighbor replication to the fine grid.
    let factor = if map.width() == reference.width() {
        1
    } else {
        s
    };
    let (w, h) = (reference.width(), reference.height());
    let bands: Vec<Option<f64>> = (0..reference.bands())
        .map(|b| {
            let mut pairs = Vec::with_capacity(w * h);
            for r in 0..h {
                for c in 0..w {
                    let x = map.get(b, r / factor, c / factor);
                    let y = reference.get(b, r, c);
                    if map.is_valid(x) && reference.is_valid(y) {
                        pairs.push((x as f64, y as f64));
                    }
                }
            }
            if pairs.is_empty() {
                None
            } else {
                pearson(&pairs)
            }
        })
        .collect();
    let mean = bands
        .iter()
        .copied()
        .sum::<Option<f64>>()
        .map(|v| v / bands.len() as f64);
    CorrelationRow {
        reference: ref_name.to_string(),
        map: map_name.to_string(),
        bands,
        mean,
    }
}

fn difference(a: &Raster, b: &Raster) -> Raster {
    let mut any_invalid = false;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            if a.is_valid(x) && b.is_valid(y) {
                x - y
            } else {
                any_invalid = true;
                RESIDUAL_NODATA
            }
        })
        .collect();
    let desc = RasterDescriptor {
        nodata: any_invalid.then_some(RESIDUAL_NODATA),
        ..a.descriptor().clone()
    };
    Raster::from_parts_unchecked(desc, data)
}

pub fn residual_diagnostics(
    olu: &Raster,
    olrc: &Raster,
    obsum: &Raster,
    reference_fine: &Raster,
    coarse_tp: &Raster,
    objects: &ObjectMap,
    s: ScaleFactor,
) -> Result<(DiagnosticMaps, DiagnosticReport)> {
    olu.require_same_shape(olrc, "OL-U vs OL-RC")?;
    olu.require_same_shape(obsum, "OL-U vs OBSUM")?;
    olu.require_same_shape(reference_fine, "OL-U vs reference")?;
    if objects.width() != olu.width() || objects.height() != olu.height() {
        return Err(Error::DimensionMismatch(format!(
            "object map {}x{} vs prediction {}x{}",
            objects.width(),
            objects.height(),
            olu.width(),
            olu.height()
        )));
    }
    let res = compute_residuals(coarse_tp, olu, s)?;
    let actual = difference(reference_fine, olu);
    let olr = difference(olrc, olu);
    let olr_plr = difference(obsum, olu);

    let n = olu.pixels();
    let bands = olu.bands();
    let labels = objects.labels();
    let n_obj = objects.object_count();
    let mut object_data = vec![RESIDUAL_NODATA; n * bands];
    for b in 0..bands {
        let band = actual.band(b);
        let mut sum = vec![0.0f64; n_obj];
        let mut cnt = vec![0usize; n_obj];
        for (&v, &o) in band.iter().zip(labels) {
            if actual.is_valid(v) {
                sum[o as usize] += v as f64;
                cnt[o as usize] += 1;
            }
        }
        for (p, &o) in labels.iter().enumerate() {
            if cnt[o as usize] > 0 {
                object_data[b * n + p] = (sum[o as usize] / cnt[o as usize] as f64) as f32;
            }
        }
    }
    let any_missing = object_data.contains(&RESIDUAL_NODATA);
    let desc = RasterDescriptor {
        nodata: any_missing.then_some(RESIDUAL_NODATA),
        ..olu.descriptor().clone()
    };
    let object_residuals = Raster::from_parts_unchecked(desc, object_data);

    let or_minus_fr = {
        let d = difference(&object_residuals, &res.fine);
        let nodata = d.nodata();
        let data = d
            .data()
            .iter()
            .map(|&v| if nodata == Some(v) { v } else { v.abs() })
            .collect();
        Raster::from_parts_unchecked(d.descriptor().clone(), data)
    };
    let ori = compute_ori(&compute_ohi(objects, s), &compute_dc(s));

    let maps = DiagnosticMaps {
        coarse_residuals: res.coarse,
        fine_residuals: res.fine,
        actual_residuals: actual,
        object_residuals,
        or_minus_fr,
        ori,
        olr,
        olr_plr,
    };

    let stats = vec![
        map_stats(COARSE_RESIDUALS, &maps.coarse_residuals),
        map_stats(FINE_RESIDUALS, &maps.fine_residuals),
        map_stats(ACTUAL_RESIDUALS, &maps.actual_residuals),
        map_stats(OBJECT_RESIDUALS, &maps.object_residuals),
        map_stats("|OR - FR|", &maps.or_minus_fr),
        map_stats(OLR, &maps.olr),
        map_stats(OLR_PLR, &maps.olr_plr),
    ];
    let mut correlations = Vec::new();
    for (ref_name, reference) in [
        (OBJECT_RESIDUALS, &maps.object_residuals),
        (ACTUAL_RESIDUALS, &maps.actual_residuals),
    ] {
        for (name, map) in [
            (COARSE_RESIDUALS, &maps.coarse_residuals),
            (FINE_RESIDUALS, &maps.fine_residuals),
            (OLR, &maps.olr),
            (OLR_PLR, &maps.olr_plr),
        ] {
            correlations.push(correlate(name, map, ref_name, reference, s.get()));
        }
    }
    Ok((
        maps,
        DiagnosticReport {
            stats,
            correlations,
        },
    ))
}
