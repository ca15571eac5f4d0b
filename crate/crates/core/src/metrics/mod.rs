//! Accuracy indices: average difference (AD), root mean squared error
//! (RMSE), Pearson correlation (r) and structural similarity (SSIM).
//!
//! All indices are computed per band over pixels valid in both images.

pub mod ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
pub use ssim::ssim;

fn paired<'a>(
    pred: &'a Raster,
    reference: &'a Raster,
    band: usize,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.band(band)
        .iter()
        .zip(reference.band(band))
        .filter(|(&a, &b)| pred.is_valid(a) && reference.is_valid(b))
        .map(|(&a, &b)| (a as f64, b as f64))
}

fn per_band(
    pred: &Raster,
    reference: &Raster,
    what: &str,
    f: impl Fn(&mut dyn Iterator<Item = (f64, f64)>) -> Option<f64>,
) -> Result<Vec<f64>> {
    pred.require_same_shape(reference, what)?;
    (0..pred.bands())
        .map(|b| f(&mut paired(pred, reference, b)).ok_or(Error::NoValidPixels))
        .collect()
}

/// Mean of `pred - ref`; positive values indicate overestimation.
pub fn avg_difference(pred: &Raster, reference: &Raster) -> Result<Vec<f64>> {
    per_band(pred, reference, "average difference", |it| {
        let (mut sum, mut n) = (0.0, 0usize);
        for (a, b) in it {
            sum += a - b;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    })
}

pub fn rmse(pred: &Raster, reference: &Raster) -> Result<Vec<f64>> {
    per_band(pred, reference, "rmse", |it| {
        let (mut sum, mut n) = (0.0, 0usize);
        for (a, b) in it {
            sum += (a - b) * (a - b);
            n += 1;
        }
        (n > 0).then(|| (sum / n as f64).sqrt())
    })
}

/// Pearson correlation per band; `None` marks a band where either input has
/// zero variance.
pub fn corrcoef(a: &Raster, b: &Raster) -> Result<Vec<Option<f64>>> {
    a.require_same_shape(b, "correlation")?;
    (0..a.bands())
        .map(|band| {
            let pairs: Vec<(f64, f64)> = paired(a, b, band).collect();
            if pairs.is_empty() {
                return Err(Error::NoValidPixels);
            }
            Ok(pearson(&pairs))
        })
        .collect()
}

pub(crate) fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let (sa, sb) = pairs
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let (ma, mb) = (sa / n, sb / n);
    let (mut vab, mut vaa, mut vbb) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let (dx, dy) = (x - ma, y - mb);
        vab += dx * dy;
        vaa += dx * dx;
        vbb += dy * dy;
    }
    if vaa <= 0.0 || vbb <= 0.0 {
        return None;
    }
    Some((vab / (vaa.sqrt() * vbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub ad: f64,
    pub rmse: f64,
    /// `None` when the correlation is undefined.
    pub r: Option<f64>,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bands: Vec<BandMetrics>,
    /// Band means; `r` is undefined if any band's `r` is.
    pub mean: BandMetrics,
}

pub fn evaluate(pred: &Raster, reference: &Raster) -> Result<MetricReport> {
    let ad = avg_difference(pred, reference)?;
    let rm = rmse(pred, reference)?;
    let r = corrcoef(pred, reference)?;
    let ss = ssim(pred, reference)?;
    let bands: Vec<BandMetrics> = (0..pred.bands())
        .map(|b| BandMetrics {
            ad: ad[b],
            rmse: rm[b],
            r: r[b],
            ssim: ss[b],
        })
        .collect();
    let n = bands.len() as f64;
    let mean = BandMetrics {
        ad: ad.iter().sum::<f64>() / n,
        rmse: rm.iter().sum::<f64>() / n,
        r: r.iter().copied().sum::<Option<f64>>().map(|s| s / n),
        ssim: ss.iter().sum::<f64>() / n,
    };
    Ok(MetricReport { bands, mean })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "RMSE")]
    Rmse,
    #[serde(rename = "r")]
    R,
    #[serde(rename = "SSIM")]
    Ssim,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Ad, Metric::Rmse, Metric::R, Metric::Ssim];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ad => "AD",
            Metric::Rmse => "RMSE",
            Metric::R => "r",
            Metric::Ssim => "SSIM",
        }
    }

    pub fn of(self, m: &BandMetrics) -> Option<f64> {
        match self {
            Metric::Ad => Some(m.ad),
            Metric::Rmse => Some(m.rmse),
            Metric::R => m.r,
            Metric::Ssim => Some(m.ssim),
        }
    }

    /// Improvement from `previous` to `current`, positive when accuracy rose:
    /// decrease of |AD| and RMSE, increase of r and SSIM.
    pub fn gain(self, previous: f64, current: f64) -> f64 {
        match self {
            Metric::Ad => previous.abs() - current.abs(),
            Metric::Rmse => previous - current,
            Metric::R | Metric::Ssim => current - previous,
        }
    }
}

pub(crate) fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.5}"),
        None => "undefined".into(),
    }
}

/// One `(site, date, metric)` row with a value per column (method or stage).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub site: String,
    pub date: String,
    pub metric: Metric,
    pub values: Vec<Option<f64>>,
}

/// Site/date/metric table of band-mean accuracies, one column per method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl MetricTable {
    pub fn new(columns: Vec<String>) -> Self {
        MetricTable {
            columns,
            rows: Vec::new(),
        }
    }

    /// Appends four rows (AD, RMSE, r, SSIM) from one report per column.
    pub fn push(&mut self, site: &str, date: &str, reports: &[&MetricReport]) {
        assert_eq!(reports.len(), self.columns.len(), "one report per column");
        for metric in Metric::ALL {
            self.rows.push(TableRow {
                site: site.into(),
                date: date.into(),
                metric,
                values: reports.iter().map(|r| metric.of(&r.mean)).collect(),
            });
        }
    }

    /// Per-site mean over dates of RMSE, r and SSIM. AD is left out since
    /// opposite-signed dates cancel.
    pub fn mean_over_series(&self, site: &str) -> Vec<TableRow> {
        [Metric::Rmse, Metric::R, Metric::Ssim]
            .into_iter()
            .filter_map(|metric| {
                let rows: Vec<&TableRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.site == site && r.metric == metric)
                    .collect();
                if rows.is_empty() {
                    return None;
                }
                let values = (0..self.columns.len())
                    .map(|c| {
                        rows.iter()
                            .map(|r| r.values[c])
                            .sum::<Option<f64>>()
                            .map(|s| s / rows.len() as f64)
                    })
                    .collect();
                Some(TableRow {
                    site: site.into(),
                    date: "Mean".into(),
                    metric,
                    values,
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10} {:<12} {:<6}", "site", "date", "metric");
        for c in &self.columns {
            out.push_str(&format!(" {c:>12}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{:<10} {:<12} {:<6}",
                row.site,
                row.date,
                row.metric.name()
            ));
            for v in &row.values {
                out.push_str(&format!(" {:>12}", fmt_value(*v)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,date,metric");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{}", row.site, row.date, row.metric.name()));
            for v in &row.values {
                out.push(',');
                out.push_str(&fmt_value(*v));
            }
            out.push('\n');
        }
        out
    }
}

impl MetricReport {
    /// Per-band listing followed by the band mean.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<6} {:>12} {:>12} {:>12} {:>12}\n",
            "band", "AD", "RMSE", "r", "SSIM"
        );
        let line = |label: String, m: &BandMetrics| {
            format!(
                "{:<6} {:>12} {:>12} {:>12} {:>12}\n",
                label,
                fmt_value(Some(m.ad)),
                fmt_value(Some(m.rmse)),
                fmt_value(m.r),
                fmt_value(Some(m.ssim))
            )
        };
        for (b, m) in self.bands.iter().enumerate() {
            out.push_str(&line(format!("{}", b + 1), m));
        }
        out.push_str(&line("mean".into(), &self.mean));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,AD,RMSE,r,SSIM\n");
        let line = |label: String, m: &BandMetrics| {
            format!(
                "{label},{},{},{},{}\n",
                fmt_value(Some(m.ad)),
                fmt_value(Some(m.rmse)),
                fmt_value(m.r),
                fmt_value(Some(m.ssim))
            )
        };
        for (b, m) in self.bands.iter().enumerate() {
            out.push_str(&line(format!("{}", b + 1), m));
        }
        out.push_str(&line("mean".into(), &self.mean));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterDescriptor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, b: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, b, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
    }

    fn shifted(r: &Raster, d: f32) -> Raster {
        Raster::like(r, r.bands(), r.data().iter().map(|v| v + d).collect()).unwrap()
    }

    #[test]
    fn ad_signs() {
        let r = random(12, 12, 2, 1);
        assert_eq!(avg_difference(&r, &r).unwrap(), vec![0.0, 0.0]);
        let up = avg_difference(&shifted(&r, 0.1), &r).unwrap();
        assert!(up.iter().all(|v| (v - 0.1).abs() < 1e-6));
        let down = avg_difference(&shifted(&r, -0.05), &r).unwrap();
        assert!(down.iter().all(|v| (v + 0.05).abs() < 1e-6));
    }

    #[test]
    fn rmse_cases() {
        let r = random(12, 12, 1, 2);
        assert_eq!(rmse(&r, &r).unwrap(), vec![0.0]);
        assert!((rmse(&shifted(&r, 0.1), &r).unwrap()[0] - 0.1).abs() < 1e-6);
        let base = Raster::filled(4, 4, 1, 0.5).unwrap();
        let alt =
            Raster::from_fn(4, 4, 1, |_, r, c| if (r + c) % 2 == 0 { 0.6 } else { 0.4 }).unwrap();
        assert!((rmse(&alt, &base).unwrap()[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn correlation_cases() {
        let a = random(10, 10, 1, 3);
        let b = Raster::like(&a, 1, a.data().iter().map(|v| 2.0 * v + 0.1).collect()).unwrap();
        assert!((corrcoef(&a, &b).unwrap()[0].unwrap() - 1.0).abs() < 1e-12);
        let neg = Raster::like(&a, 1, a.data().iter().map(|v| -v).collect()).unwrap();
        assert!((corrcoef(&a, &neg).unwrap()[0].unwrap() + 1.0).abs() < 1e-12);
        let flat = Raster::filled(10, 10, 1, 0.2).unwrap();
        assert_eq!(corrcoef(&flat, &a).unwrap(), vec![None]);
    }

    #[test]
    fn no_valid_pixels() {
        let d = RasterDescriptor::new(2, 2, 1).with_nodata(-1.0);
        let a = Raster::new(d, vec![-1.0; 4]).unwrap();
        assert!(matches!(rmse(&a, &a), Err(Error::NoValidPixels)));
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = random(24, 20, 2, 4);
        assert_eq!(ssim(&a, &a).unwrap(), vec![1.0, 1.0]);
        let inv = Raster::like(&a, 2, a.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&inv, &a).unwrap().iter().all(|&v| v < 1.0));
        let small = random(10, 30, 1, 5);
        assert!(matches!(
            ssim(&small, &small),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    /// Direct per-window evaluation with the 2-D Gaussian weights.
    fn brute_ssim(x: &Raster, y: &Raster) -> f64 {
        let t = ssim::gaussian_taps();
        let (w, h) = (x.width(), x.height());
        let mut total = 0.0;
        let mut n = 0;
        for r in 0..=h - ssim::WINDOW {
            for c in 0..=w - ssim::WINDOW {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..ssim::WINDOW {
                    for j in 0..ssim::WINDOW {
                        let wt = t[i] * t[j];
                        mx += wt * x.get(0, r + i, c + j) as f64;
                        my += wt * y.get(0, r + i, c + j) as f64;
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..ssim::WINDOW {
                    for j in 0..ssim::WINDOW {
                        let wt = t[i] * t[j];
                        let dx = x.get(0, r + i, c + j) as f64 - mx;
                        let dy = y.get(0, r + i, c + j) as f64 - my;
                        vx += wt * dx * dx;
                        vy += wt * dy * dy;
                        cxy += wt * dx * dy;
                    }
                }
                let c1 = ssim::K1 * ssim::K1;
                let c2 = ssim::K2 * ssim::K2;
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn ssim_matches_brute_force() {
        let a = random(32, 32, 1, 6);
        let b = random(32, 32, 1, 7);
        let fast = ssim(&a, &b).unwrap()[0];
        assert!((fast - brute_ssim(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn report_round_trips_json() {
        let a = random(16, 16, 2, 8);
        let b = shifted(&a, 0.02);
        let rep = evaluate(&b, &a).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), rep);
        let same = evaluate(&a, &a).unwrap();
        assert_eq!(same.mean.rmse, 0.0);
        assert_eq!(same.mean.ssim, 1.0);
        assert!((same.mean.r.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn series_mean_excludes_ad() {
        let a = random(16, 16, 1, 9);
        let r1 = evaluate(&shifted(&a, 0.02), &a).unwrap();
        let r2 = evaluate(&shifted(&a, -0.04), &a).unwrap();
        let mut t = MetricTable::new(vec!["OBSUM".into()]);
        t.push("S", "d1", &[&r1]);
        t.push("S", "d2", &[&r2]);
        let mean = t.mean_over_series("S");
        assert_eq!(mean.len(), 3);
        assert!(mean.iter().all(|r| r.metric != Metric::Ad));
        let rm = mean.iter().find(|r| r.metric == Metric::Rmse).unwrap();
        assert!((rm.values[0].unwrap() - 0.03).abs() < 1e-6);
        assert!(t.to_csv().lines().count() == 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn symmetric_metrics(
            x in proptest::collection::vec(0.0f32..=1.0, 144),
            y in proptest::collection::vec(0.0f32..=1.0, 144),
        ) {
            let d = RasterDescriptor::new(12, 12, 1);
            let a = Raster::new(d.clone(), x).unwrap();
            let b = Raster::new(d, y).unwrap();
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
            let ab = avg_difference(&a, &b).unwrap()[0];
            let ba = avg_difference(&b, &a).unwrap()[0];
            prop_assert!((ab + ba).abs() < 1e-12);
            prop_assert_eq!(ssim(&a, &a).unwrap()[0], 1.0);
        }

        #[test]
        fn nodata_insertion_invariance(
            x in proptest::collection::vec(0.0f32..=1.0, 36),
            y in proptest::collection::vec(0.0f32..=1.0, 36),
            holes in proptest::collection::vec(any::<bool>(), 36),
        ) {
            prop_assume!(holes.iter().any(|h| !h));
            let d = RasterDescriptor::new(6, 6, 1).with_nodata(-9999.0);
            let mask = |v: &[f32]| v.iter().zip(&holes).map(|(&v, &h)| if h { -9999.0 } else { v }).collect::<Vec<_>>();
            let a = Raster::new(d.clone(), mask(&x)).unwrap();
            let b = Raster::new(d, mask(&y)).unwrap();
            let keep: Vec<usize> = (0..36).filter(|&i| !holes[i]).collect();
            let dense = |v: &[f32]| Raster::new(RasterDescriptor::new(keep.len(), 1, 1), keep.iter().map(|&i| v[i]).collect()).unwrap();
            let (da, db) = (dense(&x), dense(&y));
            prop_assert!((rmse(&a, &b).unwrap()[0] - rmse(&da, &db).unwrap()[0]).abs() < 1e-12);
            prop_assert!((avg_difference(&a, &b).unwrap()[0] - avg_difference(&da, &db).unwrap()[0]).abs() < 1e-12);
        }
    }
}
