use anyhow::{bail, Result};
use obsum::Raster;

/// 2nd and 98th percentiles of the valid values of one band.
fn stretch_bounds(raster: &Raster, band: usize) -> Option<(f32, f32)> {
    let mut vals: Vec<f32> = raster
        .band(band)
        .iter()
        .copied()
        .filter(|&v| raster.is_valid(v))
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_unstable_by(f32::total_cmp);
    let at = |q: f64| vals[((vals.len() - 1) as f64 * q).round() as usize];
    Some((at(0.02), at(0.98)))
}

/// Interleaved RGB bytes with a 2% linear stretch per channel. Nodata pixels
/// are black; a band with no spread renders as mid gray.
pub fn composite(raster: &Raster, bands: &[usize]) -> Result<Vec<u8>> {
    if bands.len() != 3 {
        bail!("expected three bands, got {}", bands.len());
    }
    for &b in bands {
        if b == 0 || b > raster.bands() {
            bail!(
                "band {b} out of range: the raster has {} band(s), numbered from 1",
                raster.bands()
            );
        }
    }
    let n = raster.pixels();
    let mut rgb = vec![0u8; n * 3];
    for (ch, &b) in bands.iter().enumerate() {
        let band = raster.band(b - 1);
        let bounds = stretch_bounds(raster, b - 1);
        for (p, &v) in band.iter().enumerate() {
            rgb[p * 3 + ch] = match bounds {
                _ if !raster.is_valid(v) => 0,
                Some((lo, hi)) if hi > lo => {
                    ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
                }
                _ => 128,
            };
        }
    }
    Ok(rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_gray() {
        let r = Raster::filled(4, 3, 3, 0.3).unwrap();
        assert!(composite(&r, &[1, 2, 3]).unwrap().iter().all(|&v| v == 128));
    }

    #[test]
    fn ramp_is_stretched() {
        let r = Raster::from_fn(101, 1, 1, |_, _, c| c as f32 / 100.0).unwrap();
        let rgb = composite(&r, &[1, 1, 1]).unwrap();
        assert_eq!(rgb[0], 0);
        assert_eq!(rgb[2 * 3], 0);
        assert_eq!(rgb[98 * 3], 255);
        assert_eq!(rgb[100 * 3], 255);
        assert_eq!(rgb[26 * 3], 64);
    }

    #[test]
    fn band_out_of_range() {
        let r = Raster::filled(2, 2, 4, 0.3).unwrap();
        assert!(composite(&r, &[9, 3, 2]).is_err());
        assert!(composite(&r, &[0, 3, 2]).is_err());
        assert!(composite(&r, &[4, 3, 2]).is_ok());
    }
}
