//! Band-sequential raster model, BRF file I/O and the two resampling kernels
//! shared by every fusion stage.

mod io;
mod resample;

pub use io::{payload_path, read_raster, write_raster};
pub use resample::{bicubic_downscale, block_mean_upscale, catmull_rom_weights};

use crate::error::{Error, Result};

/// Shape and georeferencing of a raster.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterDescriptor {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Sentinel marking missing values. Must lie outside `[0, 1]`; `NaN` is allowed.
    pub nodata: Option<f32>,
    /// GDAL-style affine transform in map units.
    pub geo: Option<[f64; 6]>,
}

impl RasterDescriptor {
    pub fn new(width: usize, height: usize, bands: usize) -> Self {
        RasterDescriptor {
            width,
            height,
            bands,
            nodata: None,
            geo: None,
        }
    }

    pub fn with_nodata(mut self, nodata: f32) -> Self {
        self.nodata = Some(nodata);
        self
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.pixels() * self.bands
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.width, self.height, self.bands
            )));
        }
        if let Some(nd) = self.nodata {
            if (0.0..=1.0).contains(&nd) {
                return Err(Error::InvalidRaster(format!(
                    "nodata sentinel {nd} lies inside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Whether `v` is the nodata sentinel (bit-agnostic for `NaN` sentinels).
    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => false,
        }
    }

    /// Descriptor of the raster produced by resampling with factor `s`: geo
    /// pixel sizes are rescaled, nodata is kept.
    pub(crate) fn rescaled(&self, width: usize, height: usize, factor: f64) -> Self {
        RasterDescriptor {
            width,
            height,
            bands: self.bands,
            nodata: self.nodata,
            geo: self.geo.map(|g| {
                [
                    g[0],
                    g[1] * factor,
                    g[2] * factor,
                    g[3],
                    g[4] * factor,
                    g[5] * factor,
                ]
            }),
        }
    }
}

/// Dense `height x width x bands` grid of reflectance (or residual) values,
/// stored band-sequential and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    desc: RasterDescriptor,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(desc: RasterDescriptor, data: Vec<f32>) -> Result<Self> {
        desc.validate()?;
        if data.len() != desc.len() {
            return Err(Error::PayloadLengthMismatch {
                expected: desc.len(),
                found: data.len(),
            });
        }
        if let Some(index) = data
            .iter()
            .position(|&v| !v.is_finite() && !desc.is_nodata(v))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Raster { desc, data })
    }

    pub fn filled(width: usize, height: usize, bands: usize, value: f32) -> Result<Self> {
        let desc = RasterDescriptor::new(width, height, bands);
        Raster::new(desc, vec![value; width * height * bands])
    }

    /// Builds a raster from `f(band, row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * bands);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    data.push(f(b, r, c));
                }
            }
        }
        Raster::new(RasterDescriptor::new(width, height, bands), data)
    }

    /// Same shape and georeferencing as `like`, new payload.
    pub fn like(like: &Raster, bands: usize, data: Vec<f32>) -> Result<Self> {
        let mut desc = like.desc.clone();
        desc.bands = bands;
        Raster::new(desc, data)
    }

    pub(crate) fn from_parts_unchecked(desc: RasterDescriptor, data: Vec<f32>) -> Self {
        debug_assert_eq!(desc.len(), data.len());
        Raster { desc, data }
    }

    pub fn descriptor(&self) -> &RasterDescriptor {
        &self.desc
    }

    pub fn width(&self) -> usize {
        self.desc.width
    }

    pub fn height(&self) -> usize {
        self.desc.height
    }

    pub fn bands(&self) -> usize {
        self.desc.bands
    }

    pub fn pixels(&self) -> usize {
        self.desc.pixels()
    }

    pub fn nodata(&self) -> Option<f32> {
        self.desc.nodata
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.pixels();
        &mut self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.desc.height + row) * self.desc.width + col]
    }

    #[inline]
    pub fn set(&mut self, band: usize, row: usize, col: usize, value: f32) {
        let idx = (band * self.desc.height + row) * self.desc.width + col;
        self.data[idx] = value;
    }

    #[inline]
    pub fn is_valid(&self, v: f32) -> bool {
        !self.desc.is_nodata(v)
    }

    pub fn has_nodata(&self) -> bool {
        self.desc.nodata.is_some() && self.data.iter().any(|&v| self.desc.is_nodata(v))
    }

    /// Pixel is valid when it is valid in every band.
    pub fn pixel_valid(&self, pixel: usize) -> bool {
        let n = self.pixels();
        (0..self.desc.bands).all(|b| self.is_valid(self.data[b * n + pixel]))
    }

    /// Checks the reflectance payload invariant: valid values in `[0, 1]`.
    pub fn check_reflectance(&self) -> Result<()> {
        self.check_range(0.0, 1.0, "reflectance")
    }

    pub(crate) fn check_range(&self, lo: f32, hi: f32, what: &str) -> Result<()> {
        match self
            .data
            .iter()
            .find(|&&v| self.is_valid(v) && !(lo..=hi).contains(&v))
        {
            Some(v) => Err(Error::InvalidRaster(format!(
                "{what} value {v} outside [{lo}, {hi}]"
            ))),
            None => Ok(()),
        }
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width() == other.width()
            && self.height() == other.height()
            && self.bands() == other.bands()
    }

    pub(crate) fn require_same_shape(&self, other: &Raster, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width(),
                self.height(),
                self.bands(),
                other.width(),
                other.height(),
                other.bands()
            )))
        }
    }
}

/// Integer ratio of coarse pixel edge to fine pixel edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ScaleFactor(usize);

impl ScaleFactor {
    pub fn new(s: usize) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be >= 2, got {s}"
            )));
        }
        Ok(ScaleFactor(s))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// `m = s^2`, fine pixels per coarse pixel.
    pub fn fine_per_coarse(self) -> usize {
        self.0 * self.0
    }

    /// Checks that `fine` is exactly `s` times `coarse` on both axes.
    pub fn check_pair(self, fine: (usize, usize), coarse: (usize, usize)) -> Result<()> {
        let (fw, fh) = fine;
        let (cw, ch) = coarse;
        if fw != cw * self.0 || fh != ch * self.0 {
            return Err(Error::DimensionMismatch(format!(
                "fine {fw}x{fh} is not {s} x coarse {cw}x{ch}",
                s = self.0
            )));
        }
        Ok(())
    }

    pub(crate) fn coarse_dims(self, width: usize, height: usize) -> Result<(usize, usize)> {
        if !width.is_multiple_of(self.0) || !height.is_multiple_of(self.0) {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} is not divisible by scale factor {}",
                self.0
            )));
        }
        Ok((width / self.0, height / self.0))
    }
}

impl TryFrom<usize> for ScaleFactor {
    type Error = Error;

    fn try_from(s: usize) -> Result<Self> {
        ScaleFactor::new(s)
    }
}

impl From<ScaleFactor> for usize {
    fn from(s: ScaleFactor) -> usize {
        s.0
    }
}
