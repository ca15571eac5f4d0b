//! BRF: a `key = value` text header plus a sibling payload of band-sequential,
//! row-major, little-endian `f32` values.
//!
//! ```text
//! format = BRF
//! width = 4
//! height = 4
//! bands = 1
//! dtype = float32
//! byte_order = little
//! interleave = bsq
//! nodata = -9999
//! geotransform = 500000 10 0 4100000 0 -10
//! payload = scene.bin
//! ```
//!
//! `nodata`, `geotransform` and `payload` are optional. Without `payload` the
//! binary file is the header path with its extension replaced by `bin`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Raster, RasterDescriptor};
use crate::error::{Error, Result};

/// Default payload location for a header path.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &text)?;
    let payload = match &header.payload {
        Some(name) => path.parent().unwrap_or(Path::new("")).join(name),
        None => payload_path(path),
    };
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::PayloadLengthMismatch {
            expected: header.desc.len(),
            found: bytes.len() / 4,
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::new(header.desc, data)
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = payload_path(path);
    if payload == path {
        return Err(Error::InvalidParameter(format!(
            "header path {} collides with its payload path",
            path.display()
        )));
    }
    let payload_name = payload
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidParameter(format!("bad output path {}", path.display())))?;

    let mut bytes = Vec::with_capacity(raster.data().len() * 4);
    for v in raster.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let header = render_header(raster.descriptor(), &payload_name);

    write_atomic(&payload, &bytes)?;
    if let Err(e) = write_atomic(path, header.as_bytes()) {
        let _ = fs::remove_file(&payload);
        return Err(e);
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn render_header(desc: &RasterDescriptor, payload: &str) -> String {
    let mut out = String::from("format = BRF\n");
    out.push_str(&format!("width = {}\n", desc.width));
    out.push_str(&format!("height = {}\n", desc.height));
    out.push_str(&format!("bands = {}\n", desc.bands));
    out.push_str("dtype = float32\nbyte_order = little\ninterleave = bsq\n");
    if let Some(nd) = desc.nodata {
        // Display for f32 is the shortest string that parses back to the same bits.
        out.push_str(&format!("nodata = {nd}\n"));
    }
    if let Some(g) = desc.geo {
        let terms: Vec<String> = g.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("geotransform = {}\n", terms.join(" ")));
    }
    out.push_str(&format!("payload = {payload}\n"));
    out
}

struct Header {
    desc: RasterDescriptor,
    payload: Option<String>,
}

fn parse_header(path: &Path, text: &str) -> Result<Header> {
    let bad = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut width = None;
    let mut height = None;
    let mut bands = None;
    let mut dtype = None;
    let mut nodata = None;
    let mut geo = None;
    let mut payload = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let count = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(format!("{key}: expected a positive integer, got {v:?}")))
        };
        match key {
            "format" if value == "BRF" => {}
            "width" => width = Some(count(value)?),
            "height" => height = Some(count(value)?),
            "bands" => bands = Some(count(value)?),
            "dtype" => dtype = Some(value.to_string()),
            "byte_order" if value == "little" => {}
            "interleave" if value == "bsq" => {}
            "nodata" => {
                nodata = Some(
                    value
                        .parse::<f32>()
                        .map_err(|_| bad(format!("nodata: cannot parse {value:?}")))?,
                )
            }
            "geotransform" => {
                let terms: Vec<f64> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("geotransform: cannot parse {value:?}")))?;
                let terms: [f64; 6] = terms
                    .try_into()
                    .map_err(|_| bad("geotransform: expected 6 terms".into()))?;
                geo = Some(terms);
            }
            "payload" => payload = Some(value.to_string()),
            _ => return Err(bad(format!("unsupported entry {key} = {value}"))),
        }
    }

    match dtype.as_deref() {
        Some("float32") => {}
        Some(other) => return Err(bad(format!("unsupported dtype {other}"))),
        None => return Err(bad("missing dtype".into())),
    }
    let desc = RasterDescriptor {
        width: width.ok_or_else(|| bad("missing width".into()))?,
        height: height.ok_or_else(|| bad("missing height".into()))?,
        bands: bands.ok_or_else(|| bad("missing bands".into()))?,
        nodata,
        geo,
    };
    desc.validate().map_err(|e| bad(e.to_string()))?;
    Ok(Header { desc, payload })
}
