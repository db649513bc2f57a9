//! On-disk formats.
//!
//! A cube or abundance map is a pair of files sharing a stem: `<stem>.json`
//! holds the header and `<stem>.raw` holds little-endian `f32` values in
//! band-interleaved-by-pixel order. Endmembers and other small matrices are
//! headerless CSV, one row per line.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::endmembers::EndmemberMatrix;
use crate::error::{Error, Result};
use crate::image::{AbundanceMap, Image3, Kind, SpectralCube};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub height: usize,
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    pub dtype: String,
    pub layout: String,
    pub value_range: [f64; 2],
}

impl RasterHeader {
    fn depth(&self) -> Option<usize> {
        self.bands.or(self.channels)
    }
}

/// Header and payload paths for a raster stem (any extension on `path` is replaced).
pub fn raster_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (header.into(), raw.into())
}

fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)) as u64
}

pub fn read_header(path: impl AsRef<Path>) -> Result<RasterHeader> {
    let (header_path, _) = raster_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: RasterHeader = serde_json::from_str(&text).map_err(|e| {
        Error::format(
            &header_path,
            byte_offset(&text, e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let bad = |msg: String| Err(Error::format(&header_path, 0, msg));
    if header.dtype != "f32" {
        return bad(format!("unsupported dtype {:?}", header.dtype));
    }
    if header.layout != "bip" {
        return bad(format!("unsupported layout {:?}", header.layout));
    }
    if header.bands.is_some() && header.channels.is_some() {
        return bad("header has both `bands` and `channels`".into());
    }
    let depth = match header.depth() {
        Some(d) => d,
        None => return bad("header needs `bands` or `channels`".into()),
    };
    if header.height == 0 || header.width == 0 || depth == 0 {
        return bad("dimensions must be positive".into());
    }
    let [lo, hi] = header.value_range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return bad(format!("invalid value_range [{lo}, {hi}]"));
    }
    Ok(header)
}

fn read_payload(raw_path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(raw_path).map_err(|e| Error::io(raw_path, e))?;
    let want = expected * 4;
    if bytes.len() != want {
        return Err(Error::format(
            raw_path,
            bytes.len().min(want) as u64,
            format!(
                "payload holds {} bytes ({} values), header requires {want} bytes ({expected} values)",
                bytes.len(),
                bytes.len() as f64 / 4.0
            ),
        ));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, b)| {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::format(raw_path, 4 * i as u64, format!("non-finite value {v}")))
            }
        })
        .collect()
}

fn load_raster<K: Kind>(path: &Path) -> Result<(Image3<K>, RasterHeader)> {
    let header = read_header(path)?;
    let (_, raw_path) = raster_paths(path);
    let depth = header.depth().unwrap_or_default();
    let data = read_payload(&raw_path, header.height * header.width * depth)?;
    let img = Image3::new(header.height, header.width, depth, data)
        .map_err(|e| Error::format(&raw_path, 0, e.to_string()))?;
    Ok((img, header))
}

fn save_raster<K: Kind>(img: &Image3<K>, path: &Path) -> Result<()> {
    let (header_path, raw_path) = raster_paths(path);
    let mut header = RasterHeader {
        height: img.height(),
        width: img.width(),
        bands: None,
        channels: None,
        dtype: "f32".into(),
        layout: "bip".into(),
        value_range: [0.0, 1.0],
    };
    if K::AXIS == "bands" {
        header.bands = Some(img.channels());
    } else {
        header.channels = Some(img.channels());
    }
    let mut bytes = Vec::with_capacity(img.data().len() * 4);
    for (i, &v) in img.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidInput(format!(
                "value {v} at index {i} does not fit in f32"
            )));
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    if let Some(dir) = header_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let json = serde_json::to_string(&header).expect("header serializes");
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}

/// Loads a cube, rescaling the header's `value_range` onto `[0, 1]`.
pub fn load_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let (cube, header) = load_raster::<crate::image::Spectral>(path.as_ref())?;
    let [lo, hi] = header.value_range;
    if lo == 0.0 && hi == 1.0 {
        Ok(cube)
    } else {
        cube.map(|v| (v - lo) / (hi - lo))
    }
}

/// Writes a cube with `value_range` `[0, 1]`.
pub fn save_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    save_raster(cube, path.as_ref())
}

/// Loads an abundance map. Abundances are stored unscaled; `value_range` is not applied.
pub fn load_abundance(path: impl AsRef<Path>) -> Result<AbundanceMap> {
    load_raster(path.as_ref()).map(|(img, _)| img)
}

pub fn save_abundance(map: &AbundanceMap, path: impl AsRef<Path>) -> Result<()> {
    save_raster(map, path.as_ref())
}

/// Parses headerless CSV of decimal values into rows.
pub fn read_csv_rows(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let mut row = Vec::new();
            let mut field_offset = offset;
            for field in body.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::format(path, field_offset, format!("not a number: {:?}", field.trim()))
                })?;
                if !v.is_finite() {
                    return Err(Error::format(path, field_offset, "non-finite value"));
                }
                row.push(v);
                field_offset += field.len() as u64 + 1;
            }
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::format(
                        path,
                        offset,
                        format!("row has {} values, expected {first}", row.len()),
                    ));
                }
            }
            rows.push(row);
        }
        offset += line.len() as u64;
    }
    if rows.is_empty() {
        return Err(Error::format(path, 0, "no rows"));
    }
    Ok(rows)
}

pub fn write_csv_rows(rows: impl IntoIterator<Item = Vec<f64>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_endmembers(path: impl AsRef<Path>) -> Result<EndmemberMatrix> {
    let path = path.as_ref();
    let rows = read_csv_rows(path)?;
    EndmemberMatrix::from_rows(&rows).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::format(path, 0, msg),
        other => other,
    })
}

/// Writes endmembers as CSV. Values are printed in shortest round-trip form, so reloading is exact.
pub fn save_endmembers(endmembers: &EndmemberMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_csv_rows(endmembers.rows(), path)
}

pub fn save_matrix(matrix: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_csv_rows(
        (0..matrix.nrows()).map(|r| matrix.row(r).iter().copied().collect()),
        path,
    )
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let rows = read_csv_rows(path)?;
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]))
}
