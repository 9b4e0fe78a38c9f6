//! File formats for images, masks and data vectors.
//!
//! A body file holds 64-bit little-endian floats: interleaved `(re, im)`
//! pairs, row-major, image after image for images and masks, and plain
//! reals for data vectors. A JSON header sits next to it at `<path>.json`:
//! `{"height", "width", "count"}` (with optional `"kind"` and `"seed"` for
//! masks) or `{"L", "M2", "M1"}` for data.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::phase_retrieval::{ComplexImage, MaskKind, MaskSet};

/// Largest number of samples accepted in a single file.
pub const MAX_SAMPLES: usize = 1 << 28;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageHeader {
    pub height: usize,
    pub width: usize,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ImageHeader {
    /// Number of complex samples in the body.
    pub fn samples(&self) -> Result<usize> {
        if self.height == 0 || self.width == 0 || self.count == 0 {
            return Err(Error::Format("image header with a zero dimension".into()));
        }
        self.height
            .checked_mul(self.width)
            .and_then(|n| n.checked_mul(self.count))
            .filter(|&n| n <= MAX_SAMPLES)
            .ok_or_else(|| Error::Format(format!("image header exceeds {MAX_SAMPLES} samples")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataHeader {
    #[serde(rename = "L")]
    pub count: usize,
    #[serde(rename = "M2")]
    pub m2: usize,
    #[serde(rename = "M1")]
    pub m1: usize,
}

impl DataHeader {
    pub fn samples(&self) -> Result<usize> {
        if self.count == 0 || self.m2 == 0 || self.m1 == 0 {
            return Err(Error::Format("data header with a zero dimension".into()));
        }
        self.count
            .checked_mul(self.m2)
            .and_then(|n| n.checked_mul(self.m1))
            .filter(|&n| n <= MAX_SAMPLES)
            .ok_or_else(|| Error::Format(format!("data header exceeds {MAX_SAMPLES} samples")))
    }
}

pub fn parse_image_header(text: &str) -> Result<ImageHeader> {
    let h: ImageHeader = serde_json::from_str(text).map_err(|e| Error::Format(format!("image header: {e}")))?;
    h.samples()?;
    Ok(h)
}

pub fn parse_data_header(text: &str) -> Result<DataHeader> {
    let h: DataHeader = serde_json::from_str(text).map_err(|e| Error::Format(format!("data header: {e}")))?;
    h.samples()?;
    Ok(h)
}

fn floats(bytes: &[u8], want: usize) -> Result<Vec<f64>> {
    if bytes.len() != want * 8 {
        return Err(Error::Format(format!("body has {} bytes, expected {}", bytes.len(), want * 8)));
    }
    let out: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    if let Some(x) = out.iter().find(|x| !x.is_finite()) {
        return Err(Error::Format(format!("body contains {x}")));
    }
    Ok(out)
}

pub fn encode_images(images: &[ComplexImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(images.iter().map(|i| i.data().len() * 16).sum());
    for z in images.iter().flat_map(|i| i.data()) {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_images(header: &ImageHeader, bytes: &[u8]) -> Result<Vec<ComplexImage>> {
    let n = header.samples()?;
    let v = floats(bytes, 2 * n)?;
    let per = header.height * header.width;
    v.chunks_exact(2 * per)
        .map(|c| ComplexImage::new(header.height, header.width, c.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()))
        .collect()
}

pub fn encode_data(g: &[f64]) -> Vec<u8> {
    g.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn decode_data(header: &DataHeader, bytes: &[u8]) -> Result<Vec<f64>> {
    floats(bytes, header.samples()?)
}

/// Location of the JSON header belonging to a body file.
pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_pair(path: &Path, header: &impl Serialize, body: &[u8]) -> Result<()> {
    let text = serde_json::to_string_pretty(header).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, body)?;
    fs::write(header_path(path), text + "\n")?;
    Ok(())
}

fn read_pair(path: &Path) -> Result<(String, Vec<u8>)> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::Format(format!("{}: {e}", hp.display())))?;
    Ok((text, fs::read(path)?))
}

pub fn write_images(path: &Path, images: &[ComplexImage]) -> Result<()> {
    let Some(first) = images.first() else {
        return Err(Error::InvalidParameter("no images to write".into()));
    };
    if images.iter().any(|i| i.shape() != first.shape()) {
        return Err(Error::Dimension("images differ in shape".into()));
    }
    let header = ImageHeader { height: first.height(), width: first.width(), count: images.len(), kind: None, seed: None };
    write_pair(path, &header, &encode_images(images))
}

pub fn read_images(path: &Path) -> Result<(ImageHeader, Vec<ComplexImage>)> {
    let (text, body) = read_pair(path)?;
    let header = parse_image_header(&text)?;
    let images = decode_images(&header, &body)?;
    Ok((header, images))
}

/// Reads a file holding exactly one image.
pub fn read_image(path: &Path) -> Result<ComplexImage> {
    let (h, mut images) = read_images(path)?;
    if h.count != 1 {
        return Err(Error::Format(format!("{} holds {} images, expected one", path.display(), h.count)));
    }
    Ok(images.remove(0))
}

pub fn write_masks(path: &Path, masks: &MaskSet) -> Result<()> {
    let (height, width) = masks.shape();
    let header = ImageHeader { height, width, count: masks.count(), kind: Some(masks.kind), seed: masks.seed };
    write_pair(path, &header, &encode_images(masks.masks()))
}

pub fn read_masks(path: &Path) -> Result<MaskSet> {
    let (h, images) = read_images(path)?;
    MaskSet::new(images, h.kind.unwrap_or(MaskKind::Custom), h.seed)
}

pub fn write_data(path: &Path, header: &DataHeader, g: &[f64]) -> Result<()> {
    if header.samples()? != g.len() {
        return Err(Error::Dimension(format!("data has {} values, header describes {}", g.len(), header.samples()?)));
    }
    write_pair(path, header, &encode_data(g))
}

pub fn read_data(path: &Path) -> Result<(DataHeader, Vec<f64>)> {
    let (text, body) = read_pair(path)?;
    let header = parse_data_header(&text)?;
    let g = decode_data(&header, &body)?;
    Ok((header, g))
}
