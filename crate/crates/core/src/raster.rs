//! Rasters, bi-temporal pairs and change masks.
//!
//! Everything here is immutable once constructed. Analysis code reads samples
//! through the accessors and builds new values instead of mutating in place.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Shape};

/// Overlay color for pixels where ground truth and prediction both report change.
pub const COLOR_AGREEMENT: [u8; 3] = [255, 255, 0];
/// Overlay color for predicted change absent from ground truth.
pub const COLOR_FALSE_POSITIVE: [u8; 3] = [255, 0, 0];
/// Overlay color for ground-truth change the prediction missed.
pub const COLOR_FALSE_NEGATIVE: [u8; 3] = [0, 200, 0];
/// Brightness factor applied to the base image where neither mask reports change.
pub const BACKGROUND_DIM: f64 = 0.5;

/// An 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A raster filled with one pixel value.
    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Decodes PNG or JPEG bytes. Gray images keep one channel, everything
    /// else is converted to RGB.
    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
        Ok(Self::from_dynamic(img))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::decode(&bytes).map_err(|message| Error::Decode {
            path: path.to_path_buf(),
            message,
        })
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Self {
                    width: w as usize,
                    height: h as usize,
                    channels: 1,
                    data: g.into_raw(),
                }
            }
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                Self {
                    width: w as usize,
                    height: h as usize,
                    channels: 1,
                    data: g.into_raw(),
                }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self {
                    width: w as usize,
                    height: h as usize,
                    channels: 3,
                    data: rgb.into_raw(),
                }
            }
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        let (w, h) = (self.width as u32, self.height as u32);
        let res = if self.channels == 1 {
            GrayImage::from_raw(w, h, self.data.clone())
                .expect("length checked at construction")
                .write_to(&mut out, ImageFormat::Png)
        } else {
            RgbImage::from_raw(w, h, self.data.clone())
                .expect("length checked at construction")
                .write_to(&mut out, ImageFormat::Png)
        };
        res.map_err(|e| Error::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Expands a gray raster to RGB; RGB rasters are returned as-is.
    pub fn to_rgb(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// Two co-registered rasters of the same scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub id: String,
    epoch_a: Raster,
    epoch_b: Raster,
    pub resolution_m_per_px: Option<f64>,
    pub interval_note: Option<String>,
}

impl ImagePair {
    pub fn new(id: impl Into<String>, epoch_a: Raster, epoch_b: Raster) -> Result<Self> {
        if epoch_a.shape() != epoch_b.shape() {
            return Err(Error::DimensionMismatch {
                left: epoch_a.shape(),
                right: epoch_b.shape(),
            });
        }
        Ok(Self {
            id: id.into(),
            epoch_a,
            epoch_b,
            resolution_m_per_px: None,
            interval_note: None,
        })
    }

    pub fn epoch_a(&self) -> &Raster {
        &self.epoch_a
    }

    pub fn epoch_b(&self) -> &Raster {
        &self.epoch_b
    }

    pub fn width(&self) -> usize {
        self.epoch_a.width
    }

    pub fn height(&self) -> usize {
        self.epoch_a.height
    }

    pub fn shape(&self) -> Shape {
        self.epoch_a.shape()
    }

    /// Same pair with a replaced second epoch. Shapes must still agree.
    pub fn with_epoch_b(&self, epoch_b: Raster) -> Result<Self> {
        let mut pair = Self::new(self.id.clone(), self.epoch_a.clone(), epoch_b)?;
        pair.resolution_m_per_px = self.resolution_m_per_px;
        pair.interval_note = self.interval_note.clone();
        Ok(pair)
    }
}

/// Loads two image files as a pair. The pair id is the first file's stem.
pub fn load_image_pair(path_a: impl AsRef<Path>, path_b: impl AsRef<Path>) -> Result<ImagePair> {
    let path_a = path_a.as_ref();
    let a = Raster::load(path_a)?;
    let b = Raster::load(path_b)?;
    let id = path_a
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "pair".to_string());
    ImagePair::new(id, a, b)
}

/// Bilinear resize with half-pixel sample centers, clamped at the edges,
/// rounded half-up back to 8 bits.
pub fn resize_bilinear(r: &Raster, target_w: usize, target_h: usize) -> Result<Raster> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidTarget {
            width: target_w,
            height: target_h,
        });
    }
    if target_w == r.width && target_h == r.height {
        return Ok(r.clone());
    }

    let axis = |src: usize, dst: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(r.width, target_w);
    let ys = axis(r.height, target_h);

    let ch = r.channels;
    let mut data = Vec::with_capacity(target_w * target_h * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let top = r.get(x0, y0, c) as f64 * (1.0 - fx) + r.get(x1, y0, c) as f64 * fx;
                let bottom = r.get(x0, y1, c) as f64 * (1.0 - fx) + r.get(x1, y1, c) as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::new(target_w, target_h, ch, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Predicted,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassDomain {
    Binary,
    MultiClass,
}

/// Per-pixel class labels. Binary masks use 1 for change and 0 for no change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    provenance: Provenance,
    domain: ClassDomain,
}

impl ChangeMask {
    /// Builds a mask, inferring the class domain from the label values.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "mask {width}x{height} with {} labels",
                labels.len()
            )));
        }
        let domain = if labels.iter().all(|&v| v <= 1) {
            ClassDomain::Binary
        } else {
            ClassDomain::MultiClass
        };
        Ok(Self {
            width,
            height,
            labels,
            provenance,
            domain,
        })
    }

    pub fn zeros(width: usize, height: usize, provenance: Provenance) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
            provenance,
            domain: ClassDomain::Binary,
        }
    }

    /// Interprets a single-band raster as a mask. Values drawn from {0, 255}
    /// become {0, 1}; {0, 1} stays binary; anything else is kept as class ids.
    /// RGB rasters collapse to their per-pixel maximum channel first.
    pub fn from_raster(r: &Raster, provenance: Provenance) -> Result<Self> {
        let values: Vec<u8> = if r.channels() == 1 {
            r.data().to_vec()
        } else {
            r.data()
                .chunks_exact(r.channels())
                .map(|px| px.iter().copied().max().unwrap_or(0))
                .collect()
        };
        let mut seen = [false; 256];
        for &v in &values {
            seen[v as usize] = true;
        }
        let only = |allowed: &[usize]| (0..256).all(|v| !seen[v] || allowed.contains(&v));
        let labels = if only(&[0, 255]) {
            values.into_iter().map(|v| u8::from(v == 255)).collect()
        } else {
            values
        };
        Self::from_labels(r.width(), r.height(), labels, provenance)
    }

    pub fn load(path: impl AsRef<Path>, provenance: Provenance) -> Result<Self> {
        Self::from_raster(&Raster::load(path)?, provenance)
    }

    pub fn decode(bytes: &[u8], provenance: Provenance) -> std::result::Result<Self, String> {
        let r = Raster::decode(bytes)?;
        Self::from_raster(&r, provenance).map_err(|e| e.to_string())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> Shape {
        (self.width, self.height, 1)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn domain(&self) -> ClassDomain {
        self.domain
    }

    pub fn is_binary(&self) -> bool {
        self.domain == ClassDomain::Binary
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Number of pixels with a nonzero label.
    pub fn changed_pixels(&self) -> usize {
        self.labels.iter().filter(|&&v| v != 0).count()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Marks a mask as multi-class even when its labels happen to be {0, 1}.
    pub fn flagged_multiclass(mut self) -> Self {
        self.domain = ClassDomain::MultiClass;
        self
    }

    pub(crate) fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::NonBinaryMask)
        }
    }

    /// Binary masks render as {0, 255}; multi-class masks keep their ids.
    pub fn to_raster(&self) -> Raster {
        let data = if self.is_binary() {
            self.labels.iter().map(|&v| v * 255).collect()
        } else {
            self.labels.clone()
        };
        Raster::new(self.width, self.height, 1, data).expect("mask dims are valid")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        self.to_raster().encode_png()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_raster().save_png(path)
    }
}

/// Collapses every nonzero label to 1.
pub fn binarize_mask(m: &ChangeMask) -> ChangeMask {
    ChangeMask {
        width: m.width,
        height: m.height,
        labels: m.labels.iter().map(|&v| u8::from(v > 0)).collect(),
        provenance: m.provenance,
        domain: ClassDomain::Binary,
    }
}

/// Nearest-neighbour resize for label grids.
pub fn resize_mask_nearest(m: &ChangeMask, target_w: usize, target_h: usize) -> Result<ChangeMask> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidTarget {
            width: target_w,
            height: target_h,
        });
    }
    let pick = |i: usize, src: usize, dst: usize| {
        ((((i as f64) + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
    };
    let mut labels = Vec::with_capacity(target_w * target_h);
    for y in 0..target_h {
        let sy = pick(y, m.height, target_h);
        for x in 0..target_w {
            labels.push(m.get(pick(x, m.width, target_w), sy));
        }
    }
    Ok(ChangeMask {
        width: target_w,
        height: target_h,
        labels,
        provenance: m.provenance,
        domain: m.domain,
    })
}

/// Colors each pixel by its confusion class: yellow for agreement on change,
/// red for false positives, green for false negatives. Pixels where neither
/// mask reports change show the base image at half brightness.
pub fn render_comparison_overlay(gt: &ChangeMask, pred: &ChangeMask, base: &Raster) -> Result<Raster> {
    if gt.shape() != pred.shape() {
        return Err(Error::DimensionMismatch {
            left: gt.shape(),
            right: pred.shape(),
        });
    }
    if (gt.width, gt.height) != (base.width(), base.height()) {
        return Err(Error::DimensionMismatch {
            left: gt.shape(),
            right: base.shape(),
        });
    }
    gt.require_binary()?;
    pred.require_binary()?;

    let base = base.to_rgb();
    let dim = |v: u8| (v as f64 * BACKGROUND_DIM + 0.5).floor() as u8;
    let mut data = Vec::with_capacity(gt.labels.len() * 3);
    for (i, (&g, &p)) in gt.labels.iter().zip(&pred.labels).enumerate() {
        let px = match (g, p) {
            (1, 1) => COLOR_AGREEMENT,
            (0, 1) => COLOR_FALSE_POSITIVE,
            (1, 0) => COLOR_FALSE_NEGATIVE,
            _ => {
                let b = &base.data()[i * 3..i * 3 + 3];
                [dim(b[0]), dim(b[1]), dim(b[2])]
            }
        };
        data.extend_from_slice(&px);
    }
    Raster::new(gt.width, gt.height, 3, data)
}
