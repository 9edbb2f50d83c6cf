//! Classical forest-loss detection and loading of externally produced masks.
//!
//! The detector runs radiometric normalization, an excess-green vegetation
//! index per epoch, Otsu thresholding of the index difference, morphological
//! cleanup and a minimum-area filter.

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};

use crate::analytics::{label_components, Connectivity};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::raster::{binarize_mask, ChangeMask, ImagePair, Provenance, Raster};

pub const DEFAULT_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Loss,
    Gain,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub kernel_radius: usize,
    pub min_area_px: usize,
    pub direction: Direction,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            kernel_radius: 1,
            min_area_px: 16,
            direction: Direction::Loss,
        }
    }
}

/// A real-valued grid with the dimensions of the raster it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height || values.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "field {width}x{height} with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

fn channel_stats(r: &Raster, c: usize) -> (f64, f64) {
    let ch = r.channels();
    let n = (r.width() * r.height()) as f64;
    let mean = r.data().iter().skip(c).step_by(ch).map(|&v| v as f64).sum::<f64>() / n;
    let var = r
        .data()
        .iter()
        .skip(c)
        .step_by(ch)
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Maps each channel of the second epoch linearly onto the mean and standard
/// deviation of the first. Constant channels are left untouched.
pub fn normalize_radiometry(pair: &ImagePair) -> ImagePair {
    let (a, b) = (pair.epoch_a(), pair.epoch_b());
    let ch = b.channels();
    let transforms: Vec<Option<(f64, f64, f64)>> = (0..ch)
        .map(|c| {
            let (mean_a, std_a) = channel_stats(a, c);
            let (mean_b, std_b) = channel_stats(b, c);
            (std_b > 0.0).then_some((mean_b, std_a / std_b, mean_a))
        })
        .collect();
    if transforms.iter().all(Option::is_none) {
        return pair.clone();
    }
    let data = b
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| match transforms[i % ch] {
            Some((mean_b, gain, mean_a)) => ((v as f64 - mean_b) * gain + mean_a + 0.5).floor().clamp(0.0, 255.0) as u8,
            None => v,
        })
        .collect();
    let epoch_b = Raster::new(b.width(), b.height(), ch, data).expect("same shape as input");
    pair.with_epoch_b(epoch_b).expect("same shape as input")
}

/// `2g - r - b` on chromaticity-normalized RGB; 0 for black pixels.
pub fn excess_green(r: &Raster) -> Result<ScalarField> {
    if r.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            found: r.channels(),
        });
    }
    let values = r
        .data()
        .chunks_exact(3)
        .map(|px| {
            let sum = px[0] as f64 + px[1] as f64 + px[2] as f64;
            if sum == 0.0 {
                0.0
            } else {
                (2.0 * px[1] as f64 - px[0] as f64 - px[2] as f64) / sum
            }
        })
        .collect();
    ScalarField::new(r.width(), r.height(), values)
}

/// Histogram of a field over `[min, max]`. The maximum lands in the last bin.
pub fn histogram(field: &ScalarField, bins: usize) -> Result<(Vec<u64>, f64, f64)> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    let (min, max) = field.min_max();
    if min == max {
        return Err(Error::ConstantField);
    }
    let mut hist = vec![0u64; bins];
    let range = max - min;
    for &v in field.values() {
        let idx = (((v - min) / range) * bins as f64).floor() as usize;
        hist[idx.min(bins - 1)] += 1;
    }
    Ok((hist, min, max))
}

/// Best split of a histogram: the edge index `k` (bins `0..k` form the lower
/// class) maximizing between-class variance, lowest `k` on ties. `None` when
/// the histogram has fewer than two bins.
///
/// Up to a constant positive factor the variance at edge `k` equals
/// `(s0*n1 - s1*n0)^2 / (n0*n1)`, with `n` the class counts and `s` the
/// class sums of bin indices. Comparing those ratios in integers keeps the
/// choice exact.
pub fn otsu_split(hist: &[u64]) -> Option<usize> {
    if hist.len() < 2 {
        return None;
    }
    let n_total: i128 = hist.iter().map(|&c| c as i128).sum();
    let s_total: i128 = hist.iter().enumerate().map(|(i, &c)| i as i128 * c as i128).sum();

    let score = |n0: i128, s0: i128| -> (BigUint, BigUint) {
        let (n1, s1) = (n_total - n0, s_total - s0);
        if n0 == 0 || n1 == 0 {
            return (BigUint::from(0u8), BigUint::from(1u8));
        }
        let diff = BigInt::from(s0) * n1 - BigInt::from(s1) * n0;
        let num = diff.magnitude().pow(2);
        (num, BigUint::from(n0 as u128) * BigUint::from(n1 as u128))
    };

    let (mut n0, mut s0) = (0i128, 0i128);
    let mut best: Option<(usize, BigUint, BigUint)> = None;
    for k in 1..hist.len() {
        n0 += hist[k - 1] as i128;
        s0 += (k as i128 - 1) * hist[k - 1] as i128;
        let (num, den) = score(n0, s0);
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => &num * bd > bn * &den,
        };
        if better {
            best = Some((k, num, den));
        }
    }
    best.map(|(k, _, _)| k)
}

/// Otsu threshold of a field over `bins` equal-width bins. Values at or above
/// the returned threshold belong to the upper class.
pub fn otsu_threshold(field: &ScalarField, bins: usize) -> Result<f64> {
    let (hist, min, max) = histogram(field, bins)?;
    let k = otsu_split(&hist).expect("at least two bins");
    Ok(min + k as f64 * (max - min) / bins as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

/// Counts of ones in every `(2r+1)`-wide window along rows, then columns.
/// Out-of-bounds positions count as zero.
fn window_counts(labels: &[u8], w: usize, h: usize, r: usize) -> Vec<usize> {
    let mut rows = vec![0usize; w * h];
    for y in 0..h {
        let mut prefix = vec![0usize; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + labels[y * w + x] as usize;
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            rows[y * w + x] = prefix[hi] - prefix[lo];
        }
    }
    let mut out = vec![0usize; w * h];
    for x in 0..w {
        let mut prefix = vec![0usize; h + 1];
        for y in 0..h {
            prefix[y + 1] = prefix[y] + rows[y * w + x];
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            out[y * w + x] = prefix[hi] - prefix[lo];
        }
    }
    out
}

fn erode_or_dilate(m: &ChangeMask, r: usize, erode: bool) -> ChangeMask {
    let (w, h) = (m.width(), m.height());
    let full = (2 * r + 1) * (2 * r + 1);
    let counts = window_counts(m.labels(), w, h, r);
    let labels = counts
        .iter()
        .map(|&n| u8::from(if erode { n == full } else { n > 0 }))
        .collect();
    ChangeMask::from_labels(w, h, labels, m.provenance()).expect("same shape as input")
}

/// Binary morphology with a `(2r+1)`-square structuring element. Pixels
/// outside the image count as background. Open erodes then dilates; Close
/// dilates then erodes.
pub fn morph(m: &ChangeMask, op: MorphOp, kernel_radius: usize) -> Result<ChangeMask> {
    m.require_binary()?;
    let r = kernel_radius;
    Ok(match op {
        MorphOp::Erode => erode_or_dilate(m, r, true),
        MorphOp::Dilate => erode_or_dilate(m, r, false),
        MorphOp::Open => erode_or_dilate(&erode_or_dilate(m, r, true), r, false),
        MorphOp::Close => erode_or_dilate(&erode_or_dilate(m, r, false), r, true),
    })
}

/// Drops 8-connected components smaller than `min_area` pixels.
pub fn remove_small_components(m: &ChangeMask, min_area: usize) -> Result<ChangeMask> {
    let comps = label_components(m, Connectivity::Eight)?;
    let labels = comps
        .labels
        .iter()
        .map(|&id| u8::from(id != 0 && comps.areas[id as usize - 1] >= min_area))
        .collect();
    ChangeMask::from_labels(m.width(), m.height(), labels, m.provenance())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionWarning {
    /// The index difference was constant, so no threshold exists.
    NoChangeDetected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: ChangeMask,
    pub threshold: Option<f64>,
    pub warnings: Vec<DetectionWarning>,
}

pub fn detect_changes(pair: &ImagePair, params: &DetectionParams) -> Result<Detection> {
    let channels = pair.epoch_a().channels();
    if channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            found: channels,
        });
    }
    let normalized = normalize_radiometry(pair);
    let before = excess_green(normalized.epoch_a())?;
    let after = excess_green(normalized.epoch_b())?;
    let diff = match params.direction {
        Direction::Loss => before.zip_with(&after, |a, b| a - b),
        Direction::Gain => before.zip_with(&after, |a, b| b - a),
        Direction::Both => before.zip_with(&after, |a, b| (a - b).abs()),
    };

    let threshold = match otsu_threshold(&diff, DEFAULT_BINS) {
        Ok(t) => t,
        Err(Error::ConstantField) => {
            log::warn!("pair {}: constant index difference, reporting no change", pair.id);
            return Ok(Detection {
                mask: ChangeMask::zeros(pair.width(), pair.height(), Provenance::Predicted),
                threshold: None,
                warnings: vec![DetectionWarning::NoChangeDetected],
            });
        }
        Err(e) => return Err(e),
    };

    let labels = diff.values().iter().map(|&v| u8::from(v >= threshold)).collect();
    let raw = ChangeMask::from_labels(pair.width(), pair.height(), labels, Provenance::Predicted)?;
    let opened = morph(&raw, MorphOp::Open, params.kernel_radius)?;
    let closed = morph(&opened, MorphOp::Close, params.kernel_radius)?;
    let mask = remove_small_components(&closed, params.min_area_px)?;
    Ok(Detection {
        mask,
        threshold: Some(threshold),
        warnings: Vec::new(),
    })
}

/// Reads `<dir>/<pair_id>.png` for every entry of the dataset.
pub fn load_external_predictions(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<BTreeMap<String, ChangeMask>> {
    let ids: Vec<&str> = dataset.entries.iter().map(|e| e.pair_id.as_str()).collect();
    load_predictions_for(dir, dataset, &ids)
}

/// Like [`load_external_predictions`] restricted to `ids`. Each prediction is
/// binarized and checked against the ground-truth mask dimensions.
pub fn load_predictions_for(
    dir: impl AsRef<Path>,
    dataset: &Dataset,
    ids: &[&str],
) -> Result<BTreeMap<String, ChangeMask>> {
    let dir = dir.as_ref();
    let mut out = BTreeMap::new();
    for &id in ids {
        let path = dir.join(format!("{id}.png"));
        if !path.is_file() {
            return Err(Error::MissingPrediction(id.to_string()));
        }
        let pred = binarize_mask(&ChangeMask::load(&path, Provenance::Predicted).map_err(|e| e.for_pair(id))?);
        let entry = dataset
            .entry(id)
            .ok_or_else(|| Error::IdMismatch(vec![id.to_string()]))?;
        let gt = dataset.load_mask(entry).map_err(|e| e.for_pair(id))?;
        if gt.shape() != pred.shape() {
            return Err(Error::DimensionMismatch {
                left: gt.shape(),
                right: pred.shape(),
            }
            .for_pair(id));
        }
        out.insert(id.to_string(), pred);
    }
    Ok(out)
}
