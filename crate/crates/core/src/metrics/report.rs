use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::captioning::{
    bleu4, cider_d_per_candidate, meteor_lite_per_candidate, rouge_l_per_candidate, CaptionScores, Tokens,
};
use super::seg::{iou_from_confusion, SegScores};
use crate::analytics::{compare_masks, ConfusionCounts};
use crate::error::{Error, Result};
use crate::raster::ChangeMask;

pub const METEOR_NOTE: &str =
    "METEOR column is meteor_lite: exact unigram matching only, not comparable to published METEOR";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channels {
    pub detection: bool,
    pub captioning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub pair_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confusion: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seg: Option<SegScores>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub meteor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cider_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub model: String,
    pub channels: Channels,
    pub n_pairs: usize,
    pub confusion: Option<ConfusionCounts>,
    pub seg: Option<SegScores>,
    pub cap: Option<CaptionScores>,
    #[serde(default)]
    pub per_pair: Vec<PairScores>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub type MaskMap = BTreeMap<String, ChangeMask>;
pub type ReferenceMap = BTreeMap<String, Vec<Tokens>>;
pub type CandidateMap = BTreeMap<String, Tokens>;

fn mismatch<'a, V, W>(a: &'a BTreeMap<String, V>, b: &'a BTreeMap<String, W>) -> Vec<String> {
    let ka: BTreeSet<&String> = a.keys().collect();
    let kb: BTreeSet<&String> = b.keys().collect();
    ka.symmetric_difference(&kb).map(|s| s.to_string()).collect()
}

/// Scores a corpus. Either channel may be omitted; when both run their id
/// sets must coincide. Segmentation is scored from one confusion matrix
/// summed over all pairs, captioning with the corpus metrics.
pub fn evaluate_dataset(
    dataset_id: &str,
    model: &str,
    masks: Option<(&MaskMap, &MaskMap)>,
    captions: Option<(&ReferenceMap, &CandidateMap)>,
) -> Result<EvalReport> {
    if masks.is_none() && captions.is_none() {
        return Err(Error::InvalidParameter(
            "nothing to evaluate: no masks and no captions".into(),
        ));
    }
    let mut ids: Option<Vec<String>> = None;
    if let Some((gt, pred)) = masks {
        let bad = mismatch(gt, pred);
        if !bad.is_empty() {
            return Err(Error::IdMismatch(bad));
        }
        ids = Some(gt.keys().cloned().collect());
    }
    if let Some((refs, cands)) = captions {
        let bad = mismatch(refs, cands);
        if !bad.is_empty() {
            return Err(Error::IdMismatch(bad));
        }
        if let Some((gt, _)) = masks {
            let bad = mismatch(gt, refs);
            if !bad.is_empty() {
                return Err(Error::IdMismatch(bad));
            }
        }
        ids.get_or_insert_with(|| refs.keys().cloned().collect());
    }
    let ids = ids.unwrap_or_default();
    if ids.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut per_pair: Vec<PairScores> = ids
        .iter()
        .map(|id| PairScores {
            pair_id: id.clone(),
            confusion: None,
            seg: None,
            rouge_l: None,
            meteor: None,
            cider_d: None,
        })
        .collect();

    let (mut confusion, mut seg) = (None, None);
    if let Some((gt, pred)) = masks {
        let counts: Vec<ConfusionCounts> = ids
            .par_iter()
            .map(|id| compare_masks(&gt[id], &pred[id]).map_err(|e| e.for_pair(id)))
            .collect::<Result<_>>()?;
        // summed in id order, independent of worker count
        let total = counts.iter().fold(ConfusionCounts::default(), |acc, &c| acc + c);
        for (p, c) in per_pair.iter_mut().zip(&counts) {
            p.confusion = Some(*c);
            p.seg = Some(iou_from_confusion(c)?);
        }
        confusion = Some(total);
        seg = Some(iou_from_confusion(&total)?);
    }

    let mut cap = None;
    if let Some((refs, cands)) = captions {
        let c: Vec<Tokens> = ids.iter().map(|id| cands[id].clone()).collect();
        let r: Vec<Vec<Tokens>> = ids.iter().map(|id| refs[id].clone()).collect();
        let [b1, b2, b3, b4] = bleu4(&c, &r)?;
        let rouge = rouge_l_per_candidate(&c, &r)?;
        let meteor = meteor_lite_per_candidate(&c, &r)?;
        let cider = cider_d_per_candidate(&c, &r)?;
        for (i, p) in per_pair.iter_mut().enumerate() {
            p.rouge_l = Some(rouge[i]);
            p.meteor = Some(meteor[i]);
            p.cider_d = Some(cider[i]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        cap = Some(CaptionScores {
            b1,
            b2,
            b3,
            b4,
            meteor: mean(&meteor),
            rouge_l: mean(&rouge),
            cider_d: mean(&cider),
        });
    }

    let mut notes = Vec::new();
    if cap.is_some() {
        notes.push(METEOR_NOTE.to_string());
    }
    Ok(EvalReport {
        dataset_id: dataset_id.to_string(),
        model: model.to_string(),
        channels: Channels {
            detection: seg.is_some(),
            captioning: cap.is_some(),
        },
        n_pairs: ids.len(),
        confusion,
        seg,
        cap,
        per_pair,
        notes,
    })
}

pub const TABLE_COLUMNS: [&str; 12] = [
    "Dataset", "Model", "mIoU", "IoU_nc", "IoU_c", "B1", "B2", "B3", "B4", "METEOR", "ROUGE_L", "CIDEr-D",
];

impl EvalReport {
    /// Cells of one table row; absent channels render as "-".
    pub fn table_cells(&self) -> Vec<String> {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut cells = vec![self.dataset_id.clone(), self.model.clone()];
        cells.push(pct(self.seg.map(|s| s.miou)));
        cells.push(pct(self.seg.and_then(|s| s.iou_nc)));
        cells.push(pct(self.seg.and_then(|s| s.iou_c)));
        let cap = |f: fn(&CaptionScores) -> f64| pct(self.cap.as_ref().map(|c| 100.0 * f(c)));
        cells.push(cap(|c| c.b1));
        cells.push(cap(|c| c.b2));
        cells.push(cap(|c| c.b3));
        cells.push(cap(|c| c.b4));
        cells.push(cap(|c| c.meteor));
        cells.push(cap(|c| c.rouge_l));
        cells.push(cap(|c| c.cider_d));
        cells
    }

    /// Table in the column order of the published results: segmentation in
    /// percent, caption metrics scaled by 100, both to two decimals.
    pub fn to_table(&self) -> String {
        render_table(std::slice::from_ref(self))
    }

    /// Machine-readable JSON record.
    pub fn to_record(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Several reports as rows of one table.
pub fn render_table(reports: &[EvalReport]) -> String {
    let rows: Vec<Vec<String>> = std::iter::once(TABLE_COLUMNS.iter().map(|s| s.to_string()).collect())
        .chain(reports.iter().map(EvalReport::table_cells))
        .collect();
    let widths: Vec<usize> = (0..TABLE_COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                if c < 2 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            let _ = writeln!(out, "{}", rule.join("-|-"));
        }
    }
    let notes: BTreeSet<&String> = reports.iter().flat_map(|r| &r.notes).collect();
    for n in notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}
