use serde::{Deserialize, Serialize};

use crate::analytics::ConfusionCounts;
use crate::error::{Error, Result};

/// Segmentation scores in percent. A class whose union is empty has no IoU
/// and is left out of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub miou: f64,
    pub iou_nc: Option<f64>,
    pub iou_c: Option<f64>,
}

pub fn iou_from_confusion(c: &ConfusionCounts) -> Result<SegScores> {
    if c.total() == 0 {
        return Err(Error::EmptyInput);
    }
    let iou = |inter: u64, union: u64| (union > 0).then(|| 100.0 * inter as f64 / union as f64);
    let iou_c = iou(c.tp, c.tp + c.fp + c.fn_);
    let iou_nc = iou(c.tn, c.tn + c.fp + c.fn_);
    let defined: Vec<f64> = [iou_nc, iou_c].into_iter().flatten().collect();
    let miou = if defined.is_empty() {
        100.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(SegScores { miou, iou_nc, iou_c })
}
