use std::fmt;

use canopy_core::analytics::{ConfusionCounts, MaskStats};
use canopy_core::caption::{CaptionSet, Severity};
use canopy_core::dataset::DatasetStats;
use canopy_core::metrics::{EvalReport, SegScores};
use canopy_core::raster::{ChangeMask, ImagePair, Raster};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Pair,
    Mask,
    Stats,
    Captions,
    Overlay,
    Report,
    Confusion,
    DatasetStats,
}

impl ArtifactKind {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Pair => "pair",
            ArtifactKind::Mask => "mask",
            ArtifactKind::Stats => "stats",
            ArtifactKind::Captions => "captions",
            ArtifactKind::Overlay => "overlay",
            ArtifactKind::Report => "report",
            ArtifactKind::Confusion => "confusion",
            ArtifactKind::DatasetStats => "dataset_stats",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum ArtifactData {
    /// A loaded pair, with its reference mask when one was supplied.
    Pair {
        pair: ImagePair,
        truth: Option<ChangeMask>,
    },
    Mask(ChangeMask),
    Stats {
        stats: MaskStats,
        severity: Severity,
    },
    Captions(CaptionSet),
    /// `reference` is true when the overlay compares against a reference
    /// mask rather than just highlighting the prediction.
    Overlay {
        image: Raster,
        reference: bool,
    },
    Confusion {
        counts: ConfusionCounts,
        seg: SegScores,
    },
    Report(EvalReport),
    DatasetStats(DatasetStats),
}

impl ArtifactData {
    pub fn kind(&self) -> ArtifactKind {
        match self {
            ArtifactData::Pair { .. } => ArtifactKind::Pair,
            ArtifactData::Mask(_) => ArtifactKind::Mask,
            ArtifactData::Stats { .. } => ArtifactKind::Stats,
            ArtifactData::Captions(_) => ArtifactKind::Captions,
            ArtifactData::Overlay { .. } => ArtifactKind::Overlay,
            ArtifactData::Confusion { .. } => ArtifactKind::Confusion,
            ArtifactData::Report(_) => ArtifactKind::Report,
            ArtifactData::DatasetStats(_) => ArtifactKind::DatasetStats,
        }
    }
}

/// A tool result held by a session. Never mutated once stored.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub id: String,
    /// Tool that produced it, or `upload` for pairs attached directly.
    pub tool: String,
    /// Index of the turn that created it; uploads before the first turn get 0.
    pub turn: usize,
    pub data: ArtifactData,
}

impl Artifact {
    pub fn kind(&self) -> ArtifactKind {
        self.data.kind()
    }

    /// Whether the artifact is served as an image.
    pub fn is_image(&self) -> bool {
        matches!(self.data, ArtifactData::Mask(_) | ArtifactData::Overlay { .. })
    }

    pub fn content_type(&self) -> &'static str {
        if self.is_image() {
            "image/png"
        } else {
            "application/json"
        }
    }

    pub fn png(&self) -> Option<Result<Vec<u8>>> {
        match &self.data {
            ArtifactData::Mask(m) => Some(m.encode_png().map_err(Into::into)),
            ArtifactData::Overlay { image, .. } => Some(image.encode_png().map_err(Into::into)),
            _ => None,
        }
    }

    /// Structured description. Image artifacts describe their metadata; the
    /// pixels come from [`Artifact::png`].
    pub fn payload(&self) -> Value {
        match &self.data {
            ArtifactData::Pair { pair, truth } => json!({
                "pair_id": pair.id,
                "width": pair.width(),
                "height": pair.height(),
                "channels": pair.epoch_a().channels(),
                "has_reference_mask": truth.is_some(),
            }),
            ArtifactData::Mask(m) => json!({
                "width": m.width(),
                "height": m.height(),
                "provenance": m.provenance(),
                "changed_pixels": m.changed_pixels(),
                "change_percent": canopy_core::analytics::percent(m.changed_pixels(), m.labels().len()),
            }),
            ArtifactData::Stats { stats, severity } => {
                let mut v = serde_json::to_value(stats).expect("stats serialize");
                v["severity"] = json!(severity);
                v
            }
            ArtifactData::Captions(set) => json!({
                "pair_id": set.pair_id,
                "captions": set.captions.iter().map(|c| json!({"origin": c.origin, "text": c.text()})).collect::<Vec<_>>(),
            }),
            ArtifactData::Overlay { image, reference } => json!({
                "width": image.width(),
                "height": image.height(),
                "reference": reference,
            }),
            ArtifactData::Confusion { counts, seg } => json!({"confusion": counts, "seg": seg}),
            ArtifactData::Report(r) => serde_json::to_value(r).expect("report serializes"),
            ArtifactData::DatasetStats(s) => serde_json::to_value(s).expect("stats serialize"),
        }
    }

    /// Summary record used in listings and turn records.
    pub fn describe(&self) -> Value {
        json!({
            "id": self.id,
            "kind": self.kind(),
            "tool": self.tool,
            "turn": self.turn,
            "content_type": self.content_type(),
        })
    }
}
