//! The builtin analysis tools.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use canopy_core::analytics::{compare_masks, compute_stats_with, Connectivity};
use canopy_core::caption::{generate_rule_captions, severity_bucket};
use canopy_core::dataset::{corpus_statistics, load_manifest};
use canopy_core::metrics::iou_from_confusion;
use canopy_core::perception::{detect_changes, DetectionParams, Direction};
use canopy_core::raster::{binarize_mask, load_image_pair, render_comparison_overlay, ChangeMask, Provenance};
use serde_json::json;

use crate::artifact::{Artifact, ArtifactData, ArtifactKind};
use crate::error::{AgentError, Result};
use crate::paths::resolve_within;
use crate::registry::{Args, InputSlot, ParamSpec, ParamType, Registry, Tool, ToolSpec};

/// What a handler sees: its resolved input artifacts and the data root.
pub struct ToolContext<'a> {
    pub inputs: Vec<Arc<Artifact>>,
    pub data_root: Option<&'a Path>,
    /// Pair id for naming results, when a pair is loaded.
    pub pair_id: Option<String>,
}

impl ToolContext<'_> {
    pub fn path(&self, args: &Args, name: &str) -> Result<PathBuf> {
        let raw = Path::new(args[name].as_str().expect("validated path"));
        match self.data_root {
            Some(root) => resolve_within(root, raw),
            None => Ok(raw.to_path_buf()),
        }
    }

    fn input(&self, i: usize) -> &ArtifactData {
        &self.inputs[i].data
    }
}

fn int(args: &Args, name: &str) -> usize {
    args[name].as_i64().expect("validated integer") as usize
}

fn text<'a>(args: &'a Args, name: &str) -> &'a str {
    args[name].as_str().expect("validated text")
}

fn slot(name: &'static str, kind: ArtifactKind) -> InputSlot {
    InputSlot {
        name,
        kind,
        implicit: true,
    }
}

fn pair_of(data: &ArtifactData) -> (&canopy_core::raster::ImagePair, Option<&ChangeMask>) {
    match data {
        ArtifactData::Pair { pair, truth } => (pair, truth.as_ref()),
        _ => unreachable!("input kind checked by the executor"),
    }
}

fn mask_of(data: &ArtifactData) -> &ChangeMask {
    match data {
        ArtifactData::Mask(m) => m,
        _ => unreachable!("input kind checked by the executor"),
    }
}

fn load_pair(ctx: &ToolContext<'_>, args: &Args) -> Result<ArtifactData> {
    let pair = load_image_pair(ctx.path(args, "a")?, ctx.path(args, "b")?)?;
    let truth = match args.get("mask") {
        Some(_) => {
            let m = binarize_mask(&ChangeMask::load(ctx.path(args, "mask")?, Provenance::GroundTruth)?);
            if (m.width(), m.height()) != (pair.width(), pair.height()) {
                return Err(canopy_core::Error::DimensionMismatch {
                    left: pair.shape(),
                    right: m.shape(),
                }
                .into());
            }
            Some(m)
        }
        None => None,
    };
    Ok(ArtifactData::Pair { pair, truth })
}

fn detect(ctx: &ToolContext<'_>, args: &Args) -> Result<ArtifactData> {
    let (pair, _) = pair_of(ctx.input(0));
    let direction = match text(args, "direction") {
        "gain" => Direction::Gain,
        "both" => Direction::Both,
        _ => Direction::Loss,
    };
    let params = DetectionParams {
        kernel_radius: int(args, "kernel_radius"),
        min_area_px: int(args, "min_area"),
        direction,
    };
    Ok(ArtifactData::Mask(detect_changes(pair, &params)?.mask))
}

fn load_prediction(ctx: &ToolContext<'_>, args: &Args) -> Result<ArtifactData> {
    let (pair, _) = pair_of(ctx.input(0));
    let m = binarize_mask(&ChangeMask::load(ctx.path(args, "path")?, Provenance::Predicted)?);
    if (m.width(), m.height()) != (pair.width(), pair.height()) {
        return Err(canopy_core::Error::DimensionMismatch {
            left: pair.shape(),
            right: m.shape(),
        }
        .into());
    }
    Ok(ArtifactData::Mask(m))
}

fn stats(ctx: &ToolContext<'_>, args: &Args) -> Result<ArtifactData> {
    let connectivity = match text(args, "connectivity") {
        "four" => Connectivity::Four,
        _ => Connectivity::Eight,
    };
    let stats = compute_stats_with(&binarize_mask(mask_of(ctx.input(0))), connectivity)?;
    let severity = severity_bucket(stats.change_percent)?.name;
    Ok(ArtifactData::Stats { stats, severity })
}

fn captions(ctx: &ToolContext<'_>, _args: &Args) -> Result<ArtifactData> {
    let ArtifactData::Stats { stats, .. } = ctx.input(0) else {
        unreachable!("input kind checked by the executor")
    };
    let id = ctx.pair_id.as_deref().unwrap_or("mask");
    Ok(ArtifactData::Captions(generate_rule_captions(stats, id)))
}

fn overlay(ctx: &ToolContext<'_>, _args: &Args) -> Result<ArtifactData> {
    let (pair, truth) = pair_of(ctx.input(0));
    let pred = binarize_mask(mask_of(ctx.input(1)));
    let reference = truth.is_some();
    let gt = truth.cloned().unwrap_or_else(|| pred.clone());
    let image = render_comparison_overlay(&gt, &pred, pair.epoch_b())?;
    Ok(ArtifactData::Overlay { image, reference })
}

fn evaluate_pair(ctx: &ToolContext<'_>, _args: &Args) -> Result<ArtifactData> {
    let (_, truth) = pair_of(ctx.input(0));
    let truth = truth.ok_or(AgentError::NoReferenceMask)?;
    let counts = compare_masks(truth, &binarize_mask(mask_of(ctx.input(1))))?;
    Ok(ArtifactData::Confusion {
        counts,
        seg: iou_from_confusion(&counts)?,
    })
}

fn compare(ctx: &ToolContext<'_>, _args: &Args) -> Result<ArtifactData> {
    let counts = compare_masks(
        &binarize_mask(mask_of(ctx.input(0))),
        &binarize_mask(mask_of(ctx.input(1))),
    )?;
    Ok(ArtifactData::Confusion {
        counts,
        seg: iou_from_confusion(&counts)?,
    })
}

fn dataset_summary(ctx: &ToolContext<'_>, args: &Args) -> Result<ArtifactData> {
    let dataset = load_manifest(ctx.path(args, "manifest")?)?;
    Ok(ArtifactData::DatasetStats(corpus_statistics(&dataset)?))
}

/// The nine builtin tools.
pub fn builtin_tools() -> Vec<Tool> {
    use ArtifactKind::*;
    let path = |name, description| ParamSpec::required(name, description, ParamType::Path);
    vec![
        Tool {
            spec: ToolSpec {
                name: "load_pair",
                description: "Load a bi-temporal image pair, optionally with a reference change mask",
                params: vec![
                    path("a", "first-epoch image"),
                    path("b", "second-epoch image"),
                    ParamSpec::optional("mask", "reference change mask", ParamType::Path, None),
                ],
                inputs: vec![],
                result: Pair,
            },
            handler: load_pair,
        },
        Tool {
            spec: ToolSpec {
                name: "detect_changes",
                description: "Detect forest change in the loaded pair with the vegetation-index baseline",
                params: vec![
                    ParamSpec::optional(
                        "kernel_radius",
                        "radius of the square opening/closing kernel",
                        ParamType::Integer { min: 0, max: 15 },
                        Some(json!(1)),
                    ),
                    ParamSpec::optional(
                        "min_area",
                        "smallest patch kept, in pixels",
                        ParamType::Integer { min: 0, max: 1 << 24 },
                        Some(json!(16)),
                    ),
                    ParamSpec::optional(
                        "direction",
                        "which vegetation change counts",
                        ParamType::Choice {
                            options: vec!["loss", "gain", "both"],
                        },
                        Some(json!("loss")),
                    ),
                ],
                inputs: vec![slot("pair", Pair)],
                result: Mask,
            },
            handler: detect,
        },
        Tool {
            spec: ToolSpec {
                name: "load_prediction",
                description: "Load an externally predicted change mask for the loaded pair",
                params: vec![path("path", "prediction mask image")],
                inputs: vec![slot("pair", Pair)],
                result: Mask,
            },
            handler: load_prediction,
        },
        Tool {
            spec: ToolSpec {
                name: "compute_stats",
                description: "Change percent, patches and their location on a 3x3 compass grid",
                params: vec![
                    ParamSpec::optional(
                        "mask",
                        "mask artifact id; latest mask when omitted",
                        ParamType::ArtifactRef,
                        None,
                    ),
                    ParamSpec::optional(
                        "connectivity",
                        "pixel adjacency for patches",
                        ParamType::Choice {
                            options: vec!["eight", "four"],
                        },
                        Some(json!("eight")),
                    ),
                ],
                inputs: vec![slot("mask", Mask)],
                result: Stats,
            },
            handler: stats,
        },
        Tool {
            spec: ToolSpec {
                name: "generate_captions",
                description: "Four rule-based captions describing extent, patchiness, location and a summary",
                params: vec![],
                inputs: vec![slot("stats", Stats)],
                result: Captions,
            },
            handler: captions,
        },
        Tool {
            spec: ToolSpec {
                name: "render_overlay",
                description: "Color the change mask over the second image, against the reference mask when present",
                params: vec![ParamSpec::optional(
                    "mask",
                    "mask artifact id; latest mask when omitted",
                    ParamType::ArtifactRef,
                    None,
                )],
                inputs: vec![slot("pair", Pair), slot("mask", Mask)],
                result: Overlay,
            },
            handler: overlay,
        },
        Tool {
            spec: ToolSpec {
                name: "evaluate_pair",
                description: "Score a mask against the pair's reference mask (IoU per class and mIoU)",
                params: vec![ParamSpec::optional(
                    "mask",
                    "mask artifact id; latest mask when omitted",
                    ParamType::ArtifactRef,
                    None,
                )],
                inputs: vec![slot("pair", Pair), slot("mask", Mask)],
                result: Confusion,
            },
            handler: evaluate_pair,
        },
        Tool {
            spec: ToolSpec {
                name: "dataset_summary",
                description: "Coverage and caption statistics of a dataset manifest",
                params: vec![path("manifest", "manifest file")],
                inputs: vec![],
                result: DatasetStats,
            },
            handler: dataset_summary,
        },
        Tool {
            spec: ToolSpec {
                name: "compare_masks",
                description: "Confusion counts and IoU between two mask artifacts",
                params: vec![
                    ParamSpec::required("first", "reference mask artifact id", ParamType::ArtifactRef),
                    ParamSpec::required("second", "compared mask artifact id", ParamType::ArtifactRef),
                ],
                inputs: vec![
                    InputSlot {
                        name: "first",
                        kind: Mask,
                        implicit: false,
                    },
                    InputSlot {
                        name: "second",
                        kind: Mask,
                        implicit: false,
                    },
                ],
                result: Confusion,
            },
            handler: compare,
        },
    ]
}

pub fn register_builtin_tools(registry: &mut Registry) -> Result<()> {
    for tool in builtin_tools() {
        registry.register(tool)?;
    }
    Ok(())
}

/// A registry holding exactly the builtin tools.
pub fn builtin_registry() -> Registry {
    let mut r = Registry::new();
    register_builtin_tools(&mut r).expect("builtin names are unique");
    r
}
