//! Core library for bi-temporal forest change analysis.
//!
//! - [`raster`]: images, pairs, masks, resizing and comparison overlays
//! - [`analytics`]: connected patches, coverage statistics, confusion counts
//! - [`caption`]: rule-based change captions from mask statistics
//! - [`perception`]: classical loss detector and external prediction loading
//! - [`metrics`]: IoU, BLEU, ROUGE-L, METEOR (exact match), CIDEr-D, reports
//! - [`dataset`]: manifests, splits, keyword subsets and corpus statistics

pub mod analytics;
pub mod caption;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod perception;
pub mod raster;
pub mod synthetic;

pub use error::{Error, Result};
