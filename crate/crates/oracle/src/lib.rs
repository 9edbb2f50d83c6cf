//! Slow, direct reference implementations for checking the library.
//!
//! Nothing here depends on `canopy-core`; inputs are plain token lists, label
//! grids and histograms so the two code paths stay independent.

pub mod captions;
pub mod grids;
pub mod random;

pub use captions::{bleu, cider_d, meteor, rouge_l};
pub use grids::{confusion, flood_fill, morph_brute, otsu_edge};
