//! Detection and captioning metrics and the dataset-level report.

pub mod captioning;
pub mod report;
pub mod rescore;
pub mod seg;

pub use captioning::{
    bleu, bleu4, caption_scores, cider_d, cider_d_per_candidate, meteor_lite, meteor_lite_per_candidate, meteor_pair,
    rouge_l, rouge_l_per_candidate, CaptionScores, Tokens,
};
pub use report::{
    evaluate_dataset, render_table, CandidateMap, Channels, EvalReport, MaskMap, PairScores, ReferenceMap,
    TABLE_COLUMNS,
};
pub use rescore::{missing_predictions, rescore, selected_ids, RescoreRequest};
pub use seg::{iou_from_confusion, SegScores};
