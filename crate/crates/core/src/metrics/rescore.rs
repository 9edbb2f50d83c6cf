//! Scoring externally produced predictions for a manifest.

use std::collections::BTreeMap;
use std::path::Path;

use crate::caption::normalize_tokens;
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::perception::load_predictions_for;

use super::report::{evaluate_dataset, CandidateMap, EvalReport, MaskMap, ReferenceMap};

/// Inputs to [`rescore`]. At least one of `pred_dir` and `candidates` must be set.
#[derive(Debug, Clone, Default)]
pub struct RescoreRequest<'a> {
    /// Restrict to one split; all entries when `None`.
    pub split: Option<Split>,
    /// Directory holding `<pair_id>.png` prediction masks.
    pub pred_dir: Option<&'a Path>,
    /// Candidate caption per pair id, as raw text.
    pub candidates: Option<&'a BTreeMap<String, String>>,
    pub model: &'a str,
}

/// Ids the request scores, in manifest split order.
pub fn selected_ids(d: &Dataset, split: Option<Split>) -> Vec<String> {
    match split {
        Some(s) => d.split_ids(s).to_vec(),
        None => d.entries.iter().map(|e| e.pair_id.clone()).collect(),
    }
}

/// Pair ids whose prediction file is absent, without decoding anything.
pub fn missing_predictions(dir: &Path, ids: &[String]) -> Vec<String> {
    ids.iter()
        .filter(|id| !dir.join(format!("{id}.png")).is_file())
        .cloned()
        .collect()
}

/// Loads ground truth, predictions and captions for the selected pairs and
/// scores them with [`evaluate_dataset`].
pub fn rescore(d: &Dataset, req: &RescoreRequest<'_>) -> Result<EvalReport> {
    let ids = selected_ids(d, req.split);
    if ids.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();

    let masks = match req.pred_dir {
        Some(dir) => {
            if let Some(id) = missing_predictions(dir, &ids).into_iter().next() {
                return Err(Error::MissingPrediction(id));
            }
            let pred = load_predictions_for(dir, d, &id_refs)?;
            let gt: MaskMap = ids
                .iter()
                .map(|id| {
                    let entry = d.entry(id).expect("split ids are validated entries");
                    d.load_mask(entry).map(|m| (id.clone(), m)).map_err(|e| e.for_pair(id))
                })
                .collect::<Result<_>>()?;
            Some((gt, pred))
        }
        None => None,
    };

    let captions = match req.candidates {
        Some(raw) => {
            let refs: ReferenceMap = ids
                .iter()
                .map(|id| (id.clone(), d.entry(id).expect("validated").captions.token_lists()))
                .collect();
            if let Some((id, _)) = refs.iter().find(|(_, r)| r.is_empty()) {
                return Err(Error::Schema(format!("pair {id} has no reference captions")));
            }
            let cands: CandidateMap = raw
                .iter()
                .filter(|(id, _)| refs.contains_key(*id))
                .map(|(id, text)| (id.clone(), normalize_tokens(text)))
                .collect();
            let extra: Vec<String> = raw.keys().filter(|k| !refs.contains_key(*k)).cloned().collect();
            if !extra.is_empty() && req.split.is_none() {
                return Err(Error::IdMismatch(extra));
            }
            Some((refs, cands))
        }
        None => None,
    };

    evaluate_dataset(
        &d.id,
        req.model,
        masks.as_ref().map(|(g, p)| (g, p)),
        captions.as_ref().map(|(r, c)| (r, c)),
    )
}
