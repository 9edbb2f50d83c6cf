//! Answer text from executed tool calls, with a grounding audit.

use std::sync::Arc;

use canopy_core::analytics::GridCell;
use canopy_core::caption::Severity;
use serde_json::Value;

use crate::artifact::{Artifact, ArtifactData};
use crate::error::{AgentError, Result};
use crate::llm::{ChatMessage, CompletionClient};
use crate::planner::Intent;
use crate::session::{CallStatus, Session, ToolCall};

pub const HELP: &str = "I can measure how much forest was lost, say where the loss is, describe it in captions, \
show an overlay of the detected change, or score the detection against a reference mask. \
Try asking \"how much forest was lost?\"";

/// A sentence of the answer and the artifacts it draws on. Failure reports
/// quote error text rather than results and are exempt from the audit.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub text: String,
    pub cites: Vec<String>,
    pub exempt: bool,
}

impl Sentence {
    fn cited(text: String, id: &str) -> Self {
        Self {
            text,
            cites: vec![id.to_string()],
            exempt: false,
        }
    }

    fn plain(text: impl Into<String>, exempt: bool) -> Self {
        Self {
            text: text.into(),
            cites: Vec::new(),
            exempt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub text: String,
    pub citations: Vec<String>,
}

fn join_cells(cells: &[GridCell]) -> String {
    cells.iter().map(|c| c.name()).collect::<Vec<_>>().join(" and ")
}

fn artifact_sentences(a: &Artifact, call: &ToolCall, focus: &[Intent]) -> Vec<Sentence> {
    let all = focus.is_empty();
    let wants = |i: Intent| all || focus.contains(&i);
    let id = a.id.as_str();
    let cite = |t: String| Sentence::cited(t, id);
    match &a.data {
        ArtifactData::Pair { pair, truth } => vec![cite(format!(
            "Loaded pair {} at {}×{} pixels{} [{id}].",
            pair.id,
            pair.width(),
            pair.height(),
            if truth.is_some() { " with a reference mask" } else { "" }
        ))],
        ArtifactData::Mask(m) if !call.cached => vec![cite(format!(
            "The {} mask marks {} pixels as changed [{id}].",
            if call.tool == "detect_changes" { "detected" } else { "loaded" },
            m.changed_pixels()
        ))],
        ArtifactData::Mask(_) => vec![],
        ArtifactData::Stats { stats, severity } => {
            let mut out = Vec::new();
            let none = stats.changed_pixels == 0;
            if wants(Intent::Amount) || (!wants(Intent::Location) && wants(Intent::Describe)) {
                out.push(cite(if none {
                    format!("No forest loss was detected [{id}].")
                } else {
                    format!(
                        "Forest loss covers {:.1} percent of the scene, a {} level of change [{id}].",
                        stats.change_percent, severity
                    )
                }));
                if !none {
                    let patches = if stats.num_patches == 1 { "patch" } else { "patches" };
                    out.push(cite(format!(
                        "It forms {} {patches}; the largest covers {:.1} percent of the image [{id}].",
                        stats.num_patches, stats.largest_patch_percent
                    )));
                }
            }
            if wants(Intent::Location) {
                out.push(cite(if none {
                    format!("There is no loss to locate [{id}].")
                } else {
                    let mut s = format!("Most of the loss lies in the {} of the image", join_cells(&stats.dominant_cells));
                    if let Some(cell) = stats.largest_patch_cell {
                        s.push_str(&format!(", and the largest patch is centred in the {cell}"));
                    }
                    s.push_str(&format!(" [{id}]."));
                    s
                }));
            }
            if out.is_empty() && *severity != Severity::None {
                out.push(cite(format!("Change statistics are ready [{id}].")));
            }
            out
        }
        ArtifactData::Captions(set) => {
            let quoted: Vec<String> = set.captions.iter().map(|c| format!("\"{}\"", c.text())).collect();
            vec![cite(format!("Captions [{id}]: {}.", quoted.join("; ")))]
        }
        ArtifactData::Overlay { reference: true, .. } => vec![cite(format!(
            "The comparison overlay [{id}] marks agreement in yellow, false alarms in red and misses in green."
        ))],
        ArtifactData::Overlay { reference: false, .. } => vec![cite(format!(
            "The overlay [{id}] highlights the detected loss in yellow over the dimmed second image."
        ))],
        ArtifactData::Confusion { seg, .. } => {
            let iou = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"));
            vec![cite(format!(
                "Against the reference, change IoU is {}, no-change IoU is {} and mIoU is {:.2} [{id}].",
                iou(seg.iou_c),
                iou(seg.iou_nc),
                seg.miou
            ))]
        }
        ArtifactData::Report(r) => vec![cite(format!("Evaluation report for {} pairs of {} [{id}].", r.n_pairs, r.dataset_id))],
        ArtifactData::DatasetStats(s) => vec![cite(format!(
            "Dataset {} holds {} pairs; change covers {:.2} percent of a scene on average and at most {:.2} percent [{id}].",
            s.dataset_id, s.n_entries, s.coverage_mean, s.coverage_max
        ))],
    }
}

/// Sentences for a turn, in call order.
pub fn template_sentences(calls: &[ToolCall], session: &Session, focus: &[Intent]) -> Vec<Sentence> {
    if calls.is_empty() {
        return vec![Sentence::plain(HELP, false)];
    }
    let mut out = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for (i, call) in calls.iter().enumerate() {
        match call.status {
            CallStatus::Ok => {
                let id = call.result_ref.as_deref().expect("ok calls carry a result");
                if seen.contains(&id) {
                    continue;
                }
                seen.push(id);
                let a = session.artifact(id).expect("results are stored");
                out.extend(artifact_sentences(a, call, focus));
            }
            CallStatus::Failed => {
                out.push(Sentence::plain(
                    format!(
                        "The {} step failed: {}.",
                        call.tool,
                        call.error.as_deref().unwrap_or("unknown error")
                    ),
                    true,
                ));
                if i + 1 < calls.len() {
                    out.push(Sentence::plain("The remaining steps were not run.", true));
                }
                break;
            }
            CallStatus::Pending => {}
        }
    }
    if out.is_empty() {
        out.push(Sentence::plain("Nothing new was computed.", false));
    }
    out
}

fn finish(sentences: &[Sentence]) -> Answer {
    let mut citations: Vec<String> = Vec::new();
    for s in sentences {
        for c in &s.cites {
            if !citations.contains(c) {
                citations.push(c.clone());
            }
        }
    }
    Answer {
        text: sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" "),
        citations,
    }
}

/// Deterministic answer quoting computed values and citing their artifacts.
pub fn compose_template(calls: &[ToolCall], session: &Session, focus: &[Intent]) -> Answer {
    let sentences = template_sentences(calls, session, focus);
    for s in &sentences {
        if s.exempt {
            continue;
        }
        let cited: Vec<&Arc<Artifact>> = s.cites.iter().filter_map(|id| session.artifact(id)).collect();
        if let Err(e) = audit(&s.text, &cited) {
            // a template bug, not a runtime condition
            debug_assert!(false, "template sentence failed grounding: {e}");
            log::error!("{e}");
        }
    }
    finish(&sentences)
}

/// Decimal numbers in `text`. Digits glued to a preceding letter,
/// digit or underscore belong to an identifier such as `a3` or `test_0001`
/// and are skipped.
pub fn numbers_in(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let glued = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        if c.is_ascii_digit() && !glued {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || (chars[i] == '.' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit()))
            {
                i += 1;
            }
            let glued_after = i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_');
            if !glued_after {
                out.push(chars[start..i].iter().collect());
            }
        } else {
            // skip the rest of an identifier
            if c.is_alphanumeric() || c == '_' {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                continue;
            }
            i += 1;
        }
    }
    out
}

#[derive(Default)]
struct Facts {
    values: Vec<f64>,
    literals: Vec<String>,
}

fn collect(v: &Value, facts: &mut Facts) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                facts.values.push(f.abs());
            }
        }
        Value::String(s) => facts.literals.extend(numbers_in(s)),
        Value::Array(items) => items.iter().for_each(|x| collect(x, facts)),
        Value::Object(map) => map.values().for_each(|x| collect(x, facts)),
        Value::Bool(_) | Value::Null => {}
    }
}

fn grounded(quoted: &str, facts: &Facts) -> bool {
    if facts.literals.iter().any(|l| l == quoted) {
        return true;
    }
    let decimals = quoted.split_once('.').map_or(0, |(_, frac)| frac.len());
    facts.values.iter().any(|v| format!("{v:.decimals$}") == quoted)
}

/// Every number in `text` must be some artifact value shown at the quoted
/// precision, or appear verbatim in an artifact's text.
pub fn audit(text: &str, artifacts: &[&Arc<Artifact>]) -> Result<()> {
    let mut facts = Facts::default();
    for a in artifacts {
        collect(&a.payload(), &mut facts);
    }
    match numbers_in(text).into_iter().find(|n| !grounded(n, &facts)) {
        Some(n) => Err(AgentError::GroundingViolation(n)),
        None => Ok(()),
    }
}

/// Asks the model to phrase the answer from the turn's artifacts. The reply
/// must pass the audit against those artifacts; otherwise, or when the
/// endpoint fails, the template answer is used and the reason returned.
pub fn compose_llm(
    message: &str,
    calls: &[ToolCall],
    session: &Session,
    focus: &[Intent],
    client: &dyn CompletionClient,
) -> (Answer, Option<String>) {
    let template = compose_template(calls, session, focus);
    if calls.iter().any(|c| c.status == CallStatus::Failed) || calls.is_empty() {
        return (template, None);
    }
    let artifacts: Vec<&Arc<Artifact>> = calls
        .iter()
        .filter_map(|c| c.result_ref.as_deref())
        .filter_map(|id| session.artifact(id))
        .collect();
    let context: Vec<Value> = artifacts
        .iter()
        .map(|a| serde_json::json!({"id": a.id, "kind": a.kind(), "data": a.payload()}))
        .collect();
    let prompt = vec![
        ChatMessage::system(
            "Answer the user's question about forest change in a few sentences using only the results \
             given. Quote numbers exactly as they appear in the results, rounded to at most two decimals, \
             and cite artifacts as [id].",
        ),
        ChatMessage::user(format!(
            "Question: {message}\nResults:\n{}",
            serde_json::to_string_pretty(&context).expect("json")
        )),
    ];
    let reply = match client.complete(&prompt) {
        Ok(r) => r.trim().to_string(),
        Err(e) => return (template, Some(format!("composer fell back to template: {e}"))),
    };
    if let Err(e) = audit(&reply, &artifacts) {
        return (template, Some(format!("composer fell back to template: {e}")));
    }
    let mut citations: Vec<String> = artifacts
        .iter()
        .filter(|a| reply.contains(&format!("[{}]", a.id)))
        .map(|a| a.id.clone())
        .collect();
    citations.dedup();
    (Answer { text: reply, citations }, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_scanner() {
        assert_eq!(
            numbers_in("covers 6.2 percent [a3], pair test_0001 at 256×256."),
            ["6.2", "256", "256"]
        );
        assert_eq!(numbers_in("version 2.0.1 and 3."), ["2.0.1", "3"]);
        assert!(numbers_in("a12 b_3 x9y").is_empty());
    }

    #[test]
    fn grounding_precision() {
        let facts = Facts {
            values: vec![6.25, 3.0, 72.3684],
            literals: vec!["0001".into()],
        };
        assert!(grounded("6.2", &facts));
        assert!(grounded("6.25", &facts));
        assert!(grounded("6", &facts));
        assert!(grounded("3", &facts));
        assert!(grounded("72.37", &facts));
        assert!(grounded("0001", &facts));
        assert!(!grounded("6.3", &facts));
        assert!(!grounded("7", &facts));
    }
}
