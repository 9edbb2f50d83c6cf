use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use canopy_agent::llm::{HttpCompletionClient, LlmConfig};
use canopy_agent::{Agent, AgentError, ComposeMode, PlannerKind, Session, SessionConfig};
use canopy_core::analytics::{compare_masks, compute_stats};
use canopy_core::caption::{generate_rule_captions, severity_bucket};
use canopy_core::dataset::{
    build_levir_trees_manifest, corpus_statistics, default_tree_keywords, import_levir_cc, load_manifest,
    statistics_from_coverage, DatasetStats, Split,
};
use canopy_core::metrics::{iou_from_confusion, rescore, RescoreRequest};
use canopy_core::perception::{detect_changes, DetectionParams, Direction};
use canopy_core::raster::{binarize_mask, load_image_pair, render_comparison_overlay, ChangeMask, Provenance};
use serde_json::json;
use thiserror::Error;

use crate::{
    emit_report, CaptionArgs, ChatArgs, Command, DetectArgs, DirectionChoice, EvalArgs, Format, PlannerChoice,
    ServeArgs, StatsArgs, SubsetArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] canopy_core::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} does not exist")]
    MissingPath(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    /// Every failure after argument parsing is a domain error.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require(paths: &[&Path]) -> Result<()> {
    match paths.iter().find(|p| !p.exists()) {
        Some(p) => Err(CliError::MissingPath(p.to_path_buf())),
        None => Ok(()),
    }
}

fn emit(text: &str, out_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out_path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

pub(crate) fn dispatch(command: Command, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Eval(a) => eval(a, out),
        Command::Detect(a) => detect(a, out),
        Command::Caption(a) => caption(a, out),
        Command::Stats(a) => stats(a, out),
        Command::Subset(a) => subset(a, out),
        Command::Serve(a) => serve(a),
        Command::Chat(a) => chat(a, stdin, out),
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut inputs = vec![a.manifest.as_path()];
    inputs.extend(a.pred_dir.as_deref());
    inputs.extend(a.captions.as_deref());
    require(&inputs)?;
    let split = a.split.as_deref().map(str::parse::<Split>).transpose()?;
    let dataset = load_manifest(&a.manifest)?;
    let candidates: Option<BTreeMap<String, String>> = match &a.captions {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let model = a.model.clone().unwrap_or_else(|| {
        a.pred_dir
            .as_deref()
            .and_then(Path::file_name)
            .map_or_else(|| "captions".to_string(), |n| n.to_string_lossy().into_owned())
    });
    let report = rescore(
        &dataset,
        &RescoreRequest {
            split,
            pred_dir: a.pred_dir.as_deref(),
            candidates: candidates.as_ref(),
            model: &model,
        },
    )?;
    emit(&emit_report(&report, a.format), a.out.as_deref(), out)
}

fn detect(a: DetectArgs, out: &mut dyn Write) -> Result<()> {
    let mut inputs = vec![a.a.as_path(), a.b.as_path()];
    inputs.extend(a.mask.as_deref());
    require(&inputs)?;
    let pair = load_image_pair(&a.a, &a.b)?;
    let params = DetectionParams {
        kernel_radius: a.kernel_radius as usize,
        min_area_px: a.min_area,
        direction: match a.direction {
            DirectionChoice::Loss => Direction::Loss,
            DirectionChoice::Gain => Direction::Gain,
            DirectionChoice::Both => Direction::Both,
        },
    };
    let detection = detect_changes(&pair, &params)?;
    let stats = compute_stats(&detection.mask)?;
    let truth = match &a.mask {
        Some(p) => Some(binarize_mask(&ChangeMask::load(p, Provenance::GroundTruth)?)),
        None => None,
    };
    let confusion = truth.as_ref().map(|t| compare_masks(t, &detection.mask)).transpose()?;
    let seg = confusion.as_ref().map(iou_from_confusion).transpose()?;

    let mut written = Vec::new();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mask_path = dir.join("mask.png");
        detection.mask.save_png(&mask_path)?;
        let gt = truth.as_ref().unwrap_or(&detection.mask);
        let overlay = render_comparison_overlay(gt, &detection.mask, pair.epoch_b())?;
        let overlay_path = dir.join("overlay.png");
        overlay.save_png(&overlay_path)?;
        written.push(mask_path);
        written.push(overlay_path);
    }

    let text = match a.format {
        Format::Record => pretty(&json!({
            "pair": {"a": a.a, "b": a.b, "width": pair.width(), "height": pair.height()},
            "params": params,
            "threshold": detection.threshold,
            "warnings": detection.warnings,
            "stats": stats,
            "confusion": confusion,
            "seg": seg,
            "written": written,
        })),
        Format::Table => {
            let mut lines = vec![
                format!("size            {}x{}", pair.width(), pair.height()),
                format!(
                    "threshold       {}",
                    detection
                        .threshold
                        .map_or_else(|| "none".to_string(), |t| format!("{t:.6}"))
                ),
                format!("changed pixels  {}", stats.changed_pixels),
                format!("change percent  {:.2}", stats.change_percent),
                format!("patches         {}", stats.num_patches),
            ];
            if let Some(s) = seg {
                let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
                lines.push(format!("IoU_c           {}", pct(s.iou_c)));
                lines.push(format!("IoU_nc          {}", pct(s.iou_nc)));
                lines.push(format!("mIoU            {:.2}", s.miou));
            }
            for w in &detection.warnings {
                lines.push(format!(
                    "warning         {}",
                    serde_json::to_value(w)
                        .expect("warning serializes")
                        .as_str()
                        .unwrap_or("?")
                ));
            }
            for p in &written {
                lines.push(format!("wrote           {}", p.display()));
            }
            lines.join("\n")
        }
    };
    emit(&text, None, out)
}

fn caption(a: CaptionArgs, out: &mut dyn Write) -> Result<()> {
    require(&[&a.mask])?;
    let mask = binarize_mask(&ChangeMask::load(&a.mask, Provenance::Predicted)?);
    let stats = compute_stats(&mask)?;
    let severity = severity_bucket(stats.change_percent)?;
    let pair_id = a.pair_id.clone().unwrap_or_else(|| {
        a.mask
            .file_stem()
            .map_or_else(|| "mask".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let set = generate_rule_captions(&stats, &pair_id);
    let text = match a.format {
        Format::Record => pretty(&json!({
            "pair_id": pair_id,
            "severity": severity.name,
            "change_percent": stats.change_percent,
            "captions": set.captions.iter().map(|c| json!({"origin": c.origin, "text": c.text()})).collect::<Vec<_>>(),
        })),
        Format::Table => set
            .captions
            .iter()
            .map(|c| {
                let origin = serde_json::to_value(c.origin).expect("origin serializes");
                format!("{:<14}{}", origin.as_str().unwrap_or("?"), c.text())
            })
            .collect::<Vec<_>>()
            .join("\n"),
    };
    emit(&text, a.out.as_deref(), out)
}

/// Text rendering of dataset statistics.
pub fn stats_table(s: &DatasetStats, with_coverage: bool) -> String {
    let mut lines = vec![format!("dataset            {}", s.dataset_id)];
    for split in Split::ALL {
        lines.push(format!(
            "{:<19}{}",
            format!("pairs ({split})"),
            s.n_pairs.get(&split).copied().unwrap_or(0)
        ));
    }
    lines.push(format!("entries            {}", s.n_entries));
    if with_coverage {
        lines.push(format!("coverage mean      {:.2}", s.coverage_mean));
        lines.push(format!("coverage min       {:.2}", s.coverage_min));
        lines.push(format!("coverage max       {:.2}", s.coverage_max));
        lines.push(format!("below 5 percent    {:.4}", s.fraction_below_5_percent));
        lines.push("coverage histogram".to_string());
        for b in &s.coverage_histogram {
            lines.push(format!("  [{:>5.1}, {:>5.1})  {}", b.lower, b.upper, b.count));
        }
    }
    lines.push(format!("captions           {}", s.n_captions));
    lines.push(format!("caption length     {:.2}", s.caption_length_mean));
    lines.push(format!("vocabulary         {}", s.vocabulary_size));
    lines.push("caption length histogram".to_string());
    for (len, n) in &s.caption_length_histogram {
        lines.push(format!("  {len:>3}  {n}"));
    }
    lines.join("\n")
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Result<()> {
    require(&[&a.manifest])?;
    let d = load_manifest(&a.manifest)?;
    let s = if a.captions_only {
        statistics_from_coverage(&d, Vec::new())
    } else {
        corpus_statistics(&d)?
    };
    let text = match a.format {
        Format::Table => stats_table(&s, !a.captions_only),
        Format::Record => pretty(&s),
    };
    emit(&text, a.out.as_deref(), out)
}

fn subset(a: SubsetArgs, out: &mut dyn Write) -> Result<()> {
    let source = match (&a.manifest, &a.levir_cc, &a.data_root) {
        (Some(m), _, _) => {
            require(&[m])?;
            load_manifest(m)?
        }
        (None, Some(c), Some(root)) => {
            require(&[c, root])?;
            let text = std::fs::read_to_string(c).map_err(io_err(c))?;
            import_levir_cc(&text, "levir-mci", root, ".")?
        }
        _ => {
            return Err(CliError::Invalid(
                "give --manifest or --levir-cc with --data-root".into(),
            ))
        }
    };
    let keywords: BTreeSet<String> = if a.keywords.is_empty() {
        default_tree_keywords()
    } else {
        a.keywords
            .iter()
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .collect()
    };
    let (subset, report) = build_levir_trees_manifest(&source, &keywords)?;
    subset.save(&a.out)?;
    let text = match a.format {
        Format::Record => pretty(&json!({
            "out": a.out,
            "report": report,
            "matches_reference": report.matches_reference(),
            "discrepancies": report.discrepancies(),
        })),
        Format::Table => {
            let mut lines = vec![format!("keywords  {}", report.keywords.join(", "))];
            lines.push(format!(
                "{:<8}{:>8}{:>10}{:>10}",
                "split", "source", "retained", "published"
            ));
            for s in &report.splits {
                let src = report.source_counts.get(&s.split).copied().unwrap_or(0);
                lines.push(format!(
                    "{:<8}{:>8}{:>10}{:>10}",
                    s.split.name(),
                    src,
                    s.count,
                    s.reference
                ));
            }
            lines.push(format!("total     {}", report.total));
            for d in report.discrepancies() {
                lines.push(format!("discrepancy  {d}"));
            }
            lines.push(format!("wrote     {}", a.out.display()));
            lines.join("\n")
        }
    };
    emit(&text, None, out)
}

fn build_agent(planner: PlannerChoice) -> Result<Agent> {
    let agent = Agent::default();
    Ok(match planner {
        PlannerChoice::Det => agent,
        PlannerChoice::Llm => {
            let client = HttpCompletionClient::new(LlmConfig::from_env()?)?;
            agent.with_client(Arc::new(client))
        }
    })
}

fn serve(a: ServeArgs) -> Result<()> {
    require(&[&a.data_root])?;
    if let Some(ui) = &a.ui_dir {
        require(&[ui])?;
    }
    let mut config = canopy_service::ServiceConfig::new(&a.data_root);
    config.ui_dir = a.ui_dir.clone();
    config.max_body_bytes = a.max_body_bytes;
    let state = canopy_service::AppState::new(config, build_agent(a.planner)?);
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(Path::new("<runtime>")))?;
    runtime
        .block_on(canopy_service::serve(state, addr))
        .map_err(|e| CliError::Invalid(format!("server on {addr}: {e}")))
}

fn chat(a: ChatArgs, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let agent = build_agent(a.planner)?;
    let (planner, composer) = match a.planner {
        PlannerChoice::Det => (PlannerKind::Deterministic, ComposeMode::Template),
        PlannerChoice::Llm => (PlannerKind::Llm, ComposeMode::Llm),
    };
    let mut session = Session::new(
        "cli",
        SessionConfig {
            data_root: Some(a.data_root.clone()),
            ..SessionConfig::default()
        },
    );
    let w = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(io_err(Path::new("<stdout>")));
    if let (Some(pa), Some(pb)) = (&a.a, &a.b) {
        let mut inputs = vec![pa.as_path(), pb.as_path()];
        inputs.extend(a.mask.as_deref());
        require(&inputs)?;
        let mut pair = load_image_pair(pa, pb)?;
        if let Some(id) = &a.pair_id {
            pair = canopy_core::raster::ImagePair::new(id.clone(), pair.epoch_a().clone(), pair.epoch_b().clone())?;
        }
        let truth = match &a.mask {
            Some(p) => Some(binarize_mask(&ChangeMask::load(p, Provenance::GroundTruth)?)),
            None => None,
        };
        let artifact = session.attach_pair(pair, truth);
        w(out, &format!("loaded pair as {}\n", artifact.id))?;
    }
    w(out, "type a question, `help`, or `quit`\n")?;
    let mut line = String::new();
    loop {
        w(out, "> ")?;
        out.flush().map_err(io_err(Path::new("<stdout>")))?;
        line.clear();
        if stdin.read_line(&mut line).map_err(io_err(Path::new("<stdin>")))? == 0 {
            w(out, "\n")?;
            break;
        }
        let msg = line.trim();
        if msg.is_empty() {
            continue;
        }
        if matches!(msg, "quit" | "exit" | ":q") {
            break;
        }
        let turn = agent.run_turn(&mut session, msg, planner, composer);
        for call in &turn.calls {
            let status = serde_json::to_value(call.status).expect("status serializes");
            let mut row = format!("  [{}] {}", status.as_str().unwrap_or("?"), call.tool);
            if let Some(r) = &call.result_ref {
                row.push_str(&format!(" -> {r}"));
            }
            if let Some(e) = &call.error {
                row.push_str(&format!(" ({e})"));
            }
            w(out, &format!("{row}\n"))?;
        }
        w(out, &format!("{}\n", turn.answer))?;
    }
    if a.transcript {
        w(out, &session.transcript())?;
    }
    Ok(())
}
