//! Acceptance suite. Prints one PASS/FAIL/SKIPPED line per criterion and
//! exits non-zero if any criterion fails. Runs without a network and without
//! the web UI.
//!
//! Set `LEVIR_MCI_ROOT` to a LEVIR-MCI checkout (with `LevirCCcaptions.json`
//! and `images/`) to include the full corpus statistics check.

use std::path::{Path, PathBuf};
use std::time::Instant;

use canopy_agent::{Agent, ArtifactKind, ComposeMode, PlannerKind, Session, SessionConfig};
use canopy_core::analytics::{compare_masks, compute_stats, label_components, Connectivity};
use canopy_core::caption::{generate_rule_captions, severity_bucket, CaptionOrigin, Severity};
use canopy_core::dataset::{
    build_levir_trees_manifest, corpus_statistics, default_tree_keywords, import_levir_cc, load_manifest, Split,
    FOREST_CHANGE_SPLIT_SIZES,
};
use canopy_core::metrics::{bleu, cider_d, iou_from_confusion, meteor_lite, rouge_l};
use canopy_core::perception::{detect_changes, otsu_split, DetectionParams};
use canopy_core::raster::{ChangeMask, Provenance};
use canopy_core::synthetic::{forest_pair, Rect, SceneSpec};
use canopy_oracle::random;

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

use Outcome::{Fail, Pass, Skipped};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden() -> PathBuf {
    workspace().join("crates/core/tests/fixtures/golden")
}

fn profile() -> &'static str {
    if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    }
}

fn metric_oracle() -> Outcome {
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut worst = 0.0f64;
    let corpora = 40u64;
    for seed in 0..corpora {
        let (cands, refs) = random::caption_corpus(seed);
        let lib = bleu(&cands, &refs, 4).unwrap();
        let ora = canopy_oracle::bleu(&cands, &refs, 4);
        let mut diffs: Vec<f64> = lib.iter().zip(&ora).map(|(a, b)| (a - b).abs()).collect();
        diffs.push((rouge_l(&cands, &refs).unwrap() - canopy_oracle::rouge_l(&cands, &refs)).abs());
        diffs.push((meteor_lite(&cands, &refs).unwrap() - canopy_oracle::meteor(&cands, &refs)).abs());
        diffs.push((cider_d(&cands, &refs).unwrap() - canopy_oracle::cider_d(&cands, &refs)).abs());
        worst = diffs.into_iter().fold(worst, f64::max);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= TOL && secs < 5.0,
        format!(
            "{corpora} corpora, max |diff| {worst:.1e} (tol 1e-9), {secs:.2}s (budget 5s, {})",
            profile()
        ),
    )
}

fn mask(w: usize, h: usize, labels: Vec<u8>) -> ChangeMask {
    ChangeMask::from_labels(w, h, labels, Provenance::GroundTruth).unwrap()
}

fn segmentation_identities() -> Outcome {
    let gt: Vec<u8> = (0..400).map(|i| u8::from(i % 3 == 0)).collect();
    let complement: Vec<u8> = gt.iter().map(|&v| 1 - v).collect();
    let same =
        iou_from_confusion(&compare_masks(&mask(20, 20, gt.clone()), &mask(20, 20, gt.clone())).unwrap()).unwrap();
    let flipped = iou_from_confusion(&compare_masks(&mask(20, 20, gt), &mask(20, 20, complement)).unwrap()).unwrap();

    // 1000 pixels laid out as 50 tp, 25 fp, 25 fn, 900 tn
    let mut g = vec![0u8; 1000];
    let mut p = vec![0u8; 1000];
    g[..75].fill(1);
    p[..50].fill(1);
    p[75..100].fill(1);
    let c = compare_masks(&mask(40, 25, g), &mask(40, 25, p)).unwrap();
    let hand = iou_from_confusion(&c).unwrap();
    let iou_c = hand.iou_c.unwrap();
    let ok = format!("{:.2}", same.miou) == "100.00"
        && format!("{:.2}", flipped.miou) == "0.00"
        && (c.tp, c.fp, c.fn_, c.tn) == (50, 25, 25, 900)
        && format!("{iou_c:.2}") == "50.00"
        && (hand.miou - 72.37).abs() <= 0.01;
    verdict(
        ok,
        format!(
            "identity {:.2}, complement {:.2}, hand case IoU_c {iou_c:.2} mIoU {:.4} (target 72.37 +/- 0.01)",
            same.miou, flipped.miou, hand.miou
        ),
    )
}

fn otsu() -> Outcome {
    let hists: Vec<Vec<u64>> = (0..100u64)
        .map(|seed| random::histogram(seed, 2 + (seed as usize * 37) % 255))
        .collect();
    let start = Instant::now();
    let lib: Vec<Option<usize>> = hists.iter().map(|h| otsu_split(h)).collect();
    let secs = start.elapsed().as_secs_f64();
    let mismatches = hists
        .iter()
        .zip(&lib)
        .filter(|(h, l)| **l != Some(canopy_oracle::otsu_edge(h, -1.5, 2.25)))
        .count();
    verdict(
        mismatches == 0 && secs < 1.0,
        format!(
            "100 histograms, {mismatches} mismatches, library time {:.1}ms (budget 1s)",
            secs * 1e3
        ),
    )
}

fn labeling() -> Outcome {
    let mut bad = 0;
    for seed in 0..200u64 {
        let grid = random::binary_grid(seed, 32, 32, 0.1 + (seed % 8) as f64 * 0.1);
        let m = mask(32, 32, grid.clone());
        for (conn, eight) in [(Connectivity::Eight, true), (Connectivity::Four, false)] {
            let lab = label_components(&m, conn).unwrap();
            let same_partition = lab.labels == canopy_oracle::flood_fill(&grid, 32, 32, eight);
            let areas_ok = lab.areas.iter().sum::<usize>() == m.changed_pixels();
            if !(same_partition && areas_ok) {
                bad += 1;
            }
        }
    }
    verdict(bad == 0, format!("200 masks x 2 connectivities, {bad} disagreements"))
}

fn captions() -> Outcome {
    let mut problems = Vec::new();
    for seed in 0..50u64 {
        let density = [0.0, 0.002, 0.02, 0.1, 0.3, 0.7][seed as usize % 6];
        let m = mask(40, 30, random::binary_grid(seed, 40, 30, density));
        let stats = compute_stats(&m).unwrap();
        let first = generate_rule_captions(&stats, "m");
        let second = generate_rule_captions(&compute_stats(&m).unwrap(), "m");
        let origins: Vec<CaptionOrigin> = first.captions.iter().map(|c| c.origin).collect();
        let level = severity_bucket(stats.change_percent).unwrap();
        let extent = &first.captions[0].tokens;
        let severity_ok = if level.name == Severity::None {
            !Severity::ALL[1..]
                .iter()
                .any(|s| extent.contains(&s.name().to_string()))
        } else {
            extent[0] == level.name.name()
        };
        if first != second || first.captions.len() != 4 || origins != CaptionOrigin::RULES || !severity_ok {
            problems.push(seed);
        }
    }
    verdict(problems.is_empty(), format!("50 masks, failing seeds {problems:?}"))
}

fn detection() -> Outcome {
    let scene = |seed: u64| {
        SceneSpec::new(
            256,
            256,
            vec![
                Rect::square(30, 40, 48),
                Rect::square(150, 170, 60),
                Rect {
                    row: 200,
                    col: 20,
                    height: 20,
                    width: 70,
                },
            ],
        )
        .with_seed(seed)
    };
    let iou = |spec: &SceneSpec| {
        let s = forest_pair(spec, "syn");
        let d = detect_changes(&s.pair, &DetectionParams::default()).unwrap();
        iou_from_confusion(&compare_masks(&s.truth, &d.mask).unwrap())
            .unwrap()
            .iou_c
            .unwrap()
            / 100.0
    };
    let clean = (0..3).map(|s| iou(&scene(s))).fold(f64::INFINITY, f64::min);
    let noisy = (0..3)
        .map(|s| iou(&scene(s).with_noise(5.0)))
        .fold(f64::INFINITY, f64::min);

    let mut worst = 0.0f64;
    for seed in 10..13 {
        let s = forest_pair(&scene(seed).with_noise(5.0), "timed");
        let start = Instant::now();
        let d = detect_changes(&s.pair, &DetectionParams::default()).unwrap();
        let stats = compute_stats(&d.mask).unwrap();
        let caps = generate_rule_captions(&stats, "timed");
        worst = worst.max(start.elapsed().as_secs_f64());
        assert_eq!(caps.captions.len(), 4);
    }
    verdict(
        clean >= 0.95 && noisy >= 0.80 && worst < 1.0,
        format!(
            "min IoU_c noise-free {clean:.4} (>= 0.95), sigma=5 {noisy:.4} (>= 0.80), slowest 256x256 pair {:.0}ms (budget 1s, {})",
            worst * 1e3,
            profile()
        ),
    )
}

fn dataset_stats() -> Vec<(String, Outcome)> {
    let mut out = Vec::new();
    let d = load_manifest(workspace().join("data/forest_change/manifest.json")).unwrap();
    let counts: Vec<usize> = Split::ALL.iter().map(|&s| d.split_ids(s).len()).collect();
    let expected: Vec<usize> = FOREST_CHANGE_SPLIT_SIZES.iter().map(|&(_, n)| n).collect();
    out.push((
        "dataset statistics: shipped manifest splits".to_string(),
        verdict(
            counts == [270, 31, 33] && counts == expected,
            format!("train/val/test {counts:?} (expected [270, 31, 33])"),
        ),
    ));

    let name = "dataset statistics: LEVIR-MCI tree subset".to_string();
    let Some(root) = std::env::var_os("LEVIR_MCI_ROOT").map(PathBuf::from) else {
        out.push((name, Skipped("LEVIR_MCI_ROOT not set".into())));
        return out;
    };
    let captions = root.join("LevirCCcaptions.json");
    let text = match std::fs::read_to_string(&captions) {
        Ok(t) => t,
        Err(e) => {
            out.push((name, Fail(format!("{}: {e}", captions.display()))));
            return out;
        }
    };
    let result = import_levir_cc(&text, "levir-mci", &root, ".")
        .and_then(|src| build_levir_trees_manifest(&src, &default_tree_keywords()))
        .and_then(|(subset, report)| corpus_statistics(&subset).map(|s| (s, report)));
    match result {
        Ok((stats, report)) => {
            let sizes: Vec<String> = report
                .splits
                .iter()
                .map(|s| format!("{} {}/{}", s.split, s.count, s.reference))
                .collect();
            for d in report.discrepancies() {
                eprintln!("  discrepancy: {d}");
            }
            out.push((
                name,
                verdict(
                    (stats.coverage_mean - 15.28).abs() <= 0.1 && (stats.coverage_max - 72.79).abs() <= 0.1,
                    format!(
                        "coverage mean {:.2} (15.28 +/- 0.1), max {:.2} (72.79 +/- 0.1); splits retained/published {}",
                        stats.coverage_mean,
                        stats.coverage_max,
                        sizes.join(", ")
                    ),
                ),
            ));
        }
        Err(e) => out.push((name, Fail(e.to_string()))),
    }
    out
}

fn agent_transcript() -> Outcome {
    let run = || {
        let spec = SceneSpec::new(128, 128, vec![Rect::square(10, 12, 30), Rect::square(80, 70, 24)]).with_seed(11);
        let syn = forest_pair(&spec, "synthetic_01");
        let agent = Agent::default();
        let mut session = Session::new("scripted", SessionConfig::default());
        session.attach_pair(syn.pair.clone(), None);
        for msg in ["how much was lost", "where", "describe it", "show overlay"] {
            agent.run_turn(&mut session, msg, PlannerKind::Deterministic, ComposeMode::Template);
        }
        let reported = session
            .latest(ArtifactKind::Stats)
            .map(|a| a.payload()["change_percent"].as_f64().unwrap());
        (
            session.transcript(),
            reported,
            syn.change_percent(),
            session.latest(ArtifactKind::Overlay).is_some(),
        )
    };
    let (first, reported, truth, overlay) = run();
    let (second, _, _, _) = run();
    let Some(reported) = reported else {
        return Fail("no stats artifact produced".into());
    };
    let quoted = first.contains(&format!("{reported:.1} percent"));
    verdict(
        first.as_bytes() == second.as_bytes() && (reported - truth).abs() <= 0.1 && quoted && overlay,
        format!(
            "upload + 4 turns, identical={}, reported {reported:.2}% vs truth {truth:.2}%, overlay produced={overlay}",
            first == second
        ),
    )
}

fn rescoring() -> Outcome {
    let dir = golden();
    let args = |fmt: &str| {
        vec![
            "canopy".to_string(),
            "eval".into(),
            "--manifest".into(),
            dir.join("manifest.json").display().to_string(),
            "--pred-dir".into(),
            dir.join("pred_perfect").display().to_string(),
            "--captions".into(),
            dir.join("candidates_perfect.json").display().to_string(),
            "--format".into(),
            fmt.into(),
        ]
    };
    let invoke = |argv: Vec<String>| {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = canopy_cli::run(argv, &mut std::io::empty(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    };
    let (code, table, err) = invoke(args("table"));
    if code != 0 {
        return Fail(format!("eval exited {code}: {err}"));
    }
    let (_, record, _) = invoke(args("record"));
    let v: serde_json::Value = serde_json::from_str(&record).unwrap();
    let miou = v["seg"]["miou"].as_f64().unwrap();
    let b4 = v["cap"]["b4"].as_f64().unwrap();
    let header = table.lines().next().unwrap_or_default();
    let row = table.lines().nth(2).unwrap_or_default();
    let cells: Vec<&str> = row.split('|').map(str::trim).collect();
    let ok = header.starts_with("Dataset")
        && cells.get(2) == Some(&"100.00")
        && format!("{miou:.2}") == "100.00"
        && format!("{b4:.2}") == "1.00";
    verdict(
        ok,
        format!("table row mIoU {}, B4 {b4:.2}", cells.get(2).unwrap_or(&"?")),
    )
}

fn main() {
    let mut results: Vec<(String, Outcome)> = vec![
        ("metric oracle equivalence".into(), metric_oracle()),
        ("segmentation identities".into(), segmentation_identities()),
        ("otsu exhaustive equivalence".into(), otsu()),
        ("component labeling oracle".into(), labeling()),
        ("caption generation contract".into(), captions()),
        ("baseline detection on synthetics".into(), detection()),
    ];
    results.extend(dataset_stats());
    results.push(("agent offline transcript".into(), agent_transcript()));
    results.push(("re-scoring pipeline".into(), rescoring()));

    let mut failed = 0;
    for (name, outcome) in &results {
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skipped(d) => ("SKIPPED", d),
        };
        println!("{tag:<7} {name}: {detail}");
    }
    println!("acceptance: {} criteria checked, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
