use std::path::{Path, PathBuf};

use canopy_core::dataset::{build_levir_trees_manifest, corpus_statistics, default_tree_keywords, import_levir_cc};
use canopy_core::raster::{ChangeMask, Provenance};
use canopy_core::synthetic::{forest_pair, Rect, SceneSpec};
use serde_json::{json, Value};

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn run_with_stdin<S: AsRef<str>>(args: &[S], stdin: &str) -> Output {
    let argv: Vec<String> = std::iter::once("canopy".to_string())
        .chain(args.iter().map(|s| s.as_ref().to_string()))
        .collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = canopy_cli::run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn run<S: AsRef<str>>(args: &[S]) -> Output {
    run_with_stdin(args, "")
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["eval", "--bogus"]);
    assert_eq!(o.code, 2);
    assert!(o.err.contains("Usage"), "{}", o.err);
    assert_eq!(run(&["frobnicate"]).code, 2);
    assert_eq!(run::<&str>(&[]).code, 2);
    // eval needs predictions, captions or both
    assert_eq!(run(&["eval", "--manifest", "m.json"]).code, 2);
    assert_eq!(
        run(&["detect", "--a", "a", "--b", "b", "--kernel-radius", "99"]).code,
        2
    );
}

#[test]
fn help_exits_zero_and_lists_environment() {
    let o = run(&["--help"]);
    assert_eq!(o.code, 0);
    for var in [
        "CANOPY_LLM_BASE_URL",
        "CANOPY_LLM_MODEL",
        "CANOPY_LLM_API_KEY",
        "CANOPY_LLM_TIMEOUT_SECS",
    ] {
        assert!(o.out.contains(var), "{var} missing from help");
    }
    assert!(!o.out.contains('\u{1b}'), "help contains escape codes");
}

#[test]
fn domain_errors_exit_one() {
    let o = run(&["eval", "--manifest", "/no/such/manifest.json", "--pred-dir", "/no/such"]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("does not exist"), "{}", o.err);

    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("pred")).unwrap();
    let o = run(&[
        "eval",
        "--manifest",
        &p(&golden().join("manifest.json")),
        "--pred-dir",
        &p(&dir.path().join("pred")),
    ]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("g01"), "{}", o.err);
}

#[test]
fn eval_reproduces_golden_scores() {
    let o = run(&[
        "eval",
        "--manifest",
        &p(&golden().join("manifest.json")),
        "--pred-dir",
        &p(&golden().join("pred")),
        "--captions",
        &p(&golden().join("candidates.json")),
        "--format",
        "record",
    ]);
    assert_eq!(o.code, 0, "{}", o.err);
    let got: Value = serde_json::from_str(&o.out).unwrap();
    let want: Value = serde_json::from_str(&std::fs::read_to_string(golden().join("expected.json")).unwrap()).unwrap();
    let close = |a: &Value, b: &Value| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-9;
    assert!(close(&got["seg"]["miou"], &want["seg"]["miou"]));
    assert!(close(&got["seg"]["iou_c"], &want["seg"]["iou_c"]));
    for (i, key) in ["b1", "b2", "b3", "b4"].iter().enumerate() {
        assert!(close(&got["cap"][key], &want["bleu"][i]), "{key}");
    }
    assert!(close(&got["cap"]["rouge_l"], &want["rouge_l"]));
    assert!(close(&got["cap"]["meteor"], &want["meteor"]));
    assert!(close(&got["cap"]["cider_d"], &want["cider_d"]));
    assert_eq!(got["model"], "pred");
}

#[test]
fn perfect_fixture_table_is_deterministic() {
    let args = [
        "eval".to_string(),
        "--manifest".into(),
        p(&golden().join("manifest.json")),
        "--pred-dir".into(),
        p(&golden().join("pred_perfect")),
        "--captions".into(),
        p(&golden().join("candidates_perfect.json")),
        "--model".into(),
        "perfect".into(),
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.code, 0, "{}", first.err);
    assert_eq!(first.out, second.out);
    let row: Vec<&str> = first.out.lines().nth(2).unwrap().split('|').map(str::trim).collect();
    assert_eq!(&row[..3], ["golden", "perfect", "100.00"]);
    assert_eq!(row[8], "100.00", "B4 scaled by 100");
}

#[test]
fn detection_only_report_dashes_caption_columns() {
    let out_dir = tempfile::tempdir().unwrap();
    let out_file = out_dir.path().join("report.txt");
    let o = run(&[
        "eval",
        "--manifest",
        &p(&golden().join("manifest.json")),
        "--pred-dir",
        &p(&golden().join("pred")),
        "--out",
        &p(&out_file),
    ]);
    assert_eq!(o.code, 0, "{}", o.err);
    assert!(o.out.is_empty());
    let text = std::fs::read_to_string(out_file).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split('|').map(str::trim).collect();
    assert!(row[2] != "-");
    assert!(row[5..].iter().all(|c| *c == "-"), "{row:?}");
}

#[test]
fn zero_mask_gets_four_no_change_captions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.png");
    ChangeMask::zeros(32, 32, Provenance::Predicted)
        .save_png(&path)
        .unwrap();
    let o = run(&["caption", "--mask", &p(&path), "--format", "record"]);
    assert_eq!(o.code, 0, "{}", o.err);
    let v: Value = serde_json::from_str(&o.out).unwrap();
    let caps = v["captions"].as_array().unwrap();
    assert_eq!(caps.len(), 4);
    assert_eq!(caps[0]["origin"], "rule_extent");
    assert!(caps[0]["text"].as_str().unwrap().contains("no"), "{}", caps[0]["text"]);
    assert_eq!(v["severity"], "none");
    assert_eq!(v["pair_id"], "zero");

    let table = run(&["caption", "--mask", &p(&path)]);
    assert_eq!(table.out.lines().count(), 4);
}

#[test]
fn detect_writes_mask_and_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let s = forest_pair(
        &SceneSpec::new(64, 64, vec![Rect::square(10, 10, 24)]).with_seed(2),
        "d",
    );
    let (a, b, m) = (
        dir.path().join("a.png"),
        dir.path().join("b.png"),
        dir.path().join("m.png"),
    );
    s.pair.epoch_a().save_png(&a).unwrap();
    s.pair.epoch_b().save_png(&b).unwrap();
    s.truth.save_png(&m).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "detect",
        "--a",
        &p(&a),
        "--b",
        &p(&b),
        "--mask",
        &p(&m),
        "--out",
        &p(&out),
        "--format",
        "record",
    ]);
    assert_eq!(o.code, 0, "{}", o.err);
    let v: Value = serde_json::from_str(&o.out).unwrap();
    assert!(v["seg"]["iou_c"].as_f64().unwrap() >= 95.0, "{v}");
    let mask = ChangeMask::load(out.join("mask.png"), Provenance::Predicted).unwrap();
    assert_eq!(
        mask.changed_pixels() as u64,
        v["stats"]["changed_pixels"].as_u64().unwrap()
    );
    assert!(out.join("overlay.png").exists());
}

fn fake_levir(root: &Path) -> String {
    let entries = [
        ("train", "p1.png", "many trees were cut down near the road", 2u8),
        ("train", "p2.png", "a new building appears", 1),
        ("val", "p3.png", "the forest has shrunk", 2),
        ("test", "p4.png", "roads were built", 1),
        ("test", "p5.png", "some woodland became a parking lot", 2),
    ];
    let mut images = Vec::new();
    for (i, (split, file, sentence, class)) in entries.iter().enumerate() {
        for sub in ["A", "B", "label"] {
            std::fs::create_dir_all(root.join("images").join(split).join(sub)).unwrap();
        }
        let labels: Vec<u8> = (0..256).map(|k| if k < 20 * (i + 1) { *class } else { 0 }).collect();
        ChangeMask::from_labels(16, 16, labels, Provenance::GroundTruth)
            .unwrap()
            .flagged_multiclass()
            .save_png(root.join("images").join(split).join("label").join(file))
            .unwrap();
        images.push(json!({
            "filename": file,
            "split": split,
            "sentences": [{"raw": sentence}, {"tokens": sentence.split(' ').collect::<Vec<_>>()}],
        }));
    }
    json!({"images": images}).to_string()
}

#[test]
fn subset_then_stats_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("levir");
    let captions = fake_levir(&root);
    let captions_path = dir.path().join("LevirCCcaptions.json");
    std::fs::write(&captions_path, &captions).unwrap();
    let manifest = dir.path().join("trees.json");

    let o = run(&[
        "subset",
        "--levir-cc",
        &p(&captions_path),
        "--data-root",
        &p(&root),
        "--out",
        &p(&manifest),
    ]);
    assert_eq!(o.code, 0, "{}", o.err);
    assert!(o.out.contains("discrepancy"), "{}", o.out);
    let o = run(&["stats", "--manifest", &p(&manifest), "--format", "record"]);
    assert_eq!(o.code, 0, "{}", o.err);
    let via_cli: Value = serde_json::from_str(&o.out).unwrap();

    let source = import_levir_cc(&captions, "levir-mci", &root, ".").unwrap();
    let (subset, _) = build_levir_trees_manifest(&source, &default_tree_keywords()).unwrap();
    let in_process = serde_json::to_value(corpus_statistics(&subset).unwrap()).unwrap();
    assert_eq!(via_cli, in_process);
    assert_eq!(via_cli["n_entries"], 3);
}

#[test]
fn stats_captions_only_works_without_images() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/forest_change/manifest.json");
    let o = run(&["stats", "--manifest", &p(&manifest), "--captions-only"]);
    assert_eq!(o.code, 0, "{}", o.err);
    assert!(o.out.contains("pairs (train)      270"), "{}", o.out);
    assert!(o.out.contains("pairs (val)        31"));
    assert!(o.out.contains("pairs (test)       33"));
    // full statistics need the images, which are not distributed
    assert_eq!(run(&["stats", "--manifest", &p(&manifest)]).code, 1);
}

#[test]
fn chat_is_deterministic_offline() {
    let dir = tempfile::tempdir().unwrap();
    let s = forest_pair(
        &SceneSpec::new(96, 96, vec![Rect::square(20, 20, 30)]).with_seed(8),
        "c",
    );
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    s.pair.epoch_a().save_png(&a).unwrap();
    s.pair.epoch_b().save_png(&b).unwrap();
    let args = ["chat", "--a", &p(&a), "--b", &p(&b), "--pair-id", "c1", "--transcript"];
    let script = "how much was lost\n\nwhere\nquit\n";
    let first = run_with_stdin(&args, script);
    let second = run_with_stdin(&args, script);
    assert_eq!(first.code, 0, "{}", first.err);
    assert_eq!(first.out, second.out);
    assert!(first.out.contains("[ok] detect_changes"), "{}", first.out);
    assert!(first.out.contains("upload: pair c1 (96x96)"), "{}", first.out);
    assert!(
        first.out.contains(&format!("{:.1} percent", s.change_percent())),
        "{}",
        first.out
    );
}

#[test]
fn chat_llm_without_configuration_is_a_domain_error() {
    if std::env::var_os("CANOPY_LLM_BASE_URL").is_some() {
        return;
    }
    let o = run(&["chat", "--planner", "llm"]);
    assert_eq!(o.code, 1, "{}", o.out);
}
