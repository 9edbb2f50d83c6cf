use std::time::Instant;

use canopy_core::analytics::{compare_masks, compute_stats};
use canopy_core::caption::{generate_rule_captions, severity_bucket, CaptionOrigin, Severity};
use canopy_core::metrics::iou_from_confusion;
use canopy_core::perception::{detect_changes, DetectionParams, DetectionWarning};
use canopy_core::raster::{ChangeMask, Provenance};
use canopy_core::synthetic::{forest_pair, Rect, SceneSpec};
use canopy_oracle::random;

fn scene(seed: u64) -> SceneSpec {
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
}

fn change_iou(spec: &SceneSpec) -> f64 {
    let s = forest_pair(spec, "syn");
    let d = detect_changes(&s.pair, &DetectionParams::default()).unwrap();
    let seg = iou_from_confusion(&compare_masks(&s.truth, &d.mask).unwrap()).unwrap();
    seg.iou_c.unwrap()
}

#[test]
fn noise_free_loss_is_recovered() {
    for seed in 0..3 {
        let iou = change_iou(&scene(seed));
        assert!(iou >= 95.0, "seed {seed}: IoU_c {iou:.2}");
    }
}

#[test]
fn noisy_loss_is_mostly_recovered() {
    for seed in 0..3 {
        let iou = change_iou(&scene(seed).with_noise(5.0));
        assert!(iou >= 80.0, "seed {seed}: IoU_c {iou:.2}");
    }
}

#[test]
fn illumination_shift_is_absorbed() {
    let iou = change_iou(&scene(4).with_illumination_shift(25));
    assert!(iou >= 90.0, "IoU_c {iou:.2}");
}

#[test]
fn unchanged_scene_reports_no_change() {
    let s = forest_pair(&SceneSpec::new(64, 64, vec![]), "still");
    let d = detect_changes(&s.pair, &DetectionParams::default()).unwrap();
    assert_eq!(s.pair.epoch_a(), s.pair.epoch_b());
    assert_eq!(d.mask.changed_pixels(), 0);
    assert_eq!(d.threshold, None);
    assert_eq!(d.warnings, [DetectionWarning::NoChangeDetected]);
}

#[test]
fn end_to_end_stays_within_budget() {
    let s = forest_pair(&scene(9).with_noise(5.0), "timed");
    let start = Instant::now();
    let d = detect_changes(&s.pair, &DetectionParams::default()).unwrap();
    let stats = compute_stats(&d.mask).unwrap();
    let caps = generate_rule_captions(&stats, "timed");
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(caps.captions.len(), 4);
    // one second is the optimized-build budget; unoptimized test builds get headroom
    let budget = if cfg!(debug_assertions) { 5.0 } else { 1.0 };
    assert!(elapsed < budget, "{elapsed:.3}s");
}

#[test]
fn rule_captions_follow_the_contract() {
    for seed in 0..50u64 {
        let density = [0.0, 0.002, 0.02, 0.1, 0.3, 0.7][seed as usize % 6];
        let grid = random::binary_grid(seed, 40, 30, density);
        let mask = ChangeMask::from_labels(40, 30, grid, Provenance::GroundTruth).unwrap();
        let stats = compute_stats(&mask).unwrap();
        let first = generate_rule_captions(&stats, "m");
        let second = generate_rule_captions(&compute_stats(&mask).unwrap(), "m");
        assert_eq!(first, second);
        assert_eq!(first.captions.len(), 4);
        let origins: Vec<CaptionOrigin> = first.captions.iter().map(|c| c.origin).collect();
        assert_eq!(origins, CaptionOrigin::RULES);

        let level = severity_bucket(stats.change_percent).unwrap();
        let extent = first.by_origin(CaptionOrigin::RuleExtent).unwrap();
        if level.name == Severity::None {
            assert!(!Severity::ALL[1..]
                .iter()
                .any(|s| extent.tokens.contains(&s.name().to_string())));
        } else {
            assert_eq!(extent.tokens[0], level.name.name(), "seed {seed}: {}", extent.text());
        }
    }
}
