use std::collections::BTreeSet;

use canopy_core::analytics::{compare_masks, compute_stats, label_components, percent, Connectivity};
use canopy_core::caption::{severity_bucket, Caption, CaptionOrigin, CaptionSet, Severity};
use canopy_core::dataset::{filter_tree_subset, Dataset, DatasetEntry};
use canopy_core::metrics::{bleu, cider_d, iou_from_confusion, meteor_lite, rouge_l};
use canopy_core::perception::{excess_green, morph, MorphOp};
use canopy_core::raster::{
    binarize_mask, render_comparison_overlay, resize_bilinear, ChangeMask, Provenance, Raster, COLOR_AGREEMENT,
    COLOR_FALSE_NEGATIVE, COLOR_FALSE_POSITIVE,
};
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = ChangeMask> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u8..=1, w * h)
            .prop_map(move |labels| ChangeMask::from_labels(w, h, labels, Provenance::GroundTruth).unwrap())
    })
}

fn mask_pair(max: usize) -> impl Strategy<Value = (ChangeMask, ChangeMask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(0u8..=1, w * h),
            prop::collection::vec(0u8..=1, w * h),
        )
            .prop_map(move |(a, b)| {
                (
                    ChangeMask::from_labels(w, h, a, Provenance::GroundTruth).unwrap(),
                    ChangeMask::from_labels(w, h, b, Provenance::Predicted).unwrap(),
                )
            })
    })
}

const WORDS: [&str; 6] = ["forest", "loss", "north", "the", "patch", "small"];

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(&WORDS[..]).prop_map(str::to_string), 1..8)
}

fn corpus() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<Vec<Vec<String>>>)> {
    prop::collection::vec((sentence(), prop::collection::vec(sentence(), 1..3)), 1..5)
        .prop_map(|pairs| pairs.into_iter().unzip())
}

fn subset(m: &ChangeMask, of: &ChangeMask) -> bool {
    m.labels().iter().zip(of.labels()).all(|(&a, &b)| a <= b)
}

proptest! {
    #[test]
    fn resize_to_same_size_is_identity(w in 1usize..12, h in 1usize..12, c in prop::sample::select(vec![1usize, 3]), seed in any::<u64>()) {
        let data: Vec<u8> = (0..w * h * c).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
        let r = Raster::new(w, h, c, data).unwrap();
        prop_assert_eq!(resize_bilinear(&r, w, h).unwrap(), r);
    }

    #[test]
    fn binarize_is_idempotent(m in mask_strategy(16)) {
        let once = binarize_mask(&m);
        prop_assert_eq!(binarize_mask(&once), once);
    }

    #[test]
    fn overlay_colors_count_the_confusion((gt, pred) in mask_pair(16)) {
        let base = Raster::filled(gt.width(), gt.height(), &[0, 0, 0]).unwrap();
        let overlay = render_comparison_overlay(&gt, &pred, &base).unwrap();
        let c = compare_masks(&gt, &pred).unwrap();
        let count = |color: [u8; 3]| overlay.data().chunks_exact(3).filter(|p| *p == color).count() as u64;
        prop_assert_eq!(count(COLOR_AGREEMENT), c.tp);
        prop_assert_eq!(count(COLOR_FALSE_POSITIVE), c.fp);
        prop_assert_eq!(count(COLOR_FALSE_NEGATIVE), c.fn_);
        prop_assert_eq!(count([0, 0, 0]), c.tn);
        prop_assert_eq!(c.total(), (gt.width() * gt.height()) as u64);
    }

    #[test]
    fn morphology_brackets_the_mask(m in mask_strategy(14), r in 0usize..3) {
        let erode = morph(&m, MorphOp::Erode, r).unwrap();
        let dilate = morph(&m, MorphOp::Dilate, r).unwrap();
        let open = morph(&m, MorphOp::Open, r).unwrap();
        prop_assert!(subset(&erode, &m));
        prop_assert!(subset(&m, &dilate));
        prop_assert!(subset(&open, &m));
    }

    #[test]
    fn closing_contains_mask_away_from_border(m in mask_strategy(14), r in 0usize..3) {
        // closing only grows the mask when nothing touches the zero padding
        let (w, h) = (m.width(), m.height());
        let labels: Vec<u8> = m.labels().iter().enumerate().map(|(i, &v)| {
            let (x, y) = (i % w, i / w);
            let inner = x >= r && y >= r && x + r < w && y + r < h;
            if inner { v } else { 0 }
        }).collect();
        let m = ChangeMask::from_labels(w, h, labels, Provenance::GroundTruth).unwrap();
        let close = morph(&m, MorphOp::Close, r).unwrap();
        prop_assert!(subset(&m, &close));
    }

    #[test]
    fn excess_green_ignores_brightness_scale(px in prop::collection::vec(0u8..=127, 3..=48)) {
        let n = px.len() / 3;
        let a = Raster::new(n, 1, 3, px[..n * 3].to_vec()).unwrap();
        let b = Raster::new(n, 1, 3, px[..n * 3].iter().map(|v| v * 2).collect()).unwrap();
        let (ga, gb) = (excess_green(&a).unwrap(), excess_green(&b).unwrap());
        prop_assert_eq!(ga.values(), gb.values());
    }

    #[test]
    fn caption_scores_stay_in_range((cands, refs) in corpus()) {
        for v in bleu(&cands, &refs, 4).unwrap() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((0.0..=1.0).contains(&rouge_l(&cands, &refs).unwrap()));
        prop_assert!((0.0..=1.0).contains(&meteor_lite(&cands, &refs).unwrap()));
        prop_assert!((0.0..=10.0 + 1e-9).contains(&cider_d(&cands, &refs).unwrap()));
    }

    #[test]
    fn identical_captions_score_perfectly(sents in prop::collection::vec(prop::collection::vec(prop::sample::select(&WORDS[..]).prop_map(str::to_string), 4..8), 1..4)) {
        let refs: Vec<Vec<Vec<String>>> = sents.iter().map(|s| vec![s.clone()]).collect();
        prop_assert!((bleu(&sents, &refs, 4).unwrap()[3] - 1.0).abs() < 1e-12);
        prop_assert!((rouge_l(&sents, &refs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_in_gt_and_pred((gt, pred) in mask_pair(12)) {
        let ab = iou_from_confusion(&compare_masks(&gt, &pred).unwrap()).unwrap();
        let ba = iou_from_confusion(&compare_masks(&pred, &gt).unwrap()).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=100.0).contains(&ab.miou));
    }

    #[test]
    fn patch_areas_sum_to_changed_pixels(m in mask_strategy(20)) {
        let four = label_components(&m, Connectivity::Four).unwrap();
        let eight = label_components(&m, Connectivity::Eight).unwrap();
        prop_assert_eq!(four.areas.iter().sum::<usize>(), m.changed_pixels());
        prop_assert_eq!(eight.areas.iter().sum::<usize>(), m.changed_pixels());
        prop_assert!(eight.num_components <= four.num_components);
        let stats = compute_stats(&m).unwrap();
        prop_assert_eq!(stats.num_patches, eight.num_components);
        prop_assert_eq!(stats.change_percent, percent(m.changed_pixels(), m.labels().len()));
    }

    #[test]
    fn severity_levels_partition_percentages(p in 0.0f64..=100.0) {
        let level = severity_bucket(p).unwrap();
        if p == 0.0 {
            prop_assert_eq!(level.name, Severity::None);
        } else {
            prop_assert!(level.lower < p && p <= level.upper);
        }
    }

    #[test]
    fn mask_png_round_trips(m in mask_strategy(16)) {
        let bytes = m.encode_png().unwrap();
        let back = ChangeMask::decode(&bytes, Provenance::GroundTruth).unwrap();
        prop_assert_eq!(back.labels(), m.labels());
    }
}

fn caption_dataset(captions: &[Vec<&str>]) -> Dataset {
    let entries = captions
        .iter()
        .enumerate()
        .map(|(i, words)| {
            let id = format!("p{i}");
            DatasetEntry {
                pair_id: id.clone(),
                a: format!("A/{id}.png").into(),
                b: format!("B/{id}.png").into(),
                mask: format!("label/{id}.png").into(),
                captions: CaptionSet {
                    pair_id: id,
                    captions: vec![Caption::new(&words.join(" "), CaptionOrigin::Human).unwrap()],
                },
                mask_domain: None,
            }
        })
        .collect();
    Dataset::new("prop", ".", ".", entries, Default::default()).unwrap()
}

fn ids(d: &Dataset) -> BTreeSet<String> {
    d.entries.iter().map(|e| e.pair_id.clone()).collect()
}

proptest! {
    #[test]
    fn keyword_filter_is_monotone_and_idempotent(
        caps in prop::collection::vec(prop::collection::vec(prop::sample::select(&["trees", "road", "forest", "house", "river"][..]), 1..5), 1..12),
        small in prop::collection::btree_set(prop::sample::select(&["trees", "road", "forest"][..]), 1..3),
        extra in prop::collection::btree_set(prop::sample::select(&["house", "river"][..]), 0..2),
    ) {
        let d = caption_dataset(&caps);
        let k1: BTreeSet<String> = small.iter().map(|s| s.to_string()).collect();
        let k2: BTreeSet<String> = k1.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect();
        let f1 = filter_tree_subset(&d, &k1).unwrap();
        let f2 = filter_tree_subset(&d, &k2).unwrap();
        prop_assert!(ids(&f1).is_subset(&ids(&f2)));
        prop_assert_eq!(ids(&filter_tree_subset(&f1, &k1).unwrap()), ids(&f1));
    }
}
