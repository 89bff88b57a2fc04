use boxsim_core::*;
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = CBox> {
    (0.0..512.0f64, 0.0..512.0f64, 1.0..64.0f64, 1.0..64.0f64)
        .prop_map(|(cx, cy, w, h)| CBox::new(cx, cy, w, h).unwrap())
}

fn arb_params() -> impl Strategy<Value = NormParams> {
    (0.05..5.0f64, 0.05..5.0f64).prop_map(|(m, n)| NormParams::manual(m, n).unwrap())
}

fn arb_mode() -> impl Strategy<Value = NormMode> {
    prop::sample::select(NormMode::ALL.to_vec())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn metric_ranges(g in arb_box(), a in arb_box(), p in arb_params(), mode in arb_mode()) {
        let s = simd_pair(&g, &a, &p, mode).unwrap();
        prop_assert!(s > 0.0 && s <= 1.0);
        let i = iou(&g, &a);
        prop_assert!((0.0..=1.0).contains(&i));
        for v in [dotd(&g, &a, 8.0).unwrap(), nwd(&g, &a, 12.8).unwrap(), rfd(&g, &a, 1.0).unwrap(), rfd(&g, &a, 2.5).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn identity(b in arb_box(), p in arb_params(), mode in arb_mode()) {
        prop_assert_eq!(simd_pair(&b, &b, &p, mode).unwrap(), 1.0);
        prop_assert_eq!(iou(&b, &b), 1.0);
        prop_assert_eq!(dotd(&b, &b, 3.0).unwrap(), 1.0);
        prop_assert_eq!(nwd(&b, &b, 3.0).unwrap(), 1.0);
        prop_assert_eq!(rfd(&b, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn simd_symmetry(g in arb_box(), a in arb_box(), p in arb_params(), mode in arb_mode()) {
        prop_assert_eq!(simd_pair(&g, &a, &p, mode).unwrap(), simd_pair(&a, &g, &p, mode).unwrap());
    }

    #[test]
    fn simd_translation_invariance(
        g in arb_box(), a in arb_box(), p in arb_params(),
        dx in -256.0..256.0f64, dy in -256.0..256.0f64,
    ) {
        let before = simd_pair(&g, &a, &p, NormMode::Both).unwrap();
        let after = simd_pair(&g.translated(dx, dy).unwrap(), &a.translated(dx, dy).unwrap(), &p, NormMode::Both).unwrap();
        prop_assert!(rel(before, after) <= 1e-12, "{before} vs {after}");
    }

    #[test]
    fn simd_scale_invariance(g in arb_box(), a in arb_box(), p in arb_params(), s in 0.01..100.0f64) {
        let before = simd_pair(&g, &a, &p, NormMode::Both).unwrap();
        let after = simd_pair(&g.scaled(s).unwrap(), &a.scaled(s).unwrap(), &p, NormMode::Both).unwrap();
        prop_assert!(rel(before, after) <= 1e-9);
    }

    #[test]
    fn simd_decreases_with_center_offset(
        g in arb_box(), w in 1.0..64.0f64, h in 1.0..64.0f64, p in arb_params(),
        d1 in 0.0..100.0f64, extra in 0.01..100.0f64,
    ) {
        let near = CBox::new(g.cx() + d1, g.cy(), w, h).unwrap();
        let far = CBox::new(g.cx() + d1 + extra, g.cy(), w, h).unwrap();
        prop_assert!(simd_pair(&g, &far, &p, NormMode::Both).unwrap() < simd_pair(&g, &near, &p, NormMode::Both).unwrap());
    }

    #[test]
    fn simd_one_only_for_identical(g in arb_box(), a in arb_box(), p in arb_params()) {
        if simd_pair(&g, &a, &p, NormMode::Both).unwrap() == 1.0 {
            prop_assert_eq!(g, a);
        }
    }

    #[test]
    fn simd_matrix_matches_scalar(
        gts in prop::collection::vec(arb_box(), 1..12),
        anchors in prop::collection::vec(arb_box(), 1..40),
        p in arb_params(), mode in arb_mode(),
    ) {
        let m = simd_matrix(&gts, &anchors, &p, mode).unwrap();
        for (i, g) in gts.iter().enumerate() {
            for (j, a) in anchors.iter().enumerate() {
                prop_assert_eq!(m.get(i, j).to_bits(), simd_pair(g, a, &p, mode).unwrap().to_bits());
            }
        }
    }
}

fn arb_anchor_spec() -> impl Strategy<Value = AnchorSpec> {
    (
        prop::collection::vec((1.0..40.0f64, 1.0..64.0f64), 1..4),
        prop::collection::vec(0.25..4.0f64, 1..3),
        prop::collection::vec(0.2..5.0f64, 1..4),
        0.0..1.0f64,
    )
        .prop_map(|(levels, scales, ratios, center_offset)| AnchorSpec {
            levels: levels
                .into_iter()
                .map(|(stride, base_size)| AnchorLevel { stride, base_size })
                .collect(),
            scales,
            ratios,
            center_offset,
        })
}

proptest! {
    #[test]
    fn anchor_grid_properties(spec in arb_anchor_spec(), w in 1.0..300.0f64, h in 1.0..300.0f64) {
        let grid = build_grid(&spec, (w, h)).unwrap();
        prop_assert_eq!(grid.per_level_counts.iter().sum::<usize>(), grid.len());

        // Direct enumeration of cells whose origin lies inside the image.
        let mut expected = 0usize;
        for level in &spec.levels {
            let cols = (0..).take_while(|i| (*i as f64) * level.stride < w).count();
            let rows = (0..).take_while(|j| (*j as f64) * level.stride < h).count();
            expected += cols * rows * spec.scales.len() * spec.ratios.len();
        }
        prop_assert_eq!(grid.len(), expected);

        let mut idx = 0;
        for (l, level) in spec.levels.iter().enumerate() {
            for a in grid.level(l) {
                prop_assert!(a.cx() >= 0.0 && a.cx() < w + level.stride && a.cy() >= 0.0);
                let scale = spec.scales[(idx / spec.ratios.len()) % spec.scales.len()];
                let side = level.base_size * scale;
                prop_assert!(rel(a.w() * a.h(), side * side) <= 1e-9);
                idx += 1;
            }
            idx = 0;
        }
        prop_assert_eq!(&grid, &build_grid(&spec, (w, h)).unwrap());
    }

    #[test]
    fn anchor_centers_inside_image(spec in arb_anchor_spec(), w in 1.0..300.0f64, h in 1.0..300.0f64) {
        let grid = build_grid(&spec, (w, h)).unwrap();
        for (l, level) in spec.levels.iter().enumerate() {
            let (nx, ny) = AnchorSpec::grid_dims(level, (w, h));
            for a in grid.level(l) {
                // The last cell may straddle the border; its center is within one stride.
                prop_assert!(a.cx() < nx as f64 * level.stride);
                prop_assert!(a.cy() < ny as f64 * level.stride);
                if spec.center_offset < 1.0 && nx as f64 * level.stride <= w {
                    prop_assert!(a.cx() < w);
                }
            }
        }
    }

    #[test]
    fn size_bucket_scale_equivariance(w in 0.5..100.0f64, h in 0.5..100.0f64, s in 0.1..10.0f64) {
        let b = CBox::new(0.0, 0.0, w, h).unwrap();
        let scaled = b.scaled(s).unwrap();
        prop_assert!(rel(scaled.scale(), s * b.scale()) <= 1e-12);
    }

    #[test]
    fn coco_round_trip(seed in 0u64..1000, objects in 0usize..8) {
        let set = synth_dataset(&SynthParams {
            images: 3,
            image_size: (200.0, 150.0),
            scale_range: (2.0, 40.0),
            objects_per_image: objects,
            seed,
        }).unwrap();
        let (back, summary) = parse_coco(&write_coco(&set, None)).unwrap();
        prop_assert!(!summary.has_warnings());
        prop_assert_eq!(back.gt_count(), set.gt_count());
        for (a, b) in set.all_boxes().zip(back.all_boxes()) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dotd_scale_order_invariant(seed in 0u64..1000) {
        let mut set = synth_dataset(&SynthParams {
            images: 4,
            image_size: (100.0, 100.0),
            scale_range: (1.0, 30.0),
            objects_per_image: 5,
            seed,
        }).unwrap();
        let before = dotd_scale(&set).unwrap();
        set.images.reverse();
        for img in &mut set.images {
            img.gts.reverse();
        }
        prop_assert!(rel(before, dotd_scale(&set).unwrap()) <= 1e-12);
    }
}

#[test]
fn ingested_boxes_are_valid() {
    let text = r#"{
        "images": [{"id": 1, "width": 10, "height": 10}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 1, 0, 0]},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [1, 1, -2, 3]},
            {"id": 3, "image_id": 1, "category_id": 1, "bbox": [1, 1, 2, 3]}
        ],
        "categories": [{"id": 1, "name": "a"}]
    }"#;
    let (set, summary) = parse_coco(text).unwrap();
    assert_eq!(summary.clamped, 2);
    for b in set.all_boxes() {
        assert!(b.w() > 0.0 && b.h() > 0.0);
        assert!(CBox::new(b.cx(), b.cy(), b.w(), b.h()).is_ok());
    }
}
