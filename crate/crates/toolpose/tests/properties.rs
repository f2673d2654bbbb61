//! Property tests for the invariants the modules promise.

use nalgebra::{Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use toolpose::camera::{Camera, Extrinsics, Intrinsics};
use toolpose::dataset::{
    format_labels, parse_labels, prune_dataset, LabelRecord, Mask, MaskPair, Raster,
};
use toolpose::metrics::{iou, oks, BpeAccumulator, BpeNorm, OksParams};
use toolpose::reconstruct::{Bbox, ToolClass};

fn rot_zyx(a: f64, b: f64, c: f64) -> Matrix3<f64> {
    let rz = Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(b.cos(), 0.0, b.sin(), 0.0, 1.0, 0.0, -b.sin(), 0.0, b.cos());
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c.cos(), -c.sin(), 0.0, c.sin(), c.cos());
    rz * ry * rx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn camera_ray_round_trip(
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
        c in -1.0f64..1.0,
        tx in -0.5f64..0.5,
        ty in -0.5f64..0.5,
        tz in 1.0f64..3.0,
        px in 0.0f64..640.0,
        py in 0.0f64..480.0,
        s in 0.2f64..5.0,
    ) {
        let cam = Camera::new(
            0,
            Intrinsics { fx: 600.0, fy: 580.0, cx: 320.0, cy: 240.0, width: 640, height: 480 },
            Extrinsics { rotation: rot_zyx(a, b, c), translation: Vector3::new(tx, ty, tz) },
        ).unwrap();
        let ray = cam.back_project_ray(&Vector2::new(px, py));
        prop_assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
        let point = ray.origin + ray.direction * s;
        let back = cam.project_point(&point).unwrap();
        prop_assert!((back - Vector2::new(px, py)).norm() < 1e-9);
        // And the point lies on the ray through its own projection.
        let ray2 = cam.back_project_ray(&back);
        prop_assert!(ray2.distance_to(&point) < 1e-9);
    }

    #[test]
    fn iou_is_symmetric_bounded_and_identity(
        ax in 0.0f64..100.0, ay in 0.0f64..100.0,
        aw in 0.5f64..50.0, ah in 0.5f64..50.0,
        bx in 0.0f64..100.0, by in 0.0f64..100.0,
        bw in 0.5f64..50.0, bh in 0.5f64..50.0,
    ) {
        let a = Bbox { x_min: ax, y_min: ay, x_max: ax + aw, y_max: ay + ah };
        let b = Bbox { x_min: bx, y_min: by, x_max: bx + bw, y_max: by + bh };
        let ab = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
        // 1.0 only for identical boxes.
        if ab == 1.0 {
            prop_assert!((ax - bx).abs() < 1e-12 && (ay - by).abs() < 1e-12);
        }
    }

    #[test]
    fn oks_bounded_monotone_and_scale_invariant(
        d1 in 0.0f64..30.0,
        d2 in 0.0f64..30.0,
        extra in 0.1f64..20.0,
        c in 0.2f64..8.0,
    ) {
        let bbox = Bbox { x_min: 0.0, y_min: 0.0, x_max: 50.0, y_max: 40.0 };
        let gt = vec![(Vector2::new(10.0, 10.0), 2u8), (Vector2::new(30.0, 20.0), 2u8)];
        let pred = vec![
            Vector2::new(10.0 + d1, 10.0),
            Vector2::new(30.0, 20.0 + d2),
        ];
        let params = OksParams::uniform(2, 0.05);
        let v = oks(&pred, &gt, &bbox, &params).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        // Non-increasing in each distance.
        let worse = vec![
            Vector2::new(10.0 + d1 + extra, 10.0),
            Vector2::new(30.0, 20.0 + d2),
        ];
        let w = oks(&worse, &gt, &bbox, &params).unwrap();
        prop_assert!(w <= v);
        // Invariant under global scale.
        let gt_s: Vec<_> = gt.iter().map(|(p, vis)| (p * c, *vis)).collect();
        let pred_s: Vec<_> = pred.iter().map(|p| p * c).collect();
        let bbox_s = Bbox { x_min: 0.0, y_min: 0.0, x_max: 50.0 * c, y_max: 40.0 * c };
        let vs = oks(&pred_s, &gt_s, &bbox_s, &params).unwrap();
        prop_assert!((v - vs).abs() < 1e-9);
    }

    #[test]
    fn bpe_scalings_share_one_accumulator(distances in prop::collection::vec(0.0f64..50.0, 1..40)) {
        let mut acc = BpeAccumulator::new();
        for (i, d) in distances.iter().enumerate() {
            let class = if i % 2 == 0 { ToolClass::Bean } else { ToolClass::Grasper };
            acc.add_pair(class, *d);
        }
        let report = acc.report(640, 480, BpeNorm::MeanDistance);
        for v in [&report.bean, &report.grasper, &report.aggregate] {
            prop_assert!((v.bpe_ppw * 640.0 - v.bpe_pd).abs() <= 1e-12 * v.bpe_pd.max(1.0));
            prop_assert!((v.bpe_pph * 480.0 - v.bpe_pd).abs() <= 1e-12 * v.bpe_pd.max(1.0));
        }
        prop_assert_eq!(report.aggregate.n_points, distances.len());
    }

    #[test]
    fn label_round_trip_at_six_decimals(
        raw in prop::collection::vec((0u32..2, 0u32..=1_000_000u32, 0u32..=1_000_000, 0u32..=1_000_000, 0u32..=1_000_000, 0u8..=2), 1..8)
    ) {
        // Values on the 1e-6 grid survive write∘read exactly.
        let records: Vec<LabelRecord> = raw.iter().map(|&(class, a, b, c, d, vis)| {
            let g = |v: u32| v as f64 / 1_000_000.0;
            LabelRecord {
                class_id: class,
                cx: g(a), cy: g(b), w: g(c), h: g(d),
                keypoints: [
                    (g(a), g(d), vis),
                    (g(b), g(c), 2),
                    (g(c), g(a), 0),
                    (g(d), g(b), 1),
                ],
            }
        }).collect();
        let parsed = parse_labels(&format_labels(&records)).unwrap();
        prop_assert_eq!(parsed, records);
    }

    #[test]
    fn prune_is_deterministic_with_exact_cardinality(
        n in 1usize..400,
        fraction in 0.01f64..1.0,
        seed in 0u64..1000,
    ) {
        let index: Vec<usize> = (0..n).collect();
        let a = prune_dataset(&index, fraction, seed).unwrap();
        let b = prune_dataset(&index, fraction, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), ((fraction * n as f64).ceil() as usize).min(n));
        // Subset of the input, unique, order-preserving.
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(&a, &sorted);
        prop_assert!(a.iter().all(|i| *i < n));
    }

    #[test]
    fn raster_round_trips(
        w in 1u32..12,
        h in 1u32..12,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
        let raster = Raster::from_pixels(w, h, pixels).unwrap();
        prop_assert_eq!(Raster::decode_ppm(&raster.encode_ppm()).unwrap(), raster);

        let bits: Vec<bool> = (0..w * h).map(|_| rng.gen()).collect();
        let mask = Mask::from_bits(w, h, bits).unwrap();
        prop_assert_eq!(Mask::decode_pgm(&mask.encode_pgm()).unwrap(), mask);
    }

    #[test]
    fn augmentation_partition_is_exact(
        seed in 0u64..500,
        w in 4u32..24,
        h in 4u32..24,
    ) {
        use rand::{Rng, SeedableRng};
        use toolpose::dataset::augment_sample;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Disjoint value ranges prove provenance per pixel.
        let img = Raster::from_pixels(w, h, (0..w * h * 3).map(|_| rng.gen_range(0..64)).collect()).unwrap();
        let bw = rng.gen_range(2..10);
        let bh = rng.gen_range(2..10);
        let bg = Raster::from_pixels(bw, bh, (0..bw * bh * 3).map(|_| rng.gen_range(100..164)).collect()).unwrap();
        let tw = rng.gen_range(2..8);
        let th = rng.gen_range(2..8);
        let tex = Raster::from_pixels(tw, th, (0..tw * th * 3).map(|_| rng.gen_range(200..=255)).collect()).unwrap();
        let mut object = Mask::new(w, h, false);
        let mut marker = Mask::new(w, h, false);
        for y in 0..h {
            for x in 0..w {
                if rng.gen_bool(0.5) {
                    object.set(x, y, true);
                    if rng.gen_bool(0.3) {
                        marker.set(x, y, true);
                    }
                }
            }
        }
        let masks = MaskPair::new(object.clone(), marker.clone()).unwrap();
        let out = augment_sample(&img, &masks, &bg, &tex, seed).unwrap();
        for y in 0..h {
            for x in 0..w {
                let v = out.get(x, y)[0];
                if marker.get(x, y) {
                    prop_assert!(v >= 200);
                } else if object.get(x, y) {
                    prop_assert_eq!(out.get(x, y), img.get(x, y));
                } else {
                    prop_assert!((100..164).contains(&v));
                }
            }
        }
    }
}
