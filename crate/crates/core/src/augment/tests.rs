use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::facemodel::toy::{toy_rig, ToyRigConfig};
use crate::facemodel::{project_bbox, project_landmarks, ShapeParams};
use crate::image::{BBox, BinaryMask, GrayImage, PixelRect, RgbImage};
use crate::regressor::TrainingSample;
use crate::rng::seeded;
use proptest::prelude::*;

fn small_rig() -> FaceRig {
    toy_rig(&ToyRigConfig {
        grid: 9,
        expressions: 4,
        identities: 3,
        landmarks: 16,
        seed: 5,
    })
    .unwrap()
}

fn truth(rig: &FaceRig) -> ShapeParams {
    let cfg = RenderConfig::default();
    random_shape(rig, &cfg, &mut seeded(11))
}

#[test]
fn default_counts_give_35_variants() {
    let rig = small_rig();
    let s = truth(&rig);
    let out = perturb_shape(&s, &PerturbRanges::default(), &mut seeded(1));
    assert_eq!(out.len(), 35);
    let count = |g| out.iter().filter(|p| p.group == g).count();
    assert_eq!(count(PerturbGroup::Expression), 15);
    for g in [
        PerturbGroup::Rotation,
        PerturbGroup::Translation,
        PerturbGroup::Identity,
        PerturbGroup::Focal,
    ] {
        assert_eq!(count(g), 5);
    }
    assert_eq!(dataset_size(14_460, &PerturbRanges::default()), 506_100);
}

#[test]
fn zero_ranges_copy_the_truth() {
    let rig = small_rig();
    let s = truth(&rig);
    let q = s.shape_vector();
    for p in perturb_shape(&s, &PerturbRanges::zero(), &mut seeded(2)) {
        assert_eq!(p.shape, q);
        assert_eq!(p.identity, s.identity);
        assert_eq!(p.focal, s.focal);
    }
}

#[test]
fn perturbation_touches_one_group_and_stays_in_range() {
    let rig = small_rig();
    let mut s = truth(&rig);
    s.expression[0] = 0.0;
    s.expression[1] = 1.0;
    let q = s.shape_vector();
    let r = PerturbRanges::default();
    let out = perturb_shape(&s, &r, &mut seeded(3));
    for p in &out {
        let d = p.shape.difference(&q);
        assert!(p.shape.expression().iter().all(|v| (0.0..=1.0).contains(v)));
        let rot = d[..3].iter().map(|v| v * v).sum::<f64>().sqrt();
        let changed_t = d[3..6].iter().any(|v| *v != 0.0);
        let changed_x = d[p.shape.expression_range()].iter().any(|v| *v != 0.0);
        match p.group {
            PerturbGroup::Expression => assert!(rot < 1e-12 && !changed_t),
            PerturbGroup::Rotation => {
                assert!(rot <= r.rotation * 3f64.sqrt() + 1e-12 && !changed_t && !changed_x)
            }
            PerturbGroup::Translation => {
                let h = r.translation * s.translation.z;
                assert!(d[3..6].iter().all(|v| v.abs() <= h + 1e-12));
                assert!(rot < 1e-12 && !changed_x);
            }
            PerturbGroup::Identity => {
                assert!(d.iter().all(|v| v.abs() < 1e-12));
                assert!(p
                    .identity
                    .iter()
                    .zip(&s.identity)
                    .all(|(a, b)| (a - b).abs() <= r.identity));
            }
            PerturbGroup::Focal => {
                assert!(d.iter().all(|v| v.abs() < 1e-12));
                assert!((p.focal / s.focal - 1.0).abs() <= r.focal + 1e-12);
            }
        }
    }
}

#[test]
fn perturbation_is_seeded() {
    let rig = small_rig();
    let s = truth(&rig);
    let r = PerturbRanges::default();
    assert_eq!(
        perturb_shape(&s, &r, &mut seeded(9)),
        perturb_shape(&s, &r, &mut seeded(9))
    );
    assert_ne!(
        perturb_shape(&s, &r, &mut seeded(9)),
        perturb_shape(&s, &r, &mut seeded(10))
    );
}

#[test]
fn retargeted_shape_projects_onto_true_landmarks() {
    let rig = small_rig();
    let s = truth(&rig);
    let c = [64.0, 64.0];
    let u: Vec<f64> = s.identity.iter().map(|v| v + 0.4).collect();
    let f = s.focal * 1.1;
    let q = retarget(&s, &rig, &u, f, c).unwrap();
    let a = project_landmarks(&s, &rig, c).unwrap();
    let b = project_landmarks(&q.to_params(&u, f), &rig, c).unwrap();
    assert!(a.mean_error(&b) < 1e-9);
}

#[test]
fn full_rectangle_clears_the_mask_and_empty_one_changes_nothing() {
    let mut img = RgbImage::filled(10, 8, [5.0, 6.0, 7.0]);
    let mut mask = BinaryMask::new(10, 8, true);
    paint_occlusion(
        &mut img,
        &mut mask,
        PixelRect::new(0, 0, 10, 8),
        [1.0, 2.0, 3.0],
    );
    assert_eq!(mask.face_count(), 0);
    assert!(img.as_slice().iter().all(|p| *p == [1.0, 2.0, 3.0]));

    let mut img = RgbImage::filled(10, 8, [5.0, 6.0, 7.0]);
    let mut mask = BinaryMask::new(10, 8, true);
    let (i0, m0) = (img.clone(), mask.clone());
    paint_occlusion(
        &mut img,
        &mut mask,
        PixelRect::new(3, 3, 0, 4),
        [1.0, 2.0, 3.0],
    );
    assert_eq!((img, mask), (i0, m0));
}

#[test]
fn segmentation_rectangles_follow_configured_sizes() {
    let cfg = SegOcclusionConfig::default();
    let mut rng = seeded(4);
    let mut fractions = Vec::new();
    for _ in 0..100 {
        let mut img = RgbImage::filled(128, 128, [100.0; 3]);
        let mut mask = BinaryMask::new(128, 128, true);
        let r = occlusion_rect_segmentation(&mut img, &mut mask, &cfg, &mut rng);
        for side in [r.width, r.height] {
            let f = side as f64 / 128.0;
            assert!(f >= cfg.min_fraction - 0.5 / 128.0 && f <= cfg.max_fraction + 0.5 / 128.0);
            fractions.push(f);
        }
        assert!(
            r.x >= 0 && r.y >= 0 && r.x as usize + r.width <= 128 && r.y as usize + r.height <= 128
        );
        assert_eq!(mask.face_count(), 128 * 128 - r.area());
        let painted = img.get(r.x as usize, r.y as usize);
        assert!((0..r.height)
            .all(|dy| (0..r.width)
                .all(|dx| img.get(r.x as usize + dx, r.y as usize + dy) == painted)));
    }
    // Uniform side fractions: mean 0.35, sd ≈ 0.144, so the mean of 200 sits within ±0.03.
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!((mean - 0.35).abs() < 0.03, "mean side fraction {mean}");
    let lo = fractions.iter().filter(|f| **f < 0.35).count();
    assert!((70..=130).contains(&lo));
}

fn rendered_training_sample(rig: &FaceRig, seed: u64) -> TrainingSample {
    let cfg = RenderConfig {
        noise_std: 0.0,
        ..RenderConfig::default()
    };
    let face = synthetic_sample(rig, &cfg, seed, 0).unwrap();
    let q = face.params.shape_vector();
    TrainingSample {
        image: face.image,
        mask: face.mask,
        initial: q.clone(),
        target: q,
        identity: face.params.identity.clone(),
        focal: face.params.focal,
    }
}

#[test]
fn crop_limits() {
    let rig = small_rig();
    let s = rendered_training_sample(&rig, 1);
    let face = project_bbox(
        &s.target.to_params(&s.identity, s.focal),
        &rig,
        s.principal(),
        0.0,
    )
    .unwrap();
    let c = face.center();

    let b = crop_box(&face, c, [0.0, 0.0], 0.8);
    let mut t = s.clone();
    apply_crop(&mut t, &b);
    assert_eq!(t, s);

    let b = crop_box(&face, c, [1.0, 1.0], 0.8);
    assert!((b.width() - 0.8 * face.width()).abs() < 1e-12);
    assert!((b.height() - 0.8 * face.height()).abs() < 1e-12);
    let mut t = s.clone();
    apply_crop(&mut t, &b);
    for y in 0..128 {
        for x in 0..128 {
            let inside = b.contains([x as f64 + 0.5, y as f64 + 0.5]);
            let hit = inside && (x as f64 + 0.5) < b.max[0] && (y as f64 + 0.5) < b.max[1];
            if hit {
                assert!(!t.mask.get(x, y) && t.image.get(x, y) == 0.0);
            } else {
                assert_eq!(t.mask.get(x, y), s.mask.get(x, y));
                assert_eq!(t.image.get(x, y), s.image.get(x, y));
            }
        }
    }
}

#[test]
fn crop_occlusion_never_adds_face_pixels() {
    let rig = small_rig();
    let s = rendered_training_sample(&rig, 2);
    let mut rng = seeded(6);
    let mut removed = 0;
    for _ in 0..1000 {
        let t = occlusion_crop_regression(&s, &rig, &CropConfig::default(), &mut rng).unwrap();
        assert!(t.mask.is_subset_of(&s.mask));
        assert_eq!(
            (&t.initial, &t.target, &t.identity, t.focal),
            (&s.initial, &s.target, &s.identity, s.focal)
        );
        removed += s.mask.face_count() - t.mask.face_count();
    }
    assert!(removed > 0);
}

#[test]
fn regression_set_adds_one_crop_per_pair() {
    let rig = small_rig();
    let cfg = RenderConfig::default();
    let faces = gen_synthetic_dataset(&rig, 3, &cfg, 8).unwrap();
    let r = PerturbRanges::default().with_counts(2, 1);
    let plain = regression_training_set(&faces, &rig, &r, None, 1).unwrap();
    let crop = regression_training_set(&faces, &rig, &r, Some(&CropConfig::default()), 1).unwrap();
    assert_eq!(plain.len(), 3 * 6);
    assert_eq!(crop.len(), 2 * plain.len());
    for pair in crop.chunks(2) {
        assert!(pair[1].mask.is_subset_of(&pair[0].mask));
        assert_eq!(pair[0].target, pair[1].target);
    }
}

fn gray(w: usize, h: usize, v: f64) -> GrayImage {
    GrayImage::filled(w, h, v)
}

#[test]
fn transparent_layer_leaves_background() {
    let fg = RgbImage::filled(6, 6, [200.0; 3]);
    let mut bg = RgbImage::from_fn(6, 6, |x, y| [x as f64, y as f64, 7.0]);
    let mut mask = BinaryMask::new(6, 6, true);
    let (b0, m0) = (bg.clone(), mask.clone());
    composite(
        &fg,
        &gray(6, 6, 0.0),
        &mut bg,
        &mut mask,
        &Similarity::identity(),
    )
    .unwrap();
    assert_eq!((bg, mask), (b0, m0));
}

#[test]
fn opaque_layer_replaces_background() {
    let fg = RgbImage::from_fn(6, 5, |x, y| [x as f64 * 10.0, y as f64 * 3.0, 1.0]);
    let mut bg = RgbImage::filled(6, 5, [50.0; 3]);
    let mut mask = BinaryMask::new(6, 5, true);
    assert!(composite(
        &fg,
        &gray(6, 5, 1.0),
        &mut bg,
        &mut mask,
        &Similarity::identity()
    )
    .unwrap());
    assert_eq!(bg, fg);
    assert_eq!(mask.face_count(), 0);
}

#[test]
fn half_alpha_is_a_lerp() {
    let fg = RgbImage::from_fn(4, 4, |x, y| [x as f64 * 20.0, 100.0, y as f64 * 9.0]);
    let bg0 = RgbImage::from_fn(4, 4, |x, y| [y as f64, 30.0 + x as f64, 255.0]);
    let mut bg = bg0.clone();
    let mut mask = BinaryMask::new(4, 4, true);
    composite(
        &fg,
        &gray(4, 4, 0.5),
        &mut bg,
        &mut mask,
        &Similarity::identity(),
    )
    .unwrap();
    for y in 0..4 {
        for x in 0..4 {
            let (f, b, o) = (fg.get(x, y), bg0.get(x, y), bg.get(x, y));
            for k in 0..3 {
                assert!((o[k] - (0.5 * f[k] + 0.5 * b[k])).abs() < 1e-12);
            }
        }
    }
    // alpha = 0.5 is not above the threshold.
    assert_eq!(mask.face_count(), 16);
}

#[test]
fn translated_layer_lands_where_expected() {
    let fg = RgbImage::filled(2, 2, [9.0; 3]);
    let mut bg = RgbImage::filled(6, 6, [0.0; 3]);
    let mut mask = BinaryMask::new(6, 6, true);
    let tf = Similarity {
        scale: 1.0,
        angle: 0.0,
        translation: [3.0, 1.0],
    };
    composite(&fg, &gray(2, 2, 1.0), &mut bg, &mut mask, &tf).unwrap();
    for y in 0..6 {
        for x in 0..6 {
            let inside = (3..5).contains(&x) && (1..3).contains(&y);
            assert_eq!(bg.get(x, y)[0] == 9.0, inside);
            assert_eq!(mask.get(x, y), !inside);
        }
    }
    let p = [0.3, 1.7];
    let q = tf.inverse_apply(tf.apply(p));
    assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
}

#[test]
fn layer_outside_passes_through() {
    let fg = RgbImage::filled(4, 4, [9.0; 3]);
    let mut bg = RgbImage::filled(6, 6, [1.0; 3]);
    let mut mask = BinaryMask::new(6, 6, true);
    let tf = Similarity {
        scale: 1.0,
        angle: 0.3,
        translation: [100.0, 100.0],
    };
    let b0 = bg.clone();
    assert!(!composite(&fg, &gray(4, 4, 1.0), &mut bg, &mut mask, &tf).unwrap());
    assert_eq!(bg, b0);
    assert!(composite(&fg, &gray(4, 4, 2.0), &mut bg, &mut mask, &tf).is_err());
}

#[test]
fn noise_free_rendering_is_deterministic_and_shares_projection() {
    let rig = small_rig();
    let s = truth(&rig);
    let bg = random_background(128, 128, &mut seeded(3));
    let a = render_face(&s, &rig, &bg).unwrap();
    let b = render_face(&s, &rig, &bg).unwrap();
    assert_eq!(a, b);
    // Off-face pixels show the untouched background.
    for y in 0..128 {
        for x in 0..128 {
            if !a.1.get(x, y) {
                assert_eq!(a.0.get(x, y), bg.get(x, y));
            }
        }
    }
    let cfg = RenderConfig {
        noise_std: 0.0,
        ..RenderConfig::default()
    };
    let x = synthetic_sample(&rig, &cfg, 4, 2).unwrap();
    let y = synthetic_sample(&rig, &cfg, 4, 2).unwrap();
    assert_eq!(x, y);
    assert!(x.params.displacement.iter().all(|d| *d == [0.0, 0.0]));
    let lm = project_landmarks(&x.params, &rig, [64.0, 64.0]).unwrap();
    let again = project_landmarks(&y.params, &rig, [64.0, 64.0]).unwrap();
    assert_eq!(lm, again);
}

#[test]
fn footprint_contains_every_landmark() {
    let rig = toy_rig(&ToyRigConfig::default()).unwrap();
    let cfg = RenderConfig::default();
    for s in gen_synthetic_dataset(&rig, 500, &cfg, 21).unwrap() {
        let lm = project_landmarks(&s.params, &rig, [64.0, 64.0]).unwrap();
        for p in lm.points() {
            assert!(
                p[0] >= 0.0 && p[1] >= 0.0 && p[0] < 128.0 && p[1] < 128.0,
                "landmark off frame"
            );
            assert!(
                s.mask.get(p[0] as usize, p[1] as usize),
                "sample {} landmark {p:?}",
                s.index
            );
        }
    }
}

#[test]
fn dataset_streams_are_order_independent() {
    let rig = small_rig();
    let cfg = RenderConfig::default();
    assert!(gen_synthetic_dataset(&rig, 0, &cfg, 1).unwrap().is_empty());
    let five = gen_synthetic_dataset(&rig, 5, &cfg, 1).unwrap();
    let two = gen_synthetic_dataset(&rig, 2, &cfg, 1).unwrap();
    assert_eq!(&five[..2], &two[..]);
    assert_ne!(five[0].image, five[1].image);
}

#[test]
fn negatives_have_no_face_pixels() {
    let pool = vec![RgbImage::from_fn(40, 30, |x, y| [x as f64, y as f64, 3.0])];
    let cfg = NegativeConfig::default();
    let a = negative_samples(&pool, 12, 32, 32, &cfg, &mut seeded(1)).unwrap();
    assert_eq!(a.len(), 12);
    assert!(a
        .iter()
        .all(|(img, m)| m.face_count() == 0 && img.dims() == (32, 32)));
    assert_eq!(
        a,
        negative_samples(&pool, 12, 32, 32, &cfg, &mut seeded(1)).unwrap()
    );
    assert_eq!(
        balanced_negatives(&pool, 7, 32, 32, &cfg, &mut seeded(2))
            .unwrap()
            .len(),
        7
    );
    assert!(negative_samples(&[], 1, 8, 8, &cfg, &mut seeded(1)).is_err());
}

proptest! {
    #[test]
    fn crops_shrink_masks(cx in 0.0..128.0f64, cy in 0.0..128.0f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let mut s = TrainingSample {
            image: GrayImage::filled(128, 128, 10.0),
            mask: BinaryMask::from_fn(128, 128, |x, y| (x + y) % 3 != 0),
            initial: ShapeParams::neutral(1, 3, 1, 3.0, 200.0).shape_vector(),
            target: ShapeParams::neutral(1, 3, 1, 3.0, 200.0).shape_vector(),
            identity: vec![0.0],
            focal: 200.0,
        };
        let before = s.mask.clone();
        let face = BBox { min: [30.0, 20.0], max: [90.0, 110.0] };
        apply_crop(&mut s, &crop_box(&face, [cx, cy], [a, b], 0.8));
        prop_assert!(s.mask.is_subset_of(&before));
    }
}
