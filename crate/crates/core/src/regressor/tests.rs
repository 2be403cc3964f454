use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::augment::{
    gen_synthetic_dataset, regression_training_set, PerturbRanges, RenderConfig, SyntheticSample,
};
use crate::facemodel::project_landmarks;
use crate::facemodel::toy::{toy_rig, ToyRigConfig};
use crate::rng::seeded;
use proptest::prelude::*;
use rand::Rng as _;

fn rig() -> FaceRig {
    toy_rig(&ToyRigConfig {
        grid: 11,
        expressions: 4,
        identities: 3,
        landmarks: 20,
        seed: 17,
    })
    .unwrap()
}

fn mean_vertices(rig: &FaceRig) -> Vec<[f64; 2]> {
    rig.mean_landmarks().to_vec()
}

#[test]
fn vertex_encodes_as_unit_weight() {
    let rig = rig();
    let v = mean_vertices(&rig);
    let tris = triangulate(&v).unwrap();
    for (k, p) in v.iter().enumerate() {
        let fp = FeaturePointSet::encode(*p, &v, &tris).unwrap();
        let t = tris[fp.triangle as usize];
        let slot = t
            .iter()
            .position(|&i| i as usize == k)
            .expect("incident triangle");
        for (j, w) in fp.weights.iter().enumerate() {
            let e = if j == slot { 1.0 } else { 0.0 };
            assert!((w - e).abs() < 1e-12);
        }
    }
}

#[test]
fn feature_samples_center_on_the_unit_square() {
    let rig = rig();
    let set = sample_feature_points(rig.mean_landmarks(), 400, &mut seeded(12)).unwrap();
    assert_eq!(set.len(), 400);
    let pts = set.decode(rig.mean_landmarks());
    let mean = pts
        .iter()
        .fold([0.0; 2], |a, p| [a[0] + p[0] / 400.0, a[1] + p[1] / 400.0]);
    assert!(
        (mean[0] - 0.5).abs() < 0.03 && (mean[1] - 0.5).abs() < 0.03,
        "{mean:?}"
    );
    assert!(pts
        .iter()
        .all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
    for fp in &set.points {
        assert!((fp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn collinear_landmarks_are_rejected() {
    let line: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 2.0 * i as f64]).collect();
    assert!(matches!(
        triangulate(&line),
        Err(Error::DegenerateTriangulation(_))
    ));
    assert!(sample_feature_points(&line[..2], 10, &mut seeded(1)).is_err());
}

proptest! {
    #[test]
    fn encode_decode_round_trip(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let rig = rig();
        let v = mean_vertices(&rig);
        let set = FeaturePointSet::from_points(&[[x, y]], &v).unwrap();
        let back = set.decode(&v)[0];
        prop_assert!((back[0] - x).abs() < 1e-12 && (back[1] - y).abs() < 1e-12);
    }

    #[test]
    fn features_follow_similarity_transforms(
        s in 0.5..2.0f64, angle in -3.1..3.1f64, tx in -50.0..50.0f64, ty in -50.0..50.0f64, seed in 0u64..1000,
    ) {
        let rig = rig();
        let v = mean_vertices(&rig);
        let set = sample_feature_points(&v, 50, &mut seeded(seed)).unwrap();
        let (sn, cs) = angle.sin_cos();
        let tf = |p: [f64; 2]| [s * (cs * p[0] - sn * p[1]) + tx, s * (sn * p[0] + cs * p[1]) + ty];
        let moved: Vec<[f64; 2]> = v.iter().map(|p| tf(*p)).collect();
        for (a, b) in set.decode(&moved).iter().zip(set.decode(&v)) {
            let e = tf(b);
            prop_assert!((a[0] - e[0]).abs() < 1e-9 && (a[1] - e[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn bin_index_stays_in_range(depth in 1usize..8, seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let p = 20;
        let fern = Fern {
            pairs: (0..depth).map(|_| [rng.random_range(0..p as u16), rng.random_range(0..p as u16)]).collect(),
            thresholds: (0..depth).map(|_| rng.random_range(-255.0..255.0)).collect(),
            bins: vec![0.0; (1 << depth) * 3],
            dim: 3,
        };
        let feats: Vec<f32> = (0..p).map(|_| rng.random_range(0.0..255.0)).collect();
        prop_assert!(fern.bin_index(&feats) < fern.bin_count());
        prop_assert_eq!(fern.bin_count(), 1 << depth);
    }
}

/// Shape vector whose projected landmarks are exactly `target`, using offsets.
fn shape_through(
    rig: &FaceRig,
    target: &[[f64; 2]],
    focal: f64,
    principal: [f64; 2],
) -> (ShapeVector, Vec<f64>) {
    let mut s = ShapeParams::neutral(
        rig.expression_count(),
        rig.landmark_count(),
        rig.identity_count(),
        3.0,
        focal,
    );
    let bare = project_landmarks(&s, rig, principal).unwrap();
    for ((d, t), b) in s.displacement.iter_mut().zip(target).zip(bare.points()) {
        *d = [t[0] - b[0], t[1] - b[1]];
    }
    (s.shape_vector(), s.identity.clone())
}

#[test]
fn localization_with_mean_landmarks_returns_the_samples() {
    let rig = rig();
    let size = 128.0;
    let pts: Vec<[f64; 2]> = {
        let mut rng = seeded(5);
        (0..30)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect()
    };
    let set = FeaturePointSet::from_points(&pts, rig.mean_landmarks()).unwrap();
    let scaled: Vec<[f64; 2]> = rig
        .mean_landmarks()
        .iter()
        .map(|p| [p[0] * size, p[1] * size])
        .collect();
    let c = [64.0, 64.0];
    let (q, u) = shape_through(&rig, &scaled, 200.0, c);
    let got = localize_features(&q, &set, &rig, &u, 200.0, c).unwrap();
    for (g, p) in got.iter().zip(&pts) {
        assert!((g[0] - p[0] * size).abs() < 1e-9 && (g[1] - p[1] * size).abs() < 1e-9);
    }

    // Shifting every landmark by (dx, dy) shifts every feature by the same amount.
    let shifted: Vec<[f64; 2]> = scaled.iter().map(|p| [p[0] + 3.5, p[1] - 7.25]).collect();
    let (q2, _) = shape_through(&rig, &shifted, 200.0, c);
    let moved = localize_features(&q2, &set, &rig, &u, 200.0, c).unwrap();
    for (m, g) in moved.iter().zip(&got) {
        assert!((m[0] - g[0] - 3.5).abs() < 1e-9 && (m[1] - g[1] + 7.25).abs() < 1e-9);
    }
}

#[test]
fn extraction_reads_nearest_pixels_and_respects_the_mask() {
    let mut rng = seeded(6);
    let img = GrayImage::from_fn(20, 15, |x, y| (x * 7 + y * 13) as f64 % 256.0);
    let coords: Vec<[f64; 2]> = (0..200)
        .map(|_| [rng.random_range(-5.0..25.0), rng.random_range(-5.0..20.0)])
        .collect();
    let plain = extract_features(&img, None, &coords);
    let all = extract_features(&img, Some(&BinaryMask::new(20, 15, true)), &coords);
    assert_eq!(plain, all);
    for (v, c) in plain.iter().zip(&coords) {
        let x = (c[0].floor().max(0.0) as usize).min(19);
        let y = (c[1].floor().max(0.0) as usize).min(14);
        assert_eq!(*v, img.get(x, y));
    }
    let none = extract_features(&img, Some(&BinaryMask::new(20, 15, false)), &coords);
    assert!(none.iter().all(|v| *v == 0.0));

    let mask = BinaryMask::from_fn(20, 15, |_, _| rng.random_bool(0.5));
    let zeroed = img.masked(&mask).unwrap();
    assert_eq!(
        extract_features(&img, Some(&mask), &coords),
        extract_features(&zeroed, None, &coords)
    );
}

fn faces(rig: &FaceRig, count: usize, seed: u64) -> Vec<SyntheticSample> {
    gen_synthetic_dataset(rig, count, &RenderConfig::default(), seed).unwrap()
}

fn small_cfg() -> CascadeConfig {
    CascadeConfig {
        stages: 4,
        ferns: 40,
        depth: 4,
        features: 60,
        ..CascadeConfig::default()
    }
}

fn training_set(rig: &FaceRig) -> Vec<TrainingSample> {
    let f = faces(rig, 12, 40);
    regression_training_set(
        &f,
        rig,
        &PerturbRanges::default().with_counts(3, 1),
        None,
        2,
    )
    .unwrap()
}

#[test]
fn zero_residuals_train_an_identity_cascade() {
    let rig = rig();
    let mut set = training_set(&rig);
    for s in &mut set {
        s.initial = s.target.clone();
    }
    let (model, report) = train_cascade(&set, &rig, &small_cfg()).unwrap();
    assert!(model
        .stages
        .iter()
        .flat_map(|s| &s.ferns)
        .all(|f| f.bins.iter().all(|v| *v == 0.0)));
    assert!(report.stage_errors.iter().all(|e| *e < 1e-20));
}

#[test]
fn training_error_never_increases_and_zeroed_model_is_identity() {
    let rig = rig();
    let set = training_set(&rig);
    let (model, report) = train_cascade(&set, &rig, &small_cfg()).unwrap();
    assert_eq!(model.stages.len(), 4);
    assert!(model
        .stages
        .iter()
        .all(|s| s.ferns.len() == 40 && s.points.len() == 60));
    for w in report.stage_errors.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", report.stage_errors);
    }
    assert!(report.stage_errors.last().unwrap() < &(0.9 * report.stage_errors[0]));

    let zero = model.zeroed();
    for s in set.iter().take(5) {
        let out = regress(
            &s.image,
            Some(&s.mask),
            &s.initial,
            &zero,
            &rig,
            &s.identity,
            s.focal,
        )
        .unwrap();
        assert!(!out.failed);
        assert_eq!(out.stages_completed, 4);
        let d = out.shape.difference(&s.initial);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn regression_is_deterministic_and_ignores_masked_pixels() {
    let rig = rig();
    let set = training_set(&rig);
    let cfg = small_cfg();
    let (a, _) = train_cascade(&set, &rig, &cfg).unwrap();
    let (b, _) = train_cascade(&set, &rig, &cfg).unwrap();
    assert_eq!(a, b);

    let s = &set[3];
    let run = |img: &GrayImage| {
        regress(
            img,
            Some(&s.mask),
            &s.initial,
            &a,
            &rig,
            &s.identity,
            s.focal,
        )
        .unwrap()
    };
    let first = run(&s.image);
    assert_eq!(first, run(&s.image));
    let mut rng = seeded(9);
    let mut other = s.image.clone();
    for y in 0..other.height() {
        for x in 0..other.width() {
            if !s.mask.get(x, y) {
                other.set(x, y, rng.random_range(0.0..255.0));
            }
        }
    }
    assert_ne!(other, s.image);
    assert_eq!(first, run(&other));
}

#[test]
fn single_sample_residual_shrinks_geometrically() {
    let rig = rig();
    let base = training_set(&rig).swap_remove(1);
    // One distinct sample, repeated to meet the 2^F minimum of a depth-1 fern.
    let set = vec![base.clone(), base.clone()];
    let r0: f64 = base
        .target
        .difference(&base.initial)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    assert!(r0 > 1e-3);
    for (beta, stages, ferns) in [(1000.0, 2, 50), (10.0, 3, 50)] {
        let cfg = CascadeConfig {
            stages,
            ferns,
            depth: 1,
            features: 20,
            shrinkage: beta,
            ..CascadeConfig::default()
        };
        let (model, _) = train_cascade(&set, &rig, &cfg).unwrap();
        let out = regress(
            &base.image,
            Some(&base.mask),
            &base.initial,
            &model,
            &rig,
            &base.identity,
            base.focal,
        )
        .unwrap();
        let r: f64 = base
            .target
            .difference(&out.shape)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        // Each fern removes the fraction 2 / (2 + β) of the remaining residual.
        let predicted = r0 * (beta / (2.0 + beta)).powi((stages * ferns) as i32);
        assert!(
            (r - predicted).abs() < 1e-3 * r0 + 1e-5,
            "β {beta}: {r} vs {predicted}"
        );
    }
}

#[test]
fn cascade_rejects_bad_inputs() {
    let rig = rig();
    let set = training_set(&rig);
    let few = &set[..8];
    assert!(matches!(
        train_cascade(few, &rig, &small_cfg()),
        Err(Error::InsufficientSamples { .. })
    ));
    let empty = CascadeModel {
        config: small_cfg(),
        expressions: 4,
        landmarks: 20,
        stages: Vec::new(),
    };
    let s = &set[0];
    assert_eq!(
        regress(
            &s.image,
            None,
            &s.initial,
            &empty,
            &rig,
            &s.identity,
            s.focal
        ),
        Err(Error::Untrained)
    );
}

#[test]
fn projection_failure_returns_last_good_shape() {
    let rig = rig();
    let set = training_set(&rig);
    let (model, _) = train_cascade(&set, &rig, &small_cfg()).unwrap();
    let s = &set[0];
    let mut bad = s.initial.clone();
    let mut delta = vec![0.0; bad.len()];
    delta[5] = -10.0; // pushes the face behind the camera
    bad.compose_in_place(&delta);
    let out = regress(&s.image, None, &bad, &model, &rig, &s.identity, s.focal).unwrap();
    assert!(out.failed);
    assert_eq!(out.stages_completed, 0);
    assert_eq!(out.shape.translation(), bad.translation());
}
