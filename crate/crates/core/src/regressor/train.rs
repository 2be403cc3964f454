use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::features::sample_feature_points_with;
use super::{landmarks_for, CascadeConfig, CascadeModel, Fern, Stage, TrainingSample};
use crate::facemodel::{FaceRig, ShapeVector};
use crate::image::clamp_pixel;
use crate::rng::seeded;
use crate::{Error, Result};

/// Training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// `Σ‖Q^g ⊖ Q‖²` over the training set before the first stage and after each stage.
    pub stage_errors: Vec<f64>,
    /// Levels where every candidate pair had a constant difference.
    pub degenerate_levels: usize,
}

struct Workspace {
    n: usize,
    p: usize,
    dim: usize,
    /// `n × p`, sample-major.
    features: Vec<f32>,
    /// The same values `p × n`, feature-major.
    by_feature: Vec<f32>,
    off_face: Vec<u32>,
}

fn block_scales(residuals: &[f64], n: usize, dim: usize, expressions: usize) -> Vec<f64> {
    let blocks = [0..3, 3..6, 6..6 + expressions, 6 + expressions..dim];
    let mut scale = vec![1.0; dim];
    for b in blocks {
        if b.is_empty() {
            continue;
        }
        let count = (n * b.len()) as f64;
        let mut mean = 0.0;
        for i in 0..n {
            mean += residuals[i * dim + b.start..i * dim + b.end]
                .iter()
                .sum::<f64>();
        }
        mean /= count;
        let mut var = 0.0;
        for i in 0..n {
            var += residuals[i * dim + b.start..i * dim + b.end]
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>();
        }
        let sd = (var / count).sqrt();
        let sd = if sd > 1e-12 { sd } else { 1.0 };
        scale[b].iter_mut().for_each(|s| *s = sd);
    }
    scale
}

/// Trains the cascade. Each stage draws fresh feature points, reads one
/// feature vector per sample at the stage's starting shape, then fits `K`
/// ferns in sequence, each on the residuals left by the previous one.
pub fn train_cascade(
    samples: &[TrainingSample],
    rig: &FaceRig,
    cfg: &CascadeConfig,
) -> Result<(CascadeModel, TrainReport)> {
    cfg.validate()?;
    let n = samples.len();
    let bins = 1usize << cfg.depth;
    if n < bins {
        return Err(Error::InsufficientSamples {
            needed: bins,
            got: n,
        });
    }
    let dim = ShapeVector::len_for(rig.expression_count(), rig.landmark_count());
    for s in samples {
        s.check(rig)?;
    }
    let mut rng = seeded(cfg.seed);
    let mut current: Vec<ShapeVector> = samples.iter().map(|s| s.initial.clone()).collect();
    let mut residuals = vec![0.0; n * dim];
    for (i, s) in samples.iter().enumerate() {
        residuals[i * dim..(i + 1) * dim].copy_from_slice(&s.target.difference(&current[i]));
    }
    let total = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut report = TrainReport {
        stage_errors: vec![total(&residuals)],
        degenerate_levels: 0,
    };
    let bases = samples
        .iter()
        .map(|s| rig.landmark_basis(&s.identity))
        .collect::<Result<Vec<_>>>()?;

    let p = cfg.features;
    let mut ws = Workspace {
        n,
        p,
        dim,
        features: vec![0.0; n * p],
        by_feature: vec![0.0; n * p],
        off_face: vec![0; p],
    };
    let mut stages = Vec::with_capacity(cfg.stages);
    let mut coords = Vec::with_capacity(p);
    let mut delta = vec![0.0; dim];

    for t in 0..cfg.stages {
        let points =
            sample_feature_points_with(rig.mean_landmarks(), p, cfg.feature_sigma, &mut rng)?;
        ws.off_face.iter_mut().for_each(|v| *v = 0);
        for (i, s) in samples.iter().enumerate() {
            let lm = landmarks_for(&current[i], &bases[i], s.focal, s.principal())?;
            points.decode_into(&lm, &mut coords);
            let (w, h) = s.image.dims();
            let row = &mut ws.features[i * p..(i + 1) * p];
            for (k, c) in coords.iter().enumerate() {
                let (x, y) = clamp_pixel(c[0], c[1], w, h);
                if s.mask.get(x, y) {
                    row[k] = s.image.get(x, y) as f32;
                } else {
                    row[k] = 0.0;
                    ws.off_face[k] += 1;
                }
            }
        }
        for i in 0..n {
            for k in 0..p {
                ws.by_feature[k * n + i] = ws.features[i * p + k];
            }
        }
        let stats = FeatureStats::new(&ws);
        let allowed: Vec<bool> = (0..p)
            .map(|k| {
                !cfg.exclude_offface_pairs
                    || (ws.off_face[k] as f64) <= cfg.offface_limit * n as f64
            })
            .collect();
        let scale = block_scales(&residuals, n, dim, rig.expression_count());

        let mut ferns = Vec::with_capacity(cfg.ferns);
        for _ in 0..cfg.ferns {
            let (fern, degenerate) =
                fit_fern(&ws, &stats, &allowed, &residuals, &scale, cfg, &mut rng);
            report.degenerate_levels += degenerate;
            for i in 0..n {
                let b = fern.bin_index(&ws.features[i * p..(i + 1) * p]);
                for (d, &v) in delta.iter_mut().zip(fern.bin(b)) {
                    *d = v as f64;
                }
                current[i].compose_in_place(&delta);
                let r = &mut residuals[i * dim..(i + 1) * dim];
                r[..3].copy_from_slice(&samples[i].target.rotation_difference(&current[i]));
                for (rv, dv) in r[3..].iter_mut().zip(&delta[3..]) {
                    *rv -= dv;
                }
            }
            ferns.push(fern);
        }
        report.stage_errors.push(total(&residuals));
        log::debug!(
            "cascade stage {t}: training error {:.6e}",
            report.stage_errors[t + 1]
        );
        stages.push(Stage { points, ferns });
    }
    let model = CascadeModel {
        config: cfg.clone(),
        expressions: rig.expression_count(),
        landmarks: rig.landmark_count(),
        stages,
    };
    Ok((model, report))
}

struct FeatureStats {
    /// Per-pair `1 / sd(f_a − f_b)`, `0` for constant differences; `p × p`.
    inv_sd: Vec<f32>,
}

impl FeatureStats {
    fn new(ws: &Workspace) -> Self {
        let (n, p) = (ws.n, ws.p);
        let mut mean = vec![0.0f64; p];
        for i in 0..n {
            for (m, &v) in mean.iter_mut().zip(&ws.features[i * p..(i + 1) * p]) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<f64> = (0..n * p)
            .map(|k| ws.features[k] as f64 - mean[k % p])
            .collect();
        let mut cov = vec![0.0f64; p * p];
        for i in 0..n {
            let row = &centered[i * p..(i + 1) * p];
            for a in 0..p {
                let va = row[a];
                if va == 0.0 {
                    continue;
                }
                let dst = &mut cov[a * p..a * p + p];
                for (c, &vb) in dst[a..].iter_mut().zip(&row[a..]) {
                    *c += va * vb;
                }
            }
        }
        let mut inv_sd = vec![0.0f32; p * p];
        for a in 0..p {
            for b in a + 1..p {
                let var = (cov[a * p + a] + cov[b * p + b] - 2.0 * cov[a * p + b]) / n as f64;
                let v = if var > 1e-9 {
                    (1.0 / var.sqrt()) as f32
                } else {
                    0.0
                };
                inv_sd[a * p + b] = v;
                inv_sd[b * p + a] = v;
            }
        }
        Self { inv_sd }
    }
}

fn fit_fern(
    ws: &Workspace,
    stats: &FeatureStats,
    allowed: &[bool],
    residuals: &[f64],
    scale: &[f64],
    cfg: &CascadeConfig,
    rng: &mut crate::rng::Rng,
) -> (Fern, usize) {
    let (n, p, dim, depth) = (ws.n, ws.p, ws.dim, cfg.depth);
    // Random unit directions in the block-normalized residual space.
    let mut dirs = vec![0.0f64; depth * dim];
    for l in 0..depth {
        let d = &mut dirs[l * dim..(l + 1) * dim];
        d.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (v, s) in d.iter_mut().zip(scale) {
            *v /= norm * s;
        }
    }
    let mut proj = vec![0.0f32; n * depth];
    let mut proj_mean = vec![0.0f64; depth];
    for i in 0..n {
        let r = &residuals[i * dim..(i + 1) * dim];
        for l in 0..depth {
            let v = dot64(r, &dirs[l * dim..(l + 1) * dim]);
            proj[i * depth + l] = v as f32;
            proj_mean[l] += v;
        }
    }
    for l in 0..depth {
        proj_mean[l] /= n as f64;
    }
    for i in 0..n {
        for l in 0..depth {
            proj[i * depth + l] -= proj_mean[l] as f32;
        }
    }
    let (pairs, degenerate) = choose_pairs(ws, stats, allowed, &proj, depth);
    let mut thresholds = Vec::with_capacity(depth);
    for pair in &pairs {
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for i in 0..n {
            let d = ws.features[i * p + pair[0] as usize] - ws.features[i * p + pair[1] as usize];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        thresholds.push(if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            hi
        });
    }

    let bins = 1usize << depth;
    let mut fern = Fern {
        pairs,
        thresholds,
        bins: vec![0.0; bins * dim],
        dim,
    };
    let mut sums = vec![0.0f64; bins * dim];
    let mut counts = vec![0usize; bins];
    for i in 0..n {
        let b = fern.bin_index(&ws.features[i * p..(i + 1) * p]);
        counts[b] += 1;
        for (s, r) in sums[b * dim..(b + 1) * dim]
            .iter_mut()
            .zip(&residuals[i * dim..(i + 1) * dim])
        {
            *s += r;
        }
    }
    for b in 0..bins {
        let denom = counts[b] as f64 + cfg.shrinkage;
        if denom > 0.0 {
            for (o, s) in fern.bins[b * dim..(b + 1) * dim]
                .iter_mut()
                .zip(&sums[b * dim..(b + 1) * dim])
            {
                *o = (s / denom) as f32;
            }
        }
    }
    (fern, degenerate)
}

/// Dot product with eight independent accumulators so it vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().sum::<f32>() + tail
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// For each level `l`, the allowed pair `(a, b)` whose difference `f_a − f_b`
/// has the largest absolute correlation with column `l` of the centered
/// targets `proj` (`n × depth`). Returns the pairs and the number of levels
/// with no usable pair.
fn choose_pairs(
    ws: &Workspace,
    stats: &FeatureStats,
    allowed: &[bool],
    proj: &[f32],
    depth: usize,
) -> (Vec<[u16; 2]>, usize) {
    let (n, p) = (ws.n, ws.p);
    // cov(f_k, s_l) up to the common 1/n factor; `s` is centered.
    let mut cols = vec![0.0f32; depth * n];
    for i in 0..n {
        for l in 0..depth {
            cols[l * n + i] = proj[i * depth + l];
        }
    }
    let mut cov = vec![0.0f32; p * depth];
    for k in 0..p {
        let f = &ws.by_feature[k * n..(k + 1) * n];
        for l in 0..depth {
            cov[k * depth + l] = dot(f, &cols[l * n..(l + 1) * n]);
        }
    }

    let mut pairs: Vec<[u16; 2]> = Vec::with_capacity(depth);
    let mut degenerate = 0;
    for l in 0..depth {
        let mut best = (-1.0f32, 0usize, 1usize);
        for a in 0..p {
            if !allowed[a] {
                continue;
            }
            let ca = cov[a * depth + l];
            let inv = &stats.inv_sd[a * p..(a + 1) * p];
            for b in a + 1..p {
                if !allowed[b] || inv[b] == 0.0 {
                    continue;
                }
                let score = (ca - cov[b * depth + l]).abs() * inv[b];
                if score > best.0 && !pairs.contains(&[a as u16, b as u16]) {
                    best = (score, a, b);
                }
            }
        }
        if best.0 < 0.0 {
            degenerate += 1;
            log::debug!("fern level {l}: no pair with a non-constant difference");
            // Any unused pair; its difference is constant so it never splits.
            let fallback = (0..p)
                .flat_map(|a| (a + 1..p).map(move |b| [a as u16, b as u16]))
                .find(|q| !pairs.contains(q))
                .unwrap_or([0, 1]);
            best = (0.0, fallback[0] as usize, fallback[1] as usize);
        }
        pairs.push([best.1 as u16, best.2 as u16]);
    }

    (pairs, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn workspace(features: Vec<f32>, n: usize, p: usize, dim: usize) -> Workspace {
        let mut by_feature = vec![0.0; n * p];
        for i in 0..n {
            for k in 0..p {
                by_feature[k * n + i] = features[i * p + k];
            }
        }
        Workspace {
            n,
            p,
            dim,
            features,
            by_feature,
            off_face: vec![0; p],
        }
    }

    #[test]
    fn single_level_fern_stores_shrunk_cluster_means() {
        // Pair (0, 1) differs by 0 for the first cluster and 10 for the second.
        let feats = vec![0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 10.0, 0.0];
        let ws = workspace(feats, 4, 2, 2);
        let stats = FeatureStats::new(&ws);
        let residuals = [1.0, -2.0, 3.0, 0.0, 5.0, 1.0, 7.0, 3.0];
        let cfg = CascadeConfig {
            depth: 1,
            features: 2,
            shrinkage: 1000.0,
            ..CascadeConfig::default()
        };
        let (fern, degenerate) = fit_fern(
            &ws,
            &stats,
            &[true, true],
            &residuals,
            &[1.0, 1.0],
            &cfg,
            &mut seeded(1),
        );
        assert_eq!(degenerate, 0);
        assert_eq!(fern.pairs, vec![[0, 1]]);
        assert!(fern.thresholds[0] > 0.0 && fern.thresholds[0] <= 10.0);
        // Cluster means (2, -1) and (6, 2), each scaled by 2 / (2 + 1000).
        let k = 2.0 / 1002.0;
        let expect = [2.0 * k, -1.0 * k, 6.0 * k, 2.0 * k];
        for (b, e) in fern.bins.iter().zip(expect) {
            assert!((*b as f64 - e).abs() < 1e-7, "{b} vs {e}");
        }
    }

    #[test]
    fn zero_residuals_give_zero_bins() {
        let mut rng = seeded(2);
        let (n, p, dim) = (40, 12, 5);
        let feats: Vec<f32> = (0..n * p).map(|_| rng.random_range(0.0..255.0)).collect();
        let ws = workspace(feats, n, p, dim);
        let stats = FeatureStats::new(&ws);
        let cfg = CascadeConfig {
            depth: 3,
            features: p,
            ..CascadeConfig::default()
        };
        let (fern, _) = fit_fern(
            &ws,
            &stats,
            &[true; 12],
            &vec![0.0; n * dim],
            &[1.0; 5],
            &cfg,
            &mut rng,
        );
        assert!(fern.bins.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pair_variance_matches_direct_formula() {
        let mut rng = seeded(3);
        let (n, p) = (30, 6);
        let feats: Vec<f32> = (0..n * p).map(|_| rng.random_range(0.0..255.0)).collect();
        let ws = workspace(feats.clone(), n, p, 1);
        let stats = FeatureStats::new(&ws);
        for a in 0..p {
            for b in 0..p {
                if a == b {
                    continue;
                }
                let d: Vec<f64> = (0..n)
                    .map(|i| feats[i * p + a] as f64 - feats[i * p + b] as f64)
                    .collect();
                let m = d.iter().sum::<f64>() / n as f64;
                let sd = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
                let got = stats.inv_sd[a * p + b] as f64;
                assert!((got * sd - 1.0).abs() < 1e-5);
            }
        }
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn chosen_pairs_maximize_correlation() {
        let mut rng = seeded(4);
        let (n, p, depth) = (60, 10, 3);
        let feats: Vec<f32> = (0..n * p).map(|_| rng.random_range(0.0..255.0)).collect();
        let mut proj: Vec<f32> = (0..n * depth)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        for l in 0..depth {
            let m = (0..n).map(|i| proj[i * depth + l]).sum::<f32>() / n as f32;
            (0..n).for_each(|i| proj[i * depth + l] -= m);
        }
        let ws = workspace(feats.clone(), n, p, 1);
        let stats = FeatureStats::new(&ws);
        let mut allowed = vec![true; p];
        allowed[3] = false;
        let (pairs, degenerate) = choose_pairs(&ws, &stats, &allowed, &proj, depth);
        assert_eq!(degenerate, 0);
        for (l, pair) in pairs.iter().enumerate() {
            let s: Vec<f64> = (0..n).map(|i| proj[i * depth + l] as f64).collect();
            let corr = |a: usize, b: usize| {
                let d: Vec<f64> = (0..n)
                    .map(|i| feats[i * p + a] as f64 - feats[i * p + b] as f64)
                    .collect();
                pearson(&d, &s).abs()
            };
            let mut best = 0.0f64;
            for a in 0..p {
                for b in a + 1..p {
                    if allowed[a] && allowed[b] && !pairs[..l].contains(&[a as u16, b as u16]) {
                        best = best.max(corr(a, b));
                    }
                }
            }
            assert!(!pair.contains(&3));
            assert!(corr(pair[0] as usize, pair[1] as usize) >= best * (1.0 - 1e-4));
        }
    }

    #[test]
    fn constant_features_are_degenerate() {
        let ws = workspace(vec![7.0; 20 * 4], 20, 4, 2);
        let stats = FeatureStats::new(&ws);
        let proj: Vec<f32> = (0..20).map(|i| i as f32 - 9.5).collect();
        let (pairs, degenerate) = choose_pairs(&ws, &stats, &[true; 4], &proj, 1);
        assert_eq!(degenerate, 1);
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn block_scales_normalize_each_block() {
        // Two samples, one expression, one landmark: dim = 9.
        let r = [
            1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 0.5, 3.0, 3.0, //
            -1.0, -1.0, -1.0, -10.0, -10.0, -10.0, -0.5, -3.0, -3.0,
        ];
        let s = block_scales(&r, 2, 9, 1);
        assert_eq!(s, vec![1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 0.5, 3.0, 3.0]);
    }
}
