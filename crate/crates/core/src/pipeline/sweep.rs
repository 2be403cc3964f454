use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::sequence::{occlude_frame, Sequence};
use super::track::{
    AllFaceSource, NoScheduler, NullClock, PipelineConfig, ProbSource, Segmentation, Tracker,
    TrackerState,
};
use crate::facemodel::{image_center, project_landmarks, FaceRig, Landmarks2D};
use crate::image::{BinaryMask, PixelRect, RgbImage};
use crate::maskrefine::ProbabilityMap;
use crate::regressor::CascadeModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Occluder area as a fraction of the projected face box.
    pub coverages: Vec<f64>,
    pub pipeline: PipelineConfig,
    /// Face probability assigned to visible-face pixels by the mask source.
    pub confidence: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            coverages: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            pipeline: PipelineConfig {
                solve_identity: false,
                ..PipelineConfig::default()
            },
            confidence: 0.95,
        }
    }
}

/// Probabilities read from a known visible-face mask of the current frame.
#[derive(Debug, Clone)]
pub struct MaskSource {
    pub mask: BinaryMask,
    pub confidence: f64,
}

impl ProbSource for MaskSource {
    fn segment(&mut self, _: usize, crop: &RgbImage, rect: PixelRect) -> Result<Segmentation> {
        let (cw, ch) = crop.dims();
        let (w, h) = self.mask.dims();
        let p = self.confidence;
        ProbabilityMap::from_fn(cw, ch, |x, y| {
            let fx = rect.x as f64 + (x as f64 + 0.5) * rect.width as f64 / cw as f64;
            let fy = rect.y as f64 + (y as f64 + 0.5) * rect.height as f64 / ch as f64;
            let inside = fx >= 0.0 && fy >= 0.0 && (fx as usize) < w && (fy as usize) < h;
            if inside && self.mask.get(fx as usize, fy as usize) {
                p
            } else {
                1.0 - p
            }
        })
        .map(Segmentation::Probability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub coverage: f64,
    /// Mean landmark error over inter-ocular distance.
    pub masked: f64,
    pub unmasked: f64,
    pub masked_failures: usize,
    pub unmasked_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub frames: usize,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("coverage,masked,unmasked,masked_failures,unmasked_failures\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{}",
                r.coverage, r.masked, r.unmasked, r.masked_failures, r.unmasked_failures
            );
        }
        s
    }
}

/// Mean normalized landmark error of tracking one occluded sequence from its first
/// ground-truth frame, and the number of frames whose regression failed.
pub fn track_sequence_error(
    tracker: &mut Tracker<NoScheduler, NullClock>,
    seq: &Sequence,
    coverage: f64,
    use_mask: bool,
    confidence: f64,
) -> Result<(f64, usize)> {
    let first = seq.frames.first().ok_or(Error::Empty("sequence frames"))?;
    let (w, h) = first.image.dims();
    let c = image_center(w, h);
    let mut state = TrackerState::new(first.params.clone(), &tracker.rig, w, h)?;
    let mut total = 0.0;
    let mut failures = 0;
    for f in &seq.frames {
        let (img, visible, _) = occlude_frame(
            f,
            &tracker.rig,
            coverage,
            seq.occluder_anchor,
            seq.occluder_shade,
        )?;
        let res = if use_mask {
            let mut src = MaskSource {
                mask: visible,
                confidence,
            };
            tracker.track_frame(&img, &mut src, &mut state)?
        } else {
            tracker.track_frame(&img, &mut AllFaceSource, &mut state)?
        };
        failures += res.regression_failed as usize;
        let truth = project_landmarks(&f.params, &tracker.rig, c)?;
        let iod = tracker.rig.interocular_distance(truth.points());
        total += Landmarks2D(res.landmarks).mean_error(&truth) / iod;
    }
    Ok((total / seq.frames.len() as f64, failures))
}

/// Tracks every sequence under occluders of each coverage with the masked model
/// (fed visible-face masks) and the unmasked model (fed all-face masks).
pub fn evaluate_occlusion_sweep(
    masked: Arc<CascadeModel>,
    unmasked: Arc<CascadeModel>,
    rig: Arc<FaceRig>,
    sequences: &[Sequence],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if sequences.is_empty() || sequences.iter().any(|s| s.frames.is_empty()) {
        return Err(Error::Empty("ground-truth sequences"));
    }
    let mut tm = Tracker::new(
        rig.clone(),
        masked,
        cfg.pipeline.clone(),
        NoScheduler,
        NullClock,
    );
    let mut tu = Tracker::new(rig, unmasked, cfg.pipeline.clone(), NoScheduler, NullClock);
    let mut rows = Vec::with_capacity(cfg.coverages.len());
    for &cov in &cfg.coverages {
        if !(0.0..=1.0).contains(&cov) {
            return Err(Error::invalid(format!("coverage {cov} is outside [0, 1]")));
        }
        let mut row = SweepRow {
            coverage: cov,
            masked: 0.0,
            unmasked: 0.0,
            masked_failures: 0,
            unmasked_failures: 0,
        };
        for seq in sequences {
            let (e, f) = track_sequence_error(&mut tm, seq, cov, true, cfg.confidence)?;
            row.masked += e;
            row.masked_failures += f;
            let (e, f) = track_sequence_error(&mut tu, seq, cov, false, cfg.confidence)?;
            row.unmasked += e;
            row.unmasked_failures += f;
        }
        row.masked /= sequences.len() as f64;
        row.unmasked /= sequences.len() as f64;
        log::info!(
            "coverage {cov:.2}: masked {:.4}, unmasked {:.4}",
            row.masked,
            row.unmasked
        );
        rows.push(row);
    }
    Ok(SweepResult {
        rows,
        frames: sequences.iter().map(|s| s.frames.len()).sum(),
    })
}
