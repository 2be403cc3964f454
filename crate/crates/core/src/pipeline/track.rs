use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::keyframes::{KeyframeConfig, KeyframeStore};
use crate::facemodel::{
    image_center, project_bbox, project_landmarks, FaceRig, ShapeParams, ShapeVector,
};
use crate::image::{bilinear_taps, BBox, BinaryMask, PixelRect, RgbImage};
use crate::maskrefine::{refine, ProbabilityMap, RefineConfig};
use crate::neuralseg::{infer_probability_map, NetworkGraph};
use crate::regressor::{regress, CascadeModel};
use crate::solvers::{solve_identity_focal, IdentityConfig, Keyframe};
use crate::{Error, Result};

/// Segmentation of one crop.
#[derive(Debug, Clone, PartialEq)]
pub enum Segmentation {
    /// Per-pixel face probability at crop resolution, refined by graph cut.
    Probability(ProbabilityMap),
    /// Every pixel is face; refinement is skipped.
    AllFace,
}

/// Where face probabilities come from.
pub trait ProbSource {
    fn segment(
        &mut self,
        frame_index: usize,
        crop: &RgbImage,
        rect: PixelRect,
    ) -> Result<Segmentation>;
}

/// Treats every pixel as face.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllFaceSource;

impl ProbSource for AllFaceSource {
    fn segment(&mut self, _: usize, _: &RgbImage, _: PixelRect) -> Result<Segmentation> {
        Ok(Segmentation::AllFace)
    }
}

/// The segmentation network.
#[derive(Debug, Clone)]
pub struct NetSource {
    pub net: Arc<NetworkGraph>,
}

impl ProbSource for NetSource {
    fn segment(&mut self, _: usize, crop: &RgbImage, _: PixelRect) -> Result<Segmentation> {
        infer_probability_map(&self.net, crop).map(Segmentation::Probability)
    }
}

/// Monotonic time in nanoseconds.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// A clock that never advances; timings read zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

/// Snapshot handed to the identity solver.
#[derive(Debug, Clone)]
pub struct IdentityJob {
    pub id: u64,
    pub rig: Arc<FaceRig>,
    pub keyframes: Vec<Keyframe>,
    pub identity: Vec<f64>,
    pub focal: f64,
    pub principal: [f64; 2],
    pub config: IdentityConfig,
}

/// A finished solve: the new `(u, f)` travel together.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityUpdate {
    pub job: u64,
    pub result: Result<(Vec<f64>, f64)>,
}

impl IdentityJob {
    pub fn run(&self) -> IdentityUpdate {
        let result = solve_identity_focal(
            &self.keyframes,
            &self.rig,
            &self.identity,
            self.focal,
            self.principal,
            &self.config,
        )
        .map(|s| (s.identity, s.focal));
        IdentityUpdate {
            job: self.id,
            result,
        }
    }
}

/// Runs identity solves somewhere and hands results back at frame boundaries.
pub trait IdentityScheduler {
    /// Starts a solve; returns `false` and drops the job when one is already running.
    fn submit(&mut self, job: IdentityJob) -> bool;
    /// A finished result, if any. Never blocks.
    fn poll(&mut self) -> Option<IdentityUpdate>;
    fn busy(&self) -> bool;
}

/// Solves on submission; the result is released at the next poll.
#[derive(Debug, Default)]
pub struct SyncScheduler {
    pending: Option<IdentityUpdate>,
}

impl IdentityScheduler for SyncScheduler {
    fn submit(&mut self, job: IdentityJob) -> bool {
        if self.pending.is_some() {
            return false;
        }
        self.pending = Some(job.run());
        true
    }

    fn poll(&mut self) -> Option<IdentityUpdate> {
        self.pending.take()
    }

    fn busy(&self) -> bool {
        self.pending.is_some()
    }
}

/// Never solves.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoScheduler;

impl IdentityScheduler for NoScheduler {
    fn submit(&mut self, _: IdentityJob) -> bool {
        false
    }

    fn poll(&mut self) -> Option<IdentityUpdate> {
        None
    }

    fn busy(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Side of the square segmentation crop.
    pub crop_size: usize,
    /// Fractional margin added around the previous projected mesh box.
    pub crop_margin: f64,
    pub refine: RefineConfig,
    pub keyframes: KeyframeConfig,
    pub identity: IdentityConfig,
    pub solve_identity: bool,
    /// Identity refreshes stop once a solve changes `(u, f)` by less than this, relatively.
    pub identity_convergence: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            crop_size: 128,
            crop_margin: 0.2,
            refine: RefineConfig::default(),
            keyframes: KeyframeConfig::default(),
            identity: IdentityConfig::default(),
            solve_identity: true,
            identity_convergence: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityStatus {
    Idle,
    Running(u64),
    /// Successive solves agreed; no further refreshes.
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub params: ShapeParams,
    /// Projected mesh box of the previous frame, clamped to the frame.
    pub bbox: BBox,
    /// Projected landmarks of the previous frame.
    pub landmarks: Vec<[f64; 2]>,
    pub keyframes: KeyframeStore,
    pub identity_status: IdentityStatus,
    pub frame: usize,
    next_job: u64,
}

fn clamp_box(b: BBox, w: usize, h: usize) -> BBox {
    let (w, h) = (w as f64, h as f64);
    BBox {
        min: [b.min[0].clamp(0.0, w), b.min[1].clamp(0.0, h)],
        max: [b.max[0].clamp(0.0, w), b.max[1].clamp(0.0, h)],
    }
}

impl TrackerState {
    /// Starts from known parameters, e.g. the ground truth of a synthetic run or a
    /// landmark fit on the first frame.
    pub fn new(params: ShapeParams, rig: &FaceRig, width: usize, height: usize) -> Result<Self> {
        params.validate()?;
        let c = image_center(width, height);
        let landmarks = project_landmarks(&params, rig, c)?.0;
        let bbox = clamp_box(project_bbox(&params, rig, c, 0.0)?, width, height);
        Ok(Self {
            params,
            bbox,
            landmarks,
            keyframes: KeyframeStore::default(),
            identity_status: IdentityStatus::Idle,
            frame: 0,
            next_job: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageTimings {
    pub segment_ns: u64,
    pub refine_ns: u64,
    pub regress_ns: u64,
    pub total_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: usize,
    pub shape: ShapeVector,
    pub params: ShapeParams,
    pub landmarks: Vec<[f64; 2]>,
    pub crop_rect: PixelRect,
    pub crop_mask: BinaryMask,
    pub frame_mask: BinaryMask,
    pub timings: StageTimings,
    /// The probability source failed and an all-face mask was used.
    pub segmentation_fallback: bool,
    /// Regression failed and the previous state was kept.
    pub regression_failed: bool,
    pub keyframe_admitted: bool,
    /// An identity and focal update was merged before this frame.
    pub identity_merged: bool,
    /// The crop was re-centered to contain the previous landmarks.
    pub recentered: bool,
}

/// Square crop around `bbox` grown by `margin`, re-centered when it would miss
/// any of `landmarks`.
pub fn crop_rect(bbox: &BBox, landmarks: &[[f64; 2]], margin: f64) -> (PixelRect, bool) {
    let make = |b: &BBox| {
        let side = b.width().max(b.height()).max(1.0) * (1.0 + margin);
        let c = b.center();
        let s = side.ceil() as usize;
        let x = (c[0] - 0.5 * s as f64).floor() as i64;
        let y = (c[1] - 0.5 * s as f64).floor() as i64;
        PixelRect::new(x, y, s, s)
    };
    let rect = make(bbox);
    if landmarks.iter().all(|p| rect.contains(p[0], p[1])) {
        return (rect, false);
    }
    let lb = BBox::around(landmarks).unwrap_or(*bbox);
    let union = BBox {
        min: [lb.min[0].min(bbox.min[0]), lb.min[1].min(bbox.min[1])],
        max: [lb.max[0].max(bbox.max[0]), lb.max[1].max(bbox.max[1])],
    };
    (make(&union), true)
}

/// Maps a crop-resolution mask back onto the frame; pixels outside `rect` are background.
pub fn paste_mask(crop: &BinaryMask, rect: PixelRect, width: usize, height: usize) -> BinaryMask {
    let (cw, ch) = crop.dims();
    let sx = cw as f64 / rect.width as f64;
    let sy = ch as f64 / rect.height as f64;
    let val = |x: usize, y: usize| if crop.get(x, y) { 1.0 } else { 0.0 };
    BinaryMask::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if !rect.contains(px, py) {
            return false;
        }
        let (x0, x1, fx) = bilinear_taps((px - rect.x as f64) * sx, cw);
        let (y0, y1, fy) = bilinear_taps((py - rect.y as f64) * sy, ch);
        let top = val(x0, y0) * (1.0 - fx) + val(x1, y0) * fx;
        let bottom = val(x0, y1) * (1.0 - fx) + val(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy >= 0.5
    })
}

fn relative_change(u0: &[f64], f0: f64, u1: &[f64], f1: f64) -> f64 {
    let du: f64 = u0
        .iter()
        .zip(u1)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let nu: f64 = u0.iter().map(|a| a * a).sum::<f64>().sqrt();
    (du / nu.max(1.0)).max((f1 - f0).abs() / f0.abs())
}

/// The per-frame loop over a fixed rig and regressor.
pub struct Tracker<S: IdentityScheduler, C: Clock> {
    pub rig: Arc<FaceRig>,
    pub model: Arc<CascadeModel>,
    pub config: PipelineConfig,
    pub scheduler: S,
    pub clock: C,
}

impl<S: IdentityScheduler, C: Clock> Tracker<S, C> {
    pub fn new(
        rig: Arc<FaceRig>,
        model: Arc<CascadeModel>,
        config: PipelineConfig,
        scheduler: S,
        clock: C,
    ) -> Self {
        Self {
            rig,
            model,
            config,
            scheduler,
            clock,
        }
    }

    fn merge_identity(&mut self, state: &mut TrackerState) -> bool {
        let Some(update) = self.scheduler.poll() else {
            return false;
        };
        if state.identity_status == IdentityStatus::Running(update.job) {
            state.identity_status = IdentityStatus::Idle;
        }
        match update.result {
            Ok((u, f)) => {
                let change = relative_change(&state.params.identity, state.params.focal, &u, f);
                state.params.identity = u;
                state.params.focal = f;
                if change < self.config.identity_convergence {
                    log::info!("identity converged (relative change {change:.2e})");
                    state.identity_status = IdentityStatus::Converged;
                }
                true
            }
            Err(e) => {
                log::warn!(
                    "identity solve {} failed, keeping the previous identity: {e}",
                    update.job
                );
                false
            }
        }
    }

    /// Admits `(params, landmarks)` as a keyframe when novel and starts a solve if idle.
    pub fn keyframe_update(
        &mut self,
        state: &mut TrackerState,
        params: &ShapeParams,
        landmarks: &[[f64; 2]],
        principal: [f64; 2],
    ) -> bool {
        let k = Keyframe::new(params, landmarks.to_vec());
        let admitted = state
            .keyframes
            .update(state.frame, k, &self.config.keyframes);
        if admitted
            && self.config.solve_identity
            && state.identity_status == IdentityStatus::Idle
            && !self.scheduler.busy()
        {
            let job = IdentityJob {
                id: state.next_job,
                rig: self.rig.clone(),
                keyframes: state.keyframes.snapshot(),
                identity: params.identity.clone(),
                focal: params.focal,
                principal,
                config: self.config.identity,
            };
            if self.scheduler.submit(job) {
                state.identity_status = IdentityStatus::Running(state.next_job);
                state.next_job += 1;
            }
        }
        admitted
    }

    /// Crop, segment, refine, regress from the previous shape, update the box and
    /// keyframes. Identity results are merged before anything else.
    pub fn track_frame(
        &mut self,
        frame: &RgbImage,
        source: &mut dyn ProbSource,
        state: &mut TrackerState,
    ) -> Result<FrameResult> {
        let t0 = self.clock.now_ns();
        let identity_merged = self.merge_identity(state);
        let (w, h) = frame.dims();
        let n = self.config.crop_size;
        let principal = image_center(w, h);

        let (rect, recentered) = crop_rect(&state.bbox, &state.landmarks, self.config.crop_margin);
        if recentered {
            log::info!(
                "frame {}: crop re-centered on the previous landmarks",
                state.frame
            );
        }
        let crop = frame.crop_resize(rect, n, n);
        let seg = source.segment(state.frame, &crop, rect);
        let t1 = self.clock.now_ns();
        let (crop_mask, frame_mask, fallback) = match seg {
            Ok(Segmentation::Probability(p)) => {
                let m = refine(&p, &crop.luma(), &self.config.refine)?;
                let fm = paste_mask(&m, rect, w, h);
                (m, fm, false)
            }
            Ok(Segmentation::AllFace) => (
                BinaryMask::new(n, n, true),
                BinaryMask::new(w, h, true),
                false,
            ),
            Err(e) => {
                log::warn!(
                    "frame {}: segmentation unavailable ({e}); using an all-face mask",
                    state.frame
                );
                (
                    BinaryMask::new(n, n, true),
                    BinaryMask::new(w, h, true),
                    true,
                )
            }
        };
        let t2 = self.clock.now_ns();

        let q0 = state.params.shape_vector();
        let gray = frame.luma();
        let out = regress(
            &gray,
            Some(&frame_mask),
            &q0,
            &self.model,
            &self.rig,
            &state.params.identity,
            state.params.focal,
        );
        let t3 = self.clock.now_ns();
        let projected = out.and_then(|o| {
            if o.failed {
                return Err(Error::invalid("regression could not project the shape"));
            }
            let p = o
                .shape
                .to_params(&state.params.identity, state.params.focal);
            let lm = project_landmarks(&p, &self.rig, principal)?.0;
            let bb = project_bbox(&p, &self.rig, principal, 0.0)?;
            Ok((o.shape, p, lm, bb))
        });
        let (shape, params, landmarks, regression_failed, admitted) = match projected {
            Ok((shape, params, landmarks, bb)) => {
                state.bbox = clamp_box(bb, w, h);
                let admitted = self.keyframe_update(state, &params, &landmarks, principal);
                state.params = params.clone();
                state.landmarks = landmarks.clone();
                (shape, params, landmarks, false, admitted)
            }
            Err(e) => {
                log::warn!("frame {}: {e}; holding the previous state", state.frame);
                (
                    q0,
                    state.params.clone(),
                    state.landmarks.clone(),
                    true,
                    false,
                )
            }
        };
        let result = FrameResult {
            frame: state.frame,
            shape,
            params,
            landmarks,
            crop_rect: rect,
            crop_mask,
            frame_mask,
            timings: StageTimings {
                segment_ns: t1 - t0,
                refine_ns: t2 - t1,
                regress_ns: t3 - t2,
                total_ns: self.clock.now_ns() - t0,
            },
            segmentation_fallback: fallback,
            regression_failed,
            keyframe_admitted: admitted,
            identity_merged,
            recentered,
        };
        state.frame += 1;
        Ok(result)
    }
}
