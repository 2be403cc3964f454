use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::solvers::Keyframe;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeConfig {
    /// Most keyframes kept.
    pub capacity: usize,
    /// Weight of the expression distance against the rotation angle.
    pub alpha: f64,
    /// A frame is admitted when its novelty exceeds this.
    pub threshold: f64,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            capacity: 20,
            alpha: 1.0,
            threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredKeyframe {
    pub frame: usize,
    pub keyframe: Keyframe,
}

/// Bounded set of frames with distinct pose or expression.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyframeStore {
    pub entries: Vec<StoredKeyframe>,
}

/// Rotation geodesic angle plus `alpha` times the expression distance.
pub fn keyframe_distance(a: &Keyframe, b: &Keyframe, alpha: f64) -> f64 {
    let angle = a.rotation.angle_to(&b.rotation);
    let dx: f64 = a
        .expression
        .iter()
        .zip(&b.expression)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    angle + alpha * dx
}

impl KeyframeStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distance to the closest stored keyframe; infinite for an empty store.
    pub fn novelty(&self, k: &Keyframe, alpha: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| keyframe_distance(&e.keyframe, k, alpha))
            .fold(f64::INFINITY, f64::min)
    }

    /// Admits `k` when it is novel enough, evicting the keyframe farthest in time
    /// from `frame` when full. Returns whether it was admitted.
    pub fn update(&mut self, frame: usize, k: Keyframe, cfg: &KeyframeConfig) -> bool {
        if cfg.capacity == 0 || self.novelty(&k, cfg.alpha) <= cfg.threshold {
            return false;
        }
        if self.entries.len() >= cfg.capacity {
            let oldest = self
                .entries
                .iter()
                .enumerate()
                .max_by_key(|(_, e)| frame.abs_diff(e.frame))
                .map(|(i, _)| i)
                .expect("store is full, hence nonempty");
            self.entries.remove(oldest);
        }
        self.entries.push(StoredKeyframe { frame, keyframe: k });
        true
    }

    pub fn snapshot(&self) -> Vec<Keyframe> {
        self.entries.iter().map(|e| e.keyframe.clone()).collect()
    }
}
