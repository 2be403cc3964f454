//! The per-frame tracking loop, keyframe collection for the identity solve, and
//! the occlusion sweep over synthetic sequences.
//!
//! Each frame is cropped around the previous projected mesh, segmented, refined
//! by graph cut and regressed from the previous shape vector on the full frame.
//! Identity and focal updates computed elsewhere are merged only at frame
//! boundaries.

mod keyframes;
mod sequence;
mod sweep;
mod track;


pub use keyframes::{keyframe_distance, KeyframeConfig, KeyframeStore, StoredKeyframe};
pub use sequence::{
    occlude_frame, occluder_rect, synthetic_sequence, Sequence, SequenceConfig, SequenceFrame,
};
pub use sweep::{
    evaluate_occlusion_sweep, track_sequence_error, MaskSource, SweepConfig, SweepResult, SweepRow,
};
pub use track::{
    crop_rect, paste_mask, AllFaceSource, Clock, FrameResult, IdentityJob, IdentityScheduler,
    IdentityStatus, IdentityUpdate, NetSource, NoScheduler, NullClock, PipelineConfig, ProbSource,
    Segmentation, StageTimings, SyncScheduler, Tracker, TrackerState,
};
