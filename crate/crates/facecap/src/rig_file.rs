//! Binary rig container.
//!
//! ```text
//! "FCRIG\0" | version u32 | V n n_id m (u32)
//! core tensor    3V·(n+1)·(n_id+1) × f32
//! mean landmarks 2m × f32
//! landmark → vertex indices m × u32
//! eye corners    2 × u32
//! triangles      count u32, then 3 × u32 each
//! ```
//! Everything is little-endian.

use std::path::Path;

use facecap_core::facemodel::{FaceRig, RigDims};

use crate::binio::{Reader, Writer};
use crate::error::{IoContext, Result};

const MAGIC: &[u8; 6] = b"FCRIG\0";
const VERSION: u32 = 1;

pub fn encode_rig(rig: &FaceRig) -> Vec<u8> {
    let d = rig.dims();
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    for v in [d.vertices, d.expressions, d.identities, d.landmarks] {
        w.len(v);
    }
    w.f32s(rig.core_tensor().iter().copied());
    w.f32s(rig.mean_landmarks().iter().flatten().copied());
    for &i in rig.landmark_indices() {
        w.len(i);
    }
    for i in rig.eye_corners() {
        w.len(i);
    }
    w.len(rig.triangles().len());
    for &i in rig.triangles().iter().flatten() {
        w.len(i);
    }
    w.buf
}

pub fn decode_rig(data: &[u8]) -> Result<FaceRig> {
    let mut r = Reader::new(data, "rig file");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let dims = RigDims {
        vertices: r.u32()? as usize,
        expressions: r.u32()? as usize,
        identities: r.u32()? as usize,
        landmarks: r.u32()? as usize,
    };
    let core_len = 3usize
        .checked_mul(dims.vertices)
        .and_then(|v| v.checked_mul(dims.expressions + 1))
        .and_then(|v| v.checked_mul(dims.identities + 1))
        .ok_or_else(|| r.err("dimensions overflow"))?;
    let core = r.f32s(core_len)?;
    let mean = r.f32s(2 * dims.landmarks)?;
    let mean_landmarks = mean.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let landmark_indices = (0..dims.landmarks)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let eye_corners = [r.u32()? as usize, r.u32()? as usize];
    let n = r.len(12)?;
    let mut triangles = Vec::with_capacity(n);
    for _ in 0..n {
        triangles.push([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize]);
    }
    r.finish()?;
    Ok(FaceRig::new(
        dims,
        core,
        mean_landmarks,
        landmark_indices,
        triangles,
        eye_corners,
    )?)
}

pub fn save_rig(rig: &FaceRig, path: &Path) -> Result<()> {
    std::fs::write(path, encode_rig(rig)).at(path)
}

pub fn load_rig(path: &Path) -> Result<FaceRig> {
    decode_rig(&std::fs::read(path).at(path)?)
}
