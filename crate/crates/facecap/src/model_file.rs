//! Cascade regressor files.
//!
//! ```text
//! "FCCAS\0" | version u32
//! config: stages ferns depth features (u32) | shrinkage f64 | feature sigma f64
//!         exclude off-face pairs u8 | off-face limit f64 | seed u64
//! expressions u32 | landmarks u32 | stage count u32, then per stage:
//!   triangle count u32, 3 × u32 each
//!   point count u32, (triangle u32, 3 × f64 weights) each
//!   fern count u32, then per fern: depth u32 | pairs 2 × u16 each |
//!     thresholds depth × f32 | bins 2^depth · dim × f32
//! ```

use std::path::Path;

use facecap_core::regressor::{
    CascadeConfig, CascadeModel, FeaturePoint, FeaturePointSet, Fern, Stage,
};

use crate::binio::{Reader, Writer};
use crate::error::{IoContext, Result};

const MAGIC: &[u8; 6] = b"FCCAS\0";
const VERSION: u32 = 1;

pub fn encode_model(m: &CascadeModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    let c = &m.config;
    for v in [c.stages, c.ferns, c.depth, c.features] {
        w.len(v);
    }
    w.f64(c.shrinkage);
    w.f64(c.feature_sigma);
    w.u8(c.exclude_offface_pairs as u8);
    w.f64(c.offface_limit);
    w.u64(c.seed);
    w.len(m.expressions);
    w.len(m.landmarks);
    w.len(m.stages.len());
    for s in &m.stages {
        w.len(s.points.triangles.len());
        for t in s.points.triangles.iter().flatten() {
            w.u32(*t);
        }
        w.len(s.points.points.len());
        for p in &s.points.points {
            w.u32(p.triangle);
            p.weights.iter().for_each(|&v| w.f64(v));
        }
        w.len(s.ferns.len());
        for f in &s.ferns {
            w.len(f.depth());
            for p in &f.pairs {
                w.bytes(&p[0].to_le_bytes());
                w.bytes(&p[1].to_le_bytes());
            }
            f.thresholds.iter().for_each(|&v| w.f32(v));
            f.bins.iter().for_each(|&v| w.f32(v));
        }
    }
    w.buf
}

pub fn decode_model(data: &[u8]) -> Result<CascadeModel> {
    let mut r = Reader::new(data, "cascade model");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let config = CascadeConfig {
        stages: r.u32()? as usize,
        ferns: r.u32()? as usize,
        depth: r.u32()? as usize,
        features: r.u32()? as usize,
        shrinkage: r.f64()?,
        feature_sigma: r.f64()?,
        exclude_offface_pairs: r.u8()? != 0,
        offface_limit: r.f64()?,
        seed: r.u64()?,
    };
    config.validate()?;
    let expressions = r.u32()? as usize;
    let landmarks = r.u32()? as usize;
    let mut m = CascadeModel {
        config,
        expressions,
        landmarks,
        stages: Vec::new(),
    };
    let dim = m.dim();
    for _ in 0..r.len(12)? {
        let triangles = (0..r.len(12)?)
            .map(|_| Ok([r.u32()?, r.u32()?, r.u32()?]))
            .collect::<Result<Vec<_>>>()?;
        let points = (0..r.len(28)?)
            .map(|_| {
                let triangle = r.u32()?;
                if triangle as usize >= triangles.len() {
                    return Err(r.err("feature point names a missing triangle"));
                }
                Ok(FeaturePoint {
                    triangle,
                    weights: [r.f64()?, r.f64()?, r.f64()?],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if triangles.iter().flatten().any(|&t| t as usize >= landmarks) {
            return Err(r.err("triangle references a missing landmark"));
        }
        let mut ferns = Vec::new();
        for _ in 0..r.len(4)? {
            let depth = r.u32()? as usize;
            if depth > 16 {
                return Err(r.err(format!("fern depth {depth} is implausible")));
            }
            let mut pairs = Vec::with_capacity(depth);
            for _ in 0..depth {
                let b = r.take(4)?;
                let p = [
                    u16::from_le_bytes([b[0], b[1]]),
                    u16::from_le_bytes([b[2], b[3]]),
                ];
                if p.iter().any(|&i| i as usize >= points.len()) {
                    return Err(r.err("fern pair indexes a missing feature point"));
                }
                pairs.push(p);
            }
            let thresholds = r.f32s(depth)?.into_iter().map(|v| v as f32).collect();
            let bins = r
                .f32s((1 << depth) * dim)?
                .into_iter()
                .map(|v| v as f32)
                .collect();
            ferns.push(Fern {
                pairs,
                thresholds,
                bins,
                dim,
            });
        }
        m.stages.push(Stage {
            points: FeaturePointSet { triangles, points },
            ferns,
        });
    }
    r.finish()?;
    Ok(m)
}

pub fn save_model(m: &CascadeModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(m)).at(path)
}

pub fn load_model(path: &Path) -> Result<CascadeModel> {
    decode_model(&std::fs::read(path).at(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use facecap_core::augment::{
        gen_synthetic_dataset, regression_training_set, PerturbRanges, RenderConfig,
    };
    use facecap_core::facemodel::toy::{toy_rig, ToyRigConfig};
    use facecap_core::regressor::train_cascade;

    #[test]
    fn model_round_trip_is_exact() {
        let rig = toy_rig(&ToyRigConfig::default()).unwrap();
        let faces = gen_synthetic_dataset(&rig, 6, &RenderConfig::default(), 1).unwrap();
        let set = regression_training_set(
            &faces,
            &rig,
            &PerturbRanges::default().with_counts(1, 1),
            None,
            2,
        )
        .unwrap();
        let cfg = CascadeConfig {
            stages: 2,
            ferns: 3,
            depth: 3,
            features: 20,
            ..CascadeConfig::default()
        };
        let (m, _) = train_cascade(&set, &rig, &cfg).unwrap();
        let bytes = encode_model(&m);
        assert_eq!(decode_model(&bytes).unwrap(), m);
        for cut in [7, 40, bytes.len() - 1] {
            assert!(decode_model(&bytes[..cut]).is_err());
        }
    }
}
