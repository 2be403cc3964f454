//! Segmentation network checkpoints.
//!
//! ```text
//! "FCSEG\0" | version u32 | input size u32 | channel scale f64 | trained u8
//! layer count u32, then per layer:
//!   name (u32 length + UTF-8) | weight shape 4 × u32 | bias length u32
//!   weights × f32 | bias × f32
//! ```
//! The graph itself is rebuilt from `(scale, input size)`; the layer list must
//! match it name for name and shape for shape. Momentum buffers are not saved.

use std::path::Path;

use facecap_core::neuralseg::{build_two_stream_net, NetworkGraph};

use crate::binio::{Reader, Writer};
use crate::error::{IoContext, Result};

const MAGIC: &[u8; 6] = b"FCSEG\0";
const VERSION: u32 = 1;

pub fn encode_checkpoint(net: &NetworkGraph) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.len(net.input_size);
    w.f64(net.scale);
    w.u8(net.trained as u8);
    w.len(net.params.len());
    for p in &net.params {
        w.str(&p.name);
        for d in p.weight_shape {
            w.len(d);
        }
        w.len(p.bias_len);
        w.f32s(p.weights.iter().copied());
        w.f32s(p.bias.iter().copied());
    }
    w.buf
}

pub fn decode_checkpoint(data: &[u8]) -> Result<NetworkGraph> {
    let mut r = Reader::new(data, "segnet checkpoint");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let size = r.u32()? as usize;
    let scale = r.f64()?;
    let trained = r.u8()? != 0;
    let mut net = build_two_stream_net(scale, size)?;
    let count = r.len(4)?;
    if count != net.params.len() {
        return Err(r.err(format!(
            "{count} layers, the architecture has {}",
            net.params.len()
        )));
    }
    for p in &mut net.params {
        let name = r.str()?;
        let shape = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|v| v as usize);
        let bias_len = r.u32()? as usize;
        if name != p.name || shape != p.weight_shape || bias_len != p.bias_len {
            return Err(r.err(format!(
                "layer {name} {shape:?}+{bias_len} does not match {} {:?}+{}",
                p.name, p.weight_shape, p.bias_len
            )));
        }
        p.weights = r.f32s(p.weights.len())?;
        p.bias = r.f32s(bias_len)?;
    }
    r.finish()?;
    net.trained = trained;
    Ok(net)
}

pub fn save_checkpoint(net: &NetworkGraph, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net)).at(path)
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkGraph> {
    decode_checkpoint(&std::fs::read(path).at(path)?)
}
