//! Synthetic dataset directories and shape-parameter text files.
//!
//! ```text
//! <dir>/manifest.txt       format, count, seed, width, height
//! <dir>/images/NNNN.pgm    8-bit grayscale render
//! <dir>/masks/NNNN.pbm     ground-truth face mask
//! <dir>/params/NNNN.txt    rotation (w x y z), translation, expression,
//!                          displacement, identity, focal
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use facecap_core::augment::SyntheticSample;
use facecap_core::facemodel::ShapeParams;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::config::pairs;
use crate::error::{Error, IoContext, Result};
use crate::imageio::{read_gray, read_mask, write_gray, write_mask};

const FORMAT: &str = "facecap-dataset 1";

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Every field of `S`, one per line, with shortest round-trip decimals.
pub fn params_text(p: &ShapeParams) -> String {
    let q = p.rotation.quaternion();
    let mut s = String::new();
    writeln!(s, "rotation = {}", join([q.w, q.i, q.j, q.k])).unwrap();
    writeln!(s, "translation = {}", join(p.translation.iter().copied())).unwrap();
    writeln!(s, "expression = {}", join(p.expression.iter().copied())).unwrap();
    writeln!(
        s,
        "displacement = {}",
        join(p.displacement.iter().flatten().copied())
    )
    .unwrap();
    writeln!(s, "identity = {}", join(p.identity.iter().copied())).unwrap();
    writeln!(s, "focal = {}", p.focal).unwrap();
    s
}

pub fn parse_params(text: &str, origin: &str) -> Result<ShapeParams> {
    let bad = |d: String| Error::format("params file", format!("{origin}: {d}"));
    let mut fields: [Option<Vec<f64>>; 6] = Default::default();
    const KEYS: [&str; 6] = [
        "rotation",
        "translation",
        "expression",
        "displacement",
        "identity",
        "focal",
    ];
    for (k, v, line) in pairs(text, origin)? {
        let slot = KEYS
            .iter()
            .position(|&n| n == k)
            .ok_or_else(|| bad(format!("line {line}: unknown key {k}")))?;
        let nums = v
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(format!("line {line}: bad number in {k}")))?;
        fields[slot] = Some(nums);
    }
    let [r, t, x, d, u, f] = fields.map(|f| f.unwrap_or_default());
    if r.len() != 4 || t.len() != 3 || f.len() != 1 || d.len() % 2 != 0 {
        return Err(bad(
            "rotation needs 4 numbers, translation 3, focal 1, displacement pairs".into(),
        ));
    }
    let q = Quaternion::new(r[0], r[1], r[2], r[3]);
    if (q.norm() - 1.0).abs() > 1e-6 {
        return Err(bad(format!("rotation quaternion has norm {}", q.norm())));
    }
    Ok(ShapeParams {
        rotation: UnitQuaternion::new_unchecked(q),
        translation: Vector3::new(t[0], t[1], t[2]),
        expression: x,
        displacement: d.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        identity: u,
        focal: f[0],
    })
}

fn stem(i: usize) -> String {
    format!("{i:04}")
}

fn paths(dir: &Path, i: usize) -> [PathBuf; 3] {
    let s = stem(i);
    [
        dir.join("images").join(format!("{s}.pgm")),
        dir.join("masks").join(format!("{s}.pbm")),
        dir.join("params").join(format!("{s}.txt")),
    ]
}

pub fn save_dataset(dir: &Path, samples: &[SyntheticSample], seed: u64) -> Result<()> {
    for sub in ["images", "masks", "params"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).at(&p)?;
    }
    let (w, h) = samples.first().map_or((0, 0), |s| s.image.dims());
    for (i, s) in samples.iter().enumerate() {
        let [img, mask, params] = paths(dir, i);
        write_gray(&img, &s.image)?;
        write_mask(&mask, &s.mask)?;
        std::fs::write(&params, params_text(&s.params)).at(&params)?;
    }
    let manifest = dir.join("manifest.txt");
    let text = format!(
        "format = {FORMAT}\ncount = {}\nseed = {seed}\nwidth = {w}\nheight = {h}\n",
        samples.len()
    );
    std::fs::write(&manifest, text).at(&manifest)
}

/// Loads a dataset written by [`save_dataset`]. Images come back quantized to 8 bits.
pub fn load_dataset(dir: &Path) -> Result<Vec<SyntheticSample>> {
    let manifest = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest).at(&manifest)?;
    let origin = manifest.display().to_string();
    let mut count = None;
    let mut seed = 0;
    for (k, v, _) in pairs(&text, &origin)? {
        match k.as_str() {
            "format" if v != FORMAT => {
                return Err(Error::format(
                    "manifest",
                    format!("unsupported format {v:?}"),
                ))
            }
            "count" => count = v.parse().ok(),
            "seed" => {
                seed = v
                    .parse()
                    .map_err(|_| Error::format("manifest", "bad seed"))?
            }
            _ => {}
        }
    }
    let count: usize = count.ok_or_else(|| Error::format("manifest", "missing count"))?;
    (0..count)
        .map(|i| {
            let [img, mask, params] = paths(dir, i);
            Ok(SyntheticSample {
                image: read_gray(&img)?,
                mask: read_mask(&mask)?,
                params: parse_params(
                    &std::fs::read_to_string(&params).at(&params)?,
                    &params.display().to_string(),
                )?,
                seed,
                index: i as u64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use facecap_core::augment::{gen_synthetic_dataset, RenderConfig};
    use facecap_core::facemodel::toy::{toy_rig, ToyRigConfig};

    #[test]
    fn params_text_round_trip_is_exact() {
        let rig = toy_rig(&ToyRigConfig::default()).unwrap();
        for s in gen_synthetic_dataset(&rig, 5, &RenderConfig::default(), 4).unwrap() {
            let mut p = s.params;
            p.displacement[1] = [0.1, -3.25];
            assert_eq!(parse_params(&params_text(&p), "p").unwrap(), p);
        }
        assert!(parse_params("rotation = 1 0 0\nfocal = 1", "p").is_err());
        assert!(parse_params("rotation = 2 0 0 0\ntranslation = 0 0 1\nfocal = 1", "p").is_err());
    }

    #[test]
    fn dataset_directory_round_trip() {
        let rig = toy_rig(&ToyRigConfig::default()).unwrap();
        let faces = gen_synthetic_dataset(&rig, 3, &RenderConfig::default(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &faces, 9).unwrap();
        assert!(dir.path().join("images/0002.pgm").exists());
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&faces) {
            assert_eq!(a.params, b.params);
            assert_eq!(a.mask, b.mask);
            assert_eq!((a.seed, a.index), (9, b.index));
            for (x, y) in a.image.as_slice().iter().zip(b.image.as_slice()) {
                assert!((x - y.clamp(0.0, 255.0)).abs() <= 0.5 + 1e-9);
            }
        }
    }
}
