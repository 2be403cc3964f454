//! Image, mask and probability-map files.
//!
//! Frames load from anything the `image` crate decodes (PNG, PPM, PGM).
//! Probability maps come from float PFM or from 8/16-bit grayscale scaled to
//! `[0, 1]`. Masks are written as PBM (`.pbm`, face = white) or 8-bit
//! grayscale under any other extension.

use std::io::Write;
use std::path::Path;

use facecap_core::image::{BinaryMask, GrayImage, RgbImage};
use facecap_core::maskrefine::ProbabilityMap;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageEncoder, Luma};

use crate::error::{Error, IoContext, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .at(path)?
        .with_guessed_format()
        .at(path)?;
    Ok(reader.decode()?)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// 8-bit sources keep their exact integer levels; deeper ones are rescaled to `0..=255`.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().bytes_per_pixel() / img.color().channel_count() == 1 {
        img.into_rgb8()
            .pixels()
            .map(|p| p.0.map(f64::from))
            .collect()
    } else {
        img.into_rgb32f()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 * 255.0))
            .collect()
    };
    Ok(RgbImage::from_vec(w, h, data)?)
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().bytes_per_pixel() / img.color().channel_count() == 1 {
        img.into_luma8().pixels().map(|p| p[0] as f64).collect()
    } else {
        img.to_luma32f()
            .pixels()
            .map(|p| p[0] as f64 * 255.0)
            .collect()
    };
    Ok(GrayImage::from_vec(w, h, data)?)
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    let (w, h) = img.dims();
    let buf = image::GrayImage::from_vec(
        w as u32,
        h as u32,
        img.as_slice().iter().map(|&v| to_u8(v)).collect(),
    )
    .unwrap();
    Ok(buf.save(path)?)
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    let (w, h) = img.dims();
    let raw = img.as_slice().iter().flat_map(|p| p.map(to_u8)).collect();
    Ok(image::RgbImage::from_vec(w as u32, h as u32, raw)
        .unwrap()
        .save(path)?)
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (w, h) = mask.dims();
    if !has_ext(path, "pbm") {
        let raw = mask
            .as_slice()
            .iter()
            .map(|&f| if f { 255 } else { 0 })
            .collect();
        return Ok(image::GrayImage::from_vec(w as u32, h as u32, raw)
            .unwrap()
            .save(path)?);
    }
    // Bitmap samples are 0 for black and 1 for white.
    let raw: Vec<u8> = mask.as_slice().iter().map(|&f| u8::from(f)).collect();
    let file = std::fs::File::create(path).at(path)?;
    let enc = PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Bitmap(SampleEncoding::Binary));
    enc.write_image(&raw, w as u32, h as u32, image::ExtendedColorType::L8)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(BinaryMask::from_vec(
        w as usize,
        h as usize,
        img.pixels().map(|Luma([v])| *v > 127).collect(),
    )?)
}

/// Reads a probability map: PFM by extension, otherwise any grayscale image
/// normalized by its bit depth.
pub fn read_prob(path: &Path) -> Result<ProbabilityMap> {
    if has_ext(path, "pfm") {
        let (w, h, data) = read_pfm(path)?;
        return Ok(ProbabilityMap::new(w, h, data)?);
    }
    let img = open(path)?.to_luma32f();
    let (w, h) = img.dimensions();
    Ok(ProbabilityMap::new(
        w as usize,
        h as usize,
        img.pixels().map(|p| p[0] as f64).collect(),
    )?)
}

pub fn write_prob(path: &Path, p: &ProbabilityMap) -> Result<()> {
    if has_ext(path, "pfm") {
        return write_pfm(path, p.width(), p.height(), p.as_slice());
    }
    let (w, h) = p.dims();
    let raw = p
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    Ok(
        image::ImageBuffer::<Luma<u16>, Vec<u16>>::from_vec(w as u32, h as u32, raw)
            .unwrap()
            .save(path)?,
    )
}

/// Single-channel PFM (`Pf`), top row first in the returned data.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode_pfm(&std::fs::read(path).at(path)?)
}

pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pfm(width, height, data)).at(path)
}

pub fn encode_pfm(width: usize, height: usize, data: &[f64]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let mut out = Vec::with_capacity(32 + 4 * data.len());
    write!(out, "Pf\n{width} {height}\n-1.0\n").unwrap();
    for row in data.chunks(width.max(1)).rev() {
        for v in row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |d: &str| Error::format("PFM", d);
    // Three whitespace-separated header tokens after the magic, then one
    // whitespace byte before the raster.
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("header is not ASCII"))?);
    }
    i += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(bad("colour PFM; expected a single channel")),
        m => return Err(bad(&format!("bad magic {m:?}"))),
    }
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be nonzero"));
    }
    let n = w.checked_mul(h).ok_or_else(|| bad("size overflow"))?;
    let raster = bytes.get(i..).unwrap_or(&[]);
    if raster.len() != 4 * n {
        return Err(bad(&format!(
            "expected {} raster bytes, found {}",
            4 * n,
            raster.len()
        )));
    }
    let word = |c: &[u8]| {
        let b: [u8; 4] = c.try_into().unwrap();
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let mut data = vec![0.0; n];
    for (r, row) in raster.chunks_exact(4 * w.max(1)).enumerate().take(h) {
        let y = h - 1 - r;
        for (x, c) in row.chunks_exact(4).enumerate() {
            data[y * w + x] = word(c) as f64;
        }
    }
    Ok((w, h, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_row_order() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 16.0).collect();
        let bytes = encode_pfm(4, 3, &data);
        assert_eq!(decode_pfm(&bytes).unwrap(), (4, 3, data.clone()));
        // Bottom row is stored first.
        let hdr = b"Pf\n4 3\n-1.0\n".len();
        assert_eq!(
            f32::from_le_bytes(bytes[hdr..hdr + 4].try_into().unwrap()),
            0.5
        );
        assert!(decode_pfm(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let mut bytes = b"Pf 2 1 1.0\n".to_vec();
        bytes.extend_from_slice(&0.25f32.to_be_bytes());
        bytes.extend_from_slice(&0.75f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), (2, 1, vec![0.25, 0.75]));
    }

    #[test]
    fn mask_and_prob_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = BinaryMask::from_fn(13, 7, |x, y| (x * y) % 3 == 0);
        for name in ["m.pbm", "m.png", "m.pgm"] {
            let p = dir.path().join(name);
            write_mask(&p, &mask).unwrap();
            assert_eq!(read_mask(&p).unwrap(), mask, "{name}");
        }
        // PBM stores face as white, i.e. a zero bit.
        let p = dir.path().join("one.pbm");
        write_mask(&p, &BinaryMask::from_fn(8, 1, |x, _| x == 0)).unwrap();
        assert_eq!(*std::fs::read(&p).unwrap().last().unwrap(), 0b0111_1111);

        let prob = ProbabilityMap::from_fn(9, 5, |x, y| (x + 9 * y) as f64 / 44.0).unwrap();
        let p = dir.path().join("p.pfm");
        write_prob(&p, &prob).unwrap();
        let back = read_prob(&p).unwrap();
        for (a, b) in back.as_slice().iter().zip(prob.as_slice()) {
            assert!((a - b).abs() < 1e-7);
        }
        let p = dir.path().join("p16.pgm");
        write_prob(&p, &prob).unwrap();
        let back = read_prob(&p).unwrap();
        for (a, b) in back.as_slice().iter().zip(prob.as_slice()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn gray_and_colour_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GrayImage::from_fn(6, 4, |x, y| (40 * x + y) as f64);
        let p = dir.path().join("g.pgm");
        write_gray(&p, &g).unwrap();
        assert_eq!(read_gray(&p).unwrap(), g);
        let c = RgbImage::from_fn(3, 2, |x, y| [x as f64, y as f64, 200.0]);
        let p = dir.path().join("c.png");
        write_rgb(&p, &c).unwrap();
        assert_eq!(read_rgb(&p).unwrap(), c);
    }
}
