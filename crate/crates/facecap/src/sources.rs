//! Probability maps read from disk, one file per frame.

use std::path::PathBuf;

use facecap_core::image::{PixelRect, RgbImage};
use facecap_core::maskrefine::ProbabilityMap;
use facecap_core::pipeline::{ProbSource, Segmentation};

use crate::imageio::read_prob;

/// Reads `dir/NNNN.pfm` (or `.pgm`/`.png`) for frame `NNNN`. A map the size
/// of the crop is used as is; any other size is taken as full-frame and
/// resampled through the crop rectangle.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub dir: PathBuf,
}

impl DirSource {
    fn path(&self, frame: usize) -> Option<PathBuf> {
        ["pfm", "pgm", "png"]
            .iter()
            .map(|e| self.dir.join(format!("{frame:04}.{e}")))
            .find(|p| p.exists())
    }
}

fn core_err(e: crate::Error) -> facecap_core::Error {
    match e {
        crate::Error::Core(c) => c,
        other => facecap_core::Error::InvalidArgument(other.to_string()),
    }
}

impl ProbSource for DirSource {
    fn segment(
        &mut self,
        frame: usize,
        crop: &RgbImage,
        rect: PixelRect,
    ) -> facecap_core::Result<Segmentation> {
        let path = self.path(frame).ok_or_else(|| {
            facecap_core::Error::InvalidArgument(format!(
                "no probability map for frame {frame} in {}",
                self.dir.display()
            ))
        })?;
        let p = read_prob(&path).map_err(core_err)?;
        let (cw, ch) = crop.dims();
        if p.dims() == (cw, ch) {
            return Ok(Segmentation::Probability(p));
        }
        let (w, h) = p.dims();
        let as_rgb = RgbImage::from_vec(w, h, p.as_slice().iter().map(|&v| [v; 3]).collect())?;
        let sampled = as_rgb.crop_resize(rect, cw, ch);
        let data = sampled
            .as_slice()
            .iter()
            .map(|v| v[0].clamp(0.0, 1.0))
            .collect();
        ProbabilityMap::new(cw, ch, data).map(Segmentation::Probability)
    }
}
