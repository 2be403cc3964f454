//! Error-versus-coverage chart for the occlusion sweep.

use std::path::Path;

use facecap_core::pipeline::SweepResult;
use plotters::prelude::*;

use crate::error::{Error, Result};

/// Red: masked regressor. Blue: unmasked. X spans the swept coverages, Y
/// starts at zero. Axes carry no text; the CSV next to the plot has the numbers.
pub fn plot_sweep(result: &SweepResult, path: &Path) -> Result<()> {
    const W: u32 = 480;
    const H: u32 = 320;
    let mut buf = vec![255u8; (W * H * 3) as usize];
    {
        let root = BitMapBackend::with_buffer(&mut buf, (W, H)).into_drawing_area();
        let draw = |e: Box<dyn std::error::Error>| Error::Usage(format!("plotting failed: {e}"));
        let xmax = result
            .rows
            .iter()
            .map(|r| r.coverage)
            .fold(0.0, f64::max)
            .max(1e-3);
        let ymax = result
            .rows
            .iter()
            .flat_map(|r| [r.masked, r.unmasked])
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
            .max(1e-6)
            * 1.1;
        let mut chart = ChartBuilder::on(&root)
            .margin(16)
            .build_cartesian_2d(0.0..xmax, 0.0..ymax)
            .map_err(|e| draw(Box::new(e)))?;
        chart
            .configure_mesh()
            .x_labels(0)
            .y_labels(0)
            .draw()
            .map_err(|e| draw(Box::new(e)))?;
        for (color, pick) in [(RED, true), (BLUE, false)] {
            let pts: Vec<(f64, f64)> = result
                .rows
                .iter()
                .map(|r| {
                    (
                        r.coverage,
                        if pick { r.masked } else { r.unmasked }.min(ymax),
                    )
                })
                .collect();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| draw(Box::new(e)))?;
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(|e| draw(Box::new(e)))?;
        }
        root.present().map_err(|e| draw(Box::new(e)))?;
    }
    Ok(image::RgbImage::from_raw(W, H, buf).unwrap().save(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use facecap_core::pipeline::SweepRow;

    #[test]
    fn plot_draws_both_curves() {
        let rows = [0.0, 0.25, 0.5]
            .iter()
            .map(|&c| SweepRow {
                coverage: c,
                masked: c,
                unmasked: 2.0 * c,
                masked_failures: 0,
                unmasked_failures: 0,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep.png");
        plot_sweep(&SweepResult { rows, frames: 1 }, &p).unwrap();
        let img = image::open(&p).unwrap().into_rgb8();
        let count = |c: [u8; 3]| img.pixels().filter(|px| px.0 == c).count();
        assert!(count([255, 0, 0]) > 100 && count([0, 0, 255]) > 100);
    }
}
