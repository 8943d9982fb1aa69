//! Equirectangular class and error maps.

use std::path::Path;

use crate::encoder::encode_rgb_png;
use crate::error::{Error, Result};

pub const CLASS_PALETTE: [[u8; 3]; 5] = [
    [215, 25, 28],
    [253, 174, 97],
    [255, 255, 191],
    [171, 217, 233],
    [44, 123, 182],
];
pub const ERROR_COLOR: [u8; 3] = [255, 140, 0];
pub const CORRECT_COLOR: [u8; 3] = [190, 190, 190];
pub const BACKGROUND: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRecord {
    pub lat: f64,
    pub lon: f64,
    /// Ordinals 1..5.
    pub truth: u8,
    pub predicted: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Predicted category colors.
    Predicted,
    /// True category colors.
    Truth,
    /// Orange where the prediction is wrong, gray where it is right.
    Errors,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbRaster {
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn count(&self, color: [u8; 3]) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p == color).count()
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_rgb_png(self.width as u32, self.height as u32, &self.pixels)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Pixel (row, column) of a location on a global grid of `resolution` degrees.
pub fn pixel_of(lat: f64, lon: f64, resolution: f64) -> (usize, usize) {
    let width = (360.0 / resolution).round() as usize;
    let height = (180.0 / resolution).round() as usize;
    let col = ((lon + 180.0) / resolution)
        .floor()
        .clamp(0.0, (width - 1) as f64) as usize;
    let row = ((90.0 - lat) / resolution)
        .floor()
        .clamp(0.0, (height - 1) as f64) as usize;
    (row, col)
}

/// Paints one pixel per record on a white global raster. Later records
/// overwrite earlier ones at the same pixel.
pub fn render_map(records: &[MapRecord], kind: MapKind, resolution: f64) -> Result<RgbRaster> {
    if records.is_empty() {
        return Err(Error::Validation("nothing to render".into()));
    }
    if resolution.is_nan() || resolution <= 0.0 || 360.0 % resolution != 0.0 {
        return Err(Error::Config(format!(
            "resolution {resolution} must divide 360 degrees"
        )));
    }
    let width = (360.0 / resolution).round() as usize;
    let height = (180.0 / resolution).round() as usize;
    let mut pixels: Vec<u8> = BACKGROUND
        .iter()
        .copied()
        .cycle()
        .take(width * height * 3)
        .collect();
    for r in records {
        for o in [r.truth, r.predicted] {
            if !(1..=5).contains(&o) {
                return Err(Error::Validation(format!("category {o} outside 1..5")));
            }
        }
        let color = match kind {
            MapKind::Predicted => CLASS_PALETTE[r.predicted as usize - 1],
            MapKind::Truth => CLASS_PALETTE[r.truth as usize - 1],
            MapKind::Errors if r.truth == r.predicted => CORRECT_COLOR,
            MapKind::Errors => ERROR_COLOR,
        };
        let (row, col) = pixel_of(r.lat, r.lon, resolution);
        let i = 3 * (row * width + col);
        pixels[i..i + 3].copy_from_slice(&color);
    }
    Ok(RgbRaster {
        width,
        height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(lat: f64, lon: f64, truth: u8, predicted: u8) -> MapRecord {
        MapRecord {
            lat,
            lon,
            truth,
            predicted,
        }
    }

    #[test]
    fn origin_lands_at_center() {
        let m = render_map(&[rec(0.0, 0.0, 2, 2)], MapKind::Predicted, 0.5).unwrap();
        assert_eq!((m.width, m.height), (720, 360));
        assert_eq!(m.get(180, 360), CLASS_PALETTE[1]);
        assert_eq!(m.count(BACKGROUND), 720 * 360 - 1);
    }

    #[test]
    fn error_map_colors() {
        let recs = [rec(10.0, 10.0, 1, 1), rec(-10.0, 20.0, 3, 1)];
        let m = render_map(&recs, MapKind::Errors, 1.0).unwrap();
        assert_eq!(m.count(ERROR_COLOR), 1);
        assert_eq!(m.count(CORRECT_COLOR), 1);
        let ok = render_map(&recs[..1], MapKind::Errors, 1.0).unwrap();
        assert_eq!(ok.count(ERROR_COLOR), 0);
    }

    #[test]
    fn edges_and_errors() {
        assert_eq!(pixel_of(90.0, -180.0, 0.5), (0, 0));
        assert_eq!(pixel_of(-90.0, 179.99, 0.5), (359, 719));
        assert!(render_map(&[], MapKind::Errors, 0.5).is_err());
        assert!(render_map(&[rec(0.0, 0.0, 6, 1)], MapKind::Errors, 0.5).is_err());
        assert!(render_map(&[rec(0.0, 0.0, 1, 1)], MapKind::Errors, 0.7).is_err());
    }
}
