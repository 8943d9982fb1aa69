//! Month × year rasters packed into 60×60 RGB images.
//!
//! Month `m` (January on top) occupies pixel rows `5m..5m+5`; year `y`
//! occupies columns `w·y..w·(y+1)` with `w = 60 / years`. Up to three
//! variables go to R, G and B in canonical order; unused channels are zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::VariableId;
use crate::cube::{ClimateCube, ScalingStats, ValueRange};
use crate::error::{Error, Result};
use crate::window::WindowSpec;

pub const IMAGE_SIZE: usize = 60;
pub const CHANNELS: usize = 3;
pub const IMAGE_LEN: usize = IMAGE_SIZE * IMAGE_SIZE * CHANNELS;
const ROWS_PER_MONTH: usize = IMAGE_SIZE / 12;

/// Values indexed by (month, year), stored month-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthYearGrid {
    years: usize,
    data: Vec<f64>,
}

impl MonthYearGrid {
    pub fn new(years: usize, data: Vec<f64>) -> Result<Self> {
        if years == 0 || data.len() != 12 * years {
            return Err(Error::Length(format!(
                "month-year grid of {years} years needs {} values, got {}",
                12 * years,
                data.len()
            )));
        }
        Ok(Self { years, data })
    }

    pub fn from_fn(years: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..12)
            .flat_map(|m| (0..years).map(move |y| (m, y)))
            .map(|(m, y)| f(m, y))
            .collect();
        Self { years, data }
    }

    /// Reads a window's training period for one variable and cell; `None`
    /// if any value is missing.
    pub fn from_cube(
        cube: &ClimateCube,
        var: usize,
        cell: usize,
        first_month: usize,
        years: usize,
    ) -> Option<Self> {
        let mut data = vec![0.0; 12 * years];
        for y in 0..years {
            for m in 0..12 {
                let x = cube.value(var, first_month + 12 * y + m, cell);
                if x.is_nan() {
                    return None;
                }
                data[m * years + y] = x as f64;
            }
        }
        Some(Self { years, data })
    }

    pub fn years(&self) -> usize {
        self.years
    }

    pub fn get(&self, month: usize, year: usize) -> f64 {
        self.data[month * self.years + year]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            years: self.years,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn range(&self) -> ValueRange {
        let (min, max) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        ValueRange { min, max }
    }
}

pub fn scale01(x: f64, range: ValueRange) -> f64 {
    if range.min == range.max {
        return 0.5;
    }
    ((x - range.min) / (range.max - range.min)).clamp(0.0, 1.0)
}

/// Block-replicates a scaled grid into a 60×60 row-major raster.
pub fn rasterize(grid: &MonthYearGrid) -> Result<Vec<f32>> {
    let years = grid.years();
    if !IMAGE_SIZE.is_multiple_of(years) {
        return Err(Error::Config(format!(
            "{years} years do not divide {IMAGE_SIZE} columns"
        )));
    }
    let width = IMAGE_SIZE / years;
    let mut out = vec![0f32; IMAGE_SIZE * IMAGE_SIZE];
    for (r, row) in out.chunks_exact_mut(IMAGE_SIZE).enumerate() {
        for (c, px) in row.iter_mut().enumerate() {
            *px = grid.get(r / ROWS_PER_MONTH, c / width) as f32;
        }
    }
    Ok(out)
}

/// Mean taken as an offset from the first value, so a constant sequence
/// returns that constant exactly and knockouts are idempotent.
fn mean(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else {
        return f64::NAN;
    };
    let (sum, n) = values.fold((0.0, 1.0), |(s, n), x| (s + (x - first), n + 1.0));
    first + sum / n
}

/// Replaces every value by its month's mean over all years. Interannual
/// variation disappears and the raster becomes horizontal stripes.
pub fn knockout_interannual(grid: &MonthYearGrid) -> MonthYearGrid {
    let y = grid.years();
    let means: Vec<f64> = (0..12)
        .map(|m| mean((0..y).map(|j| grid.get(m, j))))
        .collect();
    MonthYearGrid::from_fn(y, |m, _| means[m])
}

/// Replaces every value by its year's mean over the twelve months. The
/// seasonal cycle disappears and the raster becomes vertical stripes.
pub fn knockout_seasonal(grid: &MonthYearGrid) -> MonthYearGrid {
    let y = grid.years();
    let means: Vec<f64> = (0..y)
        .map(|j| mean((0..12).map(|m| grid.get(m, j))))
        .collect();
    MonthYearGrid::from_fn(y, |_, j| means[j])
}

/// Which temporal variation an image keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knockout {
    #[default]
    None,
    /// Month means only: horizontal stripes.
    SeasonalOnly,
    /// Annual means only: vertical stripes.
    InterannualOnly,
}

impl Knockout {
    pub fn apply(self, grid: &MonthYearGrid) -> MonthYearGrid {
        match self {
            Knockout::None => grid.clone(),
            Knockout::SeasonalOnly => knockout_interannual(grid),
            Knockout::InterannualOnly => knockout_seasonal(grid),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Knockout::None => "none",
            Knockout::SeasonalOnly => "seasonal_only",
            Knockout::InterannualOnly => "interannual_only",
        }
    }
}

impl std::str::FromStr for Knockout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Knockout::None),
            "seasonal_only" | "seasonal" => Ok(Knockout::SeasonalOnly),
            "interannual_only" | "interannual" => Ok(Knockout::InterannualOnly),
            _ => Err(Error::Validation(format!("unknown knockout mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarennImage {
    /// Height × width × channel, values in [0, 1].
    pub pixels: Vec<f32>,
    pub channel_map: Vec<VariableId>,
    pub knockout: Knockout,
    pub training_years: usize,
}

impl VarennImage {
    pub fn pixel(&self, row: usize, col: usize, channel: usize) -> f32 {
        px(&self.pixels, row, col, channel)
    }

    pub fn is_horizontally_striped(&self) -> bool {
        horizontally_striped(&self.pixels)
    }

    pub fn is_vertically_striped(&self) -> bool {
        vertically_striped(&self.pixels)
    }

    pub fn vacant_channels_zero(&self) -> bool {
        let used = self.channel_map.len();
        self.pixels
            .chunks_exact(CHANNELS)
            .all(|px| px[used..].iter().all(|&v| v == 0.0))
    }

    pub fn in_unit_range(&self) -> bool {
        self.pixels.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// The image as it reads back from an 8-bit file.
    pub fn quantized(&self) -> Self {
        Self {
            pixels: self
                .pixels
                .iter()
                .map(|&v| quantize(v) as f32 / 255.0)
                .collect(),
            ..self.clone()
        }
    }
}

fn px(pixels: &[f32], row: usize, col: usize, channel: usize) -> f32 {
    pixels[(row * IMAGE_SIZE + col) * CHANNELS + channel]
}

/// Every row of an HWC image is constant across columns in every channel.
pub fn horizontally_striped(pixels: &[f32]) -> bool {
    (0..IMAGE_SIZE).all(|r| {
        (0..CHANNELS)
            .all(|ch| (1..IMAGE_SIZE).all(|c| px(pixels, r, c, ch) == px(pixels, r, 0, ch)))
    })
}

/// Every column of an HWC image is constant across rows in every channel.
pub fn vertically_striped(pixels: &[f32]) -> bool {
    (0..IMAGE_SIZE).all(|c| {
        (0..CHANNELS)
            .all(|ch| (1..IMAGE_SIZE).all(|r| px(pixels, r, c, ch) == px(pixels, 0, c, ch)))
    })
}

pub fn check_channel_order(vars: &[VariableId]) -> Result<()> {
    if vars.is_empty() || vars.len() > CHANNELS {
        return Err(Error::Validation(format!(
            "images hold 1 to 3 variables, got {}",
            vars.len()
        )));
    }
    if vars
        .windows(2)
        .any(|p| p[0].canonical_index() >= p[1].canonical_index())
    {
        return Err(Error::Validation(format!(
            "variables {vars:?} must be unique and in canonical order"
        )));
    }
    Ok(())
}

/// Packs already-scaled grids into channels R, G, B in order.
pub fn compose_rgb(
    vars: &[VariableId],
    grids: &[MonthYearGrid],
    knockout: Knockout,
    training_years: usize,
) -> Result<VarennImage> {
    check_channel_order(vars)?;
    if grids.len() != vars.len() {
        return Err(Error::Length(format!(
            "{} variables but {} grids",
            vars.len(),
            grids.len()
        )));
    }
    let mut pixels = vec![0f32; IMAGE_LEN];
    for (ch, grid) in grids.iter().enumerate() {
        let raster = rasterize(grid)?;
        for (i, v) in raster.into_iter().enumerate() {
            pixels[i * CHANNELS + ch] = v;
        }
    }
    Ok(VarennImage {
        pixels,
        channel_map: vars.to_vec(),
        knockout,
        training_years,
    })
}

/// Round half up onto 0..=255.
pub fn quantize(v: f32) -> u8 {
    (v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_png(img: &VarennImage) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    encode_rgb_png(IMAGE_SIZE as u32, IMAGE_SIZE as u32, &bytes)
}

pub fn export_png(img: &VarennImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_rgb_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(rgb)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Per-variable range over the whole cube.
    #[default]
    Global,
    /// Per-variable range over the image's own window.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub knockout: Knockout,
    pub scaling: ScalingMode,
    /// Round pixel values to 8-bit levels, as an image file would.
    pub quantize: bool,
}

/// Encodes the training period of `window` for one cell. `None` when any
/// selected variable has a missing value in that period.
pub fn encode_window(
    cube: &ClimateCube,
    cell: usize,
    vars: &[VariableId],
    window: &WindowSpec,
    stats: &ScalingStats,
    opts: &EncodeOptions,
) -> Result<Option<VarennImage>> {
    check_channel_order(vars)?;
    let mut grids = Vec::with_capacity(vars.len());
    for &v in vars {
        let var = cube.require_var(v)?;
        let Some(raw) = MonthYearGrid::from_cube(
            cube,
            var,
            cell,
            window.start_month_index,
            window.training_years,
        ) else {
            return Ok(None);
        };
        let range = match opts.scaling {
            ScalingMode::Global => stats
                .range(v)
                .ok_or_else(|| Error::Statistics(format!("no scaling range for {v}")))?,
            ScalingMode::PerImage => raw.range(),
        };
        grids.push(opts.knockout.apply(&raw).map(|x| scale01(x, range)));
    }
    let img = compose_rgb(vars, &grids, opts.knockout, window.training_years)?;
    Ok(Some(if opts.quantize { img.quantized() } else { img }))
}

const CACHE_MAGIC: &[u8; 5] = b"VIMG1";

/// Flat store of equally sized images, written as "VIMG1", u32 count,
/// u32 height, u32 width, u32 channels, then little-endian f32 pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageCache {
    data: Vec<f32>,
}

impl ImageCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_data(data: Vec<f32>) -> Result<Self> {
        if !data.len().is_multiple_of(IMAGE_LEN) {
            return Err(Error::Length(format!(
                "{} values is not a whole number of images",
                data.len()
            )));
        }
        Ok(Self { data })
    }

    pub fn push(&mut self, img: &VarennImage) -> usize {
        self.data.extend_from_slice(&img.pixels);
        self.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len() / IMAGE_LEN
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.data[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Concatenates the selected images in order.
    pub fn gather(&self, indices: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * IMAGE_LEN);
        for &i in indices {
            out.extend_from_slice(self.image(i));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + 4 * self.data.len());
        out.extend_from_slice(CACHE_MAGIC);
        for d in [self.len(), IMAGE_SIZE, IMAGE_SIZE, CHANNELS] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 21 || &bytes[..5] != CACHE_MAGIC {
            return Err(Error::Format("not an image cache".into()));
        }
        let dim =
            |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
        let (n, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
        if (h, w, c) != (IMAGE_SIZE, IMAGE_SIZE, CHANNELS) {
            return Err(Error::Format(format!(
                "unsupported image shape {h}x{w}x{c}"
            )));
        }
        let payload = &bytes[21..];
        if payload.len() != n * IMAGE_LEN * 4 {
            return Err(Error::Length(format!(
                "image cache declares {n} images but holds {} bytes",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self { data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
