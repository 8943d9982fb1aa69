//! Grid sampling, grid-level splits and labeled image datasets.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::VariableId;
use crate::cube::{global_minmax_of, ClimateCube, GridCell, ScalingStats};
use crate::encoder::Knockout;
use crate::encoder::{encode_window, EncodeOptions, ImageCache, ScalingMode, VarennImage};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, Target};
use crate::rng::{stream, Purpose};
use crate::window::{enumerate_windows, label_with, trend_delta, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.75,
            validation: 0.20,
            test: 0.05,
        }
    }
}

/// Keeps each cell whose uniform draw from its own stream exceeds `c_t`.
pub fn select_grids(cells: &[GridCell], c_t: f64, seed: u64) -> Result<Vec<GridCell>> {
    if !(0.0..=1.0).contains(&c_t) {
        return Err(Error::Config(format!("c_t {c_t} outside [0, 1]")));
    }
    Ok(cells
        .iter()
        .filter(|c| stream(seed, Purpose::GridSelection, c.cell_id as u64).random::<f64>() > c_t)
        .copied()
        .collect())
}

/// Shuffles the cells and cuts the sequence into test, validation and train
/// blocks. Validation and test get at least one cell each.
pub fn split_grids(
    cell_ids: &[u32],
    fractions: SplitFractions,
    seed: u64,
) -> Result<BTreeMap<u32, Split>> {
    let f = fractions;
    if [f.train, f.validation, f.test]
        .iter()
        .any(|x| !(0.0..=1.0).contains(x))
        || (f.train + f.validation + f.test - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {f:?} must be in [0, 1] and sum to 1"
        )));
    }
    let n = cell_ids.len();
    if n < 3 {
        return Err(Error::Dataset(format!(
            "{n} cells cannot fill three splits"
        )));
    }
    let mut ids = cell_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != n {
        return Err(Error::Validation("duplicate cell ids in split".into()));
    }
    ids.shuffle(&mut stream(seed, Purpose::GridSplit, 0));
    let n_test = ((f.test * n as f64).round() as usize).max(1);
    let n_val = ((f.validation * n as f64).round() as usize).max(1);
    if n_test + n_val >= n {
        return Err(Error::Dataset(format!("{n} cells leave no training cells")));
    }
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Validation
            } else {
                Split::Train
            };
            (id, split)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub cell_id: u32,
    pub lat: f64,
    pub lon: f64,
    /// Calendar year in which the training period starts.
    pub start_year: i32,
    pub window: WindowSpec,
    /// Ordinal 1..5.
    pub label: u8,
    pub split: Split,
    /// Index into the dataset's image cache.
    pub image: usize,
}

impl SampleRecord {
    pub fn class_index(&self) -> usize {
        self.label as usize - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub experiment_id: u32,
    pub target: Target,
    pub inputs: Vec<VariableId>,
    pub knockout: Knockout,
    pub training_years: usize,
    pub labeling_years: usize,
    pub seed: u64,
    pub c_t: f64,
    pub selected_cells: usize,
    pub excluded_windows: usize,
    pub shuffled_labels: bool,
    /// Per split, counts of ordinals 1..5.
    pub histogram: BTreeMap<Split, [usize; 5]>,
}

/// One header line followed by one line per record.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn histogram(records: &[SampleRecord]) -> BTreeMap<Split, [usize; 5]> {
        let mut h: BTreeMap<Split, [usize; 5]> = Split::ALL.iter().map(|&s| (s, [0; 5])).collect();
        for r in records {
            h.get_mut(&r.split).unwrap()[r.class_index()] += 1;
        }
        h
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let parse_err =
            |i: usize, e: serde_json::Error| Error::Format(format!("manifest line {}: {e}", i + 1));
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty manifest".into()))?
            .map_err(|e| Error::Format(e.to_string()))?;
        let header: ManifestHeader = serde_json::from_str(&first).map_err(|e| parse_err(0, e))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?);
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: ImageCache,
}

impl Dataset {
    pub const MANIFEST_FILE: &'static str = "manifest.jsonl";
    pub const IMAGES_FILE: &'static str = "images.vimg";

    /// Writes the manifest and image cache into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.manifest.save(dir.join(Self::MANIFEST_FILE))?;
        self.images.save(dir.join(Self::IMAGES_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = DatasetManifest::load(dir.join(Self::MANIFEST_FILE))?;
        let images = ImageCache::load(dir.join(Self::IMAGES_FILE))?;
        if let Some(r) = manifest.records.iter().find(|r| r.image >= images.len()) {
            return Err(Error::Length(format!(
                "record for cell {} points at image {} of {}",
                r.cell_id,
                r.image,
                images.len()
            )));
        }
        Ok(Self { manifest, images })
    }

    /// Images and zero-based class indices of one split.
    pub fn split_data(&self, split: Split) -> (Vec<f32>, Vec<usize>) {
        let recs: Vec<&SampleRecord> = self.manifest.split_records(split).collect();
        let idx: Vec<usize> = recs.iter().map(|r| r.image).collect();
        (
            self.images.gather(&idx),
            recs.iter().map(|r| r.class_index()).collect(),
        )
    }
}

struct CellSamples {
    records: Vec<SampleRecord>,
    images: Vec<VarennImage>,
    excluded: usize,
}

fn cell_samples(
    cube: &ClimateCube,
    cell: usize,
    split: Split,
    spec: &ExperimentSpec,
    windows: &[WindowSpec],
    stats: &ScalingStats,
    opts: &EncodeOptions,
) -> Result<CellSamples> {
    let g = cube.grid()[cell];
    let thresholds = spec.thresholds();
    let mut out = CellSamples {
        records: Vec::new(),
        images: Vec::new(),
        excluded: 0,
    };
    for w in windows {
        let Some(delta) = trend_delta(cube, cell, spec.target.variable(), w)? else {
            out.excluded += 1;
            continue;
        };
        let Some(img) = encode_window(cube, cell, &spec.inputs, w, stats, opts)? else {
            out.excluded += 1;
            continue;
        };
        let label = label_with(spec.target.family(), &thresholds, delta.delta)?;
        out.records.push(SampleRecord {
            cell_id: g.cell_id,
            lat: g.lat,
            lon: g.lon,
            start_year: cube.start_year() + w.start_year_offset() as i32,
            window: *w,
            label: label.ordinal,
            split,
            image: 0,
        });
        out.images.push(img);
    }
    Ok(out)
}

/// Encodes and labels every complete window of every selected cell.
/// Records are ordered by cell id, then window start.
pub fn build_dataset(cube: &ClimateCube, spec: &ExperimentSpec) -> Result<Dataset> {
    spec.validate()?;
    cube.require_var(spec.target.variable())?;
    let stats = match spec.scaling {
        ScalingMode::Global => global_minmax_of(cube, &spec.inputs)?,
        ScalingMode::PerImage => {
            for &v in &spec.inputs {
                cube.require_var(v)?;
            }
            ScalingStats { ranges: Vec::new() }
        }
    };
    let windows = enumerate_windows(cube.n_years(), spec.training_years, spec.labeling_years)?;
    let selected = select_grids(cube.grid(), spec.c_t, spec.seed)?;
    let ids: Vec<u32> = selected.iter().map(|c| c.cell_id).collect();
    let splits = split_grids(&ids, SplitFractions::default(), spec.seed)?;

    let mut cells: Vec<(u32, usize)> = cube
        .grid()
        .iter()
        .enumerate()
        .filter(|(_, c)| splits.contains_key(&c.cell_id))
        .map(|(i, c)| (c.cell_id, i))
        .collect();
    cells.sort_unstable();

    let opts = EncodeOptions {
        knockout: spec.knockout,
        scaling: spec.scaling,
        quantize: spec.quantize,
    };
    let per_cell: Vec<CellSamples> = cells
        .par_iter()
        .map(|&(id, i)| cell_samples(cube, i, splits[&id], spec, &windows, &stats, &opts))
        .collect::<Result<_>>()?;

    let mut images = ImageCache::new();
    let mut records = Vec::new();
    let mut excluded = 0;
    for cs in per_cell {
        excluded += cs.excluded;
        for (mut r, img) in cs.records.into_iter().zip(&cs.images) {
            r.image = images.push(img);
            records.push(r);
        }
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!(
            "experiment #{} produced no usable samples",
            spec.id
        )));
    }
    if spec.shuffle_labels {
        let mut labels: Vec<u8> = records.iter().map(|r| r.label).collect();
        labels.shuffle(&mut stream(spec.seed, Purpose::LabelShuffle, 0));
        for (r, l) in records.iter_mut().zip(labels) {
            r.label = l;
        }
    }
    let header = ManifestHeader {
        experiment_id: spec.id,
        target: spec.target,
        inputs: spec.inputs.clone(),
        knockout: spec.knockout,
        training_years: spec.training_years,
        labeling_years: spec.labeling_years,
        seed: spec.seed,
        c_t: spec.c_t,
        selected_cells: cells.len(),
        excluded_windows: excluded,
        shuffled_labels: spec.shuffle_labels,
        histogram: DatasetManifest::histogram(&records),
    };
    Ok(Dataset {
        manifest: DatasetManifest { header, records },
        images,
    })
}
