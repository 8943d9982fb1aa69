//! Synthetic monthly climate with planted per-cell trends.
//!
//! For variable `v`, cell `c`, year index `y` (0-based) and month `m`
//! (0 = January):
//!
//! ```text
//! value = base_c + amp_c · cos(2π (m − phase_c) / 12) + trend_c · y + e
//! base_c  = base + base_spread · r_c,  r_c uniform in [-1, 1]
//! amp_c   = seasonal_amplitude + amplitude_loading · s_c
//! phase_c = seasonal_phase     + phase_loading     · s_c
//! trend_c = trend_per_year + trend_loading · u_c + trend_season_loading · s_c
//! e       = stationary AR(1) with standard deviation noise_sd
//! ```
//!
//! `u_c` and `s_c` are per-cell latent factors shared by all variables, which
//! lets a spec tie the target's future change to the interannual trend and/or
//! the seasonal shape of other variables. The true per-cell trend of every
//! variable is returned alongside the cube.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::VariableId;
use crate::cube::{ClimateCube, GridCell};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSynth {
    pub base: f64,
    /// Each cell's base is shifted by a uniform draw from ±`base_spread`.
    #[serde(default)]
    pub base_spread: f64,
    #[serde(default)]
    pub seasonal_amplitude: f64,
    /// Month (0-based, fractional allowed) of the seasonal maximum.
    #[serde(default)]
    pub seasonal_phase: f64,
    #[serde(default)]
    pub trend_per_year: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub ar1: f64,
    #[serde(default)]
    pub trend_loading: f64,
    #[serde(default)]
    pub trend_season_loading: f64,
    #[serde(default)]
    pub amplitude_loading: f64,
    #[serde(default)]
    pub phase_loading: f64,
}

impl VariableSynth {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            base_spread: 0.0,
            seasonal_amplitude: 0.0,
            seasonal_phase: 0.0,
            trend_per_year: 0.0,
            noise_sd: 0.0,
            ar1: 0.0,
            trend_loading: 0.0,
            trend_season_loading: 0.0,
            amplitude_loading: 0.0,
            phase_loading: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentAssignment {
    /// Cell `i` takes trend level `i mod n_u` and season level `(i / n_u) mod n_s`.
    Cycle,
    /// Levels (or continuous values in [-1, 1] when no levels are listed)
    /// are drawn from each cell's own random stream.
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSpec {
    #[serde(default)]
    pub trend_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub season_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub assignment: LatentAssignment,
}

/// Cells are laid out row-major on a regular lat/lon lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLayout {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub spacing: f64,
    /// Cells per row; 0 picks `ceil(sqrt(n_cells))`.
    #[serde(default)]
    pub columns: usize,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            origin_lat: 40.25,
            origin_lon: -20.25,
            spacing: 0.5,
            columns: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_cells: usize,
    pub n_years: usize,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    pub seed: u64,
    #[serde(default)]
    pub latent: LatentSpec,
    #[serde(default)]
    pub grid: GridLayout,
    pub variables: BTreeMap<VariableId, VariableSynth>,
}

fn default_start_year() -> i32 {
    1901
}

impl SynthSpec {
    /// All eight variables with plausible magnitudes. The target variables
    /// carry per-cell trends spanning every temperature and precipitation
    /// category; the others respond more weakly to the same latent trend.
    pub fn desk_default(n_cells: usize, n_years: usize, seed: u64) -> Self {
        use VariableId::*;
        let v = |base, amp, phase, loading, noise| VariableSynth {
            base,
            base_spread: 0.0,
            seasonal_amplitude: amp,
            seasonal_phase: phase,
            trend_per_year: 0.0,
            noise_sd: noise,
            ar1: 0.3,
            trend_loading: loading,
            trend_season_loading: 0.0,
            amplitude_loading: 0.0,
            phase_loading: 0.0,
        };
        let variables = BTreeMap::from([
            (Cld, v(55.0, 12.0, 0.0, -0.05, 3.0)),
            (Dtr, v(11.0, 2.5, 6.0, 0.01, 0.5)),
            (Frs, v(6.0, 9.0, 0.0, -0.2, 1.0)),
            (Pet, v(3.0, 2.0, 6.0, 0.03, 0.3)),
            (Pre, v(80.0, 40.0, 6.0, 2.0, 8.0)),
            (Tmp, v(12.0, 10.0, 6.0, 0.35, 0.5)),
            (Vap, v(12.0, 6.0, 6.0, 0.2, 0.6)),
            (Wet, v(10.0, 4.0, 0.0, 0.1, 1.0)),
        ]);
        Self {
            n_cells,
            n_years,
            start_year: 1901,
            seed,
            latent: LatentSpec::default(),
            grid: GridLayout::default(),
            variables,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::Config("n_cells must be positive".into()));
        }
        if self.n_years == 0 {
            return Err(Error::Config("n_years must be positive".into()));
        }
        if self.variables.is_empty() {
            return Err(Error::Config("at least one variable is required".into()));
        }
        for (v, p) in &self.variables {
            if !(0.0..1.0).contains(&p.ar1) {
                return Err(Error::Config(format!("{v}: ar1 {} outside [0, 1)", p.ar1)));
            }
            if p.noise_sd < 0.0 || p.base_spread < 0.0 {
                return Err(Error::Config(format!(
                    "{v}: negative noise_sd or base_spread"
                )));
            }
        }
        for levels in [&self.latent.trend_levels, &self.latent.season_levels]
            .into_iter()
            .flatten()
        {
            if levels.is_empty() {
                return Err(Error::Config("latent level lists must not be empty".into()));
            }
        }
        if self.grid.spacing.is_nan() || self.grid.spacing <= 0.0 {
            return Err(Error::Config("grid spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synth spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Ground truth retained for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub cell_id: u32,
    pub trend_latent: f64,
    pub season_latent: f64,
    pub trends: BTreeMap<VariableId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub cells: Vec<CellTruth>,
}

impl SynthTruth {
    /// Noise-free `μ_label − μ_train` for a window of `training` years
    /// followed by `labeling` years: `trend · (training + labeling) / 2`.
    pub fn expected_delta(
        &self,
        cell: usize,
        v: VariableId,
        training: usize,
        labeling: usize,
    ) -> f64 {
        self.cells[cell].trends[&v] * (training + labeling) as f64 / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub cube: ClimateCube,
    pub truth: SynthTruth,
}

fn pick_latent(levels: &Option<Vec<f64>>, index: usize, rng: &mut impl Rng) -> f64 {
    match levels {
        Some(l) => l[index % l.len()],
        None => rng.random_range(-1.0..=1.0),
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let n_cells = spec.n_cells;
    let n_months = spec.n_years * 12;
    let columns = if spec.grid.columns == 0 {
        (n_cells as f64).sqrt().ceil() as usize
    } else {
        spec.grid.columns
    };
    let grid: Vec<GridCell> = (0..n_cells)
        .map(|i| GridCell {
            cell_id: i as u32,
            lat: spec.grid.origin_lat - spec.grid.spacing * (i / columns) as f64,
            lon: spec.grid.origin_lon + spec.grid.spacing * (i % columns) as f64,
        })
        .collect();

    let n_u = spec.latent.trend_levels.as_ref().map_or(1, Vec::len);
    let latents: Vec<(f64, f64)> = (0..n_cells)
        .map(|i| {
            let mut rng = stream(spec.seed, Purpose::SynthLatent, i as u64);
            match spec.latent.assignment {
                LatentAssignment::Cycle => {
                    let u = pick_latent(&spec.latent.trend_levels, i, &mut rng);
                    let s = pick_latent(&spec.latent.season_levels, i / n_u, &mut rng);
                    (u, s)
                }
                LatentAssignment::Random => {
                    let ui = rng.random_range(0..usize::MAX);
                    let si = rng.random_range(0..usize::MAX);
                    let u = pick_latent(&spec.latent.trend_levels, ui, &mut rng);
                    let s = pick_latent(&spec.latent.season_levels, si, &mut rng);
                    (u, s)
                }
            }
        })
        .collect();

    let variables: Vec<VariableId> = spec.variables.keys().copied().collect();
    let mut values = vec![0f32; variables.len() * n_months * n_cells];
    let mut truth: Vec<CellTruth> = grid
        .iter()
        .zip(&latents)
        .map(|(c, &(u, s))| CellTruth {
            cell_id: c.cell_id,
            trend_latent: u,
            season_latent: s,
            trends: BTreeMap::new(),
        })
        .collect();

    for (vi, (&v, p)) in spec.variables.iter().enumerate() {
        for (ci, &(u, s)) in latents.iter().enumerate() {
            let amp = p.seasonal_amplitude + p.amplitude_loading * s;
            let phase = p.seasonal_phase + p.phase_loading * s;
            let trend = p.trend_per_year + p.trend_loading * u + p.trend_season_loading * s;
            truth[ci].trends.insert(v, trend);

            let key = (ci as u64) << 8 | v.canonical_index() as u64;
            let base = if p.base_spread > 0.0 {
                let mut r = stream(spec.seed, Purpose::SynthOffset, key);
                p.base + p.base_spread * r.random_range(-1.0..=1.0)
            } else {
                p.base
            };
            let mut rng = stream(spec.seed, Purpose::SynthNoise, key);
            let innovation = p.noise_sd * (1.0 - p.ar1 * p.ar1).sqrt();
            let mut e = if p.noise_sd > 0.0 {
                p.noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            for t in 0..n_months {
                if t > 0 && p.noise_sd > 0.0 {
                    e = p.ar1 * e + innovation * rng.sample::<f64, _>(StandardNormal);
                }
                let (y, m) = (t / 12, t % 12);
                let x = base
                    + amp * (2.0 * PI * (m as f64 - phase) / 12.0).cos()
                    + trend * y as f64
                    + e;
                values[(vi * n_months + t) * n_cells + ci] = x as f32;
            }
        }
    }

    let cube = ClimateCube::new(variables, spec.start_year, n_months, grid, values)?;
    Ok(SynthOutput {
        cube,
        truth: SynthTruth { cells: truth },
    })
}
