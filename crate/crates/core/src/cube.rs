//! In-memory climate cube and the `VCUBE1` file format.
//!
//! Layout of a `VCUBE1` file (all integers and floats little-endian):
//!
//! ```text
//! magic       6 bytes   "VCUBE1"
//! version     u16       1
//! n_vars      u32
//! n_months    u32       multiple of 12, January first
//! n_cells     u32
//! start_year  i32
//! variables   n_vars × u8       canonical index (cld=0 … wet=7)
//! grid        n_cells × (u32 cell_id, f64 lat, f64 lon)
//! payload     n_vars × n_months × n_cells × f32, ordered [variable][month][cell]
//! ```
//!
//! Missing values are stored as the canonical quiet NaN `0x7FC00000`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::VariableId;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"VCUBE1";
pub const VERSION: u16 = 1;
pub const MISSING: f32 = f32::NAN;
const CANONICAL_NAN_BITS: u32 = 0x7FC0_0000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cell_id: u32,
    pub lat: f64,
    pub lon: f64,
}

/// Monthly values for a set of variables over a set of grid cells.
#[derive(Debug, Clone)]
pub struct ClimateCube {
    variables: Vec<VariableId>,
    start_year: i32,
    n_months: usize,
    grid: Vec<GridCell>,
    values: Vec<f32>,
}

impl PartialEq for ClimateCube {
    /// Field-wise equality with values compared bit-for-bit, so missing
    /// entries compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.start_year == other.start_year
            && self.n_months == other.n_months
            && self.grid == other.grid
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ClimateCube {
    pub fn new(
        variables: Vec<VariableId>,
        start_year: i32,
        n_months: usize,
        grid: Vec<GridCell>,
        mut values: Vec<f32>,
    ) -> Result<Self> {
        for v in values.iter_mut() {
            if v.is_nan() {
                *v = f32::from_bits(CANONICAL_NAN_BITS);
            }
        }
        let cube = Self {
            variables,
            start_year,
            n_months,
            grid,
            values,
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_months == 0 || !self.n_months.is_multiple_of(12) {
            return Err(Error::Validation(format!(
                "n_months must be a positive multiple of 12, got {}",
                self.n_months
            )));
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if !seen.insert(*v) {
                return Err(Error::Validation(format!("duplicate variable {v}")));
            }
        }
        let mut ids = HashSet::new();
        for c in &self.grid {
            if !ids.insert(c.cell_id) {
                return Err(Error::Validation(format!(
                    "duplicate cell id {}",
                    c.cell_id
                )));
            }
            if !(-90.0..=90.0).contains(&c.lat) {
                return Err(Error::Validation(format!(
                    "cell {} latitude {} out of range",
                    c.cell_id, c.lat
                )));
            }
            if !(-180.0..180.0).contains(&c.lon) {
                return Err(Error::Validation(format!(
                    "cell {} longitude {} out of range",
                    c.cell_id, c.lon
                )));
            }
        }
        let expected = self.variables.len() * self.n_months * self.grid.len();
        if self.values.len() != expected {
            return Err(Error::Length(format!(
                "expected {expected} values ({} variables × {} months × {} cells), got {}",
                self.variables.len(),
                self.n_months,
                self.grid.len(),
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn variables(&self) -> &[VariableId] {
        &self.variables
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn n_months(&self) -> usize {
        self.n_months
    }

    pub fn n_years(&self) -> usize {
        self.n_months / 12
    }

    pub fn grid(&self) -> &[GridCell] {
        &self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn var_index(&self, v: VariableId) -> Option<usize> {
        self.variables.iter().position(|&x| x == v)
    }

    pub fn require_var(&self, v: VariableId) -> Result<usize> {
        self.var_index(v)
            .ok_or_else(|| Error::Validation(format!("cube has no variable {v}")))
    }

    #[inline]
    pub fn value(&self, var: usize, month: usize, cell: usize) -> f32 {
        self.values[(var * self.n_months + month) * self.grid.len() + cell]
    }

    /// All entries of one variable, `[month][cell]`.
    pub fn variable_values(&self, var: usize) -> &[f32] {
        let n = self.n_months * self.grid.len();
        &self.values[var * n..(var + 1) * n]
    }
}

pub fn encode_cube(cube: &ClimateCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + cube.grid.len() * 20 + cube.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cube.variables.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cube.n_months as u32).to_le_bytes());
    out.extend_from_slice(&(cube.grid.len() as u32).to_le_bytes());
    out.extend_from_slice(&cube.start_year.to_le_bytes());
    out.extend(cube.variables.iter().map(|v| v.canonical_index() as u8));
    for c in &cube.grid {
        out.extend_from_slice(&c.cell_id.to_le_bytes());
        out.extend_from_slice(&c.lat.to_le_bytes());
        out.extend_from_slice(&c.lon.to_le_bytes());
    }
    for v in &cube.values {
        let bits = if v.is_nan() {
            CANONICAL_NAN_BITS
        } else {
            v.to_bits()
        };
        out.extend_from_slice(&bits.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Length(format!(
                "truncated {what}: need {n} bytes at offset {}, {} remain",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode_cube(bytes: &[u8]) -> Result<ClimateCube> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r
        .take(6, "magic")
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"VCUBE1\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported VCUBE version {version}"
        )));
    }
    let n_vars = r.u32("header")? as usize;
    let n_months = r.u32("header")? as usize;
    let n_cells = r.u32("header")? as usize;
    let start_year = i32::from_le_bytes(r.take(4, "header")?.try_into().expect("4 bytes"));
    let variables = r
        .take(n_vars, "variable table")?
        .iter()
        .map(|&i| {
            VariableId::from_index(i as usize)
                .ok_or_else(|| Error::Format(format!("unknown variable index {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grid = Vec::with_capacity(n_cells.min(1 << 20));
    for _ in 0..n_cells {
        grid.push(GridCell {
            cell_id: r.u32("grid table")?,
            lat: r.f64("grid table")?,
            lon: r.f64("grid table")?,
        });
    }
    let n_values = n_vars * n_months * n_cells;
    let remaining = bytes.len() - r.pos;
    if remaining != n_values * 4 {
        return Err(Error::Length(format!(
            "payload holds {remaining} bytes, header implies {} ({n_vars} variables × {n_months} months × {n_cells} cells × 4)",
            n_values * 4
        )));
    }
    let values = r
        .take(n_values * 4, "payload")?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    ClimateCube::new(variables, start_year, n_months, grid, values)
}

pub fn save_cube(cube: &ClimateCube, path: impl AsRef<Path>) -> Result<()> {
    cube.validate()?;
    let path = path.as_ref();
    std::fs::write(path, encode_cube(cube)).map_err(|e| Error::io(path, e))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<ClimateCube> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

/// Per-variable min/max over all non-missing cube entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub ranges: Vec<(VariableId, ValueRange)>,
}

impl ScalingStats {
    pub fn range(&self, v: VariableId) -> Option<ValueRange> {
        self.ranges.iter().find(|(x, _)| *x == v).map(|(_, r)| *r)
    }
}

/// Min/max of every cube variable.
pub fn global_minmax(cube: &ClimateCube) -> Result<ScalingStats> {
    global_minmax_of(cube, cube.variables())
}

/// Min/max of the listed variables only.
pub fn global_minmax_of(cube: &ClimateCube, vars: &[VariableId]) -> Result<ScalingStats> {
    let mut ranges = Vec::with_capacity(vars.len());
    for &v in vars {
        let idx = cube.require_var(v)?;
        let (min, max) = cube
            .variable_values(idx)
            .iter()
            .filter(|x| !x.is_nan())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x as f64), hi.max(x as f64))
            });
        if min > max {
            return Err(Error::Statistics(format!(
                "variable {v} has no non-missing values"
            )));
        }
        ranges.push((v, ValueRange { min, max }));
    }
    Ok(ScalingStats { ranges })
}
