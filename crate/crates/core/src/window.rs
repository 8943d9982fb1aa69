//! Training/labeling windows and the five-category change labels.

use serde::{Deserialize, Serialize};

use crate::catalog::VariableId;
use crate::cube::ClimateCube;
use crate::error::{Error, Result};

pub const DEFAULT_TRAINING_YEARS: usize = 30;
pub const DEFAULT_LABELING_YEARS: usize = 10;

/// A training period immediately followed by a labeling period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    /// First month of the training period; always a multiple of 12.
    pub start_month_index: usize,
    pub training_years: usize,
    pub labeling_years: usize,
}

impl WindowSpec {
    pub fn start_year_offset(&self) -> usize {
        self.start_month_index / 12
    }

    pub fn training_months(&self) -> std::ops::Range<usize> {
        self.start_month_index..self.start_month_index + 12 * self.training_years
    }

    pub fn labeling_months(&self) -> std::ops::Range<usize> {
        let end = self.training_months().end;
        end..end + 12 * self.labeling_years
    }

    pub fn span_years(&self) -> usize {
        self.training_years + self.labeling_years
    }
}

pub fn enumerate_windows(
    n_years: usize,
    training_years: usize,
    labeling_years: usize,
) -> Result<Vec<WindowSpec>> {
    if training_years == 0 || labeling_years == 0 {
        return Err(Error::Config(
            "window periods must be at least one year".into(),
        ));
    }
    let span = training_years + labeling_years;
    if n_years < span {
        return Err(Error::EmptyDomain(format!(
            "{n_years} years cannot hold a {training_years}+{labeling_years} year window"
        )));
    }
    Ok((0..=n_years - span)
        .map(|y| WindowSpec {
            start_month_index: 12 * y,
            training_years,
            labeling_years,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendDelta {
    pub mu_train: f64,
    pub mu_label: f64,
    pub delta: f64,
}

/// Mean change of `target` from the training to the labeling period.
///
/// Returns `Ok(None)` when either period contains a missing value, which
/// excludes the window.
pub fn trend_delta(
    cube: &ClimateCube,
    cell: usize,
    target: VariableId,
    w: &WindowSpec,
) -> Result<Option<TrendDelta>> {
    let var = cube.require_var(target)?;
    if w.labeling_months().end > cube.n_months() {
        return Err(Error::Domain(format!(
            "window ending at month {} exceeds the cube's {} months",
            w.labeling_months().end,
            cube.n_months()
        )));
    }
    let mean = |months: std::ops::Range<usize>| -> Option<f64> {
        let n = months.len() as f64;
        let mut sum = 0.0;
        for t in months {
            let x = cube.value(var, t, cell);
            if x.is_nan() {
                return None;
            }
            sum += x as f64;
        }
        Some(sum / n)
    };
    let (Some(mu_train), Some(mu_label)) = (mean(w.training_months()), mean(w.labeling_months()))
    else {
        return Ok(None);
    };
    Ok(Some(TrendDelta {
        mu_train,
        mu_label,
        delta: mu_label - mu_train,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelFamily {
    T,
    P,
}

/// Ordinal 1 is the largest rise and 5 the largest fall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelCategory {
    pub family: LabelFamily,
    pub ordinal: u8,
}

impl LabelCategory {
    pub fn new(family: LabelFamily, ordinal: u8) -> Result<Self> {
        if !(1..=5).contains(&ordinal) {
            return Err(Error::Validation(format!(
                "label ordinal {ordinal} outside 1..5"
            )));
        }
        Ok(Self { family, ordinal })
    }

    /// Zero-based class index used by the network.
    pub fn class_index(&self) -> usize {
        self.ordinal as usize - 1
    }
}

impl std::fmt::Display for LabelCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self.family {
            LabelFamily::T => 'T',
            LabelFamily::P => 'P',
        };
        write!(f, "{c}{}", self.ordinal)
    }
}

/// Descending lower bounds of categories 1 through 4; anything below the
/// last bound is category 5. Each bound is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(pub [f64; 4]);

impl Thresholds {
    pub const TMP: Thresholds = Thresholds([5.0, 2.5, 0.0, -2.5]);
    pub const PRE: Thresholds = Thresholds([30.0, 10.0, -10.0, -30.0]);

    pub fn validate(&self) -> Result<()> {
        let t = self.0;
        if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|p| p[0] <= p[1]) {
            return Err(Error::Config(format!(
                "thresholds {t:?} must be finite and strictly decreasing"
            )));
        }
        Ok(())
    }

    pub fn ordinal(&self, delta: f64) -> Result<u8> {
        if !delta.is_finite() {
            return Err(Error::Domain(format!("non-finite delta {delta}")));
        }
        Ok(self
            .0
            .iter()
            .position(|&b| delta >= b)
            .map_or(5, |i| i as u8 + 1))
    }
}

pub fn label_with(
    family: LabelFamily,
    thresholds: &Thresholds,
    delta: f64,
) -> Result<LabelCategory> {
    Ok(LabelCategory {
        family,
        ordinal: thresholds.ordinal(delta)?,
    })
}

/// Temperature change label (°C).
pub fn label_tmp(delta: f64) -> Result<LabelCategory> {
    label_with(LabelFamily::T, &Thresholds::TMP, delta)
}

/// Precipitation change label (mm mo⁻¹).
pub fn label_pre(delta: f64) -> Result<LabelCategory> {
    label_with(LabelFamily::P, &Thresholds::PRE, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::GridCell;

    #[test]
    fn window_counts() {
        assert_eq!(enumerate_windows(116, 30, 10).unwrap().len(), 77);
        assert_eq!(enumerate_windows(40, 30, 10).unwrap().len(), 1);
        assert_eq!(enumerate_windows(116, 10, 10).unwrap().len(), 97);
        assert!(matches!(
            enumerate_windows(39, 30, 10),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn windows_are_contiguous() {
        for w in enumerate_windows(60, 30, 10).unwrap() {
            assert_eq!(w.training_months().end, w.labeling_months().start);
            assert_eq!(w.labeling_months().end - w.training_months().start, 12 * 40);
        }
    }

    fn series(values: Vec<f32>) -> ClimateCube {
        let n = values.len();
        ClimateCube::new(
            vec![VariableId::Tmp],
            1901,
            n,
            vec![GridCell {
                cell_id: 0,
                lat: 0.0,
                lon: 0.0,
            }],
            values,
        )
        .unwrap()
    }

    #[test]
    fn constant_series_has_no_change() {
        let cube = series(vec![5.0; 480]);
        let w = enumerate_windows(40, 30, 10).unwrap()[0];
        let d = trend_delta(&cube, 0, VariableId::Tmp, &w).unwrap().unwrap();
        assert_eq!(d.delta, 0.0);
        assert_eq!(d.mu_train, 5.0);
    }

    #[test]
    fn missing_value_excludes_window() {
        let mut v = vec![5.0; 600];
        v[500] = f32::NAN;
        let cube = series(v);
        let ws = enumerate_windows(50, 30, 10).unwrap();
        assert!(trend_delta(&cube, 0, VariableId::Tmp, &ws[0])
            .unwrap()
            .is_some());
        assert!(trend_delta(&cube, 0, VariableId::Tmp, &ws[9])
            .unwrap()
            .is_none());
        assert!(matches!(
            trend_delta(&cube, 0, VariableId::Pre, &ws[0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn boundary_table() {
        let t = |d| label_tmp(d).unwrap().ordinal;
        let p = |d| label_pre(d).unwrap().ordinal;
        assert_eq!(
            (t(5.0), t(3.0), t(2.5), t(0.0), t(-2.5), t(-2.6)),
            (1, 2, 2, 3, 4, 5)
        );
        assert_eq!(
            (p(30.0), p(10.0), p(9.9), p(-10.0), p(-30.0), p(-30.1)),
            (1, 2, 3, 3, 4, 5)
        );
        assert!(matches!(label_tmp(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(label_pre(f64::INFINITY), Err(Error::Domain(_))));
        assert_eq!(label_pre(0.0).unwrap().to_string(), "P3");
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::TMP.validate().is_ok());
        assert!(Thresholds([1.0, 1.0, 0.0, -1.0]).validate().is_err());
        assert!(LabelCategory::new(LabelFamily::T, 6).is_err());
    }
}
