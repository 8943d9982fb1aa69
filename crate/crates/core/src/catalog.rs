//! The eight monthly climate variables and their canonical order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A climate variable. Declaration order is the canonical (alphabetical)
/// order used for channel assignment and experiment numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableId {
    Cld,
    Dtr,
    Frs,
    Pet,
    Pre,
    Tmp,
    Vap,
    Wet,
}

impl VariableId {
    pub const ALL: [VariableId; 8] = [
        VariableId::Cld,
        VariableId::Dtr,
        VariableId::Frs,
        VariableId::Pet,
        VariableId::Pre,
        VariableId::Tmp,
        VariableId::Vap,
        VariableId::Wet,
    ];

    pub fn canonical_index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            VariableId::Cld => "cld",
            VariableId::Dtr => "dtr",
            VariableId::Frs => "frs",
            VariableId::Pet => "pet",
            VariableId::Pre => "pre",
            VariableId::Tmp => "tmp",
            VariableId::Vap => "vap",
            VariableId::Wet => "wet",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            VariableId::Cld => "%",
            VariableId::Dtr => "°C",
            VariableId::Frs => "days",
            VariableId::Pet => "mm d⁻¹",
            VariableId::Pre => "mm mo⁻¹",
            VariableId::Tmp => "°C",
            VariableId::Vap => "hPa",
            VariableId::Wet => "days",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            VariableId::Cld => "cloud cover",
            VariableId::Dtr => "diurnal temperature range",
            VariableId::Frs => "frost day frequency",
            VariableId::Pet => "potential evapotranspiration",
            VariableId::Pre => "precipitation",
            VariableId::Tmp => "daily mean temperature",
            VariableId::Vap => "vapor pressure",
            VariableId::Wet => "wet day frequency",
        }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for VariableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|v| v.code() == s)
            .ok_or_else(|| Error::Validation(format!("unknown variable code {s:?}")))
    }
}

/// Parses a comma-separated list such as `pet,tmp,vap`.
pub fn parse_variable_list(s: &str) -> Result<Vec<VariableId>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_index_is_a_bijection() {
        let mut seen = [false; 8];
        for v in VariableId::ALL {
            let i = v.canonical_index();
            assert!(!seen[i]);
            seen[i] = true;
            assert_eq!(VariableId::from_index(i), Some(v));
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(VariableId::from_index(8), None);
    }

    #[test]
    fn units_follow_catalog() {
        assert_eq!(VariableId::Tmp.units(), "°C");
        assert_eq!(VariableId::Pre.units(), "mm mo⁻¹");
        assert_eq!(VariableId::Pet.units(), "mm d⁻¹");
        assert_eq!(VariableId::Vap.units(), "hPa");
        assert_eq!(VariableId::Cld.units(), "%");
        assert_eq!(VariableId::Frs.units(), "days");
    }

    #[test]
    fn order_is_alphabetical() {
        let mut codes: Vec<_> = VariableId::ALL.iter().map(|v| v.code()).collect();
        let sorted = {
            let mut c = codes.clone();
            c.sort();
            c
        };
        assert_eq!(codes, sorted);
        codes.dedup();
        assert_eq!(codes.len(), 8);
    }

    #[test]
    fn parses_lists() {
        assert_eq!(
            parse_variable_list("pet, tmp,VAP").unwrap(),
            vec![VariableId::Pet, VariableId::Tmp, VariableId::Vap]
        );
        assert!(parse_variable_list("pet,xyz").is_err());
    }
}
