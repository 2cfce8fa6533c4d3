//! Named positive constants (`C1`, `C2`, …) for bounds and condition checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GmmError, Result};

/// Unset constants default to `1.0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Constants(BTreeMap<String, f64>);

impl Constants {
    pub fn new() -> Self {
        Constants::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    /// Parse `C1=2,C2=0.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut out = Constants::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                GmmError::InvalidInput(format!("constant '{part}' is not of the form key=value"))
            })?;
            let v: f64 = v.trim().parse().map_err(|_| {
                GmmError::InvalidInput(format!("constant '{k}' has a non-numeric value '{v}'"))
            })?;
            out.0.insert(k.trim().to_string(), v);
        }
        Ok(out)
    }

    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(1.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Values for `keys`, rejecting unknown keys and non-positive values.
    pub fn resolve(&self, keys: &[&str]) -> Result<BTreeMap<String, f64>> {
        if let Some(bad) = self.0.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(GmmError::InvalidInput(format!(
                "unknown constant '{bad}'; valid keys: {}",
                keys.join(", ")
            )));
        }
        keys.iter()
            .map(|&k| {
                let v = self.get(k);
                if v > 0.0 && v.is_finite() {
                    Ok((k.to_string(), v))
                } else {
                    Err(GmmError::InvalidInput(format!("constant {k} = {v} must be positive")))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_resolve() {
        let c = Constants::parse("C1=2, C3=0.5").unwrap();
        let r = c.resolve(&["C1", "C2", "C3"]).unwrap();
        assert_eq!(r["C1"], 2.0);
        assert_eq!(r["C2"], 1.0);
        assert_eq!(r["C3"], 0.5);
        assert!(c.resolve(&["C1"]).is_err());
        assert!(Constants::parse("C1").is_err());
        assert!(Constants::parse("C1=x").is_err());
        assert!(Constants::new().with("C1", -1.0).resolve(&["C1"]).is_err());
        assert!(Constants::parse("").unwrap().is_empty());
    }
}
