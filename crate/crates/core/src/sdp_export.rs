//! Export of a function and query count for an external lower-bound SDP.
//!
//! The file lists the domain, the canonical output labels, and the matrices
//! `E_0 … E_n` over the domain, with `E_0` all-ones and
//! `E_i[x, y] = (−1)^(x_i + y_i)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boolfn::{BooleanFunction, FunctionSpec};
use crate::error::{Error, Result};

/// Exports are refused above this domain size (the file grows as `n·|S|²`).
pub const MAX_EXPORT_DOMAIN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpExport {
    pub function: FunctionSpec,
    pub n: usize,
    pub t: usize,
    /// Bit strings, `x_1` first.
    pub domain: Vec<String>,
    /// Canonical labels `0..|T|` aligned with `domain`.
    pub labels: Vec<usize>,
    /// Original output values aligned with `domain`.
    pub outputs: Vec<i64>,
    /// `E_0 … E_n`, each `|S| × |S|` with entries ±1.
    pub e_matrices: Vec<Vec<Vec<i8>>>,
}

impl SdpExport {
    pub fn new(f: &BooleanFunction, t: usize) -> Result<Self> {
        let size = f.domain_size();
        if size > MAX_EXPORT_DOMAIN {
            return Err(Error::Parameter(format!(
                "domain of {size} inputs exceeds the export limit {MAX_EXPORT_DOMAIN}"
            )));
        }
        let signs: Vec<Vec<i8>> = (0..=f.n())
            .map(|i| f.domain().iter().map(|x| if x.bit(i) { -1 } else { 1 }).collect())
            .collect();
        let e_matrices = signs
            .iter()
            .map(|s| s.iter().map(|&a| s.iter().map(|&b| a * b).collect()).collect())
            .collect();
        Ok(Self {
            function: f.spec().clone(),
            n: f.n(),
            t,
            domain: f.domain().iter().map(ToString::to_string).collect(),
            labels: f.classes().to_vec(),
            outputs: f.classes().iter().map(|&c| f.outputs()[c]).collect(),
            e_matrices,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
