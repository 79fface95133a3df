//! Solution records: everything needed to replay and re-certify a trained
//! circuit, serialized as JSON with complex entries written as `[re, im]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boolfn::{BooleanFunction, FunctionSpec};
use crate::error::{Error, Result};
use crate::lossgrad::CircuitProblem;
use crate::optimizer::{OptimizeOutcome, RestartSummary};
use crate::qcircuit::{forward_trace, gram, CircuitConfig};
use crate::uparam::{unitarity_defect, CMatrix};
use num_complex::Complex64;

pub const BASIS_CONVENTION: &str = "i*d_w+w";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Unitarity tolerance applied when certifying stored matrices.
pub const CERTIFY_UNITARY_TOL: f64 = 1e-8;
/// Stored errors must be reproduced to this accuracy on replay.
pub const REPLAY_TOL: f64 = 1e-10;
/// Gram matrices are only embedded for domains up to this size.
pub const MAX_GRAM_DOMAIN: usize = 256;

/// Row-major nested rows; each entry serializes as `[re, im]`.
pub type MatrixRows = Vec<Vec<Complex64>>;

pub fn to_rows(m: &CMatrix) -> MatrixRows {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &MatrixRows) -> Result<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("matrix rows are empty or ragged".into()));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub restart_index: usize,
    pub iterations: usize,
    pub converged_reason: String,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub toolkit_version: String,
    pub function: FunctionSpec,
    pub config: CircuitConfig,
    pub basis_convention: String,
    /// Certification threshold the record was produced for.
    pub epsilon: f64,
    pub seed: u64,
    pub certified: bool,
    pub mean_error: f64,
    pub max_error: f64,
    pub per_input_error: Vec<f64>,
    /// `U_0 … U_t`.
    pub unitaries: Vec<MatrixRows>,
    /// Raw generator parameters, for warm starts.
    pub parameters: Vec<f64>,
    /// `M^(j)` for `j = 1..=t`; omitted for large domains.
    #[serde(default)]
    pub gram: Option<Vec<MatrixRows>>,
    pub wall_time_seconds: f64,
    pub optimizer: OptimizerTrace,
}

impl SolutionRecord {
    pub fn from_outcome(
        f: &BooleanFunction,
        config: &CircuitConfig,
        outcome: &OptimizeOutcome,
        epsilon: f64,
        seed: u64,
        wall_time_seconds: f64,
    ) -> Result<Self> {
        let unitaries = outcome.best_params.unitaries()?;
        let gram_mats = if f.domain_size() <= MAX_GRAM_DOMAIN && config.t > 0 {
            let trace = forward_trace(config, f, &unitaries)?;
            Some(trace.iter().skip(1).map(|s| to_rows(&gram(s))).collect())
        } else {
            None
        };
        let report = &outcome.best_report;
        Ok(Self {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            function: f.spec().clone(),
            config: config.clone(),
            basis_convention: BASIS_CONVENTION.to_string(),
            epsilon,
            seed,
            certified: report.max_error < epsilon,
            mean_error: report.mean_error,
            max_error: report.max_error,
            per_input_error: report.per_input.clone(),
            unitaries: unitaries.iter().map(to_rows).collect(),
            parameters: outcome.best_params.values.clone(),
            gram: gram_mats,
            wall_time_seconds,
            optimizer: OptimizerTrace {
                restart_index: outcome.restart_index,
                iterations: outcome.iterations_used,
                converged_reason: outcome.converged_reason.to_string(),
                restarts: outcome.restarts.clone(),
            },
        })
    }

    pub fn unitary_matrices(&self) -> Result<Vec<CMatrix>> {
        self.unitaries.iter().map(from_rows).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
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

    /// Structural checks that do not need simulation.
    fn check_structure(&self) -> Result<(BooleanFunction, Vec<CMatrix>)> {
        if self.basis_convention != BASIS_CONVENTION {
            return Err(Error::Format(format!("unsupported basis convention {:?}", self.basis_convention)));
        }
        let f = self.function.build().map_err(|e| Error::Format(format!("function: {e}")))?;
        self.config.validate_for(&f).map_err(|e| Error::Format(format!("config: {e}")))?;
        let unitaries = self.unitary_matrices()?;
        let d = self.config.d_a();
        if unitaries.len() != self.config.t + 1 || unitaries.iter().any(|u| u.shape() != (d, d)) {
            return Err(Error::Format(format!(
                "expected {} unitaries of size {d}x{d}",
                self.config.t + 1
            )));
        }
        if self.per_input_error.len() != f.domain_size() {
            return Err(Error::Format(format!(
                "{} stored errors for a domain of {}",
                self.per_input_error.len(),
                f.domain_size()
            )));
        }
        Ok((f, unitaries))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub certified: bool,
    pub epsilon: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub per_input: Vec<f64>,
    /// Largest `‖UᴴU − I‖_F` over the stored unitaries.
    pub max_unitarity_defect: f64,
    /// Largest deviation between replayed and stored per-input errors.
    pub max_replay_deviation: f64,
}

/// Re-simulates the stored unitaries and checks exactness at `epsilon`.
pub fn certify(record: &SolutionRecord, epsilon: f64) -> Result<CertifyReport> {
    let (f, unitaries) = record.check_structure()?;
    let max_unitarity_defect = unitaries.iter().map(unitarity_defect).fold(0.0, f64::max);
    let problem = CircuitProblem::new(&record.config, &f)?;
    let per_input = problem.errors_for_unitaries(&unitaries);
    let mean_error = per_input.iter().sum::<f64>() / per_input.len() as f64;
    let max_error = per_input.iter().copied().fold(0.0, f64::max);
    let max_replay_deviation = per_input
        .iter()
        .zip(&record.per_input_error)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let certified = max_error < epsilon && max_unitarity_defect < CERTIFY_UNITARY_TOL && max_error.is_finite();
    Ok(CertifyReport { certified, epsilon, mean_error, max_error, per_input, max_unitarity_defect, max_replay_deviation })
}
