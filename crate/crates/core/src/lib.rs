//! Variational synthesis of quantum query algorithms for Boolean functions.
//!
//! A `t`-query algorithm alternates input-independent unitaries with the
//! phase oracle `O_x` on the accessible space (query index ⊗ workspace). Each
//! unitary is the exponential of a parameterized Hermitian generator; the
//! parameters are trained with L-BFGS against the mean probability of a wrong
//! output, and a run is certified exact when every input's error falls below
//! a threshold (default `1e-5`).

// `!(x < tol)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boolfn;
pub mod error;
mod linalg;
pub mod lossgrad;
pub mod optimizer;
pub mod qcircuit;
pub mod record;
pub mod sdp_export;
pub mod search;
pub mod uparam;

pub use boolfn::{make_exact, make_mod, BitString, BooleanFunction, FunctionSpec};
pub use error::{Error, Result};
pub use lossgrad::{loss, loss_and_grad, CircuitProblem, LossReport, ParameterVector, Reduction};
pub use optimizer::{
    lbfgs_minimize, optimize_circuit, ConvergedReason, Evaluation, OptimizeOutcome, OptimizerSettings, EPSILON_TOL,
};
pub use qcircuit::{BatchState, CircuitConfig, ProjectorPartition};
pub use record::{certify, CertifyReport, SolutionRecord};
pub use sdp_export::SdpExport;
pub use search::{search_qe, PartitionMode, SearchOutcome, SearchPlan, SummaryRow};
pub use uparam::{CMatrix, HermitianParams};
