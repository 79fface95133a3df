//! The variational loss and its exact gradient.
//!
//! The loss is the mean over inputs of the probability mass that falls outside
//! the projector block of the correct output. The gradient is accumulated by a
//! reverse sweep over the stored forward states: cotangents are pulled back
//! through each unitary by its adjoint and through each oracle by its (real,
//! self-adjoint) sign pattern, and each unitary's cotangent is converted to
//! generator parameters with [`expm_vjp`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boolfn::BooleanFunction;
use crate::error::{Error, Result};
use crate::linalg::{adjoint_matmul, matmul_adjoint};
use crate::qcircuit::{error_vector_raw, forward_trace_unchecked, CircuitConfig, OracleTable, ProjectorPartition};
use crate::uparam::{expm_vjp, param_count, unitary_from_slice, CMatrix, EigCache};
use num_complex::Complex64;

/// Trainable parameters `θ_0 … θ_t`, one `d_A² − 1` block per unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub dim: usize,
    pub layers: usize,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(dim: usize, layers: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || layers == 0 {
            return Err(Error::Shape("parameter vector needs dim >= 1 and at least one layer".into()));
        }
        if values.len() != layers * param_count(dim) {
            return Err(Error::Shape(format!(
                "{layers} generators of dimension {dim} need {} values, got {}",
                layers * param_count(dim),
                values.len()
            )));
        }
        Ok(Self { dim, layers, values })
    }

    pub fn zeros(config: &CircuitConfig) -> Self {
        let layers = config.t + 1;
        let dim = config.d_a();
        Self { dim, layers, values: vec![0.0; layers * param_count(dim)] }
    }

    /// Each value i.i.d. uniform on `[−scale, scale]`.
    pub fn random(config: &CircuitConfig, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        if scale > 0.0 {
            for v in &mut p.values {
                *v = rng.random_range(-scale..=scale);
            }
        }
        p
    }

    pub fn layer(&self, j: usize) -> &[f64] {
        let k = param_count(self.dim);
        &self.values[j * k..(j + 1) * k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Builds `U_0 … U_t`.
    pub fn unitaries(&self) -> Result<Vec<CMatrix>> {
        Ok(self.unitaries_with_cache()?.into_iter().map(|(u, _)| u).collect())
    }

    fn unitaries_with_cache(&self) -> Result<Vec<(CMatrix, EigCache)>> {
        (0..self.layers).map(|j| unitary_from_slice(self.dim, self.layer(j))).collect()
    }
}

/// Which statistic of the per-input errors the gradient refers to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    /// Worst input; the gradient is that of the current arg-max input.
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub mean_error: f64,
    pub max_error: f64,
    pub per_input: Vec<f64>,
    pub gradient: Option<Vec<f64>>,
}

impl LossReport {
    fn from_errors(per_input: Vec<f64>, gradient: Option<Vec<f64>>) -> Self {
        let mean_error = per_input.iter().sum::<f64>() / per_input.len() as f64;
        let max_error = per_input.iter().copied().fold(0.0, f64::max);
        Self { mean_error, max_error, per_input, gradient }
    }

    pub fn objective(&self, reduction: Reduction) -> f64 {
        match reduction {
            Reduction::Mean => self.mean_error,
            Reduction::Max => self.max_error,
        }
    }
}

/// A config/function pair with the oracle and projector tables precomputed,
/// ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CircuitProblem {
    config: CircuitConfig,
    classes: Vec<usize>,
    oracle: OracleTable,
    proj: ProjectorPartition,
    reduction: Reduction,
}

impl CircuitProblem {
    pub fn new(config: &CircuitConfig, f: &BooleanFunction) -> Result<Self> {
        config.validate_for(f)?;
        Ok(Self {
            config: config.clone(),
            classes: f.classes().to_vec(),
            oracle: OracleTable::new(f),
            proj: ProjectorPartition::new(config)?,
            reduction: Reduction::Mean,
        })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn config(&self) -> &CircuitConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        (self.config.t + 1) * param_count(self.config.d_a())
    }

    fn check(&self, params: &ParameterVector) -> Result<()> {
        if params.dim != self.config.d_a() || params.layers != self.config.t + 1 || params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "parameters are shaped for {} generators of dimension {}, circuit needs {} of dimension {}",
                params.layers,
                params.dim,
                self.config.t + 1,
                self.config.d_a()
            )));
        }
        Ok(())
    }

    /// Per-input errors for explicit unitaries (no unitarity check).
    pub fn errors_for_unitaries(&self, unitaries: &[CMatrix]) -> Vec<f64> {
        let trace = forward_trace_unchecked(&self.config, &self.oracle, unitaries);
        error_vector_raw(trace.last().expect("non-empty"), &self.classes, &self.proj)
    }

    pub fn loss(&self, params: &ParameterVector) -> Result<LossReport> {
        self.check(params)?;
        let unitaries = params.unitaries()?;
        Ok(LossReport::from_errors(self.errors_for_unitaries(&unitaries), None))
    }

    pub fn loss_and_grad(&self, params: &ParameterVector) -> Result<LossReport> {
        self.check(params)?;
        let layers = params.unitaries_with_cache()?;
        let unitaries: Vec<CMatrix> = layers.iter().map(|(u, _)| u.clone()).collect();
        let states = forward_trace_unchecked(&self.config, &self.oracle, &unitaries);
        let last = states.last().expect("non-empty");
        let per_input = error_vector_raw(last, &self.classes, &self.proj);

        let num_inputs = per_input.len();
        let weights: Vec<f64> = match self.reduction {
            Reduction::Mean => vec![1.0 / num_inputs as f64; num_inputs],
            Reduction::Max => {
                let worst = per_input
                    .iter()
                    .enumerate()
                    .fold(0, |best, (x, &e)| if e > per_input[best] { x } else { best });
                (0..num_inputs).map(|x| if x == worst { 1.0 } else { 0.0 }).collect()
            }
        };

        // For L = Σ_x w_x ψ_xᴴ Π⊥ ψ_x the cotangent of column x is 2·w_x·Π⊥ψ_x.
        let mut cot = last.clone();
        for (x, mut col) in cot.column_iter_mut().enumerate() {
            let block = self.proj.block(self.classes[x]);
            let scale = Complex64::new(2.0 * weights[x], 0.0);
            for (a, z) in col.iter_mut().enumerate() {
                *z = if block.contains(&a) { Complex64::new(0.0, 0.0) } else { *z * scale };
            }
        }

        let k = param_count(self.config.d_a());
        let mut gradient = vec![0.0; params.len()];
        for j in (0..layers.len()).rev() {
            // Input to U_j: O·|Ψ^(j−1)⟩ for j > 0, the initial batch for j = 0.
            let input = if j > 0 {
                let mut prev = states[j - 1].clone();
                self.oracle.apply_in_place(&mut prev, self.config.d_w);
                prev
            } else {
                crate::qcircuit::initial_batch(&self.config, num_inputs).into_amplitudes()
            };
            let cot_u = matmul_adjoint(&cot, &input);
            gradient[j * k..(j + 1) * k].copy_from_slice(&expm_vjp(&layers[j].1, &cot_u));
            if j > 0 {
                cot = adjoint_matmul(&layers[j].0, &cot);
                self.oracle.apply_in_place(&mut cot, self.config.d_w);
            }
        }
        Ok(LossReport::from_errors(per_input, Some(gradient)))
    }
}

/// Loss report without gradient.
pub fn loss(config: &CircuitConfig, f: &BooleanFunction, params: &ParameterVector) -> Result<LossReport> {
    CircuitProblem::new(config, f)?.loss(params)
}

/// Loss report with the gradient of the mean error.
pub fn loss_and_grad(config: &CircuitConfig, f: &BooleanFunction, params: &ParameterVector) -> Result<LossReport> {
    CircuitProblem::new(config, f)?.loss_and_grad(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolfn::{make_exact, make_mod, BooleanFunction};

    fn finite_difference(problem: &CircuitProblem, params: &ParameterVector, step: f64) -> Vec<f64> {
        (0..params.len())
            .map(|i| {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.values[i] += step;
                minus.values[i] -= step;
                let fp = problem.loss(&plus).unwrap().objective(problem.reduction());
                let fm = problem.loss(&minus).unwrap().objective(problem.reduction());
                (fp - fm) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn identity_circuit_leaves_inputs_in_first_block() {
        // t = 0 with U_0 = I keeps every state at e_0, inside the class-0 block.
        let f = BooleanFunction::from_table(2, &[("00".into(), 0), ("01".into(), 0), ("11".into(), 1)]).unwrap();
        let cfg = CircuitConfig::new(2, 0, 1, vec![2, 1]).unwrap();
        let p = ParameterVector::zeros(&cfg);
        let report = loss(&cfg, &f, &p).unwrap();
        assert_eq!(report.per_input, [0.0, 0.0, 1.0]);
        assert_eq!(report.max_error, 1.0);
    }

    #[test]
    fn loss_is_a_probability_average() {
        let f = make_mod(3, 3).unwrap();
        let cfg = CircuitConfig::new(3, 2, 2, vec![3, 3, 2]).unwrap();
        for seed in 0..10 {
            let p = ParameterVector::random(&cfg, 1.0, seed);
            let r = loss(&cfg, &f, &p).unwrap();
            assert!((0.0..=1.0).contains(&r.mean_error));
            assert!(r.mean_error <= r.max_error + 1e-15);
            assert!(r.max_error <= r.per_input.len() as f64 * r.mean_error + 1e-15);
            assert!(r.per_input.iter().all(|&e| (-1e-12..=1.0 + 1e-12).contains(&e)));
        }
    }

    #[test]
    fn shape_mismatch() {
        let f = make_mod(2, 2).unwrap();
        let cfg = CircuitConfig::new(2, 1, 1, vec![2, 1]).unwrap();
        let other = CircuitConfig::new(2, 2, 1, vec![2, 1]).unwrap();
        let p = ParameterVector::zeros(&other);
        assert!(matches!(loss(&cfg, &f, &p), Err(Error::Shape(_))));
        assert!(ParameterVector::new(3, 1, vec![0.0; 7]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = make_exact(3, 0, 2).unwrap();
        let cfg = CircuitConfig::new(3, 2, 2, vec![4, 4]).unwrap();
        let problem = CircuitProblem::new(&cfg, &f).unwrap();
        let p = ParameterVector::random(&cfg, 1.0, 11);
        let analytic = problem.loss_and_grad(&p).unwrap().gradient.unwrap();
        let numeric = finite_difference(&problem, &p, 1e-5);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            if n.abs() > 1e-8 {
                assert!((a - n).abs() / n.abs() < 1e-5 || (a - n).abs() < 1e-10, "coord {i}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn max_reduction_gradient_matches_finite_differences() {
        let f = make_mod(2, 2).unwrap();
        let cfg = CircuitConfig::new(2, 1, 1, vec![2, 1]).unwrap();
        let problem = CircuitProblem::new(&cfg, &f).unwrap().with_reduction(Reduction::Max);
        let p = ParameterVector::random(&cfg, 1.0, 3);
        let analytic = problem.loss_and_grad(&p).unwrap().gradient.unwrap();
        let numeric = finite_difference(&problem, &p, 1e-6);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn random_params_are_seeded() {
        let cfg = CircuitConfig::new(2, 1, 1, vec![2, 1]).unwrap();
        assert_eq!(ParameterVector::random(&cfg, 1.0, 5), ParameterVector::random(&cfg, 1.0, 5));
        assert_ne!(ParameterVector::random(&cfg, 1.0, 5), ParameterVector::random(&cfg, 1.0, 6));
        assert!(ParameterVector::random(&cfg, 0.5, 1).values.iter().all(|v| v.abs() <= 0.5));
    }
}
