//! Accessible-space simulation of a `t`-query algorithm for all inputs at once.
//!
//! The accessible space is `H_Q ⊗ H_W` with `d_q = n + 1` query indices and
//! `d_w` workspace dimensions. Basis index `a = i·d_w + w` for query index `i`
//! and workspace index `w`. A [`BatchState`] holds one column per domain input,
//! in domain order, so a unitary layer is a single matrix product.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::boolfn::{BitString, BooleanFunction};
use crate::error::{Error, Result};
use crate::linalg::{adjoint_matmul, matmul};
use crate::uparam::{unitarity_defect, CMatrix};
use num_complex::Complex64;

/// Unitarity tolerance (Frobenius) for matrices handed to the simulator.
pub const UNITARY_TOL: f64 = 1e-10;

/// Problem geometry: input length, query count, workspace size and output blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub n: usize,
    pub t: usize,
    pub d_w: usize,
    /// Output-subspace dimensions, one per canonical output class.
    pub partition: Vec<usize>,
}

impl CircuitConfig {
    pub fn new(n: usize, t: usize, d_w: usize, partition: Vec<usize>) -> Result<Self> {
        let cfg = Self { n, t, d_w, partition };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Parameter("n must be positive".into()));
        }
        if self.d_w == 0 {
            return Err(Error::Parameter("d_w must be at least 1".into()));
        }
        if self.partition.is_empty() || self.partition.contains(&0) {
            return Err(Error::Parameter(format!(
                "partition {:?} must be non-empty with positive entries",
                self.partition
            )));
        }
        let total: usize = self.partition.iter().sum();
        if total > self.d_a() {
            return Err(Error::Parameter(format!(
                "partition {:?} sums to {total}, more than d_A = {}",
                self.partition,
                self.d_a()
            )));
        }
        Ok(())
    }

    /// Checks the config against the function it is meant to compute.
    pub fn validate_for(&self, f: &BooleanFunction) -> Result<()> {
        self.validate()?;
        if self.n != f.n() {
            return Err(Error::Parameter(format!("config has n = {}, function has n = {}", self.n, f.n())));
        }
        if self.partition.len() != f.num_outputs() {
            return Err(Error::Parameter(format!(
                "partition has {} blocks but the function has {} outputs",
                self.partition.len(),
                f.num_outputs()
            )));
        }
        Ok(())
    }

    pub fn d_q(&self) -> usize {
        self.n + 1
    }

    pub fn d_a(&self) -> usize {
        self.d_q() * self.d_w
    }
}

/// Contiguous diagonal projector blocks, one per output class.
///
/// Dimensions beyond `sum(partition)` belong to no block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectorPartition {
    dim: usize,
    blocks: Vec<Range<usize>>,
}

impl ProjectorPartition {
    pub fn new(config: &CircuitConfig) -> Result<Self> {
        config.validate()?;
        let mut start = 0;
        let blocks = config
            .partition
            .iter()
            .map(|&size| {
                let r = start..start + size;
                start += size;
                r
            })
            .collect();
        Ok(Self { dim: config.d_a(), blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block(&self, class: usize) -> Range<usize> {
        self.blocks[class].clone()
    }

    /// Diagonal of `Π_z` as 0/1 entries.
    pub fn projector_diagonal(&self, class: usize) -> Vec<f64> {
        let r = &self.blocks[class];
        (0..self.dim).map(|a| if r.contains(&a) { 1.0 } else { 0.0 }).collect()
    }
}

/// Amplitudes of the accessible-space state for every input (one column each).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    amplitudes: CMatrix,
    d_w: usize,
}

impl BatchState {
    pub fn from_amplitudes(amplitudes: CMatrix, d_w: usize) -> Result<Self> {
        if d_w == 0 || !amplitudes.nrows().is_multiple_of(d_w) || amplitudes.nrows() / d_w < 2 {
            return Err(Error::Shape(format!(
                "{} rows cannot be split into query blocks of size {d_w}",
                amplitudes.nrows()
            )));
        }
        Ok(Self { amplitudes, d_w })
    }

    pub fn amplitudes(&self) -> &CMatrix {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CMatrix {
        self.amplitudes
    }

    pub fn d_w(&self) -> usize {
        self.d_w
    }

    pub fn d_a(&self) -> usize {
        self.amplitudes.nrows()
    }

    /// Number of query indices `n + 1`.
    pub fn d_q(&self) -> usize {
        self.amplitudes.nrows() / self.d_w
    }

    pub fn num_inputs(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.amplitudes.column_iter().map(|c| c.norm()).collect()
    }
}

/// All inputs start in `|0⟩|0⟩`.
pub fn initial_batch(config: &CircuitConfig, domain_size: usize) -> BatchState {
    let mut amplitudes = CMatrix::zeros(config.d_a(), domain_size);
    for x in 0..domain_size {
        amplitudes[(0, x)] = Complex64::new(1.0, 0.0);
    }
    BatchState { amplitudes, d_w: config.d_w }
}

/// `s[i] = (−1)^{x_i}` for `i = 0..=n`, with `x_0 = 0`.
pub fn oracle_signs(x: &BitString, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if x.bit(i) { -1.0 } else { 1.0 }).collect()
}

/// Oracle sign pattern for every domain input: entry `[x][i]`.
#[derive(Debug, Clone)]
pub struct OracleTable {
    n: usize,
    signs: Vec<Vec<f64>>,
}

impl OracleTable {
    pub fn new(f: &BooleanFunction) -> Self {
        let signs = f.domain().iter().map(|x| oracle_signs(x, f.n())).collect();
        Self { n: f.n(), signs }
    }

    pub fn num_inputs(&self) -> usize {
        self.signs.len()
    }

    /// Multiplies query block `i` of column `x` by `s_x[i]`, in place.
    pub(crate) fn apply_in_place(&self, amplitudes: &mut CMatrix, d_w: usize) {
        for (x, signs) in self.signs.iter().enumerate() {
            let mut col = amplitudes.column_mut(x);
            for (i, &s) in signs.iter().enumerate().skip(1) {
                if s < 0.0 {
                    for w in 0..d_w {
                        col[i * d_w + w] = -col[i * d_w + w];
                    }
                }
            }
        }
    }

    fn check(&self, state: &BatchState) -> Result<()> {
        if state.num_inputs() != self.signs.len() || state.d_q() != self.n + 1 {
            return Err(Error::Shape(format!(
                "state is {}x{} with d_w = {}, oracle expects {} query blocks and {} inputs",
                state.d_a(),
                state.num_inputs(),
                state.d_w,
                self.n + 1,
                self.signs.len()
            )));
        }
        Ok(())
    }
}

/// Applies `O_x` to every column.
pub fn apply_oracle(state: &BatchState, f: &BooleanFunction) -> Result<BatchState> {
    let table = OracleTable::new(f);
    table.check(state)?;
    let mut out = state.clone();
    table.apply_in_place(&mut out.amplitudes, out.d_w);
    Ok(out)
}

fn check_unitary(u: &CMatrix, d_a: usize) -> Result<()> {
    if u.nrows() != d_a || u.ncols() != d_a {
        return Err(Error::Shape(format!("unitary is {}x{}, expected {d_a}x{d_a}", u.nrows(), u.ncols())));
    }
    let defect = unitarity_defect(u);
    if !(defect < UNITARY_TOL) {
        return Err(Error::Numerical(format!("matrix is not unitary (‖UᴴU − I‖_F = {defect:e})")));
    }
    Ok(())
}

/// `amplitudes ← U·amplitudes`.
pub fn apply_unitary(state: &BatchState, u: &CMatrix) -> Result<BatchState> {
    check_unitary(u, state.d_a())?;
    Ok(BatchState { amplitudes: matmul(u, &state.amplitudes), d_w: state.d_w })
}

/// States after each unitary layer `U_0 … U_t` (entry `j` is `|Ψ^(j)⟩`), without
/// unitarity checks.
pub(crate) fn forward_trace_unchecked(
    config: &CircuitConfig,
    oracle: &OracleTable,
    unitaries: &[CMatrix],
) -> Vec<CMatrix> {
    let mut states = Vec::with_capacity(unitaries.len());
    let mut current = initial_batch(config, oracle.num_inputs()).amplitudes;
    for (j, u) in unitaries.iter().enumerate() {
        if j > 0 {
            oracle.apply_in_place(&mut current, config.d_w);
        }
        current = matmul(u, &current);
        states.push(current.clone());
    }
    states
}

fn check_forward_inputs(config: &CircuitConfig, f: &BooleanFunction, unitaries: &[CMatrix]) -> Result<()> {
    config.validate_for(f)?;
    if unitaries.len() != config.t + 1 {
        return Err(Error::Shape(format!("expected {} unitaries, got {}", config.t + 1, unitaries.len())));
    }
    for u in unitaries {
        check_unitary(u, config.d_a())?;
    }
    Ok(())
}

/// `U_t O_x U_{t−1} … O_x U_0 |0⟩|0⟩` for every input.
pub fn forward(config: &CircuitConfig, f: &BooleanFunction, unitaries: &[CMatrix]) -> Result<BatchState> {
    let mut trace = forward_trace(config, f, unitaries)?;
    Ok(trace.pop().expect("t + 1 >= 1 states"))
}

/// Every intermediate state `|Ψ^(j)⟩`, `j = 0..=t`.
pub fn forward_trace(config: &CircuitConfig, f: &BooleanFunction, unitaries: &[CMatrix]) -> Result<Vec<BatchState>> {
    check_forward_inputs(config, f, unitaries)?;
    let oracle = OracleTable::new(f);
    Ok(forward_trace_unchecked(config, &oracle, unitaries)
        .into_iter()
        .map(|amplitudes| BatchState { amplitudes, d_w: config.d_w })
        .collect())
}

/// Probability mass outside the block of the correct output, per input.
pub fn error_vector(state: &BatchState, f: &BooleanFunction, proj: &ProjectorPartition) -> Result<Vec<f64>> {
    if state.num_inputs() != f.domain_size() || state.d_a() != proj.dim() {
        return Err(Error::Shape(format!(
            "state is {}x{}, expected {}x{}",
            state.d_a(),
            state.num_inputs(),
            proj.dim(),
            f.domain_size()
        )));
    }
    Ok(error_vector_raw(&state.amplitudes, f.classes(), proj))
}

pub(crate) fn error_vector_raw(amplitudes: &CMatrix, classes: &[usize], proj: &ProjectorPartition) -> Vec<f64> {
    amplitudes
        .column_iter()
        .zip(classes)
        .map(|(col, &z)| {
            let block = &proj.blocks[z];
            col.iter()
                .enumerate()
                .filter(|(a, _)| !block.contains(a))
                .map(|(_, amp)| amp.norm_sqr())
                .sum()
        })
        .collect()
}

/// `M[x, y] = ⟨Ψ_x|Ψ_y⟩`.
pub fn gram(state: &BatchState) -> CMatrix {
    adjoint_matmul(&state.amplitudes, &state.amplitudes)
}

/// Gram matrix of the query-block-`i` components `|Ψ_{x,i}⟩ ∈ H_W`.
pub fn gram_by_query_index(state: &BatchState, i: usize) -> Result<CMatrix> {
    if i >= state.d_q() {
        return Err(Error::Parameter(format!("query index {i} out of range 0..{}", state.d_q())));
    }
    let rows = state.amplitudes.rows(i * state.d_w, state.d_w);
    Ok(rows.adjoint() * rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolfn::{make_mod, BooleanFunction};
    use crate::uparam::unitary_from_slice;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
        let theta: Vec<f64> = (0..d * d - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        unitary_from_slice(d, &theta).unwrap().0
    }

    fn one_bit() -> BooleanFunction {
        BooleanFunction::from_table(1, &[("0".into(), 0), ("1".into(), 1)]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(CircuitConfig::new(2, 1, 1, vec![2, 1]).is_ok());
        assert!(CircuitConfig::new(2, 1, 1, vec![2, 2]).is_err());
        assert!(CircuitConfig::new(2, 1, 0, vec![1, 1]).is_err());
        assert!(CircuitConfig::new(2, 1, 1, vec![0, 1]).is_err());
        let cfg = CircuitConfig::new(5, 4, 2, vec![2, 4, 1, 1, 4]).unwrap();
        assert_eq!((cfg.d_q(), cfg.d_a()), (6, 12));
        let f = make_mod(5, 5).unwrap();
        assert!(cfg.validate_for(&f).is_ok());
        let wrong = CircuitConfig::new(5, 4, 2, vec![6, 6]).unwrap();
        assert!(wrong.validate_for(&f).is_err());
    }

    #[test]
    fn initial_batch_is_e0() {
        let cfg = CircuitConfig::new(5, 4, 2, vec![2, 4, 1, 1, 4]).unwrap();
        let s = initial_batch(&cfg, 32);
        assert_eq!(s.amplitudes().shape(), (12, 32));
        for x in 0..32 {
            assert_eq!(s.amplitudes()[(0, x)], c(1.0));
            assert!((1..12).all(|a| s.amplitudes()[(a, x)] == c(0.0)));
        }
        assert!(s.column_norms().iter().all(|&v| v == 1.0));
        let tiny = initial_batch(&CircuitConfig::new(2, 0, 1, vec![1, 1]).unwrap(), 1);
        assert_eq!(tiny.amplitudes().as_slice(), &[c(1.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn oracle_sign_examples() {
        let s = |x: &str| oracle_signs(&x.parse().unwrap(), x.len());
        assert_eq!(s("10"), [1.0, -1.0, 1.0]);
        assert_eq!(s("000"), [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(s("111"), [1.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn oracle_flips_queried_block() {
        let f = one_bit();
        let amps = CMatrix::from_row_slice(2, 2, &[c(0.6), c(0.6), c(0.8), c(0.8)]);
        let s = BatchState::from_amplitudes(amps.clone(), 1).unwrap();
        let o = apply_oracle(&s, &f).unwrap();
        // column 0 is x = 0 (unchanged), column 1 is x = 1 (row 1 negated)
        assert_eq!(o.amplitudes().column(0), amps.column(0));
        assert_eq!(o.amplitudes()[(0, 1)], c(0.6));
        assert_eq!(o.amplitudes()[(1, 1)], c(-0.8));
        let back = apply_oracle(&o, &f).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn oracle_shape_error() {
        let f = make_mod(2, 2).unwrap();
        let s = initial_batch(&CircuitConfig::new(2, 1, 1, vec![2, 1]).unwrap(), 3);
        assert!(matches!(apply_oracle(&s, &f), Err(Error::Shape(_))));
    }

    #[test]
    fn unitary_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = CircuitConfig::new(3, 1, 2, vec![4, 4]).unwrap();
        let s = initial_batch(&cfg, 8);
        let id = CMatrix::identity(8, 8);
        assert_eq!(apply_unitary(&s, &id).unwrap(), s);
        let u = random_unitary(&mut rng, 8);
        let out = apply_unitary(&s, &u).unwrap();
        for norm in out.column_norms() {
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
        for x in 0..8 {
            let expected = &u * s.amplitudes().column(x);
            assert_abs_diff_eq!((out.amplitudes().column(x) - expected).norm(), 0.0, epsilon = 1e-15);
        }
        let bad = &u * c(1.01);
        assert!(matches!(apply_unitary(&s, &bad), Err(Error::Numerical(_))));
        assert!(matches!(apply_unitary(&s, &CMatrix::identity(4, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_trivial_cases() {
        let f = one_bit();
        let cfg0 = CircuitConfig::new(1, 0, 1, vec![1, 1]).unwrap();
        let out = forward(&cfg0, &f, &[CMatrix::identity(2, 2)]).unwrap();
        assert_eq!(out, initial_batch(&cfg0, 2));
        let cfg1 = CircuitConfig::new(1, 1, 1, vec![1, 1]).unwrap();
        let out = forward(&cfg1, &f, &[CMatrix::identity(2, 2), CMatrix::identity(2, 2)]).unwrap();
        assert_eq!(out, initial_batch(&cfg1, 2));
        assert!(matches!(forward(&cfg1, &f, &[CMatrix::identity(2, 2)]), Err(Error::Shape(_))));
    }

    #[test]
    fn error_vector_examples() {
        let f = make_mod(2, 2).unwrap();
        let cfg = CircuitConfig::new(2, 0, 1, vec![2, 1]).unwrap();
        let proj = ProjectorPartition::new(&cfg).unwrap();
        // inputs 00, 01, 10, 11 have classes 0, 1, 1, 0; the initial state lies in block 0
        let s = initial_batch(&cfg, 4);
        assert_eq!(error_vector(&s, &f, &proj).unwrap(), [0.0, 1.0, 1.0, 0.0]);

        let g = make_mod(5, 5).unwrap();
        let cfg = CircuitConfig::new(5, 4, 2, vec![4, 2, 2, 2, 2]).unwrap();
        let proj = ProjectorPartition::new(&cfg).unwrap();
        let uniform = CMatrix::from_element(12, 32, c((1.0f64 / 12.0).sqrt()));
        let s = BatchState::from_amplitudes(uniform, 2).unwrap();
        let errs = error_vector(&s, &g, &proj).unwrap();
        assert_abs_diff_eq!(errs[0], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn leftover_dimensions_count_as_error() {
        let f = make_mod(2, 2).unwrap();
        let cfg = CircuitConfig::new(2, 0, 1, vec![1, 1]).unwrap();
        let proj = ProjectorPartition::new(&cfg).unwrap();
        let mut amps = CMatrix::zeros(3, 4);
        for x in 0..4 {
            amps[(2, x)] = c(1.0);
        }
        let s = BatchState::from_amplitudes(amps, 1).unwrap();
        assert_eq!(error_vector(&s, &f, &proj).unwrap(), [1.0; 4]);
    }

    #[test]
    fn projectors_partition_identity() {
        let cfg = CircuitConfig::new(5, 4, 2, vec![2, 4, 1, 1, 3]).unwrap();
        let proj = ProjectorPartition::new(&cfg).unwrap();
        let mut total = [0.0; 12];
        for z in 0..5 {
            for (acc, p) in total.iter_mut().zip(proj.projector_diagonal(z)) {
                assert!(*acc * p == 0.0, "blocks overlap");
                *acc += p;
            }
        }
        assert_eq!(total.iter().sum::<f64>(), 11.0);
        assert_eq!(total[11], 0.0);
    }

    #[test]
    fn gram_of_initial_and_after_first_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = make_mod(3, 3).unwrap();
        let cfg = CircuitConfig::new(3, 0, 2, vec![3, 3, 2]).unwrap();
        let s = forward(&cfg, &f, &[random_unitary(&mut rng, 8)]).unwrap();
        let m = gram(&s);
        for v in m.iter() {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
        let init = initial_batch(&cfg, 8);
        assert!(gram_by_query_index(&init, 0).unwrap().iter().all(|&v| v == c(1.0)));
        for i in 1..=3 {
            assert!(gram_by_query_index(&init, i).unwrap().iter().all(|&v| v == c(0.0)));
        }
        assert!(matches!(gram_by_query_index(&init, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn gram_blocks_sum_to_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = make_mod(3, 2).unwrap();
        let cfg = CircuitConfig::new(3, 2, 2, vec![4, 4]).unwrap();
        let us: Vec<_> = (0..3).map(|_| random_unitary(&mut rng, 8)).collect();
        for s in forward_trace(&cfg, &f, &us).unwrap() {
            let total = gram(&s);
            let mut acc = CMatrix::zeros(8, 8);
            for i in 0..4 {
                let mi = gram_by_query_index(&s, i).unwrap();
                acc += &mi;
            }
            assert_abs_diff_eq!((acc - &total).norm(), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!((total.adjoint() - &total).norm(), 0.0, epsilon = 1e-14);
            let eig = nalgebra::SymmetricEigen::new(total.clone());
            assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
        }
    }
}
