//! Unitaries as exponentials of Hermitian generators.
//!
//! A generator of dimension `d` is built from real parameters as
//! `H = A + Aᵀ + i(B − Bᵀ)` with `A` upper triangular (diagonal included) and
//! `B` strictly upper triangular. The global phase is removed by forcing
//! `tr(A) = 0`: only the first `d − 1` diagonal entries of `A` are free and the
//! last one is their negated sum, leaving `d² − 1` free values.
//!
//! Flat layout of one generator's parameters:
//! `[A_00 .. A_{d-2,d-2} | A_kl (k<l, row-major) | B_kl (k<l, row-major)]`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{adjoint_matmul, matmul, matmul_adjoint};

pub type CMatrix = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalue gaps below this use the analytic diagonal limit of the divided difference.
pub const DEGENERACY_GAP: f64 = 1e-12;

/// Number of free real parameters for one generator of dimension `d`.
pub fn param_count(d: usize) -> usize {
    d * d - 1
}

/// Free parameters of one traceless-`A` Hermitian generator.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianParams {
    d: usize,
    /// `d − 1` diagonal entries followed by the strict upper triangle.
    a: Vec<f64>,
    /// Strict upper triangle.
    b: Vec<f64>,
}

impl HermitianParams {
    pub fn new(d: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Shape("generator dimension must be positive".into()));
        }
        let upper = d * (d - 1) / 2;
        if a.len() != d - 1 + upper || b.len() != upper {
            return Err(Error::Shape(format!(
                "dimension {d} needs {} A-values and {upper} B-values, got {} and {}",
                d - 1 + upper,
                a.len(),
                b.len()
            )));
        }
        Ok(Self { d, a, b })
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_slice(d, &vec![0.0; param_count(d)]).expect("sized")
    }

    /// Splits a flat slice of length `d² − 1` into the A and B blocks.
    pub fn from_slice(d: usize, values: &[f64]) -> Result<Self> {
        if d == 0 || values.len() != param_count(d) {
            return Err(Error::Shape(format!(
                "dimension {d} needs {} parameters, got {}",
                param_count(d.max(1)),
                values.len()
            )));
        }
        let na = d - 1 + d * (d - 1) / 2;
        Self::new(d, values[..na].to_vec(), values[na..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend_from_slice(&self.b);
        v
    }

    /// Sets the strict-upper entry `(k, l)` of `B`.
    pub fn set_b(&mut self, k: usize, l: usize, value: f64) {
        let idx = upper_index(self.d, k, l);
        self.b[idx] = value;
    }

    /// Sets the strict-upper entry `(k, l)` of `A`.
    pub fn set_a_offdiag(&mut self, k: usize, l: usize, value: f64) {
        let idx = self.d - 1 + upper_index(self.d, k, l);
        self.a[idx] = value;
    }
}

/// Row-major index of `(k, l)`, `k < l`, within a strict upper triangle.
fn upper_index(d: usize, k: usize, l: usize) -> usize {
    assert!(k < l && l < d, "({k}, {l}) is not strictly upper in dimension {d}");
    k * (2 * d - k - 1) / 2 + (l - k - 1)
}

/// `H = A + Aᵀ + i(B − Bᵀ)`; exactly Hermitian by construction.
pub fn build_hermitian(p: &HermitianParams) -> CMatrix {
    let d = p.d;
    let mut h = CMatrix::zeros(d, d);
    let mut trace = 0.0;
    for k in 0..d - 1 {
        h[(k, k)] = Complex64::new(2.0 * p.a[k], 0.0);
        trace += p.a[k];
    }
    h[(d - 1, d - 1)] = Complex64::new(-2.0 * trace, 0.0);
    let mut idx = 0;
    for k in 0..d {
        for l in k + 1..d {
            let v = Complex64::new(p.a[d - 1 + idx], p.b[idx]);
            h[(k, l)] = v;
            h[(l, k)] = v.conj();
            idx += 1;
        }
    }
    h
}

/// Eigendecomposition `H = V·diag(λ)·Vᴴ` retained for the derivative.
#[derive(Debug, Clone)]
pub struct EigCache {
    pub vectors: CMatrix,
    pub values: Vec<f64>,
}

impl EigCache {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Frobenius norm of `H − Hᴴ`.
pub fn hermitian_defect(h: &CMatrix) -> f64 {
    (h - h.adjoint()).norm()
}

/// Frobenius norm of `UᴴU − I`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    (u.adjoint() * u - CMatrix::identity(n, n)).norm()
}

/// `U = exp(iH)` through the eigendecomposition of `H`.
pub fn expm_hermitian(h: &CMatrix) -> Result<(CMatrix, EigCache)> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::Shape(format!("generator is {}x{}", h.nrows(), h.ncols())));
    }
    let defect = hermitian_defect(h);
    if !(defect < HERMITIAN_TOL) {
        return Err(Error::Numerical(format!("generator is not Hermitian (defect {defect:e})")));
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let cache = EigCache { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect() };
    let u = reassemble(&cache, |lambda| Complex64::from_polar(1.0, lambda));
    Ok((u, cache))
}

/// `V·diag(g(λ))·Vᴴ`.
fn reassemble(cache: &EigCache, g: impl Fn(f64) -> Complex64) -> CMatrix {
    let mut scaled = cache.vectors.clone();
    for (k, &lambda) in cache.values.iter().enumerate() {
        let s = g(lambda);
        for z in scaled.column_mut(k).iter_mut() {
            *z *= s;
        }
    }
    matmul_adjoint(&scaled, &cache.vectors)
}

/// Divided difference of `λ ↦ e^{iλ}`, written as `i·e^{i(λk+λl)/2}·sinc((λk−λl)/2)`,
/// which stays accurate for close eigenvalues.
fn divided_difference(lk: f64, ll: f64) -> Complex64 {
    let gap = lk - ll;
    let mid = Complex64::from_polar(1.0, 0.5 * (lk + ll));
    let sinc = if gap.abs() < DEGENERACY_GAP {
        1.0
    } else {
        (0.5 * gap).sin() / (0.5 * gap)
    };
    Complex64::i() * mid * sinc
}

/// Pulls a cotangent `G` on `U` back to the Hermitian generator: returns
/// `G_H` with `δL = Re⟨G_H, δH⟩_F` whenever `δL = Re⟨G, δU⟩_F`.
pub fn hermitian_cotangent(cache: &EigCache, g: &CMatrix) -> CMatrix {
    let v = &cache.vectors;
    let mut c = matmul(&adjoint_matmul(v, g), v);
    let d = cache.dim();
    for l in 0..d {
        for k in 0..d {
            c[(k, l)] *= divided_difference(cache.values[k], cache.values[l]).conj();
        }
    }
    matmul_adjoint(&matmul(v, &c), v)
}

/// Gradient with respect to the flat `d² − 1` parameters of the generator that
/// produced `cache`, given the cotangent `G` on `U`.
pub fn expm_vjp(cache: &EigCache, g: &CMatrix) -> Vec<f64> {
    let gh = hermitian_cotangent(cache, g);
    let d = cache.dim();
    let mut out = Vec::with_capacity(param_count(d));
    let last = gh[(d - 1, d - 1)].re;
    for k in 0..d - 1 {
        out.push(2.0 * (gh[(k, k)].re - last));
    }
    for k in 0..d {
        for l in k + 1..d {
            out.push(gh[(k, l)].re + gh[(l, k)].re);
        }
    }
    for k in 0..d {
        for l in k + 1..d {
            out.push(gh[(k, l)].im - gh[(l, k)].im);
        }
    }
    out
}

/// Builds `U(θ)` directly from a flat parameter slice.
pub fn unitary_from_slice(d: usize, values: &[f64]) -> Result<(CMatrix, EigCache)> {
    let p = HermitianParams::from_slice(d, values)?;
    expm_hermitian(&build_hermitian(&p))
}
