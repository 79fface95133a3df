//! Complex matrix products through a blocked GEMM kernel.

use nalgebra::Dyn;

use crate::uparam::CMatrix;

/// `A·B` for column-major dense matrices.
pub(crate) fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMatrix::zeros_generic(Dyn(m), Dyn(n));
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `Complex64` is `repr(C)` with fields `re, im`, the same layout as
    // the kernel's `[f64; 2]`; the strides describe contiguous column-major
    // buffers of exactly the sizes passed.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr().cast(),
            1,
            m as isize,
            b.as_ptr().cast(),
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr().cast(),
            1,
            m as isize,
        );
    }
    c
}

/// `Aᴴ·B`.
pub(crate) fn adjoint_matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    matmul(&a.adjoint(), b)
}

/// `A·Bᴴ`.
pub(crate) fn matmul_adjoint(a: &CMatrix, b: &CMatrix) -> CMatrix {
    matmul(a, &b.adjoint())
}
