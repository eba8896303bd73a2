//! Thin wrappers over the system LAPACKE eigensolvers.
//!
//! Only symmetric/Hermitian diagonalization is outsourced; it sits
//! outside the parallel regions of this crate, so thread count cannot
//! change results. Everything else is implemented directly.

use crate::error::{CoreError, Result};
use ndarray::Array2;
use num_complex::Complex64;

const ROW_MAJOR: i32 = 101;
const JOBZ_VECTORS: u8 = b'V';
const UPLO_LOWER: u8 = b'L';

extern "C" {
    fn LAPACKE_dsyev(
        layout: i32,
        jobz: u8,
        uplo: u8,
        n: i32,
        a: *mut f64,
        lda: i32,
        w: *mut f64,
    ) -> i32;
    fn LAPACKE_zheev(
        layout: i32,
        jobz: u8,
        uplo: u8,
        n: i32,
        a: *mut Complex64,
        lda: i32,
        w: *mut f64,
    ) -> i32;
    fn LAPACKE_dstev(
        layout: i32,
        jobz: u8,
        n: i32,
        d: *mut f64,
        e: *mut f64,
        z: *mut f64,
        ldz: i32,
    ) -> i32;
}

fn check_square<T>(a: &Array2<T>) -> Result<i32> {
    let (r, c) = a.dim();
    if r != c || r == 0 {
        return Err(CoreError::InvalidParameter(format!(
            "eigensolver needs a nonempty square matrix, got {r}x{c}"
        )));
    }
    i32::try_from(r).map_err(|_| CoreError::InvalidParameter("matrix too large".into()))
}

/// Eigendecomposition of a real symmetric matrix. Returns ascending
/// eigenvalues and a matrix whose `j`-th column is the `j`-th
/// orthonormal eigenvector.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = check_square(a)?;
    let mut work = a.clone();
    let mut w = vec![0.0; n as usize];
    let slice = work
        .as_slice_mut()
        .expect("freshly cloned array is contiguous");
    let info = unsafe {
        LAPACKE_dsyev(
            ROW_MAJOR,
            JOBZ_VECTORS,
            UPLO_LOWER,
            n,
            slice.as_mut_ptr(),
            n,
            w.as_mut_ptr(),
        )
    };
    if info != 0 {
        return Err(CoreError::Eigen(info));
    }
    Ok((w, work))
}

/// Eigendecomposition of a complex Hermitian matrix; same layout
/// conventions as [`eigh_real`].
pub fn eigh_hermitian(a: &Array2<Complex64>) -> Result<(Vec<f64>, Array2<Complex64>)> {
    let n = check_square(a)?;
    let mut work = a.clone();
    let mut w = vec![0.0; n as usize];
    let slice = work
        .as_slice_mut()
        .expect("freshly cloned array is contiguous");
    let info = unsafe {
        LAPACKE_zheev(
            ROW_MAJOR,
            JOBZ_VECTORS,
            UPLO_LOWER,
            n,
            slice.as_mut_ptr(),
            n,
            w.as_mut_ptr(),
        )
    };
    if info != 0 {
        return Err(CoreError::Eigen(info));
    }
    Ok((w, work))
}

/// Eigendecomposition of a real symmetric tridiagonal matrix with
/// diagonal `diag` and off-diagonal `off` (`off.len() == diag.len()-1`).
/// Much cheaper than the dense path for the band matrices that arise
/// from ladder operators.
pub fn eigh_tridiagonal(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(CoreError::InvalidParameter(format!(
            "tridiagonal sizes mismatched: {} diagonal, {} off-diagonal",
            n,
            off.len()
        )));
    }
    let ni = i32::try_from(n).map_err(|_| CoreError::InvalidParameter("matrix too large".into()))?;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    let mut z = Array2::<f64>::zeros((n, n));
    let zs = z.as_slice_mut().expect("zeros array is contiguous");
    let info = unsafe {
        LAPACKE_dstev(
            ROW_MAJOR,
            JOBZ_VECTORS,
            ni,
            d.as_mut_ptr(),
            e.as_mut_ptr(),
            zs.as_mut_ptr(),
            ni,
        )
    };
    if info != 0 {
        return Err(CoreError::Eigen(info));
    }
    Ok((d, z))
}
