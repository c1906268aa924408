//! Thin safe wrappers over the system BLAS/LAPACK (OpenBLAS).
//!
//! Everything here speaks column-major, the native LAPACK layout. Callers in
//! this crate own the row-major/column-major bookkeeping. BLAS threading is
//! pinned to a single thread once, up front: the crate parallelizes across
//! solver runs, and per-call determinism must not depend on the thread pool.

use crate::error::{Error, Result};
use std::os::raw::c_char;
use std::sync::Once;

extern "C" {
    fn openblas_set_num_threads(n: i32);

    fn dgemm_(
        transa: *const c_char,
        transb: *const c_char,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );

    fn dsyrk_(
        uplo: *const c_char,
        trans: *const c_char,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );

    fn dgesdd_(
        jobz: *const c_char,
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        s: *mut f64,
        u: *mut f64,
        ldu: *const i32,
        vt: *mut f64,
        ldvt: *const i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        info: *mut i32,
    );

    fn dsyevr_(
        jobz: *const c_char,
        range: *const c_char,
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        vl: *const f64,
        vu: *const f64,
        il: *const i32,
        iu: *const i32,
        abstol: *const f64,
        m: *mut i32,
        w: *mut f64,
        z: *mut f64,
        ldz: *const i32,
        isuppz: *mut i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );

    fn dgeqrf_(
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        tau: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        info: *mut i32,
    );

    fn dorgqr_(
        m: *const i32,
        n: *const i32,
        k: *const i32,
        a: *mut f64,
        lda: *const i32,
        tau: *const f64,
        work: *mut f64,
        lwork: *const i32,
        info: *mut i32,
    );
}

static INIT_THREADS: Once = Once::new();

fn ensure_single_threaded_blas() {
    INIT_THREADS.call_once(|| unsafe {
        openblas_set_num_threads(1);
    });
}

fn dim(n: usize, what: &str) -> Result<i32> {
    i32::try_from(n).map_err(|_| Error::Dimension(format!("{what} = {n} exceeds LAPACK range")))
}

/// Whether the second operand of a product is transposed.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl Trans {
    fn flag(self) -> c_char {
        match self {
            Trans::No => b'N' as c_char,
            Trans::Yes => b'T' as c_char,
        }
    }
}

/// C = alpha * op(A) op(B) + beta * C, all column-major.
///
/// `a` is (am x an) before transposition, likewise `b`; `c` is (m x n) where
/// m, n, k are the dimensions after applying the transposes.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    transa: Trans,
    transb: Trans,
    a: &[f64],
    am: usize,
    an: usize,
    b: &[f64],
    bm: usize,
    bn: usize,
    alpha: f64,
    beta: f64,
    c: &mut [f64],
) -> Result<()> {
    ensure_single_threaded_blas();
    assert_eq!(a.len(), am * an);
    assert_eq!(b.len(), bm * bn);
    let (m, ka) = match transa {
        Trans::No => (am, an),
        Trans::Yes => (an, am),
    };
    let (kb, n) = match transb {
        Trans::No => (bm, bn),
        Trans::Yes => (bn, bm),
    };
    if ka != kb {
        return Err(Error::Dimension(format!(
            "gemm inner dimensions {ka} != {kb}"
        )));
    }
    assert_eq!(c.len(), m * n);
    let (mi, ni, ki) = (dim(m, "m")?, dim(n, "n")?, dim(ka, "k")?);
    let lda = dim(am.max(1), "lda")?;
    let ldb = dim(bm.max(1), "ldb")?;
    let ldc = dim(m.max(1), "ldc")?;
    if m == 0 || n == 0 {
        return Ok(());
    }
    unsafe {
        dgemm_(
            &transa.flag(),
            &transb.flag(),
            &mi,
            &ni,
            &ki,
            &alpha,
            a.as_ptr(),
            &lda,
            b.as_ptr(),
            &ldb,
            &beta,
            c.as_mut_ptr(),
            &ldc,
        );
    }
    Ok(())
}

/// Gram matrix of a column-major m x n input: A A^T for `Trans::No`
/// (m x m output) or A^T A for `Trans::Yes` (n x n output). The dsyrk upper
/// triangle is mirrored so callers get a full symmetric matrix.
pub fn gram(a: &[f64], m: usize, n: usize, trans: Trans) -> Result<Vec<f64>> {
    ensure_single_threaded_blas();
    assert_eq!(a.len(), m * n);
    let (out_n, inner) = match trans {
        Trans::No => (m, n),
        Trans::Yes => (n, m),
    };
    let ni = dim(out_n, "n")?;
    let ki = dim(inner, "k")?;
    let lda = dim(m.max(1), "lda")?;
    let mut g = vec![0.0; out_n * out_n];
    let (alpha, beta) = (1.0, 0.0);
    unsafe {
        dsyrk_(
            &(b'U' as c_char),
            &trans.flag(),
            &ni,
            &ki,
            &alpha,
            a.as_ptr(),
            &lda,
            &beta,
            g.as_mut_ptr(),
            &ni,
        );
    }
    for j in 0..out_n {
        for i in (j + 1)..out_n {
            g[i + j * out_n] = g[j + i * out_n];
        }
    }
    Ok(g)
}

/// Full thin SVD of a column-major m x n matrix via `dgesdd`.
///
/// Returns (u, s, vt) with u m x k, s of length k (nonincreasing), vt k x n,
/// k = min(m, n), all column-major.
pub fn svd_thin(a: &[f64], m: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    ensure_single_threaded_blas();
    assert_eq!(a.len(), m * n);
    let k = m.min(n);
    if k == 0 {
        return Err(Error::Dimension("svd of an empty matrix".into()));
    }
    let mi = dim(m, "m")?;
    let ni = dim(n, "n")?;
    let ki = dim(k, "k")?;
    let mut work_a = a.to_vec();
    let mut s = vec![0.0; k];
    let mut u = vec![0.0; m * k];
    let mut vt = vec![0.0; k * n];
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0i32;
    let jobz = b'S' as c_char;
    let mut wkopt = 0.0f64;
    let query = -1i32;
    unsafe {
        dgesdd_(
            &jobz,
            &mi,
            &ni,
            work_a.as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &mi,
            vt.as_mut_ptr(),
            &ki,
            &mut wkopt,
            &query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!(
            "dgesdd workspace query failed (info = {info})"
        )));
    }
    let lwork = wkopt as i32;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &mi,
            &ni,
            work_a.as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &mi,
            vt.as_mut_ptr(),
            &ki,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!(
            "dgesdd did not converge (info = {info})"
        )));
    }
    Ok((u, s, vt))
}

/// Top-k eigenpairs of a symmetric n x n column-major matrix via `dsyevr`.
///
/// Returns eigenvalues in descending order with matching eigenvector columns
/// (n x k, column-major). The input buffer is clobbered.
pub fn top_eigs_symmetric(g: &mut [f64], n: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_single_threaded_blas();
    assert_eq!(g.len(), n * n);
    assert!(k >= 1 && k <= n);
    let ni = dim(n, "n")?;
    let il = dim(n - k + 1, "il")?;
    let iu = ni;
    let (vl, vu, abstol) = (0.0f64, 0.0f64, 0.0f64);
    let mut found = 0i32;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * k];
    let mut isuppz = vec![0i32; 2 * k.max(1)];
    let mut info = 0i32;
    let mut wkopt = 0.0f64;
    let mut iwkopt = 0i32;
    let query = -1i32;
    let (jobz, range, uplo) = (b'V' as c_char, b'I' as c_char, b'U' as c_char);
    unsafe {
        dsyevr_(
            &jobz,
            &range,
            &uplo,
            &ni,
            g.as_mut_ptr(),
            &ni,
            &vl,
            &vu,
            &il,
            &iu,
            &abstol,
            &mut found,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            isuppz.as_mut_ptr(),
            &mut wkopt,
            &query,
            &mut iwkopt,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!(
            "dsyevr workspace query failed (info = {info})"
        )));
    }
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        dsyevr_(
            &jobz,
            &range,
            &uplo,
            &ni,
            g.as_mut_ptr(),
            &ni,
            &vl,
            &vu,
            &il,
            &iu,
            &abstol,
            &mut found,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            isuppz.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!(
            "dsyevr failed (info = {info})"
        )));
    }
    if found != k as i32 {
        return Err(Error::Numerical(format!(
            "dsyevr located {found} of {k} requested eigenpairs"
        )));
    }
    // Ascending from LAPACK; flip to descending.
    let mut w_desc = vec![0.0; k];
    let mut z_desc = vec![0.0; n * k];
    for j in 0..k {
        let src = k - 1 - j;
        w_desc[j] = w[src];
        z_desc[j * n..(j + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
    }
    Ok((w_desc, z_desc))
}

/// Thin QR of a column-major m x n matrix (m >= n): returns (q, r) with q
/// m x n having orthonormal columns and r the n x n upper triangle.
pub fn qr_thin(a: &[f64], m: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_single_threaded_blas();
    assert_eq!(a.len(), m * n);
    assert!(m >= n && n >= 1);
    let mi = dim(m, "m")?;
    let ni = dim(n, "n")?;
    let mut fac = a.to_vec();
    let mut tau = vec![0.0; n];
    let mut info = 0i32;
    let mut wkopt = 0.0f64;
    let query = -1i32;
    unsafe {
        dgeqrf_(
            &mi,
            &ni,
            fac.as_mut_ptr(),
            &mi,
            tau.as_mut_ptr(),
            &mut wkopt,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dgeqrf query failed ({info})")));
    }
    let lwork = wkopt as i32;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        dgeqrf_(
            &mi,
            &ni,
            fac.as_mut_ptr(),
            &mi,
            tau.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dgeqrf failed ({info})")));
    }
    let mut r = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..=j {
            r[i + j * n] = fac[i + j * m];
        }
    }
    unsafe {
        dorgqr_(
            &mi,
            &ni,
            &ni,
            fac.as_mut_ptr(),
            &mi,
            tau.as_ptr(),
            &mut wkopt,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dorgqr query failed ({info})")));
    }
    let lwork = wkopt as i32;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        dorgqr_(
            &mi,
            &ni,
            &ni,
            fac.as_mut_ptr(),
            &mi,
            tau.as_ptr(),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dorgqr failed ({info})")));
    }
    Ok((fac, r))
}
