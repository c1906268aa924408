//! Truncated SVD (the rank-r projection operator), spectral norm, and
//! incoherence diagnostics.
//!
//! Kernel selection by size:
//! - small matrices: full `dgesdd`, then truncate;
//! - mid-size with a shallow target rank: Gram matrix + `dsyevr` top-k
//!   eigenpairs, then a thin QR + small SVD polish (a full SVD would spend
//!   almost all of its time on singular directions the caller discards);
//! - min dimension above 2000: randomized block power iteration with fixed
//!   oversampling and a deterministically seeded start.
//!
//! All paths canonicalize signs (largest-magnitude entry of each left
//! singular vector is nonnegative, ties to the lowest index), so factor
//! output is deterministic for fixed input.

use crate::error::{Error, Result};
use crate::lapack::{self, Trans};
use crate::matrix::DenseMatrix;
use crate::rng::{tags, CounterRng};

/// Below this min-dimension a full dense SVD is cheap enough to be the
/// default; it is also the highest-accuracy route for deep truncations.
const SMALL_CUTOFF: usize = 64;
/// Above this min-dimension dense factorizations are abandoned for block
/// power iteration.
const DENSE_CUTOFF: usize = 2000;
/// Oversampling columns and power steps for the randomized path.
const BLOCK_OVERSAMPLE: usize = 10;
const BLOCK_POWER_STEPS: usize = 16;

/// Thin SVD factors: `u` (n1 x k) and `v` (n2 x k) with orthonormal columns,
/// `sigma` nonincreasing and nonnegative.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// u * diag(sigma) * v^T.
    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.rank();
        let mut scaled = self.u.clone();
        for i in 0..scaled.rows() {
            for j in 0..k {
                let v = scaled.get(i, j) * self.sigma[j];
                scaled.set(i, j, v);
            }
        }
        scaled
            .mul(false, &self.v, true)
            .expect("factor shapes agree by construction")
    }

    /// Enforce the factor invariants: orthonormal columns within
    /// 1e-10 * k in Frobenius norm, sigma nonincreasing and nonnegative.
    pub fn validate(&self) -> Result<()> {
        let k = self.rank();
        if self.u.cols() != k || self.v.cols() != k {
            return Err(Error::Dimension(
                "factor column counts disagree with sigma length".into(),
            ));
        }
        for w in self.sigma.windows(2) {
            if w[1] > w[0] {
                return Err(Error::Numerical("singular values not sorted".into()));
            }
        }
        if self.sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::Numerical("invalid singular value".into()));
        }
        let tol = 1e-10 * k as f64;
        for (m, name) in [(&self.u, "u"), (&self.v, "v")] {
            let gram = m.mul(true, m, false)?;
            let mut err2 = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let target = if i == j { 1.0 } else { 0.0 };
                    let d = gram.get(i, j) - target;
                    err2 += d * d;
                }
            }
            if err2.sqrt() > tol {
                return Err(Error::Numerical(format!(
                    "{name} columns deviate from orthonormality by {:.3e}",
                    err2.sqrt()
                )));
            }
        }
        Ok(())
    }
}

/// Incoherence and conditioning summary of a factor pair.
#[derive(Debug, Clone, Copy)]
pub struct IncoherenceReport {
    pub mu: f64,
    pub row_norm_u: f64,
    pub row_norm_v: f64,
    pub kappa: f64,
}

/// Best rank-k approximation factors of `a` (Eckart-Young in Frobenius
/// norm; one valid choice under ties at position k).
pub fn truncated_svd(a: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    let min_dim = a.min_dim();
    if k == 0 || k > min_dim {
        return Err(Error::Dimension(format!(
            "rank {k} out of range for a {} x {} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let mut factors = if min_dim <= SMALL_CUTOFF || (min_dim <= DENSE_CUTOFF && 3 * k >= min_dim) {
        svd_small(a, k)?
    } else if min_dim <= DENSE_CUTOFF {
        svd_gram(a, k)?
    } else {
        svd_block_power(a, k)?
    };
    canonicalize_signs(&mut factors);
    factors.validate()?;
    Ok(factors)
}

/// The operator P_r: best rank-k approximation of `a` as a dense matrix.
pub fn rank_r_project(a: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    Ok(truncated_svd(a, k)?.reconstruct())
}

/// Largest singular value via power iteration on a^T a: deterministic
/// all-ones start, at most 100 iterations, early exit when the Rayleigh
/// quotient stalls to 1e-12 relative.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let (m, n) = (a.rows(), a.cols());
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; m];
    let mut y = vec![0.0; n];
    let mut lambda_prev = 0.0f64;
    let mut lambda = 0.0f64;
    for iter in 0..100 {
        for i in 0..m {
            let row = a.row(i);
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * x[j];
            }
            ax[i] = s;
        }
        lambda = ax.iter().map(|v| v * v).sum();
        if lambda == 0.0 {
            return 0.0;
        }
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for i in 0..m {
            let row = a.row(i);
            let axi = ax[i];
            for j in 0..n {
                y[j] += row[j] * axi;
            }
        }
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny == 0.0 {
            break;
        }
        for (xj, yj) in x.iter_mut().zip(&y) {
            *xj = yj / ny;
        }
        if iter > 0 && (lambda - lambda_prev).abs() <= 1e-12 * lambda {
            break;
        }
        lambda_prev = lambda;
    }
    lambda.max(0.0).sqrt()
}

/// mu = (n / r) * max of the squared largest row norms of `u` and `v`,
/// with n = max(rows(u), rows(v)); kappa = sigma_1 / sigma_r.
pub fn incoherence(u: &DenseMatrix, v: &DenseMatrix, sigma: &[f64]) -> Result<IncoherenceReport> {
    let r = u.cols();
    if v.cols() != r || sigma.len() != r || r == 0 {
        return Err(Error::Dimension(
            "factors and sigma must share a positive column count".into(),
        ));
    }
    let sigma_r = sigma[r - 1];
    if sigma_r <= 0.0 {
        return Err(Error::Parameter(format!(
            "sigma_r = {sigma_r} must be positive"
        )));
    }
    let row_norm_u = u.norms().two_inf;
    let row_norm_v = v.norms().two_inf;
    let n = u.rows().max(v.rows()) as f64;
    let mu = (n / r as f64) * row_norm_u.powi(2).max(row_norm_v.powi(2));
    Ok(IncoherenceReport {
        mu,
        row_norm_u,
        row_norm_v,
        kappa: sigma[0] / sigma_r,
    })
}

/// Make the largest-magnitude entry of each u column nonnegative (ties take
/// the lowest row index), flipping the paired v column to preserve the
/// product.
fn canonicalize_signs(f: &mut SvdFactors) {
    let k = f.rank();
    for j in 0..k {
        let mut best = 0.0f64;
        let mut best_i = 0usize;
        for i in 0..f.u.rows() {
            let mag = f.u.get(i, j).abs();
            if mag > best {
                best = mag;
                best_i = i;
            }
        }
        if f.u.get(best_i, j) < 0.0 {
            for i in 0..f.u.rows() {
                let v = -f.u.get(i, j);
                f.u.set(i, j, v);
            }
            for i in 0..f.v.rows() {
                let v = -f.v.get(i, j);
                f.v.set(i, j, v);
            }
        }
    }
}

fn factors_from_colmajor(
    rows: usize,
    cols: usize,
    k: usize,
    u_cm: &[f64],
    u_ld: usize,
    sigma: Vec<f64>,
    v_cm: &[f64],
    v_ld: usize,
) -> Result<SvdFactors> {
    debug_assert!(u_cm.len() >= u_ld * k && u_ld >= rows);
    debug_assert!(v_cm.len() >= v_ld * k && v_ld >= cols);
    let u = DenseMatrix::from_fn(rows, k, |i, j| u_cm[i + j * u_ld]);
    let v = DenseMatrix::from_fn(cols, k, |i, j| v_cm[i + j * v_ld]);
    Ok(SvdFactors { u, sigma, v })
}

/// Full dense SVD, truncated to k.
fn svd_small(a: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    let (m, n) = (a.rows(), a.cols());
    let cm = a.to_colmajor();
    let (u, s, vt) = lapack::svd_thin(&cm, m, n)?;
    let kk = m.min(n);
    // v column j is row j of vt.
    let v = DenseMatrix::from_fn(n, k, |i, j| vt[j + i * kk]);
    let u = DenseMatrix::from_fn(m, k, |i, j| u[i + j * m]);
    Ok(SvdFactors {
        u,
        sigma: s[..k].to_vec(),
        v,
    })
}

/// Gram + top-k eigenpairs + thin-QR/small-SVD polish. Requires
/// cols <= rows; the caller flips via transpose otherwise.
fn svd_gram_tall(a: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    let (m, n) = (a.rows(), a.cols());
    debug_assert!(n <= m && k <= n);
    // Row-major buffer read column-major is a^T (n x m); its row Gram
    // a^T (a^T)^T = a^T a is exactly the column Gram we need.
    let mut g = lapack::gram(a.as_slice(), n, m, Trans::No)?;
    let (_eigs, v0) = lapack::top_eigs_symmetric(&mut g, n, k)?;
    // b = a * v0  (m x k, column-major).
    let mut b = vec![0.0; m * k];
    lapack::gemm(
        Trans::Yes,
        Trans::No,
        a.as_slice(),
        n,
        m,
        &v0,
        n,
        k,
        1.0,
        0.0,
        &mut b,
    )?;
    // Polish: b = q r, r = ur s vr^T, so a ~= (q ur) s (v0 vr)^T. This keeps
    // both factors orthonormal to machine precision and reads the singular
    // values off a k x k problem instead of square roots of eigenvalues.
    let (q, r) = lapack::qr_thin(&b, m, k)?;
    let (ur, s, vrt) = lapack::svd_thin(&r, k, k)?;
    let mut u_cm = vec![0.0; m * k];
    lapack::gemm(Trans::No, Trans::No, &q, m, k, &ur, k, k, 1.0, 0.0, &mut u_cm)?;
    let mut v_cm = vec![0.0; n * k];
    lapack::gemm(Trans::No, Trans::Yes, &v0, n, k, &vrt, k, k, 1.0, 0.0, &mut v_cm)?;
    factors_from_colmajor(m, n, k, &u_cm, m, s, &v_cm, n)
}

fn svd_gram(a: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    if a.cols() <= a.rows() {
        svd_gram_tall(a, k)
    } else {
        let f = svd_gram_tall(&a.transpose(), k)?;
        Ok(SvdFactors {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        })
    }
}

/// Randomized block power iteration (Halko-style) with fixed oversampling
/// k + 10, a fixed number of power steps, and a seeded deterministic start.
/// The result is an approximate truncated SVD; accuracy degrades when the
/// spectrum has no gap near k, which is acceptable for the scales where
/// this path engages.
fn svd_block_power(a: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    if a.cols() > a.rows() {
        let f = svd_block_power(&a.transpose(), k)?;
        return Ok(SvdFactors {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        });
    }
    let (m, n) = (a.rows(), a.cols());
    let b = (k + BLOCK_OVERSAMPLE).min(n);
    let mut rng = CounterRng::derived(
        0,
        &[tags::SVD_START, m as u64, n as u64, k as u64],
    );
    // Start block, column-major n x b.
    let mut omega = vec![0.0; n * b];
    for v in omega.iter_mut() {
        *v = rng.next_gaussian();
    }
    // y = a * omega (m x b).
    let mut y = vec![0.0; m * b];
    lapack::gemm(
        Trans::Yes,
        Trans::No,
        a.as_slice(),
        n,
        m,
        &omega,
        n,
        b,
        1.0,
        0.0,
        &mut y,
    )?;
    let (mut q, _) = lapack::qr_thin(&y, m, b)?;
    let mut z = vec![0.0; n * b];
    for _ in 0..BLOCK_POWER_STEPS {
        // z = orth(a^T q); q = orth(a z).
        lapack::gemm(
            Trans::No,
            Trans::No,
            a.as_slice(),
            n,
            m,
            &q,
            m,
            b,
            1.0,
            0.0,
            &mut z,
        )?;
        let (zq, _) = lapack::qr_thin(&z, n, b)?;
        lapack::gemm(
            Trans::Yes,
            Trans::No,
            a.as_slice(),
            n,
            m,
            &zq,
            n,
            b,
            1.0,
            0.0,
            &mut y,
        )?;
        let (qq, _) = lapack::qr_thin(&y, m, b)?;
        q = qq;
    }
    // Small problem: c = q^T a  (b x n).
    let mut c = vec![0.0; b * n];
    lapack::gemm(
        Trans::Yes,
        Trans::Yes,
        &q,
        m,
        b,
        a.as_slice(),
        n,
        m,
        1.0,
        0.0,
        &mut c,
    )?;
    let (uc, s, vct) = lapack::svd_thin(&c, b, n)?;
    let kk = b.min(n);
    let mut u_cm = vec![0.0; m * k];
    lapack::gemm(
        Trans::No,
        Trans::No,
        &q,
        m,
        b,
        &uc[..b * k],
        b,
        k,
        1.0,
        0.0,
        &mut u_cm,
    )?;
    let v = DenseMatrix::from_fn(n, k, |i, j| vct[j + i * kk]);
    let u = DenseMatrix::from_fn(m, k, |i, j| u_cm[i + j * m]);
    Ok(SvdFactors {
        u,
        sigma: s[..k].to_vec(),
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> DenseMatrix {
        let n = values.len();
        DenseMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    fn random_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = CounterRng::new(seed);
        DenseMatrix::from_fn(m, n, |_, _| rng.next_gaussian())
    }

    #[test]
    fn diagonal_truncation() {
        let f = truncated_svd(&diag(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-12);
        assert!((f.sigma[1] - 2.0).abs() < 1e-12);
        let rec = f.reconstruct();
        let want = diag(&[3.0, 2.0, 0.0]);
        assert!(rec.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction_is_identity() {
        let a = random_matrix(20, 15, 7);
        let f = truncated_svd(&a, 15).unwrap();
        let rec = f.reconstruct();
        assert!(rec.frobenius_diff(&a).unwrap() <= 1e-10 * a.frobenius());
    }

    #[test]
    fn project_zero_matrix() {
        let z = DenseMatrix::zeros(6, 5);
        let p = rank_r_project(&z, 3).unwrap();
        assert_eq!(p.entrywise_max(), 0.0);
    }

    #[test]
    fn project_is_identity_on_low_rank_input() {
        let x = random_matrix(12, 1, 1);
        let y = random_matrix(10, 1, 2);
        let w = random_matrix(12, 1, 3);
        let z = random_matrix(10, 1, 4);
        let a = x
            .mul(false, &y, true)
            .unwrap()
            .sub(&w.mul(false, &z, true).unwrap().scale(-1.0))
            .unwrap();
        let p = rank_r_project(&a, 2).unwrap();
        assert!(p.frobenius_diff(&a).unwrap() <= 1e-10 * a.frobenius());
    }

    #[test]
    fn project_diag_to_rank_one() {
        let p = rank_r_project(&diag(&[3.0, 2.0, 1.0]), 1).unwrap();
        assert!(p.max_abs_diff(&diag(&[3.0, 0.0, 0.0])).unwrap() < 1e-12);
    }

    #[test]
    fn rank_out_of_range_errors() {
        let a = DenseMatrix::zeros(4, 3);
        assert!(truncated_svd(&a, 0).is_err());
        assert!(truncated_svd(&a, 4).is_err());
    }

    #[test]
    fn spectral_norm_trivia() {
        assert!((spectral_norm(&DenseMatrix::identity(4)) - 1.0).abs() < 1e-10);
        assert!((spectral_norm(&diag(&[3.0, 2.0, 1.0])) - 3.0).abs() < 1e-10);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn incoherence_spike_and_flat() {
        let spike = DenseMatrix::from_fn(4, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let rep = incoherence(&spike, &spike, &[1.0]).unwrap();
        assert!((rep.mu - 4.0).abs() < 1e-12);
        assert!((rep.kappa - 1.0).abs() < 1e-12);

        let flat = DenseMatrix::from_fn(4, 1, |_, _| 0.5);
        let rep = incoherence(&flat, &flat, &[1.0]).unwrap();
        assert!((rep.mu - 1.0).abs() < 1e-12);

        assert!(incoherence(&flat, &flat, &[0.0]).is_err());
    }

    #[test]
    fn factor_output_is_deterministic() {
        let a = random_matrix(30, 20, 99);
        let f1 = truncated_svd(&a, 6).unwrap();
        let f2 = truncated_svd(&a, 6).unwrap();
        assert_eq!(f1.u, f2.u);
        assert_eq!(f1.sigma, f2.sigma);
        assert_eq!(f1.v, f2.v);
    }

    #[test]
    fn gram_route_matches_small_route() {
        // min_dim 80 > SMALL_CUTOFF forces the Gram path for shallow k.
        for &(m, n, k, seed) in &[(120usize, 80usize, 5usize, 11u64), (80, 120, 7, 12)] {
            let a = random_matrix(m, n, seed);
            let fast = truncated_svd(&a, k).unwrap();
            let slow = svd_small(&a, k).unwrap();
            for j in 0..k {
                assert!(
                    (fast.sigma[j] - slow.sigma[j]).abs() <= 1e-10 * slow.sigma[0],
                    "sigma {j} disagreement"
                );
            }
            let d = fast
                .reconstruct()
                .frobenius_diff(&slow.reconstruct())
                .unwrap();
            assert!(d <= 1e-9 * slow.sigma[0]);
        }
    }

    #[test]
    fn block_power_route_recovers_gapped_spectrum() {
        let x = random_matrix(150, 4, 21);
        let y = random_matrix(100, 4, 22);
        let noise = random_matrix(150, 100, 23).scale(1e-8);
        let a = x.mul(false, &y, true).unwrap().sub(&noise).unwrap();
        let approx = svd_block_power(&a, 4).unwrap();
        let exact = svd_small(&a, 4).unwrap();
        for j in 0..4 {
            assert!((approx.sigma[j] - exact.sigma[j]).abs() <= 1e-6 * exact.sigma[0]);
        }
        let d = approx
            .reconstruct()
            .frobenius_diff(&exact.reconstruct())
            .unwrap();
        assert!(d <= 1e-6 * exact.sigma[0]);
    }

    #[test]
    fn idempotence_of_projection() {
        let a = random_matrix(18, 14, 5);
        for k in [1usize, 3, 7] {
            let p1 = rank_r_project(&a, k).unwrap();
            let p2 = rank_r_project(&p1, k).unwrap();
            assert!(p2.frobenius_diff(&p1).unwrap() <= 1e-9 * p1.frobenius().max(1e-30));
        }
    }
}
