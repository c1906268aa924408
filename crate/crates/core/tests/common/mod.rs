//! Shared test support: an independent full-SVD reference based on
//! one-sided Jacobi rotations. Deliberately implemented from scratch so the
//! library's factorization path is checked against a second route.

use rmc_core::rng::CounterRng;
use rmc_core::DenseMatrix;

pub struct RefSvd {
    /// Left singular vectors, m x k (columns for zero singular values are
    /// zero vectors).
    pub u: DenseMatrix,
    /// Nonincreasing singular values, length k = min(m, n).
    pub sigma: Vec<f64>,
    /// Right singular vectors, n x k.
    pub v: DenseMatrix,
}

/// One-sided Jacobi SVD. Intended for small matrices (dimensions <= ~100).
pub fn jacobi_svd(a: &DenseMatrix) -> RefSvd {
    if a.rows() < a.cols() {
        let f = jacobi_svd(&a.transpose());
        return RefSvd {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        };
    }
    let (m, n) = (a.rows(), a.cols());
    // Column-major working copies of A and V.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = w
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale > 0.0 {
        for sweep in 0..120 {
            let mut rotated = false;
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += w[p][i] * w[p][i];
                        beta += w[q][i] * w[q][i];
                        gamma += w[p][i] * w[q][i];
                    }
                    if gamma.abs() <= 1e-30 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let wp = w[p][i];
                        let wq = w[q][i];
                        w[p][i] = c * wp - s * wq;
                        w[q][i] = s * wp + c * wq;
                    }
                    for i in 0..n {
                        let vp = v[p][i];
                        let vq = v[q][i];
                        v[p][i] = c * vp - s * vq;
                        v[q][i] = s * vp + c * vq;
                    }
                }
            }
            if !rotated {
                break;
            }
            assert!(sweep < 119, "jacobi reference failed to converge");
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = DenseMatrix::from_fn(m, n, |i, jj| {
        let col = order[jj];
        if norms[col] > 1e-300 {
            w[col][i] / norms[col]
        } else {
            0.0
        }
    });
    let v = DenseMatrix::from_fn(n, n, |i, jj| v[order[jj]][i]);
    RefSvd { u, sigma, v }
}

impl RefSvd {
    /// Best rank-k approximation assembled from the reference factors.
    pub fn best_rank_k(&self, k: usize) -> DenseMatrix {
        let m = self.u.rows();
        let n = self.v.rows();
        DenseMatrix::from_fn(m, n, |i, j| {
            let mut s = 0.0;
            for l in 0..k {
                s += self.sigma[l] * self.u.get(i, l) * self.v.get(j, l);
            }
            s
        })
    }

    /// sqrt(sum of squared singular values beyond k).
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = CounterRng::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.next_gaussian())
}

#[allow(dead_code)]
pub fn random_low_rank(n1: usize, n2: usize, r: usize, seed: u64) -> DenseMatrix {
    let x = random_matrix(n1, r, seed.wrapping_mul(2).wrapping_add(1));
    let y = random_matrix(n2, r, seed.wrapping_mul(2).wrapping_add(2));
    x.mul(false, &y, true).unwrap()
}
