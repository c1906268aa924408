//! Numerical verification of the deterministic inequalities behind the
//! solver's analysis, evaluated on randomized small instances. Every check
//! here is a deterministic consequence of its hypotheses, so the expected
//! violation count is exactly zero.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::problem::{gen_instance, InstanceParams};
use crate::rng::{tags, CounterRng};
use crate::solver::{s_update, IterateState, SolverConfig};
use crate::svd::{spectral_norm, truncated_svd};
use crate::threshold::ThresholdKind;
use std::collections::BTreeSet;

/// Aggregate outcome of one lemma check.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub lemma_name: String,
    pub trials: usize,
    /// min over trials of (bound - observed), in the bound's units.
    pub worst_slack: f64,
    pub violations: usize,
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: trials={} violations={} worst_slack={:.6e} {}",
            self.lemma_name,
            self.trials,
            self.violations,
            self.worst_slack,
            if self.violations == 0 { "PASS" } else { "FAIL" }
        )
    }
}

/// U stacked over V: the (n1 + n2) x r factor block whose Gram is 2I when
/// both halves are orthonormal.
#[derive(Debug, Clone)]
pub struct StackedFactors {
    pub f: DenseMatrix,
}

impl StackedFactors {
    pub fn new(u: &DenseMatrix, v: &DenseMatrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(Error::Dimension("stacked factors need equal column counts".into()));
        }
        let r = u.cols();
        let f = DenseMatrix::from_fn(u.rows() + v.rows(), r, |i, j| {
            if i < u.rows() {
                u.get(i, j)
            } else {
                v.get(i - u.rows(), j)
            }
        });
        let gram = f.mul(true, &f, false)?;
        let mut err2 = 0.0;
        for i in 0..r {
            for j in 0..r {
                let target = if i == j { 2.0 } else { 0.0 };
                let d = gram.get(i, j) - target;
                err2 += d * d;
            }
        }
        if err2.sqrt() > 1e-9 * r as f64 {
            return Err(Error::Numerical(format!(
                "stacked factor Gram deviates from 2I by {:.3e}",
                err2.sqrt()
            )));
        }
        Ok(Self { f })
    }
}

/// Optimal rotation aligning `f` to `f_star`: G = A B^T from the SVD of
/// H = (1/2) f_star^T f (the orthogonal Procrustes solution).
pub fn procrustes_rotation(f_star: &DenseMatrix, f: &DenseMatrix) -> Result<DenseMatrix> {
    let h = f_star.mul(true, f, false)?.scale(0.5);
    let hf = truncated_svd(&h, h.min_dim())?;
    hf.u.mul(false, &hf.v, true)
}

/// Union of `c` random permutation supports: at most `c` entries per row
/// and per column by construction.
fn sparse_pattern(rng: &mut CounterRng, n: usize, c: usize) -> BTreeSet<(usize, usize)> {
    let mut pattern = BTreeSet::new();
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..c {
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        for (i, &pj) in perm.iter().enumerate() {
            pattern.insert((i, pj));
        }
    }
    pattern
}

fn gaussian_matrix(rng: &mut CounterRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.next_gaussian())
}

/// slack of || S ||_2 <= c || S ||_inf for a pattern with at most c
/// nonzeros per row and column.
fn sparse_spectral_slack(s: &DenseMatrix, c: usize) -> f64 {
    c as f64 * s.entrywise_max() - spectral_norm(s)
}

/// Spectral norm of a sparse matrix against its row/column occupancy bound.
pub fn check_sparse_spectral(trials: usize, seed: u64) -> Result<OracleReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be positive".into()));
    }
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for trial in 0..trials {
        let mut rng = CounterRng::derived(seed, &[tags::ORACLE, 1, trial as u64]);
        let n = 8 + (rng.next_u64() % 23) as usize;
        let c = 1 + (rng.next_u64() % (n as u64 / 2)) as usize;
        let pattern = sparse_pattern(&mut rng, n, c);
        let mut s = DenseMatrix::zeros(n, n);
        for &(i, j) in &pattern {
            s.set(i, j, rng.next_range(-1.0, 1.0));
        }
        let slack = sparse_spectral_slack(&s, c);
        worst = worst.min(slack);
        if slack < -1e-9 {
            violations += 1;
        }
    }
    Ok(OracleReport {
        lemma_name: "sparse-spectral".into(),
        trials,
        worst_slack: worst,
        violations,
    })
}

/// Entrywise deviation of a rank-r projection of a perturbed low-rank
/// matrix against the aligned-factor bound.
pub fn check_perturbation_bound(trials: usize, seed: u64) -> Result<OracleReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be positive".into()));
    }
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for trial in 0..trials {
        let mut rng = CounterRng::derived(seed, &[tags::ORACLE, 2, trial as u64]);
        let n = 10 + (rng.next_u64() % 31) as usize;
        let r = 1 + (rng.next_u64() % 5.min(n as u64 / 2)) as usize;
        let truth_seed = rng.next_u64();
        let gt = crate::problem::gen_ground_truth(n, n, r, truth_seed)?;
        let sigma = &gt.factors.sigma;
        let (sigma1, sigma_r) = (sigma[0], sigma[r - 1]);
        let kappa = sigma1 / sigma_r;

        let e_raw = gaussian_matrix(&mut rng, n, n);
        // Target spectral size 0.4 sigma_r, safely inside the half-sigma_r
        // hypothesis.
        let e = e_raw.scale(0.4 * sigma_r / spectral_norm(&e_raw));
        let e_op = spectral_norm(&e);

        let perturbed = gt.l_star.sub(&e.scale(-1.0))?;
        let lf = truncated_svd(&perturbed, r)?;
        let l = lf.reconstruct();

        let f_star = StackedFactors::new(&gt.factors.u, &gt.factors.v)?;
        let f = StackedFactors::new(&lf.u, &lf.v)?;
        let g = procrustes_rotation(&f_star.f, &f.f)?;
        let delta = f.f.sub(&f_star.f.matmul(&g)?)?;

        let lhs = l.max_abs_diff(&gt.l_star)?;
        let f_2inf = f.f.norms().two_inf;
        let fs_2inf = f_star.f.norms().two_inf;
        let rhs = delta.norms().two_inf * (f_2inf + fs_2inf) * lf.sigma[0]
            + (3.0 + 4.0 * kappa) * fs_2inf * fs_2inf * e_op;
        let slack = rhs - lhs;
        worst = worst.min(slack);
        if slack < -1e-8 * sigma1 {
            violations += 1;
        }
    }
    Ok(OracleReport {
        lemma_name: "perturbation".into(),
        trials,
        worst_slack: worst,
        violations,
    })
}

/// Frobenius mass a sparse pattern can pick up from a rank-r product.
pub fn check_sparse_projection_bound(trials: usize, seed: u64) -> Result<OracleReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be positive".into()));
    }
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for trial in 0..trials {
        let mut rng = CounterRng::derived(seed, &[tags::ORACLE, 3, trial as u64]);
        let n = 10 + (rng.next_u64() % 16) as usize;
        let r = 1 + (rng.next_u64() % 3) as usize;
        let c = 1 + (rng.next_u64() % (n as u64 / 2)) as usize;
        let pattern = sparse_pattern(&mut rng, n, c);
        let a = gaussian_matrix(&mut rng, n, r);
        let b = gaussian_matrix(&mut rng, n, r);
        let slack = sparse_projection_slack(&pattern, c, &a, &b);
        worst = worst.min(slack);
        if slack < -1e-9 {
            violations += 1;
        }
    }
    Ok(OracleReport {
        lemma_name: "sparse-projection".into(),
        trials,
        worst_slack: worst,
        violations,
    })
}

/// slack of || P_pattern(A B^T) ||_F^2 <= c min(||A||_F^2 ||B||_{2,inf}^2,
/// ||A||_{2,inf}^2 ||B||_F^2) for a pattern with at most c nonzeros per row
/// and column.
fn sparse_projection_slack(
    pattern: &BTreeSet<(usize, usize)>,
    c: usize,
    a: &DenseMatrix,
    b: &DenseMatrix,
) -> f64 {
    let r = a.cols();
    let mut lhs = 0.0;
    for &(i, j) in pattern {
        let mut dot = 0.0;
        for l in 0..r {
            dot += a.get(i, l) * b.get(j, l);
        }
        lhs += dot * dot;
    }
    let na = a.norms();
    let nb = b.norms();
    let rhs = c as f64
        * (na.frobenius.powi(2) * nb.two_inf.powi(2))
            .min(na.two_inf.powi(2) * nb.frobenius.powi(2));
    rhs - lhs
}

/// Thresholding-step conclusions: support containment inside the planted
/// outlier support, and the (K + B) xi_t entrywise error bound, under the
/// iterate-proximity premise.
pub fn check_threshold_lemma(trials: usize, seed: u64) -> Result<OracleReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be positive".into()));
    }
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for trial in 0..trials {
        let mut rng = CounterRng::derived(seed, &[tags::ORACLE, 4, trial as u64]);
        let n = 20 + (rng.next_u64() % 21) as usize;
        let r = 1 + (rng.next_u64() % 3) as usize;
        let p = rng.next_range(0.5, 1.0);
        let alpha = rng.next_range(0.0, 0.1);
        let inst = gen_instance(InstanceParams {
            n1: n,
            n2: n,
            rank: r,
            p,
            alpha,
            seed: rng.next_u64(),
        })?;
        let gt = &inst.truth;
        let envelope = gt.entrywise_bound();
        let t = (rng.next_u64() % 6) as usize;
        let gamma: f64 = 0.9;
        let decay = gamma.powi(t as i32);
        let beta = rng.next_range(1.0, 1.5) * envelope;
        let xi_t = beta * decay;
        let kind = if rng.next_bool(0.5) {
            ThresholdKind::Soft
        } else {
            ThresholdKind::Scad { a: 3.0 }
        };

        // Clipped perturbation: strictly inside the premise ball so the
        // containment conclusion is not decided by a final rounding ulp.
        let bound_t = 0.999 * envelope * decay;
        let l_t = DenseMatrix::from_fn(n, n, |i, j| {
            gt.l_star.get(i, j) + rng.next_range(-bound_t, bound_t)
        });

        let cfg = SolverConfig::new(r, kind, crate::solver::BetaSpec::Fixed(beta));
        let state = IterateState {
            t,
            l_t,
            s_t: inst.obs.with_values(vec![0.0; inst.obs.len()])?,
            xi_t,
        };
        let s = s_update(&state, &inst.obs, &cfg)?;

        let planted: BTreeSet<(usize, usize)> =
            gt.s_star.iter().map(|t| (t.i, t.j)).collect();
        let contained = s.support_indices().all(|ij| planted.contains(&ij));
        if !contained {
            violations += 1;
        }

        let k_const = kind.lipschitz_k().expect("conforming kinds only");
        let b_const = kind.offset_b().expect("conforming kinds only");
        let mut max_err = 0.0f64;
        for (ts, _to) in s.triplets().iter().zip(inst.obs.triplets()) {
            let planted_value = gt
                .s_star
                .binary_search_by(|x| (x.i, x.j).cmp(&(ts.i, ts.j)))
                .ok()
                .map(|idx| gt.s_star[idx].value)
                .unwrap_or(0.0);
            max_err = max_err.max((ts.value - planted_value).abs());
        }
        let bound = (k_const + b_const) * xi_t;
        let slack = bound - max_err;
        worst = worst.min(slack);
        if slack < -1e-12 * beta {
            violations += 1;
        }
    }
    Ok(OracleReport {
        lemma_name: "threshold".into(),
        trials,
        worst_slack: worst,
        violations,
    })
}

/// All four lemma checks in their canonical order.
pub fn run_all(trials: usize, seed: u64) -> Result<Vec<OracleReport>> {
    Ok(vec![
        check_sparse_spectral(trials, seed)?,
        check_perturbation_bound(trials, seed)?,
        check_sparse_projection_bound(trials, seed)?,
        check_threshold_lemma(trials, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::rank_r_project;

    #[test]
    fn sparse_spectral_equality_cases() {
        // S = I with c = 1: ||S||_2 = 1 <= 1 * 1, slack ~ 0.
        let slack = sparse_spectral_slack(&DenseMatrix::identity(4), 1);
        assert!(slack.abs() < 1e-9);
        // Single nonzero of value 5 with c = 1.
        let mut s = DenseMatrix::zeros(3, 3);
        s.set(1, 2, 5.0);
        let slack = sparse_spectral_slack(&s, 1);
        assert!(slack.abs() < 1e-9);
    }

    #[test]
    fn sparse_spectral_randomized() {
        let rep = check_sparse_spectral(50, 7).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.worst_slack >= -1e-9);
    }

    #[test]
    fn sparse_pattern_respects_occupancy() {
        let mut rng = CounterRng::new(3);
        for &(n, c) in &[(10usize, 2usize), (25, 5)] {
            let pat = sparse_pattern(&mut rng, n, c);
            let mut rows = vec![0usize; n];
            let mut cols = vec![0usize; n];
            for &(i, j) in &pat {
                rows[i] += 1;
                cols[j] += 1;
            }
            assert!(rows.iter().all(|&x| x <= c));
            assert!(cols.iter().all(|&x| x <= c));
        }
    }

    #[test]
    fn perturbation_zero_noise_is_tight_side() {
        // E = 0 is outside the randomized path; exercise the pieces directly.
        let gt = crate::problem::gen_ground_truth(15, 15, 2, 5).unwrap();
        let l = rank_r_project(&gt.l_star, 2).unwrap();
        let lf = truncated_svd(&gt.l_star, 2).unwrap();
        let f_star = StackedFactors::new(&gt.factors.u, &gt.factors.v).unwrap();
        let f = StackedFactors::new(&lf.u, &lf.v).unwrap();
        let g = procrustes_rotation(&f_star.f, &f.f).unwrap();
        let delta = f.f.sub(&f_star.f.matmul(&g).unwrap()).unwrap();
        assert!(delta.norms().frobenius < 1e-9);
        assert!(l.max_abs_diff(&gt.l_star).unwrap() < 1e-9 * gt.sigma1());
    }

    #[test]
    fn perturbation_randomized() {
        let rep = check_perturbation_bound(25, 11).unwrap();
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn procrustes_rotation_is_orthogonal_and_optimal() {
        let mut rng = CounterRng::new(17);
        let gt = crate::problem::gen_ground_truth(12, 12, 3, 9).unwrap();
        let e_raw = gaussian_matrix(&mut rng, 12, 12);
        let e = e_raw.scale(0.3 * gt.factors.sigma[2] / spectral_norm(&e_raw));
        let lf = truncated_svd(&gt.l_star.sub(&e).unwrap(), 3).unwrap();
        let f_star = StackedFactors::new(&gt.factors.u, &gt.factors.v).unwrap();
        let f = StackedFactors::new(&lf.u, &lf.v).unwrap();
        let g = procrustes_rotation(&f_star.f, &f.f).unwrap();
        let gtg = g.mul(true, &g, false).unwrap();
        assert!(gtg.max_abs_diff(&DenseMatrix::identity(3)).unwrap() < 1e-10);
        let best = f.f.sub(&f_star.f.matmul(&g).unwrap()).unwrap().norms().frobenius;
        for k in 0..50 {
            let q = truncated_svd(&gaussian_matrix(&mut rng, 3, 3), 3).unwrap();
            let rot = q.u.mul(false, &q.v, true).unwrap();
            let _ = k;
            let other = f.f.sub(&f_star.f.matmul(&rot).unwrap()).unwrap().norms().frobenius;
            assert!(best <= other + 1e-9);
        }
    }

    #[test]
    fn sparse_projection_trivial_cases() {
        let mut rng = CounterRng::new(5);
        let a = gaussian_matrix(&mut rng, 8, 2);
        let b = gaussian_matrix(&mut rng, 8, 2);
        // Empty pattern: left side zero, slack = rhs >= 0.
        let empty = BTreeSet::new();
        assert!(sparse_projection_slack(&empty, 1, &a, &b) >= 0.0);
        // Full pattern with c = n.
        let full: BTreeSet<_> = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).collect();
        assert!(sparse_projection_slack(&full, 8, &a, &b) >= -1e-9);
    }

    #[test]
    fn sparse_projection_randomized() {
        let rep = check_sparse_projection_bound(50, 23).unwrap();
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn threshold_lemma_randomized() {
        let rep = check_threshold_lemma(40, 31).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.worst_slack >= 0.0);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(check_sparse_spectral(0, 1).is_err());
        assert!(check_threshold_lemma(0, 1).is_err());
    }
}
