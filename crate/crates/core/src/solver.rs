//! The alternating solver: entrywise thresholding for the outlier estimate,
//! rank-r singular value projection for the low-rank estimate, with a
//! geometrically decaying threshold schedule and full iteration traces.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::problem::{GroundTruth, ObservationSet};
use crate::threshold::{apply_sparse, ThresholdKind};
use crate::svd::{rank_r_project, truncated_svd};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

/// How the threshold scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    /// Use the given value directly.
    Fixed(f64),
    /// factor * (mu r / n) sigma_1 computed from supplied ground truth.
    Oracle { factor: f64 },
    /// factor * the data-driven estimate from the observations themselves.
    DataDriven { factor: f64 },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub rank_r: usize,
    pub kind: ThresholdKind,
    pub beta: BetaSpec,
    /// Threshold decay rate, in (0, 1).
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative successive-iterate change below which the run converges.
    pub stop_tol: f64,
    /// Record wall-clock per iteration. Off by default so traces are
    /// byte-reproducible; timing columns read 0 when disabled.
    pub record_timing: bool,
}

impl SolverConfig {
    pub fn new(rank_r: usize, kind: ThresholdKind, beta: BetaSpec) -> Self {
        Self {
            rank_r,
            kind,
            beta,
            gamma: 0.9,
            max_iters: 500,
            stop_tol: 1e-9,
            record_timing: false,
        }
    }

    fn validate(&self, obs: &ObservationSet) -> Result<()> {
        self.kind.validate()?;
        if self.rank_r == 0 || self.rank_r > obs.rows().min(obs.cols()) {
            return Err(Error::Dimension(format!(
                "rank {} out of range for {} x {} observations",
                self.rank_r,
                obs.rows(),
                obs.cols()
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter(format!(
                "gamma = {} must lie in (0, 1)",
                self.gamma
            )));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::Parameter("stop_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Solver state at the top of iteration t.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub t: usize,
    pub l_t: DenseMatrix,
    pub s_t: ObservationSet,
    pub xi_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    /// xi_t = beta * gamma^t, the threshold governing iteration t.
    pub xi: f64,
    /// ||L^t - L^{t-1}||_F / max(||L^{t-1}||_F, 1e-30); zero at t = 0.
    pub successive_change: f64,
    /// Nonzero count of S^t.
    pub support_size: usize,
    /// ||L^t - L*||_inf / ||L*||_inf when ground truth was supplied.
    pub rel_inf_error: Option<f64>,
    /// supp(S^t) contained in the planted outlier support, when known.
    pub support_in_truth: Option<bool>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminationReason {
    Converged,
    MaxIters,
    /// A numerical failure mid-run; the trace holds the progress made.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// One record per iterate, starting at t = 0 (the zero initialization).
    pub records: Vec<IterationRecord>,
    pub l_hat: DenseMatrix,
    pub s_hat: ObservationSet,
    pub termination: TerminationReason,
    /// The resolved threshold scale actually used.
    pub beta: f64,
}

impl SolveTrace {
    pub fn iterations_executed(&self) -> usize {
        self.records.len() - 1
    }

    /// Loop index at which the stop rule fired, for converged runs.
    pub fn converged_at(&self) -> Option<usize> {
        match self.termination {
            TerminationReason::Converged => Some(self.records.len() - 2),
            _ => None,
        }
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("trace always has the t = 0 record")
    }

    /// Trace CSV; optional columns are left empty when truth was absent.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("t,xi,successive_change,support_size,rel_inf_error,support_in_truth,wall_ms\n");
        for r in &self.records {
            let _ = write!(out, "{},{:.16e},{:.16e},{}", r.t, r.xi, r.successive_change, r.support_size);
            match r.rel_inf_error {
                Some(e) => {
                    let _ = write!(out, ",{:.16e}", e);
                }
                None => out.push(','),
            }
            match r.support_in_truth {
                Some(b) => {
                    let _ = write!(out, ",{b}");
                }
                None => out.push(','),
            }
            let _ = writeln!(out, ",{}", r.wall_ms);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// S^t = T_{xi_t}(P_Omega(M - L^t)).
pub fn s_update(
    state: &IterateState,
    obs: &ObservationSet,
    cfg: &SolverConfig,
) -> Result<ObservationSet> {
    if !(state.xi_t > 0.0) {
        return Err(Error::Parameter(format!(
            "threshold xi = {} must be positive",
            state.xi_t
        )));
    }
    let residual: Vec<f64> = obs
        .triplets()
        .iter()
        .map(|t| t.value - state.l_t.get(t.i, t.j))
        .collect();
    apply_sparse(cfg.kind, state.xi_t, &obs.with_values(residual)?)
}

/// L^{t+1} = P_r(L^t - p^{-1} P_Omega(L^t + S^t - M)).
pub fn l_update(
    state: &IterateState,
    s_new: &ObservationSet,
    obs: &ObservationSet,
    cfg: &SolverConfig,
    p: f64,
) -> Result<DenseMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p = {p} must lie in (0, 1]")));
    }
    if s_new.len() != obs.len() {
        return Err(Error::Dimension("outlier estimate index set differs from observations".into()));
    }
    let mut w = state.l_t.clone();
    let inv_p = 1.0 / p;
    for (to, ts) in obs.triplets().iter().zip(s_new.triplets()) {
        debug_assert!(to.i == ts.i && to.j == ts.j);
        let cur = w.get(to.i, to.j);
        w.set(to.i, to.j, cur - inv_p * (cur + ts.value - to.value));
    }
    rank_r_project(&w, cfg.rank_r)
}

/// Heuristic threshold scale from the observations alone: the incoherence
/// envelope (mu r / n) sigma_1 of the rank-r SVD of p^{-1} times the dense
/// embedding of the observations.
pub fn beta_data_driven(obs: &ObservationSet, rank_r: usize) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::Parameter("observations are empty".into()));
    }
    if rank_r == 0 || rank_r > obs.rows().min(obs.cols()) {
        return Err(Error::Dimension(format!(
            "rank {rank_r} out of range for {} x {}",
            obs.rows(),
            obs.cols()
        )));
    }
    let dense = obs.to_dense_scaled(1.0 / obs.sample_rate_p());
    if dense.entrywise_max() == 0.0 {
        return Ok(0.0);
    }
    let f = truncated_svd(&dense, rank_r)?;
    let sigma1 = f.sigma[0];
    if sigma1 <= 0.0 {
        return Ok(0.0);
    }
    let row_u = f.u.norms().two_inf;
    let row_v = f.v.norms().two_inf;
    let n = obs.rows().max(obs.cols()) as f64;
    let mu = (n / rank_r as f64) * row_u.powi(2).max(row_v.powi(2));
    Ok(mu * rank_r as f64 / n * sigma1)
}

fn resolve_beta(
    cfg: &SolverConfig,
    obs: &ObservationSet,
    truth: Option<&GroundTruth>,
) -> Result<f64> {
    let beta = match cfg.beta {
        BetaSpec::Fixed(b) => b,
        BetaSpec::Oracle { factor } => {
            let truth = truth.ok_or_else(|| {
                Error::Parameter("oracle beta requires ground truth".into())
            })?;
            factor * truth.entrywise_bound()
        }
        BetaSpec::DataDriven { factor } => factor * beta_data_driven(obs, cfg.rank_r)?,
    };
    if !(beta > 0.0) {
        return Err(Error::Parameter(format!(
            "threshold scale beta = {beta} must be positive"
        )));
    }
    Ok(beta)
}

struct TruthInstrumentation<'a> {
    l_star: &'a DenseMatrix,
    l_star_inf: f64,
    outlier_support: BTreeSet<(usize, usize)>,
}

impl<'a> TruthInstrumentation<'a> {
    fn new(truth: &'a GroundTruth) -> Self {
        Self {
            l_star: &truth.l_star,
            l_star_inf: truth.l_star.entrywise_max().max(1e-30),
            outlier_support: truth.s_star.iter().map(|t| (t.i, t.j)).collect(),
        }
    }

    fn rel_inf_error(&self, l: &DenseMatrix) -> f64 {
        l.max_abs_diff(self.l_star).expect("shape checked at solve start") / self.l_star_inf
    }

    fn support_contained(&self, s: &ObservationSet) -> bool {
        s.support_indices().all(|ij| self.outlier_support.contains(&ij))
    }
}

/// Run the alternating solver from L^0 = 0.
///
/// Iteration t computes S^t from L^t with threshold xi_t = beta gamma^t and
/// then L^{t+1} by projected gradient; the run stops when the relative
/// successive change falls below `stop_tol` or after `max_iters` updates.
/// When ground truth is supplied, per-iteration error and support flags are
/// recorded in the trace.
pub fn solve(
    obs: &ObservationSet,
    cfg: &SolverConfig,
    truth: Option<&GroundTruth>,
) -> Result<SolveTrace> {
    cfg.validate(obs)?;
    if let Some(t) = truth {
        if t.l_star.rows() != obs.rows() || t.l_star.cols() != obs.cols() {
            return Err(Error::Dimension("ground truth shape differs from observations".into()));
        }
    }
    let beta = resolve_beta(cfg, obs, truth)?;
    let p = obs.sample_rate_p();
    let instr = truth.map(TruthInstrumentation::new);

    let mut state = IterateState {
        t: 0,
        l_t: DenseMatrix::zeros(obs.rows(), obs.cols()),
        s_t: obs.with_values(vec![0.0; obs.len()])?,
        xi_t: beta,
    };
    let t0 = Instant::now();
    state.s_t = s_update(&state, obs, cfg)?;
    let mut records = Vec::with_capacity(cfg.max_iters.min(1024) + 1);
    records.push(IterationRecord {
        t: 0,
        xi: state.xi_t,
        successive_change: 0.0,
        support_size: state.s_t.support_size(),
        rel_inf_error: instr.as_ref().map(|i| i.rel_inf_error(&state.l_t)),
        support_in_truth: instr.as_ref().map(|i| i.support_contained(&state.s_t)),
        wall_ms: if cfg.record_timing {
            t0.elapsed().as_millis() as u64
        } else {
            0
        },
    });

    let mut termination = TerminationReason::MaxIters;
    for t in 0..cfg.max_iters {
        let iter_start = Instant::now();
        let l_next = match l_update(&state, &state.s_t, obs, cfg, p) {
            Ok(l) => l,
            Err(e) => {
                termination = TerminationReason::Failed(e.to_string());
                break;
            }
        };
        let change = l_next.frobenius_diff(&state.l_t)?
            / state.l_t.frobenius().max(1e-30);
        state.l_t = l_next;
        state.t = t + 1;
        state.xi_t *= cfg.gamma;
        state.s_t = match s_update(&state, obs, cfg) {
            Ok(s) => s,
            Err(e) => {
                termination = TerminationReason::Failed(e.to_string());
                break;
            }
        };
        records.push(IterationRecord {
            t: state.t,
            xi: state.xi_t,
            successive_change: change,
            support_size: state.s_t.support_size(),
            rel_inf_error: instr.as_ref().map(|i| i.rel_inf_error(&state.l_t)),
            support_in_truth: instr.as_ref().map(|i| i.support_contained(&state.s_t)),
            wall_ms: if cfg.record_timing {
                iter_start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        if change < cfg.stop_tol {
            termination = TerminationReason::Converged;
            break;
        }
    }

    Ok(SolveTrace {
        records,
        l_hat: state.l_t,
        s_hat: state.s_t,
        termination,
        beta,
    })
}

/// The hard-thresholding baseline: the identical loop with the hard operator
/// and schedule eta_t = beta gamma^t.
pub fn solve_rrmc(
    obs: &ObservationSet,
    cfg: &SolverConfig,
    truth: Option<&GroundTruth>,
) -> Result<SolveTrace> {
    let cfg = SolverConfig {
        kind: ThresholdKind::Hard,
        ..cfg.clone()
    };
    solve(obs, &cfg, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gen_instance, InstanceParams, Triplet};

    fn full_instance(n: usize, r: usize, alpha: f64, seed: u64) -> crate::problem::Instance {
        gen_instance(InstanceParams {
            n1: n,
            n2: n,
            rank: r,
            p: 1.0,
            alpha,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn one_step_exact_recovery_at_full_sampling() {
        let inst = full_instance(40, 3, 0.0, 5);
        let cfg = SolverConfig::new(3, ThresholdKind::Soft, BetaSpec::Oracle { factor: 1.1 });
        let trace = solve(&inst.obs, &cfg, Some(&inst.truth)).unwrap();
        assert_eq!(trace.termination, TerminationReason::Converged);
        assert_eq!(trace.converged_at(), Some(1));
        assert!(trace.records[1].rel_inf_error.unwrap() <= 1e-10);
        assert!(trace.final_record().rel_inf_error.unwrap() <= 1e-10);
    }

    #[test]
    fn zero_observations_converge_to_zero() {
        let triplets: Vec<Triplet> = (0..6)
            .flat_map(|i| (0..6).map(move |j| Triplet { i, j, value: 0.0 }))
            .collect();
        let obs = ObservationSet::new(6, 6, triplets, 1.0).unwrap();
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Fixed(1.0));
        let trace = solve(&obs, &cfg, None).unwrap();
        assert_eq!(trace.termination, TerminationReason::Converged);
        assert_eq!(trace.converged_at(), Some(0));
        assert_eq!(trace.l_hat.entrywise_max(), 0.0);
    }

    #[test]
    fn s_update_is_zero_at_exact_iterate() {
        let inst = full_instance(20, 2, 0.0, 8);
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Fixed(1.0));
        let state = IterateState {
            t: 0,
            l_t: inst.truth.l_star.clone(),
            s_t: inst.obs.with_values(vec![0.0; inst.obs.len()]).unwrap(),
            xi_t: 1.0,
        };
        let s = s_update(&state, &inst.obs, &cfg).unwrap();
        assert_eq!(s.support_size(), 0);
    }

    #[test]
    fn s_update_zero_when_error_below_threshold() {
        let inst = full_instance(20, 2, 0.0, 12);
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Fixed(1.0));
        let xi = 0.5;
        // Perturb the exact iterate by strictly less than xi everywhere.
        let mut l = inst.truth.l_star.clone();
        for i in 0..l.rows() {
            for j in 0..l.cols() {
                let v = l.get(i, j) + 0.4 * xi * if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                l.set(i, j, v);
            }
        }
        let state = IterateState {
            t: 0,
            l_t: l,
            s_t: inst.obs.with_values(vec![0.0; inst.obs.len()]).unwrap(),
            xi_t: xi,
        };
        let s = s_update(&state, &inst.obs, &cfg).unwrap();
        assert_eq!(s.support_size(), 0);
    }

    #[test]
    fn s_update_estimates_large_outlier_within_offset_bound() {
        // Three observed entries, one planted outlier of magnitude 10 xi.
        let xi = 0.5;
        let outlier = 10.0 * xi;
        let obs = ObservationSet::new(
            2,
            2,
            vec![
                Triplet { i: 0, j: 0, value: outlier },
                Triplet { i: 0, j: 1, value: 0.0 },
                Triplet { i: 1, j: 1, value: 0.0 },
            ],
            1.0,
        )
        .unwrap();
        let cfg = SolverConfig::new(1, ThresholdKind::Soft, BetaSpec::Fixed(xi));
        let state = IterateState {
            t: 0,
            l_t: DenseMatrix::zeros(2, 2),
            s_t: obs.with_values(vec![0.0; 3]).unwrap(),
            xi_t: xi,
        };
        let s = s_update(&state, &obs, &cfg).unwrap();
        assert_eq!(s.support_size(), 1);
        assert!((s.value_at(0, 0).unwrap() - outlier).abs() <= xi + 1e-15);
    }

    #[test]
    fn l_update_recovers_truth_in_one_step_at_full_sampling() {
        let inst = full_instance(30, 2, 0.0, 3);
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Oracle { factor: 1.1 });
        let state = IterateState {
            t: 0,
            l_t: DenseMatrix::zeros(30, 30),
            s_t: inst.obs.with_values(vec![0.0; inst.obs.len()]).unwrap(),
            xi_t: 1.1 * inst.truth.entrywise_bound(),
        };
        let s0 = s_update(&state, &inst.obs, &cfg).unwrap();
        assert_eq!(s0.support_size(), 0, "beta >= ||L*||_inf forces S^0 = 0");
        let l1 = l_update(&state, &s0, &inst.obs, &cfg, 1.0).unwrap();
        assert!(l1.max_abs_diff(&inst.truth.l_star).unwrap() <= 1e-10 * inst.truth.sigma1());
    }

    #[test]
    fn l_update_cancellation_with_exact_outliers() {
        let inst = full_instance(25, 2, 0.2, 31);
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Fixed(1.0));
        // S = exact outliers on the full support.
        let values: Vec<f64> = inst
            .obs
            .triplets()
            .iter()
            .map(|t| t.value - inst.truth.l_star.get(t.i, t.j))
            .collect();
        let s_exact = inst.obs.with_values(values).unwrap();
        let state = IterateState {
            t: 0,
            l_t: inst.truth.l_star.clone(),
            s_t: s_exact.clone(),
            xi_t: 1.0,
        };
        let l1 = l_update(&state, &s_exact, &inst.obs, &cfg, 1.0).unwrap();
        assert!(l1.max_abs_diff(&inst.truth.l_star).unwrap() <= 1e-10 * inst.truth.sigma1());
    }

    #[test]
    fn hard_threshold_removes_single_large_outlier_in_two_iterations() {
        // Rank-1 truth with a zero row, outlier planted on that row so the
        // first hard-threshold step captures it exactly.
        let x = DenseMatrix::new(4, 1, vec![0.0, 1.0, -2.0, 0.5]).unwrap();
        let y = DenseMatrix::new(4, 1, vec![1.0, 2.0, -1.0, 0.3]).unwrap();
        let l_star = x.mul(false, &y, true).unwrap();
        let beta = 1.1 * l_star.entrywise_max();
        let outlier = 5.0 * beta;
        let mut triplets = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                let s = if i == 0 && j == 0 { outlier } else { 0.0 };
                triplets.push(Triplet { i, j, value: l_star.get(i, j) + s });
            }
        }
        let obs = ObservationSet::new(4, 4, triplets, 1.0).unwrap();
        let mut cfg = SolverConfig::new(1, ThresholdKind::Hard, BetaSpec::Fixed(beta));
        cfg.stop_tol = 1e-12;
        let trace = solve_rrmc(&obs, &cfg, None).unwrap();
        assert_eq!(trace.termination, TerminationReason::Converged);
        assert!(trace.iterations_executed() <= 2);
        assert!(trace.l_hat.max_abs_diff(&l_star).unwrap() <= 1e-10);
        assert!((trace.s_hat.value_at(0, 0).unwrap() - outlier).abs() <= 1e-10);
    }

    #[test]
    fn schedule_decays_exactly() {
        let inst = full_instance(20, 2, 0.05, 44);
        let mut cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Oracle { factor: 1.1 });
        cfg.max_iters = 12;
        cfg.stop_tol = 1e-300;
        let trace = solve(&inst.obs, &cfg, Some(&inst.truth)).unwrap();
        for w in trace.records.windows(2) {
            assert_eq!(w[1].xi, w[0].xi * cfg.gamma);
        }
        assert_eq!(trace.records[0].xi, trace.beta);
    }

    #[test]
    fn data_driven_beta_matches_oracle_at_full_clean_sampling() {
        let inst = full_instance(50, 3, 0.0, 6);
        let est = beta_data_driven(&inst.obs, 3).unwrap();
        let oracle = inst.truth.entrywise_bound();
        assert!((est - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn zero_observations_give_zero_beta_and_solver_rejects_it() {
        let triplets: Vec<Triplet> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Triplet { i, j, value: 0.0 }))
            .collect();
        let obs = ObservationSet::new(5, 5, triplets, 1.0).unwrap();
        assert_eq!(beta_data_driven(&obs, 2).unwrap(), 0.0);
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::DataDriven { factor: 1.0 });
        assert!(matches!(solve(&obs, &cfg, None), Err(Error::Parameter(_))));
    }

    #[test]
    fn config_validation() {
        let inst = full_instance(10, 2, 0.0, 1);
        let mut cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Fixed(1.0));
        cfg.gamma = 1.0;
        assert!(solve(&inst.obs, &cfg, None).is_err());
        let mut cfg = SolverConfig::new(11, ThresholdKind::Soft, BetaSpec::Fixed(1.0));
        cfg.gamma = 0.9;
        assert!(solve(&inst.obs, &cfg, None).is_err());
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Oracle { factor: 1.1 });
        assert!(matches!(solve(&inst.obs, &cfg, None), Err(Error::Parameter(_))));
    }

    #[test]
    fn trace_csv_shape() {
        let inst = full_instance(15, 2, 0.0, 9);
        let cfg = SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Oracle { factor: 1.1 });
        let trace = solve(&inst.obs, &cfg, Some(&inst.truth)).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,xi,successive_change,support_size,rel_inf_error,support_in_truth,wall_ms"
        );
        assert_eq!(csv.lines().count(), trace.records.len() + 1);
        // Without truth the optional columns are empty.
        let trace = solve(&inst.obs, &SolverConfig::new(2, ThresholdKind::Soft, BetaSpec::Fixed(1.0)), None)
            .unwrap();
        let csv = trace.to_csv();
        let first_data_line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = first_data_line.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert!(fields[4].is_empty());
        assert!(fields[5].is_empty());
    }
}
