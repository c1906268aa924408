//! Synthetic instance generation: planted low-rank ground truth, Bernoulli
//! sampling mask, uniform outlier injection, and assumption diagnostics.
//!
//! All generators are pure functions of (dimensions, parameters, seed).
//! Each one folds its own role tag into the caller's seed, so passing the
//! same seed to different generators still yields disjoint streams.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{tags, CounterRng};
use crate::svd::{incoherence, truncated_svd, IncoherenceReport, SvdFactors};
use std::fmt::Write as _;
use std::path::Path;

/// One sampled entry: 0-based indices and an observed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Sampled index set with observed values, sorted by (i, j) with no
/// duplicates, plus the nominal sampling rate it was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    triplets: Vec<Triplet>,
    sample_rate_p: f64,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize, triplets: Vec<Triplet>, p: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("observation dimensions must be positive".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!("sample rate p = {p} must lie in (0, 1]")));
        }
        for t in &triplets {
            if t.i >= rows || t.j >= cols {
                return Err(Error::Dimension(format!(
                    "index ({}, {}) out of range for {rows} x {cols}",
                    t.i, t.j
                )));
            }
            if !t.value.is_finite() {
                return Err(Error::Parameter(format!(
                    "non-finite observation at ({}, {})",
                    t.i, t.j
                )));
            }
        }
        for w in triplets.windows(2) {
            if (w[1].i, w[1].j) <= (w[0].i, w[0].j) {
                return Err(Error::Parameter(
                    "triplets must be strictly sorted by (i, j)".into(),
                ));
            }
        }
        Ok(Self {
            rows,
            cols,
            triplets,
            sample_rate_p: p,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sample_rate_p(&self) -> f64 {
        self.sample_rate_p
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn values(&self) -> Vec<f64> {
        self.triplets.iter().map(|t| t.value).collect()
    }

    /// Same index set, new values (positionally aligned).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.triplets.len() {
            return Err(Error::Dimension("value count does not match index set".into()));
        }
        let triplets = self
            .triplets
            .iter()
            .zip(values)
            .map(|(t, value)| Triplet { value, ..*t })
            .collect();
        Self::new(self.rows, self.cols, triplets, self.sample_rate_p)
    }

    /// Number of entries holding a nonzero value.
    pub fn support_size(&self) -> usize {
        self.triplets.iter().filter(|t| t.value != 0.0).count()
    }

    pub fn support_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.triplets
            .iter()
            .filter(|t| t.value != 0.0)
            .map(|t| (t.i, t.j))
    }

    pub fn value_at(&self, i: usize, j: usize) -> Option<f64> {
        self.triplets
            .binary_search_by(|t| (t.i, t.j).cmp(&(i, j)))
            .ok()
            .map(|idx| self.triplets[idx].value)
    }

    /// Dense embedding with zeros off the index set, scaled by `scale`.
    pub fn to_dense_scaled(&self, scale: f64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for t in &self.triplets {
            m.set(t.i, t.j, t.value * scale);
        }
        m
    }

    /// Serialize: "n1 n2 p" header then one sorted "i j value" line per
    /// triplet, full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.triplets.len() * 32 + 32);
        let _ = writeln!(out, "{} {} {:.16e}", self.rows, self.cols, self.sample_rate_p);
        for t in &self.triplets {
            let _ = writeln!(out, "{} {} {:.16e}", t.i, t.j, t.value);
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        fn tok<'a>(
            it: &mut std::str::SplitWhitespace<'a>,
            lineno: usize,
            what: &str,
        ) -> Result<&'a str> {
            it.next()
                .ok_or_else(|| Error::parse(lineno, format!("missing {what}")))
        }
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing observation header"))?;
        let mut it = header.split_whitespace();
        let rows: usize = tok(&mut it, 1, "n1")?
            .parse()
            .map_err(|_| Error::parse(1, "invalid n1"))?;
        let cols: usize = tok(&mut it, 1, "n2")?
            .parse()
            .map_err(|_| Error::parse(1, "invalid n2"))?;
        let p: f64 = tok(&mut it, 1, "p")?
            .parse()
            .map_err(|_| Error::parse(1, "invalid p"))?;
        let mut triplets = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i: usize = tok(&mut it, lineno, "row index")?
                .parse()
                .map_err(|_| Error::parse(lineno, "invalid row index"))?;
            let j: usize = tok(&mut it, lineno, "column index")?
                .parse()
                .map_err(|_| Error::parse(lineno, "invalid column index"))?;
            let value: f64 = tok(&mut it, lineno, "value")?
                .parse()
                .map_err(|_| Error::parse(lineno, "invalid value"))?;
            if it.next().is_some() {
                return Err(Error::parse(lineno, "trailing tokens"));
            }
            triplets.push(Triplet { i, j, value });
        }
        Self::new(rows, cols, triplets, p)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Bernoulli sampling mask with its nominal rate.
#[derive(Debug, Clone)]
pub struct SampleMask {
    pub rows: usize,
    pub cols: usize,
    pub nominal_p: f64,
    /// Row-major sorted index list.
    pub indices: Vec<(usize, usize)>,
}

/// Planted instance ground truth. `s_star` lists the injected outliers
/// (support membership is by corruption event, so a drawn value of exactly
/// zero still counts).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub l_star: DenseMatrix,
    pub factors: SvdFactors,
    pub s_star: Vec<Triplet>,
    pub incoherence: IncoherenceReport,
}

impl GroundTruth {
    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn sigma1(&self) -> f64 {
        self.factors.sigma[0]
    }

    /// The envelope (mu r / n) sigma_1 that bounds || L* ||_inf and scales
    /// the oracle threshold, with n = max(n1, n2).
    pub fn entrywise_bound(&self) -> f64 {
        let n = self.l_star.rows().max(self.l_star.cols()) as f64;
        self.incoherence.mu * self.rank() as f64 / n * self.sigma1()
    }

    pub fn s_star_support(&self) -> Vec<(usize, usize)> {
        self.s_star.iter().map(|t| (t.i, t.j)).collect()
    }
}

/// Outlier sparsity bookkeeping over the observed support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityStats {
    pub max_row_count: usize,
    pub max_col_count: usize,
    /// max(per-row, per-column outlier count) / (p n), n = max(n1, n2).
    pub alpha_hat: f64,
    pub total_outliers: usize,
}

/// Informational assumption diagnostics; reporting only, never a gate.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionReport {
    pub mu: f64,
    pub kappa: f64,
    pub alpha_hat: f64,
    pub p: f64,
    /// p n / (kappa^4 mu^3 r^3 log n): the sample-size scaling with the
    /// unknown absolute constant divided out.
    pub sample_scaling: f64,
    /// alpha_hat kappa^2 mu^2 r^2: the outlier-budget scaling likewise.
    pub outlier_scaling: f64,
}

/// Plant a rank-r ground truth L* = X Y^T with standard Gaussian factors.
pub fn gen_ground_truth(n1: usize, n2: usize, r: usize, seed: u64) -> Result<GroundTruth> {
    if r == 0 || r > n1.min(n2) {
        return Err(Error::Dimension(format!(
            "rank {r} out of range for {n1} x {n2}"
        )));
    }
    let mut rng = CounterRng::derived(seed, &[tags::GROUND_TRUTH]);
    let x = DenseMatrix::from_fn(n1, r, |_, _| rng.next_gaussian());
    let y = DenseMatrix::from_fn(n2, r, |_, _| rng.next_gaussian());
    let l_star = x.mul(false, &y, true)?;
    let factors = truncated_svd(&l_star, r)?;
    let inc = incoherence(&factors.u, &factors.v, &factors.sigma)?;
    Ok(GroundTruth {
        l_star,
        factors,
        s_star: Vec::new(),
        incoherence: inc,
    })
}

/// Draw a Bernoulli(p) mask, one uniform per entry in row-major order.
pub fn sample_mask(n1: usize, n2: usize, p: f64, seed: u64) -> Result<SampleMask> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Dimension("mask dimensions must be positive".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p = {p} must lie in (0, 1]")));
    }
    let mut rng = CounterRng::derived(seed, &[tags::MASK]);
    let mut indices = Vec::with_capacity((p * (n1 * n2) as f64 * 1.1) as usize + 16);
    for i in 0..n1 {
        for j in 0..n2 {
            if rng.next_bool(p) {
                indices.push((i, j));
            }
        }
    }
    Ok(SampleMask {
        rows: n1,
        cols: n2,
        nominal_p: p,
        indices,
    })
}

/// Corrupt each masked entry with probability `alpha` by an outlier drawn
/// uniformly from [-2 ||L*||_inf, 2 ||L*||_inf], record the outliers into
/// `gt.s_star`, and assemble the observations M = P_Omega(L* + S*).
pub fn inject_outliers(
    gt: &mut GroundTruth,
    mask: &SampleMask,
    alpha: f64,
    seed: u64,
) -> Result<(ObservationSet, SparsityStats)> {
    if mask.indices.is_empty() {
        return Err(Error::Parameter("mask must be nonempty".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha = {alpha} must lie in [0, 1)")));
    }
    if mask.rows != gt.l_star.rows() || mask.cols != gt.l_star.cols() {
        return Err(Error::Dimension("mask shape does not match ground truth".into()));
    }
    let linf = gt.l_star.entrywise_max();
    let bound = 2.0 * linf;
    let mut rng = CounterRng::derived(seed, &[tags::OUTLIERS]);
    let mut triplets = Vec::with_capacity(mask.indices.len());
    let mut s_star = Vec::new();
    for &(i, j) in &mask.indices {
        let corrupt = rng.next_bool(alpha);
        let l_entry = gt.l_star.get(i, j);
        let observed = if corrupt {
            l_entry + rng.next_range(-bound, bound)
        } else {
            l_entry
        };
        if corrupt {
            // Record the outlier as the representable residual so that
            // observed - L* equals the stored value exactly.
            s_star.push(Triplet {
                i,
                j,
                value: observed - l_entry,
            });
        }
        triplets.push(Triplet {
            i,
            j,
            value: observed,
        });
    }
    let obs = ObservationSet::new(mask.rows, mask.cols, triplets, mask.nominal_p)?;
    let stats = sparsity_stats(
        mask.rows,
        mask.cols,
        mask.nominal_p,
        s_star.iter().map(|t| (t.i, t.j)),
    );
    gt.s_star = s_star;
    Ok((obs, stats))
}

pub(crate) fn sparsity_stats(
    rows: usize,
    cols: usize,
    p: f64,
    support: impl Iterator<Item = (usize, usize)>,
) -> SparsityStats {
    let mut row_counts = vec![0usize; rows];
    let mut col_counts = vec![0usize; cols];
    let mut total = 0usize;
    for (i, j) in support {
        row_counts[i] += 1;
        col_counts[j] += 1;
        total += 1;
    }
    let max_row_count = row_counts.into_iter().max().unwrap_or(0);
    let max_col_count = col_counts.into_iter().max().unwrap_or(0);
    let n = rows.max(cols) as f64;
    SparsityStats {
        max_row_count,
        max_col_count,
        alpha_hat: max_row_count.max(max_col_count) as f64 / (p * n),
        total_outliers: total,
    }
}

/// Evaluate the assumption scalings on a generated instance.
pub fn check_assumptions(
    gt: &GroundTruth,
    obs: &ObservationSet,
    stats: &SparsityStats,
) -> AssumptionReport {
    let inc = &gt.incoherence;
    let n = obs.rows().max(obs.cols()) as f64;
    let r = gt.rank() as f64;
    let p = obs.sample_rate_p();
    let sample_scaling =
        p * n / (inc.kappa.powi(4) * inc.mu.powi(3) * r.powi(3) * n.ln());
    AssumptionReport {
        mu: inc.mu,
        kappa: inc.kappa,
        alpha_hat: stats.alpha_hat,
        p,
        sample_scaling,
        outlier_scaling: stats.alpha_hat * inc.kappa.powi(2) * inc.mu.powi(2) * r.powi(2),
    }
}

/// Parameters of one synthetic instance.
#[derive(Debug, Clone, Copy)]
pub struct InstanceParams {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub p: f64,
    pub alpha: f64,
    pub seed: u64,
}

/// A fully generated instance: truth (with outliers recorded), the
/// observations handed to solvers, and the sparsity bookkeeping.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: GroundTruth,
    pub obs: ObservationSet,
    pub stats: SparsityStats,
}

pub fn gen_instance(params: InstanceParams) -> Result<Instance> {
    let mut truth = gen_ground_truth(params.n1, params.n2, params.rank, params.seed)?;
    let mask = sample_mask(params.n1, params.n2, params.p, params.seed)?;
    let (obs, stats) = inject_outliers(&mut truth, &mask, params.alpha, params.seed)?;
    Ok(Instance { truth, obs, stats })
}

/// Ground-truth sidecar file: the dense matrix block followed by an
/// "outliers <count>" section listing the planted corruption triplets.
pub fn write_truth_file(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = gt.l_star.to_text();
    let _ = writeln!(out, "outliers {}", gt.s_star.len());
    for t in &gt.s_star {
        let _ = writeln!(out, "{} {} {:.16e}", t.i, t.j, t.value);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a ground-truth sidecar; `rank` drives the factor recomputation.
pub fn read_truth_file(path: impl AsRef<Path>, rank: usize) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    let l_star = DenseMatrix::from_text_lines(&mut lines)?;
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| Error::parse(0, "missing outlier section"))?;
    let count: usize = header
        .strip_prefix("outliers ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(lineno, "expected 'outliers <count>'"))?;
    let mut s_star = Vec::with_capacity(count);
    for _ in 0..count {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(lineno, "outlier section ended early"))?;
        let mut it = line.split_whitespace();
        let mut next_tok = |what: &str| -> Result<String> {
            it.next()
                .map(str::to_owned)
                .ok_or_else(|| Error::parse(lineno, format!("missing {what}")))
        };
        let i: usize = next_tok("row")?
            .parse()
            .map_err(|_| Error::parse(lineno, "invalid row"))?;
        let j: usize = next_tok("col")?
            .parse()
            .map_err(|_| Error::parse(lineno, "invalid col"))?;
        let value: f64 = next_tok("value")?
            .parse()
            .map_err(|_| Error::parse(lineno, "invalid value"))?;
        s_star.push(Triplet { i, j, value });
    }
    let factors = truncated_svd(&l_star, rank)?;
    let inc = incoherence(&factors.u, &factors.v, &factors.sigma)?;
    Ok(GroundTruth {
        l_star,
        factors,
        s_star,
        incoherence: inc,
    })
}
