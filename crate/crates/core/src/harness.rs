//! Phase-transition grid experiments: seeded parallel trials over a
//! two-axis parameter grid, success-rate aggregation, and CSV / PGM /
//! manifest outputs. All outputs are pure functions of the parsed config,
//! whatever the thread count.

use crate::error::{Error, Result};
use crate::problem::{gen_instance, InstanceParams};
use crate::rng::{derive_seed, tags};
use crate::solver::{solve, BetaSpec, SolverConfig, TerminationReason};
use crate::threshold::ThresholdKind;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// A sweepable instance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisParam {
    SampleRate,
    Rank,
    OutlierRate,
}

impl AxisParam {
    pub fn name(&self) -> &'static str {
        match self {
            AxisParam::SampleRate => "p",
            AxisParam::Rank => "r",
            AxisParam::OutlierRate => "alpha",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "p" => Some(AxisParam::SampleRate),
            "r" => Some(AxisParam::Rank),
            "alpha" => Some(AxisParam::OutlierRate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AxisSpec {
    pub param: AxisParam,
    pub values: Vec<f64>,
}

/// Algorithm entry: a display name and its thresholding operator.
#[derive(Debug, Clone)]
pub struct AlgorithmSpec {
    pub name: String,
    pub kind: ThresholdKind,
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub n1: usize,
    pub n2: usize,
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    /// Value of the one parameter not swept by an axis.
    pub fixed: (AxisParam, f64),
    pub trials: usize,
    pub algorithms: Vec<AlgorithmSpec>,
    pub success_threshold: f64,
    pub base_seed: u64,
    pub gamma: f64,
    pub beta_factor: f64,
    pub scad_a: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
}

/// Aggregated outcome of one grid cell for one algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub axis1: f64,
    pub axis2: f64,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_iters: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct AlgorithmResults {
    pub name: String,
    /// Cells in (axis1, axis2) lexicographic order.
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub algorithms: Vec<AlgorithmResults>,
    /// Human-readable notes for trials whose solve failed outright; such
    /// trials count as non-successes.
    pub failures: Vec<String>,
}

impl ExperimentGrid {
    fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Parameter("n1 and n2 must be positive".into()));
        }
        if self.axis1.param == self.axis2.param {
            return Err(Error::Parameter("axis1 and axis2 must differ".into()));
        }
        for axis in [&self.axis1, &self.axis2] {
            if axis.values.is_empty() {
                return Err(Error::Parameter(format!(
                    "axis {} has no values",
                    axis.param.name()
                )));
            }
            for w in axis.values.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Parameter(format!(
                        "axis {} values must be strictly increasing",
                        axis.param.name()
                    )));
                }
            }
            for &v in &axis.values {
                self.validate_param(axis.param, v)?;
            }
        }
        let covered = [self.axis1.param, self.axis2.param];
        if covered.contains(&self.fixed.0) {
            return Err(Error::Parameter(format!(
                "parameter {} is both an axis and fixed",
                self.fixed.0.name()
            )));
        }
        self.validate_param(self.fixed.0, self.fixed.1)?;
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Parameter("at least one algorithm required".into()));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::Parameter("success_threshold must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter("gamma must lie in (0, 1)".into()));
        }
        if !(self.beta_factor > 0.0) {
            return Err(Error::Parameter("beta_factor must be positive".into()));
        }
        for a in &self.algorithms {
            a.kind.validate()?;
        }
        Ok(())
    }

    fn validate_param(&self, param: AxisParam, v: f64) -> Result<()> {
        match param {
            AxisParam::SampleRate => {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Parameter(format!("p = {v} must lie in (0, 1]")));
                }
            }
            AxisParam::Rank => {
                if v.fract() != 0.0 || v < 1.0 || v > self.n1.min(self.n2) as f64 {
                    return Err(Error::Parameter(format!(
                        "rank value {v} must be a positive integer at most min(n1, n2)"
                    )));
                }
            }
            AxisParam::OutlierRate => {
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::Parameter(format!("alpha = {v} must lie in [0, 1)")));
                }
            }
        }
        Ok(())
    }

    fn cell_params(&self, v1: f64, v2: f64) -> (f64, usize, f64) {
        let mut p = None;
        let mut r = None;
        let mut alpha = None;
        for (param, v) in [
            (self.axis1.param, v1),
            (self.axis2.param, v2),
            (self.fixed.0, self.fixed.1),
        ] {
            match param {
                AxisParam::SampleRate => p = Some(v),
                AxisParam::Rank => r = Some(v as usize),
                AxisParam::OutlierRate => alpha = Some(v),
            }
        }
        (p.unwrap(), r.unwrap(), alpha.unwrap())
    }

    /// Seed for one (algorithm, cell, trial) tuple; see the collision-scan
    /// test for the disjointness contract.
    pub fn trial_seed(&self, algo_index: usize, v1: f64, v2: f64, trial: usize) -> u64 {
        derive_seed(
            self.base_seed,
            &[
                tags::TRIAL,
                algo_index as u64,
                v1.to_bits(),
                v2.to_bits(),
                trial as u64,
            ],
        )
    }
}

struct TrialOutcome {
    success: bool,
    iters: usize,
    wall_ms: u64,
    failure: Option<String>,
}

fn run_trial(grid: &ExperimentGrid, algo: &AlgorithmSpec, ai: usize, v1: f64, v2: f64, trial: usize) -> TrialOutcome {
    let (p, rank, alpha) = grid.cell_params(v1, v2);
    let seed = grid.trial_seed(ai, v1, v2, trial);
    let inst = match gen_instance(InstanceParams {
        n1: grid.n1,
        n2: grid.n2,
        rank,
        p,
        alpha,
        seed,
    }) {
        Ok(inst) => inst,
        Err(e) => {
            return TrialOutcome {
                success: false,
                iters: 0,
                wall_ms: 0,
                failure: Some(format!(
                    "{} cell ({v1}, {v2}) trial {trial}: instance generation failed: {e}",
                    algo.name
                )),
            }
        }
    };
    let cfg = SolverConfig {
        rank_r: rank,
        kind: algo.kind,
        beta: BetaSpec::Oracle {
            factor: grid.beta_factor,
        },
        gamma: grid.gamma,
        max_iters: grid.max_iters,
        stop_tol: grid.stop_tol,
        record_timing: false,
    };
    match solve(&inst.obs, &cfg, Some(&inst.truth)) {
        Ok(trace) => {
            let failure = match &trace.termination {
                TerminationReason::Failed(msg) => Some(format!(
                    "{} cell ({v1}, {v2}) trial {trial}: solve failed: {msg}",
                    algo.name
                )),
                _ => None,
            };
            let err = trace.final_record().rel_inf_error.unwrap_or(f64::INFINITY);
            TrialOutcome {
                success: failure.is_none() && err <= grid.success_threshold,
                iters: trace.iterations_executed(),
                wall_ms: trace.records.iter().map(|r| r.wall_ms).sum(),
                failure,
            }
        }
        Err(e) => TrialOutcome {
            success: false,
            iters: 0,
            wall_ms: 0,
            failure: Some(format!(
                "{} cell ({v1}, {v2}) trial {trial}: {e}",
                algo.name
            )),
        },
    }
}

/// Run every (algorithm, cell, trial) task, in parallel, and aggregate.
/// Output is a pure function of the grid regardless of scheduling; failed
/// solves are recorded and count as non-successes.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridOutcome> {
    grid.validate()?;
    let mut tasks = Vec::new();
    for (ai, algo) in grid.algorithms.iter().enumerate() {
        for &v1 in &grid.axis1.values {
            for &v2 in &grid.axis2.values {
                for trial in 0..grid.trials {
                    tasks.push((ai, algo, v1, v2, trial));
                }
            }
        }
    }
    let outcomes: Vec<TrialOutcome> = tasks
        .par_iter()
        .map(|&(ai, algo, v1, v2, trial)| run_trial(grid, algo, ai, v1, v2, trial))
        .collect();

    let cells_per_algo = grid.axis1.values.len() * grid.axis2.values.len();
    let mut algorithms = Vec::with_capacity(grid.algorithms.len());
    let mut failures = Vec::new();
    for (ai, algo) in grid.algorithms.iter().enumerate() {
        let mut cells = Vec::with_capacity(cells_per_algo);
        for (c1, &v1) in grid.axis1.values.iter().enumerate() {
            for (c2, &v2) in grid.axis2.values.iter().enumerate() {
                let base = ((ai * grid.axis1.values.len() + c1) * grid.axis2.values.len() + c2)
                    * grid.trials;
                let slice = &outcomes[base..base + grid.trials];
                let successes = slice.iter().filter(|o| o.success).count();
                let total_iters: usize = slice.iter().map(|o| o.iters).sum();
                let total_wall: u64 = slice.iter().map(|o| o.wall_ms).sum();
                for o in slice {
                    if let Some(f) = &o.failure {
                        failures.push(f.clone());
                    }
                }
                cells.push(CellResult {
                    axis1: v1,
                    axis2: v2,
                    successes,
                    trials: grid.trials,
                    success_rate: successes as f64 / grid.trials as f64,
                    mean_iters: total_iters as f64 / grid.trials as f64,
                    mean_wall_ms: total_wall as f64 / grid.trials as f64,
                });
            }
        }
        algorithms.push(AlgorithmResults {
            name: algo.name.clone(),
            cells,
        });
    }
    Ok(GridOutcome {
        algorithms,
        failures,
    })
}

/// Result CSV, rows sorted by (algorithm, axis1, axis2), rates to six
/// decimals.
pub fn csv_string(grid: &ExperimentGrid, algos: &[AlgorithmResults]) -> String {
    let mut rows: Vec<(String, CellResult)> = Vec::new();
    for a in algos {
        for c in &a.cells {
            rows.push((a.name.clone(), *c));
        }
    }
    rows.sort_by(|(na, ca), (nb, cb)| {
        na.cmp(nb)
            .then(ca.axis1.partial_cmp(&cb.axis1).unwrap())
            .then(ca.axis2.partial_cmp(&cb.axis2).unwrap())
    });
    let mut out = String::from(
        "algorithm,axis1_name,axis1,axis2_name,axis2,trials,successes,success_rate,mean_iters,mean_wall_ms\n",
    );
    for (name, c) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            name,
            grid.axis1.param.name(),
            c.axis1,
            grid.axis2.param.name(),
            c.axis2,
            c.trials,
            c.successes,
            c.success_rate,
            c.mean_iters,
            c.mean_wall_ms
        );
    }
    out
}

pub fn emit_csv(
    grid: &ExperimentGrid,
    algos: &[AlgorithmResults],
    path: impl AsRef<Path>,
) -> Result<()> {
    if algos.iter().all(|a| a.cells.is_empty()) {
        return Err(Error::Parameter("no results to serialize".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, csv_string(grid, algos)).map_err(|e| Error::io(path, e))
}

/// Binary PGM phase map: width = |axis1|, height = |axis2|, pixel =
/// round(255 * success_rate), axis2 ascending top to bottom.
pub fn pgm_bytes(grid: &ExperimentGrid, algo: &AlgorithmResults) -> Result<Vec<u8>> {
    let w = grid.axis1.values.len();
    let h = grid.axis2.values.len();
    if algo.cells.len() != w * h {
        return Err(Error::GridIncomplete(format!(
            "{} cells present, {} expected",
            algo.cells.len(),
            w * h
        )));
    }
    for (c1, &v1) in grid.axis1.values.iter().enumerate() {
        for (c2, &v2) in grid.axis2.values.iter().enumerate() {
            let c = &algo.cells[c1 * h + c2];
            if c.axis1 != v1 || c.axis2 != v2 {
                return Err(Error::GridIncomplete(format!(
                    "cell ({v1}, {v2}) missing or out of order"
                )));
            }
        }
    }
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for i2 in 0..h {
        for i1 in 0..w {
            let rate = algo.cells[i1 * h + i2].success_rate;
            bytes.push((255.0 * rate).round() as u8);
        }
    }
    Ok(bytes)
}

pub fn emit_pgm(
    grid: &ExperimentGrid,
    algo: &AlgorithmResults,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pgm_bytes(grid, algo)?).map_err(|e| Error::io(path, e))
}

/// Manifest: the config verbatim followed by SHA-256 checksums of the
/// emitted artifacts.
pub fn manifest_string(config_text: &str, artifacts: &[(String, Vec<u8>)]) -> String {
    let mut out = String::from("[config]\n");
    out.push_str(config_text);
    if !config_text.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("[artifacts]\n");
    for (name, bytes) in artifacts {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        let _ = writeln!(out, "sha256 {hex}  {name}");
    }
    out
}

const CONFIG_KEYS: &[&str] = &[
    "n1",
    "n2",
    "axis1",
    "axis1_values",
    "axis2",
    "axis2_values",
    "fixed_p",
    "fixed_r",
    "fixed_alpha",
    "trials",
    "algorithms",
    "success_threshold",
    "base_seed",
    "gamma",
    "beta_factor",
    "scad_a",
    "max_iters",
    "stop_tol",
];

/// Parse the flat `key = value` experiment config format. Blank lines and
/// `#` comments are allowed; unknown or repeated keys are hard errors.
pub fn parse_config(text: &str) -> Result<ExperimentGrid> {
    let mut seen: Vec<(&str, usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(lineno, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        let canonical = CONFIG_KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| Error::parse(lineno, format!("unknown key '{key}'")))?;
        if seen.iter().any(|(k, _, _)| k == canonical) {
            return Err(Error::parse(lineno, format!("repeated key '{key}'")));
        }
        seen.push((canonical, lineno, value.to_string()));
    }
    let lookup = |key: &str| seen.iter().find(|(k, _, _)| *k == key);
    let required = |key: &str| {
        lookup(key)
            .map(|(_, l, v)| (*l, v.clone()))
            .ok_or_else(|| Error::parse(0, format!("missing required key '{key}'")))
    };
    fn parse_num<T: std::str::FromStr>(lineno: usize, key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::parse(lineno, format!("invalid value for '{key}': '{v}'")))
    }

    let (l, v) = required("n1")?;
    let n1: usize = parse_num(l, "n1", &v)?;
    let (l, v) = required("n2")?;
    let n2: usize = parse_num(l, "n2", &v)?;

    let parse_axis = |key: &str, values_key: &str| -> Result<AxisSpec> {
        let (l, v) = required(key)?;
        let param = AxisParam::parse(&v)
            .ok_or_else(|| Error::parse(l, format!("axis must be p, r, or alpha, got '{v}'")))?;
        let (l, v) = required(values_key)?;
        let mut values = Vec::new();
        for tok in v.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            values.push(parse_num::<f64>(l, values_key, tok)?);
        }
        Ok(AxisSpec { param, values })
    };
    let axis1 = parse_axis("axis1", "axis1_values")?;
    let axis2 = parse_axis("axis2", "axis2_values")?;

    // The one parameter not on an axis must come from its fixed_* key;
    // fixed_* keys for axis parameters are rejected.
    let mut fixed: Option<(AxisParam, f64)> = None;
    for (key, param) in [
        ("fixed_p", AxisParam::SampleRate),
        ("fixed_r", AxisParam::Rank),
        ("fixed_alpha", AxisParam::OutlierRate),
    ] {
        if let Some((_, l, v)) = lookup(key) {
            if axis1.param == param || axis2.param == param {
                return Err(Error::parse(
                    *l,
                    format!("'{key}' conflicts with an axis sweeping {}", param.name()),
                ));
            }
            fixed = Some((param, parse_num(*l, key, v)?));
        }
    }
    let fixed = fixed.ok_or_else(|| {
        Error::parse(0, "missing fixed value for the parameter not on an axis".to_string())
    })?;

    let (l, v) = required("trials")?;
    let trials: usize = parse_num(l, "trials", &v)?;
    let (l, v) = required("base_seed")?;
    let base_seed: u64 = parse_num(l, "base_seed", &v)?;

    let scad_a = match lookup("scad_a") {
        Some((_, l, v)) => parse_num::<f64>(*l, "scad_a", v)?,
        None => 3.0,
    };
    let (l, v) = required("algorithms")?;
    let mut algorithms = Vec::new();
    for tok in v.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let kind = match tok {
            "soft" => ThresholdKind::Soft,
            "scad" => ThresholdKind::Scad { a: scad_a },
            "hard" => ThresholdKind::Hard,
            other => {
                return Err(Error::parse(
                    l,
                    format!("unknown algorithm '{other}' (expected soft, scad, or hard)"),
                ))
            }
        };
        algorithms.push(AlgorithmSpec {
            name: tok.to_string(),
            kind,
        });
    }

    let opt_num = |key: &str, default: f64| -> Result<f64> {
        match lookup(key) {
            Some((_, l, v)) => parse_num(*l, key, v),
            None => Ok(default),
        }
    };
    let success_threshold = opt_num("success_threshold", 1e-3)?;
    let gamma = opt_num("gamma", 0.9)?;
    let beta_factor = opt_num("beta_factor", 1.1)?;
    let stop_tol = opt_num("stop_tol", 1e-9)?;
    let max_iters = match lookup("max_iters") {
        Some((_, l, v)) => parse_num::<usize>(*l, "max_iters", v)?,
        None => 500,
    };

    let grid = ExperimentGrid {
        n1,
        n2,
        axis1,
        axis2,
        fixed,
        trials,
        algorithms,
        success_threshold,
        base_seed,
        gamma,
        beta_factor,
        scad_a,
        max_iters,
        stop_tol,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn parse_config_file(path: impl AsRef<Path>) -> Result<ExperimentGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
