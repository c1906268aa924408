//! Entrywise thresholding operators and the mechanical property checker.
//!
//! Soft and SCAD satisfy the three operator properties the solver relies on
//! (exact zero inside the threshold, a Lipschitz bound, a bounded offset);
//! hard thresholding is carried for the baseline solver but flagged
//! non-conforming because its jump discontinuity defeats any Lipschitz
//! constant.

use crate::error::{Error, Result};
use crate::problem::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdKind {
    Soft,
    /// Smoothly clipped absolute deviation with parameter `a > 2`.
    Scad { a: f64 },
    Hard,
}

impl ThresholdKind {
    pub fn scad_default() -> Self {
        ThresholdKind::Scad { a: 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let ThresholdKind::Scad { a } = self {
            if !(*a > 2.0) {
                return Err(Error::Parameter(format!("SCAD parameter a = {a} must exceed 2")));
            }
        }
        Ok(())
    }

    /// Declared Lipschitz constant K; `None` for the non-conforming kind.
    pub fn lipschitz_k(&self) -> Option<f64> {
        match self {
            ThresholdKind::Soft => Some(1.0),
            ThresholdKind::Scad { a } => Some((a - 1.0) / (a - 2.0)),
            ThresholdKind::Hard => None,
        }
    }

    /// Declared offset constant B; `None` for the non-conforming kind.
    pub fn offset_b(&self) -> Option<f64> {
        match self {
            ThresholdKind::Soft | ThresholdKind::Scad { .. } => Some(1.0),
            ThresholdKind::Hard => None,
        }
    }

    pub fn is_conforming(&self) -> bool {
        !matches!(self, ThresholdKind::Hard)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdKind::Soft => "soft",
            ThresholdKind::Scad { .. } => "scad",
            ThresholdKind::Hard => "hard",
        }
    }

    /// Piecewise-linear knot multipliers of lambda on the positive axis.
    fn knot_multipliers(&self) -> Vec<f64> {
        match self {
            ThresholdKind::Soft | ThresholdKind::Hard => vec![1.0, 2.0, 3.0],
            ThresholdKind::Scad { a } => vec![1.0, 2.0, *a],
        }
    }

    /// Span multiplier for the property-check grid: 2a for SCAD, with a = 3
    /// standing in for the kinds that have no `a`.
    fn grid_reach(&self) -> f64 {
        match self {
            ThresholdKind::Scad { a } => 2.0 * a,
            _ => 6.0,
        }
    }
}

impl std::fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdKind::Scad { a } => write!(f, "scad(a={a})"),
            other => f.write_str(other.name()),
        }
    }
}

#[inline]
fn eval(kind: ThresholdKind, lambda: f64, x: f64) -> f64 {
    let ax = x.abs();
    match kind {
        ThresholdKind::Soft => {
            if ax <= lambda {
                0.0
            } else {
                x.signum() * (ax - lambda)
            }
        }
        ThresholdKind::Scad { a } => {
            if ax <= lambda {
                0.0
            } else if ax <= 2.0 * lambda {
                x.signum() * (ax - lambda)
            } else if ax < a * lambda {
                ((a - 1.0) * x - x.signum() * a * lambda) / (a - 2.0)
            } else {
                x
            }
        }
        ThresholdKind::Hard => {
            if ax <= lambda {
                0.0
            } else {
                x
            }
        }
    }
}

/// Apply the thresholding operator to one value.
pub fn apply_scalar(kind: ThresholdKind, lambda: f64, x: f64) -> Result<f64> {
    kind.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda = {lambda} must be positive")));
    }
    Ok(eval(kind, lambda, x))
}

/// Apply the operator entrywise over a sampled residual. The output keeps
/// the full index set; thresholded-to-zero entries stay as explicit zeros
/// and drop out of the support view.
pub fn apply_sparse(
    kind: ThresholdKind,
    lambda: f64,
    residual: &ObservationSet,
) -> Result<ObservationSet> {
    kind.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda = {lambda} must be positive")));
    }
    let values = residual
        .values()
        .iter()
        .map(|&v| eval(kind, lambda, v))
        .collect();
    residual.with_values(values)
}

/// Observed worst-case behavior of an operator over a grid.
#[derive(Debug, Clone, Copy)]
pub struct PropertyReport {
    /// Exact zero on every grid point inside the threshold, for every lambda.
    pub p1_holds: bool,
    /// max |T(x) - T(y)| / |x - y| over all grid pairs.
    pub p2_max_ratio: f64,
    /// max |T(x) - x| / lambda over all grid points.
    pub p3_max_offset_ratio: f64,
    /// Number of (lambda, x) evaluations inspected.
    pub samples: usize,
}

impl PropertyReport {
    /// Whether the observations stay within the declared constants.
    pub fn conforms_to(&self, kind: ThresholdKind) -> bool {
        match (kind.lipschitz_k(), kind.offset_b()) {
            (Some(k), Some(b)) => {
                self.p1_holds
                    && self.p2_max_ratio <= k + 1e-12
                    && self.p3_max_offset_ratio <= b + 1e-12
            }
            _ => false,
        }
    }
}

/// Build a grid satisfying the checker preconditions: symmetric span of
/// 2*a*lambda_max, spacing lambda_min / 100, and every knot point of every
/// lambda included exactly.
pub fn property_grid(kind: ThresholdKind, lambdas: &[f64]) -> Result<Vec<f64>> {
    kind.validate()?;
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Parameter("lambdas must be positive and nonempty".into()));
    }
    let lambda_max = lambdas.iter().cloned().fold(f64::MIN, f64::max);
    let lambda_min = lambdas.iter().cloned().fold(f64::MAX, f64::min);
    let reach = kind.grid_reach() * lambda_max;
    let spacing = lambda_min / 100.0;
    let steps = (2.0 * reach / spacing).ceil() as usize;
    let mut xs: Vec<f64> = (0..=steps).map(|i| -reach + i as f64 * spacing).collect();
    if *xs.last().unwrap() < reach {
        xs.push(reach);
    }
    for &l in lambdas {
        for m in kind.knot_multipliers() {
            xs.push(m * l);
            xs.push(-(m * l));
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    Ok(xs)
}

/// Exhaustively check P.1 / P.2 / P.3 over the given lambdas and grid.
///
/// The grid must cover [-2a lambda_max, 2a lambda_max] with spacing at most
/// lambda_min / 100 and contain every knot of every lambda exactly;
/// [`property_grid`] produces a conforming grid.
pub fn verify_properties(
    kind: ThresholdKind,
    lambdas: &[f64],
    xs: &[f64],
) -> Result<PropertyReport> {
    kind.validate()?;
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Parameter("lambdas must be positive and nonempty".into()));
    }
    if xs.len() < 2 {
        return Err(Error::GridCoverage("grid needs at least two points".into()));
    }
    for w in xs.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::GridCoverage("grid must be strictly increasing".into()));
        }
    }
    let lambda_max = lambdas.iter().cloned().fold(f64::MIN, f64::max);
    let lambda_min = lambdas.iter().cloned().fold(f64::MAX, f64::min);
    let reach = kind.grid_reach() * lambda_max;
    let eps = 1e-12 * reach.max(1.0);
    if xs[0] > -reach + eps || *xs.last().unwrap() < reach - eps {
        return Err(Error::GridCoverage(format!(
            "grid [{}, {}] does not cover [-{reach}, {reach}]",
            xs[0],
            xs.last().unwrap()
        )));
    }
    let max_spacing = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    // Slop covers tick representation error at the span's scale.
    if max_spacing > (lambda_min / 100.0) * (1.0 + 1e-9) {
        return Err(Error::GridCoverage(format!(
            "grid spacing {max_spacing} exceeds lambda_min / 100"
        )));
    }
    for &l in lambdas {
        for m in kind.knot_multipliers() {
            for knot in [m * l, -(m * l)] {
                if xs.binary_search_by(|x| x.partial_cmp(&knot).unwrap()).is_err() {
                    return Err(Error::GridCoverage(format!("grid misses knot {knot}")));
                }
            }
        }
    }

    let mut p1_holds = true;
    let mut p2_max: f64 = 0.0;
    let mut p3_max: f64 = 0.0;
    let mut t = vec![0.0; xs.len()];
    for &l in lambdas {
        for (ti, &x) in t.iter_mut().zip(xs) {
            *ti = eval(kind, l, x);
        }
        for (&x, &tx) in xs.iter().zip(&t) {
            if x.abs() <= l && tx != 0.0 {
                p1_holds = false;
            }
            p3_max = p3_max.max((tx - x).abs() / l);
        }
        for i in 0..xs.len() {
            let (xi, ti) = (xs[i], t[i]);
            for j in (i + 1)..xs.len() {
                let num = (t[j] - ti).abs();
                let den = xs[j] - xi;
                if num > p2_max * den {
                    p2_max = num / den;
                }
            }
        }
    }
    Ok(PropertyReport {
        p1_holds,
        p2_max_ratio: p2_max,
        p3_max_offset_ratio: p3_max,
        samples: xs.len() * lambdas.len(),
    })
}
