//! The confidence region over photon-number yields: a halfspace system in
//! `(y_0, ..., y_K)` built from the observed counts at every intensity level.

use std::io::Write;

use crate::error::{Error, Result};
use crate::photonics::{truncated_series_coefficients, YieldVector};
use crate::stats::{binomial_confidence_interval_with, CiMode, TrialCount};

/// Observables for one pulse class: `j` lasers fired simultaneously at base
/// intensity `mu / j`, with sent/detected counts, plus the sifted/error
/// counts for the definite-polarization class `j = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityLevel {
    pub lasers: u32,
    pub mu: f64,
    pub trials: TrialCount,
    /// Sifted detections and errors among them; only the `j = 1` class has
    /// definite polarization, so only it carries error statistics.
    pub error_trials: Option<TrialCount>,
}

impl IntensityLevel {
    pub fn new(lasers: u32, mu: f64, trials: TrialCount) -> Self {
        IntensityLevel {
            lasers,
            mu,
            trials,
            error_trials: None,
        }
    }
}

/// Origin of a halfspace, kept for traceability and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Detection upper bound at level `j` (truncated-series inequality).
    UpperDetection { level: u32 },
    /// Detection lower bound at level `j` (complement-form inequality).
    LowerDetection { level: u32 },
    /// `y_k >= 0`.
    BoxLow { coord: usize },
    /// `y_k <= 1`.
    BoxHigh { coord: usize },
}

/// One halfspace `coefficients . y <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub coefficients: Vec<f64>,
    pub bound: f64,
    pub provenance: Provenance,
}

impl Halfspace {
    /// Signed slack `bound - coefficients . y`; nonnegative iff satisfied.
    pub fn slack(&self, point: &[f64]) -> f64 {
        let dot: f64 = self
            .coefficients
            .iter()
            .zip(point)
            .map(|(a, y)| a * y)
            .sum();
        self.bound - dot
    }
}

/// Feasibility tolerance for membership tests.
pub const CONTAINS_TOL: f64 = 1e-9;

/// The convex polytope `R`: all yield vectors consistent with the observed
/// counts at confidence level `1 - epsilon` per bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dimension: usize,
    halfspaces: Vec<Halfspace>,
}

impl ConstraintSet {
    /// Assemble a constraint set from detection rows, appending the box
    /// rows `0 <= y_k <= 1` for every coordinate.
    pub fn with_boxes(dimension: usize, mut halfspaces: Vec<Halfspace>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for hs in &halfspaces {
            if hs.coefficients.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: hs.coefficients.len(),
                });
            }
        }
        for k in 0..dimension {
            let mut low = vec![0.0; dimension];
            low[k] = -1.0;
            halfspaces.push(Halfspace {
                coefficients: low,
                bound: 0.0,
                provenance: Provenance::BoxLow { coord: k },
            });
            let mut high = vec![0.0; dimension];
            high[k] = 1.0;
            halfspaces.push(Halfspace {
                coefficients: high,
                bound: 1.0,
                provenance: Provenance::BoxHigh { coord: k },
            });
        }
        Ok(ConstraintSet {
            dimension,
            halfspaces,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    /// Membership within [`CONTAINS_TOL`].
    pub fn contains(&self, point: &YieldVector) -> Result<bool> {
        if point.truncation_order() + 1 != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: point.truncation_order() + 1,
            });
        }
        Ok(self
            .halfspaces
            .iter()
            .all(|hs| hs.slack(point.values()) >= -CONTAINS_TOL))
    }

    /// Plain-text halfspace dump: first line `dim m`, then one line per
    /// halfspace with the coefficients followed by the bound.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.dimension, self.halfspaces.len())?;
        for hs in &self.halfspaces {
            let mut line = String::new();
            for a in &hs.coefficients {
                line.push_str(&format!("{a} "));
            }
            line.push_str(&format!("{}", hs.bound));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Build the confidence region from the observed counts.
///
/// For every level `j` with confidence interval `[Y-, Y+]` on the detection
/// probability, two halfspaces are emitted over the truncated Poisson
/// coefficients `c_k = e^(-mu_j) mu_j^k / k!`:
///
/// * `sum_k c_k y_k <= Y+` (the dropped tail terms `c_k y_k` are
///   nonnegative, so truncation keeps the bound valid), and
/// * `-sum_k c_k y_k <= 1 - sum_k c_k - Y-`, the complement form whose
///   dropped tail terms `c_k (1 - y_k)` are likewise nonnegative.
///
/// Box rows `0 <= y_k <= 1` are appended for every coordinate.
pub fn build_constraints(
    levels: &[IntensityLevel],
    k: usize,
    epsilon: f64,
) -> Result<ConstraintSet> {
    build_constraints_with_mode(levels, k, epsilon, CiMode::Paper)
}

/// [`build_constraints`] with an explicit confidence-interval mode.
pub fn build_constraints_with_mode(
    levels: &[IntensityLevel],
    k: usize,
    epsilon: f64,
    mode: CiMode,
) -> Result<ConstraintSet> {
    if levels.is_empty() {
        return Err(Error::InvalidInput("no intensity levels".into()));
    }
    if k < 1 {
        return Err(Error::InvalidInput(
            "truncation order K must be at least 1".into(),
        ));
    }
    let mut rows = Vec::with_capacity(2 * levels.len());
    for level in levels {
        if level.trials.trials() < 1 {
            return Err(Error::InvalidInput(format!(
                "level j={} has no trials",
                level.lasers
            )));
        }
        let (coeffs, tail) = truncated_series_coefficients(level.mu, k);
        if tail > 0.5 {
            return Err(Error::VacuousTruncation {
                level: level.lasers,
                mu: level.mu,
                tail,
            });
        }
        let iv = binomial_confidence_interval_with(level.trials, epsilon, mode)?;
        let total: f64 = coeffs.iter().sum();
        rows.push(Halfspace {
            coefficients: coeffs.clone(),
            bound: iv.hi,
            provenance: Provenance::UpperDetection {
                level: level.lasers,
            },
        });
        rows.push(Halfspace {
            coefficients: coeffs.iter().map(|c| -c).collect(),
            bound: 1.0 - total - iv.lo,
            provenance: Provenance::LowerDetection {
                level: level.lasers,
            },
        });
    }
    ConstraintSet::with_boxes(k + 1, rows)
}
