//! Linear optimization over the confidence polytope.
//!
//! The production path is a dense two-phase simplex with Bland's rule; a
//! brute-force vertex enumerator over halfspace subsets serves as an
//! independent oracle for low-dimensional test instances.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::photonics::YieldVector;
use crate::polytope::ConstraintSet;

/// Entries below this magnitude are treated as zero during pivoting.
const PIVOT_TOL: f64 = 1e-11;
/// Preferred minimum pivot magnitude: the constraint matrix mixes O(1) box
/// coefficients with Poisson coefficients down to 1e-13, and fill-in noise
/// sits near 1e-11, so pivoting just above `PIVOT_TOL` shreds the tableau.
/// Entries below this qualify as pivots only when nothing better blocks.
const GOOD_PIVOT_TOL: f64 = 1e-8;
/// Slack tolerance for declaring a point feasible.
const FEAS_TOL: f64 = 1e-9;
/// Certification tolerance for returned optima. On degenerate optimal
/// faces the active rows of trillion-count data are mutually inconsistent
/// at the 1e-9 scale, so the certificate is one order looser than
/// `FEAS_TOL`; objective values still agree with the enumeration oracle
/// within 1e-9.
const CERT_TOL: f64 = 1e-8;
/// Vertices closer than this in the max norm are duplicates.
const DEDUP_TOL: f64 = 1e-8;
/// Iteration budget multiplier before falling back to strict Bland pivoting.
const STALL_FACTOR: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Outcome of a solve. The box rows compactify the feasible region, so an
/// unbounded program cannot occur and is reported as a numerical error.
///
/// An `Optimal` point satisfies every halfspace within [`CERT_TOL`]; on
/// non-degenerate instances the basis refinement leaves it exact to
/// working precision.
#[derive(Debug, Clone, PartialEq)]
pub enum LpSolution {
    Optimal { value: f64, point: YieldVector },
    Infeasible,
}

impl LpSolution {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpSolution::Optimal { value, .. } => Some(*value),
            LpSolution::Infeasible => None,
        }
    }
}

/// Exact linear optimum of `objective . y` over the polytope.
///
/// The default walk uses largest-pivot tie-breaking; highly degenerate
/// vertices can still leave it with a slightly infeasible active set, in
/// which case the solve is repeated once with strict Bland pivoting (a
/// different, cycling-proof path) before reporting a numerical failure.
pub fn optimize(cs: &ConstraintSet, objective: &[f64], sense: Sense) -> Result<LpSolution> {
    let n = cs.dimension();
    if objective.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: objective.len(),
        });
    }

    // column scaling by the largest coefficient magnitude
    let mut scale = vec![1.0f64; n];
    for (j, s) in scale.iter_mut().enumerate() {
        let mx = cs
            .halfspaces()
            .iter()
            .fold(0.0f64, |acc, hs| acc.max(hs.coefficients[j].abs()));
        if mx > 0.0 {
            *s = mx;
        }
    }

    let mut worst_slack = 0.0f64;
    for strict in [false, true] {
        let Some(mut x) = solve_tableau(cs, objective, sense, &scale, strict)? else {
            return Ok(LpSolution::Infeasible);
        };
        // guard against rounding just outside the box; +0.0 removes -0.0
        for v in &mut x {
            *v = v.clamp(0.0, 1.0) + 0.0;
        }
        let slack = cs
            .halfspaces()
            .iter()
            .map(|hs| hs.slack(&x))
            .fold(f64::INFINITY, f64::min);
        if slack >= -CERT_TOL {
            let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            return Ok(LpSolution::Optimal {
                value,
                point: YieldVector::new(x)?,
            });
        }
        worst_slack = worst_slack.min(slack);
    }
    Err(Error::Numerical(format!(
        "simplex produced an infeasible point (slack {worst_slack})"
    )))
}

/// One two-phase solve. `Ok(None)` signals an infeasible program; the
/// returned point is basis-refined but not yet feasibility-checked.
fn solve_tableau(
    cs: &ConstraintSet,
    objective: &[f64],
    sense: Sense,
    scale: &[f64],
    strict: bool,
) -> Result<Option<Vec<f64>>> {
    let n = cs.dimension();
    let m = cs.halfspaces().len();
    // columns: [0..n) structural, [n..n+m) slack, [n+m..ncols) artificial;
    // rows with negative bound are negated and given an artificial basic
    let art_rows: Vec<usize> = cs
        .halfspaces()
        .iter()
        .enumerate()
        .filter(|(_, hs)| hs.bound < 0.0)
        .map(|(i, _)| i)
        .collect();
    let n_art = art_rows.len();
    let ncols = n + m + n_art;
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, hs) in cs.halfspaces().iter().enumerate() {
        let sgn = if hs.bound < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; ncols + 1];
        for j in 0..n {
            row[j] = sgn * hs.coefficients[j] / scale[j];
        }
        row[n + i] = sgn;
        row[ncols] = sgn * hs.bound;
        tab.push(row);
    }
    for (ai, &ri) in art_rows.iter().enumerate() {
        tab[ri][n + m + ai] = 1.0;
        basis[ri] = n + m + ai;
    }
    let mut t = Tableau {
        rows: tab,
        cost: vec![0.0; ncols + 1],
        basis,
        ncols,
    };

    // Phase 1: minimize the sum of artificials
    if n_art > 0 {
        for j in n + m..ncols {
            t.cost[j] = 1.0;
        }
        for i in 0..m {
            if t.basis[i] >= n + m {
                let row = t.rows[i].clone();
                for (c, r) in t.cost.iter_mut().zip(&row) {
                    *c -= r;
                }
            }
        }
        t.run(|_| true, strict)?;
        let z1 = -t.cost[ncols];
        if z1 > FEAS_TOL {
            return Ok(None);
        }
        // drive any leftover artificials out of the basis
        for i in 0..m {
            if t.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t.rows[i][j].abs() > PIVOT_TOL) {
                    t.pivot(i, j);
                }
            }
        }
    }

    // Phase 2
    let flip = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    t.cost = vec![0.0; ncols + 1];
    for j in 0..n {
        t.cost[j] = flip * objective[j] / scale[j];
    }
    for i in 0..m {
        let b = t.basis[i];
        let cb = t.cost[b];
        if cb != 0.0 {
            let row = t.rows[i].clone();
            for (c, r) in t.cost.iter_mut().zip(&row) {
                *c -= cb * r;
            }
        }
    }
    let art_start = n + m;
    t.run(|j| j < art_start, strict)?;

    // extract the structural solution and unscale
    let mut x = vec![0.0; n];
    for i in 0..m {
        let b = t.basis[i];
        if b < n {
            x[b] = t.rows[i][t.ncols] / scale[b];
        }
    }
    // the simplex walk is combinatorial: its final basis names the active
    // halfspaces. Re-solving that square system on the original data strips
    // every bit of drift the tableau arithmetic accumulated.
    if let Some(refined) = refine_from_basis(cs, &t.basis, n) {
        if cs.halfspaces().iter().all(|hs| hs.slack(&refined) >= -FEAS_TOL) {
            x = refined;
        }
    }
    Ok(Some(x))
}

/// Rebuild the optimum from the final basis: nonbasic structural variables
/// sit at zero and rows whose slack is nonbasic are tight, which pins the
/// point as a square linear system over the original coefficients.
fn refine_from_basis(cs: &ConstraintSet, basis: &[usize], n: usize) -> Option<Vec<f64>> {
    let basic: std::collections::HashSet<usize> = basis.iter().copied().collect();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for j in 0..n {
        if !basic.contains(&j) {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            a.push(row);
            b.push(0.0);
        }
    }
    for (i, hs) in cs.halfspaces().iter().enumerate() {
        if !basic.contains(&(n + i)) {
            a.push(hs.coefficients.clone());
            b.push(hs.bound);
        }
    }
    if a.len() != n {
        return None;
    }
    solve_square(a, b)
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in &mut self.rows[r] {
            *v /= piv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&prow) {
                *v -= f * p;
            }
        }
        self.basis[r] = c;
    }

    /// Leaving row for entering column `j`: minimum ratio, preferring the
    /// largest pivot magnitude within the tie window; rows with pivots in
    /// the noise band qualify only when no solid pivot blocks. When
    /// `strict_bland` is set, ties fall to the smallest basis index instead
    /// (guaranteed anti-cycling).
    fn leaving_row(&self, j: usize, strict_bland: bool) -> Option<usize> {
        let pick = |floor: f64| -> Option<usize> {
            let mut min_ratio = f64::INFINITY;
            for i in 0..self.rows.len() {
                let a = self.rows[i][j];
                if a > floor {
                    min_ratio = min_ratio.min((self.rows[i][self.ncols] / a).max(0.0));
                }
            }
            if !min_ratio.is_finite() {
                return None;
            }
            let window = 1e-9 + 1e-9 * min_ratio;
            let mut best: Option<usize> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][j];
                if a > floor && (self.rows[i][self.ncols] / a).max(0.0) <= min_ratio + window {
                    best = match best {
                        None => Some(i),
                        Some(bi) => {
                            let better = if strict_bland {
                                self.basis[i] < self.basis[bi]
                            } else {
                                a > self.rows[bi][j]
                            };
                            if better {
                                Some(i)
                            } else {
                                Some(bi)
                            }
                        }
                    };
                }
            }
            best
        };
        pick(GOOD_PIVOT_TOL).or_else(|| pick(PIVOT_TOL))
    }

    /// Simplex iterations entering by Bland's smallest-index rule over the
    /// columns admitted by `allowed`. Errors on an unbounded direction,
    /// which the box rows rule out for well-formed inputs.
    fn run(&mut self, allowed: impl Fn(usize) -> bool, strict_from_start: bool) -> Result<()> {
        let budget = STALL_FACTOR * (self.rows.len() + 1);
        let mut iterations = 0usize;
        loop {
            let entering = (0..self.ncols)
                .find(|&j| allowed(j) && self.cost[j] < -PIVOT_TOL);
            let Some(j) = entering else {
                return Ok(());
            };
            // largest-pivot tie-breaking is not covered by Bland's
            // termination proof; after a stall budget, fall back to the
            // strict smallest-index rule, which cannot cycle
            let strict = strict_from_start || iterations >= budget;
            let Some(r) = self.leaving_row(j, strict) else {
                return Err(Error::Numerical("unbounded linear program".into()));
            };
            self.pivot(r, j);
            iterations += 1;
            if iterations > 50 * budget {
                return Err(Error::Numerical("simplex failed to terminate".into()));
            }
        }
    }
}

/// Enumerate the vertices of a low-dimensional constraint set by solving
/// every `dimension`-sized subset of halfspaces and keeping the feasible,
/// deduplicated solutions. Exponential in the dimension; intended as a test
/// oracle only, hence the hard cap.
pub fn enumerate_vertices(cs: &ConstraintSet) -> Result<Vec<YieldVector>> {
    let d = cs.dimension();
    if d > 8 {
        return Err(Error::InvalidInput(format!(
            "vertex enumeration capped at dimension 8, got {d}"
        )));
    }
    let m = cs.halfspaces().len();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for combo in (0..m).combinations(d) {
        let a: Vec<Vec<f64>> = combo
            .iter()
            .map(|&i| cs.halfspaces()[i].coefficients.clone())
            .collect();
        let b: Vec<f64> = combo.iter().map(|&i| cs.halfspaces()[i].bound).collect();
        let Some(x) = solve_square(a, b) else {
            continue;
        };
        if cs
            .halfspaces()
            .iter()
            .any(|hs| hs.slack(&x) < -FEAS_TOL)
        {
            continue;
        }
        if vertices
            .iter()
            .any(|v| v.iter().zip(&x).all(|(a, b)| (a - b).abs() <= DEDUP_TOL))
        {
            continue;
        }
        vertices.push(x);
    }
    vertices
        .into_iter()
        .map(|mut v| {
            for c in &mut v {
                *c = c.clamp(0.0, 1.0) + 0.0;
            }
            YieldVector::new(v)
        })
        .collect()
}

/// Gauss-Jordan with row equilibration and partial pivoting; `None` when
/// the system is singular at working precision.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for i in 0..d {
        let mx = a[i].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if mx == 0.0 {
            return None;
        }
        for v in &mut a[i] {
            *v /= mx;
        }
        b[i] /= mx;
    }
    for col in 0..d {
        let (pr, pv) = (col..d)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pv < 1e-10 {
            return None;
        }
        a.swap(col, pr);
        b.swap(col, pr);
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..d {
                    let v = a[col][k];
                    a[r][k] -= f * v;
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..d).map(|i| b[i] / a[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{expected_detection_probability, ChannelModel};
    use crate::polytope::{build_constraints, ConstraintSet, Halfspace, IntensityLevel, Provenance};
    use crate::stats::TrialCount;
    use proptest::prelude::*;

    fn boxes(dim: usize) -> ConstraintSet {
        ConstraintSet::with_boxes(dim, vec![]).unwrap()
    }

    fn e(dim: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    }

    fn expected_levels(
        ch: &ChannelModel,
        mu_base: f64,
        n: u64,
        classes: u32,
    ) -> Vec<IntensityLevel> {
        (0..classes)
            .map(|j| {
                let mu = f64::from(j) * mu_base;
                let d = expected_detection_probability(ch, mu).value;
                let c = (n as f64 * d).round() as u64;
                IntensityLevel::new(j, mu, TrialCount::new(n, c).unwrap())
            })
            .collect()
    }

    #[test]
    fn box_only_extremes() {
        let cs = boxes(3);
        let min = optimize(&cs, &e(3, 0), Sense::Minimize).unwrap();
        assert_eq!(min.value(), Some(0.0));
        let max = optimize(&cs, &e(3, 0), Sense::Maximize).unwrap();
        assert!((max.value().unwrap() - 1.0).abs() < 1e-12);
        if let LpSolution::Optimal { point, .. } = max {
            assert!((point[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_objective_dimension_mismatch() {
        let cs = boxes(3);
        assert!(optimize(&cs, &[1.0, 0.0], Sense::Minimize).is_err());
    }

    #[test]
    fn detects_infeasible() {
        // y_0 <= 0.1 together with y_0 >= 0.5
        let rows = vec![
            Halfspace {
                coefficients: vec![1.0, 0.0],
                bound: 0.1,
                provenance: Provenance::UpperDetection { level: 0 },
            },
            Halfspace {
                coefficients: vec![-1.0, 0.0],
                bound: -0.5,
                provenance: Provenance::LowerDetection { level: 0 },
            },
        ];
        let cs = ConstraintSet::with_boxes(2, rows).unwrap();
        let sol = optimize(&cs, &e(2, 0), Sense::Minimize).unwrap();
        assert_eq!(sol, LpSolution::Infeasible);
        assert!(enumerate_vertices(&cs).unwrap().is_empty());
    }

    #[test]
    fn unit_square_has_four_vertices() {
        let verts = enumerate_vertices(&boxes(2)).unwrap();
        assert_eq!(verts.len(), 4);
    }

    #[test]
    fn truncated_cube_has_ten_vertices() {
        // unit cube cut by y_0 + y_1 + y_2 <= 1.5: the 4 corners with
        // coordinate sum >= 2 are cut off, exposing 6 new edge midpoints
        let rows = vec![Halfspace {
            coefficients: vec![1.0, 1.0, 1.0],
            bound: 1.5,
            provenance: Provenance::UpperDetection { level: 0 },
        }];
        let cs = ConstraintSet::with_boxes(3, rows).unwrap();
        let verts = enumerate_vertices(&cs).unwrap();
        assert_eq!(verts.len(), 10);
    }

    #[test]
    fn enumeration_dimension_guard() {
        assert!(enumerate_vertices(&boxes(9)).is_err());
    }

    #[test]
    fn honest_session_min_y1_below_truth_and_matches_oracle() {
        let ch = ChannelModel::beamsplitter(0.1, 3e-6).unwrap();
        let k = 3usize;
        let levels = expected_levels(&ch, 0.5, 1_000_000, 5);
        let cs = build_constraints(&levels, k, 1e-7).unwrap();
        let dim = k + 1;
        let min = optimize(&cs, &e(dim, 1), Sense::Minimize).unwrap();
        let max = optimize(&cs, &e(dim, 1), Sense::Maximize).unwrap();
        let y1_true = ch.true_yield(1).unwrap();
        let lo = min.value().unwrap();
        let hi = max.value().unwrap();
        assert!(lo >= 0.0 && lo <= y1_true + 1e-9, "lo={lo} true={y1_true}");
        assert!(hi >= y1_true - 1e-9);

        let verts = enumerate_vertices(&cs).unwrap();
        assert!(!verts.is_empty());
        let vmin = verts.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
        let vmax = verts.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
        assert!((vmin - lo).abs() < 1e-9, "oracle {vmin} vs simplex {lo}");
        assert!((vmax - hi).abs() < 1e-9, "oracle {vmax} vs simplex {hi}");
    }

    #[test]
    fn optimum_point_is_feasible_and_attains_value() {
        let ch = ChannelModel::beamsplitter(0.05, 1e-5).unwrap();
        let levels = expected_levels(&ch, 0.4, 200_000, 4);
        let cs = build_constraints(&levels, 5, 1e-7).unwrap();
        let obj = [0.3, -1.0, 0.2, 0.0, 0.7, -0.1];
        for sense in [Sense::Minimize, Sense::Maximize] {
            let LpSolution::Optimal { value, point } = optimize(&cs, &obj, sense).unwrap() else {
                panic!("expected optimal");
            };
            assert!(cs.contains(&point).unwrap());
            let attained: f64 = obj.iter().zip(point.values()).map(|(c, v)| c * v).sum();
            assert!((attained - value).abs() < 1e-9);
        }
    }

    /// Tighter statistics can only shrink the feasible interval of y_1.
    #[test]
    fn y1_interval_nests_with_more_data() {
        let ch = ChannelModel::beamsplitter(0.1, 3e-6).unwrap();
        let k = 6usize;
        let mut prev: Option<(f64, f64)> = None;
        for n in [100_000u64, 1_000_000, 10_000_000] {
            let levels = expected_levels(&ch, 0.5, n, 5);
            let cs = build_constraints(&levels, k, 1e-7).unwrap();
            let lo = optimize(&cs, &e(k + 1, 1), Sense::Minimize)
                .unwrap()
                .value()
                .unwrap();
            let hi = optimize(&cs, &e(k + 1, 1), Sense::Maximize)
                .unwrap()
                .value()
                .unwrap();
            if let Some((plo, phi)) = prev {
                assert!(lo >= plo - 1e-9, "{lo} vs {plo}");
                assert!(hi <= phi + 1e-9, "{hi} vs {phi}");
            }
            prev = Some((lo, hi));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Oracle equivalence on random feasible constraint sets.
        #[test]
        fn prop_simplex_matches_vertex_oracle(
            dim in 2usize..=5,
            mu_base in 0.2f64..0.8,
            eta_exp in 1u32..=3,
            seed in 0u64..10_000,
        ) {
            let eta = 10f64.powi(-(eta_exp as i32));
            let ch = ChannelModel::beamsplitter(eta, 3e-6).unwrap();
            let levels = expected_levels(&ch, mu_base, 500_000, 3);
            let cs = build_constraints(&levels, dim - 1, 1e-7).unwrap();

            // pseudo-random objective from the seed
            let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut obj = Vec::with_capacity(dim);
            for _ in 0..dim {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                obj.push(((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0);
            }

            let verts = enumerate_vertices(&cs).unwrap();
            prop_assume!(!verts.is_empty());
            let dot = |v: &YieldVector| -> f64 {
                obj.iter().zip(v.values()).map(|(c, y)| c * y).sum()
            };
            let vmin = verts.iter().map(&dot).fold(f64::INFINITY, f64::min);
            let vmax = verts.iter().map(&dot).fold(f64::NEG_INFINITY, f64::max);
            let smin = optimize(&cs, &obj, Sense::Minimize).unwrap().value().unwrap();
            let smax = optimize(&cs, &obj, Sense::Maximize).unwrap().value().unwrap();
            prop_assert!((smin - vmin).abs() < 1e-9, "min {} vs {}", smin, vmin);
            prop_assert!((smax - vmax).abs() < 1e-9, "max {} vs {}", smax, vmax);
        }
    }
}
