//! Top-level security quantities: bounds on the single-photon yield, the
//! conservative single-photon fraction, the guaranteed single-photon count,
//! the single-photon error-rate ceiling, and the rate formulas.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{optimize, LpSolution, Sense};
use crate::photonics::{truncated_series_coefficients, YieldVector};
use crate::polytope::{build_constraints_with_mode, ConstraintSet, IntensityLevel};
use crate::sim::SessionRecord;
use crate::stats::{
    binomial_cdf, binomial_confidence_interval_with, CiMode, Interval,
};

/// Which detection pool the single-photon count bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SMode {
    /// Sifted detections of the definite-polarization class `j = 1` (the
    /// key-material pool).
    #[default]
    Sifted,
    /// All detections across the intensity levels.
    All,
}

/// How the per-coordinate yield maxima entering the fraction denominator
/// are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YkUpperMode {
    /// One LP maximization per coordinate: tighter, still conservative.
    #[default]
    Lp,
    /// The trivial bound `y_n <= 1`.
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Series truncation order.
    pub k: usize,
    /// Overrides the epsilon echoed in the record when set.
    pub epsilon: Option<f64>,
    pub s_mode: SMode,
    pub yk_upper: YkUpperMode,
    pub ci_mode: CiMode,
    /// Beam-monitor interval for the base intensity; defaults to exactly
    /// the configured value (fixed calibrated lasers).
    pub mu_bounds: Option<Interval>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k: 11,
            epsilon: None,
            s_mode: SMode::default(),
            yk_upper: YkUpperMode::default(),
            ci_mode: CiMode::default(),
            mu_bounds: None,
        }
    }
}

/// Guaranteed single-photon count, with the flag cleared when not even
/// `s = 0` satisfies the tail condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountBound {
    pub s: u64,
    pub guaranteed: bool,
}

/// Upper bound on the single-photon bit error rate; `vacuous` marks bounds
/// that carry no information (no positive single-photon yield floor, or the
/// ceiling saturated at 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerBound {
    pub value: f64,
    pub vacuous: bool,
}

/// Everything the analysis asserts about one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub y1_lo: f64,
    pub y1_hi: f64,
    pub p_min_prime: f64,
    pub s_bound: u64,
    pub b1_max: f64,
    pub confidence: f64,
    pub decoy_rate: f64,
    pub epsilon: f64,
    pub m_levels: u32,
    pub abort: bool,
    pub y0_lo: f64,
    pub y0_hi: f64,
    pub s_guaranteed: bool,
    pub b1_vacuous: bool,
}

impl AnalysisReport {
    fn aborted(epsilon: f64, m_levels: u32) -> Self {
        AnalysisReport {
            y1_lo: 0.0,
            y1_hi: 1.0,
            p_min_prime: 0.0,
            s_bound: 0,
            b1_max: 1.0,
            confidence: confidence_level(epsilon, m_levels),
            decoy_rate: 0.0,
            epsilon,
            m_levels,
            abort: true,
            y0_lo: 0.0,
            y0_hi: 1.0,
            s_guaranteed: false,
            b1_vacuous: true,
        }
    }

    /// Flat `key=value` block, fixed field names and order.
    pub fn to_key_value(&self) -> String {
        format!(
            "y1_lo={}\ny1_hi={}\np_min_prime={}\ns_bound={}\nb1_max={}\nconfidence={}\n\
             decoy_rate={}\nepsilon={}\nm_levels={}\nabort={}\ny0_lo={}\ny0_hi={}\n\
             s_guaranteed={}\nb1_vacuous={}\n",
            self.y1_lo,
            self.y1_hi,
            self.p_min_prime,
            self.s_bound,
            self.b1_max,
            self.confidence,
            self.decoy_rate,
            self.epsilon,
            self.m_levels,
            self.abort,
            self.y0_lo,
            self.y0_hi,
            self.s_guaranteed,
            self.b1_vacuous,
        )
    }

    /// One-line JSON object (the machine-readable sweep form).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Conventional-versus-decoy rate comparison at one transmission value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateComparison {
    pub eta: f64,
    pub decoy_rate: f64,
    pub conventional_rate: f64,
    /// Ratio of the lower to the upper single-photon yield bound.
    pub f: f64,
    pub optimal_mu_decoy: f64,
    pub optimal_mu_conventional: f64,
}

/// Composed confidence `(1 - epsilon)^(2M + 1)`: two one-sided detection
/// bounds per level plus the single-photon count step.
pub fn confidence_level(epsilon: f64, m_levels: u32) -> f64 {
    (1.0 - epsilon).powi(2 * m_levels as i32 + 1)
}

/// `[min y_1, max y_1]` over the constraint polytope.
pub fn bound_y1(cs: &ConstraintSet) -> Result<Interval> {
    bound_coordinate(cs, 1)
}

fn bound_coordinate(cs: &ConstraintSet, coord: usize) -> Result<Interval> {
    let mut objective = vec![0.0; cs.dimension()];
    objective[coord] = 1.0;
    let lo = match optimize(cs, &objective, Sense::Minimize)? {
        LpSolution::Optimal { value, .. } => value,
        LpSolution::Infeasible => return Err(Error::Infeasible),
    };
    let hi = match optimize(cs, &objective, Sense::Maximize)? {
        LpSolution::Optimal { value, .. } => value,
        LpSolution::Infeasible => return Err(Error::Infeasible),
    };
    // clip the rounding fringe so downstream probabilities stay in range
    Interval::new(lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

/// Conservative lower bound on the conditional single-photon fraction
/// among detections at mean photon number `mu`.
///
/// The numerator takes the lower bounds of `mu` and `y_1`; the denominator
/// takes the upper bound of `mu`, the per-coordinate yield maxima, and the
/// trivial yield 1 on the truncated tail. The result can only undershoot
/// the true minimum of the fraction over the polytope.
pub fn conservative_single_photon_fraction(
    mu_bounds: Interval,
    y1_lower: f64,
    yk_uppers: &YieldVector,
) -> f64 {
    assert!(mu_bounds.lo > 0.0, "mu lower bound must be positive");
    let numerator = (-mu_bounds.lo).exp() * mu_bounds.lo * y1_lower.max(0.0);
    let (coeffs, tail) = truncated_series_coefficients(mu_bounds.hi, yk_uppers.truncation_order());
    let denominator: f64 = coeffs
        .iter()
        .zip(yk_uppers.values())
        .map(|(c, y)| c * y)
        .sum::<f64>()
        + tail;
    if denominator <= 0.0 {
        return 0.0;
    }
    (numerator / denominator).clamp(0.0, 1.0)
}

/// Largest `s` such that `P(X <= s) <= epsilon` for
/// `X ~ Binomial(detections, p_min_prime)`: with that confidence, at least
/// `s` of the detections originated as single-photon pulses.
pub fn single_photon_count_bound(detections: u64, p_min_prime: f64, epsilon: f64) -> CountBound {
    assert!(
        (0.0..=1.0).contains(&p_min_prime),
        "p_min_prime must lie in [0,1]"
    );
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
    if detections == 0 || binomial_cdf(0, detections, p_min_prime) > epsilon {
        return CountBound {
            s: 0,
            guaranteed: false,
        };
    }
    let mut lo = 0u64;
    let mut hi = detections - 1; // cdf(detections) = 1 > epsilon always
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if binomial_cdf(mid, detections, p_min_prime) <= epsilon {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    CountBound {
        s: lo,
        guaranteed: true,
    }
}

/// Largest single-photon bit error rate consistent with the observed
/// per-pulse error-click bounds, attributing nothing to multi-photon
/// pulses (`b_n = 0` for `n >= 2`) and everything else to dark counts at
/// their lower bound.
pub fn bound_b1(error_bounds: Interval, mu: f64, y0_lower: f64, y1_lower: f64) -> BerBound {
    assert!(mu > 0.0, "mu must be positive");
    if y1_lower <= 0.0 {
        return BerBound {
            value: 1.0,
            vacuous: true,
        };
    }
    let raw = (mu.exp() * error_bounds.hi - 0.5 * y0_lower) / (mu * y1_lower);
    if raw >= 1.0 {
        BerBound {
            value: 1.0,
            vacuous: true,
        }
    } else {
        BerBound {
            value: raw.max(0.0),
            vacuous: false,
        }
    }
}

/// Guaranteed single-photon detection rate per clock cycle,
/// `(1/4) mu e^(-mu) y1_lower`, counting only the quarter of cycles that
/// fire exactly one laser.
pub fn decoy_rate(mu: f64, y1_lower: f64) -> f64 {
    assert!(mu >= 0.0, "mu must be nonnegative");
    0.25 * mu * (-mu).exp() * y1_lower
}

/// Conventional guaranteed rate `mu (eta - mu/2)` maximized at `mu = eta`:
/// returns `(eta^2 / 2, eta)`.
pub fn conventional_rate(eta: f64) -> (f64, f64) {
    assert!(eta > 0.0 && eta <= 1.0, "eta must lie in (0,1]");
    (eta * eta / 2.0, eta)
}

/// Full pipeline: constraints, yield bounds, conservative fraction, count
/// bound, error-rate ceiling, rates, composed confidence.
///
/// An infeasible polytope does not error: it produces a report with the
/// `abort` flag raised, which callers must treat as possible eavesdropping
/// or model violation.
pub fn analyze_session(record: &SessionRecord, config: &AnalysisConfig) -> Result<AnalysisReport> {
    let epsilon = config.epsilon.unwrap_or(record.epsilon);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let levels: Vec<IntensityLevel> = record
        .levels
        .iter()
        .filter(|l| l.trials.trials() >= 1)
        .copied()
        .collect();
    let m_levels = levels.len() as u32;
    if m_levels < 2 {
        return Err(Error::InvalidInput(format!(
            "analysis needs at least 2 populated intensity levels, got {m_levels}"
        )));
    }
    let cs = build_constraints_with_mode(&levels, config.k, epsilon, config.ci_mode)?;

    let y1 = match bound_y1(&cs) {
        Ok(iv) => iv,
        Err(Error::Infeasible) => return Ok(AnalysisReport::aborted(epsilon, m_levels)),
        Err(e) => return Err(e),
    };
    let y0 = bound_coordinate(&cs, 0)?;

    let yk_uppers = match config.yk_upper {
        YkUpperMode::One => YieldVector::new(vec![1.0; config.k + 1])?,
        YkUpperMode::Lp => {
            let mut uppers = Vec::with_capacity(config.k + 1);
            for coord in 0..=config.k {
                let hi = match coord {
                    0 => y0.hi,
                    1 => y1.hi,
                    _ => bound_coordinate(&cs, coord)?.hi,
                };
                uppers.push(hi);
            }
            YieldVector::new(uppers)?
        }
    };

    let level1 = levels.iter().find(|l| l.lasers == 1);
    let mu1 = level1.map_or(record.mu_base, |l| l.mu);
    let mu_bounds = config.mu_bounds.unwrap_or(Interval::point(mu1));
    let p_min_prime = conservative_single_photon_fraction(mu_bounds, y1.lo, &yk_uppers);

    let detections = match config.s_mode {
        SMode::Sifted => level1
            .and_then(|l| l.error_trials)
            .map_or(0, |t| t.trials()),
        SMode::All => levels.iter().map(|l| l.trials.successes()).sum(),
    };
    let count = single_photon_count_bound(detections, p_min_prime, epsilon);

    let b1 = match level1.and_then(|l| l.error_trials.map(|e| (l, e))) {
        Some((l1, errs)) if errs.trials() > 0 => {
            // per-click error bounds times per-pulse click bounds give the
            // per-pulse error-click interval the constraint algebra expects
            let beta = binomial_confidence_interval_with(errs, epsilon, config.ci_mode)?;
            let clicks = binomial_confidence_interval_with(l1.trials, epsilon, config.ci_mode)?;
            let per_pulse = Interval::new(beta.lo * clicks.lo, beta.hi * clicks.hi)?;
            bound_b1(per_pulse, mu1, y0.lo, y1.lo)
        }
        _ => BerBound {
            value: 1.0,
            vacuous: true,
        },
    };

    Ok(AnalysisReport {
        y1_lo: y1.lo,
        y1_hi: y1.hi,
        p_min_prime,
        s_bound: count.s,
        b1_max: b1.value,
        confidence: confidence_level(epsilon, m_levels),
        decoy_rate: decoy_rate(record.mu_base, y1.lo),
        epsilon,
        m_levels,
        abort: false,
        y0_lo: y0.lo,
        y0_hi: y0.hi,
        s_guaranteed: count.guaranteed,
        b1_vacuous: b1.vacuous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::enumerate_vertices;
    use crate::photonics::{expected_detection_probability, poisson_pmf, ChannelModel};
    use crate::polytope::{build_constraints, ConstraintSet};
    use crate::sim::{expected_session, pns_channel, run_session, SessionConfig};
    use crate::stats::TrialCount;

    fn honest_config(n: u64, mu: f64, eta: f64, seed: u64) -> SessionConfig {
        SessionConfig {
            n_cycles: n,
            mu_base: mu,
            epsilon: 1e-7,
            channel: ChannelModel::beamsplitter(eta, 3e-6).unwrap(),
            intrinsic_ber: 0.01,
            seed,
        }
    }

    #[test]
    fn bound_y1_box_only() {
        let cs = ConstraintSet::with_boxes(4, vec![]).unwrap();
        let iv = bound_y1(&cs).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 1.0));
    }

    #[test]
    fn bound_y1_contains_truth_on_expected_counts() {
        let cfg = honest_config(1_000_000, 0.5, 0.1, 1);
        let rec = expected_session(&cfg).unwrap();
        let cs = build_constraints(&rec.levels, 11, 1e-7).unwrap();
        let iv = bound_y1(&cs).unwrap();
        let y1_true = cfg.channel.true_yield(1).unwrap();
        assert!((y1_true - 0.1).abs() < 1e-5);
        assert!(iv.contains(y1_true), "{iv:?} vs {y1_true}");
    }

    #[test]
    fn bound_y1_collapses_under_pns_data() {
        let mut cfg = honest_config(10_000_000, 0.5, 0.1, 2);
        cfg.channel = pns_channel(0.0, 3e-6, 11).unwrap();
        let rec = run_session(&cfg).unwrap();
        let cs = build_constraints(&rec.levels, 11, 1e-7).unwrap();
        let iv = bound_y1(&cs).unwrap();
        assert!(iv.lo < 5e-3, "lower bound {} did not collapse", iv.lo);
    }

    #[test]
    fn fraction_zero_numerator() {
        let uppers = YieldVector::new(vec![1.0; 12]).unwrap();
        assert_eq!(
            conservative_single_photon_fraction(Interval::point(0.5), 0.0, &uppers),
            0.0
        );
    }

    #[test]
    fn fraction_honest_closed_form() {
        // exact knowledge of an eta = 0.1, y0 = 0 beamsplitter at mu = 0.5:
        // P = e^-0.5 * 0.5 * 0.1 / (1 - e^-0.05)
        let k = 11;
        let ch = ChannelModel::beamsplitter(0.1, 0.0).unwrap();
        let yields =
            YieldVector::new((0..=k).map(|n| ch.true_yield(n).unwrap()).collect()).unwrap();
        let got =
            conservative_single_photon_fraction(Interval::point(0.5), ch.true_yield(1).unwrap(), &yields);
        let expect = 0.621_820_281_494_846_3;
        assert!((got - expect).abs() < 1e-6, "{got}");
    }

    #[test]
    fn fraction_trivial_uppers_with_mu_interval() {
        // denominator becomes exactly 1 when every yield upper is 1
        let uppers = YieldVector::new(vec![1.0; 12]).unwrap();
        let got = conservative_single_photon_fraction(
            Interval::new(0.4, 0.6).unwrap(),
            0.05,
            &uppers,
        );
        let expect = 0.013_406_400_920_712_786;
        assert!((got - expect).abs() < 1e-15, "{got}");
    }

    /// The plug-in fraction never exceeds the true fraction at any vertex
    /// of the region (the "conservative" in the name).
    #[test]
    fn fraction_below_value_at_every_vertex() {
        let k = 3usize;
        let mu = 0.5;
        let ch = ChannelModel::beamsplitter(0.1, 3e-6).unwrap();
        let mut levels = Vec::new();
        for j in 0..5u32 {
            let m = f64::from(j) * mu;
            let n = 200_000u64;
            let d = expected_detection_probability(&ch, m).value;
            levels.push(IntensityLevel::new(
                j,
                m,
                TrialCount::new(n, (n as f64 * d).round() as u64).unwrap(),
            ));
        }
        let cs = build_constraints(&levels, k, 1e-7).unwrap();
        let y1 = bound_y1(&cs).unwrap();
        let mut uppers = Vec::new();
        for coord in 0..=k {
            uppers.push(bound_coordinate(&cs, coord).unwrap().hi);
        }
        let uppers = YieldVector::new(uppers).unwrap();
        let p_prime = conservative_single_photon_fraction(Interval::point(mu), y1.lo, &uppers);

        let (coeffs, tail) = truncated_series_coefficients(mu, k);
        for v in enumerate_vertices(&cs).unwrap() {
            let denom: f64 = coeffs
                .iter()
                .zip(v.values())
                .map(|(c, y)| c * y)
                .sum::<f64>()
                + tail;
            let p_vertex = (-mu).exp() * mu * v[1] / denom;
            assert!(
                p_prime <= p_vertex + 1e-12,
                "p'={p_prime} exceeds vertex value {p_vertex}"
            );
        }
    }

    #[test]
    fn count_bound_no_detections() {
        let c = single_photon_count_bound(0, 0.5, 1e-7);
        assert_eq!((c.s, c.guaranteed), (0, false));
    }

    #[test]
    fn count_bound_large_case_exact() {
        // frozen from an independent incomplete-beta binary search
        let c = single_photon_count_bound(1_000_000, 0.5, 1e-7);
        assert!(c.guaranteed);
        assert_eq!(c.s, 497_399);
        // bracket property straight from the cdf
        assert!(binomial_cdf(c.s, 1_000_000, 0.5) <= 1e-7);
        assert!(binomial_cdf(c.s + 1, 1_000_000, 0.5) > 1e-7);
        // normal-tail sanity: 5e5 - 5.1993 sqrt(2.5e5) ~ 497400
        assert!((c.s as f64 - 497_400.0).abs() < 150.0);
    }

    #[test]
    fn count_bound_certain_singles() {
        let c = single_photon_count_bound(100, 1.0, 1e-7);
        assert_eq!((c.s, c.guaranteed), (99, true));
    }

    #[test]
    fn b1_zero_when_darks_explain_errors() {
        // e^mu B+ = y0/2 exactly
        let mu = 0.5f64;
        let y0 = 3e-6;
        let b_hi = 0.5 * y0 * (-mu).exp();
        let b = bound_b1(Interval::new(0.0, b_hi).unwrap(), mu, y0, 0.1);
        assert!(!b.vacuous);
        assert!(b.value.abs() < 1e-12, "{}", b.value);
    }

    #[test]
    fn b1_vacuous_without_yield_floor() {
        let b = bound_b1(Interval::new(0.0, 0.01).unwrap(), 0.5, 0.0, 0.0);
        assert!(b.vacuous);
        assert_eq!(b.value, 1.0);
    }

    #[test]
    fn b1_matches_algebraic_rearrangement() {
        // pick a consistent corner and invert the constraint by hand
        let (mu, y0, y1, b_true) = (0.5f64, 3e-6f64, 0.1f64, 0.02f64);
        let b_plus = (-mu).exp() * (0.5 * y0 + mu * b_true * y1);
        let got = bound_b1(Interval::new(0.0, b_plus).unwrap(), mu, y0, y1);
        assert!((got.value - b_true).abs() < 1e-12, "{}", got.value);
    }

    #[test]
    fn b1_monotonicities() {
        let e = Interval::new(0.0, 3e-4).unwrap();
        let base = bound_b1(e, 0.5, 3e-6, 0.1).value;
        assert!(bound_b1(e, 0.5, 3e-6, 0.2).value <= base);
        let wider = Interval::new(0.0, 6e-4).unwrap();
        assert!(bound_b1(wider, 0.5, 3e-6, 0.1).value >= base);
    }

    #[test]
    fn decoy_rate_values() {
        assert_eq!(decoy_rate(0.0, 0.3), 0.0);
        assert!((decoy_rate(1.0, 1.0) - 0.25 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((decoy_rate(1.0, 1.0) - 0.0920).abs() < 1e-4);
        assert!((decoy_rate(0.55, 0.1) - 7.933e-3).abs() < 1e-6);
    }

    #[test]
    fn decoy_rate_unimodal_with_argmax_one() {
        let mut best = (0.0, 0.0);
        let mut increased = false;
        let mut decreased_after_peak = true;
        let mut prev = 0.0;
        for i in 1..=400 {
            let mu = i as f64 * 0.01;
            let r = decoy_rate(mu, 0.1);
            if r > best.1 {
                best = (mu, r);
            }
            if r > prev {
                if best.0 < mu {
                    decreased_after_peak = false;
                }
                increased = true;
            }
            prev = r;
        }
        assert!(increased && decreased_after_peak);
        assert!((best.0 - 1.0).abs() < 0.011, "argmax {}", best.0);
    }

    #[test]
    fn conventional_rate_values() {
        assert_eq!(conventional_rate(1.0), (0.5, 1.0));
        let (r, mu) = conventional_rate(1e-2);
        assert!((r - 5e-5).abs() < 1e-18);
        assert_eq!(mu, 1e-2);
    }

    #[test]
    fn analyze_honest_session_end_to_end() {
        let cfg = honest_config(1_000_000, 0.5, 0.1, 77);
        let rec = run_session(&cfg).unwrap();
        let report = analyze_session(&rec, &AnalysisConfig::default()).unwrap();
        assert!(!report.abort);
        let y1_true = cfg.channel.true_yield(1).unwrap();
        assert!(report.y1_lo <= y1_true && y1_true <= report.y1_hi);
        assert!(report.s_guaranteed && report.s_bound > 0);
        // conservative: never exceeds the true single-photon fraction
        let d1 = expected_detection_probability(&cfg.channel, 0.5).value;
        let p_true = (-0.5f64).exp() * 0.5 * y1_true / d1;
        assert!(report.p_min_prime > 0.05 && report.p_min_prime <= p_true + 1e-12,
            "p'={} p_true={p_true}", report.p_min_prime);
        assert!(!report.b1_vacuous);
        // intrinsic BER 1% must be admitted and not wildly overshot
        assert!(report.b1_max >= 0.01 && report.b1_max < 0.05, "{}", report.b1_max);
        assert_eq!(report.m_levels, 5);
        assert_eq!(report.confidence, (1.0 - 1e-7f64).powi(11));
        assert!((report.decoy_rate - decoy_rate(0.5, report.y1_lo)).abs() < 1e-15);
    }

    #[test]
    fn analyze_pns_session_collapses() {
        let mut cfg = honest_config(10_000_000, 0.5, 0.1, 5);
        cfg.channel = pns_channel(0.0, 3e-6, 11).unwrap();
        let rec = run_session(&cfg).unwrap();
        let report = analyze_session(&rec, &AnalysisConfig::default()).unwrap();
        // either the region is empty (abort) or the yield floor collapses
        assert!(report.abort || report.y1_lo < 5e-3);
        let honest = analyze_session(
            &run_session(&honest_config(10_000_000, 0.5, 0.1, 5)).unwrap(),
            &AnalysisConfig::default(),
        )
        .unwrap();
        assert!(report.decoy_rate < 0.05 * honest.decoy_rate);
    }

    #[test]
    fn analyze_requires_two_levels() {
        let cfg = honest_config(1_000, 0.5, 0.1, 1);
        let mut rec = run_session(&cfg).unwrap();
        rec.levels.truncate(1);
        rec.n_cycles = rec.levels[0].trials.trials();
        assert!(analyze_session(&rec, &AnalysisConfig::default()).is_err());
    }

    #[test]
    fn yk_upper_one_is_more_conservative() {
        let cfg = honest_config(1_000_000, 0.5, 0.1, 13);
        let rec = run_session(&cfg).unwrap();
        let lp = analyze_session(&rec, &AnalysisConfig::default()).unwrap();
        let one = analyze_session(
            &rec,
            &AnalysisConfig {
                yk_upper: YkUpperMode::One,
                ..AnalysisConfig::default()
            },
        )
        .unwrap();
        assert!(one.p_min_prime <= lp.p_min_prime);
        assert!(one.s_bound <= lp.s_bound);
    }

    #[test]
    fn s_mode_all_uses_every_detection() {
        let cfg = honest_config(1_000_000, 0.5, 0.1, 21);
        let rec = run_session(&cfg).unwrap();
        let all = analyze_session(
            &rec,
            &AnalysisConfig {
                s_mode: SMode::All,
                ..AnalysisConfig::default()
            },
        )
        .unwrap();
        let sifted = analyze_session(&rec, &AnalysisConfig::default()).unwrap();
        // the all-detections pool is several times larger
        assert!(all.s_bound > sifted.s_bound);
    }

    #[test]
    fn report_serialization_forms() {
        let cfg = honest_config(100_000, 0.5, 0.1, 3);
        let rec = run_session(&cfg).unwrap();
        let report = analyze_session(&rec, &AnalysisConfig::default()).unwrap();
        let kv = report.to_key_value();
        for key in [
            "y1_lo=", "y1_hi=", "p_min_prime=", "s_bound=", "b1_max=", "confidence=",
            "decoy_rate=", "epsilon=", "m_levels=", "abort=",
        ] {
            assert!(kv.contains(key), "missing {key} in {kv}");
        }
        let json = report.to_json_line();
        assert!(json.starts_with('{') && json.ends_with('}'));
        assert!(!json.contains('\n'));
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["m_levels"], 5);
    }

    #[test]
    fn poisson_weights_consistency() {
        // the fraction denominator at trivial uppers is the full Poisson mass
        let uppers = YieldVector::new(vec![1.0; 15]).unwrap();
        let (coeffs, tail) = truncated_series_coefficients(0.7, 14);
        let total: f64 = coeffs.iter().sum::<f64>() + tail;
        assert!((total - 1.0).abs() < 1e-12);
        let p = conservative_single_photon_fraction(Interval::point(0.7), 1.0, &uppers);
        assert!((p - poisson_pmf(1, 0.7)).abs() < 1e-12);
    }
}
