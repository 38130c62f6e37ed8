//! Finite-sample binomial statistics: confidence bounds on detection
//! probabilities, stable tail probabilities, and aggregate sampling for
//! sessions too large to simulate cycle by cycle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::special::{binomial_cdf_impl, ln_binom_pmf};

/// A closed interval `[lo, hi]`, used for probability and rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidInput(format!(
                "interval endpoints out of order: [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    /// Degenerate single-point interval.
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Bernoulli trial record: `c` successes out of `n` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialCount {
    n: u64,
    c: u64,
}

impl TrialCount {
    pub fn new(n: u64, c: u64) -> Result<Self> {
        if c > n {
            return Err(Error::InvalidInput(format!(
                "success count {c} exceeds trial count {n}"
            )));
        }
        Ok(TrialCount { n, c })
    }

    pub fn trials(&self) -> u64 {
        self.n
    }

    pub fn successes(&self) -> u64 {
        self.c
    }

    /// Maximum-likelihood estimate `c / n`.
    pub fn mle(&self) -> f64 {
        self.c as f64 / self.n as f64
    }
}

/// How the per-level confidence intervals are derived from the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiMode {
    /// Solve the single-term equation `C(n,c) Y^c (1-Y)^(n-c) = epsilon` on
    /// each side of the MLE. This is the production interval.
    #[default]
    Paper,
    /// One-sided Clopper-Pearson tail bounds at level `epsilon` per side.
    /// Wider, but has guaranteed coverage for any `epsilon`, including the
    /// large values used in coverage experiments where the single-term
    /// equation has no root.
    Tail,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    Ok(())
}

/// Bisect `f` to its root inside `(lo, hi)` given `f(lo)` and `f(hi)` have
/// opposite signs; runs to f64 fixpoint. Returns the final bracket.
fn bisect_bracket(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut lo_positive = f(lo) > 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return (lo, hi);
        }
        let mid_positive = f(mid) > 0.0;
        if mid_positive == lo_positive {
            lo = mid;
            lo_positive = mid_positive;
        } else {
            hi = mid;
        }
    }
}

/// Confidence interval `[Y-, Y+]` for a binomial proportion from the
/// single-term bound equation (default `Paper` mode).
///
/// `Y-` is the largest value at or below `c/n` and `Y+` the smallest value at
/// or above `c/n` at which `C(n,c) Y^c (1-Y)^(n-c)` falls to `epsilon`; the
/// term is unimodal in `Y` with maximum at the MLE. Edge cases: `c = 0` gives
/// `Y- = 0`, `c = n` gives `Y+ = 1`. If the term never reaches `epsilon`
/// (possible only for `epsilon` larger than the pmf mode), the affected side
/// falls back to the trivial bound so the interval stays conservative.
pub fn binomial_confidence_interval(t: TrialCount, epsilon: f64) -> Result<Interval> {
    binomial_confidence_interval_with(t, epsilon, CiMode::Paper)
}

/// Confidence interval with an explicit [`CiMode`].
pub fn binomial_confidence_interval_with(
    t: TrialCount,
    epsilon: f64,
    mode: CiMode,
) -> Result<Interval> {
    check_epsilon(epsilon)?;
    if t.n < 1 {
        return Err(Error::InvalidInput(
            "confidence interval requires at least one trial".into(),
        ));
    }
    match mode {
        CiMode::Paper => paper_interval(t, epsilon),
        CiMode::Tail => tail_interval(t, epsilon),
    }
}

fn paper_interval(t: TrialCount, epsilon: f64) -> Result<Interval> {
    let (n, c) = (t.n, t.c);
    let ln_eps = epsilon.ln();
    // closed forms at the support edges
    if c == 0 {
        // (1-Y)^n = epsilon
        let hi = -(ln_eps / n as f64).exp_m1();
        return Interval::new(0.0, hi);
    }
    if c == n {
        let lo = (ln_eps / n as f64).exp();
        return Interval::new(lo, 1.0);
    }
    let phat = t.mle();
    let g = |y: f64| ln_binom_pmf(c, n, y) - ln_eps;
    if g(phat) <= 0.0 {
        // epsilon above the pmf mode: no root; nothing can be excluded
        return Interval::new(0.0, 1.0);
    }
    // lower side: g runs from -inf at 0 up to g(phat) > 0
    let (blo, _) = bisect_bracket(&g, 0.0, phat);
    // upper side: g falls from g(phat) > 0 to -inf at 1
    let (_, bhi) = bisect_bracket(&g, phat, 1.0);
    Interval::new(blo, bhi)
}

fn tail_interval(t: TrialCount, epsilon: f64) -> Result<Interval> {
    let (n, c) = (t.n, t.c);
    let phat = t.mle();
    let lo = if c == 0 {
        0.0
    } else {
        // largest q with P(X >= c | q) <= epsilon; the tail is increasing in q
        let g = |q: f64| (1.0 - binomial_cdf_impl(c - 1, n, q)) - epsilon;
        if g(phat) <= 0.0 {
            phat
        } else {
            bisect_bracket(&g, 0.0, phat).0
        }
    };
    let hi = if c == n {
        1.0
    } else {
        // smallest q with P(X <= c | q) <= epsilon; the cdf is decreasing in q
        let g = |q: f64| binomial_cdf_impl(c, n, q) - epsilon;
        if g(phat) <= 0.0 {
            phat
        } else {
            bisect_bracket(&g, phat, 1.0).1
        }
    };
    Interval::new(lo, hi)
}

/// `P(X <= s)` for `X ~ Binomial(n, p)`, computed through the regularized
/// incomplete beta. Monotone nondecreasing in `s`, nonincreasing in `p`.
pub fn binomial_cdf(s: u64, n: u64, p: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&p),
        "binomial_cdf: p must lie in [0,1], got {p}"
    );
    binomial_cdf_impl(s, n, p)
}

/// Deterministic seeded random source. Not shareable across threads: each
/// concurrent task owns its own instance, derived from `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RandomSource(ChaCha20Rng);

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::from_parts(seed, 0)
    }

    /// Independent source for sweep point `stream` of a base seed.
    pub fn from_parts(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream.to_le_bytes());
        RandomSource(ChaCha20Rng::from_seed(key))
    }

    fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    /// Standard normal via Box-Muller (cosine branch only).
    fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Switchover for binomial sampling: exact inversion below, normal
/// approximation above. The spread `n*min(p,1-p)` is large enough there
/// that the approximation error is far below the statistical noise this
/// crate ever resolves.
const BINOMIAL_EXACT_LIMIT: f64 = 30.0;

/// Draw from `Binomial(n, p)`. Exact CDF inversion when
/// `n * min(p, 1-p) <= 30`, rounded-and-clamped normal approximation above.
/// Deterministic given the seeded source.
pub fn sample_binomial(n: u64, p: f64, rng: &mut RandomSource) -> u64 {
    assert!(
        (0.0..=1.0).contains(&p),
        "sample_binomial: p must lie in [0,1], got {p}"
    );
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let flipped = p > 0.5;
    let q = if flipped { 1.0 - p } else { p };
    let nf = n as f64;
    let k = if nf * q <= BINOMIAL_EXACT_LIMIT {
        inversion_sample(n, q, rng)
    } else {
        let mean = nf * q;
        let sd = (nf * q * (1.0 - q)).sqrt();
        (mean + rng.standard_normal() * sd).round().clamp(0.0, nf) as u64
    };
    if flipped {
        n - k
    } else {
        k
    }
}

fn inversion_sample(n: u64, q: f64, rng: &mut RandomSource) -> u64 {
    let u = rng.uniform();
    let nf = n as f64;
    let ratio = q / (1.0 - q);
    let mut pmf = (nf * (-q).ln_1p()).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    while u >= cdf && k < n {
        pmf *= ((n - k) as f64 / (k + 1) as f64) * ratio;
        k += 1;
        cdf += pmf;
        // u within rounding of 1: stop once the remaining mass is below f64
        // resolution rather than walking the full support
        if pmf < 1e-300 && k as f64 > nf * q + 10.0 {
            break;
        }
    }
    k
}

/// Draw multinomial counts summing to `n`, as sequential conditional
/// binomials. Weights must be nonnegative and sum to 1 within 1e-12.
pub fn sample_multinomial(n: u64, weights: &[f64], rng: &mut RandomSource) -> Result<Vec<u64>> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidInput(format!("negative weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    let mut counts = Vec::with_capacity(weights.len());
    let mut remaining = n;
    let mut wsum = total;
    for (i, &w) in weights.iter().enumerate() {
        if i + 1 == weights.len() {
            counts.push(remaining);
            break;
        }
        if remaining == 0 || wsum <= 0.0 {
            counts.push(0);
            continue;
        }
        let p = (w / wsum).clamp(0.0, 1.0);
        let c = sample_binomial(remaining, p, rng);
        counts.push(c);
        remaining -= c;
        wsum -= w;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_binom_pmf;
    use proptest::prelude::*;

    #[test]
    fn interval_rejects_inverted() {
        assert!(Interval::new(0.2, 0.1).is_err());
        assert!(Interval::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn trial_count_rejects_c_above_n() {
        assert!(TrialCount::new(5, 6).is_err());
    }

    #[test]
    fn ci_rejects_bad_epsilon() {
        let t = TrialCount::new(10, 3).unwrap();
        assert!(binomial_confidence_interval(t, 0.0).is_err());
        assert!(binomial_confidence_interval(t, 1.0).is_err());
        assert!(binomial_confidence_interval(t, -0.1).is_err());
    }

    #[test]
    fn ci_zero_successes_closed_form() {
        // (1-Y)^100 = 1e-7  =>  Y+ = 1 - (1e-7)^(1/100)
        let t = TrialCount::new(100, 0).unwrap();
        let iv = binomial_confidence_interval(t, 1e-7).unwrap();
        assert_eq!(iv.lo, 0.0);
        let expect = 0.148_861_961_797_623_53;
        assert!((iv.hi - expect).abs() < 1e-14, "{}", iv.hi);
    }

    #[test]
    fn ci_all_successes_mirror() {
        let t = TrialCount::new(100, 100).unwrap();
        let iv = binomial_confidence_interval(t, 1e-7).unwrap();
        assert_eq!(iv.hi, 1.0);
        assert!((iv.lo - (1.0 - 0.148_861_961_797_623_53)).abs() < 1e-14);
    }

    #[test]
    fn ci_endpoints_hit_epsilon_in_log_domain() {
        let eps: f64 = 1e-7;
        let ln_eps = eps.ln();
        for (n, c) in [(1_000_000u64, 1_000u64), (10_000, 300), (500, 250), (2_000, 3)] {
            let t = TrialCount::new(n, c).unwrap();
            let iv = binomial_confidence_interval(t, eps).unwrap();
            assert!(iv.contains(t.mle()));
            for y in [iv.lo, iv.hi] {
                let g = ln_binom_pmf(c, n, y) - ln_eps;
                assert!(g.abs() < 1e-9, "n={n} c={c} y={y}: residual {g}");
            }
        }
    }

    #[test]
    fn ci_width_shrinks_like_sqrt_n() {
        let eps = 1e-7;
        let mut widths = Vec::new();
        for scale in [1u64, 10, 100] {
            let t = TrialCount::new(1_000_000 * scale, 1_000 * scale).unwrap();
            let iv = binomial_confidence_interval(t, eps).unwrap();
            assert!(iv.contains(1e-3));
            widths.push(iv.width());
        }
        // each 10x in n shrinks the width by ~sqrt(10)
        for w in widths.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10f64.sqrt()).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn ci_vacuous_fallback_when_epsilon_above_mode() {
        // pmf mode at n=25000, c=1220 is ~0.012 < 0.05: no root exists
        let t = TrialCount::new(25_000, 1_220).unwrap();
        let iv = binomial_confidence_interval(t, 0.05).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 1.0));
    }

    /// Exact (enumerated) non-coverage of the paper interval at eps = 0.05.
    ///
    /// The single-term interval excludes `p` exactly when `pmf_p(C) < eps`,
    /// so its coverage guarantee needs `eps` well below the pmf mode. At
    /// eps = 0.05 that restricts the check to small `n`; production runs at
    /// eps = 1e-7 sit many orders of magnitude below every mode they see.
    #[test]
    fn ci_coverage_exact_enumeration() {
        let eps = 0.05f64;
        for (n, p) in [(12u64, 0.5f64), (20, 0.2)] {
            let mut miss = 0.0;
            for c in 0..=n {
                let t = TrialCount::new(n, c).unwrap();
                let iv = binomial_confidence_interval(t, eps).unwrap();
                if !iv.contains(p) {
                    miss += ln_binom_pmf(c, n, p).exp();
                }
            }
            assert!(miss <= 2.0 * eps, "n={n} p={p}: exact non-coverage {miss}");
        }
    }

    #[test]
    fn ci_coverage_sampled() {
        let (n, p, eps) = (12u64, 0.5f64, 0.05f64);
        let trials = 10_000u32;
        let mut rng = RandomSource::new(7);
        let mut miss = 0u32;
        for _ in 0..trials {
            let c = sample_binomial(n, p, &mut rng);
            let iv = binomial_confidence_interval(TrialCount::new(n, c).unwrap(), eps).unwrap();
            if !iv.contains(p) {
                miss += 1;
            }
        }
        let freq = f64::from(miss) / f64::from(trials);
        // exact non-coverage here is 2*79/4096 ~ 0.0386; allow sampling noise
        assert!(freq <= 2.0 * eps + 0.012, "non-coverage {freq}");
    }

    #[test]
    fn tail_mode_is_wider_and_covers() {
        let t = TrialCount::new(25_000, 1_220).unwrap();
        let paper = binomial_confidence_interval_with(t, 1e-7, CiMode::Paper).unwrap();
        let tail = binomial_confidence_interval_with(t, 1e-7, CiMode::Tail).unwrap();
        assert!(tail.lo <= paper.lo + 1e-12);
        assert!(tail.hi >= paper.hi - 1e-12);
        assert!(tail.contains(t.mle()));
        // CP endpoints put exactly epsilon of tail mass beyond the data
        let up_tail = 1.0 - binomial_cdf(1_219, 25_000, tail.lo);
        let low_tail = binomial_cdf(1_220, 25_000, tail.hi);
        assert!((up_tail - 1e-7).abs() < 1e-11, "{up_tail}");
        assert!((low_tail - 1e-7).abs() < 1e-11, "{low_tail}");
    }

    #[test]
    fn cdf_trivial_cases() {
        assert_eq!(binomial_cdf(50, 50, 0.3), 1.0);
        assert_eq!(binomial_cdf(0, 10, 0.0), 1.0);
        assert!((binomial_cdf(2, 10, 0.5) - 0.0546875).abs() < 1e-13);
    }

    #[test]
    fn cdf_monotone() {
        let n = 200;
        for s in 0..n - 1 {
            assert!(binomial_cdf(s, n, 0.37) <= binomial_cdf(s + 1, n, 0.37) + 1e-15);
        }
        let mut prev = 1.0;
        for i in 1..20 {
            let p = i as f64 / 20.0;
            let v = binomial_cdf(60, 200, p);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn sample_binomial_edges() {
        let mut rng = RandomSource::new(1);
        assert_eq!(sample_binomial(0, 0.7, &mut rng), 0);
        assert_eq!(sample_binomial(1_000_000, 0.0, &mut rng), 0);
        assert_eq!(sample_binomial(1_000_000, 1.0, &mut rng), 1_000_000);
    }

    #[test]
    fn sample_binomial_mean_within_3_se() {
        let (n, p) = (1_000_000u64, 1e-3f64);
        let draws = 10_000u64;
        let mut rng = RandomSource::new(42);
        let mut sum = 0u64;
        for _ in 0..draws {
            sum += sample_binomial(n, p, &mut rng);
        }
        let mean = sum as f64 / draws as f64;
        let se = (n as f64 * p * (1.0 - p) / draws as f64).sqrt();
        assert!((mean - 1000.0).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sample_binomial_exact_branch_moments() {
        // n*p = 6 stays on the inversion path
        let (n, p) = (20u64, 0.3f64);
        let draws = 20_000;
        let mut rng = RandomSource::new(9);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let k = sample_binomial(n, p, &mut rng) as f64;
            s1 += k;
            s2 += k * k;
        }
        let mean = s1 / draws as f64;
        let var = s2 / draws as f64 - mean * mean;
        assert!((mean - 6.0).abs() < 0.06, "mean {mean}");
        assert!((var - 4.2).abs() < 0.2, "var {var}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let draw = |seed| {
            let mut rng = RandomSource::from_parts(seed, 3);
            (0..32).map(|_| sample_binomial(1 << 40, 1e-4, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn multinomial_conserves_and_matches_expectation() {
        let w = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut rng = RandomSource::new(5);
        let counts = sample_multinomial(16, &w, &mut rng).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 16);

        let n = 100_000_000u64;
        let counts = sample_multinomial(n, &w, &mut rng).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), n);
        let frac = counts[2] as f64 / n as f64;
        let se = (0.375 * 0.625 / n as f64).sqrt();
        assert!((frac - 0.375).abs() <= 3.0 * se, "frac {frac}");
    }

    #[test]
    fn multinomial_degenerate_weight() {
        let mut rng = RandomSource::new(5);
        let counts = sample_multinomial(5, &[1.0, 0.0, 0.0, 0.0, 0.0], &mut rng).unwrap();
        assert_eq!(counts, vec![5, 0, 0, 0, 0]);
    }

    #[test]
    fn multinomial_rejects_negative_weight() {
        let mut rng = RandomSource::new(5);
        assert!(sample_multinomial(5, &[0.5, -0.5, 1.0], &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn prop_ci_contains_mle(n in 1u64..50_000, frac in 0.0f64..=1.0) {
            let c = ((n as f64) * frac).round() as u64;
            let t = TrialCount::new(n, c.min(n)).unwrap();
            let iv = binomial_confidence_interval(t, 1e-7).unwrap();
            prop_assert!(iv.contains(t.mle()));
            prop_assert!(iv.lo >= 0.0 && iv.hi <= 1.0);
        }

        #[test]
        fn prop_ci_width_nonincreasing_in_n(base in 20u64..2_000, frac in 0.05f64..0.95) {
            // same MLE, 16x the trials: width must not grow
            let c1 = ((base as f64) * frac).round().max(1.0) as u64;
            let t1 = TrialCount::new(base, c1).unwrap();
            let t2 = TrialCount::new(base * 16, c1 * 16).unwrap();
            let w1 = binomial_confidence_interval(t1, 1e-7).unwrap().width();
            let w2 = binomial_confidence_interval(t2, 1e-7).unwrap().width();
            prop_assert!(w2 <= w1 + 1e-12);
        }

        #[test]
        fn prop_cdf_complement_sums_to_one(n in 1u64..=60, s in 0u64..=60, pct in 0u32..=100) {
            let s = s.min(n);
            let p = f64::from(pct) / 100.0;
            let lower = binomial_cdf(s, n, p);
            let mut upper = 0.0;
            for k in (s + 1)..=n {
                upper += ln_binom_pmf(k, n, p).exp();
            }
            prop_assert!((lower + upper - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_multinomial_conserves(n in 0u64..10_000_000, seed in 0u64..1000) {
            let w = [0.1, 0.25, 0.3, 0.2, 0.15];
            let mut rng = RandomSource::new(seed);
            let counts = sample_multinomial(n, &w, &mut rng).unwrap();
            prop_assert_eq!(counts.iter().sum::<u64>(), n);
        }
    }
}
