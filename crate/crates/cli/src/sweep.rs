//! Parameter sweeps over the mean photon number and the rate comparison
//! against the conventional small-mu defence.

use rayon::prelude::*;

use decoy_core::analysis::{
    analyze_session, conventional_rate, decoy_rate, AnalysisConfig, SMode, YkUpperMode,
};
use decoy_core::error::{Error, Result};
use decoy_core::photonics::{ChannelModel, YieldVector};
use decoy_core::sim::{expected_session, pns_channel, run_session, SessionConfig};
use decoy_core::stats::CiMode;

/// Session-size rule: fixed N, or N = numerator / eta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NRule {
    Absolute(u64),
    Scaled(f64),
}

impl NRule {
    pub fn n_cycles(&self, eta: f64) -> Result<u64> {
        let n = match self {
            NRule::Absolute(n) => *n as f64,
            NRule::Scaled(numerator) => (numerator / eta).round(),
        };
        if !(n >= 1.0 && n <= 9.007_199_254_740_992e15) {
            return Err(Error::InvalidInput(format!(
                "session size {n} outside supported range"
            )));
        }
        Ok(n as u64)
    }
}

/// Channel selector for simulated sweeps.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Beamsplitter,
    Pns { eta_eve: f64 },
    Custom(YieldVector),
}

impl ChannelSpec {
    pub fn build(&self, eta: f64, y0: f64, k: usize) -> Result<ChannelModel> {
        match self {
            ChannelSpec::Beamsplitter => ChannelModel::beamsplitter(eta, y0),
            ChannelSpec::Pns { eta_eve } => pns_channel(*eta_eve, y0, k),
            ChannelSpec::Custom(yields) => Ok(ChannelModel::adversarial(yields.clone())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub mu_grid: Vec<f64>,
    pub eta: f64,
    pub n_rule: NRule,
    pub epsilon: f64,
    pub y0: f64,
    pub intrinsic_ber: f64,
    pub base_seed: u64,
    pub seeds: u32,
    pub k: usize,
    /// Replace sampled counts by rounded expectations (noise-free bounds).
    pub exact_counts: bool,
    pub channel: ChannelSpec,
    pub s_mode: SMode,
    pub yk_upper: YkUpperMode,
    pub ci_mode: CiMode,
}

impl SweepSpec {
    pub fn with_defaults(mu_grid: Vec<f64>, eta: f64, n_rule: NRule) -> Self {
        SweepSpec {
            mu_grid,
            eta,
            n_rule,
            epsilon: 1e-7,
            y0: 3e-6,
            intrinsic_ber: 0.0,
            base_seed: 1,
            seeds: 1,
            k: 11,
            exact_counts: false,
            channel: ChannelSpec::Beamsplitter,
            s_mode: SMode::Sifted,
            yk_upper: YkUpperMode::Lp,
            ci_mode: CiMode::Paper,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() {
            return Err(Error::InvalidInput("empty mu grid".into()));
        }
        if self.mu_grid[0] <= 0.0 {
            return Err(Error::InvalidInput("mu grid values must be positive".into()));
        }
        if self.mu_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "mu grid must be strictly increasing".into(),
            ));
        }
        if self.seeds < 1 {
            return Err(Error::InvalidInput("need at least one seed".into()));
        }
        Ok(())
    }
}

/// One (mu, seed) sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub eta: f64,
    pub n_cycles: u64,
    pub seed: u64,
    pub y1_lo: f64,
    pub y1_hi: f64,
    pub rate_lo: f64,
    pub rate_true: f64,
    pub s_bound: u64,
    pub b1_max: f64,
    pub abort: bool,
}

/// Median and interquartile range of the guaranteed rate at one mu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary {
    pub mu: f64,
    pub rate_lo_median: f64,
    pub rate_lo_iqr: f64,
    pub y1_lo_median: f64,
    pub y1_hi_median: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SweepSummary>,
    /// Quadratically refined argmax of the median guaranteed rate.
    pub argmax_mu: f64,
    pub argmax_rate: f64,
}

/// Deterministic per-session seed from the base seed and the point index
/// (splitmix64 over the packed coordinates).
pub fn session_seed(base_seed: u64, mu_index: usize, seed_index: u32) -> u64 {
    let mut z = base_seed
        .wrapping_add((mu_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(u64::from(seed_index).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample median (mean of the central pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank interquartile range.
pub fn iqr(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    v[3 * (n - 1) / 4] - v[(n - 1) / 4]
}

/// Argmax of `vals` over `grid` with one quadratic refinement around the
/// best grid point. Returns the refined location and peak value.
pub fn refined_argmax(grid: &[f64], vals: &[f64]) -> (f64, f64) {
    assert_eq!(grid.len(), vals.len());
    let mut i = 0;
    for (j, v) in vals.iter().enumerate() {
        if *v > vals[i] {
            i = j;
        }
    }
    if i > 0 && i + 1 < grid.len() {
        let (a, b, c) = (vals[i - 1], vals[i], vals[i + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let dx = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            let h = grid[i + 1] - grid[i];
            return (grid[i] + dx * h, b - 0.25 * (a - c) * dx);
        }
    }
    (grid[i], vals[i])
}

/// Run the sweep: each (mu, seed) point simulates one session and analyzes
/// it. Points execute in parallel on the ambient rayon pool; rows come back
/// ordered by (mu, seed) regardless of completion order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let n_cycles = spec.n_rule.n_cycles(spec.eta)?;
    let channel = spec.channel.build(spec.eta, spec.y0, spec.k)?;
    let y1_true = channel.true_yield(1)?;

    let points: Vec<(usize, u32)> = (0..spec.mu_grid.len())
        .flat_map(|mi| (0..spec.seeds).map(move |si| (mi, si)))
        .collect();

    let rows: Result<Vec<SweepRow>> = points
        .par_iter()
        .map(|&(mi, si)| {
            let mu = spec.mu_grid[mi];
            let seed = session_seed(spec.base_seed, mi, si);
            let config = SessionConfig {
                n_cycles,
                mu_base: mu,
                epsilon: spec.epsilon,
                channel: channel.clone(),
                intrinsic_ber: spec.intrinsic_ber,
                seed,
            };
            let record = if spec.exact_counts {
                expected_session(&config)?
            } else {
                run_session(&config)?
            };
            let analysis = AnalysisConfig {
                k: spec.k,
                epsilon: Some(spec.epsilon),
                s_mode: spec.s_mode,
                yk_upper: spec.yk_upper,
                ci_mode: spec.ci_mode,
                mu_bounds: None,
            };
            let report = analyze_session(&record, &analysis)?;
            Ok(SweepRow {
                mu,
                eta: spec.eta,
                n_cycles,
                seed,
                y1_lo: report.y1_lo,
                y1_hi: report.y1_hi,
                rate_lo: report.decoy_rate,
                rate_true: decoy_rate(mu, y1_true),
                s_bound: report.s_bound,
                b1_max: report.b1_max,
                abort: report.abort,
            })
        })
        .collect();
    let rows = rows?;

    let mut summaries = Vec::with_capacity(spec.mu_grid.len());
    for (mi, &mu) in spec.mu_grid.iter().enumerate() {
        let chunk = &rows[mi * spec.seeds as usize..(mi + 1) * spec.seeds as usize];
        let rates: Vec<f64> = chunk.iter().map(|r| r.rate_lo).collect();
        let y1_los: Vec<f64> = chunk.iter().map(|r| r.y1_lo).collect();
        let y1_his: Vec<f64> = chunk.iter().map(|r| r.y1_hi).collect();
        summaries.push(SweepSummary {
            mu,
            rate_lo_median: median(&rates),
            rate_lo_iqr: iqr(&rates),
            y1_lo_median: median(&y1_los),
            y1_hi_median: median(&y1_his),
        });
    }
    let medians: Vec<f64> = summaries.iter().map(|s| s.rate_lo_median).collect();
    let (argmax_mu, argmax_rate) = refined_argmax(&spec.mu_grid, &medians);
    Ok(SweepOutcome {
        rows,
        summaries,
        argmax_mu,
        argmax_rate,
    })
}

pub const SWEEP_CSV_HEADER: &str =
    "mu,eta,n_cycles,seed,y1_lo,y1_hi,rate_lo,rate_true,s_bound,b1_max,abort";

impl SweepOutcome {
    /// CSV table with trailing `#` summary and argmax comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.mu,
                r.eta,
                r.n_cycles,
                r.seed,
                r.y1_lo,
                r.y1_hi,
                r.rate_lo,
                r.rate_true,
                r.s_bound,
                r.b1_max,
                r.abort
            ));
        }
        for s in &self.summaries {
            out.push_str(&format!(
                "# summary mu={} rate_lo_median={} rate_lo_iqr={}\n",
                s.mu, s.rate_lo_median, s.rate_lo_iqr
            ));
        }
        out.push_str(&format!(
            "# argmax mu={} rate_lo={}\n",
            self.argmax_mu, self.argmax_rate
        ));
        out
    }
}

/// Rate comparison specification: decoy pipeline optimum per eta versus the
/// conventional `eta^2 / 2`.
#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub eta_grid: Vec<f64>,
    pub n_cycles: u64,
    pub mu_grid: Vec<f64>,
    pub epsilon: f64,
    pub y0: f64,
    pub base_seed: u64,
    pub seeds: u32,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub eta: f64,
    pub n_cycles: u64,
    pub conventional_rate: f64,
    pub mu_opt_conventional: f64,
    pub decoy_rate_lo: f64,
    pub mu_opt_decoy: f64,
    /// Lower-to-upper single-photon yield bound ratio at the optimum.
    pub f: f64,
    /// decoy_rate_lo / conventional_rate.
    pub advantage: f64,
}

pub fn run_compare(spec: &CompareSpec) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::with_capacity(spec.eta_grid.len());
    for (ei, &eta) in spec.eta_grid.iter().enumerate() {
        let sweep = SweepSpec {
            epsilon: spec.epsilon,
            y0: spec.y0,
            base_seed: spec.base_seed.wrapping_add(ei as u64),
            seeds: spec.seeds,
            k: spec.k,
            ..SweepSpec::with_defaults(
                spec.mu_grid.clone(),
                eta,
                NRule::Absolute(spec.n_cycles),
            )
        };
        let outcome = run_sweep(&sweep)?;
        // f at the best grid point of the median curve
        let best = outcome
            .summaries
            .iter()
            .max_by(|a, b| a.rate_lo_median.total_cmp(&b.rate_lo_median))
            .expect("nonempty grid");
        let f = if best.y1_hi_median > 0.0 {
            (best.y1_lo_median / best.y1_hi_median).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (conv, mu_conv) = conventional_rate(eta);
        rows.push(CompareRow {
            eta,
            n_cycles: spec.n_cycles,
            conventional_rate: conv,
            mu_opt_conventional: mu_conv,
            decoy_rate_lo: outcome.argmax_rate,
            mu_opt_decoy: outcome.argmax_mu,
            f,
            advantage: outcome.argmax_rate / conv,
        });
    }
    Ok(rows)
}

pub const COMPARE_CSV_HEADER: &str =
    "eta,n_cycles,conventional_rate,mu_opt_conventional,decoy_rate_lo,mu_opt_decoy,f,advantage";

pub fn compare_to_csv(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    out.push_str(COMPARE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.eta,
            r.n_cycles,
            r.conventional_rate,
            r.mu_opt_conventional,
            r.decoy_rate_lo,
            r.mu_opt_decoy,
            r.f,
            r.advantage
        ));
    }
    out
}
