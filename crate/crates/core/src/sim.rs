//! Four-laser protocol session simulation.
//!
//! Sessions are sampled in aggregate (multinomial class split, one binomial
//! per class) rather than cycle by cycle: session sizes reach 1e11 cycles
//! where per-cycle loops are infeasible, and the aggregate draws are
//! statistically identical.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::photonics::{
    expected_detection_probability, poisson_pmf, ChannelModel, YieldVector,
};
use crate::polytope::IntensityLevel;
use crate::stats::{sample_binomial, sample_multinomial, RandomSource, TrialCount};

/// Class weights for four lasers each fired on an independent fair bit:
/// `C(4,j) / 16` pulses have `j` lasers firing.
pub const PULSE_CLASS_WEIGHTS: [f64; 5] = [
    1.0 / 16.0,
    4.0 / 16.0,
    6.0 / 16.0,
    4.0 / 16.0,
    1.0 / 16.0,
];

/// Parameters of one simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// Clock cycles N.
    pub n_cycles: u64,
    /// Per-laser mean photon number; class `j` carries `j * mu_base`.
    pub mu_base: f64,
    /// Security parameter echoed into the record.
    pub epsilon: f64,
    pub channel: ChannelModel,
    /// Polarization error probability for a detected signal photon.
    pub intrinsic_ber: f64,
    pub seed: u64,
}

impl SessionConfig {
    fn validate(&self) -> Result<()> {
        if self.n_cycles < 1 {
            return Err(Error::InvalidInput("n_cycles must be at least 1".into()));
        }
        if !(self.mu_base > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mu_base must be positive, got {}",
                self.mu_base
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0,1), got {}",
                self.epsilon
            )));
        }
        if !(0.0..=0.5).contains(&self.intrinsic_ber) {
            return Err(Error::InvalidInput(format!(
                "intrinsic_ber must lie in [0, 0.5], got {}",
                self.intrinsic_ber
            )));
        }
        Ok(())
    }
}

/// Full outcome of one session: counts for the five pulse classes plus the
/// configuration echo, so records are self-describing and reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub levels: Vec<IntensityLevel>,
    pub n_cycles: u64,
    pub mu_base: f64,
    pub epsilon: f64,
    pub intrinsic_ber: f64,
    pub seed: u64,
    /// Serialized channel, or `unknown` for imported experimental counts.
    pub channel_desc: String,
}

/// Ground truth retained by the traced simulation path, for soundness
/// experiments that compare reported bounds against what actually happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionTruth {
    pub true_y1: f64,
    /// Detections of the j=1 class that originated as single-photon pulses.
    pub single_photon_detections: u64,
    /// The same, restricted to the sifted sample.
    pub single_photon_sifted: u64,
}

/// Per-pulse probability that a j=1 pulse produces a sifted-equivalent
/// erroneous click, decomposed as: a click on a vacuum pulse is pure noise
/// and errs with probability 1/2; a click on any photon-carrying pulse errs
/// at the intrinsic polarization error rate.
fn error_click_probability(channel: &ChannelModel, mu: f64, intrinsic_ber: f64) -> f64 {
    let d = expected_detection_probability(channel, mu).value;
    let vacuum_click = poisson_pmf(0, mu) * channel.true_yield(0).unwrap_or(0.0);
    let signal_click = (d - vacuum_click).max(0.0);
    0.5 * vacuum_click + intrinsic_ber * signal_click
}

/// Simulate one session. Deterministic given the config (seed included).
///
/// Draw order is fixed: class split, then one detection draw per class in
/// ascending `j`, then the sifting and error draws for `j = 1`.
pub fn run_session(config: &SessionConfig) -> Result<SessionRecord> {
    config.validate()?;
    let mut rng = RandomSource::new(config.seed);
    let class_counts = sample_multinomial(config.n_cycles, &PULSE_CLASS_WEIGHTS, &mut rng)?;
    let mut levels = Vec::with_capacity(5);
    for (j, &sent) in class_counts.iter().enumerate() {
        let mu = j as f64 * config.mu_base;
        let d = expected_detection_probability(&config.channel, mu).value;
        let detected = sample_binomial(sent, d.clamp(0.0, 1.0), &mut rng);
        levels.push(IntensityLevel::new(
            j as u32,
            mu,
            TrialCount::new(sent, detected)?,
        ));
    }
    // sifting and errors for the definite-polarization class
    let c1 = levels[1].trials.successes();
    let sifted = sample_binomial(c1, 0.5, &mut rng);
    let d1 = expected_detection_probability(&config.channel, config.mu_base).value;
    let beta = if d1 > 0.0 {
        (error_click_probability(&config.channel, config.mu_base, config.intrinsic_ber) / d1)
            .clamp(0.0, 1.0)
    } else {
        0.0
    };
    let errors = sample_binomial(sifted, beta, &mut rng);
    levels[1].error_trials = Some(TrialCount::new(sifted, errors)?);
    Ok(SessionRecord {
        levels,
        n_cycles: config.n_cycles,
        mu_base: config.mu_base,
        epsilon: config.epsilon,
        intrinsic_ber: config.intrinsic_ber,
        seed: config.seed,
        channel_desc: channel_to_string(&config.channel),
    })
}

/// Simulate one session while tracking the photon-number decomposition of
/// the j=1 class. Statistically identical to [`run_session`] (a Poisson
/// mixture of per-photon-number binomials is the aggregate binomial), but a
/// different draw sequence, so records differ draw-by-draw for equal seeds.
pub fn run_session_traced(config: &SessionConfig) -> Result<(SessionRecord, SessionTruth)> {
    config.validate()?;
    let mut rng = RandomSource::new(config.seed);
    let class_counts = sample_multinomial(config.n_cycles, &PULSE_CLASS_WEIGHTS, &mut rng)?;
    let mut levels = Vec::with_capacity(5);
    for (j, &sent) in class_counts.iter().enumerate() {
        if j == 1 {
            // placeholder; replaced by the decomposed draw below
            levels.push(IntensityLevel::new(1, config.mu_base, TrialCount::new(sent, 0)?));
            continue;
        }
        let mu = j as f64 * config.mu_base;
        let d = expected_detection_probability(&config.channel, mu).value;
        let detected = sample_binomial(sent, d.clamp(0.0, 1.0), &mut rng);
        levels.push(IntensityLevel::new(
            j as u32,
            mu,
            TrialCount::new(sent, detected)?,
        ));
    }

    let mu = config.mu_base;
    let n1 = class_counts[1];
    // photon-number buckets 0..=n_cut, with the residual Poisson mass lumped
    // into the top bucket (its expected occupancy is far below one pulse)
    let n_cut = match &config.channel {
        ChannelModel::Adversarial { yields } => yields.truncation_order(),
        ChannelModel::Beamsplitter { .. } => {
            let mut n = 2usize;
            let mut cum = poisson_pmf(0, mu) + poisson_pmf(1, mu);
            while 1.0 - cum > 1e-16 && n < 200 {
                cum += poisson_pmf(n as u64, mu);
                n += 1;
            }
            n
        }
    };
    let mut weights: Vec<f64> = (0..n_cut as u64).map(|k| poisson_pmf(k, mu)).collect();
    let head: f64 = weights.iter().sum();
    weights.push((1.0 - head).max(0.0));
    let norm: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= norm;
    }
    let pulses_by_n = sample_multinomial(n1, &weights, &mut rng)?;
    let mut detected_by_n = Vec::with_capacity(pulses_by_n.len());
    for (k, &pulses) in pulses_by_n.iter().enumerate() {
        let y = config.channel.true_yield(k.min(n_cut) as u64)?;
        detected_by_n.push(sample_binomial(pulses, y, &mut rng));
    }
    let c1: u64 = detected_by_n.iter().sum();
    let mut sifted_by_n = Vec::with_capacity(detected_by_n.len());
    for &d in &detected_by_n {
        sifted_by_n.push(sample_binomial(d, 0.5, &mut rng));
    }
    let s1: u64 = sifted_by_n.iter().sum();
    let vacuum_sifted = sifted_by_n[0];
    let errors = sample_binomial(vacuum_sifted, 0.5, &mut rng)
        + sample_binomial(s1 - vacuum_sifted, config.intrinsic_ber, &mut rng);
    levels[1] = IntensityLevel {
        lasers: 1,
        mu,
        trials: TrialCount::new(n1, c1)?,
        error_trials: Some(TrialCount::new(s1, errors)?),
    };

    let truth = SessionTruth {
        true_y1: config.channel.true_yield(1)?,
        single_photon_detections: detected_by_n[1],
        single_photon_sifted: sifted_by_n[1],
    };
    let record = SessionRecord {
        levels,
        n_cycles: config.n_cycles,
        mu_base: config.mu_base,
        epsilon: config.epsilon,
        intrinsic_ber: config.intrinsic_ber,
        seed: config.seed,
        channel_desc: channel_to_string(&config.channel),
    };
    Ok((record, truth))
}

/// Noise-free session: every count replaced by its rounded expectation.
/// Used for asymptotic sweeps where sampling scatter is unwanted.
pub fn expected_session(config: &SessionConfig) -> Result<SessionRecord> {
    config.validate()?;
    let n = config.n_cycles;
    let mut class_counts: Vec<u64> = PULSE_CLASS_WEIGHTS
        .iter()
        .map(|w| (n as f64 * w).round() as u64)
        .collect();
    // keep the class split conserving N exactly; dump rounding residue on
    // the largest class
    let total: u64 = class_counts.iter().sum();
    if total != n {
        let diff = n as i64 - total as i64;
        class_counts[2] = (class_counts[2] as i64 + diff) as u64;
    }
    let mut levels = Vec::with_capacity(5);
    for (j, &sent) in class_counts.iter().enumerate() {
        let mu = j as f64 * config.mu_base;
        let d = expected_detection_probability(&config.channel, mu).value;
        let detected = (sent as f64 * d).round() as u64;
        levels.push(IntensityLevel::new(
            j as u32,
            mu,
            TrialCount::new(sent, detected.min(sent))?,
        ));
    }
    let c1 = levels[1].trials.successes();
    let sifted = (c1 as f64 * 0.5).round() as u64;
    let d1 = expected_detection_probability(&config.channel, config.mu_base).value;
    let beta = if d1 > 0.0 {
        error_click_probability(&config.channel, config.mu_base, config.intrinsic_ber) / d1
    } else {
        0.0
    };
    let errors = (sifted as f64 * beta).round() as u64;
    levels[1].error_trials = Some(TrialCount::new(sifted, errors.min(sifted))?);
    Ok(SessionRecord {
        levels,
        n_cycles: n,
        mu_base: config.mu_base,
        epsilon: config.epsilon,
        intrinsic_ber: config.intrinsic_ber,
        seed: config.seed,
        channel_desc: channel_to_string(&config.channel),
    })
}

/// Photon-number-splitting attack channel: single-photon pulses are blocked
/// (forwarded with probability `eta_eve`, 0 for the textbook attack),
/// multi-photon pulses arrive losslessly, vacuum clicks stay at the dark
/// rate.
pub fn pns_channel(eta_eve: f64, y0: f64, k: usize) -> Result<ChannelModel> {
    let mut y = vec![1.0; k + 1];
    y[0] = y0;
    if k >= 1 {
        y[1] = eta_eve;
    }
    Ok(ChannelModel::adversarial(YieldVector::new(y)?))
}

pub fn channel_to_string(channel: &ChannelModel) -> String {
    match channel {
        ChannelModel::Beamsplitter { eta, y0 } => format!("beamsplitter,eta={eta},y0={y0}"),
        ChannelModel::Adversarial { yields } => {
            let ys: Vec<String> = yields.values().iter().map(|y| format!("{y}")).collect();
            format!("adversarial,{}", ys.join(","))
        }
    }
}

pub fn channel_from_string(s: &str) -> Result<ChannelModel> {
    let mut parts = s.split(',');
    match parts.next() {
        Some("beamsplitter") => {
            let mut eta = None;
            let mut y0 = None;
            for kv in parts {
                match kv.split_once('=') {
                    Some(("eta", v)) => eta = Some(parse_f64(v)?),
                    Some(("y0", v)) => y0 = Some(parse_f64(v)?),
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "unrecognized beamsplitter field {kv}"
                        )))
                    }
                }
            }
            match (eta, y0) {
                (Some(eta), Some(y0)) => ChannelModel::beamsplitter(eta, y0),
                _ => Err(Error::InvalidInput(
                    "beamsplitter channel needs eta= and y0=".into(),
                )),
            }
        }
        Some("adversarial") => {
            let ys: Result<Vec<f64>> = parts.map(parse_f64).collect();
            Ok(ChannelModel::adversarial(YieldVector::new(ys?)?))
        }
        _ => Err(Error::InvalidInput(format!("unrecognized channel: {s}"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("bad number: {s}")))
}

impl SessionRecord {
    /// Text format: a header line of `key=value` fields, then one line per
    /// pulse class `j mu N_j C_j [S_1 E_1]`. Imported experimental counts
    /// use the same format with `channel=unknown`.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "session n_cycles={} mu_base={} epsilon={} intrinsic_ber={} seed={} channel={}",
            self.n_cycles, self.mu_base, self.epsilon, self.intrinsic_ber, self.seed,
            self.channel_desc
        )?;
        for level in &self.levels {
            match level.error_trials {
                Some(errs) => writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    level.lasers,
                    level.mu,
                    level.trials.trials(),
                    level.trials.successes(),
                    errs.trials(),
                    errs.successes()
                )?,
                None => writeln!(
                    w,
                    "{} {} {} {}",
                    level.lasers,
                    level.mu,
                    level.trials.trials(),
                    level.trials.successes()
                )?,
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("record text is UTF-8")
    }

    pub fn read_text(r: impl BufRead) -> Result<SessionRecord> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty record".into(),
        })?;
        let header = header?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("session") {
            return Err(Error::Parse {
                line: 1,
                message: "header must start with 'session'".into(),
            });
        }
        let mut n_cycles = None;
        let mut mu_base = None;
        let mut epsilon = None;
        let mut intrinsic_ber = 0.0;
        let mut seed = 0u64;
        let mut channel_desc = String::from("unknown");
        for tok in tokens {
            let Some((key, value)) = tok.split_once('=') else {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected key=value, got {tok}"),
                });
            };
            let bad = |m: String| Error::Parse { line: 1, message: m };
            match key {
                "n_cycles" => {
                    n_cycles = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?)
                }
                "mu_base" => mu_base = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "epsilon" => epsilon = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "intrinsic_ber" => {
                    intrinsic_ber = value.parse::<f64>().map_err(|e| bad(e.to_string()))?
                }
                "seed" => seed = value.parse::<u64>().map_err(|e| bad(e.to_string()))?,
                "channel" => channel_desc = value.to_string(),
                other => {
                    return Err(bad(format!("unrecognized header field {other}")));
                }
            }
        }
        let (Some(n_cycles), Some(mu_base), Some(epsilon)) = (n_cycles, mu_base, epsilon) else {
            return Err(Error::Parse {
                line: 1,
                message: "header needs n_cycles=, mu_base= and epsilon=".into(),
            });
        };

        let mut levels = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 && fields.len() != 6 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 4 or 6 fields, got {}", fields.len()),
                });
            }
            let perr = |m: String| Error::Parse { line: lineno, message: m };
            let lasers: u32 = fields[0].parse().map_err(|_| perr("bad j".into()))?;
            let mu: f64 = fields[1].parse().map_err(|_| perr("bad mu".into()))?;
            let sent: u64 = fields[2].parse().map_err(|_| perr("bad N_j".into()))?;
            let detected: u64 = fields[3].parse().map_err(|_| perr("bad C_j".into()))?;
            let mut level = IntensityLevel::new(
                lasers,
                mu,
                TrialCount::new(sent, detected).map_err(|e| perr(e.to_string()))?,
            );
            if fields.len() == 6 {
                let sifted: u64 = fields[4].parse().map_err(|_| perr("bad S_1".into()))?;
                let errors: u64 = fields[5].parse().map_err(|_| perr("bad E_1".into()))?;
                level.error_trials =
                    Some(TrialCount::new(sifted, errors).map_err(|e| perr(e.to_string()))?);
            }
            levels.push(level);
        }
        if levels.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "record has no intensity levels".into(),
            });
        }
        let total: u64 = levels.iter().map(|l| l.trials.trials()).sum();
        if total != n_cycles {
            return Err(Error::Parse {
                line: 2,
                message: format!("level counts sum to {total}, header says {n_cycles}"),
            });
        }
        Ok(SessionRecord {
            levels,
            n_cycles,
            mu_base,
            epsilon,
            intrinsic_ber,
            seed,
            channel_desc,
        })
    }
}
