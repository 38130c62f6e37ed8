//! `decoy`: simulate four-laser decoy-state QKD sessions, analyze recorded
//! counts, sweep the mean photon number, and compare rates against the
//! conventional small-mu defence.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 analysis abort
//! (possible eavesdropping), 4 numerical failure.

use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decoy_cli::sweep::{
    compare_to_csv, run_compare, run_sweep, ChannelSpec, CompareSpec, NRule, SweepSpec,
};
use decoy_cli::{parse_count, parse_grid, parse_list};
use decoy_core::analysis::{analyze_session, AnalysisConfig, SMode, YkUpperMode};
use decoy_core::error::Error;
use decoy_core::photonics::{ChannelModel, YieldVector};
use decoy_core::polytope::build_constraints_with_mode;
use decoy_core::sim::{pns_channel, run_session, SessionConfig, SessionRecord};
use decoy_core::stats::CiMode;

#[derive(Parser)]
#[command(name = "decoy", version, about = "Finite-statistics decoy-state QKD analysis")]
struct Cli {
    /// Thread limit for sweep points (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one session and write its record.
    Simulate(SimulateArgs),
    /// Analyze a session record file.
    Analyze(AnalyzeArgs),
    /// Sweep the mean photon number over simulated sessions.
    Sweep(SweepArgs),
    /// Compare the decoy-state rate against the conventional defence.
    CompareRates(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SModeArg {
    Sifted,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum YkUpperArg {
    Lp,
    One,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiModeArg {
    Paper,
    Tail,
}

impl From<SModeArg> for SMode {
    fn from(v: SModeArg) -> SMode {
        match v {
            SModeArg::Sifted => SMode::Sifted,
            SModeArg::All => SMode::All,
        }
    }
}

impl From<YkUpperArg> for YkUpperMode {
    fn from(v: YkUpperArg) -> YkUpperMode {
        match v {
            YkUpperArg::Lp => YkUpperMode::Lp,
            YkUpperArg::One => YkUpperMode::One,
        }
    }
}

impl From<CiModeArg> for CiMode {
    fn from(v: CiModeArg) -> CiMode {
        match v {
            CiModeArg::Paper => CiMode::Paper,
            CiModeArg::Tail => CiMode::Tail,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Clock cycles, e.g. 1e7.
    #[arg(long)]
    n: Option<String>,
    /// Session size rule N = X / eta.
    #[arg(long, conflicts_with = "n")]
    n_scaled: Option<f64>,
    /// Per-laser mean photon number.
    #[arg(long)]
    mu: f64,
    /// Channel transmission per photon.
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Dark plus background count rate per clock cycle.
    #[arg(long, default_value_t = 3e-6)]
    y0: f64,
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    /// beamsplitter, pns, or custom:FILE (whitespace-separated yields).
    #[arg(long, default_value = "beamsplitter")]
    channel: String,
    /// Polarization error probability for detected signal photons.
    #[arg(long, default_value_t = 0.0)]
    intrinsic_ber: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truncation order used to materialize adversarial channels.
    #[arg(long, default_value_t = 11)]
    k: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Session record file.
    record: PathBuf,
    /// Override the epsilon echoed in the record.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 11)]
    k: usize,
    #[arg(long, value_enum, default_value_t = SModeArg::Sifted)]
    s_mode: SModeArg,
    #[arg(long, value_enum, default_value_t = YkUpperArg::Lp)]
    yk_upper: YkUpperArg,
    #[arg(long, value_enum, default_value_t = CiModeArg::Paper)]
    ci_mode: CiModeArg,
    /// Also write the constraint polytope in halfspace text form.
    #[arg(long)]
    dump_polytope: Option<PathBuf>,
    /// Emit the report as one JSON object instead of key=value lines.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Mean-photon-number grid lo:hi:step.
    #[arg(long)]
    mu_grid: String,
    #[arg(long)]
    eta: f64,
    /// Clock cycles, e.g. 1e9.
    #[arg(long)]
    n: Option<String>,
    /// Session size rule N = X / eta.
    #[arg(long, conflicts_with = "n")]
    n_scaled: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    #[arg(long, default_value_t = 3e-6)]
    y0: f64,
    #[arg(long, default_value_t = 0.0)]
    intrinsic_ber: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sessions per grid point; the summary reports their median.
    #[arg(long, default_value_t = 1)]
    seeds: u32,
    #[arg(long, default_value_t = 11)]
    k: usize,
    /// beamsplitter, pns, or custom:FILE.
    #[arg(long, default_value = "beamsplitter")]
    channel: String,
    /// Noise-free mode: replace sampled counts by rounded expectations.
    #[arg(long)]
    exact_counts: bool,
    #[arg(long, value_enum, default_value_t = SModeArg::Sifted)]
    s_mode: SModeArg,
    #[arg(long, value_enum, default_value_t = YkUpperArg::Lp)]
    yk_upper: YkUpperArg,
    #[arg(long, value_enum, default_value_t = CiModeArg::Paper)]
    ci_mode: CiModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated transmission values.
    #[arg(long, default_value = "1e-4,1e-3,1e-2,1e-1")]
    eta_grid: String,
    /// Clock cycles per session.
    #[arg(long, default_value = "1e9")]
    n: String,
    #[arg(long, default_value = "0.05:1.5:0.05")]
    mu_grid: String,
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    #[arg(long, default_value_t = 3e-6)]
    y0: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    seeds: u32,
    #[arg(long, default_value_t = 11)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // a failed build means a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::CompareRates(args) => cmd_compare(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::VacuousTruncation { .. } | Error::Numerical(_) => 4,
        Error::Infeasible => 3,
        _ => 2,
    }
}

fn parse_yield_file(path: &str) -> Result<YieldVector, Error> {
    let text = fs::read_to_string(path)?;
    let yields: Result<Vec<f64>, Error> = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad yield value: {tok}")))
        })
        .collect();
    YieldVector::new(yields?)
}

fn parse_channel_flag(flag: &str, eta: f64, y0: f64, k: usize) -> Result<ChannelModel, Error> {
    match channel_spec_for_sweep(flag)? {
        ChannelSpec::Beamsplitter => ChannelModel::beamsplitter(eta, y0),
        ChannelSpec::Pns { eta_eve } => pns_channel(eta_eve, y0, k),
        ChannelSpec::Custom(yields) => Ok(ChannelModel::adversarial(yields)),
    }
}

fn channel_spec_for_sweep(flag: &str) -> Result<ChannelSpec, Error> {
    if flag == "beamsplitter" {
        return Ok(ChannelSpec::Beamsplitter);
    }
    if flag == "pns" {
        return Ok(ChannelSpec::Pns { eta_eve: 0.0 });
    }
    if let Some(path) = flag.strip_prefix("custom:") {
        return Ok(ChannelSpec::Custom(parse_yield_file(path)?));
    }
    Err(Error::InvalidInput(format!(
        "channel must be beamsplitter, pns, or custom:FILE, got {flag}"
    )))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let n_cycles = match (&args.n, args.n_scaled) {
        (Some(n), None) => parse_count(n)?,
        (None, Some(x)) => NRule::Scaled(x).n_cycles(args.eta)?,
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --n or --n-scaled is required".into(),
            ))
        }
    };
    let channel = parse_channel_flag(&args.channel, args.eta, args.y0, args.k)?;
    let config = SessionConfig {
        n_cycles,
        mu_base: args.mu,
        epsilon: args.epsilon,
        channel,
        intrinsic_ber: args.intrinsic_ber,
        seed: args.seed,
    };
    let record = run_session(&config)?;
    emit(&args.out, &record.to_text())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode, Error> {
    let file = fs::File::open(&args.record)?;
    let record = SessionRecord::read_text(BufReader::new(file))?;
    let config = AnalysisConfig {
        k: args.k,
        epsilon: args.epsilon,
        s_mode: args.s_mode.into(),
        yk_upper: args.yk_upper.into(),
        ci_mode: args.ci_mode.into(),
        mu_bounds: None,
    };
    if let Some(path) = &args.dump_polytope {
        let epsilon = config.epsilon.unwrap_or(record.epsilon);
        let levels: Vec<_> = record
            .levels
            .iter()
            .filter(|l| l.trials.trials() >= 1)
            .copied()
            .collect();
        let cs = build_constraints_with_mode(&levels, config.k, epsilon, config.ci_mode)?;
        let mut buf = Vec::new();
        cs.write_text(&mut buf)?;
        fs::write(path, buf)?;
    }
    let report = analyze_session(&record, &config)?;
    let content = if args.json {
        format!("{}\n", report.to_json_line())
    } else {
        report.to_key_value()
    };
    emit(&args.out, &content)?;
    if report.abort {
        eprintln!("analysis abort: constraint region is empty (possible eavesdropping)");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let mu_grid = parse_grid(&args.mu_grid)?;
    let n_rule = match (&args.n, args.n_scaled) {
        (Some(n), None) => NRule::Absolute(parse_count(n)?),
        (None, Some(x)) => NRule::Scaled(x),
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --n or --n-scaled is required".into(),
            ))
        }
    };
    let spec = SweepSpec {
        mu_grid,
        eta: args.eta,
        n_rule,
        epsilon: args.epsilon,
        y0: args.y0,
        intrinsic_ber: args.intrinsic_ber,
        base_seed: args.seed,
        seeds: args.seeds,
        k: args.k,
        exact_counts: args.exact_counts,
        channel: channel_spec_for_sweep(&args.channel)?,
        s_mode: args.s_mode.into(),
        yk_upper: args.yk_upper.into(),
        ci_mode: args.ci_mode.into(),
    };
    let outcome = run_sweep(&spec)?;
    emit(&args.out, &outcome.to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode, Error> {
    let spec = CompareSpec {
        eta_grid: parse_list(&args.eta_grid)?,
        n_cycles: parse_count(&args.n)?,
        mu_grid: parse_grid(&args.mu_grid)?,
        epsilon: args.epsilon,
        y0: args.y0,
        base_seed: args.seed,
        seeds: args.seeds,
        k: args.k,
    };
    let rows = run_compare(&spec)?;
    emit(&args.out, &compare_to_csv(&rows))?;
    Ok(ExitCode::SUCCESS)
}
