//! `cgw`: reproducible verification runs for censored branching processes
//! and the branching-selection particle system.
//!
//! Exit codes: 0 success, 1 internal/system failure, 2 invalid input or a
//! violated model assumption. Every command is a pure function of its flags
//! (seed included): identical invocations produce identical bytes, at any
//! `--workers` setting.

mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use censored_gw::{
    batch_summaries, default_horizon, ks_statistic, q_alpha_closed_form, simulate_speed,
    simulate_speed_traced, speed_bracket, BatchEstimate, CensoredChain, ChainReport,
    OffspringDistribution, PairedOffspring,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use output::{fmt9, fmt9_opt, json9_opt, json_array};

#[derive(Parser)]
#[command(
    name = "cgw",
    version,
    about = "Censored branching processes: exact chain oracles, Monte Carlo, and selection-front verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the extinction probability q (and the closed form for --binomial2)
    Q(QArgs),
    /// Exact chain quantities (E[U], E[V], q_N, limit ratios, KS distance) per level
    Exact(ExactArgs),
    /// Monte Carlo batches of the censored process, with a KS table against Exp(1)
    SimCensored(SimCensoredArgs),
    /// One long run of the N-particle selection system with a speed estimate
    SimSelection(SimSelectionArgs),
    /// Multi-level trend tables for the survival-time and front-speed limits
    Verify(VerifyArgs),
}

/// Exactly one offspring source.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Advance probability α ∈ (0,1): offspring law Binomial(2, α)
    #[arg(long, value_name = "ALPHA")]
    binomial2: Option<f64>,
    /// File with one `value probability` pair per line (# comments allowed)
    #[arg(long, value_name = "PATH")]
    pmf: Option<PathBuf>,
}

/// How to pair each offspring draw x with an in-place count x′ for the
/// particle system.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PairKind {
    /// x′ = 1 when x = 0, else 0: stay put only on a childless draw
    MinimalStay,
    /// x′ = 2 − x: two children, each advancing independently
    Bernoulli,
}

#[derive(Args)]
struct QArgs {
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Censor levels, comma-separated (each ≥ 2)
    #[arg(long, value_delimiter = ',', required = true, value_name = "N[,N...]")]
    n: Vec<u64>,
    /// Also compute the exact KS distance of U_N·q^N to Exp(1)
    #[arg(long)]
    ks: bool,
    /// Tail mass at which the exact survival-time law is truncated
    #[arg(long, default_value_t = 1e-10)]
    tail_eps: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Also write the output to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimCensoredArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Censor levels, comma-separated (each ≥ 2)
    #[arg(long, value_delimiter = ',', required = true, value_name = "N[,N...]")]
    n: Vec<u64>,
    /// Replicas per level
    #[arg(long, required = true)]
    runs: u64,
    /// Per-replica step limit (default: 100·(1/q)^N, batch-budget capped)
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores); the output does not depend on it
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also write the output to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimSelectionArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Pairing of offspring draws (default: bernoulli for --binomial2,
    /// minimal-stay for --pmf)
    #[arg(long, value_enum)]
    pair: Option<PairKind>,
    /// Particle count
    #[arg(long, required = true)]
    n: u64,
    /// Generations to simulate (≥ 10)
    #[arg(long, required = true)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-generation trajectory CSV (k,max_y,frontier_count) here
    #[arg(long, value_name = "PATH")]
    trajectory: Option<PathBuf>,
    /// Also write the speed report to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(subcommand)]
    which: VerifyCmd,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Survival-time limits: E[U]·q^N and q_N/q^N trends plus KS distances
    Th1(Th1Args),
    /// Front-speed limit: (1 − v_hat)/q^N trend against the exact bracket
    Th2(Th2Args),
}

#[derive(Args)]
struct Th1Args {
    #[command(flatten)]
    source: SourceArgs,
    /// Censor levels, comma-separated (each ≥ 2)
    #[arg(long = "n-list", value_delimiter = ',', required = true, value_name = "N[,N...]")]
    n_list: Vec<u64>,
    /// Tail mass for the exact KS sweep
    #[arg(long, default_value_t = 1e-10)]
    tail_eps: f64,
    /// Leave the d_n column empty (the exact KS sweep is costly at deep levels)
    #[arg(long)]
    skip_ks: bool,
    /// Also write the output to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Th2Args {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum)]
    pair: Option<PairKind>,
    /// Particle counts, comma-separated (each ≥ 2)
    #[arg(long = "n-list", value_delimiter = ',', required = true, value_name = "N[,N...]")]
    n_list: Vec<u64>,
    /// Generations per level (≥ 10)
    #[arg(long, required = true)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the output to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

enum AppError {
    Domain(censored_gw::Error),
    Io(std::io::Error),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            // Numerical breakdown and system failures are internal errors;
            // everything else is the caller's input or model assumption.
            AppError::Domain(censored_gw::Error::SingularSystem) => 1,
            AppError::Domain(_) => 2,
            AppError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Domain(e) => write!(f, "{e}"),
            AppError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<censored_gw::Error> for AppError {
    fn from(e: censored_gw::Error) -> Self {
        AppError::Domain(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e)
    }
}

struct Source {
    offspring: OffspringDistribution,
    alpha: Option<f64>,
}

impl SourceArgs {
    fn load(&self) -> Result<Source, AppError> {
        if let Some(alpha) = self.binomial2 {
            let pair = PairedOffspring::binomial2(alpha)?;
            let offspring = pair.marginal_x()?.clone();
            Ok(Source {
                offspring,
                alpha: Some(alpha),
            })
        } else {
            let path = self.pmf.as_ref().expect("clap requires one source");
            let text = fs::read_to_string(path).map_err(|e| {
                censored_gw::Error::PmfParse {
                    line: 0,
                    msg: format!("cannot read {}: {e}", path.display()),
                }
            })?;
            Ok(Source {
                offspring: OffspringDistribution::from_pmf_text(&text)?,
                alpha: None,
            })
        }
    }

    fn load_with_pair(&self, kind: Option<PairKind>) -> Result<(Source, PairedOffspring), AppError> {
        let source = self.load()?;
        let kind = kind.unwrap_or(if source.alpha.is_some() {
            PairKind::Bernoulli
        } else {
            PairKind::MinimalStay
        });
        let pair = match kind {
            PairKind::MinimalStay => PairedOffspring::minimal_stay(&source.offspring),
            PairKind::Bernoulli => {
                if source.offspring.max_value() > 2 {
                    return Err(censored_gw::Error::out_of_range(
                        "the bernoulli pairing needs offspring support within {0,1,2}",
                    )
                    .into());
                }
                let pairs: Vec<((u64, u64), f64)> = source
                    .offspring
                    .atoms()
                    .iter()
                    .map(|&(v, p)| ((v, 2 - v), p))
                    .collect();
                PairedOffspring::from_joint(&pairs)?
            }
        };
        Ok((source, pair))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Q(a) => {
            let text = cmd_q(&a)?;
            emit(&text, &None)
        }
        Command::Exact(a) => {
            let text = cmd_exact(&a)?;
            emit(&text, &a.out)
        }
        Command::SimCensored(a) => {
            let text = cmd_sim_censored(&a)?;
            emit(&text, &a.out)
        }
        Command::SimSelection(a) => {
            let text = cmd_sim_selection(&a)?;
            emit(&text, &a.out)
        }
        Command::Verify(a) => match a.which {
            VerifyCmd::Th1(a) => {
                let text = cmd_verify_th1(&a)?;
                emit(&text, &a.out)
            }
            VerifyCmd::Th2(a) => {
                let text = cmd_verify_th2(&a)?;
                emit(&text, &a.out)
            }
        },
    }
}

/// Prints the rendered report and mirrors it to `--out` when given.
fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), AppError> {
    print!("{text}");
    if let Some(path) = out {
        fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_q(a: &QArgs) -> Result<String, AppError> {
    let source = a.source.load()?;
    let q = source.offspring.extinction_probability()?;
    let mut s = format!("q {}\n", fmt9(q));
    if let Some(alpha) = source.alpha {
        let closed = q_alpha_closed_form(alpha)?;
        s.push_str(&format!("q_closed_form {}\n", fmt9(closed)));
        let flag = if (q - closed).abs() < 1e-9 { "ok" } else { "MISMATCH" };
        s.push_str(&format!("agreement {flag}\n"));
    }
    Ok(s)
}

fn cmd_exact(a: &ExactArgs) -> Result<String, AppError> {
    let source = a.source.load()?;
    let mut reports = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let chain = CensoredChain::new(source.offspring.clone(), n)?;
        reports.push(ChainReport::compute(&chain, a.ks.then_some(a.tail_eps))?);
    }
    Ok(match a.format {
        Format::Json => chain_reports_json(&reports),
        Format::Csv => chain_reports_csv(&reports),
    })
}

fn chain_reports_json(reports: &[ChainReport]) -> String {
    let mut s = String::from("[\n");
    for (i, r) in reports.iter().enumerate() {
        let ks_d = r.ks.as_ref().map(|k| k.statistic);
        let ks_u = r.ks.as_ref().map(|k| k.truncation);
        s.push_str(&format!(
            concat!(
                "  {{\n",
                "    \"n\": {},\n",
                "    \"q\": {},\n",
                "    \"q_n\": {},\n",
                "    \"expected_u\": {},\n",
                "    \"expected_v\": {},\n",
                "    \"ratio_mean\": {},\n",
                "    \"ratio_qn\": {},\n",
                "    \"ks_to_exp\": {},\n",
                "    \"ks_uncertainty\": {}\n",
                "  }}{}\n"
            ),
            r.n,
            fmt9(r.q),
            fmt9(r.q_n),
            json_array(&r.expected_u),
            fmt9(r.expected_v),
            fmt9(r.ratio_mean),
            fmt9(r.ratio_qn),
            json9_opt(ks_d),
            json9_opt(ks_u),
            if i + 1 < reports.len() { "," } else { "" }
        ));
    }
    s.push_str("]\n");
    s
}

fn chain_reports_csv(reports: &[ChainReport]) -> String {
    let mut s =
        String::from("n,q,q_n,expected_u,expected_v,ratio_mean,ratio_qn,ks_to_exp,ks_uncertainty\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.n,
            fmt9(r.q),
            fmt9(r.q_n),
            fmt9(r.expected_u_top()),
            fmt9(r.expected_v),
            fmt9(r.ratio_mean),
            fmt9(r.ratio_qn),
            fmt9_opt(r.ks.as_ref().map(|k| k.statistic)),
            fmt9_opt(r.ks.as_ref().map(|k| k.truncation)),
        ));
    }
    s
}

fn cmd_sim_censored(a: &SimCensoredArgs) -> Result<String, AppError> {
    let source = a.source.load()?;
    // The KS table needs the extinction probability; without a supercritical
    // law only the batch table is printed.
    let q = source.offspring.extinction_probability().ok();
    let mut batch = String::from("n,runs,mean_u,ci_u,mean_v,ci_v,mean_t,ci_t,p_hat\n");
    let mut ks = String::from("n,ks_d,ks_p\n");
    for &n in &a.n {
        let horizon = a
            .horizon
            .unwrap_or_else(|| default_horizon(&source.offspring, n, a.runs));
        let summaries =
            batch_summaries(&source.offspring, n, a.runs, horizon, a.seed, a.workers)?;
        let est = BatchEstimate::from_summaries(&summaries)?;
        batch.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            n,
            est.runs,
            fmt9(est.mean_u),
            fmt9(est.ci_u),
            fmt9(est.mean_v),
            fmt9(est.ci_v),
            fmt9(est.mean_t),
            fmt9(est.ci_t),
            fmt9(est.t_geometric_p_hat),
        ));
        if let Some(q) = q {
            let scale = q.powi(n as i32);
            let sample: Vec<f64> = summaries
                .iter()
                .filter_map(|s| s.u)
                .map(|u| u as f64 * scale)
                .collect();
            let gof = ks_statistic(&sample, |t| 1.0 - (-t).exp())?;
            ks.push_str(&format!("{},{},{}\n", n, fmt9(gof.statistic), fmt9(gof.p_value)));
        }
    }
    Ok(if q.is_some() {
        format!("{batch}\n{ks}")
    } else {
        batch
    })
}

fn cmd_sim_selection(a: &SimSelectionArgs) -> Result<String, AppError> {
    let (source, law) = a.source.load_with_pair(a.pair)?;
    let est = match &a.trajectory {
        Some(path) => {
            let mut rows = String::from("k,max_y,frontier_count\n");
            let est = simulate_speed_traced(&law, a.n, a.steps, a.seed, &mut |k, max_y, count| {
                rows.push_str(&format!("{k},{max_y},{count}\n"));
            })?;
            fs::write(path, rows)?;
            est
        }
        None => simulate_speed(&law, a.n, a.steps, a.seed)?,
    };
    // The exact bracket exists only for a supercritical marginal at n ≥ 2;
    // the simulation itself is meaningful regardless.
    let est = match speed_bracket(&source.offspring, a.n) {
        Ok((lo, hi)) => est.with_bracket(lo, hi),
        Err(_) => est,
    };
    Ok(format!(
        concat!(
            "{{\n",
            "  \"n\": {},\n",
            "  \"k\": {},\n",
            "  \"v_hat\": {},\n",
            "  \"v_err\": {},\n",
            "  \"bracket_low\": {},\n",
            "  \"bracket_high\": {}\n",
            "}}\n"
        ),
        a.n,
        est.steps,
        fmt9(est.v_hat),
        fmt9(est.v_err),
        json9_opt(est.bracket_low),
        json9_opt(est.bracket_high),
    ))
}

fn cmd_verify_th1(a: &Th1Args) -> Result<String, AppError> {
    let source = a.source.load()?;
    let q = source.offspring.extinction_probability()?;
    let mut s = String::from("n,q_pow_n,ratio_mean,ratio_qn,d_n\n");
    for &n in &a.n_list {
        let chain = CensoredChain::new(source.offspring.clone(), n)?;
        let report = ChainReport::compute(&chain, (!a.skip_ks).then_some(a.tail_eps))?;
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            n,
            fmt9(q.powi(n as i32)),
            fmt9(report.ratio_mean),
            fmt9(report.ratio_qn),
            fmt9_opt(report.ks.as_ref().map(|k| k.statistic)),
        ));
    }
    Ok(s)
}

fn cmd_verify_th2(a: &Th2Args) -> Result<String, AppError> {
    let (source, law) = a.source.load_with_pair(a.pair)?;
    let q = source.offspring.extinction_probability()?;
    let mut s = String::from("n,one_minus_v,ratio,bracket_low,bracket_high\n");
    for &n in &a.n_list {
        let est = simulate_speed(&law, n, a.steps, a.seed)?;
        let (lo, hi) = speed_bracket(&source.offspring, n)?;
        let one_minus = 1.0 - est.v_hat;
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            n,
            fmt9(one_minus),
            fmt9(one_minus / q.powi(n as i32)),
            fmt9(lo),
            fmt9(hi),
        ));
    }
    Ok(s)
}
