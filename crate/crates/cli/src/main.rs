//! `neurosamp` command-line front end.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use neurosamp::encoder::{self, Window};
use neurosamp::experiment::{self, Method, PipelineConfig, SweepConfig, ThresholdPolicy};
use neurosamp::io::{self, Versioned};
use neurosamp::kernels::{KernelFamily, KernelSpec};
use neurosamp::recon_lp::{self, LpParams};
use neurosamp::recon_pr;
use neurosamp::sigmodel::{random_signal, SiSignal};
use neurosamp::Error;

const SEED_ENV: &str = "NEUROSAMP_SEED";

#[derive(Parser)]
#[command(name = "neurosamp", version, about = "Neuromorphic sampling and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a signal file from a preset or seeded Gaussian coefficients.
    GenSignal(GenSignalArgs),
    /// Encode a signal into an event stream.
    Encode(EncodeArgs),
    /// Perfect reconstruction by alternating projections.
    ReconstructPr(ReconstructPrArgs),
    /// Approximate reconstruction by L_p minimisation.
    ReconstructLp(ReconstructLpArgs),
    /// SRER and maximum overshoot of a reconstruction.
    Metrics(MetricsArgs),
    /// Encode, reconstruct and score in one run.
    Pipeline(PipelineArgs),
    /// Mean SRER and overshoot over random signals for a list of p.
    SweepP(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PaperSinc,
}

#[derive(Args)]
struct SignalSource {
    /// Read the signal from a JSON file.
    #[arg(long, conflicts_with_all = ["preset", "kernel"])]
    signal: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "kernel")]
    preset: Option<Preset>,
    /// Kernel as `bspline:<n>:<h>` or `sinc:<h>`, with `--K` random coefficients.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long = "K", requires = "kernel")]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t_start: f64,
}

impl SignalSource {
    fn load(&self) -> Result<SiSignal, Error> {
        if let Some(path) = &self.signal {
            return io::read_signal(path);
        }
        if let Some(Preset::PaperSinc) = self.preset {
            return Ok(SiSignal::paper_sinc());
        }
        let Some(kernel) = &self.kernel else {
            return Err(Error::InvalidParameter("give one of --signal, --preset or --kernel".into()));
        };
        let kernel: KernelSpec = kernel.parse()?;
        let k = self.k.ok_or_else(|| Error::InvalidParameter("--K is required with --kernel".into()))?;
        if k == 0 {
            return Err(Error::EmptyCoefficients);
        }
        let sig = random_signal(kernel, k, seed(self.seed)?)?;
        SiSignal::new(kernel, sig.coeffs().to_vec(), self.t_start)
    }
}

#[derive(Args)]
struct ThresholdArgs {
    /// Absolute threshold C.
    #[arg(long = "C", group = "threshold")]
    c: Option<f64>,
    /// C as a fraction of the signal's dynamic range over the encode window.
    #[arg(long = "C-frac", group = "threshold")]
    c_frac: Option<f64>,
    /// C as a fraction of the critical threshold for perfect reconstruction.
    #[arg(long = "C-critical", group = "threshold")]
    c_critical: Option<f64>,
}

impl ThresholdArgs {
    fn policy(&self) -> Result<ThresholdPolicy, Error> {
        match (self.c, self.c_frac, self.c_critical) {
            (Some(c), None, None) => Ok(ThresholdPolicy::Absolute(c)),
            (None, Some(f), None) => Ok(ThresholdPolicy::RangeFraction(f)),
            (None, None, Some(f)) => Ok(ThresholdPolicy::CriticalFraction(f)),
            _ => Err(Error::InvalidParameter("give exactly one of --C, --C-frac, --C-critical".into())),
        }
    }
}

#[derive(Args)]
struct GenSignalArgs {
    #[command(flatten)]
    source: SignalSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    signal: PathBuf,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Encode window `a,b`; defaults to the support (sinc: nominal span plus guard cells).
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<Window>,
    /// Anchor time; defaults to the window start.
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long, default_value_t = experiment::DEFAULT_SINC_GUARD)]
    guard: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructPrArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    kernel: String,
    #[arg(long = "K")]
    k: usize,
    /// Number of sweeps after the first estimate.
    #[arg(long, conflicts_with = "closed_form")]
    iters: Option<usize>,
    #[arg(long)]
    closed_form: bool,
    /// Position of the first basis function; defaults to the anchor time.
    #[arg(long, allow_hyphen_values = true)]
    origin: Option<f64>,
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<Window>,
    #[arg(long, default_value_t = experiment::DEFAULT_SINC_GUARD)]
    guard: usize,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration `iter,l2_error,ratio` rows; needs `--truth`.
    #[arg(long, requires = "truth")]
    trace: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct LpArgs {
    #[arg(long, default_value_t = recon_lp::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = recon_lp::DEFAULT_RHO)]
    rho: f64,
    #[arg(long, default_value_t = recon_lp::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = recon_lp::DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Args)]
struct ReconstructLpArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    degree: u32,
    #[arg(long)]
    h: f64,
    #[arg(long = "K")]
    k: usize,
    #[arg(long)]
    p: f64,
    #[command(flatten)]
    lp: LpArgs,
    #[arg(long, allow_hyphen_values = true)]
    origin: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    recon: PathBuf,
    /// Overshoot grid step; defaults to h/256.
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pr,
    Lp,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    source: SignalSource,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[arg(long, value_enum, default_value = "pr")]
    method: MethodArg,
    /// PR sweeps; closed form when absent.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[command(flatten)]
    lp: LpArgs,
    #[arg(long, default_value_t = experiment::DEFAULT_SINC_GUARD)]
    guard: usize,
    /// Leave wall-clock time out of the report so it is byte-stable.
    #[arg(long)]
    omit_runtime: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the reconstructed signal.
    #[arg(long)]
    recon_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "p", value_delimiter = ',', default_value = "0.4,0.6,0.8,1,1.2")]
    ps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    degrees: Vec<u32>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0625)]
    h: f64,
    #[arg(long, default_value_t = 1.0)]
    span: f64,
    #[arg(long = "C-frac", default_value_t = 0.15)]
    c_frac: f64,
    #[command(flatten)]
    lp: LpArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trials_out: Option<PathBuf>,
    /// Fail with exit code 3 unless the smallest p beats the largest on both
    /// mean SRER and mean overshoot for every degree.
    #[arg(long)]
    assert_trend: bool,
}

fn parse_window(s: &str) -> Result<Window, String> {
    let (a, b) = s.split_once(',').ok_or("expected `start,end`")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad window end {b:?}"))?;
    Window::new(a, b).map_err(|e| e.to_string())
}

fn seed(configured: u64) -> Result<u64, Error> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Parse(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(configured),
    }
}

enum Failure {
    Lib(Error),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 3,
            Failure::Lib(e) => match e {
                Error::Io(_) => 4,
                Error::Json(j) if j.is_io() => 4,
                Error::IllConditioned { .. } | Error::Degenerate(_) => 3,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Numerical(m) => m.clone(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSignal(a) => gen_signal(a),
        Command::Encode(a) => encode(a),
        Command::ReconstructPr(a) => reconstruct_pr(a),
        Command::ReconstructLp(a) => reconstruct_lp(a),
        Command::Metrics(a) => metrics(a),
        Command::Pipeline(a) => pipeline(a),
        Command::SweepP(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn gen_signal(a: GenSignalArgs) -> Outcome {
    let sig = a.source.load()?;
    io::write_signal(&a.out, &sig)?;
    Ok(())
}

fn default_window(kernel: &KernelSpec, k: usize, origin: f64, guard: usize) -> Window {
    let w = Window::for_kernel(kernel, k, origin);
    match kernel.family() {
        KernelFamily::BSpline { .. } => w,
        KernelFamily::Sinc => {
            let pad = guard as f64 * kernel.h();
            Window { start: w.start - pad, end: w.end + pad }
        }
    }
}

fn encode(a: EncodeArgs) -> Outcome {
    let sig = io::read_signal(&a.signal)?;
    let window = a.window.unwrap_or_else(|| experiment::encode_window(&sig, a.guard));
    let c = a.threshold.policy()?.resolve(&sig, window)?;
    let es = encoder::encode(&sig, c, window, a.t0.unwrap_or(window.start))?;
    io::write_events(&a.out, &es)?;
    println!("{} events, C = {c}", es.len());
    Ok(())
}

fn reconstruct_pr(a: ReconstructPrArgs) -> Outcome {
    let es = io::read_events(&a.events)?;
    let kernel: KernelSpec = a.kernel.parse()?;
    let origin = a.origin.unwrap_or(es.t0());
    let window = match a.window {
        Some(w) => w,
        None => {
            let w = default_window(&kernel, a.k, origin, a.guard);
            let last = es.events().last().map_or(es.t0(), |e| e.t);
            Window::new(w.start.min(es.t0()), w.end.max(last))?
        }
    };
    let sys = recon_pr::build_pr_system_at(&es, &kernel, a.k, origin, window)?;
    let truth = a.truth.as_deref().map(io::read_signal).transpose()?;
    let coeffs = match a.iters {
        Some(n) if !a.closed_form => {
            let res = recon_pr::iterate_pr(&sys, n, truth.as_ref())?;
            if let Some(path) = &a.trace {
                io::write_csv(path, &experiment::trace_rows(&res))?;
            }
            res.coeffs
        }
        _ => {
            let cf = recon_pr::solve_pr_closed_form(&sys)?;
            if let (Some(path), Some(t)) = (&a.trace, &truth) {
                // a closed-form solve has no iterates; trace the fixed point only
                let res = recon_pr::iterate_pr(&sys, 0, Some(t))?;
                io::write_csv(path, &experiment::trace_rows(&res))?;
            }
            eprintln!("residual ‖Hc − y‖∞ = {:e}", cf.residual);
            cf.coeffs
        }
    };
    io::write_signal(&a.out, &sys.signal(&coeffs)?)?;
    Ok(())
}

fn reconstruct_lp(a: ReconstructLpArgs) -> Outcome {
    let es = io::read_events(&a.events)?;
    let kernel = KernelSpec::bspline(a.degree, a.h)?;
    let params = LpParams { p: a.p, lambda: a.lp.lambda, rho: a.lp.rho };
    let prob = recon_lp::build_lp_problem_at(&es, &kernel, a.k, a.origin.unwrap_or(es.t0()), params)?;
    let (coeffs, diag) = recon_lp::solve_lp(&prob, a.lp.tol, a.lp.max_iters);
    if !diag.converged {
        eprintln!(
            "warning: no convergence after {} iterations (last step {:e}, ‖Hc − y‖∞ = {:e})",
            diag.iterations, diag.last_step, diag.residual_h
        );
    }
    io::write_signal(&a.out, &prob.signal(&coeffs)?)?;
    if let Some(path) = &a.diagnostics {
        io::write_json(path, &Versioned::new(&diag))?;
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Outcome {
    match out {
        Some(path) => io::write_json(path, value)?,
        None => print!("{}", io::to_json(value)?),
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Outcome {
    let truth = io::read_signal(&a.truth)?;
    let recon = io::read_signal(&a.recon)?;
    let report = experiment::metrics(&truth, &recon, a.grid_step)?;
    emit_json(a.out.as_deref(), &report)
}

fn pipeline(a: PipelineArgs) -> Outcome {
    let sig = a.source.load()?;
    let method = match a.method {
        MethodArg::Pr => Method::Pr { iters: a.iters },
        MethodArg::Lp => Method::Lp {
            params: LpParams { p: a.p, lambda: a.lp.lambda, rho: a.lp.rho },
            tol: a.lp.tol,
            max_iters: a.lp.max_iters,
        },
    };
    let cfg = PipelineConfig {
        threshold: a.threshold.policy()?,
        method,
        sinc_guard: a.guard,
        record_runtime: !a.omit_runtime,
    };
    let (report, recon) = experiment::run_pipeline(&sig, &cfg)?;
    if let Some(path) = &a.recon_out {
        io::write_signal(path, &recon)?;
    }
    emit_json(a.out.as_deref(), &report)
}

fn sweep(a: SweepArgs) -> Outcome {
    let cfg = SweepConfig {
        ps: a.ps,
        degrees: a.degrees,
        trials: a.trials,
        seed: seed(a.seed)?,
        h: a.h,
        span: a.span,
        c_fraction: a.c_frac,
        lambda: a.lp.lambda,
        rho: a.lp.rho,
        tol: a.lp.tol,
        max_iters: a.lp.max_iters,
    };
    let (rows, trials) = experiment::sweep_p(&cfg)?;
    io::write_csv(&a.out, &rows)?;
    if let Some(path) = &a.trials_out {
        io::write_csv(path, &trials)?;
    }
    if a.assert_trend {
        let lo = cfg.ps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cfg.ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let failed: Vec<u32> = experiment::check_trend(&rows, lo, hi)
            .into_iter()
            .filter(|t| !(t.srer_ok && t.overshoot_ok))
            .map(|t| t.n)
            .collect();
        if !failed.is_empty() {
            return Err(Failure::Numerical(format!("trend p={lo} vs p={hi} violated for n in {failed:?}")));
        }
    }
    Ok(())
}
