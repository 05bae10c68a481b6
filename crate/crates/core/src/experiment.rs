//! End-to-end runs: encode → reconstruct → score, and the `p` sweep.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::encoder::{self, Window};
use crate::error::{Error, Result};
use crate::io::{KernelRecord, FORMAT_VERSION};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::recon_lp::{self, LpParams};
use crate::recon_pr;
use crate::sigmodel::{random_signal, SiSignal};

/// Guard cells added on each side of a sinc signal's nominal span.
pub const DEFAULT_SINC_GUARD: usize = 2;

/// Points used by the dense scan behind range-relative thresholds.
const RANGE_SCAN_POINTS: usize = 16_385;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    Absolute(f64),
    /// Fraction of `max f − min f` over the encode window.
    RangeFraction(f64),
    /// Fraction of the critical threshold `C_f(Δ_φ)`.
    CriticalFraction(f64),
}

impl ThresholdPolicy {
    pub fn resolve(&self, sig: &SiSignal, window: Window) -> Result<f64> {
        let c = match *self {
            ThresholdPolicy::Absolute(c) => c,
            ThresholdPolicy::RangeFraction(frac) => {
                check_fraction(frac)?;
                frac * encoder::dynamic_range(sig, window, RANGE_SCAN_POINTS)
            }
            ThresholdPolicy::CriticalFraction(frac) => {
                check_fraction(frac)?;
                let delta = encoder::delta_phi(sig.kernel())?;
                frac * encoder::critical_threshold(sig, delta, window)?.value
            }
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid(format!("resolved threshold C = {c} is not positive")));
        }
        Ok(c)
    }
}

fn check_fraction(frac: f64) -> Result<()> {
    if !(frac.is_finite() && frac > 0.0) {
        return Err(Error::invalid(format!("threshold fraction must be positive, got {frac}")));
    }
    Ok(())
}

/// Encode window: the support for B-splines; the nominal span widened by
/// `guard` cells per side for sinc.
pub fn encode_window(sig: &SiSignal, guard: usize) -> Window {
    let w = Window::for_signal(sig);
    match sig.kernel().family() {
        KernelFamily::BSpline { .. } => w,
        KernelFamily::Sinc => {
            let pad = guard as f64 * sig.kernel().h();
            Window { start: w.start - pad, end: w.end + pad }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Closed form when `iters` is `None`.
    Pr { iters: Option<usize> },
    Lp { params: LpParams, tol: f64, max_iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub threshold: ThresholdPolicy,
    pub method: Method,
    pub sinc_guard: usize,
    pub record_runtime: bool,
}

fn finite_or_tag<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn opt_finite_or_tag<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => finite_or_tag(x, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrSummary {
    pub iterations: Option<usize>,
    pub condition: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSummary {
    pub p: f64,
    pub lambda: f64,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_h: f64,
    pub residual_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub format_version: u32,
    pub kernel: KernelRecord,
    pub coefficients: usize,
    pub method: &'static str,
    #[serde(rename = "C")]
    pub threshold: f64,
    pub window: [f64; 2],
    pub events: usize,
    /// Largest gap between anchor and events.
    pub density: f64,
    /// Density with window edges counted from one side only.
    pub cell_density: f64,
    #[serde(serialize_with = "opt_finite_or_tag")]
    pub delta_phi: Option<f64>,
    #[serde(serialize_with = "opt_finite_or_tag")]
    pub gamma: Option<f64>,
    #[serde(serialize_with = "finite_or_tag")]
    pub srer_db: f64,
    pub max_overshoot: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr: Option<PrSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

pub fn run_pipeline(sig: &SiSignal, cfg: &PipelineConfig) -> Result<(PipelineReport, SiSignal)> {
    let clock = Instant::now();
    let kernel = *sig.kernel();
    let window = encode_window(sig, cfg.sinc_guard);
    let c = cfg.threshold.resolve(sig, window)?;
    let es = encoder::encode(sig, c, window, window.start)?;
    if es.is_empty() {
        return Err(Error::InsufficientEvents { needed: 1, got: 0 });
    }
    let times = es.times_with_anchor();
    let density = encoder::sampling_density(&times)?;
    let cell_density = recon_pr::cell_density(&times, window);
    let k = sig.len();

    let (recon, method, pr, lp) = match cfg.method {
        Method::Pr { iters } => {
            let sys = recon_pr::build_pr_system_at(&es, &kernel, k, sig.t_start(), window)?;
            match iters {
                None => {
                    let cf = recon_pr::solve_pr_closed_form(&sys)?;
                    let summary = PrSummary { iterations: None, condition: Some(cf.condition), residual: cf.residual };
                    (sys.signal(&cf.coeffs)?, "pr-closed-form", Some(summary), None)
                }
                Some(n) => {
                    let res = recon_pr::iterate_pr(&sys, n, None)?;
                    let residual = (sys.h() * &res.coeffs - sys.y()).amax();
                    let summary = PrSummary { iterations: Some(n), condition: None, residual };
                    (sys.signal(&res.coeffs)?, "pr-iterative", Some(summary), None)
                }
            }
        }
        Method::Lp { params, tol, max_iters } => {
            let prob = recon_lp::build_lp_problem_at(&es, &kernel, k, sig.t_start(), params)?;
            let (coeffs, diag) = recon_lp::solve_lp(&prob, tol, max_iters);
            let summary = LpSummary {
                p: params.p,
                lambda: params.lambda,
                rho: params.rho,
                iterations: diag.iterations,
                converged: diag.converged,
                residual_h: diag.residual_h,
                residual_l: diag.residual_l,
            };
            (prob.signal(&coeffs)?, "lp", None, Some(summary))
        }
    };

    let srer_db = recon_lp::srer(sig, &recon)?;
    let max_overshoot = recon_lp::max_overshoot(sig, &recon, kernel.h() / 256.0)?;
    let delta_phi = encoder::delta_phi(&kernel).ok();
    let gamma = recon_pr::contraction_gamma(&kernel, cell_density).ok();
    let report = PipelineReport {
        format_version: FORMAT_VERSION,
        kernel: (&kernel).into(),
        coefficients: k,
        method,
        threshold: c,
        window: [window.start, window.end],
        events: es.len(),
        density,
        cell_density,
        delta_phi,
        gamma,
        srer_db,
        max_overshoot,
        pr,
        lp,
        runtime_s: cfg.record_runtime.then(|| clock.elapsed().as_secs_f64()),
    };
    Ok((report, recon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub format_version: u32,
    #[serde(serialize_with = "finite_or_tag")]
    pub srer_db: f64,
    pub max_overshoot: f64,
    pub grid_step: f64,
}

/// SRER and maximum overshoot; `grid_step` defaults to `h / 256`.
pub fn metrics(truth: &SiSignal, recon: &SiSignal, grid_step: Option<f64>) -> Result<MetricsReport> {
    let grid_step = grid_step.unwrap_or(truth.kernel().h() / 256.0);
    Ok(MetricsReport {
        format_version: FORMAT_VERSION,
        srer_db: recon_lp::srer(truth, recon)?,
        max_overshoot: recon_lp::max_overshoot(truth, recon, grid_step)?,
        grid_step,
    })
}

/// One row of a perfect-reconstruction trace: `iter` counts from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub l2_error: f64,
    pub ratio: Option<f64>,
}

pub fn trace_rows(res: &recon_pr::PrResult) -> Vec<TraceRow> {
    res.errors
        .iter()
        .enumerate()
        .map(|(i, &e)| TraceRow {
            iter: i + 1,
            l2_error: e,
            ratio: if i == 0 { None } else { Some(e / res.errors[i - 1]) },
        })
        .collect()
}

// ---------------------------------------------------------------------------
// p sweep

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ps: Vec<f64>,
    pub degrees: Vec<u32>,
    pub trials: usize,
    pub seed: u64,
    pub h: f64,
    /// Support length; `K = span / h − n`.
    pub span: f64,
    pub c_fraction: f64,
    pub lambda: f64,
    pub rho: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ps: vec![0.4, 0.6, 0.8, 1.0, 1.2],
            degrees: vec![2, 3, 4],
            trials: 20,
            seed: 0,
            h: 0.0625,
            span: 1.0,
            c_fraction: 0.15,
            lambda: recon_lp::DEFAULT_LAMBDA,
            rho: recon_lp::DEFAULT_RHO,
            tol: recon_lp::DEFAULT_TOL,
            max_iters: recon_lp::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub p: f64,
    pub n: u32,
    pub trial: usize,
    pub seed: u64,
    pub events: usize,
    pub srer_db: f64,
    pub max_overshoot: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub n: u32,
    pub trials: usize,
    pub mean_srer_db: f64,
    pub mean_max_overshoot: f64,
    pub converged_fraction: f64,
    pub median_iterations: f64,
}

/// Seed of trial `trial` for degree `n`; shared by every `p`.
pub fn trial_seed(base: u64, n: u32, trial: usize) -> u64 {
    base.wrapping_add((n as u64) << 32).wrapping_add(trial as u64)
}

fn sweep_trial(cfg: &SweepConfig, n: u32, trial: usize) -> Result<Vec<TrialRow>> {
    let kernel = KernelSpec::bspline(n, cfg.h)?;
    let cells = (cfg.span / cfg.h).round() as i64 - n as i64;
    if cells < 1 {
        return Err(Error::invalid(format!("span {} too short for degree {n} at h = {}", cfg.span, cfg.h)));
    }
    let k = cells as usize;
    let seed = trial_seed(cfg.seed, n, trial);
    let sig = random_signal(kernel, k, seed)?;
    let window = Window::for_signal(&sig);
    let c = ThresholdPolicy::RangeFraction(cfg.c_fraction).resolve(&sig, window)?;
    let es = encoder::encode(&sig, c, window, window.start)?;
    cfg.ps
        .iter()
        .map(|&p| {
            let params = LpParams { p, lambda: cfg.lambda, rho: cfg.rho };
            let prob = recon_lp::build_lp_problem(&es, &kernel, k, params)?;
            let (coeffs, diag) = recon_lp::solve_lp(&prob, cfg.tol, cfg.max_iters);
            let recon = prob.signal(&coeffs)?;
            Ok(TrialRow {
                p,
                n,
                trial,
                seed,
                events: es.len(),
                srer_db: recon_lp::srer(&sig, &recon)?,
                max_overshoot: recon_lp::max_overshoot(&sig, &recon, cfg.h / 256.0)?,
                iterations: diag.iterations,
                converged: diag.converged,
            })
        })
        .collect()
}

/// Aggregates per `(p, n)` in the order of `cfg.degrees` × `cfg.ps`, plus
/// every per-trial row.
pub fn sweep_p(cfg: &SweepConfig) -> Result<(Vec<SweepRow>, Vec<TrialRow>)> {
    if cfg.ps.is_empty() {
        return Err(Error::invalid("p list is empty"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let jobs: Vec<(u32, usize)> =
        cfg.degrees.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let per_job: Vec<Vec<TrialRow>> =
        jobs.par_iter().map(|&(n, t)| sweep_trial(cfg, n, t)).collect::<Result<_>>()?;
    let trials: Vec<TrialRow> = per_job.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &n in &cfg.degrees {
        for &p in &cfg.ps {
            let group: Vec<&TrialRow> = trials.iter().filter(|r| r.n == n && r.p == p).collect();
            let count = group.len() as f64;
            let mut iters: Vec<usize> = group.iter().map(|r| r.iterations).collect();
            iters.sort_unstable();
            rows.push(SweepRow {
                p,
                n,
                trials: group.len(),
                mean_srer_db: group.iter().map(|r| r.srer_db).sum::<f64>() / count,
                mean_max_overshoot: group.iter().map(|r| r.max_overshoot).sum::<f64>() / count,
                converged_fraction: group.iter().filter(|r| r.converged).count() as f64 / count,
                median_iterations: median(&iters),
            });
        }
    }
    Ok((rows, trials))
}

fn median(sorted: &[usize]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2] as f64
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendCheck {
    pub n: u32,
    pub srer_ok: bool,
    pub overshoot_ok: bool,
}

/// For each degree, whether `p_small` beats `p_large` on mean SRER and mean
/// overshoot. Degrees missing either `p` are skipped.
pub fn check_trend(rows: &[SweepRow], p_small: f64, p_large: f64) -> Vec<TrendCheck> {
    let mut degrees: Vec<u32> = rows.iter().map(|r| r.n).collect();
    degrees.dedup();
    degrees
        .into_iter()
        .filter_map(|n| {
            let find = |p: f64| rows.iter().find(|r| r.n == n && r.p == p);
            let (a, b) = (find(p_small)?, find(p_large)?);
            Some(TrendCheck {
                n,
                srer_ok: a.mean_srer_db >= b.mean_srer_db,
                overshoot_ok: a.mean_max_overshoot <= b.mean_max_overshoot,
            })
        })
        .collect()
}
