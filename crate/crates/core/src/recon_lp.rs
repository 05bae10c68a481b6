//! Approximate reconstruction from sparse events by `L_p` minimization of
//! the `n`-th derivative, solved with a split-variable augmented Lagrangian.
//!
//! The discrete program is `min ‖L c‖_p^p` subject to `H c = y`, where `L`
//! convolves with `h^{-(n-1/p)} d^n` and `H` samples the spline basis at the
//! event times.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::encoder::{self, EventStream};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelFamily, KernelSpec};
use crate::sigmodel::SiSignal;

pub const DEFAULT_LAMBDA: f64 = 1e-10;
pub const DEFAULT_RHO: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Calls after which a problem switches its prox to table-seeded Newton.
pub const PROX_TABLE_AFTER: usize = 10_000;

// ---------------------------------------------------------------------------
// scalar prox

/// `argmin_z ½(x − z)² + w |z|^p`.
pub fn prox_scalar(x: f64, w: f64, p: f64) -> f64 {
    prox_seeded(x, w, p, None)
}

fn prox_seeded(x: f64, w: f64, p: f64, seed: Option<f64>) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let a = x.abs();
    let z = if p == 1.0 {
        (a - w).max(0.0)
    } else if p == 2.0 {
        a / (1.0 + 2.0 * w)
    } else if p < 1.0 {
        // Beyond the jump the minimiser is the larger stationary point,
        // which lies in [z_jump, a] where the stationarity map is increasing.
        let z_jump = (2.0 * w * (1.0 - p)).powf(1.0 / (2.0 - p));
        let a_jump = 0.5 * z_jump + w * z_jump.powf(p - 1.0);
        if a <= a_jump {
            0.0
        } else {
            let root = stationary_root(a, w, p, z_jump, a, seed);
            if objective(a, w, p, root) < 0.5 * a * a {
                root
            } else {
                0.0
            }
        }
    } else {
        stationary_root(a, w, p, 0.0, a, seed)
    };
    z.copysign(x)
}

fn objective(a: f64, w: f64, p: f64, z: f64) -> f64 {
    0.5 * (a - z) * (a - z) + w * z.powf(p)
}

// Root of z − a + w p z^{p−1} on [lo, hi], where it changes sign once.
fn stationary_root(a: f64, w: f64, p: f64, mut lo: f64, mut hi: f64, seed: Option<f64>) -> f64 {
    let g = |z: f64| z - a + w * p * z.powf(p - 1.0);
    let dg = |z: f64| 1.0 + w * p * (p - 1.0) * z.powf(p - 2.0);
    let mut z = seed.filter(|s| *s > lo && *s < hi).unwrap_or(hi);
    for _ in 0..200 {
        let gz = g(z);
        if gz == 0.0 {
            return z;
        }
        if gz > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let d = dg(z);
        let mut next = z - gz / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-15 * a.max(1e-300) || hi - lo <= 1e-16 * a {
            return next;
        }
        z = next;
    }
    z
}

/// Lookup table of `prox(·, w, p)` on a log-spaced grid of `|x|`, used to
/// seed the Newton solve.
#[derive(Debug, Clone)]
pub struct ProxTable {
    w: f64,
    p: f64,
    log_lo: f64,
    log_step: f64,
    values: Vec<f64>,
}

impl ProxTable {
    const POINTS: usize = 2048;

    pub fn new(w: f64, p: f64, x_min: f64, x_max: f64) -> Self {
        let log_lo = x_min.ln();
        let log_step = (x_max.ln() - log_lo) / (Self::POINTS - 1) as f64;
        let values =
            (0..Self::POINTS).map(|i| prox_scalar((log_lo + i as f64 * log_step).exp(), w, p)).collect();
        ProxTable { w, p, log_lo, log_step, values }
    }

    /// Piecewise-linear interpolation in `ln |x|`; monotone because the data are.
    pub fn lookup(&self, x: f64) -> Option<f64> {
        let pos = (x.abs().ln() - self.log_lo) / self.log_step;
        if !(pos >= 0.0 && pos <= (Self::POINTS - 1) as f64) {
            return None;
        }
        let i = (pos.floor() as usize).min(Self::POINTS - 2);
        let frac = pos - i as f64;
        Some(self.values[i] + frac * (self.values[i + 1] - self.values[i]))
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.lookup(x) {
            Some(seed) if seed > 0.0 => prox_seeded(x, self.w, self.p, Some(seed)),
            _ => prox_scalar(x, self.w, self.p),
        }
    }
}

#[derive(Debug)]
struct ProxEngine {
    w: f64,
    p: f64,
    calls: AtomicUsize,
    table: OnceLock<ProxTable>,
}

impl ProxEngine {
    fn new(w: f64, p: f64) -> Self {
        ProxEngine { w, p, calls: AtomicUsize::new(0), table: OnceLock::new() }
    }

    fn apply(&self, x: f64) -> f64 {
        if self.p == 1.0 || self.p == 2.0 {
            return prox_scalar(x, self.w, self.p);
        }
        if self.calls.fetch_add(1, Ordering::Relaxed) < PROX_TABLE_AFTER {
            return prox_scalar(x, self.w, self.p);
        }
        let scale = self.w.powf(1.0 / (2.0 - self.p));
        self.table
            .get_or_init(|| ProxTable::new(self.w, self.p, 1e-3 * scale, 1e6 * scale))
            .apply(x)
    }
}

impl Clone for ProxEngine {
    fn clone(&self) -> Self {
        ProxEngine::new(self.w, self.p)
    }
}

// ---------------------------------------------------------------------------
// problem

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpParams {
    pub p: f64,
    pub lambda: f64,
    pub rho: f64,
}

impl LpParams {
    pub fn new(p: f64) -> Self {
        LpParams { p, lambda: DEFAULT_LAMBDA, rho: DEFAULT_RHO }
    }
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    kernel: KernelSpec,
    origin: f64,
    params: LpParams,
    h: DMatrix<f64>,
    l: DMatrix<f64>,
    y: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
    prox: ProxEngine,
}

/// Convolution matrix of `h^{-(n-1/p)} d^n`, `(K + n) × K`.
pub fn difference_matrix(n: u32, h: f64, p: f64, k: usize) -> DMatrix<f64> {
    let scale = h.powf(-(n as f64 - 1.0 / p));
    let taps = kernels::finite_difference(n);
    let taps = taps.taps();
    DMatrix::from_fn(k + n as usize, k, |i, j| {
        let d = i as i64 - j as i64;
        if (0..=n as i64).contains(&d) {
            scale * taps[d as usize] as f64
        } else {
            0.0
        }
    })
}

/// Problem for basis `β_{n,h}(t − t0 − hk)` anchored at the stream's `t0`.
pub fn build_lp_problem(es: &EventStream, spec: &KernelSpec, k: usize, params: LpParams) -> Result<LpProblem> {
    build_lp_problem_at(es, spec, k, es.t0(), params)
}

pub fn build_lp_problem_at(
    es: &EventStream,
    spec: &KernelSpec,
    k: usize,
    origin: f64,
    params: LpParams,
) -> Result<LpProblem> {
    if spec.family() == KernelFamily::Sinc {
        return Err(Error::Unsupported("L_p reconstruction needs a B-spline basis"));
    }
    if es.is_empty() {
        return Err(Error::InsufficientEvents { needed: 1, got: 0 });
    }
    let times = es.times();
    let step = spec.h();
    let h = DMatrix::from_fn(times.len(), k, |i, j| kernels::eval_kernel(spec, times[i] - origin - step * j as f64));
    let y = DVector::from_vec(encoder::t_transform(es));
    LpProblem::from_parts(*spec, origin, h, y, params)
}

impl LpProblem {
    /// Problem from an explicit sampling matrix `H` (`M × K`) and data `y`.
    pub fn from_parts(
        kernel: KernelSpec,
        origin: f64,
        h: DMatrix<f64>,
        y: DVector<f64>,
        params: LpParams,
    ) -> Result<Self> {
        let n = match kernel.family() {
            KernelFamily::BSpline { degree } if degree >= 1 => degree,
            _ => return Err(Error::invalid("L_p reconstruction needs spline degree n >= 1")),
        };
        let LpParams { p, lambda, rho } = params;
        for (name, v) in [("p", p), ("lambda", lambda), ("rho", rho)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let k = h.ncols();
        if k == 0 {
            return Err(Error::EmptyCoefficients);
        }
        if h.nrows() != y.len() {
            return Err(Error::invalid(format!("H has {} rows but y has {} entries", h.nrows(), y.len())));
        }
        let l = difference_matrix(n, kernel.h(), p, k);
        let normal = h.transpose() * &h * rho + l.transpose() * &l * lambda;
        let factor =
            normal.cholesky().ok_or(Error::Degenerate("normal equations are not positive definite"))?;
        Ok(LpProblem { kernel, origin, params, h, l, y, factor, prox: ProxEngine::new(lambda / rho, p) })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn params(&self) -> LpParams {
        self.params
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// `‖L c‖_p^p`.
    pub fn objective(&self, c: &DVector<f64>) -> f64 {
        (&self.l * c).iter().map(|v| v.abs().powf(self.params.p)).sum()
    }

    pub fn signal(&self, c: &DVector<f64>) -> Result<SiSignal> {
        SiSignal::new(self.kernel, c.iter().copied().collect(), self.origin)
    }

    pub fn initial_state(&self) -> LpState {
        LpState {
            c: DVector::zeros(self.k()),
            z: DVector::zeros(self.l.nrows()),
            u: DVector::zeros(self.l.nrows()),
            v: DVector::zeros(self.h.nrows()),
            iter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpState {
    pub c: DVector<f64>,
    pub z: DVector<f64>,
    /// Scaled dual of `L c = z`.
    pub u: DVector<f64>,
    /// Scaled dual of `H c = y`.
    pub v: DVector<f64>,
    pub iter: usize,
}

/// One sweep `c → z → u → v`.
///
/// The `c` step minimises the augmented Lagrangian
/// `ρ/2‖y − Hc‖² + ρvᵀ(Hc − y) + ‖z‖_p^p + λuᵀ(Lc − z) + λ/2‖Lc − z‖²`
/// exactly, giving `(ρHᵀH + λLᵀL) c = ρHᵀ(y − v) + λLᵀ(z − u)`.
pub fn lp_iterate(prob: &LpProblem, state: &LpState) -> LpState {
    let LpParams { lambda, rho, .. } = prob.params;
    let rhs = prob.h.tr_mul(&(&prob.y - &state.v)) * rho + prob.l.tr_mul(&(&state.z - &state.u)) * lambda;
    let c = prob.factor.solve(&rhs);
    let lc = &prob.l * &c;
    let z = (&lc + &state.u).map(|x| prob.prox.apply(x));
    let u = &state.u + &lc - &z;
    let v = &state.v + &prob.h * &c - &prob.y;
    LpState { c, z, u, v, iter: state.iter + 1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `‖c_{k+1} − c_k‖_2` at the last sweep.
    pub last_step: f64,
    /// `‖H c − y‖_∞`.
    pub residual_h: f64,
    /// `‖L c − z‖_∞`.
    pub residual_l: f64,
    /// `‖L c_k‖_p^p` per sweep.
    pub objective_trace: Vec<f64>,
}

pub fn solve_lp(prob: &LpProblem, tol: f64, max_iters: usize) -> (DVector<f64>, LpDiagnostics) {
    let mut state = prob.initial_state();
    let mut trace = Vec::new();
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    while state.iter < max_iters {
        let next = lp_iterate(prob, &state);
        last_step = (&next.c - &state.c).norm();
        trace.push(prob.objective(&next.c));
        state = next;
        if last_step < tol {
            converged = true;
            break;
        }
    }
    let residual_h = (&prob.h * &state.c - &prob.y).amax();
    let residual_l = (&prob.l * &state.c - &state.z).amax();
    let diag = LpDiagnostics {
        iterations: state.iter,
        converged,
        last_step,
        residual_h,
        residual_l,
        objective_trace: trace,
    };
    (state.c, diag)
}

// ---------------------------------------------------------------------------
// metrics

/// `10 log10(‖f‖² / ‖f − f̌‖²)`; `+∞` when the signals coincide.
pub fn srer(truth: &SiSignal, recon: &SiSignal) -> Result<f64> {
    let err = truth.combine(1.0, recon, -1.0)?;
    let signal = truth.l2_norm();
    if signal == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let noise = err.l2_norm();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / noise).log10())
}

/// `max |f − f̌|` over the common support on a grid of `grid_step`, with a
/// parabolic refinement around the largest sample.
pub fn max_overshoot(truth: &SiSignal, recon: &SiSignal, grid_step: f64) -> Result<f64> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::invalid(format!("grid step must be positive, got {grid_step}")));
    }
    let err = truth.combine(1.0, recon, -1.0)?;
    let (a, b) = err.support();
    let count = ((b - a) / grid_step).ceil() as usize;
    let step = (b - a) / count as f64;
    let e = |i: usize| err.eval(a + i as f64 * step).abs();
    let vals: Vec<f64> = (0..=count).map(e).collect();
    let (imax, &vmax) =
        vals.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).expect("grid is non-empty");
    if imax == 0 || imax == count {
        return Ok(vmax);
    }
    let (l, m, r) = (vals[imax - 1], vmax, vals[imax + 1]);
    let denom = l - 2.0 * m + r;
    if denom >= 0.0 {
        return Ok(vmax);
    }
    let offset = 0.5 * (l - r) / denom;
    let t = a + (imax as f64 + offset) * step;
    Ok(vmax.max(err.eval(t).abs()))
}
