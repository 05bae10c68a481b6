//! Perfect reconstruction by alternating projections.
//!
//! Samples are the anchor `(t0, f(t0))` followed by the event amplitudes.
//! `Γ` holds each sample constant over its midpoint cell; cells tile the
//! reconstruction window. In coefficient space one sweep of the iteration is
//! `c ↦ c_1 + (I − H̃H) c`.

use nalgebra::{DMatrix, DVector};

use crate::encoder::{self, EventStream, Window};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelFamily, KernelSpec};
use crate::quadrature;
use crate::sigmodel::SiSignal;

/// Relative error level below which contraction ratios are no longer recorded.
pub const RATIO_FLOOR: f64 = 1e-10;

/// Largest condition number accepted by the closed-form solve.
pub const MAX_CONDITION: f64 = 1e12;

/// `G⁻¹` for the `K × K` finite-section Gram matrix.
pub fn dual_kernel_coeffs(spec: &KernelSpec, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::EmptyCoefficients);
    }
    if spec.family() == KernelFamily::Sinc {
        return Ok(DMatrix::identity(k, k) / spec.h());
    }
    let gram = kernels::gram_sequence(spec, k);
    let chol = gram.cholesky().expect("Gram matrix of a Riesz basis is positive definite");
    Ok(chol.inverse())
}

#[derive(Debug, Clone)]
pub struct PrSystem {
    kernel: KernelSpec,
    origin: f64,
    window: Window,
    times: Vec<f64>,
    midpoints: Vec<f64>,
    h: DMatrix<f64>,
    htilde: DMatrix<f64>,
    y: DVector<f64>,
}

impl PrSystem {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Position of the first basis function.
    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    /// Sampling instants, anchor first.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Cell edges `s_0 < s_1 < … < s_M`; the first and last are the window edges.
    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    /// `M × K` sampling matrix.
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// `K × M` dual projection matrix.
    pub fn htilde(&self) -> &DMatrix<f64> {
        &self.htilde
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// `H̃H`, the coefficient-space form of `Π Γ`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.htilde * &self.h
    }

    /// Largest gap between consecutive samples.
    pub fn density(&self) -> f64 {
        encoder::sampling_density(&self.times).expect("system holds at least two samples")
    }

    /// Twice the largest distance from a sample to the edge of its own cell.
    ///
    /// Equals [`density`](Self::density) in the interior; at the window
    /// edges a sample sees only one side of its cell, so that side counts double.
    pub fn cell_density(&self) -> f64 {
        cell_density(&self.times, self.window)
    }

    /// Certified contraction constant for this sample set.
    pub fn gamma(&self) -> Result<f64> {
        contraction_gamma(&self.kernel, self.cell_density())
    }

    pub fn signal(&self, coeffs: &DVector<f64>) -> Result<SiSignal> {
        SiSignal::new(self.kernel, coeffs.iter().copied().collect(), self.origin)
    }
}

/// Twice the largest distance from an instant to the edge of its midpoint
/// cell, with the outer cells running to the window edges.
pub fn cell_density(times: &[f64], window: Window) -> f64 {
    let m = times.len();
    (0..m)
        .map(|i| {
            let left = if i == 0 { window.start } else { 0.5 * (times[i - 1] + times[i]) };
            let right = if i + 1 == m { window.end } else { 0.5 * (times[i] + times[i + 1]) };
            2.0 * (times[i] - left).max(right - times[i])
        })
        .fold(0.0, f64::max)
}

/// Build the system with the basis anchored at `window.start`.
pub fn build_pr_system(es: &EventStream, spec: &KernelSpec, k: usize, window: Window) -> Result<PrSystem> {
    build_pr_system_at(es, spec, k, window.start, window)
}

/// Build the system for basis functions `φ_h(t − origin − hk)`, `k < K`.
pub fn build_pr_system_at(
    es: &EventStream,
    spec: &KernelSpec,
    k: usize,
    origin: f64,
    window: Window,
) -> Result<PrSystem> {
    if es.is_empty() {
        return Err(Error::InsufficientEvents { needed: 1, got: 0 });
    }
    let times = es.times_with_anchor();
    if times[0] < window.start || *times.last().unwrap() > window.end {
        return Err(Error::InvalidEvents(format!(
            "samples span [{}, {}] outside window [{}, {}]",
            times[0],
            times.last().unwrap(),
            window.start,
            window.end
        )));
    }
    let mut y = vec![es.f_t0()];
    y.extend(encoder::t_transform(es));

    let m = times.len();
    let mut midpoints = Vec::with_capacity(m + 1);
    midpoints.push(window.start);
    midpoints.extend(times.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    midpoints.push(window.end);

    let step = spec.h();
    let hmat = DMatrix::from_fn(m, k, |i, j| {
        kernels::eval_kernel(spec, times[i] - origin - step * j as f64)
    });

    // A[l][m] = ∫ over cell m of φ_h(u − origin − hl)
    let mut a = DMatrix::zeros(k, m);
    for l in 0..k {
        let shift = origin + step * l as f64;
        for j in 0..m {
            let (lo, hi) = (midpoints[j], midpoints[j + 1]);
            a[(l, j)] = match spec.family() {
                KernelFamily::BSpline { degree } => {
                    let right = shift + (degree + 1) as f64 * step;
                    if hi <= shift || lo >= right {
                        0.0
                    } else {
                        kernels::kernel_antiderivative(spec, lo - shift, hi - shift)?
                    }
                }
                KernelFamily::Sinc => {
                    quadrature::integrate_aligned(lo, hi, shift, step, |u| {
                        kernels::eval_kernel(spec, u - shift)
                    })
                }
            };
        }
    }
    let htilde = dual_kernel_coeffs(spec, k)? * a;
    Ok(PrSystem {
        kernel: *spec,
        origin,
        window,
        times,
        midpoints,
        h: hmat,
        htilde,
        y: DVector::from_vec(y),
    })
}

#[derive(Debug, Clone)]
pub struct PrResult {
    pub coeffs: DVector<f64>,
    /// `c_1, c_2, …`; `iterates[k - 1]` is `c_k`.
    pub iterates: Vec<DVector<f64>>,
    /// `‖f − f_k‖_{L2}` per iterate, when ground truth was given.
    pub errors: Vec<f64>,
    /// `errors[k + 1] / errors[k]`, stopping once the error drops below
    /// [`RATIO_FLOOR`] times `‖f‖`, where sample rounding dominates.
    pub error_ratios: Vec<f64>,
    pub gamma_bound: f64,
}

/// Runs `iters` sweeps after the initial `c_1 = H̃ y`; `iters = 0` yields `c_1`.
pub fn iterate_pr(sys: &PrSystem, iters: usize, truth: Option<&SiSignal>) -> Result<PrResult> {
    if let Some(f) = truth {
        if f.len() != sys.k() || f.kernel() != sys.kernel() || f.t_start() != sys.origin {
            return Err(Error::Incompatible("ground truth does not live on the system basis"));
        }
    }
    let k = sys.k();
    let c1 = &sys.htilde * &sys.y;
    let residual_op = DMatrix::identity(k, k) - sys.projection();
    let mut iterates = Vec::with_capacity(iters + 1);
    iterates.push(c1.clone());
    for _ in 0..iters {
        let next = &c1 + &residual_op * iterates.last().unwrap();
        iterates.push(next);
    }
    let errors: Vec<f64> = match truth {
        Some(f) => iterates
            .iter()
            .map(|c| {
                let diff: Vec<f64> = f.coeffs().iter().zip(c.iter()).map(|(a, b)| a - b).collect();
                f.with_coeffs(diff).map(|e| e.l2_norm())
            })
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let floor = RATIO_FLOOR * truth.map_or(0.0, |f| f.l2_norm());
    let error_ratios = errors
        .windows(2)
        .take_while(|w| w[1] > floor)
        .map(|w| w[1] / w[0])
        .collect();
    let gamma_bound = sys.gamma().unwrap_or(f64::INFINITY);
    Ok(PrResult {
        coeffs: iterates.last().unwrap().clone(),
        iterates,
        errors,
        error_ratios,
        gamma_bound,
    })
}

#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub coeffs: DVector<f64>,
    /// `‖H c − y‖_∞`.
    pub residual: f64,
    pub condition: f64,
}

/// `c* = (H̃H)⁻¹ H̃ y` through an SVD, plus one residual correction step.
pub fn solve_pr_closed_form(sys: &PrSystem) -> Result<ClosedForm> {
    let p = sys.projection();
    let rhs = &sys.htilde * &sys.y;
    let svd = p.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { cond: condition });
    }
    let mut c = svd.solve(&rhs, 0.0).map_err(Error::Degenerate)?;
    let correction = svd.solve(&(&rhs - &p * &c), 0.0).map_err(Error::Degenerate)?;
    c += correction;
    let residual = (&sys.h * &c - &sys.y).amax();
    Ok(ClosedForm { coeffs: c, residual, condition })
}

/// `γ = sup(G_{Dφ}/G_φ) · density / π`: `density / h` for sinc,
/// `2 density / (h η(n))` for B-splines.
pub fn contraction_gamma(spec: &KernelSpec, density: f64) -> Result<f64> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::invalid(format!("density must be positive, got {density}")));
    }
    if !spec.is_differentiable() {
        return Err(Error::NonDifferentiable);
    }
    Ok(kernels::derivative_symbol_sup(spec)? * density / std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Invertibility {
    pub full_rank: bool,
    pub rank: usize,
    /// Whether the instants are denser than `Δ_φ`.
    pub density_ok: bool,
}

/// Numerical rank of `H` and the density hypothesis for `times`.
pub fn check_left_invertible(h: &DMatrix<f64>, spec: &KernelSpec, times: &[f64]) -> Invertibility {
    let (m, k) = h.shape();
    let rank = if m == 0 || k == 0 {
        0
    } else {
        let sv = h.singular_values();
        let threshold = m.max(k) as f64 * f64::EPSILON * sv.max();
        sv.iter().filter(|&&s| s > threshold).count()
    };
    let density_ok = match (encoder::sampling_density(times), encoder::delta_phi(spec)) {
        (Ok(d), Ok(limit)) => d < limit,
        _ => false,
    };
    Invertibility { full_rank: rank == k, rank, density_ok }
}
