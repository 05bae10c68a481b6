//! Generator kernels: causal polynomial B-splines and the cardinal sine,
//! both dilated by a grid step `h`.
//!
//! B-splines are evaluated with the Cox–de Boor recursion on integer knots,
//! so every value is an exact piecewise polynomial in `t / h`. Pieces are
//! half-open, `β_0(x) = 1` for `0 <= x < 1`, which makes the right endpoint
//! of the support evaluate to zero.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest degree accepted for user-facing kernels.
pub const MAX_DEGREE: u32 = 15;

// Internal evaluation also covers the degree-(2n+1) autocorrelation splines.
const TABLE_LEN: usize = 2 * MAX_DEGREE as usize + 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    BSpline { degree: u32 },
    Sinc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    h: f64,
}

impl KernelSpec {
    pub fn bspline(degree: u32, h: f64) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "B-spline degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        Self::new(KernelFamily::BSpline { degree }, h)
    }

    pub fn sinc(h: f64) -> Result<Self> {
        Self::new(KernelFamily::Sinc, h)
    }

    pub fn new(family: KernelFamily, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("grid step h must be positive, got {h}")));
        }
        if let KernelFamily::BSpline { degree } = family {
            if degree > MAX_DEGREE {
                return Err(Error::invalid(format!("B-spline degree {degree} too large")));
            }
        }
        Ok(KernelSpec { family, h })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Degree for B-splines, `None` for sinc.
    pub fn degree(&self) -> Option<u32> {
        match self.family {
            KernelFamily::BSpline { degree } => Some(degree),
            KernelFamily::Sinc => None,
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.family, KernelFamily::BSpline { degree: 0 })
    }

    /// Support `[0, h(n+1)]` for B-splines; `None` for sinc.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.degree().map(|n| (0.0, self.h * (n + 1) as f64))
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.family {
            KernelFamily::BSpline { degree } => write!(f, "bspline:{degree}:{}", self.h),
            KernelFamily::Sinc => write!(f, "sinc:{}", self.h),
        }
    }
}

/// Parses `bspline:<n>:<h>` or `sinc:<h>`.
impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad grid step {v:?}")));
        match parts.as_slice() {
            ["bspline", n, h] => {
                let n = n.parse::<u32>().map_err(|_| Error::Parse(format!("bad degree {n:?}")))?;
                KernelSpec::bspline(n, num(h)?)
            }
            ["sinc", h] => KernelSpec::sinc(num(h)?),
            _ => Err(Error::Parse(format!("kernel spec {s:?}; expected bspline:<n>:<h> or sinc:<h>"))),
        }
    }
}

/// Causal B-spline of degree `n` at `x` (unit grid).
pub fn bspline(n: u32, x: f64) -> f64 {
    let n = n as usize;
    debug_assert!(n < TABLE_LEN);
    if !(x >= 0.0 && x < (n + 1) as f64) {
        return 0.0;
    }
    let j = (x.floor() as usize).min(n);
    // b[i] holds β_d(x - i); only β_0(x - j) is non-zero at d = 0.
    let mut b = [0.0f64; TABLE_LEN + 1];
    b[j] = 1.0;
    for d in 1..=n {
        let inv = 1.0 / d as f64;
        for i in 0..=(n - d) {
            let fi = i as f64;
            b[i] = (x - fi) * inv * b[i] + (fi + d as f64 + 1.0 - x) * inv * b[i + 1];
        }
    }
    b[0]
}

/// `∫_0^x β_n(u) du` on the unit grid, via the running sum of `β_{n+1}`.
pub fn bspline_integral(n: u32, x: f64) -> f64 {
    let top = (n + 1) as f64;
    if x <= 0.0 {
        return 0.0;
    }
    if x >= top {
        return 1.0;
    }
    let last = x.floor() as i64;
    (0..=last).map(|j| bspline(n + 1, x - j as f64)).sum()
}

/// Normalised cardinal sine, `sin(πx) / (πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let px = PI * x;
    px.sin() / px
}

/// Derivative of [`sinc`] with respect to `x`.
pub fn sinc_derivative(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let p2 = PI * PI;
        return -p2 * x / 3.0 + p2 * p2 * x * x * x / 30.0;
    }
    let px = PI * x;
    (px * px.cos() - px.sin()) / (PI * x * x)
}

/// `φ_h(t)`: `β_n(t/h)` or `sinc(t/h)`.
pub fn eval_kernel(spec: &KernelSpec, t: f64) -> f64 {
    let x = t / spec.h;
    match spec.family {
        KernelFamily::BSpline { degree } => bspline(degree, x),
        KernelFamily::Sinc => sinc(x),
    }
}

/// `d/dt φ_h(t)`. B-splines use `(β_{n-1,h}(t) - β_{n-1,h}(t-h)) / h`.
pub fn eval_kernel_derivative(spec: &KernelSpec, t: f64) -> Result<f64> {
    let x = t / spec.h;
    match spec.family {
        KernelFamily::BSpline { degree: 0 } => Err(Error::NonDifferentiable),
        KernelFamily::BSpline { degree } => {
            Ok((bspline(degree - 1, x) - bspline(degree - 1, x - 1.0)) / spec.h)
        }
        KernelFamily::Sinc => Ok(sinc_derivative(x) / spec.h),
    }
}

/// `∫_a^b β_{n,h}(u) du`, exact.
pub fn kernel_antiderivative(spec: &KernelSpec, a: f64, b: f64) -> Result<f64> {
    match spec.family {
        KernelFamily::Sinc => Err(Error::Unsupported("sinc antiderivative; use quadrature path")),
        KernelFamily::BSpline { degree } => {
            if a > b {
                return Err(Error::invalid(format!("integration bounds reversed: {a} > {b}")));
            }
            let h = spec.h;
            Ok(h * (bspline_integral(degree, b / h) - bspline_integral(degree, a / h)))
        }
    }
}

/// The `n`-th order finite-difference filter, z-transform `(1 - z^{-1})^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteDifference {
    order: u32,
    taps: Vec<i64>,
}

impl FiniteDifference {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn taps(&self) -> &[i64] {
        &self.taps
    }
}

/// `d^n_k = (-1)^k C(n, k)`; order 0 gives the identity filter `{1}`.
pub fn finite_difference(n: u32) -> FiniteDifference {
    let mut taps = Vec::with_capacity(n as usize + 1);
    let mut binom: i64 = 1;
    for k in 0..=n as i64 {
        let sign = if k % 2 == 0 { 1 } else { -1 };
        taps.push(sign * binom);
        binom = binom * (n as i64 - k) / (k + 1);
    }
    FiniteDifference { order: n, taps }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RieszBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Riesz bracket `A ||c|| <= ||f|| <= B ||c||` for the `h`-scaled basis.
///
/// Sinc: `A = B = sqrt(h)`. B-spline of degree `n`:
/// `A >= sqrt(h) (2/π)^{n+1}`, `B = sqrt(h)`. Both bounds come from the
/// sampled autocorrelation symbol, which scales linearly with `h`.
pub fn riesz_bounds(spec: &KernelSpec) -> RieszBounds {
    let root_h = spec.h.sqrt();
    match spec.family {
        KernelFamily::Sinc => RieszBounds { lower: root_h, upper: root_h },
        KernelFamily::BSpline { degree } => RieszBounds {
            lower: root_h * (2.0 / PI).powi(degree as i32 + 1),
            upper: root_h,
        },
    }
}

/// Autocorrelation `<φ_h, φ_h(· - h d)>` at integer lag `d`.
pub fn autocorrelation(spec: &KernelSpec, lag: i64) -> f64 {
    match spec.family {
        KernelFamily::Sinc => {
            if lag == 0 {
                spec.h
            } else {
                0.0
            }
        }
        KernelFamily::BSpline { degree } => {
            spec.h * bspline(2 * degree + 1, (degree + 1) as f64 + lag as f64)
        }
    }
}

/// Finite-section Gram matrix `G[k][l] = <φ_h(· - hk), φ_h(· - hl)>`, `K × K`.
pub fn gram_sequence(spec: &KernelSpec, k: usize) -> DMatrix<f64> {
    let band: i64 = match spec.family {
        KernelFamily::Sinc => 0,
        KernelFamily::BSpline { degree } => degree as i64,
    };
    let taps: Vec<f64> = (0..=band).map(|d| autocorrelation(spec, d)).collect();
    DMatrix::from_fn(k, k, |i, j| {
        let d = (i as i64 - j as i64).abs();
        if d <= band {
            taps[d as usize]
        } else {
            0.0
        }
    })
}

/// Riemann zeta for `s >= 2`: partial sum plus an Euler–Maclaurin tail.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta series diverges for s <= 1");
    const N: usize = 64;
    let partial: f64 = (1..N).rev().map(|k| (k as f64).powf(-s)).sum();
    let n = N as f64;
    // Bernoulli corrections B2, B4, B6, B8.
    let t0 = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let t1 = s / 12.0 * n.powf(-s - 1.0);
    let t2 = -s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0);
    let t3 = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * n.powf(-s - 5.0);
    let t4 = -s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * (s + 5.0) * (s + 6.0)
        / 1_209_600.0
        * n.powf(-s - 7.0);
    partial + t0 + t1 + t2 + t3 + t4
}

/// Spline density constant
/// `η(n) = sqrt((2^{2n+2} - 1) ζ(2n+2) / ((2^{2n} - 1) ζ(2n)))`, `n >= 1`.
pub fn eta(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::NonDifferentiable);
    }
    let s = 2.0 * n as f64;
    let num = (2f64.powf(s + 2.0) - 1.0) * zeta(s + 2.0);
    let den = (2f64.powf(s) - 1.0) * zeta(s);
    Ok((num / den).sqrt())
}

/// `sup_ω G_{Dφ_h}(ω) / G_{φ_h}(ω)` over `[-π/h, π/h]`.
pub fn derivative_symbol_sup(spec: &KernelSpec) -> Result<f64> {
    match spec.family {
        KernelFamily::Sinc => Ok(PI / spec.h),
        KernelFamily::BSpline { degree } => Ok(2.0 * PI / (spec.h * eta(degree)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;

    fn spline(n: u32, h: f64) -> KernelSpec {
        KernelSpec::bspline(n, h).unwrap()
    }

    // Numerical convolution β_{n-1} * β_0 with a fine midpoint rule.
    fn convolve_with_box(n: u32, x: f64, steps: usize) -> f64 {
        let du = 1.0 / steps as f64;
        (0..steps)
            .map(|i| bspline(n - 1, x - (i as f64 + 0.5) * du) * du)
            .sum()
    }

    #[test]
    fn degree_zero_box() {
        let k = spline(0, 1.0);
        assert_eq!(eval_kernel(&k, 0.5), 1.0);
        assert_eq!(eval_kernel(&k, 0.0), 1.0);
        assert_eq!(eval_kernel(&k, 1.0), 0.0);
        assert_eq!(eval_kernel(&k, -1e-12), 0.0);
    }

    #[test]
    fn sinc_at_origin() {
        let k = KernelSpec::sinc(1.0).unwrap();
        assert_eq!(eval_kernel(&k, 0.0), 1.0);
        assert!(eval_kernel(&k, 3.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_peak_matches_convolution_oracle() {
        // hat function convolved with the box on a fine grid
        let oracle = {
            let steps = 4000;
            let du = 1.0 / steps as f64;
            let b1 = |x: f64| (1.0 - (x - 1.0).abs()).max(0.0);
            (0..steps).map(|i| b1(1.5 - (i as f64 + 0.5) * du) * du).sum::<f64>()
        };
        assert!((oracle - 0.75).abs() < 1e-6);
        assert_eq!(eval_kernel(&spline(2, 1.0), 1.5), 0.75);
    }

    #[test]
    fn right_endpoint_is_zero() {
        for n in 0..6 {
            let h = 0.3;
            let k = spline(n, h);
            let (_, end) = k.support().unwrap();
            assert_eq!(eval_kernel(&k, end), 0.0);
        }
    }

    #[test]
    fn convolution_recursion() {
        for n in 1..=4 {
            for i in 0..40 {
                let x = -0.2 + i as f64 * (n as f64 + 1.4) / 40.0;
                let want = convolve_with_box(n, x, 20_000);
                assert!((bspline(n, x) - want).abs() < 1e-8, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn derivative_examples() {
        assert!((eval_kernel_derivative(&spline(1, 1.0), 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(eval_kernel_derivative(&spline(2, 1.0), 1.5).unwrap(), 0.0);
        let k = spline(3, 0.5);
        let t = 0.7;
        let step = 1e-6;
        let fd = (eval_kernel(&k, t + step) - eval_kernel(&k, t - step)) / (2.0 * step);
        assert!((eval_kernel_derivative(&k, t).unwrap() - fd).abs() < 1e-6);
        assert!(matches!(
            eval_kernel_derivative(&spline(0, 1.0), 0.5),
            Err(Error::NonDifferentiable)
        ));
    }

    #[test]
    fn sinc_derivative_against_finite_difference() {
        let k = KernelSpec::sinc(0.125).unwrap();
        for &t in &[-0.3, -1e-6, 0.0, 2e-5, 0.01, 0.4, 1.1] {
            let step = 1e-7;
            let fd = (eval_kernel(&k, t + step) - eval_kernel(&k, t - step)) / (2.0 * step);
            let d = eval_kernel_derivative(&k, t).unwrap();
            assert!((d - fd).abs() < 1e-5 * (1.0 + d.abs()), "t={t} d={d} fd={fd}");
        }
    }

    #[test]
    fn antiderivative_examples() {
        assert_eq!(kernel_antiderivative(&spline(0, 1.0), 0.0, 1.0).unwrap(), 1.0);
        assert!((kernel_antiderivative(&spline(1, 1.0), 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        for n in 0..=5 {
            let h = 0.37;
            let k = spline(n, h);
            let full = kernel_antiderivative(&k, 0.0, h * (n + 1) as f64).unwrap();
            let quad = quadrature::integrate_aligned(0.0, h * (n + 1) as f64, 0.0, h, |t| {
                eval_kernel(&k, t)
            });
            assert!((full - h).abs() < 1e-14);
            assert!((quad - h).abs() < 1e-13);
        }
        assert!(matches!(
            kernel_antiderivative(&KernelSpec::sinc(1.0).unwrap(), 0.0, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn antiderivative_partial_intervals_match_quadrature() {
        let k = spline(3, 0.25);
        for &(a, b) in &[(-0.1, 0.13), (0.2, 0.61), (0.5, 2.0), (0.9, 0.95)] {
            let exact = kernel_antiderivative(&k, a, b).unwrap();
            let quad = quadrature::integrate_aligned(a, b, 0.0, 0.25, |t| eval_kernel(&k, t));
            assert!((exact - quad).abs() < 1e-14, "[{a},{b}]");
        }
    }

    #[test]
    fn finite_difference_taps() {
        assert_eq!(finite_difference(1).taps(), &[1, -1]);
        assert_eq!(finite_difference(2).taps(), &[1, -2, 1]);
        assert_eq!(finite_difference(0).taps(), &[1]);
        // d^3 = d^2 * d^1
        let d2 = finite_difference(2);
        let mut conv = vec![0i64; 4];
        for (i, a) in d2.taps().iter().enumerate() {
            for (j, b) in [1i64, -1].iter().enumerate() {
                conv[i + j] += a * b;
            }
        }
        assert_eq!(finite_difference(3).taps(), conv.as_slice());
        for n in 1..12 {
            let d = finite_difference(n);
            assert_eq!(d.taps().iter().sum::<i64>(), 0);
            assert!(d.taps().windows(2).all(|w| w[0].signum() == -w[1].signum()));
        }
    }

    #[test]
    fn riesz_examples() {
        let s = riesz_bounds(&KernelSpec::sinc(0.125).unwrap());
        assert!((s.lower - 0.125f64.sqrt()).abs() < 1e-15 && s.lower == s.upper);
        let b = riesz_bounds(&spline(2, 1.0));
        assert!((b.lower - (2.0 / PI).powi(3)).abs() < 1e-15);
        assert_eq!(b.upper, 1.0);
        let b0 = riesz_bounds(&spline(0, 1.0));
        assert!((b0.lower - 2.0 / PI).abs() < 1e-15);
        assert_eq!(b0.upper, 1.0);
    }

    #[test]
    fn gram_examples() {
        let g = gram_sequence(&KernelSpec::sinc(1.0).unwrap(), 3);
        assert_eq!(g, DMatrix::identity(3, 3));
        let g0 = gram_sequence(&spline(0, 0.4), 5);
        assert_eq!(g0, DMatrix::identity(5, 5) * 0.4);
        let g1 = gram_sequence(&spline(1, 1.0), 4);
        let k = spline(1, 1.0);
        let diag = quadrature::integrate_aligned(0.0, 2.0, 0.0, 1.0, |t| eval_kernel(&k, t).powi(2));
        assert!((g1[(1, 1)] - diag).abs() < 1e-14);
        assert!((g1[(1, 1)] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gram_matches_quadrature_and_is_banded() {
        let k = spline(3, 0.2);
        let g = gram_sequence(&k, 7);
        for i in 0..7 {
            for j in 0..7 {
                let q = quadrature::integrate_aligned(0.0, 0.2 * 10.0, 0.0, 0.2, |t| {
                    eval_kernel(&k, t - 0.2 * i as f64) * eval_kernel(&k, t - 0.2 * j as f64)
                });
                assert!((g[(i, j)] - q).abs() < 1e-14);
                if (i as i64 - j as i64).abs() > 3 {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zeta_closed_forms() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(6.0) - PI.powi(6) / 945.0).abs() < 1e-14);
    }

    #[test]
    fn eta_values() {
        assert!((eta(1).unwrap() - PI / 3f64.sqrt()).abs() < 1e-12);
        // closed form 2/5 π² for n = 2
        assert!((eta(2).unwrap() - (0.4 * PI * PI).sqrt()).abs() < 1e-12);
        assert!(eta(0).is_err());
        // bounded above by 2
        for n in 1..=10 {
            assert!(eta(n).unwrap() < 2.0);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::bspline(2, 0.0).is_err());
        assert!(KernelSpec::sinc(-1.0).is_err());
        assert!(KernelSpec::sinc(f64::NAN).is_err());
        assert!(KernelSpec::bspline(MAX_DEGREE + 1, 1.0).is_err());
    }
}
