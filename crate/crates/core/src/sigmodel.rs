//! Finite-coefficient signals `f(t) = Σ_k c_k φ_h(t - t_start - hk)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelFamily, KernelSpec};

/// Coefficients of the `paper-sinc` preset, a bandlimited signal with `h = 2^-3`.
pub const PAPER_SINC_COEFFS: [f64; 8] = [11.12, 8.58, 7.39, 1.38, 2.08, 2.94, 4.51, 3.89];
pub const PAPER_SINC_H: f64 = 0.125;

#[derive(Debug, Clone, PartialEq)]
pub struct SiSignal {
    kernel: KernelSpec,
    coeffs: Vec<f64>,
    t_start: f64,
}

impl SiSignal {
    pub fn new(kernel: KernelSpec, coeffs: Vec<f64>, t_start: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::EmptyCoefficients);
        }
        if !t_start.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("signal coefficients and t_start must be finite"));
        }
        Ok(SiSignal { kernel, coeffs, t_start })
    }

    /// Signal anchored at `t = 0`.
    pub fn synthesize(coeffs: Vec<f64>, kernel: KernelSpec) -> Result<Self> {
        Self::new(kernel, coeffs, 0.0)
    }

    /// The bandlimited preset `paper-sinc`.
    pub fn paper_sinc() -> Self {
        let kernel = KernelSpec::sinc(PAPER_SINC_H).expect("valid preset");
        SiSignal::new(kernel, PAPER_SINC_COEFFS.to_vec(), 0.0).expect("valid preset")
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `[t_start, t_start + (K + n) h]` for B-splines. Sinc signals have
    /// unbounded support; this returns the nominal span `[t_start, t_start + K h]`.
    pub fn support(&self) -> (f64, f64) {
        let h = self.kernel.h();
        let k = self.coeffs.len() as f64;
        let extra = self.kernel.degree().unwrap_or(0) as f64;
        (self.t_start, self.t_start + (k + extra) * h)
    }

    /// Same kernel and anchor, new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(self.kernel, coeffs, self.t_start)
    }

    fn check_compatible(&self, other: &SiSignal) -> Result<()> {
        if self.kernel != other.kernel {
            return Err(Error::Incompatible("different kernels"));
        }
        if self.t_start != other.t_start {
            return Err(Error::Incompatible("different t_start"));
        }
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::Incompatible("different coefficient counts"));
        }
        Ok(())
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &SiSignal, beta: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        self.with_coeffs(coeffs)
    }

    /// Range of coefficient indices whose basis function can be non-zero at `t`.
    fn active(&self, t: f64) -> std::ops::Range<usize> {
        match self.kernel.family() {
            KernelFamily::Sinc => 0..self.coeffs.len(),
            KernelFamily::BSpline { degree } => {
                let x = (t - self.t_start) / self.kernel.h();
                if x.is_nan() || x < 0.0 {
                    return 0..0;
                }
                let top = x.floor();
                let lo = (top - degree as f64).max(0.0) as usize;
                let hi = (top as usize).saturating_add(1).min(self.coeffs.len());
                lo.min(hi)..hi
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let h = self.kernel.h();
        let x = t - self.t_start;
        self.active(t)
            .map(|k| self.coeffs[k] * kernels::eval_kernel(&self.kernel, x - h * k as f64))
            .sum()
    }

    pub fn eval_derivative(&self, t: f64) -> Result<f64> {
        if !self.kernel.is_differentiable() {
            return Err(Error::NonDifferentiable);
        }
        let h = self.kernel.h();
        let x = t - self.t_start;
        let mut acc = 0.0;
        for k in self.active(t) {
            acc += self.coeffs[k] * kernels::eval_kernel_derivative(&self.kernel, x - h * k as f64)?;
        }
        Ok(acc)
    }

    /// `||f||_{L2} = sqrt(cᵀ G c)`; for sinc this is `sqrt(h) ||c||_2`.
    pub fn l2_norm(&self) -> f64 {
        let band = self.kernel.degree().unwrap_or(0) as usize;
        let taps: Vec<f64> =
            (0..=band).map(|d| kernels::autocorrelation(&self.kernel, d as i64)).collect();
        let c = &self.coeffs;
        let mut energy = 0.0;
        for i in 0..c.len() {
            energy += taps[0] * c[i] * c[i];
            for d in 1..=band.min(c.len() - 1 - i) {
                energy += 2.0 * taps[d] * c[i] * c[i + d];
            }
        }
        energy.max(0.0).sqrt()
    }

    pub fn l1_coeffs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

/// Signal with i.i.d. standard normal coefficients, reproducible from `seed`.
pub fn random_signal(kernel: KernelSpec, k: usize, seed: u64) -> Result<SiSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    SiSignal::synthesize(coeffs, kernel)
}
