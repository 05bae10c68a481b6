//! Composite Gauss–Legendre quadrature.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes per panel used throughout the crate.
pub const NODES_PER_PANEL: usize = 64;

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// The shared 64-node rule.
    pub fn standard() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(NODES_PER_PANEL))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over a single panel [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite rule over [a, b] with panels no longer than `panel`.
pub fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, panel: f64, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let rule = GaussLegendre::standard();
    let count = ((b - a) / panel).ceil().max(1.0) as usize;
    let width = (b - a) / count as f64;
    (0..count)
        .map(|i| {
            let lo = a + i as f64 * width;
            let hi = if i + 1 == count { b } else { lo + width };
            rule.integrate(lo, hi, &mut f)
        })
        .sum()
}

/// Composite rule with panel edges on the lattice `origin + j * step`, so
/// piecewise polynomials with knots on that lattice integrate exactly.
pub fn integrate_aligned<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    origin: f64,
    step: f64,
    mut f: F,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let rule = GaussLegendre::standard();
    let mut total = 0.0;
    let mut lo = a;
    let mut j = ((a - origin) / step).floor() + 1.0;
    while lo < b {
        let knot = origin + j * step;
        let hi = if knot < b { knot } else { b };
        if hi > lo {
            total += rule.integrate(lo, hi, &mut f);
        }
        lo = hi;
        j += 1.0;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let rule = GaussLegendre::standard();
        let s: f64 = rule.weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the limit for 8 nodes
        let v = rule.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn composite_sine() {
        let v = integrate(0.0, PI, 0.5, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn aligned_handles_unit_box() {
        let v = integrate_aligned(-0.3, 2.7, 0.0, 1.0, |x| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 });
        assert!((v - 1.0).abs() < 1e-14);
    }
}
