//! Neuromorphic (send-on-delta) encoder and its t-transform.
//!
//! An event fires at the first instant after the previous event where the
//! signal has moved by exactly `±C` from the amplitude recorded there. The
//! comparator is realised by a fixed-step scan followed by bisection.

use std::collections::VecDeque;


use crate::error::{Error, Result};
use crate::kernels::{self, KernelFamily, KernelSpec};
use crate::sigmodel::SiSignal;

/// Closed interval `[start, end]` on the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::invalid(format!("invalid window [{start}, {end}]")));
        }
        Ok(Window { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Signal support for B-splines, `[t_start, t_start + K h]` for sinc.
    pub fn for_signal(sig: &SiSignal) -> Self {
        let (a, b) = sig.support();
        Window { start: a, end: b }
    }

    /// Default window for `K` coefficients of `kernel` starting at `t_start`.
    pub fn for_kernel(kernel: &KernelSpec, k: usize, t_start: f64) -> Self {
        let span = (k as f64 + kernel.degree().unwrap_or(0) as f64) * kernel.h();
        Window { start: t_start, end: t_start + span }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn sign(self) -> i64 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Result<Self> {
        match sign {
            1 => Ok(Polarity::On),
            -1 => Ok(Polarity::Off),
            other => Err(Error::InvalidEvents(format!("polarity must be ±1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    threshold: f64,
    t0: f64,
    f_t0: f64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(threshold: f64, t0: f64, f_t0: f64, events: Vec<Event>) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::invalid(format!("threshold C must be positive, got {threshold}")));
        }
        if !t0.is_finite() || !f_t0.is_finite() {
            return Err(Error::InvalidEvents("anchor must be finite".into()));
        }
        let mut prev = t0;
        for (i, e) in events.iter().enumerate() {
            if e.t <= prev || !e.t.is_finite() {
                return Err(Error::InvalidEvents(format!(
                    "event {i} at t={} does not follow t={prev}",
                    e.t
                )));
            }
            prev = e.t;
        }
        Ok(EventStream { threshold, t0, f_t0, events })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn f_t0(&self) -> f64 {
        self.f_t0
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.t).collect()
    }

    /// Anchor time followed by every event time.
    pub fn times_with_anchor(&self) -> Vec<f64> {
        std::iter::once(self.t0).chain(self.events.iter().map(|e| e.t)).collect()
    }
}

/// `y_m = f(t0) + C Σ_{i<=m} p_i`.
pub fn t_transform(es: &EventStream) -> Vec<f64> {
    let mut level: i64 = 0;
    es.events
        .iter()
        .map(|e| {
            level += e.polarity.sign();
            es.f_t0 + es.threshold * level as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Scan cell width; `None` picks `min(h, Δ_φ) / 64`.
    pub scan_step: Option<f64>,
    /// Bracket width at which bisection stops.
    pub time_tolerance: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { scan_step: None, time_tolerance: 1e-12 }
    }
}

fn check_continuous(kernel: &KernelSpec) -> Result<()> {
    if matches!(kernel.family(), KernelFamily::BSpline { degree: 0 }) {
        return Err(Error::ContinuityRequired);
    }
    Ok(())
}

pub fn encode(sig: &SiSignal, threshold: f64, window: Window, t0: f64) -> Result<EventStream> {
    encode_with(sig, threshold, window, t0, &EncoderConfig::default())
}

pub fn encode_with(
    sig: &SiSignal,
    threshold: f64,
    window: Window,
    t0: f64,
    config: &EncoderConfig,
) -> Result<EventStream> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::invalid(format!("threshold C must be positive, got {threshold}")));
    }
    check_continuous(sig.kernel())?;
    if !(window.start <= t0 && t0 < window.end) {
        return Err(Error::invalid(format!(
            "anchor t0={t0} outside window [{}, {})",
            window.start, window.end
        )));
    }
    let step = match config.scan_step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("scan step must be positive, got {s}"))),
        None => sig.kernel().h().min(delta_phi(sig.kernel())?) / 64.0,
    };
    let tol = config.time_tolerance;

    let f_t0 = sig.eval(t0);
    let mut level: i64 = 0;
    let mut events = Vec::new();
    let mut t = t0;
    let mut f_t = f_t0;
    while t < window.end {
        let reference = f_t0 + threshold * level as f64;
        let next = (t + step).min(window.end);
        let f_next = sig.eval(next);
        let up0 = f_t - reference - threshold;
        let up1 = f_next - reference - threshold;
        let dn0 = f_t - reference + threshold;
        let dn1 = f_next - reference + threshold;
        let rising = up0 < 0.0 && up1 >= 0.0;
        let falling = dn0 > 0.0 && dn1 <= 0.0;
        if !(rising || falling) {
            t = next;
            f_t = f_next;
            continue;
        }
        let mut hit: Option<(f64, Polarity)> = None;
        if rising {
            let root = bisect(|x| sig.eval(x) - reference - threshold, t, next, tol);
            hit = Some((root, Polarity::On));
        }
        if falling {
            let root = bisect(|x| reference - threshold - sig.eval(x), t, next, tol);
            if hit.is_none_or(|(r, _)| root < r) {
                hit = Some((root, Polarity::Off));
            }
        }
        let (root, polarity) = hit.expect("a crossing was detected");
        // keep times strictly increasing even when the root sits on a cell edge
        let root = if root > t { root } else { next.min(t + tol) };
        level += polarity.sign();
        events.push(Event { t: root, polarity });
        t = root;
        f_t = sig.eval(root);
    }
    EventStream::new(threshold, t0, f_t0, events)
}

// `g(lo) < 0 <= g(hi)`; returns the midpoint of the final bracket.
fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest gap between consecutive instants.
pub fn sampling_density(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::DensityUndefined(times.len()));
    }
    let mut worst: f64 = 0.0;
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::invalid("sampling instants must be nondecreasing"));
        }
        worst = worst.max(w[1] - w[0]);
    }
    Ok(worst)
}

/// `Δ_φ = π / sup(G_{Dφ} / G_φ)`: `h` for sinc, `h η(n) / 2` for B-splines.
pub fn delta_phi(spec: &KernelSpec) -> Result<f64> {
    match spec.family() {
        KernelFamily::Sinc => Ok(spec.h()),
        KernelFamily::BSpline { degree: 0 } => Err(Error::NonDifferentiable),
        KernelFamily::BSpline { degree } => Ok(spec.h() * kernels::eta(degree)? / 2.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalThreshold {
    pub value: f64,
    /// Spacing of both the window offsets and the dense samples.
    pub grid_step: f64,
}

/// Half the smallest oscillation of `sig` over any length-`delta` sub-window
/// of `window`, estimated on a grid of step `delta / 256`.
pub fn critical_threshold(sig: &SiSignal, delta: f64, window: Window) -> Result<CriticalThreshold> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid(format!("window length Δ must be positive, got {delta}")));
    }
    if window.length() < delta {
        return Err(Error::WindowTooShort { length: window.length(), span: delta });
    }
    const PER_WINDOW: usize = 256;
    let step = delta / PER_WINDOW as f64;
    let cells = ((window.length() - delta) / step).floor() as usize + PER_WINDOW;
    let values: Vec<f64> = (0..=cells).map(|i| sig.eval(window.start + i as f64 * step)).collect();

    // Sliding extrema with monotone deques; each entry is (oscillation, argmax, argmin, offset).
    let offsets = cells - PER_WINDOW + 1;
    let mut sampled = Vec::with_capacity(offsets);
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    for i in 0..=cells {
        while maxq.back().is_some_and(|&j| values[j] <= values[i]) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| values[j] >= values[i]) {
            minq.pop_back();
        }
        minq.push_back(i);
        if i >= PER_WINDOW {
            let start = i - PER_WINDOW;
            while maxq.front().is_some_and(|&j| j < start) {
                maxq.pop_front();
            }
            while minq.front().is_some_and(|&j| j < start) {
                minq.pop_front();
            }
            let (imax, imin) = (maxq[0], minq[0]);
            sampled.push((values[imax] - values[imin], imax, imin, start));
        }
    }

    // Refining only ever raises a window's oscillation, so windows are
    // visited in increasing sampled order until none can beat the best.
    sampled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::INFINITY;
    for &(osc, imax, imin, start) in &sampled {
        if osc >= best {
            break;
        }
        let lo = window.start + start as f64 * step;
        let hi = lo + delta;
        let top = refine_extremum(sig, window.start, step, imax, lo, hi, 1.0, values[imax]);
        let bottom = -refine_extremum(sig, window.start, step, imin, lo, hi, -1.0, -values[imin]);
        best = best.min(top - bottom);
    }
    Ok(CriticalThreshold { value: 0.5 * best.max(0.0), grid_step: step })
}

// Golden-section search for the extremum of `sign * f` around grid index `i`,
// clipped to [lo, hi]. Never returns less than `seed`.
#[allow(clippy::too_many_arguments)]
fn refine_extremum(
    sig: &SiSignal,
    origin: f64,
    step: f64,
    i: usize,
    lo: f64,
    hi: f64,
    sign: f64,
    seed: f64,
) -> f64 {
    let centre = origin + i as f64 * step;
    let mut a = (centre - step).max(lo);
    let mut b = (centre + step).min(hi);
    if b <= a {
        return seed;
    }
    let g = |t: f64| sign * sig.eval(t);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut g1 = g(x1);
    let mut g2 = g(x2);
    for _ in 0..60 {
        if g1 > g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - ratio * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + ratio * (b - a);
            g2 = g(x2);
        }
    }
    seed.max(g1).max(g2)
}

/// `max f - min f` over the window, from a dense scan with `samples` points.
pub fn dynamic_range(sig: &SiSignal, window: Window, samples: usize) -> f64 {
    let samples = samples.max(2);
    let step = window.length() / (samples - 1) as f64;
    let (lo, hi) = (0..samples)
        .map(|i| sig.eval(window.start + i as f64 * step))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}
