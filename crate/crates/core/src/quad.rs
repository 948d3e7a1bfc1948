//! Quadrature for smooth and oscillatory spectral integrals.
//!
//! Two pieces:
//!
//! * [`adaptive_gk15`]: globally adaptive Gauss–Kronrod (7/15) on a real
//!   integrand. Used to locate the structure of a spectral weight (narrow
//!   resonances, endpoint behaviour) before any oscillatory factor is applied.
//! * [`FrequencyNodes`]: a fixed set of frequency nodes and weights for
//!   `∫ g(ω) e^{-iωτ} dω`. Panels from the adaptive pass are split so that
//!   none is wider than `min(base_width, π/(4τ_max))`, then filled with an
//!   8-point Gauss–Legendre rule. A 6-point rule on the same panels provides
//!   the disagreement estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Newton iteration on `P_n` from the Chebyshev initial guesses.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

pub(crate) fn gauss8() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::legendre(8))
}

pub(crate) fn gauss6() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::legendre(6))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One Kronrod panel: `(K15 estimate, |K15 - G7|)`.
pub fn gk15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

struct Queued(Panel);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.0.error == other.0.error
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.error.total_cmp(&other.0.error)
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    pub value: f64,
    pub error: f64,
    /// Accepted panels sorted by left endpoint.
    pub panels: Vec<Panel>,
}

/// Globally adaptive GK15 over `[a, b]`, starting from `initial` equal pieces.
///
/// Stops once the summed error is below `max(abs_tol, rel_tol·|I|)`; fails
/// with [`Error::NumericalFailure`] after `max_panels`.
pub fn adaptive_gk15(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<AdaptiveResult> {
    let initial = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(initial * 4);
    let (mut value, mut error) = (0.0, 0.0);
    let width = (b - a) / initial as f64;
    for i in 0..initial {
        let lo = a + width * i as f64;
        let hi = if i + 1 == initial { b } else { lo + width };
        let (v, e) = gk15(lo, hi, &mut f);
        value += v;
        error += e;
        heap.push(Queued(Panel { a: lo, b: hi, value: v, error: e }));
    }
    loop {
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::numerical("non-finite integrand in adaptive quadrature"));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            let mut panels: Vec<Panel> = heap.into_iter().map(|q| q.0).collect();
            panels.sort_by(|x, y| x.a.total_cmp(&y.a));
            // re-sum to shed drift from the running totals
            let value = panels.iter().map(|p| p.value).sum();
            let error = panels.iter().map(|p| p.error).sum();
            return Ok(AdaptiveResult { value, error, panels });
        }
        if heap.len() >= max_panels {
            return Err(Error::numerical(format!(
                "adaptive quadrature on [{a}, {b}] stalled at error {error:e} after {max_panels} panels"
            )));
        }
        let worst = heap.pop().expect("non-empty").0;
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::numerical("adaptive quadrature panel underflow"));
        }
        value -= worst.value;
        error -= worst.error;
        if heap.len() % 1024 == 0 {
            value = heap.iter().map(|q| q.0.value).sum();
            error = heap.iter().map(|q| q.0.error).sum();
        }
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (v, e) = gk15(lo, hi, &mut f);
            value += v;
            error += e;
            heap.push(Queued(Panel { a: lo, b: hi, value: v, error: e }));
        }
        error = error.max(0.0);
    }
}

/// Nodes `ω_k` and weights `w_k` such that `Σ w_k e^{-iω_k τ}` approximates
/// `∫ g(ω) e^{-iωτ} dω` for `0 ≤ τ ≤ tau_max`.
#[derive(Debug, Clone, Default)]
pub struct FrequencyNodes {
    omega: Vec<f64>,
    weight: Vec<f64>,
}

/// How panel endpoints map to frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelVariable {
    /// Panels are in `ω` directly.
    Linear,
    /// Panels are in `u = ln ω`; the Jacobian `e^u` is folded into the weights.
    Log,
}

impl FrequencyNodes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn push(&mut self, omega: f64, weight: f64) {
        self.omega.push(omega);
        self.weight.push(weight);
    }

    /// `Σ w_k`, the `τ = 0` value.
    pub fn total(&self) -> f64 {
        self.weight.iter().sum()
    }

    pub fn transform(&self, tau: f64) -> Complex64 {
        self.omega.iter().zip(&self.weight).map(|(&w, &g)| Complex64::from_polar(g, -w * tau)).sum()
    }

    /// `transform(j·h)` for `j = 0..n`, by phase recurrence.
    ///
    /// Phases are re-seeded from `exp` every 512 steps so the accumulated
    /// rounding stays at the 1e-13 level over long grids.
    pub fn transform_grid(&self, h: f64, n: usize) -> Vec<Complex64> {
        const RESEED: usize = 512;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let step: Vec<Complex64> = self.omega.iter().map(|&w| Complex64::from_polar(1.0, -w * h)).collect();
        let mut phase: Vec<Complex64> = self.weight.iter().map(|&g| Complex64::new(g, 0.0)).collect();
        for (j, slot) in out.iter_mut().enumerate() {
            if j > 0 && j % RESEED == 0 {
                let t = j as f64 * h;
                for ((p, &w), &g) in phase.iter_mut().zip(&self.omega).zip(&self.weight) {
                    *p = Complex64::from_polar(g, -w * t);
                }
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, s) in phase.iter_mut().zip(&step) {
                acc += *p;
                *p *= s;
            }
            *slot = acc;
        }
        out
    }

    fn extend_from(&mut self, other: FrequencyNodes) {
        self.omega.extend(other.omega);
        self.weight.extend(other.weight);
    }
}

/// Width limit for panels used up to `tau_max`.
pub fn oscillation_width(base_width: f64, tau_max: f64) -> f64 {
    if tau_max > 0.0 {
        base_width.min(PI / (4.0 * tau_max))
    } else {
        base_width
    }
}

/// Fill `panels` with Gauss–Legendre nodes of `g`, splitting each panel so its
/// frequency width is at most `max_width`.
pub fn fill_panels(
    g: &mut impl FnMut(f64) -> f64,
    panels: &[(f64, f64)],
    variable: PanelVariable,
    max_width: f64,
    rule: &GaussRule,
) -> FrequencyNodes {
    let mut nodes = FrequencyNodes::new();
    for &(lo, hi) in panels {
        let freq_width = match variable {
            PanelVariable::Linear => hi - lo,
            // the upper piece of a log panel is the widest in ω
            PanelVariable::Log => hi.exp() * (hi - lo),
        };
        let pieces = ((freq_width / max_width).ceil() as usize).max(1);
        let dx = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let a = lo + dx * p as f64;
            let b = if p + 1 == pieces { hi } else { a + dx };
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let v = mid + half * x;
                let (omega, jac) = match variable {
                    PanelVariable::Linear => (v, 1.0),
                    PanelVariable::Log => (v.exp(), v.exp()),
                };
                nodes.push(omega, w * half * jac * g(omega));
            }
        }
    }
    nodes
}

/// Node set for one integration region, checked by rule disagreement.
#[derive(Debug, Clone, Copy)]
pub struct RegionSpec {
    pub lo: f64,
    pub hi: f64,
    pub variable: PanelVariable,
    pub initial_panels: usize,
}

/// Build frequency nodes for `∫ g(ω) e^{-iωτ} dω` over the union of `regions`.
///
/// Each region is first resolved adaptively on `g` alone, then split for
/// oscillation up to `tau_max`. The 8-point result is compared against a
/// 6-point rule on the same panels at `τ = 0` and `τ = tau_max`; disagreement
/// above `tol` is reported as [`Error::NumericalFailure`].
pub fn build_frequency_nodes(
    mut g: impl FnMut(f64) -> f64,
    regions: &[RegionSpec],
    tau_max: f64,
    base_width: f64,
    tol: f64,
) -> Result<FrequencyNodes> {
    let max_width = oscillation_width(base_width, tau_max);
    let mut primary = FrequencyNodes::new();
    let mut check = FrequencyNodes::new();
    for region in regions {
        if region.hi <= region.lo {
            continue;
        }
        let adaptive = match region.variable {
            PanelVariable::Linear => {
                adaptive_gk15(&mut g, region.lo, region.hi, region.initial_panels, tol * 1e-2, 1e-13, 200_000)?
            }
            PanelVariable::Log => adaptive_gk15(
                |u: f64| {
                    let w = u.exp();
                    g(w) * w
                },
                region.lo,
                region.hi,
                region.initial_panels,
                tol * 1e-2,
                1e-13,
                200_000,
            )?,
        };
        let panels: Vec<(f64, f64)> = adaptive.panels.iter().map(|p| (p.a, p.b)).collect();
        primary.extend_from(fill_panels(&mut g, &panels, region.variable, max_width, gauss8()));
        check.extend_from(fill_panels(&mut g, &panels, region.variable, max_width, gauss6()));
    }
    for tau in [0.0, tau_max] {
        let diff = (primary.transform(tau) - check.transform(tau)).norm();
        if !diff.is_finite() || diff > tol {
            return Err(Error::numerical(format!(
                "oscillatory quadrature panel estimates disagree by {diff:e} at tau = {tau}"
            )));
        }
    }
    Ok(primary)
}

/// `∫_a^b g(ω) e^{-iωτ} dω` with the panel scheme above.
pub fn oscillatory_integral(
    g: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tau: f64,
    base_width: f64,
    tol: f64,
) -> Result<Complex64> {
    let initial = (((b - a) / base_width).ceil() as usize).clamp(1, 100_000);
    let nodes = build_frequency_nodes(
        g,
        &[RegionSpec { lo: a, hi: b, variable: PanelVariable::Linear, initial_panels: initial }],
        tau,
        base_width,
        tol,
    )?;
    Ok(nodes.transform(tau))
}
