//! The decoherence amplitude `c(t)`.
//!
//! `c` obeys `ċ(t) = -∫₀ᵗ f(t-s) c(s) ds` with `c(0) = 1`, where `f` is the
//! correlation kernel of the spectral density. Three routes are provided:
//!
//! * the closed form for the full Lorentzian ([`LorentzianAmplitude`]);
//! * the spectral decomposition for the Ohmic model ([`OhmicAmplitude`]),
//!   bound-state residue plus branch-cut integral;
//! * a product-integration solver for any kernel ([`volterra_solve`]).
//!
//! Time-local rates `γ(t) = -2 Re(ċ/c)` and `S(t) = -2 Im(ċ/c)` come from
//! [`decay_rates`].

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::quad::{build_frequency_nodes, FrequencyNodes, PanelVariable, RegionSpec};
use crate::special::EULER_GAMMA;
use crate::spectral::{bound_state, branch_cut_weight, BoundState, LorentzianParams, OhmicParams, SpectralDensity};
use crate::{Error, Result};

/// `|c|` below which an amplitude counts as decayed when picking a horizon.
pub const HORIZON_THRESHOLD: f64 = 1e-4;
/// `|c|` below which decay rates are masked.
pub const RATE_MASK_THRESHOLD: f64 = 1e-8;
/// Allowed excess of `|c|` over one.
pub const MODULUS_SLACK: f64 = 1e-9;
/// Step-doubling error estimate above which a Volterra trace is flagged.
pub const STEP_WARNING: f64 = 1e-3;

const OHMIC_QUAD_TOL: f64 = 1e-7;
/// Lower edge of the log-frequency region, in units of `ω_c`.
const OHMIC_LOG_FLOOR: f64 = 1e-250;
const OHMIC_LOG_TOP: f64 = 0.25;
const OHMIC_CUTOFF: f64 = 40.0;

/// Anything that yields `c(t)` for `t ≥ 0`.
pub trait Amplitude: Sync {
    fn amplitude(&self, t: f64) -> Result<Complex64>;
}

impl<A: Amplitude + ?Sized> Amplitude for &A {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        (**self).amplitude(t)
    }
}

impl<A: Amplitude + ?Sized> Amplitude for Box<A> {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        (**self).amplitude(t)
    }
}

/// Wraps a plain function as an [`Amplitude`].
#[derive(Debug, Clone, Copy)]
pub struct FnAmplitude<F>(pub F);

impl<F: Fn(f64) -> Complex64 + Sync> Amplitude for FnAmplitude<F> {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        Ok((self.0)(t))
    }
}

/// Memoryless decay `c(t) = e^{-γ₀t/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialAmplitude {
    pub gamma0: f64,
}

impl Amplitude for ExponentialAmplitude {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        check_time(t)?;
        Ok(Complex64::new((-0.5 * self.gamma0 * t).exp(), 0.0))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be finite and >= 0, got {t}")))
    }
}

/// Closed-form amplitude for the full Lorentzian spectrum.
///
/// `c(t) = e^{-λt/2}[cosh(dt/2) + (λ/d) sinh(dt/2)]`, `d = √(λ² - 2γ₀λ)`.
/// The value is real for every `R`; the oscillatory branch `R > ½` is written
/// with `cos`/`sin` directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianAmplitude {
    gamma0: f64,
    lambda: f64,
}

impl LorentzianAmplitude {
    pub fn new(gamma0: f64, lambda: f64) -> Result<Self> {
        let p = LorentzianParams::new(gamma0, lambda, 1.0)?;
        Ok(Self::from_params(&p))
    }

    pub fn from_params(p: &LorentzianParams) -> Self {
        Self { gamma0: p.gamma0(), lambda: p.lambda() }
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `c(t)` for `t ≥ 0` (not checked).
    pub fn eval(&self, t: f64) -> f64 {
        let (g0, lam) = (self.gamma0, self.lambda);
        let a = 0.5 * lam;
        // q = (d/2)², written to avoid cancellation near R = ½
        let q = 0.25 * lam * (lam - 2.0 * g0);
        let x = q * t * t;
        if x.abs() <= 1.0 {
            // cosh(√x) and sinh(√x)/√x as even series; exact at R = ½
            let (mut ch, mut sh) = (0.0, 0.0);
            let (mut tc, mut ts) = (1.0, 1.0);
            for k in 0..15 {
                ch += tc;
                sh += ts;
                let k2 = 2.0 * k as f64;
                tc *= x / ((k2 + 1.0) * (k2 + 2.0));
                ts *= x / ((k2 + 2.0) * (k2 + 3.0));
            }
            (-a * t).exp() * (ch + a * t * sh)
        } else if q > 0.0 {
            let b = q.sqrt();
            let slow = 0.5 * g0 * lam / (a + b);
            0.5 * (1.0 + a / b) * (-slow * t).exp() + 0.5 * (1.0 - a / b) * (-(a + b) * t).exp()
        } else {
            let nu = (-q).sqrt();
            (-a * t).exp() * ((nu * t).cos() + a / nu * (nu * t).sin())
        }
    }
}

impl Amplitude for LorentzianAmplitude {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        check_time(t)?;
        Ok(Complex64::new(self.eval(t), 0.0))
    }
}

/// Closed-form Lorentzian amplitude at a single time.
pub fn lorentzian_amplitude(gamma0: f64, lambda: f64, t: f64) -> Result<Complex64> {
    LorentzianAmplitude::new(gamma0, lambda)?.amplitude(t)
}

/// How a trace was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeMethod {
    ClosedForm,
    SpectralIntegral,
    Volterra,
}

impl fmt::Display for AmplitudeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed-form",
            Self::SpectralIntegral => "spectral-integral",
            Self::Volterra => "volterra",
        })
    }
}

impl FromStr for AmplitudeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(Self::ClosedForm),
            "spectral-integral" => Ok(Self::SpectralIntegral),
            "volterra" => Ok(Self::Volterra),
            other => Err(Error::Parse(format!("unknown amplitude method {other:?}"))),
        }
    }
}

/// Sampled `c(t)` on a grid starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrace {
    grid: Vec<f64>,
    values: Vec<Complex64>,
    method: AmplitudeMethod,
    step: f64,
    warning: Option<String>,
}

impl AmplitudeTrace {
    /// Checks `grid[0] = 0`, strictly increasing grid, `c(0) = 1` and
    /// `|c| ≤ 1 + 10⁻⁹`.
    pub fn new(grid: Vec<f64>, values: Vec<Complex64>, method: AmplitudeMethod, step: f64) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::invalid("grid and values differ in length"));
        }
        if grid.len() < 2 {
            return Err(Error::invalid("a trace needs at least two samples"));
        }
        if grid[0] != 0.0 {
            return Err(Error::invalid("trace grid must start at t = 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid("trace grid must be finite and strictly increasing"));
        }
        if values[0] != Complex64::new(1.0, 0.0) {
            return Err(Error::invalid(format!("trace must start at c(0) = 1, got {}", values[0])));
        }
        for (t, c) in grid.iter().zip(&values) {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::numerical(format!("non-finite amplitude at t = {t}")));
            }
            if c.norm() > 1.0 + MODULUS_SLACK {
                return Err(Error::numerical(format!("|c| = {} exceeds one at t = {t}", c.norm())));
            }
        }
        Ok(Self { grid, values, method, step, warning: None })
    }

    /// Samples `amp` on `0, h, 2h, …` up to and including `t_max`.
    pub fn sample(amp: &impl Amplitude, t_max: f64, step: f64, method: AmplitudeMethod) -> Result<Self> {
        if !(t_max > 0.0 && step > 0.0) {
            return Err(Error::invalid("sampling needs t_max > 0 and step > 0"));
        }
        let n = (t_max / step - 1e-9).ceil().max(1.0) as usize;
        let grid: Vec<f64> = (0..=n).map(|j| j as f64 * step).collect();
        let values = grid.iter().map(|&t| amp.amplitude(t)).collect::<Result<Vec<_>>>()?;
        Self::new(grid, values, method, step)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn method(&self) -> AmplitudeMethod {
        self.method
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn set_warning(&mut self, msg: impl Into<String>) {
        self.warning = Some(msg.into());
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.grid.last().expect("trace is never empty")
    }

    /// Drops samples after `t_end`, keeping at least four.
    pub fn truncate(&mut self, t_end: f64) {
        let keep = self.grid.partition_point(|&t| t <= t_end).max(4).min(self.grid.len());
        self.grid.truncate(keep);
        self.values.truncate(keep);
    }

    /// Cubic (four-point Lagrange) interpolation; exact at grid nodes.
    pub fn amplitude_at(&self, t: f64) -> Result<Complex64> {
        let t_end = self.t_max();
        if !(t >= 0.0 && t <= t_end * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("t = {t} outside trace range [0, {t_end}]")));
        }
        let n = self.grid.len();
        let k = self.grid.partition_point(|&g| g <= t).saturating_sub(1);
        if self.grid[k] == t {
            return Ok(self.values[k]);
        }
        let width = n.min(4);
        let start = k.saturating_sub(1).min(n - width);
        let xs = &self.grid[start..start + width];
        let ys = &self.values[start..start + width];
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..width {
            let mut w = 1.0;
            for j in 0..width {
                if i != j {
                    w *= (t - xs[j]) / (xs[i] - xs[j]);
                }
            }
            acc += ys[i] * w;
        }
        Ok(acc)
    }

    /// CSV with `#`-prefixed metadata lines, then `t,re_c,im_c`.
    pub fn write_csv(&self, mut out: impl Write, params: &[(&str, String)]) -> Result<()> {
        writeln!(out, "# method={}", self.method)?;
        writeln!(out, "# step={:.16e}", self.step)?;
        for (k, v) in params {
            writeln!(out, "# {k}={v}")?;
        }
        if let Some(w) = &self.warning {
            writeln!(out, "# warning={w}")?;
        }
        writeln!(out, "t,re_c,im_c")?;
        for (t, c) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", t, c.re, c.im)?;
        }
        Ok(())
    }

    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut method = None;
        let mut step = None;
        let mut warning = None;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "method" => method = Some(v.trim().parse::<AmplitudeMethod>()?),
                        "step" => step = Some(v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("step: {e}")))?),
                        "warning" => warning = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with('t') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected t,re_c,im_c", lineno + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)));
            grid.push(num(cols[0])?);
            values.push(Complex64::new(num(cols[1])?, num(cols[2])?));
        }
        let method = method.ok_or_else(|| Error::Parse("missing `# method=` header".into()))?;
        let step = step.ok_or_else(|| Error::Parse("missing `# step=` header".into()))?;
        let mut trace = Self::new(grid, values, method, step)?;
        trace.warning = warning;
        Ok(trace)
    }
}

impl Amplitude for AmplitudeTrace {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        self.amplitude_at(t)
    }
}

/// Time-local rates of the master equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRates {
    pub grid: Vec<f64>,
    /// `γ(t)`; NaN where masked.
    pub gamma: Vec<f64>,
    /// `S(t)`; NaN where masked.
    pub s_shift: Vec<f64>,
    pub valid_mask: Vec<bool>,
}

/// Rates from three-point differences of the trace.
///
/// Central differences inside (the nonuniform three-point formula on an
/// irregular grid), second-order one-sided ones at both ends. Samples with
/// `|c| < 10⁻⁸` are masked.
pub fn decay_rates(trace: &AmplitudeTrace) -> Result<DecayRates> {
    let t = trace.grid();
    let c = trace.values();
    let n = t.len();
    if n < 3 {
        return Err(Error::invalid("decay rates need at least three samples"));
    }
    let mut gamma = Vec::with_capacity(n);
    let mut s_shift = Vec::with_capacity(n);
    let mut valid_mask = Vec::with_capacity(n);
    for i in 0..n {
        let dc = if i == 0 {
            let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
            c[0] * (-(2.0 * h1 + h2) / (h1 * (h1 + h2))) + c[1] * ((h1 + h2) / (h1 * h2))
                - c[2] * (h1 / (h2 * (h1 + h2)))
        } else if i == n - 1 {
            let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
            c[n - 3] * (h2 / (h1 * (h1 + h2))) - c[n - 2] * ((h1 + h2) / (h1 * h2))
                + c[n - 1] * ((h1 + 2.0 * h2) / (h2 * (h1 + h2)))
        } else {
            let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            c[i - 1] * (-h2 / (h1 * (h1 + h2))) + c[i] * ((h2 - h1) / (h1 * h2)) + c[i + 1] * (h1 / (h2 * (h1 + h2)))
        };
        let valid = c[i].norm() >= RATE_MASK_THRESHOLD;
        if valid {
            let r = dc / c[i];
            gamma.push(-2.0 * r.re);
            s_shift.push(-2.0 * r.im);
        } else {
            gamma.push(f64::NAN);
            s_shift.push(f64::NAN);
        }
        valid_mask.push(valid);
    }
    Ok(DecayRates { grid: t.to_vec(), gamma, s_shift, valid_mask })
}

/// Product-integration state for `ċ = -∫ f(t-s) c(s) ds` on a uniform grid.
///
/// Trapezoidal weights for the memory integral and the trapezoidal rule for
/// `c` itself. The new value enters both linearly, so the implicit step is
/// solved exactly.
struct Volterra {
    h: f64,
    kernel: Vec<Complex64>,
    c: Vec<Complex64>,
    dc: Vec<Complex64>,
}

impl Volterra {
    fn new(h: f64) -> Self {
        Self { h, kernel: Vec::new(), c: vec![Complex64::new(1.0, 0.0)], dc: vec![Complex64::new(0.0, 0.0)] }
    }

    fn steps(&self) -> usize {
        self.c.len() - 1
    }

    /// Advances to `n` steps.
    fn extend(&mut self, n: usize, kernel: &mut impl FnMut(f64) -> Result<Complex64>) -> Result<()> {
        let h = self.h;
        while self.kernel.len() <= n {
            let tau = self.kernel.len() as f64 * h;
            self.kernel.push(kernel(tau)?);
        }
        self.c.reserve(n + 1 - self.c.len().min(n + 1));
        let f0 = self.kernel[0];
        let denom = 1.0 + 0.25 * h * h * f0;
        for m in self.c.len()..=n {
            let f = &self.kernel;
            let c = &self.c;
            let mut acc = f[m] * (0.5 * c[0]);
            for (fj, cj) in f[1..m].iter().rev().zip(&c[1..m]) {
                acc += fj * cj;
            }
            let s = acc * h;
            let cm = (c[m - 1] + (self.dc[m - 1] - s) * (0.5 * h)) / denom;
            if !cm.re.is_finite() || !cm.im.is_finite() {
                return Err(Error::numerical(format!("Volterra solution diverged at t = {}", m as f64 * h)));
            }
            let dcm = -s - f0 * cm * (0.5 * h);
            self.c.push(cm);
            self.dc.push(dcm);
        }
        Ok(())
    }

    fn into_trace(self) -> Result<AmplitudeTrace> {
        let grid = (0..self.c.len()).map(|j| j as f64 * self.h).collect();
        AmplitudeTrace::new(grid, self.c, AmplitudeMethod::Volterra, self.h)
    }
}

/// Max difference between the `h` solution and a `2h` solution, divided by
/// three (the leading error of the finer one for a second-order scheme).
fn doubling_estimate(fine: &Volterra, kernel: &mut impl FnMut(f64) -> Result<Complex64>) -> Result<f64> {
    let n = fine.steps() / 2;
    if n < 2 {
        return Ok(0.0);
    }
    let mut coarse = Volterra::new(2.0 * fine.h);
    coarse.extend(n, kernel)?;
    let diff = (0..=n).map(|k| (fine.c[2 * k] - coarse.c[k]).norm()).fold(0.0, f64::max);
    Ok(diff / 3.0)
}

fn finish_volterra(solver: Volterra, kernel: &mut impl FnMut(f64) -> Result<Complex64>) -> Result<AmplitudeTrace> {
    let estimate = doubling_estimate(&solver, kernel)?;
    let h = solver.h;
    let mut trace = solver.into_trace()?;
    if estimate > STEP_WARNING {
        trace.set_warning(format!("step {h:e} too coarse: doubling error estimate {estimate:.3e}"));
    }
    Ok(trace)
}

/// Solves the amplitude equation for `sd` on `0, h, …, ⌈t_max/h⌉h`.
///
/// Second order in `h`. A step-doubling comparison is run alongside; if it
/// estimates an error above `10⁻³` the trace carries a warning.
pub fn volterra_solve(sd: &SpectralDensity, t_max: f64, step: f64) -> Result<AmplitudeTrace> {
    let mut kernel = |tau: f64| sd.correlation_kernel(tau);
    volterra_solve_kernel(&mut kernel, t_max, step)
}

/// [`volterra_solve`] for an arbitrary kernel `f(τ)`.
pub fn volterra_solve_kernel(
    kernel: &mut impl FnMut(f64) -> Result<Complex64>,
    t_max: f64,
    step: f64,
) -> Result<AmplitudeTrace> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid(format!("t_max must be finite and > 0, got {t_max}")));
    }
    if !(step > 0.0 && step <= t_max / 10.0) {
        return Err(Error::invalid(format!("step must lie in (0, t_max/10], got {step}")));
    }
    let n = (t_max / step - 1e-9).ceil() as usize;
    let mut solver = Volterra::new(step);
    solver.extend(n, kernel)?;
    finish_volterra(solver, kernel)
}

/// Index of the last sample where `dev` is at or above `HORIZON_THRESHOLD`.
fn last_exceedance(dev: &[f64]) -> usize {
    dev.iter().rposition(|&d| d >= HORIZON_THRESHOLD).unwrap_or(0)
}

/// Runs the solver, doubling the span until `|c|` has stayed below the
/// horizon threshold for the second half of it or `cap` is reached.
/// Returns the trace truncated at the horizon, and the horizon.
fn volterra_until_decayed(
    kernel: &mut impl FnMut(f64) -> Result<Complex64>,
    h: f64,
    cap: f64,
) -> Result<(AmplitudeTrace, f64)> {
    let n_cap = (cap / h).ceil() as usize;
    let mut n = n_cap.clamp(20, 2048);
    let mut solver = Volterra::new(h);
    let horizon = loop {
        solver.extend(n, kernel)?;
        let moduli: Vec<f64> = solver.c.iter().map(|c| c.norm()).collect();
        let last = last_exceedance(&moduli);
        if n >= n_cap || 2 * last < n {
            break ((last + 1) as f64 * h).min(cap).max(10.0 * h);
        }
        n = (2 * n).min(n_cap);
    };
    let mut trace = finish_volterra(solver, kernel)?;
    trace.truncate(horizon);
    Ok((trace, horizon))
}

/// Spectral decomposition of the Ohmic amplitude,
/// `c(t) = e^{iω₀t}[𝒵e^{-iω′t} + ∫₀^∞ V(ω) e^{-iωt} dω]` with the branch-cut
/// weight `V = J/([ω - ω₀ - Σ]² + π²J²)`.
///
/// Frequency nodes are built once for times up to `tau_max`: log-spaced panels
/// from `10⁻²⁵⁰ω_c` to `ω_c/4`, where the weight varies on a logarithmic
/// scale, and linear panels up to `40ω_c`. At the threshold `αω_c = ω₀` the
/// weight decays only like `1/(ω ln²ω)` at small `ω`, so the part below the
/// lowest node is added as a zero-frequency mass in closed form.
#[derive(Debug, Clone)]
pub struct OhmicAmplitude {
    params: OhmicParams,
    bound: Option<BoundState>,
    nodes: FrequencyNodes,
    point_mass: f64,
    tau_max: f64,
}

impl OhmicAmplitude {
    pub fn new(params: OhmicParams, tau_max: f64) -> Result<Self> {
        if !(tau_max >= 0.0 && tau_max.is_finite()) {
            return Err(Error::invalid(format!("tau_max must be finite and >= 0, got {tau_max}")));
        }
        let bound = bound_state(&params)?;
        let wc = params.omega_c();
        let weight = |w: f64| branch_cut_weight(&params, w).unwrap_or(f64::NAN);
        let regions = [
            RegionSpec {
                lo: (OHMIC_LOG_FLOOR * wc).ln(),
                hi: (OHMIC_LOG_TOP * wc).ln(),
                variable: PanelVariable::Log,
                initial_panels: 64,
            },
            RegionSpec {
                lo: OHMIC_LOG_TOP * wc,
                hi: OHMIC_CUTOFF * wc,
                variable: PanelVariable::Linear,
                initial_panels: 160,
            },
        ];
        let nodes = build_frequency_nodes(weight, &regions, tau_max, 0.25 * wc, OHMIC_QUAD_TOL)?;
        let gap = params.alpha() * wc - params.omega0();
        let point_mass = if gap.abs() <= 1e-12 * params.omega0() {
            let alpha = params.alpha();
            let b = EULER_GAMMA - 1.0 / alpha;
            let u = OHMIC_LOG_FLOOR.ln();
            (0.5 * PI + ((u + b) / PI).atan()) / (alpha * PI)
        } else {
            0.0
        };
        Ok(Self { params, bound, nodes, point_mass, tau_max })
    }

    pub fn params(&self) -> &OhmicParams {
        &self.params
    }

    pub fn bound_state(&self) -> Option<BoundState> {
        self.bound
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `𝒵 + ∫V`, which should be one.
    pub fn sum_rule(&self) -> f64 {
        self.bound.map_or(0.0, |b| b.z_weight) + self.point_mass + self.nodes.total()
    }

    /// The non-decaying part `𝒵e^{i(ω₀-ω′)t}` (zero without a bound state).
    pub fn persistent_part(&self, t: f64) -> Complex64 {
        match self.bound {
            Some(b) => Complex64::from_polar(b.z_weight, (self.params.omega0() - b.omega_prime) * t),
            None => Complex64::new(0.0, 0.0),
        }
    }

    fn assemble(&self, t: f64, branch: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.params.omega0() * t) * (branch + self.point_mass) + self.persistent_part(t)
    }

    pub fn value(&self, t: f64) -> Result<Complex64> {
        check_time(t)?;
        if t > self.tau_max * (1.0 + 1e-12) {
            return Err(Error::domain(format!("t = {t} beyond the resolved range {}", self.tau_max)));
        }
        Ok(self.assemble(t, self.nodes.transform(t)))
    }

    /// `c` on `0, h, …, nh`; `c(0)` is stored as exactly one.
    pub fn trace(&self, h: f64, n: usize) -> Result<AmplitudeTrace> {
        if !(h > 0.0) || n == 0 {
            return Err(Error::invalid("trace needs h > 0 and n >= 1"));
        }
        if n as f64 * h > self.tau_max * (1.0 + 1e-12) {
            return Err(Error::domain("trace extends beyond the resolved range"));
        }
        let branch = self.nodes.transform_grid(h, n + 1);
        let grid: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
        let mut values: Vec<Complex64> = grid.iter().zip(&branch).map(|(&t, &b)| self.assemble(t, b)).collect();
        let start_error = (values[0] - 1.0).norm();
        values[0] = Complex64::new(1.0, 0.0);
        let mut trace = AmplitudeTrace::new(grid, values, AmplitudeMethod::SpectralIntegral, h)?;
        if start_error > 1e-6 {
            trace.set_warning(format!("sum rule violated by {start_error:.3e}"));
        }
        Ok(trace)
    }
}

impl Amplitude for OhmicAmplitude {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        self.value(t)
    }
}

/// Ohmic amplitude at a single time. Builds the frequency nodes afresh; use
/// [`OhmicAmplitude`] directly for many times.
pub fn ohmic_amplitude(sd: &SpectralDensity, t: f64) -> Result<Complex64> {
    let SpectralDensity::Ohmic(p) = sd else {
        return Err(Error::invalid(format!("ohmic_amplitude needs an Ohmic spectrum, got {}", sd.kind_name())));
    };
    check_time(t)?;
    OhmicAmplitude::new(*p, t)?.value(t)
}

/// Overrides for [`prepare`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AmplitudeOptions {
    pub horizon: Option<f64>,
    pub step: Option<f64>,
}

/// The amplitude used for a model: closed form where one exists, else a trace.
#[derive(Debug, Clone)]
pub enum ModelAmplitude {
    ClosedForm(LorentzianAmplitude),
    Trace(AmplitudeTrace),
}

impl Amplitude for ModelAmplitude {
    fn amplitude(&self, t: f64) -> Result<Complex64> {
        match self {
            Self::ClosedForm(a) => a.amplitude(t),
            Self::Trace(tr) => tr.amplitude_at(t),
        }
    }
}

/// Amplitude of a model together with the time window that matters for it.
#[derive(Debug, Clone)]
pub struct PreparedAmplitude {
    pub amplitude: ModelAmplitude,
    /// Smallest `t` beyond which `c` has decayed to its long-time form within
    /// `10⁻⁴`, or the cap for the model.
    pub horizon: f64,
    /// Shortest dynamical time scale of the model.
    pub time_scale: f64,
    pub warnings: Vec<String>,
}

impl PreparedAmplitude {
    /// A trace over `[0, horizon]`. Closed forms are sampled at `step`
    /// (default `horizon/2000`); traces are returned as computed.
    pub fn to_trace(&self, step: Option<f64>) -> Result<AmplitudeTrace> {
        match &self.amplitude {
            ModelAmplitude::ClosedForm(a) => {
                let h = step.unwrap_or(self.horizon / 2000.0);
                AmplitudeTrace::sample(a, self.horizon, h, AmplitudeMethod::ClosedForm)
            }
            ModelAmplitude::Trace(t) => Ok(t.clone()),
        }
    }
}

fn positive_override(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(Error::invalid(format!("{name} must be finite and > 0, got {x}")))
        }
        other => Ok(other),
    }
}

/// Computes the amplitude of `sd` and its horizon.
///
/// Default horizons are the smallest time beyond which `|c|` stays below
/// `10⁻⁴` (for the Ohmic model, `|c - c_∞|` with `c_∞` the bound-state part),
/// capped at `50/min(γ₀, λ)` for Lorentzian spectra, `200/ω_c` for the Ohmic
/// one and `200/ω₀` for tabulated ones.
pub fn prepare(sd: &SpectralDensity, opts: &AmplitudeOptions) -> Result<PreparedAmplitude> {
    let horizon_override = positive_override("horizon", opts.horizon)?;
    let step_override = positive_override("step", opts.step)?;
    match sd {
        SpectralDensity::Lorentzian(p) => {
            let amp = LorentzianAmplitude::from_params(p);
            let horizon = match horizon_override {
                Some(h) => h,
                None => {
                    let cap = 50.0 / p.gamma0().min(p.lambda());
                    let n = 20_000;
                    let dt = cap / n as f64;
                    let moduli: Vec<f64> = (0..=n).map(|j| amp.eval(j as f64 * dt).abs()).collect();
                    let last = last_exceedance(&moduli);
                    ((last + 1) as f64 * dt).min(cap)
                }
            };
            Ok(PreparedAmplitude {
                amplitude: ModelAmplitude::ClosedForm(amp),
                horizon,
                time_scale: 1.0 / p.gamma0().max(p.lambda()),
                warnings: Vec::new(),
            })
        }
        SpectralDensity::TruncatedLorentzian(p) => {
            let h = step_override.unwrap_or((0.01 / p.lambda().max(p.gamma0())).min(0.3 / p.omega0()));
            let cap = 50.0 / p.gamma0().min(p.lambda());
            let time_scale = 1.0 / p.gamma0().max(p.lambda());
            volterra_prepared(sd, h, cap, horizon_override, time_scale)
        }
        SpectralDensity::Tabulated(t) => {
            let f0 = sd.correlation_kernel(0.0)?.norm();
            let rate = t.max_detuning().max(f0.sqrt()).max(1e-12 * t.omega0());
            let h = step_override.unwrap_or(0.05 / rate);
            let cap = 200.0 / t.omega0();
            volterra_prepared(sd, h, cap, horizon_override, 1.0 / rate)
        }
        SpectralDensity::Ohmic(p) => prepare_ohmic(p, horizon_override, step_override),
    }
}

fn volterra_prepared(
    sd: &SpectralDensity,
    h: f64,
    cap: f64,
    horizon: Option<f64>,
    time_scale: f64,
) -> Result<PreparedAmplitude> {
    let mut kernel = |tau: f64| sd.correlation_kernel(tau);
    let (trace, horizon) = match horizon {
        Some(t) => (volterra_solve_kernel(&mut kernel, t, h.min(t / 10.0))?, t),
        None => volterra_until_decayed(&mut kernel, h, cap)?,
    };
    let warnings = trace.warning().map(str::to_string).into_iter().collect();
    Ok(PreparedAmplitude { amplitude: ModelAmplitude::Trace(trace), horizon, time_scale, warnings })
}

fn prepare_ohmic(p: &OhmicParams, horizon: Option<f64>, step: Option<f64>) -> Result<PreparedAmplitude> {
    let wc = p.omega_c();
    let cap = 200.0 / wc;
    let tau_max = horizon.unwrap_or(cap);
    let amp = OhmicAmplitude::new(*p, tau_max)?;
    let mut h = (0.02 / wc).min(0.02 / p.omega0());
    if let Some(b) = amp.bound_state() {
        h = h.min(0.1 / (p.omega0() - b.omega_prime));
    }
    let h = step.unwrap_or(h).min(tau_max / 10.0);
    let n = (tau_max / h - 1e-9).ceil() as usize;
    let h = tau_max / n as f64;
    let mut trace = amp.trace(h, n)?;
    let horizon = match horizon {
        Some(t) => t,
        None => {
            let dev: Vec<f64> =
                trace.grid().iter().zip(trace.values()).map(|(&t, &c)| (c - amp.persistent_part(t)).norm()).collect();
            let last = last_exceedance(&dev);
            ((last + 1) as f64 * h).min(cap).max(10.0 * h)
        }
    };
    trace.truncate(horizon);
    let warnings = trace.warning().map(str::to_string).into_iter().collect();
    Ok(PreparedAmplitude {
        amplitude: ModelAmplitude::Trace(trace),
        horizon,
        time_scale: 1.0 / wc.max(p.omega0()).max(p.alpha() * wc),
        warnings,
    })
}
