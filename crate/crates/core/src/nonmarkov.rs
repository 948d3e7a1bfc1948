//! Divisibility gap and the non-Markovianity measure `N_M`.
//!
//! The gap is the trace distance between the Choi matrices of the direct map
//! `T(τ₂₀)` and the composition `T(τ₂₁)T(τ₁₀)`, with `τ₂₀ = τ₁₀ + τ₂₁`.
//! `N_M` is its maximum over the two offsets.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::amplitude::{prepare, Amplitude, AmplitudeOptions, PreparedAmplitude};
use crate::maps::{compose, trace_distance, DensityMatrix, QubitChannel};
use crate::optimize::NelderMead;
use crate::spectral::SpectralDensity;
use crate::{Error, Result};

/// The intermediate quantities of the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GapTerms {
    /// `M = c₂₀ - c₁₀c₂₁`, `N = c₂₀ + c₁₀c₂₁`.
    Real { m: f64, n: f64 },
    /// `M′ = |c₂₀|² - |c₁₀c₂₁|²`, `N′ = |c₂₀|² + |c₁₀c₂₁|²`,
    /// `K = Re[c₂₀ c₁₀* c₂₁*]`.
    Complex { m_prime: f64, n_prime: f64, k: f64 },
}

impl GapTerms {
    pub fn of(c20: Complex64, c10: Complex64, c21: Complex64) -> Self {
        let p = c10 * c21;
        if c20.im == 0.0 && p.im == 0.0 {
            GapTerms::Real { m: c20.re - p.re, n: c20.re + p.re }
        } else {
            GapTerms::Complex {
                m_prime: c20.norm_sqr() - p.norm_sqr(),
                n_prime: c20.norm_sqr() + p.norm_sqr(),
                k: (c20 * p.conj()).re,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub tau10: f64,
    pub tau21: f64,
    pub gap: f64,
    pub terms: GapTerms,
}

fn check_offsets(tau10: f64, tau21: f64) -> Result<()> {
    if tau10 >= 0.0 && tau21 >= 0.0 && (tau10 + tau21).is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("offsets must be finite and >= 0, got ({tau10}, {tau21})")))
    }
}

/// Gap at `(τ₁₀, τ₂₁)` by explicit Choi matrices and their eigenvalues.
pub fn divisibility_gap(cfun: &impl Amplitude, tau10: f64, tau21: f64) -> Result<GapPoint> {
    check_offsets(tau10, tau21)?;
    let c10 = cfun.amplitude(tau10)?;
    let c21 = cfun.amplitude(tau21)?;
    let c20 = cfun.amplitude(tau10 + tau21)?;
    let gap = gap_eigen(c20, c10, c21)?;
    Ok(GapPoint { tau10, tau21, gap, terms: GapTerms::of(c20, c10, c21) })
}

/// Trace distance between `choi(c₂₀)` and `choi(c₂₁·c₁₀)` via the eigensolver.
pub fn gap_eigen(c20: Complex64, c10: Complex64, c21: Complex64) -> Result<f64> {
    let direct = QubitChannel::new(c20)?.choi();
    let composed = compose(&QubitChannel::new(c21)?, &QubitChannel::new(c10)?).choi();
    trace_distance(&direct, &composed)
}

/// Closed form for real amplitudes:
/// `⅛|M(N + √(4+N²))| + ⅛|M(N - √(4+N²))| + ¼|MN|`.
pub fn gap_closed_real(c20: f64, c10: f64, c21: f64) -> f64 {
    let p = c10 * c21;
    let (m, n) = (c20 - p, c20 + p);
    let s = (4.0 + n * n).sqrt();
    (m * (n + s)).abs() / 8.0 + (m * (n - s)).abs() / 8.0 + (m * n).abs() / 4.0
}

/// Closed form for complex amplitudes:
/// `⅛|M′ - √(M′² + 4(N′-2K))| + ⅛|M′ + √(M′² + 4(N′-2K))| + ¼|M′|`.
///
/// `N′ - 2K` equals `|c₂₀ - c₁₀c₂₁|²` and is evaluated in that form, which
/// does not cancel when the map is close to divisible.
pub fn gap_closed_complex(c20: Complex64, c10: Complex64, c21: Complex64) -> f64 {
    let p = c10 * c21;
    let (a, b) = (c20.norm(), p.norm());
    let m = (a - b) * (a + b);
    let d2 = (c20 - p).norm_sqr();
    let s = (m * m + 4.0 * d2).sqrt();
    (m - s).abs() / 8.0 + (m + s).abs() / 8.0 + m.abs() / 4.0
}

/// Options for [`measure_nm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    /// Grid points per axis, at least 32.
    pub coarse_n: usize,
    /// Nelder–Mead polish from the best three grid cells.
    pub refine: bool,
    /// Smallest nonzero grid offset; defaults to `horizon/10³`.
    pub t_min: Option<f64>,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { coarse_n: 192, refine: true, t_min: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmResult {
    pub n_m: f64,
    pub tau10_star: f64,
    pub tau21_star: f64,
    pub grid_size: usize,
    pub refined: bool,
    pub horizon: f64,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

/// Grid offsets: geometric from `t_lo` to `horizon/10` for half the points,
/// then linear to `horizon`.
pub fn offset_grid(horizon: f64, n: usize, t_lo: f64) -> Vec<f64> {
    let n_geo = n / 2;
    let n_lin = n - n_geo;
    let t_mid = horizon / 10.0;
    let t_lo = t_lo.min(t_mid / 100.0);
    let ratio = (t_mid / t_lo).powf(1.0 / (n_geo.max(2) - 1) as f64);
    let mut grid: Vec<f64> = (0..n_geo).map(|i| t_lo * ratio.powi(i as i32)).collect();
    if let Some(last) = grid.last_mut() {
        *last = t_mid;
    }
    let dt = (horizon - t_mid) / n_lin as f64;
    grid.extend((1..=n_lin).map(|i| if i == n_lin { horizon } else { t_mid + dt * i as f64 }));
    grid
}

struct Candidate {
    gap: f64,
    i: usize,
    j: usize,
}

/// The three best cells that are local maxima of the grid (no larger
/// neighbour among the eight around them), so that the polish starts on
/// distinct peaks. Falls back to the best cells overall.
fn seed_cells(sorted: &[Candidate], n: usize) -> Vec<(usize, usize)> {
    let mut value = vec![f64::NEG_INFINITY; n * n];
    for c in sorted {
        value[c.i * n + c.j] = c.gap;
    }
    let is_peak = |c: &Candidate| {
        (-1i64..=1).all(|di| {
            (-1i64..=1).all(|dj| {
                let (i, j) = (c.i as i64 + di, c.j as i64 + dj);
                if (di, dj) == (0, 0) || i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
                    return true;
                }
                value[i as usize * n + j as usize] <= c.gap
            })
        })
    };
    let mut seeds: Vec<(usize, usize)> = sorted.iter().filter(|c| is_peak(c)).take(3).map(|c| (c.i, c.j)).collect();
    for c in sorted {
        if seeds.len() >= 3 {
            break;
        }
        if !seeds.contains(&(c.i, c.j)) {
            seeds.push((c.i, c.j));
        }
    }
    seeds
}

/// `N_M` over `τ₁₀, τ₂₁ ≥ 0` with `τ₁₀ + τ₂₁ ≤ horizon`.
///
/// A coarse grid search is followed, when `refine` is set, by Nelder–Mead in
/// `(ln τ₁₀, ln τ₂₁)` from the three best grid peaks. The grid is evaluated in
/// parallel; the reduction is order independent, so results are
/// deterministic.
pub fn measure_nm(cfun: &impl Amplitude, horizon: f64, opts: &NmOptions) -> Result<NmResult> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be finite and > 0, got {horizon}")));
    }
    if opts.coarse_n < 32 {
        return Err(Error::invalid(format!("coarse_n must be at least 32, got {}", opts.coarse_n)));
    }
    let t_lo = opts.t_min.unwrap_or(horizon / 1e3).min(horizon / 1e3);
    if !(t_lo > 0.0) {
        return Err(Error::invalid("t_min must be > 0"));
    }
    let grid = offset_grid(horizon, opts.coarse_n, t_lo);
    let reach = horizon * (1.0 + 1e-12);
    let single: Vec<Complex64> = grid.iter().map(|&t| cfun.amplitude(t)).collect::<Result<_>>()?;

    let rows: Vec<(Vec<Candidate>, usize)> = (0..grid.len())
        .into_par_iter()
        .map(|i| -> Result<(Vec<Candidate>, usize)> {
            let mut row = Vec::new();
            let mut evals = 0;
            for j in 0..grid.len() {
                let t20 = grid[i] + grid[j];
                if t20 > reach {
                    break;
                }
                let c20 = cfun.amplitude(t20.min(horizon))?;
                evals += 1;
                row.push(Candidate { gap: gap_closed_complex(c20, single[i], single[j]), i, j });
            }
            Ok((row, evals))
        })
        .collect::<Result<_>>()?;

    let mut evaluations: usize = rows.iter().map(|r| r.1).sum();
    let mut cells: Vec<Candidate> = rows.into_iter().flat_map(|r| r.0).collect();
    // descending gap, ties broken by position
    cells.sort_by(|a, b| b.gap.total_cmp(&a.gap).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    let mut warnings = Vec::new();
    let Some(top) = cells.first() else {
        return Err(Error::invalid("horizon too short for the offset grid"));
    };
    let (mut best, mut best10, mut best21) = (top.gap, grid[top.i], grid[top.j]);
    if best == 0.0 && cfun.amplitude(horizon)?.norm() > 0.9 {
        warnings.push(format!("all gaps vanish and |c(horizon)| > 0.9: horizon {horizon} is likely too short"));
    }

    if opts.refine && best > 0.0 {
        let objective = |x: &[f64]| -> f64 {
            let (a, b) = (x[0].exp(), x[1].exp());
            if a + b > horizon {
                return 0.0;
            }
            match (cfun.amplitude(a), cfun.amplitude(b), cfun.amplitude(a + b)) {
                (Ok(c10), Ok(c21), Ok(c20)) => -gap_closed_complex(c20, c10, c21),
                _ => f64::NAN,
            }
        };
        let nm = NelderMead { xtol: 1e-8, max_iter: 2000 };
        let starts: Vec<[f64; 2]> =
            seed_cells(&cells, grid.len()).iter().map(|&(i, j)| [grid[i].ln(), grid[j].ln()]).collect();
        let polished: Vec<_> = starts.par_iter().map(|x0| nm.minimize(objective, x0, &[0.05, 0.05])).collect();
        for m in polished {
            evaluations += m.evaluations;
            if -m.value > best {
                best = -m.value;
                best10 = m.x[0].exp();
                best21 = m.x[1].exp();
            }
        }
    }

    Ok(NmResult {
        n_m: best.clamp(0.0, 1.0),
        tau10_star: best10,
        tau21_star: best21,
        grid_size: opts.coarse_n,
        refined: opts.refine,
        horizon,
        evaluations,
        warnings,
    })
}

/// `N_M` for a spectral density: prepares the amplitude, then measures over
/// its horizon. The grid starts at a hundredth of the model's shortest time
/// scale unless `t_min` is set.
pub fn measure_model(sd: &SpectralDensity, amp: &AmplitudeOptions, opts: &NmOptions) -> Result<NmResult> {
    let prepared = prepare(sd, amp)?;
    measure_prepared(&prepared, opts)
}

pub fn measure_prepared(prepared: &PreparedAmplitude, opts: &NmOptions) -> Result<NmResult> {
    let mut opts = *opts;
    opts.t_min.get_or_insert(0.01 * prepared.time_scale);
    let mut result = measure_nm(&prepared.amplitude, prepared.horizon, &opts)?;
    result.warnings.splice(0..0, prepared.warnings.iter().cloned());
    Ok(result)
}

/// `ρ(t₂)` from `ρ₀` directly, and after a restart at `t₁`.
///
/// The second evolution treats the state at `t₁` as a fresh product state,
/// so it is `T(t₂-t₁)T(t₁)ρ₀`.
pub fn witness_evolutions(
    cfun: &impl Amplitude,
    t1: f64,
    t2: f64,
    rho0: &DensityMatrix,
) -> Result<(DensityMatrix, DensityMatrix)> {
    if !(t1 >= 0.0 && t2 >= t1 && t2.is_finite()) {
        return Err(Error::domain(format!("need 0 <= t1 <= t2, got t1 = {t1}, t2 = {t2}")));
    }
    let direct = QubitChannel::new(cfun.amplitude(t2)?)?.apply(rho0);
    let mid = QubitChannel::new(cfun.amplitude(t1)?)?.apply(rho0);
    let restarted = QubitChannel::new(cfun.amplitude(t2 - t1)?)?.apply(&mid);
    Ok((direct, restarted))
}

/// One point of a parameter scan.
#[derive(Debug)]
pub struct ScanPoint {
    pub parameter: f64,
    pub result: Result<NmResult>,
}

/// `N_M` for each parameter value. Points run concurrently; failures are
/// kept per point and the output order follows `params`.
pub fn nm_scan(
    params: &[f64],
    family: impl Fn(f64) -> Result<SpectralDensity> + Sync,
    amp: &AmplitudeOptions,
    opts: &NmOptions,
) -> Result<Vec<ScanPoint>> {
    if params.is_empty() {
        return Err(Error::invalid("scan needs at least one parameter value"));
    }
    Ok(params
        .par_iter()
        .map(|&p| ScanPoint { parameter: p, result: family(p).and_then(|sd| measure_model(&sd, amp, opts)) })
        .collect())
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_range(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::invalid(format!("bad log range [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect())
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope fit needs two or more paired points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::domain("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("log-log fit needs distinct x values"));
    }
    Ok(sxy / sxx)
}

/// CSV: `parameter,n_m,tau10_star,tau21_star,evaluations`. Failed points get
/// NaN values and a trailing comment line with the error.
pub fn write_scan_csv(points: &[ScanPoint], name: &str, mut out: impl Write) -> Result<()> {
    writeln!(out, "# parameter={name}")?;
    writeln!(out, "parameter,n_m,tau10_star,tau21_star,evaluations")?;
    for p in points {
        match &p.result {
            Ok(r) => writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                p.parameter, r.n_m, r.tau10_star, r.tau21_star, r.evaluations
            )?,
            Err(e) => {
                writeln!(out, "{:.16e},NaN,NaN,NaN,0", p.parameter)?;
                writeln!(out, "# failed at {:.16e}: {e}", p.parameter)?;
            }
        }
    }
    Ok(())
}

/// JSON array of `{parameter, result, error}` records.
pub fn scan_to_json(points: &[ScanPoint]) -> serde_json::Value {
    #[derive(Serialize)]
    struct Record<'a> {
        parameter: f64,
        result: Option<&'a NmResult>,
        error: Option<String>,
    }
    let records: Vec<Record> = points
        .iter()
        .map(|p| Record {
            parameter: p.parameter,
            result: p.result.as_ref().ok(),
            error: p.result.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    serde_json::to_value(records).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::{ExponentialAmplitude, FnAmplitude, LorentzianAmplitude};

    fn real(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn closed_real_example() {
        let g = gap_closed_real(0.7, 0.8, 0.8);
        assert!((g - 0.056_21).abs() < 1e-5, "{g}");
        let eig = gap_eigen(real(0.7), real(0.8), real(0.8)).unwrap();
        assert!((g - eig).abs() < 1e-14);
        assert_eq!(gap_closed_real(0.25, 0.5, 0.5), 0.0);
    }

    #[test]
    fn closed_complex_reduces_to_real() {
        for &(a, b, c) in &[(0.7, 0.8, 0.8), (-0.3, 0.5, 0.9), (0.1, -0.6, -0.2)] {
            let r = gap_closed_real(a, b, c);
            let z = gap_closed_complex(real(a), real(b), real(c));
            assert!((r - z).abs() < 1e-15);
        }
        let c10 = Complex64::new(0.3, 0.4);
        let c21 = Complex64::new(-0.5, 0.2);
        assert_eq!(gap_closed_complex(c10 * c21, c10, c21), 0.0);
    }

    #[test]
    fn terms_identity() {
        let (c20, c10, c21) = (Complex64::new(0.2, -0.5), Complex64::new(0.6, 0.3), Complex64::new(0.1, 0.9));
        let GapTerms::Complex { n_prime, k, .. } = GapTerms::of(c20, c10, c21) else {
            panic!("complex terms expected");
        };
        assert!((n_prime - 2.0 * k - (c20 - c10 * c21).norm_sqr()).abs() < 1e-15);
        assert!(matches!(GapTerms::of(real(0.7), real(0.8), real(0.8)), GapTerms::Real { .. }));
    }

    #[test]
    fn gap_vanishes_at_start_and_for_semigroups() {
        let lor = LorentzianAmplitude::new(1.0, 2.0).unwrap();
        assert_eq!(divisibility_gap(&lor, 0.0, 1.3).unwrap().gap, 0.0);
        let semi = ExponentialAmplitude { gamma0: 1.0 };
        for &(a, b) in &[(0.1, 0.2), (1.0, 3.0), (5.0, 0.01)] {
            assert!(divisibility_gap(&semi, a, b).unwrap().gap < 1e-15);
        }
        assert!(divisibility_gap(&semi, -1.0, 1.0).is_err());
    }

    #[test]
    fn semigroup_measure_is_null() {
        let semi = ExponentialAmplitude { gamma0: 1.0 };
        let r = measure_nm(&semi, 20.0, &NmOptions::default()).unwrap();
        assert!(r.n_m <= 1e-12, "{}", r.n_m);
    }

    #[test]
    fn measure_rejects_small_grid() {
        let semi = ExponentialAmplitude { gamma0: 1.0 };
        let opts = NmOptions { coarse_n: 16, ..NmOptions::default() };
        assert!(matches!(measure_nm(&semi, 1.0, &opts), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn short_horizon_warning() {
        let frozen = FnAmplitude(|_t: f64| real(1.0));
        let r = measure_nm(&frozen, 1.0, &NmOptions::default()).unwrap();
        assert_eq!(r.n_m, 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn measure_is_deterministic() {
        let lor = LorentzianAmplitude::new(1.0, 2.5).unwrap();
        let a = measure_nm(&lor, 30.0, &NmOptions::default()).unwrap();
        let b = measure_nm(&lor, 30.0, &NmOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.tau10_star + a.tau21_star <= 30.0);
    }

    #[test]
    fn witness_examples() {
        let lor = LorentzianAmplitude::new(0.4, 1.0).unwrap();
        let rho = DensityMatrix::excited();
        let (a, b) = witness_evolutions(&lor, 0.0, 3.0, &rho).unwrap();
        assert!((a.rho_ee() - b.rho_ee()).abs() < 1e-15);
        let (a, b) = witness_evolutions(&lor, 1.5, 3.0, &rho).unwrap();
        assert!((a.rho_ee() - b.rho_ee()).abs() > 1e-3);
        assert!(witness_evolutions(&lor, 2.0, 1.0, &rho).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = offset_grid(100.0, 64, 0.001);
        assert_eq!(g.len(), 64);
        assert!((g[0] - 0.001).abs() < 1e-15);
        assert_eq!(g[31], 10.0);
        assert_eq!(g[63], 100.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn slope_and_range_helpers() {
        let xs = log_range(1e-3, 1e-1, 5).unwrap();
        assert_eq!(xs[0], 1e-3);
        assert_eq!(xs[4], 1e-1);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.97)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 0.97).abs() < 1e-12);
        assert!(log_range(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn scan_keeps_order_and_failures() {
        let params = [0.5, -1.0, 2.0];
        let opts = NmOptions { coarse_n: 32, refine: false, t_min: None };
        let pts =
            nm_scan(&params, |r| SpectralDensity::lorentzian(1.0, 1.0 / r, 1.0), &AmplitudeOptions::default(), &opts)
                .unwrap();
        assert_eq!(pts.iter().map(|p| p.parameter).collect::<Vec<_>>(), params);
        assert!(pts[0].result.is_ok() && pts[1].result.is_err() && pts[2].result.is_ok());
        let mut buf = Vec::new();
        write_scan_csv(&pts, "R", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# failed at"));
        let json = scan_to_json(&pts);
        assert!(json[1]["result"].is_null());
        assert!(
            nm_scan(&[], |r| SpectralDensity::lorentzian(1.0, r, 1.0), &AmplitudeOptions::default(), &opts).is_err()
        );
    }
}
