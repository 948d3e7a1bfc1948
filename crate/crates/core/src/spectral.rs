//! Environment spectral densities and the quantities derived from them.
//!
//! Conventions: `J(ω)` is the coupling density in the kernel
//! `f(τ) = ∫ J(ω) e^{i(ω₀-ω)τ} dω`, so the self-energy is the Hilbert
//! transform `Σ(ω) = P∫ J(ω')/(ω-ω') dω'` with no extra `2π`.

use std::f64::consts::PI;
use std::io::BufRead;
use std::path::Path;

use num_complex::Complex64;

pub use crate::special::exp_integral_ei;
use crate::special::{scaled_e1_complex, scaled_ei};
use crate::{Error, Result};

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Lorentzian parameters: rate `γ₀`, width `λ`, system frequency `ω₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianParams {
    gamma0: f64,
    lambda: f64,
    omega0: f64,
}

impl LorentzianParams {
    pub fn new(gamma0: f64, lambda: f64, omega0: f64) -> Result<Self> {
        require_positive("gamma0", gamma0)?;
        require_positive("lambda", lambda)?;
        require_positive("omega0", omega0)?;
        Ok(Self { gamma0, lambda, omega0 })
    }

    /// Parameters in units of `γ₀` (`γ₀ = 1`, `λ = 1/R`).
    pub fn from_ratio(r: f64, omega0: f64) -> Result<Self> {
        require_positive("R", r)?;
        Self::new(1.0, 1.0 / r, omega0)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// `R = γ₀/λ`, the ratio of bath correlation time to relaxation time.
    pub fn ratio(&self) -> f64 {
        self.gamma0 / self.lambda
    }

    fn density(&self, omega: f64) -> f64 {
        let d = self.omega0 - omega;
        self.gamma0 * self.lambda * self.lambda / (2.0 * PI * (d * d + self.lambda * self.lambda))
    }
}

/// Ohmic parameters: coupling `α`, cutoff `ω_c`, system frequency `ω₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhmicParams {
    alpha: f64,
    omega_c: f64,
    omega0: f64,
}

impl OhmicParams {
    pub fn new(alpha: f64, omega_c: f64, omega0: f64) -> Result<Self> {
        require_positive("alpha", alpha)?;
        require_positive("omega_c", omega_c)?;
        require_positive("omega0", omega0)?;
        Ok(Self { alpha, omega_c, omega0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    fn density(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            0.0
        } else {
            self.alpha * omega * (-omega / self.omega_c).exp()
        }
    }
}

/// Piecewise-linear spectrum from samples, zero outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    omega: Vec<f64>,
    density: Vec<f64>,
    omega0: f64,
}

impl TabulatedSpectrum {
    /// Samples must be in absolute frequency, strictly ascending, nonnegative.
    pub fn new(samples: Vec<(f64, f64)>, omega0: f64) -> Result<Self> {
        require_positive("omega0", omega0)?;
        if samples.len() < 2 {
            return Err(Error::invalid("tabulated spectrum needs at least two samples"));
        }
        for (i, &(w, j)) in samples.iter().enumerate() {
            if !w.is_finite() || !j.is_finite() {
                return Err(Error::invalid(format!("non-finite sample at row {i}")));
            }
            if w < 0.0 {
                return Err(Error::invalid(format!("negative frequency {w} at row {i}")));
            }
            if j < 0.0 {
                return Err(Error::invalid(format!("negative density {j} at row {i}")));
            }
            if i > 0 && w <= samples[i - 1].0 {
                return Err(Error::invalid(format!("frequencies not strictly ascending at row {i}")));
            }
        }
        let (omega, density) = samples.into_iter().unzip();
        Ok(Self { omega, density, omega0 })
    }

    /// Two-column `ω, J` text with `#` comments. Frequencies are in units of
    /// `ω₀` unless a `# units=absolute` line is present.
    pub fn from_reader(reader: impl BufRead, omega0: f64) -> Result<Self> {
        let mut absolute = false;
        let mut samples = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                let setting = comment.trim().replace(' ', "");
                if setting.eq_ignore_ascii_case("units=absolute") {
                    absolute = true;
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> =
                trimmed.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected two columns", lineno + 1)));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)));
            samples.push((parse(fields[0])?, parse(fields[1])?));
        }
        if !absolute {
            for s in &mut samples {
                s.0 *= omega0;
            }
        }
        Self::new(samples, omega0)
    }

    pub fn from_path(path: impl AsRef<Path>, omega0: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file), omega0)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.omega.iter().copied().zip(self.density.iter().copied())
    }

    /// Largest `|ω₀ - ω|` over the support, the fastest kernel oscillation.
    pub fn max_detuning(&self) -> f64 {
        let lo = self.omega[0];
        let hi = *self.omega.last().expect("at least two samples");
        (self.omega0 - lo).abs().max((hi - self.omega0).abs())
    }

    fn density(&self, omega: f64) -> f64 {
        let n = self.omega.len();
        if omega < self.omega[0] || omega > self.omega[n - 1] {
            return 0.0;
        }
        let k = self.omega.partition_point(|&w| w <= omega).clamp(1, n - 1);
        let (w0, w1) = (self.omega[k - 1], self.omega[k]);
        let (j0, j1) = (self.density[k - 1], self.density[k]);
        j0 + (j1 - j0) * (omega - w0) / (w1 - w0)
    }

    /// Exact integral of the piecewise-linear density against `e^{i(ω₀-ω)τ}`.
    fn kernel(&self, tau: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..self.omega.len() {
            let (a, b) = (self.omega[k - 1], self.omega[k]);
            let (ja, jb) = (self.density[k - 1], self.density[k]);
            let theta = (b - a) * tau;
            let (p0, p1) = linear_phase_moments(theta);
            acc += Complex64::from_polar(b - a, -a * tau) * (ja * p0 + (jb - ja) * p1);
        }
        Complex64::from_polar(1.0, self.omega0 * tau) * acc
    }
}

/// `(∫₀¹ e^{-iθs} ds, ∫₀¹ s e^{-iθs} ds)`.
fn linear_phase_moments(theta: f64) -> (Complex64, Complex64) {
    if theta.abs() < 0.5 {
        let k = Complex64::new(0.0, -theta);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        let mut p0 = Complex64::new(0.0, 0.0);
        let mut p1 = Complex64::new(0.0, 0.0);
        for n in 0..25 {
            if n > 0 {
                pow *= k;
                fact *= n as f64;
            }
            p0 += pow / (fact * (n as f64 + 1.0));
            p1 += pow / (fact * (n as f64 + 2.0));
        }
        (p0, p1)
    } else {
        let e = Complex64::from_polar(1.0, -theta);
        let i = Complex64::i();
        let p0 = (1.0 - e) / (i * theta);
        let p1 = e * (i / theta + 1.0 / (theta * theta)) - 1.0 / (theta * theta);
        (p0, p1)
    }
}

/// Environment spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `J_L(ω) = γ₀λ² / (2π[(ω₀-ω)² + λ²])` on the whole real line.
    Lorentzian(LorentzianParams),
    /// `J_L(ω)·θ(ω)`: the Lorentzian with negative frequencies removed.
    TruncatedLorentzian(LorentzianParams),
    /// `J_O(ω) = αω e^{-ω/ω_c}` for `ω > 0`.
    Ohmic(OhmicParams),
    Tabulated(TabulatedSpectrum),
}

impl SpectralDensity {
    pub fn lorentzian(gamma0: f64, lambda: f64, omega0: f64) -> Result<Self> {
        LorentzianParams::new(gamma0, lambda, omega0).map(Self::Lorentzian)
    }

    pub fn truncated_lorentzian(gamma0: f64, lambda: f64, omega0: f64) -> Result<Self> {
        LorentzianParams::new(gamma0, lambda, omega0).map(Self::TruncatedLorentzian)
    }

    pub fn ohmic(alpha: f64, omega_c: f64, omega0: f64) -> Result<Self> {
        OhmicParams::new(alpha, omega_c, omega0).map(Self::Ohmic)
    }

    pub fn omega0(&self) -> f64 {
        match self {
            Self::Lorentzian(p) | Self::TruncatedLorentzian(p) => p.omega0,
            Self::Ohmic(p) => p.omega0,
            Self::Tabulated(t) => t.omega0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Lorentzian(_) => "lorentzian",
            Self::TruncatedLorentzian(_) => "trunc-lorentzian",
            Self::Ohmic(_) => "ohmic",
            Self::Tabulated(_) => "table",
        }
    }

    /// `J(ω)`.
    pub fn density_at(&self, omega: f64) -> f64 {
        match self {
            Self::Lorentzian(p) => p.density(omega),
            Self::TruncatedLorentzian(p) => {
                if omega < 0.0 {
                    0.0
                } else {
                    p.density(omega)
                }
            }
            Self::Ohmic(p) => p.density(omega),
            Self::Tabulated(t) => t.density(omega),
        }
    }

    /// Correlation kernel `f(τ) = ∫ J(ω) e^{i(ω₀-ω)τ} dω` for `τ ≥ 0`.
    ///
    /// Every kind has a closed form here: the full Lorentzian and the Ohmic
    /// spectrum integrate elementarily, the truncated Lorentzian subtracts
    /// its negative-frequency tail written with complex `E₁`, and tabulated
    /// spectra are integrated exactly segment by segment.
    pub fn correlation_kernel(&self, tau: f64) -> Result<Complex64> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::domain(format!("correlation kernel needs finite tau >= 0, got {tau}")));
        }
        Ok(match self {
            Self::Lorentzian(p) => Complex64::new(lorentzian_kernel(p, tau), 0.0),
            Self::TruncatedLorentzian(p) => lorentzian_kernel(p, tau) - negative_frequency_kernel(p, tau)?,
            Self::Ohmic(p) => {
                let denom = Complex64::new(1.0, p.omega_c * tau);
                Complex64::from_polar(p.alpha * p.omega_c * p.omega_c, p.omega0 * tau) / (denom * denom)
            }
            Self::Tabulated(t) => t.kernel(tau),
        })
    }
}

fn lorentzian_kernel(p: &LorentzianParams, tau: f64) -> f64 {
    0.5 * p.gamma0 * p.lambda * (-p.lambda * tau).exp()
}

/// `∫_{-∞}^0 J_L(ω) e^{i(ω₀-ω)τ} dω`.
fn negative_frequency_kernel(p: &LorentzianParams, tau: f64) -> Result<Complex64> {
    let (g0, lam, w0) = (p.gamma0, p.lambda, p.omega0);
    if tau == 0.0 {
        let v = g0 * lam / (2.0 * PI) * (0.5 * PI - (w0 / lam).atan());
        return Ok(Complex64::new(v, 0.0));
    }
    let z1 = Complex64::new(-lam * tau, -w0 * tau);
    let z2 = Complex64::new(lam * tau, -w0 * tau);
    let diff = scaled_e1_complex(z1)? - scaled_e1_complex(z2)?;
    let pref = Complex64::new(0.0, -g0 * lam / (4.0 * PI));
    Ok(pref * Complex64::from_polar(1.0, w0 * tau) * diff)
}

/// Negative-frequency pole of the Ohmic resolvent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BoundState {
    /// `ω′ < 0`.
    pub omega_prime: f64,
    /// Residue `𝒵 = [1 - Σ′(ω′)]⁻¹ ∈ (0, 1]`.
    pub z_weight: f64,
}

/// `Σ(ω) = αω_c[(ω/ω_c) e^{-ω/ω_c} Ei(ω/ω_c) - 1]`.
pub fn self_energy(p: &OhmicParams, omega: f64) -> Result<f64> {
    let x = omega / p.omega_c;
    Ok(p.alpha * omega * scaled_ei(x)? - p.alpha * p.omega_c)
}

/// `Σ′(ω) = α[(1 - ω/ω_c) e^{-ω/ω_c} Ei(ω/ω_c) + 1]`.
pub fn self_energy_deriv(p: &OhmicParams, omega: f64) -> Result<f64> {
    let x = omega / p.omega_c;
    Ok(p.alpha * ((1.0 - x) * scaled_ei(x)? + 1.0))
}

/// `ω - ω₀ - Σ(ω)`, arranged so the constant terms cancel exactly at the
/// threshold `αω_c = ω₀`.
pub fn resolvent_detuning(p: &OhmicParams, omega: f64) -> Result<f64> {
    let x = omega / p.omega_c;
    Ok((p.alpha * p.omega_c - p.omega0) + omega * (1.0 - p.alpha * scaled_ei(x)?))
}

/// Branch-cut weight `J(ω) / ([ω - ω₀ - Σ(ω)]² + π²J(ω)²)` for `ω > 0`.
///
/// Together with the bound-state residue it integrates to one.
pub fn branch_cut_weight(p: &OhmicParams, omega: f64) -> Result<f64> {
    let j = p.density(omega);
    if j == 0.0 {
        return Ok(0.0);
    }
    // ratio form: both D and J underflow together near ω = 0
    let r = resolvent_detuning(p, omega)? / j;
    Ok(1.0 / (j * (r * r + PI * PI)))
}

/// Bound state of the Ohmic model, present iff `αω_c > ω₀`.
///
/// The pole sits where the resolvent detuning `ω - ω₀ - Σ(ω)` vanishes on the
/// negative axis. There `Σ′ < 0`, so the detuning is strictly increasing and
/// bisection on `[-10³·max(ω₀, αω_c), -10⁻¹²]` finds the unique root.
pub fn bound_state(p: &OhmicParams) -> Result<Option<BoundState>> {
    if p.alpha * p.omega_c <= p.omega0 {
        return Ok(None);
    }
    let g = |w: f64| resolvent_detuning(p, w);
    let mut lo = -1e3 * p.omega0.max(p.alpha * p.omega_c);
    let mut hi = -1e-12;
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::numerical(format!("bound state not bracketed: detuning {glo:e} at {lo}, {ghi:e} at {hi}")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * mid.abs() {
            break;
        }
    }
    let mut root = 0.5 * (lo + hi);
    // Newton polish, kept inside the bracket
    for _ in 0..3 {
        let step = g(root)? / (1.0 - self_energy_deriv(p, root)?);
        let next = root - step;
        if next > lo && next < hi && step.is_finite() {
            root = next;
        }
    }
    let z_weight = 1.0 / (1.0 - self_energy_deriv(p, root)?);
    if !(z_weight > 0.0 && z_weight <= 1.0) {
        return Err(Error::numerical(format!("bound-state residue {z_weight} outside (0, 1]")));
    }
    Ok(Some(BoundState { omega_prime: root, z_weight }))
}
