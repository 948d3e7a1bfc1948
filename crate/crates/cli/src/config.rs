//! Run configuration: command-line flags layered over an optional
//! `key=value` file, layered over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use memkit::spectral::{LorentzianParams, SpectralDensity, TabulatedSpectrum};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Lorentzian,
    TruncLorentzian,
    Ohmic,
    Table,
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true).map_err(|_| CliError::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true).map_err(|_| CliError::Config(format!("unknown format `{s}`")))
    }
}

/// Flags shared by every subcommand. All are optional so that a config file
/// can fill the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Spectral density
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Lorentzian ratio γ₀/λ; sets λ = γ₀/R
    #[arg(long = "R", value_name = "R")]
    pub r: Option<f64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Ohmic coupling
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ohmic cutoff frequency
    #[arg(long = "omega-c")]
    pub omega_c: Option<f64>,
    /// System frequency
    #[arg(long)]
    pub omega0: Option<f64>,
    /// Two-column spectrum file for `--model table`
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
    /// Time window; defaults to where the amplitude has decayed
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Time step for sampled or integrated amplitudes
    #[arg(long)]
    pub step: Option<f64>,
    /// Offset grid points per axis for N_M (at least 32)
    #[arg(long)]
    pub grid: Option<usize>,
    /// Polish the grid maximum with Nelder–Mead (default)
    #[arg(long, overrides_with = "no_refine")]
    pub refine: bool,
    #[arg(long = "no-refine", overrides_with = "refine")]
    pub no_refine: bool,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when absent
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Exit 0 even when some computations fail or warn
    #[arg(long = "keep-going")]
    pub keep_going: bool,
    /// Plain `key=value` file; flags take precedence over it
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub r: Option<f64>,
    pub gamma0: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: f64,
    pub omega_c: f64,
    pub omega0: f64,
    pub table: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub grid: usize,
    pub refine: bool,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub keep_going: bool,
}

pub const DEFAULT_GRID: usize = 192;
const DEFAULT_ALPHA: f64 = 0.1;

fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match map.remove(key) {
        None => Ok(None),
        Some(v) => {
            v.parse().map(Some).map_err(|e| CliError::Config(format!("config key `{key}`: cannot parse `{v}`: {e}")))
        }
    }
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut file = match &self.config {
            Some(path) => parse_config(
                &std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?,
            )?,
            None => BTreeMap::new(),
        };
        let refine_flag = match (self.refine, self.no_refine) {
            (_, true) => Some(false),
            (true, _) => Some(true),
            _ => None,
        };
        let cfg = RunConfig {
            model: self.model.or(take(&mut file, "model")?).unwrap_or(ModelKind::Lorentzian),
            r: self.r.or(take(&mut file, "R")?.or(take(&mut file, "r")?)),
            gamma0: self.gamma0.or(take(&mut file, "gamma0")?),
            lambda: self.lambda.or(take(&mut file, "lambda")?),
            alpha: self.alpha.or(take(&mut file, "alpha")?).unwrap_or(DEFAULT_ALPHA),
            omega_c: self.omega_c.or(take(&mut file, "omega-c")?).unwrap_or(1.0),
            omega0: self.omega0.or(take(&mut file, "omega0")?).unwrap_or(1.0),
            table: self.table.clone().or(take::<PathBuf>(&mut file, "table")?),
            horizon: self.horizon.or(take(&mut file, "horizon")?),
            step: self.step.or(take(&mut file, "step")?),
            grid: self.grid.or(take(&mut file, "grid")?).unwrap_or(DEFAULT_GRID),
            refine: refine_flag.or(take(&mut file, "refine")?).unwrap_or(true),
            format: self.format.or(take(&mut file, "format")?),
            out: self.out.clone().or(take::<PathBuf>(&mut file, "out")?),
            keep_going: self.keep_going || take(&mut file, "keep-going")?.unwrap_or(false),
        };
        if let Some(key) = file.keys().next() {
            return Err(CliError::Config(format!("unknown config key `{key}`")));
        }
        if cfg.grid < 32 {
            return Err(CliError::Config(format!("--grid must be at least 32, got {}", cfg.grid)));
        }
        if let Some(dir) = cfg.out.as_deref().and_then(Path::parent) {
            if !dir.as_os_str().is_empty() && !dir.is_dir() {
                return Err(CliError::Config(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(cfg)
    }
}

impl RunConfig {
    /// `(γ₀, λ)` for the Lorentzian models. `R` fills in whichever of the two
    /// is missing; γ₀ defaults to one.
    fn lorentzian_rates(&self) -> Result<(f64, f64), CliError> {
        match (self.r, self.gamma0, self.lambda) {
            (Some(_), Some(_), Some(_)) => {
                Err(CliError::Config("give at most two of --R, --gamma0 and --lambda".into()))
            }
            (Some(r), None, Some(l)) => Ok((r * l, l)),
            (Some(r), g, None) => {
                let g = g.unwrap_or(1.0);
                Ok((g, g / r))
            }
            (None, g, l) => Ok((g.unwrap_or(1.0), l.unwrap_or(1.0))),
        }
    }

    pub fn spectral_density(&self) -> Result<SpectralDensity, CliError> {
        Ok(match self.model {
            ModelKind::Lorentzian => {
                let (g, l) = self.lorentzian_rates()?;
                SpectralDensity::lorentzian(g, l, self.omega0)?
            }
            ModelKind::TruncLorentzian => {
                let (g, l) = self.lorentzian_rates()?;
                SpectralDensity::truncated_lorentzian(g, l, self.omega0)?
            }
            ModelKind::Ohmic => SpectralDensity::ohmic(self.alpha, self.omega_c, self.omega0)?,
            ModelKind::Table => {
                let path =
                    self.table.as_ref().ok_or_else(|| CliError::Config("--model table needs --table PATH".into()))?;
                SpectralDensity::Tabulated(TabulatedSpectrum::from_path(path, self.omega0)?)
            }
        })
    }

    /// `key=value` pairs describing the model, for output headers.
    pub fn describe(&self) -> Result<Vec<(&'static str, String)>, CliError> {
        let mut out =
            vec![("model", self.model.to_possible_value().expect("no skipped variants").get_name().to_string())];
        match self.model {
            ModelKind::Lorentzian | ModelKind::TruncLorentzian => {
                let (g, l) = self.lorentzian_rates()?;
                let p = LorentzianParams::new(g, l, self.omega0)?;
                out.push(("gamma0", fmt(g)));
                out.push(("lambda", fmt(l)));
                out.push(("R", fmt(p.ratio())));
            }
            ModelKind::Ohmic => {
                out.push(("alpha", fmt(self.alpha)));
                out.push(("omega_c", fmt(self.omega_c)));
            }
            ModelKind::Table => {
                out.push(("table", self.table.as_ref().map(|p| p.display().to_string()).unwrap_or_default()));
            }
        }
        out.push(("omega0", fmt(self.omega0)));
        Ok(out)
    }

    /// The same configuration with one model parameter replaced.
    pub fn with_parameter(&self, param: ScanParam, value: f64) -> RunConfig {
        let mut c = self.clone();
        match param {
            ScanParam::R => {
                c.r = Some(value);
                if c.gamma0.is_some() && c.lambda.is_some() {
                    c.lambda = None;
                }
            }
            ScanParam::Gamma0 => c.gamma0 = Some(value),
            ScanParam::Lambda => c.lambda = Some(value),
            ScanParam::Alpha => c.alpha = value,
            ScanParam::OmegaC => c.omega_c = value,
            ScanParam::Omega0 => c.omega0 = value,
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanParam {
    #[value(name = "R")]
    R,
    Gamma0,
    Lambda,
    Alpha,
    #[value(name = "omega-c")]
    OmegaC,
    Omega0,
}

/// Full-precision float formatting used in every output file.
pub fn fmt(x: f64) -> String {
    // no signed zeros in output files
    format!("{:.16e}", x + 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_fills_missing_flags() {
        let map = parse_config("# comment\nmodel = ohmic\nomega_c=2\n\nalpha=0.5\n").unwrap();
        assert_eq!(map["model"], "ohmic");
        assert_eq!(map["omega-c"], "2");
        assert!(parse_config("alpha").is_err());
    }

    #[test]
    fn lorentzian_rates_from_ratio() {
        let mut cfg = CommonArgs { r: Some(0.5), ..Default::default() }.resolve().unwrap();
        assert_eq!(cfg.lorentzian_rates().unwrap(), (1.0, 2.0));
        cfg.lambda = Some(4.0);
        assert_eq!(cfg.lorentzian_rates().unwrap(), (2.0, 4.0));
        cfg.gamma0 = Some(1.0);
        assert!(cfg.lorentzian_rates().is_err());
    }

    #[test]
    fn small_grid_is_rejected() {
        assert!(CommonArgs { grid: Some(16), ..Default::default() }.resolve().is_err());
    }
}
