//! `memkit` command-line front end.

mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memkit::amplitude::{decay_rates, prepare, Amplitude, AmplitudeOptions, PreparedAmplitude};
use memkit::maps::{DensityMatrix, QubitChannel};
use memkit::nonmarkov::{
    log_range, measure_prepared, nm_scan, scan_to_json, witness_evolutions, write_scan_csv, NmOptions,
};
use memkit::Complex64;
use serde_json::json;

use config::{fmt, CommonArgs, Format, RunConfig, ScanParam};
use output::{emit, header, json_bytes};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] memkit::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Parser)]
#[command(name = "memkit", version, about = "Qubit decoherence amplitudes, Choi matrices and non-Markovianity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Amplitude c(t) with the time-local rates γ(t) and S(t)
    Amplitude {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Excited population from |e⟩, directly and restarted at t1
    Demo {
        #[command(flatten)]
        common: CommonArgs,
        /// Restart time; defaults to a quarter of the horizon
        #[arg(long)]
        t1: Option<f64>,
        /// End time; defaults to the horizon
        #[arg(long)]
        t2: Option<f64>,
    },
    /// Non-Markovianity measure N_M
    Nm {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// N_M over a log-spaced range of one parameter
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "R")]
        param: ScanParam,
        #[arg(long = "log-range", num_args = 2, value_names = ["LO", "HI"], required = true)]
        log_range: Vec<f64>,
        #[arg(long, default_value_t = 17)]
        points: usize,
    },
    /// Choi matrix of the channel with amplitude c, given directly or as c(t)
    Choi {
        #[command(flatten)]
        common: CommonArgs,
        /// Real part of c
        #[arg(long, conflicts_with = "t", allow_negative_numbers = true)]
        c: Option<f64>,
        /// Imaginary part of c
        #[arg(long = "c-im", default_value_t = 0.0, allow_negative_numbers = true)]
        c_im: f64,
        /// Evaluate c(t) for the configured model
        #[arg(long)]
        t: Option<f64>,
    },
}

/// Problems that did not stop the run but mean some result is not trustworthy.
type Warnings = Vec<String>;

type Job<'a> = Box<dyn Fn(&RunConfig) -> Result<Warnings, CliError> + 'a>;

fn amplitude_options(cfg: &RunConfig) -> AmplitudeOptions {
    AmplitudeOptions { horizon: cfg.horizon, step: cfg.step }
}

fn prepared(cfg: &RunConfig) -> Result<PreparedAmplitude, CliError> {
    Ok(prepare(&cfg.spectral_density()?, &amplitude_options(cfg))?)
}

fn cmd_amplitude(cfg: &RunConfig) -> Result<Warnings, CliError> {
    let prep = prepared(cfg)?;
    let trace = prep.to_trace(cfg.step)?;
    let rates = decay_rates(&trace)?;
    let mut warnings = prep.warnings.clone();
    if let Some(w) = trace.warning() {
        if !warnings.iter().any(|x| x == w) {
            warnings.push(w.to_string());
        }
    }
    let bytes = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = Vec::new();
            let mut meta = cfg.describe()?;
            meta.push(("method", trace.method().to_string()));
            meta.push(("step", fmt(trace.step())));
            meta.push(("horizon", fmt(prep.horizon)));
            meta.extend(warnings.iter().map(|w| ("warning", w.clone())));
            header(&mut out, &meta);
            writeln!(out, "t,re_c,im_c,gamma,s_shift")?;
            for (i, (t, c)) in trace.grid().iter().zip(trace.values()).enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt(*t),
                    fmt(c.re),
                    fmt(c.im),
                    fmt(rates.gamma[i]),
                    fmt(rates.s_shift[i])
                )?;
            }
            out
        }
        Format::Json => json_bytes(&json!({
            "config": describe_json(cfg)?,
            "method": trace.method().to_string(),
            "step": trace.step(),
            "horizon": prep.horizon,
            "warnings": warnings,
            "t": trace.grid(),
            "re_c": trace.values().iter().map(|c| c.re).collect::<Vec<_>>(),
            "im_c": trace.values().iter().map(|c| c.im).collect::<Vec<_>>(),
            "gamma": rates.gamma,
            "s_shift": rates.s_shift,
        })),
    };
    emit(cfg.out.as_deref(), &bytes)?;
    Ok(warnings)
}

fn cmd_demo(cfg: &RunConfig, t1: Option<f64>, t2: Option<f64>) -> Result<Warnings, CliError> {
    let prep = prepared(cfg)?;
    let t2 = t2.unwrap_or(prep.horizon);
    let t1 = t1.unwrap_or(0.25 * t2);
    if !(t1 >= 0.0 && t1 < t2 && t2 <= prep.horizon * (1.0 + 1e-12)) {
        return Err(CliError::Config(format!(
            "need 0 <= t1 < t2 <= horizon ({}), got t1 = {t1}, t2 = {t2}",
            prep.horizon
        )));
    }
    let step = cfg.step.unwrap_or(t2 / 2000.0);
    let n = (t2 / step - 1e-9).ceil() as usize;
    let rho0 = DensityMatrix::excited();
    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = if k == n { t2 } else { k as f64 * step };
        let direct = QubitChannel::new(prep.amplitude.amplitude(t)?)?.apply(&rho0).rho_ee();
        let restarted = if t < t1 { direct } else { witness_evolutions(&prep.amplitude, t1, t, &rho0)?.1.rho_ee() };
        rows.push((t, direct, restarted));
    }
    let bytes = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = Vec::new();
            let mut meta = cfg.describe()?;
            meta.push(("t1", fmt(t1)));
            meta.push(("t2", fmt(t2)));
            header(&mut out, &meta);
            writeln!(out, "t,rho_ee,rho_ee_restarted")?;
            for (t, a, b) in &rows {
                writeln!(out, "{},{},{}", fmt(*t), fmt(*a), fmt(*b))?;
            }
            out
        }
        Format::Json => json_bytes(&json!({
            "config": describe_json(cfg)?,
            "t1": t1,
            "t2": t2,
            "t": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
            "rho_ee": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            "rho_ee_restarted": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
        })),
    };
    emit(cfg.out.as_deref(), &bytes)?;
    Ok(prep.warnings)
}

fn nm_options(cfg: &RunConfig) -> NmOptions {
    NmOptions { coarse_n: cfg.grid, refine: cfg.refine, t_min: None }
}

fn cmd_nm(cfg: &RunConfig) -> Result<Warnings, CliError> {
    let result = measure_prepared(&prepared(cfg)?, &nm_options(cfg))?;
    let bytes = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = Vec::new();
            let mut meta = cfg.describe()?;
            meta.extend(result.warnings.iter().map(|w| ("warning", w.clone())));
            header(&mut out, &meta);
            writeln!(out, "n_m,tau10_star,tau21_star,horizon,grid_size,refined,evaluations")?;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt(result.n_m),
                fmt(result.tau10_star),
                fmt(result.tau21_star),
                fmt(result.horizon),
                result.grid_size,
                result.refined,
                result.evaluations
            )?;
            out
        }
        Format::Json => json_bytes(&json!({ "config": describe_json(cfg)?, "result": result })),
    };
    emit(cfg.out.as_deref(), &bytes)?;
    Ok(result.warnings)
}

fn cmd_scan(cfg: &RunConfig, param: ScanParam, range: &[f64], points: usize) -> Result<Warnings, CliError> {
    let values = log_range(range[0], range[1], points)?;
    let family = |v: f64| {
        cfg.with_parameter(param, v).spectral_density().map_err(|e| memkit::Error::InvalidParameter(e.to_string()))
    };
    let scan = nm_scan(&values, family, &amplitude_options(cfg), &nm_options(cfg))?;
    let name = clap::ValueEnum::to_possible_value(&param).expect("no skipped variants").get_name().to_string();
    let mut warnings = Vec::new();
    for p in &scan {
        match &p.result {
            Ok(r) => warnings.extend(r.warnings.iter().map(|w| format!("{name} = {}: {w}", p.parameter))),
            Err(e) => warnings.push(format!("{name} = {}: {e}", p.parameter)),
        }
    }
    let bytes = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = Vec::new();
            header(&mut out, &cfg.describe()?);
            write_scan_csv(&scan, &name, &mut out)?;
            out
        }
        Format::Json => json_bytes(&json!({
            "config": describe_json(cfg)?,
            "parameter": name,
            "points": scan_to_json(&scan),
        })),
    };
    emit(cfg.out.as_deref(), &bytes)?;
    Ok(warnings)
}

fn cmd_choi(cfg: &RunConfig, c: Option<f64>, c_im: f64, t: Option<f64>) -> Result<Warnings, CliError> {
    let mut warnings = Vec::new();
    let amp = match (c, t) {
        (Some(re), _) => Complex64::new(re, c_im),
        (None, Some(t)) => {
            let mut prep = prepared(cfg)?;
            if t > prep.horizon && cfg.horizon.is_none() {
                let opts = AmplitudeOptions { horizon: Some(t), step: cfg.step };
                prep = prepare(&cfg.spectral_density()?, &opts)?;
            }
            warnings = prep.warnings.clone();
            prep.amplitude.amplitude(t)?
        }
        (None, None) => return Err(CliError::Config("choi needs --c or --t".into())),
    };
    let m = QubitChannel::new(amp)?.choi();
    let bytes = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut v = m.to_json();
            v["c"] = json!([amp.re, amp.im]);
            if let Some(t) = t {
                v["t"] = json!(t);
                v["config"] = describe_json(cfg)?;
            }
            json_bytes(&v)
        }
        Format::Csv => {
            let mut out = Vec::new();
            header(&mut out, &[("c_re", fmt(amp.re)), ("c_im", fmt(amp.im))]);
            writeln!(out, "row,col,re,im")?;
            for (i, row) in m.matrix().iter().enumerate() {
                for (j, z) in row.iter().enumerate() {
                    writeln!(out, "{i},{j},{},{}", fmt(z.re), fmt(z.im))?;
                }
            }
            out
        }
    };
    emit(cfg.out.as_deref(), &bytes)?;
    Ok(warnings)
}

fn describe_json(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let map: serde_json::Map<String, serde_json::Value> =
        cfg.describe()?.into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    Ok(serde_json::Value::Object(map))
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MEMKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("MEMKIT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(Warnings, bool), CliError> {
    init_threads()?;
    let (common, job): (&CommonArgs, Job) = match &cli.command {
        Command::Amplitude { common } => (common, Box::new(cmd_amplitude)),
        Command::Demo { common, t1, t2 } => (common, Box::new(move |c: &RunConfig| cmd_demo(c, *t1, *t2))),
        Command::Nm { common } => (common, Box::new(cmd_nm)),
        Command::Scan { common, param, log_range, points } => {
            (common, Box::new(move |c: &RunConfig| cmd_scan(c, *param, log_range, *points)))
        }
        Command::Choi { common, c, c_im, t } => (common, Box::new(move |cfg: &RunConfig| cmd_choi(cfg, *c, *c_im, *t))),
    };
    let cfg = common.resolve()?;
    Ok((job(&cfg)?, cfg.keep_going))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((warnings, keep_going)) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if warnings.is_empty() || keep_going {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
