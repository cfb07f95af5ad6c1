//! The `fracpwc` command line.
//!
//! Every command reads an optional flat `key = value` file (`--config`),
//! applies flag overrides, validates the merged [`RunConfig`] and writes its
//! result to `--out` plus a `<out>.config.json` sidecar holding the
//! effective configuration. Exit codes: 0 success, 1 run failure (numerics
//! or IO), 2 bad configuration.
//!
//! Config keys: `a b q h t_end x0 variant delta epsilon abs_epsilon
//! renorm_interval transient_fraction corrector_iters out format scan_param
//! scan_from scan_to scan_steps x0_alt beta gamma omega alpha`.

use crate::caputo_abm::Trajectory;
use crate::dynamics::{
    bifurcation_scan, compare_variants, lyapunov_spectrum, periodic_coefficients, verify_ml_periodic,
    BifurcationConfig, BifurcationDiagram, CompareConfig, LyapunovConfig, PeriodicTestProblem,
    ScanParameter,
};
use crate::sprott_pwc::{
    equilibria, ml_solution, simulate, switching_time, RhsVariant, Side, State, SystemParams, DEFAULT_X0,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Half-width of the LA cubic unless set.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Sgn and modulus half-width used by `lyapunov` unless set.
pub const LYAPUNOV_DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Run(_) | Self::Io { .. } => 1,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Wa,
    Ga,
    La,
}

#[derive(Debug, Parser)]
#[command(name = "fracpwc", version, about = "Fractional-order piecewise-continuous system toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory.
    Simulate(CommonArgs),
    /// Integrate WA, GA and LA side by side and report divergence times.
    Compare(CommonArgs),
    /// Scan b or q and record local maxima of x1.
    Bifurcate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Finite-time Lyapunov spectrum of the smoothed system.
    Lyapunov(CommonArgs),
    /// First crossing of x1 = 0 from the closed-form affine solution.
    Switching(CommonArgs),
    /// Residual of the harmonic solution of D^q x + beta x = gamma cos(omega t + alpha).
    VerifyPeriodic {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        periodic: PeriodicArgs,
    },
    /// Equilibrium analysis of both affine pieces.
    Equilibria(CommonArgs),
    /// Closed-form affine solution on the h grid up to the first switch or t_end.
    Mlsolve(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write an SVG plot next to the output.
    #[arg(long)]
    pub svg: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long = "t-end", allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Initial state `x1,x2,x3,x4`.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Half-width of the quadratic modulus smoothing.
    #[arg(long = "abs-epsilon", allow_negative_numbers = true)]
    pub abs_epsilon: Option<f64>,
    #[arg(long = "renorm-interval")]
    pub renorm_interval: Option<usize>,
    #[arg(long = "transient-fraction", allow_negative_numbers = true)]
    pub transient_fraction: Option<f64>,
    #[arg(long = "corrector-iters")]
    pub corrector_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScanArgs {
    #[arg(long, value_enum)]
    pub param: Option<ScanParameter>,
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    /// Number of intervals; `steps + 1` values are scanned.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "x0-alt", allow_hyphen_values = true)]
    pub x0_alt: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PeriodicArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
}

impl ValueEnum for ScanParameter {
    fn value_variants<'a>() -> &'a [Self] {
        &[Self::B, Self::Q]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

/// Effective settings of one command. Unset optional fields take
/// command-specific defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub x0: State,
    pub variant: VariantKind,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub abs_epsilon: Option<f64>,
    pub renorm_interval: usize,
    pub transient_fraction: f64,
    pub corrector_iters: usize,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub scan_param: ScanParameter,
    pub scan_from: Option<f64>,
    pub scan_to: Option<f64>,
    pub scan_steps: usize,
    pub x0_alt: Option<State>,
    pub beta: f64,
    pub gamma: f64,
    pub omega: f64,
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.25,
            q: 0.98,
            h: None,
            t_end: None,
            x0: DEFAULT_X0,
            variant: VariantKind::La,
            delta: 1e-6,
            epsilon: None,
            abs_epsilon: None,
            renorm_interval: 10,
            transient_fraction: 0.8,
            corrector_iters: 1,
            out: None,
            format: None,
            scan_param: ScanParameter::B,
            scan_from: None,
            scan_to: None,
            scan_steps: 50,
            x0_alt: None,
            beta: 1.0,
            gamma: 1.0,
            omega: 1.0,
            alpha: 0.0,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| CliError::Config(format!("{key}: expected a non-negative integer, got {v:?}")))
}

/// Parses `x1,x2,x3,x4`.
pub fn parse_state(key: &str, v: &str) -> Result<State, CliError> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|s| parse_f64(key, s))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| CliError::Config(format!("{key}: expected 4 components, got {}", p.len())))
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> Result<T, CliError> {
    T::from_str(v.trim(), true).map_err(|_| CliError::Config(format!("{key}: unknown value {v:?}")))
}

impl RunConfig {
    /// Reads flat `key = value` lines; `#`/`;` start comments. Sections are
    /// not allowed.
    pub fn from_ini_str(text: &str) -> Result<Self, CliError> {
        let ini = ini::Ini::load_from_str(text).map_err(config_err)?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            if let Some(name) = section {
                return Err(CliError::Config(format!("sections are not supported: [{name}]")));
            }
            for (key, value) in props.iter() {
                cfg.set(key, value)?;
            }
        }
        Ok(cfg)
    }

    pub fn from_ini_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "a" => self.a = parse_f64(key, v)?,
            "b" => self.b = parse_f64(key, v)?,
            "q" => self.q = parse_f64(key, v)?,
            "h" => self.h = Some(parse_f64(key, v)?),
            "t_end" => self.t_end = Some(parse_f64(key, v)?),
            "x0" => self.x0 = parse_state(key, v)?,
            "variant" => self.variant = parse_enum(key, v)?,
            "delta" => self.delta = parse_f64(key, v)?,
            "epsilon" => self.epsilon = Some(parse_f64(key, v)?),
            "abs_epsilon" => self.abs_epsilon = Some(parse_f64(key, v)?),
            "renorm_interval" => self.renorm_interval = parse_usize(key, v)?,
            "transient_fraction" => self.transient_fraction = parse_f64(key, v)?,
            "corrector_iters" => self.corrector_iters = parse_usize(key, v)?,
            "out" => self.out = Some(PathBuf::from(v.trim())),
            "format" => self.format = Some(parse_enum(key, v)?),
            "scan_param" => self.scan_param = parse_enum(key, v)?,
            "scan_from" => self.scan_from = Some(parse_f64(key, v)?),
            "scan_to" => self.scan_to = Some(parse_f64(key, v)?),
            "scan_steps" => self.scan_steps = parse_usize(key, v)?,
            "x0_alt" => self.x0_alt = Some(parse_state(key, v)?),
            "beta" => self.beta = parse_f64(key, v)?,
            "gamma" => self.gamma = parse_f64(key, v)?,
            "omega" => self.omega = parse_f64(key, v)?,
            "alpha" => self.alpha = parse_f64(key, v)?,
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Loads `--config` (if any) and applies every flag on top.
    pub fn resolve(common: &CommonArgs, scan: Option<&ScanArgs>, periodic: Option<&PeriodicArgs>) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(path) => Self::from_ini_file(path)?,
            None => Self::default(),
        };
        macro_rules! over {
            ($($src:expr => $dst:expr),* $(,)?) => {
                $(if let Some(v) = $src { $dst = v; })*
            };
        }
        over!(
            common.a => cfg.a,
            common.b => cfg.b,
            common.q => cfg.q,
            common.variant => cfg.variant,
            common.delta => cfg.delta,
            common.renorm_interval => cfg.renorm_interval,
            common.transient_fraction => cfg.transient_fraction,
            common.corrector_iters => cfg.corrector_iters,
        );
        if common.h.is_some() {
            cfg.h = common.h;
        }
        if common.t_end.is_some() {
            cfg.t_end = common.t_end;
        }
        if common.epsilon.is_some() {
            cfg.epsilon = common.epsilon;
        }
        if common.abs_epsilon.is_some() {
            cfg.abs_epsilon = common.abs_epsilon;
        }
        if common.out.is_some() {
            cfg.out = common.out.clone();
        }
        if common.format.is_some() {
            cfg.format = common.format;
        }
        if let Some(x0) = &common.x0 {
            cfg.x0 = parse_state("x0", x0)?;
        }
        if let Some(s) = scan {
            over!(s.param => cfg.scan_param, s.steps => cfg.scan_steps);
            if s.from.is_some() {
                cfg.scan_from = s.from;
            }
            if s.to.is_some() {
                cfg.scan_to = s.to;
            }
            if let Some(x) = &s.x0_alt {
                cfg.x0_alt = Some(parse_state("x0_alt", x)?);
            }
        }
        if let Some(p) = periodic {
            over!(p.beta => cfg.beta, p.gamma => cfg.gamma, p.omega => cfg.omega, p.alpha => cfg.alpha);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.variant()?;
        let positive = |name: &str, v: Option<f64>| match v {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                Err(CliError::Config(format!("{name} must be positive, got {v}")))
            }
            _ => Ok(()),
        };
        positive("h", self.h)?;
        positive("t_end", self.t_end)?;
        positive("epsilon", self.epsilon)?;
        positive("abs_epsilon", self.abs_epsilon)?;
        if let (Some(h), Some(t)) = (self.h, self.t_end) {
            if h > t {
                return Err(CliError::Config(format!("h = {h} exceeds t_end = {t}")));
            }
        }
        if self.x0.iter().chain(self.x0_alt.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(CliError::Config("initial states must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(CliError::Config(format!(
                "transient_fraction must lie in [0, 1), got {}",
                self.transient_fraction
            )));
        }
        if self.renorm_interval == 0 || self.corrector_iters == 0 {
            return Err(CliError::Config("renorm_interval and corrector_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams, CliError> {
        SystemParams::new(self.a, self.b, self.q).map_err(config_err)
    }

    pub fn variant(&self) -> Result<RhsVariant, CliError> {
        let v = match self.variant {
            VariantKind::Wa => RhsVariant::wa(),
            VariantKind::Ga => RhsVariant::ga(self.delta).map_err(config_err)?,
            VariantKind::La => RhsVariant::la(self.epsilon.unwrap_or(DEFAULT_EPSILON)).map_err(config_err)?,
        };
        match self.abs_epsilon {
            Some(e) => v.with_quadratic_abs(e).map_err(config_err),
            None => Ok(v),
        }
    }

    fn h_or(&self, default: f64) -> f64 {
        self.h.unwrap_or(default)
    }

    fn t_end_or(&self, default: f64) -> f64 {
        self.t_end.unwrap_or(default)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `path` with `suffix` appended to the full file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(run_err)?;
    for row in rows {
        w.write_record(&row).map_err(run_err)?;
    }
    w.into_inner().map_err(run_err)
}

/// `t,x1,x2,x3,x4` rows.
pub fn trajectory_csv(tr: &Trajectory) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=tr.dim()).map(|i| format!("x{i}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header,
        tr.times().iter().zip(tr.states()).map(|(t, s)| {
            std::iter::once(fmt_f64(*t)).chain(s.iter().map(|v| fmt_f64(*v))).collect()
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct TrajectoryJson {
    h: f64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

fn trajectory_json(tr: &Trajectory) -> Result<Vec<u8>, CliError> {
    json_bytes(&TrajectoryJson {
        h: tr.h(),
        times: tr.times().to_vec(),
        states: tr.states().map(<[f64]>::to_vec).collect(),
    })
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(run_err)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    config: &'a RunConfig,
}

fn write_sidecar(out: &Path, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    write_file(
        &with_suffix(out, ".config.json"),
        &json_bytes(&Sidecar { command, config: cfg })?,
    )
}

fn require_json(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    match cfg.format {
        Some(Format::Csv) => Err(CliError::Config(format!("{command} writes a JSON report only"))),
        _ => Ok(()),
    }
}

/// A static SVG with one polyline or point set per series.
pub fn svg_plot(series: &[(&[f64], &[f64], &str, bool)], x_label: &str, y_label: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const M: f64 = 50.0;
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.0.iter()).filter(finite);
    let ys = series.iter().flat_map(|s| s.1.iter()).filter(finite);
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (x_lo, y_lo) = (if x_lo.is_finite() { x_lo } else { 0.0 }, if y_lo.is_finite() { y_lo } else { 0.0 });
    let (sx, sy) = (span(x_lo, x_hi), span(y_lo, y_hi));
    let px = |x: f64| M + (x - x_lo) / sx * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y_lo) / sy * (H - 2.0 * M);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    for (x, y, color, points) in series {
        let pts = x.iter().zip(y.iter()).filter(|(a, b)| a.is_finite() && b.is_finite());
        if *points {
            for (a, b) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="0.8" fill="{color}"/>"#, px(*a), py(*b));
            }
        } else {
            let path: Vec<String> = pts.map(|(a, b)| format!("{:.2},{:.2}", px(*a), py(*b))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="0.8" points="{}"/>"#,
                path.join(" ")
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{x_label} [{x_lo:.4}, {:.4}]</text>"#,
        W / 2.0,
        H - 15.0,
        x_lo + sx
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" font-size="14" transform="rotate(-90 15 {})" text-anchor="middle">{y_label} [{y_lo:.4}, {:.4}]</text>"#,
        H / 2.0,
        H / 2.0,
        y_lo + sy
    );
    svg.push_str("</svg>\n");
    svg
}

fn write_svg(out: &Path, svg: &str) -> Result<(), CliError> {
    write_file(&with_suffix(out, ".svg"), svg.as_bytes())
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Compare(c) => cmd_compare(c),
        Command::Bifurcate { common, scan } => cmd_bifurcate(common, scan),
        Command::Lyapunov(c) => cmd_lyapunov(c),
        Command::Switching(c) => cmd_switching(c),
        Command::VerifyPeriodic { common, periodic } => cmd_verify_periodic(common, periodic),
        Command::Equilibria(c) => cmd_equilibria(c),
        Command::Mlsolve(c) => cmd_mlsolve(c),
    }
}

fn cmd_simulate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, None, None)?;
    let (h, t_end) = (cfg.h_or(0.002), cfg.t_end_or(100.0));
    let tr = simulate(&cfg.params()?, &cfg.variant()?, &cfg.x0, t_end, h, cfg.corrector_iters)
        .map_err(|e| match e {
            crate::sprott_pwc::SystemError::Integration(crate::caputo_abm::AbmError::InvalidProblem(m)) => {
                CliError::Config(m)
            }
            other => run_err(other),
        })?;
    let format = cfg.format.unwrap_or(Format::Csv);
    let out = cfg.out_or(match format {
        Format::Csv => "trajectory.csv",
        Format::Json => "trajectory.json",
    });
    let bytes = match format {
        Format::Csv => trajectory_csv(&tr)?,
        Format::Json => trajectory_json(&tr)?,
    };
    write_file(&out, &bytes)?;
    write_sidecar(&out, "simulate", &cfg)?;
    if args.svg {
        let x1 = tr.component(0);
        write_svg(&out, &svg_plot(&[(tr.times(), &x1, "steelblue", false)], "t", "x1"))?;
    }
    Ok(())
}

fn cmd_compare(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, None, None)?;
    require_json(&cfg, "compare")?;
    let cc = CompareConfig {
        t_end: cfg.t_end_or(100.0),
        h: cfg.h_or(0.002),
        delta: cfg.delta,
        epsilon: cfg.epsilon.unwrap_or(DEFAULT_EPSILON),
        corrector_iters: cfg.corrector_iters,
        ..CompareConfig::default()
    };
    crate::caputo_abm::validate_grid(cfg.q, cc.t_end, cc.h).map_err(config_err)?;
    let cmp = compare_variants(&cfg.params()?, &cfg.x0, &cc).map_err(run_err)?;
    let out = cfg.out_or("compare.json");
    write_file(&out, &json_bytes(&cmp.report)?)?;
    for (tag, tr) in [("wa", &cmp.wa), ("ga", &cmp.ga), ("la", &cmp.la)] {
        write_file(&with_suffix(&out, &format!(".{tag}.csv")), &trajectory_csv(tr)?)?;
    }
    write_sidecar(&out, "compare", &cfg)?;
    if args.svg {
        let (wa, ga, la) = (cmp.wa.component(0), cmp.ga.component(0), cmp.la.component(0));
        let t = cmp.wa.times();
        let svg = svg_plot(
            &[(t, &ga, "blue", false), (t, &la, "red", false), (t, &wa, "green", false)],
            "t",
            "x1",
        );
        write_svg(&out, &svg)?;
    }
    Ok(())
}

fn diagram_csv(d: &BifurcationDiagram) -> Result<Vec<u8>, CliError> {
    let rows = d.samples.iter().flat_map(|s| {
        s.streams.iter().enumerate().flat_map(move |(k, st)| {
            st.maxima
                .iter()
                .map(move |m| vec![fmt_f64(s.value), k.to_string(), fmt_f64(*m)])
        })
    });
    csv_bytes(&[d.parameter.name(), "stream", "x1_max"], rows)
}

fn cmd_bifurcate(args: &CommonArgs, scan: &ScanArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, Some(scan), None)?;
    let base = cfg.params()?;
    let (from, to) = match cfg.scan_param {
        ScanParameter::B => (cfg.scan_from.unwrap_or(0.5), cfg.scan_to.unwrap_or(2.5)),
        ScanParameter::Q => (cfg.scan_from.unwrap_or(0.9), cfg.scan_to.unwrap_or(0.99)),
    };
    let bc = BifurcationConfig {
        parameter: cfg.scan_param,
        values: BifurcationConfig::linspace(from, to, cfg.scan_steps),
        variant: cfg.variant()?,
        x0: cfg.x0,
        x0_alt: cfg.x0_alt,
        t_end: cfg.t_end_or(800.0),
        h: cfg.h_or(0.005),
        transient_fraction: cfg.transient_fraction,
        corrector_iters: cfg.corrector_iters,
    };
    let diagram = bifurcation_scan(&base, &bc).map_err(config_err)?;
    for s in &diagram.samples {
        for (k, st) in s.streams.iter().enumerate() {
            if let Some(e) = &st.error {
                eprintln!("warning: {} = {} stream {k}: {e}", diagram.parameter.name(), s.value);
            }
        }
    }
    let format = cfg.format.unwrap_or(Format::Csv);
    let out = cfg.out_or(match format {
        Format::Csv => "bifurcation.csv",
        Format::Json => "bifurcation.json",
    });
    let bytes = match format {
        Format::Csv => diagram_csv(&diagram)?,
        Format::Json => json_bytes(&diagram)?,
    };
    write_file(&out, &bytes)?;
    write_sidecar(&out, "bifurcate", &cfg)?;
    if args.svg {
        let colors = ["red", "blue"];
        let mut cols: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); 2];
        for s in &diagram.samples {
            for (k, st) in s.streams.iter().enumerate() {
                cols[k].0.extend(std::iter::repeat_n(s.value, st.maxima.len()));
                cols[k].1.extend(&st.maxima);
            }
        }
        let series: Vec<_> = cols
            .iter()
            .zip(colors)
            .map(|((x, y), c)| (x.as_slice(), y.as_slice(), c, true))
            .collect();
        write_svg(&out, &svg_plot(&series, diagram.parameter.name(), "max x1"))?;
    }
    Ok(())
}

fn cmd_lyapunov(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(args, None, None)?;
    require_json(&cfg, "lyapunov")?;
    if cfg.variant == VariantKind::Wa {
        return Err(CliError::Config("lyapunov needs --variant ga or la".into()));
    }
    // The band has to be wide enough for the grid to sample the Jacobian inside it.
    cfg.epsilon.get_or_insert(LYAPUNOV_DEFAULT_EPSILON);
    cfg.abs_epsilon.get_or_insert(LYAPUNOV_DEFAULT_EPSILON);
    let lc = LyapunovConfig {
        t_end: cfg.t_end_or(300.0),
        h: cfg.h_or(0.005),
        renorm_interval: cfg.renorm_interval,
        corrector_iters: cfg.corrector_iters,
    };
    lc.validate(cfg.q).map_err(config_err)?;
    let spec = lyapunov_spectrum(&cfg.params()?, &cfg.variant()?, &cfg.x0, &lc).map_err(run_err)?;
    let out = cfg.out_or("lyapunov.json");
    write_file(&out, &json_bytes(&spec)?)?;
    write_sidecar(&out, "lyapunov", &cfg)
}

#[derive(Serialize, Deserialize)]
struct SwitchingReport {
    x0: State,
    side: Option<Side>,
    t_max: f64,
    switch: Option<crate::sprott_pwc::Switch>,
}

fn cmd_switching(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, None, None)?;
    require_json(&cfg, "switching")?;
    let t_max = cfg.t_end_or(10.0);
    let switch = switching_time(&cfg.x0, &cfg.params()?, t_max).map_err(config_err)?;
    let out = cfg.out_or("switching.json");
    let report = SwitchingReport {
        x0: cfg.x0,
        side: Side::of(cfg.x0[0]),
        t_max,
        switch,
    };
    write_file(&out, &json_bytes(&report)?)?;
    write_sidecar(&out, "switching", &cfg)
}

#[derive(Serialize, Deserialize)]
struct PeriodicReport {
    problem: PeriodicTestProblem,
    a: f64,
    b: f64,
    residual: f64,
}

fn cmd_verify_periodic(args: &CommonArgs, periodic: &PeriodicArgs) -> Result<(), CliError> {
    // Only q of the system parameters matters here; a and b stay unchecked defaults.
    let cfg = RunConfig::resolve(args, None, Some(periodic))?;
    require_json(&cfg, "verify-periodic")?;
    let problem = PeriodicTestProblem {
        q: cfg.q,
        beta: cfg.beta,
        gamma: cfg.gamma,
        omega: cfg.omega,
        alpha: cfg.alpha,
    };
    let coeffs = periodic_coefficients(&problem).map_err(config_err)?;
    let residual = verify_ml_periodic(&problem).map_err(config_err)?;
    let out = cfg.out_or("periodic.json");
    let report = PeriodicReport {
        problem,
        a: coeffs.a,
        b: coeffs.b,
        residual,
    };
    write_file(&out, &json_bytes(&report)?)?;
    write_sidecar(&out, "verify-periodic", &cfg)
}

fn cmd_equilibria(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, None, None)?;
    require_json(&cfg, "equilibria")?;
    let report = equilibria(&cfg.params()?).map_err(run_err)?;
    let out = cfg.out_or("equilibria.json");
    write_file(&out, &json_bytes(&report)?)?;
    write_sidecar(&out, "equilibria", &cfg)
}

fn cmd_mlsolve(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, None, None)?;
    let (h, t_end) = (cfg.h_or(0.01), cfg.t_end_or(10.0));
    crate::caputo_abm::validate_grid(cfg.q, t_end, h).map_err(config_err)?;
    let p = cfg.params()?;
    let side = Side::of(cfg.x0[0]).ok_or_else(|| CliError::Config("x0 lies on x1 = 0".into()))?;
    let t_stop = switching_time(&cfg.x0, &p, t_end)
        .map_err(config_err)?
        .map_or(t_end, |s| s.time);
    let n = crate::caputo_abm::grid_steps(t_stop, h);
    let mut tr = Trajectory::with_capacity(h, 4, n + 1);
    for k in 0..=n {
        tr.push(&ml_solution(&cfg.x0, k as f64 * h, side, &p).map_err(run_err)?);
    }
    let format = cfg.format.unwrap_or(Format::Csv);
    let out = cfg.out_or(match format {
        Format::Csv => "mlsolve.csv",
        Format::Json => "mlsolve.json",
    });
    let bytes = match format {
        Format::Csv => trajectory_csv(&tr)?,
        Format::Json => trajectory_json(&tr)?,
    };
    write_file(&out, &bytes)?;
    write_sidecar(&out, "mlsolve", &cfg)?;
    if args.svg {
        let x1 = tr.component(0);
        write_svg(&out, &svg_plot(&[(tr.times(), &x1, "steelblue", false)], "t", "x1"))?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
