//! Command-line front end.
//!
//! Configuration is flat `key=value` text, one pair per line (`#` starts a
//! comment). Every key can also be given as `--key value` or `--key=value`;
//! flags override file values, and `--config path` loads a file. The
//! command is the single positional argument or the `command` key.
//!
//! Every output starts with the fully resolved configuration as `# key=value`
//! lines, which [`parse_header`] reads back into the same [`RunConfig`].

use std::fmt;
use std::fs;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bounds::{self, BoundsError, SchemeRule, SnrRule};
use crate::channel::{simulate, ChannelInstance, PastTail};
use crate::coeffs::CoeffSeq;
use crate::divergence::{self, DiagGaussian, SlopeMethod};
use crate::flashsim::{self, PpmConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Bounds,
    Sweep,
    Sandwich,
    Classify,
    Mi,
    Ppm,
    KlOracle,
}

impl Command {
    const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Bounds,
        Command::Sweep,
        Command::Sandwich,
        Command::Classify,
        Command::Mi,
        Command::Ppm,
        Command::KlOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Bounds => "bounds",
            Command::Sweep => "sweep",
            Command::Sandwich => "sandwich",
            Command::Classify => "classify",
            Command::Mi => "mi",
            Command::Ppm => "ppm",
            Command::KlOracle => "kl-oracle",
        }
    }
}

impl FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ConfigError::BadCommand(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing value for {0:?}")]
    MissingValue(String),
    #[error("bad value for {key}: {msg}")]
    BadValue { key: String, msg: String },
    #[error("unknown command {0:?}")]
    BadCommand(String),
    #[error("no command given")]
    MissingCommand,
    #[error("more than one command given: {0:?} and {1:?}")]
    TwoCommands(String, String),
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Infeasible(_) => 3,
            RunError::Failed(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Infeasible(_) => "infeasible",
            RunError::Failed(_) => "failed",
        }
    }
}

impl From<BoundsError> for RunError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Infeasible { .. } | BoundsError::SchemeMismatch { .. } => {
                RunError::Infeasible(e.to_string())
            }
            other => RunError::Failed(other.to_string()),
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Failed(e.to_string())
            }
        }
    )*};
}
failed_from!(
    crate::channel::ChannelError,
    crate::divergence::DivergenceError,
    crate::flashsim::FlashError,
    std::io::Error
);

/// Fully resolved run parameters. Only the fields the command uses matter,
/// but all are echoed for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub coeffs: CoeffSeq,
    pub sigma2: f64,
    pub snr: Option<f64>,
    pub snr_grid: Vec<f64>,
    pub snr_rule: SnrRule,
    pub block_len: usize,
    pub l_grid: Vec<usize>,
    pub xi2: f64,
    pub xi2_grid: Vec<f64>,
    pub delta: Option<f64>,
    pub past: Vec<f64>,
    pub inputs: Vec<f64>,
    pub tail: Option<Vec<f64>>,
    pub mc: usize,
    pub seed: u64,
    pub trials: usize,
    pub n_blocks: usize,
    pub n_messages: usize,
    pub horizon: u64,
    pub on_mean: f64,
    pub on_var: f64,
    pub off_mean: f64,
    pub off_var: f64,
    pub deltas: Vec<f64>,
    pub tol: f64,
    pub output: Option<String>,
    pub format: Format,
    pub verbose: bool,
}

pub const KEYS: [&str; 29] = [
    "command",
    "coeffs",
    "sigma2",
    "snr",
    "snr_grid",
    "snr_rule",
    "L",
    "L_grid",
    "xi2",
    "xi2_grid",
    "delta",
    "past",
    "inputs",
    "tail",
    "mc",
    "seed",
    "trials",
    "n_blocks",
    "n_messages",
    "horizon",
    "on_mean",
    "on_var",
    "off_mean",
    "off_var",
    "deltas",
    "tol",
    "output",
    "format",
    "verbose",
];

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            coeffs: CoeffSeq::geometric(0.5).expect("valid ratio"),
            sigma2: 1.0,
            snr: None,
            snr_grid: vec![3.125e-299, 3.125e-44, 1e-12, 1e-6, 1e-3, 1e-1, 1.0, 10.0],
            snr_rule: SnrRule::Deepest,
            block_len: 32,
            l_grid: vec![1, 2, 4, 8, 16, 32],
            xi2: 100.0,
            xi2_grid: vec![100.0],
            delta: None,
            past: Vec::new(),
            inputs: vec![1.0, 1.0, 0.0],
            tail: None,
            mc: 100_000,
            seed: 1,
            trials: 10_000,
            n_blocks: 2,
            n_messages: 2,
            horizon: 4096,
            on_mean: 2.0,
            on_var: 1.0,
            off_mean: 0.0,
            off_var: 1.0,
            deltas: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            tol: 1e-10,
            output: None,
            format: Format::Csv,
            verbose: false,
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "command" => self.command = value.parse()?,
            "coeffs" => self.coeffs = value.parse().map_err(|e| bad(key, e))?,
            "sigma2" => self.sigma2 = positive(key, value)?,
            "snr" => self.snr = Some(positive(key, value)?),
            "snr_grid" => self.snr_grid = list(value, |v| positive(key, v))?,
            "snr_rule" => self.snr_rule = value.parse().map_err(|e| bad(key, e))?,
            "L" => self.block_len = count(key, value)?,
            "L_grid" => self.l_grid = list(value, |v| count(key, v))?,
            "xi2" => self.xi2 = positive(key, value)?,
            "xi2_grid" => self.xi2_grid = list(value, |v| positive(key, v))?,
            "delta" => {
                let d = real(key, value)?;
                if !(0.0..=1.0).contains(&d) {
                    return Err(bad(key, "must lie in [0,1]"));
                }
                self.delta = Some(d);
            }
            "past" => self.past = list(value, |v| nonneg(key, v))?,
            "inputs" => self.inputs = list(value, |v| real(key, v))?,
            "tail" => self.tail = Some(list(value, |v| real(key, v))?),
            "mc" => self.mc = count(key, value)?,
            "seed" => self.seed = value.parse().map_err(|e| bad(key, e))?,
            "trials" => self.trials = count(key, value)?,
            "n_blocks" => self.n_blocks = count(key, value)?,
            "n_messages" => self.n_messages = count(key, value)?,
            "horizon" => self.horizon = count(key, value)? as u64,
            "on_mean" => self.on_mean = real(key, value)?,
            "on_var" => self.on_var = positive(key, value)?,
            "off_mean" => self.off_mean = real(key, value)?,
            "off_var" => self.off_var = positive(key, value)?,
            "deltas" => self.deltas = list(value, |v| positive(key, v))?,
            "tol" => self.tol = positive(key, value)?,
            "output" => self.output = Some(value.to_string()),
            "format" => {
                self.format = match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(bad(key, "expected csv or json")),
                }
            }
            "verbose" => self.verbose = value.parse().map_err(|e| bad(key, e))?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Derived quantities that belong in the echoed configuration.
    fn resolve(&mut self) -> Result<(), RunError> {
        if self.command == Command::Bounds {
            let scheme = match (self.snr, self.delta) {
                (Some(snr), _) => bounds::build_scheme(snr, self.block_len, self.xi2)?,
                (None, Some(d)) => SnrRule::FixedDelta(d).scheme(self.block_len, self.xi2)?.0,
                (None, None) => self.snr_rule.scheme(self.block_len, self.xi2)?.0,
            };
            self.delta = Some(scheme.delta());
        }
        Ok(())
    }

    /// `(key, value)` pairs in canonical order; reals use the shortest
    /// representation that parses back to the same double.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let r = |x: f64| format!("{x:e}");
        let rl = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = vec![
            ("command", self.command.name().to_string()),
            ("coeffs", self.coeffs.to_string()),
            ("sigma2", r(self.sigma2)),
        ];
        if let Some(s) = self.snr {
            out.push(("snr", r(s)));
        }
        out.extend([
            ("snr_grid", rl(&self.snr_grid)),
            ("snr_rule", self.snr_rule.to_string()),
            ("L", self.block_len.to_string()),
            (
                "L_grid",
                self.l_grid
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("xi2", r(self.xi2)),
            ("xi2_grid", rl(&self.xi2_grid)),
        ]);
        if let Some(d) = self.delta {
            out.push(("delta", r(d)));
        }
        out.extend([("past", rl(&self.past)), ("inputs", rl(&self.inputs))]);
        if let Some(t) = &self.tail {
            out.push(("tail", rl(t)));
        }
        out.extend([
            ("mc", self.mc.to_string()),
            ("seed", self.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("n_blocks", self.n_blocks.to_string()),
            ("n_messages", self.n_messages.to_string()),
            ("horizon", self.horizon.to_string()),
            ("on_mean", r(self.on_mean)),
            ("on_var", r(self.on_var)),
            ("off_mean", r(self.off_mean)),
            ("off_var", r(self.off_var)),
            ("deltas", rl(&self.deltas)),
            ("tol", r(self.tol)),
        ]);
        if let Some(o) = &self.output {
            out.push(("output", o.clone()));
        }
        out.extend([
            (
                "format",
                match self.format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                }
                .to_string(),
            ),
            ("verbose", self.verbose.to_string()),
        ]);
        out
    }
}

fn bad(key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

fn real(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.trim().parse().map_err(|e| bad(key, e))?;
    if !x.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = real(key, v)?;
    if x <= 0.0 {
        return Err(bad(key, "must be positive"));
    }
    Ok(x)
}

fn nonneg(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = real(key, v)?;
    if x < 0.0 {
        return Err(bad(key, "must be non-negative"));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize, ConfigError> {
    let n: usize = v.trim().parse().map_err(|e| bad(key, e))?;
    if n == 0 {
        return Err(bad(key, "must be positive"));
    }
    Ok(n)
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(f).collect()
}

fn normalize_key(k: &str) -> String {
    match k {
        "l" | "L" => "L".to_string(),
        "l-grid" | "l_grid" | "L-grid" | "L_grid" => "L_grid".to_string(),
        _ => k.replace('-', "_"),
    }
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::BadLine(i + 1))?;
        out.push((normalize_key(k.trim()), v.trim().to_string()));
    }
    Ok(out)
}

fn build(pairs: &[(String, String)], positional: Option<String>) -> Result<RunConfig, RunError> {
    let mut command = positional;
    for (k, v) in pairs {
        if k == "command" {
            if let Some(c) = &command {
                if c != v {
                    return Err(ConfigError::TwoCommands(c.clone(), v.clone()).into());
                }
            }
            command = Some(v.clone());
        } else if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k.clone()).into());
        }
    }
    let command: Command = command.ok_or(ConfigError::MissingCommand)?.parse()?;
    let mut cfg = RunConfig::new(command);
    for (k, v) in pairs {
        cfg.set(k, v)?;
    }
    cfg.resolve()?;
    Ok(cfg)
}

/// Parse a configuration file's text.
pub fn parse_config_text(text: &str) -> Result<RunConfig, RunError> {
    build(&parse_pairs(text)?, None)
}

const BOOL_KEYS: [&str; 1] = ["verbose"];

/// Parse command-line arguments (without the program name).
pub fn parse_args<S: AsRef<str>>(args: &[S]) -> Result<RunConfig, RunError> {
    let mut file_pairs = Vec::new();
    let mut flag_pairs = Vec::new();
    let mut positional: Option<String> = None;
    let mut it = args.iter().map(|a| a.as_ref());
    while let Some(arg) = it.next() {
        if let Some(flag) = arg.strip_prefix("--") {
            let (key, inline) = match flag.split_once('=') {
                Some((k, v)) => (normalize_key(k), Some(v.to_string())),
                None => (normalize_key(flag), None),
            };
            let value = match inline {
                Some(v) => v,
                None if BOOL_KEYS.contains(&key.as_str()) => "true".to_string(),
                None => it
                    .next()
                    .ok_or_else(|| ConfigError::MissingValue(key.clone()))?
                    .to_string(),
            };
            if key == "config" {
                let text = fs::read_to_string(&value).map_err(|e| ConfigError::Io {
                    path: value.clone(),
                    msg: e.to_string(),
                })?;
                file_pairs.extend(parse_pairs(&text)?);
            } else {
                flag_pairs.push((key, value));
            }
        } else if let Some(prev) = &positional {
            return Err(ConfigError::TwoCommands(prev.clone(), arg.to_string()).into());
        } else {
            positional = Some(arg.to_string());
        }
    }
    // Flags override the file: apply them last.
    let mut pairs = file_pairs;
    if positional.is_some() {
        pairs.retain(|(k, _)| k != "command");
    }
    pairs.extend(flag_pairs);
    build(&pairs, positional)
}

/// Recover the configuration from the `# key=value` header of a CSV output.
pub fn parse_header(text: &str) -> Result<RunConfig, RunError> {
    let body: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.strip_prefix("# "))
        .filter(|l| l.contains('='))
        .map(|l| format!("{l}\n"))
        .collect();
    parse_config_text(&body)
}

/// Recover the configuration from a JSON output's `config` object.
pub fn parse_json_config(text: &str) -> Result<RunConfig, RunError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| RunError::Failed(e.to_string()))?;
    let obj = doc
        .get("config")
        .and_then(Value::as_object)
        .ok_or_else(|| RunError::Failed("no config object".into()))?;
    let pairs: Vec<(String, String)> = obj
        .iter()
        .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
        .collect();
    build(&pairs, None)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n', '\r']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(n) => json!(n),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column by name, for reading results back in tests and scripts.
    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn reals(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .map(|c| match c {
                Cell::Real(x) => Some(*x),
                Cell::Int(n) => Some(*n as f64),
                _ => None,
            })
            .collect()
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$(Cell::from($x)),*] };
}

fn report_table(reports: &[bounds::BoundReport]) -> Table {
    let mut t = Table::new(&[
        "snr",
        "L",
        "xi2_over_sigma2",
        "delta",
        "upper",
        "lower_t1",
        "lower_t2",
        "lower_t3",
        "t3_std_error",
        "lower",
        "upper_ratio",
        "lower_ratio",
        "t1_ratio",
        "t2_ratio",
        "t3_ratio",
        "t3_ratio_std_error",
        "n_samples",
    ]);
    for r in reports {
        t.push(row![
            r.snr,
            r.block_len,
            r.xi2_over_sigma2,
            r.delta,
            r.upper,
            r.lower_t1,
            r.lower_t2,
            r.lower_t3,
            r.t3_std_error,
            r.lower,
            r.upper_ratio,
            r.lower_ratio,
            r.t1_ratio,
            r.t2_ratio,
            r.t3_ratio,
            r.t3_ratio_std_error,
            r.n_samples,
        ]);
    }
    t
}

/// Compute the result table for a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<Table, RunError> {
    let coeffs = &cfg.coeffs;
    match cfg.command {
        Command::Simulate => {
            let mut ch = ChannelInstance::new(cfg.sigma2, coeffs.clone(), cfg.seed)?;
            let tail = cfg.tail.clone().map(PastTail::new).transpose()?;
            let rows = simulate(&mut ch, &cfg.inputs, tail.as_ref())?;
            let mut t = Table::new(&["k", "x", "v", "y"]);
            for r in rows {
                t.push(row![r.k, r.x, r.v, r.y]);
            }
            Ok(t)
        }
        Command::Bounds => {
            let delta = cfg.delta.expect("resolved");
            let scheme = bounds::FlashScheme::new(cfg.block_len, cfg.xi2, delta)?;
            let snr = cfg.snr.unwrap_or_else(|| scheme.snr());
            let r = bounds::lower_bound_rate(&scheme, coeffs, snr, cfg.mc, cfg.seed)?;
            Ok(report_table(&[r]))
        }
        Command::Sweep => {
            let rows = bounds::cpuc_lower_sweep(
                coeffs,
                &cfg.l_grid,
                &cfg.xi2_grid,
                cfg.snr_rule,
                cfg.mc,
                cfg.seed,
            )?;
            let mut t = Table::new(&[
                "cell",
                "L",
                "xi2_over_sigma2",
                "snr",
                "delta",
                "t1_ratio",
                "t2_ratio",
                "t3_ratio",
                "t3_ratio_std_error",
                "lower_ratio",
                "running_max",
                "upper_ratio",
            ]);
            let alpha = coeffs.total_alpha();
            for r in rows {
                t.push(row![
                    r.cell,
                    r.block_len,
                    r.xi2_over_sigma2,
                    r.snr,
                    r.delta,
                    r.t1_ratio,
                    r.t2_ratio,
                    r.t3_ratio,
                    r.t3_ratio_std_error,
                    r.lower_ratio,
                    r.running_max,
                    bounds::upper_ratio(r.snr, alpha)?,
                ]);
            }
            Ok(t)
        }
        Command::Sandwich => {
            let rule = SchemeRule::Saturating {
                block_len: cfg.block_len,
                xi2_over_sigma2: cfg.xi2,
            };
            Ok(report_table(&bounds::sandwich(
                &cfg.snr_grid,
                coeffs,
                rule,
                cfg.mc,
                cfg.seed,
            )?))
        }
        Command::Classify => {
            let c = coeffs.classify_high_snr(cfg.horizon);
            let mut t = Table::new(&["coeffs", "class", "liminf", "limsup", "total_alpha", "note"]);
            t.push(row![
                coeffs.to_string(),
                c.class.to_string(),
                c.liminf,
                c.limsup,
                coeffs.total_alpha(),
                c.note
            ]);
            Ok(t)
        }
        Command::Mi => {
            let delta = cfg
                .delta
                .ok_or_else(|| ConfigError::MissingValue("delta".into()))?;
            let scheme = bounds::FlashScheme::new(cfg.block_len, cfg.xi2, delta)?;
            let past: Vec<f64> = cfg.past.iter().map(|p| p * cfg.sigma2).collect();
            let e = flashsim::mi_flash(&scheme, coeffs, cfg.sigma2, &past, cfg.mc, cfg.seed)?;
            let mut t = Table::new(&[
                "L",
                "xi2_over_sigma2",
                "delta",
                "mi_per_block",
                "std_error",
                "mi_per_use",
                "n_samples",
            ]);
            t.push(row![
                cfg.block_len,
                cfg.xi2,
                delta,
                e.value,
                e.std_error,
                e.value / cfg.block_len as f64,
                e.n_samples
            ]);
            Ok(t)
        }
        Command::Ppm => {
            let p = PpmConfig {
                n_blocks: cfg.n_blocks,
                n_messages: cfg.n_messages,
                block_len: cfg.block_len,
                xi2_over_sigma2: cfg.xi2,
                sigma2: cfg.sigma2,
                coeffs: coeffs.clone(),
            };
            let outcomes = flashsim::ppm_trials(&p, cfg.trials, cfg.seed)?;
            if cfg.verbose {
                let mut t = Table::new(&["trial", "message", "decoded", "correct"]);
                for o in outcomes {
                    t.push(row![o.trial, o.message, o.decoded, o.correct]);
                }
                return Ok(t);
            }
            let s = flashsim::summarize(&p, &outcomes);
            let mut t = Table::new(&[
                "n_blocks",
                "n_messages",
                "L",
                "xi2_over_sigma2",
                "trials",
                "errors",
                "error_rate",
                "std_error",
                "rate",
            ]);
            t.push(row![
                p.n_blocks,
                p.n_messages,
                p.block_len,
                p.xi2_over_sigma2,
                s.trials,
                s.errors,
                s.error_rate,
                s.std_error,
                s.rate
            ]);
            Ok(t)
        }
        Command::KlOracle => {
            let on = DiagGaussian::new(vec![cfg.on_mean], vec![cfg.on_var])?;
            let off = DiagGaussian::new(vec![cfg.off_mean], vec![cfg.off_var])?;
            let kl = divergence::gaussian_kl(&on, &off)?;
            let quad = divergence::small_delta_slope(
                &on,
                &off,
                &cfg.deltas,
                SlopeMethod::Quadrature { tol: cfg.tol },
            )?;
            let mc = divergence::small_delta_slope(
                &on,
                &off,
                &cfg.deltas,
                SlopeMethod::MonteCarlo {
                    n: cfg.mc,
                    seed: cfg.seed,
                },
            )?;
            let mut t = Table::new(&[
                "delta",
                "slope_quadrature",
                "slope_mc",
                "kl_on_off",
                "slope_over_kl",
            ]);
            for ((d, q), (_, m)) in quad.into_iter().zip(mc) {
                t.push(row![d, q, m, kl, q / kl]);
            }
            Ok(t)
        }
    }
}

pub fn render_csv(cfg: &RunConfig, table: &Table) -> String {
    let mut s = format!("# ddnoise {VERSION}\n");
    for (k, v) in cfg.pairs() {
        s.push_str(&format!("# {k}={v}\n"));
    }
    s.push_str(&table.columns.join(","));
    s.push('\n');
    for r in &table.rows {
        s.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn render_json(cfg: Option<&RunConfig>, table: Option<&Table>, errors: &[String]) -> String {
    let config: Map<String, Value> = cfg
        .map(|c| {
            c.pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), Value::String(v)))
                .collect()
        })
        .unwrap_or_default();
    let results: Vec<Value> = table
        .map(|t| {
            t.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        t.columns
                            .iter()
                            .map(|c| c.to_string())
                            .zip(r.iter().map(Cell::json))
                            .collect(),
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    let doc = json!({
        "tool": format!("ddnoise {VERSION}"),
        "config": config,
        "results": results,
        "errors": errors,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

/// Render the full output document for a configuration.
pub fn run_to_string(cfg: &RunConfig) -> Result<String, RunError> {
    let table = execute(cfg)?;
    Ok(match cfg.format {
        Format::Csv => render_csv(cfg, &table),
        Format::Json => render_json(Some(cfg), Some(&table), &[]),
    })
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), RunError> {
    match &cfg.output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub const USAGE: &str = "usage: ddnoise [--config FILE] [--key value ...] \
<simulate|bounds|sweep|sandwich|classify|mi|ppm|kl-oracle>";

/// Entry point: parse, run, write output. Returns the process exit code.
pub fn main_with_args<S: AsRef<str>>(args: &[S]) -> i32 {
    if args.is_empty() || args.iter().any(|a| matches!(a.as_ref(), "-h" | "--help")) {
        eprintln!("{USAGE}");
        return if args.is_empty() { 2 } else { 0 };
    }
    let cfg = match parse_args(args) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let result = run_to_string(&cfg).and_then(|text| emit(&cfg, &text));
    match result {
        Ok(()) => 0,
        Err(e) => {
            if cfg.format == Format::Json {
                let _ = emit(&cfg, &render_json(Some(&cfg), None, &[e.to_string()]));
            }
            fail(&e)
        }
    }
}

fn fail(e: &RunError) -> i32 {
    let msg = e.to_string().replace('\n', " ");
    eprintln!(
        "ddnoise: error kind={} code={}: {msg}",
        e.kind(),
        e.exit_code()
    );
    e.exit_code()
}
