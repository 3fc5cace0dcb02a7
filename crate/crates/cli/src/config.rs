//! TOML configuration files with dotted-key overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use structens_core::experiment::{ExperimentConfig, Scheme, Target};
use structens_core::spectral::BasisKind;
use structens_core::{DictionaryFamily, Interval, Orientation};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse { line: usize, column: usize, message: String },
    UnknownKey(String),
    Type { key: String, expected: &'static str },
    Range { key: String, message: String },
    BadOverride(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            ConfigError::Type { key, expected } => write!(f, "`{key}` must be {expected}"),
            ConfigError::Range { key, message } => write!(f, "range error in `{key}`: {message}"),
            ConfigError::BadOverride(o) => write!(f, "override `{o}` is not of the form key=value"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Options of the `decompose` subcommand that can live in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompOptions {
    pub basis: BasisKind,
    /// Retained modes; `None` means `4M`.
    pub modes: Option<usize>,
    pub scheme: Scheme,
    /// Replicates; `None` reuses the experiment's `R`.
    pub replicates: Option<usize>,
}

impl Default for DecompOptions {
    fn default() -> Self {
        DecompOptions {
            basis: BasisKind::Legendre,
            modes: None,
            scheme: Scheme::Law(structens_core::WeightLawSpec::Fibonacci),
            replicates: None,
        }
    }
}

/// Options of the `sweep-rho` subcommand that can live in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub grid: Vec<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { grid: parse_grid("1.05:4.0:60").expect("valid default grid") }
    }
}

/// A fully resolved configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub experiment: ExperimentConfig,
    pub decompose: DecompOptions,
    pub sweep: SweepOptions,
    /// Overrides applied after parsing, in order.
    pub overrides: Vec<String>,
}

const TOP_KEYS: &[&str] = &[
    "config_id", "target", "domain", "n_train", "n_test", "snr", "R", "base_seed", "weight_schemes", "ise_grid",
    "figure_grid", "output_dir", "dictionary", "optimizer", "decompose", "sweep",
];
const DICTIONARY_KEYS: &[&str] = &[
    "family", "M", "krr_gamma_max", "krr_gamma_min", "krr_lambda", "spline_lambda", "rff_D", "rff_gamma", "rff_seed",
    "rff_lambda",
];
const OPTIMIZER_KEYS: &[&str] = &["lambda", "orientation", "l2_bound", "tol", "max_iter", "risk_folds"];
const DECOMPOSE_KEYS: &[&str] = &["basis", "K", "weights", "R"];
const SWEEP_KEYS: &[&str] = &["grid"];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "dictionary" => Some(DICTIONARY_KEYS),
        "optimizer" => Some(OPTIMIZER_KEYS),
        "decompose" => Some(DECOMPOSE_KEYS),
        "sweep" => Some(SWEEP_KEYS),
        _ => None,
    }
}

/// Reads `path`, applies `overrides` (`key=value`, dotted keys address
/// sections) and resolves defaults.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<FileConfig, ConfigError> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    check_keys(&table)?;
    resolve(&table, overrides)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses the value as TOML, falling back to a bare string.
fn override_value(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut Table, o: &str) -> Result<(), ConfigError> {
    let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(o.to_string()));
    }
    let value = override_value(value);
    match key.split_once('.') {
        None => {
            table.insert(key.to_string(), value);
        }
        Some((section, sub)) => {
            if section_keys(section).is_none() || sub.contains('.') {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            let entry = table.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
            let Value::Table(t) = entry else {
                return Err(ConfigError::Type { key: section.to_string(), expected: "a table" });
            };
            t.insert(sub.to_string(), value);
        }
    }
    Ok(())
}

fn check_keys(table: &Table) -> Result<(), ConfigError> {
    for (k, v) in table {
        if !TOP_KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        if let Some(allowed) = section_keys(k) {
            let Value::Table(t) = v else {
                return Err(ConfigError::Type { key: k.clone(), expected: "a table" });
            };
            for sub in t.keys() {
                if !allowed.contains(&sub.as_str()) {
                    return Err(ConfigError::UnknownKey(format!("{k}.{sub}")));
                }
            }
        }
    }
    Ok(())
}

struct Section<'a> {
    prefix: &'a str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn name(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(ConfigError::Type { key: self.name(key), expected: "a number" }),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(Value::Integer(v)) => {
                Err(ConfigError::Range { key: self.name(key), message: format!("must be nonnegative, got {v}") })
            }
            Some(_) => Err(ConfigError::Type { key: self.name(key), expected: "a nonnegative integer" }),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn str(&self, key: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(ConfigError::Type { key: self.name(key), expected: "a string" }),
        }
    }

    fn parsed<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: std::str::FromStr<Err = structens_core::Error>,
    {
        self.str(key)?.map(|s| s.parse::<T>().map_err(|e| range(&self.name(key), e))).transpose()
    }
}

fn range(key: &str, e: impl fmt::Display) -> ConfigError {
    ConfigError::Range { key: key.to_string(), message: e.to_string() }
}

fn resolve(table: &Table, overrides: &[String]) -> Result<FileConfig, ConfigError> {
    let sub = |name: &'static str| Section { prefix: name, table: table.get(name).and_then(Value::as_table) };
    let top = Section { prefix: "", table: Some(table) };
    let dict = sub("dictionary");
    let opt = sub("optimizer");
    let dec = sub("decompose");
    let sweep = sub("sweep");

    let target: Target = top.parsed("target")?.unwrap_or(Target::Sin);
    let family: DictionaryFamily = dict.parsed("family")?.unwrap_or(DictionaryFamily::Poly);
    let mut cfg = ExperimentConfig::new(target, family);
    if let Some(v) = top.get("domain") {
        let pair = v
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some([num(&a[0])?, num(&a[1])?]))
            .ok_or(ConfigError::Type { key: "domain".into(), expected: "a two-element array [lo, hi]" })?;
        cfg = cfg.with_domain(Interval::new(pair[0], pair[1]).map_err(|e| range("domain", e))?);
    }
    if let Some(id) = top.str("config_id")? {
        cfg.config_id = id.to_string();
    }
    if let Some(v) = top.usize("n_train")? {
        cfg.n_train = v;
    }
    if let Some(v) = top.usize("n_test")? {
        cfg.n_test = v;
    }
    if let Some(v) = top.f64("snr")? {
        cfg.snr = v;
    }
    if let Some(v) = top.usize("R")? {
        cfg.replicates = v;
    }
    if let Some(v) = top.u64("base_seed")? {
        cfg.base_seed = v;
    }
    if let Some(v) = top.usize("ise_grid")? {
        cfg.ise_grid = v;
    }
    if let Some(v) = top.usize("figure_grid")? {
        cfg.figure_grid = v;
    }
    if let Some(v) = top.str("output_dir")? {
        cfg.output_dir = PathBuf::from(v);
    }
    if let Some(v) = top.get("weight_schemes") {
        let arr = v.as_array().ok_or(ConfigError::Type { key: "weight_schemes".into(), expected: "an array of strings" })?;
        cfg.weight_schemes = arr
            .iter()
            .map(|s| {
                let s = s.as_str().ok_or(ConfigError::Type { key: "weight_schemes".into(), expected: "an array of strings" })?;
                s.parse::<Scheme>().map_err(|e| range("weight_schemes", e))
            })
            .collect::<Result<_, _>>()?;
    }

    let d = &mut cfg.dictionary;
    if let Some(v) = dict.usize("M")? {
        d.m = v;
    }
    let p = &mut d.params;
    for (key, slot) in [
        ("krr_gamma_max", &mut p.krr_gamma_max),
        ("krr_gamma_min", &mut p.krr_gamma_min),
        ("krr_lambda", &mut p.krr_lambda),
        ("spline_lambda", &mut p.spline_lambda),
        ("rff_gamma", &mut p.rff_gamma),
        ("rff_lambda", &mut p.rff_lambda),
    ] {
        if let Some(v) = dict.f64(key)? {
            *slot = v;
        }
    }
    if let Some(v) = dict.usize("rff_D")? {
        p.rff_max_features = v;
    }
    if let Some(v) = dict.u64("rff_seed")? {
        p.rff_seed = v;
    }

    let o = &mut cfg.optimizer;
    if let Some(v) = opt.f64("lambda")? {
        o.lambda = v;
    }
    if let Some(v) = opt.parsed::<Orientation>("orientation")? {
        o.orientation = v;
    }
    if let Some(v) = opt.f64("l2_bound")? {
        o.l2_bound = Some(v);
    }
    if let Some(v) = opt.f64("tol")? {
        o.tol = v;
    }
    if let Some(v) = opt.usize("max_iter")? {
        o.max_iter = v;
    }
    if let Some(v) = opt.usize("risk_folds")? {
        o.risk_folds = v;
    }

    let mut decompose = DecompOptions::default();
    if let Some(v) = dec.parsed::<BasisKind>("basis")? {
        decompose.basis = v;
    }
    decompose.modes = dec.usize("K")?;
    decompose.replicates = dec.usize("R")?;
    if let Some(v) = dec.parsed::<Scheme>("weights")? {
        decompose.scheme = v;
    }

    let mut sweep_opts = SweepOptions::default();
    if let Some(g) = sweep.str("grid")? {
        sweep_opts.grid = parse_grid(g).map_err(|e| range("sweep.grid", e))?;
    }

    cfg.validate().map_err(|e| range("config", e))?;
    Ok(FileConfig { experiment: cfg, decompose, sweep: sweep_opts, overrides: overrides.to_vec() })
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// `a:b:n` → `n` equally spaced points from `a` to `b` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(format!("grid `{spec}` must be a:b:n"));
    };
    let a: f64 = a.trim().parse().map_err(|_| format!("bad grid start `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad grid end `{b}`"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad grid count `{n}`"))?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(format!("grid `{spec}` must have finite ends and n >= 1"));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    if b < a {
        return Err(format!("grid `{spec}` must be increasing"));
    }
    Ok((0..n).map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect())
}
