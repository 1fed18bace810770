//! Plain-text experiment configuration: `key = value` lines, comma-separated
//! lists, `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use klfield::lattice_qmc::OrderWeights;
use klfield::{FieldModel, PsiMode, Smoothness, WeightSchedule};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldChoice {
    Example1,
    Example2,
    Custom,
}

impl FieldChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldChoice::Example1 => "example1",
            FieldChoice::Example2 => "example2",
            FieldChoice::Custom => "custom",
        }
    }
}

impl FromStr for FieldChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "example1" | "1" => Ok(FieldChoice::Example1),
            "example2" | "2" => Ok(FieldChoice::Example2),
            "custom" => Ok(FieldChoice::Custom),
            _ => Err(format!("expected example1, example2 or custom, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiChoice {
    Projected,
    Iid,
}

impl PsiChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PsiChoice::Projected => "projected",
            PsiChoice::Iid => "iid",
        }
    }
}

impl FromStr for PsiChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "projected" => Ok(PsiChoice::Projected),
            "iid" => Ok(PsiChoice::Iid),
            _ => Err(format!("expected projected or iid, got `{s}`")),
        }
    }
}

/// Everything a run depends on. Unset optional values fall back to the
/// field catalog (`dprime`, `k`, `s`) or to `n` (`eval_n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub field: FieldChoice,
    pub expression: Option<String>,
    pub smoothness: Option<Smoothness>,
    pub kinks: Vec<f64>,
    pub dprime: Option<usize>,
    pub n: u64,
    pub m_list: Vec<usize>,
    /// Mesh widths as denominators, `h = 1/entry`.
    pub h_list: Vec<usize>,
    pub k: Option<usize>,
    pub psi_mode: PsiChoice,
    pub construction_seed: u64,
    pub eval_seed: u64,
    pub psi_seed: u64,
    pub out: PathBuf,
    pub eval_n: Option<u64>,
    pub weights_file: Option<PathBuf>,
    pub samples: u64,
    pub p_list: Vec<f64>,
    pub pde_h: usize,
    pub forcing: String,
    pub epsilon: f64,
    pub s: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            field: FieldChoice::Example1,
            expression: None,
            smoothness: None,
            kinks: Vec::new(),
            dprime: None,
            n: 1009,
            m_list: vec![2, 4, 8],
            h_list: vec![16, 64, 128, 256],
            k: None,
            psi_mode: PsiChoice::Projected,
            construction_seed: 1,
            eval_seed: 2,
            psi_seed: 3,
            out: PathBuf::from("out"),
            eval_n: None,
            weights_file: None,
            samples: 64,
            p_list: vec![1.0],
            pde_h: 64,
            forcing: "1".to_string(),
            epsilon: 0.1,
            s: None,
        }
    }
}

const KEYS: &[&str] = &[
    "field",
    "expression",
    "smoothness",
    "kinks",
    "dprime",
    "n",
    "m_list",
    "h_list",
    "k",
    "psi_mode",
    "construction_seed",
    "eval_seed",
    "psi_seed",
    "out",
    "eval_n",
    "weights_file",
    "samples",
    "p_list",
    "pde_h",
    "forcing",
    "epsilon",
    "s",
];

fn parse_scalar<T: FromStr>(raw: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| format!("cannot parse `{raw}`: {e}"))
}

fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|item| parse_scalar(item.trim())).collect()
}

fn parse_smoothness(raw: &str) -> Result<Smoothness, String> {
    match raw {
        "inf" | "infinity" | "unbounded" => Ok(Smoothness::Unbounded),
        _ => {
            let s: f64 = parse_scalar(raw)?;
            if s > 0.0 && s.is_finite() {
                Ok(Smoothness::Finite(s))
            } else {
                Err(format!("smoothness must be positive or `inf`, got {raw}"))
            }
        }
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })?;
        if seen.contains(&known) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        seen.push(known);
        apply(&mut cfg, known, value).map_err(|message| ConfigError::Value {
            line,
            key: key.to_string(),
            message,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "field" => cfg.field = v.parse()?,
        "expression" => cfg.expression = Some(v.to_string()),
        "smoothness" => cfg.smoothness = Some(parse_smoothness(v)?),
        "kinks" => cfg.kinks = parse_list(v)?,
        "dprime" => cfg.dprime = Some(parse_scalar(v)?),
        "n" => cfg.n = parse_scalar(v)?,
        "m_list" => cfg.m_list = parse_list(v)?,
        "h_list" => cfg.h_list = parse_list(v)?,
        "k" => cfg.k = Some(parse_scalar(v)?),
        "psi_mode" => cfg.psi_mode = v.parse()?,
        "construction_seed" => cfg.construction_seed = parse_scalar(v)?,
        "eval_seed" => cfg.eval_seed = parse_scalar(v)?,
        "psi_seed" => cfg.psi_seed = parse_scalar(v)?,
        "out" => cfg.out = PathBuf::from(v),
        "eval_n" => cfg.eval_n = Some(parse_scalar(v)?),
        "weights_file" => cfg.weights_file = Some(PathBuf::from(v)),
        "samples" => cfg.samples = parse_scalar(v)?,
        "p_list" => cfg.p_list = parse_list(v)?,
        "pde_h" => cfg.pde_h = parse_scalar(v)?,
        "forcing" => cfg.forcing = v.to_string(),
        "epsilon" => cfg.epsilon = parse_scalar(v)?,
        "s" => cfg.s = Some(parse_scalar(v)?),
        _ => unreachable!("key list and match arms agree"),
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m_list.is_empty() {
            return Err(invalid("m_list", "must not be empty"));
        }
        if self.m_list.contains(&0) {
            return Err(invalid("m_list", "entries must be positive"));
        }
        if self.h_list.is_empty() {
            return Err(invalid("h_list", "must not be empty"));
        }
        if self.h_list.contains(&0) {
            return Err(invalid("h_list", "entries must be positive"));
        }
        if self.n < 2 {
            return Err(invalid("n", "need at least 2 lattice points"));
        }
        if self.eval_n.is_some_and(|e| e < 2) {
            return Err(invalid("eval_n", "need at least 2 lattice points"));
        }
        if self.samples < 2 {
            return Err(invalid("samples", "need at least 2 samples"));
        }
        if self.pde_h == 0 {
            return Err(invalid("pde_h", "must be positive"));
        }
        if let Some(k) = self.k {
            if !(1..=klfield::fem1d::MAX_DEGREE).contains(&k) {
                return Err(invalid("k", format!("degree must lie in 1..={}", klfield::fem1d::MAX_DEGREE)));
            }
        }
        if self.dprime == Some(0) {
            return Err(invalid("dprime", "must be positive"));
        }
        if self.p_list.is_empty() {
            return Err(invalid("p_list", "must not be empty"));
        }
        if self.p_list.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(invalid("p_list", "moment orders must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid("epsilon", "must lie in (0, 1]"));
        }
        if self.s.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid("s", "must be positive and finite"));
        }
        if self.kinks.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(invalid("kinks", "points must lie in [0, 1]"));
        }
        match self.field {
            FieldChoice::Custom => {
                if self.expression.is_none() {
                    return Err(invalid("expression", "required for a custom field"));
                }
                if self.smoothness.is_none() {
                    return Err(invalid("smoothness", "required for a custom field"));
                }
                if self.dprime.is_none() {
                    return Err(invalid("dprime", "required for a custom field"));
                }
            }
            _ => {
                if self.expression.is_some() {
                    return Err(invalid("expression", "only allowed with field = custom"));
                }
                if self.smoothness.is_some() || !self.kinks.is_empty() {
                    return Err(invalid("smoothness", "catalog fields fix their smoothness and kinks"));
                }
            }
        }
        klfield::field_models::Expr::parse(&self.forcing, 0)
            .map_err(|e| invalid("forcing", format!("{e} (forcing may use x only)")))?;
        self.model()?;
        Ok(())
    }

    pub fn dprime(&self) -> usize {
        self.dprime.unwrap_or(match self.field {
            FieldChoice::Example1 => 1,
            FieldChoice::Example2 => 10,
            FieldChoice::Custom => 1,
        })
    }

    pub fn model(&self) -> Result<FieldModel, ConfigError> {
        match self.field {
            FieldChoice::Example1 => Ok(FieldModel::example1()),
            FieldChoice::Example2 => {
                FieldModel::example2(self.dprime()).map_err(|e| invalid("dprime", e.to_string()))
            }
            FieldChoice::Custom => {
                let expr = self.expression.as_deref().unwrap_or("");
                let s = self.smoothness.unwrap_or(Smoothness::Unbounded);
                let model = FieldModel::custom(expr, self.dprime(), s)
                    .map_err(|e| invalid("expression", e.to_string()))?;
                Ok(model.with_kinks(self.kinks.clone()))
            }
        }
    }

    /// Degree from the config or `⌈s⌉` from the field.
    pub fn degree(&self) -> Result<usize, ConfigError> {
        match self.k {
            Some(k) => Ok(k),
            None => Ok(self.model()?.default_degree()),
        }
    }

    /// Smoothness for the balancer and the constraint check.
    pub fn smoothness_value(&self) -> Result<f64, ConfigError> {
        if let Some(s) = self.s {
            return Ok(s);
        }
        let s = self.model()?.smoothness().value();
        if s.is_finite() {
            Ok(s)
        } else {
            Err(invalid("s", "the field has unbounded smoothness; set `s` explicitly"))
        }
    }

    pub fn eval_points(&self) -> u64 {
        self.eval_n.unwrap_or(self.n)
    }

    pub fn psi(&self) -> PsiMode {
        match self.psi_mode {
            PsiChoice::Projected => PsiMode::Projected,
            PsiChoice::Iid => PsiMode::Iid { seed: self.psi_seed },
        }
    }

    /// Sets all three seeds from one base value.
    pub fn override_seed(&mut self, seed: u64) {
        self.construction_seed = seed;
        self.eval_seed = seed.wrapping_add(1);
        self.psi_seed = seed.wrapping_add(2);
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn render(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("field", self.field.as_str().to_string());
        if let Some(e) = &self.expression {
            line("expression", e.clone());
        }
        if let Some(sm) = self.smoothness {
            line(
                "smoothness",
                match sm {
                    Smoothness::Finite(v) => v.to_string(),
                    Smoothness::Unbounded => "inf".to_string(),
                },
            );
        }
        if !self.kinks.is_empty() {
            line("kinks", join(&self.kinks));
        }
        if let Some(d) = self.dprime {
            line("dprime", d.to_string());
        }
        line("n", self.n.to_string());
        line("m_list", join(&self.m_list));
        line("h_list", join(&self.h_list));
        if let Some(k) = self.k {
            line("k", k.to_string());
        }
        line("psi_mode", self.psi_mode.as_str().to_string());
        line("construction_seed", self.construction_seed.to_string());
        line("eval_seed", self.eval_seed.to_string());
        line("psi_seed", self.psi_seed.to_string());
        line("out", self.out.display().to_string());
        if let Some(e) = self.eval_n {
            line("eval_n", e.to_string());
        }
        if let Some(w) = &self.weights_file {
            line("weights_file", w.display().to_string());
        }
        line("samples", self.samples.to_string());
        line("p_list", join(&self.p_list));
        line("pde_h", self.pde_h.to_string());
        line("forcing", self.forcing.clone());
        line("epsilon", self.epsilon.to_string());
        if let Some(v) = self.s {
            line("s", v.to_string());
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Reads a weights file: an optional `order = factorial_squared | unit |
/// <Γ_1,Γ_2,…>` line and one product factor `c_j` per line.
pub fn read_weights(path: &Path) -> Result<WeightSchedule<f64>, WeightsError> {
    let text = std::fs::read_to_string(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_weights(&text, path)
}

pub fn parse_weights(text: &str, path: &Path) -> Result<WeightSchedule<f64>, WeightsError> {
    let err = |line: usize, message: String| WeightsError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut order = OrderWeights::FactorialSquared;
    let mut factors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some((key, value)) = content.split_once('=') {
            if key.trim() != "order" {
                return Err(err(line, format!("unknown key `{}`", key.trim())));
            }
            order = match value.trim() {
                "factorial_squared" => OrderWeights::FactorialSquared,
                "unit" => OrderWeights::Unit,
                list => OrderWeights::Table(parse_list(list).map_err(|m| err(line, m))?),
            };
            continue;
        }
        factors.push(parse_scalar::<f64>(content).map_err(|m| err(line, m))?);
    }
    WeightSchedule::new(order, factors).map_err(|e| WeightsError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
