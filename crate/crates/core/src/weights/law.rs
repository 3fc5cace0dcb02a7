use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parametric weighting law over an ordered dictionary of size `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightLawSpec {
    Uniform,
    Fibonacci,
    /// `w_m ∝ ρ^m`, `ρ > 0`.
    Geometric { rho: f64 },
    /// `w_m ∝ m^(-α)`, `α > 1`.
    PolynomialDecay { alpha: f64 },
    /// `w_m ∝ exp(-c m^β)`, `c > 0`, `0 < β < 1`.
    SubExponential { c: f64, beta: f64 },
    /// `w_m ∝ m^(-s)`, `s > 0`.
    Zipf { s: f64 },
}

impl WeightLawSpec {
    pub fn geometric(rho: f64) -> Result<Self> {
        Self::Geometric { rho }.validated()
    }

    pub fn polynomial_decay(alpha: f64) -> Result<Self> {
        Self::PolynomialDecay { alpha }.validated()
    }

    pub fn sub_exponential(c: f64, beta: f64) -> Result<Self> {
        Self::SubExponential { c, beta }.validated()
    }

    pub fn zipf(s: f64) -> Result<Self> {
        Self::Zipf { s }.validated()
    }

    /// Checks parameter ranges, returning the spec unchanged when valid.
    pub fn validated(self) -> Result<Self> {
        fn finite(name: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite(format!("{name} = {v}")))
            }
        }
        match self {
            Self::Uniform | Self::Fibonacci => {}
            Self::Geometric { rho } => {
                finite("rho", rho)?;
                if rho <= 0.0 {
                    return Err(Error::Range(format!("geometric law requires rho > 0, got {rho}")));
                }
            }
            Self::PolynomialDecay { alpha } => {
                finite("alpha", alpha)?;
                if alpha <= 1.0 {
                    return Err(Error::Range(format!("polynomial decay requires alpha > 1, got {alpha}")));
                }
            }
            Self::SubExponential { c, beta } => {
                finite("c", c)?;
                finite("beta", beta)?;
                if c <= 0.0 {
                    return Err(Error::Range(format!("sub-exponential law requires c > 0, got {c}")));
                }
                if beta <= 0.0 || beta >= 1.0 {
                    return Err(Error::Range(format!(
                        "sub-exponential law requires 0 < beta < 1, got {beta}"
                    )));
                }
            }
            Self::Zipf { s } => {
                finite("s", s)?;
                if s <= 0.0 {
                    return Err(Error::Range(format!("Zipf law requires s > 0, got {s}")));
                }
            }
        }
        Ok(self)
    }

    /// Short family name used in text forms and CSV columns.
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Fibonacci => "fibonacci",
            Self::Geometric { .. } => "geometric",
            Self::PolynomialDecay { .. } => "polydecay",
            Self::SubExponential { .. } => "subexp",
            Self::Zipf { .. } => "zipf",
        }
    }

    /// Unnormalized log-weight of index `m` (1-based). Fibonacci is handled
    /// separately by the caller.
    pub(crate) fn log_weight(&self, m: usize) -> f64 {
        let mf = m as f64;
        match *self {
            Self::Uniform | Self::Fibonacci => 0.0,
            Self::Geometric { rho } => mf * rho.ln(),
            Self::PolynomialDecay { alpha } => -alpha * mf.ln(),
            Self::SubExponential { c, beta } => -c * mf.powf(beta),
            Self::Zipf { s } => -s * mf.ln(),
        }
    }
}

impl fmt::Display for WeightLawSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::Fibonacci => f.write_str("fibonacci"),
            Self::Geometric { rho } => write!(f, "geometric:rho={rho}"),
            Self::PolynomialDecay { alpha } => write!(f, "polydecay:alpha={alpha}"),
            Self::SubExponential { c, beta } => write!(f, "subexp:c={c},beta={beta}"),
            Self::Zipf { s } => write!(f, "zipf:s={s}"),
        }
    }
}

/// Splits `name:k=v,k=v` into a lowercase name and its key/value pairs.
pub(crate) fn split_text_form(input: &str) -> Result<(String, Vec<(String, String)>)> {
    let trimmed = input.trim();
    let (name, rest) = match trimmed.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (trimmed, None),
    };
    let name = name.trim().to_ascii_lowercase();
    if name.is_empty() {
        return Err(Error::Parse { input: input.into(), reason: "empty name".into() });
    }
    let mut pairs = Vec::new();
    if let Some(rest) = rest {
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse {
                input: input.into(),
                reason: format!("expected key=value, found `{item}`"),
            })?;
            let key = k.trim().to_ascii_lowercase();
            if pairs.iter().any(|(seen, _)| *seen == key) {
                return Err(Error::Parse { input: input.into(), reason: format!("duplicate key `{key}`") });
            }
            pairs.push((key, v.trim().to_string()));
        }
    }
    Ok((name, pairs))
}

/// Key/value lookup that rejects keys nobody asked for.
pub(crate) struct Params<'a> {
    input: &'a str,
    pairs: Vec<(String, String)>,
}

impl<'a> Params<'a> {
    pub(crate) fn new(input: &'a str, pairs: Vec<(String, String)>) -> Self {
        Params { input, pairs }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let idx = self.pairs.iter().position(|(k, _)| k == key)?;
        Some(self.pairs.remove(idx).1)
    }

    pub(crate) fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    input: self.input.into(),
                    reason: format!("`{key}` is not a number: `{v}`"),
                })
            })
            .transpose()
    }

    pub(crate) fn f64(&mut self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| Error::Parse {
            input: self.input.into(),
            reason: format!("missing `{key}`"),
        })
    }

    pub(crate) fn u64_opt(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| Error::Parse {
                    input: self.input.into(),
                    reason: format!("`{key}` is not a nonnegative integer: `{v}`"),
                })
            })
            .transpose()
    }

    pub(crate) fn u64(&mut self, key: &str) -> Result<u64> {
        self.u64_opt(key)?.ok_or_else(|| Error::Parse {
            input: self.input.into(),
            reason: format!("missing `{key}`"),
        })
    }

    pub(crate) fn finish(self) -> Result<()> {
        match self.pairs.into_iter().next() {
            None => Ok(()),
            Some((key, _)) => Err(Error::UnknownKey { key, context: self.input.into() }),
        }
    }
}

impl FromStr for WeightLawSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, pairs) = split_text_form(s)?;
        let mut p = Params::new(s, pairs);
        let spec = match name.as_str() {
            "uniform" => Self::Uniform,
            "fibonacci" | "fib" => Self::Fibonacci,
            "geometric" => Self::Geometric { rho: p.f64("rho")? },
            "polydecay" => Self::PolynomialDecay { alpha: p.f64("alpha")? },
            "subexp" => Self::SubExponential { c: p.f64("c")?, beta: p.f64("beta")? },
            "zipf" => Self::Zipf { s: p.f64("s")? },
            other => {
                return Err(Error::Parse { input: s.into(), reason: format!("unknown weight law `{other}`") })
            }
        };
        p.finish()?;
        spec.validated()
    }
}

impl TryFrom<String> for WeightLawSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightLawSpec> for String {
    fn from(spec: WeightLawSpec) -> String {
        spec.to_string()
    }
}
