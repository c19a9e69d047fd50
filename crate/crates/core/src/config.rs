//! Flat `key = value` configuration text and the compact call syntax used
//! for distributions, score functions and domains, e.g. `normal(0.2,0.1)`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::distributions::Distribution;
use crate::error::{Error, Result};

/// Splits `s` on `sep` wherever the parenthesis depth is zero.
pub fn split_top_level(s: &str, sep: char) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == sep && depth == 0 {
            parts.push(cur.trim().to_string());
            cur.clear();
        } else {
            cur.push(ch);
        }
    }
    if !cur.trim().is_empty() || !parts.is_empty() {
        parts.push(cur.trim().to_string());
    }
    parts
}

/// Parses `name` or `name(arg, ...)`.
pub fn parse_call(s: &str) -> Result<(String, Vec<String>)> {
    let s = s.trim();
    match s.find('(') {
        None => {
            if s.is_empty() {
                return Err(Error::Parse("empty expression".into()));
            }
            Ok((s.to_string(), Vec::new()))
        }
        Some(open) => {
            if !s.ends_with(')') {
                return Err(Error::Parse(format!("unbalanced parentheses in `{s}`")));
            }
            let name = s[..open].trim().to_string();
            let inner = &s[open + 1..s.len() - 1];
            let depth_ok = inner.chars().try_fold(0i32, |d, c| {
                let d = d + (c == '(') as i32 - (c == ')') as i32;
                (d >= 0).then_some(d)
            });
            if depth_ok != Some(0) {
                return Err(Error::Parse(format!("unbalanced parentheses in `{s}`")));
            }
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                split_top_level(inner, ',')
            };
            Ok((name, args))
        }
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| Error::Parse(format!("`{t}` is not a number"))),
    }
}

/// Comma-separated numbers.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    split_top_level(s, ',').iter().map(|p| parse_f64(p)).collect()
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let nums = || -> Result<Vec<f64>> { args.iter().map(|a| parse_f64(a)).collect() };
        match name.as_str() {
            "point" => match nums()?.as_slice() {
                [c] => Ok(Distribution::point(*c)),
                _ => Err(Error::Parse("point(c) takes one argument".into())),
            },
            "normal" => match nums()?.as_slice() {
                [] => Ok(Distribution::standard_normal()),
                [mu, sigma] => Distribution::normal(*mu, *sigma),
                _ => Err(Error::Parse("normal(mu,sigma) takes two arguments".into())),
            },
            "standard_normal" => Ok(Distribution::standard_normal()),
            "discrete" => {
                let mut points = Vec::with_capacity(args.len());
                for a in &args {
                    let (y, w) = a
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("discrete atom `{a}` must be y:w")))?;
                    points.push((parse_f64(y)?, parse_f64(w)?));
                }
                Distribution::discrete(&points)
            }
            "mixture" => {
                let mut comps = Vec::with_capacity(args.len());
                for a in &args {
                    let (w, d) = a
                        .split_once('*')
                        .ok_or_else(|| Error::Parse(format!("mixture component `{a}` must be w*dist")))?;
                    comps.push((parse_f64(w)?, d.parse()?));
                }
                Distribution::mixture(comps)
            }
            other => Err(Error::Parse(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Ordered `key = value` pairs. Lines starting with `#` (or trailing
/// `# ...`) are comments. Keys are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", no + 1)));
            }
            if cfg.entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(parse_f64).transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(parse_f64_list).transpose()
    }

    /// A distribution given either inline (`dist = normal(0,1)`) or by
    /// fields (`dist.kind = normal`, `dist.mu = 0`, `dist.sigma = 1`;
    /// `dist.c` for points; `dist.atoms` / `dist.weights` for discrete laws).
    pub fn distribution(&self, key: &str) -> Result<Option<Distribution>> {
        if let Some(v) = self.get(key) {
            return v.parse().map(Some);
        }
        let field = |f: &str| self.get(&format!("{key}.{f}"));
        let Some(kind) = field("kind") else {
            return Ok(None);
        };
        let need = |f: &str| -> Result<f64> {
            parse_f64(field(f).ok_or_else(|| Error::Parse(format!("missing `{key}.{f}`")))?)
        };
        let d = match kind {
            "point" => Distribution::point(need("c")?),
            "normal" => Distribution::normal(need("mu")?, need("sigma")?)?,
            "discrete" => {
                let atoms = parse_f64_list(field("atoms").ok_or_else(|| Error::Parse(format!("missing `{key}.atoms`")))?)?;
                let weights = parse_f64_list(field("weights").ok_or_else(|| Error::Parse(format!("missing `{key}.weights`")))?)?;
                if atoms.len() != weights.len() {
                    return Err(Error::Parse(format!("`{key}.atoms` and `{key}.weights` differ in length")));
                }
                let pts: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
                Distribution::discrete(&pts)?
            }
            other => return Err(Error::Parse(format!("unknown distribution kind `{other}`"))),
        };
        Ok(Some(d))
    }

    /// A list of inline distributions separated by top-level commas.
    pub fn distributions(&self, key: &str) -> Result<Option<Vec<Distribution>>> {
        self.get(key)
            .map(|v| split_top_level(v, ',').iter().map(|s| s.parse()).collect())
            .transpose()
    }
}
