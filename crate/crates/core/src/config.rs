//! Plain-text `key = value` configuration.
//!
//! ```text
//! # reference market
//! alpha = 10
//! gamma = 1
//! theta = 0.2
//! F.kind = uniform
//! F.a = 1.2
//! sigma.kind = assumption1
//! sigma.rho = 1
//! ```
//!
//! `F.kind = tabulated` reads `F.table`, a CSV of `x,F` (optionally a third
//! derivative column) on [−1,1]. `sigma.kind = tabulated` reads `sigma.table`,
//! a CSV of `y,sigma` on [0,1]. Relative table paths resolve against the
//! directory of the config file. Numbers use `.` as decimal separator
//! regardless of locale.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{CdfSpec, ModelParams, SigmaSpec};

/// Keys accepted in a model config file.
pub const MODEL_KEYS: &[&str] = &[
    "alpha",
    "gamma",
    "theta",
    "F.kind",
    "F.a",
    "F.table",
    "sigma.kind",
    "sigma.rho",
    "sigma.table",
];

/// Parsed key-value pairs with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
    base_dir: PathBuf,
}

impl KvConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim().to_string();
            if !MODEL_KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("unknown key `{key}`"),
                });
            }
            if entries.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn number(&self, key: &str, default: f64) -> Result<f64> {
        match self.entries.get(key) {
            None => Ok(default),
            Some((line, v)) => parse_decimal(v).ok_or_else(|| Error::Config {
                line: *line,
                reason: format!("`{key}` is not a decimal number: `{v}`"),
            }),
        }
    }

    fn table_path(&self, key: &str) -> Result<PathBuf> {
        match self.entries.get(key) {
            Some((_, v)) => {
                let p = PathBuf::from(v);
                Ok(if p.is_absolute() { p } else { self.base_dir.join(p) })
            }
            None => Err(Error::Config {
                line: 0,
                reason: format!("`{key}` is required for a tabulated spec"),
            }),
        }
    }

    /// Table files referenced by this config, for input hashing.
    pub fn table_paths(&self) -> Vec<PathBuf> {
        ["F.table", "sigma.table"]
            .iter()
            .filter(|k| self.entries.contains_key(**k))
            .filter_map(|k| self.table_path(k).ok())
            .collect()
    }

    /// Builds model parameters; missing keys fall back to the reference set
    /// (a = 1.2, α = 10, γ = 1, θ = 0.2, ρ = 1).
    pub fn model(&self) -> Result<ModelParams> {
        let alpha = self.number("alpha", 10.0)?;
        let gamma = self.number("gamma", 1.0)?;
        let theta = self.number("theta", 0.2)?;
        let cdf = match self.get("F.kind").unwrap_or("uniform") {
            "uniform" => CdfSpec::uniform(self.number("F.a", 1.2)?)?,
            "tabulated" => {
                let cols = read_table(&self.table_path("F.table")?)?;
                match cols.len() {
                    2 => CdfSpec::tabulated(cols[0].clone(), cols[1].clone())?,
                    _ => CdfSpec::tabulated_with_derivatives(cols[0].clone(), cols[1].clone(), cols[2].clone())?,
                }
            }
            other => {
                return Err(Error::Config {
                    line: self.entries["F.kind"].0,
                    reason: format!("F.kind must be `uniform` or `tabulated`, got `{other}`"),
                })
            }
        };
        let sigma = match self.get("sigma.kind").unwrap_or("assumption1") {
            "assumption1" => SigmaSpec::assumption1(self.number("sigma.rho", 1.0)?)?,
            "tabulated" => {
                let cols = read_table(&self.table_path("sigma.table")?)?;
                SigmaSpec::tabulated(cols[0].clone(), cols[1].clone())?
            }
            other => {
                return Err(Error::Config {
                    line: self.entries["sigma.kind"].0,
                    reason: format!("sigma.kind must be `assumption1` or `tabulated`, got `{other}`"),
                })
            }
        };
        ModelParams::new(alpha, gamma, theta, cdf, sigma)
    }
}

/// Strict decimal parsing: digits, optional sign, `.`, exponent. No locale forms.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.contains(',') || s.contains('_') {
        return None;
    }
    let lower = s.to_ascii_lowercase();
    if lower.contains("inf") || lower.contains("nan") {
        return None;
    }
    s.parse::<f64>().ok()
}

/// Reads a numeric CSV with two or three columns and an optional header row.
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema = |reason: String| Error::Schema {
        path: path.display().to_string(),
        reason,
    };
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: Option<Vec<f64>> = fields.iter().map(|f| parse_decimal(f)).collect();
        let Some(nums) = nums else {
            if cols.is_empty() && i == 0 {
                continue; // header
            }
            return Err(schema(format!("line {}: non-numeric field", i + 1)));
        };
        if !(2..=3).contains(&nums.len()) {
            return Err(schema(format!("line {}: expected 2 or 3 columns", i + 1)));
        }
        if cols.is_empty() {
            cols = vec![Vec::new(); nums.len()];
        } else if cols.len() != nums.len() {
            return Err(schema(format!("line {}: inconsistent column count", i + 1)));
        }
        for (c, v) in cols.iter_mut().zip(nums) {
            c.push(v);
        }
    }
    if cols.is_empty() || cols[0].len() < 2 {
        return Err(schema("need at least two data rows".into()));
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_config() {
        let text = "# comment\nalpha = 10\ngamma=1\ntheta = 0.2 # inline\nF.kind = uniform\nF.a = 1.2\nsigma.kind = assumption1\nsigma.rho = 1\n";
        let cfg = KvConfig::parse(text, ".").unwrap();
        assert_eq!(cfg.model().unwrap(), ModelParams::reference());
    }

    #[test]
    fn empty_config_is_reference() {
        let cfg = KvConfig::parse("", ".").unwrap();
        assert_eq!(cfg.model().unwrap(), ModelParams::reference());
    }

    #[test]
    fn rejects_locale_decimal_and_unknown_keys() {
        let cfg = KvConfig::parse("alpha = 1,5\n", ".").unwrap();
        assert!(matches!(cfg.model(), Err(Error::Config { line: 1, .. })));
        assert!(matches!(
            KvConfig::parse("beta = 1\n", "."),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(KvConfig::parse("alpha 1\n", ".").is_err());
        assert!(KvConfig::parse("alpha = 1\nalpha = 2\n", ".").is_err());
    }

    #[test]
    fn decimal_parser() {
        assert_eq!(parse_decimal("1e-3"), Some(1e-3));
        assert_eq!(parse_decimal(" -2.5 "), Some(-2.5));
        assert_eq!(parse_decimal("inf"), None);
        assert_eq!(parse_decimal("1_000"), None);
    }

    #[test]
    fn tabulated_config_reads_tables() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = String::from("x,F\n");
        for i in 0..=20 {
            let x = -1.0 + i as f64 / 10.0;
            f.push_str(&format!("{x},{}\n", (x + 1.2) / 2.4));
        }
        std::fs::write(dir.path().join("f.csv"), f).unwrap();
        std::fs::write(dir.path().join("s.csv"), "0,1\n0.5,1\n1,1\n").unwrap();
        std::fs::write(
            dir.path().join("m.cfg"),
            "F.kind = tabulated\nF.table = f.csv\nsigma.kind = tabulated\nsigma.table = s.csv\n",
        )
        .unwrap();
        let cfg = KvConfig::from_file(&dir.path().join("m.cfg")).unwrap();
        let p = cfg.model().unwrap();
        assert!((p.cdf().cdf(0.3) - 1.5 / 2.4).abs() < 1e-12);
        assert_eq!(cfg.table_paths().len(), 2);
    }
}
