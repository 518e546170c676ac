//! Flag / `key = value` file merging and typed lookups.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use spinheat::raman::SpinInverseTemperature;

use crate::error::CliError;

/// Raw settings: file values overlaid by command-line flags.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
    from_flags: BTreeSet<String>,
    used: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Validation(format!("config line {}: expected key = value, got {raw:?}", n + 1)));
        };
        let key = normalize(k);
        if key.is_empty() {
            return Err(CliError::Validation(format!("config line {}: empty key", n + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    pub fn new(file: Option<&Path>, flags: Vec<(&'static str, Option<String>)>) -> Result<Self, CliError> {
        let mut s = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
            s.values = parse_config_text(&text)?;
        }
        for (k, v) in flags {
            if let Some(v) = v {
                s.values.insert(k.to_string(), v);
                s.from_flags.insert(k.to_string());
            }
        }
        Ok(s)
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn record(&mut self, key: &str, shown: String) {
        self.resolved.push((key.to_string(), shown));
    }

    fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        v.trim()
            .parse::<T>()
            .map_err(|e| CliError::Validation(format!("--{key}: cannot parse {v:?}: {e}")))
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = match self.raw(key) {
            Some(s) => Self::parse::<f64>(key, &s)?,
            None => default,
        };
        self.record(key, format!("{v:?}"));
        Ok(v)
    }

    pub fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        let v = match self.raw(key) {
            Some(s) if s.eq_ignore_ascii_case("auto") => None,
            Some(s) => Some(Self::parse::<f64>(key, &s)?),
            None => None,
        };
        self.record(key, v.map_or("auto".to_string(), |x| format!("{x:?}")));
        Ok(v)
    }

    pub fn usize(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        let v = match self.raw(key) {
            Some(s) => Self::parse::<usize>(key, &s)?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    fn list<T: std::str::FromStr + ToString + Clone>(&mut self, key: &str, default: &[T]) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = match self.raw(key) {
            Some(s) => s
                .split(',')
                .filter(|x| !x.trim().is_empty())
                .map(|x| Self::parse::<T>(key, x))
                .collect::<Result<Vec<_>, _>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(CliError::Validation(format!("--{key}: empty list")));
        }
        let shown: Vec<String> = v.iter().map(T::to_string).collect();
        self.record(key, shown.join(","));
        Ok(v)
    }

    pub fn f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        self.list(key, default)
    }

    pub fn usize_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        self.list(key, default)
    }

    pub fn lambda_s(&mut self, default: SpinInverseTemperature) -> Result<SpinInverseTemperature, CliError> {
        let v = match self.raw("lambda-s") {
            Some(s) => Self::parse::<SpinInverseTemperature>("lambda-s", &s)?,
            None => default,
        };
        self.record("lambda-s", v.to_string());
        Ok(v)
    }

    pub fn string(&mut self, key: &str) -> Option<String> {
        self.raw(key)
    }

    /// Reject command-line flags the subcommand never looked at.
    pub fn finish(&self, command: &str) -> Result<(), CliError> {
        let unused: Vec<String> = self
            .from_flags
            .iter()
            .filter(|k| !self.used.contains(*k))
            .map(|k| format!("--{k}"))
            .collect();
        if !unused.is_empty() {
            return Err(CliError::Validation(format!("{} not used by `{command}`", unused.join(", "))));
        }
        Ok(())
    }

    pub fn resolved(&self) -> Vec<(String, String)> {
        self.resolved.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_syntax() {
        let m = parse_config_text("# comment\neta = 0.3\nlambda_s=inf  # trailing\n\n").unwrap();
        assert_eq!(m["eta"], "0.3");
        assert_eq!(m["lambda-s"], "inf");
        assert!(parse_config_text("eta 0.3").is_err());
        assert!(parse_config_text(" = 3").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "eta = 0.3\nkappa = 2\n").unwrap();
        let mut s = Settings::new(Some(&path), vec![("eta", Some("0.1".into())), ("nbar0", None)]).unwrap();
        assert_eq!(s.f64("eta", 0.4).unwrap(), 0.1);
        assert_eq!(s.usize("kappa", 1).unwrap(), 2);
        assert_eq!(s.f64("nbar0", 5.0).unwrap(), 5.0);
        assert_eq!(
            s.resolved(),
            vec![("eta".into(), "0.1".into()), ("kappa".into(), "2".into()), ("nbar0".into(), "5.0".into())]
        );
        s.finish("dynamics").unwrap();
    }

    #[test]
    fn unused_flag_rejected() {
        let s = Settings::new(None, vec![("gamma-s", Some("1".into()))]).unwrap();
        assert!(matches!(s.finish("bound"), Err(CliError::Validation(_))));
    }

    #[test]
    fn lists_and_bad_numbers() {
        let mut s = Settings::new(None, vec![("nbar0", Some("1, 2,5".into())), ("eta", Some("x".into()))]).unwrap();
        assert_eq!(s.f64_list("nbar0", &[1.0]).unwrap(), vec![1.0, 2.0, 5.0]);
        assert!(s.f64("eta", 0.4).is_err());
        let mut s = Settings::new(None, vec![("kappa", Some(",".into()))]).unwrap();
        assert!(s.usize_list("kappa", &[1]).is_err());
    }
}
