//! Strict INI reader: every key must be consumed by the experiment,
//! physics values have no defaults, frequencies are given in GHz.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::{Ini, ParseOption};
use phonon_nm::units::ghz_to_rad;

use crate::CliError;

type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Parsed config plus the record of what was read (including numeric
/// defaults), which becomes the resolved config in the metadata sidecar.
#[derive(Debug)]
pub struct Config {
    raw: Sections,
    used: BTreeSet<(String, String)>,
    resolved: Sections,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let opt = ParseOption { enabled_quote: false, enabled_escape: false, ..Default::default() };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| schema(format!("malformed config: {e}")))?;
        let mut raw = Sections::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(schema(format!("key '{k}' appears before any [section]")));
                }
                continue;
            };
            let entry = raw.entry(section.to_string()).or_default();
            for (k, v) in props.iter() {
                if entry.insert(k.to_string(), v.trim().to_string()).is_some() {
                    return Err(schema(format!("duplicate key '{section}.{k}'")));
                }
            }
        }
        Ok(Self { raw, used: BTreeSet::new(), resolved: Sections::new() })
    }

    /// Applies `section.key=value`, replacing or adding the key.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (path, value) = spec.split_once('=').ok_or_else(|| schema(format!("override '{spec}' is not key=value")))?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| schema(format!("override key '{path}' must be section.key")))?;
        if section.is_empty() || key.is_empty() {
            return Err(schema(format!("override key '{path}' must be section.key")));
        }
        self.raw.entry(section.to_string()).or_default().insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.raw.contains_key(section)
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.raw.get(section).is_some_and(|s| s.contains_key(key))
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let v = self.raw.get(section)?.get(key)?.clone();
        self.used.insert((section.into(), key.into()));
        self.resolved.entry(section.into()).or_default().insert(key.into(), v.clone());
        Some(v)
    }

    fn parse_value<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        v.parse::<T>().map_err(|e| schema(format!("{section}.{key} = '{v}': {e}")))
    }

    pub fn require<T: FromStr>(&mut self, section: &str, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.take(section, key).ok_or_else(|| schema(format!("missing required key {section}.{key}")))?;
        Self::parse_value(section, key, &v)
    }

    pub fn optional<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.take(section, key).map(|v| Self::parse_value(section, key, &v)).transpose()
    }

    /// Numerical settings only: a missing key takes `default`, which is
    /// recorded in the resolved config.
    pub fn numeric<T: FromStr + Display>(&mut self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        match self.optional(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.entry(section.into()).or_default().insert(key.into(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require_f64(&mut self, section: &str, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.require(section, key)?;
        if !v.is_finite() {
            return Err(schema(format!("{section}.{key} must be finite")));
        }
        Ok(v)
    }

    pub fn require_list(&mut self, section: &str, key: &str) -> Result<Vec<f64>, CliError> {
        let v = self.take(section, key).ok_or_else(|| schema(format!("missing required key {section}.{key}")))?;
        let items = v
            .split(',')
            .map(|s| Self::parse_value::<f64>(section, key, s.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        if items.is_empty() || items.iter().any(|x| !x.is_finite()) {
            return Err(schema(format!("{section}.{key} must be a comma-separated list of finite numbers")));
        }
        Ok(items)
    }

    /// Angular frequency from exactly one of `{name}_ghz` (ordinary
    /// frequency) or `{name}_delta` (multiple of the zero-field gap).
    pub fn frequency(&mut self, section: &str, name: &str, delta: f64) -> Result<f64, CliError> {
        let (ghz, rel) = (format!("{name}_ghz"), format!("{name}_delta"));
        match (self.has(section, &ghz), self.has(section, &rel)) {
            (true, false) => Ok(ghz_to_rad(self.require_f64(section, &ghz)?)),
            (false, true) => Ok(self.require_f64(section, &rel)? * delta),
            (true, true) => Err(schema(format!("give only one of {section}.{ghz} and {section}.{rel}"))),
            (false, false) => Err(schema(format!("missing required key {section}.{ghz} (or {section}.{rel})"))),
        }
    }

    /// List variant of [`Config::frequency`].
    pub fn frequency_list(&mut self, section: &str, name: &str, delta: f64) -> Result<Vec<f64>, CliError> {
        let (ghz, rel) = (format!("{name}_ghz"), format!("{name}_delta"));
        match (self.has(section, &ghz), self.has(section, &rel)) {
            (true, false) => Ok(self.require_list(section, &ghz)?.into_iter().map(ghz_to_rad).collect()),
            (false, true) => Ok(self.require_list(section, &rel)?.into_iter().map(|v| v * delta).collect()),
            (true, true) => Err(schema(format!("give only one of {section}.{ghz} and {section}.{rel}"))),
            (false, false) => Err(schema(format!("missing required key {section}.{ghz} (or {section}.{rel})"))),
        }
    }

    /// Adds a value to the resolved config without it appearing in the input.
    pub fn record(&mut self, section: &str, key: &str, value: &str) {
        self.resolved.entry(section.into()).or_default().insert(key.into(), value.into());
    }

    /// Rejects any key that the experiment did not read.
    pub fn finish(&self) -> Result<(), CliError> {
        let unknown: Vec<String> = self
            .raw
            .iter()
            .flat_map(|(s, kv)| kv.keys().map(move |k| (s, k)))
            .filter(|(s, k)| !self.used.contains(&((*s).clone(), (*k).clone())))
            .map(|(s, k)| format!("{s}.{k}"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(schema(format!("unknown keys for this experiment: {}", unknown.join(", "))))
        }
    }

    /// Resolved config as INI text (sections and keys sorted).
    pub fn resolved_ini(&self) -> String {
        let mut out = String::new();
        for (section, kv) in &self.resolved {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in kv {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let mut c = Config::parse("[a]\nx = 1\ny = 2\n").unwrap();
        assert_eq!(c.require_f64("a", "x").unwrap(), 1.0);
        assert!(c.finish().is_err());
        assert!(Config::parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(Config::parse("x = 1\n[a]\n").is_err());
    }

    #[test]
    fn frequencies_need_exactly_one_unit() {
        let d = 10.0;
        let mut c = Config::parse("[m]\nw_delta = 2\n").unwrap();
        assert_eq!(c.frequency("m", "w", d).unwrap(), 20.0);
        let mut c = Config::parse("[m]\nw_ghz = 1\n").unwrap();
        assert!((c.frequency("m", "w", d).unwrap() - 2.0 * std::f64::consts::PI * 1e9).abs() < 1e-3);
        assert!(Config::parse("[m]\nw_ghz = 1\nw_delta = 1\n").unwrap().frequency("m", "w", d).is_err());
        assert!(Config::parse("[m]\n").unwrap().frequency("m", "w", d).is_err());
    }

    #[test]
    fn overrides_and_defaults_are_resolved() {
        let mut c = Config::parse("[grid]\ncount = 10\n").unwrap();
        c.apply_override("grid.count=6").unwrap();
        assert_eq!(c.require::<usize>("grid", "count").unwrap(), 6);
        assert_eq!(c.numeric("ode", "rtol", 1e-8).unwrap(), 1e-8);
        let text = c.resolved_ini();
        assert!(text.contains("count = 6") && text.contains("rtol = 0.00000001"));
        assert!(c.apply_override("nodot=1").is_err());
        let mut back = Config::parse(&text).unwrap();
        assert_eq!(back.numeric("ode", "rtol", 1.0).unwrap(), 1e-8);
    }
}
