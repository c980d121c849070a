use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;

/// Parses flat `key=value` text. Blank lines and `#` comments are skipped;
/// underscores in keys read as dashes.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::parse(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::parse(format!("config line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::parse(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

/// Merges flags, config values and defaults, remembering what it resolved
/// for the manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    pub resolved: BTreeMap<String, String>,
    pub inputs: Vec<PathBuf>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            None => BTreeMap::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                parse_config(&text)?
            }
        };
        Ok(Self {
            file,
            ..Self::default()
        })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.file.get(key) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        raw.parse()
            .map(Some)
            .map_err(|e| CliError::parse(format!("config `{key}`: {e}")))
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let from_file = self.from_file(key)?;
        let v = flag.or(from_file);
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn req<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing required --{key}")))
    }

    fn path_opt(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        let v = flag.or(self.from_file::<PathBuf>(key)?);
        if let Some(p) = &v {
            self.resolved.insert(key.to_string(), p.display().to_string());
        }
        Ok(v)
    }

    /// Optional input file; must exist when given.
    pub fn input_opt(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        let v = self.path_opt(key, flag)?;
        if let Some(p) = &v {
            self.check_input(p)?;
        }
        Ok(v)
    }

    pub fn input(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.input_opt(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing required --{key}")))
    }

    pub fn check_input(&mut self, p: &Path) -> Result<(), CliError> {
        if !p.is_file() {
            return Err(CliError::io(format!("{}: no such file", p.display())));
        }
        self.inputs.push(p.to_path_buf());
        Ok(())
    }

    /// Required directory whose contents are read later.
    pub fn dir(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p = self
            .path_opt(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing required --{key}")))?;
        if !p.is_dir() {
            return Err(CliError::io(format!("{}: no such directory", p.display())));
        }
        Ok(p)
    }

    pub fn out_dir(&mut self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p = self
            .path_opt("out", flag)?
            .ok_or_else(|| CliError::usage("missing required --out"))?;
        std::fs::create_dir_all(&p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
        Ok(p)
    }

    /// Repeatable flag; the config form is a comma-separated list.
    pub fn list(&mut self, key: &str, flag: Vec<String>) -> Result<Vec<String>, CliError> {
        let v = if !flag.is_empty() {
            flag
        } else {
            self.from_file::<String>(key)?
                .map(|s| s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
                .unwrap_or_default()
        };
        if !v.is_empty() {
            self.resolved.insert(key.to_string(), v.join(","));
        }
        Ok(v)
    }

    /// Config keys nothing asked for are rejected.
    pub fn finish(&self) -> Result<(), CliError> {
        match self.file.keys().find(|k| !self.used.contains(*k) && *k != "config") {
            Some(k) => Err(CliError::parse(format!("config: unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Comma-separated list of values.
pub fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::usage(format!("--{key}: `{s}`: {e}"))))
        .collect()
}

/// Splits `NAME=PATH`; a bare path is named after its final component.
pub fn named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((n, p)) => (n.to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(spec);
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, p)
        }
    }
}
