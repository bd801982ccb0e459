//! Flat `key = value` run configuration shared by the config file and the
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};
use dwi_precision::units::{parse_quantity, Dimension};

/// Bad input: unknown key, unparsable value, missing required key.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Quantity(Dimension),
    QuantityList(Dimension),
    Real,
    RealList,
    Count,
    Seed,
    Bool,
    Choice(&'static [&'static str]),
    Path,
}

impl Kind {
    fn hint(&self) -> String {
        let dim = |d: &Dimension| match d {
            Dimension::Length => "length: um | m",
            Dimension::Time => "time: ms | s | inf",
            Dimension::Gradient => "gradient: mT/m | T/m | G/cm",
            Dimension::Diffusivity => "diffusivity: cm2/s | m2/s",
        };
        match self {
            Kind::Quantity(d) => dim(d).to_string(),
            Kind::QuantityList(d) => format!("comma-separated {}", dim(d)),
            Kind::Real => "number".into(),
            Kind::RealList => "comma-separated numbers".into(),
            Kind::Count => "integer".into(),
            Kind::Seed => "64-bit integer".into(),
            Kind::Bool => "true | false".into(),
            Kind::Choice(c) => c.join(" | "),
            Kind::Path => "file path".into(),
        }
    }

    fn value_name(&self) -> &'static str {
        match self {
            Kind::Quantity(_) => "QTY",
            Kind::QuantityList(_) => "QTY,..",
            Kind::Real => "NUM",
            Kind::RealList => "NUM,..",
            Kind::Count => "N",
            Kind::Seed => "SEED",
            Kind::Bool => "BOOL",
            Kind::Choice(_) => "NAME",
            Kind::Path => "PATH",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

impl Key {
    pub const fn new(
        name: &'static str,
        kind: Kind,
        default: Option<&'static str>,
        help: &'static str,
    ) -> Self {
        Self {
            name,
            kind,
            default,
            help,
        }
    }
}

/// Adds `--config` and one flag per key to a subcommand.
pub fn keyed_command(name: &'static str, about: &'static str, keys: &'static [Key]) -> Command {
    let mut cmd = Command::new(name).about(about).arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("Key-value file (`key = value` per line, `#` comments); flags override it"),
    );
    for k in keys {
        let mut help = format!("{} [{}]", k.help, k.kind.hint());
        if let Some(d) = k.default {
            help.push_str(&format!(" (default: {d})"));
        }
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name)
                .value_name(k.kind.value_name())
                .allow_hyphen_values(true)
                .help(help),
        );
    }
    cmd
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    command: &'static str,
    keys: &'static [Key],
    values: BTreeMap<&'static str, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn from_matches(
        command: &'static str,
        keys: &'static [Key],
        matches: &ArgMatches,
    ) -> Result<Self, UsageError> {
        let file = matches.get_one::<String>("config").map(PathBuf::from);
        let overrides = keys
            .iter()
            .filter_map(|k| {
                matches
                    .get_one::<String>(k.name)
                    .map(|v| (k.name, v.clone()))
            })
            .collect();
        Self::resolve(command, keys, file.as_deref(), overrides)
    }

    pub fn resolve(
        command: &'static str,
        keys: &'static [Key],
        file: Option<&Path>,
        overrides: Vec<(&'static str, String)>,
    ) -> Result<Self, UsageError> {
        let mut values = BTreeMap::new();
        for k in keys {
            if let Some(d) = k.default {
                values.insert(k.name, d.to_string());
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let mut seen = BTreeMap::new();
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    usage(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        n + 1
                    ))
                })?;
                let key = normalize(key);
                let entry = keys.iter().find(|k| k.name == key).ok_or_else(|| {
                    usage(format!(
                        "{}:{}: unknown key `{key}` for `{command}`",
                        path.display(),
                        n + 1
                    ))
                })?;
                if let Some(prev) = seen.insert(entry.name, n + 1) {
                    return Err(usage(format!(
                        "{}:{}: key `{key}` already set on line {prev}",
                        path.display(),
                        n + 1
                    )));
                }
                values.insert(entry.name, value.trim().to_string());
            }
        }
        for (k, v) in overrides {
            values.insert(k, v);
        }
        let cfg = Self {
            command,
            keys,
            values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), UsageError> {
        for k in self.keys {
            if self.values.contains_key(k.name) {
                match k.kind {
                    Kind::Quantity(_) => self.quantity(k.name).map(|_| ()),
                    Kind::QuantityList(_) => self.quantity_list(k.name).map(|_| ()),
                    Kind::Real => self.real(k.name).map(|_| ()),
                    Kind::RealList => self.real_list(k.name).map(|_| ()),
                    Kind::Count => self.count(k.name).map(|_| ()),
                    Kind::Seed => self.seed(k.name).map(|_| ()),
                    Kind::Bool => self.flag(k.name).map(|_| ()),
                    Kind::Choice(_) => self.choice(k.name).map(|_| ()),
                    Kind::Path => Ok(()),
                }?;
            }
        }
        Ok(())
    }

    fn entry(&self, name: &str) -> &Key {
        self.keys
            .iter()
            .find(|k| k.name == name)
            .unwrap_or_else(|| panic!("key `{name}` not declared for `{}`", self.command))
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.entry(name);
        self.values.get(name).map(String::as_str)
    }

    pub fn is_set(&self, name: &str) -> bool {
        self.raw(name).is_some()
    }

    fn required(&self, name: &str) -> Result<&str, UsageError> {
        self.raw(name).ok_or_else(|| {
            usage(format!(
                "missing required key `{name}` for `{}`",
                self.command
            ))
        })
    }

    fn bad(&self, name: &str, value: &str, why: impl fmt::Display) -> UsageError {
        usage(format!("invalid value `{value}` for key `{name}`: {why}"))
    }

    fn parse_quantity(&self, name: &str, text: &str) -> Result<f64, UsageError> {
        let dim = match self.entry(name).kind {
            Kind::Quantity(d) | Kind::QuantityList(d) => d,
            _ => panic!("key `{name}` is not a quantity"),
        };
        let v = parse_quantity(text, dim).map_err(|e| self.bad(name, text, e))?;
        let ok = if dim == Dimension::Gradient {
            v >= 0.0
        } else {
            v > 0.0
        };
        if !ok || v.is_nan() {
            return Err(self.bad(name, text, "must be positive"));
        }
        Ok(v)
    }

    /// SI value of a quantity key.
    pub fn quantity(&self, name: &str) -> Result<f64, UsageError> {
        let text = self.required(name)?;
        self.parse_quantity(name, text)
    }

    pub fn quantity_list(&self, name: &str) -> Result<Vec<f64>, UsageError> {
        self.required(name)?
            .split(',')
            .map(|s| self.parse_quantity(name, s))
            .collect()
    }

    pub fn real(&self, name: &str) -> Result<f64, UsageError> {
        let text = self.required(name)?;
        let v: f64 = text.parse().map_err(|e| self.bad(name, text, e))?;
        if !v.is_finite() {
            return Err(self.bad(name, text, "must be finite"));
        }
        Ok(v)
    }

    pub fn real_list(&self, name: &str) -> Result<Vec<f64>, UsageError> {
        self.required(name)?
            .split(',')
            .map(|s| {
                let s = s.trim();
                match s.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                    Ok(_) => Err(self.bad(name, s, "must be positive")),
                    Err(e) => Err(self.bad(name, s, e)),
                }
            })
            .collect()
    }

    pub fn count(&self, name: &str) -> Result<usize, UsageError> {
        let text = self.required(name)?;
        text.parse().map_err(|e| self.bad(name, text, e))
    }

    pub fn seed(&self, name: &str) -> Result<u64, UsageError> {
        let text = self.required(name)?;
        text.parse().map_err(|e| self.bad(name, text, e))
    }

    pub fn flag(&self, name: &str) -> Result<bool, UsageError> {
        let text = self.required(name)?;
        match text {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad(name, text, "expected true or false")),
        }
    }

    pub fn choice(&self, name: &str) -> Result<&str, UsageError> {
        let text = self.required(name)?;
        match self.entry(name).kind {
            Kind::Choice(options) if options.contains(&text) => Ok(text),
            Kind::Choice(options) => Err(self.bad(
                name,
                text,
                format!("expected one of {}", options.join(", ")),
            )),
            _ => panic!("key `{name}` is not a choice"),
        }
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.raw(name).map(PathBuf::from)
    }

    /// Comment block recording the command and every resolved key.
    pub fn header(&self) -> String {
        let mut out = format!("# command = {}\n", self.command);
        for k in self.keys {
            if let Some(v) = self.values.get(k.name) {
                out.push_str(&format!("# {} = {v}\n", k.name));
            }
        }
        out
    }
}
