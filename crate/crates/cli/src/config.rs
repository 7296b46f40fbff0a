//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags. Every value remembers where it came from so errors can point at it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sdtdl::solver::{ClassUpdateRule, MeanPairing};
use sdtdl::Hyperparams;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "source",
    "source_labels",
    "target",
    "truth",
    "preset",
    "theta",
    "lambda",
    "gamma",
    "delta",
    "ranks",
    "max_iters",
    "inner_sweeps",
    "tol",
    "pairing",
    "class_rule",
    "out",
    "seed",
];

#[derive(Debug, Clone)]
enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{}", path.display(), line),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, Origin)>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_path_buf(), line: i + 1 };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}: expected `key = value`, found {raw:?}")))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("{origin}: unknown key {key:?}")));
            }
            if let Some((_, first)) = settings.values.get(&key) {
                return Err(CliError::Config(format!("{origin}: {key:?} already set at {first}")));
            }
            settings.values.insert(key, (value.trim().to_string(), origin));
        }
        Ok(settings)
    }

    /// Flags override file values.
    pub fn set_flag(&mut self, key: &str, value: Option<String>) {
        debug_assert!(KEYS.contains(&key));
        if let Some(v) = value {
            self.values.insert(key.to_string(), (v, Origin::Flag));
        }
    }

    fn raw(&self, key: &str) -> Option<&(String, Origin)> {
        self.values.get(key)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|(v, _)| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)
            .ok_or_else(|| CliError::Config(format!("missing required setting {key:?} (flag --{})", key.replace('_', "-"))))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|(v, origin)| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("{origin}: {key} must be {what}, found {v:?}")))
            })
            .transpose()
    }

    /// Accepted for run-log completeness. Fitting draws no random numbers, so
    /// the value only has to parse.
    pub fn seed(&self) -> Result<Option<u64>, CliError> {
        self.parse("seed", "a non-negative integer")
    }

    fn ranks(&self) -> Result<Option<Vec<usize>>, CliError> {
        self.raw("ranks")
            .map(|(v, origin)| {
                parse_list(v).map_err(|_| {
                    CliError::Config(format!("{origin}: ranks must be a comma-separated list of positive integers, found {v:?}"))
                })
            })
            .transpose()
    }

    /// Hyperparameters: the named preset, then every explicit setting on top.
    /// A `custom` preset requires θ, λ, γ, δ and ranks to be given.
    pub fn hyperparams(&self) -> Result<Hyperparams, CliError> {
        let preset = self.raw("preset").map(|(v, o)| (v.as_str(), Some(o))).unwrap_or(("object", None));
        let mut h = match preset {
            ("custom", _) => {
                let missing: Vec<_> = ["theta", "lambda", "gamma", "delta", "ranks"]
                    .into_iter()
                    .filter(|k| self.raw(k).is_none())
                    .collect();
                if !missing.is_empty() {
                    return Err(CliError::Config(format!("preset \"custom\" needs explicit {}", missing.join(", "))));
                }
                Hyperparams::object_preset()
            }
            (name, origin) => Hyperparams::preset(name).ok_or_else(|| {
                let at = origin.map(|o| format!("{o}: ")).unwrap_or_default();
                CliError::Config(format!("{at}unknown preset {name:?} (expected object, digit or custom)"))
            })?,
        };
        if let Some(v) = self.parse("theta", "a number")? {
            h.theta = v;
        }
        if let Some(v) = self.parse("lambda", "a number")? {
            h.lambda = v;
        }
        if let Some(v) = self.parse("gamma", "a number")? {
            h.gamma = v;
        }
        if let Some(v) = self.parse("delta", "a number")? {
            h.delta = v;
        }
        if let Some(v) = self.parse("max_iters", "a non-negative integer")? {
            h.max_outer_iters = v;
        }
        if let Some(v) = self.parse("inner_sweeps", "a positive integer")? {
            h.inner_sweeps = v;
        }
        if let Some(v) = self.parse("tol", "a number")? {
            h.tol = v;
        }
        if let Some(v) = self.ranks()? {
            h.ranks = v;
        }
        if let Some((v, origin)) = self.raw("pairing") {
            h.pairing = match v.as_str() {
                "cross" => MeanPairing::Cross,
                "same-domain" | "same_domain" => MeanPairing::SameDomain,
                _ => return Err(CliError::Config(format!("{origin}: pairing must be cross or same-domain, found {v:?}"))),
            };
        }
        if let Some((v, origin)) = self.raw("class_rule") {
            h.class_rule = match v.as_str() {
                "phi" => ClassUpdateRule::Phi,
                "exact" => ClassUpdateRule::ExactQuadratic,
                _ => return Err(CliError::Config(format!("{origin}: class_rule must be phi or exact, found {v:?}"))),
            };
        }
        Ok(h)
    }
}

/// Parses `3,3` or `3x3` into extents.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    let parts: Result<Vec<usize>, _> = s.split([',', 'x']).map(|p| p.trim().parse::<usize>()).collect();
    match parts {
        Ok(v) if !v.is_empty() && v.iter().all(|&x| x > 0) => Ok(v),
        _ => Err(format!("expected a list of positive integers like 3,3, found {s:?}")),
    }
}
