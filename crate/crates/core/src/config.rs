//! Runtime configuration: blocking parameters, microkernel shape and
//! preference, and the C_temp policy.
//!
//! Sources, later ones winning: built-in defaults, a `key = value` file named
//! by `MDGEMM_CONFIG`, then one environment variable per key (`MDGEMM_` plus
//! the key upper-cased with dots as underscores, e.g. `MDGEMM_GEMM_KC_D`).

use std::fmt;
use std::path::Path;

use crate::dtypes::Precision;
use crate::error::{GemmError, Result};
use crate::gemm_core::BlockingParams;
use crate::kernels::{IoPreference, UkrDescriptor, MAX_REG};

/// When C_temp may be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CTempPolicy {
    /// Only for single-threaded calls.
    Auto,
    On,
    Off,
}

impl CTempPolicy {
    pub fn parse(s: &str) -> Option<CTempPolicy> {
        match s {
            "auto" => Some(CTempPolicy::Auto),
            "on" => Some(CTempPolicy::On),
            "off" => Some(CTempPolicy::Off),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CTempPolicy::Auto => "auto",
            CTempPolicy::On => "on",
            CTempPolicy::Off => "off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionBlocking {
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
    pub mr: usize,
    pub nr: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub single: PrecisionBlocking,
    pub double: PrecisionBlocking,
    pub threads: usize,
    pub preference: IoPreference,
    pub ctemp: CTempPolicy,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            single: PrecisionBlocking {
                mc: 128,
                nc: 1024,
                kc: 256,
                mr: 8,
                nr: 8,
            },
            double: PrecisionBlocking {
                mc: 64,
                nc: 512,
                kc: 128,
                mr: 4,
                nr: 4,
            },
            threads: 1,
            preference: IoPreference::Column,
            ctemp: CTempPolicy::Auto,
        }
    }
}

/// Every recognised key.
pub const KEYS: [&str; 18] = [
    "gemm.mc",
    "gemm.mc.s",
    "gemm.mc.d",
    "gemm.nc",
    "gemm.nc.s",
    "gemm.nc.d",
    "gemm.kc",
    "gemm.kc.s",
    "gemm.kc.d",
    "gemm.threads",
    "ukr.preference",
    "ukr.mr",
    "ukr.mr.s",
    "ukr.mr.d",
    "ukr.nr",
    "ukr.nr.s",
    "ukr.nr.d",
    "ctemp.enable",
];

fn parse_count(key: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(GemmError::Config(format!(
            "{key}: expected a positive integer, got {value:?}"
        ))),
    }
}

impl Config {
    pub fn for_precision(&self, p: Precision) -> &PrecisionBlocking {
        match p {
            Precision::Single => &self.single,
            Precision::Double => &self.double,
        }
    }

    fn for_precision_mut(&mut self, p: Precision) -> &mut PrecisionBlocking {
        match p {
            Precision::Single => &mut self.single,
            Precision::Double => &mut self.double,
        }
    }

    pub fn blocking(&self, p: Precision) -> BlockingParams {
        let b = self.for_precision(p);
        BlockingParams {
            mc: b.mc,
            nc: b.nc,
            kc: b.kc,
            mr: b.mr,
            nr: b.nr,
            threads: self.threads,
        }
    }

    pub fn ukr(&self, p: Precision) -> UkrDescriptor {
        let b = self.for_precision(p);
        UkrDescriptor {
            precision: p,
            mr: b.mr,
            nr: b.nr,
            preference: self.preference,
        }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let mut parts = key.split('.');
        let (group, field, suffix) = (parts.next(), parts.next(), parts.next());
        if parts.next().is_some() {
            return Err(GemmError::Config(format!("unknown key {key:?}")));
        }
        let precisions: Vec<Precision> = match suffix {
            None => vec![Precision::Single, Precision::Double],
            Some(s) if s.len() == 1 => match Precision::from_letter(s.chars().next().unwrap_or(' ')) {
                Some(p) => vec![p],
                None => return Err(GemmError::Config(format!("unknown key {key:?}"))),
            },
            Some(_) => return Err(GemmError::Config(format!("unknown key {key:?}"))),
        };
        match (group, field) {
            (Some("gemm"), Some(f @ ("mc" | "nc" | "kc"))) => {
                let v = parse_count(key, value)?;
                for p in precisions {
                    let b = self.for_precision_mut(p);
                    match f {
                        "mc" => b.mc = v,
                        "nc" => b.nc = v,
                        _ => b.kc = v,
                    }
                }
            }
            (Some("ukr"), Some(f @ ("mr" | "nr"))) => {
                let v = parse_count(key, value)?;
                for p in precisions {
                    let b = self.for_precision_mut(p);
                    if f == "mr" {
                        b.mr = v;
                    } else {
                        b.nr = v;
                    }
                }
            }
            (Some("gemm"), Some("threads")) if suffix.is_none() => self.threads = parse_count(key, value)?,
            (Some("ukr"), Some("preference")) if suffix.is_none() => {
                self.preference = match value {
                    "row" => IoPreference::Row,
                    "column" | "col" => IoPreference::Column,
                    _ => {
                        return Err(GemmError::Config(format!(
                            "{key}: expected row or column, got {value:?}"
                        )))
                    }
                }
            }
            (Some("ctemp"), Some("enable")) if suffix.is_none() => {
                self.ctemp = CTempPolicy::parse(value)
                    .ok_or_else(|| GemmError::Config(format!("{key}: expected auto, on or off, got {value:?}")))?
            }
            _ => return Err(GemmError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key = value` document. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GemmError::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| GemmError::Config(format!("{}: {e}", path.display())))?;
        self.apply_str(&text)
    }

    /// Apply `MDGEMM_*` overrides from `lookup` (usually the process
    /// environment).
    pub fn apply_env_with(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(path) = lookup("MDGEMM_CONFIG") {
            self.apply_file(Path::new(&path))?;
        }
        for key in KEYS {
            let var = format!("MDGEMM_{}", key.replace('.', "_").to_uppercase());
            if let Some(v) = lookup(&var) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    /// Defaults plus the config file and environment overrides, validated.
    pub fn from_env() -> Result<Config> {
        let mut c = Config::default();
        c.apply_env_with(|k| std::env::var(k).ok())?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (p, b) in [(Precision::Single, &self.single), (Precision::Double, &self.double)] {
            let name = p.letter();
            if b.mr % 2 != 0 || b.nr % 2 != 0 || b.mr > MAX_REG || b.nr > MAX_REG {
                return Err(GemmError::Config(format!(
                    "{name}: mr and nr must be even and at most {MAX_REG} (got {}x{})",
                    b.mr, b.nr
                )));
            }
            if b.mc % b.mr != 0 || b.nc % b.nr != 0 {
                return Err(GemmError::Config(format!(
                    "{name}: mc must be a multiple of mr and nc of nr (mc={}, mr={}, nc={}, nr={})",
                    b.mc, b.mr, b.nc, b.nr
                )));
            }
        }
        if self.threads == 0 {
            return Err(GemmError::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, b) in [(Precision::Single, &self.single), (Precision::Double, &self.double)] {
            let s = p.letter();
            writeln!(f, "gemm.mc.{s} = {}", b.mc)?;
            writeln!(f, "gemm.nc.{s} = {}", b.nc)?;
            writeln!(f, "gemm.kc.{s} = {}", b.kc)?;
            writeln!(f, "ukr.mr.{s} = {}", b.mr)?;
            writeln!(f, "ukr.nr.{s} = {}", b.nr)?;
        }
        writeln!(f, "gemm.threads = {}", self.threads)?;
        writeln!(f, "ukr.preference = {}", self.preference.name())?;
        write!(f, "ctemp.enable = {}", self.ctemp.name())
    }
}
