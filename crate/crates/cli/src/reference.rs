//! Optimal values for the suboptimality column.
//!
//! The extensive-form value is cached next to the problem file under
//! `<problem>.ref-<sha256>.json`, so editing the problem invalidates it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rphedge::extensive::{extensive_form, ExtensiveSettings};
use rphedge::problem::StochasticProblem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceMode {
    None,
    ExtensiveForm,
    File(PathBuf),
}

impl FromStr for ReferenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "extensive-form" => Ok(Self::ExtensiveForm),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(PathBuf::from(path))),
                _ => Err(format!("expected none, extensive-form or file:<path>, got `{s}`")),
            },
        }
    }
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::ExtensiveForm => f.write_str("extensive-form"),
            Self::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

/// Contents of a reference file and of the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub f_star: f64,
    /// Hash of the problem file the value belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reference {
    pub mode: String,
    pub value: Option<f64>,
    /// Whether the value came from the cache.
    pub cached: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn cache_path(problem_path: &Path, sha256: &str) -> PathBuf {
    let mut name = problem_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".ref-{sha256}.json"));
    problem_path.with_file_name(name)
}

fn read_reference(path: &Path) -> Result<ReferenceFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read reference {}: {e}", path.display())))?;
    let file: ReferenceFile =
        serde_json::from_str(&text).map_err(|e| CliError::parse(format!("reference {}: {e}", path.display())))?;
    if !file.f_star.is_finite() {
        return Err(CliError::parse(format!("reference {}: value is not finite", path.display())));
    }
    Ok(file)
}

pub fn resolve(
    mode: &ReferenceMode,
    problem: &StochasticProblem,
    problem_path: &Path,
    sha256: &str,
) -> Result<Reference> {
    let (value, cached) = match mode {
        ReferenceMode::None => (None, false),
        ReferenceMode::File(path) => (Some(read_reference(path)?.f_star), false),
        ReferenceMode::ExtensiveForm => {
            let cache = cache_path(problem_path, sha256);
            match read_reference(&cache) {
                Ok(file) if file.sha256.as_deref() == Some(sha256) => (Some(file.f_star), true),
                _ => {
                    info!("solving the extensive form for the reference value");
                    let f_star = extensive_form(problem, &ExtensiveSettings::default())?.f_star;
                    let file = ReferenceFile { f_star, sha256: Some(sha256.to_string()) };
                    let text = serde_json::to_string_pretty(&file).expect("reference serializes");
                    // A read-only directory only costs the cache.
                    if let Err(e) = std::fs::write(&cache, text + "\n") {
                        log::warn!("cannot write reference cache {}: {e}", cache.display());
                    }
                    (Some(f_star), false)
                }
            }
        }
    };
    Ok(Reference { mode: mode.to_string(), value, cached })
}
