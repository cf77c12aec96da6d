use std::path::Path;

use serde::Deserialize;

use ultradiff::heat::Projection;
use ultradiff::operators::{Bullet, Measure};

use crate::error::CliError;

/// Values a TOML config file may set; flags override each of them.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub bullet: Option<Bullet>,
    pub alpha: Option<f64>,
    pub measure: Option<Measure>,
    pub level: Option<usize>,
    pub prime: Option<u64>,
    pub truncate: Option<usize>,
    pub t: Option<f64>,
    pub seeds: Option<Vec<String>>,
    pub parallelism: Option<usize>,
    pub reference: Option<usize>,
    pub projection: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
    }
}

/// Flag values as given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Flags {
    pub bullet: Option<Bullet>,
    pub alpha: Option<f64>,
    pub measure: Option<Measure>,
    pub level: Option<usize>,
    pub prime: Option<u64>,
    pub truncate: Option<usize>,
    pub t: Option<f64>,
    pub seeds: Option<Vec<String>>,
    pub parallelism: Option<usize>,
    pub reference: Option<usize>,
    pub projection: Option<String>,
}

/// Fully resolved run parameters: flags, then config file, then defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub bullet: Bullet,
    pub alpha: f64,
    pub measure: Measure,
    /// Discretization level; `None` means one below the vertex discs.
    pub level: Option<usize>,
    pub prime: Option<u64>,
    pub truncate: Option<usize>,
    pub t: f64,
    pub seeds: Option<Vec<String>>,
    pub parallelism: usize,
    pub reference: Option<usize>,
    pub projection: Projection,
}

impl RunConfig {
    pub fn resolve(flags: Flags, file: FileConfig) -> Result<Self, CliError> {
        let alpha = flags.alpha.or(file.alpha).unwrap_or(1.0);
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(CliError::parse(format!("--alpha must be a finite number >= 1, got {alpha}")));
        }
        let t = flags.t.or(file.t).unwrap_or(1.0);
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::parse(format!("--t must be a finite number >= 0, got {t}")));
        }
        let default_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let parallelism = flags.parallelism.or(file.parallelism).unwrap_or(default_threads);
        if parallelism == 0 {
            return Err(CliError::parse("--parallelism must be at least 1"));
        }
        let projection = match flags.projection.or(file.projection).as_deref() {
            None | Some("sample") => Projection::Sample,
            Some("average") => Projection::Average,
            Some(other) => {
                return Err(CliError::parse(format!(
                    "unknown projection '{other}' (expected sample or average)"
                )))
            }
        };
        if let Some(0) = flags.truncate.or(file.truncate) {
            return Err(CliError::parse("--truncate must be at least 1"));
        }
        Ok(RunConfig {
            bullet: flags.bullet.or(file.bullet).unwrap_or(Bullet::Ultrametric),
            alpha,
            measure: flags.measure.or(file.measure).unwrap_or(Measure::Haar),
            level: flags.level.or(file.level),
            prime: flags.prime.or(file.prime),
            truncate: flags.truncate.or(file.truncate),
            t,
            seeds: flags.seeds.or(file.seeds),
            parallelism,
            reference: flags.reference.or(file.reference),
            projection,
        })
    }
}
