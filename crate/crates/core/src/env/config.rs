use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ArmModel, CollisionModel, EnvError, RewardSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    #[default]
    NoSensing,
    CollisionSensing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    Gaussian {
        mean: f64,
        /// Defaults to the instance σ.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    Bernoulli {
        mean: f64,
    },
    /// Either inline `values`, or column `column` of the CSV file `file`.
    Trace {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CollisionConfig {
    Single(SourceConfig),
    /// Keyed by the number of colliders (as a string, e.g. `"2"`).
    ByColliders(BTreeMap<String, SourceConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub no_collision: SourceConfig,
    pub collision: CollisionConfig,
}

/// Arms whose no-collision means are evenly spaced between `mu_low` and `mu_high`,
/// all sharing the collision mean `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArms {
    pub num_arms: usize,
    pub mu_low: f64,
    pub mu_high: f64,
    pub nu: f64,
    #[serde(default)]
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmsConfig {
    Explicit(Vec<ArmConfig>),
    Linear(LinearArms),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub num_players: usize,
    pub horizon: u64,
    pub sigma: f64,
    /// Defaults to the smallest no-collision mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_min: Option<f64>,
    /// Defaults to the largest collision mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_max: Option<f64>,
    #[serde(default)]
    pub sensing: SensingMode,
    #[serde(default)]
    pub seed: u64,
    /// Randomly permute arm positions (seeded) when the instance is built.
    #[serde(default)]
    pub shuffle_arms: bool,
    pub arms: ArmsConfig,
}

impl InstanceConfig {
    /// The synthetic setting used throughout the experiments: K = 10, M = 5, Gaussian
    /// rewards with σ = 0.2, no-collision means 0.3..0.84, collision mean 0.1.
    pub fn synthetic(horizon: u64, seed: u64) -> Self {
        InstanceConfig {
            num_players: 5,
            horizon,
            sigma: 0.2,
            mu_min: None,
            nu_max: None,
            sensing: SensingMode::NoSensing,
            seed,
            shuffle_arms: true,
            arms: ArmsConfig::Linear(LinearArms {
                num_arms: 10,
                mu_low: 0.3,
                mu_high: 0.84,
                nu: 0.1,
                family: Family::Gaussian,
            }),
        }
    }

    pub fn num_arms(&self) -> usize {
        match &self.arms {
            ArmsConfig::Explicit(v) => v.len(),
            ArmsConfig::Linear(l) => l.num_arms,
        }
    }

    /// Materializes every arm source, reading trace files relative to `base_dir`.
    pub(crate) fn resolve_arms(&self, base_dir: &Path) -> Result<Vec<ArmModel>, EnvError> {
        match &self.arms {
            ArmsConfig::Linear(l) => linear_arms(l, self.sigma),
            ArmsConfig::Explicit(arms) => {
                let mut files = TraceFiles::new(base_dir);
                arms.iter()
                    .enumerate()
                .map(|(arm, a)| {
                        let no_collision = files.resolve(&a.no_collision, self.sigma)?;
                        let collision = match &a.collision {
                            CollisionConfig::Single(s) => {
                                CollisionModel::Single(files.resolve(s, self.sigma)?)
                            }
                            CollisionConfig::ByColliders(map) => CollisionModel::ByColliders(
                                map.iter()
                                    .map(|(g, s)| {
                                        let g = g
                                            .trim()
                                            .parse::<usize>()
                                            .map_err(|_| EnvError::BadColliderMap { arm })?;
                                        Ok((g, files.resolve(s, self.sigma)?))
                                    })
                                    .collect::<Result<_, EnvError>>()?,
                            ),
                        };
                        Ok(ArmModel {
                            no_collision,
                            collision,
                        })
                    })
                    .collect()
            }
        }
    }
}

fn linear_arms(l: &LinearArms, sigma: f64) -> Result<Vec<ArmModel>, EnvError> {
    if l.num_arms == 0 {
        return Err(EnvError::NoArms);
    }
    let step = if l.num_arms > 1 {
        (l.mu_high - l.mu_low) / (l.num_arms - 1) as f64
    } else {
        0.0
    };
    let make = |mean: f64| match l.family {
        Family::Gaussian => RewardSource::Gaussian { mean, sigma },
        Family::Bernoulli => RewardSource::Bernoulli { mean },
    };
    Ok((0..l.num_arms)
        .map(|k| ArmModel::new(make(l.mu_low + step * k as f64), make(l.nu)))
        .collect())
}

/// Caches parsed trace CSV files so each file is read once per resolution.
struct TraceFiles<'a> {
    base_dir: &'a Path,
    cache: BTreeMap<PathBuf, Vec<Arc<[f64]>>>,
}

impl<'a> TraceFiles<'a> {
    fn new(base_dir: &'a Path) -> Self {
        TraceFiles {
            base_dir,
            cache: BTreeMap::new(),
        }
    }

    fn resolve(&mut self, cfg: &SourceConfig, sigma: f64) -> Result<RewardSource, EnvError> {
        Ok(match cfg {
            SourceConfig::Gaussian { mean, sigma: s } => RewardSource::Gaussian {
                mean: *mean,
                sigma: s.unwrap_or(sigma),
            },
            SourceConfig::Bernoulli { mean } => RewardSource::Bernoulli { mean: *mean },
            SourceConfig::Trace {
                values: Some(v), ..
            } => RewardSource::trace(v.clone()),
            SourceConfig::Trace {
                values: None,
                file: Some(file),
                column,
            } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    self.base_dir.join(file)
                };
                if !self.cache.contains_key(&path) {
                    let cols = read_trace_columns(&path)?
                        .into_iter()
                        .map(Arc::from)
                        .collect();
                    self.cache.insert(path.clone(), cols);
                }
                let cols = &self.cache[&path];
                let col = column.unwrap_or(0);
                let values = cols.get(col).ok_or_else(|| EnvError::TraceColumn {
                    path: path.clone(),
                    column: col,
                    available: cols.len(),
                })?;
                RewardSource::trace(values.clone())
            }
            SourceConfig::Trace { .. } => return Err(EnvError::EmptyTrace),
        })
    }
}

/// Reads a trace CSV: one column per source, one row per slot. A leading row that does
/// not parse as numbers is taken as a header.
pub fn read_trace_columns(path: &Path) -> Result<Vec<Vec<f64>>, EnvError> {
    let io_err = |e: csv::Error| EnvError::TraceIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(io_err)?;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(io_err)?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if row == 0 => continue,
            Err(_) => {
                return Err(EnvError::TraceIo {
                    path: path.to_path_buf(),
                    message: format!("non-numeric value on row {}", row + 1),
                })
            }
        };
        if columns.is_empty() {
            columns = vec![Vec::new(); values.len()];
        }
        if values.len() != columns.len() {
            return Err(EnvError::TraceIo {
                path: path.to_path_buf(),
                message: format!(
                    "row {} has {} columns, expected {}",
                    row + 1,
                    values.len(),
                    columns.len()
                ),
            });
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    Ok(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_collider_map_and_single_source() {
        let json = r#"{
            "num_players": 3, "horizon": 100, "sigma": 0.1,
            "arms": [
                {"no_collision": {"kind": "bernoulli", "mean": 0.9},
                 "collision": {"2": {"kind": "bernoulli", "mean": 0.2},
                               "3": {"kind": "bernoulli", "mean": 0.1}}},
                {"no_collision": {"kind": "gaussian", "mean": 0.8},
                 "collision": {"kind": "gaussian", "mean": 0.05, "sigma": 0.3}},
                {"no_collision": {"kind": "trace", "values": [0.7, 0.7]},
                 "collision": {"kind": "trace", "values": [0.0]}}
            ]
        }"#;
        let cfg: InstanceConfig = serde_json::from_str(json).unwrap();
        let arms = cfg.resolve_arms(Path::new(".")).unwrap();
        assert!(matches!(arms[0].collision, CollisionModel::ByColliders(_)));
        assert_eq!(arms[0].mean_for(3), 0.1);
        assert_eq!(
            arms[1].collision.source(2),
            &RewardSource::Gaussian {
                mean: 0.05,
                sigma: 0.3
            }
        );
        assert_eq!(arms[2].mu(), 0.7);
    }

    #[test]
    fn linear_arms_are_evenly_spaced() {
        let cfg = InstanceConfig::synthetic(1000, 0);
        let arms = cfg.resolve_arms(Path::new(".")).unwrap();
        assert_eq!(arms.len(), 10);
        assert!((arms[0].mu() - 0.3).abs() < 1e-12);
        assert!((arms[9].mu() - 0.84).abs() < 1e-12);
        assert!((arms[4].mu() - arms[3].mu() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn reads_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n0.1,0.2\n0.3,0.4\n").unwrap();
        let cols = read_trace_columns(&path).unwrap();
        assert_eq!(cols, vec![vec![0.1, 0.3], vec![0.2, 0.4]]);
    }
}
