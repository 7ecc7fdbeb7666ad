use std::path::{Path, PathBuf};

use crate::env::{read_trace_columns, ArmConfig, ArmsConfig, CollisionConfig, InstanceConfig, SensingMode, SourceConfig};

use super::HarnessError;

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Defaults to half the number of arms (at least one).
    pub num_players: Option<usize>,
    /// Defaults to the number of rows.
    pub horizon: Option<u64>,
    pub seed: u64,
}

/// Builds a trace-based instance from per-group reward sequences.
///
/// Every column of every file is one group. Groups are ranked by empirical mean; the
/// top `num_arms` supply the no-collision rewards and the rest the collision rewards,
/// paired rank by rank.
pub fn ingest_dataset(paths: &[PathBuf], num_arms: usize, opts: &IngestOptions) -> Result<InstanceConfig, HarnessError> {
    let mut groups: Vec<(PathBuf, usize, f64)> = Vec::new();
    let mut rows = 0usize;
    for path in paths {
        let abs = absolute(path)?;
        for (column, values) in read_trace_columns(&abs)?.into_iter().enumerate() {
            let group = groups.len();
            if values.is_empty() {
                return Err(HarnessError::EmptyGroup(group));
            }
            if let Some((row, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(HarnessError::ValueRange { group, row, value });
            }
            rows = rows.max(values.len());
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            groups.push((abs.clone(), column, mean));
        }
    }
    if groups.len() % 2 == 1 {
        return Err(HarnessError::OddGroups(groups.len()));
    }
    if groups.len() != 2 * num_arms || num_arms == 0 {
        return Err(HarnessError::GroupCount {
            groups: groups.len(),
            arms: num_arms,
        });
    }

    groups.sort_by(|a, b| b.2.total_cmp(&a.2));
    let (top, bottom) = groups.split_at(num_arms);
    let mu_min = top.iter().map(|g| g.2).fold(f64::INFINITY, f64::min);
    let nu_max = bottom.iter().map(|g| g.2).fold(f64::NEG_INFINITY, f64::max);
    if !(mu_min > nu_max) {
        return Err(HarnessError::Separation { mu_min, nu_max });
    }

    let source = |g: &(PathBuf, usize, f64)| SourceConfig::Trace {
        values: None,
        file: Some(g.0.clone()),
        column: Some(g.1),
    };
    let arms = top
        .iter()
        .zip(bottom)
        .map(|(hi, lo)| ArmConfig {
            no_collision: source(hi),
            collision: CollisionConfig::Single(source(lo)),
        })
        .collect();
    Ok(InstanceConfig {
        num_players: opts.num_players.unwrap_or((num_arms / 2).max(1)),
        horizon: opts.horizon.unwrap_or(rows as u64),
        sigma: 0.5,
        mu_min: Some(mu_min),
        nu_max: Some(nu_max),
        sensing: SensingMode::NoSensing,
        seed: opts.seed,
        shuffle_arms: true,
        arms: ArmsConfig::Explicit(arms),
    })
}

fn absolute(path: &Path) -> Result<PathBuf, HarnessError> {
    std::path::absolute(path).map_err(|e| HarnessError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
