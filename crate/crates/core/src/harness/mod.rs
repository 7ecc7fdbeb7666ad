//! Experiment runner: configuration, seeded replications, dataset ingestion, the
//! anytime wrapper and report files.

mod anytime;
mod ingest;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anytime::{doubling_schedule, min_feasible_horizon, run_anytime, AnytimeResult, Episode};
pub use ingest::{ingest_dataset, IngestOptions};
pub use report::{aggregate, build_report, emit_report, render_svg, Aggregate, Bounds, Report, Stats, Summary};

use crate::analysis::{centralized_lower_bound, regret_upper_bound, ChannelModel, RegretTrace};
use crate::coding::{ChannelParams, Codec, CodeScheme, CodingError, LengthRule};
use crate::ec3::{run_ec3, ChannelMode, Ec3Error, RunOptions};
use crate::env::{build_instance_in, BanditInstance, EnvError, InstanceConfig, SensingMode};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("no traces to report")]
    NoTraces,
    #[error("traces are sampled at different slots")]
    MisalignedTraces,
    #[error("dataset has {0} groups; an even number is required")]
    OddGroups(usize),
    #[error("dataset has {groups} groups but {arms} arms need {}", 2 * arms)]
    GroupCount { groups: usize, arms: usize },
    #[error("group {group} has value {value} on row {row}, outside [0, 1]")]
    ValueRange { group: usize, row: usize, value: f64 },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("split violates μ_min > ν_max (μ_min = {mu_min}, ν_max = {nu_max})")]
    Separation { mu_min: f64, nu_max: f64 },
    #[error("initial horizon {t0} is below the minimum feasible {min}")]
    InitialHorizon { t0: u64, min: u64 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Ec3(#[from] Ec3Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// EC3 with the configured code.
    #[default]
    Ec3,
    /// EC3 with uncoded threshold decoding.
    Ec3Ht,
    /// EC3 reading collision indicators instead of rewards.
    Ec3Sensing,
}

/// Codec plus either a target rate or a fixed repeat count. With neither, lengths follow
/// the theoretical formulas for the instance and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeConfig {
    #[serde(flatten)]
    pub codec: Codec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            codec: Codec::Hamming,
            rate: None,
            repeats: None,
        }
    }
}

impl CodeConfig {
    pub fn with_rate(codec: Codec, rate: f64) -> Self {
        CodeConfig {
            codec,
            rate: Some(rate),
            repeats: None,
        }
    }

    pub fn theoretical(codec: Codec) -> Self {
        CodeConfig {
            codec,
            rate: None,
            repeats: None,
        }
    }

    /// The scheme players use when planning for `horizon`.
    pub fn scheme(&self, instance: &BanditInstance, horizon: u64) -> Result<CodeScheme, CodingError> {
        let lengths = match (self.rate, self.repeats) {
            (Some(rate), _) => LengthRule::Rate { rate },
            (None, Some(repeats)) => LengthRule::Repeats { repeats },
            (None, None) => LengthRule::Theoretical(ChannelParams {
                horizon,
                mu_min: instance.mu_min(),
                nu_max: instance.nu_max(),
                sigma: instance.sigma(),
            }),
        };
        CodeScheme::new(self.codec.clone(), lengths, instance.threshold())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnytimeSettings {
    /// Length of the first episode.
    pub initial_horizon: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default)]
    pub channel: ChannelMode,
    /// Run without knowledge of the horizon, restarting on a doubling schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anytime: Option<AnytimeSettings>,
}

fn default_replications() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_stride() -> u64 {
    1000
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            replications: default_replications(),
            seed_base: 0,
            output_dir: default_output_dir(),
            stride: default_stride(),
            channel: ChannelMode::Noisy,
            anytime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub code: CodeConfig,
    #[serde(default)]
    pub experiment: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceConfig, algorithm: Algorithm, code: CodeConfig) -> Self {
        ExperimentConfig {
            instance,
            algorithm,
            code,
            experiment: ExperimentSettings::default(),
        }
    }

    /// Parses JSON, reporting the key path of the first offending field.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |path: &str, message: String| {
            Err(HarnessError::Config {
                path: path.to_string(),
                message,
            })
        };
        if self.experiment.replications == 0 {
            return bad("experiment.replications", "must be at least 1".into());
        }
        if self.experiment.stride == 0 {
            return bad("experiment.stride", "must be at least 1".into());
        }
        if let Some(rate) = self.code.rate {
            if !(rate > 0.0 && rate <= 1.0) {
                return bad("code.rate", format!("{rate} is outside (0, 1]"));
            }
        }
        if self.code.repeats == Some(0) {
            return bad("code.repeats", "must be at least 1".into());
        }
        if let Some(a) = self.experiment.anytime {
            if a.initial_horizon == 0 {
                return bad("experiment.anytime.initial_horizon", "must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Scheme for a run planned over `horizon`, after the algorithm's overrides.
    pub fn scheme(&self, instance: &BanditInstance, horizon: u64) -> Result<CodeScheme, CodingError> {
        match self.algorithm {
            Algorithm::Ec3Ht => Ok(CodeScheme::uncoded(instance.threshold())),
            Algorithm::Ec3 | Algorithm::Ec3Sensing => self.code.scheme(instance, horizon),
        }
    }

    /// The instance of replication `r`.
    pub fn instance_for(&self, replication: usize, base_dir: &Path) -> Result<BanditInstance, HarnessError> {
        let mut cfg = self.instance.clone();
        cfg.seed = self.experiment.seed_base.wrapping_add(replication as u64);
        let instance = build_instance_in(&cfg, base_dir)?;
        Ok(match self.algorithm {
            Algorithm::Ec3Sensing => instance.with_sensing(SensingMode::CollisionSensing),
            _ => instance,
        })
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub trace: RegretTrace,
    pub converged: bool,
    /// Slot at which every player was exploiting.
    pub exploit_start: Option<u64>,
    pub messages: u64,
    pub decode_errors: u64,
}

/// Runs one replication.
pub fn run_replication(config: &ExperimentConfig, replication: usize, base_dir: &Path) -> Result<RunRecord, HarnessError> {
    let instance = config.instance_for(replication, base_dir)?;
    let stride = config.experiment.stride;
    let channel = config.experiment.channel;
    if let Some(any) = config.experiment.anytime {
        let result = run_anytime(
            &instance,
            any.initial_horizon,
            instance.horizon(),
            |h| config.scheme(&instance, h).map_err(HarnessError::from),
            |scheme| RunOptions {
                channel,
                stride,
                ..RunOptions::new(scheme)
            },
        )?;
        let last = result.episodes.last();
        return Ok(RunRecord {
            seed: instance.seed(),
            converged: last.is_some_and(|e| e.converged),
            exploit_start: last.and_then(|e| e.exploit_start),
            messages: result.episodes.iter().map(|e| e.messages).sum(),
            decode_errors: result.trace.final_decode_errors(),
            trace: result.trace,
        });
    }
    let scheme = config.scheme(&instance, instance.horizon())?;
    let opts = RunOptions {
        channel,
        stride,
        ..RunOptions::new(scheme)
    };
    let run = run_ec3(&instance, &opts)?;
    Ok(RunRecord {
        seed: instance.seed(),
        converged: run.converged,
        exploit_start: run.exploit_start,
        messages: run.messages,
        decode_errors: run.decode_errors,
        trace: run.trace,
    })
}

/// Runs every replication (in parallel); records come back ordered by seed.
pub fn simulate(config: &ExperimentConfig, base_dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    let mut records = (0..config.experiment.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r, base_dir))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| r.seed);
    Ok(records)
}

/// Lower and upper regret bounds for `instance` at `horizon`; either is `None` when
/// the instance makes it undefined.
pub fn theoretical_bounds(instance: &BanditInstance, horizon: u64) -> Bounds {
    let t = horizon as f64;
    let channel = ChannelModel::for_instance(instance);
    let upper = regret_upper_bound(instance, t, &channel, None).ok();
    Bounds {
        lower_bound: centralized_lower_bound(instance, t).ok(),
        upper_bound: upper.map(|u| u.total),
        upper_terms: upper,
        note: "upper bound exploration term scaled by sigma^2 from constants derived for sigma = 1".into(),
    }
}

/// Simulates, then writes `results.csv`, `summary.json` and `regret.svg` to the
/// configured output directory (relative paths resolve against `base_dir`).
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<Report, HarnessError> {
    let records = simulate(config, base_dir)?;
    let instance = config.instance_for(0, base_dir)?;
    let bounds = theoretical_bounds(&instance, instance.horizon());
    let report = build_report(config, &records, bounds)?;
    let out = if config.experiment.output_dir.is_absolute() {
        config.experiment.output_dir.clone()
    } else {
        base_dir.join(&config.experiment.output_dir)
    };
    emit_report(&out, &report)?;
    Ok(report)
}
