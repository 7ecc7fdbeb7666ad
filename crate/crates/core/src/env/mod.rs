//! Collision-dependent multi-player bandit environment.
//!
//! A [`BanditInstance`] is immutable once built. Every reward draw comes from a
//! random stream keyed by `(instance seed, arm, slot)`, so a run's rewards depend only
//! on the seed and the joint actions, never on evaluation order.

mod config;
mod source;

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

pub use config::{
    read_trace_columns, ArmConfig, ArmsConfig, CollisionConfig, Family, InstanceConfig,
    LinearArms, SensingMode, SourceConfig,
};
pub use source::{ArmModel, CollisionModel, RewardSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("instance has no arms")]
    NoArms,
    #[error("instance needs at least one player")]
    NoPlayers,
    #[error("{players} players exceed {arms} arms")]
    TooManyPlayers { players: usize, arms: usize },
    #[error("horizon must be at least one slot")]
    ZeroHorizon,
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("arm {arm}: mean {mean} outside [0, 1]")]
    MeanOutOfRange { arm: usize, mean: f64 },
    #[error("arm {arm}: trace value {value} outside [0, 1]")]
    TraceValueOutOfRange { arm: usize, value: f64 },
    #[error("empty trace")]
    EmptyTrace,
    #[error("trace file {path}: {message}")]
    TraceIo { path: PathBuf, message: String },
    #[error("trace file {path} has {available} columns, column {column} requested")]
    TraceColumn {
        path: PathBuf,
        column: usize,
        available: usize,
    },
    #[error("arm {arm}: collider map must be non-empty with a key for 2 colliders and no key below 2")]
    BadColliderMap { arm: usize },
    #[error("arm {arm}: collision mean must not increase with more colliders")]
    NonMonotoneColliders { arm: usize },
    #[error("nu_max ({nu_max}) must be below mu_min ({mu_min})")]
    BoundsOverlap { mu_min: f64, nu_max: f64 },
    #[error("mu_min ({mu_min}) exceeds the smallest no-collision mean ({smallest})")]
    MuMinTooLarge { mu_min: f64, smallest: f64 },
    #[error("nu_max ({nu_max}) is below the largest collision mean ({largest})")]
    NuMaxTooSmall { nu_max: f64, largest: f64 },
    #[error("the M-th and (M+1)-th best arms have equal means; the optimal set is ambiguous")]
    DegenerateGap,
    #[error("player {player} chose arm {arm}, but there are only {arms} arms")]
    ActionOutOfRange {
        player: usize,
        arm: usize,
        arms: usize,
    },
    #[error("joint action has {got} entries for {players} players")]
    WrongPlayerCount { got: usize, players: usize },
    #[error("slot {t} is past the horizon {horizon}")]
    PastHorizon { t: u64, horizon: u64 },
}

/// A validated game: arms, players, horizon and the bounds every player knows.
#[derive(Debug, Clone)]
pub struct BanditInstance {
    arms: Vec<ArmModel>,
    num_players: usize,
    horizon: u64,
    sigma: f64,
    mu_min: f64,
    nu_max: f64,
    sensing: SensingMode,
    seed: u64,
    stream_base: u64,
    mu_desc: Vec<f64>,
    nu_desc: Vec<f64>,
    ranking: Vec<usize>,
    delta: Option<f64>,
    delta_c: f64,
}

/// Result of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    /// Collision indicators, present only under collision sensing.
    pub collisions: Option<Vec<bool>>,
}

/// Reusable per-slot scratch space for [`BanditInstance::step_into`].
#[derive(Debug, Clone)]
pub struct SlotBuffer {
    pub occupancy: Vec<usize>,
    pub rewards: Vec<f64>,
    pub flags: Vec<bool>,
    streams: Vec<Option<Xoshiro256PlusPlus>>,
}

impl SlotBuffer {
    pub fn new(instance: &BanditInstance) -> Self {
        SlotBuffer {
            occupancy: vec![0; instance.num_arms()],
            rewards: vec![0.0; instance.num_players],
            flags: vec![false; instance.num_players],
            streams: vec![None; instance.num_arms()],
        }
    }
}

pub fn build_instance(config: &InstanceConfig) -> Result<BanditInstance, EnvError> {
    build_instance_in(config, Path::new("."))
}

/// Builds an instance, resolving relative trace file paths against `base_dir`.
pub fn build_instance_in(
    config: &InstanceConfig,
    base_dir: &Path,
) -> Result<BanditInstance, EnvError> {
    let arms = config.resolve_arms(base_dir)?;
    let instance = BanditInstance::new(
        arms,
        config.num_players,
        config.horizon,
        config.sigma,
        config.mu_min,
        config.nu_max,
        config.sensing,
        config.seed,
    )?;
    Ok(if config.shuffle_arms {
        instance.shuffled(config.seed)
    } else {
        instance
    })
}

impl BanditInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        arms: Vec<ArmModel>,
        num_players: usize,
        horizon: u64,
        sigma: f64,
        mu_min: Option<f64>,
        nu_max: Option<f64>,
        sensing: SensingMode,
        seed: u64,
    ) -> Result<Self, EnvError> {
        let k = arms.len();
        if k == 0 {
            return Err(EnvError::NoArms);
        }
        if num_players == 0 {
            return Err(EnvError::NoPlayers);
        }
        if num_players > k {
            return Err(EnvError::TooManyPlayers {
                players: num_players,
                arms: k,
            });
        }
        if horizon == 0 {
            return Err(EnvError::ZeroHorizon);
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EnvError::BadSigma(sigma));
        }
        for (i, arm) in arms.iter().enumerate() {
            validate_arm(i, arm)?;
        }

        let smallest_mu = arms.iter().map(ArmModel::mu).fold(f64::INFINITY, f64::min);
        let largest_nu = arms
            .iter()
            .map(|a| a.collision.max_mean())
            .fold(f64::NEG_INFINITY, f64::max);
        let mu_min = mu_min.unwrap_or(smallest_mu);
        let nu_max = nu_max.unwrap_or(largest_nu);
        if mu_min > smallest_mu {
            return Err(EnvError::MuMinTooLarge {
                mu_min,
                smallest: smallest_mu,
            });
        }
        if nu_max < largest_nu {
            return Err(EnvError::NuMaxTooSmall {
                nu_max,
                largest: largest_nu,
            });
        }
        if nu_max >= mu_min {
            return Err(EnvError::BoundsOverlap { mu_min, nu_max });
        }

        let mut ranking: Vec<usize> = (0..k).collect();
        ranking.sort_by(|&a, &b| arms[b].mu().total_cmp(&arms[a].mu()).then(a.cmp(&b)));
        let mu_desc: Vec<f64> = ranking.iter().map(|&i| arms[i].mu()).collect();
        let mut nu_desc: Vec<f64> = arms.iter().map(ArmModel::nu).collect();
        nu_desc.sort_by(|a, b| b.total_cmp(a));
        let delta = (num_players < k).then(|| mu_desc[num_players - 1] - mu_desc[num_players]);
        if delta.is_some_and(|d| d <= 0.0) {
            return Err(EnvError::DegenerateGap);
        }
        let worst_collision = arms
            .iter()
            .map(|a| a.collision.min_mean())
            .fold(f64::INFINITY, f64::min);
        let delta_c = mu_desc[0] - worst_collision;

        Ok(BanditInstance {
            arms,
            num_players,
            horizon,
            sigma,
            mu_min,
            nu_max,
            sensing,
            seed,
            stream_base: stream_base(seed),
            mu_desc,
            nu_desc,
            ranking,
            delta,
            delta_c,
        })
    }

    pub fn arms(&self) -> &[ArmModel] {
        &self.arms
    }
    pub fn arm(&self, k: usize) -> &ArmModel {
        &self.arms[k]
    }
    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }
    pub fn num_players(&self) -> usize {
        self.num_players
    }
    pub fn horizon(&self) -> u64 {
        self.horizon
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn mu_min(&self) -> f64 {
        self.mu_min
    }
    pub fn nu_max(&self) -> f64 {
        self.nu_max
    }
    pub fn sensing(&self) -> SensingMode {
        self.sensing
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// μ_(1) ≥ … ≥ μ_(K)
    pub fn mu_sorted(&self) -> &[f64] {
        &self.mu_desc
    }
    /// ν_(1) ≥ … ≥ ν_(K), two-collider means.
    pub fn nu_sorted(&self) -> &[f64] {
        &self.nu_desc
    }
    /// Arm indices by decreasing no-collision mean (ties by index).
    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }
    /// μ_(M) − μ_(M+1); `None` when every arm is optimal (M = K).
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }
    /// μ_(1) minus the smallest collision mean: the worst per-player loss of one slot.
    pub fn delta_c(&self) -> f64 {
        self.delta_c
    }
    /// Threshold halfway between the no-collision and collision bounds.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.mu_min + self.nu_max)
    }
    /// The M best arms, sorted by index.
    pub fn optimal_arms(&self) -> Vec<usize> {
        let mut top = self.ranking[..self.num_players].to_vec();
        top.sort_unstable();
        top
    }
    /// Σ_{m ≤ M} μ_(m)
    pub fn optimal_reward(&self) -> f64 {
        self.mu_desc[..self.num_players].iter().sum()
    }

    /// Same game with a different reward seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.seed = seed;
        out.stream_base = stream_base(seed);
        out
    }

    pub fn with_horizon(&self, horizon: u64) -> Self {
        let mut out = self.clone();
        out.horizon = horizon.max(1);
        out
    }

    pub fn with_sensing(&self, sensing: SensingMode) -> Self {
        let mut out = self.clone();
        out.sensing = sensing;
        out
    }

    /// Relabels arms so that new arm `i` is old arm `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.num_arms());
        let arms = perm.iter().map(|&i| self.arms[i].clone()).collect();
        Self::new(
            arms,
            self.num_players,
            self.horizon,
            self.sigma,
            Some(self.mu_min),
            Some(self.nu_max),
            self.sensing,
            self.seed,
        )
        .expect("a permutation keeps a valid instance valid")
    }

    /// Seeded uniform permutation of the arm positions.
    pub fn shuffled(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5348_5546_464c_4521);
        let mut perm: Vec<usize> = (0..self.num_arms()).collect();
        perm.shuffle(&mut rng);
        self.permuted(&perm)
    }

    fn check_actions(&self, t: u64, actions: &[usize]) -> Result<(), EnvError> {
        if t >= self.horizon {
            return Err(EnvError::PastHorizon {
                t,
                horizon: self.horizon,
            });
        }
        if actions.len() != self.num_players {
            return Err(EnvError::WrongPlayerCount {
                got: actions.len(),
                players: self.num_players,
            });
        }
        if let Some((player, &arm)) = actions.iter().enumerate().find(|(_, &a)| a >= self.num_arms())
        {
            return Err(EnvError::ActionOutOfRange {
                player,
                arm,
                arms: self.num_arms(),
            });
        }
        Ok(())
    }

    pub fn step(&self, t: u64, actions: &[usize]) -> Result<StepOutcome, EnvError> {
        let mut buf = SlotBuffer::new(self);
        self.step_into(t, actions, &mut buf)?;
        Ok(StepOutcome {
            rewards: buf.rewards,
            collisions: match self.sensing {
                SensingMode::CollisionSensing => Some(buf.flags),
                SensingMode::NoSensing => None,
            },
        })
    }

    /// Allocation-free variant of [`step`](Self::step). Fills occupancy, rewards and the
    /// true collision flags; callers decide whether players may see the flags.
    pub fn step_into(
        &self,
        t: u64,
        actions: &[usize],
        buf: &mut SlotBuffer,
    ) -> Result<(), EnvError> {
        self.check_actions(t, actions)?;
        buf.occupancy.iter_mut().for_each(|c| *c = 0);
        for &a in actions {
            buf.occupancy[a] += 1;
        }
        let k_arms = self.num_arms() as u64;
        for (m, &arm) in actions.iter().enumerate() {
            let occupancy = buf.occupancy[arm];
            let rng = buf.streams[arm].get_or_insert_with(|| {
                Xoshiro256PlusPlus::seed_from_u64(
                    self.stream_base
                        .wrapping_add(t.wrapping_mul(k_arms))
                        .wrapping_add(arm as u64),
                )
            });
            buf.rewards[m] = self.arms[arm].source_for(occupancy).sample(t, rng);
            buf.flags[m] = occupancy > 1;
        }
        for &a in actions {
            buf.streams[a] = None;
        }
        Ok(())
    }

    /// Per-slot pseudo-regret: the optimal reward minus the mean of every distribution
    /// actually drawn from. `occupancy` is indexed by arm.
    pub fn slot_regret(&self, actions: &[usize], occupancy: &[usize]) -> f64 {
        let credit: f64 = actions
            .iter()
            .map(|&a| self.arms[a].mean_for(occupancy[a]))
            .sum();
        self.optimal_reward() - credit
    }
}

fn stream_base(seed: u64) -> u64 {
    Xoshiro256PlusPlus::seed_from_u64(seed).next_u64()
}

fn validate_arm(i: usize, arm: &ArmModel) -> Result<(), EnvError> {
    let mut sources = vec![&arm.no_collision];
    sources.extend(arm.collision.sources());
    for s in sources {
        let mean = s.mean();
        if let RewardSource::Trace { values, .. } = s {
            if values.is_empty() {
                return Err(EnvError::EmptyTrace);
            }
            if let Some(&value) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(EnvError::TraceValueOutOfRange { arm: i, value });
            }
        }
        if let RewardSource::Gaussian { sigma, .. } = s {
            if !(*sigma >= 0.0 && sigma.is_finite()) {
                return Err(EnvError::BadSigma(*sigma));
            }
        }
        if !(0.0..=1.0).contains(&mean) {
            return Err(EnvError::MeanOutOfRange { arm: i, mean });
        }
    }
    if let CollisionModel::ByColliders(map) = &arm.collision {
        if map.is_empty() || !map.contains_key(&2) || map.keys().any(|&g| g < 2) {
            return Err(EnvError::BadColliderMap { arm: i });
        }
        let means: Vec<f64> = map.values().map(RewardSource::mean).collect();
        if means.windows(2).any(|w| w[1] > w[0]) {
            return Err(EnvError::NonMonotoneColliders { arm: i });
        }
    }
    Ok(())
}
