use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A stationary reward distribution attached to one arm.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardSource {
    /// Unbounded Gaussian rewards; never truncated to [0, 1].
    Gaussian { mean: f64, sigma: f64 },
    Bernoulli { mean: f64 },
    /// A finite reward sequence replayed cyclically by global slot index.
    Trace { values: Arc<[f64]>, mean: f64 },
}

impl RewardSource {
    pub fn trace(values: impl Into<Arc<[f64]>>) -> Self {
        let values = values.into();
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        RewardSource::Trace { values, mean }
    }

    pub fn mean(&self) -> f64 {
        match self {
            RewardSource::Gaussian { mean, .. } | RewardSource::Bernoulli { mean } => *mean,
            RewardSource::Trace { mean, .. } => *mean,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            RewardSource::Gaussian { sigma, .. } => *sigma == 0.0,
            RewardSource::Bernoulli { mean } => *mean == 0.0 || *mean == 1.0,
            RewardSource::Trace { .. } => true,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> f64 {
        match self {
            RewardSource::Gaussian { mean, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z
            }
            RewardSource::Bernoulli { mean } => {
                if rng.random::<f64>() < *mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardSource::Trace { values, .. } => values[(t % values.len() as u64) as usize],
        }
    }
}

/// Reward model of an arm once two or more players pull it in the same slot.
#[derive(Debug, Clone, PartialEq)]
pub enum CollisionModel {
    Single(RewardSource),
    /// Keyed by collider count. A count above the largest key uses the largest key's source.
    ByColliders(BTreeMap<usize, RewardSource>),
}

impl CollisionModel {
    pub fn source(&self, colliders: usize) -> &RewardSource {
        match self {
            CollisionModel::Single(s) => s,
            CollisionModel::ByColliders(map) => map
                .range(..=colliders)
                .next_back()
                .or_else(|| map.iter().next())
                .map(|(_, s)| s)
                .expect("collider map validated non-empty"),
        }
    }

    /// Mean reward with two colliders, the only collision the protocol creates on purpose.
    pub fn pairwise_mean(&self) -> f64 {
        self.source(2).mean()
    }

    pub fn min_mean(&self) -> f64 {
        match self {
            CollisionModel::Single(s) => s.mean(),
            CollisionModel::ByColliders(map) => {
                map.values().map(RewardSource::mean).fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn max_mean(&self) -> f64 {
        match self {
            CollisionModel::Single(s) => s.mean(),
            CollisionModel::ByColliders(map) => map
                .values()
                .map(RewardSource::mean)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub(crate) fn sources(&self) -> Vec<&RewardSource> {
        match self {
            CollisionModel::Single(s) => vec![s],
            CollisionModel::ByColliders(map) => map.values().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub no_collision: RewardSource,
    pub collision: CollisionModel,
}

impl ArmModel {
    pub fn new(no_collision: RewardSource, collision: RewardSource) -> Self {
        ArmModel {
            no_collision,
            collision: CollisionModel::Single(collision),
        }
    }

    /// μ[k]
    pub fn mu(&self) -> f64 {
        self.no_collision.mean()
    }

    /// ν[k], the two-collider collision mean.
    pub fn nu(&self) -> f64 {
        self.collision.pairwise_mean()
    }

    pub fn source_for(&self, occupancy: usize) -> &RewardSource {
        if occupancy <= 1 {
            &self.no_collision
        } else {
            self.collision.source(occupancy)
        }
    }

    /// Mean of the distribution a player draws from when `occupancy` players share the arm.
    pub fn mean_for(&self, occupancy: usize) -> f64 {
        self.source_for(occupancy).mean()
    }
}
