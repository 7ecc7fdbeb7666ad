#![allow(dead_code)]

use ec3_core::coding::{ChannelParams, CodeScheme, Codec, LengthRule};
use ec3_core::env::{build_instance, ArmModel, BanditInstance, InstanceConfig, RewardSource, SensingMode};

pub fn synthetic(horizon: u64, seed: u64) -> BanditInstance {
    build_instance(&InstanceConfig::synthetic(horizon, seed)).unwrap()
}

/// Arms whose rewards never vary: `mus[k]` alone, `nus[k]` when collided.
pub fn constant(mus: &[f64], nus: &[f64], players: usize, horizon: u64, sigma: f64) -> BanditInstance {
    let arms = mus
        .iter()
        .zip(nus)
        .map(|(&m, &n)| ArmModel::new(RewardSource::trace(vec![m]), RewardSource::trace(vec![n])))
        .collect();
    BanditInstance::new(arms, players, horizon, sigma, None, None, SensingMode::NoSensing, 0).unwrap()
}

pub fn params(instance: &BanditInstance) -> ChannelParams {
    ChannelParams {
        horizon: instance.horizon(),
        mu_min: instance.mu_min(),
        nu_max: instance.nu_max(),
        sigma: instance.sigma(),
    }
}

/// Lengths from the closed-form formulas at the instance horizon.
pub fn theoretical(instance: &BanditInstance, codec: Codec) -> CodeScheme {
    CodeScheme::new(codec, LengthRule::Theoretical(params(instance)), instance.threshold()).unwrap()
}

pub fn at_rate(instance: &BanditInstance, codec: Codec, rate: f64) -> CodeScheme {
    CodeScheme::new(codec, LengthRule::Rate { rate }, instance.threshold()).unwrap()
}
