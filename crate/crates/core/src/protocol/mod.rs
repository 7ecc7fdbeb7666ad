//! Implicit communication over collisions.
//!
//! Player `m` owns communication arm `m`. To send bit 1 the sender pulls the receiver's
//! arm and collides with it; to send bit 0 it stays on its own arm. The receiver keeps
//! pulling its own arm and reads the bits back from the rewards (or from the collision
//! flags when they are observable). Everyone else idles on their own arm.

use thiserror::Error;

use crate::coding::{CodeScheme, CodingError};
use crate::env::{BanditInstance, EnvError, SensingMode, SlotBuffer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("sender and receiver are both player {0}")]
    SelfMessage(usize),
    #[error("player {player} does not exist ({players} players)")]
    NoSuchPlayer { player: usize, players: usize },
    #[error("quantization needs at least one fraction bit")]
    ZeroPrecision,
    #[error("expected {expected} bits, got {got}")]
    BitCount { expected: usize, got: usize },
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Sender actions for a sequence of channel bits: the receiver's arm for 1, its own
/// arm for 0.
pub fn send_bits(sender: usize, receiver: usize, bits: &[bool]) -> Result<Vec<usize>, ProtocolError> {
    if sender == receiver {
        return Err(ProtocolError::SelfMessage(sender));
    }
    Ok(bits.iter().map(|&b| if b { receiver } else { sender }).collect())
}

/// What a receiver observed on its own arm during an exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum Received {
    /// Collision indicators (collision sensing).
    Flags(Vec<bool>),
    /// Raw rewards (no sensing).
    Samples(Vec<f64>),
}

impl Received {
    pub fn len(&self) -> usize {
        match self {
            Received::Flags(f) => f.len(),
            Received::Samples(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Packs a receiver's observations according to the sensing mode.
pub fn receive_bits(sensing: SensingMode, rewards: &[f64], flags: &[bool]) -> Received {
    match sensing {
        SensingMode::CollisionSensing => Received::Flags(flags.to_vec()),
        SensingMode::NoSensing => Received::Samples(rewards.to_vec()),
    }
}

/// Decodes an `l`-bit message from what the receiver observed.
pub fn decode_received(scheme: &CodeScheme, l: usize, received: &Received) -> Result<Vec<bool>, CodingError> {
    match received {
        Received::Flags(f) => scheme.decode_flags(l, f),
        Received::Samples(s) => scheme.decode(l, s),
    }
}

/// A sample mean in fixed point: one integer bit and `Q` fraction bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMean {
    pub integer_bit: bool,
    /// Most significant first: `fraction_bits[i]` weighs `2^-(i+1)`.
    pub fraction_bits: Vec<bool>,
}

impl QuantizedMean {
    pub fn precision(&self) -> usize {
        self.fraction_bits.len()
    }

    pub fn value(&self) -> f64 {
        let frac: f64 = self
            .fraction_bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| 0.5f64.powi(i as i32 + 1))
            .sum();
        f64::from(u8::from(self.integer_bit)) + frac
    }

    /// Integer bit followed by the fraction bits.
    pub fn to_bits(&self) -> Vec<bool> {
        std::iter::once(self.integer_bit)
            .chain(self.fraction_bits.iter().copied())
            .collect()
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, ProtocolError> {
        match bits.split_first() {
            Some((&integer_bit, rest)) if !rest.is_empty() => Ok(QuantizedMean {
                integer_bit,
                fraction_bits: rest.to_vec(),
            }),
            _ => Err(ProtocolError::ZeroPrecision),
        }
    }
}

/// Floors `value` onto the `2^-q` grid over `[0, 2)`. Values outside the range are
/// clamped to the nearest representable point.
pub fn quantize_mean(value: f64, q: usize) -> Result<QuantizedMean, ProtocolError> {
    if q == 0 {
        return Err(ProtocolError::ZeroPrecision);
    }
    let q = q.min(62);
    let max = (1u64 << (q + 1)) - 1;
    let scaled = (value.max(0.0) * (1u64 << q) as f64).floor();
    let code = if scaled.is_nan() { 0 } else { (scaled as u64).min(max) };
    Ok(QuantizedMean {
        integer_bit: code >> q & 1 == 1,
        fraction_bits: (0..q).rev().map(|i| code >> i & 1 == 1).collect(),
    })
}

pub fn dequantize(q: &QuantizedMean) -> f64 {
    q.value()
}

/// Unsigned integer in `width` bits, most significant first.
pub fn uint_to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| i < 64 && value >> i & 1 == 1).collect()
}

pub fn bits_to_uint(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| acc << 1 | u64::from(b))
}

/// Every player's arm for each slot of one exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommSlotPlan {
    pub sender: usize,
    pub receiver: usize,
    /// `actions[slot][player]`
    pub actions: Vec<Vec<usize>>,
}

/// Lays out an exchange of `channel_bits` from `sender` to `receiver` among
/// `num_players` players, each idling on its own communication arm.
pub fn plan_exchange(
    num_players: usize,
    sender: usize,
    receiver: usize,
    channel_bits: &[bool],
) -> Result<CommSlotPlan, ProtocolError> {
    for p in [sender, receiver] {
        if p >= num_players {
            return Err(ProtocolError::NoSuchPlayer {
                player: p,
                players: num_players,
            });
        }
    }
    let sender_arms = send_bits(sender, receiver, channel_bits)?;
    let actions = sender_arms
        .into_iter()
        .map(|a| {
            let mut slot: Vec<usize> = (0..num_players).collect();
            slot[sender] = a;
            slot
        })
        .collect();
    Ok(CommSlotPlan {
        sender,
        receiver,
        actions,
    })
}

/// Outcome of [`transmit_message`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub decoded: Vec<bool>,
    pub plan: CommSlotPlan,
    /// `rewards[slot][player]`
    pub rewards: Vec<Vec<f64>>,
    pub next_slot: u64,
}

/// Encodes `message`, plays the exchange on the environment from slot `start`, and
/// decodes at the receiver.
pub fn transmit_message(
    instance: &BanditInstance,
    scheme: &CodeScheme,
    sender: usize,
    receiver: usize,
    message: &[bool],
    start: u64,
) -> Result<Transmission, ProtocolError> {
    let channel = scheme.encode(message)?;
    let plan = plan_exchange(instance.num_players(), sender, receiver, &channel)?;
    let mut buf = SlotBuffer::new(instance);
    let mut rewards = Vec::with_capacity(plan.actions.len());
    let mut own_rewards = Vec::with_capacity(plan.actions.len());
    let mut own_flags = Vec::with_capacity(plan.actions.len());
    for (i, actions) in plan.actions.iter().enumerate() {
        instance.step_into(start + i as u64, actions, &mut buf)?;
        rewards.push(buf.rewards.clone());
        own_rewards.push(buf.rewards[receiver]);
        own_flags.push(buf.flags[receiver]);
    }
    let received = receive_bits(instance.sensing(), &own_rewards, &own_flags);
    let decoded = decode_received(scheme, message.len(), &received)?;
    let next_slot = start + plan.actions.len() as u64;
    Ok(Transmission {
        decoded,
        plan,
        rewards,
        next_slot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn send_rule() {
        assert_eq!(send_bits(2, 1, &[true, false, true]).unwrap(), vec![1, 2, 1]);
        assert_eq!(send_bits(3, 1, &[false; 3]).unwrap(), vec![3, 3, 3]);
        assert_eq!(send_bits(1, 4, &[true, true]).unwrap(), vec![4, 4]);
        assert_eq!(send_bits(1, 1, &[true]), Err(ProtocolError::SelfMessage(1)));
    }

    #[test]
    fn receive_modes() {
        let r = receive_bits(SensingMode::CollisionSensing, &[0.1, 0.9, 0.1], &[true, false, true]);
        let scheme = CodeScheme::uncoded(0.5);
        assert_eq!(decode_received(&scheme, 3, &r).unwrap(), vec![true, false, true]);
        let r = receive_bits(SensingMode::NoSensing, &[0.05, 0.91, 0.07], &[false; 3]);
        assert_eq!(decode_received(&scheme, 3, &r).unwrap(), vec![true, false, true]);
        assert!(receive_bits(SensingMode::NoSensing, &[], &[]).is_empty());
    }

    #[test]
    fn quantization_examples() {
        let q = quantize_mean(0.7375, 4).unwrap();
        assert!(!q.integer_bit);
        assert_eq!(q.fraction_bits, vec![true, false, true, true]);
        assert_eq!(q.value(), 0.6875);

        let q = quantize_mean(0.0, 7).unwrap();
        assert!(q.to_bits().iter().all(|&b| !b));
        assert_eq!(q.value(), 0.0);

        let q = quantize_mean(1.0, 2).unwrap();
        assert!(q.integer_bit);
        assert_eq!(q.fraction_bits, vec![false, false]);
        assert_eq!(q.value(), 1.0);

        assert_eq!(quantize_mean(0.5, 0), Err(ProtocolError::ZeroPrecision));
    }

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize_mean(5.0, 3).unwrap().value(), 1.875);
        assert_eq!(quantize_mean(-0.2, 3).unwrap().value(), 0.0);
        let q = quantize_mean(1.3, 5).unwrap();
        assert_eq!(QuantizedMean::from_bits(&q.to_bits()).unwrap(), q);
    }

    #[test]
    fn uint_roundtrip() {
        assert_eq!(uint_to_bits(5, 4), vec![false, true, false, true]);
        assert_eq!(bits_to_uint(&uint_to_bits(9, 4)), 9);
    }

    #[test]
    fn plan_keeps_bystanders_home() {
        let plan = plan_exchange(4, 2, 0, &[true, false]).unwrap();
        assert_eq!(plan.actions, vec![vec![0, 1, 0, 3], vec![0, 1, 2, 3]]);
        assert!(plan_exchange(2, 0, 3, &[true]).is_err());
    }
}
