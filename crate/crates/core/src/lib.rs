//! Decentralized multi-player bandits where collisions lower, rather than erase, the
//! reward: a deterministic simulator, the EC3 learning and collision-communication
//! protocol, practical channel codes for the implicit collision channel, and the
//! channel- and regret-theoretic calculators used to read the results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coding;
pub mod ec3;
pub mod env;
pub mod harness;
pub mod protocol;
