//! The EC3 algorithm: initialization, then alternating exploration and communication
//! phases until the best arms are allocated, then exploitation.
//!
//! Every player runs its own copy of the protocol and decides each slot from its own
//! state only; players stay synchronized because each one derives the same schedule from
//! the messages it decoded. A decoding error can therefore desynchronize players, which
//! the simulator records rather than prevents.

mod player;
pub mod rules;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use player::{Boundary, PhaseState, Role};
pub use rules::{accept_reject, aggregate, next_assignment, Assignment};

use crate::analysis::{slot_terms, ActionLog, RegretTrace, TraceBuilder};
use crate::coding::CodeScheme;
use crate::env::{BanditInstance, EnvError, SlotBuffer};
use player::{Context, Player};

#[derive(Debug, Error)]
pub enum Ec3Error {
    #[error("start slot {start} plus {slots} slots exceeds the horizon {horizon}")]
    Window { start: u64, slots: u64, horizon: u64 },
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Identifies one message exchange of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageTag {
    /// The player on `arm` signals its presence to the leader.
    InitSignal { arm: usize },
    /// The leader announces M̂ to follower `to`.
    InitCount { to: usize },
    Stats { phase: u32, from: usize, arm: usize },
    Counts { phase: u32, to: usize },
    Sets { phase: u32, to: usize },
}

/// Replaces what the receiver decodes for one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub tag: MessageTag,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Receivers decode the rewards they observed.
    #[default]
    Noisy,
    /// Receivers get exactly what was sent; the slots are still spent.
    Oracle,
}

/// One accept/reject round as seen by the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub phase: u32,
    pub t_p: u64,
    pub radius: f64,
    pub active: Vec<usize>,
    pub means: Vec<f64>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scheme: CodeScheme,
    pub channel: ChannelMode,
    /// Regret is sampled every `stride` slots.
    pub stride: u64,
    pub record_log: bool,
    pub stop_after_init: bool,
    pub faults: Vec<Fault>,
    /// The horizon the players plan for; defaults to the instance horizon.
    pub planning_horizon: Option<u64>,
    /// Environment slot of the players' slot 0.
    pub start_slot: u64,
    /// Slots to simulate; defaults to the rest of the instance horizon.
    pub slots: Option<u64>,
}

impl RunOptions {
    pub fn new(scheme: CodeScheme) -> Self {
        RunOptions {
            scheme,
            channel: ChannelMode::Noisy,
            stride: 1000,
            record_log: false,
            stop_after_init: false,
            faults: Vec::new(),
            planning_horizon: None,
            start_slot: 0,
            slots: None,
        }
    }
}

/// Collision audit by what the colliding players were doing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    /// Exactly one sender on the receiver's arm.
    pub intended: u64,
    /// Collisions among communicating or idle players other than the intended one.
    pub unintended_comm: u64,
    /// Collisions involving a player in an exploration phase.
    pub exploration: u64,
    pub exploitation: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: RegretTrace,
    /// Each player's estimate of M (`None` if initialization never finished).
    pub m_hat: Vec<Option<usize>>,
    /// Each player's exploitation arm.
    pub exploit_arms: Vec<Option<usize>>,
    /// Slot at which the last player started exploiting.
    pub exploit_start: Option<u64>,
    /// Every player exploits a distinct arm of the true top M.
    pub converged: bool,
    pub boundaries: Vec<Vec<Boundary>>,
    pub decisions: Vec<Decision>,
    pub final_states: Vec<PhaseState>,
    pub audit: Audit,
    /// Active-player pulls of each arm during exploration.
    pub explore_pulls: Vec<u64>,
    pub messages: u64,
    pub decode_errors: u64,
}

impl RunResult {
    /// Explore/communicate rounds the leader completed.
    pub fn rounds(&self) -> usize {
        self.decisions.len()
    }

    /// Whether every player recorded the same phase-boundary slots.
    pub fn synchronized(&self) -> bool {
        let key = |b: &Vec<Boundary>| b.iter().map(|x| (x.phase, x.slot)).collect::<Vec<_>>();
        self.boundaries.windows(2).all(|w| key(&w[0]) == key(&w[1]))
    }
}

/// Runs EC3 on `instance`.
pub fn run_ec3(instance: &BanditInstance, opts: &RunOptions) -> Result<RunResult, Ec3Error> {
    if opts.stride == 0 {
        return Err(Ec3Error::ZeroStride);
    }
    let horizon = instance.horizon();
    let slots = opts.slots.unwrap_or(horizon.saturating_sub(opts.start_slot));
    if opts.start_slot.checked_add(slots).is_none_or(|end| end > horizon) {
        return Err(Ec3Error::Window {
            start: opts.start_slot,
            slots,
            horizon,
        });
    }
    let plan_t = opts.planning_horizon.unwrap_or(horizon);
    let (m, k) = (instance.num_players(), instance.num_arms());

    let mut players: Vec<Player> = (0..m)
        .map(|i| {
            let mut p = Player::new(i, k, plan_t, instance.sigma(), &opts.scheme);
            p.stop_after_init = opts.stop_after_init;
            p
        })
        .collect();
    let mut ctx = Context {
        scheme: &opts.scheme,
        sensing: instance.sensing(),
        channel: opts.channel,
        faults: &opts.faults,
        mailbox: HashMap::new(),
        events: Vec::new(),
        decode_errors: 0,
        messages: 0,
        decisions: Vec::new(),
    };

    let mut builder = TraceBuilder::new(opts.stride, slots);
    let mut log = opts.record_log.then(ActionLog::default);
    let mut buf = SlotBuffer::new(instance);
    let mut occupancy = vec![0usize; k];
    let mut actions = vec![0usize; m];
    let mut roles = vec![Role::Idle; m];
    let mut audit = Audit::default();
    let mut explore_pulls = vec![0u64; k];

    for t in 0..slots {
        for (i, p) in players.iter_mut().enumerate() {
            (actions[i], roles[i]) = p.act(t, &mut ctx);
        }
        if opts.stop_after_init && players.iter().all(Player::init_done) {
            break;
        }
        instance.step_into(opts.start_slot + t, &actions, &mut buf)?;
        for (i, p) in players.iter_mut().enumerate() {
            p.observe(buf.rewards[i], buf.flags[i], &mut ctx);
            if roles[i] == Role::Explore {
                explore_pulls[actions[i]] += 1;
            }
        }
        builder.set_decode_errors(ctx.decode_errors);
        let (pseudo, realized, collided) = slot_terms(instance, &actions, &buf.rewards, &mut occupancy);
        if collided > 0 {
            audit_slot(&actions, &roles, &occupancy, &mut audit);
        }
        builder.push_slot(pseudo, realized, collided);
        if let Some(log) = log.as_mut() {
            log.actions.push(actions.clone());
            log.rewards.push(buf.rewards.clone());
        }
    }

    let mut trace = builder.finish(log);
    trace.events = std::mem::take(&mut ctx.events);
    let exploit_arms: Vec<Option<usize>> = players.iter().map(|p| p.exploit).collect();
    let exploit_start = players
        .iter()
        .map(|p| p.exploit_slot)
        .collect::<Option<Vec<u64>>>()
        .and_then(|v| v.into_iter().max());
    let converged = !opts.stop_after_init && {
        let arms: Option<Vec<usize>> = exploit_arms.iter().copied().collect();
        arms.is_some_and(|mut a| {
            a.sort_unstable();
            a == instance.optimal_arms()
        })
    };
    Ok(RunResult {
        m_hat: players.iter().map(|p| p.m_hat).collect(),
        exploit_arms,
        exploit_start,
        converged,
        boundaries: players.iter().map(|p| p.boundaries.clone()).collect(),
        decisions: ctx.decisions,
        final_states: players.iter().map(|p| p.state.clone()).collect(),
        audit,
        explore_pulls,
        messages: ctx.messages,
        decode_errors: ctx.decode_errors,
        trace,
    })
}

/// Classifies every collided arm of one slot.
fn audit_slot(actions: &[usize], roles: &[Role], occupancy: &[usize], audit: &mut Audit) {
    let mut seen: Vec<usize> = Vec::new();
    for &arm in actions {
        if occupancy[arm] < 2 || seen.contains(&arm) {
            continue;
        }
        seen.push(arm);
        let on_arm: Vec<Role> = actions
            .iter()
            .zip(roles)
            .filter(|(&a, _)| a == arm)
            .map(|(_, &r)| r)
            .collect();
        let intended = on_arm.len() == 2
            && on_arm.contains(&Role::Listen)
            && on_arm.contains(&Role::Send { target: arm });
        if intended {
            audit.intended += 1;
        } else if on_arm.iter().any(|r| matches!(r, Role::Explore | Role::Hold)) {
            audit.exploration += 1;
        } else if on_arm.contains(&Role::Exploit) {
            audit.exploitation += 1;
        } else {
            audit.unintended_comm += 1;
        }
    }
}

/// Runs only the initialization and returns each player's estimate of M.
pub fn estimate_m(instance: &BanditInstance, opts: &RunOptions) -> Result<Vec<Option<usize>>, Ec3Error> {
    let opts = RunOptions {
        stop_after_init: true,
        ..opts.clone()
    };
    Ok(run_ec3(instance, &opts)?.m_hat)
}
