//! One decentralized player. Each player plans its own slots from its own state; the
//! only thing players share is the environment.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::rules::{self, Assignment};
use super::{ChannelMode, Decision, Fault, MessageTag};
use crate::analysis::{EventKind, TraceEvent};
use crate::coding::CodeScheme;
use crate::env::SensingMode;
use crate::protocol::{bits_to_uint, quantize_mean, uint_to_bits, QuantizedMean};

/// Per-player bookkeeping of the explore/communicate loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: u32,
    /// Active arms in agreed order.
    pub active: Vec<usize>,
    /// Players still exploring.
    pub m_p: usize,
    pub sequence: Vec<usize>,
    pub fixed: Option<usize>,
    /// Pulls of each active arm summed over players.
    pub t_p: u64,
    /// This player's pulls of each active arm.
    pub t_own: u64,
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
    pub radius: f64,
    pub q: usize,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
}

impl PhaseState {
    fn new(num_arms: usize) -> Self {
        PhaseState {
            phase: 0,
            active: (0..num_arms).collect(),
            m_p: 0,
            sequence: Vec::new(),
            fixed: None,
            t_p: 0,
            t_own: 0,
            sums: vec![0.0; num_arms],
            counts: vec![0; num_arms],
            radius: f64::INFINITY,
            q: 1,
            accepted: Vec::new(),
            rejected: Vec::new(),
        }
    }

    pub fn mean(&self, arm: usize) -> f64 {
        if self.counts[arm] == 0 {
            0.0
        } else {
            self.sums[arm] / self.counts[arm] as f64
        }
    }

    /// Bits per quantized mean, `1 + Q_p`.
    pub fn message_bits(&self) -> usize {
        1 + self.q
    }
}

/// A player's view at the start of a phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub phase: u32,
    pub slot: u64,
    pub active: Vec<usize>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
}

/// What a player is doing in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Active player sampling an active arm.
    Explore,
    /// Fixated player sitting out an exploration phase.
    Hold,
    Idle,
    Send { target: usize },
    Listen,
    Exploit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Explore,
    Hold,
    Idle,
}

#[derive(Debug, Clone)]
enum Step {
    InitTally,
    FollowerInitTally,
    InitEnd,
    Communicate,
    Decide,
    FollowerCounts,
    Apply { accepted: Vec<usize>, rejected: Vec<usize> },
    FollowerApply,
}

#[derive(Debug, Clone)]
enum Task {
    Pull {
        arm: usize,
        left: u64,
        purpose: Purpose,
    },
    Send {
        target: usize,
        channel: Vec<bool>,
        message: Vec<bool>,
        pos: usize,
        posted: bool,
    },
    Listen {
        tag: MessageTag,
        bits: usize,
        slots: usize,
        samples: Vec<f64>,
        flags: Vec<bool>,
        start: Option<u64>,
    },
    Then(Step),
}

/// State shared by the simulator, not by the players' decision logic: the record of what
/// was actually sent (for error accounting and the oracle channel) and the event log.
pub(crate) struct Context<'a> {
    pub scheme: &'a CodeScheme,
    pub sensing: SensingMode,
    pub channel: ChannelMode,
    pub faults: &'a [Fault],
    pub mailbox: HashMap<(usize, u64), Vec<bool>>,
    pub events: Vec<TraceEvent>,
    pub decode_errors: u64,
    pub messages: u64,
    pub decisions: Vec<Decision>,
}

impl Context<'_> {
    fn event(&mut self, slot: u64, player: usize, kind: EventKind) {
        self.events.push(TraceEvent { slot, player, kind });
    }
}

pub(crate) struct Player {
    me: usize,
    num_arms: usize,
    horizon: u64,
    sigma: f64,
    unit: u64,
    pub m_hat: Option<usize>,
    pub state: PhaseState,
    /// Leader only: each player's pulls of an active arm so far.
    weights: Vec<u64>,
    tasks: VecDeque<Task>,
    inbox: Vec<Vec<bool>>,
    pending_counts: (usize, usize),
    pub exploit: Option<usize>,
    pub exploit_slot: Option<u64>,
    pub boundaries: Vec<Boundary>,
    pub stop_after_init: bool,
}

impl Player {
    pub fn new(me: usize, num_arms: usize, horizon: u64, sigma: f64, scheme: &CodeScheme) -> Self {
        let mut p = Player {
            me,
            num_arms,
            horizon,
            sigma,
            unit: rules::explore_unit(sigma, horizon),
            m_hat: None,
            state: PhaseState::new(num_arms),
            weights: Vec::new(),
            tasks: VecDeque::new(),
            inbox: Vec::new(),
            pending_counts: (0, 0),
            exploit: None,
            exploit_slot: None,
            boundaries: Vec::new(),
            stop_after_init: false,
        };
        p.plan_init(scheme);
        p
    }

    pub fn init_done(&self) -> bool {
        self.m_hat.is_some()
    }

    fn idle(&mut self, slots: usize) {
        if slots > 0 {
            self.tasks.push_back(Task::Pull {
                arm: self.me,
                left: slots as u64,
                purpose: Purpose::Idle,
            });
        }
    }

    fn send(&mut self, scheme: &CodeScheme, target: usize, message: Vec<bool>) {
        if message.is_empty() {
            return;
        }
        let channel = scheme.encode(&message).expect("message is nonempty");
        self.tasks.push_back(Task::Send {
            target,
            channel,
            message,
            pos: 0,
            posted: false,
        });
    }

    fn listen(&mut self, scheme: &CodeScheme, tag: MessageTag, bits: usize) {
        if bits == 0 {
            return;
        }
        self.tasks.push_back(Task::Listen {
            tag,
            bits,
            slots: scheme.code_length(bits),
            samples: Vec::new(),
            flags: Vec::new(),
            start: None,
        });
    }

    fn then(&mut self, step: Step) {
        self.tasks.push_back(Task::Then(step));
    }

    /// Arms 2..K signal their presence to arm 1 in turn, then the leader announces M̂.
    fn plan_init(&mut self, scheme: &CodeScheme) {
        let signal = scheme.code_length(1);
        for k in 1..self.num_arms {
            if self.me == 0 {
                self.listen(scheme, MessageTag::InitSignal { arm: k }, 1);
            } else if self.me == k {
                self.send(scheme, 0, vec![true]);
            } else {
                self.idle(signal);
            }
        }
        if self.me == 0 {
            self.then(Step::InitTally);
        } else {
            let w = rules::id_width(self.num_arms);
            self.idle((self.me - 1) * scheme.code_length(w));
            self.listen(scheme, MessageTag::InitCount { to: self.me }, w);
            self.then(Step::FollowerInitTally);
        }
    }

    /// Picks this slot's arm, running any bookkeeping steps that are due.
    pub fn act(&mut self, t: u64, ctx: &mut Context) -> (usize, Role) {
        loop {
            let Some(task) = self.tasks.front_mut() else {
                return (self.exploit.unwrap_or(self.me), Role::Exploit);
            };
            match task {
                Task::Then(_) => {
                    let Some(Task::Then(step)) = self.tasks.pop_front() else {
                        unreachable!()
                    };
                    self.run(step, t, ctx);
                }
                Task::Pull { left: 0, .. } => {
                    self.tasks.pop_front();
                }
                Task::Pull { arm, purpose, .. } => {
                    let role = match purpose {
                        Purpose::Explore => Role::Explore,
                        Purpose::Hold => Role::Hold,
                        Purpose::Idle => Role::Idle,
                    };
                    return (*arm, role);
                }
                Task::Send {
                    target,
                    channel,
                    message,
                    pos,
                    posted,
                } => {
                    if !*posted {
                        *posted = true;
                        ctx.messages += 1;
                        ctx.mailbox.insert((*target, t), message.clone());
                    }
                    let arm = if channel[*pos] { *target } else { self.me };
                    return (arm, Role::Send { target: *target });
                }
                Task::Listen { start, .. } => {
                    if start.is_none() {
                        *start = Some(t);
                    }
                    return (self.me, Role::Listen);
                }
            }
        }
    }

    /// Records the outcome of the slot chosen by [`act`](Self::act).
    pub fn observe(&mut self, reward: f64, flag: bool, ctx: &mut Context) {
        let done = match self.tasks.front_mut() {
            None => false,
            Some(Task::Pull { arm, left, purpose }) => {
                if *purpose == Purpose::Explore {
                    self.state.sums[*arm] += reward;
                    self.state.counts[*arm] += 1;
                }
                *left -= 1;
                *left == 0
            }
            Some(Task::Send { channel, pos, .. }) => {
                *pos += 1;
                *pos == channel.len()
            }
            Some(Task::Listen {
                slots,
                samples,
                flags,
                ..
            }) => {
                samples.push(reward);
                flags.push(flag);
                samples.len() == *slots
            }
            Some(Task::Then(_)) => unreachable!("steps never occupy a slot"),
        };
        if done {
            if let Some(Task::Listen {
                tag,
                bits,
                samples,
                flags,
                start,
                ..
            }) = self.tasks.pop_front()
            {
                let start = start.expect("listen started");
                let decoded = self.decode(ctx, tag, bits, &samples, &flags, start);
                self.inbox.push(decoded);
            }
        }
    }

    fn decode(
        &self,
        ctx: &mut Context,
        tag: MessageTag,
        bits: usize,
        samples: &[f64],
        flags: &[bool],
        start: u64,
    ) -> Vec<bool> {
        let truth = ctx
            .mailbox
            .remove(&(self.me, start))
            .unwrap_or_else(|| vec![false; bits]);
        let decoded = if let Some(f) = ctx.faults.iter().find(|f| f.tag == tag) {
            let mut b = f.bits.clone();
            b.resize(bits, false);
            b
        } else if ctx.channel == ChannelMode::Oracle {
            truth.clone()
        } else {
            let out = match ctx.sensing {
                SensingMode::CollisionSensing => ctx.scheme.decode_flags(bits, flags),
                SensingMode::NoSensing => ctx.scheme.decode(bits, samples),
            };
            out.expect("listen collects exactly one frame")
        };
        if decoded != truth {
            ctx.decode_errors += 1;
            ctx.event(start, self.me, EventKind::DecodeError);
        }
        decoded
    }

    fn run(&mut self, step: Step, t: u64, ctx: &mut Context) {
        let scheme = ctx.scheme;
        match step {
            Step::InitTally => {
                let m_hat = 1 + self.inbox.drain(..).filter(|b| b.first() == Some(&true)).count();
                let w = rules::id_width(self.num_arms);
                for m in 1..m_hat {
                    self.send(scheme, m, uint_to_bits((m_hat - 1) as u64, w));
                }
                self.m_hat = Some(m_hat);
                self.then(Step::InitEnd);
            }
            Step::FollowerInitTally => {
                let bits = self.inbox.pop().unwrap_or_default();
                self.inbox.clear();
                let m_hat = bits_to_uint(&bits) as usize + 1;
                let w = rules::id_width(self.num_arms);
                let after = (m_hat - 1).saturating_sub(self.me);
                self.idle(after * scheme.code_length(w));
                self.m_hat = Some(m_hat);
                self.then(Step::InitEnd);
            }
            Step::InitEnd => {
                let m_hat = self.m_hat.expect("tallied");
                ctx.event(t, self.me, EventKind::InitDone { m_hat });
                if self.stop_after_init {
                    self.enter_exploit(self.me, t, ctx);
                    return;
                }
                if self.me >= m_hat {
                    self.enter_exploit(self.me, t, ctx);
                    return;
                }
                self.state.phase = 1;
                self.state.m_p = m_hat;
                self.state.sequence = rules::rotation(&self.state.active, self.me);
                self.weights = vec![0; m_hat];
                self.start_phase(t, ctx);
            }
            Step::Communicate => self.communicate(scheme),
            Step::Decide => self.decide(scheme, ctx),
            Step::FollowerCounts => {
                let w_c = rules::count_width(self.num_arms);
                let mut bits = self.inbox.pop().unwrap_or_default();
                bits.resize(2 * w_c, false);
                self.inbox.clear();
                let k_p = self.state.active.len();
                let na = (bits_to_uint(&bits[..w_c]) as usize).min(k_p);
                let nr = (bits_to_uint(&bits[w_c..]) as usize).min(k_p - na);
                let m_hat = self.m_hat.expect("initialized");
                let len = (na + nr) * rules::id_width(self.num_arms);
                let slots = if len == 0 { 0 } else { scheme.code_length(len) };
                for i in 1..m_hat {
                    if i == self.me {
                        self.listen(scheme, MessageTag::Sets { phase: self.state.phase, to: i }, len);
                    } else {
                        self.idle(slots);
                    }
                }
                self.pending_counts = (na, nr);
                self.then(Step::FollowerApply);
            }
            Step::FollowerApply => {
                let (na, nr) = std::mem::take(&mut self.pending_counts);
                let bits = if na + nr == 0 {
                    Vec::new()
                } else {
                    self.inbox.pop().unwrap_or_default()
                };
                self.inbox.clear();
                let w = rules::id_width(self.num_arms);
                let ids: Vec<usize> = bits.chunks(w).map(|c| bits_to_uint(c) as usize).collect();
                let mut seen = vec![false; self.num_arms];
                let mut keep = |id: usize| {
                    let ok = id < self.num_arms && !seen[id] && self.state.active.contains(&id);
                    if ok {
                        seen[id] = true;
                    }
                    ok
                };
                let accepted: Vec<usize> = ids.iter().take(na).copied().filter(|&i| keep(i)).collect();
                let rejected: Vec<usize> = ids.iter().skip(na).copied().filter(|&i| keep(i)).collect();
                self.apply(accepted, rejected, t, ctx);
            }
            Step::Apply { accepted, rejected } => self.apply(accepted, rejected, t, ctx),
        }
    }

    fn start_phase(&mut self, t: u64, ctx: &mut Context) {
        let m_hat = self.m_hat.expect("initialized");
        let st = &self.state;
        self.boundaries.push(Boundary {
            phase: st.phase,
            slot: t,
            active: st.active.clone(),
            accepted: st.accepted.clone(),
            rejected: st.rejected.clone(),
        });
        if st.accepted.len() >= m_hat || st.active.len() <= 1 {
            let arm = st
                .fixed
                .or_else(|| st.active.first().copied())
                .unwrap_or(self.me);
            self.enter_exploit(arm, t, ctx);
            return;
        }
        ctx.event(t, self.me, EventKind::PhaseStart { phase: st.phase });
        let block = rules::block_len(st.phase, self.unit);
        match st.fixed {
            Some(arm) => self.tasks.push_back(Task::Pull {
                arm,
                left: block.saturating_mul(st.active.len() as u64),
                purpose: Purpose::Hold,
            }),
            None => {
                for &arm in &st.sequence {
                    self.tasks.push_back(Task::Pull {
                        arm,
                        left: block,
                        purpose: Purpose::Explore,
                    });
                }
            }
        }
        self.then(Step::Communicate);
    }

    fn enter_exploit(&mut self, arm: usize, t: u64, ctx: &mut Context) {
        self.tasks.clear();
        self.exploit = Some(arm);
        self.exploit_slot = Some(t);
        ctx.event(t, self.me, EventKind::Exploit { arm });
    }

    /// Statistics upload: every follower sends one quantized mean per active arm to the
    /// leader, followers in index order.
    fn communicate(&mut self, scheme: &CodeScheme) {
        let m_hat = self.m_hat.expect("initialized");
        let block = rules::block_len(self.state.phase, self.unit);
        let st = &mut self.state;
        let m_p = st.m_p as u64;
        st.t_p = st.t_p.saturating_add(m_p.saturating_mul(block));
        if st.fixed.is_none() {
            st.t_own = st.t_own.saturating_add(block);
        }
        if self.me == 0 {
            for w in self.weights.iter_mut().take(st.m_p) {
                *w = w.saturating_add(block);
            }
        }
        st.radius = rules::confidence_radius(self.sigma, self.horizon, st.t_p);
        st.q = rules::fraction_bits(st.radius);
        let bits = st.message_bits();
        let phase = st.phase;
        let active = st.active.clone();
        let slots = scheme.code_length(bits);
        for i in 1..m_hat {
            for &arm in &active {
                if self.me == 0 {
                    self.listen(scheme, MessageTag::Stats { phase, from: i, arm }, bits);
                } else if self.me == i {
                    let q = quantize_mean(self.state.mean(arm), self.state.q).expect("q >= 1");
                    self.send(scheme, 0, q.to_bits());
                } else {
                    self.idle(slots);
                }
            }
        }
        if self.me == 0 {
            self.then(Step::Decide);
        } else {
            let w_c = rules::count_width(self.num_arms);
            let slots = scheme.code_length(2 * w_c);
            for i in 1..m_hat {
                if i == self.me {
                    self.listen(scheme, MessageTag::Counts { phase, to: i }, 2 * w_c);
                } else {
                    self.idle(slots);
                }
            }
            self.then(Step::FollowerCounts);
        }
    }

    fn decide(&mut self, scheme: &CodeScheme, ctx: &mut Context) {
        let m_hat = self.m_hat.expect("initialized");
        let st = &self.state;
        let k_p = st.active.len();
        let received: Vec<Vec<bool>> = self.inbox.drain(..).collect();
        let means: Vec<f64> = st
            .active
            .iter()
            .enumerate()
            .map(|(j, &arm)| {
                let mut parts = vec![(st.mean(arm), self.weights[0])];
                for i in 1..m_hat {
                    let v = received
                        .get((i - 1) * k_p + j)
                        .and_then(|b| QuantizedMean::from_bits(b).ok())
                        .map_or(0.0, |q| q.value());
                    parts.push((v, self.weights[i]));
                }
                rules::aggregate(&parts)
            })
            .collect();
        let (acc, rej) = rules::accept_reject(&means, st.radius, st.m_p);
        let accepted: Vec<usize> = acc.iter().map(|&j| st.active[j]).collect();
        let rejected: Vec<usize> = rej.iter().map(|&j| st.active[j]).collect();
        ctx.decisions.push(Decision {
            phase: st.phase,
            t_p: st.t_p,
            radius: st.radius,
            active: st.active.clone(),
            means,
            accepted: accepted.clone(),
            rejected: rejected.clone(),
        });

        let w_c = rules::count_width(self.num_arms);
        let w = rules::id_width(self.num_arms);
        let mut counts = uint_to_bits(accepted.len() as u64, w_c);
        counts.extend(uint_to_bits(rejected.len() as u64, w_c));
        let sets: Vec<bool> = accepted
            .iter()
            .chain(&rejected)
            .flat_map(|&a| uint_to_bits(a as u64, w))
            .collect();
        for i in 1..m_hat {
            self.send(scheme, i, counts.clone());
        }
        for i in 1..m_hat {
            self.send(scheme, i, sets.clone());
        }
        self.then(Step::Apply { accepted, rejected });
    }

    fn apply(&mut self, accepted: Vec<usize>, rejected: Vec<usize>, t: u64, ctx: &mut Context) {
        let m_hat = self.m_hat.expect("initialized");
        let st = &mut self.state;
        st.active.retain(|a| !accepted.contains(a) && !rejected.contains(a));
        st.accepted.extend(accepted);
        st.rejected.extend(rejected);
        st.m_p = m_hat.saturating_sub(st.accepted.len());
        match rules::next_assignment(self.me, m_hat, &st.accepted, &st.active) {
            Assignment::Fixed(arm) => {
                st.fixed = Some(arm);
                st.sequence = vec![arm];
            }
            Assignment::Explore(seq) => st.sequence = seq,
        }
        st.phase += 1;
        self.start_phase(t, ctx);
    }
}
