//! Channel and regret calculators. Rates, capacities and exponents are in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::normal_cdf;
use crate::env::{BanditInstance, RewardSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("crossover probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("slack {phi} must lie strictly between 0 and the capacity {capacity}")]
    BadSlack { phi: f64, capacity: f64 },
    #[error("channel has zero capacity")]
    UselessChannel,
    #[error("arm gap {0} is not positive")]
    DegenerateGap(f64),
    #[error("log has {log} players per slot, instance has {players}")]
    LogMismatch { log: usize, players: usize },
    #[error("log action {arm} is out of range")]
    LogArm { arm: usize },
    #[error("stride must be at least 1")]
    ZeroStride,
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

/// Binary-input binary-output channel. Input 1 is a collision; `p0` is the chance a 0 is
/// read as 1 and `p1` the chance a 1 is read as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub p0: f64,
    pub p1: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximizes a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

impl ChannelModel {
    pub fn new(p0: f64, p1: f64) -> Result<Self, AnalysisError> {
        for p in [p0, p1] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AnalysisError::BadProbability(p));
            }
        }
        Ok(ChannelModel { p0, p1 })
    }

    pub fn symmetric(p: f64) -> Result<Self, AnalysisError> {
        Self::new(p, p)
    }

    /// Worst-case Gaussian channel implied by the global bounds: both crossovers equal
    /// `Φ(−(μ_min − ν_max) / 2σ)`.
    pub fn from_bounds(mu_min: f64, nu_max: f64, sigma: f64) -> Self {
        let p = if sigma > 0.0 {
            normal_cdf(-(mu_min - nu_max) / (2.0 * sigma))
        } else {
            0.0
        };
        ChannelModel { p0: p, p1: p }
    }

    pub fn for_instance(instance: &BanditInstance) -> Self {
        Self::from_bounds(instance.mu_min(), instance.nu_max(), instance.sigma())
    }

    pub fn is_symmetric(&self) -> bool {
        self.p0 == self.p1
    }

    /// Mutual information for `P(input = 1) = q`.
    pub fn mutual_information(&self, q: f64) -> f64 {
        let out1 = (1.0 - q) * self.p0 + q * (1.0 - self.p1);
        binary_entropy(out1) - (1.0 - q) * binary_entropy(self.p0) - q * binary_entropy(self.p1)
    }

    pub fn capacity(&self) -> f64 {
        if self.is_symmetric() {
            std::f64::consts::LN_2 - binary_entropy(self.p0)
        } else {
            golden_max(|q| self.mutual_information(q), 0.0, 1.0, 1e-10).1.max(0.0)
        }
    }

    /// Gallager's `E₀(ρ)` for the uniform input distribution.
    pub fn e0(&self, rho: f64) -> f64 {
        let s = 1.0 / (1.0 + rho);
        let rows = [[1.0 - self.p0, self.p0], [self.p1, 1.0 - self.p1]];
        let total: f64 = (0..2)
            .map(|y| {
                let inner: f64 = rows.iter().map(|r| 0.5 * r[y].powf(s)).sum();
                inner.powf(1.0 + rho)
            })
            .sum();
        -total.ln()
    }

    /// Random coding exponent `E_r(R) = max_{ρ∈[0,1]} E₀(ρ) − ρR`.
    pub fn error_exponent(&self, rate: f64) -> f64 {
        let f = |rho: f64| self.e0(rho) - rho * rate;
        let grid = 100;
        let (mut best_i, mut best) = (0usize, f(0.0));
        for i in 1..=grid {
            let v = f(i as f64 / grid as f64);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let lo = best_i.saturating_sub(1) as f64 / grid as f64;
        let hi = (best_i + 1).min(grid) as f64 / grid as f64;
        let (_, refined) = golden_max(f, lo, hi, 1e-9);
        best.max(refined).max(0.0)
    }
}

/// Block length from the closed form `⌈max{L/(C−φ), ln T / E_r(C−φ)}⌉`, with φ = C/2
/// when `phi` is `None`.
pub fn optimal_block_length(
    channel: &ChannelModel,
    l: usize,
    horizon: f64,
    phi: Option<f64>,
) -> Result<u64, AnalysisError> {
    let c = channel.capacity();
    if !(c > 0.0) {
        return Err(AnalysisError::UselessChannel);
    }
    let phi = phi.unwrap_or(c / 2.0);
    if !(phi > 0.0 && phi < c) {
        return Err(AnalysisError::BadSlack { phi, capacity: c });
    }
    let rate = c - phi;
    let exponent = channel.error_exponent(rate);
    let n = (l as f64 / rate).max(horizon.ln() / exponent);
    Ok(n.ceil() as u64)
}

/// Smallest `N` with `N · E_r(L/N) ≥ ln T`. `N·E_r(L/N)` increases with `N`, so the
/// answer is found by doubling then bisection.
pub fn minimal_block_length(channel: &ChannelModel, l: usize, horizon: f64) -> Result<u64, AnalysisError> {
    if !(channel.capacity() > 0.0) {
        return Err(AnalysisError::UselessChannel);
    }
    let target = horizon.ln();
    let ok = |n: u64| n > 0 && n as f64 * channel.error_exponent(l as f64 / n as f64) >= target;
    if ok(1) {
        return Ok(1);
    }
    let mut hi = 2u64;
    while !ok(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn gaussian_kl(a: f64, b: f64, sigma: f64) -> f64 {
    (a - b).powi(2) / (2.0 * sigma * sigma)
}

pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x <= 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

fn source_kl(source: &RewardSource, a: f64, b: f64, sigma: f64) -> f64 {
    match source {
        RewardSource::Gaussian { sigma: s, .. } => gaussian_kl(a, b, *s),
        RewardSource::Bernoulli { .. } => bernoulli_kl(a, b),
        RewardSource::Trace { .. } => gaussian_kl(a, b, sigma),
    }
}

/// `Σ_{k>M} (μ_(M) − μ_(k)) / kl(μ_(k), μ_(M))`, the multiplier of `ln T` in the
/// centralized lower bound.
pub fn lower_bound_coefficient(instance: &BanditInstance) -> Result<f64, AnalysisError> {
    let m = instance.num_players();
    let mu = instance.mu_sorted();
    let ranking = instance.ranking();
    let mut total = 0.0;
    for j in m..instance.num_arms() {
        let gap = mu[m - 1] - mu[j];
        if !(gap > 0.0) {
            return Err(AnalysisError::DegenerateGap(gap));
        }
        let arm = instance.arm(ranking[j]);
        let kl = source_kl(&arm.no_collision, mu[j], mu[m - 1], instance.sigma());
        total += gap / kl;
    }
    Ok(total)
}

pub fn centralized_lower_bound(instance: &BanditInstance, horizon: f64) -> Result<f64, AnalysisError> {
    Ok(lower_bound_coefficient(instance)? * horizon.ln())
}

/// The four terms of the no-sensing regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub exploration: f64,
    pub statistics: f64,
    pub control: f64,
    pub atypical: f64,
    pub total: f64,
}

/// Evaluates the closed-form upper bound. The exploration term is multiplied by σ²
/// since its constants were derived for σ = 1.
pub fn regret_upper_bound(
    instance: &BanditInstance,
    horizon: f64,
    channel: &ChannelModel,
    phi: Option<f64>,
) -> Result<UpperBound, AnalysisError> {
    let (m, k) = (instance.num_players() as f64, instance.num_arms() as f64);
    let mu = instance.mu_sorted();
    let mi = instance.num_players();
    let c8 = 8.0 * 6f64.sqrt();
    let ln_t = horizon.ln();
    let sigma2 = instance.sigma().powi(2);

    let mut exploration = 0.0;
    for &mu_k in &mu[mi..] {
        let gap = mu[mi - 1] - mu_k;
        if !(gap > 0.0) {
            return Err(AnalysisError::DegenerateGap(gap));
        }
        exploration += c8 * ln_t / gap;
    }
    exploration *= 113.0 * sigma2;

    let (log_delta, l_h) = match instance.delta() {
        Some(d) => (
            (c8 / d).log2().max(0.0),
            1 + (8.0 * 3f64.sqrt() / d).log2().ceil().max(0.0) as usize,
        ),
        None => (0.0, 1),
    };
    let dc = instance.delta_c();
    let w = (instance.num_arms() as f64).log2().ceil() as usize;
    let n_stats = optimal_block_length(channel, l_h, horizon, phi)? as f64;
    let n_ctrl = optimal_block_length(channel, w, horizon, phi)? as f64;

    let statistics = 2.0 * log_delta * m * m * k * dc * n_stats;
    let control = (4.0 * m * m * log_delta + 2.0 * m * k + m * m * k) * dc * n_ctrl;
    let atypical = 6.0 * m * m * k * dc * horizon.log2();
    Ok(UpperBound {
        exploration,
        statistics,
        control,
        atypical,
        total: exploration + statistics + control + atypical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// The player finished initialization holding this estimate of M.
    InitDone { m_hat: usize },
    PhaseStart { phase: u32 },
    /// A message this player decoded differs from what was sent.
    DecodeError,
    /// The player fixated on an arm for the rest of the horizon.
    Exploit { arm: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub slot: u64,
    pub player: usize,
    pub kind: EventKind,
}

/// Joint actions and rewards of a run, `[slot][player]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<Vec<f64>>,
}

/// Cumulative regret sampled every `stride` slots (and at the last slot).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub stride: u64,
    /// Slots elapsed at each sample; the first sample is `t = 0`.
    pub t: Vec<u64>,
    /// Mean-credit regret.
    pub pseudo: Vec<f64>,
    /// Regret against realized rewards.
    pub realized: Vec<f64>,
    /// Cumulative (slot, arm) pairs with two or more players.
    pub collisions: Vec<u64>,
    pub decode_errors: Vec<u64>,
    pub events: Vec<TraceEvent>,
    pub log: Option<ActionLog>,
}

impl RegretTrace {
    pub fn final_pseudo(&self) -> f64 {
        self.pseudo.last().copied().unwrap_or(0.0)
    }
    pub fn final_realized(&self) -> f64 {
        self.realized.last().copied().unwrap_or(0.0)
    }
    pub fn final_collisions(&self) -> u64 {
        self.collisions.last().copied().unwrap_or(0)
    }
    pub fn final_decode_errors(&self) -> u64 {
        self.decode_errors.last().copied().unwrap_or(0)
    }
    pub fn slots(&self) -> u64 {
        self.t.last().copied().unwrap_or(0)
    }

    /// Pseudo-regret at `slot` elapsed slots, interpolating linearly between samples.
    pub fn pseudo_at(&self, slot: u64) -> f64 {
        match self.t.binary_search(&slot) {
            Ok(i) => self.pseudo[i],
            Err(0) => 0.0,
            Err(i) if i >= self.t.len() => self.final_pseudo(),
            Err(i) => {
                let (t0, t1) = (self.t[i - 1] as f64, self.t[i] as f64);
                let w = (slot as f64 - t0) / (t1 - t0);
                self.pseudo[i - 1] + w * (self.pseudo[i] - self.pseudo[i - 1])
            }
        }
    }
}

/// Accumulates per-slot regret into a [`RegretTrace`].
#[derive(Debug, Clone)]
pub struct TraceBuilder {
    trace: RegretTrace,
    slots: u64,
    total: u64,
    pseudo: f64,
    realized: f64,
    collisions: u64,
    decode_errors: u64,
}

impl TraceBuilder {
    /// `total` is the number of slots that will be pushed; the last one is always sampled.
    pub fn new(stride: u64, total: u64) -> Self {
        let mut trace = RegretTrace {
            stride,
            ..Default::default()
        };
        trace.t.push(0);
        trace.pseudo.push(0.0);
        trace.realized.push(0.0);
        trace.collisions.push(0);
        trace.decode_errors.push(0);
        TraceBuilder {
            trace,
            slots: 0,
            total,
            pseudo: 0.0,
            realized: 0.0,
            collisions: 0,
            decode_errors: 0,
        }
    }

    pub fn push_slot(&mut self, pseudo: f64, realized: f64, collisions: u64) {
        self.pseudo += pseudo;
        self.realized += realized;
        self.collisions += collisions;
        self.slots += 1;
        if self.slots.is_multiple_of(self.trace.stride) || self.slots == self.total {
            self.trace.t.push(self.slots);
            self.trace.pseudo.push(self.pseudo);
            self.trace.realized.push(self.realized);
            self.trace.collisions.push(self.collisions);
            self.trace.decode_errors.push(self.decode_errors);
        }
    }

    /// Sets the cumulative decode-error count reported from the next sample on.
    pub fn set_decode_errors(&mut self, total: u64) {
        self.decode_errors = total;
    }

    pub fn push_event(&mut self, event: TraceEvent) {
        self.trace.events.push(event);
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn finish(mut self, log: Option<ActionLog>) -> RegretTrace {
        if *self.trace.t.last().unwrap() != self.slots {
            self.trace.t.push(self.slots);
            self.trace.pseudo.push(self.pseudo);
            self.trace.realized.push(self.realized);
            self.trace.collisions.push(self.collisions);
            self.trace.decode_errors.push(self.decode_errors);
        }
        self.trace.log = log;
        self.trace
    }
}

/// Per-slot regret terms for one joint action: (pseudo, realized, colliding arms).
pub fn slot_terms(instance: &BanditInstance, actions: &[usize], rewards: &[f64], occupancy: &mut [usize]) -> (f64, f64, u64) {
    occupancy.iter_mut().for_each(|c| *c = 0);
    for &a in actions {
        occupancy[a] += 1;
    }
    let pseudo = instance.slot_regret(actions, occupancy);
    let realized = instance.optimal_reward() - rewards.iter().sum::<f64>();
    let collisions = occupancy.iter().filter(|&&c| c > 1).count() as u64;
    (pseudo, realized, collisions)
}

/// Recomputes the regret trace of a logged run. Without logged rewards the realized
/// column is NaN.
pub fn regret_trace(instance: &BanditInstance, log: &ActionLog, stride: u64) -> Result<RegretTrace, AnalysisError> {
    if stride == 0 {
        return Err(AnalysisError::ZeroStride);
    }
    let players = instance.num_players();
    let mut occupancy = vec![0usize; instance.num_arms()];
    let mut builder = TraceBuilder::new(stride, log.actions.len() as u64);
    let no_rewards = vec![f64::NAN; players];
    for (i, actions) in log.actions.iter().enumerate() {
        if actions.len() != players {
            return Err(AnalysisError::LogMismatch {
                log: actions.len(),
                players,
            });
        }
        if let Some(&arm) = actions.iter().find(|&&a| a >= instance.num_arms()) {
            return Err(AnalysisError::LogArm { arm });
        }
        let rewards = log.rewards.get(i).unwrap_or(&no_rewards);
        let (p, r, c) = slot_terms(instance, actions, rewards, &mut occupancy);
        builder.push_slot(p, r, c);
    }
    Ok(builder.finish(None))
}
