//! Channel codes for messages carried over the collision channel.
//!
//! Every scheme is an inner code (identity, (7,4) Hamming, or convolutional) whose
//! coded bits are each sent over a group of consecutive slots. The receiver averages
//! the rewards of a group and compares the mean with the threshold θ: a mean above θ
//! reads as bit 0 (no collision), otherwise bit 1.

pub mod conv;
pub mod hamming;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::env::{ArmModel, RewardSource};

pub use conv::ConvCode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mu_min - nu_max must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("coding rate must lie in (0, 1], got {0}")]
    BadRate(f64),
    #[error("repeats per coded bit must be at least 1")]
    ZeroRepeats,
    #[error("threshold {theta} is not strictly between {low} and {high}")]
    ThresholdOutside { theta: f64, low: f64, high: f64 },
    #[error("invalid convolutional generators")]
    BadGenerators,
    #[error("message length and horizon must be at least 1")]
    ZeroLength,
}

/// The inner code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Codec {
    /// One slot per message bit, thresholded directly.
    Uncoded,
    Repetition,
    /// (7,4) Hamming blocks, message zero-padded to a multiple of four bits.
    Hamming,
    /// Terminated convolutional code.
    Convolutional(ConvCode),
}

impl Codec {
    pub fn convolutional() -> Self {
        Codec::Convolutional(ConvCode::default())
    }

    /// Information bits the inner code carries for an `l`-bit message (after padding).
    pub fn info_len(&self, l: usize) -> usize {
        match self {
            Codec::Hamming => l.div_ceil(4) * 4,
            _ => l,
        }
    }

    /// Inner-code output length for an `l`-bit message.
    pub fn coded_len(&self, l: usize) -> usize {
        match self {
            Codec::Uncoded | Codec::Repetition => l,
            Codec::Hamming => 7 * l.div_ceil(4),
            Codec::Convolutional(c) => c.coded_len(l),
        }
    }

    fn inner_encode(&self, bits: &[bool]) -> Vec<bool> {
        match self {
            Codec::Uncoded | Codec::Repetition => bits.to_vec(),
            Codec::Hamming => hamming::encode(bits),
            Codec::Convolutional(c) => c.encode(bits),
        }
    }

    fn inner_decode(&self, hard: &[bool], l: usize) -> Vec<bool> {
        match self {
            Codec::Uncoded | Codec::Repetition => hard.to_vec(),
            Codec::Hamming => hamming::decode(hard, l),
            Codec::Convolutional(c) => c.viterbi(hard, l),
        }
    }
}

/// What the length formulas need to know about the channel and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub horizon: u64,
    pub mu_min: f64,
    pub nu_max: f64,
    pub sigma: f64,
}

impl ChannelParams {
    pub fn gap(&self) -> f64 {
        self.mu_min - self.nu_max
    }
}

/// How many slots a frame occupies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LengthRule {
    /// Lengths that guarantee a message error rate of at most 1/T.
    Theoretical(ChannelParams),
    /// ⌈info bits / R_c⌉ slots, repeats spread as evenly as possible.
    Rate { rate: f64 },
    /// A fixed number of repeats per coded bit.
    Repeats { repeats: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeScheme {
    pub codec: Codec,
    pub lengths: LengthRule,
    /// θ = (μ_min + ν_max) / 2
    pub threshold: f64,
}

/// Slot layout of one coded message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub message_bits: usize,
    /// Slots spent on each coded bit, in transmission order.
    pub repeats: Vec<usize>,
}

impl Frame {
    pub fn slots(&self) -> usize {
        self.repeats.iter().sum()
    }
    pub fn coded_bits(&self) -> usize {
        self.repeats.len()
    }

    fn spread(message_bits: usize, coded: usize, slots: usize) -> Frame {
        if coded == 0 {
            return Frame {
                message_bits,
                repeats: Vec::new(),
            };
        }
        let slots = slots.max(coded);
        let (base, extra) = (slots / coded, slots % coded);
        Frame {
            message_bits,
            repeats: (0..coded).map(|i| base + usize::from(i < extra)).collect(),
        }
    }
}

/// Closed-form code lengths that drive the message error rate below 1/T.
///
/// Repetition: `L·⌈8σ²ln(2LT)/g²⌉`; Hamming: `(7L'/4)·⌈4σ²ln(6L'T)/g²⌉` with `L'` the
/// length padded to a multiple of four; convolutional:
/// `(L/R_conv)·⌈16σ²ln(B_free·2^d_free·L·T)/(d_free·g²)⌉`; uncoded: `L`. Here
/// `g = μ_min − ν_max` and logs are natural.
pub fn code_length(codec: &Codec, l: usize, params: &ChannelParams) -> Result<usize, CodingError> {
    if l == 0 || params.horizon == 0 {
        return Err(CodingError::ZeroLength);
    }
    let gap = params.gap();
    if !(gap > 0.0) {
        return Err(CodingError::NonPositiveGap(gap));
    }
    let s2 = params.sigma * params.sigma;
    let g2 = gap * gap;
    let t = params.horizon as f64;
    let slots = match codec {
        Codec::Uncoded => l,
        Codec::Repetition => {
            let n0 = ceil_count(8.0 * s2 * (2.0 * l as f64 * t).ln() / g2);
            l * n0
        }
        Codec::Hamming => {
            let lp = codec.info_len(l);
            let a = ceil_count(4.0 * s2 * (6.0 * lp as f64 * t).ln() / g2);
            codec.coded_len(l) * a
        }
        Codec::Convolutional(c) => {
            let d = c.d_free() as f64;
            let arg = c.b_free() * 2f64.powf(d) * l as f64 * t;
            let a = ceil_count(16.0 * s2 * arg.ln() / (d * g2));
            c.outputs() * l * a
        }
    };
    Ok(slots.max(codec.coded_len(l)))
}

fn ceil_count(x: f64) -> usize {
    // Guard against values like 2.0000000000000004 from representation error.
    (x - 1e-9).ceil().max(1.0) as usize
}

impl CodeScheme {
    pub fn new(codec: Codec, lengths: LengthRule, threshold: f64) -> Result<Self, CodingError> {
        match lengths {
            LengthRule::Rate { rate } if !(rate > 0.0 && rate <= 1.0) => {
                return Err(CodingError::BadRate(rate))
            }
            LengthRule::Repeats { repeats: 0 } => return Err(CodingError::ZeroRepeats),
            LengthRule::Theoretical(p) if !(p.gap() > 0.0) => {
                return Err(CodingError::NonPositiveGap(p.gap()))
            }
            _ => {}
        }
        Ok(CodeScheme {
            codec,
            lengths,
            threshold,
        })
    }

    pub fn uncoded(threshold: f64) -> Self {
        CodeScheme {
            codec: Codec::Uncoded,
            lengths: LengthRule::Repeats { repeats: 1 },
            threshold,
        }
    }

    pub fn frame(&self, message_bits: usize) -> Frame {
        let codec = &self.codec;
        let coded = codec.coded_len(message_bits);
        if message_bits == 0 {
            return Frame::spread(0, 0, 0);
        }
        let slots = match (codec, &self.lengths) {
            (Codec::Uncoded, _) => message_bits,
            (_, LengthRule::Repeats { repeats }) => coded * repeats,
            (_, LengthRule::Rate { rate }) => {
                ceil_count(codec.info_len(message_bits) as f64 / rate)
            }
            (_, LengthRule::Theoretical(p)) => {
                code_length(codec, message_bits, p).expect("validated at construction")
            }
        };
        Frame::spread(message_bits, coded, slots)
    }

    /// Number of slots an `l`-bit message occupies.
    pub fn code_length(&self, l: usize) -> usize {
        self.frame(l).slots()
    }

    /// Per-slot channel bits: `true` means "collide" (bit 1).
    pub fn encode(&self, message: &[bool]) -> Result<Vec<bool>, CodingError> {
        if message.is_empty() {
            return Err(CodingError::EmptyMessage);
        }
        let frame = self.frame(message.len());
        let coded = self.codec.inner_encode(message);
        debug_assert_eq!(coded.len(), frame.coded_bits());
        Ok(coded
            .iter()
            .zip(&frame.repeats)
            .flat_map(|(&b, &r)| std::iter::repeat_n(b, r))
            .collect())
    }

    /// Hard decisions per coded bit from observed rewards.
    pub fn hard_decisions(&self, frame: &Frame, samples: &[f64]) -> Result<Vec<bool>, CodingError> {
        if samples.len() != frame.slots() {
            return Err(CodingError::LengthMismatch {
                expected: frame.slots(),
                got: samples.len(),
            });
        }
        let mut out = Vec::with_capacity(frame.coded_bits());
        let mut pos = 0;
        for &r in &frame.repeats {
            let group = &samples[pos..pos + r];
            let mean = group.iter().sum::<f64>() / r as f64;
            out.push(mean <= self.threshold);
            pos += r;
        }
        Ok(out)
    }

    /// Decodes an `l`-bit message from the rewards observed on the receiver's arm.
    pub fn decode(&self, l: usize, samples: &[f64]) -> Result<Vec<bool>, CodingError> {
        let frame = self.frame(l);
        let hard = self.hard_decisions(&frame, samples)?;
        Ok(self.codec.inner_decode(&hard, l))
    }

    /// Decodes from collision indicators: majority vote per coded bit (ties read as a
    /// collision), then the inner decoder.
    pub fn decode_flags(&self, l: usize, flags: &[bool]) -> Result<Vec<bool>, CodingError> {
        let frame = self.frame(l);
        if flags.len() != frame.slots() {
            return Err(CodingError::LengthMismatch {
                expected: frame.slots(),
                got: flags.len(),
            });
        }
        let mut hard = Vec::with_capacity(frame.coded_bits());
        let mut pos = 0;
        for &r in &frame.repeats {
            let ones = flags[pos..pos + r].iter().filter(|&&f| f).count();
            hard.push(2 * ones >= r);
            pos += r;
        }
        Ok(self.codec.inner_decode(&hard, l))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Per-sample misread probabilities of the threshold detector on one arm:
/// `p0 = P(no-collision reward ≤ θ)` and `p1 = P(two-collider reward > θ)`.
pub fn crossover_probs(arm: &ArmModel, theta: f64) -> Result<(f64, f64), CodingError> {
    let (low, high) = (arm.nu(), arm.mu());
    if !(theta > low && theta < high) {
        return Err(CodingError::ThresholdOutside { theta, low, high });
    }
    let p0 = prob_at_most(&arm.no_collision, theta);
    let p1 = 1.0 - prob_at_most(arm.collision.source(2), theta);
    Ok((p0, p1))
}

fn prob_at_most(source: &RewardSource, theta: f64) -> f64 {
    match source {
        RewardSource::Gaussian { mean, sigma } => {
            if *sigma == 0.0 {
                f64::from(*mean <= theta)
            } else {
                normal_cdf((theta - mean) / sigma)
            }
        }
        RewardSource::Bernoulli { mean } => {
            // Support {0, 1}; θ lies strictly inside (ν, μ) ⊂ [0, 1].
            if theta >= 1.0 {
                1.0
            } else if theta >= 0.0 {
                1.0 - mean
            } else {
                0.0
            }
        }
        RewardSource::Trace { values, .. } => {
            values.iter().filter(|&&v| v <= theta).count() as f64 / values.len() as f64
        }
    }
}
