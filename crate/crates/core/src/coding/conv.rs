//! Feedforward convolutional codes with hard-decision Viterbi decoding.

use serde::{Deserialize, Serialize};

use super::CodingError;

/// A rate-1/n feedforward code. Generator bit `memory` taps the current input and
/// bit `memory - i` taps the input from `i` steps back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvSpec", into = "ConvSpec")]
pub struct ConvCode {
    generators: Vec<u32>,
    memory: usize,
    d_free: u32,
    b_free: f64,
}

/// Serialized form: generators as octal strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvSpec {
    pub generators: Vec<String>,
    pub memory: usize,
    pub d_free: u32,
    pub b_free: f64,
}

impl Default for ConvCode {
    /// Octal (5, 7, 7), memory 2; length parameters d_free = 7, B_free = 1.
    fn default() -> Self {
        ConvCode::new(vec![0o5, 0o7, 0o7], 2, 7, 1.0).expect("default code is valid")
    }
}

impl TryFrom<ConvSpec> for ConvCode {
    type Error = CodingError;

    fn try_from(spec: ConvSpec) -> Result<Self, Self::Error> {
        let generators = spec
            .generators
            .iter()
            .map(|g| u32::from_str_radix(g, 8).map_err(|_| CodingError::BadGenerators))
            .collect::<Result<_, _>>()?;
        ConvCode::new(generators, spec.memory, spec.d_free, spec.b_free)
    }
}

impl From<ConvCode> for ConvSpec {
    fn from(c: ConvCode) -> Self {
        ConvSpec {
            generators: c.generators.iter().map(|g| format!("{g:o}")).collect(),
            memory: c.memory,
            d_free: c.d_free,
            b_free: c.b_free,
        }
    }
}

impl ConvCode {
    pub fn new(
        generators: Vec<u32>,
        memory: usize,
        d_free: u32,
        b_free: f64,
    ) -> Result<Self, CodingError> {
        let width = memory + 1;
        if generators.is_empty()
            || memory == 0
            || memory > 12
            || generators.iter().any(|&g| g == 0 || g >> width != 0)
            || d_free == 0
            || !(b_free > 0.0)
        {
            return Err(CodingError::BadGenerators);
        }
        Ok(ConvCode {
            generators,
            memory,
            d_free,
            b_free,
        })
    }

    pub fn generators(&self) -> &[u32] {
        &self.generators
    }
    pub fn memory(&self) -> usize {
        self.memory
    }
    pub fn d_free(&self) -> u32 {
        self.d_free
    }
    pub fn b_free(&self) -> f64 {
        self.b_free
    }
    /// Output bits per input bit (1 / R_conv).
    pub fn outputs(&self) -> usize {
        self.generators.len()
    }

    /// Coded length of an `l`-bit message including the zero tail.
    pub fn coded_len(&self, l: usize) -> usize {
        self.outputs() * (l + self.memory)
    }

    fn num_states(&self) -> usize {
        1 << self.memory
    }

    /// Output bits and next state for `input` entering a register holding `state`
    /// (the last `memory` inputs, most recent in the high bit).
    fn transition(&self, state: usize, input: bool) -> (u32, usize) {
        let reg = ((input as u32) << self.memory) | state as u32;
        let out = self
            .generators
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, g)| acc | (((g & reg).count_ones() & 1) << i));
        (out, (reg >> 1) as usize)
    }

    /// Encodes `bits` followed by `memory` zero tail bits.
    pub fn encode(&self, bits: &[bool]) -> Vec<bool> {
        let n = self.outputs();
        let mut state = 0usize;
        let mut out = Vec::with_capacity(self.coded_len(bits.len()));
        for &b in bits.iter().chain(std::iter::repeat_n(&false, self.memory)) {
            let (sym, next) = self.transition(state, b);
            out.extend((0..n).map(|i| sym >> i & 1 == 1));
            state = next;
        }
        out
    }

    /// Maximum-likelihood (minimum Hamming distance) decoding over the terminated
    /// trellis. Ties keep the survivor reached from the lower-numbered state.
    pub fn viterbi(&self, received: &[bool], message_bits: usize) -> Vec<bool> {
        let n = self.outputs();
        let steps = message_bits + self.memory;
        assert_eq!(received.len(), n * steps, "received length must match the trellis");
        let states = self.num_states();
        let table: Vec<[(u32, usize); 2]> = (0..states)
            .map(|s| [self.transition(s, false), self.transition(s, true)])
            .collect();

        const UNREACHED: u32 = u32::MAX;
        let mut metric = vec![UNREACHED; states];
        metric[0] = 0;
        // survivors[t][state] = (previous state, input bit)
        let mut survivors: Vec<Vec<(usize, bool)>> = Vec::with_capacity(steps);
        let mut next_metric = vec![UNREACHED; states];
        for t in 0..steps {
            let sym = received[t * n..(t + 1) * n]
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &b)| acc | ((b as u32) << i));
            let inputs: &[bool] = if t < message_bits { &[false, true] } else { &[false] };
            next_metric.iter_mut().for_each(|m| *m = UNREACHED);
            let mut back = vec![(0usize, false); states];
            for s in 0..states {
                if metric[s] == UNREACHED {
                    continue;
                }
                for &input in inputs {
                    let (out, next) = table[s][input as usize];
                    let m = metric[s] + (out ^ sym).count_ones();
                    if m < next_metric[next] {
                        next_metric[next] = m;
                        back[next] = (s, input);
                    }
                }
            }
            std::mem::swap(&mut metric, &mut next_metric);
            survivors.push(back);
        }

        let mut bits = vec![false; steps];
        let mut state = 0usize;
        for t in (0..steps).rev() {
            let (prev, input) = survivors[t][state];
            bits[t] = input;
            state = prev;
        }
        bits.truncate(message_bits);
        bits
    }
}
