//! The (7,4) Hamming code with generator `G` and parity-check `H`.
//!
//! Codeword positions are numbered 1..=7; column `j` of `H` is the binary expansion of
//! `j`, so a nonzero syndrome directly names the flipped position.

/// Rows of the 7x4 generator matrix.
pub const G: [[u8; 4]; 7] = [
    [1, 1, 0, 1],
    [1, 0, 1, 1],
    [1, 0, 0, 0],
    [0, 1, 1, 1],
    [0, 1, 0, 0],
    [0, 0, 1, 0],
    [0, 0, 0, 1],
];

/// Rows of the 3x7 parity-check matrix.
pub const H: [[u8; 7]; 3] = [
    [1, 0, 1, 0, 1, 0, 1],
    [0, 1, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
];

/// Codeword positions (0-based) holding the four data bits.
const DATA_POSITIONS: [usize; 4] = [2, 4, 5, 6];

pub fn encode_block(data: [bool; 4]) -> [bool; 7] {
    let mut out = [false; 7];
    for (row, bit) in G.iter().zip(out.iter_mut()) {
        *bit = row
            .iter()
            .zip(data)
            .fold(false, |acc, (&g, d)| acc ^ (g == 1 && d));
    }
    out
}

/// `H·r mod 2`, first row as the least significant bit.
pub fn syndrome(word: &[bool; 7]) -> u8 {
    H.iter().enumerate().fold(0u8, |s, (i, row)| {
        let parity = row
            .iter()
            .zip(word)
            .fold(false, |acc, (&h, &r)| acc ^ (h == 1 && r));
        s | ((parity as u8) << i)
    })
}

/// Corrects up to one flipped bit and returns the data bits.
pub fn decode_block(word: [bool; 7]) -> [bool; 4] {
    let mut word = word;
    let s = syndrome(&word);
    if s != 0 {
        word[s as usize - 1] ^= true;
    }
    DATA_POSITIONS.map(|p| word[p])
}

/// Encodes `bits`, zero-padding the tail to a multiple of four.
pub fn encode(bits: &[bool]) -> Vec<bool> {
    bits.chunks(4)
        .flat_map(|chunk| {
            let mut block = [false; 4];
            block[..chunk.len()].copy_from_slice(chunk);
            encode_block(block)
        })
        .collect()
}

/// Decodes whole 7-bit blocks and strips the padding back to `message_bits`.
pub fn decode(coded: &[bool], message_bits: usize) -> Vec<bool> {
    let mut out: Vec<bool> = coded
        .chunks_exact(7)
        .flat_map(|c| {
            let mut w = [false; 7];
            w.copy_from_slice(c);
            decode_block(w)
        })
        .collect();
    out.truncate(message_bits);
    out
}
