//! Pure scheduling and decision rules shared by every player.

/// Pulls per arm per unit of `2^p`: `⌈σ² ln T⌉`, at least 1.
pub fn explore_unit(sigma: f64, horizon: u64) -> u64 {
    let c = (sigma * sigma * (horizon.max(1) as f64).ln()).ceil();
    if c.is_finite() && c >= 1.0 {
        c as u64
    } else {
        1
    }
}

/// Pulls of each active arm by each active player in phase `p`.
pub fn block_len(phase: u32, unit: u64) -> u64 {
    1u64.checked_shl(phase).unwrap_or(u64::MAX).saturating_mul(unit)
}

/// `B = √(2σ² ln T / T_p)`.
pub fn confidence_radius(sigma: f64, horizon: u64, t_p: u64) -> f64 {
    (2.0 * sigma * sigma * (horizon.max(1) as f64).ln() / t_p as f64).sqrt()
}

/// `Q_p = ⌈log₂(1/B)⌉`, at least 1.
pub fn fraction_bits(radius: f64) -> usize {
    let q = (1.0 / radius).log2().ceil();
    if q.is_finite() && q >= 1.0 {
        q.min(52.0) as usize
    } else {
        1
    }
}

/// Bits per arm index: `⌈log₂ K⌉`, at least 1.
pub fn id_width(num_arms: usize) -> usize {
    (usize::BITS - num_arms.saturating_sub(1).leading_zeros()).max(1) as usize
}

/// Bits per set cardinality: `⌈log₂(K+1)⌉`.
pub fn count_width(num_arms: usize) -> usize {
    (usize::BITS - num_arms.leading_zeros()) as usize
}

/// `seq` rotated left by `offset` (modulo its length).
pub fn rotation(seq: &[usize], offset: usize) -> Vec<usize> {
    if seq.is_empty() {
        return Vec::new();
    }
    let s = offset % seq.len();
    seq[s..].iter().chain(&seq[..s]).copied().collect()
}

/// Splits positions of `means` into accepted and rejected.
///
/// Position `k` is accepted when at least `K_p − M_p` others sit below it by `4B`, and
/// rejected when at least `M_p` others sit above it by `4B`. Accepted positions come back
/// in descending order of mean, ties by position; rejected in position order.
pub fn accept_reject(means: &[f64], radius: f64, m_p: usize) -> (Vec<usize>, Vec<usize>) {
    let k_p = means.len();
    let need_below = k_p.saturating_sub(m_p);
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (k, &mk) in means.iter().enumerate() {
        let below = means
            .iter()
            .filter(|&&mj| mk - 2.0 * radius >= mj + 2.0 * radius)
            .count();
        let above = means
            .iter()
            .filter(|&&mj| mj - 2.0 * radius >= mk + 2.0 * radius)
            .count();
        if below >= need_below {
            accepted.push(k);
        } else if above >= m_p {
            rejected.push(k);
        }
    }
    accepted.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    (accepted, rejected)
}

/// `Σ mean·weight / Σ weight`; zero when all weights vanish.
pub fn aggregate(parts: &[(f64, u64)]) -> f64 {
    let total: u64 = parts.iter().map(|&(_, w)| w).sum();
    if total == 0 {
        return 0.0;
    }
    parts.iter().map(|&(m, w)| m * w as f64).sum::<f64>() / total as f64
}

/// What a player does next phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assignment {
    Fixed(usize),
    Explore(Vec<usize>),
}

/// Player `me` (0-based, leader 0) fixates on `accepted[m̂ − me − 1]` once that entry
/// exists, and otherwise explores `active` rotated by `me`.
pub fn next_assignment(me: usize, m_hat: usize, accepted: &[usize], active: &[usize]) -> Assignment {
    match m_hat.checked_sub(me + 1) {
        Some(i) if i < accepted.len() => Assignment::Fixed(accepted[i]),
        _ => Assignment::Explore(rotation(active, me)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(id_width(1), 1);
        assert_eq!(id_width(2), 1);
        assert_eq!(id_width(5), 3);
        assert_eq!(id_width(8), 3);
        assert_eq!(id_width(10), 4);
        assert_eq!(count_width(10), 4);
        assert_eq!(count_width(7), 3);
        assert_eq!(count_width(8), 4);
    }

    #[test]
    fn accept_reject_examples() {
        assert_eq!(accept_reject(&[0.9, 0.5, 0.4], 0.05, 1), (vec![0], vec![1, 2]));
        assert_eq!(accept_reject(&[0.5; 4], 0.01, 2), (vec![], vec![]));
        assert_eq!(accept_reject(&[0.9, 0.5, 0.4], 0.2, 1), (vec![], vec![]));
    }

    #[test]
    fn aggregation_weights() {
        assert!((aggregate(&[(0.3, 2), (0.6, 1)]) - 0.4).abs() < 1e-15);
        assert_eq!(aggregate(&[]), 0.0);
    }

    #[test]
    fn schedule_arithmetic() {
        // σ = 1, ln T just under 4
        let horizon = 4f64.exp().floor() as u64;
        assert_eq!(explore_unit(1.0, horizon), 4);
        assert_eq!(block_len(1, 4), 8);
        assert_eq!(rotation(&[2, 5, 7], 0), vec![2, 5, 7]);
        assert_eq!(rotation(&[2, 5, 7], 1), vec![5, 7, 2]);
        assert_eq!(fraction_bits(0.05), 5);
        assert_eq!(fraction_bits(0.9), 1);
    }

    #[test]
    fn assignment_rule() {
        // The last follower takes the first accepted arm.
        assert_eq!(next_assignment(4, 5, &[7], &[1, 2]), Assignment::Fixed(7));
        assert_eq!(next_assignment(0, 5, &[7], &[1, 2]), Assignment::Explore(vec![1, 2]));
        assert_eq!(next_assignment(3, 5, &[7], &[1, 2, 3]), Assignment::Explore(vec![1, 2, 3]));
        assert_eq!(next_assignment(0, 1, &[7], &[]), Assignment::Fixed(7));
    }
}
