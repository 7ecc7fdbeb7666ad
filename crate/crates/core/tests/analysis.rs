mod common;

use std::f64::consts::LN_2;

use common::constant;
use ec3_core::analysis::{
    centralized_lower_bound, lower_bound_coefficient, minimal_block_length, optimal_block_length, regret_trace,
    regret_upper_bound, ActionLog, ChannelModel,
};
use ec3_core::env::{ArmModel, BanditInstance, RewardSource, SensingMode};
use proptest::prelude::*;

fn h2_bits(p: f64) -> f64 {
    if p == 0.0 || p == 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn e0_symmetric(p: f64, rho: f64) -> f64 {
    let s = 1.0 / (1.0 + rho);
    rho * LN_2 - (1.0 + rho) * (p.powf(s) + (1.0 - p).powf(s)).ln()
}

/// Dense-grid maximization of `E₀(ρ) − ρR` over ρ ∈ [0, 1].
fn exponent_oracle(p: f64, rate: f64) -> f64 {
    (0..=20_000)
        .map(|i| {
            let rho = i as f64 / 20_000.0;
            e0_symmetric(p, rho) - rho * rate
        })
        .fold(0.0, f64::max)
}

#[test]
fn capacity_matches_binary_entropy() {
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let c = ChannelModel::symmetric(p).unwrap().capacity();
        assert!((c / LN_2 - (1.0 - h2_bits(p))).abs() < 1e-9, "p = {p}");
    }
    let c = ChannelModel::symmetric(0.11).unwrap().capacity();
    assert!((c - 0.3466).abs() < 5e-4);
}

#[test]
fn asymmetric_optimizer_reproduces_symmetric_capacity() {
    for p in [0.01, 0.1, 0.2, 0.35] {
        let sym = ChannelModel::symmetric(p).unwrap();
        let c = sym.capacity();
        let numeric = (0..=100_000).map(|i| sym.mutual_information(i as f64 / 100_000.0)).fold(0.0, f64::max);
        assert!((numeric - c).abs() < 1e-9);
    }
}

#[test]
fn exponent_vanishes_at_capacity_and_never_increases() {
    for j in 0..10 {
        let p = 0.005 + 0.04 * j as f64;
        let ch = ChannelModel::symmetric(p).unwrap();
        let c = ch.capacity();
        assert!(ch.error_exponent(c).abs() < 1e-6, "p = {p}");
        let values: Vec<f64> = (0..100).map(|i| ch.error_exponent(c * i as f64 / 99.0)).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12), "p = {p}");
    }
}

#[test]
fn exponent_matches_dense_grid() {
    for p in [0.0, 0.02, 0.11, 0.3] {
        let ch = ChannelModel::symmetric(p).unwrap();
        for i in 0..10 {
            let rate = ch.capacity() * i as f64 / 10.0;
            assert!((ch.error_exponent(rate) - exponent_oracle(p, rate)).abs() < 1e-8, "p = {p}, R = {rate}");
        }
    }
    let ch = ChannelModel::symmetric(0.11).unwrap();
    let expect = LN_2 - 2.0 * (0.11f64.sqrt() + 0.89f64.sqrt()).ln();
    assert!((ch.error_exponent(0.0) - expect).abs() < 1e-9);
    assert!((expect - 0.207).abs() < 1e-3);
}

#[test]
fn block_length_examples() {
    let clean = ChannelModel::symmetric(0.0).unwrap();
    let n = optimal_block_length(&clean, 10, 10f64.exp(), Some(LN_2 - 0.5)).unwrap();
    assert_eq!(n, 52);
    assert!(optimal_block_length(&clean, 10, 100.0, Some(0.0)).is_err());
    assert!(optimal_block_length(&clean, 10, 100.0, Some(LN_2)).is_err());
    assert!(optimal_block_length(&ChannelModel::symmetric(0.5).unwrap(), 1, 100.0, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn closed_form_is_the_least_length_meeting_both_conditions(
        p in 0.0f64..0.3,
        l in 0usize..200,
        ln_t in 1.0f64..25.0,
        slack in 0.05f64..0.95,
    ) {
        let ch = ChannelModel::symmetric(p).unwrap();
        let c = ch.capacity();
        let phi = slack * c;
        let rate = c - phi;
        let exponent = ch.error_exponent(rate);
        let n = (1u64..)
            .find(|&n| n as f64 >= l as f64 / rate && n as f64 >= ln_t / exponent)
            .unwrap();
        prop_assert_eq!(optimal_block_length(&ch, l, ln_t.exp(), Some(phi)).unwrap(), n);
    }

    #[test]
    fn minimal_length_matches_linear_scan(p in 0.0f64..0.2, l in 1usize..20, ln_t in 1.0f64..10.0) {
        let ch = ChannelModel::symmetric(p).unwrap();
        let scan = (1u64..)
            .find(|&n| n as f64 * ch.error_exponent(l as f64 / n as f64) >= ln_t)
            .unwrap();
        let minimal = minimal_block_length(&ch, l, ln_t.exp()).unwrap();
        prop_assert_eq!(minimal, scan);
        prop_assert!(optimal_block_length(&ch, l, ln_t.exp(), None).unwrap() >= minimal);
    }
}

fn pair(mus: [f64; 2], gaussian: Option<f64>) -> BanditInstance {
    let source = |m: f64| match gaussian {
        Some(sigma) => RewardSource::Gaussian { mean: m, sigma },
        None => RewardSource::Bernoulli { mean: m },
    };
    let arms = mus.iter().map(|&m| ArmModel::new(source(m), source(0.05))).collect();
    BanditInstance::new(arms, 1, 1000, gaussian.unwrap_or(0.5), None, None, SensingMode::NoSensing, 0).unwrap()
}

#[test]
fn lower_bound_examples() {
    let g = pair([0.9, 0.5], Some(0.2));
    assert!((lower_bound_coefficient(&g).unwrap() - 0.2).abs() < 1e-12);
    let t = 1e5;
    assert!((centralized_lower_bound(&g, t).unwrap() - 0.2 * t.ln()).abs() < 1e-9);

    let b = pair([0.9, 0.5], None);
    let kl = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
    assert!((kl - 0.5108).abs() < 1e-4);
    assert!((lower_bound_coefficient(&b).unwrap() - 0.4 / kl).abs() < 1e-12);
    assert!((0.4 / kl - 0.783).abs() < 1e-3);

    let full = constant(&[0.9, 0.5], &[0.1, 0.1], 2, 1000, 0.1);
    assert_eq!(centralized_lower_bound(&full, 1e6).unwrap(), 0.0);
}

#[test]
fn upper_bound_shrinks_with_the_gap() {
    let channel = ChannelModel::symmetric(0.2).unwrap();
    let mut last = f64::INFINITY;
    for i in 1..=20 {
        let gap = 0.025 * i as f64;
        let inst = constant(&[0.9, 0.85, 0.85 - gap], &[0.05; 3], 2, 1_000_000, 0.1);
        let ub = regret_upper_bound(&inst, 1e6, &channel, None).unwrap();
        assert!(ub.total < last, "gap {gap}");
        assert!(ub.total > 0.0);
        last = ub.total;
    }

    let full = constant(&[0.9, 0.85], &[0.05; 2], 2, 1_000_000, 0.1);
    let ub = regret_upper_bound(&full, 1e6, &channel, None).unwrap();
    assert_eq!(ub.exploration, 0.0);
    assert!(ub.total > 0.0);
}

#[test]
fn regret_trace_examples() {
    let inst = constant(&[0.9, 0.5], &[0.1, 0.1], 1, 10, 0.1);
    let best = ActionLog {
        actions: vec![vec![0]; 10],
        rewards: vec![],
    };
    let tr = regret_trace(&inst, &best, 1).unwrap();
    assert!(tr.pseudo.iter().all(|&r| r == 0.0));
    let second = ActionLog {
        actions: vec![vec![1]; 10],
        rewards: vec![],
    };
    let tr = regret_trace(&inst, &second, 5).unwrap();
    assert_eq!(tr.t, vec![0, 5, 10]);
    assert!((tr.final_pseudo() - 4.0).abs() < 1e-12);
    assert!(tr.realized.last().unwrap().is_nan());

    let two = constant(&[0.9, 0.8], &[0.3, 0.1], 2, 4, 0.1);
    let log = ActionLog {
        actions: vec![vec![1, 1]; 4],
        rewards: vec![vec![0.1, 0.1]; 4],
    };
    let tr = regret_trace(&two, &log, 1).unwrap();
    for (i, r) in tr.pseudo.iter().enumerate() {
        assert!((r - 1.5 * i as f64).abs() < 1e-12);
    }
    assert_eq!(tr.collisions, vec![0, 1, 2, 3, 4]);
    assert!((tr.final_realized() - 6.0).abs() < 1e-12);
}

#[test]
fn regret_trace_rejects_mismatched_logs() {
    let inst = constant(&[0.9, 0.5], &[0.1, 0.1], 1, 10, 0.1);
    let wide = ActionLog {
        actions: vec![vec![0, 1]],
        rewards: vec![],
    };
    assert!(regret_trace(&inst, &wide, 1).is_err());
    let bad_arm = ActionLog {
        actions: vec![vec![2]],
        rewards: vec![],
    };
    assert!(regret_trace(&inst, &bad_arm, 1).is_err());
    assert!(regret_trace(&inst, &ActionLog::default(), 0).is_err());
}
