mod common;

use common::{macro_only, schedule, tiny_scenario};
use proptest::prelude::*;
use udn_energy::control::{self, ControlConfig, ControlError, SlotDecision};
use udn_energy::phy::{self, Gains};
use udn_energy::scenario::{DensityTier, RegionSize, Scenario};
use udn_energy::sim::{self, NetworkState};

fn config(v: f64) -> ControlConfig {
    ControlConfig {
        v_weight: v,
        ..ControlConfig::default()
    }
}

/// Objective rebuilt from the power model and per-user rates.
fn objective_oracle(d: &SlotDecision, q: &[f64], s: &Scenario, gains: &Gains, cfg: &ControlConfig) -> f64 {
    let power: f64 = s
        .base_stations
        .iter()
        .map(|b| phy::bs_power_consumption(&b.power_model, d.bs_on[b.id], phy::bs_transmit_power(d, b.id)))
        .sum();
    let u = cfg.queue_unit_bits;
    let service: f64 = (0..s.num_users())
        .map(|x| (q[x] / u) * (q[x].min(phy::user_rate(d, s, gains, x)) / u))
        .sum();
    cfg.v_weight * power - service
}

fn state_with(s: &Scenario, q: Vec<f64>) -> NetworkState {
    NetworkState::new(s, 1).with_queues(q)
}

#[test]
fn objective_vanishes_without_weight_and_queues() {
    let s = tiny_scenario(2, 3, 2, 1);
    let gains = Gains::compute(&s, 0);
    let d = control::fixed_step(&s);
    assert_eq!(control::dpp_objective(&d, &[0.0; 3], &s, &gains, &config(0.0)), 0.0);
}

#[test]
fn macros_only_objective_is_static_power() {
    let s = tiny_scenario(2, 3, 2, 1);
    let gains = Gains::compute(&s, 0);
    let d = macro_only(&s, vec![true, false, false]);
    let j = control::dpp_objective(&d, &[4e5, 0.0, 1e6], &s, &gains, &config(1.0));
    assert_eq!(j, 298.0);
}

#[test]
fn objective_matches_compositional_oracle() {
    for seed in 0..20 {
        let s = tiny_scenario(2, 3, 2, seed);
        let gains = Gains::compute(&s, 0);
        let q: Vec<f64> = (0..3).map(|x| 1e5 * (seed as f64 + 1.0) * (x as f64 + 0.5)).collect();
        let mut d = macro_only(&s, vec![true, true, seed % 2 == 0]);
        schedule(&mut d, 0, 0, 0, 10.0);
        schedule(&mut d, 1, 0, 1, 0.5);
        schedule(&mut d, 1, 1, 2, 0.5);
        let cfg = config(seed as f64);
        let j = control::dpp_objective(&d, &q, &s, &gains, &cfg);
        let o = objective_oracle(&d, &q, &s, &gains, &cfg);
        assert!((j - o).abs() <= 1e-9 * o.abs().max(1.0), "seed {seed}: {j} vs {o}");
    }
}

#[test]
fn brute_force_single_link() {
    let s = tiny_scenario(0, 1, 1, 4);
    let gains = Gains::compute(&s, 0);
    let (d, j) = control::brute_force_step(&state_with(&s, vec![1e8]), &s, &gains, &config(10.0)).unwrap();
    assert_eq!(d.assigned(0, 0), Some(0));
    assert_eq!(d.power(0, 0), 20.0);
    assert!(j < 10.0 * 766.0);
}

#[test]
fn brute_force_empty_queues_is_macros_only() {
    let s = tiny_scenario(3, 4, 2, 9);
    let gains = Gains::compute(&s, 0);
    let (d, j) = control::brute_force_step(&state_with(&s, vec![0.0; 4]), &s, &gains, &config(10.0)).unwrap();
    assert_eq!(d.bs_on, vec![true, false, false, false]);
    assert!(d.assignment.iter().all(Option::is_none));
    assert_eq!(j, 10.0 * 298.0);
}

#[test]
fn brute_force_rejects_oversized_instances() {
    let s = tiny_scenario(4, 2, 1, 1);
    let gains = Gains::compute(&s, 0);
    let err = control::brute_force_step(&state_with(&s, vec![0.0; 2]), &s, &gains, &config(1.0)).unwrap_err();
    assert!(matches!(err, ControlError::TooLarge { what: "base stations", value: 5, limit: 4 }));
    let s = tiny_scenario(1, 2, 3, 1);
    let gains = Gains::compute(&s, 0);
    let err = control::brute_force_step(&state_with(&s, vec![0.0; 2]), &s, &gains, &config(1.0)).unwrap_err();
    assert!(matches!(err, ControlError::TooLarge { what: "subcarriers", .. }));
}

/// Swaps small cells 1 and 2 in the scenario, the gains and a decision.
fn relabel(s: &Scenario, gains: &Gains) -> (Scenario, Gains, impl Fn(usize) -> usize) {
    let perm = |b: usize| match b {
        1 => 2,
        2 => 1,
        b => b,
    };
    let mut t = s.clone();
    t.base_stations = (0..s.num_bs())
        .map(|b| {
            let mut bs = s.base_stations[perm(b)].clone();
            bs.id = b;
            bs
        })
        .collect();
    let g = Gains::from_fn(s.num_bs(), s.num_users(), s.num_subcarriers, |b, u, n| gains.get(perm(b), u, n));
    (t, g, perm)
}

fn permute_decision(d: &SlotDecision, perm: &impl Fn(usize) -> usize) -> SlotDecision {
    let n_sc = d.num_subcarriers;
    let mut e = d.clone();
    for b in 0..d.bs_on.len() {
        e.bs_on[b] = d.bs_on[perm(b)];
        for n in 0..n_sc {
            e.assignment[b * n_sc + n] = d.assignment[perm(b) * n_sc + n];
            e.power_w[b * n_sc + n] = d.power_w[perm(b) * n_sc + n];
        }
    }
    for a in e.association.iter_mut() {
        *a = a.map(perm);
    }
    e
}

#[test]
fn brute_force_invariant_under_relabeling() {
    for seed in 0..10 {
        let (s, state) = sim::oracle_instance(sim::OracleSize { num_bs: 3, num_users: 3, num_subcarriers: 2 }, seed).unwrap();
        let gains = Gains::compute(&s, 0);
        let cfg = config(10.0);
        let (d, j) = control::brute_force_step(&state, &s, &gains, &cfg).unwrap();
        let (t, g, perm) = relabel(&s, &gains);
        let (e, k) = control::brute_force_step(&state, &t, &g, &cfg).unwrap();
        assert!((j - k).abs() <= 1e-9 * j.abs().max(1.0), "seed {seed}: {j} vs {k}");
        let moved = permute_decision(&d, &perm);
        let jm = control::dpp_objective(&moved, &state.queues.queue_bits, &t, &g, &cfg);
        assert!((jm - k).abs() <= 1e-9 * k.abs().max(1.0));
        assert!(e.validate(&t).is_ok());
    }
}

#[test]
fn load_aware_switches_off_idle_small_cells() {
    let s = sim::tier_cells(&[DensityTier::suburban()], RegionSize::default(), &[3], 0.3).unwrap().remove(0).scenario;
    let gains = Gains::compute(&s, 0);
    let state = NetworkState::new(&s, 3);
    let d = control::load_aware_step(&state, &s, &gains, &ControlConfig { max_toggles_per_epoch: 100, ..config(10.0) }).unwrap();
    for b in 0..s.num_bs() {
        assert_eq!(d.bs_on[b], s.base_stations[b].is_macro(), "BS {b}");
    }
    assert!(d.assignment.iter().all(Option::is_none));
}

#[test]
fn load_aware_keeps_on_set_between_epochs() {
    let s = tiny_scenario(3, 4, 2, 2);
    let gains = Gains::compute(&s, 0);
    let mut state = state_with(&s, vec![0.0; 4]);
    state.slot = 3;
    let d = control::load_aware_step(&state, &s, &gains, &config(10.0)).unwrap();
    assert_eq!(d.bs_on, vec![true; 4]);
}

#[test]
fn load_aware_without_power_weight_or_backlog_keeps_cells_on() {
    for seed in 0..20 {
        let (s, state) = sim::oracle_instance(sim::OracleSize { num_bs: 4, num_users: 4, num_subcarriers: 2 }, seed).unwrap();
        let state = state.with_queues(vec![0.0; 4]);
        let gains = Gains::compute(&s, 0);
        let d = control::load_aware_step(&state, &s, &gains, &config(0.0)).unwrap();
        for b in 0..s.num_bs() {
            assert!(d.bs_on[b] || !state.incumbent.bs_on[b], "seed {seed}: BS {b} switched off");
        }
    }
}

#[test]
fn load_aware_never_worse_than_incumbent_on_set() {
    for seed in 0..30 {
        let (s, state) = sim::oracle_instance(sim::OracleSize { num_bs: 4, num_users: 4, num_subcarriers: 2 }, seed).unwrap();
        let gains = Gains::compute(&s, 0);
        let cfg = config(10.0);
        let q = &state.queues.queue_bits;
        let d = control::load_aware_step(&state, &s, &gains, &cfg).unwrap();
        let start = control::load_aware_inner(&state.incumbent.bs_on, &state, &s, &gains, &cfg);
        let (_, opt) = control::brute_force_step(&state, &s, &gains, &cfg).unwrap();
        let j = control::dpp_objective(&d, q, &s, &gains, &cfg);
        assert!(j <= control::dpp_objective(&start, q, &s, &gains, &cfg) + 1e-9);
        assert!(opt <= j + 1e-9);
        assert!(d.validate(&s).is_ok());
    }
}

#[test]
fn greedy_off_without_traffic_switches_off_small_cells() {
    let mut s = sim::tier_cells(&[DensityTier::urban()], RegionSize::default(), &[1], 0.3).unwrap().remove(0).scenario;
    for u in s.user_points.iter_mut() {
        u.traffic.base_rate_bits_per_slot = 0.0;
    }
    let gains = Gains::compute(&s, 0);
    let d = control::greedy_off_step(&NetworkState::new(&s, 1), &s, &gains, &config(10.0));
    for b in 0..s.num_bs() {
        assert_eq!(d.bs_on[b], s.base_stations[b].is_macro());
    }
}

#[test]
fn greedy_off_zero_threshold_keeps_everything_on() {
    let s = sim::tier_cells(&[DensityTier::urban()], RegionSize::default(), &[1], 0.3).unwrap().remove(0).scenario;
    let gains = Gains::compute(&s, 0);
    let cfg = ControlConfig { greedy_off_utilization_threshold: 0.0, ..config(10.0) };
    let mut state = NetworkState::new(&s, 1);
    state.slot = 200; // evening peak
    let d = control::greedy_off_step(&state, &s, &gains, &cfg);
    assert!(d.bs_on.iter().all(|&on| on));
    assert!(d.validate(&s).is_ok());
}

#[test]
fn fixed_ignores_time_and_load() {
    let s = sim::tier_cells(&[DensityTier::rural()], RegionSize::default(), &[2], 0.3).unwrap().remove(0).scenario;
    let gains = Gains::compute(&s, 0);
    let first = control::fixed_step(&s);
    let mut state = NetworkState::new(&s, 2);
    for _ in 0..1000 {
        sim::step(&mut state, &s, &gains, control::Scheme::Fixed, &config(10.0)).unwrap();
    }
    assert_eq!(state.incumbent, first);
    assert!(first.bs_on.iter().all(|&on| on));
    for b in 0..s.num_bs() {
        let p: f64 = (0..s.num_subcarriers).map(|n| first.power(b, n)).sum();
        let has_users = first.association.contains(&Some(b));
        assert_eq!(p > 0.0, has_users);
    }
}

#[test]
fn empty_queues_order_power_across_schemes() {
    let s = sim::tier_cells(&[DensityTier::urban()], RegionSize::default(), &[4], 0.3).unwrap().remove(0).scenario;
    let gains = Gains::compute(&s, 0);
    let state = NetworkState::new(&s, 4);
    let cfg = ControlConfig { max_toggles_per_epoch: 100, ..config(10.0) };
    let total = |d: &SlotDecision| phy::network_power(d, &s).iter().sum::<f64>();
    let la = total(&control::load_aware_step(&state, &s, &gains, &cfg).unwrap());
    let go = total(&control::greedy_off_step(&state, &s, &gains, &cfg));
    let fx = total(&control::fixed_step(&s));
    assert!(la <= go && go <= fx, "{la} {go} {fx}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn brute_force_bounds_load_aware(seed in 0u64..10_000, v in 0.0f64..50.0) {
        let (s, state) = sim::oracle_instance(sim::OracleSize { num_bs: 3, num_users: 3, num_subcarriers: 2 }, seed).unwrap();
        let gains = Gains::compute(&s, 0);
        let cfg = config(v);
        let d = control::load_aware_step(&state, &s, &gains, &cfg).unwrap();
        let j = control::dpp_objective(&d, &state.queues.queue_bits, &s, &gains, &cfg);
        let (_, opt) = control::brute_force_step(&state, &s, &gains, &cfg).unwrap();
        prop_assert!(opt <= j + 1e-9 * j.abs().max(1.0));
        prop_assert!(d.validate(&s).is_ok());
    }
}
