#![allow(dead_code)]

use udn_energy::control::SlotDecision;
use udn_energy::scenario::{generate_scenario, DensityName, DensityTier, RegionSize, Scenario};

/// One macro plus `smalls` small cells and `users` users in a 400 m square.
pub fn tiny_scenario(smalls: usize, users: usize, subcarriers: usize, seed: u64) -> Scenario {
    let tier = DensityTier {
        name: DensityName::Urban,
        macro_count: 1,
        small_count: smalls,
        user_count: users,
    };
    let dims = RegionSize {
        width_m: 400.0,
        height_m: 400.0,
    };
    let mut s = generate_scenario(&tier, dims, seed).unwrap();
    s.num_subcarriers = subcarriers;
    s
}

/// Puts `user` on `subcarrier` of `bs` at `power_w`, associating it there.
pub fn schedule(d: &mut SlotDecision, bs: usize, subcarrier: usize, user: usize, power_w: f64) {
    let k = bs * d.num_subcarriers + subcarrier;
    d.association[user] = Some(bs);
    d.assignment[k] = Some(user);
    d.power_w[k] = power_w;
}

/// Every user associated to the macro (BS 0), nothing scheduled.
pub fn macro_only(s: &Scenario, on: Vec<bool>) -> SlotDecision {
    let mut d = SlotDecision::idle(on, s.num_users(), s.num_subcarriers);
    for a in d.association.iter_mut() {
        *a = Some(0);
    }
    d
}
