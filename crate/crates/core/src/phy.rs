//! Channel gains, SINR, rates and the base-station power model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::SlotDecision;
use crate::scenario::{BaseStation, BsTier, Point, Scenario, UserPoint};

#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("base station {0} is off")]
    BsOff(usize),
    #[error("subcarrier {subcarrier} of base station {bs} is not assigned")]
    Unassigned { bs: usize, subcarrier: usize },
}

/// Log-distance path loss `offset_db + slope_db_per_decade * log10(d / 1 km)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub offset_db: f64,
    pub slope_db_per_decade: f64,
}

impl PathLoss {
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.offset_db + self.slope_db_per_decade * (distance_m / 1000.0).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    None,
    /// Unit-mean exponential power gain, redrawn once per BS-operation epoch.
    BlockRayleigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub pathloss_macro: PathLoss,
    pub pathloss_small: PathLoss,
    pub shadowing_sigma_db: f64,
    pub fading: Fading,
    /// Draw fading independently per subcarrier. Off means every subcarrier
    /// of a BS-user link sees the same gain.
    pub frequency_selective: bool,
    pub min_distance_m: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            pathloss_macro: PathLoss {
                offset_db: 128.1,
                slope_db_per_decade: 37.6,
            },
            pathloss_small: PathLoss {
                offset_db: 140.7,
                slope_db_per_decade: 36.7,
            },
            shadowing_sigma_db: 0.0,
            fading: Fading::None,
            frequency_selective: false,
            min_distance_m: 10.0,
        }
    }
}

impl ChannelModel {
    pub fn pathloss(&self, tier: BsTier) -> &PathLoss {
        match tier {
            BsTier::Macro => &self.pathloss_macro,
            BsTier::Small => &self.pathloss_small,
        }
    }

    /// True when gains do not change between epochs.
    pub fn is_static(&self) -> bool {
        self.fading == Fading::None
    }
}

/// Affine load-dependent consumption `xi * P_tx + P_static` of an active BS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub amplifier_inefficiency: f64,
    pub static_power_w: f64,
}

impl PowerModel {
    /// Straight line through (20 W, 766 W) and (10 W, 532 W) of a macro site.
    pub const MACRO: PowerModel = PowerModel {
        amplifier_inefficiency: 23.4,
        static_power_w: 298.0,
    };

    /// Small-cell default. Not a measured fit.
    pub const SMALL: PowerModel = PowerModel {
        amplifier_inefficiency: 4.0,
        static_power_w: 10.0,
    };

    pub fn consumption(&self, on: bool, transmit_power_w: f64) -> f64 {
        bs_power_consumption(self, on, transmit_power_w)
    }
}

pub fn bs_power_consumption(model: &PowerModel, on: bool, transmit_power_w: f64) -> f64 {
    if on {
        model.amplifier_inefficiency * transmit_power_w + model.static_power_w
    } else {
        0.0
    }
}

/// Radiated power of BS `bs`: sum of powers on subcarriers that carry an
/// associated user.
pub fn bs_transmit_power(decision: &SlotDecision, bs: usize) -> f64 {
    if !decision.bs_on[bs] {
        return 0.0;
    }
    (0..decision.num_subcarriers)
        .filter(|&n| match decision.assigned(bs, n) {
            Some(user) => decision.association[user] == Some(bs),
            None => false,
        })
        .map(|n| decision.power(bs, n))
        .sum()
}

/// `PC_i` for every BS under `decision`.
pub fn network_power(decision: &SlotDecision, scenario: &Scenario) -> Vec<f64> {
    scenario
        .base_stations
        .iter()
        .map(|bs| {
            bs.power_model
                .consumption(decision.bs_on[bs.id], bs_transmit_power(decision, bs.id))
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

const SHADOW_STREAM: u64 = 0x5348_4144;
const FADE_STREAM: u64 = 0x4641_4445;

pub fn distance_m(a: Point, b: Point) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Linear power gain from `bs` to `user` on `subcarrier` during fading block
/// `block`. A pure function of its arguments.
pub fn channel_gain(
    model: &ChannelModel,
    bs: &BaseStation,
    user: &UserPoint,
    subcarrier: usize,
    block: u64,
    seed: u64,
) -> f64 {
    let d = distance_m(bs.position, user.position).max(model.min_distance_m);
    let mut gain_db = -model.pathloss(bs.tier).loss_db(d);
    if model.shadowing_sigma_db > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &[SHADOW_STREAM, bs.id as u64, user.id as u64],
        ));
        let z: f64 = StandardNormal.sample(&mut rng);
        gain_db += model.shadowing_sigma_db * z;
    }
    let mut gain = 10f64.powf(gain_db / 10.0);
    if model.fading == Fading::BlockRayleigh {
        let n = if model.frequency_selective {
            subcarrier as u64
        } else {
            0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &[FADE_STREAM, bs.id as u64, user.id as u64, n, block],
        ));
        let fade: f64 = Exp1.sample(&mut rng);
        gain *= fade.max(1e-12);
    }
    gain
}

/// Gain tensor indexed by (BS, user, subcarrier) for one fading block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    num_bs: usize,
    num_users: usize,
    num_subcarriers: usize,
    per_subcarrier: bool,
    data: Vec<f64>,
}

impl Gains {
    pub fn compute(scenario: &Scenario, block: u64) -> Gains {
        let model = &scenario.channel;
        let per_subcarrier = model.frequency_selective && model.fading != Fading::None;
        let n_stride = if per_subcarrier {
            scenario.num_subcarriers
        } else {
            1
        };
        let mut data = Vec::with_capacity(
            scenario.base_stations.len() * scenario.user_points.len() * n_stride,
        );
        for bs in &scenario.base_stations {
            for user in &scenario.user_points {
                for n in 0..n_stride {
                    data.push(channel_gain(model, bs, user, n, block, scenario.rng_seed));
                }
            }
        }
        Gains {
            num_bs: scenario.base_stations.len(),
            num_users: scenario.user_points.len(),
            num_subcarriers: scenario.num_subcarriers,
            per_subcarrier,
            data,
        }
    }

    /// Gains from an explicit function, mainly for hand-built test instances.
    pub fn from_fn(
        num_bs: usize,
        num_users: usize,
        num_subcarriers: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Gains {
        let mut data = Vec::with_capacity(num_bs * num_users * num_subcarriers);
        for b in 0..num_bs {
            for u in 0..num_users {
                for n in 0..num_subcarriers {
                    data.push(f(b, u, n));
                }
            }
        }
        Gains {
            num_bs,
            num_users,
            num_subcarriers,
            per_subcarrier: true,
            data,
        }
    }

    #[inline]
    pub fn get(&self, bs: usize, user: usize, subcarrier: usize) -> f64 {
        let base = bs * self.num_users + user;
        if self.per_subcarrier {
            self.data[base * self.num_subcarriers + subcarrier]
        } else {
            self.data[base]
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }
}

/// SINR of `user` served by `bs` on `subcarrier`. Interference comes from
/// every other ON BS that has subcarrier `subcarrier` assigned.
pub fn sinr(
    decision: &SlotDecision,
    scenario: &Scenario,
    gains: &Gains,
    bs: usize,
    user: usize,
    subcarrier: usize,
) -> Result<f64, PhyError> {
    if !decision.bs_on[bs] {
        return Err(PhyError::BsOff(bs));
    }
    if decision.assigned(bs, subcarrier).is_none() {
        return Err(PhyError::Unassigned { bs, subcarrier });
    }
    let signal = decision.power(bs, subcarrier) * gains.get(bs, user, subcarrier);
    let interference: f64 = (0..decision.bs_on.len())
        .filter(|&j| j != bs && decision.is_transmitting(j, subcarrier))
        .map(|j| decision.power(j, subcarrier) * gains.get(j, user, subcarrier))
        .sum();
    Ok(signal / (interference + scenario.noise_power_w()))
}

/// `log2(1 + sinr)` scaled to data per slot.
pub fn subcarrier_rate(sinr: f64, bandwidth_hz: f64, slot_duration_s: f64) -> f64 {
    (1.0 + sinr).log2() * bandwidth_hz * slot_duration_s
}

/// Data delivered to `user` in one slot under `decision`.
pub fn user_rate(decision: &SlotDecision, scenario: &Scenario, gains: &Gains, user: usize) -> f64 {
    let Some(bs) = decision.association[user] else {
        return 0.0;
    };
    if !decision.bs_on[bs] {
        return 0.0;
    }
    (0..decision.num_subcarriers)
        .filter(|&n| decision.assigned(bs, n) == Some(user))
        .map(|n| {
            let gamma = sinr(decision, scenario, gains, bs, user, n)
                .expect("assigned subcarrier on an ON BS");
            scenario.subcarrier_rate(gamma)
        })
        .sum()
}

/// Rates of all users in one pass over the active (BS, subcarrier) pairs.
pub fn user_rates(decision: &SlotDecision, scenario: &Scenario, gains: &Gains) -> Vec<f64> {
    let num_bs = decision.bs_on.len();
    let noise = scenario.noise_power_w();
    let mut rates = vec![0.0; decision.association.len()];
    let mut active: Vec<usize> = Vec::with_capacity(num_bs);
    for n in 0..decision.num_subcarriers {
        active.clear();
        active.extend((0..num_bs).filter(|&j| decision.is_transmitting(j, n)));
        for &i in &active {
            let user = decision.assigned(i, n).unwrap();
            if decision.association[user] != Some(i) {
                continue;
            }
            let mut interference = 0.0;
            for &j in &active {
                if j != i {
                    interference += decision.power(j, n) * gains.get(j, user, n);
                }
            }
            let gamma = decision.power(i, n) * gains.get(i, user, n) / (interference + noise);
            rates[user] += scenario.subcarrier_rate(gamma);
        }
    }
    rates
}
