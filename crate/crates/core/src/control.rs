//! Slot decisions and the three control schemes.
//!
//! A [`SlotDecision`] fixes, for one slot, which BSs are on, which BS every
//! user is associated with, which user (if any) each (BS, subcarrier) pair
//! serves, and the power on every (BS, subcarrier) pair.
//!
//! The load-aware scheme minimises the per-slot drift-plus-penalty score
//! `V * sum_i PC_i - sum_x Q(x) R(x)` (queues and rates measured in
//! `queue_unit_bits`). BS on/off changes only on epoch boundaries, through a
//! greedy single-toggle descent; association, subcarrier assignment and power
//! are recomputed every slot with interference measured from the previous
//! slot's realised decision.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{self, distance_m, Gains};
use crate::scenario::Scenario;
use crate::sim::NetworkState;
use crate::traffic::mean_rate;

/// Largest instance the exhaustive solver accepts.
pub const BRUTE_FORCE_MAX_BS: usize = 4;
pub const BRUTE_FORCE_MAX_USERS: usize = 4;
pub const BRUTE_FORCE_MAX_SUBCARRIERS: usize = 2;

const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintViolation {
    #[error("decision dimensions do not match the scenario")]
    Shape,
    #[error("user {user} is not associated with any base station")]
    Unassociated { user: usize },
    #[error("user {user} is associated with base station {bs}, which is off")]
    AssociatedToOff { user: usize, bs: usize },
    #[error("subcarrier {subcarrier} of base station {bs} serves user {user}, who is not associated with it")]
    ForeignAssignment {
        bs: usize,
        subcarrier: usize,
        user: usize,
    },
    #[error("base station {bs} transmits {total_w} W, above its budget of {max_w} W")]
    PowerBudget { bs: usize, total_w: f64, max_w: f64 },
    #[error("invalid power on subcarrier {subcarrier} of base station {bs}: negative, non-finite or without a served user")]
    InvalidPower { bs: usize, subcarrier: usize },
    #[error("base station {bs} is off but has assignments or power")]
    OffBsActive { bs: usize },
    #[error("macro base station {bs} is off")]
    MacroOff { bs: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("instance too large for exhaustive search: {what} = {value}, limit {limit}")]
    TooLarge {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    #[error("no base station would be on")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub num_subcarriers: usize,
    pub bs_on: Vec<bool>,
    pub association: Vec<Option<usize>>,
    /// Served user per (BS, subcarrier), row-major by BS.
    pub assignment: Vec<Option<usize>>,
    /// Power per (BS, subcarrier), row-major by BS.
    pub power_w: Vec<f64>,
}

impl SlotDecision {
    /// Given on-set, nobody associated, nothing assigned, zero power.
    pub fn idle(bs_on: Vec<bool>, num_users: usize, num_subcarriers: usize) -> Self {
        let cells = bs_on.len() * num_subcarriers;
        SlotDecision {
            num_subcarriers,
            bs_on,
            association: vec![None; num_users],
            assignment: vec![None; cells],
            power_w: vec![0.0; cells],
        }
    }

    /// Every BS on and nothing scheduled. Used as the incumbent before the
    /// first slot.
    pub fn all_on_idle(scenario: &Scenario) -> Self {
        Self::idle(
            vec![true; scenario.num_bs()],
            scenario.num_users(),
            scenario.num_subcarriers,
        )
    }

    #[inline]
    pub fn assigned(&self, bs: usize, subcarrier: usize) -> Option<usize> {
        self.assignment[bs * self.num_subcarriers + subcarrier]
    }

    #[inline]
    pub fn power(&self, bs: usize, subcarrier: usize) -> f64 {
        self.power_w[bs * self.num_subcarriers + subcarrier]
    }

    /// BS is on and has a user scheduled on `subcarrier`.
    #[inline]
    pub fn is_transmitting(&self, bs: usize, subcarrier: usize) -> bool {
        self.bs_on[bs] && self.assigned(bs, subcarrier).is_some()
    }

    pub fn on_count(&self) -> usize {
        self.bs_on.iter().filter(|&&on| on).count()
    }

    fn set(&mut self, bs: usize, subcarrier: usize, user: Option<usize>, power_w: f64) {
        let k = bs * self.num_subcarriers + subcarrier;
        self.assignment[k] = user;
        self.power_w[k] = power_w;
    }

    /// Checks exactly-one association to an ON BS, subcarrier exclusivity
    /// and consistency, per-BS power budgets, off-BS emptiness and macro
    /// pinning.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), ConstraintViolation> {
        let (b, u, n) = (scenario.num_bs(), scenario.num_users(), scenario.num_subcarriers);
        if self.num_subcarriers != n
            || self.bs_on.len() != b
            || self.association.len() != u
            || self.assignment.len() != b * n
            || self.power_w.len() != b * n
        {
            return Err(ConstraintViolation::Shape);
        }
        for (user, assoc) in self.association.iter().enumerate() {
            match *assoc {
                None => return Err(ConstraintViolation::Unassociated { user }),
                Some(bs) if bs >= b => return Err(ConstraintViolation::Shape),
                Some(bs) if !self.bs_on[bs] => {
                    return Err(ConstraintViolation::AssociatedToOff { user, bs })
                }
                Some(_) => {}
            }
        }
        for station in &scenario.base_stations {
            let bs = station.id;
            if station.is_macro() && !self.bs_on[bs] {
                return Err(ConstraintViolation::MacroOff { bs });
            }
            let mut total = 0.0;
            for sc in 0..n {
                let p = self.power(bs, sc);
                if !self.bs_on[bs] && (self.assigned(bs, sc).is_some() || p != 0.0) {
                    return Err(ConstraintViolation::OffBsActive { bs });
                }
                if !(p >= 0.0 && p.is_finite()) || (p > 0.0 && self.assigned(bs, sc).is_none()) {
                    return Err(ConstraintViolation::InvalidPower { bs, subcarrier: sc });
                }
                total += p;
                match self.assigned(bs, sc) {
                    Some(user) if user >= u => return Err(ConstraintViolation::Shape),
                    Some(user) if self.association[user] != Some(bs) => {
                        return Err(ConstraintViolation::ForeignAssignment {
                            bs,
                            subcarrier: sc,
                            user,
                        })
                    }
                    _ => {}
                }
            }
            let max_w = station.max_transmit_power_w;
            if total > max_w * (1.0 + POWER_TOLERANCE) {
                return Err(ConstraintViolation::PowerBudget {
                    bs,
                    total_w: total,
                    max_w,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LoadAware,
    GreedyOff,
    Fixed,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::LoadAware, Scheme::GreedyOff, Scheme::Fixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::LoadAware => "load-aware",
            Scheme::GreedyOff => "greedy-off",
            Scheme::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "load-aware" => Ok(Scheme::LoadAware),
            "greedy-off" => Ok(Scheme::GreedyOff),
            "fixed" => Ok(Scheme::Fixed),
            other => Err(format!(
                "unknown scheme `{other}` (expected load-aware, greedy-off or fixed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// `P_max / N` on assigned subcarriers; a subcarrier is only used when its
    /// queue-weighted rate outweighs its weighted power cost.
    UniformOnAssigned,
    /// Power control off: every backlogged user may take subcarriers
    /// regardless of their power cost.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Drift-plus-penalty weight on power.
    pub v_weight: f64,
    /// Slots between BS on/off decisions.
    pub bs_epoch_slots: u64,
    pub max_toggles_per_epoch: usize,
    /// Epochs a switched-off BS stays off before it may be switched on again.
    pub min_off_epochs: u64,
    pub power_mode: PowerMode,
    pub greedy_off_utilization_threshold: f64,
    /// Data unit for queues and rates inside the drift-plus-penalty score.
    pub queue_unit_bits: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            v_weight: 10.0,
            bs_epoch_slots: 10,
            max_toggles_per_epoch: 4,
            min_off_epochs: 1,
            power_mode: PowerMode::UniformOnAssigned,
            greedy_off_utilization_threshold: 0.6,
            queue_unit_bits: 1e5,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_weight >= 0.0 && self.v_weight.is_finite()) {
            return Err(format!("v_weight must be finite and >= 0, got {}", self.v_weight));
        }
        if self.bs_epoch_slots == 0 {
            return Err("bs_epoch_slots must be at least 1".into());
        }
        let th = self.greedy_off_utilization_threshold;
        if !(0.0..1.0).contains(&th) {
            return Err(format!("greedy_off_utilization_threshold must be in [0, 1), got {th}"));
        }
        if !(self.queue_unit_bits > 0.0 && self.queue_unit_bits.is_finite()) {
            return Err("queue_unit_bits must be positive".into());
        }
        Ok(())
    }

    fn is_epoch_boundary(&self, slot: u64) -> bool {
        slot.is_multiple_of(self.bs_epoch_slots)
    }
}

/// `V * sum_i PC_i - sum_x Q(x) min(Q(x), R(x))` in queue units, with rates
/// evaluated self-consistently from `decision`. Only bits that can leave the
/// queue count as service. Lower is better.
pub fn dpp_objective(
    decision: &SlotDecision,
    queue_bits: &[f64],
    scenario: &Scenario,
    gains: &Gains,
    config: &ControlConfig,
) -> f64 {
    let rates = phy::user_rates(decision, scenario, gains);
    objective_from_rates(decision, &rates, queue_bits, scenario, config)
}

fn objective_from_rates(
    decision: &SlotDecision,
    rates: &[f64],
    queue_bits: &[f64],
    scenario: &Scenario,
    config: &ControlConfig,
) -> f64 {
    let power: f64 = phy::network_power(decision, scenario).iter().sum();
    let unit = config.queue_unit_bits;
    let weighted: f64 = queue_bits
        .iter()
        .zip(rates)
        .map(|(&q, &r)| service_value(q, r, unit))
        .sum();
    config.v_weight * power - weighted
}

/// Queue-weighted service `Q * min(Q, R)` in queue units.
#[inline]
fn service_value(queue_bits: f64, rate_bits: f64, unit: f64) -> f64 {
    (queue_bits / unit) * (queue_bits.min(rate_bits) / unit)
}

/// Per-subcarrier SINR estimates for a candidate on-set, with interference
/// taken from a reference decision (the previous slot's, or a full-load
/// assumption).
struct InterferenceMap {
    num_subcarriers: usize,
    total: Vec<f64>,
}

impl InterferenceMap {
    /// Interference each user sees on each subcarrier from the BSs in `on`
    /// that transmit under `reference`.
    fn measured(on: &[bool], reference: &SlotDecision, scenario: &Scenario, gains: &Gains) -> Self {
        let n_sc = scenario.num_subcarriers;
        let mut total = vec![0.0; scenario.num_users() * n_sc];
        for j in 0..on.len() {
            if !on[j] {
                continue;
            }
            for n in 0..n_sc {
                if !reference.is_transmitting(j, n) {
                    continue;
                }
                let p = reference.power(j, n);
                for x in 0..scenario.num_users() {
                    total[x * n_sc + n] += p * gains.get(j, x, n);
                }
            }
        }
        InterferenceMap {
            num_subcarriers: n_sc,
            total,
        }
    }

    /// Interference as if every BS in `on` transmits `P_max / N` on every
    /// subcarrier.
    fn full_load(on: &[bool], scenario: &Scenario, gains: &Gains) -> Self {
        let n_sc = scenario.num_subcarriers;
        let mut total = vec![0.0; scenario.num_users() * n_sc];
        for j in (0..on.len()).filter(|&j| on[j]) {
            let p = scenario.uniform_power_w(j);
            for x in 0..scenario.num_users() {
                for n in 0..n_sc {
                    total[x * n_sc + n] += p * gains.get(j, x, n);
                }
            }
        }
        InterferenceMap {
            num_subcarriers: n_sc,
            total,
        }
    }

    #[inline]
    fn at(&self, user: usize, subcarrier: usize) -> f64 {
        self.total[user * self.num_subcarriers + subcarrier]
    }
}

/// Rate estimates for candidate serving BSs under an interference map.
struct Estimator<'a> {
    scenario: &'a Scenario,
    gains: &'a Gains,
    interference: InterferenceMap,
    /// Own contribution to subtract: power on (bs, n) counted in the map.
    own_power: Vec<f64>,
    noise: f64,
}

impl<'a> Estimator<'a> {
    fn measured(
        on: &[bool],
        reference: &SlotDecision,
        scenario: &'a Scenario,
        gains: &'a Gains,
    ) -> Self {
        let n_sc = scenario.num_subcarriers;
        let mut own_power = vec![0.0; on.len() * n_sc];
        for j in (0..on.len()).filter(|&j| on[j]) {
            for n in 0..n_sc {
                if reference.is_transmitting(j, n) {
                    own_power[j * n_sc + n] = reference.power(j, n);
                }
            }
        }
        Estimator {
            scenario,
            gains,
            interference: InterferenceMap::measured(on, reference, scenario, gains),
            own_power,
            noise: scenario.noise_power_w(),
        }
    }

    fn full_load(on: &[bool], scenario: &'a Scenario, gains: &'a Gains) -> Self {
        let n_sc = scenario.num_subcarriers;
        let mut own_power = vec![0.0; on.len() * n_sc];
        for j in (0..on.len()).filter(|&j| on[j]) {
            for n in 0..n_sc {
                own_power[j * n_sc + n] = scenario.uniform_power_w(j);
            }
        }
        Estimator {
            scenario,
            gains,
            interference: InterferenceMap::full_load(on, scenario, gains),
            own_power,
            noise: scenario.noise_power_w(),
        }
    }

    /// SINR of `user` if `bs` transmits `P_max / N` to it on `subcarrier`.
    #[inline]
    fn sinr(&self, bs: usize, user: usize, subcarrier: usize) -> f64 {
        let n_sc = self.scenario.num_subcarriers;
        let g_own = self.gains.get(bs, user, subcarrier);
        let own = self.own_power[bs * n_sc + subcarrier] * g_own;
        let interference = (self.interference.at(user, subcarrier) - own).max(0.0);
        self.scenario.uniform_power_w(bs) * g_own / (interference + self.noise)
    }

    #[inline]
    fn rate(&self, bs: usize, user: usize, subcarrier: usize) -> f64 {
        self.scenario.subcarrier_rate(self.sinr(bs, user, subcarrier))
    }

    fn best_rate(&self, bs: usize, user: usize) -> f64 {
        let best = (0..self.scenario.num_subcarriers)
            .map(|n| self.sinr(bs, user, n))
            .fold(0.0, f64::max);
        self.scenario.subcarrier_rate(best)
    }

    fn capacity(&self, bs: usize, user: usize) -> f64 {
        (0..self.scenario.num_subcarriers)
            .map(|n| self.rate(bs, user, n))
            .sum()
    }
}

/// Nearest ON BS to `user`, ties to the lowest id.
pub fn nearest_on_bs(scenario: &Scenario, on: &[bool], user: usize) -> Option<usize> {
    let pos = scenario.user_points[user].position;
    let mut best: Option<(usize, f64)> = None;
    for bs in &scenario.base_stations {
        if !on[bs.id] {
            continue;
        }
        let d = distance_m(bs.position, pos);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((bs.id, d));
        }
    }
    best.map(|(id, _)| id)
}

/// Per-BS greedy subcarrier assignment shared by load-aware and greedy-off.
///
/// Each subcarrier, in index order, goes to the associated user with the
/// largest `weight * estimated rate` (ties to the lowest user id). With
/// `residual`, the winner's weight drops by the rate it was given. With a
/// penalty, a subcarrier stays idle unless the product in queue units beats
/// `V * xi * P_max / N`.
fn assign_subcarriers(
    decision: &mut SlotDecision,
    est: &Estimator<'_>,
    weights: &[f64],
    residual_weights: bool,
    penalty: Option<(&ControlConfig, f64)>,
) {
    let scenario = est.scenario;
    let n_sc = scenario.num_subcarriers;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); scenario.num_bs()];
    for (x, assoc) in decision.association.iter().enumerate() {
        if let Some(i) = *assoc {
            if weights[x] > 0.0 {
                members[i].push(x);
            }
        }
    }
    let mut residual = weights.to_vec();
    for station in &scenario.base_stations {
        let i = station.id;
        if !decision.bs_on[i] || members[i].is_empty() {
            continue;
        }
        let p = scenario.uniform_power_w(i);
        let threshold = penalty.map(|(cfg, unit)| {
            cfg.v_weight * station.power_model.amplifier_inefficiency * p * unit * unit
        });
        for n in 0..n_sc {
            let mut best: Option<(usize, f64, f64)> = None;
            for &x in &members[i] {
                if residual[x] <= 0.0 {
                    continue;
                }
                let r = est.rate(i, x, n);
                let w = residual[x] * r;
                if best.is_none_or(|(_, bw, _)| w > bw) {
                    best = Some((x, w, r));
                }
            }
            let Some((x, w, r)) = best else { break };
            if let Some(th) = threshold {
                if w <= th {
                    continue;
                }
            }
            decision.set(i, n, Some(x), p);
            if residual_weights {
                residual[x] = (residual[x] - r).max(0.0);
            }
        }
    }
}

/// Weighted power cost `V * xi * P_max / N` of one used subcarrier of `bs`;
/// zero with power control off.
fn subcarrier_cost(scenario: &Scenario, bs: usize, config: &ControlConfig) -> f64 {
    match config.power_mode {
        PowerMode::UniformOnAssigned => {
            config.v_weight
                * scenario.base_stations[bs].power_model.amplifier_inefficiency
                * scenario.uniform_power_w(bs)
        }
        PowerMode::Off => 0.0,
    }
}

/// Association, subcarrier assignment and power for a fixed on-set under the
/// load-aware rules.
pub fn load_aware_inner(
    on: &[bool],
    state: &NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    config: &ControlConfig,
) -> SlotDecision {
    let est = Estimator::measured(on, &state.incumbent, scenario, gains);
    load_aware_inner_with(on, &est, &state.queues.queue_bits, config)
}

fn load_aware_inner_with(
    on: &[bool],
    est: &Estimator<'_>,
    queue_bits: &[f64],
    config: &ControlConfig,
) -> SlotDecision {
    let scenario = est.scenario;
    let unit = config.queue_unit_bits;
    let mut decision = SlotDecision::idle(on.to_vec(), scenario.num_users(), scenario.num_subcarriers);
    for x in 0..scenario.num_users() {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..on.len()).filter(|&i| on[i]) {
            let score = service_value(queue_bits[x], est.best_rate(i, x), unit)
                - subcarrier_cost(scenario, i, config);
            if best.is_none_or(|(_, bs)| score > bs) {
                best = Some((i, score));
            }
        }
        decision.association[x] = best.map(|(i, _)| i);
    }
    let penalty = match config.power_mode {
        PowerMode::UniformOnAssigned => Some((config, config.queue_unit_bits)),
        PowerMode::Off => None,
    };
    assign_subcarriers(&mut decision, est, queue_bits, true, penalty);

    polish_transmissions(&mut decision, est.gains, queue_bits, scenario, config);
    decision
}

/// Local search over the transmissions chosen by the assignment rule, with
/// interference evaluated from the decision itself: repeatedly flip (drop or
/// restore) the candidate transmission with the largest objective gain until
/// no flip helps.
fn polish_transmissions(
    decision: &mut SlotDecision,
    gains: &Gains,
    queue_bits: &[f64],
    scenario: &Scenario,
    config: &ControlConfig,
) {
    struct Candidate {
        bs: usize,
        user: usize,
        subcarrier: usize,
        power: f64,
        cost: f64,
        included: bool,
        /// Interference from the other included candidates on the subcarrier.
        interference: f64,
        /// Rate at that interference.
        rate: f64,
    }
    let unit = config.queue_unit_bits;
    let noise = scenario.noise_power_w();
    let n_sc = scenario.num_subcarriers;
    let mut cands = Vec::new();
    let mut by_subcarrier: Vec<Vec<usize>> = vec![Vec::new(); n_sc];
    for n in 0..n_sc {
        for b in (0..scenario.num_bs()).filter(|&b| decision.is_transmitting(b, n)) {
            by_subcarrier[n].push(cands.len());
            cands.push(Candidate {
                bs: b,
                user: decision.assigned(b, n).unwrap(),
                subcarrier: n,
                power: decision.power(b, n),
                cost: subcarrier_cost(scenario, b, config),
                included: true,
                interference: 0.0,
                rate: 0.0,
            });
        }
    }
    if cands.is_empty() {
        return;
    }
    for group in &by_subcarrier {
        for &k in group {
            let (x, n) = (cands[k].user, cands[k].subcarrier);
            cands[k].interference = group
                .iter()
                .filter(|&&j| j != k && cands[j].included)
                .map(|&j| cands[j].power * gains.get(cands[j].bs, x, n))
                .sum();
        }
    }
    let rate = |c: &Candidate, interference: f64| {
        scenario.subcarrier_rate(c.power * gains.get(c.bs, c.user, c.subcarrier) / (interference + noise))
    };
    let mut user_rate = vec![0.0; scenario.num_users()];
    for c in cands.iter_mut() {
        c.rate = rate(c, c.interference);
        if c.included {
            user_rate[c.user] += c.rate;
        }
    }
    let value = |x: usize, r: f64| service_value(queue_bits[x], r, unit);
    let mut user_subcarriers: Vec<Vec<usize>> = vec![Vec::new(); scenario.num_users()];
    for c in &cands {
        user_subcarriers[c.user].push(c.subcarrier);
    }

    // objective decrease from flipping candidate k
    let flip_gain = |cands: &[Candidate], user_rate: &[f64], k: usize| {
        let ck = &cands[k];
        let (own_dr, mut delta) = if ck.included { (-ck.rate, -ck.cost) } else { (ck.rate, ck.cost) };
        delta += value(ck.user, user_rate[ck.user]) - value(ck.user, user_rate[ck.user] + own_dr);
        let sign = if ck.included { -1.0 } else { 1.0 };
        for &j in &by_subcarrier[ck.subcarrier] {
            let c = &cands[j];
            if j == k || !c.included {
                continue;
            }
            let shifted = (c.interference + sign * ck.power * gains.get(ck.bs, c.user, c.subcarrier)).max(0.0);
            let dr = rate(c, shifted) - c.rate;
            delta += value(c.user, user_rate[c.user]) - value(c.user, user_rate[c.user] + dr);
        }
        -delta
    };
    let mut flip: Vec<f64> = (0..cands.len()).map(|k| flip_gain(&cands, &user_rate, k)).collect();
    let mut touched = vec![false; n_sc];

    loop {
        let mut best: Option<(usize, f64)> = None;
        for (k, &g) in flip.iter().enumerate() {
            if g > 1e-9 && best.is_none_or(|(_, bg)| g > bg) {
                best = Some((k, g));
            }
        }
        let Some((k, _)) = best else { break };
        let n = cands[k].subcarrier;
        let group = &by_subcarrier[n];
        for &j in group {
            if cands[j].included {
                user_rate[cands[j].user] -= cands[j].rate;
            }
        }
        cands[k].included = !cands[k].included;
        let sign = if cands[k].included { 1.0 } else { -1.0 };
        let (bk, pk) = (cands[k].bs, cands[k].power);
        for &j in group {
            if j != k {
                let c = &mut cands[j];
                c.interference = (c.interference + sign * pk * gains.get(bk, c.user, c.subcarrier)).max(0.0);
            }
        }
        for &j in group {
            let r = rate(&cands[j], cands[j].interference);
            cands[j].rate = r;
            if cands[j].included {
                user_rate[cands[j].user] += r;
            }
        }
        // Gains depend on the interference on their own subcarrier and on
        // the total rate of every user served there.
        touched.iter_mut().for_each(|t| *t = false);
        touched[n] = true;
        for &j in group {
            for &m in &user_subcarriers[cands[j].user] {
                touched[m] = true;
            }
        }
        for m in (0..n_sc).filter(|&m| touched[m]) {
            for &j in &by_subcarrier[m] {
                flip[j] = flip_gain(&cands, &user_rate, j);
            }
        }
    }
    for c in cands.iter().filter(|c| !c.included) {
        decision.set(c.bs, c.subcarrier, None, 0.0);
    }
}

fn pinned_on_set(scenario: &Scenario, incumbent: &SlotDecision) -> Vec<bool> {
    let mut on = incumbent.bs_on.clone();
    for m in scenario.macro_ids() {
        on[m] = true;
    }
    on
}

/// May BS `bs` change state at this boundary?
fn toggle_allowed(state: &NetworkState, on: bool, bs: usize, epoch: u64, config: &ControlConfig) -> bool {
    if on {
        return true;
    }
    match state.off_since_epoch.get(bs).copied().flatten() {
        Some(since) => epoch >= since + config.min_off_epochs,
        None => true,
    }
}

/// One slot of the load-aware scheme.
pub fn load_aware_step(
    state: &NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    config: &ControlConfig,
) -> Result<SlotDecision, ControlError> {
    let mut on = pinned_on_set(scenario, &state.incumbent);
    if !on.iter().any(|&b| b) {
        return Err(ControlError::Infeasible);
    }
    let queues = &state.queues.queue_bits;
    let evaluate = |on: &[bool]| {
        let est = Estimator::measured(on, &state.incumbent, scenario, gains);
        let d = load_aware_inner_with(on, &est, queues, config);
        let j = dpp_objective(&d, queues, scenario, gains, config);
        (d, j)
    };

    let (mut decision, mut objective) = evaluate(&on);
    if config.is_epoch_boundary(state.slot) {
        let epoch = state.slot / config.bs_epoch_slots;
        let mut toggled = vec![false; on.len()];
        for _ in 0..config.max_toggles_per_epoch {
            let mut best: Option<(usize, SlotDecision, f64)> = None;
            for b in scenario.small_ids() {
                if toggled[b] || !toggle_allowed(state, on[b], b, epoch, config) {
                    continue;
                }
                on[b] = !on[b];
                let (d, j) = evaluate(&on);
                on[b] = !on[b];
                if best.as_ref().is_none_or(|(_, _, bj)| j < *bj) {
                    best = Some((b, d, j));
                }
            }
            match best {
                Some((b, d, j)) if j < objective => {
                    on[b] = !on[b];
                    toggled[b] = true;
                    decision = d;
                    objective = j;
                }
                _ => break,
            }
        }
    }
    Ok(decision)
}

/// Exhaustive minimiser of [`dpp_objective`] over on-sets containing every
/// macro, all associations and all subcarrier assignments, with `P_max / N`
/// on each assigned subcarrier.
pub fn brute_force_step(
    state: &NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    config: &ControlConfig,
) -> Result<(SlotDecision, f64), ControlError> {
    let (nb, nu, nn) = (scenario.num_bs(), scenario.num_users(), scenario.num_subcarriers);
    for (what, value, limit) in [
        ("base stations", nb, BRUTE_FORCE_MAX_BS),
        ("users", nu, BRUTE_FORCE_MAX_USERS),
        ("subcarriers", nn, BRUTE_FORCE_MAX_SUBCARRIERS),
    ] {
        if value > limit {
            return Err(ControlError::TooLarge { what, value, limit });
        }
    }
    let queues = &state.queues.queue_bits;
    let small: Vec<usize> = scenario.small_ids().collect();
    let mut best: Option<(SlotDecision, f64)> = None;

    for mask in 0u32..(1 << small.len()) {
        let mut on = vec![false; nb];
        for m in scenario.macro_ids() {
            on[m] = true;
        }
        for (k, &b) in small.iter().enumerate() {
            on[b] = mask & (1 << k) != 0;
        }
        let on_ids: Vec<usize> = (0..nb).filter(|&i| on[i]).collect();
        let mut assoc_digits = vec![0usize; nu];
        loop {
            let mut base = SlotDecision::idle(on.clone(), nu, nn);
            for x in 0..nu {
                base.association[x] = Some(on_ids[assoc_digits[x]]);
            }
            // Each (BS, subcarrier) cell picks none or one associated user.
            let cells: Vec<(usize, usize, Vec<usize>)> = on_ids
                .iter()
                .flat_map(|&i| {
                    let users: Vec<usize> =
                        (0..nu).filter(|&x| base.association[x] == Some(i)).collect();
                    (0..nn).map(move |n| (i, n, users.clone()))
                })
                .collect();
            let mut choice = vec![0usize; cells.len()];
            loop {
                let mut d = base.clone();
                for (c, (i, n, users)) in cells.iter().enumerate() {
                    if choice[c] > 0 {
                        d.set(*i, *n, Some(users[choice[c] - 1]), scenario.uniform_power_w(*i));
                    }
                }
                let j = dpp_objective(&d, queues, scenario, gains, config);
                if best.as_ref().is_none_or(|(_, bj)| j < *bj) {
                    best = Some((d, j));
                }
                if !odometer(&mut choice, |c| cells[c].2.len() + 1) {
                    break;
                }
            }
            if !odometer(&mut assoc_digits, |_| on_ids.len()) {
                break;
            }
        }
    }
    best.ok_or(ControlError::Infeasible)
}

/// Advances a mixed-radix counter; false once it wraps around.
fn odometer(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in 0..digits.len() {
        digits[k] += 1;
        if digits[k] < radix(k) {
            return true;
        }
        digits[k] = 0;
    }
    false
}

/// All BSs on, nearest-BS association, round-robin subcarriers in user-id
/// order, `P_max / N` on every subcarrier of a BS with users. Independent of
/// load and time.
pub fn fixed_step(scenario: &Scenario) -> SlotDecision {
    let on = vec![true; scenario.num_bs()];
    let n_sc = scenario.num_subcarriers;
    let mut decision = SlotDecision::idle(on.clone(), scenario.num_users(), n_sc);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); scenario.num_bs()];
    for x in 0..scenario.num_users() {
        let bs = nearest_on_bs(scenario, &on, x).expect("at least one BS");
        decision.association[x] = Some(bs);
        members[bs].push(x);
    }
    for i in 0..scenario.num_bs() {
        if members[i].is_empty() {
            continue;
        }
        let p = scenario.uniform_power_w(i);
        for n in 0..n_sc {
            decision.set(i, n, Some(members[i][n % members[i].len()]), p);
        }
    }
    decision
}

/// Utilisation of every BS: sum over its users of required rate divided by
/// the rate the user would get from all N subcarriers under full-load
/// interference.
pub fn bs_utilization(
    on: &[bool],
    association: &[Option<usize>],
    required: &[f64],
    scenario: &Scenario,
    gains: &Gains,
) -> Vec<f64> {
    let est = Estimator::full_load(on, scenario, gains);
    let mut util = vec![0.0; on.len()];
    for (x, assoc) in association.iter().enumerate() {
        let Some(i) = *assoc else { continue };
        if required[x] <= 0.0 {
            continue;
        }
        let cap = est.capacity(i, x);
        util[i] += if cap > 0.0 {
            required[x] / cap
        } else {
            f64::INFINITY
        };
    }
    util
}

fn nearest_association(scenario: &Scenario, on: &[bool]) -> Vec<Option<usize>> {
    (0..scenario.num_users())
        .map(|x| nearest_on_bs(scenario, on, x))
        .collect()
}

/// Mean arrival rate of every user in `slot`.
pub fn required_rates(scenario: &Scenario, slot: u64) -> Vec<f64> {
    (0..scenario.num_users())
        .map(|x| mean_rate(&scenario.arrival_profile(x), slot, scenario.traffic.slots_per_day))
        .collect()
}

/// On-set chosen by greedy-off at an epoch boundary: starting from every BS
/// that may be on, repeatedly switch off the least utilised small BS whose
/// removal keeps every BS at or below the threshold.
pub fn greedy_off_on_set(
    state: &NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    config: &ControlConfig,
) -> Vec<bool> {
    let epoch = state.slot / config.bs_epoch_slots;
    let mut on: Vec<bool> = (0..scenario.num_bs())
        .map(|b| state.incumbent.bs_on[b] || toggle_allowed(state, false, b, epoch, config))
        .collect();
    for m in scenario.macro_ids() {
        on[m] = true;
    }
    let required = required_rates(scenario, state.slot);
    let threshold = config.greedy_off_utilization_threshold;
    loop {
        let util = bs_utilization(&on, &nearest_association(scenario, &on), &required, scenario, gains);
        let mut candidates: Vec<usize> = scenario.small_ids().filter(|&b| on[b]).collect();
        candidates.sort_by(|&a, &b| util[a].total_cmp(&util[b]).then(a.cmp(&b)));
        let switched = candidates.into_iter().find(|&b| {
            let mut trial = on.clone();
            trial[b] = false;
            let assoc = nearest_association(scenario, &trial);
            bs_utilization(&trial, &assoc, &required, scenario, gains)
                .iter()
                .enumerate()
                .all(|(i, &u)| !trial[i] || u <= threshold)
        });
        match switched {
            Some(b) => on[b] = false,
            None => return on,
        }
    }
}

/// One slot of greedy-off: on-set from [`greedy_off_on_set`] at epoch
/// boundaries, nearest-ON-BS association, and subcarriers weighted by the
/// users' required rates.
pub fn greedy_off_step(
    state: &NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    config: &ControlConfig,
) -> SlotDecision {
    let on = if config.is_epoch_boundary(state.slot) {
        greedy_off_on_set(state, scenario, gains, config)
    } else {
        pinned_on_set(scenario, &state.incumbent)
    };
    let mut decision = SlotDecision::idle(on.clone(), scenario.num_users(), scenario.num_subcarriers);
    decision.association = nearest_association(scenario, &on);
    let weights: Vec<f64> = required_rates(scenario, state.slot)
        .into_iter()
        .zip(&state.queues.queue_bits)
        .map(|(r, &q)| if q > 0.0 { r } else { 0.0 })
        .collect();
    let est = Estimator::measured(&on, &state.incumbent, scenario, gains);
    assign_subcarriers(&mut decision, &est, &weights, true, None);
    decision
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, DensityName, DensityTier, RegionSize};

    fn tiny(macros: usize, smalls: usize, users: usize, n: usize, seed: u64) -> Scenario {
        let tier = DensityTier {
            name: DensityName::Rural,
            macro_count: macros,
            small_count: smalls,
            user_count: users,
        };
        let mut s = generate_scenario(&tier, RegionSize::default(), seed).unwrap();
        s.num_subcarriers = n;
        s
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("greedy".parse::<Scheme>().is_err());
    }

    #[test]
    fn fixed_round_robin_single_bs() {
        let s = tiny(1, 0, 2, 4, 3);
        let d = fixed_step(&s);
        let user0: Vec<usize> = (0..4).filter(|&n| d.assigned(0, n) == Some(0)).collect();
        let user1: Vec<usize> = (0..4).filter(|&n| d.assigned(0, n) == Some(1)).collect();
        assert_eq!(user0, vec![0, 2]);
        assert_eq!(user1, vec![1, 3]);
        assert!(d.bs_on.iter().all(|&b| b));
        d.validate(&s).unwrap();
    }

    #[test]
    fn validate_catches_each_violation() {
        let s = tiny(1, 1, 2, 2, 5);
        let good = fixed_step(&s);
        good.validate(&s).unwrap();

        let mut d = good.clone();
        d.association[0] = None;
        assert_eq!(d.validate(&s), Err(ConstraintViolation::Unassociated { user: 0 }));

        let mut d = good.clone();
        d.bs_on[0] = false;
        assert!(matches!(d.validate(&s), Err(ConstraintViolation::AssociatedToOff { .. }) | Err(ConstraintViolation::MacroOff { .. })));

        let mut d = good.clone();
        d.power_w[0] = 25.0;
        assert!(matches!(d.validate(&s), Err(ConstraintViolation::PowerBudget { bs: 0, .. })));

        let mut d = SlotDecision::idle(vec![true, false], 2, 2);
        d.association = vec![Some(0), Some(0)];
        d.power_w[2] = 0.1;
        assert_eq!(d.validate(&s), Err(ConstraintViolation::OffBsActive { bs: 1 }));

        let mut d = SlotDecision::idle(vec![true, true], 2, 2);
        d.association = vec![Some(0), Some(1)];
        d.set(0, 0, Some(1), 1.0);
        assert!(matches!(d.validate(&s), Err(ConstraintViolation::ForeignAssignment { bs: 0, subcarrier: 0, user: 1 })));
    }

    #[test]
    fn odometer_enumerates_all_digits() {
        let mut d = vec![0usize; 3];
        let mut count = 1;
        while odometer(&mut d, |k| k + 2) {
            count += 1;
        }
        assert_eq!(count, 2 * 3 * 4);
    }

    #[test]
    fn config_validation() {
        ControlConfig::default().validate().unwrap();
        let bad = ControlConfig {
            bs_epoch_slots: 0,
            ..ControlConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControlConfig {
            v_weight: f64::NAN,
            ..ControlConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
