//! Arrival process and per-user queues.
//!
//! Each user point carries a peak arrival rate, a spatial weight and the name
//! of a 24-bin day shape. The mean arrival in slot `t` is
//! `base_rate * day_shape[hour(t)] * hotspot_weight`; arrivals are drawn
//! independently per user and per slot around that mean.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub const HOURS_PER_DAY: usize = 24;

/// Weekday load relative to the daily peak, hour 0 first. Seven of the 24
/// hours sit below 10% of the peak.
pub const WEEKDAY_SHAPE: [f64; HOURS_PER_DAY] = [
    0.15, 0.08, 0.05, 0.04, 0.04, 0.05, 0.07, 0.09, 0.20, 0.40, 0.55, 0.65, 0.70, 0.70, 0.65, 0.65,
    0.70, 0.75, 0.85, 0.95, 1.00, 0.90, 0.60, 0.30,
];

/// Weekend load relative to the daily peak. Eleven hours below 10%.
pub const WEEKEND_SHAPE: [f64; HOURS_PER_DAY] = [
    0.20, 0.09, 0.06, 0.04, 0.03, 0.03, 0.03, 0.04, 0.05, 0.07, 0.09, 0.30, 0.45, 0.55, 0.60, 0.60,
    0.65, 0.70, 0.80, 0.90, 1.00, 0.85, 0.45, 0.08,
];

pub const WEEKDAY: &str = "weekday";
pub const WEEKEND: &str = "weekend";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalMode {
    /// Poisson packet count times a fixed packet size.
    Poisson,
    /// Exactly the mean every slot.
    Deterministic,
}

/// Traffic parameters shared by all user points of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub slots_per_day: u64,
    pub arrival_mode: ArrivalMode,
    pub packet_size_bits: f64,
    pub day_shapes: BTreeMap<String, Vec<f64>>,
}

impl Default for TrafficModel {
    fn default() -> Self {
        let mut day_shapes = BTreeMap::new();
        day_shapes.insert(WEEKDAY.to_string(), WEEKDAY_SHAPE.to_vec());
        day_shapes.insert(WEEKEND.to_string(), WEEKEND_SHAPE.to_vec());
        TrafficModel {
            slots_per_day: 250,
            arrival_mode: ArrivalMode::Poisson,
            packet_size_bits: 12_000.0,
            day_shapes,
        }
    }
}

/// Per-user traffic parameters as stored in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTraffic {
    pub base_rate_bits_per_slot: f64,
    pub hotspot_weight: f64,
    pub day_shape: String,
}

impl Default for UserTraffic {
    fn default() -> Self {
        UserTraffic {
            base_rate_bits_per_slot: 0.0,
            hotspot_weight: 1.0,
            day_shape: WEEKDAY.to_string(),
        }
    }
}

/// A user's arrival statistics with its day shape resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalProfile<'a> {
    pub base_rate_bits_per_slot: f64,
    pub day_shape: &'a [f64],
    pub hotspot_weight: f64,
}

pub fn hour_of_slot(slot: u64, slots_per_day: u64) -> usize {
    ((slot % slots_per_day) * HOURS_PER_DAY as u64 / slots_per_day) as usize
}

pub fn mean_rate(profile: &ArrivalProfile<'_>, slot: u64, slots_per_day: u64) -> f64 {
    profile.base_rate_bits_per_slot
        * profile.day_shape[hour_of_slot(slot, slots_per_day)]
        * profile.hotspot_weight
}

/// Fraction of day-shape bins strictly below `level` times the peak.
pub fn fraction_below(shape: &[f64], level: f64) -> f64 {
    let peak = shape.iter().cloned().fold(0.0, f64::max);
    let below = shape.iter().filter(|&&m| m < level * peak).count();
    below as f64 / shape.len() as f64
}

pub fn shape_mean(shape: &[f64]) -> f64 {
    shape.iter().sum::<f64>() / shape.len() as f64
}

/// Problems with a day-shape table, described for error messages.
pub fn check_day_shape(shape: &[f64]) -> Result<(), String> {
    if shape.len() != HOURS_PER_DAY {
        return Err(format!("expected {HOURS_PER_DAY} entries, found {}", shape.len()));
    }
    if let Some(m) = shape.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(format!("multiplier {m} outside [0, 1]"));
    }
    let peak = shape.iter().cloned().fold(0.0, f64::max);
    if peak != 1.0 {
        return Err(format!("peak multiplier is {peak}, expected 1"));
    }
    Ok(())
}

/// Draws `A(x, t)` for every user point of `scenario`, in user-id order.
pub fn draw_arrivals<R: Rng + ?Sized>(rng: &mut R, scenario: &Scenario, slot: u64) -> Vec<f64> {
    let model = &scenario.traffic;
    scenario
        .user_points
        .iter()
        .map(|user| {
            let mean = mean_rate(&scenario.arrival_profile(user.id), slot, model.slots_per_day);
            draw_one(rng, model, mean)
        })
        .collect()
}

fn draw_one<R: Rng + ?Sized>(rng: &mut R, model: &TrafficModel, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    match model.arrival_mode {
        ArrivalMode::Deterministic => mean,
        ArrivalMode::Poisson => {
            let packets = Poisson::new(mean / model.packet_size_bits)
                .expect("positive finite Poisson mean")
                .sample(rng);
            packets * model.packet_size_bits
        }
    }
}

/// Per-user backlog `Q(x, t)` in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub queue_bits: Vec<f64>,
    pub slot: u64,
}

impl QueueState {
    pub fn empty(num_users: usize) -> Self {
        QueueState {
            queue_bits: vec![0.0; num_users],
            slot: 0,
        }
    }

    /// In-place `Q <- max(Q - R, 0) + A`, then advances the slot.
    pub fn apply(&mut self, served: &[f64], arrivals: &[f64]) {
        assert_eq!(served.len(), self.queue_bits.len());
        assert_eq!(arrivals.len(), self.queue_bits.len());
        for ((q, &r), &a) in self.queue_bits.iter_mut().zip(served).zip(arrivals) {
            debug_assert!(r >= 0.0 && a >= 0.0);
            *q = (*q - r).max(0.0) + a;
        }
        self.slot += 1;
    }

    pub fn total_bits(&self) -> f64 {
        self.queue_bits.iter().sum()
    }
}

pub fn queue_update(q: &QueueState, served: &[f64], arrivals: &[f64]) -> QueueState {
    let mut next = q.clone();
    next.apply(served, arrivals);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_profile(shape: &[f64]) -> ArrivalProfile<'_> {
        ArrivalProfile {
            base_rate_bits_per_slot: 1000.0,
            day_shape: shape,
            hotspot_weight: 1.0,
        }
    }

    #[test]
    fn mean_rate_identity_and_zero() {
        let mut shape = WEEKDAY_SHAPE;
        let p = flat_profile(&shape);
        // hour 20 is the peak
        let peak_slot = 20 * 250 / 24 + 1;
        assert_eq!(hour_of_slot(peak_slot, 250), 20);
        assert_eq!(mean_rate(&p, peak_slot, 250), 1000.0);

        shape[20] = 0.0;
        let p = ArrivalProfile {
            hotspot_weight: 3.5,
            ..flat_profile(&shape)
        };
        assert_eq!(mean_rate(&p, peak_slot, 250), 0.0);
    }

    #[test]
    fn hour_mapping_covers_the_day() {
        assert_eq!(hour_of_slot(0, 24), 0);
        assert_eq!(hour_of_slot(23, 24), 23);
        assert_eq!(hour_of_slot(24, 24), 0);
        assert_eq!(hour_of_slot(249, 250), 23);
        assert_eq!(hour_of_slot(250, 250), 0);
    }

    #[test]
    fn default_shapes_are_valid() {
        check_day_shape(&WEEKDAY_SHAPE).unwrap();
        check_day_shape(&WEEKEND_SHAPE).unwrap();
        assert!(check_day_shape(&[0.5; 24]).is_err());
        assert!(check_day_shape(&[1.0; 23]).is_err());
    }

    #[test]
    fn weekday_low_traffic_hours() {
        let below = WEEKDAY_SHAPE.iter().filter(|&&m| m < 0.1).count();
        assert_eq!(below, 7);
        let frac = fraction_below(&WEEKDAY_SHAPE, 0.1);
        assert!((0.25..=0.35).contains(&frac));
        let weekend = WEEKEND_SHAPE.iter().filter(|&&m| m < 0.1).count();
        assert_eq!(weekend, 11);
    }

    #[test]
    fn deterministic_and_zero_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = TrafficModel {
            arrival_mode: ArrivalMode::Deterministic,
            ..TrafficModel::default()
        };
        assert_eq!(draw_one(&mut rng, &model, 1234.5), 1234.5);
        model.arrival_mode = ArrivalMode::Poisson;
        for _ in 0..100 {
            assert_eq!(draw_one(&mut rng, &model, 0.0), 0.0);
        }
    }

    #[test]
    fn poisson_sample_mean_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let model = TrafficModel {
            packet_size_bits: 1.0,
            ..TrafficModel::default()
        };
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| draw_one(&mut rng, &model, 1000.0)).sum::<f64>() / n as f64;
        // Var(A) = packet * mean, so the standard error is sqrt(1000 / n).
        let se = (1000.0f64 / n as f64).sqrt();
        assert!((mean - 1000.0).abs() < 3.0 * se, "sample mean {mean}");
    }

    #[test]
    fn queue_recursion_cases() {
        let q = QueueState {
            queue_bits: vec![5.0, 1.0, 0.0],
            slot: 3,
        };
        let next = queue_update(&q, &[3.0, 5.0, 0.0], &[2.0, 0.0, 7.0]);
        assert_eq!(next.queue_bits, vec![4.0, 0.0, 7.0]);
        assert_eq!(next.slot, 4);
    }
}
