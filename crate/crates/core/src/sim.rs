//! The slot loop, run metrics, sweeps and result files.
//!
//! Within a slot the order of events is fixed: the scheme produces a
//! decision, rates are computed from it, metrics are recorded, arrivals are
//! drawn, queues are updated and the slot counter advances. Aggregates cover
//! the second half of the horizon; the first half is warm-up.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    self, ConstraintViolation, ControlConfig, ControlError, Scheme, SlotDecision,
};
use crate::phy::{self, derive_seed, Gains};
use crate::scenario::{generate_scenario, DensityTier, RegionSize, Scenario, ScenarioError};
use crate::traffic::{draw_arrivals, shape_mean, QueueState};

const ARRIVAL_STREAM: u64 = 0x4152_5256;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("slot {slot}, scheme {scheme}: decision violates constraints: {violation}")]
    Constraint {
        slot: u64,
        scheme: Scheme,
        violation: ConstraintViolation,
    },
    #[error("slot {slot}: {source}")]
    Control {
        slot: u64,
        #[source]
        source: ControlError,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid control config: {0}")]
    Config(String),
    #[error("horizon must be at least one slot")]
    EmptyHorizon,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Dynamic state carried from slot to slot.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub queues: QueueState,
    /// Decision realised in the previous slot (all-on and idle before slot 0).
    pub incumbent: SlotDecision,
    pub slot: u64,
    /// Epoch in which each BS was last switched off, while it stays off.
    pub off_since_epoch: Vec<Option<u64>>,
    arrival_rng: ChaCha8Rng,
}

impl NetworkState {
    pub fn new(scenario: &Scenario, arrival_seed: u64) -> Self {
        NetworkState {
            queues: QueueState::empty(scenario.num_users()),
            incumbent: SlotDecision::all_on_idle(scenario),
            slot: 0,
            off_since_epoch: vec![None; scenario.num_bs()],
            arrival_rng: ChaCha8Rng::seed_from_u64(derive_seed(arrival_seed, &[ARRIVAL_STREAM])),
        }
    }

    /// Same state with the given backlog. Used to set up single-slot
    /// experiments.
    pub fn with_queues(mut self, queue_bits: Vec<f64>) -> Self {
        assert_eq!(queue_bits.len(), self.queues.queue_bits.len());
        self.queues.queue_bits = queue_bits;
        self
    }
}

/// Everything recorded about one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub bs_power_w: Vec<f64>,
    pub total_power_w: f64,
    /// Backlog at the start of the slot, before service.
    pub queue_bits: Vec<f64>,
    pub rate_bits: Vec<f64>,
    /// `min(Q, R)` per user.
    pub served_bits: Vec<f64>,
    pub arrived_bits: Vec<f64>,
    pub on_bs_count: usize,
}

pub fn decide(
    state: &NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    scheme: Scheme,
    config: &ControlConfig,
) -> Result<SlotDecision, SimError> {
    match scheme {
        Scheme::LoadAware => control::load_aware_step(state, scenario, gains, config)
            .map_err(|source| SimError::Control {
                slot: state.slot,
                source,
            }),
        Scheme::GreedyOff => Ok(control::greedy_off_step(state, scenario, gains, config)),
        Scheme::Fixed => Ok(control::fixed_step(scenario)),
    }
}

/// Advances `state` by one slot.
pub fn step(
    state: &mut NetworkState,
    scenario: &Scenario,
    gains: &Gains,
    scheme: Scheme,
    config: &ControlConfig,
) -> Result<SlotRecord, SimError> {
    let slot = state.slot;
    let decision = decide(state, scenario, gains, scheme, config)?;
    decision
        .validate(scenario)
        .map_err(|violation| SimError::Constraint {
            slot,
            scheme,
            violation,
        })?;

    let rate_bits = phy::user_rates(&decision, scenario, gains);
    let bs_power_w = phy::network_power(&decision, scenario);
    let queue_bits = state.queues.queue_bits.clone();
    let served_bits: Vec<f64> = queue_bits
        .iter()
        .zip(&rate_bits)
        .map(|(&q, &r)| q.min(r))
        .collect();

    let arrived_bits = draw_arrivals(&mut state.arrival_rng, scenario, slot);
    state.queues.apply(&rate_bits, &arrived_bits);

    let epoch = slot / config.bs_epoch_slots;
    for (b, since) in state.off_since_epoch.iter_mut().enumerate() {
        match (state.incumbent.bs_on[b], decision.bs_on[b]) {
            (true, false) => *since = Some(epoch),
            (_, true) => *since = None,
            _ => {}
        }
    }
    let record = SlotRecord {
        slot,
        total_power_w: bs_power_w.iter().sum(),
        bs_power_w,
        queue_bits,
        rate_bits,
        served_bits,
        arrived_bits,
        on_bs_count: decision.on_count(),
    };
    state.incumbent = decision;
    state.slot += 1;
    debug_assert_eq!(state.slot, state.queues.slot);
    Ok(record)
}

/// Time averages over the aggregation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub window_start: u64,
    pub window_slots: u64,
    pub avg_power_w: f64,
    pub avg_bs_power_w: Vec<f64>,
    pub avg_queue_bits: Vec<f64>,
    pub mean_queue_bits: f64,
    pub avg_sum_rate_bits: f64,
    pub avg_on_bs: f64,
    pub total_arrived_bits: f64,
    pub total_served_bits: f64,
}

/// Per-slot series of one run plus the aggregates derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub scheme: Scheme,
    pub total_power_w: Vec<f64>,
    pub bs_power_w: Vec<Vec<f64>>,
    pub queue_bits: Vec<Vec<f64>>,
    pub served_bits: Vec<Vec<f64>>,
    pub sum_rate_bits: Vec<f64>,
    pub arrived_bits: Vec<f64>,
    pub on_bs_count: Vec<usize>,
    pub summary: RunSummary,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl RunMetrics {
    pub fn horizon(&self) -> u64 {
        self.total_power_w.len() as u64
    }

    pub fn mean_queue_series(&self) -> Vec<f64> {
        self.queue_bits.iter().map(|q| mean(q.iter().copied())).collect()
    }

    /// Backlog averaged over users and over slots `[from, to)`.
    pub fn window_mean_queue(&self, from: usize, to: usize) -> f64 {
        mean(self.queue_bits[from..to].iter().flat_map(|q| q.iter().copied()))
    }

    /// Largest per-user mean backlog over slots `[from, to)`.
    pub fn max_user_mean_queue(&self, from: usize, to: usize) -> f64 {
        let users = self.queue_bits.first().map_or(0, Vec::len);
        (0..users)
            .map(|x| mean(self.queue_bits[from..to].iter().map(|q| q[x])))
            .fold(0.0, f64::max)
    }

    /// Aggregates over slots `[start, horizon)`, recomputed from the series.
    pub fn summarize(&self, start: usize) -> RunSummary {
        let end = self.total_power_w.len();
        let users = self.queue_bits.first().map_or(0, Vec::len);
        let bss = self.bs_power_w.first().map_or(0, Vec::len);
        let window = start..end;
        let avg_queue_bits: Vec<f64> = (0..users)
            .map(|x| mean(self.queue_bits[window.clone()].iter().map(|q| q[x])))
            .collect();
        RunSummary {
            window_start: start as u64,
            window_slots: (end - start) as u64,
            avg_power_w: mean(self.total_power_w[window.clone()].iter().copied()),
            avg_bs_power_w: (0..bss)
                .map(|b| mean(self.bs_power_w[window.clone()].iter().map(|p| p[b])))
                .collect(),
            mean_queue_bits: mean(avg_queue_bits.iter().copied()),
            avg_queue_bits,
            avg_sum_rate_bits: mean(self.sum_rate_bits[window.clone()].iter().copied()),
            avg_on_bs: mean(self.on_bs_count[window].iter().map(|&c| c as f64)),
            total_arrived_bits: self.arrived_bits.iter().sum(),
            total_served_bits: self.served_bits.iter().flatten().sum(),
        }
    }
}

/// Simulates `horizon` slots from empty queues.
pub fn run(
    scenario: &Scenario,
    scheme: Scheme,
    config: &ControlConfig,
    horizon: u64,
    arrival_seed: u64,
) -> Result<RunMetrics, SimError> {
    if horizon == 0 {
        return Err(SimError::EmptyHorizon);
    }
    config.validate().map_err(SimError::Config)?;
    let mut state = NetworkState::new(scenario, arrival_seed);
    let static_channel = scenario.channel.is_static();
    let mut block = 0;
    let mut gains = Gains::compute(scenario, block);

    let h = horizon as usize;
    let mut m = RunMetrics {
        scheme,
        total_power_w: Vec::with_capacity(h),
        bs_power_w: Vec::with_capacity(h),
        queue_bits: Vec::with_capacity(h),
        served_bits: Vec::with_capacity(h),
        sum_rate_bits: Vec::with_capacity(h),
        arrived_bits: Vec::with_capacity(h),
        on_bs_count: Vec::with_capacity(h),
        summary: RunSummary {
            window_start: 0,
            window_slots: 0,
            avg_power_w: 0.0,
            avg_bs_power_w: Vec::new(),
            avg_queue_bits: Vec::new(),
            mean_queue_bits: 0.0,
            avg_sum_rate_bits: 0.0,
            avg_on_bs: 0.0,
            total_arrived_bits: 0.0,
            total_served_bits: 0.0,
        },
    };
    for _ in 0..horizon {
        let b = state.slot / config.bs_epoch_slots;
        if !static_channel && b != block {
            block = b;
            gains = Gains::compute(scenario, block);
        }
        let rec = step(&mut state, scenario, &gains, scheme, config)?;
        m.total_power_w.push(rec.total_power_w);
        m.bs_power_w.push(rec.bs_power_w);
        m.sum_rate_bits.push(rec.rate_bits.iter().sum());
        m.queue_bits.push(rec.queue_bits);
        m.served_bits.push(rec.served_bits);
        m.arrived_bits.push(rec.arrived_bits.iter().sum());
        m.on_bs_count.push(rec.on_bs_count);
    }
    m.summary = m.summarize(h / 2);
    Ok(m)
}

/// Rates every user gets under the fixed scheme.
pub fn fixed_rates(scenario: &Scenario) -> Vec<f64> {
    let gains = Gains::compute(scenario, 0);
    phy::user_rates(&control::fixed_step(scenario), scenario, &gains)
}

/// Rescales every user's peak rate so that the time-averaged offered load,
/// as a fraction of the user's rate under the fixed scheme, averages to
/// `target` over the users that scheme serves. A user's own load is
/// proportional to its hotspot weight; users the fixed scheme cannot serve
/// get no traffic.
pub fn calibrate_offered_load(scenario: &mut Scenario, target: f64) {
    let rates = fixed_rates(scenario);
    let mean_weight = mean(
        scenario
            .user_points
            .iter()
            .zip(&rates)
            .filter(|(_, &r)| r > 0.0)
            .map(|(u, _)| u.traffic.hotspot_weight),
    );
    for (user, r) in scenario.user_points.iter_mut().zip(rates) {
        let shape = shape_mean(&scenario.traffic.day_shapes[&user.traffic.day_shape]);
        user.traffic.base_rate_bits_per_slot = if mean_weight > 0.0 && shape > 0.0 {
            target * r / (shape * mean_weight)
        } else {
            0.0
        };
    }
}

/// Mean over served users of time-averaged offered load divided by
/// fixed-scheme rate.
pub fn fixed_utilization(scenario: &Scenario) -> f64 {
    let rates = fixed_rates(scenario);
    mean(scenario.user_points.iter().zip(&rates).filter(|(_, &r)| r > 0.0).map(|(u, &r)| {
        let p = scenario.arrival_profile(u.id);
        p.base_rate_bits_per_slot * shape_mean(p.day_shape) * p.hotspot_weight / r
    }))
}

/// Largest per-user peak-hour load relative to the fixed-scheme rate.
pub fn fixed_peak_utilization(scenario: &Scenario) -> f64 {
    let rates = fixed_rates(scenario);
    scenario
        .user_points
        .iter()
        .zip(&rates)
        .filter(|(_, &r)| r > 0.0)
        .map(|(u, &r)| {
            let p = scenario.arrival_profile(u.id);
            let peak = p.day_shape.iter().cloned().fold(0.0, f64::max);
            p.base_rate_bits_per_slot * peak * p.hotspot_weight / r
        })
        .fold(0.0, f64::max)
}

/// One scenario instance of a sweep. The seed drives the arrivals of every
/// run built on this cell, so all schemes see the same traffic.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub label: String,
    pub seed: u64,
    pub scenario: Scenario,
}

/// Generates and load-calibrates one cell per (tier, seed).
pub fn tier_cells(
    tiers: &[DensityTier],
    dims: RegionSize,
    seeds: &[u64],
    offered_load: f64,
) -> Result<Vec<SweepCell>, SimError> {
    let mut cells = Vec::with_capacity(tiers.len() * seeds.len());
    for tier in tiers {
        for &seed in seeds {
            let mut scenario = generate_scenario(tier, dims, seed)?;
            calibrate_offered_load(&mut scenario, offered_load);
            cells.push(SweepCell {
                label: tier.name.to_string(),
                seed,
                scenario,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub label: String,
    pub scheme: Scheme,
    pub v_weight: f64,
    pub seed: u64,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/v{}/s{}", self.label, self.scheme, self.v_weight, self.seed)
    }
}

/// Runs the Cartesian product cells x schemes x V values and maps each
/// finished run through `reduce`. Results come back in product order
/// whatever the degree of parallelism.
pub fn sweep_with<T, F>(
    cells: &[SweepCell],
    schemes: &[Scheme],
    v_values: &[f64],
    config: &ControlConfig,
    horizon: u64,
    jobs: usize,
    reduce: F,
) -> Result<Vec<(RunKey, T)>, SimError>
where
    T: Send,
    F: Fn(&RunKey, RunMetrics) -> T + Sync,
{
    let mut plan = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        for &scheme in schemes {
            for &v in v_values {
                let key = RunKey {
                    label: cell.label.clone(),
                    scheme,
                    v_weight: v,
                    seed: cell.seed,
                };
                plan.push((c, key));
            }
        }
    }
    let exec = || {
        plan.into_par_iter()
            .map(|(c, key)| {
                let cfg = ControlConfig {
                    v_weight: key.v_weight,
                    ..config.clone()
                };
                let metrics = run(&cells[c].scenario, key.scheme, &cfg, horizon, cells[c].seed)?;
                let value = reduce(&key, metrics);
                Ok((key, value))
            })
            .collect::<Result<Vec<_>, SimError>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(exec)
}

pub fn sweep(
    cells: &[SweepCell],
    schemes: &[Scheme],
    v_values: &[f64],
    config: &ControlConfig,
    horizon: u64,
    jobs: usize,
) -> Result<Vec<(RunKey, RunMetrics)>, SimError> {
    sweep_with(cells, schemes, v_values, config, horizon, jobs, |_, m| m)
}

pub const CSV_HEADER: [&str; 7] = [
    "run_key",
    "slot",
    "scheme",
    "total_power_w",
    "mean_queue_bits",
    "on_bs_count",
    "sum_rate",
];

/// Writes one row per slot per run.
pub fn write_csv<W: Write>(out: W, runs: &[(RunKey, RunMetrics)]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (key, m) in runs {
        let key_str = key.to_string();
        for (t, q) in m.mean_queue_series().into_iter().enumerate() {
            w.write_record([
                key_str.clone(),
                t.to_string(),
                m.scheme.to_string(),
                m.total_power_w[t].to_string(),
                q.to_string(),
                m.on_bs_count[t].to_string(),
                m.sum_rate_bits[t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_key: String,
    #[serde(flatten)]
    pub key: RunKey,
    pub horizon_slots: u64,
    pub summary: RunSummary,
}

pub fn write_summary_json<W: Write>(out: W, runs: &[(RunKey, RunMetrics)]) -> Result<(), SimError> {
    let reports: Vec<RunReport> = runs
        .iter()
        .map(|(key, m)| RunReport {
            run_key: key.to_string(),
            key: key.clone(),
            horizon_slots: m.horizon(),
            summary: m.summary.clone(),
        })
        .collect();
    serde_json::to_writer_pretty(out, &reports)?;
    Ok(())
}

/// One row of the scheme comparison table: a (label, scheme, V) group
/// averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub scheme: Scheme,
    pub v_weight: f64,
    pub seeds: usize,
    pub avg_power_w: f64,
    pub mean_queue_bits: f64,
    pub avg_on_bs: f64,
}

pub fn comparison_rows(runs: &[(RunKey, RunSummary)]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for (key, s) in runs {
        let row = rows.iter_mut().find(|r| {
            r.label == key.label && r.scheme == key.scheme && r.v_weight == key.v_weight
        });
        match row {
            Some(r) => {
                r.seeds += 1;
                r.avg_power_w += s.avg_power_w;
                r.mean_queue_bits += s.mean_queue_bits;
                r.avg_on_bs += s.avg_on_bs;
            }
            None => rows.push(ComparisonRow {
                label: key.label.clone(),
                scheme: key.scheme,
                v_weight: key.v_weight,
                seeds: 1,
                avg_power_w: s.avg_power_w,
                mean_queue_bits: s.mean_queue_bits,
                avg_on_bs: s.avg_on_bs,
            }),
        }
    }
    for r in &mut rows {
        let n = r.seeds as f64;
        r.avg_power_w /= n;
        r.mean_queue_bits /= n;
        r.avg_on_bs /= n;
    }
    rows
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<10} {:<11} {:>7} {:>6} {:>14} {:>16} {:>8}\n",
        "tier", "scheme", "V", "seeds", "avg_power_w", "mean_queue_bits", "avg_on"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<11} {:>7} {:>6} {:>14.2} {:>16.1} {:>8.2}\n",
            r.label, r.scheme, r.v_weight, r.seeds, r.avg_power_w, r.mean_queue_bits, r.avg_on_bs
        ));
    }
    out
}

/// Dimensions of the tiny instances used to compare the greedy scheme with
/// the exhaustive solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSize {
    pub num_bs: usize,
    pub num_users: usize,
    pub num_subcarriers: usize,
}

impl Default for OracleSize {
    fn default() -> Self {
        OracleSize {
            num_bs: 3,
            num_users: 3,
            num_subcarriers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub seed: u64,
    pub greedy_objective: f64,
    pub optimal_objective: f64,
    pub all_on_objective: f64,
    /// `(greedy - optimal) / |optimal|`.
    pub gap: f64,
    pub feasible: bool,
    pub not_worse_than_all_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub size: OracleSize,
    pub instances: Vec<OracleInstance>,
    pub median_gap: Option<f64>,
    pub p90_gap: Option<f64>,
    pub max_gap: Option<f64>,
}

/// Seeded tiny instance: one macro plus small cells in a 400 m square and
/// random backlogs up to 5 Mbit.
pub fn oracle_instance(size: OracleSize, seed: u64) -> Result<(Scenario, NetworkState), SimError> {
    use rand::Rng;
    let tier = DensityTier {
        name: crate::scenario::DensityName::Urban,
        macro_count: 1,
        small_count: size.num_bs.saturating_sub(1),
        user_count: size.num_users,
    };
    let dims = RegionSize {
        width_m: 400.0,
        height_m: 400.0,
    };
    let mut scenario = generate_scenario(&tier, dims, seed)?;
    scenario.num_subcarriers = size.num_subcarriers;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5155_4555]));
    let queues = (0..size.num_users).map(|_| rng.gen_range(0.0..5e6)).collect();
    let state = NetworkState::new(&scenario, seed).with_queues(queues);
    Ok((scenario, state))
}

fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Compares the load-aware step with the exhaustive optimum on `count`
/// seeded instances.
pub fn oracle_comparison(
    count: usize,
    seed: u64,
    size: OracleSize,
    config: &ControlConfig,
) -> Result<OracleReport, SimError> {
    let mut instances = Vec::with_capacity(count);
    for k in 0..count as u64 {
        let inst_seed = derive_seed(seed, &[k]) & crate::scenario::MAX_SEED;
        let (scenario, state) = oracle_instance(size, inst_seed)?;
        let gains = Gains::compute(&scenario, 0);
        let greedy = control::load_aware_step(&state, &scenario, &gains, config)
            .map_err(|source| SimError::Control { slot: 0, source })?;
        let queues = &state.queues.queue_bits;
        let greedy_objective = control::dpp_objective(&greedy, queues, &scenario, &gains, config);
        let (_, optimal_objective) = control::brute_force_step(&state, &scenario, &gains, config)
            .map_err(|source| SimError::Control { slot: 0, source })?;
        let all_on = control::load_aware_inner(
            &vec![true; scenario.num_bs()],
            &state,
            &scenario,
            &gains,
            config,
        );
        let all_on_objective = control::dpp_objective(&all_on, queues, &scenario, &gains, config);
        let gap = if optimal_objective != 0.0 {
            (greedy_objective - optimal_objective) / optimal_objective.abs()
        } else {
            greedy_objective - optimal_objective
        };
        instances.push(OracleInstance {
            seed: inst_seed,
            greedy_objective,
            optimal_objective,
            all_on_objective,
            gap,
            feasible: greedy.validate(&scenario).is_ok(),
            not_worse_than_all_on: greedy_objective <= all_on_objective,
        });
    }
    let mut gaps: Vec<f64> = instances.iter().map(|i| i.gap).collect();
    gaps.sort_by(f64::total_cmp);
    Ok(OracleReport {
        size,
        median_gap: percentile(&gaps, 0.5),
        p90_gap: percentile(&gaps, 0.9),
        max_gap: gaps.last().copied(),
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::DensityName;

    fn small_scenario(seed: u64) -> Scenario {
        let tier = DensityTier {
            name: DensityName::Rural,
            macro_count: 1,
            small_count: 2,
            user_count: 6,
        };
        let mut s = generate_scenario(&tier, RegionSize::default(), seed).unwrap();
        calibrate_offered_load(&mut s, 0.3);
        s
    }

    #[test]
    fn single_slot_horizon() {
        let s = small_scenario(1);
        let m = run(&s, Scheme::Fixed, &ControlConfig::default(), 1, 1).unwrap();
        assert_eq!(m.horizon(), 1);
        assert_eq!(m.summary.window_start, 0);
        assert_eq!(m.summary.window_slots, 1);
        assert_eq!(m.summary.avg_power_w, m.total_power_w[0]);
    }

    #[test]
    fn zero_horizon_rejected() {
        let s = small_scenario(1);
        assert!(matches!(
            run(&s, Scheme::Fixed, &ControlConfig::default(), 0, 1),
            Err(SimError::EmptyHorizon)
        ));
    }

    #[test]
    fn calibration_hits_target_mean_utilization() {
        let s = small_scenario(4);
        assert!((fixed_utilization(&s) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn slot_counter_advances_by_one() {
        let s = small_scenario(2);
        let config = ControlConfig::default();
        let gains = Gains::compute(&s, 0);
        let mut state = NetworkState::new(&s, 9);
        for t in 0..25 {
            let rec = step(&mut state, &s, &gains, Scheme::LoadAware, &config).unwrap();
            assert_eq!(rec.slot, t);
            assert_eq!(state.slot, t + 1);
            assert_eq!(state.queues.slot, t + 1);
        }
    }
}
