//! The static simulated world: region, base stations, user points and the
//! global radio and traffic parameters.
//!
//! Scenario files are TOML. Top-level scalars come first, followed by the
//! `[channel]` and `[traffic]` tables and the `[[base_stations]]` and
//! `[[user_points]]` arrays. See the README for the full schema.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{ChannelModel, PowerModel};
use crate::traffic::{check_day_shape, ArrivalProfile, TrafficModel, UserTraffic, WEEKDAY};

pub const DEFAULT_NUM_SUBCARRIERS: usize = 16;
pub const DEFAULT_SUBCARRIER_BANDWIDTH_HZ: f64 = 180e3;
pub const DEFAULT_NOISE_PSD_DBM_PER_HZ: f64 = -174.0;
pub const MACRO_MAX_POWER_W: f64 = 20.0;
pub const SMALL_MAX_POWER_W: f64 = 1.0;
/// Placeholder peak rate written by the generator; experiments rescale it
/// with [`crate::sim::calibrate_offered_load`].
pub const DEFAULT_BASE_RATE_BITS_PER_SLOT: f64 = 200e3;
/// Largest seed a scenario file can store (TOML integers are signed).
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario needs at least one macro base station")]
    NoMacro,
    #[error("scenario needs at least one user point")]
    NoUsers,
    #[error("region dimensions must be positive, got {width} x {height}")]
    InvalidDims { width: f64, height: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("seed {0} exceeds the largest storable seed {MAX_SEED}")]
    SeedOutOfRange(u64),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialising scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BsTier {
    Macro,
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub tier: BsTier,
    pub position: Point,
    pub max_transmit_power_w: f64,
    pub power_model: PowerModel,
}

impl BaseStation {
    pub fn is_macro(&self) -> bool {
        self.tier == BsTier::Macro
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPoint {
    pub id: usize,
    pub position: Point,
    pub traffic: UserTraffic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityName {
    Urban,
    Suburban,
    Rural,
}

impl DensityName {
    pub const ALL: [DensityName; 3] = [DensityName::Urban, DensityName::Suburban, DensityName::Rural];

    pub fn as_str(&self) -> &'static str {
        match self {
            DensityName::Urban => "urban",
            DensityName::Suburban => "suburban",
            DensityName::Rural => "rural",
        }
    }
}

impl fmt::Display for DensityName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DensityName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "urban" => Ok(DensityName::Urban),
            "suburban" => Ok(DensityName::Suburban),
            "rural" => Ok(DensityName::Rural),
            other => Err(format!("unknown density tier `{other}`")),
        }
    }
}

/// Deployment density: how many BSs of each tier and how many user points
/// populate the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityTier {
    pub name: DensityName,
    pub macro_count: usize,
    pub small_count: usize,
    pub user_count: usize,
}

impl DensityTier {
    pub const fn urban() -> Self {
        DensityTier {
            name: DensityName::Urban,
            macro_count: 4,
            small_count: 16,
            user_count: 200,
        }
    }

    pub const fn suburban() -> Self {
        DensityTier {
            name: DensityName::Suburban,
            macro_count: 4,
            small_count: 8,
            user_count: 120,
        }
    }

    pub const fn rural() -> Self {
        DensityTier {
            name: DensityName::Rural,
            macro_count: 4,
            small_count: 2,
            user_count: 60,
        }
    }

    pub fn default_for(name: DensityName) -> Self {
        match name {
            DensityName::Urban => Self::urban(),
            DensityName::Suburban => Self::suburban(),
            DensityName::Rural => Self::rural(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSize {
    pub width_m: f64,
    pub height_m: f64,
}

impl Default for RegionSize {
    fn default() -> Self {
        RegionSize {
            width_m: 1000.0,
            height_m: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub region_width_m: f64,
    pub region_height_m: f64,
    pub num_subcarriers: usize,
    pub subcarrier_bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub slot_duration_s: f64,
    pub rng_seed: u64,
    pub channel: ChannelModel,
    pub traffic: TrafficModel,
    pub base_stations: Vec<BaseStation>,
    pub user_points: Vec<UserPoint>,
}

/// Macro sites on the centres of a near-square grid, small cells and users
/// uniform over the region. Pure in `(tier, dims, seed)`.
pub fn generate_scenario(
    tier: &DensityTier,
    dims: RegionSize,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    if !(dims.width_m > 0.0 && dims.height_m > 0.0) {
        return Err(ScenarioError::InvalidDims {
            width: dims.width_m,
            height: dims.height_m,
        });
    }
    if tier.macro_count == 0 {
        return Err(ScenarioError::NoMacro);
    }
    if tier.user_count == 0 {
        return Err(ScenarioError::NoUsers);
    }
    if seed > MAX_SEED {
        return Err(ScenarioError::SeedOutOfRange(seed));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base_stations = Vec::with_capacity(tier.macro_count + tier.small_count);

    let cols = (tier.macro_count as f64).sqrt().ceil() as usize;
    let rows = tier.macro_count.div_ceil(cols);
    for k in 0..tier.macro_count {
        let (r, c) = (k / cols, k % cols);
        base_stations.push(BaseStation {
            id: k,
            tier: BsTier::Macro,
            position: Point {
                x: (c as f64 + 0.5) * dims.width_m / cols as f64,
                y: (r as f64 + 0.5) * dims.height_m / rows as f64,
            },
            max_transmit_power_w: MACRO_MAX_POWER_W,
            power_model: PowerModel::MACRO,
        });
    }
    for k in 0..tier.small_count {
        base_stations.push(BaseStation {
            id: tier.macro_count + k,
            tier: BsTier::Small,
            position: uniform_point(&mut rng, dims),
            max_transmit_power_w: SMALL_MAX_POWER_W,
            power_model: PowerModel::SMALL,
        });
    }
    let user_points = (0..tier.user_count)
        .map(|id| {
            let position = uniform_point(&mut rng, dims);
            let hotspot_weight = rng.gen_range(0.5..1.5);
            UserPoint {
                id,
                position,
                traffic: UserTraffic {
                    base_rate_bits_per_slot: DEFAULT_BASE_RATE_BITS_PER_SLOT,
                    hotspot_weight,
                    day_shape: WEEKDAY.to_string(),
                },
            }
        })
        .collect();

    let scenario = Scenario {
        region_width_m: dims.width_m,
        region_height_m: dims.height_m,
        num_subcarriers: DEFAULT_NUM_SUBCARRIERS,
        subcarrier_bandwidth_hz: DEFAULT_SUBCARRIER_BANDWIDTH_HZ,
        noise_psd_dbm_per_hz: DEFAULT_NOISE_PSD_DBM_PER_HZ,
        slot_duration_s: 1.0,
        rng_seed: seed,
        channel: ChannelModel::default(),
        traffic: TrafficModel::default(),
        base_stations,
        user_points,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn uniform_point(rng: &mut ChaCha8Rng, dims: RegionSize) -> Point {
    Point {
        x: rng.gen_range(0.0..dims.width_m),
        y: rng.gen_range(0.0..dims.height_m),
    }
}

impl Scenario {
    pub fn num_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_points.len()
    }

    pub fn macro_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.base_stations.iter().filter(|b| b.is_macro()).map(|b| b.id)
    }

    pub fn small_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.base_stations.iter().filter(|b| !b.is_macro()).map(|b| b.id)
    }

    /// Noise power per subcarrier, in watts.
    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_per_hz - 30.0) / 10.0) * self.subcarrier_bandwidth_hz
    }

    /// Bits carried by one subcarrier for one slot at the given SINR.
    #[inline]
    pub fn subcarrier_rate(&self, sinr: f64) -> f64 {
        crate::phy::subcarrier_rate(sinr, self.subcarrier_bandwidth_hz, self.slot_duration_s)
    }

    /// Per-subcarrier power under uniform allocation of the BS budget.
    pub fn uniform_power_w(&self, bs: usize) -> f64 {
        self.base_stations[bs].max_transmit_power_w / self.num_subcarriers as f64
    }

    pub fn arrival_profile(&self, user: usize) -> ArrivalProfile<'_> {
        let t = &self.user_points[user].traffic;
        ArrivalProfile {
            base_rate_bits_per_slot: t.base_rate_bits_per_slot,
            day_shape: &self.traffic.day_shapes[&t.day_shape],
            hotspot_weight: t.hotspot_weight,
        }
    }

    fn contains(&self, p: Point) -> bool {
        (0.0..=self.region_width_m).contains(&p.x) && (0.0..=self.region_height_m).contains(&p.y)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invariant(msg));
        if !(self.region_width_m > 0.0 && self.region_height_m > 0.0) {
            return Err(ScenarioError::InvalidDims {
                width: self.region_width_m,
                height: self.region_height_m,
            });
        }
        if self.rng_seed > MAX_SEED {
            return Err(ScenarioError::SeedOutOfRange(self.rng_seed));
        }
        if self.num_subcarriers == 0 {
            return fail("num_subcarriers must be at least 1".into());
        }
        if !(self.subcarrier_bandwidth_hz > 0.0) {
            return fail("subcarrier_bandwidth_hz must be positive".into());
        }
        if !(self.slot_duration_s > 0.0) {
            return fail("slot_duration_s must be positive".into());
        }
        if !self.noise_psd_dbm_per_hz.is_finite() {
            return fail("noise_psd_dbm_per_hz must be finite".into());
        }
        if !self.base_stations.iter().any(BaseStation::is_macro) {
            return Err(ScenarioError::NoMacro);
        }
        if self.user_points.is_empty() {
            return Err(ScenarioError::NoUsers);
        }
        for (k, bs) in self.base_stations.iter().enumerate() {
            if bs.id != k {
                return fail(format!("base station ids must be 0..{} in order, found {} at index {k}", self.num_bs(), bs.id));
            }
            if !self.contains(bs.position) {
                return fail(format!("base station {k} at ({}, {}) lies outside the region", bs.position.x, bs.position.y));
            }
            if !(bs.max_transmit_power_w > 0.0 && bs.max_transmit_power_w.is_finite()) {
                return fail(format!("base station {k}: max_transmit_power_w must be positive"));
            }
            let pm = &bs.power_model;
            if !(pm.amplifier_inefficiency > 0.0 && pm.static_power_w >= 0.0) {
                return fail(format!("base station {k}: power model needs amplifier_inefficiency > 0 and static_power_w >= 0"));
            }
        }
        for (k, user) in self.user_points.iter().enumerate() {
            if user.id != k {
                return fail(format!("user point ids must be 0..{} in order, found {} at index {k}", self.num_users(), user.id));
            }
            if !self.contains(user.position) {
                return fail(format!("user point {k} at ({}, {}) lies outside the region", user.position.x, user.position.y));
            }
            let t = &user.traffic;
            if !(t.base_rate_bits_per_slot >= 0.0 && t.base_rate_bits_per_slot.is_finite()) {
                return fail(format!("user point {k}: base_rate_bits_per_slot must be finite and >= 0"));
            }
            if !(t.hotspot_weight >= 0.0 && t.hotspot_weight.is_finite()) {
                return fail(format!("user point {k}: hotspot_weight must be finite and >= 0"));
            }
            if !self.traffic.day_shapes.contains_key(&t.day_shape) {
                return fail(format!("user point {k}: unknown day_shape `{}`", t.day_shape));
            }
        }
        for (name, shape) in &self.traffic.day_shapes {
            if let Err(e) = check_day_shape(shape) {
                return fail(format!("day shape `{name}`: {e}"));
            }
        }
        if self.traffic.slots_per_day < 24 {
            return fail("traffic.slots_per_day must be at least 24".into());
        }
        if !(self.traffic.packet_size_bits > 0.0) {
            return fail("traffic.packet_size_bits must be positive".into());
        }
        if !(self.channel.min_distance_m > 0.0) {
            return fail("channel.min_distance_m must be positive".into());
        }
        if !(self.channel.shadowing_sigma_db >= 0.0) {
            return fail("channel.shadowing_sigma_db must be >= 0".into());
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            ScenarioError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    let text = scenario.to_toml_string()?;
    fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}
