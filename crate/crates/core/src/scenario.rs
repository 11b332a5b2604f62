//! Scenario schema, validation, labeled RNG streams, and SFC realization.
//!
//! A scenario is a TOML document. Every field has a default, so the minimal
//! document is just a seed; defaults reproduce the reference parameter table
//! (transmit powers, bandwidths, center frequencies, antenna gains, noise
//! figures, UAV kinematics). All randomness in the artifact flows from
//! [`seeded_stream`]: independent sub-streams are derived from `(seed,
//! label)` pairs, so mobility, failures, workload, and policy tie-breaks can
//! be replayed or held fixed independently of each other.
//!
//! ```toml
//! schema = "sagin-sfc-sim/v1"
//! seed = 1
//! policy = "frmg"
//!
//! [geometry]
//! uav_count = 30
//!
//! [failure]
//! lambda = 2.0
//! update_interval_slots = 3
//! ```

use std::fmt;
use std::path::Path as FsPath;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::topology::Layer;

/// Schema tag accepted by [`Scenario::from_toml_str`].
pub const SCHEMA_VERSION: &str = "sagin-sfc-sim/v1";

/// Identifier of one service function chain within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SfcId(pub u32);

impl fmt::Display for SfcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Deployment / recovery policy executed by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Matching-game recovery; admission serves small data amounts first.
    Frmg,
    /// Matching-game recovery with both orders reversed: admission and the
    /// non-resident preference class serve large data amounts first.
    Flts,
    /// Random admission: contended nodes pick among arrivals uniformly.
    Rssp,
    /// Random recovery: affected SFCs pick a uniform live neighbor instead
    /// of playing the matching game.
    Rsnt,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Frmg, Policy::Flts, Policy::Rssp, Policy::Rsnt];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Frmg => "frmg",
            Policy::Flts => "flts",
            Policy::Rssp => "rssp",
            Policy::Rsnt => "rsnt",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "frmg" => Ok(Policy::Frmg),
            "flts" => Ok(Policy::Flts),
            "rssp" => Ok(Policy::Rssp),
            "rsnt" => Ok(Policy::Rsnt),
            other => Err(ScenarioError::Field {
                field: "policy".into(),
                reason: format!("unknown policy `{other}` (expected frmg|flts|rssp|rsnt)"),
            }),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Discretization of the horizon into equal slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub slot_count: u32,
    pub slot_length_s: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { slot_count: 120, slot_length_s: 5.0 }
    }
}

impl TimeGrid {
    pub fn slot_start_s(&self, slot: u32) -> f64 {
        f64::from(slot) * self.slot_length_s
    }

    pub fn horizon_s(&self) -> f64 {
        f64::from(self.slot_count) * self.slot_length_s
    }
}

/// Physical-layer and node-capacity parameters.
///
/// dB / dBm quantities are stored as configured and converted to linear
/// factors once, by [`crate::channel::LinkBudget::new`]. Loss-type dB values
/// (`line_loss_db`) attenuate, i.e. enter formulas as `10^(-dB/10)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterSet {
    /// Ground-station transmit power toward UAVs, W.
    pub tx_power_ground_w: f64,
    /// UAV transmit power toward ground stations, W.
    pub tx_power_uav_w: f64,
    /// UAV transmit power on UAV-to-UAV links, W.
    pub tx_power_uu_w: f64,
    /// UAV transmit power on UAV-to-satellite links, W.
    pub tx_power_us_w: f64,
    /// Satellite transmit power on inter-satellite links, W.
    pub tx_power_ss_w: f64,
    /// Satellite transmit power toward ground stations, W.
    pub tx_power_sg_w: f64,
    /// Satellite reception power while receiving from UAVs, W.
    pub rx_power_us_w: f64,
    /// Satellite reception power while receiving from satellites, W.
    pub rx_power_ss_w: f64,
    /// Bandwidth of ground<->UAV links, Hz.
    pub bandwidth_gu_hz: f64,
    /// Bandwidth of UAV<->UAV links, Hz.
    pub bandwidth_uu_hz: f64,
    /// Bandwidth allocated to UAV->satellite links, Hz (carried in the
    /// configuration; the link-budget rate form for those links does not
    /// use a bandwidth term).
    pub bandwidth_us_hz: f64,
    /// Bandwidth allocated to satellite<->satellite links, Hz (see
    /// `bandwidth_us_hz`).
    pub bandwidth_ss_hz: f64,
    /// Bandwidth of satellite->ground links, Hz.
    pub bandwidth_sg_hz: f64,
    /// Center frequency of UAV<->UAV links, Hz.
    pub freq_uu_hz: f64,
    /// Center frequency of UAV->satellite links, Hz.
    pub freq_us_hz: f64,
    /// Center frequency of satellite<->satellite links, Hz.
    pub freq_ss_hz: f64,
    /// Center frequency of satellite->ground links, Hz.
    pub freq_sg_hz: f64,
    /// Combined tx*rx antenna gain on satellite->ground links, dB.
    pub gain_product_sg_db: f64,
    /// Combined tx*rx antenna gain on UAV->satellite links, dB.
    pub gain_product_us_db: f64,
    /// Combined tx*rx antenna gain on satellite<->satellite links, dB.
    pub gain_product_ss_db: f64,
    /// Noise power on UAV<->UAV links, W.
    pub noise_uu_w: f64,
    /// Reference noise density for satellite->ground links, dBm.
    pub noise_ref_dbm: f64,
    /// System noise temperature of satellite receivers, K.
    pub noise_temp_k: f64,
    /// Total line loss on link-budget satellite links, dB.
    pub line_loss_db: f64,
    /// Reference channel gain of ground<->UAV links at 1 m, linear.
    pub ref_gain_ground: f64,
    /// Noise power on ground<->UAV links, W.
    pub noise_ground_w: f64,
    /// Slant-path factor on satellite->ground links, linear (<= 1).
    pub slant_path_factor: f64,
    /// Rain attenuation on satellite->ground links, linear (<= 1); per-km
    /// dB attenuation models should be folded into this constant.
    pub rain_attenuation: f64,
    /// Required Eb/N0 at link-budget satellite receivers, dB.
    pub required_eb_n0_db: f64,
    /// Maximum usable slant range for satellite links, m. Beyond this no
    /// link forms; the same quantity (expressed in km) divides the
    /// link-budget rate as its margin term.
    pub max_slant_range_m: f64,
    /// UAV flight altitude, m.
    pub uav_altitude_m: f64,
    /// UAV cruise speed, m/s.
    pub uav_speed_mps: f64,
    /// UAV maximum speed, m/s.
    pub uav_max_speed_mps: f64,
    /// UAV power draw at maximum speed, W.
    pub uav_max_speed_power_w: f64,
    /// UAV propeller radius, m.
    pub propeller_radius_m: f64,
    /// UAV propeller count.
    pub propeller_count: f64,
    /// UAV mass, kg.
    pub uav_mass_kg: f64,
    /// Air density at flight altitude, kg/m^3.
    pub air_density: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Idle operation power of aerial and orbital nodes, W.
    pub operation_power_w: f64,
    /// Energy to process one unit of compute demand, J.
    pub compute_energy_per_unit_j: f64,
    /// Concurrent compute capacity of a node, in demand units.
    pub node_compute_capacity: f64,
    /// Storage capacity of a node, bits.
    pub node_storage_capacity_bits: f64,
    /// Enforced energy budget of a node (compute + operation), J.
    pub node_energy_capacity_j: f64,
    /// Compute throughput of a node, demand units per slot.
    pub compute_ability_per_slot: f64,
}

impl Default for ParameterSet {
    fn default() -> Self {
        ParameterSet {
            tx_power_ground_w: 0.5,
            tx_power_uav_w: 10.0,
            tx_power_uu_w: 10.0,
            tx_power_us_w: 10.0,
            tx_power_ss_w: 20.0,
            tx_power_sg_w: 20.0,
            rx_power_us_w: 1.0,
            rx_power_ss_w: 1.0,
            bandwidth_gu_hz: 2e6,
            bandwidth_uu_hz: 4e6,
            bandwidth_us_hz: 50e6,
            bandwidth_ss_hz: 80e6,
            bandwidth_sg_hz: 80e6,
            freq_uu_hz: 2.4e9,
            freq_us_hz: 3.4e9,
            freq_ss_hz: 2.2e9,
            freq_sg_hz: 20e9,
            gain_product_sg_db: 42.0,
            gain_product_us_db: 42.0,
            gain_product_ss_db: 52.0,
            noise_uu_w: 4e-13,
            noise_ref_dbm: -114.0,
            noise_temp_k: 1000.0,
            line_loss_db: 2.0,
            ref_gain_ground: 1e-4,
            noise_ground_w: 1e-13,
            slant_path_factor: 1.0,
            rain_attenuation: 0.977_237_220_955_810_7, // 0.1 dB, linear
            required_eb_n0_db: 10.0,
            max_slant_range_m: 2e6,
            uav_altitude_m: 100.0,
            uav_speed_mps: 12.0,
            uav_max_speed_mps: 12.0,
            uav_max_speed_power_w: 5.0,
            propeller_radius_m: 0.2,
            propeller_count: 4.0,
            uav_mass_kg: 2.0,
            air_density: 1.225,
            gravity: 9.8,
            operation_power_w: 5.0,
            compute_energy_per_unit_j: 50.0,
            node_compute_capacity: 3.0,
            node_storage_capacity_bits: 1.6e9,
            node_energy_capacity_j: 1e5,
            compute_ability_per_slot: 1.0,
        }
    }
}

impl ParameterSet {
    /// Compute throughput in demand units per second.
    pub fn compute_units_per_s(&self, slot_length_s: f64) -> f64 {
        self.compute_ability_per_slot / slot_length_s
    }
}

/// One satellite on a circular orbit. The track is parameterized by the
/// in-plane angle `phase + omega * t`; `inclination_rad` rotates the ground
/// track direction within the area plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSpec {
    pub altitude_m: f64,
    pub inclination_rad: f64,
    pub phase_rad: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        OrbitSpec { altitude_m: 550e3, inclination_rad: 0.0, phase_rad: -0.15 }
    }
}

/// Spatial layout: service area, UAV fleet, ground stations, satellites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// Side of the square service area, m.
    pub area_side_m: f64,
    pub uav_count: u32,
    /// Minimum pairwise UAV separation, m.
    pub min_uav_separation_m: f64,
    /// Maximum UAV<->UAV communication distance, m.
    pub uav_comm_range_m: f64,
    /// Maximum ground<->UAV communication distance, m.
    pub ground_access_radius_m: f64,
    /// Ground-station coordinates `[x, y]` in the area plane, m.
    pub ground_stations: Vec<[f64; 2]>,
    pub satellites: Vec<OrbitSpec>,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            area_side_m: 2000.0,
            uav_count: 30,
            min_uav_separation_m: 20.0,
            uav_comm_range_m: 500.0,
            ground_access_radius_m: 800.0,
            ground_stations: vec![[500.0, 500.0], [1500.0, 1500.0]],
            satellites: vec![
                OrbitSpec { altitude_m: 550e3, inclination_rad: 0.0, phase_rad: -0.15 },
                OrbitSpec {
                    altitude_m: 550e3,
                    inclination_rad: std::f64::consts::FRAC_PI_2,
                    phase_rad: -0.15,
                },
            ],
        }
    }
}

/// Explicitly pinned SFC. `origin` / `destination` index into
/// [`Geometry::ground_stations`]; `sigma` lists per-VNF compute demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfcSpec {
    pub origin: usize,
    pub destination: usize,
    pub data_amount_bits: f64,
    pub sigma: Vec<f64>,
}

/// SFC workload: either explicit `specs`, or `count` chains drawn from the
/// configured ranges on the `sfc-gen` stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfcConfig {
    pub count: u32,
    pub data_amount_range_bits: [f64; 2],
    pub vnf_count_range: [u32; 2],
    pub sigma_range: [f64; 2],
    pub specs: Vec<SfcSpec>,
}

impl Default for SfcConfig {
    fn default() -> Self {
        SfcConfig {
            count: 10,
            data_amount_range_bits: [2e8, 8e8],
            vnf_count_range: [2, 3],
            sigma_range: [0.5, 2.0],
            specs: Vec::new(),
        }
    }
}

/// Node-failure process: every `update_interval_slots` a fresh batch of
/// `Poisson(lambda)` distinct nodes (drawn from the eligible layers)
/// replaces the previous failure set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureConfig {
    pub lambda: f64,
    pub update_interval_slots: u32,
    pub eligible_layers: Vec<Layer>,
}

impl Default for FailureConfig {
    fn default() -> Self {
        FailureConfig {
            lambda: 2.0,
            update_interval_slots: 3,
            eligible_layers: vec![Layer::Uav, Layer::Satellite],
        }
    }
}

/// A fully-specified simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub seed: u64,
    pub policy: Policy,
    pub time: TimeGrid,
    pub params: ParameterSet,
    pub geometry: Geometry,
    pub sfc: SfcConfig,
    pub failure: FailureConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            schema: SCHEMA_VERSION.to_string(),
            seed: 1,
            policy: Policy::Frmg,
            time: TimeGrid::default(),
            params: ParameterSet::default(),
            geometry: Geometry::default(),
            sfc: SfcConfig::default(),
            failure: FailureConfig::default(),
        }
    }
}

/// One realized chain handed to the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedSfc {
    pub id: SfcId,
    pub origin: usize,
    pub destination: usize,
    pub data_bits: f64,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema `{found}` (this build reads `{SCHEMA_VERSION}`)")]
    Schema { found: String },
    #[error("invalid scenario field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn require(ok: bool, field: &str, reason: impl Into<String>) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Field { field: field.into(), reason: reason.into() })
    }
}

fn require_positive(value: f64, field: &str) -> Result<(), ScenarioError> {
    require(value.is_finite() && value > 0.0, field, format!("must be positive, got {value}"))
}

impl Scenario {
    pub fn load(path: impl AsRef<FsPath>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical serialized form; stamped into reports so
    /// outputs can be traced back to their exact inputs.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string().as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ScenarioError::Schema { found: self.schema.clone() });
        }
        require(self.time.slot_count >= 1, "time.slot_count", "must be at least 1")?;
        require_positive(self.time.slot_length_s, "time.slot_length_s")?;

        let p = &self.params;
        for (value, field) in [
            (p.tx_power_ground_w, "params.tx_power_ground_w"),
            (p.tx_power_uav_w, "params.tx_power_uav_w"),
            (p.tx_power_uu_w, "params.tx_power_uu_w"),
            (p.tx_power_us_w, "params.tx_power_us_w"),
            (p.tx_power_ss_w, "params.tx_power_ss_w"),
            (p.tx_power_sg_w, "params.tx_power_sg_w"),
            (p.rx_power_us_w, "params.rx_power_us_w"),
            (p.rx_power_ss_w, "params.rx_power_ss_w"),
            (p.bandwidth_gu_hz, "params.bandwidth_gu_hz"),
            (p.bandwidth_uu_hz, "params.bandwidth_uu_hz"),
            (p.bandwidth_us_hz, "params.bandwidth_us_hz"),
            (p.bandwidth_ss_hz, "params.bandwidth_ss_hz"),
            (p.bandwidth_sg_hz, "params.bandwidth_sg_hz"),
            (p.freq_uu_hz, "params.freq_uu_hz"),
            (p.freq_us_hz, "params.freq_us_hz"),
            (p.freq_ss_hz, "params.freq_ss_hz"),
            (p.freq_sg_hz, "params.freq_sg_hz"),
            (p.noise_uu_w, "params.noise_uu_w"),
            (p.noise_temp_k, "params.noise_temp_k"),
            (p.ref_gain_ground, "params.ref_gain_ground"),
            (p.noise_ground_w, "params.noise_ground_w"),
            (p.slant_path_factor, "params.slant_path_factor"),
            (p.rain_attenuation, "params.rain_attenuation"),
            (p.max_slant_range_m, "params.max_slant_range_m"),
            (p.uav_altitude_m, "params.uav_altitude_m"),
            (p.uav_speed_mps, "params.uav_speed_mps"),
            (p.uav_max_speed_mps, "params.uav_max_speed_mps"),
            (p.uav_max_speed_power_w, "params.uav_max_speed_power_w"),
            (p.propeller_radius_m, "params.propeller_radius_m"),
            (p.propeller_count, "params.propeller_count"),
            (p.uav_mass_kg, "params.uav_mass_kg"),
            (p.air_density, "params.air_density"),
            (p.gravity, "params.gravity"),
            (p.compute_energy_per_unit_j, "params.compute_energy_per_unit_j"),
            (p.node_compute_capacity, "params.node_compute_capacity"),
            (p.node_storage_capacity_bits, "params.node_storage_capacity_bits"),
            (p.node_energy_capacity_j, "params.node_energy_capacity_j"),
            (p.compute_ability_per_slot, "params.compute_ability_per_slot"),
        ] {
            require_positive(value, field)?;
        }
        require(
            p.operation_power_w.is_finite() && p.operation_power_w >= 0.0,
            "params.operation_power_w",
            "must be nonnegative",
        )?;
        require(
            p.uav_speed_mps <= p.uav_max_speed_mps,
            "params.uav_speed_mps",
            "cruise speed cannot exceed max speed",
        )?;
        require(
            p.slant_path_factor <= 1.0 && p.rain_attenuation <= 1.0,
            "params.rain_attenuation",
            "attenuation factors are linear and must be <= 1",
        )?;

        let g = &self.geometry;
        require_positive(g.area_side_m, "geometry.area_side_m")?;
        require_positive(g.uav_comm_range_m, "geometry.uav_comm_range_m")?;
        require_positive(g.ground_access_radius_m, "geometry.ground_access_radius_m")?;
        require(
            g.min_uav_separation_m.is_finite() && g.min_uav_separation_m >= 0.0,
            "geometry.min_uav_separation_m",
            "must be nonnegative",
        )?;
        require(!g.ground_stations.is_empty(), "geometry.ground_stations", "need at least one")?;
        for (i, gs) in g.ground_stations.iter().enumerate() {
            require(
                gs.iter().all(|c| c.is_finite() && *c >= 0.0 && *c <= g.area_side_m),
                "geometry.ground_stations",
                format!("station {i} at ({}, {}) lies outside the area", gs[0], gs[1]),
            )?;
        }
        for (i, orbit) in g.satellites.iter().enumerate() {
            require(
                orbit.altitude_m.is_finite() && orbit.altitude_m > 0.0,
                "geometry.satellites",
                format!("satellite {i} needs a positive altitude"),
            )?;
        }

        let s = &self.sfc;
        let ranges: [(&[f64; 2], &str); 2] = [
            (&s.data_amount_range_bits, "sfc.data_amount_range_bits"),
            (&s.sigma_range, "sfc.sigma_range"),
        ];
        for (range, field) in ranges {
            require_positive(range[0], field)?;
            require(range[0] <= range[1], field, "range low must not exceed high")?;
        }
        require(
            s.vnf_count_range[0] >= 1 && s.vnf_count_range[0] <= s.vnf_count_range[1],
            "sfc.vnf_count_range",
            "need 1 <= low <= high",
        )?;
        for (k, spec) in s.specs.iter().enumerate() {
            let field = format!("sfc.specs[{k}]");
            require(
                spec.origin < g.ground_stations.len() && spec.destination < g.ground_stations.len(),
                &field,
                "origin/destination must index geometry.ground_stations",
            )?;
            require(spec.origin != spec.destination, &field, "origin equals destination")?;
            require_positive(spec.data_amount_bits, &field)?;
            require(!spec.sigma.is_empty(), &field, "needs at least one VNF")?;
            for sg in &spec.sigma {
                require_positive(*sg, &field)?;
            }
        }
        let generated = s.specs.is_empty() && s.count > 0;
        require(
            !generated || g.ground_stations.len() >= 2,
            "geometry.ground_stations",
            "generated SFCs need at least two ground stations",
        )?;

        let f = &self.failure;
        require(f.lambda.is_finite() && f.lambda >= 0.0, "failure.lambda", "must be nonnegative")?;
        require(f.update_interval_slots >= 1, "failure.update_interval_slots", "must be >= 1")?;
        require(!f.eligible_layers.is_empty(), "failure.eligible_layers", "must not be empty")?;
        require(
            !f.eligible_layers.contains(&Layer::Ground),
            "failure.eligible_layers",
            "ground stations do not fail",
        )?;
        Ok(())
    }

    /// Materialize the SFC workload: explicit specs verbatim, otherwise
    /// `count` chains drawn from the configured ranges on `sfc-gen`.
    pub fn realize_sfcs(&self) -> Vec<RealizedSfc> {
        if !self.sfc.specs.is_empty() {
            return self
                .sfc
                .specs
                .iter()
                .enumerate()
                .map(|(k, spec)| RealizedSfc {
                    id: SfcId(k as u32),
                    origin: spec.origin,
                    destination: spec.destination,
                    data_bits: spec.data_amount_bits,
                    sigma: spec.sigma.clone(),
                })
                .collect();
        }
        let mut rng = seeded_stream(self.seed, "sfc-gen");
        let gs_count = self.geometry.ground_stations.len();
        let [data_lo, data_hi] = self.sfc.data_amount_range_bits;
        let [vnf_lo, vnf_hi] = self.sfc.vnf_count_range;
        let [sig_lo, sig_hi] = self.sfc.sigma_range;
        (0..self.sfc.count)
            .map(|k| {
                use rand::Rng;
                let data_bits = rng.gen_range(data_lo..=data_hi);
                let vnf_count = rng.gen_range(vnf_lo..=vnf_hi);
                let sigma = (0..vnf_count).map(|_| rng.gen_range(sig_lo..=sig_hi)).collect();
                let origin = rng.gen_range(0..gs_count);
                let destination = loop {
                    let d = rng.gen_range(0..gs_count);
                    if d != origin {
                        break d;
                    }
                };
                RealizedSfc { id: SfcId(k), origin, destination, data_bits, sigma }
            })
            .collect()
    }
}

/// Derive an independent RNG stream from `(seed, label)`.
///
/// The ChaCha key is `SHA-256(seed_le || 0x1f || label)`, so equal pairs
/// replay identically and distinct labels cannot collide short of a hash
/// collision. Streams drawn for one concern (mobility, failures, workload,
/// policy tie-breaks) never advance another's.
pub fn seeded_stream(seed: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn default_scenario_validates() {
        Scenario::default().validate().expect("defaults are self-consistent");
    }

    #[test]
    fn defaults_match_reference_parameters() {
        let p = ParameterSet::default();
        assert_eq!(p.tx_power_ground_w, 0.5);
        assert_eq!(p.tx_power_uav_w, 10.0);
        assert_eq!(p.tx_power_uu_w, 10.0);
        assert_eq!(p.tx_power_us_w, 10.0);
        assert_eq!(p.tx_power_ss_w, 20.0);
        assert_eq!(p.tx_power_sg_w, 20.0);
        assert_eq!(p.bandwidth_gu_hz, 2e6);
        assert_eq!(p.bandwidth_uu_hz, 4e6);
        assert_eq!(p.bandwidth_us_hz, 50e6);
        assert_eq!(p.bandwidth_ss_hz, 80e6);
        assert_eq!(p.bandwidth_sg_hz, 80e6);
        assert_eq!(p.freq_uu_hz, 2.4e9);
        assert_eq!(p.freq_us_hz, 3.4e9);
        assert_eq!(p.freq_ss_hz, 2.2e9);
        assert_eq!(p.freq_sg_hz, 20e9);
        assert_eq!(p.gain_product_sg_db, 42.0);
        assert_eq!(p.gain_product_us_db, 42.0);
        assert_eq!(p.gain_product_ss_db, 52.0);
        assert_eq!(p.noise_uu_w, 4e-13);
        assert_eq!(p.noise_ref_dbm, -114.0);
        assert_eq!(p.noise_temp_k, 1000.0);
        assert_eq!(p.line_loss_db, 2.0);
        assert_eq!(p.uav_altitude_m, 100.0);
        assert_eq!(p.uav_speed_mps, 12.0);
        assert_eq!(p.uav_max_speed_power_w, 5.0);
        assert_eq!(p.propeller_radius_m, 0.2);
        assert_eq!(p.propeller_count, 4.0);
        let g = Geometry::default();
        assert_eq!(g.area_side_m, 2000.0);
        assert_eq!(g.uav_count, 30);
        assert_eq!(g.min_uav_separation_m, 20.0);
        assert_eq!(g.uav_comm_range_m, 500.0);
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let s = Scenario::from_toml_str("seed = 7\n[geometry]\nuav_count = 12\n").unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.geometry.uav_count, 12);
        assert_eq!(s.schema, SCHEMA_VERSION);
        assert_eq!(s.time.slot_length_s, 5.0);
        assert_eq!(s.policy, Policy::Frmg);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut s = Scenario::default();
        s.seed = 99;
        s.policy = Policy::Rsnt;
        s.sfc.specs.push(SfcSpec {
            origin: 0,
            destination: 1,
            data_amount_bits: 3.2e8,
            sigma: vec![1.0, 0.75],
        });
        let text = s.to_toml_string();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.digest(), back.digest());
    }

    #[test]
    fn unknown_field_is_rejected() {
        let err = Scenario::from_toml_str("seed = 1\nturbo = true\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "got {err:?}");
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let err = Scenario::from_toml_str("schema = \"sagin-sfc-sim/v9\"\n").unwrap_err();
        match err {
            ScenarioError::Schema { found } => assert_eq!(found, "sagin-sfc-sim/v9"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_field_names_the_offender() {
        let err =
            Scenario::from_toml_str("[params]\nbandwidth_uu_hz = 0.0\n").unwrap_err();
        match err {
            ScenarioError::Field { field, .. } => assert_eq!(field, "params.bandwidth_uu_hz"),
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn origin_equals_destination_is_rejected() {
        let mut s = Scenario::default();
        s.sfc.specs.push(SfcSpec {
            origin: 1,
            destination: 1,
            data_amount_bits: 1e8,
            sigma: vec![1.0],
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn streams_replay_and_separate() {
        let mut r1 = seeded_stream(42, "mobility");
        let mut r2 = seeded_stream(42, "mobility");
        let a: Vec<u64> = (0..16).map(|_| r1.gen::<u64>()).collect();
        let b: Vec<u64> = (0..16).map(|_| r2.gen::<u64>()).collect();
        assert_eq!(a, b, "equal (seed, label) pairs must replay");
        let mut other = seeded_stream(42, "failures");
        let c: Vec<u64> = (0..16).map(|_| other.gen::<u64>()).collect();
        assert_ne!(a, c, "distinct labels must give distinct streams");
    }

    #[test]
    fn adjacent_seeds_pass_uniformity_check() {
        // 10_000 draws into 16 bins; chi-square 99.9% critical value for
        // 15 degrees of freedom is 37.70.
        for seed in [42u64, 43u64] {
            let mut rng = seeded_stream(seed, "audit");
            let mut bins = [0u32; 16];
            for _ in 0..10_000 {
                bins[(rng.gen::<u64>() >> 60) as usize] += 1;
            }
            let expected = 10_000.0 / 16.0;
            let chi2: f64 =
                bins.iter().map(|&o| (f64::from(o) - expected).powi(2) / expected).sum();
            assert!(chi2 < 37.70, "seed {seed}: chi2 = {chi2}");
        }
        let mut a = seeded_stream(42, "audit");
        let mut b = seeded_stream(43, "audit");
        let same = (0..10_000).filter(|_| a.gen::<u64>() == b.gen::<u64>()).count();
        assert_eq!(same, 0, "adjacent seeds must not produce collisions");
    }

    #[test]
    fn realized_sfcs_are_deterministic_and_in_range() {
        let s = Scenario::default();
        let a = s.realize_sfcs();
        let b = s.realize_sfcs();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for sfc in &a {
            assert!(sfc.data_bits >= 2e8 && sfc.data_bits <= 8e8);
            assert!(sfc.sigma.len() >= 2 && sfc.sigma.len() <= 3);
            for sg in &sfc.sigma {
                assert!(*sg >= 0.5 && *sg <= 2.0);
            }
            assert_ne!(sfc.origin, sfc.destination);
        }
    }

    #[test]
    fn explicit_specs_override_generation() {
        let mut s = Scenario::default();
        s.sfc.specs = vec![SfcSpec {
            origin: 1,
            destination: 0,
            data_amount_bits: 5e8,
            sigma: vec![2.0],
        }];
        let realized = s.realize_sfcs();
        assert_eq!(realized.len(), 1);
        assert_eq!(realized[0].origin, 1);
        assert_eq!(realized[0].data_bits, 5e8);
    }

    #[test]
    fn digest_tracks_content() {
        let a = Scenario::default();
        let mut b = Scenario::default();
        b.seed = 2;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
