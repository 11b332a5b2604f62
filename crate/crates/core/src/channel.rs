//! Link-budget formulas for the six transmission link kinds.
//!
//! Ground<->UAV links use an inverse-square received-power model over the
//! squared 3-D distance; UAV<->UAV links use a log-distance path loss at the
//! configured center frequency; satellite->ground links use a free-space
//! loss with slant-path and rain factors over a reference noise density; and
//! UAV->satellite / satellite<->satellite links use a link-budget rate form
//! (received power over `Eb/N0 * k_B * T_s * margin`). All capacity-bearing
//! kinds map SNR to rate through the Shannon formula.
//!
//! dB and dBm inputs are converted to linear factors exactly once, when the
//! [`LinkBudget`] is built; the per-formula operations below take linear
//! quantities. The regression harness at the bottom re-evaluates every
//! formula against `tests/data/golden_formulas.txt`, whose expected values
//! were produced by an independent calculator.

use thiserror::Error;

use crate::scenario::{Geometry, ParameterSet};
use crate::topology::LinkKind;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN_J_K: f64 = 1.380_649e-23;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ChannelError::NonPositive { name, value })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ChannelError::Negative { name, value })
    }
}

/// Power dB to linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power factor to dB.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Shannon capacity `B * log2(1 + snr)` in bit/s.
pub fn shannon_rate(bandwidth_hz: f64, snr: f64) -> Result<f64, ChannelError> {
    positive("bandwidth_hz", bandwidth_hz)?;
    nonnegative("snr", snr)?;
    Ok(bandwidth_hz * (1.0 + snr).log2())
}

/// SNR of a ground<->UAV link: `p_tx * g0 / (noise * d^2)` with `d^2` the
/// squared 3-D distance (received power falls off with the inverse square).
pub fn snr_ground_uav(
    p_tx_w: f64,
    ref_gain: f64,
    noise_w: f64,
    dist_sq_m2: f64,
) -> Result<f64, ChannelError> {
    positive("p_tx_w", p_tx_w)?;
    positive("ref_gain", ref_gain)?;
    positive("noise_w", noise_w)?;
    positive("dist_sq_m2", dist_sq_m2)?;
    Ok(p_tx_w * ref_gain / (noise_w * dist_sq_m2))
}

/// Log-distance path loss of a UAV<->UAV link in dB:
/// `20 log10(d) + 20 log10(4 pi f / c)`.
pub fn path_loss_uu_db(dist_m: f64, freq_hz: f64) -> Result<f64, ChannelError> {
    positive("dist_m", dist_m)?;
    positive("freq_hz", freq_hz)?;
    Ok(20.0 * dist_m.log10()
        + 20.0 * (4.0 * std::f64::consts::PI * freq_hz / SPEED_OF_LIGHT_M_S).log10())
}

/// SNR of a UAV<->UAV link given its path loss in dB.
pub fn snr_uu(p_tx_w: f64, noise_w: f64, loss_db: f64) -> Result<f64, ChannelError> {
    positive("p_tx_w", p_tx_w)?;
    positive("noise_w", noise_w)?;
    Ok((p_tx_w / noise_w) * db_to_linear(-loss_db))
}

/// Free-space loss factor `(c / (4 pi S f))^2` (linear, dimensionless).
pub fn free_space_loss(slant_m: f64, freq_hz: f64) -> Result<f64, ChannelError> {
    positive("slant_m", slant_m)?;
    positive("freq_hz", freq_hz)?;
    let x = SPEED_OF_LIGHT_M_S / (4.0 * std::f64::consts::PI * slant_m * freq_hz);
    Ok(x * x)
}

/// SNR of a satellite->ground link. All gain/attenuation arguments are
/// linear; `noise_w_hz` is the reference noise density in W/Hz.
pub fn snr_sg(
    p_tx_w: f64,
    gain_product: f64,
    slant_path_factor: f64,
    rain_attenuation: f64,
    fsl: f64,
    noise_w_hz: f64,
    bandwidth_hz: f64,
) -> Result<f64, ChannelError> {
    positive("p_tx_w", p_tx_w)?;
    positive("gain_product", gain_product)?;
    positive("slant_path_factor", slant_path_factor)?;
    positive("rain_attenuation", rain_attenuation)?;
    positive("fsl", fsl)?;
    positive("noise_w_hz", noise_w_hz)?;
    positive("bandwidth_hz", bandwidth_hz)?;
    Ok(p_tx_w * gain_product * slant_path_factor * rain_attenuation * fsl
        / (noise_w_hz * bandwidth_hz))
}

/// Link-budget rate of UAV->satellite and satellite<->satellite links in
/// bit/s: received power over `(Eb/N0)_req * k_B * T_s * margin`, where the
/// margin is the maximum slant range expressed in km.
pub fn rate_satellite(
    p_tx_w: f64,
    gain_product: f64,
    fsl: f64,
    line_loss: f64,
    eb_n0_req: f64,
    noise_temp_k: f64,
    margin_km: f64,
) -> Result<f64, ChannelError> {
    positive("p_tx_w", p_tx_w)?;
    positive("gain_product", gain_product)?;
    positive("fsl", fsl)?;
    positive("line_loss", line_loss)?;
    positive("eb_n0_req", eb_n0_req)?;
    positive("noise_temp_k", noise_temp_k)?;
    positive("margin_km", margin_km)?;
    Ok(p_tx_w * gain_product * fsl * line_loss
        / (eb_n0_req * BOLTZMANN_J_K * noise_temp_k * margin_km))
}

/// Per-scenario link-rate calculator with dB conversions done once.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    tx_ground_w: f64,
    tx_uav_w: f64,
    tx_uu_w: f64,
    tx_us_w: f64,
    tx_ss_w: f64,
    tx_sg_w: f64,
    bw_gu_hz: f64,
    bw_uu_hz: f64,
    bw_sg_hz: f64,
    freq_uu_hz: f64,
    freq_us_hz: f64,
    freq_ss_hz: f64,
    freq_sg_hz: f64,
    gain_sg: f64,
    gain_us: f64,
    gain_ss: f64,
    noise_uu_w: f64,
    noise_ref_w_hz: f64,
    noise_temp_k: f64,
    line_loss: f64,
    ref_gain_ground: f64,
    noise_ground_w: f64,
    slant_path_factor: f64,
    rain_attenuation: f64,
    eb_n0_req: f64,
    margin_km: f64,
    max_slant_m: f64,
    uu_range_m: f64,
    ground_radius_m: f64,
}

impl LinkBudget {
    pub fn new(params: &ParameterSet, geometry: &Geometry) -> LinkBudget {
        LinkBudget {
            tx_ground_w: params.tx_power_ground_w,
            tx_uav_w: params.tx_power_uav_w,
            tx_uu_w: params.tx_power_uu_w,
            tx_us_w: params.tx_power_us_w,
            tx_ss_w: params.tx_power_ss_w,
            tx_sg_w: params.tx_power_sg_w,
            bw_gu_hz: params.bandwidth_gu_hz,
            bw_uu_hz: params.bandwidth_uu_hz,
            bw_sg_hz: params.bandwidth_sg_hz,
            freq_uu_hz: params.freq_uu_hz,
            freq_us_hz: params.freq_us_hz,
            freq_ss_hz: params.freq_ss_hz,
            freq_sg_hz: params.freq_sg_hz,
            gain_sg: db_to_linear(params.gain_product_sg_db),
            gain_us: db_to_linear(params.gain_product_us_db),
            gain_ss: db_to_linear(params.gain_product_ss_db),
            noise_uu_w: params.noise_uu_w,
            noise_ref_w_hz: dbm_to_watts(params.noise_ref_dbm),
            noise_temp_k: params.noise_temp_k,
            line_loss: db_to_linear(-params.line_loss_db),
            ref_gain_ground: params.ref_gain_ground,
            noise_ground_w: params.noise_ground_w,
            slant_path_factor: params.slant_path_factor,
            rain_attenuation: params.rain_attenuation,
            eb_n0_req: db_to_linear(params.required_eb_n0_db),
            margin_km: params.max_slant_range_m / 1000.0,
            max_slant_m: params.max_slant_range_m,
            uu_range_m: geometry.uav_comm_range_m,
            ground_radius_m: geometry.ground_access_radius_m,
        }
    }

    /// Rate of a link of `kind` spanning `dist_m`, in bit/s. Returns 0.0
    /// when the geometry is out of range for the kind, and for storage
    /// links, which carry data through time rather than across space.
    pub fn rate_bps(&self, kind: LinkKind, dist_m: f64) -> f64 {
        debug_assert!(dist_m.is_finite() && dist_m >= 0.0);
        match kind {
            LinkKind::G2U | LinkKind::U2G => {
                if dist_m > self.ground_radius_m {
                    return 0.0;
                }
                let p = if kind == LinkKind::G2U { self.tx_ground_w } else { self.tx_uav_w };
                let snr = snr_ground_uav(
                    p,
                    self.ref_gain_ground,
                    self.noise_ground_w,
                    dist_m * dist_m,
                )
                .expect("validated parameters");
                shannon_rate(self.bw_gu_hz, snr).expect("validated parameters")
            }
            LinkKind::U2U => {
                if dist_m > self.uu_range_m {
                    return 0.0;
                }
                let loss =
                    path_loss_uu_db(dist_m, self.freq_uu_hz).expect("validated parameters");
                let snr =
                    snr_uu(self.tx_uu_w, self.noise_uu_w, loss).expect("validated parameters");
                shannon_rate(self.bw_uu_hz, snr).expect("validated parameters")
            }
            LinkKind::U2S => {
                if dist_m > self.max_slant_m {
                    return 0.0;
                }
                let fsl =
                    free_space_loss(dist_m, self.freq_us_hz).expect("validated parameters");
                rate_satellite(
                    self.tx_us_w,
                    self.gain_us,
                    fsl,
                    self.line_loss,
                    self.eb_n0_req,
                    self.noise_temp_k,
                    self.margin_km,
                )
                .expect("validated parameters")
            }
            LinkKind::S2S => {
                if dist_m > self.max_slant_m {
                    return 0.0;
                }
                let fsl =
                    free_space_loss(dist_m, self.freq_ss_hz).expect("validated parameters");
                rate_satellite(
                    self.tx_ss_w,
                    self.gain_ss,
                    fsl,
                    self.line_loss,
                    self.eb_n0_req,
                    self.noise_temp_k,
                    self.margin_km,
                )
                .expect("validated parameters")
            }
            LinkKind::S2G => {
                if dist_m > self.max_slant_m {
                    return 0.0;
                }
                let fsl =
                    free_space_loss(dist_m, self.freq_sg_hz).expect("validated parameters");
                let snr = snr_sg(
                    self.tx_sg_w,
                    self.gain_sg,
                    self.slant_path_factor,
                    self.rain_attenuation,
                    fsl,
                    self.noise_ref_w_hz,
                    self.bw_sg_hz,
                )
                .expect("validated parameters");
                shannon_rate(self.bw_sg_hz, snr).expect("validated parameters")
            }
            LinkKind::Storage => 0.0,
        }
    }

    /// Transmit power on the sending side of a link of `kind`, W.
    pub fn tx_power_w(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::G2U => self.tx_ground_w,
            LinkKind::U2G => self.tx_uav_w,
            LinkKind::U2U => self.tx_uu_w,
            LinkKind::U2S => self.tx_us_w,
            LinkKind::S2S => self.tx_ss_w,
            LinkKind::S2G => self.tx_sg_w,
            LinkKind::Storage => 0.0,
        }
    }
}

/// One row of the formula-regression harness: the formula evaluated through
/// the public operations above vs. the frozen independently-computed value.
#[derive(Debug, Clone)]
pub struct RegressionRow {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
}

/// Evaluate every golden formula row. Names map to fixed input vectors;
/// expected values come from `tests/data/golden_formulas.txt`.
pub fn formula_regression_rows() -> Vec<RegressionRow> {
    const GOLDEN: &str = include_str!("../tests/data/golden_formulas.txt");
    GOLDEN
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| {
            let mut it = line.split_whitespace();
            let name = it.next().expect("row name");
            let expected: f64 = it.next().expect("row value").parse().expect("row parses");
            let computed = evaluate_golden(name)
                .unwrap_or_else(|| panic!("golden row `{name}` has no evaluator"));
            RegressionRow { name: name.to_string(), computed, expected }
        })
        .collect()
}

fn evaluate_golden(name: &str) -> Option<f64> {
    use crate::energy;
    let alpha = 10f64.powf(-0.01);
    let hover =
        energy::hover_power(9.8, 2.0, 1.225, 0.2, 4.0).expect("valid rotor parameters");
    let v = match name {
        "shannon_b2e6_snr1" => shannon_rate(2e6, 1.0).unwrap(),
        "shannon_b4e6_snr3" => shannon_rate(4e6, 3.0).unwrap(),
        "shannon_b8e7_snr12345" => shannon_rate(8e7, 12345.678).unwrap(),
        "snr_g2u_overhead_100m" => snr_ground_uav(0.5, 1e-4, 1e-13, 100.0 * 100.0).unwrap(),
        "snr_g2u_off_300_400_100" => {
            let d2 = 300.0f64.powi(2) + 400.0f64.powi(2) + 100.0f64.powi(2);
            snr_ground_uav(0.5, 1e-4, 1e-13, d2).unwrap()
        }
        "snr_u2g_overhead_100m" => snr_ground_uav(10.0, 1e-4, 1e-13, 100.0 * 100.0).unwrap(),
        "rate_u2g_overhead_100m" => {
            let snr = snr_ground_uav(10.0, 1e-4, 1e-13, 100.0 * 100.0).unwrap();
            shannon_rate(2e6, snr).unwrap()
        }
        "path_loss_uu_1m_2g4" => path_loss_uu_db(1.0, 2.4e9).unwrap(),
        "path_loss_uu_100m_2g4" => path_loss_uu_db(100.0, 2.4e9).unwrap(),
        "path_loss_uu_250m_5g8" => path_loss_uu_db(250.0, 5.8e9).unwrap(),
        "snr_uu_100m_default" => {
            snr_uu(10.0, 4e-13, path_loss_uu_db(100.0, 2.4e9).unwrap()).unwrap()
        }
        "snr_uu_400m_default" => {
            snr_uu(10.0, 4e-13, path_loss_uu_db(400.0, 2.4e9).unwrap()).unwrap()
        }
        "rate_uu_100m_default" => {
            let snr = snr_uu(10.0, 4e-13, path_loss_uu_db(100.0, 2.4e9).unwrap()).unwrap();
            shannon_rate(4e6, snr).unwrap()
        }
        "fsl_550km_20ghz" => free_space_loss(550e3, 20e9).unwrap(),
        "fsl_1200km_3g4" => free_space_loss(1.2e6, 3.4e9).unwrap(),
        "snr_sg_550km_default" => snr_sg(
            20.0,
            db_to_linear(42.0),
            1.0,
            alpha,
            free_space_loss(550e3, 20e9).unwrap(),
            dbm_to_watts(-114.0),
            8e7,
        )
        .unwrap(),
        "rate_sg_550km_default" => {
            let snr = snr_sg(
                20.0,
                db_to_linear(42.0),
                1.0,
                alpha,
                free_space_loss(550e3, 20e9).unwrap(),
                dbm_to_watts(-114.0),
                8e7,
            )
            .unwrap();
            shannon_rate(8e7, snr).unwrap()
        }
        "rate_us_550km_default" => rate_satellite(
            10.0,
            db_to_linear(42.0),
            free_space_loss(550e3, 3.4e9).unwrap(),
            db_to_linear(-2.0),
            db_to_linear(10.0),
            1000.0,
            2000.0,
        )
        .unwrap(),
        "rate_ss_1000km_default" => rate_satellite(
            20.0,
            db_to_linear(52.0),
            free_space_loss(1.0e6, 2.2e9).unwrap(),
            db_to_linear(-2.0),
            db_to_linear(10.0),
            1000.0,
            2000.0,
        )
        .unwrap(),
        "rate_us_550km_ebn0_7db" => rate_satellite(
            10.0,
            db_to_linear(42.0),
            free_space_loss(550e3, 3.4e9).unwrap(),
            db_to_linear(-2.0),
            db_to_linear(7.0),
            1000.0,
            2000.0,
        )
        .unwrap(),
        "hover_power_default" => hover,
        "move_power_6mps" => energy::move_power(6.0, 12.0, 5.0, hover).unwrap(),
        "path_energy_60m_full_speed" => {
            energy::path_energy(60.0, 12.0, 12.0, 5.0, hover, 5.0).unwrap()
        }
        "path_energy_hover_only" => energy::path_energy(0.0, 12.0, 12.0, 5.0, hover, 5.0).unwrap(),
        "comm_energy_4e8b_1e8bps_10w" => energy::comm_energy(10.0, 4e8, 1e8).unwrap(),
        "sat_rx_energy_8e8b_2e8bps_1w" => energy::comm_energy(1.0, 8e8, 2e8).unwrap(),
        "sat_tx_energy_8e8b_2e8bps_20w" => energy::comm_energy(20.0, 8e8, 2e8).unwrap(),
        "operation_energy_5w_5s" => energy::operation_energy(5.0, 5.0),
        "compute_energy_1p5u_50j" => 1.5 * 50.0,
        _ => return None,
    };
    Some(v)
}
