//! Synthetic indoor multipath CSI generator.
//!
//! Models a rectangular room with a single-antenna AP and a receiver carrying
//! a uniform linear array along the x axis. Propagation uses the image
//! method: the line-of-sight path plus one first-order reflection per wall
//! (mirrored virtual sources), each with free-space amplitude `1/d`
//! (unit gain at 1 m), a carrier-phase term, and for reflections a fixed
//! per-wall random phase drawn from the scene seed.
//!
//! Per packet, the receiver applies a sample-timing-offset phase ramp of
//! `2*pi*bin*delta/64` across FFT bins plus a constant offset `Z`, then adds
//! circular complex noise. Every draw is keyed by `(seed, location,
//! packet_index)`, so generation is reproducible and order-independent.

use crate::csi_data::{CsiSymbol, Dataset, FingerprintRecord};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::streams::{packet_stream, uniform_angle, uniform_symmetric, derive_stream, standard_normal, Domain};
use num_complex::Complex64;
use std::path::Path as FsPath;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FFT size of the OFDM demodulator the timing-offset model is defined over.
pub const N_FFT: usize = 64;

/// Signed FFT-bin index of each of the 30 reported subcarrier slots.
///
/// Symmetric about 0 and spanning +/-28 with stride 2 (stride 1 only at the
/// innermost pairs), mirroring grouped 802.11n reporting on a 64-bin FFT.
pub const SUBCARRIER_BINS: [i32; 30] = [
    -28, -26, -24, -22, -20, -18, -16, -14, -12, -10, -8, -6, -4, -2, -1, 1, 2, 4, 6, 8, 10, 12,
    14, 16, 18, 20, 22, 24, 26, 28,
];

/// Inter-packet spacing of generated bursts, seconds.
pub const PACKET_INTERVAL: f64 = 0.004;

/// Scene description: room, AP, RP grid, radio parameters, impairments.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub room_width: f64,
    pub room_depth: f64,
    pub ap_position: Point2,
    pub rp_grid_origin: Point2,
    pub rp_spacing: f64,
    pub rp_rows: usize,
    pub rp_cols: usize,
    pub carrier_freq: f64,
    pub subcarrier_spacing: f64,
    pub n_rx: usize,
    pub n_sc: usize,
    /// Element spacing of the receive array; defaults to half the carrier
    /// wavelength.
    pub antenna_spacing: f64,
    pub wall_reflection_coeff: f64,
    /// Std of the additive circular complex noise per entry (linear units).
    pub noise_std: f64,
    /// Per-packet timing lag is drawn uniformly from `[-sto_max, sto_max]`
    /// samples.
    pub sto_max: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// The standard experiment scene: a 3x5 RP grid at 1.2 m spacing in an
    /// 8x6 m room with moderate wall reflections and measurement noise.
    pub fn standard() -> Self {
        let carrier_freq = 5.32e9;
        SceneConfig {
            room_width: 8.0,
            room_depth: 6.0,
            ap_position: Point2::new(0.5, 0.5),
            rp_grid_origin: Point2::new(1.6, 1.8),
            rp_spacing: 1.2,
            rp_rows: 3,
            rp_cols: 5,
            carrier_freq,
            subcarrier_spacing: 312.5e3,
            n_rx: 3,
            n_sc: 30,
            antenna_spacing: 0.5 * SPEED_OF_LIGHT / carrier_freq,
            wall_reflection_coeff: 0.15,
            noise_std: 0.06,
            sto_max: 2.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.room_width > 0.0 && self.room_depth > 0.0) {
            return Err(Error::domain("room dimensions must be positive"));
        }
        if self.n_rx < 1 || self.n_sc < 1 {
            return Err(Error::domain("n_rx and n_sc must be at least 1"));
        }
        if self.rp_spacing <= 0.0 {
            return Err(Error::domain("rp_spacing must be positive"));
        }
        if !(0.0..=1.0).contains(&self.wall_reflection_coeff) {
            return Err(Error::domain("wall_reflection_coeff must be in [0, 1]"));
        }
        if self.noise_std < 0.0 {
            return Err(Error::domain("noise_std must be nonnegative"));
        }
        if self.sto_max < 0.0 {
            return Err(Error::domain("sto_max must be nonnegative"));
        }
        if self.carrier_freq <= 0.0 || self.subcarrier_spacing <= 0.0 {
            return Err(Error::domain("carrier_freq and subcarrier_spacing must be positive"));
        }
        if self.antenna_spacing <= 0.0 {
            return Err(Error::domain("antenna_spacing must be positive"));
        }
        if !self.contains(self.ap_position) {
            return Err(Error::domain("ap_position must lie inside the room"));
        }
        if self.rp_rows == 0 || self.rp_cols == 0 {
            return Err(Error::domain("rp grid must have at least one row and column"));
        }
        // The whole grid must lie strictly inside the room rectangle.
        for rp in self.rp_locations() {
            if !self.contains_strict(rp) {
                return Err(Error::domain(format!(
                    "rp ({:.3}, {:.3}) is not strictly inside the room",
                    rp.x, rp.y
                )));
            }
        }
        if self.n_sc != SUBCARRIER_BINS.len() {
            return Err(Error::domain(format!(
                "n_sc must be {} to match the subcarrier slot map",
                SUBCARRIER_BINS.len()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x <= self.room_width && p.y >= 0.0 && p.y <= self.room_depth
    }

    fn contains_strict(&self, p: Point2) -> bool {
        p.x > 0.0 && p.x < self.room_width && p.y > 0.0 && p.y < self.room_depth
    }

    /// RP grid coordinates, row-major from the origin.
    pub fn rp_locations(&self) -> Vec<Point2> {
        let mut out = Vec::with_capacity(self.rp_rows * self.rp_cols);
        for row in 0..self.rp_rows {
            for col in 0..self.rp_cols {
                out.push(Point2::new(
                    self.rp_grid_origin.x + col as f64 * self.rp_spacing,
                    self.rp_grid_origin.y + row as f64 * self.rp_spacing,
                ));
            }
        }
        out
    }

    /// Frequency of subcarrier slot `i`, Hz.
    pub fn slot_frequency(&self, slot: usize) -> f64 {
        self.carrier_freq + SUBCARRIER_BINS[slot] as f64 * self.subcarrier_spacing
    }

    /// Reads a scene from a `key = value` file. Missing keys fall back to
    /// radio defaults; geometry keys are required. Unknown keys are rejected.
    pub fn from_file(path: &FsPath) -> Result<Self> {
        let kv = crate::config::KeyValueFile::load(path)?;
        let scene = Self::from_key_values(&kv)?;
        kv.reject_unknown_keys()?;
        Ok(scene)
    }

    pub fn from_key_values(kv: &crate::config::KeyValueFile) -> Result<Self> {
        let carrier_freq = kv.f64_or("carrier_freq", 5.32e9)?;
        let scene = SceneConfig {
            room_width: kv.f64_required("room_width")?,
            room_depth: kv.f64_required("room_depth")?,
            ap_position: kv.point_required("ap_position")?,
            rp_grid_origin: kv.point_required("rp_grid_origin")?,
            rp_spacing: kv.f64_or("rp_spacing", 1.2)?,
            rp_rows: kv.usize_or("rp_rows", 3)?,
            rp_cols: kv.usize_or("rp_cols", 5)?,
            carrier_freq,
            subcarrier_spacing: kv.f64_or("subcarrier_spacing", 312.5e3)?,
            n_rx: kv.usize_or("n_rx", 3)?,
            n_sc: kv.usize_or("n_sc", 30)?,
            antenna_spacing: kv.f64_or("antenna_spacing", 0.5 * SPEED_OF_LIGHT / carrier_freq)?,
            wall_reflection_coeff: kv.f64_or("wall_reflection_coeff", 0.15)?,
            noise_std: kv.f64_or("noise_std", 0.0)?,
            sto_max: kv.f64_or("sto_max", 2.0)?,
            seed: kv.u64_or("seed", 0)?,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// One propagation path: delay, complex gain, and angle of arrival at the
/// receive array (measured from array broadside, so `sin(aoa)` is the x
/// component of the unit propagation direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub delay: f64,
    pub complex_gain: Complex64,
    pub aoa: f64,
}

/// Per-packet impairment draw: timing lag (samples) and constant phase
/// offset (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentDraw {
    pub sto: f64,
    pub common_phase: f64,
}

const WALL_COUNT: usize = 4;

/// Mirrors the AP across wall `w` (0: x=0, 1: x=W, 2: y=0, 3: y=D).
fn image_source(scene: &SceneConfig, wall: usize) -> Point2 {
    let ap = scene.ap_position;
    match wall {
        0 => Point2::new(-ap.x, ap.y),
        1 => Point2::new(2.0 * scene.room_width - ap.x, ap.y),
        2 => Point2::new(ap.x, -ap.y),
        _ => Point2::new(ap.x, 2.0 * scene.room_depth - ap.y),
    }
}

/// Fixed random reflection phase per wall, drawn from the scene seed.
fn wall_phase(scene: &SceneConfig, wall: usize) -> f64 {
    let mut rng = derive_stream(scene.seed, Domain::WallPhase, &[wall as u64]);
    uniform_angle(&mut rng)
}

fn path_from_source(scene: &SceneConfig, source: Point2, location: Point2, gain_scale: f64, extra_phase: f64) -> Result<Path> {
    let d = source.distance(location);
    if d < 1e-9 {
        return Err(Error::domain(
            "location coincides with the AP (or an image source); path gain undefined",
        ));
    }
    let delay = d / SPEED_OF_LIGHT;
    let magnitude = gain_scale / d;
    let phase = -std::f64::consts::TAU * scene.carrier_freq * delay + extra_phase;
    let aoa = {
        let ux = (location.x - source.x) / d;
        let uy = (location.y - source.y) / d;
        ux.atan2(uy)
    };
    Ok(Path {
        delay,
        complex_gain: Complex64::from_polar(magnitude, phase),
        aoa,
    })
}

/// Builds the multipath profile for a location: the LOS path first, then one
/// first-order image reflection per wall (5 paths).
pub fn build_paths(scene: &SceneConfig, location: Point2) -> Result<Vec<Path>> {
    if !scene.contains(location) {
        return Err(Error::domain(format!(
            "location ({:.3}, {:.3}) is outside the room",
            location.x, location.y
        )));
    }
    let mut paths = Vec::with_capacity(1 + WALL_COUNT);
    paths.push(path_from_source(scene, scene.ap_position, location, 1.0, 0.0)?);
    for wall in 0..WALL_COUNT {
        paths.push(path_from_source(
            scene,
            image_source(scene, wall),
            location,
            scene.wall_reflection_coeff,
            wall_phase(scene, wall),
        )?);
    }
    Ok(paths)
}

/// The noiseless, impairment-free channel matrix `[n_rx x n_sc]` at a
/// location: for antenna `r` and slot `i`,
/// `h = sum_p gain_p * exp(-j*2pi*f_i*tau_p) * exp(-j*2pi*(f_i/c)*spacing*r*sin(aoa_p))`.
pub fn channel_response(scene: &SceneConfig, location: Point2) -> Result<Vec<Complex64>> {
    let paths = build_paths(scene, location)?;
    Ok(response_from_paths(scene, &paths))
}

/// Evaluates the path-sum response for an explicit path list.
pub fn response_from_paths(scene: &SceneConfig, paths: &[Path]) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); scene.n_rx * scene.n_sc];
    for path in paths {
        let sin_aoa = path.aoa.sin();
        for slot in 0..scene.n_sc {
            let f = scene.slot_frequency(slot);
            let delay_phase = -std::f64::consts::TAU * f * path.delay;
            let per_antenna = -std::f64::consts::TAU * (f / SPEED_OF_LIGHT) * scene.antenna_spacing * sin_aoa;
            for rx in 0..scene.n_rx {
                let phase = delay_phase + per_antenna * rx as f64;
                h[rx * scene.n_sc + slot] += path.complex_gain * Complex64::from_polar(1.0, phase);
            }
        }
    }
    h
}

/// Draws the per-packet impairment for `(seed, location, packet_index)`.
pub fn draw_impairment(scene: &SceneConfig, location: Point2, packet_index: u32) -> ImpairmentDraw {
    let mut rng = packet_stream(scene.seed, Domain::Impairment, location, packet_index as u64);
    let sto = uniform_symmetric(&mut rng, scene.sto_max);
    let common_phase = uniform_angle(&mut rng);
    ImpairmentDraw { sto, common_phase }
}

/// Samples one CSI symbol at a location: channel response, then the packet's
/// timing/phase impairment `exp(j*(2pi*bin*sto/64 + Z))`, then additive
/// circular complex noise with total std `noise_std` per entry. Deterministic
/// in `(seed, location, packet_index)`.
pub fn sample_csi(
    scene: &SceneConfig,
    location: Point2,
    packet_index: u32,
) -> Result<(CsiSymbol, ImpairmentDraw)> {
    let response = channel_response(scene, location)?;
    let draw = draw_impairment(scene, location, packet_index);

    let mut noise_rng = packet_stream(scene.seed, Domain::Noise, location, packet_index as u64);
    let component_std = scene.noise_std / std::f64::consts::SQRT_2;

    let mut entries = Vec::with_capacity(response.len());
    for rx in 0..scene.n_rx {
        for slot in 0..scene.n_sc {
            let h0 = response[rx * scene.n_sc + slot];
            let bin = SUBCARRIER_BINS[slot] as f64;
            let imp_phase = std::f64::consts::TAU * bin * draw.sto / N_FFT as f64 + draw.common_phase;
            let mut h = h0 * Complex64::from_polar(1.0, imp_phase);
            if scene.noise_std > 0.0 {
                h += Complex64::new(
                    component_std * standard_normal(&mut noise_rng),
                    component_std * standard_normal(&mut noise_rng),
                );
            }
            entries.push(h);
        }
    }
    let symbol = CsiSymbol::new(
        scene.n_rx,
        scene.n_sc,
        entries,
        packet_index as f64 * PACKET_INTERVAL,
        packet_index,
    )?;
    Ok((symbol, draw))
}

/// Generates one record per location with `packets_per_location` symbols at
/// the 4 ms packet cadence, starting from packet index `start_index`.
pub fn generate_dataset_from(
    scene: &SceneConfig,
    packets_per_location: usize,
    locations: &[Point2],
    start_index: u32,
) -> Result<Dataset> {
    scene.validate()?;
    if locations.is_empty() {
        return Err(Error::domain("location list is empty"));
    }
    if packets_per_location == 0 {
        return Err(Error::domain("packets_per_location must be at least 1"));
    }
    let mut records = Vec::with_capacity(locations.len());
    for &loc in locations {
        let mut symbols = Vec::with_capacity(packets_per_location);
        for k in 0..packets_per_location {
            let (symbol, _) = sample_csi(scene, loc, start_index + k as u32)?;
            symbols.push(symbol);
        }
        records.push(FingerprintRecord {
            location: loc,
            label_location: loc,
            symbols,
        });
    }
    Dataset::new(scene.n_rx, scene.n_sc, records)
}

/// Generates one record per location starting at packet index 0, so
/// timestamps run 0, 4 ms, 8 ms, ...
pub fn generate_dataset(
    scene: &SceneConfig,
    packets_per_location: usize,
    locations: &[Point2],
) -> Result<Dataset> {
    generate_dataset_from(scene, packets_per_location, locations, 0)
}
