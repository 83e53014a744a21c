//! Per-packet phase calibration.
//!
//! Measured CSI phase carries an affine-in-bin distortion: a timing-lag ramp
//! of `2*pi*bin*delta/64` plus a constant offset `Z`, both redrawn every
//! packet. Calibration removes the best-fit affine term per antenna: unwrap
//! the phases along the subcarrier axis, take the endpoint slope, subtract
//! slope and mean intercept. What survives is the location-dependent phase
//! structure, identical across packets up to noise.

use crate::csi_data::{CsiSymbol, Dataset, PolarCsi};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex64;

/// Calibrated phases plus the fitted affine coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult<S: Scalar> {
    /// Residual phase after removing the fitted affine term, `[n_rx x n_sc]`.
    pub calibrated_phase: Vec<S>,
    /// Fitted phase slope per FFT bin, averaged across antennas. Absorbs the
    /// timing-offset ramp together with the propagation delay slope.
    pub slope_estimate: S,
    /// Fitted intercept at bin 0, averaged across antennas.
    pub offset_estimate: S,
}

/// Unwraps a phase sequence: adds multiples of 2*pi so successive
/// differences land in `(-pi, pi]`.
pub fn unwrap_phases<S: Scalar>(phases: &[S]) -> Vec<S> {
    let pi = S::from_f64_lossy(std::f64::consts::PI);
    let tau = S::from_f64_lossy(std::f64::consts::TAU);
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = S::zero();
    for (k, &p) in phases.iter().enumerate() {
        if k == 0 {
            out.push(p);
            continue;
        }
        let mut diff = p + offset - out[k - 1];
        while diff > pi {
            offset -= tau;
            diff -= tau;
        }
        while diff <= -pi {
            offset += tau;
            diff += tau;
        }
        out.push(p + offset);
    }
    out
}

/// Removes the per-packet affine phase distortion from one polar symbol.
///
/// `fft_bins` gives the signed FFT-bin index of each subcarrier slot and must
/// be strictly increasing. Per antenna: unwrap, fit slope between the first
/// and last unwrapped phase, fit the intercept as the mean phase after slope
/// removal, and subtract. Slope and intercept estimates are averaged across
/// antennas. Amplitudes are untouched.
pub fn calibrate_phase<S: Scalar>(polar: &PolarCsi<S>, fft_bins: &[i32]) -> Result<CalibrationResult<S>> {
    let n_sc = polar.n_sc;
    if n_sc < 2 {
        return Err(Error::domain("calibration needs at least 2 subcarriers"));
    }
    if fft_bins.len() != n_sc {
        return Err(Error::shape(format!(
            "{} fft bins for {n_sc} subcarriers",
            fft_bins.len()
        )));
    }
    if fft_bins.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("fft_bins must be strictly increasing"));
    }

    let bins: Vec<S> = fft_bins.iter().map(|&b| S::from_f64_lossy(b as f64)).collect();
    let n = S::from_f64_lossy(n_sc as f64);
    let bin_mean = bins.iter().fold(S::zero(), |acc, &b| acc + b) / n;
    let bin_span = bins[n_sc - 1] - bins[0];

    let mut calibrated = Vec::with_capacity(polar.phase.len());
    let mut slope_sum = S::zero();
    let mut offset_sum = S::zero();
    for rx in 0..polar.n_rx {
        let row = &polar.phase[rx * n_sc..(rx + 1) * n_sc];
        let unwrapped = unwrap_phases(row);
        let slope = (unwrapped[n_sc - 1] - unwrapped[0]) / bin_span;
        let phase_mean = unwrapped.iter().fold(S::zero(), |acc, &p| acc + p) / n;
        let intercept = phase_mean - slope * bin_mean;
        slope_sum += slope;
        offset_sum += intercept;
        for (k, &u) in unwrapped.iter().enumerate() {
            calibrated.push(u - slope * bins[k] - intercept);
        }
    }
    let n_rx = S::from_f64_lossy(polar.n_rx as f64);
    Ok(CalibrationResult {
        calibrated_phase: calibrated,
        slope_estimate: slope_sum / n_rx,
        offset_estimate: offset_sum / n_rx,
    })
}

/// Rewrites a symbol's phases with their calibrated values, keeping
/// amplitudes.
pub fn calibrate_symbol(symbol: &CsiSymbol, fft_bins: &[i32]) -> Result<CsiSymbol> {
    let polar = crate::csi_data::to_polar::<f64>(symbol);
    let cal = calibrate_phase(&polar, fft_bins)?;
    let entries: Vec<Complex64> = polar
        .amplitude
        .iter()
        .zip(cal.calibrated_phase.iter())
        .map(|(&a, &p)| Complex64::new(a * p.cos(), a * p.sin()))
        .collect();
    CsiSymbol::new(
        symbol.n_rx,
        symbol.n_sc,
        entries,
        symbol.timestamp,
        symbol.packet_index,
    )
}

/// Calibrates every symbol of a dataset, producing a new dataset.
pub fn calibrate_dataset(dataset: &Dataset, fft_bins: &[i32]) -> Result<Dataset> {
    let mut records = Vec::with_capacity(dataset.records.len());
    for rec in &dataset.records {
        let symbols = rec
            .symbols
            .iter()
            .map(|s| calibrate_symbol(s, fft_bins))
            .collect::<Result<Vec<_>>>()?;
        records.push(crate::csi_data::FingerprintRecord {
            location: rec.location,
            label_location: rec.label_location,
            symbols,
        });
    }
    Dataset::new(dataset.n_rx, dataset.n_sc, records)
}
