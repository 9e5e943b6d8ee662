//! Foreground mismatch calibration from injected sine tones.
//!
//! Each channel of a coherent single-tone capture is fitted with a
//! known-frequency sine. Amplitude and phase relative to channel 0 give the
//! gain and timing mismatch at that frequency; the fitted DC gives the offset.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{deinterleave, Capture, ChannelTable, MismatchProfile, TiadcConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineFitResult {
    pub amplitude: f64,
    /// In `(-pi, pi]`.
    pub phase_rad: f64,
    pub dc: f64,
    pub rms_residual: f64,
}

/// Three-parameter least-squares fit of `A cos(2*pi*r*i + phi) + DC` with the
/// frequency `r` (cycles per sample) known.
pub fn sine_fit(samples: &[f64], freq_ratio: f64) -> Result<SineFitResult> {
    if samples.len() < 8 {
        return Err(Error::DegenerateFit(format!(
            "need >= 8 samples, got {}",
            samples.len()
        )));
    }
    if !(freq_ratio > 0.0 && freq_ratio < 0.5) {
        return Err(Error::DegenerateFit(format!(
            "frequency ratio {freq_ratio} outside (0, 0.5)"
        )));
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    let basis = |i: usize| {
        let ph = 2.0 * PI * (freq_ratio * i as f64).fract();
        Vector3::new(ph.cos(), ph.sin(), 1.0)
    };
    for (i, &y) in samples.iter().enumerate() {
        let row = basis(i);
        ata += row * row.transpose();
        aty += row * y;
    }
    let svd = ata.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(Error::DegenerateFit(format!(
            "normal equations are rank deficient at frequency ratio {freq_ratio}"
        )));
    }
    let sol = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::DegenerateFit("normal equations are singular".into()))?;
    let (a, b, dc) = (sol[0], sol[1], sol[2]);
    let amplitude = a.hypot(b);
    let mut phase_rad = (-b).atan2(a);
    if phase_rad <= -PI {
        phase_rad += 2.0 * PI;
    }
    let sse: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let e = y - basis(i).dot(&sol);
            e * e
        })
        .sum();
    Ok(SineFitResult {
        amplitude,
        phase_rad,
        dc,
        rms_residual: (sse / samples.len() as f64).sqrt(),
    })
}

/// Mismatch of one channel relative to channel 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMismatch {
    pub gain_rel: f64,
    pub dt_s: f64,
    pub offset_lsb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchMeasurement {
    pub freq_hz: f64,
    pub channels: Vec<ChannelMismatch>,
}

/// Channel-rate frequency of an analog tone, folded into `[0, 0.5]`, and
/// whether the fold mirrored the spectrum (which negates fitted phases).
fn channel_rate_ratio(f_in_hz: f64, config: &TiadcConfig) -> (f64, bool) {
    let r = (f_in_hz * config.m_channels as f64 / config.fs_hz).rem_euclid(1.0);
    if r > 0.5 {
        (1.0 - r, true)
    } else {
        (r, false)
    }
}

/// Measures gain, timing and offset mismatch from a coherent single-tone
/// capture at analog frequency `f_in_hz` (any Nyquist zone).
pub fn estimate_mismatch_at(
    capture: &Capture,
    f_in_hz: f64,
    config: &TiadcConfig,
) -> Result<MismatchMeasurement> {
    config.validate()?;
    if !(f_in_hz.is_finite() && f_in_hz > 0.0) {
        return Err(Error::Frequency(f_in_hz));
    }
    let n = capture.len();
    let cycles = f_in_hz * n as f64 / config.fs_hz;
    if (cycles - cycles.round()).abs() > 1e-6 * cycles.max(1.0) {
        return Err(Error::NonCoherent { freq_hz: f_in_hz, n });
    }
    let channels = deinterleave(&capture.samples, config.m_channels)?;
    let (ratio, mirrored) = channel_rate_ratio(f_in_hz, config);
    let fits = channels
        .iter()
        .map(|ch| sine_fit(ch, ratio))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::UnreliableMeasurement {
            freq_hz: f_in_hz,
            reason: e.to_string(),
        })?;
    for (m, fit) in fits.iter().enumerate() {
        if !(fit.amplitude > 10.0 * fit.rms_residual) || fit.amplitude == 0.0 {
            return Err(Error::UnreliableMeasurement {
                freq_hz: f_in_hz,
                reason: format!(
                    "channel {m} amplitude {:.3e} V is below 10x the residual {:.3e} V",
                    fit.amplitude, fit.rms_residual
                ),
            });
        }
    }
    let omega = 2.0 * PI * f_in_hz;
    let sign = if mirrored { -1.0 } else { 1.0 };
    let phase0 = sign * fits[0].phase_rad;
    let lsb = config.lsb();
    let out = fits
        .iter()
        .enumerate()
        .map(|(m, fit)| {
            let raw = sign * fit.phase_rad - phase0 - omega * m as f64 * config.ts();
            // the 2*pi multiple giving the smallest |dt| wins; valid while |dt| < pi/omega
            let wrapped = raw - 2.0 * PI * (raw / (2.0 * PI)).round();
            ChannelMismatch {
                gain_rel: fit.amplitude / fits[0].amplitude,
                dt_s: if m == 0 { 0.0 } else { wrapped / omega },
                offset_lsb: fit.dc / lsb,
            }
        })
        .collect();
    Ok(MismatchMeasurement {
        freq_hz: f_in_hz,
        channels: out,
    })
}

/// Tabulates measurements into a profile. Offsets are averaged over all
/// measurement frequencies and stored as a constant column.
pub fn build_profile(measurements: &[MismatchMeasurement], config: &TiadcConfig) -> Result<MismatchProfile> {
    if measurements.len() < 2 {
        return Err(Error::Measurements(format!(
            "need at least 2 measurements, got {}",
            measurements.len()
        )));
    }
    let m_ch = config.m_channels;
    for w in measurements.windows(2) {
        if w[1].freq_hz == w[0].freq_hz {
            return Err(Error::Measurements(format!(
                "duplicate frequency {} Hz",
                w[0].freq_hz
            )));
        }
        if w[1].freq_hz < w[0].freq_hz {
            return Err(Error::Measurements(
                "measurements are not sorted by frequency".into(),
            ));
        }
    }
    if let Some(bad) = measurements.iter().find(|x| x.channels.len() != m_ch) {
        return Err(Error::Measurements(format!(
            "measurement at {} Hz has {} channels, expected {m_ch}",
            bad.freq_hz,
            bad.channels.len()
        )));
    }
    let freqs: Vec<f64> = measurements.iter().map(|x| x.freq_hz).collect();
    let channels = (0..m_ch)
        .map(|m| {
            let offset = measurements.iter().map(|x| x.channels[m].offset_lsb).sum::<f64>()
                / measurements.len() as f64;
            ChannelTable {
                gain: measurements.iter().map(|x| x.channels[m].gain_rel).collect(),
                dt_s: measurements.iter().map(|x| x.channels[m].dt_s).collect(),
                offset_lsb: vec![offset; freqs.len()],
            }
        })
        .collect();
    MismatchProfile::new(freqs, channels)
}

/// One row of a calibration plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub freq_hz: f64,
    pub amplitude_v: f64,
    pub n_samples: usize,
}
