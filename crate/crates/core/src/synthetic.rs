//! Smooth synthetic mismatch profiles used as ground truth in simulations.
//!
//! Gain follows `1 + b_m + a_m * (1 - cos(2*pi*f/P))` and timing error is
//! `c_m + q_m * f^2`. Both are even in `f`, as the magnitude and group delay
//! of a real channel are, so the two-sided response has no kink at DC.
//! Offsets are constant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelTable, MismatchProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticProfile {
    pub gain_offset: Vec<f64>,
    pub gain_ripple: Vec<f64>,
    pub ripple_period_hz: f64,
    pub dt_ps: Vec<f64>,
    /// Curvature of the timing error, ps per GHz^2.
    pub dt_curve_ps_per_ghz2: Vec<f64>,
    pub offset_lsb: Vec<f64>,
    /// Table spans `0..=max_freq_hz` with this many rows.
    pub rows: usize,
    pub max_freq_hz: f64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self::reference(4, 1.6e9)
    }
}

impl SyntheticProfile {
    /// Reference profile: gain within +/-1 %, timing within +/-2 ps up to
    /// `fs` (for fs <= 1.6 GHz), offsets within +/-2 LSB. Valid for any
    /// channel count.
    pub fn reference(m_channels: usize, fs_hz: f64) -> Self {
        let ch = |f: &dyn Fn(f64) -> f64| (0..m_channels).map(|m| f(m as f64)).collect::<Vec<_>>();
        SyntheticProfile {
            gain_offset: ch(&|m| 0.005 * (1.9 * m + 0.5).sin()),
            gain_ripple: ch(&|m| 0.0025 * (1.3 * m + 0.4).cos()),
            ripple_period_hz: 2.0e9,
            dt_ps: ch(&|m| 0.9 * (2.3 * m + 0.7).sin()),
            dt_curve_ps_per_ghz2: ch(&|m| 0.4 * (1.7 * m + 0.2).cos()),
            offset_lsb: ch(&|m| 2.0 * (2.9 * m + 1.1).sin()),
            rows: 129,
            max_freq_hz: fs_hz,
        }
    }

    pub fn m_channels(&self) -> usize {
        self.gain_offset.len()
    }

    pub fn gain(&self, m: usize, freq_hz: f64) -> f64 {
        1.0 + self.gain_offset[m]
            + self.gain_ripple[m] * (1.0 - (2.0 * PI * freq_hz / self.ripple_period_hz).cos())
    }

    pub fn dt_s(&self, m: usize, freq_hz: f64) -> f64 {
        let g = freq_hz / 1e9;
        (self.dt_ps[m] + self.dt_curve_ps_per_ghz2[m] * g * g) * 1e-12
    }

    pub fn to_profile(&self) -> Result<MismatchProfile> {
        let m = self.m_channels();
        let lens = [
            self.gain_ripple.len(),
            self.dt_ps.len(),
            self.dt_curve_ps_per_ghz2.len(),
            self.offset_lsb.len(),
        ];
        if lens.iter().any(|l| *l != m) {
            return Err(Error::Profile(
                "synthetic profile vectors differ in length".into(),
            ));
        }
        if self.rows < 2 || !(self.max_freq_hz > 0.0) || !(self.ripple_period_hz > 0.0) {
            return Err(Error::Profile(
                "synthetic profile needs >= 2 rows and a positive span".into(),
            ));
        }
        let freqs: Vec<f64> = (0..self.rows)
            .map(|i| self.max_freq_hz * i as f64 / (self.rows - 1) as f64)
            .collect();
        let channels = (0..m)
            .map(|c| ChannelTable {
                gain: freqs.iter().map(|f| self.gain(c, *f)).collect(),
                dt_s: freqs.iter().map(|f| self.dt_s(c, *f)).collect(),
                offset_lsb: vec![self.offset_lsb[c]; freqs.len()],
            })
            .collect();
        MismatchProfile::new(freqs, channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stays_within_stated_bounds() {
        let s = SyntheticProfile::reference(4, 1.6e9);
        let p = s.to_profile().unwrap();
        for m in 0..4 {
            let ch = p.channel(m);
            assert!(ch.gain.iter().all(|g| (g - 1.0).abs() <= 0.01));
            assert!(ch.dt_s.iter().all(|t| t.abs() <= 2e-12));
            assert!(ch.offset_lsb.iter().all(|o| o.abs() <= 2.0));
        }
    }
}
