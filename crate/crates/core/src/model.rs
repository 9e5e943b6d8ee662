//! M-channel TIADC acquisition model.
//!
//! Channel `m` samples the input at `i*T1 + m*Ts + dt_m(f)` with gain `g_m(f)`
//! and a constant offset, so its analog path is
//! `H_m(jW) = g_m(W) * exp(jW (m*Ts + dt_m(W)))`. The aggregate output is the
//! round-robin merge of the channel streams.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acquisition settings shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiadcConfig {
    pub m_channels: usize,
    pub fs_hz: f64,
    pub bits: u32,
    /// Peak-to-peak input range.
    pub full_scale_v: f64,
    #[serde(default = "default_true")]
    pub quantize: bool,
}

fn default_true() -> bool {
    true
}

impl TiadcConfig {
    pub fn new(m_channels: usize, fs_hz: f64, bits: u32, full_scale_v: f64) -> Result<Self> {
        let cfg = TiadcConfig {
            m_channels,
            fs_hz,
            bits,
            full_scale_v,
            quantize: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_quantize(mut self, quantize: bool) -> Self {
        self.quantize = quantize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_channels < 2 {
            return Err(Error::Config(format!(
                "need at least 2 channels, got {}",
                self.m_channels
            )));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {}",
                self.fs_hz
            )));
        }
        if !(1..=24).contains(&self.bits) {
            return Err(Error::Config(format!(
                "bits must be in 1..=24, got {}",
                self.bits
            )));
        }
        if !(self.full_scale_v.is_finite() && self.full_scale_v > 0.0) {
            return Err(Error::Config(format!(
                "full scale must be positive, got {}",
                self.full_scale_v
            )));
        }
        Ok(())
    }

    /// Aggregate sample period.
    pub fn ts(&self) -> f64 {
        1.0 / self.fs_hz
    }

    /// Per-channel sample period, `M * Ts`.
    pub fn t1(&self) -> f64 {
        self.m_channels as f64 / self.fs_hz
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale_v / 2f64.powi(self.bits as i32)
    }

    /// Ideal mid-tread quantizer with saturation at the code range ends.
    pub fn quantize_value(&self, v: f64) -> f64 {
        let lsb = self.lsb();
        let half = 2f64.powi(self.bits as i32 - 1);
        let code = (v / lsb).round().clamp(-half, half - 1.0);
        code * lsb
    }
}

/// Interpolated mismatch parameters of one channel at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPoint {
    pub gain: f64,
    pub dt_s: f64,
    pub offset_lsb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTable {
    pub gain: Vec<f64>,
    pub dt_s: Vec<f64>,
    pub offset_lsb: Vec<f64>,
}

/// Frequency-tabulated gain, timing error and offset for every channel, on a
/// grid shared by all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchProfile {
    freqs_hz: Vec<f64>,
    channels: Vec<ChannelTable>,
}

impl MismatchProfile {
    pub fn new(freqs_hz: Vec<f64>, channels: Vec<ChannelTable>) -> Result<Self> {
        if freqs_hz.is_empty() {
            return Err(Error::Profile("empty frequency grid".into()));
        }
        if channels.len() < 2 {
            return Err(Error::Profile(format!(
                "need at least 2 channels, got {}",
                channels.len()
            )));
        }
        for w in freqs_hz.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Profile(format!(
                    "frequencies must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if freqs_hz.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Profile(
                "frequencies must be finite and non-negative".into(),
            ));
        }
        let rows = freqs_hz.len();
        for (m, ch) in channels.iter().enumerate() {
            if ch.gain.len() != rows || ch.dt_s.len() != rows || ch.offset_lsb.len() != rows {
                return Err(Error::Profile(format!(
                    "channel {m} does not share the {rows}-row frequency grid"
                )));
            }
            if let Some(g) = ch.gain.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
                return Err(Error::Profile(format!("channel {m} has non-positive gain {g}")));
            }
            if ch.dt_s.iter().chain(&ch.offset_lsb).any(|v| !v.is_finite()) {
                return Err(Error::Profile(format!("channel {m} has non-finite entries")));
            }
        }
        Ok(MismatchProfile { freqs_hz, channels })
    }

    /// Unit gain, zero timing error and zero offset everywhere.
    pub fn ideal(m_channels: usize, freqs_hz: Vec<f64>) -> Result<Self> {
        let rows = freqs_hz.len();
        let ch = ChannelTable {
            gain: vec![1.0; rows],
            dt_s: vec![0.0; rows],
            offset_lsb: vec![0.0; rows],
        };
        Self::new(freqs_hz, vec![ch; m_channels])
    }

    /// A frequency-independent profile from one value per channel.
    pub fn constant(points: &[ChannelPoint]) -> Result<Self> {
        let channels = points
            .iter()
            .map(|p| ChannelTable {
                gain: vec![p.gain],
                dt_s: vec![p.dt_s],
                offset_lsb: vec![p.offset_lsb],
            })
            .collect();
        Self::new(vec![0.0], channels)
    }

    pub fn m_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn channel(&self, m: usize) -> &ChannelTable {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[ChannelTable] {
        &self.channels
    }

    pub fn freq_range(&self) -> (f64, f64) {
        (self.freqs_hz[0], self.freqs_hz[self.freqs_hz.len() - 1])
    }

    /// Piecewise-linear interpolation per column, clamped to the end rows.
    pub fn at(&self, m: usize, freq_hz: f64) -> ChannelPoint {
        let ch = &self.channels[m];
        let f = &self.freqs_hz;
        let last = f.len() - 1;
        let pick = |col: &[f64]| -> f64 {
            if freq_hz <= f[0] {
                return col[0];
            }
            if freq_hz >= f[last] {
                return col[last];
            }
            let hi = f.partition_point(|x| *x <= freq_hz);
            let lo = hi - 1;
            if f[lo] == freq_hz {
                return col[lo];
            }
            let t = (freq_hz - f[lo]) / (f[hi] - f[lo]);
            col[lo] + t * (col[hi] - col[lo])
        };
        ChannelPoint {
            gain: pick(&ch.gain),
            dt_s: pick(&ch.dt_s),
            offset_lsb: pick(&ch.offset_lsb),
        }
    }

    /// Offset used by the simulator: the mean of the channel's offset column.
    pub fn offset_lsb(&self, m: usize) -> f64 {
        let col = &self.channels[m].offset_lsb;
        col.iter().sum::<f64>() / col.len() as f64
    }

    /// Warns when the table does not reach into the Nyquist zone a design
    /// will query, so interpolation there degenerates to endpoint clamping.
    pub fn coverage_warning(&self, zone_index: u8, fs_hz: f64) -> Option<String> {
        let half = fs_hz / 2.0;
        let lo = (zone_index as f64 - 1.0) * half;
        let hi = zone_index as f64 * half;
        let (pmin, pmax) = self.freq_range();
        if pmax < hi - 0.1 * half || pmin > lo + 0.1 * half {
            Some(format!(
                "profile spans {pmin:.6e}..{pmax:.6e} Hz but zone {zone_index} covers \
                 {lo:.6e}..{hi:.6e} Hz; values outside the table are clamped"
            ))
        } else {
            None
        }
    }
}

/// `H_m(jW)` for `W >= 0` rad/s.
pub fn channel_response(
    profile: &MismatchProfile,
    config: &TiadcConfig,
    m: usize,
    omega_analog: f64,
) -> Result<Complex64> {
    if m >= config.m_channels || m >= profile.m_channels() {
        return Err(Error::ChannelIndex {
            index: m,
            channels: config.m_channels.min(profile.m_channels()),
        });
    }
    if !omega_analog.is_finite() || omega_analog < 0.0 {
        return Err(Error::Frequency(omega_analog));
    }
    let p = profile.at(m, omega_analog / (2.0 * PI));
    let phase = omega_analog * (m as f64 * config.ts() + p.dt_s);
    Ok(Complex64::from_polar(p.gain, phase))
}

/// `H_m(jW)` for any real `W`, using `H_m(-jW) = conj(H_m(jW))`.
pub fn channel_response_bilateral(
    profile: &MismatchProfile,
    config: &TiadcConfig,
    m: usize,
    omega_analog: f64,
) -> Result<Complex64> {
    if omega_analog < 0.0 {
        channel_response(profile, config, m, -omega_analog).map(|h| h.conj())
    } else {
        channel_response(profile, config, m, omega_analog)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude_v: f64,
    pub freq_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ToneSpec {
    pub tones: Vec<Tone>,
    #[serde(default)]
    pub dc_v: f64,
}

impl ToneSpec {
    pub fn single(amplitude_v: f64, freq_hz: f64, phase_rad: f64) -> Self {
        ToneSpec {
            tones: vec![Tone {
                amplitude_v,
                freq_hz,
                phase_rad,
            }],
            dc_v: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tones {
            if !(t.amplitude_v.is_finite() && t.amplitude_v >= 0.0) {
                return Err(Error::Config(format!(
                    "tone amplitude must be >= 0, got {}",
                    t.amplitude_v
                )));
            }
            if !t.freq_hz.is_finite() || t.freq_hz < 0.0 {
                return Err(Error::Frequency(t.freq_hz));
            }
            if !t.phase_rad.is_finite() {
                return Err(Error::Config("tone phase must be finite".into()));
            }
        }
        if !self.dc_v.is_finite() {
            return Err(Error::Config("dc must be finite".into()));
        }
        Ok(())
    }

    /// True when the summed amplitudes leave the input inside the quantizer range.
    pub fn headroom_ok(&self, config: &TiadcConfig) -> bool {
        let peak: f64 = self.tones.iter().map(|t| t.amplitude_v).sum::<f64>() + self.dc_v.abs();
        peak <= config.full_scale_v / 2.0
    }
}

/// Samples every channel of the TIADC, `n_total / M` samples each.
pub fn sample_channels(
    tones: &ToneSpec,
    config: &TiadcConfig,
    profile: &MismatchProfile,
    n_total: usize,
) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    tones.validate()?;
    let m_ch = config.m_channels;
    if n_total == 0 || !n_total.is_multiple_of(m_ch) {
        return Err(Error::NotMultiple {
            len: n_total,
            m: m_ch,
        });
    }
    if profile.m_channels() != m_ch {
        return Err(Error::Profile(format!(
            "profile has {} channels, configuration has {m_ch}",
            profile.m_channels()
        )));
    }
    let per = n_total / m_ch;
    let lsb = config.lsb();
    let mut out = Vec::with_capacity(m_ch);
    for m in 0..m_ch {
        // per-tone channel parameters are evaluated once; only the time index varies
        let comps: Vec<(f64, f64, f64)> = tones
            .tones
            .iter()
            .map(|t| {
                let p = profile.at(m, t.freq_hz);
                let omega = 2.0 * PI * t.freq_hz;
                (
                    p.gain * t.amplitude_v,
                    t.freq_hz / config.fs_hz,
                    omega * p.dt_s + t.phase_rad,
                )
            })
            .collect();
        let bias = tones.dc_v + profile.offset_lsb(m) * lsb;
        let mut ch = Vec::with_capacity(per);
        for i in 0..per {
            let n = (i * m_ch + m) as f64;
            let mut v = bias;
            for &(amp, cycles_per_sample, phase) in &comps {
                // reduce the cycle count before scaling by 2*pi to keep long records exact
                let cyc = (cycles_per_sample * n).fract();
                v += amp * (2.0 * PI * cyc + phase).cos();
            }
            ch.push(if config.quantize {
                config.quantize_value(v)
            } else {
                v
            });
        }
        out.push(ch);
    }
    Ok(out)
}

/// Round-robin merge: `y[i*M + m] = x_m[i]`.
pub fn interleave(channels: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m_ch = channels.len();
    if m_ch == 0 {
        return Ok(Vec::new());
    }
    let per = channels[0].len();
    if channels.iter().any(|c| c.len() != per) {
        return Err(Error::RaggedChannels);
    }
    let mut y = Vec::with_capacity(per * m_ch);
    for i in 0..per {
        for ch in channels {
            y.push(ch[i]);
        }
    }
    Ok(y)
}

pub fn deinterleave(samples: &[f64], m_channels: usize) -> Result<Vec<Vec<f64>>> {
    if m_channels == 0 || samples.is_empty() || !samples.len().is_multiple_of(m_channels) {
        return Err(Error::NotMultiple {
            len: samples.len(),
            m: m_channels,
        });
    }
    let mut out = vec![Vec::with_capacity(samples.len() / m_channels); m_channels];
    for (n, &v) in samples.iter().enumerate() {
        out[n % m_channels].push(v);
    }
    Ok(out)
}

/// Metadata attached to a capture once it has been through the correction bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionInfo {
    pub bank_id: String,
    pub delay_samples: usize,
}

/// An interleaved sample record and the configuration it was acquired with.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub samples: Vec<f64>,
    pub config: TiadcConfig,
    /// Samples at each end that are filter transients and must not be analyzed.
    pub transient: usize,
    pub correction: Option<CorrectionInfo>,
}

impl Capture {
    pub fn new(samples: Vec<f64>, config: TiadcConfig) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("capture contains non-finite samples".into()));
        }
        Ok(Capture {
            samples,
            config,
            transient: 0,
            correction: None,
        })
    }

    pub fn from_channels(channels: &[Vec<f64>], config: TiadcConfig) -> Result<Self> {
        if channels.len() != config.m_channels {
            return Err(Error::ChannelMismatch {
                capture: channels.len(),
                bank: config.m_channels,
            });
        }
        Self::new(interleave(channels)?, config)
    }

    /// Simulates a full interleaved capture.
    pub fn simulate(
        tones: &ToneSpec,
        config: &TiadcConfig,
        profile: &MismatchProfile,
        n_total: usize,
    ) -> Result<Self> {
        let ch = sample_channels(tones, config, profile, n_total)?;
        Self::from_channels(&ch, *config)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fs_hz(&self) -> f64 {
        self.config.fs_hz
    }

    /// Samples outside the transient regions.
    pub fn valid(&self) -> &[f64] {
        let n = self.samples.len();
        if 2 * self.transient >= n {
            return &[];
        }
        &self.samples[self.transient..n - self.transient]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Fundamental,
    Image(usize),
    OffsetSpur(usize),
}

impl std::fmt::Display for LineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LineKind::Fundamental => write!(f, "fundamental"),
            LineKind::Image(k) => write!(f, "image({k})"),
            LineKind::OffsetSpur(k) => write!(f, "offset_spur({k})"),
        }
    }
}

/// A spectral line expected in the interleaved output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedLine {
    pub freq_hz: f64,
    /// Peak amplitude of the real sinusoid (or the DC value magnitude).
    pub amplitude: f64,
    pub kind: LineKind,
}

/// Folds any frequency into `[0, fs/2]`.
pub fn fold_hz(freq_hz: f64, fs_hz: f64) -> f64 {
    let r = freq_hz.rem_euclid(fs_hz);
    if r > fs_hz / 2.0 {
        fs_hz - r
    } else {
        r
    }
}

/// Nyquist zone (1-based) of an analog frequency.
pub fn nyquist_zone(freq_hz: f64, fs_hz: f64) -> u8 {
    ((freq_hz / (fs_hz / 2.0)).floor() as i64 + 1).clamp(1, u8::MAX as i64) as u8
}

/// Analytic output spectrum of the interleaved capture, quantization ignored.
///
/// Each channel's periodic complex weight `g_m exp(jW dt_m)` is expanded in
/// its `M`-point DFT; coefficient `k` moves the tone by `k*fs/M`. Offsets
/// produce lines at `k*fs/M`. Exponentials landing on the same folded
/// frequency are added as complex numbers before the magnitude is taken.
pub fn predict_output_spectrum(
    tones: &ToneSpec,
    config: &TiadcConfig,
    profile: &MismatchProfile,
    zone: u8,
) -> Result<Vec<PredictedLine>> {
    config.validate()?;
    tones.validate()?;
    let m_ch = config.m_channels;
    if profile.m_channels() != m_ch {
        return Err(Error::Profile("profile/config channel count mismatch".into()));
    }
    let half = config.fs_hz / 2.0;
    for t in &tones.tones {
        let z = nyquist_zone(t.freq_hz, config.fs_hz);
        let on_edge = (t.freq_hz / half - (zone as f64 - 1.0)).abs() < 1e-12
            || (t.freq_hz / half - zone as f64).abs() < 1e-12;
        if z != zone && !on_edge {
            return Err(Error::Config(format!(
                "tone at {} Hz is outside Nyquist zone {zone}",
                t.freq_hz
            )));
        }
    }

    // two-sided exponentials, keyed by frequency in cycles/sample within [0, 1)
    let mut lines: Vec<(f64, Complex64, LineKind)> = Vec::new();
    let mut push = |cycles: f64, coef: Complex64, kind: LineKind| {
        let c = cycles.rem_euclid(1.0);
        let c = if (1.0 - c) < 1e-12 { 0.0 } else { c };
        match lines.iter_mut().find(|(f, _, _)| (f - c).abs() < 1e-12) {
            Some(entry) => {
                entry.1 += coef;
                if rank(kind) < rank(entry.2) {
                    entry.2 = kind;
                }
            }
            None => lines.push((c, coef, kind)),
        }
    };
    let mf = m_ch as f64;
    for t in &tones.tones {
        let omega = 2.0 * PI * t.freq_hz;
        let weights: Vec<Complex64> = (0..m_ch)
            .map(|m| {
                let p = profile.at(m, t.freq_hz);
                Complex64::from_polar(p.gain, omega * p.dt_s)
            })
            .collect();
        let base = t.freq_hz / config.fs_hz;
        for k in 0..m_ch {
            let mut ck = Complex64::new(0.0, 0.0);
            let mut dk = Complex64::new(0.0, 0.0);
            for (m, w) in weights.iter().enumerate() {
                let tw = Complex64::from_polar(1.0, -2.0 * PI * (k * m) as f64 / mf);
                ck += w * tw;
                dk += w.conj() * tw;
            }
            ck /= mf;
            dk /= mf;
            let half_amp = 0.5 * t.amplitude_v;
            let kind = if k == 0 {
                LineKind::Fundamental
            } else {
                LineKind::Image(k)
            };
            let shift = k as f64 / mf;
            push(
                base + shift,
                Complex64::from_polar(half_amp, t.phase_rad) * ck,
                kind,
            );
            // the negative-frequency half of the tone maps to image M-k when folded
            let neg_kind = if k == 0 {
                LineKind::Fundamental
            } else {
                LineKind::Image(m_ch - k)
            };
            push(
                -base + shift,
                Complex64::from_polar(half_amp, -t.phase_rad) * dk,
                neg_kind,
            );
        }
    }
    let lsb = config.lsb();
    for k in 0..m_ch {
        let mut ok = Complex64::new(0.0, 0.0);
        for m in 0..m_ch {
            ok += Complex64::from_polar(profile.offset_lsb(m) * lsb, -2.0 * PI * (k * m) as f64 / mf);
        }
        ok /= mf;
        if k == 0 {
            ok += tones.dc_v;
        }
        push(k as f64 / mf, ok, LineKind::OffsetSpur(k.min(m_ch - k)));
    }

    let mut out: Vec<PredictedLine> = Vec::new();
    for (c, coef, kind) in &lines {
        // report each real line once, on the non-negative side
        if *c > 0.5 + 1e-12 {
            continue;
        }
        let edge = *c < 1e-12 || (c - 0.5).abs() < 1e-12;
        let amplitude = if edge { coef.norm() } else { 2.0 * coef.norm() };
        out.push(PredictedLine {
            freq_hz: c * config.fs_hz,
            amplitude,
            kind: *kind,
        });
    }
    out.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    Ok(out)
}

fn rank(kind: LineKind) -> u8 {
    match kind {
        LineKind::Fundamental => 0,
        LineKind::Image(_) => 1,
        LineKind::OffsetSpur(_) => 2,
    }
}
