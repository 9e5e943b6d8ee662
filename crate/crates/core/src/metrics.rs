//! Spectra and IEEE-1241 style dynamic metrics for interleaved captures.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{fold_hz, Capture};
use crate::window::Window;

pub const DEFAULT_HARMONICS: usize = 5;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Nearest odd cycle count coprime with `n_fft`, and the tone frequency it
/// gives. Ties go to the lower count.
pub fn coherent_bin(f_target: f64, fs_hz: f64, n_fft: usize) -> Result<(usize, f64)> {
    if !(f_target.is_finite() && f_target > 0.0 && f_target < fs_hz) {
        return Err(Error::Frequency(f_target));
    }
    let x = f_target * n_fft as f64 / fs_hz;
    if x.round() < 1.0 {
        return Err(Error::Config(format!(
            "{f_target} Hz is below one cycle in {n_fft} samples"
        )));
    }
    let mut best: Option<usize> = None;
    let lo_start = {
        let f = x.floor() as i64;
        if f % 2 == 0 {
            f - 1
        } else {
            f
        }
    };
    // walk outward from x over odd candidates, lower side first on ties
    let mut lo = lo_start;
    let mut hi = lo_start + 2;
    while best.is_none() {
        let dl = if lo >= 1 { x - lo as f64 } else { f64::INFINITY };
        let dh = if (hi as usize) < n_fft {
            hi as f64 - x
        } else {
            f64::INFINITY
        };
        if dl.is_infinite() && dh.is_infinite() {
            break;
        }
        let cand = if dl <= dh {
            lo -= 2;
            lo + 2
        } else {
            hi += 2;
            hi - 2
        };
        if gcd(cand as u64, n_fft as u64) == 1 {
            best = Some(cand as usize);
        }
    }
    let j = best.ok_or_else(|| Error::Config(format!("no coherent bin for {f_target} Hz")))?;
    Ok((j, j as f64 * fs_hz / n_fft as f64))
}

pub fn enob_from_sinad(sinad_db: f64) -> f64 {
    (sinad_db - 1.76) / 6.02
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicMetrics {
    pub snr_db: f64,
    pub sinad_db: f64,
    pub thd_db: f64,
    pub sfdr_db: f64,
    pub enob_bits: f64,
    pub fundamental_dbfs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpurKind {
    Image(usize),
    OffsetSpur(usize),
    Harmonic(usize),
}

impl std::fmt::Display for SpurKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpurKind::Image(k) => write!(f, "image({k})"),
            SpurKind::OffsetSpur(k) => write!(f, "offset_spur({k})"),
            SpurKind::Harmonic(h) => write!(f, "harmonic({h})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spur {
    pub k: usize,
    pub freq_hz: f64,
    pub dbc: f64,
    pub kind: SpurKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub n_fft: usize,
    pub fs_hz: f64,
    pub full_scale_v: f64,
    pub window: Window,
    pub freqs_hz: Vec<f64>,
    /// Sine-calibrated power per bin (mean square of the sinusoid it represents), V^2.
    pub power: Vec<f64>,
    pub power_dbfs: Vec<f64>,
    /// Equivalent noise bandwidth of the window, in bins.
    pub enbw: f64,
    pub fundamental_bin: Option<usize>,
    pub metrics: Option<DynamicMetrics>,
    pub spurs: Vec<Spur>,
}

impl SpectrumReport {
    /// Bins on each side of a tone's center that belong to it.
    pub fn gather(&self) -> usize {
        match self.window {
            Window::None => 0,
            Window::Hann => 1,
            Window::Blackman => 2,
            Window::Kaiser(_) => 3,
        }
    }

    pub fn bin_of(&self, freq_hz: f64) -> usize {
        let b = (fold_hz(freq_hz, self.fs_hz) * self.n_fft as f64 / self.fs_hz).round() as usize;
        b.min(self.n_fft / 2)
    }

    fn region(&self, center: usize) -> std::ops::RangeInclusive<usize> {
        let g = self.gather();
        center.saturating_sub(g)..=(center + g).min(self.n_fft / 2)
    }

    /// Summed power of the bins gathered around `center`.
    pub fn gathered(&self, center: usize) -> f64 {
        self.region(center).map(|b| self.power[b]).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    fn dbfs(&self, p: f64) -> f64 {
        10.0 * (p / full_scale_power(self.full_scale_v)).max(1e-300).log10()
    }
}

/// Mean square of a sine spanning the full input range.
fn full_scale_power(full_scale_v: f64) -> f64 {
    full_scale_v * full_scale_v / 8.0
}

/// Single-sided power spectrum of the first `n_fft` non-transient samples.
pub fn spectrum(capture: &Capture, n_fft: usize, window: Window) -> Result<SpectrumReport> {
    let data = capture.valid();
    if n_fft < 2 || data.len() < n_fft {
        return Err(Error::CaptureTooShort {
            len: data.len(),
            need: n_fft.max(2),
        });
    }
    let w = window.periodic(n_fft);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    let mut buf: Vec<Complex64> = data[..n_fft]
        .iter()
        .zip(&w)
        .map(|(x, w)| Complex64::new(x * w, 0.0))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n_fft).process(&mut buf);
    let half = n_fft / 2;
    let fs = capture.fs_hz();
    let power: Vec<f64> = (0..=half)
        .map(|k| {
            let mag2 = buf[k].norm_sqr() / (s1 * s1);
            if k == 0 || (n_fft.is_multiple_of(2) && k == half) {
                mag2
            } else {
                2.0 * mag2
            }
        })
        .collect();
    let fsp = full_scale_power(capture.config.full_scale_v);
    let power_dbfs = power
        .iter()
        .map(|p| 10.0 * (p / fsp).max(1e-300).log10())
        .collect();
    Ok(SpectrumReport {
        n_fft,
        fs_hz: fs,
        full_scale_v: capture.config.full_scale_v,
        window,
        freqs_hz: (0..=half).map(|k| k as f64 * fs / n_fft as f64).collect(),
        power,
        power_dbfs,
        enbw: n_fft as f64 * s2 / (s1 * s1),
        fundamental_bin: None,
        metrics: None,
        spurs: Vec::new(),
    })
}

/// Fills in SNR, SINAD, THD, SFDR, ENOB and the spur table.
///
/// SINAD counts everything except the fundamental and DC, so interleave
/// images and offset spurs lower ENOB. SNR also removes harmonics and the
/// interleave spur bins.
pub fn dynamic_metrics(
    report: &SpectrumReport,
    f_fund_hz: f64,
    m_channels: usize,
    harmonics: usize,
) -> Result<SpectrumReport> {
    let mut r = report.clone();
    let half = r.n_fft / 2;
    let fb = r.bin_of(f_fund_hz);
    let g = r.gather();
    if fb < 1 || fb >= half || fb <= g {
        return Err(Error::FundamentalNotFound { freq_hz: f_fund_hz });
    }
    let mut sorted = r.power.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(r.power[fb] > 0.0 && r.power[fb] > 100.0 * median) {
        return Err(Error::FundamentalNotFound { freq_hz: f_fund_hz });
    }

    let mut used = vec![false; half + 1];
    let fund_region = r.region(fb);
    let dc_region = r.region(0);
    for b in fund_region.clone().chain(dc_region.clone()) {
        used[b] = true;
    }
    let norm = r.enbw;
    let p_fund: f64 = fund_region.clone().map(|b| r.power[b]).sum::<f64>() / norm;
    let p_dc: f64 = dc_region.clone().map(|b| r.power[b]).sum::<f64>() / norm;
    let p_total = r.total_power() / norm;

    let mut spurs = Vec::new();
    let take = |center: usize, used: &mut Vec<bool>| -> f64 {
        let mut p = 0.0;
        for b in r.region(center) {
            if !used[b] {
                used[b] = true;
                p += r.power[b];
            }
        }
        p / norm
    };
    let mut p_harm = 0.0;
    for h in 2..harmonics + 2 {
        let b = r.bin_of(h as f64 * f_fund_hz);
        if fund_region.contains(&b) || dc_region.contains(&b) {
            continue;
        }
        let p = take(b, &mut used);
        p_harm += p;
        spurs.push(Spur {
            k: h,
            freq_hz: r.freqs_hz[b],
            dbc: 10.0 * (r.gathered(b) / norm / p_fund).max(1e-300).log10(),
            kind: SpurKind::Harmonic(h),
        });
    }
    let step = r.fs_hz / m_channels as f64;
    let mut p_spur = 0.0;
    for k in 1..m_channels {
        let mut cands = vec![
            (fold_hz(k as f64 * step + f_fund_hz, r.fs_hz), SpurKind::Image(k)),
            (
                fold_hz(k as f64 * step - f_fund_hz, r.fs_hz),
                SpurKind::Image(m_channels - k),
            ),
            (
                fold_hz(k as f64 * step, r.fs_hz),
                SpurKind::OffsetSpur(k.min(m_channels - k)),
            ),
        ];
        cands.dedup_by_key(|c| r.bin_of(c.0));
        for (f, kind) in cands {
            let b = r.bin_of(f);
            if fund_region.contains(&b) || dc_region.contains(&b) {
                continue;
            }
            if spurs.iter().any(|s: &Spur| r.bin_of(s.freq_hz) == b) {
                continue;
            }
            p_spur += take(b, &mut used);
            let kk = match kind {
                SpurKind::Image(k) | SpurKind::OffsetSpur(k) | SpurKind::Harmonic(k) => k,
            };
            spurs.push(Spur {
                k: kk,
                freq_hz: r.freqs_hz[b],
                dbc: 10.0 * (r.gathered(b) / norm / p_fund).max(1e-300).log10(),
                kind,
            });
        }
    }

    let floor = 1e-300;
    let nad = (p_total - p_fund - p_dc).max(floor);
    let noise = (p_total - p_fund - p_dc - p_harm - p_spur).max(floor);
    let sinad_db = 10.0 * (p_fund / nad).log10();
    let snr_db = 10.0 * (p_fund / noise).log10();
    let thd_db = 10.0 * (p_harm.max(floor) / p_fund).log10();
    let peak_other = (0..=half)
        .filter(|b| !fund_region.contains(b) && !dc_region.contains(b))
        .map(|b| r.power[b])
        .fold(0.0, f64::max);
    let peak_fund = fund_region.clone().map(|b| r.power[b]).fold(0.0, f64::max);
    let sfdr_db = 10.0 * (peak_fund / peak_other.max(floor)).log10();
    r.fundamental_bin = Some(fb);
    r.metrics = Some(DynamicMetrics {
        snr_db,
        sinad_db,
        thd_db,
        sfdr_db: sfdr_db.max(0.0),
        enob_bits: enob_from_sinad(sinad_db),
        fundamental_dbfs: r.dbfs(p_fund),
    });
    spurs.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    r.spurs = spurs;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageLevel {
    pub k: usize,
    pub freq_hz: f64,
    pub dbc: f64,
    /// The image falls on the fundamental's bins and cannot be measured.
    pub collision: bool,
}

/// Level of every distinct interleave image `fold(k*fs/M +/- f)`, relative
/// to the fundamental.
pub fn image_spur_levels(
    report: &SpectrumReport,
    f_fund_hz: f64,
    fs_hz: f64,
    m_channels: usize,
) -> Result<Vec<ImageLevel>> {
    let fb = report.bin_of(f_fund_hz);
    let p_fund = report.gathered(fb);
    if !(p_fund > 0.0) {
        return Err(Error::FundamentalNotFound { freq_hz: f_fund_hz });
    }
    let fund_region = report.region(fb);
    let step = fs_hz / m_channels as f64;
    let mut out: Vec<ImageLevel> = Vec::new();
    for k in 1..m_channels {
        for sign in [1.0, -1.0] {
            let f = fold_hz(k as f64 * step + sign * f_fund_hz, fs_hz);
            let b = report.bin_of(f);
            if out.iter().any(|x| report.bin_of(x.freq_hz) == b) {
                continue;
            }
            let collision = report.region(b).any(|x| fund_region.contains(&x));
            out.push(ImageLevel {
                k,
                freq_hz: report.freqs_hz[b],
                dbc: 10.0 * (report.gathered(b) / p_fund).max(1e-300).log10(),
                collision,
            });
        }
    }
    out.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MismatchProfile, TiadcConfig, ToneSpec};

    fn cfg(bits: u32, quantize: bool) -> TiadcConfig {
        TiadcConfig::new(4, 1.6e9, bits, 2.0)
            .unwrap()
            .with_quantize(quantize)
    }

    fn tone(c: &TiadcConfig, amp: f64, j: usize, n: usize) -> Capture {
        let f = j as f64 * c.fs_hz / n as f64;
        let p = MismatchProfile::ideal(4, vec![0.0]).unwrap();
        Capture::simulate(&ToneSpec::single(amp, f, 0.25), c, &p, n).unwrap()
    }

    #[test]
    fn coherent_bin_examples() {
        let (j, f) = coherent_bin(200e6, 1.6e9, 4096).unwrap();
        assert_eq!(j, 511);
        assert!((f - 199.609375e6).abs() < 1e-3);
        // exact tie between 3 and 5 resolves downward
        let (j, f) = coherent_bin(0.25, 1.0, 16).unwrap();
        assert_eq!(j, 3);
        assert_eq!(f, 3.0 / 16.0);
        let (j, _) = coherent_bin(0.3, 1.0, 16).unwrap();
        assert_eq!(j, 5);
        assert!(coherent_bin(1e-3, 1.0, 16).is_err());
        assert!(coherent_bin(0.0, 1.0, 16).is_err());
        // zone-2 targets are allowed
        let (j, _) = coherent_bin(1.2e9, 1.6e9, 4096).unwrap();
        assert_eq!(j, 3071);
    }

    #[test]
    fn full_scale_sine_reads_zero_dbfs() {
        let c = cfg(14, false);
        let cap = tone(&c, 1.0, 101, 4096);
        let s = spectrum(&cap, 4096, Window::None).unwrap();
        assert!(s.power_dbfs[101].abs() < 0.01);
        for (b, p) in s.power_dbfs.iter().enumerate() {
            if b != 101 {
                assert!(*p < -250.0, "bin {b}: {p}");
            }
        }
        let half = spectrum(&tone(&c, 0.5, 101, 4096), 4096, Window::None).unwrap();
        assert!((half.power_dbfs[101] + 6.0206).abs() < 0.01);
    }

    #[test]
    fn dc_lands_in_bin_zero() {
        let c = cfg(14, false);
        let cap = Capture::new(vec![0.2; 1024], c).unwrap();
        let s = spectrum(&cap, 1024, Window::None).unwrap();
        assert!((s.power[0] - 0.04).abs() < 1e-15);
        assert!(s.power[1..].iter().all(|p| *p < 1e-30));
    }

    #[test]
    fn parseval_holds_without_window() {
        let c = cfg(10, true);
        let cap = tone(&c, 0.7, 333, 2048);
        let s = spectrum(&cap, 2048, Window::None).unwrap();
        let ms: f64 = cap.samples.iter().map(|v| v * v).sum::<f64>() / 2048.0;
        assert!((s.total_power() - ms).abs() <= 1e-9 * ms);
    }

    #[test]
    fn enob_identity() {
        assert_eq!(enob_from_sinad(74.0), 12.0);
    }

    #[test]
    fn quantized_sine_gives_expected_enob() {
        let c = cfg(12, true);
        let cap = tone(&c, 1.0 - c.lsb(), 1021, 4096);
        let s = dynamic_metrics(
            &spectrum(&cap, 4096, Window::None).unwrap(),
            1021.0 * c.fs_hz / 4096.0,
            4,
            5,
        )
        .unwrap();
        let m = s.metrics.unwrap();
        assert!((m.enob_bits - 12.0).abs() < 0.15, "{m:?}");
        assert!(m.sfdr_db > 0.0);
        assert!((m.enob_bits - (m.sinad_db - 1.76) / 6.02).abs() < 1e-12);
    }

    #[test]
    fn windowed_noncoherent_metrics_are_close() {
        let c = cfg(12, true);
        let f = 123.4567e6;
        let p = MismatchProfile::ideal(4, vec![0.0]).unwrap();
        let cap = Capture::simulate(&ToneSpec::single(0.9, f, 0.0), &c, &p, 8192).unwrap();
        let s = dynamic_metrics(&spectrum(&cap, 8192, Window::Blackman).unwrap(), f, 4, 5).unwrap();
        let m = s.metrics.unwrap();
        assert!((m.fundamental_dbfs - 20.0 * 0.9f64.log10()).abs() < 0.5, "{m:?}");
    }

    #[test]
    fn missing_fundamental_is_reported() {
        let c = cfg(12, false);
        let cap = Capture::new(vec![0.0; 1024], c).unwrap();
        let s = spectrum(&cap, 1024, Window::None).unwrap();
        assert!(matches!(
            dynamic_metrics(&s, 100e6, 4, 5),
            Err(Error::FundamentalNotFound { .. })
        ));
    }

    #[test]
    fn image_positions_and_collision() {
        let c = cfg(14, false);
        let n = 4096;
        let cap = tone(&c, 0.5, 435, n);
        let s = spectrum(&cap, n, Window::None).unwrap();
        let f = 435.0 * c.fs_hz / n as f64;
        let levels = image_spur_levels(&s, f, c.fs_hz, 4).unwrap();
        assert_eq!(levels.len(), 3);
        let want = [400e6 - f, 400e6 + f, 800e6 - f];
        for (l, w) in levels.iter().zip(want) {
            assert!((l.freq_hz - w).abs() < 1.0);
            assert!(l.dbc < -120.0);
        }
        // f = fs/8 puts the k=1 image on the fundamental
        let cap = Capture::new(
            (0..1024)
                .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 8.0).cos())
                .collect(),
            c,
        )
        .unwrap();
        let s = spectrum(&cap, 1024, Window::None).unwrap();
        let levels = image_spur_levels(&s, 200e6, c.fs_hz, 4).unwrap();
        assert!(levels.iter().any(|l| l.collision && l.k == 1));
    }
}
