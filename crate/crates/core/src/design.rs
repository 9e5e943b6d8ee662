//! Wideband perfect-reconstruction filter-bank design.
//!
//! At every output frequency `w` the `M` aliased copies of the input that fold
//! onto `w` are selected (the k-set). The branch responses `F_m(w)` must pass
//! the signal copy as a pure `d`-sample delay and cancel the other `M - 1`:
//!
//! ```text
//! sum_m F_m(w) exp(-j w m) H_m(j (w - 2*pi*k/M) / Ts) = M exp(-j w d)   (signal copy)
//!                                                      = 0               (other k)
//! ```
//!
//! The `exp(-j w m)` factor places channel `m`'s samples at their own
//! positions `i*M + m` in the output stream, so an ideal converter is
//! corrected by the same `d`-sample delay on every branch.
//!
//! The system is solved on an `N`-point grid, mirrored to a Hermitian
//! spectrum, inverse transformed and windowed down to `L` real taps.
//!
//! Sign convention: `F(w) = sum_p f[p] exp(-j w p)`, so a delay of `D`
//! samples is `exp(-j w D)`, and the analog paths use `exp(+j W t)` for a
//! sampling instant late by `t`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{channel_response_bilateral, MismatchProfile, TiadcConfig};
use crate::window::Window;

/// Condition number above which a per-frequency system is rejected.
pub const COND_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    /// Input in `[0, fs/2]`.
    First,
    /// Input in `[fs/2, fs]` (under-sampling).
    Second,
}

impl Zone {
    pub fn index(self) -> u8 {
        match self {
            Zone::First => 1,
            Zone::Second => 2,
        }
    }

    pub fn from_index(z: u8) -> Result<Self> {
        match z {
            1 => Ok(Zone::First),
            2 => Ok(Zone::Second),
            _ => Err(Error::Design(format!("zone must be 1 or 2, got {z}"))),
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl Serialize for Zone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.index())
    }
}

impl<'de> Deserialize<'de> for Zone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let z = u8::deserialize(d)?;
        Zone::from_index(z).map_err(serde::de::Error::custom)
    }
}

/// Alias indices `k` whose shifted frequency `w - 2*pi*k/M` lies in the
/// zone's band: `[-pi, pi)` for zone 1, `[pi, 2pi) U [-2pi, -pi)` for zone 2.
/// Always exactly `M` consecutive or split runs of integers.
pub fn k_set(omega: f64, m_channels: usize, zone: Zone) -> Vec<i64> {
    let m = m_channels as i64;
    let mf = m_channels as f64;
    let u = omega * mf / (2.0 * PI);
    // integers in the half-open interval (a, a + len]
    let run = |a: f64, len: i64| -> Vec<i64> {
        let start = a.floor() as i64 + 1;
        (start..start + len).collect()
    };
    match zone {
        Zone::First => run(u - mf / 2.0, m),
        Zone::Second => {
            let lo_count = ((u - mf / 2.0).floor() - (u - mf).floor()) as i64;
            let mut ks = run(u - mf, lo_count);
            ks.extend(run(u + mf / 2.0, m - lo_count));
            ks
        }
    }
}

/// The member of a k-set that carries the signal (the one divisible by M).
pub fn signal_index(ks: &[i64], m_channels: usize) -> Option<usize> {
    ks.iter().position(|k| k.rem_euclid(m_channels as i64) == 0)
}

/// Filter-bank design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Frequency-grid size `N`.
    pub n_grid: usize,
    /// Taps per branch `L` (odd).
    pub taps: usize,
    /// Target group delay `d` in samples.
    pub delay: usize,
    pub window: Window,
    pub zone: Zone,
    /// Width, as a fraction of `pi`, of the band next to each zone edge where
    /// the modeled timing error is tapered to zero.
    #[serde(default = "default_guard")]
    pub edge_guard: f64,
}

pub const DEFAULT_EDGE_GUARD: f64 = 0.05;

fn default_guard() -> f64 {
    DEFAULT_EDGE_GUARD
}

impl DesignSpec {
    /// Defaults: `d = (L-1)/2`, Kaiser(8) window, standard edge guard.
    pub fn new(n_grid: usize, taps: usize, zone: Zone) -> Self {
        DesignSpec {
            n_grid,
            taps,
            delay: taps.saturating_sub(1) / 2,
            window: Window::Kaiser(8.0),
            zone,
            edge_guard: DEFAULT_EDGE_GUARD,
        }
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn with_delay(mut self, delay: usize) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_edge_guard(mut self, guard: f64) -> Self {
        self.edge_guard = guard;
        self
    }

    pub fn validate(&self, m_channels: usize) -> Result<()> {
        if self.taps.is_multiple_of(2) || self.taps == 0 {
            return Err(Error::Design(format!("taps must be odd, got {}", self.taps)));
        }
        if !self.n_grid.is_power_of_two() || self.n_grid < 4 * self.taps {
            return Err(Error::Design(format!(
                "grid size must be a power of two >= 4*taps ({}), got {}",
                4 * self.taps,
                self.n_grid
            )));
        }
        if self.delay >= self.taps {
            return Err(Error::Design(format!(
                "delay must be below the tap count {}, got {}",
                self.taps, self.delay
            )));
        }
        if m_channels == 0 {
            return Err(Error::Design("bank needs at least one channel".into()));
        }
        if !(0.0..0.5).contains(&self.edge_guard) {
            return Err(Error::Design(format!(
                "edge guard must be in [0, 0.5), got {}",
                self.edge_guard
            )));
        }
        if let Window::Kaiser(b) = self.window {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Design(format!("invalid Kaiser beta {b}")));
            }
        }
        Ok(())
    }
}

/// Taper applied to the modeled timing error near the zone edges. `x` is the
/// analog frequency magnitude in units of `fs/2` (i.e. `|W| Ts / pi`).
/// Edges are the non-zero multiples of pi that bound the zone.
pub fn edge_taper(x: f64, zone: Zone, guard: f64) -> f64 {
    if guard <= 0.0 {
        return 1.0;
    }
    let (lo, hi) = match zone {
        Zone::First => (f64::NEG_INFINITY, 1.0),
        Zone::Second => (1.0, 2.0),
    };
    let dist = (x - lo).abs().min((hi - x).abs());
    if dist >= guard {
        1.0
    } else {
        0.5 * (1.0 - (PI * dist / guard).cos())
    }
}

/// True when an analog frequency (units of fs/2) lies inside an edge guard.
pub fn in_guard(x: f64, zone: Zone, guard: f64) -> bool {
    edge_taper(x, zone, guard) < 1.0
}

/// Channel path as seen by the design: the measured profile with its timing
/// error tapered to zero at the zone edges.
fn design_response(
    profile: &MismatchProfile,
    config: &TiadcConfig,
    spec: &DesignSpec,
    m: usize,
    omega_analog: f64,
) -> Result<Complex64> {
    let x = omega_analog.abs() * config.ts() / PI;
    let taper = edge_taper(x, spec.zone, spec.edge_guard);
    if taper >= 1.0 {
        return channel_response_bilateral(profile, config, m, omega_analog);
    }
    let w = omega_analog.abs();
    let p = profile.at(m.min(profile.m_channels() - 1), w / (2.0 * PI));
    let h = Complex64::from_polar(p.gain, w * (m as f64 * config.ts() + taper * p.dt_s));
    Ok(if omega_analog < 0.0 { h.conj() } else { h })
}

/// Phase of channel `m`'s position within each block of `M` output samples.
fn placement(omega: f64, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, -omega * m as f64)
}

fn check_inputs(profile: &MismatchProfile, config: &TiadcConfig, spec: &DesignSpec) -> Result<()> {
    config.validate()?;
    spec.validate(config.m_channels)?;
    if profile.m_channels() != config.m_channels {
        return Err(Error::Profile(format!(
            "profile has {} channels, configuration has {}",
            profile.m_channels(),
            config.m_channels
        )));
    }
    Ok(())
}

/// Solves the reconstruction conditions at one digital frequency and returns
/// the `M` branch responses.
pub fn solve_pr_at(
    omega: f64,
    profile: &MismatchProfile,
    config: &TiadcConfig,
    spec: &DesignSpec,
) -> Result<Vec<Complex64>> {
    check_inputs(profile, config, spec)?;
    if !(0.0..=PI).contains(&omega) {
        return Err(Error::Design(format!("omega {omega} outside [0, pi]")));
    }
    solve_unchecked(omega, profile, config, spec)
}

fn solve_unchecked(
    omega: f64,
    profile: &MismatchProfile,
    config: &TiadcConfig,
    spec: &DesignSpec,
) -> Result<Vec<Complex64>> {
    let m_ch = config.m_channels;
    let ks = k_set(omega, m_ch, spec.zone);
    let sig = signal_index(&ks, m_ch).expect("every k-set holds exactly one multiple of M");
    let mut a = DMatrix::<Complex64>::zeros(m_ch, m_ch);
    for (row, k) in ks.iter().enumerate() {
        let analog = (omega - 2.0 * PI * *k as f64 / m_ch as f64) / config.ts();
        for m in 0..m_ch {
            a[(row, m)] = placement(omega, m) * design_response(profile, config, spec, m, analog)?;
        }
    }
    let mut b = DVector::<Complex64>::zeros(m_ch);
    b[sig] = Complex64::from_polar(m_ch as f64, -omega * spec.delay as f64);

    let sv = a.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !(cond.is_finite() && cond <= COND_LIMIT) {
        return Err(Error::SingularDesign { omega, cond });
    }
    let f = a.clone().lu().solve(&b).ok_or(Error::SingularDesign {
        omega,
        cond: f64::INFINITY,
    })?;
    let resid = (&a * &f - &b).norm();
    if resid > 1e-10 * b.norm() {
        return Err(Error::SingularDesign { omega, cond });
    }
    Ok(f.iter().copied().collect())
}

/// M branches of real FIR taps plus the parameters they were designed with.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub taps: Vec<Vec<f64>>,
    pub spec: DesignSpec,
    pub m_channels: usize,
    pub fs_hz: f64,
    /// Largest imaginary part seen in the inverse transform before it was dropped.
    pub max_imag: f64,
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.spec.taps
    }

    pub fn is_empty(&self) -> bool {
        self.spec.taps == 0
    }

    /// `F_m(w)` of the finite tap sequence.
    pub fn response(&self, m: usize, omega: f64) -> Complex64 {
        self.taps[m]
            .iter()
            .enumerate()
            .map(|(p, &c)| Complex64::from_polar(c, -omega * p as f64))
            .sum()
    }

    /// Short content hash identifying the coefficient set.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.m_channels as u64).to_le_bytes());
        for branch in &self.taps {
            for c in branch {
                h.update(c.to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The identity bank: every branch is a pure `d`-sample delay.
    pub fn identity(m_channels: usize, fs_hz: f64, spec: DesignSpec) -> Result<Self> {
        spec.validate(m_channels)?;
        let taps = (0..m_channels)
            .map(|_| {
                let mut t = vec![0.0; spec.taps];
                t[spec.delay] = 1.0;
                t
            })
            .collect();
        Ok(FilterBank {
            taps,
            spec,
            m_channels,
            fs_hz,
            max_imag: 0.0,
        })
    }
}

/// Solution on the full `N`-point grid, Hermitian-extended.
fn grid_responses(
    profile: &MismatchProfile,
    config: &TiadcConfig,
    spec: &DesignSpec,
) -> Result<Vec<Vec<Complex64>>> {
    let n = spec.n_grid;
    let m_ch = config.m_channels;
    let half = n / 2;
    let mut sols: Vec<Option<Vec<Complex64>>> = Vec::with_capacity(half + 1);
    for i in 0..=half {
        let omega = 2.0 * PI * i as f64 / n as f64;
        match solve_unchecked(omega, profile, config, spec) {
            Ok(f) => sols.push(Some(f)),
            Err(e @ Error::SingularDesign { .. }) if i == 0 || i == half => {
                // boundary bins fall back to the neighbouring solution
                let _ = e;
                sols.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    if sols[0].is_none() {
        sols[0] = sols[1].clone();
    }
    if sols[half].is_none() {
        sols[half] = sols[half - 1].clone();
    }
    let mut grid = vec![vec![Complex64::new(0.0, 0.0); n]; m_ch];
    for (i, sol) in sols.into_iter().enumerate() {
        let sol = sol.expect("boundary bins were filled");
        for m in 0..m_ch {
            let mut v = sol[m];
            if i == 0 || i == half {
                // a real impulse response needs real values at DC and Nyquist
                v = Complex64::new(v.re, 0.0);
            }
            grid[m][i] = v;
            if i != 0 && i != half {
                grid[m][n - i] = v.conj();
            }
        }
    }
    Ok(grid)
}

/// Length-`N` complex impulse responses before truncation and windowing.
pub fn impulse_responses(
    profile: &MismatchProfile,
    config: &TiadcConfig,
    spec: &DesignSpec,
) -> Result<Vec<Vec<Complex64>>> {
    check_inputs(profile, config, spec)?;
    let n = spec.n_grid;
    let grid = grid_responses(profile, config, spec)?;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    Ok(grid
        .into_iter()
        .map(|mut buf| {
            ifft.process(&mut buf);
            buf.iter_mut().for_each(|v| *v /= n as f64);
            buf
        })
        .collect())
}

/// Designs the correction bank: grid solve, inverse DFT, truncation to `L`
/// taps and a window centered on the target delay `d`.
pub fn design_filter_bank(
    profile: &MismatchProfile,
    config: &TiadcConfig,
    spec: &DesignSpec,
) -> Result<FilterBank> {
    let h = impulse_responses(profile, config, spec)?;
    let l = spec.taps;
    let half = (l - 1) as f64 / 2.0;
    let mut max_imag: f64 = 0.0;
    let taps = h
        .iter()
        .map(|resp| {
            max_imag = resp.iter().fold(max_imag, |acc, v| acc.max(v.im.abs()));
            let center = spec.delay as f64;
            (0..l)
                .map(|p| resp[p].re * spec.window.at((p as f64 - center) / half))
                .collect()
        })
        .collect();
    if max_imag > 1e-9 {
        return Err(Error::Design(format!(
            "impulse responses are not real (imaginary residue {max_imag:.3e})"
        )));
    }
    Ok(FilterBank {
        taps,
        spec: *spec,
        m_channels: config.m_channels,
        fs_hz: config.fs_hz,
        max_imag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    /// Digital frequency in rad/sample.
    pub omega: f64,
    /// `|Gamma_signal - M exp(-j w d)|`; `None` when the signal copy lies in an edge guard.
    pub residual_k0: Option<f64>,
    /// Largest `|Gamma_k|` over alias copies outside the edge guards.
    pub residual_alias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PRResidualReport {
    pub zone: Zone,
    pub points: Vec<ResidualPoint>,
}

impl PRResidualReport {
    /// Largest alias residual for `omega/pi` within `[lo, hi]`.
    pub fn max_alias_between(&self, lo: f64, hi: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| (lo..=hi).contains(&(p.omega / PI)))
            .map(|p| p.residual_alias)
            .fold(0.0, f64::max)
    }

    pub fn max_alias(&self) -> f64 {
        self.max_alias_between(0.0, 1.0)
    }

    pub fn max_k0_between(&self, lo: f64, hi: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| (lo..=hi).contains(&(p.omega / PI)))
            .filter_map(|p| p.residual_k0)
            .fold(0.0, f64::max)
    }
}

/// Evaluates the reconstruction conditions of the finite (windowed) bank
/// against a profile on `n_check` frequencies in `[0, pi)`.
pub fn pr_residual(
    bank: &FilterBank,
    profile: &MismatchProfile,
    config: &TiadcConfig,
    n_check: usize,
) -> Result<PRResidualReport> {
    pr_residual_in_zone(bank, profile, config, n_check, bank.spec.zone)
}

/// As [`pr_residual`], but with the k-set of an explicit zone.
pub fn pr_residual_in_zone(
    bank: &FilterBank,
    profile: &MismatchProfile,
    config: &TiadcConfig,
    n_check: usize,
    zone: Zone,
) -> Result<PRResidualReport> {
    if n_check < 64 {
        return Err(Error::Design(format!("n_check must be >= 64, got {n_check}")));
    }
    if bank.m_channels != config.m_channels || profile.m_channels() != config.m_channels {
        return Err(Error::ChannelMismatch {
            capture: config.m_channels,
            bank: bank.m_channels,
        });
    }
    let m_ch = config.m_channels;
    let guard = bank.spec.edge_guard;
    let d = bank.spec.delay as f64;
    let mut points = Vec::with_capacity(n_check);
    for i in 0..n_check {
        let omega = PI * i as f64 / n_check as f64;
        let f: Vec<Complex64> = (0..m_ch)
            .map(|m| bank.response(m, omega) * placement(omega, m))
            .collect();
        let ks = k_set(omega, m_ch, zone);
        let sig = signal_index(&ks, m_ch).expect("k-set holds one multiple of M");
        let mut residual_k0 = None;
        let mut residual_alias: f64 = 0.0;
        for (row, k) in ks.iter().enumerate() {
            let shifted = omega - 2.0 * PI * *k as f64 / m_ch as f64;
            if in_guard(shifted.abs() / PI, zone, guard) {
                continue;
            }
            let analog = shifted / config.ts();
            let mut gamma = Complex64::new(0.0, 0.0);
            for (m, fm) in f.iter().enumerate() {
                gamma += fm * channel_response_bilateral(profile, config, m, analog)?;
            }
            if row == sig {
                residual_k0 = Some((gamma - Complex64::from_polar(m_ch as f64, -omega * d)).norm());
            } else {
                residual_alias = residual_alias.max(gamma.norm());
            }
        }
        points.push(ResidualPoint {
            omega,
            residual_k0,
            residual_alias,
        });
    }
    Ok(PRResidualReport { zone, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelPoint;

    /// Direct enumeration of the defining inequalities.
    fn k_set_brute(omega: f64, m: usize, zone: Zone) -> Vec<i64> {
        let mut out = Vec::new();
        for k in -(4 * m as i64)..=(4 * m as i64) {
            let x = omega - 2.0 * PI * k as f64 / m as f64;
            let ok = match zone {
                Zone::First => (-PI..PI).contains(&x),
                Zone::Second => (PI..2.0 * PI).contains(&x) || (-2.0 * PI..-PI).contains(&x),
            };
            if ok {
                out.push(k);
            }
        }
        out
    }

    fn sorted(mut v: Vec<i64>) -> Vec<i64> {
        v.sort();
        v
    }

    #[test]
    fn k_set_examples() {
        assert_eq!(sorted(k_set(0.3 * PI, 4, Zone::First)), vec![-1, 0, 1, 2]);
        assert_eq!(sorted(k_set(0.3 * PI, 4, Zone::Second)), vec![-3, -2, 3, 4]);
        assert_eq!(sorted(k_set(0.0, 4, Zone::First)), vec![-1, 0, 1, 2]);
        assert_eq!(k_set_brute(0.3 * PI, 4, Zone::Second), vec![-3, -2, 3, 4]);
    }

    #[test]
    fn k_set_matches_enumeration() {
        for m in [2usize, 3, 4, 5, 8] {
            for i in 0..997 {
                let omega = PI * (i as f64 + 0.37) / 997.0;
                for zone in [Zone::First, Zone::Second] {
                    let fast = sorted(k_set(omega, m, zone));
                    assert_eq!(fast, k_set_brute(omega, m, zone), "m={m} omega={omega} {zone}");
                    assert_eq!(fast.len(), m);
                }
            }
        }
    }

    fn cfg() -> TiadcConfig {
        TiadcConfig::new(4, 1.6e9, 14, 2.0).unwrap().with_quantize(false)
    }

    #[test]
    fn ideal_solution_is_integer_delay() {
        let c = cfg();
        let p = MismatchProfile::ideal(4, vec![0.0, 1.6e9]).unwrap();
        let spec = DesignSpec::new(1024, 65, Zone::First);
        for omega in [0.0, 0.1, 1.3, 2.9] {
            let f = solve_pr_at(omega, &p, &c, &spec).unwrap();
            for (m, fm) in f.iter().enumerate() {
                let want = Complex64::from_polar(1.0, -omega * 32.0);
                assert!((fm - want).norm() < 1e-12, "m={m}");
            }
        }
    }

    #[test]
    fn gain_only_solution_divides_out_gains() {
        let c = cfg();
        let gains = [1.0, 1.02, 0.97, 1.005];
        let pts: Vec<_> = gains
            .iter()
            .map(|g| ChannelPoint {
                gain: *g,
                dt_s: 0.0,
                offset_lsb: 0.0,
            })
            .collect();
        let p = MismatchProfile::constant(&pts).unwrap();
        for zone in [Zone::First, Zone::Second] {
            let spec = DesignSpec::new(1024, 65, zone);
            let f = solve_pr_at(0.77, &p, &c, &spec).unwrap();
            for (m, fm) in f.iter().enumerate() {
                let want = Complex64::from_polar(1.0 / gains[m], -0.77 * 32.0);
                assert!((fm - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn solve_satisfies_its_system() {
        let c = cfg();
        let p = crate::synthetic::SyntheticProfile::reference(4, c.fs_hz)
            .to_profile()
            .unwrap();
        let spec = DesignSpec::new(1024, 65, Zone::First).with_edge_guard(0.0);
        for omega in [0.05, 0.9, 2.2] {
            let f = solve_pr_at(omega, &p, &c, &spec).unwrap();
            let ks = k_set(omega, 4, Zone::First);
            for k in ks {
                let analog = (omega - 2.0 * PI * k as f64 / 4.0) / c.ts();
                let g: Complex64 = (0..4)
                    .map(|m| {
                        f[m] * placement(omega, m) * channel_response_bilateral(&p, &c, m, analog).unwrap()
                    })
                    .sum();
                let want = if k == 0 {
                    Complex64::from_polar(4.0, -omega * 32.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((g - want).norm() < 1e-10 * 4.0);
            }
        }
    }

    #[test]
    fn identical_channels_with_zero_gain_are_singular() {
        let c = cfg();
        let pts = vec![
            ChannelPoint {
                gain: 1.0,
                dt_s: 0.0,
                offset_lsb: 0.0
            };
            4
        ];
        let mut p = MismatchProfile::constant(&pts).unwrap();
        // collapse channel 1 onto channel 0: same sampling instant
        let mut tab = p.channels().to_vec();
        tab[1].dt_s = vec![-c.ts()];
        p = MismatchProfile::new(vec![0.0], tab).unwrap();
        let spec = DesignSpec::new(1024, 65, Zone::First).with_edge_guard(0.0);
        assert!(matches!(
            solve_pr_at(0.4, &p, &c, &spec),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(DesignSpec::new(1024, 64, Zone::First).validate(4).is_err());
        assert!(DesignSpec::new(128, 65, Zone::First).validate(4).is_err());
        assert!(DesignSpec::new(1000, 65, Zone::First).validate(4).is_err());
        assert!(DesignSpec::new(1024, 65, Zone::First)
            .with_delay(65)
            .validate(4)
            .is_err());
        assert!(DesignSpec::new(1024, 65, Zone::First).validate(4).is_ok());
    }

    #[test]
    fn ideal_bank_is_shifted_impulses() {
        let c = cfg();
        let p = MismatchProfile::ideal(4, vec![0.0, 1.6e9]).unwrap();
        let spec = DesignSpec::new(1024, 65, Zone::First).with_window(Window::None);
        let bank = design_filter_bank(&p, &c, &spec).unwrap();
        for m in 0..4 {
            for (i, t) in bank.taps[m].iter().enumerate() {
                let want = if i == 32 { 1.0 } else { 0.0 };
                assert!((t - want).abs() < 1e-12, "m={m} i={i} {t}");
            }
        }
        let report = pr_residual(&bank, &p, &c, 256).unwrap();
        assert!(report.max_alias() < 1e-10);
    }

    #[test]
    fn taps_are_real_finite_and_length_l() {
        let c = cfg();
        let p = crate::synthetic::SyntheticProfile::reference(4, c.fs_hz)
            .to_profile()
            .unwrap();
        for zone in [Zone::First, Zone::Second] {
            let bank = design_filter_bank(&p, &c, &DesignSpec::new(1024, 65, zone)).unwrap();
            assert_eq!(bank.taps.len(), 4);
            assert!(bank
                .taps
                .iter()
                .all(|b| b.len() == 65 && b.iter().all(|t| t.is_finite())));
            assert!(bank.max_imag <= 1e-9);
        }
    }

    #[test]
    fn edge_taper_shape() {
        assert_eq!(edge_taper(0.5, Zone::First, 0.05), 1.0);
        assert_eq!(edge_taper(0.0, Zone::First, 0.05), 1.0);
        assert!(edge_taper(1.0, Zone::First, 0.05).abs() < 1e-15);
        assert!((edge_taper(0.975, Zone::First, 0.05) - 0.5).abs() < 1e-12);
        assert!(edge_taper(2.0, Zone::Second, 0.05).abs() < 1e-15);
        assert!(edge_taper(1.0, Zone::Second, 0.05).abs() < 1e-15);
        assert_eq!(edge_taper(1.5, Zone::Second, 0.05), 1.0);
        assert_eq!(edge_taper(1.0, Zone::First, 0.0), 1.0);
    }
}
