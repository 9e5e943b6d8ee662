//! Browser demo: a 4-channel, 1.6 GS/s converter with the reference mismatch
//! profile, calibrated and corrected in the page.
//!
//! Each exported function has a plain Rust counterpart that the tests call
//! directly.

use wasm_bindgen::prelude::*;

use tiadc_core::calibration::PlanRow;
use tiadc_core::design::Zone;
use tiadc_core::metrics::{coherent_bin, DEFAULT_HARMONICS};
use tiadc_core::pipeline::{calibrate, simulate_capture};
use tiadc_core::synthetic::SyntheticProfile;
use tiadc_core::{
    build_profile, correct, correct_offsets, design_filter_bank, dynamic_metrics, pr_residual, spectrum,
    DesignSpec, FilterBank, MismatchProfile, TiadcConfig, ToneSpec, Window,
};

const FS_HZ: f64 = 1.6e9;
const N_FFT: usize = 4096;
const AMPLITUDE_V: f64 = 0.9;

struct Setup {
    config: TiadcConfig,
    truth: MismatchProfile,
    estimated: MismatchProfile,
    bank: FilterBank,
}

fn config() -> Result<TiadcConfig, String> {
    TiadcConfig::new(4, FS_HZ, 14, 2.0).map_err(|e| e.to_string())
}

/// Calibrates the reference converter over one zone and designs a bank.
fn setup(taps: usize, zone: u8) -> Result<Setup, String> {
    let config = config()?;
    let zone = Zone::from_index(zone).map_err(|e| e.to_string())?;
    let truth = SyntheticProfile::reference(4, FS_HZ)
        .to_profile()
        .map_err(|e| e.to_string())?;
    let half = FS_HZ / 2.0;
    let lo = (zone.index() as f64 - 1.0) * half;
    let plan: Vec<PlanRow> = (0..16)
        .map(|i| PlanRow {
            freq_hz: lo + half * (0.02 + 0.96 * i as f64 / 15.0),
            amplitude_v: AMPLITUDE_V,
            n_samples: 4096,
        })
        .collect();
    let meas = calibrate(&plan, &config, &truth, 0.0, 0).map_err(|e| e.to_string())?;
    let estimated = build_profile(&meas, &config).map_err(|e| e.to_string())?;
    let spec = DesignSpec::new(1024, taps, zone);
    let bank = design_filter_bank(&estimated, &config, &spec).map_err(|e| e.to_string())?;
    Ok(Setup {
        config,
        truth,
        estimated,
        bank,
    })
}

/// Before/after measurement of one tone: `(spectrum_before, spectrum_after,
/// enob_before, enob_after)`, spectra in dBFS over `N_FFT/2 + 1` bins.
fn measure(s: &Setup, f_in_hz: f64) -> Result<(Vec<f64>, Vec<f64>, f64, f64), String> {
    let (_, f) = coherent_bin(f_in_hz, FS_HZ, N_FFT).map_err(|e| e.to_string())?;
    let l = s.bank.len();
    let n = (N_FFT + 2 * l).div_ceil(4) * 4;
    let tones = ToneSpec::single(AMPLITUDE_V, f, 0.7);
    let run = || -> tiadc_core::Result<_> {
        let mut raw = simulate_capture(&tones, &s.config, &s.truth, n, 0.0, 0, 0)?;
        let fixed = correct(&correct_offsets(&raw, &s.estimated)?, &s.bank)?;
        raw.transient = l;
        let before = dynamic_metrics(&spectrum(&raw, N_FFT, Window::None)?, f, 4, DEFAULT_HARMONICS)?;
        let after = dynamic_metrics(&spectrum(&fixed, N_FFT, Window::None)?, f, 4, DEFAULT_HARMONICS)?;
        let enob = |r: &tiadc_core::SpectrumReport| r.metrics.map(|m| m.enob_bits).unwrap_or(f64::NAN);
        Ok((enob(&before), enob(&after), before.power_dbfs, after.power_dbfs))
    };
    let (eb, ea, pb, pa) = run().map_err(|e| e.to_string())?;
    Ok((pb, pa, eb, ea))
}

/// Spectra of one tone before and after correction, concatenated:
/// `N_FFT/2 + 1` values each, then the two ENOB values.
pub fn spectra_before_after(f_in_hz: f64, taps: usize, zone: u8) -> Result<Vec<f64>, String> {
    let s = setup(taps, zone)?;
    let (mut out, after, eb, ea) = measure(&s, f_in_hz)?;
    out.extend(after);
    out.push(eb);
    out.push(ea);
    Ok(out)
}

/// `(omega, residual_alias)` pairs of the designed bank, flattened.
pub fn residual_curve(taps: usize, zone: u8, window: &str) -> Result<Vec<f64>, String> {
    let config = config()?;
    let zone = Zone::from_index(zone).map_err(|e| e.to_string())?;
    let window: Window = window.parse().map_err(|e: tiadc_core::Error| e.to_string())?;
    let profile = SyntheticProfile::reference(4, FS_HZ)
        .to_profile()
        .map_err(|e| e.to_string())?;
    let spec = DesignSpec::new(1024, taps, zone).with_window(window);
    let bank = design_filter_bank(&profile, &config, &spec).map_err(|e| e.to_string())?;
    let report = pr_residual(&bank, &profile, &config, 256).map_err(|e| e.to_string())?;
    Ok(report
        .points
        .iter()
        .flat_map(|p| [p.omega, p.residual_alias])
        .collect())
}

/// `(f_in_hz, enob_before, enob_after)` triples across the zone, flattened.
/// The points stay clear of the zone edges, where the bank does not correct.
pub fn enob_sweep(taps: usize, zone: u8, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err(format!("need at least 2 sweep points, got {points}"));
    }
    let s = setup(taps, zone)?;
    let half = FS_HZ / 2.0;
    let lo = (zone as f64 - 1.0) * half;
    let mut out = Vec::with_capacity(3 * points);
    for i in 0..points {
        let f = lo + half * (0.06 + 0.88 * i as f64 / (points - 1) as f64);
        let (_, _, eb, ea) = measure(&s, f)?;
        out.extend([f, eb, ea]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = spectraBeforeAfter)]
pub fn spectra_before_after_js(f_in_hz: f64, taps: usize, zone: u8) -> Result<Vec<f64>, JsError> {
    spectra_before_after(f_in_hz, taps, zone).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = residualCurve)]
pub fn residual_curve_js(taps: usize, zone: u8, window: &str) -> Result<Vec<f64>, JsError> {
    residual_curve(taps, zone, window).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = enobSweep)]
pub fn enob_sweep_js(taps: usize, zone: u8, points: usize) -> Result<Vec<f64>, JsError> {
    enob_sweep(taps, zone, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fftLength)]
pub fn fft_length() -> usize {
    N_FFT
}
