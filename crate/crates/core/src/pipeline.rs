//! End-to-end runs: simulate a converter with a known mismatch profile,
//! calibrate it, design a bank, correct a sweep of test tones and measure
//! the improvement. Scenarios are JSON documents.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{build_profile, estimate_mismatch_at, MismatchMeasurement, PlanRow};
use crate::correction::{correct, correct_offsets};
use crate::design::{design_filter_bank, pr_residual, DesignSpec, FilterBank, PRResidualReport};
use crate::error::{Error, Result};
use crate::metrics::{
    coherent_bin, dynamic_metrics, image_spur_levels, spectrum, ImageLevel, DEFAULT_HARMONICS,
};
use crate::model::{sample_channels, Capture, ChannelPoint, MismatchProfile, TiadcConfig, Tone, ToneSpec};
use crate::synthetic::SyntheticProfile;
use crate::window::Window;

/// Ground-truth profile: a CSV path or an inline synthetic description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSource {
    File(PathBuf),
    Synthetic { synthetic: SyntheticProfile },
}

/// Frequencies `start..=stop` with `points` entries, evenly spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Span {
    pub fn freqs(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start_hz],
            n => (0..n)
                .map(|i| self.start_hz + (self.stop_hz - self.start_hz) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Calibration plan: CSV path, inline rows, or an evenly spaced span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSource {
    File(PathBuf),
    Rows(Vec<PlanRow>),
    Span {
        span: Span,
        amplitude_v: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTone {
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub amplitude_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub min_image_drop_db: f64,
    pub min_enob_gain_bits: f64,
    pub min_enob_after_bits: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_image_drop_db: 30.0,
            min_enob_gain_bits: 2.0,
            min_enob_after_bits: 13.0,
        }
    }
}

fn default_window() -> Window {
    Window::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub config: TiadcConfig,
    pub truth: TruthSource,
    pub plan: PlanSource,
    pub design: DesignSpec,
    pub sweep: Span,
    pub amplitude_v: f64,
    pub n_fft: usize,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default)]
    pub two_tone: Option<TwoTone>,
    /// Also design a bank from a single-frequency snapshot at this frequency.
    #[serde(default)]
    pub narrowband_hz: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Gaussian input noise added before quantization.
    #[serde(default)]
    pub noise_rms_v: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Stage {
        stage: name,
        source: Box::new(e),
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn truth_profile(&self) -> Result<MismatchProfile> {
        match &self.truth {
            TruthSource::File(p) => crate::io::read_profile(&self.resolve(p)),
            TruthSource::Synthetic { synthetic } => synthetic.to_profile(),
        }
    }

    pub fn plan_rows(&self) -> Result<Vec<PlanRow>> {
        match &self.plan {
            PlanSource::File(p) => crate::io::read_plan(&self.resolve(p)),
            PlanSource::Rows(r) => Ok(r.clone()),
            PlanSource::Span {
                span,
                amplitude_v,
                n_samples,
            } => Ok(span
                .freqs()
                .into_iter()
                .map(|f| PlanRow {
                    freq_hz: f,
                    amplitude_v: *amplitude_v,
                    n_samples: *n_samples,
                })
                .collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.design.validate(self.config.m_channels)?;
        if self.n_fft < 64 || !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_fft must be a power of two >= 64, got {}",
                self.n_fft
            )));
        }
        if self.sweep.points == 0 {
            return Err(Error::Config("sweep needs at least one point".into()));
        }
        if !(self.noise_rms_v >= 0.0 && self.noise_rms_v.is_finite()) {
            return Err(Error::Config(format!("invalid noise level {}", self.noise_rms_v)));
        }
        Ok(())
    }

    /// Samples per test capture: one FFT record plus a transient at each end.
    pub fn capture_len(&self) -> usize {
        let m = self.config.m_channels;
        (self.n_fft + 2 * self.design.taps).div_ceil(m) * m
    }
}

/// Simulates a capture with optional input noise. Each `stream` draws from
/// an independent noise sequence, so results do not depend on run order.
pub fn simulate_capture(
    tones: &ToneSpec,
    config: &TiadcConfig,
    profile: &MismatchProfile,
    n_total: usize,
    noise_rms_v: f64,
    seed: u64,
    stream: u64,
) -> Result<Capture> {
    if noise_rms_v == 0.0 {
        return Capture::simulate(tones, config, profile, n_total);
    }
    let analog = config.with_quantize(false);
    let mut chans = sample_channels(tones, &analog, profile, n_total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, noise_rms_v).map_err(|e| Error::Config(e.to_string()))?;
    // noise is drawn in time order, not channel order
    let per = n_total / config.m_channels;
    for i in 0..per {
        for ch in chans.iter_mut() {
            ch[i] += normal.sample(&mut rng);
        }
    }
    if config.quantize {
        for v in chans.iter_mut().flatten() {
            *v = config.quantize_value(*v);
        }
    }
    Capture::from_channels(&chans, *config)
}

/// Runs the plan against the truth profile and returns one measurement per row.
pub fn calibrate(
    plan: &[PlanRow],
    config: &TiadcConfig,
    truth: &MismatchProfile,
    noise_rms_v: f64,
    seed: u64,
) -> Result<Vec<MismatchMeasurement>> {
    let mut out = Vec::with_capacity(plan.len());
    for (i, row) in plan.iter().enumerate() {
        let n = row.n_samples;
        if n % config.m_channels != 0 {
            return Err(Error::NotMultiple {
                len: n,
                m: config.m_channels,
            });
        }
        let (_, f) = coherent_bin(row.freq_hz, config.fs_hz, n)?;
        let tones = ToneSpec::single(row.amplitude_v, f, 0.3);
        let cap = simulate_capture(&tones, config, truth, n, noise_rms_v, seed, 1_000 + i as u64)?;
        out.push(estimate_mismatch_at(&cap, f, config)?);
    }
    out.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    Ok(out)
}

/// Constant-mismatch profile from a single measurement.
pub fn snapshot_profile(meas: &MismatchMeasurement) -> Result<MismatchProfile> {
    let pts: Vec<ChannelPoint> = meas
        .channels
        .iter()
        .map(|c| ChannelPoint {
            gain: c.gain_rel,
            dt_s: c.dt_s,
            offset_lsb: c.offset_lsb,
        })
        .collect();
    MismatchProfile::constant(&pts)
}

/// Before/after figures for one test signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Analog frequency of the (first) tone.
    pub f_in_hz: f64,
    pub enob_before: f64,
    pub enob_after: f64,
    pub max_image_dbc_before: f64,
    pub max_image_dbc_after: f64,
    /// Smallest per-image improvement, matched by frequency.
    pub min_image_drop_db: f64,
    pub images_before: Vec<ImageLevel>,
    pub images_after: Vec<ImageLevel>,
}

fn max_dbc(images: &[ImageLevel]) -> f64 {
    images
        .iter()
        .filter(|i| !i.collision)
        .map(|i| i.dbc)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn min_drop(before: &[ImageLevel], after: &[ImageLevel]) -> f64 {
    before
        .iter()
        .filter(|b| !b.collision)
        .filter_map(|b| {
            after
                .iter()
                .find(|a| a.freq_hz == b.freq_hz)
                .map(|a| b.dbc - a.dbc)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Image levels for every tone of the capture, merged.
fn all_images(cap: &Capture, n_fft: usize, window: Window, tones: &[f64]) -> Result<Vec<ImageLevel>> {
    let s = spectrum(cap, n_fft, window)?;
    let m = cap.config.m_channels;
    let mut out = Vec::new();
    for &f in tones {
        let mut levels = image_spur_levels(&s, f, cap.fs_hz(), m)?;
        // an image that lands on another tone is not measurable either
        for l in levels.iter_mut() {
            let lb = s.bin_of(l.freq_hz);
            if tones.iter().any(|t| s.bin_of(*t).abs_diff(lb) <= s.gather()) {
                l.collision = true;
            }
        }
        out.extend(levels);
    }
    Ok(out)
}

/// Measures one test signal before and after correction.
pub fn evaluate(
    tones: &ToneSpec,
    truth: &MismatchProfile,
    estimated: &MismatchProfile,
    bank: &FilterBank,
    scenario: &Scenario,
    stream: u64,
) -> Result<SweepPoint> {
    let config = &scenario.config;
    let n_cap = scenario.capture_len();
    let l = bank.len();
    let mut raw = simulate_capture(
        tones,
        config,
        truth,
        n_cap,
        scenario.noise_rms_v,
        scenario.seed,
        stream,
    )
    .map_err(stage("simulate"))?;
    let fixed = correct_offsets(&raw, estimated)
        .and_then(|c| correct(&c, bank))
        .map_err(stage("correct"))?;
    raw.transient = l;

    let freqs: Vec<f64> = tones.tones.iter().map(|t| t.freq_hz).collect();
    let analyze = |cap: &Capture| -> Result<(f64, Vec<ImageLevel>)> {
        let s = spectrum(cap, scenario.n_fft, scenario.window)?;
        let enob = dynamic_metrics(&s, freqs[0], config.m_channels, DEFAULT_HARMONICS)?
            .metrics
            .map(|m| m.enob_bits)
            .unwrap_or(f64::NAN);
        Ok((enob, all_images(cap, scenario.n_fft, scenario.window, &freqs)?))
    };
    let (enob_before, images_before) = analyze(&raw).map_err(stage("analyze"))?;
    let (enob_after, images_after) = analyze(&fixed).map_err(stage("analyze"))?;
    Ok(SweepPoint {
        f_in_hz: freqs[0],
        enob_before,
        enob_after,
        max_image_dbc_before: max_dbc(&images_before),
        max_image_dbc_after: max_dbc(&images_after),
        min_image_drop_db: min_drop(&images_before, &images_after),
        images_before,
        images_after,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub truth: MismatchProfile,
    pub measurements: Vec<MismatchMeasurement>,
    pub estimated: MismatchProfile,
    pub bank: FilterBank,
    pub residual: PRResidualReport,
    pub sweep: Vec<SweepPoint>,
    pub two_tone: Option<SweepPoint>,
    pub narrowband: Option<(FilterBank, Vec<SweepPoint>)>,
    pub violations: Vec<String>,
}

/// Coherent single-tone frequencies for the sweep.
pub fn sweep_tones(scenario: &Scenario) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for f in scenario.sweep.freqs() {
        let (_, fc) = coherent_bin(f, scenario.config.fs_hz, scenario.n_fft)?;
        if out.last() != Some(&fc) {
            out.push(fc);
        }
    }
    Ok(out)
}

/// Two equal tones, each moved to the nearest coherent frequency.
pub fn two_tone_signal(config: &TiadcConfig, n_fft: usize, tt: &TwoTone) -> Result<ToneSpec> {
    let (_, f1) = coherent_bin(tt.f1_hz, config.fs_hz, n_fft)?;
    let (_, f2) = coherent_bin(tt.f2_hz, config.fs_hz, n_fft)?;
    let tones = ToneSpec {
        tones: vec![
            Tone {
                amplitude_v: tt.amplitude_v,
                freq_hz: f1,
                phase_rad: 0.2,
            },
            Tone {
                amplitude_v: tt.amplitude_v,
                freq_hz: f2,
                phase_rad: 1.9,
            },
        ],
        dc_v: 0.0,
    };
    tones.validate()?;
    Ok(tones)
}

/// Evaluates every sweep tone against one bank.
pub fn run_sweep(
    scenario: &Scenario,
    truth: &MismatchProfile,
    estimated: &MismatchProfile,
    bank: &FilterBank,
    stream_base: u64,
) -> Result<Vec<SweepPoint>> {
    let freqs = sweep_tones(scenario)?;
    // points are independent; results are collected in frequency order
    std::thread::scope(|s| {
        let handles: Vec<_> = freqs
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                s.spawn(move || {
                    let tones = ToneSpec::single(scenario.amplitude_v, f, 0.7);
                    evaluate(&tones, truth, estimated, bank, scenario, stream_base + i as u64)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

fn check(point: &SweepPoint, t: &Thresholds, label: &str, out: &mut Vec<String>) {
    let f = point.f_in_hz / 1e6;
    if !(point.min_image_drop_db >= t.min_image_drop_db) {
        out.push(format!(
            "{label} {f:.3} MHz: image drop {:.1} dB < {}",
            point.min_image_drop_db, t.min_image_drop_db
        ));
    }
    if !(point.enob_after - point.enob_before >= t.min_enob_gain_bits) {
        out.push(format!(
            "{label} {f:.3} MHz: ENOB gain {:.2} bits < {}",
            point.enob_after - point.enob_before,
            t.min_enob_gain_bits
        ));
    }
    if !(point.enob_after >= t.min_enob_after_bits) {
        out.push(format!(
            "{label} {f:.3} MHz: ENOB after {:.2} bits < {}",
            point.enob_after, t.min_enob_after_bits
        ));
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport> {
    scenario.validate().map_err(stage("scenario"))?;
    let config = &scenario.config;
    let truth = scenario.truth_profile().map_err(stage("truth profile"))?;
    if truth.m_channels() != config.m_channels {
        return Err(Error::Stage {
            stage: "truth profile",
            source: Box::new(Error::ChannelMismatch {
                capture: config.m_channels,
                bank: truth.m_channels(),
            }),
        });
    }
    let plan = scenario.plan_rows().map_err(stage("calibration plan"))?;
    let measurements =
        calibrate(&plan, config, &truth, scenario.noise_rms_v, scenario.seed).map_err(stage("calibrate"))?;
    let estimated = build_profile(&measurements, config).map_err(stage("calibrate"))?;
    let bank = design_filter_bank(&estimated, config, &scenario.design).map_err(stage("design"))?;
    let residual = pr_residual(&bank, &estimated, config, 512).map_err(stage("design"))?;

    let sweep = run_sweep(scenario, &truth, &estimated, &bank, 0)?;
    let mut violations = Vec::new();
    for p in &sweep {
        check(p, &scenario.thresholds, "sweep", &mut violations);
    }

    let two_tone = match scenario.two_tone {
        Some(tt) => {
            let tones = two_tone_signal(config, scenario.n_fft, &tt).map_err(stage("two-tone"))?;
            let p = evaluate(&tones, &truth, &estimated, &bank, scenario, 500)?;
            if !(p.min_image_drop_db >= scenario.thresholds.min_image_drop_db) {
                violations.push(format!(
                    "two-tone: image drop {:.1} dB < {}",
                    p.min_image_drop_db, scenario.thresholds.min_image_drop_db
                ));
            }
            Some(p)
        }
        None => None,
    };

    let narrowband = match scenario.narrowband_hz {
        Some(f) => {
            let n = plan.first().map(|r| r.n_samples).unwrap_or(4096);
            let amp = plan
                .first()
                .map(|r| r.amplitude_v)
                .unwrap_or(scenario.amplitude_v);
            let row = PlanRow {
                freq_hz: f,
                amplitude_v: amp,
                n_samples: n,
            };
            let meas = calibrate(
                &[row],
                config,
                &truth,
                scenario.noise_rms_v,
                scenario.seed.wrapping_add(1),
            )
            .map_err(stage("narrowband calibrate"))?;
            let snap = snapshot_profile(&meas[0]).map_err(stage("narrowband calibrate"))?;
            let nb =
                design_filter_bank(&snap, config, &scenario.design).map_err(stage("narrowband design"))?;
            let pts = run_sweep(scenario, &truth, &snap, &nb, 2_000)?;
            Some((nb, pts))
        }
        None => None,
    };

    Ok(ScenarioReport {
        name: scenario.name.clone(),
        truth,
        measurements,
        estimated,
        bank,
        residual,
        sweep,
        two_tone,
        narrowband,
        violations,
    })
}

/// The summary table: `f_in_hz,enob_before,enob_after,max_image_dbc_before,max_image_dbc_after`.
pub fn summary_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("f_in_hz,enob_before,enob_after,max_image_dbc_before,max_image_dbc_after\n");
    for p in points {
        s.push_str(&format!(
            "{:.3},{:.4},{:.4},{:.3},{:.3}\n",
            p.f_in_hz, p.enob_before, p.enob_after, p.max_image_dbc_before, p.max_image_dbc_after
        ));
    }
    s
}

/// Writes every artifact of a run into `dir` and returns the files written.
pub fn write_artifacts(report: &ScenarioReport, dir: &Path) -> Result<Vec<PathBuf>> {
    use crate::io;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        io::write_string(&p, &text)?;
        written.push(p);
        Ok(())
    };
    put("truth_profile.csv", io::profile_to_csv(&report.truth))?;
    put("estimated_profile.csv", io::profile_to_csv(&report.estimated))?;
    put("bank.csv", io::bank_to_csv(&report.bank))?;
    put("pr_residual.csv", io::residual_to_csv(&report.residual))?;
    put("summary.csv", summary_csv(&report.sweep))?;
    if let Some(p) = &report.two_tone {
        put("two_tone_summary.csv", summary_csv(std::slice::from_ref(p)))?;
    }
    if let Some((bank, pts)) = &report.narrowband {
        put("narrowband_bank.csv", io::bank_to_csv(bank))?;
        put("narrowband_summary.csv", summary_csv(pts))?;
    }
    Ok(written)
}
