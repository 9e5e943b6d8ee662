//! On-disk formats: profile, calibration plan, capture, filter bank, spectrum
//! and spur tables, residual reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::PlanRow;
use crate::design::{DesignSpec, FilterBank, PRResidualReport, Zone};
use crate::error::{Error, Result};
use crate::metrics::{ImageLevel, SpectrumReport};
use crate::model::{Capture, ChannelTable, CorrectionInfo, MismatchProfile, TiadcConfig};
use crate::window::Window;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    channel: usize,
    freq_hz: f64,
    gain: f64,
    dt_s: f64,
    offset_lsb: f64,
}

pub fn profile_to_csv(profile: &MismatchProfile) -> String {
    let mut s = String::from("channel,freq_hz,gain,dt_s,offset_lsb\n");
    for (m, ch) in profile.channels().iter().enumerate() {
        for (i, f) in profile.freqs_hz().iter().enumerate() {
            let _ = writeln!(
                s,
                "{m},{f:.17e},{:.17e},{:.17e},{:.17e}",
                ch.gain[i], ch.dt_s[i], ch.offset_lsb[i]
            );
        }
    }
    s
}

pub fn profile_from_csv(text: &str, origin: &Path) -> Result<MismatchProfile> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::parse(origin, e))?.clone();
    let want = ["channel", "freq_hz", "gain", "dt_s", "offset_lsb"];
    if header.iter().collect::<Vec<_>>() != want {
        return Err(Error::parse(
            origin,
            format!("expected header {}", want.join(",")),
        ));
    }
    let mut rows: Vec<ProfileRow> = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec.map_err(|e| Error::parse(origin, e))?);
    }
    if rows.is_empty() {
        return Err(Error::parse(origin, "no rows"));
    }
    let m_ch = rows.iter().map(|r| r.channel).max().unwrap_or(0) + 1;
    let mut freqs: Vec<Vec<f64>> = vec![Vec::new(); m_ch];
    let mut tables: Vec<ChannelTable> = vec![
        ChannelTable {
            gain: vec![],
            dt_s: vec![],
            offset_lsb: vec![]
        };
        m_ch
    ];
    let mut last = (0usize, f64::NEG_INFINITY);
    for r in rows {
        if (r.channel, r.freq_hz) <= last && !(r.channel > last.0) {
            return Err(Error::parse(origin, "rows must be sorted by (channel, freq_hz)"));
        }
        last = (r.channel, r.freq_hz);
        freqs[r.channel].push(r.freq_hz);
        tables[r.channel].gain.push(r.gain);
        tables[r.channel].dt_s.push(r.dt_s);
        tables[r.channel].offset_lsb.push(r.offset_lsb);
    }
    if freqs.iter().any(|f| f != &freqs[0]) {
        return Err(Error::parse(origin, "all channels must share one frequency grid"));
    }
    MismatchProfile::new(freqs.swap_remove(0), tables)
}

pub fn write_profile(path: &Path, profile: &MismatchProfile) -> Result<()> {
    write_text(path, &profile_to_csv(profile))
}

pub fn read_profile(path: &Path) -> Result<MismatchProfile> {
    profile_from_csv(&read_text(path)?, path)
}

pub fn read_plan(path: &Path) -> Result<Vec<PlanRow>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec.map_err(|e| Error::parse(path, e))?);
    }
    Ok(rows)
}

pub fn write_plan(path: &Path, rows: &[PlanRow]) -> Result<()> {
    let mut s = String::from("freq_hz,amplitude_v,n_samples\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.freq_hz, r.amplitude_v, r.n_samples);
    }
    write_text(path, &s)
}

/// Sidecar metadata of a raw capture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub fs_hz: f64,
    pub m_channels: usize,
    pub bits: u32,
    pub full_scale_v: f64,
    pub n: usize,
    #[serde(default = "yes")]
    pub quantize: bool,
    #[serde(default)]
    pub corrected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_samples: Option<usize>,
    #[serde(default)]
    pub transient_samples: usize,
}

fn yes() -> bool {
    true
}

/// `capture.bin` -> `capture.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_capture(path: &Path, capture: &Capture) -> Result<()> {
    let mut bytes = Vec::with_capacity(capture.len() * 8);
    for v in &capture.samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let c = &capture.config;
    let meta = CaptureMeta {
        fs_hz: c.fs_hz,
        m_channels: c.m_channels,
        bits: c.bits,
        full_scale_v: c.full_scale_v,
        n: capture.len(),
        quantize: c.quantize,
        corrected: capture.correction.is_some(),
        bank_id: capture.correction.as_ref().map(|x| x.bank_id.clone()),
        delay_samples: capture.correction.as_ref().map(|x| x.delay_samples),
        transient_samples: capture.transient,
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_text(&sidecar_path(path), &(json + "\n"))
}

pub fn read_capture(path: &Path) -> Result<Capture> {
    let meta_path = sidecar_path(path);
    let meta: CaptureMeta =
        serde_json::from_str(&read_text(&meta_path)?).map_err(|e| Error::parse(&meta_path, e))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.n * 8 {
        return Err(Error::parse(
            path,
            format!("expected {} samples, file holds {} bytes", meta.n, bytes.len()),
        ));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let config = TiadcConfig {
        m_channels: meta.m_channels,
        fs_hz: meta.fs_hz,
        bits: meta.bits,
        full_scale_v: meta.full_scale_v,
        quantize: meta.quantize,
    };
    config.validate()?;
    let mut cap = Capture::new(samples, config)?;
    cap.transient = meta.transient_samples;
    if meta.corrected {
        cap.correction = Some(CorrectionInfo {
            bank_id: meta.bank_id.unwrap_or_default(),
            delay_samples: meta.delay_samples.unwrap_or(0),
        });
    }
    Ok(cap)
}

pub fn bank_to_csv(bank: &FilterBank) -> String {
    let s = &bank.spec;
    let mut out = String::new();
    let _ = writeln!(out, "# M={}", bank.m_channels);
    let _ = writeln!(out, "# L={}", s.taps);
    let _ = writeln!(out, "# N={}", s.n_grid);
    let _ = writeln!(out, "# d={}", s.delay);
    let _ = writeln!(out, "# zone={}", s.zone);
    let _ = writeln!(out, "# window={}", s.window);
    let _ = writeln!(out, "# fs={}", bank.fs_hz);
    let _ = writeln!(out, "# edge_guard={}", s.edge_guard);
    out.push_str("channel,tap_index,coefficient\n");
    for (m, branch) in bank.taps.iter().enumerate() {
        for (p, c) in branch.iter().enumerate() {
            let _ = writeln!(out, "{m},{p},{c:.16e}");
        }
    }
    out
}

pub fn bank_from_csv(text: &str, origin: &Path) -> Result<FilterBank> {
    let mut keys = std::collections::HashMap::new();
    for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
        if let Some((k, v)) = line.trim().split_once('=') {
            keys.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| -> Result<&String> {
        keys.get(k)
            .ok_or_else(|| Error::parse(origin, format!("missing header key '{k}'")))
    };
    let num = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::parse(origin, format!("bad value for '{k}'")))
    };
    let m_ch = num("M")?;
    let taps = num("L")?;
    let zone = Zone::from_index(num("zone")? as u8)?;
    let window: Window = get("window")?.parse()?;
    let fs_hz: f64 = get("fs")?.parse().map_err(|_| Error::parse(origin, "bad fs"))?;
    let edge_guard: f64 = match keys.get("edge_guard") {
        Some(v) => v.parse().map_err(|_| Error::parse(origin, "bad edge_guard"))?,
        None => 0.0,
    };
    let spec = DesignSpec {
        n_grid: num("N")?,
        taps,
        delay: num("d")?,
        window,
        zone,
        edge_guard,
    };
    let mut coeffs = vec![vec![f64::NAN; taps]; m_ch];
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for rec in rdr.deserialize::<(usize, usize, f64)>() {
        let (m, p, c) = rec.map_err(|e| Error::parse(origin, e))?;
        if m >= m_ch || p >= taps {
            return Err(Error::parse(origin, format!("tap ({m}, {p}) out of range")));
        }
        coeffs[m][p] = c;
    }
    if coeffs.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::parse(origin, "missing or non-finite coefficients"));
    }
    Ok(FilterBank {
        taps: coeffs,
        spec,
        m_channels: m_ch,
        fs_hz,
        max_imag: 0.0,
    })
}

pub fn write_bank(path: &Path, bank: &FilterBank) -> Result<()> {
    write_text(path, &bank_to_csv(bank))
}

pub fn read_bank(path: &Path) -> Result<FilterBank> {
    bank_from_csv(&read_text(path)?, path)
}

pub fn residual_to_csv(report: &PRResidualReport) -> String {
    let mut s = String::from("omega_rad,residual_k0,residual_alias\n");
    for p in &report.points {
        let k0 = p.residual_k0.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let _ = writeln!(s, "{:.9},{k0},{:.6e}", p.omega, p.residual_alias);
    }
    s
}

/// `freq_hz,power_dbfs` rows followed by a `#`-prefixed metrics footer.
pub fn spectrum_to_csv(report: &SpectrumReport) -> String {
    let mut s = String::from("freq_hz,power_dbfs\n");
    for (f, p) in report.freqs_hz.iter().zip(&report.power_dbfs) {
        let _ = writeln!(s, "{f:.3},{p:.4}");
    }
    if let Some(m) = &report.metrics {
        let _ = writeln!(s, "# n_fft={}", report.n_fft);
        let _ = writeln!(s, "# window={}", report.window);
        let _ = writeln!(s, "# snr_db={:.4}", m.snr_db);
        let _ = writeln!(s, "# sinad_db={:.4}", m.sinad_db);
        let _ = writeln!(s, "# thd_db={:.4}", m.thd_db);
        let _ = writeln!(s, "# sfdr_db={:.4}", m.sfdr_db);
        let _ = writeln!(s, "# enob_bits={:.4}", m.enob_bits);
    }
    s
}

/// `k,freq_hz,dbc,kind` rows: interleave images plus the spur table.
pub fn spurs_to_csv(report: &SpectrumReport, images: &[ImageLevel]) -> String {
    let mut s = String::from("k,freq_hz,dbc,kind\n");
    for im in images {
        let kind = if im.collision {
            "image_collision".to_string()
        } else {
            "image".to_string()
        };
        let _ = writeln!(s, "{},{:.3},{:.4},{kind}", im.k, im.freq_hz, im.dbc);
    }
    for sp in report
        .spurs
        .iter()
        .filter(|x| !matches!(x.kind, crate::metrics::SpurKind::Image(_)))
    {
        let _ = writeln!(s, "{},{:.3},{:.4},{}", sp.k, sp.freq_hz, sp.dbc, sp.kind);
    }
    s
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}
