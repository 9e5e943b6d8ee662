use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tiadc_core::design::{FilterBank, Zone};
use tiadc_core::{io, spectrum, DesignSpec, MismatchProfile, Window};

const FS: f64 = 1.6e9;

fn tiadc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiadc"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "command failed: {}", stderr(o));
}

/// Nonzero exit with exactly one `error:` line on stderr.
fn assert_error(o: &Output) -> String {
    assert!(!o.status.success(), "expected failure, stdout: {}", stdout(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().filter(|l| !l.starts_with("warning:")).collect();
    assert_eq!(lines.len(), 1, "expected one error line, got {err:?}");
    assert!(lines[0].starts_with("error: "), "{err}");
    lines[0].to_string()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn reference_profile() -> String {
    scenarios().join("reference_profile.csv").display().to_string()
}

fn ideal_profile(dir: &Path) -> String {
    let p = dir.join("ideal.csv");
    io::write_profile(&p, &MismatchProfile::ideal(4, vec![0.0, FS]).unwrap()).unwrap();
    p.display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn simulate_writes_capture_of_requested_length() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    let o = tiadc(
        dir.path(),
        &[
            "simulate",
            "--profile",
            &prof,
            "--tone",
            "100e6:0.5",
            "-n",
            "8192",
        ],
    );
    assert_ok(&o);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("M=4") && out.contains("fs=1600000000"), "{out}");
    let cap = io::read_capture(&dir.path().join("capture.bin")).unwrap();
    assert_eq!(cap.len(), 8192);
}

#[test]
fn simulate_two_tones_both_visible() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    let o = tiadc(
        dir.path(),
        &[
            "simulate",
            "--profile",
            &prof,
            "--tone",
            "100e6:0.4",
            "--tone",
            "300e6:0.4:1.0",
            "--coherent",
            "8192",
            "-n",
            "8192",
        ],
    );
    assert_ok(&o);
    let cap = io::read_capture(&dir.path().join("capture.bin")).unwrap();
    let r = spectrum(&cap, 8192, Window::None).unwrap();
    let mut bins: Vec<usize> = (1..4096).collect();
    bins.sort_by(|&a, &b| r.power[b].total_cmp(&r.power[a]));
    let mut top = [r.freqs_hz[bins[0]], r.freqs_hz[bins[1]]];
    top.sort_by(f64::total_cmp);
    assert!((top[0] - 100e6).abs() < 0.3e6, "{top:?}");
    assert!((top[1] - 300e6).abs() < 0.3e6, "{top:?}");
}

#[test]
fn simulate_rejects_length_not_multiple_of_channels() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    let o = tiadc(
        dir.path(),
        &["simulate", "--profile", &prof, "--tone", "1e8:0.5", "-n", "8191"],
    );
    let line = assert_error(&o);
    assert!(line.contains("multiple"), "{line}");
}

#[test]
fn bad_arguments_give_single_error_line() {
    let dir = tempfile::tempdir().unwrap();
    assert_error(&tiadc(
        dir.path(),
        &["simulate", "--profile", "x.csv", "--tone", "abc"],
    ));
    assert_error(&tiadc(dir.path(), &["frobnicate"]));
    let missing = assert_error(&tiadc(
        dir.path(),
        &["--config", "/no/such/config.json", "design", "--profile", "p.csv"],
    ));
    assert!(missing.contains("/no/such/config.json"), "{missing}");
}

#[test]
fn config_file_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"m_channels": 2, "fs_hz": 1e9, "bits": 12, "full_scale_v": 1.0}"#,
    )
    .unwrap();
    let prof = dir.path().join("two.csv");
    io::write_profile(&prof, &MismatchProfile::ideal(2, vec![0.0, 1e9]).unwrap()).unwrap();
    let o = tiadc(
        dir.path(),
        &[
            "--config",
            &s(&cfg),
            "simulate",
            "--profile",
            &s(&prof),
            "--tone",
            "1e8:0.4",
            "-n",
            "1024",
        ],
    );
    assert_ok(&o);
    let cap = io::read_capture(&dir.path().join("capture.bin")).unwrap();
    assert_eq!(cap.config.m_channels, 2);
    assert_eq!(cap.config.bits, 12);

    // a 4-channel profile does not fit a 2-channel converter
    let o = tiadc(
        dir.path(),
        &[
            "--config",
            &s(&cfg),
            "simulate",
            "--profile",
            &reference_profile(),
            "--tone",
            "1e8:0.4",
        ],
    );
    assert_error(&o);
}

#[test]
fn calibrate_recovers_reference_profile() {
    let dir = tempfile::tempdir().unwrap();
    let plan = s(&scenarios().join("plan_zone1.csv"));
    let o = tiadc(
        dir.path(),
        &["calibrate", "--plan", &plan, "--truth", &reference_profile()],
    );
    assert_ok(&o);
    let est = io::read_profile(&dir.path().join("profile.csv")).unwrap();
    let truth = io::read_profile(Path::new(&reference_profile())).unwrap();
    assert_eq!(est.freqs_hz().len(), 16);
    for &f in est.freqs_hz() {
        for m in 0..4 {
            let g0 = truth.at(0, f).gain;
            let want = truth.at(m, f).gain / g0;
            let got = est.at(m, f).gain;
            assert!((got - want).abs() <= 1e-3, "m={m} f={f}: {got} vs {want}");
        }
    }
}

#[test]
fn calibrate_needs_two_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.csv");
    std::fs::write(&plan, "freq_hz,amplitude_v,n_samples\n100000000,0.9,4096\n").unwrap();
    let o = tiadc(
        dir.path(),
        &["calibrate", "--plan", &s(&plan), "--truth", &reference_profile()],
    );
    let line = assert_error(&o);
    assert!(line.contains("at least 2"), "{line}");
}

#[test]
fn calibrate_ingests_recorded_captures() {
    let dir = tempfile::tempdir().unwrap();
    let caps = dir.path().join("caps");
    let plan = dir.path().join("plan.csv");
    std::fs::write(
        &plan,
        "freq_hz,amplitude_v,n_samples\n50000000,0.9,4096\n200000000,0.9,4096\n400000000,0.9,4096\n",
    )
    .unwrap();
    for (i, f) in ["50e6", "200e6", "400e6"].iter().enumerate() {
        let tone = format!("{f}:0.9:0.3");
        let out = format!("row_{i}.bin");
        let o = tiadc(
            &caps,
            &[
                "simulate",
                "--profile",
                &reference_profile(),
                "--tone",
                &tone,
                "--coherent",
                "4096",
                "-n",
                "4096",
                "--out",
                &out,
            ],
        );
        assert_ok(&o);
    }
    let o = tiadc(
        dir.path(),
        &["calibrate", "--plan", &s(&plan), "--captures", &s(&caps)],
    );
    assert_ok(&o);
    let est = io::read_profile(&dir.path().join("profile.csv")).unwrap();
    let truth = io::read_profile(Path::new(&reference_profile())).unwrap();
    for &f in est.freqs_hz() {
        let want = truth.at(2, f).gain / truth.at(0, f).gain;
        assert!((est.at(2, f).gain - want).abs() < 1e-3);
    }

    std::fs::remove_file(caps.join("row_1.bin")).unwrap();
    let o = tiadc(
        dir.path(),
        &["calibrate", "--plan", &s(&plan), "--captures", &s(&caps)],
    );
    let line = assert_error(&o);
    assert!(line.contains("row_1.bin"), "{line}");
}

#[test]
fn design_of_ideal_profile_is_shifted_impulses() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    let o = tiadc(
        dir.path(),
        &["design", "--profile", &prof, "-L", "33", "-N", "256"],
    );
    assert_ok(&o);
    assert!(stdout(&o).contains("max residual_alias"));
    let bank = io::read_bank(&dir.path().join("bank.csv")).unwrap();
    assert_eq!(bank.len(), 33);
    for taps in &bank.taps {
        for (i, &t) in taps.iter().enumerate() {
            let want = if i == 16 { 1.0 } else { 0.0 };
            assert!((t - want).abs() < 1e-9, "tap {i} = {t}");
        }
    }
    let residual = std::fs::read_to_string(dir.path().join("pr_residual.csv")).unwrap();
    assert!(residual.starts_with("omega_rad,residual_k0,residual_alias"));
}

#[test]
fn design_warns_when_profile_misses_the_zone() {
    let dir = tempfile::tempdir().unwrap();
    let plan = s(&scenarios().join("plan_zone1.csv"));
    assert_ok(&tiadc(
        dir.path(),
        &["calibrate", "--plan", &plan, "--truth", &reference_profile()],
    ));
    let prof = s(&dir.path().join("profile.csv"));
    let o = tiadc(
        dir.path(),
        &[
            "design",
            "--profile",
            &prof,
            "--zone",
            "2",
            "-N",
            "256",
            "-L",
            "33",
        ],
    );
    assert_ok(&o);
    assert!(
        stderr(&o).contains("warning:") && stderr(&o).contains("clamped"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn design_rejects_even_taps() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    let line = assert_error(&tiadc(dir.path(), &["design", "--profile", &prof, "-L", "64"]));
    assert!(line.contains("odd"), "{line}");
}

fn identity_bank(dir: &Path, m: usize) -> String {
    let p = dir.join(format!("identity{m}.csv"));
    let bank = FilterBank::identity(
        m,
        FS,
        DesignSpec::new(256, 17, Zone::First).with_window(Window::None),
    )
    .unwrap();
    io::write_bank(&p, &bank).unwrap();
    s(&p)
}

#[test]
fn correct_with_identity_bank_delays_input() {
    let dir = tempfile::tempdir().unwrap();
    let prof = s(&dir.path().join("p.csv"));
    io::write_profile(
        Path::new(&prof),
        &MismatchProfile::ideal(4, vec![0.0, FS]).unwrap(),
    )
    .unwrap();
    assert_ok(&tiadc(
        dir.path(),
        &[
            "simulate",
            "--profile",
            &prof,
            "--tone",
            "123e6:0.7",
            "-n",
            "1024",
        ],
    ));
    let bank = identity_bank(dir.path(), 4);
    let cap = s(&dir.path().join("capture.bin"));
    assert_ok(&tiadc(
        dir.path(),
        &["correct", "--capture", &cap, "--bank", &bank, "--profile", &prof],
    ));
    let x = io::read_capture(Path::new(&cap)).unwrap();
    let y = io::read_capture(&dir.path().join("corrected.bin")).unwrap();
    assert!(y.correction.is_some());
    for n in 8..1024 {
        assert_eq!(y.samples[n], x.samples[n - 8]);
    }
}

#[test]
fn correct_of_zero_capture_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    assert_ok(&tiadc(
        dir.path(),
        &["simulate", "--profile", &prof, "--tone", "1e8:0", "-n", "512"],
    ));
    let bank = identity_bank(dir.path(), 4);
    let cap = s(&dir.path().join("capture.bin"));
    assert_ok(&tiadc(
        dir.path(),
        &["correct", "--capture", &cap, "--bank", &bank],
    ));
    let y = io::read_capture(&dir.path().join("corrected.bin")).unwrap();
    assert!(y.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn correct_rejects_channel_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let prof = ideal_profile(dir.path());
    assert_ok(&tiadc(
        dir.path(),
        &["simulate", "--profile", &prof, "--tone", "1e8:0.5", "-n", "512"],
    ));
    let bank = identity_bank(dir.path(), 2);
    let cap = s(&dir.path().join("capture.bin"));
    let line = assert_error(&tiadc(
        dir.path(),
        &["correct", "--capture", &cap, "--bank", &bank],
    ));
    assert!(line.contains("channel"), "{line}");
}

#[test]
fn analyze_prints_metrics_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiadc(
        dir.path(),
        &[
            "simulate",
            "--profile",
            &reference_profile(),
            "--tone",
            "100e6:0.9",
            "--coherent",
            "8192",
            "-n",
            "8192",
        ],
    );
    assert_ok(&o);
    let cap = s(&dir.path().join("capture.bin"));
    let o = tiadc(dir.path(), &["analyze", "--capture", &cap, "--prefix", "raw"]);
    assert_ok(&o);
    let out = stdout(&o);
    let value = |key: &str| -> f64 {
        let line = out
            .lines()
            .find(|l| l.starts_with(&format!("{key}=")))
            .expect(key);
        line.split('=').nth(1).unwrap().parse().unwrap()
    };
    assert!((value("f_fund_hz") - 99.8046875e6).abs() < 1.0);
    // uncorrected mismatch limits the converter well below its 14 bits
    assert!(value("enob_bits") < 10.0);
    assert!(value("max_image_dbc") > -60.0 && value("max_image_dbc") < -40.0);
    let spurs = std::fs::read_to_string(dir.path().join("raw_spurs.csv")).unwrap();
    assert!(spurs.lines().count() > 3);
    assert!(dir.path().join("raw_spectrum.csv").exists());
}

fn small_scenario(dir: &Path, extra: &str) -> PathBuf {
    let sc = scenarios();
    let text = format!(
        r#"{{
  "name": "small",
  "config": {{ "m_channels": 4, "fs_hz": 1.6e9, "bits": 14, "full_scale_v": 2.0 }},
  "truth": "{}",
  "plan": "{}",
  "design": {{ "n_grid": 512, "taps": 49, "delay": 24, "window": "kaiser:8", "zone": 1 }},
  "sweep": {{ "start_hz": 50e6, "stop_hz": 650e6, "points": 3 }},
  "amplitude_v": 0.9,
  "n_fft": 4096,
  "noise_rms_v": 2e-4{extra}
}}"#,
        sc.join("reference_profile.csv").display(),
        sc.join("plan_zone1.csv").display()
    );
    let p = dir.join("small.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn pipeline_is_deterministic_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    // input noise caps ENOB near 11 bits
    let extra =
        r#", "thresholds": { "min_image_drop_db": 30, "min_enob_gain_bits": 2, "min_enob_after_bits": 10 }"#;
    let scenario = s(&small_scenario(dir.path(), extra));
    let run = |out: &str, seed: &str| {
        let o = tiadc(&dir.path().join(out), &["--seed", seed, "pipeline", &scenario]);
        assert_ok(&o);
        assert!(stdout(&o).contains("enob_before"));
        std::fs::read(dir.path().join(out).join("small/summary.csv")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    for f in [
        "truth_profile.csv",
        "estimated_profile.csv",
        "bank.csv",
        "pr_residual.csv",
    ] {
        assert!(dir.path().join("a/small").join(f).exists(), "{f}");
    }
}

#[test]
fn pipeline_reports_threshold_violations() {
    let dir = tempfile::tempdir().unwrap();
    let extra =
        r#", "thresholds": { "min_image_drop_db": 30, "min_enob_gain_bits": 2, "min_enob_after_bits": 15 }"#;
    let scenario = s(&small_scenario(dir.path(), extra));
    let o = tiadc(dir.path(), &["pipeline", &scenario]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("violation:"));
    assert!(dir.path().join("small/summary.csv").exists());
}

#[test]
fn pipeline_names_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    let text = std::fs::read_to_string(scenarios().join("wideband_zone1.json"))
        .unwrap()
        .replace("reference_profile.csv", "does_not_exist.csv");
    std::fs::write(&p, text).unwrap();
    let line = assert_error(&tiadc(dir.path(), &["pipeline", &s(&p)]));
    assert!(
        line.contains("truth profile") && line.contains("does_not_exist.csv"),
        "{line}"
    );
}
