//! `tiadc`: simulate, calibrate and correct a time-interleaved ADC from the
//! command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tiadc_core::design::Zone;
use tiadc_core::io;
use tiadc_core::metrics::{coherent_bin, image_spur_levels, DEFAULT_HARMONICS};
use tiadc_core::pipeline::{self, Scenario};
use tiadc_core::{
    build_profile, correct, correct_offsets, design_filter_bank, dynamic_metrics, estimate_mismatch_at,
    pr_residual, spectrum, DesignSpec, TiadcConfig, Tone, ToneSpec, Window,
};

#[derive(Parser, Debug)]
#[command(
    name = "tiadc",
    version,
    about = "Time-interleaved ADC mismatch calibration and correction"
)]
struct Cli {
    /// Converter configuration (JSON). Defaults to 4 channels, 1.6 GS/s, 14 bits, 2 Vpp.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory that relative output paths are written to.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Seed for noise injection.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a capture from a mismatch profile and a list of tones.
    Simulate(SimulateArgs),
    /// Estimate a mismatch profile from single-tone captures.
    Calibrate(CalibrateArgs),
    /// Design a correction filter bank from a mismatch profile.
    Design(DesignArgs),
    /// Apply offset correction and a filter bank to a capture.
    Correct(CorrectArgs),
    /// Spectrum, dynamic metrics and interleave spurs of a capture.
    Analyze(AnalyzeArgs),
    /// Run a scenario file end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Mismatch profile CSV.
    #[arg(long)]
    profile: PathBuf,
    /// Tone as `freq_hz:amplitude_v[:phase_rad]`; repeat for several tones.
    #[arg(long = "tone", required = true, value_parser = parse_tone)]
    tones: Vec<Tone>,
    /// DC level added to the input, V.
    #[arg(long, default_value_t = 0.0)]
    dc: f64,
    /// Total samples (a multiple of the channel count).
    #[arg(short = 'n', long, default_value_t = 8192)]
    n: usize,
    /// Move each tone to the nearest frequency that is coherent with an
    /// analysis record of this many samples.
    #[arg(long, value_name = "N_FFT")]
    coherent: Option<usize>,
    /// Gaussian input noise, V rms.
    #[arg(long, default_value_t = 0.0)]
    noise_rms: f64,
    #[arg(long, default_value = "capture.bin")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Plan CSV with `freq_hz,amplitude_v,n_samples` rows.
    #[arg(long)]
    plan: PathBuf,
    /// Profile to simulate the calibration captures from.
    #[arg(long, conflicts_with = "captures", required_unless_present = "captures")]
    truth: Option<PathBuf>,
    /// Directory of recorded captures, `row_<i>.bin` for plan row `i`. Each
    /// row frequency is moved to the nearest frequency coherent with its capture.
    #[arg(long)]
    captures: Option<PathBuf>,
    /// Gaussian input noise for simulated captures, V rms.
    #[arg(long, default_value_t = 0.0)]
    noise_rms: f64,
    #[arg(long, default_value = "profile.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Frequency grid size.
    #[arg(short = 'N', long = "grid", default_value_t = 1024)]
    n_grid: usize,
    /// Taps per branch (odd).
    #[arg(short = 'L', long = "taps", default_value_t = 65)]
    taps: usize,
    /// Group delay in samples. Defaults to (L-1)/2.
    #[arg(short = 'd', long)]
    delay: Option<usize>,
    /// none, hann, blackman or kaiser:<beta>.
    #[arg(long, default_value = "kaiser:8")]
    window: Window,
    /// Nyquist zone of the input (1 or 2).
    #[arg(long, default_value_t = 1)]
    zone: u8,
    /// Guard band at the zone edges, as a fraction of pi.
    #[arg(long)]
    edge_guard: Option<f64>,
    #[arg(long, default_value = "bank.csv")]
    out: PathBuf,
    #[arg(long, default_value = "pr_residual.csv")]
    residual: PathBuf,
    /// Frequencies at which the reconstruction residual is evaluated.
    #[arg(long, default_value_t = 512)]
    residual_points: usize,
}

#[derive(Args, Debug)]
struct CorrectArgs {
    #[arg(long)]
    capture: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    /// Profile whose offsets are removed before filtering.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value = "corrected.bin")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    capture: PathBuf,
    /// FFT length. Defaults to the largest power of two that fits.
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long, default_value = "none")]
    window: Window,
    /// Fundamental frequency, Hz. Defaults to the strongest bin.
    #[arg(long)]
    f_fund: Option<f64>,
    /// Output prefix: writes `<prefix>_spectrum.csv` and `<prefix>_spurs.csv`.
    #[arg(long, default_value = "analysis")]
    prefix: String,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
}

fn parse_tone(s: &str) -> std::result::Result<Tone, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("expected freq_hz:amplitude_v[:phase_rad], got `{s}`"));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    Ok(Tone {
        freq_hz: num(parts[0])?,
        amplitude_v: num(parts[1])?,
        phase_rad: parts.get(2).map(|p| num(p)).transpose()?.unwrap_or(0.0),
    })
}

struct Ctx {
    config: TiadcConfig,
    config_given: bool,
    out_dir: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn output(&self, p: &Path) -> PathBuf {
        self.out_dir.join(p)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn load_config(path: Option<&Path>) -> Result<TiadcConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow!("{}: {e}", p.display()))?;
            serde_json::from_str::<TiadcConfig>(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?
        }
        None => TiadcConfig::new(4, 1.6e9, 14, 2.0)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let profile = io::read_profile(&a.profile)?;
    check_channels(&ctx.config, profile.m_channels(), "profile")?;
    let mut tones = ToneSpec {
        tones: a.tones.clone(),
        dc_v: a.dc,
    };
    if let Some(n_fft) = a.coherent {
        for t in &mut tones.tones {
            t.freq_hz = coherent_bin(t.freq_hz, ctx.config.fs_hz, n_fft)?.1;
        }
    }
    tones.validate()?;
    if !tones.headroom_ok(&ctx.config) {
        eprintln!("warning: summed tone amplitude exceeds the input range; samples will clip");
    }
    let cap = pipeline::simulate_capture(&tones, &ctx.config, &profile, a.n, a.noise_rms, ctx.seed(), 0)?;
    let out = ctx.output(&a.out);
    io::write_capture(&out, &cap)?;
    let list: Vec<String> = tones
        .tones
        .iter()
        .map(|t| format!("{:.6}MHz@{}V", t.freq_hz / 1e6, t.amplitude_v))
        .collect();
    println!(
        "wrote {} samples to {}: fs={} Hz M={} tones=[{}]",
        cap.len(),
        out.display(),
        ctx.config.fs_hz,
        ctx.config.m_channels,
        list.join(", ")
    );
    Ok(())
}

fn calibrate(ctx: &Ctx, a: &CalibrateArgs) -> Result<()> {
    let plan = io::read_plan(&a.plan)?;
    if plan.len() < 2 {
        bail!(
            "calibration plan needs at least 2 frequencies, got {}",
            plan.len()
        );
    }
    let measurements = match (&a.truth, &a.captures) {
        (Some(truth), _) => {
            let truth = io::read_profile(truth)?;
            check_channels(&ctx.config, truth.m_channels(), "truth profile")?;
            pipeline::calibrate(&plan, &ctx.config, &truth, a.noise_rms, ctx.seed())?
        }
        (None, Some(dir)) => {
            let mut out = Vec::with_capacity(plan.len());
            for (i, row) in plan.iter().enumerate() {
                let path = dir.join(format!("row_{i}.bin"));
                if !path.exists() {
                    bail!("capture for plan row {i} not found: {}", path.display());
                }
                let cap = io::read_capture(&path)?;
                check_channels(&ctx.config, cap.config.m_channels, "capture")?;
                // rows are snapped to the capture's record exactly as in simulation mode
                let (_, f) = coherent_bin(row.freq_hz, ctx.config.fs_hz, cap.len())?;
                out.push(estimate_mismatch_at(&cap, f, &ctx.config)?);
            }
            out.sort_by(|x, y| x.freq_hz.total_cmp(&y.freq_hz));
            out
        }
        (None, None) => bail!("either --truth or --captures is required"),
    };
    let profile = build_profile(&measurements, &ctx.config)?;
    let out = ctx.output(&a.out);
    io::write_profile(&out, &profile)?;
    println!("wrote {} with {} frequencies", out.display(), measurements.len());
    Ok(())
}

fn design(ctx: &Ctx, a: &DesignArgs) -> Result<()> {
    let profile = io::read_profile(&a.profile)?;
    check_channels(&ctx.config, profile.m_channels(), "profile")?;
    let zone = Zone::from_index(a.zone)?;
    let mut spec = DesignSpec::new(a.n_grid, a.taps, zone).with_window(a.window);
    if let Some(d) = a.delay {
        spec = spec.with_delay(d);
    }
    if let Some(g) = a.edge_guard {
        spec = spec.with_edge_guard(g);
    }
    spec.validate(ctx.config.m_channels)?;
    if let Some(w) = profile.coverage_warning(zone.index(), ctx.config.fs_hz) {
        eprintln!("warning: {w}");
    }
    let bank = design_filter_bank(&profile, &ctx.config, &spec)?;
    let report = pr_residual(&bank, &profile, &ctx.config, a.residual_points)?;
    let out = ctx.output(&a.out);
    let res = ctx.output(&a.residual);
    io::write_bank(&out, &bank)?;
    io::write_string(&res, &io::residual_to_csv(&report))?;
    println!("max residual_alias {:.3e}", report.max_alias());
    println!("wrote {} and {}", out.display(), res.display());
    Ok(())
}

fn correct_cmd(ctx: &Ctx, a: &CorrectArgs) -> Result<()> {
    let cap = io::read_capture(&a.capture)?;
    let bank = io::read_bank(&a.bank)?;
    let cap = match &a.profile {
        Some(p) => correct_offsets(&cap, &io::read_profile(p)?)?,
        None => cap,
    };
    let fixed = correct(&cap, &bank)?;
    let out = ctx.output(&a.out);
    io::write_capture(&out, &fixed)?;
    println!(
        "wrote {} samples to {} (delay {} samples, transient {})",
        fixed.len(),
        out.display(),
        bank.spec.delay,
        fixed.transient
    );
    Ok(())
}

fn analyze(ctx: &Ctx, a: &AnalyzeArgs) -> Result<()> {
    let cap = io::read_capture(&a.capture)?;
    let avail = cap.valid().len();
    let n_fft = match a.n_fft {
        Some(n) => n,
        None if avail >= 2 => 1usize << avail.ilog2(),
        None => bail!("capture has no usable samples"),
    };
    let s = spectrum(&cap, n_fft, a.window)?;
    let f_fund = match a.f_fund {
        Some(f) => f,
        None => {
            let g = s.gather();
            let b = (g + 1..=n_fft / 2)
                .max_by(|&x, &y| s.power[x].total_cmp(&s.power[y]))
                .context("spectrum too short to locate a fundamental")?;
            s.freqs_hz[b]
        }
    };
    let m_ch = cap.config.m_channels;
    let report = dynamic_metrics(&s, f_fund, m_ch, DEFAULT_HARMONICS)?;
    let images = image_spur_levels(&report, f_fund, cap.fs_hz(), m_ch)?;
    let spec_path = ctx.output(Path::new(&format!("{}_spectrum.csv", a.prefix)));
    let spur_path = ctx.output(Path::new(&format!("{}_spurs.csv", a.prefix)));
    io::write_string(&spec_path, &io::spectrum_to_csv(&report))?;
    io::write_string(&spur_path, &io::spurs_to_csv(&report, &images))?;
    let m = report.metrics.context("metrics were not computed")?;
    println!("f_fund_hz={f_fund:.3}");
    println!("fundamental_dbfs={:.3}", m.fundamental_dbfs);
    println!("snr_db={:.3}", m.snr_db);
    println!("sinad_db={:.3}", m.sinad_db);
    println!("thd_db={:.3}", m.thd_db);
    println!("sfdr_db={:.3}", m.sfdr_db);
    println!("enob_bits={:.4}", m.enob_bits);
    let worst = images
        .iter()
        .filter(|x| !x.collision)
        .map(|x| x.dbc)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("max_image_dbc={worst:.3}");
    Ok(())
}

fn pipeline_cmd(ctx: &Ctx, a: &PipelineArgs) -> Result<bool> {
    let mut scenario = Scenario::load(&a.scenario)?;
    if ctx.config_given {
        scenario.config = ctx.config;
    }
    if let Some(seed) = ctx.seed {
        scenario.seed = seed;
    }
    if scenario.name.is_empty() {
        scenario.name = a
            .scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
    }
    let report = pipeline::run_scenario(&scenario)?;
    let dir = ctx.out_dir.join(&report.name);
    let written = pipeline::write_artifacts(&report, &dir)?;

    println!(
        "scenario {}: max residual_alias {:.3e}",
        report.name,
        report.residual.max_alias()
    );
    println!(
        "{:>14} {:>12} {:>11} {:>22} {:>21}",
        "f_in_hz", "enob_before", "enob_after", "max_image_dbc_before", "max_image_dbc_after"
    );
    for p in &report.sweep {
        println!(
            "{:>14.0} {:>12.3} {:>11.3} {:>22.2} {:>21.2}",
            p.f_in_hz, p.enob_before, p.enob_after, p.max_image_dbc_before, p.max_image_dbc_after
        );
    }
    if let Some(p) = &report.two_tone {
        // single-tone ENOB is meaningless with a second tone in the record
        println!(
            "{:>14.0} {:>12} {:>11} {:>22.2} {:>21.2}  (two-tone)",
            p.f_in_hz, "-", "-", p.max_image_dbc_before, p.max_image_dbc_after
        );
    }
    if let Some((_, pts)) = &report.narrowband {
        let worst = pts
            .iter()
            .map(|p| p.min_image_drop_db)
            .fold(f64::INFINITY, f64::min);
        println!("narrowband bank: smallest image drop over the sweep {worst:.1} dB");
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    Ok(report.violations.is_empty())
}

fn check_channels(config: &TiadcConfig, found: usize, what: &str) -> Result<()> {
    if found != config.m_channels {
        bail!(
            "{what} has {found} channels but the configuration has {}",
            config.m_channels
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let ctx = Ctx {
        config: load_config(cli.config.as_deref())?,
        config_given: cli.config.is_some(),
        out_dir: cli.out_dir,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Simulate(a) => simulate(&ctx, a)?,
        Command::Calibrate(a) => calibrate(&ctx, a)?,
        Command::Design(a) => design(&ctx, a)?,
        Command::Correct(a) => correct_cmd(&ctx, a)?,
        Command::Analyze(a) => analyze(&ctx, a)?,
        Command::Pipeline(a) => {
            if !pipeline_cmd(&ctx, a)? {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .next()
                .unwrap_or(&msg)
                .trim_start_matches("error: ");
            eprintln!("error: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            // core errors already carry their causes in the message
            let text = e.to_string().replace('\n', " ");
            eprintln!("error: {text}");
            ExitCode::FAILURE
        }
    }
}
