use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bellsim::analysis::{
    bunching_ratio, coincidence_result, histogram_of, Background, DelayHistogram, TickRange,
    DEFAULT_SIDEBAND,
};
use bellsim::bell::{ChVerdict, Propagation};
use bellsim::eventfile::{read_events, write_events, Recording};
use bellsim::experiment::{
    angle_config, angles_for_bell, bunching_config, desk_scale_config, run_sweep, RunKind,
    SweepParams, SweepResult,
};
use bellsim::model::cos2_deg;
use bellsim::pipeline::simulate;
use bellsim::{config_text, report};
use bellsim::{ConfigError, Error, ExperimentConfig, PixelGroup, SourceMode};

const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_PRECONDITION: u8 = 5;

const COUNTS_FILE: &str = "counts.csv";
const P12_FILE: &str = "p12.csv";
const BASE_CONFIG_FILE: &str = "base.conf";

#[derive(Parser)]
#[command(
    name = "bellsim",
    version,
    about = "Two-laser polarization correlation simulator and analyzer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a preset configuration in the config file format.
    Config {
        #[arg(long, value_enum, default_value_t = Preset::Bench)]
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Simulate one recording with analyzer d turned by THETA.
    Simulate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the delay histogram of one or more event files.
    Analyze {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// D1 pixels as `row:col,...` (default: from the file's config)
        #[arg(long)]
        d1: Option<String>,
        #[arg(long)]
        d2: Option<String>,
        /// Coincidence window width (default: the recorded detector window)
        #[arg(long)]
        window_ns: Option<f64>,
        #[arg(long)]
        bin_ns: Option<f64>,
        #[arg(long, default_value_t = 10_000.0)]
        max_delay_ns: f64,
        /// Bunching peak as `start,end` (default: the first bin)
        #[arg(long)]
        peak_ns: Option<String>,
        #[arg(long, default_value = "2000,10000")]
        baseline_ns: String,
        #[arg(long, value_enum, default_value_t = BackgroundArg::Sideband)]
        background: BackgroundArg,
        /// Histogram CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a set of analyzer angles and tabulate p12(θ).
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// Comma-separated angles in degrees; 0 is always added
        #[arg(long, value_delimiter = ',', required = true)]
        thetas: Vec<f64>,
        #[command(flatten)]
        analysis: SweepArgs,
        /// Skip the analyzer-c runs that provide p1
        #[arg(long)]
        no_singles: bool,
        /// Do not keep the per-angle event files
        #[arg(long)]
        no_events: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate S(θ) from a sweep directory.
    Bell {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = PropagationArg::Uncorrelated)]
        propagation: PropagationArg,
        /// Verdict CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce every figure data set: delay histograms, p12(θ) and S(θ).
    Figures {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the number of runs of every simulated setting
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct ConfigSource {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Used when no config file is given
    #[arg(long, value_enum, default_value_t = Preset::Bench)]
    preset: Preset,
    /// Overrides the config's rng_seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 1000.0)]
    bin_ns: f64,
    #[arg(long, default_value_t = 10_000_000.0)]
    max_delay_ns: f64,
    /// Coincidence window as `start,end` in ns (default: the whole recorded range)
    #[arg(long)]
    window_ns: Option<String>,
    #[arg(long, value_enum, default_value_t = BackgroundArg::None)]
    background: BackgroundArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Bench,
    Desk,
    Chaotic,
    Coherent,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BackgroundArg {
    None,
    Sideband,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropagationArg {
    Uncorrelated,
    Shared,
}

impl From<PropagationArg> for Propagation {
    fn from(p: PropagationArg) -> Self {
        match p {
            PropagationArg::Uncorrelated => Propagation::Uncorrelated,
            PropagationArg::Shared => Propagation::SharedReference,
        }
    }
}

fn preset(p: Preset, seed: u64) -> ExperimentConfig {
    match p {
        Preset::Bench => ExperimentConfig::bench(seed),
        Preset::Desk => desk_scale_config(seed),
        Preset::Chaotic => bunching_config(seed, SourceMode::Chaotic),
        Preset::Coherent => bunching_config(seed, SourceMode::Coherent),
    }
}

fn load_config(src: &ConfigSource) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &src.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
            config_text::parse(&text).map_err(|e| {
                Error::Config(ConfigError::Invalid(format!("{}: {e}", path.display())))
            })?
        }
        None => preset(src.preset, 1),
    };
    if let Some(seed) = src.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| io_context(e, path))
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| io_context(e, path))
}

/// Converts a duration in ns to whole clock ticks, rejecting fractions.
fn ns_to_ticks(ns: f64, clock_period: f64, what: &str) -> Result<u64, Error> {
    let t = ns * 1e-9 / clock_period;
    let r = t.round();
    if r.is_nan() || r < 0.0 || (t - r).abs() > 1e-6 {
        return Err(Error::Precondition(format!(
            "{what} of {ns} ns is not a whole number of {} ns clock ticks",
            clock_period * 1e9
        )));
    }
    Ok(r as u64)
}

fn parse_range_ns(text: &str, clock_period: f64, what: &str) -> Result<TickRange, Error> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| Error::Precondition(format!("{what} must be `start,end` in ns")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Precondition(format!("{what}: `{s}` is not a number")))
    };
    Ok(TickRange::new(
        ns_to_ticks(parse(a)?, clock_period, what)?,
        ns_to_ticks(parse(b)?, clock_period, what)?,
    ))
}

fn parse_pixels(text: &str, flag: &str) -> Result<PixelGroup, Error> {
    PixelGroup::parse(text)
        .map_err(|e| Error::Config(ConfigError::Invalid(format!("--{flag}: {e}"))))
}

fn print_recording_summary(rec: &Recording) {
    let live = rec.live_time();
    let d1 = rec
        .events
        .iter()
        .filter(|e| rec.config.d1_pixels.contains(e.pixel))
        .count();
    let d2 = rec
        .events
        .iter()
        .filter(|e| rec.config.d2_pixels.contains(e.pixel))
        .count();
    println!("events        {}", rec.events.len());
    println!("runs          {}", rec.n_runs);
    println!("live time     {live:.4} s");
    println!("D1 singles    {d1} ({:.3} /s)", d1 as f64 / live);
    println!("D2 singles    {d2} ({:.3} /s)", d2 as f64 / live);
}

fn cmd_simulate(src: &ConfigSource, theta: f64, out: &Path) -> Result<(), Error> {
    let base = load_config(src)?;
    let mut cfg = base.clone();
    cfg.analyzer_d.axis = base.analyzer_c.axis.rotated(theta);
    let events = simulate(&cfg)?;
    write_events(out, &cfg, cfg.daq.n_runs, &events)?;
    println!("wrote {}", out.display());
    print_recording_summary(&Recording {
        n_runs: cfg.daq.n_runs,
        config: cfg,
        events,
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    inputs: &[PathBuf],
    d1: Option<&str>,
    d2: Option<&str>,
    window_ns: Option<f64>,
    bin_ns: Option<f64>,
    max_delay_ns: f64,
    peak_ns: Option<&str>,
    baseline_ns: &str,
    background: BackgroundArg,
    out: Option<&Path>,
) -> Result<(), Error> {
    let mut recordings = Vec::with_capacity(inputs.len());
    for path in inputs {
        let rec = read_events(path).map_err(|e| match e {
            Error::Io(io) => io_context(io, path),
            other => other,
        })?;
        if rec.events.is_empty() {
            eprintln!("warning: {} contains no events", path.display());
        }
        recordings.push(rec);
    }
    let first = &recordings[0].config;
    let clock = first.detector.clock_period;
    if recordings
        .iter()
        .any(|r| r.config.detector.clock_period != clock)
    {
        return Err(Error::Precondition(
            "input files use different clock periods".into(),
        ));
    }
    let d1 = d1
        .map(|s| parse_pixels(s, "d1"))
        .transpose()?
        .unwrap_or(first.d1_pixels);
    let d2 = d2
        .map(|s| parse_pixels(s, "d2"))
        .transpose()?
        .unwrap_or(first.d2_pixels);
    let bin = ns_to_ticks(bin_ns.unwrap_or(clock * 1e9), clock, "bin width")?;
    let max_delay = ns_to_ticks(max_delay_ns, clock, "maximum delay")?;
    let window = match window_ns {
        Some(w) => ns_to_ticks(w, clock, "coincidence window")?,
        None => first.detector.window_ticks(),
    };

    let mut total: Option<DelayHistogram> = None;
    for rec in &recordings {
        let h = histogram_of(rec, d1, d2, bin, max_delay)?;
        match &mut total {
            Some(t) => t.merge(&h)?,
            None => total = Some(h),
        }
    }
    let h = total.expect("at least one input");

    let peak = match peak_ns {
        Some(p) => parse_range_ns(p, clock, "peak")?,
        None => TickRange::new(0, bin),
    };
    let baseline = parse_range_ns(baseline_ns, clock, "baseline")?;
    let bg = match background {
        BackgroundArg::None => Background::None,
        BackgroundArg::Sideband if baseline.end <= max_delay => Background::Sideband(baseline),
        BackgroundArg::Sideband => Background::Sideband(DEFAULT_SIDEBAND),
    };

    if let Some(out) = out {
        write_file(out, &report::histogram_csv(&h, clock))?;
        println!("wrote {}", out.display());
    }
    let live = h.live_time;
    println!("files         {}", recordings.len());
    println!("live time     {live:.4} s");
    println!("D1 singles    {} [{d1}]", h.total_singles_d1);
    println!("D2 singles    {} [{d2}]", h.total_singles_d2);
    println!("pairs         {} within [0, {max_delay_ns} ns)", h.total());
    if h.total_singles_d1 == 0 || h.total_singles_d2 == 0 {
        println!("no coincidences: a detector group recorded no events");
        return Ok(());
    }
    let window = TickRange::new(0, window.div_ceil(bin) * bin);
    match coincidence_result(&h, window, bg) {
        Ok(c) => {
            println!("window        [0, {} ns)", window.end as f64 * clock * 1e9);
            println!("raw           {}", c.raw_coincidences);
            println!(
                "background    {:.3} ± {:.3}",
                c.background, c.background_sigma
            );
            println!("corrected     {:.3} ± {:.3}", c.corrected, c.uncertainty);
        }
        Err(e) => println!("coincidences  unavailable: {e}"),
    }
    match bunching_ratio(&h, peak, baseline) {
        Ok(b) => println!("bunching      {:.4} ± {:.4}", b.value, b.sigma),
        Err(e) => println!("bunching      unavailable: {e}"),
    }
    Ok(())
}

fn sweep_params(args: &SweepArgs, clock: f64, singles_runs: bool) -> Result<SweepParams, Error> {
    let bin_width = ns_to_ticks(args.bin_ns, clock, "bin width")?;
    let max_delay = ns_to_ticks(args.max_delay_ns, clock, "maximum delay")?;
    let window = args
        .window_ns
        .as_deref()
        .map(|w| parse_range_ns(w, clock, "window"))
        .transpose()?;
    let background = match args.background {
        BackgroundArg::None => Background::None,
        BackgroundArg::Sideband => Background::Sideband(DEFAULT_SIDEBAND),
    };
    Ok(SweepParams {
        bin_width,
        max_delay,
        window,
        background,
        singles_runs,
    })
}

fn write_sweep_products(
    dir: &Path,
    base: &ExperimentConfig,
    res: &SweepResult,
) -> Result<(), Error> {
    write_file(&dir.join(BASE_CONFIG_FILE), &config_text::render(base))?;
    write_file(&dir.join(COUNTS_FILE), &report::counts_csv(res))?;
    write_file(&dir.join(P12_FILE), &report::p12_csv(&res.p12_table()?))?;
    Ok(())
}

fn cmd_sweep(
    src: &ConfigSource,
    thetas: &[f64],
    args: &SweepArgs,
    no_singles: bool,
    no_events: bool,
    out: &Path,
) -> Result<(), Error> {
    let base = load_config(src)?;
    let params = sweep_params(args, base.detector.clock_period, !no_singles)?;
    create_dir(out)?;
    let res = run_sweep(&base, thetas, &params, (!no_events).then_some(out))?;
    write_sweep_products(out, &base, &res)?;
    println!("theta_deg  p12        sigma      cos2");
    for row in res.p12_table()? {
        println!(
            "{:>9.3}  {:<9.5}  {:<9.5}  {:.5}",
            row.theta_deg, row.p12.value, row.p12.sigma, row.ideal
        );
    }
    println!("wrote {}", out.join(P12_FILE).display());
    Ok(())
}

fn print_verdicts(rows: &[(f64, ChVerdict)]) {
    for (t, v) in rows {
        println!("θ = {t}°  {v}");
    }
}

fn cmd_bell(
    dir: &Path,
    thetas: &[f64],
    propagation: Propagation,
    out: Option<&Path>,
) -> Result<(), Error> {
    let path = dir.join(COUNTS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_context(e, &path))?;
    let res = report::parse_counts_csv(&text)?;
    let rows = thetas
        .iter()
        .map(|&t| res.bell(t, propagation).map(|v| (t, v)))
        .collect::<Result<Vec<_>, _>>()?;
    print_verdicts(&rows);
    if let Some(out) = out {
        write_file(out, &report::verdict_csv(&rows))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

const FIG3_THETAS: [f64; 10] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];
const FIG4_THETAS: [f64; 3] = [20.0, 40.0, 60.0];

fn cmd_figures(seed: u64, runs: Option<u32>, out: &Path) -> Result<(), Error> {
    create_dir(out)?;
    let with_runs = |mut cfg: ExperimentConfig| {
        if let Some(n) = runs {
            cfg.daq.n_runs = n;
        }
        cfg
    };

    for (mode, name) in [
        (SourceMode::Chaotic, "fig2_chaotic.csv"),
        (SourceMode::Coherent, "fig2_coherent.csv"),
    ] {
        let cfg = angle_config(
            &with_runs(bunching_config(seed, mode)),
            0.0,
            RunKind::Coincidence,
        );
        let events = simulate(&cfg)?;
        let rec = Recording {
            n_runs: cfg.daq.n_runs,
            config: cfg,
            events,
        };
        let h = histogram_of(&rec, rec.config.d1_pixels, rec.config.d2_pixels, 1, 400)?;
        write_file(
            &out.join(name),
            &report::histogram_csv(&h, rec.config.detector.clock_period),
        )?;
        let b = bunching_ratio(&h, TickRange::new(0, 1), DEFAULT_SIDEBAND)?;
        println!("{name}: bunching {:.4} ± {:.4}", b.value, b.sigma);
    }

    let base = with_runs(desk_scale_config(seed));
    let mut thetas = FIG3_THETAS.to_vec();
    thetas.extend(angles_for_bell(&FIG4_THETAS));
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let res = run_sweep(&base, &thetas, &SweepParams::default(), None)?;
    let fig3: Vec<_> = res
        .p12_table()?
        .into_iter()
        .filter(|r| FIG3_THETAS.contains(&r.theta_deg))
        .collect();
    write_file(&out.join("fig3_p12.csv"), &report::p12_csv(&fig3))?;
    write_file(&out.join("fig3_ideal.csv"), &ideal_cos2_csv(0.5))?;
    write_file(&out.join(COUNTS_FILE), &report::counts_csv(&res))?;

    let rows = FIG4_THETAS
        .iter()
        .map(|&t| res.bell(t, Propagation::Uncorrelated).map(|v| (t, v)))
        .collect::<Result<Vec<_>, _>>()?;
    write_file(&out.join("fig4_s.csv"), &report::verdict_csv(&rows))?;
    write_file(&out.join("fig4_ideal.csv"), &report::ideal_s_curve_csv(0.5))?;
    print_verdicts(&rows);
    println!("wrote figure data to {}", out.display());
    Ok(())
}

fn ideal_cos2_csv(step_deg: f64) -> String {
    let n = (90.0 / step_deg).round() as usize;
    let mut out = String::from("theta_deg,cos2\n");
    for i in 0..=n {
        let t = i as f64 * step_deg;
        out.push_str(&format!("{t},{}\n", cos2_deg(t)));
    }
    out
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Config { preset: p, seed } => {
            print!("{}", config_text::render(&preset(p, seed)));
            Ok(())
        }
        Command::Simulate { source, theta, out } => cmd_simulate(&source, theta, &out),
        Command::Analyze {
            inputs,
            d1,
            d2,
            window_ns,
            bin_ns,
            max_delay_ns,
            peak_ns,
            baseline_ns,
            background,
            out,
        } => cmd_analyze(
            &inputs,
            d1.as_deref(),
            d2.as_deref(),
            window_ns,
            bin_ns,
            max_delay_ns,
            peak_ns.as_deref(),
            &baseline_ns,
            background,
            out.as_deref(),
        ),
        Command::Sweep {
            source,
            thetas,
            analysis,
            no_singles,
            no_events,
            out,
        } => cmd_sweep(&source, &thetas, &analysis, no_singles, no_events, &out),
        Command::Bell {
            sweep,
            theta,
            propagation,
            out,
        } => cmd_bell(&sweep, &theta, propagation.into(), out.as_deref()),
        Command::Figures { seed, runs, out } => cmd_figures(seed, runs, &out),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::Precondition(_) | Error::Domain(_) => EXIT_PRECONDITION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
