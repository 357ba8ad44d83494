//! Angle sweeps: one simulated recording per analyzer setting, reduced to
//! counts from which p12(θ), p1, p2 and S(θ) are formed.
//!
//! A *coincidence* run keeps analyzer c on the preparation axis and turns
//! analyzer d by θ. A *singles* run turns analyzer c by θ and leaves d
//! aligned; only its D1 singles are used, for p1.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{
    build_histogram, coincidence_result, normalize, normalize_singles, Background,
    CoincidenceResult, NormalizedProbability, SinglesCount, TickRange,
};
use crate::bell::{s_of_theta_measured, ChVerdict, Propagation, SMeasurements};
use crate::error::{Error, Result};
use crate::eventfile::{write_events, Recording};
use crate::model::{Angle, ExperimentConfig, PixelGroup, SourceMode};
use crate::pipeline::simulate;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunKind {
    Coincidence,
    Singles,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Coincidence => "coincidence",
            RunKind::Singles => "singles",
        }
    }

    fn label(self) -> u64 {
        match self {
            RunKind::Coincidence => 0xC0,
            RunKind::Singles => 0x51,
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RunKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "coincidence" => Ok(RunKind::Coincidence),
            "singles" => Ok(RunKind::Singles),
            other => Err(format!("unknown run kind `{other}`")),
        }
    }
}

/// Histogramming and windowing used to reduce every recording of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub bin_width: u64,
    pub max_delay: u64,
    /// Coincidence window; `None` sums the full recorded range `[0, max_delay)`.
    pub window: Option<TickRange>,
    pub background: Background,
    /// Also simulate the analyzer-c runs needed for p1.
    pub singles_runs: bool,
}

impl Default for SweepParams {
    /// 1 µs bins summed over delays up to 10 ms, no background subtraction.
    fn default() -> Self {
        SweepParams {
            bin_width: 40,
            max_delay: 400_000,
            window: None,
            background: Background::None,
            singles_runs: true,
        }
    }
}

impl SweepParams {
    pub fn window(&self) -> TickRange {
        self.window.unwrap_or(TickRange::new(0, self.max_delay))
    }
}

/// Reduced counts of one recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRecord {
    pub kind: RunKind,
    pub theta_deg: f64,
    pub coincidence: CoincidenceResult,
    pub singles_d1: SinglesCount,
    pub singles_d2: SinglesCount,
}

/// Configuration of one sweep point, with its own derived seed.
pub fn angle_config(base: &ExperimentConfig, theta_deg: f64, kind: RunKind) -> ExperimentConfig {
    let mut cfg = base.clone();
    let reference = base.analyzer_c.axis;
    match kind {
        RunKind::Coincidence => {
            cfg.analyzer_d.axis = reference.rotated(theta_deg);
        }
        RunKind::Singles => {
            cfg.analyzer_c.axis = reference.rotated(theta_deg);
            cfg.analyzer_d.axis = reference;
        }
    }
    cfg.rng_seed = derive_seed(base.rng_seed, &[kind.label(), theta_deg.to_bits()]);
    cfg
}

pub fn reduce(
    rec: &Recording,
    kind: RunKind,
    theta_deg: f64,
    params: &SweepParams,
) -> Result<AngleRecord> {
    let (d1, d2) = (rec.config.d1_pixels, rec.config.d2_pixels);
    let mut h = build_histogram(&rec.events, d1, d2, params.bin_width, params.max_delay)?;
    h.live_time = rec.live_time();
    Ok(AngleRecord {
        kind,
        theta_deg,
        coincidence: coincidence_result(&h, params.window(), params.background)?,
        singles_d1: SinglesCount {
            count: h.total_singles_d1,
            live_time: h.live_time,
        },
        singles_d2: SinglesCount {
            count: h.total_singles_d2,
            live_time: h.live_time,
        },
    })
}

/// File name used for a sweep point's event file.
pub fn event_file_name(kind: RunKind, theta_deg: f64) -> String {
    format!("{}_{:07.3}.evt", kind.as_str(), theta_deg)
}

pub fn run_angle(
    base: &ExperimentConfig,
    theta_deg: f64,
    kind: RunKind,
    params: &SweepParams,
    out_dir: Option<&Path>,
) -> Result<AngleRecord> {
    let cfg = angle_config(base, theta_deg, kind);
    let events = simulate(&cfg)?;
    let rec = Recording {
        n_runs: cfg.daq.n_runs,
        config: cfg,
        events,
    };
    if let Some(dir) = out_dir {
        write_events(
            dir.join(event_file_name(kind, theta_deg)),
            &rec.config,
            rec.n_runs,
            &rec.events,
        )?;
    }
    reduce(&rec, kind, theta_deg, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<AngleRecord>,
}

/// One row of the normalized-probability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P12Row {
    pub theta_deg: f64,
    pub p12: NormalizedProbability,
    pub p2: NormalizedProbability,
    pub p1: Option<NormalizedProbability>,
    /// `cos²θ`
    pub ideal: f64,
}

fn same_angle(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Simulates every requested angle (and the singles runs when enabled).
/// θ = 0 is always included because every probability is normalized to it.
pub fn run_sweep(
    base: &ExperimentConfig,
    thetas: &[f64],
    params: &SweepParams,
    out_dir: Option<&Path>,
) -> Result<SweepResult> {
    base.validate()?;
    let mut angles: Vec<f64> = thetas.to_vec();
    if !angles.iter().any(|&t| same_angle(t, 0.0)) {
        angles.insert(0, 0.0);
    }
    let mut jobs: Vec<(f64, RunKind)> = angles.iter().map(|&t| (t, RunKind::Coincidence)).collect();
    if params.singles_runs {
        jobs.extend(angles.iter().map(|&t| (t, RunKind::Singles)));
    }
    let records = jobs
        .par_iter()
        .map(|&(t, kind)| run_angle(base, t, kind, params, out_dir))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { records })
}

impl SweepResult {
    pub fn find(&self, kind: RunKind, theta_deg: f64) -> Option<&AngleRecord> {
        self.records
            .iter()
            .find(|r| r.kind == kind && same_angle(r.theta_deg, theta_deg))
    }

    fn reference(&self) -> Result<&AngleRecord> {
        self.find(RunKind::Coincidence, 0.0)
            .ok_or_else(|| Error::Precondition("sweep has no coincidence run at θ = 0°".into()))
    }

    pub fn p12(&self, theta_deg: f64) -> Option<Result<NormalizedProbability>> {
        let rec = self.find(RunKind::Coincidence, theta_deg)?;
        Some(
            self.reference()
                .and_then(|r| normalize(&rec.coincidence, &r.coincidence)),
        )
    }

    /// D2 singles with analyzer d at θ over those at 0.
    pub fn p2(&self, theta_deg: f64) -> Option<Result<NormalizedProbability>> {
        let rec = self.find(RunKind::Coincidence, theta_deg)?;
        Some(
            self.reference()
                .and_then(|r| normalize_singles(&rec.singles_d2, &r.singles_d2)),
        )
    }

    /// D1 singles with analyzer c at θ over D1 singles with c aligned.
    pub fn p1(&self, theta_deg: f64) -> Option<Result<NormalizedProbability>> {
        let rec = self.find(RunKind::Singles, theta_deg)?;
        Some(
            self.reference()
                .and_then(|r| normalize_singles(&rec.singles_d1, &r.singles_d1)),
        )
    }

    pub fn p12_table(&self) -> Result<Vec<P12Row>> {
        let mut rows = Vec::new();
        for rec in self
            .records
            .iter()
            .filter(|r| r.kind == RunKind::Coincidence)
        {
            let t = rec.theta_deg;
            rows.push(P12Row {
                theta_deg: t,
                p12: self.p12(t).expect("record exists")?,
                p2: self.p2(t).expect("record exists")?,
                p1: self.p1(t).transpose()?,
                ideal: crate::model::cos2_between(Angle::from_degrees(t), Angle::ZERO),
            });
        }
        rows.sort_by(|a, b| a.theta_deg.total_cmp(&b.theta_deg));
        Ok(rows)
    }

    /// S(θ) from the sweep; needs coincidence runs at 0, θ, 3θ and a singles run at 2θ.
    pub fn bell(&self, theta_deg: f64, propagation: Propagation) -> Result<ChVerdict> {
        let mut missing = Vec::new();
        let want = [
            (RunKind::Coincidence, 0.0),
            (RunKind::Coincidence, theta_deg),
            (RunKind::Coincidence, 3.0 * theta_deg),
            (RunKind::Singles, 2.0 * theta_deg),
        ];
        for (kind, t) in want {
            if self.find(kind, t).is_none() && !missing.contains(&format!("{kind} run at {t}°")) {
                missing.push(format!("{kind} run at {t}°"));
            }
        }
        if !missing.is_empty() {
            return Err(Error::Precondition(format!(
                "sweep lacks the {} needed for S({theta_deg}°)",
                missing.join(", ")
            )));
        }
        let m = SMeasurements {
            p12_theta: self.p12(theta_deg).transpose()?,
            p12_3theta: self.p12(3.0 * theta_deg).transpose()?,
            p1_2theta: self.p1(2.0 * theta_deg).transpose()?,
            p2_theta: self.p2(theta_deg).transpose()?,
        };
        s_of_theta_measured(Angle::from_degrees(theta_deg), &m, propagation)
    }
}

/// Angles a sweep must contain for S at each of `thetas`.
pub fn angles_for_bell(thetas: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for &t in thetas {
        for k in [1.0, 2.0, 3.0] {
            if !out.iter().any(|&a| same_angle(a, k * t)) {
                out.push(k * t);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Desk-scale bench with ideal polarizers: 10 runs of 100 s, sources at
/// 10^3 /s, D1 and D2 as the left and right halves of the anode grid.
pub fn desk_scale_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::ideal_optics(seed);
    cfg.d1_pixels = halves().0;
    cfg.d2_pixels = halves().1;
    cfg
}

/// One chaotic source (coherence time 200 ns) at 10^5 /s with the other
/// switched off, ideal optics and unit quantum efficiency, 40 runs of 10 s.
pub fn bunching_config(seed: u64, mode: SourceMode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::ideal_optics(seed);
    cfg.source_a.rate = 1.0e5;
    cfg.source_a.mode = mode;
    cfg.source_a.coherence_time = 200e-9;
    cfg.source_b.enabled = false;
    cfg.detector.quantum_efficiency = 1.0;
    cfg.daq.run_duration = 10.0;
    cfg.daq.n_runs = 40;
    cfg.d1_pixels = halves().0;
    cfg.d2_pixels = halves().1;
    cfg
}

fn halves() -> (PixelGroup, PixelGroup) {
    let col = |c: u8| PixelGroup::column(c, 0..4).expect("static pixels");
    let join = |a: PixelGroup, b: PixelGroup| PixelGroup::new(a.iter().chain(b.iter()));
    (join(col(0), col(1)), join(col(2), col(3)))
}

/// Paths of the event files a sweep would write into `dir`.
pub fn sweep_files(dir: &Path, result: &SweepResult) -> Vec<PathBuf> {
    result
        .records
        .iter()
        .map(|r| dir.join(event_file_name(r.kind, r.theta_deg)))
        .collect()
}
