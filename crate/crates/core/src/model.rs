//! Domain types shared by the simulation and analysis stages.
//!
//! Angles are kept in degrees everywhere; radians only appear inside the
//! trigonometric evaluations.

use std::fmt;

use crate::error::{ConfigError, Error, Result};

/// Polarizer orientation in the transverse plane, in degrees, reduced to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub fn from_degrees(deg: f64) -> Self {
        let mut v = deg.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if v >= 360.0 {
            v = 0.0;
        }
        Angle(v)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    pub fn rotated(self, by_deg: f64) -> Self {
        Angle::from_degrees(self.0 + by_deg)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

/// Unsigned angle between two polarizer axes, in `[0, 180]`.
pub fn relative_angle(x: Angle, y: Angle) -> Angle {
    let d = (x.0 - y.0).abs().rem_euclid(360.0);
    Angle(d.min(360.0 - d))
}

/// `cos²` of the angle between two axes.
pub fn cos2_between(x: Angle, y: Angle) -> f64 {
    cos2_deg(relative_angle(x, y).degrees())
}

/// `cos²` of an angle in degrees. Multiples of 30° and 45° return their
/// exact values (0, 1/4, 1/2, 3/4, 1).
pub fn cos2_deg(deg: f64) -> f64 {
    let d = deg.rem_euclid(180.0);
    for (at, value) in [
        (0.0, 1.0),
        (30.0, 0.75),
        (45.0, 0.5),
        (60.0, 0.25),
        (90.0, 0.0),
    ] {
        if d == at || d == 180.0 - at {
            return value;
        }
    }
    0.5 * (1.0 + (2.0 * d).to_radians().cos())
}

/// Analyzer settings for the equal-spacing CH geometry:
/// `|a - b| = |a' - b| = |a' - b'| = |a - b'| / 3 = theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChSettings {
    pub a: Angle,
    pub a_prime: Angle,
    pub b: Angle,
    pub b_prime: Angle,
}

/// Accepts `0 < theta <= 60` degrees so that `3 theta` stays within `[0, 180]`.
pub fn ch_settings(theta: Angle) -> Result<ChSettings> {
    let t = theta.degrees();
    if !(t > 0.0 && t <= 60.0) {
        return Err(Error::Domain(format!(
            "CH geometry needs 0° < theta <= 60°, got {t}°"
        )));
    }
    Ok(ChSettings {
        a: Angle::ZERO,
        a_prime: Angle::from_degrees(2.0 * t),
        b: Angle::from_degrees(t),
        b_prime: Angle::from_degrees(3.0 * t),
    })
}

/// Integer clock tick, in units of the detector clock period (25 ns by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tick(pub u64);

pub const GRID_SIZE: u8 = 4;
pub const GRID_PIXELS: usize = (GRID_SIZE as usize) * (GRID_SIZE as usize);

/// Anode of the 4x4 multianode photomultiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelId {
    row: u8,
    col: u8,
}

impl PixelId {
    pub fn new(row: u8, col: u8) -> Result<Self> {
        if row >= GRID_SIZE || col >= GRID_SIZE {
            return Err(Error::Domain(format!(
                "pixel ({row}, {col}) is outside the 4x4 grid"
            )));
        }
        Ok(PixelId { row, col })
    }

    /// Inverse of [`PixelId::index`]; `None` for indices outside the grid.
    pub fn from_index(index: u8) -> Option<Self> {
        (usize::from(index) < GRID_PIXELS).then_some(PixelId {
            row: index / GRID_SIZE,
            col: index % GRID_SIZE,
        })
    }

    pub fn row(self) -> u8 {
        self.row
    }

    pub fn col(self) -> u8 {
        self.col
    }

    /// `row * 4 + col`
    pub fn index(self) -> u8 {
        self.row * GRID_SIZE + self.col
    }

    pub fn all() -> impl Iterator<Item = PixelId> {
        (0..GRID_PIXELS as u8).filter_map(PixelId::from_index)
    }
}

impl fmt::Display for PixelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.row, self.col)
    }
}

/// A set of pixels read out together as one virtual detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PixelGroup(u16);

impl PixelGroup {
    pub fn new<I: IntoIterator<Item = PixelId>>(pixels: I) -> Self {
        PixelGroup(pixels.into_iter().fold(0, |m, p| m | (1 << p.index())))
    }

    /// Vertical column `col`, rows `rows`.
    pub fn column(col: u8, rows: std::ops::Range<u8>) -> Result<Self> {
        let mut pixels = Vec::new();
        for r in rows {
            pixels.push(PixelId::new(r, col)?);
        }
        Ok(PixelGroup::new(pixels))
    }

    pub fn contains(self, p: PixelId) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_disjoint(self, other: PixelGroup) -> bool {
        self.0 & other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = PixelId> {
        PixelId::all().filter(move |p| self.contains(*p))
    }

    /// Parses `row:col` pairs separated by commas or whitespace, e.g. `0:0, 1:0, 2:0`.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut pixels = Vec::new();
        for item in text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
        {
            let (r, c) = item
                .split_once(':')
                .ok_or_else(|| format!("pixel `{item}` is not of the form row:col"))?;
            let r: u8 = r.parse().map_err(|_| format!("bad row in `{item}`"))?;
            let c: u8 = c.parse().map_err(|_| format!("bad column in `{item}`"))?;
            pixels.push(PixelId::new(r, c).map_err(|e| e.to_string())?);
        }
        Ok(PixelGroup::new(pixels))
    }
}

impl fmt::Display for PixelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.iter().map(|p| p.to_string()).collect();
        f.write_str(&items.join(","))
    }
}

/// One detected photon as written to the event file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhotonEvent {
    pub pixel: PixelId,
    pub time: Tick,
    pub run: u32,
}

/// Linear polarizer with finite peak transmission and extinction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizerSpec {
    pub axis: Angle,
    pub t_max: f64,
    /// Aligned-to-crossed transmission ratio; `f64::INFINITY` for an ideal polarizer.
    pub extinction_ratio: f64,
}

impl PolarizerSpec {
    /// Bench polarizer: 80% peak transmission, extinction 10^4.
    pub fn bench(axis: Angle) -> Self {
        PolarizerSpec {
            axis,
            t_max: 0.8,
            extinction_ratio: 1.0e4,
        }
    }

    pub fn ideal(axis: Angle) -> Self {
        PolarizerSpec {
            axis,
            t_max: 1.0,
            extinction_ratio: f64::INFINITY,
        }
    }

    /// Passing probability for light polarized along `polarization`:
    /// `t_max * (cos² Δ + sin² Δ / extinction_ratio)`.
    pub fn transmission(&self, polarization: Angle) -> f64 {
        let c2 = cos2_between(polarization, self.axis);
        let s2 = 1.0 - c2;
        self.t_max * (c2 + s2 / self.extinction_ratio)
    }

    fn validate(&self, name: &str) -> std::result::Result<(), ConfigError> {
        if !(self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "{name}.t_max must lie in (0, 1], got {}",
                self.t_max
            )));
        }
        if !(self.extinction_ratio > 1.0) {
            return Err(ConfigError::Invalid(format!(
                "{name}.extinction_ratio must exceed 1, got {}",
                self.extinction_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    /// Poissonian emission (attenuated laser).
    Coherent,
    /// Bunched emission: exponential intensity redrawn every coherence time.
    Chaotic,
}

impl SourceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceMode::Coherent => "coherent",
            SourceMode::Chaotic => "chaotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// Mean photon rate, per second, of unpolarized light reaching the preparation polarizer.
    pub rate: f64,
    pub mode: SourceMode,
    /// Seconds; only used in chaotic mode.
    pub coherence_time: f64,
    /// A disabled source emits nothing (one-laser control runs).
    pub enabled: bool,
}

impl SourceSpec {
    pub fn coherent(rate: f64) -> Self {
        SourceSpec {
            rate,
            mode: SourceMode::Coherent,
            coherence_time: 200e-9,
            enabled: true,
        }
    }

    pub fn chaotic(rate: f64, coherence_time: f64) -> Self {
        SourceSpec {
            rate,
            mode: SourceMode::Chaotic,
            coherence_time,
            enabled: true,
        }
    }

    fn validate(&self, name: &str) -> std::result::Result<(), ConfigError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "{name}.rate must be positive, got {}",
                self.rate
            )));
        }
        if self.mode == SourceMode::Chaotic && !(self.coherence_time > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "{name}.coherence_time must be positive in chaotic mode, got {}",
                self.coherence_time
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub quantum_efficiency: f64,
    /// Dark counts per second on each of the 16 anodes.
    pub dark_rate_per_pixel: f64,
    /// Seconds per clock tick.
    pub clock_period: f64,
    /// Seconds.
    pub coincidence_window: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            quantum_efficiency: 0.15,
            dark_rate_per_pixel: 0.0,
            clock_period: 25e-9,
            coincidence_window: 100e-9,
        }
    }
}

impl DetectorSpec {
    /// Converts a duration in seconds to the nearest whole number of ticks.
    pub fn ticks(&self, seconds: f64) -> u64 {
        (seconds / self.clock_period).round().max(0.0) as u64
    }

    pub fn window_ticks(&self) -> u64 {
        self.ticks(self.coincidence_window)
    }

    fn validate(&self) -> std::result::Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(ConfigError::Invalid(format!(
                "detector.quantum_efficiency must lie in [0, 1], got {}",
                self.quantum_efficiency
            )));
        }
        if !(self.dark_rate_per_pixel >= 0.0 && self.dark_rate_per_pixel.is_finite()) {
            return Err(ConfigError::Invalid(
                "detector.dark_rate_per_pixel must be finite and non-negative".into(),
            ));
        }
        if !(self.clock_period > 0.0) {
            return Err(ConfigError::Invalid(
                "detector.clock_period must be positive".into(),
            ));
        }
        if !(self.coincidence_window >= self.clock_period) {
            return Err(ConfigError::Invalid(format!(
                "detector.coincidence_window ({}) must be at least one clock period ({})",
                self.coincidence_window, self.clock_period
            )));
        }
        Ok(())
    }
}

/// Acquisition timing. Each DAQ period is `cycle_length` of live recording
/// followed by `transfer_dead_time` during which nothing is recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaqSpec {
    pub cycle_length: f64,
    pub transfer_dead_time: f64,
    pub run_duration: f64,
    pub n_runs: u32,
}

impl Default for DaqSpec {
    fn default() -> Self {
        DaqSpec {
            cycle_length: 10.0,
            transfer_dead_time: 0.010,
            run_duration: 100.0,
            n_runs: 10,
        }
    }
}

impl DaqSpec {
    pub fn duty_cycle(&self) -> f64 {
        self.cycle_length / (self.cycle_length + self.transfer_dead_time)
    }

    /// Whether a photon arriving `t` seconds into a run is recorded.
    pub fn is_live(&self, t: f64) -> bool {
        if self.transfer_dead_time <= 0.0 {
            return true;
        }
        let period = self.cycle_length + self.transfer_dead_time;
        t.rem_euclid(period) < self.cycle_length
    }

    /// Exact recorded time within one run, accounting for partial periods.
    pub fn live_time_per_run(&self) -> f64 {
        if self.transfer_dead_time <= 0.0 {
            return self.run_duration;
        }
        let period = self.cycle_length + self.transfer_dead_time;
        let full = (self.run_duration / period).floor();
        let rest = self.run_duration - full * period;
        full * self.cycle_length + rest.min(self.cycle_length)
    }

    pub fn total_live_time(&self) -> f64 {
        self.live_time_per_run() * f64::from(self.n_runs)
    }

    fn validate(&self) -> std::result::Result<(), ConfigError> {
        if !(self.cycle_length > 0.0) {
            return Err(ConfigError::Invalid(
                "daq.cycle_length must be positive".into(),
            ));
        }
        if !(self.transfer_dead_time >= 0.0) {
            return Err(ConfigError::Invalid(
                "daq.transfer_dead_time must be non-negative".into(),
            ));
        }
        if !(self.run_duration > 0.0 && self.run_duration.is_finite()) {
            return Err(ConfigError::Invalid(
                "daq.run_duration must be positive".into(),
            ));
        }
        if self.n_runs == 0 {
            return Err(ConfigError::Invalid("daq.n_runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the two expanded beams reach the analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamLayout {
    /// Both beams overlap uniformly on the whole anode grid.
    Superposed,
    /// Source A reaches only the D1 pixels and source B only the D2 pixels.
    Separate,
}

impl BeamLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            BeamLayout::Superposed => "superposed",
            BeamLayout::Separate => "separate",
        }
    }
}

/// Full bench description. Every stochastic result is a function of this value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source_a: SourceSpec,
    pub source_b: SourceSpec,
    pub prep_a: PolarizerSpec,
    pub prep_b: PolarizerSpec,
    pub analyzer_c: PolarizerSpec,
    pub analyzer_d: PolarizerSpec,
    pub detector: DetectorSpec,
    pub daq: DaqSpec,
    pub d1_pixels: PixelGroup,
    pub d2_pixels: PixelGroup,
    pub beam_layout: BeamLayout,
    pub rng_seed: u64,
}

impl ExperimentConfig {
    /// Bench defaults: two coherent sources at 10^3 /s, all polarizers along x,
    /// 80% / 10^4 polarizers, D1 and D2 as 3-pixel columns 0 and 2.
    pub fn bench(rng_seed: u64) -> Self {
        ExperimentConfig {
            source_a: SourceSpec::coherent(1.0e3),
            source_b: SourceSpec::coherent(1.0e3),
            prep_a: PolarizerSpec::bench(Angle::ZERO),
            prep_b: PolarizerSpec::bench(Angle::ZERO),
            analyzer_c: PolarizerSpec::bench(Angle::ZERO),
            analyzer_d: PolarizerSpec::bench(Angle::ZERO),
            detector: DetectorSpec::default(),
            daq: DaqSpec::default(),
            d1_pixels: PixelGroup::column(0, 0..3).expect("static pixels"),
            d2_pixels: PixelGroup::column(2, 0..3).expect("static pixels"),
            beam_layout: BeamLayout::Superposed,
            rng_seed,
        }
    }

    /// Same geometry with ideal polarizers everywhere.
    pub fn ideal_optics(rng_seed: u64) -> Self {
        let mut cfg = Self::bench(rng_seed);
        for p in [
            &mut cfg.prep_a,
            &mut cfg.prep_b,
            &mut cfg.analyzer_c,
            &mut cfg.analyzer_d,
        ] {
            *p = PolarizerSpec::ideal(p.axis);
        }
        cfg
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.source_a.validate("source_a")?;
        self.source_b.validate("source_b")?;
        self.prep_a.validate("prep_a")?;
        self.prep_b.validate("prep_b")?;
        self.analyzer_c.validate("analyzer_c")?;
        self.analyzer_d.validate("analyzer_d")?;
        self.detector.validate()?;
        self.daq.validate()?;
        if self.d1_pixels.is_empty() || self.d2_pixels.is_empty() {
            return Err(ConfigError::Invalid(
                "d1_pixels and d2_pixels must both be non-empty".into(),
            ));
        }
        if !self.d1_pixels.is_disjoint(self.d2_pixels) {
            return Err(ConfigError::Invalid(format!(
                "d1_pixels ({}) and d2_pixels ({}) overlap",
                self.d1_pixels, self.d2_pixels
            )));
        }
        Ok(())
    }
}
