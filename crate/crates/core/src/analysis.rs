//! Offline coincidence analysis of recorded events.
//!
//! Two pixel groups act as detectors D1 and D2. For every pair of a D1 event
//! at `t1` and a later-or-simultaneous D2 event at `t2` in the same run, the
//! delay `t2 - t1` is histogrammed. Windowed sums of that histogram give the
//! coincidence counts, and ratios of live-time-normalized counts give the
//! normalized probabilities that enter the CH statistic.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eventfile::Recording;
use crate::model::{PhotonEvent, PixelGroup};

/// Half-open delay interval `[start, end)` in clock ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickRange {
    pub start: u64,
    pub end: u64,
}

impl TickRange {
    pub fn new(start: u64, end: u64) -> Self {
        TickRange { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &TickRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for TickRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}) ticks", self.start, self.end)
    }
}

/// A value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Estimate { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, sigma: 0.0 }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.value, self.sigma)
    }
}

/// Coincidence counts `C(δt)` binned by delay `δt = t2 - t1 >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistogram {
    /// Ticks per bin.
    pub bin_width: u64,
    /// Exclusive upper delay limit, a multiple of `bin_width`.
    pub max_delay: u64,
    pub bins: Vec<u64>,
    pub total_singles_d1: u64,
    pub total_singles_d2: u64,
    /// Seconds of acquisition the counts were collected over.
    pub live_time: f64,
}

impl DelayHistogram {
    pub fn empty(bin_width: u64, max_delay: u64) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::Precondition(
                "bin width must be at least one tick".into(),
            ));
        }
        if max_delay == 0 || !max_delay.is_multiple_of(bin_width) {
            return Err(Error::Precondition(format!(
                "max delay ({max_delay} ticks) must be a positive multiple of the bin width ({bin_width} ticks)"
            )));
        }
        Ok(DelayHistogram {
            bin_width,
            max_delay,
            bins: vec![0; (max_delay / bin_width) as usize],
            total_singles_d1: 0,
            total_singles_d2: 0,
            live_time: 0.0,
        })
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Lower edge of bin `i`, in ticks.
    pub fn bin_low(&self, i: usize) -> u64 {
        i as u64 * self.bin_width
    }

    /// Bin-wise addition. Addition is associative and commutative, so any
    /// merge order over runs gives the same result.
    pub fn merge(&mut self, other: &DelayHistogram) -> Result<()> {
        if self.bin_width != other.bin_width || self.max_delay != other.max_delay {
            return Err(Error::Precondition(format!(
                "cannot merge histograms with binning {}/{} and {}/{}",
                self.bin_width, self.max_delay, other.bin_width, other.max_delay
            )));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.total_singles_d1 += other.total_singles_d1;
        self.total_singles_d2 += other.total_singles_d2;
        self.live_time += other.live_time;
        Ok(())
    }

    /// Indices of the bins covering `range`, which must be bin-aligned and
    /// inside `[0, max_delay]`.
    pub fn bin_span(&self, range: TickRange) -> Result<std::ops::Range<usize>> {
        if range.is_empty() {
            return Err(Error::Precondition(format!("empty delay range {range}")));
        }
        if !range.start.is_multiple_of(self.bin_width) || !range.end.is_multiple_of(self.bin_width) {
            return Err(Error::Precondition(format!(
                "delay range {range} is not aligned to the {}-tick bins",
                self.bin_width
            )));
        }
        if range.end > self.max_delay {
            return Err(Error::Precondition(format!(
                "delay range {range} extends past the histogram limit of {} ticks",
                self.max_delay
            )));
        }
        Ok((range.start / self.bin_width) as usize..(range.end / self.bin_width) as usize)
    }

    pub fn sum(&self, range: TickRange) -> Result<u64> {
        Ok(self.bins[self.bin_span(range)?].iter().sum())
    }

    /// The full recorded range `[0, max_delay)`.
    pub fn full_range(&self) -> TickRange {
        TickRange::new(0, self.max_delay)
    }
}

fn check_groups(d1: PixelGroup, d2: PixelGroup) -> Result<()> {
    if !d1.is_disjoint(d2) {
        return Err(crate::error::ConfigError::Invalid(format!(
            "detector groups overlap: D1 = {d1}, D2 = {d2}"
        ))
        .into());
    }
    Ok(())
}

fn check_sorted(events: &[PhotonEvent]) -> Result<()> {
    if let Some(i) = events
        .windows(2)
        .position(|w| (w[0].run, w[0].time) > (w[1].run, w[1].time))
    {
        return Err(Error::Precondition(format!(
            "events are not sorted by (run, tick) at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Sweep over one run's events. `d2` ticks are scanned with a lower cursor
/// that only moves forward, so the cost is O(n + pairs).
fn accumulate_run(events: &[PhotonEvent], d1: PixelGroup, d2: PixelGroup, h: &mut DelayHistogram) {
    let t1s: Vec<u64> = events
        .iter()
        .filter(|e| d1.contains(e.pixel))
        .map(|e| e.time.0)
        .collect();
    let t2s: Vec<u64> = events
        .iter()
        .filter(|e| d2.contains(e.pixel))
        .map(|e| e.time.0)
        .collect();
    h.total_singles_d1 += t1s.len() as u64;
    h.total_singles_d2 += t2s.len() as u64;

    let mut lo = 0;
    for &t1 in &t1s {
        while lo < t2s.len() && t2s[lo] < t1 {
            lo += 1;
        }
        for &t2 in &t2s[lo..] {
            let delay = t2 - t1;
            if delay >= h.max_delay {
                break;
            }
            h.bins[(delay / h.bin_width) as usize] += 1;
        }
    }
}

/// Histogram of delays `t2 - t1` in `[0, max_delay)` over all (D1, D2)
/// event pairs of the same run. `live_time` is left at zero.
pub fn build_histogram(
    events: &[PhotonEvent],
    d1: PixelGroup,
    d2: PixelGroup,
    bin_width: u64,
    max_delay: u64,
) -> Result<DelayHistogram> {
    check_groups(d1, d2)?;
    check_sorted(events)?;
    let empty = DelayHistogram::empty(bin_width, max_delay)?;
    events
        .chunk_by(|a, b| a.run == b.run)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|run| {
            let mut h = empty.clone();
            accumulate_run(run, d1, d2, &mut h);
            Ok(h)
        })
        .try_reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )
}

/// Histogram of a recording with its live time filled in.
pub fn histogram_of(
    rec: &Recording,
    d1: PixelGroup,
    d2: PixelGroup,
    bin_width: u64,
    max_delay: u64,
) -> Result<DelayHistogram> {
    let mut h = build_histogram(&rec.events, d1, d2, bin_width, max_delay)?;
    h.live_time = rec.live_time();
    Ok(h)
}

/// Ratio of the mean per-bin count in `peak` to that in `baseline`.
///
/// For chaotic light this estimates `g2(peak) / g2(∞)`.
pub fn bunching_ratio(
    h: &DelayHistogram,
    peak: TickRange,
    baseline: TickRange,
) -> Result<Estimate> {
    if peak.overlaps(&baseline) {
        return Err(Error::Precondition(format!(
            "peak {peak} and baseline {baseline} overlap"
        )));
    }
    let peak_bins = h.bin_span(peak)?;
    let base_bins = h.bin_span(baseline)?;
    let n_peak: u64 = h.bins[peak_bins.clone()].iter().sum();
    let n_base: u64 = h.bins[base_bins.clone()].iter().sum();
    if n_base == 0 {
        return Err(Error::Precondition(format!(
            "baseline window {baseline} holds no coincidences"
        )));
    }
    let mean_peak = n_peak as f64 / peak_bins.len() as f64;
    let mean_base = n_base as f64 / base_bins.len() as f64;
    let ratio = mean_peak / mean_base;
    // an empty peak still carries one count's worth of uncertainty
    let rel_peak = 1.0 / (n_peak.max(1) as f64).sqrt();
    let sigma = if n_peak == 0 {
        rel_peak / peak_bins.len() as f64 / mean_base
    } else {
        ratio * (rel_peak.powi(2) + 1.0 / n_base as f64).sqrt()
    };
    Ok(Estimate::new(ratio, sigma))
}

/// How accidental/background coincidences are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Background {
    None,
    /// Mean per-tick count in a long-delay sideband, scaled to the window width.
    Sideband(TickRange),
}

/// Default accidental-plateau sideband: 2 µs to 10 µs at a 25 ns clock.
pub const DEFAULT_SIDEBAND: TickRange = TickRange {
    start: 80,
    end: 400,
};

/// Windowed coincidence count of one histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceResult {
    pub raw_coincidences: u64,
    pub background: f64,
    pub background_sigma: f64,
    pub corrected: f64,
    pub singles_d1: u64,
    pub singles_d2: u64,
    pub live_time: f64,
    pub uncertainty: f64,
}

impl CoincidenceResult {
    /// Assembles a result and its uncertainty from counts.
    ///
    /// The variance of a pair count between two Poisson streams is
    /// `C + C²(1/n1 + 1/n2)`: the Poisson term plus the fluctuation of the
    /// singles counts `n1`, `n2` that every pair count scales with. The
    /// background variance adds to the first term and the second term uses
    /// the corrected count.
    pub fn from_counts(
        raw: u64,
        background: f64,
        background_sigma: f64,
        singles_d1: u64,
        singles_d2: u64,
        live_time: f64,
    ) -> Self {
        let corrected = raw as f64 - background;
        let inv = |n: u64| if n > 0 { 1.0 / n as f64 } else { 0.0 };
        let variance = raw as f64
            + background_sigma.powi(2)
            + corrected.powi(2) * (inv(singles_d1) + inv(singles_d2));
        CoincidenceResult {
            raw_coincidences: raw,
            background,
            background_sigma,
            corrected,
            singles_d1,
            singles_d2,
            live_time,
            uncertainty: variance.sqrt(),
        }
    }

    /// Corrected coincidences per second of live time.
    pub fn rate(&self) -> Result<Estimate> {
        if !(self.live_time > 0.0) {
            return Err(Error::Precondition(
                "coincidence result has no live time".into(),
            ));
        }
        Ok(Estimate::new(
            self.corrected / self.live_time,
            self.uncertainty / self.live_time,
        ))
    }
}

pub fn coincidence_result(
    h: &DelayHistogram,
    window: TickRange,
    background: Background,
) -> Result<CoincidenceResult> {
    let raw = h.sum(window)?;
    let (bg, bg_sigma) = match background {
        Background::None => (0.0, 0.0),
        Background::Sideband(side) => {
            if side.overlaps(&window) {
                return Err(Error::Precondition(format!(
                    "background sideband {side} overlaps the coincidence window {window}"
                )));
            }
            let n = h.sum(side)? as f64;
            let scale = window.len() as f64 / side.len() as f64;
            (n * scale, n.sqrt() * scale)
        }
    };
    Ok(CoincidenceResult::from_counts(
        raw,
        bg,
        bg_sigma,
        h.total_singles_d1,
        h.total_singles_d2,
        h.live_time,
    ))
}

/// Expected accidental coincidences between independent streams with rates
/// `r1`, `r2` (per second) in a delay window of `window` seconds.
pub fn accidental_background(r1: f64, r2: f64, window: f64, live_time: f64) -> f64 {
    r1 * r2 * window * live_time
}

/// Ratio of two live-time-normalized rates, with the numerator and
/// reference uncertainty contributions kept apart for correlated propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedProbability {
    pub value: f64,
    pub sigma: f64,
    /// Absolute uncertainty of `value` due to the numerator measurement alone.
    pub sigma_numerator: f64,
    /// Relative uncertainty of the reference (denominator) rate.
    pub reference_rel: f64,
}

impl NormalizedProbability {
    pub fn from_rates(numerator: Estimate, reference: Estimate) -> Result<Self> {
        if reference.value == 0.0 || !reference.value.is_finite() {
            return Err(Error::Precondition(
                "normalization reference rate is zero".into(),
            ));
        }
        let value = numerator.value / reference.value;
        let sigma_numerator = numerator.sigma / reference.value.abs();
        let reference_rel = reference.sigma / reference.value.abs();
        Ok(NormalizedProbability {
            value,
            sigma: (sigma_numerator.powi(2) + (value * reference_rel).powi(2)).sqrt(),
            sigma_numerator,
            reference_rel,
        })
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.sigma)
    }
}

pub fn normalize(
    at_theta: &CoincidenceResult,
    at_zero: &CoincidenceResult,
) -> Result<NormalizedProbability> {
    NormalizedProbability::from_rates(at_theta.rate()?, at_zero.rate()?)
}

/// `p12(θ) = C'(θ) / C'(0)`: background-corrected windowed coincidences at
/// θ over those at θ = 0, each per unit live time.
pub fn coincidence_probability(
    h_theta: &DelayHistogram,
    h_zero: &DelayHistogram,
    window: TickRange,
    background: Background,
) -> Result<NormalizedProbability> {
    if h_theta.bin_width != h_zero.bin_width || h_theta.max_delay != h_zero.max_delay {
        return Err(Error::Precondition(
            "histograms must share bin width and delay range".into(),
        ));
    }
    normalize(
        &coincidence_result(h_theta, window, background)?,
        &coincidence_result(h_zero, window, background)?,
    )
}

/// Event count of one pixel group over a known live time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglesCount {
    pub count: u64,
    pub live_time: f64,
}

impl SinglesCount {
    pub fn of(events: &[PhotonEvent], pixels: PixelGroup, live_time: f64) -> Self {
        SinglesCount {
            count: events.iter().filter(|e| pixels.contains(e.pixel)).count() as u64,
            live_time,
        }
    }

    pub fn rate(&self) -> Result<Estimate> {
        if !(self.live_time > 0.0) {
            return Err(Error::Precondition("singles count has no live time".into()));
        }
        Ok(Estimate::new(
            self.count as f64 / self.live_time,
            (self.count as f64).sqrt() / self.live_time,
        ))
    }
}

pub fn normalize_singles(
    at_setting: &SinglesCount,
    reference: &SinglesCount,
) -> Result<NormalizedProbability> {
    NormalizedProbability::from_rates(at_setting.rate()?, reference.rate()?)
}

/// Singles rate of `pixels` in `rec` relative to the rate of
/// `reference_pixels` in `reference` (the aligned-analyzer run).
pub fn singles_probability(
    rec: &Recording,
    pixels: PixelGroup,
    reference: &Recording,
    reference_pixels: PixelGroup,
) -> Result<NormalizedProbability> {
    normalize_singles(
        &SinglesCount::of(&rec.events, pixels, rec.live_time()),
        &SinglesCount::of(&reference.events, reference_pixels, reference.live_time()),
    )
}
