//! Photon emission streams for the two lasers.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};

use crate::error::{Error, Result};
use crate::model::{Angle, PolarizerSpec, SourceMode, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    SourceA,
    SourceB,
}

/// A photon that survived its preparation polarizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmittedPhoton {
    /// Seconds since the start of the run.
    pub emission_time: f64,
    pub polarization: Angle,
    pub origin: Origin,
}

fn check_interval(rate: f64, duration: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!(
            "emission rate must be positive, got {rate}"
        )));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Domain(format!(
            "stream duration must be positive, got {duration}"
        )));
    }
    Ok(())
}

/// Homogeneous Poisson process on `[0, duration)`.
pub fn generate_coherent_stream<R: Rng + ?Sized>(
    rate: f64,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_interval(rate, duration)?;
    let gap = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
    let mut times = Vec::with_capacity((rate * duration * 1.05) as usize + 16);
    let mut t = 0.0;
    loop {
        let next = t + gap.sample(rng);
        if next >= duration {
            break;
        }
        // a gap below one ulp would repeat a timestamp
        if next > t || times.is_empty() {
            times.push(next);
            t = next;
        }
    }
    Ok(times)
}

/// Cox process whose intensity is constant over consecutive cells of length
/// `coherence_time` and drawn independently per cell from an exponential
/// distribution with mean `rate`.
///
/// With exponential intensity the photon count of a cell is geometric with
/// mean `mu = rate * cell`, which lets empty cells be skipped in one draw.
pub fn generate_chaotic_stream<R: Rng + ?Sized>(
    rate: f64,
    coherence_time: f64,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_interval(rate, duration)?;
    if !(coherence_time > 0.0) {
        return Err(Error::Domain(format!(
            "coherence time must be positive, got {coherence_time}"
        )));
    }
    let cell = coherence_time.min(duration);
    let n_cells = (duration / cell).ceil() as u64;
    let mu = rate * cell;
    // P(count = n) = (1 - q) q^n with q = mu / (1 + mu)
    let q = mu / (1.0 + mu);
    let empty_run = Geometric::new(q).map_err(|e| Error::Domain(e.to_string()))?;
    let extra = Geometric::new(1.0 - q).map_err(|e| Error::Domain(e.to_string()))?;

    let mut times = Vec::with_capacity((rate * duration * 1.05) as usize + 16);
    let mut scratch = Vec::new();
    let mut k: u64 = 0;
    loop {
        k = k.saturating_add(empty_run.sample(rng));
        if k >= n_cells {
            break;
        }
        let n = 1 + extra.sample(rng);
        let start = k as f64 * cell;
        scratch.clear();
        scratch.extend((0..n).map(|_| start + rng.gen::<f64>() * cell));
        scratch.sort_by(f64::total_cmp);
        for &t in &scratch {
            if t >= duration {
                break;
            }
            if times.last().is_none_or(|&last| t > last) {
                times.push(t);
            }
        }
        k += 1;
    }
    Ok(times)
}

/// Emission stream for a configured source over one run.
pub fn generate_stream<R: Rng + ?Sized>(
    source: &SourceSpec,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !source.enabled {
        return Ok(Vec::new());
    }
    match source.mode {
        SourceMode::Coherent => generate_coherent_stream(source.rate, duration, rng),
        SourceMode::Chaotic => {
            generate_chaotic_stream(source.rate, source.coherence_time, duration, rng)
        }
    }
}

/// Passes unpolarized photons through a preparation polarizer.
///
/// Unpolarized light survives with probability `t_max / 2`; every survivor
/// leaves polarized along the polarizer axis.
pub fn prepare_polarization<R: Rng + ?Sized>(
    stream: &[f64],
    prep: &PolarizerSpec,
    origin: Origin,
    rng: &mut R,
) -> Vec<EmittedPhoton> {
    let p = 0.5 * prep.t_max;
    stream
        .iter()
        .filter(|_| rng.gen_bool(p))
        .map(|&t| EmittedPhoton {
            emission_time: t,
            polarization: prep.axis,
            origin,
        })
        .collect()
}

/// Time-ordered merge of two streams; ties keep `a` first.
pub fn merge_streams(a: Vec<EmittedPhoton>, b: Vec<EmittedPhoton>) -> Vec<EmittedPhoton> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ib = b.into_iter().peekable();
    for pa in a {
        while let Some(pb) = ib.next_if(|pb| pb.emission_time < pa.emission_time) {
            out.push(pb);
        }
        out.push(pa);
    }
    out.extend(ib);
    out
}
