//! End-to-end simulation: sources -> preparation -> analyzers -> detector.

use rayon::prelude::*;

use crate::detector::detect;
use crate::error::Result;
use crate::model::{ExperimentConfig, PhotonEvent};
use crate::optics::route_to_pixels;
use crate::rng::{stage, substream};
use crate::source::{generate_stream, merge_streams, prepare_polarization, Origin};

/// Simulates one run. Each stage draws from its own substream keyed by
/// `(rng_seed, run, stage)`.
pub fn simulate_run(config: &ExperimentConfig, run: u32) -> Result<Vec<PhotonEvent>> {
    let seed = config.rng_seed;
    let key = |s: u64| substream(seed, &[u64::from(run), s]);
    let duration = config.daq.run_duration;

    let a = generate_stream(&config.source_a, duration, &mut key(stage::SOURCE_A))?;
    let b = generate_stream(&config.source_b, duration, &mut key(stage::SOURCE_B))?;
    let a = prepare_polarization(&a, &config.prep_a, Origin::SourceA, &mut key(stage::PREP_A));
    let b = prepare_polarization(&b, &config.prep_b, Origin::SourceB, &mut key(stage::PREP_B));
    let prepared = merge_streams(a, b);
    let analyzed = route_to_pixels(&prepared, config, &mut key(stage::ROUTING))?;
    Ok(detect(
        &analyzed,
        &config.detector,
        &config.daq,
        run,
        &mut key(stage::DETECTION),
    ))
}

/// Simulates all configured runs in parallel and concatenates them in run order.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<PhotonEvent>> {
    config.validate()?;
    let per_run: Vec<Vec<PhotonEvent>> = (0..config.daq.n_runs)
        .into_par_iter()
        .map(|run| simulate_run(config, run))
        .collect::<Result<_>>()?;
    Ok(per_run.concat())
}
