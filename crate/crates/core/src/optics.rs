//! Analyzer polarizers and beam-to-anode mapping.

use rand::Rng;

use crate::error::{ConfigError, Result};
use crate::model::{Angle, BeamLayout, ExperimentConfig, PixelId, PolarizerSpec, GRID_PIXELS};
use crate::source::{EmittedPhoton, Origin};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzedPhoton {
    /// Seconds since the start of the run.
    pub arrival_time: f64,
    pub pixel: PixelId,
    pub origin: Origin,
}

/// Malus' law with finite peak transmission and extinction.
pub fn malus_transmission(photon_pol: Angle, analyzer: &PolarizerSpec) -> f64 {
    analyzer.transmission(photon_pol)
}

/// Drops each prepared photon onto a uniformly chosen anode of the 4x4 grid.
///
/// Photons landing on a D1 pixel must pass analyzer c, those on a D2 pixel
/// analyzer d; photons on any other pixel are lost. With
/// [`BeamLayout::Separate`] source A only reaches D1 and source B only D2.
/// The free-space delay is common to both arms and taken as zero.
pub fn route_to_pixels<R: Rng + ?Sized>(
    photons: &[EmittedPhoton],
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<Vec<AnalyzedPhoton>> {
    if !config.d1_pixels.is_disjoint(config.d2_pixels) {
        return Err(ConfigError::Invalid(format!(
            "d1_pixels ({}) and d2_pixels ({}) overlap",
            config.d1_pixels, config.d2_pixels
        ))
        .into());
    }
    let separate = config.beam_layout == BeamLayout::Separate;
    let mut out = Vec::with_capacity(photons.len() / 2);
    for ph in photons {
        let pixel = PixelId::from_index(rng.gen_range(0..GRID_PIXELS as u8))
            .expect("index drawn inside the grid");
        let analyzer = if config.d1_pixels.contains(pixel) {
            if separate && ph.origin != Origin::SourceA {
                continue;
            }
            &config.analyzer_c
        } else if config.d2_pixels.contains(pixel) {
            if separate && ph.origin != Origin::SourceB {
                continue;
            }
            &config.analyzer_d
        } else {
            continue;
        };
        if rng.gen_bool(malus_transmission(ph.polarization, analyzer).clamp(0.0, 1.0)) {
            out.push(AnalyzedPhoton {
                arrival_time: ph.emission_time,
                pixel,
                origin: ph.origin,
            });
        }
    }
    Ok(out)
}
