//! Multianode PMT response and DAQ gating.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::model::{DaqSpec, DetectorSpec, PhotonEvent, PixelId, Tick};
use crate::optics::AnalyzedPhoton;

/// Turns analyzed photons of one run into recorded events.
///
/// Each photon fires with probability `quantum_efficiency`; every anode adds
/// Poisson dark counts over the run; anything landing in a DAQ transfer
/// window is lost; times are floored to clock ticks. Two hits on one anode
/// within one tick produce a single event. Output is sorted by (tick, pixel).
pub fn detect<R: Rng + ?Sized>(
    photons: &[AnalyzedPhoton],
    det: &DetectorSpec,
    daq: &DaqSpec,
    run: u32,
    rng: &mut R,
) -> Vec<PhotonEvent> {
    let mut hits: Vec<(f64, PixelId)> = photons
        .iter()
        .filter(|_| rng.gen_bool(det.quantum_efficiency))
        .map(|p| (p.arrival_time, p.pixel))
        .collect();

    if det.dark_rate_per_pixel > 0.0 {
        let mean = det.dark_rate_per_pixel * daq.run_duration;
        let dist = Poisson::new(mean).expect("positive finite dark-count mean");
        for pixel in PixelId::all() {
            let n = dist.sample(rng) as u64;
            for _ in 0..n {
                hits.push((rng.gen::<f64>() * daq.run_duration, pixel));
            }
        }
    }

    let mut events: Vec<PhotonEvent> = hits
        .into_iter()
        .filter(|&(t, _)| daq.is_live(t))
        .map(|(t, pixel)| PhotonEvent {
            pixel,
            time: quantize(t, det.clock_period),
            run,
        })
        .collect();
    events.sort_unstable_by_key(|e| (e.time, e.pixel.index()));
    events.dedup_by_key(|e| (e.time, e.pixel));
    events
}

/// `floor(t / clock_period)`
pub fn quantize(t: f64, clock_period: f64) -> Tick {
    Tick((t / clock_period).floor().max(0.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::Origin;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_photons(n: usize, duration: f64, seed: u64) -> Vec<AnalyzedPhoton> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<AnalyzedPhoton> = (0..n)
            .map(|_| AnalyzedPhoton {
                arrival_time: rng.gen::<f64>() * duration,
                pixel: PixelId::from_index(rng.gen_range(0..16)).unwrap(),
                origin: Origin::SourceA,
            })
            .collect();
        v.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        v
    }

    fn transparent() -> (DetectorSpec, DaqSpec) {
        let det = DetectorSpec {
            quantum_efficiency: 1.0,
            dark_rate_per_pixel: 0.0,
            ..DetectorSpec::default()
        };
        let daq = DaqSpec {
            transfer_dead_time: 0.0,
            run_duration: 100.0,
            n_runs: 1,
            ..DaqSpec::default()
        };
        (det, daq)
    }

    #[test]
    fn transparent_detector_keeps_everything() {
        let (det, daq) = transparent();
        let ph = uniform_photons(10_000, 100.0, 1);
        let ev = detect(&ph, &det, &daq, 3, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(ev.len(), ph.len());
        assert!(ev.iter().all(|e| e.run == 3));
        assert!(ev.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn quantum_efficiency_retention() {
        let (mut det, daq) = transparent();
        det.quantum_efficiency = 0.15;
        let n = 1_000_000;
        let ph = uniform_photons(n, 100.0, 3);
        let ev = detect(&ph, &det, &daq, 0, &mut ChaCha8Rng::seed_from_u64(4));
        let sigma = (n as f64 * 0.15 * 0.85).sqrt();
        assert!(
            (ev.len() as f64 - 1.5e5).abs() < 5.0 * sigma,
            "kept {}",
            ev.len()
        );
    }

    #[test]
    fn duty_cycle_losses() {
        let (det, mut daq) = transparent();
        daq.transfer_dead_time = 0.010;
        daq.run_duration = 1000.0;
        let n = 1_000_000;
        let ph = uniform_photons(n, 1000.0, 5);
        let ev = detect(&ph, &det, &daq, 0, &mut ChaCha8Rng::seed_from_u64(6));
        let dropped = (n - ev.len()) as f64 / n as f64;
        let expected = 1.0 - daq.live_time_per_run() / daq.run_duration;
        let sigma = (expected / n as f64).sqrt();
        assert!(
            (dropped - expected).abs() < 5.0 * sigma,
            "dropped {dropped}"
        );
        assert!((dropped - 0.001).abs() < 0.0002);
    }

    #[test]
    fn dark_counts_concentrate() {
        let (mut det, mut daq) = transparent();
        det.dark_rate_per_pixel = 50.0;
        daq.transfer_dead_time = 0.010;
        let ev = detect(&[], &det, &daq, 0, &mut ChaCha8Rng::seed_from_u64(7));
        let expected = 16.0 * 50.0 * daq.run_duration * daq.duty_cycle();
        assert!(
            (ev.len() as f64 - expected).abs() < 5.0 * expected.sqrt(),
            "{}",
            ev.len()
        );
        assert!(PixelId::all().all(|p| ev.iter().any(|e| e.pixel == p)));
    }

    #[test]
    fn pile_up_merges_same_pixel_same_tick() {
        let (det, daq) = transparent();
        let px = PixelId::new(1, 1).unwrap();
        let other = PixelId::new(2, 1).unwrap();
        let ph: Vec<AnalyzedPhoton> =
            [(1.0e-9, px), (20.0e-9, px), (21.0e-9, other), (30.0e-9, px)]
                .into_iter()
                .map(|(t, pixel)| AnalyzedPhoton {
                    arrival_time: t,
                    pixel,
                    origin: Origin::SourceB,
                })
                .collect();
        let ev = detect(&ph, &det, &daq, 0, &mut ChaCha8Rng::seed_from_u64(8));
        let got: Vec<(u64, u8)> = ev.iter().map(|e| (e.time.0, e.pixel.index())).collect();
        assert_eq!(
            got,
            vec![(0, px.index()), (0, other.index()), (1, px.index())]
        );
    }

    proptest! {
        #[test]
        fn quantization_shift_below_one_period(t in 0.0..1.0e3f64) {
            let period = 25e-9;
            let tick = quantize(t, period);
            let back = tick.0 as f64 * period;
            prop_assert!(back <= t + 1e-12 * t.max(1.0));
            prop_assert!(t - back < period * (1.0 + 1e-6));
        }
    }
}
