//! Flat `key = value` text format for [`ExperimentConfig`].
//!
//! One assignment per line, `#` starts a comment, nested fields use dotted
//! keys (`source_a.rate = 1000`). Keys that are absent keep their bench
//! default, except `rng_seed`, which must always be given. Real numbers are
//! written in Rust's shortest round-trip form, so `parse(render(c)) == c`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::model::{
    Angle, BeamLayout, ExperimentConfig, PixelGroup, PolarizerSpec, SourceMode, SourceSpec,
};

pub fn render(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("rng_seed", cfg.rng_seed.to_string());
    kv("beam_layout", cfg.beam_layout.as_str().to_string());
    for (name, s) in [("source_a", &cfg.source_a), ("source_b", &cfg.source_b)] {
        kv(&format!("{name}.rate"), s.rate.to_string());
        kv(&format!("{name}.mode"), s.mode.as_str().to_string());
        kv(
            &format!("{name}.coherence_time"),
            s.coherence_time.to_string(),
        );
        kv(&format!("{name}.enabled"), s.enabled.to_string());
    }
    for (name, p) in [
        ("prep_a", &cfg.prep_a),
        ("prep_b", &cfg.prep_b),
        ("analyzer_c", &cfg.analyzer_c),
        ("analyzer_d", &cfg.analyzer_d),
    ] {
        kv(&format!("{name}.axis"), p.axis.degrees().to_string());
        kv(&format!("{name}.t_max"), p.t_max.to_string());
        kv(
            &format!("{name}.extinction_ratio"),
            p.extinction_ratio.to_string(),
        );
    }
    let d = &cfg.detector;
    kv(
        "detector.quantum_efficiency",
        d.quantum_efficiency.to_string(),
    );
    kv(
        "detector.dark_rate_per_pixel",
        d.dark_rate_per_pixel.to_string(),
    );
    kv("detector.clock_period", d.clock_period.to_string());
    kv(
        "detector.coincidence_window",
        d.coincidence_window.to_string(),
    );
    let q = &cfg.daq;
    kv("daq.cycle_length", q.cycle_length.to_string());
    kv("daq.transfer_dead_time", q.transfer_dead_time.to_string());
    kv("daq.run_duration", q.run_duration.to_string());
    kv("daq.n_runs", q.n_runs.to_string());
    kv("d1_pixels", cfg.d1_pixels.to_string());
    kv("d2_pixels", cfg.d2_pixels.to_string());
    out
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn source_field(
    s: &mut SourceSpec,
    field: &str,
    line: usize,
    key: &str,
    raw: &str,
) -> Result<bool, ConfigError> {
    match field {
        "rate" => s.rate = value(line, key, raw)?,
        "coherence_time" => s.coherence_time = value(line, key, raw)?,
        "enabled" => s.enabled = value(line, key, raw)?,
        "mode" => {
            s.mode = match raw {
                "coherent" => SourceMode::Coherent,
                "chaotic" => SourceMode::Chaotic,
                other => {
                    return Err(ConfigError::InvalidValue {
                        line,
                        key: key.to_string(),
                        message: format!("expected `coherent` or `chaotic`, got `{other}`"),
                    })
                }
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn polarizer_field(
    p: &mut PolarizerSpec,
    field: &str,
    line: usize,
    key: &str,
    raw: &str,
) -> Result<bool, ConfigError> {
    match field {
        "axis" => p.axis = Angle::from_degrees(value(line, key, raw)?),
        "t_max" => p.t_max = value(line, key, raw)?,
        "extinction_ratio" => p.extinction_ratio = value(line, key, raw)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::bench(0);
    let mut seen = HashSet::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let raw = raw.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }

        let known = match key.split_once('.') {
            None => match key {
                "rng_seed" => {
                    cfg.rng_seed = value(line, key, raw)?;
                    true
                }
                "beam_layout" => {
                    cfg.beam_layout = match raw {
                        "superposed" => BeamLayout::Superposed,
                        "separate" => BeamLayout::Separate,
                        other => {
                            return Err(ConfigError::InvalidValue {
                                line,
                                key: key.to_string(),
                                message: format!(
                                    "expected `superposed` or `separate`, got `{other}`"
                                ),
                            })
                        }
                    };
                    true
                }
                "d1_pixels" | "d2_pixels" => {
                    let g =
                        PixelGroup::parse(raw).map_err(|message| ConfigError::InvalidValue {
                            line,
                            key: key.to_string(),
                            message,
                        })?;
                    if key == "d1_pixels" {
                        cfg.d1_pixels = g;
                    } else {
                        cfg.d2_pixels = g;
                    }
                    true
                }
                _ => false,
            },
            Some((section, field)) => match section {
                "source_a" => source_field(&mut cfg.source_a, field, line, key, raw)?,
                "source_b" => source_field(&mut cfg.source_b, field, line, key, raw)?,
                "prep_a" => polarizer_field(&mut cfg.prep_a, field, line, key, raw)?,
                "prep_b" => polarizer_field(&mut cfg.prep_b, field, line, key, raw)?,
                "analyzer_c" => polarizer_field(&mut cfg.analyzer_c, field, line, key, raw)?,
                "analyzer_d" => polarizer_field(&mut cfg.analyzer_d, field, line, key, raw)?,
                "detector" => {
                    let d = &mut cfg.detector;
                    match field {
                        "quantum_efficiency" => d.quantum_efficiency = value(line, key, raw)?,
                        "dark_rate_per_pixel" => d.dark_rate_per_pixel = value(line, key, raw)?,
                        "clock_period" => d.clock_period = value(line, key, raw)?,
                        "coincidence_window" => d.coincidence_window = value(line, key, raw)?,
                        _ => return Err(unknown(line, key)),
                    }
                    true
                }
                "daq" => {
                    let q = &mut cfg.daq;
                    match field {
                        "cycle_length" => q.cycle_length = value(line, key, raw)?,
                        "transfer_dead_time" => q.transfer_dead_time = value(line, key, raw)?,
                        "run_duration" => q.run_duration = value(line, key, raw)?,
                        "n_runs" => q.n_runs = value(line, key, raw)?,
                        _ => return Err(unknown(line, key)),
                    }
                    true
                }
                _ => false,
            },
        };
        if !known {
            return Err(unknown(line, key));
        }
    }

    if !seen.contains("rng_seed") {
        return Err(ConfigError::MissingKey("rng_seed"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn unknown(line: usize, key: &str) -> ConfigError {
    ConfigError::UnknownKey {
        line,
        key: key.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolarizerSpec, SourceSpec};
    use proptest::prelude::*;

    #[test]
    fn bench_round_trip() {
        let cfg = ExperimentConfig::bench(42);
        assert_eq!(parse(&render(&cfg)).unwrap(), cfg);
        let cfg = ExperimentConfig::ideal_optics(7);
        let text = render(&cfg);
        assert!(text.contains("extinction_ratio = inf"));
        assert_eq!(parse(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = parse("# minimal\nrng_seed = 9\nsource_a.rate = 2000 # faster\n").unwrap();
        assert_eq!(cfg.rng_seed, 9);
        assert_eq!(cfg.source_a.rate, 2000.0);
        assert_eq!(cfg.source_b, ExperimentConfig::bench(9).source_b);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse("rng_seed = 1\n\nsource_a.rate 5\n"),
            Err(ConfigError::Syntax {
                line: 3,
                message: "expected `key = value`, got `source_a.rate 5`".into()
            })
        );
        assert!(matches!(
            parse("rng_seed = 1\nsource_c.rate = 5\n"),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            parse("rng_seed = 1\ndaq.n_runs = -3\n"),
            Err(ConfigError::InvalidValue { line: 2, .. })
        ));
        assert!(matches!(
            parse("rng_seed = 1\nrng_seed = 2\n"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert_eq!(
            parse("source_a.rate = 5\n"),
            Err(ConfigError::MissingKey("rng_seed"))
        );
        assert!(matches!(
            parse("rng_seed = 1\nd2_pixels = 0:0,1:0\n"),
            Err(ConfigError::Invalid(_))
        ));
    }

    fn arb_polarizer() -> impl Strategy<Value = PolarizerSpec> {
        (
            0.0..360.0f64,
            0.01..=1.0f64,
            prop_oneof![Just(f64::INFINITY), 1.5..1e6f64],
        )
            .prop_map(|(axis, t_max, extinction_ratio)| PolarizerSpec {
                axis: Angle::from_degrees(axis),
                t_max,
                extinction_ratio,
            })
    }

    fn arb_source() -> impl Strategy<Value = SourceSpec> {
        (1e-3..1e7f64, any::<bool>(), 1e-12..1.0f64, any::<bool>()).prop_map(
            |(rate, chaotic, tc, enabled)| SourceSpec {
                rate,
                mode: if chaotic {
                    SourceMode::Chaotic
                } else {
                    SourceMode::Coherent
                },
                coherence_time: tc,
                enabled,
            },
        )
    }

    proptest! {
        #[test]
        fn render_parse_is_lossless(
            seed in any::<u64>(),
            sa in arb_source(), sb in arb_source(),
            pa in arb_polarizer(), pb in arb_polarizer(), pc in arb_polarizer(), pd in arb_polarizer(),
            qe in 0.0..=1.0f64, dark in 0.0..100.0f64,
            run in 0.1..1e4f64, n_runs in 1u32..1000,
            d1 in 1u16..=u16::MAX, separate in any::<bool>(),
        ) {
            let mut cfg = ExperimentConfig::bench(seed);
            cfg.source_a = sa;
            cfg.source_b = sb;
            cfg.prep_a = pa;
            cfg.prep_b = pb;
            cfg.analyzer_c = pc;
            cfg.analyzer_d = pd;
            cfg.detector.quantum_efficiency = qe;
            cfg.detector.dark_rate_per_pixel = dark;
            cfg.daq.run_duration = run;
            cfg.daq.n_runs = n_runs;
            let all: Vec<_> = crate::model::PixelId::all().collect();
            let g1 = PixelGroup::new(all.iter().copied().filter(|p| d1 & (1 << p.index()) != 0));
            let g2 = PixelGroup::new(all.iter().copied().filter(|p| !g1.contains(*p)));
            prop_assume!(!g2.is_empty());
            cfg.d1_pixels = g1;
            cfg.d2_pixels = g2;
            cfg.beam_layout = if separate { BeamLayout::Separate } else { BeamLayout::Superposed };
            prop_assert_eq!(parse(&render(&cfg)).unwrap(), cfg);
        }
    }
}
